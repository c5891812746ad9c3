/**
 * Zero-compute bridge to the scaleprune native kernels.
 *
 * All math lives in the Python package; this module only validates the
 * caller's buffers, round-trips them through the flat-binary + JSON-sidecar
 * interchange format, and invokes the `scaleprune` kernel subcommands
 * (score-select, nn-propagate) in a subprocess. One ingress and one egress
 * buffer copy per call, nothing more.
 */

import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

export const version = "0.1.0";

/** Validation or subprocess failure; `field` names the offending argument. */
export class BridgeError extends Error {
  readonly field: string;

  constructor(field: string, message: string) {
    super(`${field}: ${message}`);
    this.name = "BridgeError";
    this.field = field;
  }
}

export interface SelectResult {
  /** Ascending token indices of the kept tokens. */
  keptIndices: number[];
  /** (k, C) kept-token features, row major. */
  sparse: Float32Array;
  k: number;
  channels: number;
}

interface Sidecar {
  shape: number[];
  height: number;
  width: number;
  dtype: string;
  kept_indices?: number[][];
}

function checkDims(field: string, value: number): void {
  if (!Number.isInteger(value) || value < 1) {
    throw new BridgeError(field, `must be a positive integer, got ${value}`);
  }
}

function checkBuffer(field: string, buffer: unknown): Float32Array {
  if (!(buffer instanceof Float32Array)) {
    throw new BridgeError(field, "must be a Float32Array");
  }
  for (let i = 0; i < buffer.length; i++) {
    if (!Number.isFinite(buffer[i])) {
      throw new BridgeError(field, `non-finite value at offset ${i}`);
    }
  }
  return buffer;
}

function writeBuffer(
  base: string,
  data: Float32Array,
  shape: number[],
  height: number,
  width: number,
  extra?: Record<string, unknown>,
): void {
  // Interchange is little-endian float32; Float32Array shares the platform
  // byte order, which is little-endian everywhere this runs.
  fs.writeFileSync(
    base + ".bin",
    Buffer.from(data.buffer, data.byteOffset, data.byteLength),
  );
  const meta = { shape, height, width, dtype: "float32", ...extra };
  fs.writeFileSync(base + ".json", JSON.stringify(meta, null, 2) + "\n");
}

function readBuffer(base: string): { data: Float32Array; meta: Sidecar } {
  const meta = JSON.parse(fs.readFileSync(base + ".json", "utf8")) as Sidecar;
  const raw = fs.readFileSync(base + ".bin");
  const data = new Float32Array(
    raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength),
  );
  return { data, meta };
}

function runKernel(args: string[]): void {
  try {
    execFileSync("python3", ["-m", "scaleprune", ...args], {
      stdio: ["ignore", "pipe", "pipe"],
    });
  } catch (err) {
    const stderr =
      err instanceof Error && "stderr" in err
        ? String((err as { stderr: unknown }).stderr)
        : String(err);
    throw new BridgeError("kernel", stderr.trim() || "subprocess failed");
  }
}

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "scaleprune-bridge-"));
  try {
    return fn(dir);
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}

/**
 * Score a dense (H*W, C) token buffer with the fused structural+textural
 * criterion and keep the top k = floor((1 - ratio) * L) tokens.
 * Results are identical to the native joint_select on the same input.
 */
export function bridge_score_and_select(
  buffer: Float32Array,
  height: number,
  width: number,
  ratio: number,
  wStr = 0.5,
  powerIters = 3,
  seed = 0,
): SelectResult {
  checkDims("height", height);
  checkDims("width", width);
  checkBuffer("buffer", buffer);
  const tokens = height * width;
  if (buffer.length === 0 || buffer.length % tokens !== 0) {
    throw new BridgeError(
      "buffer",
      `length ${buffer.length} is not a multiple of H*W = ${tokens}`,
    );
  }
  if (!(ratio >= 0 && ratio < 1)) {
    throw new BridgeError("ratio", `must be in [0, 1), got ${ratio}`);
  }
  if (!Number.isInteger(powerIters) || powerIters < 1) {
    throw new BridgeError("powerIters", `must be a positive integer, got ${powerIters}`);
  }
  const channels = buffer.length / tokens;
  return withTempDir((dir) => {
    const input = path.join(dir, "in");
    const output = path.join(dir, "sel");
    writeBuffer(input, buffer, [1, tokens, channels], height, width);
    runKernel([
      "score-select",
      "--input", input,
      "--out", output,
      "--ratio", String(ratio),
      "--w-str", String(wStr),
      "--iters", String(powerIters),
      "--seed", String(seed),
    ]);
    const { data, meta } = readBuffer(output);
    const keptIndices = (meta.kept_indices ?? [[]])[0];
    return { keptIndices, sparse: data, k: keptIndices.length, channels };
  });
}

/**
 * Fill every position of the H x W grid with the feature of its nearest kept
 * token (squared Euclidean on grid coordinates; ties to the lowest kept-list
 * slot). Matches the native nn_propagate elementwise.
 */
export function bridge_nn_propagate(
  sparse: Float32Array,
  keptIndices: number[],
  height: number,
  width: number,
): Float32Array {
  checkDims("height", height);
  checkDims("width", width);
  checkBuffer("sparse", sparse);
  const tokens = height * width;
  const k = keptIndices.length;
  if (k < 1) {
    throw new BridgeError("keptIndices", "need at least one kept token");
  }
  for (let i = 0; i < k; i++) {
    const t = keptIndices[i];
    if (!Number.isInteger(t) || t < 0 || t >= tokens) {
      throw new BridgeError(
        "keptIndices",
        `index ${t} out of range [0, ${tokens})`,
      );
    }
    if (i > 0 && t <= keptIndices[i - 1]) {
      throw new BridgeError("keptIndices", "must be strictly ascending");
    }
  }
  if (sparse.length === 0 || sparse.length % k !== 0) {
    throw new BridgeError(
      "sparse",
      `length ${sparse.length} is not a multiple of k = ${k}`,
    );
  }
  const channels = sparse.length / k;
  return withTempDir((dir) => {
    const input = path.join(dir, "sp");
    const output = path.join(dir, "dense");
    writeBuffer(input, sparse, [1, k, channels], height, width, {
      kept_indices: [keptIndices],
    });
    runKernel(["nn-propagate", "--input", input, "--out", output]);
    return readBuffer(output).data;
  });
}
