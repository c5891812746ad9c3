"""Desk-scale coarse-to-fine transformer simulator.

A small random-weight pre-LN transformer is run over an increasing schedule
of spatial resolutions. Each scale's input is the nearest-upsampled dense
output of the previous scale; tokens of completed scales stay visible to
later scales through a per-layer key/value cache. Pruning hooks drop tokens
before the blocks of a scale and a recovery strategy rebuilds the dense map
the next scale conditions on. ratio = 1 skips a scale's transformer pass
entirely.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .grids import FeatureGrid, SparseTokens
from .recovery import (
    RecoveryStrategy,
    anchor_copy,
    anchor_grid,
    cache_upsample,
    force_include,
    nearest_assignment,
    nn_propagate,
)
from .scoring import (
    PruneParams,
    keep_count,
    l2norm_score,
    random_score,
    select_by_score,
    structural_score,
    textural_score,
)

STRATEGY_NAMES = ("stepvar", "hf_only", "l2norm", "random", "none")


@dataclass(frozen=True)
class PruneSpec:
    """Per-scale pruning configuration. ratio = 1.0 skips the scale."""

    ratio: float = 0.0
    strategy: str = "none"
    recovery: RecoveryStrategy = field(default_factory=RecoveryStrategy)
    params: PruneParams = field(default_factory=PruneParams)

    def __post_init__(self):
        if self.strategy not in STRATEGY_NAMES:
            raise ValueError(
                f"unknown strategy {self.strategy!r}; want one of {STRATEGY_NAMES}"
            )
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio}")
        if self.strategy == "none" and self.ratio != 0.0:
            raise ValueError("strategy 'none' requires ratio 0")


DEFAULT_SIDES = (1, 2, 4, 8, 12, 16, 24, 32)


@dataclass(frozen=True)
class ScaleSchedule:
    """Ordered (h, w) resolutions with a PruneSpec per scale."""

    scales: tuple            # ((h1, w1), ..., (hK, wK))
    prune: tuple             # PruneSpec per scale

    def __post_init__(self):
        scales = tuple((int(h), int(w)) for h, w in self.scales)
        if not scales:
            raise ValueError("schedule needs at least one scale")
        counts = [h * w for h, w in scales]
        if any(b < a for a, b in zip(counts, counts[1:])):
            raise ValueError("token counts must be non-decreasing across scales")
        prune = tuple(self.prune)
        if len(prune) != len(scales):
            raise ValueError(
                f"{len(prune)} prune specs for {len(scales)} scales"
            )
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "prune", prune)

    @property
    def num_scales(self) -> int:
        return len(self.scales)

    def token_counts(self):
        return [h * w for h, w in self.scales]

    @classmethod
    def default(cls, ratios=None, strategy="stepvar",
                recovery=None, params=None) -> "ScaleSchedule":
        """The 8-scale desk schedule (sides 1..32), optionally pruned.

        ratios maps over the *last* len(ratios) scales when given as a list.
        """
        sides = DEFAULT_SIDES
        recovery = recovery or RecoveryStrategy()
        params = params or PruneParams()
        specs = [PruneSpec() for _ in sides]
        if ratios:
            offset = len(sides) - len(ratios)
            if offset < 0:
                raise ValueError("more ratios than scales")
            for i, r in enumerate(ratios):
                if r == 0:
                    continue
                specs[offset + i] = PruneSpec(
                    ratio=float(r),
                    strategy=strategy,
                    recovery=recovery,
                    params=replace(params, ratio=float(r)),
                )
        return cls(tuple((s, s) for s in sides), tuple(specs))


@dataclass(frozen=True)
class ToyModel:
    depth: int = 4
    channels: int = 64
    ffn_mult: int = 4
    head_count: int = 4
    weight_seed: int = 0

    def __post_init__(self):
        if self.channels % self.head_count:
            raise ValueError(
                f"channels {self.channels} not divisible by heads {self.head_count}"
            )


# Output-projection gain. Layer norms at block entry make the dynamics
# invariant to this factor; it only sets the residual-stream amplitude, i.e.
# the feature scale the scoring operates on.
_BRANCH_GAIN = 6.0


def build_weights(model: ToyModel):
    """Deterministic per-layer parameter dicts (1/sqrt(fan_in) init)."""
    rng = np.random.default_rng(model.weight_seed)
    c = model.channels
    f = model.ffn_mult * c
    layers = []
    for _ in range(model.depth):
        layers.append({
            "wq": rng.standard_normal((c, c)) / np.sqrt(c),
            "wk": rng.standard_normal((c, c)) / np.sqrt(c),
            "wv": rng.standard_normal((c, c)) / np.sqrt(c),
            "wo": rng.standard_normal((c, c)) * (_BRANCH_GAIN / np.sqrt(c)),
            "w1": rng.standard_normal((c, f)) / np.sqrt(c),
            "w2": rng.standard_normal((f, c)) * (_BRANCH_GAIN / np.sqrt(f)),
        })
    return layers


def _layernorm(x):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + 1e-6)


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def _attention(q, k, v, heads):
    """Softmax attention, (B, Lq, C) x (B, Lk, C); per-head split on C."""
    b, lq, c = q.shape
    d = c // heads
    qs = q.reshape(b, lq, heads, d).transpose(0, 2, 1, 3)
    ks = k.reshape(b, k.shape[1], heads, d).transpose(0, 2, 1, 3)
    vs = v.reshape(b, v.shape[1], heads, d).transpose(0, 2, 1, 3)
    logits = qs @ ks.transpose(0, 1, 3, 2) / np.sqrt(d)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    out = w @ vs
    return out.transpose(0, 2, 1, 3).reshape(b, lq, c)


class KVCache:
    """Per-layer concatenated key/value tokens of all completed scales."""

    def __init__(self, depth: int):
        self.keys = [None] * depth
        self.values = [None] * depth

    def append(self, layer: int, k: np.ndarray, v: np.ndarray):
        if self.keys[layer] is None:
            self.keys[layer] = k
            self.values[layer] = v
        else:
            self.keys[layer] = np.concatenate([self.keys[layer], k], axis=1)
            self.values[layer] = np.concatenate([self.values[layer], v], axis=1)

    def tokens(self) -> int:
        return 0 if self.keys[0] is None else self.keys[0].shape[1]


def transformer_pass(weights, heads, x: np.ndarray, cache: KVCache, pos=None):
    """Run all layers over x (B, L, C), attending to x plus cached tokens.

    pos carries per-token positional features; they enter queries and keys
    only, so position never leaks into the value/residual stream. Does not
    mutate the cache; returns (output, per-layer (k, v) list) so the caller
    decides what to append.
    """
    h = x
    kvs = []
    for li, p in enumerate(weights):
        a_in = _layernorm(h)
        qk_in = a_in if pos is None else a_in + pos
        q = qk_in @ p["wq"]
        k = qk_in @ p["wk"]
        v = a_in @ p["wv"]
        if cache.keys[li] is not None:
            k_full = np.concatenate([cache.keys[li], k], axis=1)
            v_full = np.concatenate([cache.values[li], v], axis=1)
        else:
            k_full, v_full = k, v
        h = h + _attention(q, k_full, v_full, heads) @ p["wo"]
        f_in = _layernorm(h)
        h = h + _gelu(f_in @ p["w1"]) @ p["w2"]
        kvs.append((k, v))
    return h, kvs


def _append_kvs(cache: KVCache, kvs):
    for li, (k, v) in enumerate(kvs):
        cache.append(li, k, v)


def seed_token(model: ToyModel, schedule: ScaleSchedule, input_seed: int) -> FeatureGrid:
    """Deterministic starting map for scale 1."""
    h, w = schedule.scales[0]
    rng = np.random.default_rng(input_seed)
    data = rng.standard_normal((1, h * w, model.channels))
    return FeatureGrid(data, h, w)


def positional_encoding(h: int, w: int, channels: int) -> np.ndarray:
    """2-D sinusoidal position features, (1, H*W, C).

    Without these every scale's input would be a token-symmetric upsample of
    a single seed token and the whole pipeline would collapse to spatially
    constant maps.
    """
    half = channels // 2
    # Low spatial frequencies only (at most 2 cycles across the grid): the
    # encoding must vary smoothly so neighboring tokens stay similar.
    cycles = 1.0 + (np.arange(half) % 4) / 3.0
    u = (np.arange(h) / max(h - 1, 1))[:, None] * cycles[None, :]
    v = (np.arange(w) / max(w - 1, 1))[:, None] * cycles[None, :]
    phase = np.pi * np.arange(half)[None, :] / half
    row_feat = np.sin(np.pi * u + phase)[:, None, :].repeat(w, axis=1)  # (H, W, half)
    col_feat = np.cos(np.pi * v + phase)[None, :, :].repeat(h, axis=0)  # (H, W, half)
    feat = 0.5 * np.concatenate([row_feat, col_feat], axis=2)
    if feat.shape[2] < channels:
        feat = np.pad(feat, ((0, 0), (0, 0), (0, channels - feat.shape[2])))
    return feat.reshape(1, h * w, channels)


def _scale_input(model: ToyModel, schedule: ScaleSchedule, s: int,
                 prev: FeatureGrid | None, input_seed: int) -> FeatureGrid:
    """The conditioning map a scale receives (seed token or upsampled output).

    Positional encodings are the model's own business: they are added at
    block entry (see _block_input), not baked into the conditioning features
    that scoring sees.
    """
    h, w = schedule.scales[s]
    return seed_token(model, schedule, input_seed) if s == 0 \
        else cache_upsample(prev, (h, w))


def positional_rows(channels: int, h: int, w: int, token_indices=None) -> np.ndarray:
    """Positional features for a full grid, or gathered at token_indices (B, k)."""
    pos = positional_encoding(h, w, channels)
    if token_indices is None:
        return pos
    return pos[0][token_indices]


@dataclass
class ScaleRecord:
    index: int
    shape: tuple
    tokens: int
    kept: int
    skipped: bool
    wall_ns: int
    flops: int


def _scale_scores(x: FeatureGrid, spec: PruneSpec, scale_index: int):
    p = spec.params
    if spec.strategy == "stepvar":
        return p.w_str * structural_score(x, p) + textural_score(x)
    if spec.strategy == "hf_only":
        return textural_score(x)
    if spec.strategy == "l2norm":
        return l2norm_score(x)
    if spec.strategy == "random":
        # Offset keeps per-scale random masks decorrelated under one seed.
        return random_score(x.batch, x.tokens, p.rng_seed + 7919 * scale_index)
    raise ValueError(f"strategy {spec.strategy!r} has no scores")


def run_pruned(model: ToyModel, schedule: ScaleSchedule, input_seed: int,
               cache_dense: bool = False):
    """Full coarse-to-fine run with the configured pruning/recovery per scale.

    Returns (dense_outputs, records): one dense FeatureGrid and one ScaleRecord
    per scale. cache_dense switches pruned scales from caching only kept-token
    K/V to caching NN-propagated dense K/V (comparison variant).
    """
    weights = build_weights(model)
    cache = KVCache(model.depth)
    dense_outputs = []
    records = []
    prev = None
    for s, ((h, w), spec) in enumerate(zip(schedule.scales, schedule.prune)):
        x_in = _scale_input(model, schedule, s, prev, input_seed)
        l = h * w
        cache_before = cache.tokens()
        t0 = time.perf_counter_ns()
        if spec.strategy != "none" and spec.ratio >= 1.0:
            # Skipped stage: next scale conditions on the upsampled previous map.
            dense = x_in
            kept = 0
            skipped = True
        elif spec.strategy == "none" or spec.ratio == 0.0:
            out, kvs = transformer_pass(
                weights, model.head_count, x_in.data, cache,
                pos=positional_rows(model.channels, h, w))
            _append_kvs(cache, kvs)
            dense = FeatureGrid(out, h, w)
            kept = l
            skipped = False
        else:
            try:
                scores = _scale_scores(x_in, spec, s)
                selection = select_by_score(x_in, scores, spec.ratio)
                if spec.recovery.kind == "anchor_copy":
                    anchors = anchor_grid(h, w, spec.recovery.anchor_stride)
                    selection = force_include(selection, x_in, scores, anchors)
                sparse_out, kvs = transformer_pass(
                    weights, model.head_count, selection.data, cache,
                    pos=positional_rows(model.channels, h, w, selection.kept_indices))
                processed = SparseTokens(sparse_out, selection.kept_indices, (h, w))
                if spec.recovery.kind == "nearest_neighbor":
                    dense = nn_propagate(processed)
                elif spec.recovery.kind == "anchor_copy":
                    dense = anchor_copy(processed, anchors)
                else:  # cache_upsample
                    filled = x_in.data.copy()
                    np.put_along_axis(
                        filled, selection.kept_indices[:, :, None], sparse_out, axis=1)
                    dense = FeatureGrid(filled, h, w)
                if cache_dense:
                    # Comparison variant: cache NN-propagated dense K/V instead
                    # of kept-token K/V.
                    assign = nearest_assignment(h, w, selection.kept_indices)
                    kvs = [
                        (np.take_along_axis(k, assign[:, :, None], axis=1),
                         np.take_along_axis(v, assign[:, :, None], axis=1))
                        for k, v in kvs
                    ]
                _append_kvs(cache, kvs)
                kept = selection.k
                skipped = False
            except ValueError as err:
                raise ValueError(f"scale {s + 1}: {err}") from err
        wall = time.perf_counter_ns() - t0
        dense_outputs.append(dense)
        records.append(ScaleRecord(
            index=s + 1, shape=(h, w), tokens=l, kept=kept, skipped=skipped,
            wall_ns=wall, flops=scale_flops(model, l, kept, cache_before),
        ))
        prev = dense
    return dense_outputs, records


def run_dense(model: ToyModel, schedule: ScaleSchedule, input_seed: int):
    """Unpruned reference run; independent of the pruning machinery."""
    weights = build_weights(model)
    cache = KVCache(model.depth)
    dense_outputs = []
    prev = None
    for s, (h, w) in enumerate(schedule.scales):
        x_in = _scale_input(model, schedule, s, prev, input_seed)
        out, kvs = transformer_pass(
            weights, model.head_count, x_in.data, cache,
            pos=positional_rows(model.channels, h, w))
        _append_kvs(cache, kvs)
        prev = FeatureGrid(out, h, w)
        dense_outputs.append(prev)
    return dense_outputs


def inject_noise(model: ToyModel, schedule: ScaleSchedule, input_seed: int,
                 scale_index: int, sigma: float, noise_seed: int) -> FeatureGrid:
    """Dense run with Gaussian noise added to one scale's output.

    scale_index is 1-based. The perturbed map is what conditions the next
    scale (for the final scale, it is the returned output itself).
    """
    if not 1 <= scale_index <= schedule.num_scales:
        raise ValueError(f"scale_index {scale_index} outside 1..{schedule.num_scales}")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    weights = build_weights(model)
    cache = KVCache(model.depth)
    prev = None
    for s, (h, w) in enumerate(schedule.scales):
        x_in = _scale_input(model, schedule, s, prev, input_seed)
        out, kvs = transformer_pass(
            weights, model.head_count, x_in.data, cache,
            pos=positional_rows(model.channels, h, w))
        _append_kvs(cache, kvs)
        if s + 1 == scale_index and sigma > 0:
            rng = np.random.default_rng(noise_seed)
            out = out + sigma * rng.standard_normal(out.shape)
        prev = FeatureGrid(out, h, w)
    return prev


def scale_flops(model: ToyModel, tokens: int, kept: int, cache_len: int,
                cond_len: int = 0) -> int:
    """Analytic FLOPs for one scale across all layers.

    Per layer with L_eff active tokens: attention 2*L_eff*(L_eff+cache)*C,
    projections 4*L_eff*C^2, FFN 2*L_eff*C*(ffn_mult*C). Skipped scales cost 0.
    cond_len models an optional fixed-length conditioning sequence (off by
    default).
    """
    l_eff = kept
    if l_eff == 0:
        return 0
    c = model.channels
    per_layer = (
        2 * l_eff * (l_eff + cache_len + cond_len) * c
        + 4 * l_eff * c * c
        + 2 * l_eff * c * (model.ffn_mult * c)
    )
    return model.depth * per_layer


def flop_count(schedule: ScaleSchedule, model: ToyModel, cond_len: int = 0):
    """Per-scale and total analytic FLOPs for the schedule's prune config."""
    per_scale = []
    cache_len = 0
    for (h, w), spec in zip(schedule.scales, schedule.prune):
        l = h * w
        if spec.strategy != "none" and spec.ratio >= 1.0:
            kept = 0
        elif spec.strategy == "none" or spec.ratio == 0.0:
            kept = l
        else:
            kept = keep_count(l, spec.ratio)
        per_scale.append(scale_flops(model, l, kept, cache_len, cond_len))
        cache_len += kept
    return per_scale, sum(per_scale)
