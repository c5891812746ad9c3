"""Experiment configuration: one YAML file covering model, schedule, pruning,
seeds, timing protocol and outputs. Errors carry the offending field path."""

from __future__ import annotations

from dataclasses import dataclass, replace

import yaml

from .pipeline import DEFAULT_SIDES, PruneSpec, ScaleSchedule, ToyModel
from .recovery import STRATEGIES, RecoveryStrategy
from .scoring import PruneParams


class ConfigError(ValueError):
    """Bad experiment config; message names the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _get(section: dict, path: str, key: str, default, cast, valid=None):
    value = section.get(key, default)
    try:
        value = cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}", f"cannot interpret {value!r}")
    if valid is not None and not valid(value):
        raise ConfigError(f"{path}.{key}", f"invalid value {value!r}")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    model: ToyModel
    sides: tuple
    ratios: tuple            # applied to the last len(ratios) scales
    strategy: str
    recovery: RecoveryStrategy
    params: PruneParams
    input_seeds: tuple
    repeats: int = 5
    warmup: int = 2
    out_dir: str = "out"
    write_masks: bool = False
    write_figures: bool = True
    sweep_ratios: tuple = (0.0, 0.3, 0.5, 0.7, 0.9)
    ablate_seeds: int = 20
    ablate_ratio: float = 0.7
    sensitivity_sigma: float = 0.1
    sensitivity_seeds: int = 10

    def schedule(self, ratios=None, strategy=None, recovery=None) -> ScaleSchedule:
        ratios = self.ratios if ratios is None else tuple(ratios)
        strategy = strategy or self.strategy
        recovery = recovery or self.recovery
        specs = [PruneSpec() for _ in self.sides]
        offset = len(self.sides) - len(ratios)
        if offset < 0:
            raise ConfigError("schedule.ratios", "more ratios than scales")
        for i, r in enumerate(ratios):
            if r == 0:
                continue
            specs[offset + i] = PruneSpec(
                ratio=float(r), strategy=strategy, recovery=recovery,
                params=replace(self.params, ratio=float(r)))
        return ScaleSchedule(tuple((s, s) for s in self.sides), tuple(specs))

    def dense_schedule(self) -> ScaleSchedule:
        return self.schedule(ratios=())

    def echo(self) -> dict:
        """JSON-ready snapshot of everything that determines the run."""
        return {
            "model": {
                "depth": self.model.depth,
                "channels": self.model.channels,
                "ffn_mult": self.model.ffn_mult,
                "head_count": self.model.head_count,
                "weight_seed": self.model.weight_seed,
            },
            "schedule": {"sides": list(self.sides), "ratios": list(self.ratios)},
            "strategy": self.strategy,
            "recovery": {"kind": self.recovery.kind,
                         "anchor_stride": self.recovery.anchor_stride},
            "params": {"w_str": self.params.w_str,
                       "power_iters": self.params.power_iters,
                       "rng_seed": self.params.rng_seed},
            "input_seeds": list(self.input_seeds),
            "timing": {"repeats": self.repeats, "warmup": self.warmup},
        }


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    m = raw.get("model", {}) or {}
    try:
        model = ToyModel(
            depth=_get(m, "model", "depth", 4, int, lambda v: v >= 1),
            channels=_get(m, "model", "channels", 64, int, lambda v: v >= 1),
            ffn_mult=_get(m, "model", "ffn_mult", 4, int, lambda v: v >= 1),
            head_count=_get(m, "model", "head_count", 4, int, lambda v: v >= 1),
            weight_seed=_get(m, "model", "weight_seed", 0, int),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError("model", str(err))

    sch = raw.get("schedule", {}) or {}
    sides = tuple(int(s) for s in sch.get("sides", DEFAULT_SIDES))
    if any(s < 1 for s in sides):
        raise ConfigError("schedule.sides", f"sides must be positive, got {sides}")
    ratios = tuple(float(r) for r in sch.get("ratios", ()))
    if any(not 0.0 <= r <= 1.0 for r in ratios):
        raise ConfigError("schedule.ratios", f"ratios must be in [0, 1], got {ratios}")
    if len(ratios) > len(sides):
        raise ConfigError("schedule.ratios", "more ratios than scales")
    strategy = _get(sch, "schedule", "strategy", "stepvar", str,
                    lambda v: v in ("stepvar", "hf_only", "l2norm", "random"))
    rec = sch.get("recovery", {}) or {}
    recovery = RecoveryStrategy(
        kind=_get(rec, "schedule.recovery", "kind", "nearest_neighbor", str,
                  lambda v: v in STRATEGIES),
        anchor_stride=_get(rec, "schedule.recovery", "anchor_stride", 3, int,
                           lambda v: v >= 1),
    )

    p = raw.get("params", {}) or {}
    params = PruneParams(
        w_str=_get(p, "params", "w_str", 0.5, float, lambda v: v >= 0),
        power_iters=_get(p, "params", "power_iters", 3, int, lambda v: v >= 1),
        rng_seed=_get(p, "params", "rng_seed", 0, int),
    )

    seeds = raw.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    if not seeds:
        raise ConfigError("seeds", "need at least one input seed")
    input_seeds = tuple(int(s) for s in seeds)

    t = raw.get("timing", {}) or {}
    o = raw.get("output", {}) or {}
    sw = raw.get("sweep", {}) or {}
    ab = raw.get("ablate", {}) or {}
    sens = raw.get("sensitivity", {}) or {}
    return ExperimentConfig(
        model=model, sides=sides, ratios=ratios, strategy=strategy,
        recovery=recovery, params=params, input_seeds=input_seeds,
        repeats=_get(t, "timing", "repeats", 5, int, lambda v: v >= 1),
        warmup=_get(t, "timing", "warmup", 2, int, lambda v: v >= 0),
        out_dir=_get(o, "output", "dir", "out", str),
        write_masks=_get(o, "output", "masks", False, bool),
        write_figures=_get(o, "output", "figures", True, bool),
        sweep_ratios=tuple(float(r) for r in sw.get("ratios", (0.0, 0.3, 0.5, 0.7, 0.9))),
        ablate_seeds=_get(ab, "ablate", "seeds", 20, int, lambda v: v >= 1),
        ablate_ratio=_get(ab, "ablate", "ratio", 0.7, float, lambda v: 0 <= v < 1),
        sensitivity_sigma=_get(sens, "sensitivity", "sigma", 0.1, float, lambda v: v >= 0),
        sensitivity_seeds=_get(sens, "sensitivity", "seeds", 10, int, lambda v: v >= 1),
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError("<file>", str(err))
    except yaml.YAMLError as err:
        raise ConfigError("<yaml>", str(err))
    return parse_config(raw or {})
