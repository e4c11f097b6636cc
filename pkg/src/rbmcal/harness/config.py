"""Experiment configuration: one YAML file per experiment, overridable from the CLI."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..calibration import VARIANTS
from ..samplers import NoiseSpec
from ..training import TrainConfig

SCHEMES = ("cd", "gibbs") + VARIANTS
PANELS = ("bias_only", "weights_and_biases")
DATASET_KINDS = ("bars_and_stripes", "file", "coarse_grained_images")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "bars_and_stripes"
    rows: int = 3
    cols: int = 4
    path: str | None = None
    target_shape: tuple[int, int] | None = None
    threshold: float = 0.5

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {DATASET_KINDS}")
        if self.kind != "bars_and_stripes" and not self.path:
            raise ValueError(f"dataset kind {self.kind!r} needs a path")
        if self.kind == "coarse_grained_images" and self.target_shape is None:
            raise ValueError("coarse_grained_images needs target_shape")
        if self.target_shape is not None:
            object.__setattr__(self, "target_shape", tuple(int(x) for x in self.target_shape))


@dataclass(frozen=True)
class CalibrationSchedule:
    """How the noise sweep drives estimate_beta_step against a fixed model.

    ``unified_calls`` collapsed updates at ``unified_eta_beta`` come first,
    then ``calls`` full updates at ``eta_beta``, then ``tail_calls`` at
    ``tail_eta_beta`` whose iterates are averaged to give the final estimate.
    The collapsed rule tolerates a larger step than the multi-component
    ones, whose pooled weight and bias terms make the likelihood much more
    curved.
    """

    samples: int = 10_000
    unified_calls: int = 10
    calls: int = 240
    tail_calls: int = 60
    unified_eta_beta: float = 0.15
    eta_beta: float = 0.05
    tail_eta_beta: float = 0.05
    inner_iters: int = 3
    cd_gibbs_steps: int = 2

    def __post_init__(self):
        if self.samples < 1 or self.tail_calls < 1 or min(self.unified_calls, self.calls) < 0:
            raise ValueError("calibration needs samples >= 1, tail_calls >= 1 and non-negative call counts")
        if min(self.unified_eta_beta, self.eta_beta, self.tail_eta_beta) <= 0:
            raise ValueError("calibration learning rates must be positive")


@dataclass(frozen=True)
class SweepSpec:
    sigmas: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    panels: tuple[str, ...] = PANELS
    variants: tuple[str, ...] = VARIANTS
    repetitions: int = 10
    eval_samples: int = 1_000_000
    calibration: CalibrationSchedule = field(default_factory=CalibrationSchedule)

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(self, "panels", tuple(self.panels))
        object.__setattr__(self, "variants", tuple(self.variants))
        if not self.sigmas or not self.panels or not self.variants:
            raise ValueError("sweep grids must be non-empty")
        if any(s < 0 for s in self.sigmas):
            raise ValueError("noise sigmas must be >= 0")
        bad = [p for p in self.panels if p not in PANELS] + [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ValueError(f"unknown sweep entries {bad}")
        if self.repetitions < 1 or self.eval_samples < 1:
            raise ValueError("repetitions and eval_samples must be positive")


@dataclass(frozen=True)
class ComparisonSpec:
    schemes: tuple[str, ...] = SCHEMES
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.schemes or not self.seeds:
            raise ValueError("comparison needs at least one scheme and one seed")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"unknown schemes {bad}; expected a subset of {SCHEMES}")


@dataclass(frozen=True)
class EvaluationSpec:
    sample_sizes: tuple[int, ...] = (100_000, 1_000_000)
    variants: tuple[str, ...] = VARIANTS
    histogram_samples: int = 100_000
    bins: str | int = "fd"

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "variants", tuple(self.variants))
        if not self.sample_sizes or min(self.sample_sizes) < 1:
            raise ValueError("sample_sizes must be non-empty and positive")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    n_visible: int = 12
    n_hidden: int = 6
    seed: int = 0
    threads: int = 1
    out: str = "runs/experiment"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    pretrained: str | None = None
    pretrain: TrainConfig = field(default_factory=lambda: TrainConfig(eta_theta=0.3, init_scale=0.1))
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    noise_pool: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    comparison: ComparisonSpec = field(default_factory=ComparisonSpec)
    evaluation: EvaluationSpec = field(default_factory=EvaluationSpec)

    def __post_init__(self):
        if self.n_visible < 1 or self.n_hidden < 1:
            raise ValueError("model shape must be positive")
        if self.threads < 1 or self.noise_pool < 1:
            raise ValueError("threads and noise_pool must be >= 1")
        if self.pretrained is not None and not Path(self.pretrained).is_file():
            raise ValueError(f"pretrained parameter file {self.pretrained} does not exist")
        if self.dataset.path is not None and not Path(self.dataset.path).exists():
            raise ValueError(f"dataset file {self.dataset.path} does not exist")
        if self.dataset.kind == "bars_and_stripes" and self.dataset.rows * self.dataset.cols != self.n_visible:
            raise ValueError(
                f"bars_and_stripes {self.dataset.rows}x{self.dataset.cols} does not fill {self.n_visible} visible units"
            )

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = copy.deepcopy(raw or {})
        _reject_unknown(raw, cls, "config")
        nested = {
            "dataset": DatasetSpec,
            "noise": NoiseSpec,
            "evaluation": EvaluationSpec,
            "comparison": ComparisonSpec,
        }
        for key, kind in nested.items():
            if key in raw:
                _reject_unknown(raw[key], kind, key)
                raw[key] = kind(**raw[key])
        for key in ("pretrain", "train"):
            if key in raw:
                base = TrainConfig(eta_theta=0.3, init_scale=0.1) if key == "pretrain" else TrainConfig()
                raw[key] = TrainConfig.from_dict({**asdict(base), **raw[key]})
        if "sweep" in raw:
            sweep = dict(raw["sweep"])
            _reject_unknown(sweep, SweepSpec, "sweep")
            if "calibration" in sweep:
                _reject_unknown(sweep["calibration"], CalibrationSchedule, "sweep.calibration")
                sweep["calibration"] = CalibrationSchedule(**sweep["calibration"])
            raw["sweep"] = SweepSpec(**sweep)
        return cls(**raw)

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        return cls.from_dict(merge(raw, overrides or {}))

    def digest(self) -> str:
        """Short content hash; ``out`` and ``threads`` do not change results so they are left out."""
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _reject_unknown(raw, kind, where: str) -> None:
    if not isinstance(raw, dict):
        raise ValueError(f"{where} must be a mapping")
    known = {f.name for f in fields(kind)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown {where} keys {unknown}")


def merge(base: dict, updates: dict) -> dict:
    """Recursive dict merge; values in ``updates`` win."""
    out = copy.deepcopy(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> dict:
    """``"train.epochs=200"`` becomes ``{"train": {"epochs": 200}}``; the value is parsed as YAML."""
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ValueError(f"override {text!r} is not of the form key=value")
    node: dict = yaml.safe_load(value) if value else None
    for part in reversed(key.split(".")):
        node = {part: node}
    return node
