"""RBM training with CD-k, Gibbs or calibrated-annealer negative phases."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .calibration import VARIANTS, BetaSet, BetaTrace, compensate, estimate_beta_step
from .evaluation import kl_visible
from .rbm import ENUMERATION_CAP, RbmParams, conditional_hidden, conditional_visible
from .samplers import NoiseModel, SampleSet, cd_negative_phase, gibbs_sample, noisy_annealer_sample

MODES = ("cd", "gibbs", "annealer_calibrated")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1500
    eta_theta: float = 0.05
    eta_beta: float = 0.01
    batch_size: int | None = None  # None: full batch
    cd_k: int = 1
    beta_updates_per_epoch: int = 5
    unified_update_epochs: int = 500
    variant: str = "one_parameter"
    annealer_samples_per_epoch: int = 1000
    inner_iters: int = 3
    cd_gibbs_steps: int = 2
    initial_beta: float = 1.0
    fidelity: str = "exact"
    gibbs_burn_in: int = 1000
    gibbs_thinning: int = 10
    gibbs_chains: int = 100
    init_scale: float = 0.01
    weight_decay: float = 0.0
    checkpoint_every: int = 0
    seed: int = 0

    def validate(self, mode: str | None = None) -> None:
        positive = (
            "epochs", "cd_k", "beta_updates_per_epoch", "annealer_samples_per_epoch",
            "inner_iters", "cd_gibbs_steps", "gibbs_thinning", "gibbs_chains",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive or None")
        if mode in (None, "annealer_calibrated") and not 0 <= self.unified_update_epochs <= self.epochs:
            raise ValueError("unified_update_epochs must lie in [0, epochs]")
        if self.eta_theta <= 0 or self.eta_beta <= 0:
            raise ValueError("learning rates must be positive")
        if self.initial_beta <= 0:
            raise ValueError("initial_beta must be positive")
        if self.gibbs_burn_in < 0 or self.checkpoint_every < 0 or self.weight_decay < 0:
            raise ValueError("gibbs_burn_in, checkpoint_every and weight_decay must be >= 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if mode is not None and mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    kl: float
    reconstruction_error: float
    w_norm: float
    b_norm: float
    c_norm: float
    wall_time: float = field(default=0.0, compare=False)


CSV_FIELDS = ("epoch", "kl", "reconstruction_error", "w_norm", "b_norm", "c_norm")


@dataclass
class TrainRecord:
    """Per-epoch log; wall time is kept but excluded from CSV output and equality."""

    epochs: list[EpochRecord] = field(default_factory=list)
    initial_kl: float = float("nan")

    def __len__(self) -> int:
        return len(self.epochs)

    def kl(self) -> np.ndarray:
        return np.array([e.kl for e in self.epochs])

    def min_kl(self) -> tuple[int, float]:
        """Epoch and value of the smallest KL (the reported figure of merit)."""
        kl = self.kl()
        k = int(np.nanargmin(kl))
        return self.epochs[k].epoch, float(kl[k])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for e in self.epochs:
            writer.writerow([e.epoch, *(repr(float(getattr(e, k))) for k in CSV_FIELDS[1:])])
        return buf.getvalue()


@dataclass
class TrainResult:
    params: RbmParams
    record: TrainRecord
    trace: BetaTrace
    beta: BetaSet | None = None


def data_moments(params: RbmParams, data: np.ndarray):
    """Data-phase ``(<v h>, <v>, <h>)`` using exact hidden conditionals."""
    v = np.asarray(data, dtype=np.float64)
    ph = conditional_hidden(params, v)
    k = v.shape[0]
    return v.T @ ph / k, v.mean(axis=0), ph.mean(axis=0)


def sample_moments(s: SampleSet):
    v, h = s.bits()
    v = v.astype(np.float64)
    h = h.astype(np.float64)
    return v.T @ h / len(s), v.mean(axis=0), h.mean(axis=0)


def rbm_gradient(params: RbmParams, data, negative):
    """Log-likelihood ascent direction ``(dw, db, dc)`` before the learning rate.

    ``negative`` is a SampleSet or an already computed ``(<vh>, <v>, <h>)``
    tuple, e.g. from :func:`rbmcal.rbm.model_expectations`.
    """
    data = np.asarray(data)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("data must be a non-empty 2-d array of visible vectors")
    if data.shape[1] != params.n_visible:
        raise ValueError(f"data rows have {data.shape[1]} bits, model has {params.n_visible}")
    if isinstance(negative, SampleSet):
        if len(negative) == 0:
            raise ValueError("negative phase sample set is empty")
        if (negative.n_visible, negative.n_hidden) != (params.n_visible, params.n_hidden):
            raise ValueError("negative sample set shape does not match the model")
        negative = sample_moments(negative)
    pos = data_moments(params, data)
    return tuple(p - n for p, n in zip(pos, negative))


def reconstruction_error(params: RbmParams, data: np.ndarray) -> float:
    """Mean squared error of the deterministic mean-field reconstruction."""
    v = np.asarray(data, dtype=np.float64)
    v_rec = conditional_visible(params, conditional_hidden(params, v))
    return float(np.mean((v - v_rec) ** 2))


def init_params(n_visible: int, n_hidden: int, scale: float, rng) -> RbmParams:
    return RbmParams(rng.normal(0.0, scale, (n_visible, n_hidden)), np.zeros(n_visible), np.zeros(n_hidden))


def train(
    data,
    config: TrainConfig,
    mode: str,
    noise: NoiseModel | list[NoiseModel] | None = None,
    n_hidden: int | None = None,
    init: RbmParams | None = None,
    checkpoint_dir=None,
) -> TrainResult:
    """Train an RBM on ``data`` (rows of visible bits).

    Either ``n_hidden`` or ``init`` fixes the model shape.  In
    ``annealer_calibrated`` mode each epoch performs ``beta_updates_per_epoch``
    rounds of: draw samples through the compensated parameters, refine the
    calibration.  The last round's samples double as the negative phase.
    During the first ``unified_update_epochs`` epochs every calibration
    component receives the one-parameter update.
    """
    config.validate(mode)
    if mode == "annealer_calibrated" and noise is None:
        raise ValueError("annealer_calibrated mode needs a noise model")
    data = np.asarray(data, dtype=np.uint8)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-d array")
    if init is None and n_hidden is None:
        raise ValueError("give either n_hidden or init")

    seq = np.random.SeedSequence(config.seed)
    init_rng, sample_rng, beta_rng, batch_rng = (np.random.default_rng(s) for s in seq.spawn(4))
    n_visible = data.shape[1]
    params = init if init is not None else init_params(n_visible, n_hidden, config.init_scale, init_rng)
    if params.n_visible != n_visible:
        raise ValueError(f"data has {n_visible} bits, model has {params.n_visible} visible units")
    n, m = params.n_visible, params.n_hidden

    evaluable = params.n_bits <= ENUMERATION_CAP
    # the KL is against the empirical data distribution, which counts duplicates
    record = TrainRecord(initial_kl=kl_visible(data, params) if evaluable else float("nan"))
    trace = BetaTrace()
    beta = BetaSet.filled(config.variant, config.initial_beta, n, m) if mode == "annealer_calibrated" else None
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        carried = None
        if mode == "annealer_calibrated":
            collapse = epoch <= config.unified_update_epochs
            for _ in range(config.beta_updates_per_epoch):
                carried = noisy_annealer_sample(
                    compensate(params, beta), noise, config.annealer_samples_per_epoch,
                    sample_rng, fidelity=config.fidelity,
                )
                beta = estimate_beta_step(
                    params, carried, beta, config.eta_beta, config.inner_iters,
                    config.cd_gibbs_steps, beta_rng, collapse=collapse,
                )
            trace.append(epoch, beta)

        if config.batch_size is None:
            batches = [data]
        else:
            order = batch_rng.permutation(data.shape[0])
            batches = [data[order[k : k + config.batch_size]] for k in range(0, len(order), config.batch_size)]

        for batch in batches:
            if mode == "cd":
                negative = cd_negative_phase(params, batch, config.cd_k, sample_rng)
            elif mode == "gibbs":
                negative = gibbs_sample(
                    params, config.annealer_samples_per_epoch, config.gibbs_burn_in,
                    config.gibbs_thinning, config.gibbs_chains, sample_rng,
                )
            elif carried is not None:
                negative, carried = carried, None
            else:
                negative = noisy_annealer_sample(
                    compensate(params, beta), noise, config.annealer_samples_per_epoch,
                    sample_rng, fidelity=config.fidelity,
                )
            dw, db, dc = rbm_gradient(params, batch, negative)
            eta = config.eta_theta
            params = RbmParams(
                params.w + eta * (dw - config.weight_decay * params.w),
                params.b + eta * db,
                params.c + eta * dc,
            )

        record.epochs.append(
            EpochRecord(
                epoch=epoch,
                kl=kl_visible(data, params) if evaluable else float("nan"),
                reconstruction_error=reconstruction_error(params, data),
                w_norm=float(np.linalg.norm(params.w)),
                b_norm=float(np.linalg.norm(params.b)),
                c_norm=float(np.linalg.norm(params.c)),
                wall_time=time.perf_counter() - t0,
            )
        )
        if checkpoint_dir is not None and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            params.save(checkpoint_dir / f"params_epoch{epoch:05d}.json")
            if beta is not None:
                (checkpoint_dir / f"beta_epoch{epoch:05d}.json").write_text(json.dumps(beta.to_dict()) + "\n")

    return TrainResult(params, record, trace, beta)


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)
