"""Sampler calibration: per-term multiplier patterns and their online estimation.

A sampler that realizes ``exp(-E(v, h | beta * theta))`` instead of the
programmed ``exp(-E(v, h | theta))`` is described by a :class:`BetaSet`.
Dividing the programmed parameters by an estimate of ``beta`` (compensation)
makes the sampler realize the intended model; the estimate itself is refined
from the sampler's own output by a contrastive-divergence style update on the
log-likelihood of the returned samples.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .rbm import RbmParams, model_expectations, scaled_params
from .samplers import SampleSet, as_rng, sample_hidden, sample_visible

logger = logging.getLogger(__name__)

VARIANTS = ("one_parameter", "three_parameter", "one_and_all_bias")


@dataclass(frozen=True, eq=False)
class BetaSet:
    """Calibration multipliers stored as a flat component vector.

    Layout by variant::

        one_parameter     [beta_eff]
        three_parameter   [beta_vh, beta_v, beta_h]
        one_and_all_bias  [beta_vh, beta_v0 .. beta_v{n-1}, beta_h0 .. beta_h{m-1}]
    """

    variant: str
    values: np.ndarray

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        vals = np.array(self.values, dtype=np.float64).ravel()
        if self.variant == "one_parameter" and vals.size != 1:
            raise ValueError("one_parameter takes exactly one component")
        if self.variant == "three_parameter" and vals.size != 3:
            raise ValueError("three_parameter takes exactly three components")
        if self.variant == "one_and_all_bias" and vals.size < 3:
            raise ValueError("one_and_all_bias needs beta_vh plus per-unit components")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ValueError(f"calibration components must be positive and finite: {vals}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def one_parameter(cls, beta_eff: float) -> "BetaSet":
        return cls("one_parameter", [beta_eff])

    @classmethod
    def three_parameter(cls, beta_vh: float, beta_v: float, beta_h: float) -> "BetaSet":
        return cls("three_parameter", [beta_vh, beta_v, beta_h])

    @classmethod
    def one_and_all_bias(cls, beta_vh: float, beta_vi, beta_hj) -> "BetaSet":
        return cls("one_and_all_bias", np.concatenate([[beta_vh], np.ravel(beta_vi), np.ravel(beta_hj)]))

    @classmethod
    def filled(cls, variant: str, value: float, n_visible: int, n_hidden: int) -> "BetaSet":
        size = {"one_parameter": 1, "three_parameter": 3}.get(variant, 1 + n_visible + n_hidden)
        return cls(variant, np.full(size, float(value)))

    @classmethod
    def identity(cls, variant: str, n_visible: int, n_hidden: int) -> "BetaSet":
        return cls.filled(variant, 1.0, n_visible, n_hidden)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, BetaSet):
            return NotImplemented
        return self.variant == other.variant and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"BetaSet({self.variant!r}, {np.array2string(self.values, precision=4)})"

    def _check_units(self, n: int, m: int) -> None:
        if self.variant == "one_and_all_bias" and self.values.size != 1 + n + m:
            raise ValueError(
                f"one_and_all_bias has {self.values.size} components, model needs {1 + n + m}"
            )

    def expand(self, n: int, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full-shape multipliers for ``(w, b, c)``."""
        if n < 1 or m < 1:
            raise ValueError("layer sizes must be positive")
        self._check_units(n, m)
        vals = self.values
        if self.variant == "one_parameter":
            return np.full((n, m), vals[0]), np.full(n, vals[0]), np.full(m, vals[0])
        if self.variant == "three_parameter":
            return np.full((n, m), vals[0]), np.full(n, vals[1]), np.full(m, vals[2])
        return np.full((n, m), vals[0]), vals[1 : 1 + n].copy(), vals[1 + n :].copy()

    def compose(self, other: "BetaSet") -> "BetaSet":
        """Componentwise product; ``compensate(p, a.compose(b))`` divides by both."""
        if self.variant != other.variant or self.values.size != other.values.size:
            raise ValueError(f"cannot compose {self.variant} with {other.variant}")
        return BetaSet(self.variant, self.values * other.values)

    def component_names(self) -> list[str]:
        if self.variant == "one_parameter":
            return ["beta_eff"]
        if self.variant == "three_parameter":
            return ["beta_vh", "beta_v", "beta_h"]
        # the split between visible and hidden needs the model shape; callers
        # use component_names_for(n, m) when they have it
        return ["beta_vh"] + [f"beta_{k}" for k in range(1, self.values.size)]

    def component_names_for(self, n: int, m: int) -> list[str]:
        if self.variant != "one_and_all_bias":
            return self.component_names()
        self._check_units(n, m)
        return ["beta_vh"] + [f"beta_v{i}" for i in range(n)] + [f"beta_h{j}" for j in range(m)]

    def to_dict(self) -> dict:
        return {"variant": self.variant, "values": [float(x) for x in self.values]}

    @classmethod
    def from_dict(cls, d: dict) -> "BetaSet":
        return cls(d["variant"], d["values"])


def compensate(params: RbmParams, beta_est: BetaSet) -> RbmParams:
    """Divide every parameter by its estimated multiplier."""
    mw, mb, mc = beta_est.expand(params.n_visible, params.n_hidden)
    return RbmParams(params.w / mw, params.b / mb, params.c / mc)


@dataclass(frozen=True)
class TermAverages:
    """Averages of the three energy-term sums and of the per-unit bias terms.

    ``vh = <sum_ij w_ij v_i h_j>``, ``v = <sum_i b_i v_i>``, ``h = <sum_j c_j h_j>``,
    ``v_each[i] = <b_i v_i>``, ``h_each[j] = <c_j h_j>``.  Note the sign: these
    are negated energy terms, so ``<E> = -(vh + v + h)``.
    """

    vh: float
    v: float
    h: float
    v_each: np.ndarray
    h_each: np.ndarray

    @property
    def energy(self) -> float:
        return -(self.vh + self.v + self.h)


def _term_averages_from_bits(params: RbmParams, v: np.ndarray, h: np.ndarray) -> TermAverages:
    v = v.astype(np.float64)
    h = h.astype(np.float64)
    vh = float(np.mean(((v @ params.w) * h).sum(axis=1)))
    v_each = params.b * v.mean(axis=0)
    h_each = params.c * h.mean(axis=0)
    return TermAverages(vh, float(v_each.sum()), float(h_each.sum()), v_each, h_each)


def sample_term_averages(params: RbmParams, s: SampleSet) -> TermAverages:
    """Term averages under the empirical distribution of ``s``."""
    if s.total_count == 0:
        raise ValueError("cannot average over an empty sample set")
    if (s.n_visible, s.n_hidden) != (params.n_visible, params.n_hidden):
        raise ValueError("sample set and parameters have different shapes")
    return _term_averages_from_bits(params, *s.bits())


def model_term_averages(params: RbmParams, beta: BetaSet | None = None) -> TermAverages:
    """Exact term averages of ``params`` under the distribution of ``params * beta``."""
    target = params if beta is None else scaled_params(params, beta)
    vh, v, h = model_expectations(target)
    v_each = params.b * v
    h_each = params.c * h
    return TermAverages(
        float(np.sum(params.w * vh)), float(v_each.sum()), float(h_each.sum()), v_each, h_each
    )


def beta_gradient(variant: str, s_avg: TermAverages, m_avg: TermAverages) -> np.ndarray:
    """Log-likelihood gradient of the returned samples in the variant's components.

    Each entry is ``<term>_S - <term>_model`` for the (negated) energy term the
    component multiplies; for one_parameter the term is the whole ``-E``, so
    the delta is ``<E>_model - <E>_S``.  Returned in the BetaSet layout.
    """
    if s_avg.v_each.shape != m_avg.v_each.shape or s_avg.h_each.shape != m_avg.h_each.shape:
        raise ValueError("term-average bundles come from models of different shapes")
    if variant == "one_parameter":
        return np.array([m_avg.energy - s_avg.energy])
    if variant == "three_parameter":
        return np.array([s_avg.vh - m_avg.vh, s_avg.v - m_avg.v, s_avg.h - m_avg.h])
    if variant == "one_and_all_bias":
        return np.concatenate(
            [[s_avg.vh - m_avg.vh], s_avg.v_each - m_avg.v_each, s_avg.h_each - m_avg.h_each]
        )
    raise ValueError(f"unknown variant {variant!r}")


def unidentifiable_components(beta: BetaSet, params: RbmParams) -> np.ndarray:
    """Mask of components whose energy term is identically zero (zero bias)."""
    mask = np.zeros(len(beta), dtype=bool)
    if beta.variant == "one_and_all_bias":
        mask[1:] = np.concatenate([params.b == 0, params.c == 0])
        mask[0] = not np.any(params.w)
    elif beta.variant == "three_parameter":
        mask[:] = [not np.any(params.w), not np.any(params.b), not np.any(params.c)]
    return mask


def gibbs_evolve(params: RbmParams, v: np.ndarray, h: np.ndarray, half_steps: int, rng):
    """Alternate layer resampling starting from the visible layer.

    ``half_steps`` counts single-layer updates: 2 means v ~ P(v|h) then
    h ~ P(h|v), which is the shortest chain that refreshes both layers of a
    sample that already carries hidden bits.
    """
    for k in range(half_steps):
        if k % 2 == 0:
            v = sample_visible(params, h, rng)
        else:
            h = sample_hidden(params, v, rng)
    return v, h


def estimate_beta_step(
    params: RbmParams,
    annealer_samples: SampleSet,
    beta_est: BetaSet,
    eta_beta: float = 0.01,
    inner_iters: int = 3,
    cd_gibbs_steps: int = 2,
    rng=None,
    *,
    negative_phase: str = "cd",
    collapse: bool = False,
    min_ratio: float = 0.05,
) -> BetaSet:
    """Refine ``beta_est`` from samples drawn with ``compensate(params, beta_est)``.

    The samples follow ``params * beta_tmp`` with ``beta_tmp = beta_true /
    beta_est``; ``beta_tmp`` is fitted by ``inner_iters`` gradient steps
    starting from 1, each negative phase obtained by evolving the samples
    ``cd_gibbs_steps`` layer updates under ``params * beta_tmp``
    (``negative_phase="exact"`` uses enumerated expectations instead).  The
    result is ``beta_tmp * beta_est``.

    ``collapse=True`` applies the one-parameter delta to every component.
    Components of ``beta_tmp`` are kept at or above ``min_ratio``.
    """
    if annealer_samples.total_count == 0:
        raise ValueError("cannot estimate calibration from an empty sample set")
    if inner_iters < 1 or cd_gibbs_steps < 1:
        raise ValueError("inner_iters and cd_gibbs_steps must be >= 1")
    if negative_phase not in ("cd", "exact"):
        raise ValueError(f"negative_phase must be 'cd' or 'exact', got {negative_phase!r}")
    rng = as_rng(rng)
    n, m = params.n_visible, params.n_hidden
    frozen = unidentifiable_components(beta_est, params)
    if frozen.any():
        logger.debug("frozen calibration components: %s", np.flatnonzero(frozen).tolist())

    v0, h0 = annealer_samples.bits()
    s_avg = _term_averages_from_bits(params, v0, h0)
    tmp = np.ones(len(beta_est))
    for _ in range(inner_iters):
        current = BetaSet(beta_est.variant, tmp)
        if negative_phase == "cd":
            model = scaled_params(params, current)
            v, h = gibbs_evolve(model, v0, h0, cd_gibbs_steps, rng)
            m_avg = _term_averages_from_bits(params, v, h)
        else:
            m_avg = model_term_averages(params, current)
        if collapse:
            delta = np.full(len(tmp), beta_gradient("one_parameter", s_avg, m_avg)[0])
        else:
            delta = beta_gradient(beta_est.variant, s_avg, m_avg)
            delta[frozen] = 0.0
        tmp = np.maximum(tmp + eta_beta * delta, min_ratio)
    return BetaSet(beta_est.variant, tmp).compose(beta_est)


@dataclass
class BetaTrace:
    """Calibration snapshots keyed by strictly increasing epoch."""

    epochs: list[int] = field(default_factory=list)
    betas: list[BetaSet] = field(default_factory=list)

    def append(self, epoch: int, beta: BetaSet) -> None:
        if self.epochs and epoch <= self.epochs[-1]:
            raise ValueError(f"epoch {epoch} does not follow {self.epochs[-1]}")
        self.epochs.append(int(epoch))
        self.betas.append(beta)

    def __len__(self) -> int:
        return len(self.epochs)

    def values(self) -> np.ndarray:
        """``[len(trace), n_components]`` array of snapshots."""
        return np.array([b.values for b in self.betas])

    def to_csv(self, n_visible: int | None = None, n_hidden: int | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if not self.betas:
            writer.writerow(["epoch", "variant"])
            return buf.getvalue()
        first = self.betas[0]
        if n_visible is not None and n_hidden is not None:
            names = first.component_names_for(n_visible, n_hidden)
        else:
            names = first.component_names()
        writer.writerow(["epoch", "variant", *names])
        for epoch, beta in zip(self.epochs, self.betas):
            writer.writerow([epoch, beta.variant, *(repr(float(x)) for x in beta.values)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BetaTrace":
        rows = list(csv.reader(io.StringIO(text)))
        trace = cls()
        for row in rows[1:]:
            trace.append(int(row[0]), BetaSet(row[1], [float(x) for x in row[2:]]))
        return trace
