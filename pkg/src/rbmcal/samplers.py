"""Samplers: block Gibbs, CD-k, exact inverse-CDF and a simulated noisy annealer.

Every sampler takes ``rng`` as a ``numpy.random.Generator`` or an integer
seed and is reproducible given it.  Multi-chain samplers advance all chains
as one vectorized block, so a single generator drives them in a fixed order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .rbm import (
    Configuration,
    ExactDistribution,
    RbmParams,
    all_states,
    check_cap,
    conditional_hidden,
    conditional_visible,
    decode,
    encode,
    exact_distribution,
    scaled_params,
)

SOURCE_TAGS = ("gibbs", "cd", "exact", "noisy_annealer")


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """A multiset of joint configurations stored as per-sample indices."""

    indices: np.ndarray
    n_visible: int
    n_hidden: int
    source_tag: str
    seed: int | None = None
    _bits: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.source_tag not in SOURCE_TAGS:
            raise ValueError(f"unknown source tag {self.source_tag!r}")
        idx = np.array(self.indices, dtype=np.int64).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= 2 ** (self.n_visible + self.n_hidden)):
            raise ValueError("configuration index out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_bits(cls, v, h, source_tag: str, seed: int | None = None) -> "SampleSet":
        v = np.asarray(v)
        h = np.asarray(h)
        s = cls(encode(v, h), v.shape[1], h.shape[1], source_tag, seed)
        s._bits.append((v.astype(np.uint8), h.astype(np.uint8)))
        return s

    @property
    def total_count(self) -> int:
        return self.indices.size

    def __len__(self) -> int:
        return self.indices.size

    def bits(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-stacked ``(v, h)`` uint8 arrays, decoded once and cached."""
        if not self._bits:
            self._bits.append(decode(self.indices, self.n_visible, self.n_hidden))
        return self._bits[0]

    @property
    def v(self) -> np.ndarray:
        return self.bits()[0]

    @property
    def h(self) -> np.ndarray:
        return self.bits()[1]

    def counts(self) -> np.ndarray:
        """Dense count vector over all 2**(n + m) configuration indices."""
        return np.bincount(self.indices, minlength=2 ** (self.n_visible + self.n_hidden))

    def configurations(self) -> list[Configuration]:
        v, h = self.bits()
        return [Configuration(a, b) for a, b in zip(v, h)]

    def write(self, path) -> None:
        v, h = self.bits()
        lines = [
            f"# n_visible={self.n_visible} n_hidden={self.n_hidden} "
            f"source_tag={self.source_tag} seed={self.seed if self.seed is not None else ''}"
        ]
        for a, b in zip(v, h):
            lines.append("".join("01"[x] for x in a) + " " + "".join("01"[x] for x in b))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "SampleSet":
        text = Path(path).read_text().splitlines()
        if not text or not text[0].startswith("#"):
            raise ValueError(f"{path}: missing sample-set header line")
        header = dict(tok.split("=", 1) for tok in text[0][1:].split())
        n, m = int(header["n_visible"]), int(header["n_hidden"])
        rows_v, rows_h = [], []
        for lineno, line in enumerate(text[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2 or len(parts[0]) != n or len(parts[1]) != m or set(line) - set("01 "):
                raise ValueError(f"{path}:{lineno}: malformed sample line {line!r}")
            rows_v.append([int(ch) for ch in parts[0]])
            rows_h.append([int(ch) for ch in parts[1]])
        seed = int(header["seed"]) if header.get("seed") else None
        v = np.array(rows_v, dtype=np.uint8).reshape(-1, n)
        h = np.array(rows_h, dtype=np.uint8).reshape(-1, m)
        return cls.from_bits(v, h, header["source_tag"], seed)


def concat(sets: Sequence[SampleSet], source_tag: str | None = None) -> SampleSet:
    first = sets[0]
    return SampleSet(
        np.concatenate([s.indices for s in sets]),
        first.n_visible,
        first.n_hidden,
        source_tag or first.source_tag,
        first.seed,
    )


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Per-term multipliers applied by the simulated annealer."""

    beta_err_w: np.ndarray
    beta_err_b: np.ndarray
    beta_err_c: np.ndarray

    def __post_init__(self):
        for name in ("beta_err_w", "beta_err_b", "beta_err_c"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"{name} must be strictly positive and finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.beta_err_w.shape != (self.beta_err_b.size, self.beta_err_c.size):
            raise ValueError("noise multiplier shapes are inconsistent")

    @classmethod
    def identity(cls, n_visible: int, n_hidden: int) -> "NoiseModel":
        return cls(np.ones((n_visible, n_hidden)), np.ones(n_visible), np.ones(n_hidden))

    @classmethod
    def uniform(cls, beta: float, n_visible: int, n_hidden: int) -> "NoiseModel":
        return cls(
            np.full((n_visible, n_hidden), beta), np.full(n_visible, beta), np.full(n_hidden, beta)
        )

    def expand(self, n: int, m: int):
        if self.beta_err_w.shape != (n, m):
            raise ValueError(f"noise model has shape {self.beta_err_w.shape}, model is ({n}, {m})")
        return self.beta_err_w, self.beta_err_b, self.beta_err_c

    def __eq__(self, other):
        if not isinstance(other, NoiseModel):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("beta_err_w", "beta_err_b", "beta_err_c")
        )


@dataclass(frozen=True)
class NoiseSpec:
    """How to draw a NoiseModel.

    ``w_mode="constant"`` sets every weight multiplier to ``w_mean``; bias
    multipliers are always gaussian (a zero sigma makes them constant).
    """

    w_mode: str = "constant"
    w_mean: float = 6.8
    w_sigma: float = 0.0
    b_mean: float = 7.0
    b_sigma: float = 0.0
    c_mean: float = 4.5
    c_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.w_mode not in ("constant", "gaussian"):
            raise ValueError(f"w_mode must be 'constant' or 'gaussian', got {self.w_mode!r}")
        for name in ("w_sigma", "b_sigma", "c_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("w_mean", "b_mean", "c_mean"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _positive_normal(rng: np.random.Generator, mean: float, sigma: float, shape) -> np.ndarray:
    out = rng.normal(mean, sigma, shape)
    bad = out <= 0
    while np.any(bad):
        out[bad] = rng.normal(mean, sigma, int(bad.sum()))
        bad = out <= 0
    return out


def make_noise_model(spec: NoiseSpec, n_visible: int, n_hidden: int) -> NoiseModel:
    rng = np.random.default_rng(spec.seed)
    if spec.w_mode == "constant":
        w = np.full((n_visible, n_hidden), spec.w_mean)
    else:
        w = _positive_normal(rng, spec.w_mean, spec.w_sigma, (n_visible, n_hidden))
    b = _positive_normal(rng, spec.b_mean, spec.b_sigma, n_visible)
    c = _positive_normal(rng, spec.c_mean, spec.c_sigma, n_hidden)
    return NoiseModel(w, b, c)


def sample_hidden(params: RbmParams, v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = conditional_hidden(params, v)
    return (rng.random(p.shape) < p).astype(np.uint8)


def sample_visible(params: RbmParams, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = conditional_visible(params, h)
    return (rng.random(p.shape) < p).astype(np.uint8)


def block_gibbs_step(params: RbmParams, cfg: Configuration, rng) -> Configuration:
    """Resample h given v, then v given the new h."""
    rng = as_rng(rng)
    h = sample_hidden(params, cfg.v, rng)
    v = sample_visible(params, h, rng)
    return Configuration(v, h)


def _sweep(params, v, rng, steps: int):
    h = None
    for _ in range(steps):
        h = sample_hidden(params, v, rng)
        v = sample_visible(params, h, rng)
    return v, h


def gibbs_sample(
    params: RbmParams,
    n_samples: int,
    burn_in: int = 1000,
    thinning: int = 10,
    n_chains: int | None = None,
    rng=None,
) -> SampleSet:
    """Pooled samples from independent block-Gibbs chains.

    Each chain starts from a uniformly random visible vector, discards
    ``burn_in`` sweeps and then keeps one state every ``thinning`` sweeps.
    Output is chain-major: all of chain 0's samples, then chain 1's, ...
    """
    if n_chains is None:
        n_chains = os.cpu_count() or 1
    if min(n_samples, thinning, n_chains) < 1 or burn_in < 0:
        raise ValueError("n_samples, thinning and n_chains must be positive; burn_in >= 0")
    rng = as_rng(rng)
    per_chain = -(-n_samples // n_chains)
    v = rng.integers(0, 2, (n_chains, params.n_visible), dtype=np.uint8)
    v, _ = _sweep(params, v, rng, burn_in)
    kept_v = np.empty((n_chains, per_chain, params.n_visible), dtype=np.uint8)
    kept_h = np.empty((n_chains, per_chain, params.n_hidden), dtype=np.uint8)
    for k in range(per_chain):
        v, h = _sweep(params, v, rng, thinning)
        kept_v[:, k] = v
        kept_h[:, k] = h
    kept_v = kept_v.reshape(-1, params.n_visible)[:n_samples]
    kept_h = kept_h.reshape(-1, params.n_hidden)[:n_samples]
    return SampleSet.from_bits(kept_v, kept_h, "gibbs")


def cd_negative_phase(params: RbmParams, data, k: int, rng=None) -> SampleSet:
    """One CD-k chain per data row: h ~ P(h|v), then k rounds of (v|h, h|v)."""
    if k < 1:
        raise ValueError(f"CD needs k >= 1, got {k}")
    rng = as_rng(rng)
    data = np.asarray(data, dtype=np.uint8).reshape(-1, params.n_visible)
    if data.shape[0] == 0:
        return SampleSet(np.empty(0, dtype=np.int64), params.n_visible, params.n_hidden, "cd")
    v = data
    h = sample_hidden(params, v, rng)
    for _ in range(k):
        v = sample_visible(params, h, rng)
        h = sample_hidden(params, v, rng)
    return SampleSet.from_bits(v, h, "cd")


def exact_sample(dist: ExactDistribution, n_samples: int, rng=None) -> SampleSet:
    """i.i.d. draws from an enumerated table by inverse CDF."""
    rng = as_rng(rng)
    cdf = np.cumsum(dist.probabilities)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(n_samples), side="right")
    return SampleSet(idx, dist.n_visible, dist.n_hidden, "exact")


def _inverse_cdf(log_weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(np.exp(log_weights - log_weights.max()))
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(n), side="right")


def marginal_sample(params: RbmParams, n_samples: int, rng=None, cap: int | None = None) -> SampleSet:
    """Exact i.i.d. samples without building the joint table.

    The smaller layer is drawn from its enumerated marginal, then the other
    layer from the factorized conditional.  Same distribution as
    ``exact_sample(exact_distribution(params))`` at O(2**min(n, m)) cost.
    """
    check_cap(params.n_bits, cap)
    rng = as_rng(rng)
    n, m = params.n_visible, params.n_hidden
    # The other layer's conditionals are computed once per enumerated state
    # and gathered, which is much cheaper than one row per sample.
    if n <= m:
        vs = all_states(n)
        logw = vs @ params.b + np.logaddexp(0.0, vs @ params.w + params.c).sum(axis=1)
        k = _inverse_cdf(logw, n_samples, rng)
        p = conditional_hidden(params, vs)[k]
        v = vs[k].astype(np.uint8)
        h = (rng.random(p.shape) < p).astype(np.uint8)
        index = k + (h.astype(np.int64) @ np.left_shift(1, np.arange(n, n + m, dtype=np.int64)))
    else:
        hs = all_states(m)
        logw = hs @ params.c + np.logaddexp(0.0, hs @ params.w.T + params.b).sum(axis=1)
        k = _inverse_cdf(logw, n_samples, rng)
        p = conditional_visible(params, hs)[k]
        h = hs[k].astype(np.uint8)
        v = (rng.random(p.shape) < p).astype(np.uint8)
        index = (v.astype(np.int64) @ np.left_shift(1, np.arange(n, dtype=np.int64))) + (k << n)
    out = SampleSet(index, n, m, "exact")
    out._bits.append((v, h))
    return out


def noisy_annealer_sample(
    params: RbmParams,
    noise: NoiseModel | Sequence[NoiseModel],
    n_samples: int,
    rng=None,
    fidelity: str = "exact",
    **gibbs_kwargs,
) -> SampleSet:
    """Samples from the Boltzmann distribution of the noise-scaled parameters.

    ``noise`` may be a sequence of NoiseModels, in which case the budget is
    split evenly across them (in order) and the draws are pooled.
    """
    rng = as_rng(rng)
    models = [noise] if isinstance(noise, NoiseModel) else list(noise)
    if not models:
        raise ValueError("need at least one noise model")
    shares = np.full(len(models), n_samples // len(models))
    shares[: n_samples % len(models)] += 1
    parts = []
    for model, share in zip(models, shares):
        target = scaled_params(params, model)
        if fidelity == "exact":
            part = marginal_sample(target, int(share), rng)
        elif fidelity == "table":
            part = exact_sample(exact_distribution(target), int(share), rng)
        elif fidelity == "gibbs":
            part = gibbs_sample(target, int(share), rng=rng, **gibbs_kwargs)
        else:
            raise ValueError(f"fidelity must be 'exact', 'table' or 'gibbs', got {fidelity!r}")
        parts.append(part)
    return concat(parts, "noisy_annealer")
