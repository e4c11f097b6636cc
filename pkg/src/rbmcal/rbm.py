"""Restricted Boltzmann machine parameters and exact (enumerated) quantities.

Units are binary {0, 1}.  A joint configuration (v, h) is encoded as the
integer ``sum_i v_i 2**i + sum_j h_j 2**(n + j)``, visible bits first and
little-endian, so probability tables are comparable across runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp

ENUMERATION_CAP = 24


class EnumerationError(ValueError):
    """Raised when an exact operation is asked to enumerate too many states."""


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RbmParams:
    """Weights ``w[i, j]``, visible biases ``b[i]`` and hidden biases ``c[j]``."""

    w: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        w = _frozen(self.w, 2, "w")
        b = _frozen(self.b, 1, "b")
        c = _frozen(self.c, 1, "c")
        if w.shape != (b.size, c.size):
            raise ValueError(
                f"w has shape {w.shape}, expected ({b.size}, {c.size}) from b and c"
            )
        if b.size == 0 or c.size == 0:
            raise ValueError("both layers need at least one unit")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n_visible(self) -> int:
        return self.b.size

    @property
    def n_hidden(self) -> int:
        return self.c.size

    @property
    def n_bits(self) -> int:
        return self.n_visible + self.n_hidden

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> "RbmParams":
        return cls(np.zeros((n_visible, n_hidden)), np.zeros(n_visible), np.zeros(n_hidden))

    @classmethod
    def random(cls, n_visible: int, n_hidden: int, rng, scale: float = 1.0) -> "RbmParams":
        """Entries drawn uniformly from ``[-scale, scale]``."""
        return cls(
            rng.uniform(-scale, scale, (n_visible, n_hidden)),
            rng.uniform(-scale, scale, n_visible),
            rng.uniform(-scale, scale, n_hidden),
        )

    def __eq__(self, other):
        if not isinstance(other, RbmParams):
            return NotImplemented
        return (
            np.array_equal(self.w, other.w)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.c, other.c)
        )

    def allclose(self, other: "RbmParams", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        return all(
            a.shape == o.shape and np.allclose(a, o, atol=atol, rtol=rtol)
            for a, o in ((self.w, other.w), (self.b, other.b), (self.c, other.c))
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.w, self.b, self.c):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        # json renders floats with repr(), the shortest string that round-trips
        return {
            "n_visible": self.n_visible,
            "n_hidden": self.n_hidden,
            "w": [float(x) for x in self.w.ravel()],
            "b": [float(x) for x in self.b],
            "c": [float(x) for x in self.c],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RbmParams":
        n, m = int(d["n_visible"]), int(d["n_hidden"])
        w = np.asarray(d["w"], dtype=np.float64)
        if w.size != n * m:
            raise ValueError(f"w has {w.size} entries, expected {n * m}")
        params = cls(w.reshape(n, m), d["b"], d["c"])
        if params.n_visible != n or params.n_hidden != m:
            raise ValueError("bias lengths disagree with n_visible/n_hidden")
        return params

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RbmParams":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "RbmParams":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class Configuration:
    """One joint state of the visible and hidden layers."""

    v: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        for name in ("v", "h"):
            arr = np.array(getattr(self, name), dtype=np.uint8)
            if arr.ndim != 1 or np.any(arr > 1):
                raise ValueError(f"{name} must be a 1-d vector of 0/1 values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.v, other.v) and np.array_equal(self.h, other.h)

    def index(self) -> int:
        return int(encode(self.v[None, :], self.h[None, :])[0])

    @classmethod
    def from_index(cls, index: int, n_visible: int, n_hidden: int) -> "Configuration":
        v, h = decode(np.array([index]), n_visible, n_hidden)
        return cls(v[0], h[0])


def encode(v: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Configuration indices for row-stacked visible and hidden bit arrays."""
    v = np.asarray(v, dtype=np.int64)
    h = np.asarray(h, dtype=np.int64)
    n = v.shape[1]
    vw = np.left_shift(1, np.arange(n, dtype=np.int64))
    hw = np.left_shift(1, np.arange(n, n + h.shape[1], dtype=np.int64))
    return v @ vw + h @ hw


def decode(index: np.ndarray, n_visible: int, n_hidden: int) -> tuple[np.ndarray, np.ndarray]:
    index = np.asarray(index, dtype=np.int64)
    bits = (index[:, None] >> np.arange(n_visible + n_hidden, dtype=np.int64)) & 1
    bits = bits.astype(np.uint8)
    return bits[:, :n_visible], bits[:, n_visible:]


def all_states(n: int) -> np.ndarray:
    """Every bit vector of length n, row k holding the little-endian bits of k."""
    k = np.arange(2**n, dtype=np.int64)
    return ((k[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.float64)


def check_cap(n_bits: int, cap: int | None) -> None:
    cap = ENUMERATION_CAP if cap is None else cap
    if n_bits > cap:
        raise EnumerationError(
            f"model has {n_bits} units; exact enumeration is capped at {cap} bits"
        )


def _check_layer(x, size: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != size:
        raise ValueError(f"{name} has length {x.shape[-1]}, expected {size}")
    return x


def energy(params: RbmParams, cfg: Configuration) -> float:
    v = _check_layer(cfg.v, params.n_visible, "v")
    h = _check_layer(cfg.h, params.n_hidden, "h")
    return float(-(v @ params.w @ h) - params.b @ v - params.c @ h)


def term_energies(params: RbmParams, v: np.ndarray, h: np.ndarray):
    """Per-row (E_vh, E_v, E_h) for stacked bit arrays; E = E_vh + E_v + E_h."""
    v = _check_layer(v, params.n_visible, "v")
    h = _check_layer(h, params.n_hidden, "h")
    e_vh = -((v @ params.w) * h).sum(axis=-1)
    e_v = -(v @ params.b)
    e_h = -(h @ params.c)
    return e_vh, e_v, e_h


def scaled_params(params: RbmParams, multipliers) -> RbmParams:
    """Elementwise product of the parameters with ``(mw, mb, mc)`` multipliers.

    ``multipliers`` is a tuple of arrays broadcastable to the shapes of
    ``(w, b, c)``, or any object with an ``expand(n, m)`` method returning one.
    """
    if hasattr(multipliers, "expand"):
        multipliers = multipliers.expand(params.n_visible, params.n_hidden)
    mw, mb, mc = multipliers
    return RbmParams(
        params.w * np.broadcast_to(mw, params.w.shape),
        params.b * np.broadcast_to(mb, params.b.shape),
        params.c * np.broadcast_to(mc, params.c.shape),
    )


def conditional_hidden(params: RbmParams, v) -> np.ndarray:
    """P(h_j = 1 | v); accepts a single vector or row-stacked vectors."""
    v = _check_layer(v, params.n_visible, "v")
    return expit(v @ params.w + params.c)


def conditional_visible(params: RbmParams, h) -> np.ndarray:
    """P(v_i = 1 | h); accepts a single vector or row-stacked vectors."""
    h = _check_layer(h, params.n_hidden, "h")
    return expit(h @ params.w.T + params.b)


def free_energy_terms(params: RbmParams, v) -> np.ndarray:
    """``b.v + sum_j softplus(c_j + (v W)_j)``, i.e. log of the unnormalized P(v)."""
    v = _check_layer(v, params.n_visible, "v")
    return v @ params.b + np.logaddexp(0.0, v @ params.w + params.c).sum(axis=-1)


def log_partition(params: RbmParams, cap: int | None = None) -> float:
    """log Z summed over the smaller layer analytically.

    Cost is O(2**min(n, m) * n * m); the cap applies to the full model size so
    behaviour matches :func:`exact_distribution`.
    """
    check_cap(params.n_bits, cap)
    if params.n_visible <= params.n_hidden:
        return float(logsumexp(free_energy_terms(params, all_states(params.n_visible))))
    hs = all_states(params.n_hidden)
    terms = hs @ params.c + np.logaddexp(0.0, hs @ params.w.T + params.b).sum(axis=-1)
    return float(logsumexp(terms))


def energy_table(params: RbmParams, cap: int | None = None) -> np.ndarray:
    """Energies of all configurations, indexed by the configuration encoding."""
    check_cap(params.n_bits, cap)
    vs = all_states(params.n_visible)
    hs = all_states(params.n_hidden)
    # rows: hidden index, columns: visible index -> flat index ih * 2**n + iv
    e = -(hs @ (vs @ params.w).T)
    e -= (vs @ params.b)[None, :]
    e -= (hs @ params.c)[:, None]
    return e.ravel()


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """Enumerated Boltzmann distribution over all 2**(n + m) configurations."""

    n_visible: int
    n_hidden: int
    probabilities: np.ndarray
    log_z: float
    params_digest: str

    @property
    def n_states(self) -> int:
        return self.probabilities.size

    def table(self) -> np.ndarray:
        """Probabilities reshaped to ``[hidden index, visible index]``."""
        return self.probabilities.reshape(2**self.n_hidden, 2**self.n_visible)

    def visible_marginal(self) -> np.ndarray:
        return self.table().sum(axis=0)

    def hidden_marginal(self) -> np.ndarray:
        return self.table().sum(axis=1)


def exact_distribution(params: RbmParams, cap: int | None = None) -> ExactDistribution:
    neg_e = -energy_table(params, cap)
    log_z = float(logsumexp(neg_e))
    p = np.exp(neg_e - log_z)
    p /= p.sum()
    p.setflags(write=False)
    return ExactDistribution(params.n_visible, params.n_hidden, p, log_z, params.digest())


def marginal_visible_log_prob(params: RbmParams, v, log_z: float | None = None) -> np.ndarray | float:
    """log P(v); vectorized over rows.  log Z is enumerated unless supplied."""
    if log_z is None:
        log_z = log_partition(params)
    out = free_energy_terms(params, v) - log_z
    return float(out) if np.ndim(out) == 0 else out


def model_expectations(params: RbmParams, cap: int | None = None):
    """Exact ``(<v_i h_j>, <v_i>, <h_j>)`` under the model.

    Sums over visible states with hidden units integrated out, so the cost is
    O(2**n * n * m) rather than a pass over the full joint table.
    """
    check_cap(params.n_bits, cap)
    vs = all_states(params.n_visible)
    pv = np.exp(free_energy_terms(params, vs) - log_partition(params, cap))
    ph = conditional_hidden(params, vs)
    vh = (vs * pv[:, None]).T @ ph
    return vh, pv @ vs, pv @ ph
