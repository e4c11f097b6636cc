"""Figures of merit: KL divergences and per-term energy histograms."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rbm import ExactDistribution, RbmParams, encode, log_partition, marginal_visible_log_prob, term_energies
from .samplers import SampleSet

TERMS = ("E_total", "E_vh", "E_v", "E_h")


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Sparse counts over configuration indices of an ``n_bits``-bit space."""

    keys: np.ndarray
    counts: np.ndarray
    n_bits: int

    def __post_init__(self):
        keys = np.asarray(self.keys, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if keys.shape != counts.shape or np.any(counts < 0):
            raise ValueError("keys and counts must be equal-length with non-negative counts")
        if keys.size and (keys.min() < 0 or keys.max() >= 2**self.n_bits):
            raise ValueError("configuration index outside the state space")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_indices(cls, indices, n_bits: int) -> "EmpiricalDistribution":
        keys, counts = np.unique(np.asarray(indices, dtype=np.int64), return_counts=True)
        return cls(keys, counts, n_bits)

    @classmethod
    def from_samples(cls, s: SampleSet) -> "EmpiricalDistribution":
        return cls.from_indices(s.indices, s.n_visible + s.n_hidden)

    @classmethod
    def from_visible(cls, data) -> "EmpiricalDistribution":
        """Distribution over visible-only indices (for the data KL)."""
        data = np.asarray(data, dtype=np.uint8)
        idx = encode(data, np.zeros((data.shape[0], 0), dtype=np.uint8))
        return cls.from_indices(idx, data.shape[1])

    def probabilities(self) -> np.ndarray:
        """Probabilities aligned with ``keys``."""
        return self.counts / self.counts.sum()


def kl_joint(q: EmpiricalDistribution | SampleSet, p: ExactDistribution) -> float:
    """D(Q || P) over joint configurations; zero-count states contribute nothing."""
    if isinstance(q, SampleSet):
        q = EmpiricalDistribution.from_samples(q)
    if q.n_bits != p.n_visible + p.n_hidden:
        raise ValueError(f"empirical space has {q.n_bits} bits, distribution has {p.n_visible + p.n_hidden}")
    mask = q.counts > 0
    qp = q.probabilities()[mask]
    return float(np.sum(qp * (np.log(qp) - np.log(p.probabilities[q.keys[mask]]))))


def kl_visible(q_data, params: RbmParams, log_z: float | None = None) -> float:
    """D(Q_D || P(v)) for the empirical data distribution against the model marginal.

    ``q_data`` is an EmpiricalDistribution over visible indices or an array of
    visible rows (duplicates count).
    """
    if not isinstance(q_data, EmpiricalDistribution):
        q_data = EmpiricalDistribution.from_visible(q_data)
    if q_data.n_bits != params.n_visible:
        raise ValueError(f"data has {q_data.n_bits} bits, model has {params.n_visible} visible units")
    if log_z is None:
        log_z = log_partition(params)
    mask = q_data.counts > 0
    keys = q_data.keys[mask]
    qp = q_data.probabilities()[mask]
    v = ((keys[:, None] >> np.arange(params.n_visible)) & 1).astype(np.float64)
    return float(np.sum(qp * (np.log(qp) - marginal_visible_log_prob(params, v, log_z))))


@dataclass(frozen=True, eq=False)
class EnergyHistogram:
    term: str
    edges: np.ndarray
    counts: np.ndarray
    source_tag: str
    mean: float  # mean of the raw (unbinned) values

    def __post_init__(self):
        if self.term not in TERMS:
            raise ValueError(f"unknown energy term {self.term!r}")
        if len(self.counts) != len(self.edges) - 1:
            raise ValueError("histogram needs one more edge than counts")


def sample_energies(params: RbmParams, s: SampleSet) -> dict[str, np.ndarray]:
    """Raw per-sample energies keyed by term; E_total is the sum of the parts."""
    v, h = s.bits()
    e_vh, e_v, e_h = term_energies(params, v, h)
    return {"E_total": e_vh + e_v + e_h, "E_vh": e_vh, "E_v": e_v, "E_h": e_h}


def energy_histograms(
    params: RbmParams,
    s: SampleSet | Sequence[SampleSet],
    bins: int | str = "fd",
) -> list[EnergyHistogram]:
    """Histograms of E and its three terms, with edges shared across sample sets.

    Edges per term come from the pooled values of every set passed, using the
    Freedman-Diaconis rule by default or ``bins`` equal-width bins.  Output
    order is term-major, then the order of the sets.
    """
    sets = [s] if isinstance(s, SampleSet) else list(s)
    if not sets or any(len(x) == 0 for x in sets):
        raise ValueError("energy histograms need non-empty sample sets")
    energies = [sample_energies(params, x) for x in sets]
    out = []
    for term in TERMS:
        pooled = np.concatenate([e[term] for e in energies])
        edges = np.histogram_bin_edges(pooled, bins=bins)
        for x, e in zip(sets, energies):
            counts, _ = np.histogram(e[term], bins=edges)
            out.append(EnergyHistogram(term, edges, counts, x.source_tag, float(e[term].mean())))
    return out


def histograms_to_csv(hists: Sequence[EnergyHistogram], labels: Sequence[str] | None = None) -> str:
    """Rows of ``edge_low, edge_high, count, term, source_tag``.

    ``labels`` overrides the source tag column, one label per histogram.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["edge_low", "edge_high", "count", "term", "source_tag"])
    for k, hist in enumerate(hists):
        tag = labels[k] if labels is not None else hist.source_tag
        for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c), hist.term, tag])
    return buf.getvalue()


def metric_record(metric: str, value: float, n_samples: int | None, seed: int | None, variant: str | None, **extra) -> dict:
    return {"metric": metric, "value": float(value), "n_samples": n_samples, "seed": seed, "variant": variant, **extra}


def metrics_to_json(records: Sequence[dict]) -> str:
    return json.dumps(list(records), indent=1, sort_keys=True) + "\n"


def total_variation(q: np.ndarray, p: np.ndarray) -> float:
    """Half the L1 distance between two probability vectors."""
    return 0.5 * float(np.abs(np.asarray(q) - np.asarray(p)).sum())
