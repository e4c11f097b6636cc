"""Experiment drivers: noise sweep, training comparison and sampler KL table.

Every driver writes plain CSV/JSON into the output directory plus a
``manifest.json``.  Results depend only on the config (and its master seed);
worker count changes scheduling, never the numbers or their order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy

from .. import __version__
from ..calibration import BetaSet, compensate, estimate_beta_step
from ..evaluation import energy_histograms, histograms_to_csv, kl_joint, metric_record, metrics_to_json
from ..rbm import RbmParams, exact_distribution
from ..samplers import NoiseModel, NoiseSpec, gibbs_sample, make_noise_model, marginal_sample, noisy_annealer_sample
from ..training import CSV_FIELDS, TrainResult, train
from .config import PANELS, CalibrationSchedule, ExperimentConfig
from .datasets import load_dataset

logger = logging.getLogger(__name__)

# Leading element of every spawn key, so that streams for different purposes never collide.
_CELL, _EVAL, _KL_TABLE = 0, 1, 2


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def _parallel_map(fn: Callable, jobs: Sequence, threads: int) -> list:
    """Ordered map; with ``threads > 1`` jobs run in worker processes."""
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=1))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())


def write_manifest(out: Path, config: ExperimentConfig, command: str, outputs: Sequence[str], started: datetime) -> None:
    """Provenance record.  The two timestamps are the only run-dependent fields."""
    manifest = {
        "command": command,
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "seed": config.seed,
        "outputs": sorted(outputs),
        "versions": {
            "rbmcal": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _prepare_out(config: ExperimentConfig, out) -> Path:
    path = Path(out if out is not None else config.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_training_data(config: ExperimentConfig) -> np.ndarray:
    data = load_dataset(asdict(config.dataset))
    if data.size == 0:
        raise ValueError("the configured dataset is empty")
    if data.shape[1] != config.n_visible:
        raise ValueError(f"dataset vectors have {data.shape[1]} bits, model has {config.n_visible} visible units")
    return data


def pretrain_rbm(config: ExperimentConfig) -> RbmParams:
    """The model the sampler studies run on: loaded from file, or CD-trained on the dataset."""
    if config.pretrained is not None:
        params = RbmParams.load(config.pretrained)
        if (params.n_visible, params.n_hidden) != (config.n_visible, config.n_hidden):
            raise ValueError("pretrained parameters do not match the configured model shape")
        return params
    data = load_training_data(config)
    return train(data, config.pretrain, "cd", n_hidden=config.n_hidden).params


def noise_models(spec: NoiseSpec, n_visible: int, n_hidden: int, pool: int = 1) -> NoiseModel | list[NoiseModel]:
    """One model, or ``pool`` independent draws (seeds ``spec.seed .. spec.seed + pool - 1``)."""
    if pool == 1:
        return make_noise_model(spec, n_visible, n_hidden)
    return [make_noise_model(replace(spec, seed=spec.seed + k), n_visible, n_hidden) for k in range(pool)]


def panel_noise_spec(base: NoiseSpec, panel: str, sigma: float, seed: int) -> NoiseSpec:
    """Noise for one sweep cell: biases spread by ``sigma``, weights too on the second panel."""
    if panel not in PANELS:
        raise ValueError(f"unknown panel {panel!r}")
    w_mode = "constant" if panel == "bias_only" else "gaussian"
    w_sigma = 0.0 if panel == "bias_only" else sigma
    return replace(base, w_mode=w_mode, w_sigma=w_sigma, b_sigma=sigma, c_sigma=sigma, seed=seed)


def calibrate(
    params: RbmParams,
    noise,
    variant: str,
    schedule: CalibrationSchedule,
    rng: np.random.Generator,
    fidelity: str = "exact",
) -> BetaSet:
    """Estimate the calibration for a fixed model by repeated estimate_beta_step calls.

    Returns the average of the tail iterates, which removes most of the
    step-to-step jitter left by the stochastic updates.
    """
    n, m = params.n_visible, params.n_hidden
    beta = BetaSet.identity(variant, n, m)
    phases = [
        (schedule.unified_calls, schedule.unified_eta_beta, True),
        (schedule.calls, schedule.eta_beta, False),
        (schedule.tail_calls, schedule.tail_eta_beta, False),
    ]
    tail = []
    for k, (calls, eta, collapse) in enumerate(phases):
        for _ in range(calls):
            s = noisy_annealer_sample(compensate(params, beta), noise, schedule.samples, rng, fidelity=fidelity)
            beta = estimate_beta_step(
                params, s, beta, eta, schedule.inner_iters, schedule.cd_gibbs_steps, rng, collapse=collapse
            )
            if k == 2:
                tail.append(beta.values)
    return BetaSet(variant, np.mean(tail, axis=0))


# ---------------------------------------------------------------- noise sweep

SWEEP_CELL_FIELDS = ("config_digest", "seed", "panel", "sigma", "variant", "repetition", "kl", "noise_seed", "beta")
SWEEP_SUMMARY_FIELDS = ("config_digest", "seed", "panel", "sigma", "variant", "kl_mean", "kl_std", "repetitions")


def _sweep_cell(job: dict) -> dict:
    params = RbmParams.from_dict(job["params"])
    clean = exact_distribution(params)
    eval_rng = _rng(job["seed"], _EVAL, job["repetition"])
    if job["variant"] == "baseline":
        s = marginal_sample(params, job["eval_samples"], eval_rng)
        return {**job["row"], "kl": kl_joint(s, clean), "noise_seed": "", "beta": ""}
    spec = NoiseSpec(**job["noise"])
    noise = make_noise_model(spec, params.n_visible, params.n_hidden)
    schedule = CalibrationSchedule(**job["schedule"])
    beta = calibrate(params, noise, job["variant"], schedule, _rng(job["seed"], *job["key"]))
    s = noisy_annealer_sample(compensate(params, beta), noise, job["eval_samples"], eval_rng)
    beta_text = " ".join(repr(float(x)) for x in beta.values)
    return {**job["row"], "kl": kl_joint(s, clean), "noise_seed": spec.seed, "beta": beta_text}


def sweep_jobs(config: ExperimentConfig, params: RbmParams) -> list[dict]:
    """Cells in output order: baseline repetitions, then panel x sigma x variant x repetition.

    Every variant in a (panel, sigma, repetition) cell sees the same noise
    draw, and the final evaluation draw of repetition r shares its random
    stream with baseline repetition r, so differences between rows are
    paired comparisons.
    """
    sw = config.sweep
    digest = config.digest()
    shared = {
        "params": params.to_dict(),
        "seed": config.seed,
        "eval_samples": sw.eval_samples,
        "schedule": asdict(sw.calibration),
    }
    jobs = []
    for rep in range(sw.repetitions):
        row = {"config_digest": digest, "seed": config.seed, "panel": "none", "sigma": 0.0,
               "variant": "baseline", "repetition": rep}
        jobs.append({**shared, "row": row, "variant": "baseline", "repetition": rep})
    for p_idx, panel in enumerate(sw.panels):
        p_key = PANELS.index(panel)
        for s_idx, sigma in enumerate(sw.sigmas):
            for v_idx, variant in enumerate(sw.variants):
                for rep in range(sw.repetitions):
                    noise = panel_noise_spec(config.noise, panel, sigma, _derived_seed(config.seed, _CELL, p_key, s_idx, rep))
                    row = {"config_digest": digest, "seed": config.seed, "panel": panel, "sigma": sigma,
                           "variant": variant, "repetition": rep}
                    jobs.append({
                        **shared, "row": row, "variant": variant, "repetition": rep,
                        "noise": asdict(noise), "key": (_CELL, p_key, s_idx, rep, 1 + v_idx),
                    })
    return jobs


def summarize_sweep(rows: Sequence[dict]) -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    first: dict[tuple, dict] = {}
    for row in rows:
        key = (row["panel"], row["sigma"], row["variant"])
        groups.setdefault(key, []).append(row["kl"])
        first.setdefault(key, row)
    out = []
    for key, values in groups.items():
        values = np.array(values)
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        out.append({**{k: first[key][k] for k in ("config_digest", "seed", "panel", "sigma", "variant")},
                    "kl_mean": float(values.mean()), "kl_std": std, "repetitions": len(values)})
    return out


def run_noise_sweep(config: ExperimentConfig, out=None, params: RbmParams | None = None) -> list[dict]:
    """KL of calibrated noisy-annealer samples against the clean model over the sigma grid.

    Writes ``sweep_cells.csv`` (one row per repetition), ``sweep_summary.csv``
    (mean and sample std per cell, including the no-noise baseline),
    ``pretrained_params.json``, ``metrics.json`` and ``manifest.json``.
    Returns the summary rows.
    """
    started = datetime.now(timezone.utc)
    out = _prepare_out(config, out)
    if params is None:
        params = pretrain_rbm(config)
    params.save(out / "pretrained_params.json")
    jobs = sweep_jobs(config, params)
    logger.info("noise sweep: %d cells on %d worker(s)", len(jobs), config.threads)
    rows = _parallel_map(_sweep_cell, jobs, config.threads)
    summary = summarize_sweep(rows)
    _write_csv(out / "sweep_cells.csv", SWEEP_CELL_FIELDS, [[r[k] for k in SWEEP_CELL_FIELDS] for r in rows])
    _write_csv(out / "sweep_summary.csv", SWEEP_SUMMARY_FIELDS, [[r[k] for k in SWEEP_SUMMARY_FIELDS] for r in summary])
    metrics = [
        metric_record("kl_joint_mean", r["kl_mean"], config.sweep.eval_samples, config.seed, r["variant"],
                      panel=r["panel"], sigma=r["sigma"], kl_std=r["kl_std"], config_digest=r["config_digest"])
        for r in summary
    ]
    (out / "metrics.json").write_text(metrics_to_json(metrics))
    write_manifest(out, config, "sweep-noise",
                   ["sweep_cells.csv", "sweep_summary.csv", "pretrained_params.json", "metrics.json"], started)
    return summary


# ------------------------------------------------------- training comparison

CURVE_FIELDS = ("config_digest", "seed", "scheme") + CSV_FIELDS
MIN_KL_FIELDS = ("config_digest", "seed", "scheme", "min_epoch", "min_kl", "kl_at_unified_end",
                 "min_kl_after_unified", "final_kl")


def _comparison_run(job: dict) -> dict:
    config = ExperimentConfig.from_dict(job["config"])
    data = load_training_data(config)
    scheme, seed = job["scheme"], job["train_seed"]
    if scheme in ("cd", "gibbs"):
        mode, noise = scheme, None
        tc = replace(config.train, seed=seed)
    else:
        mode = "annealer_calibrated"
        tc = replace(config.train, seed=seed, variant=scheme)
        noise = noise_models(replace(config.noise, seed=config.noise.seed + seed), config.n_visible,
                             config.n_hidden, config.noise_pool)
    result: TrainResult = train(data, tc, mode, noise=noise, n_hidden=config.n_hidden)
    return {"scheme": scheme, "seed": seed, "record": result.record, "trace": result.trace,
            "params": result.params.to_dict(), "beta": None if result.beta is None else result.beta.to_dict()}


def comparison_jobs(config: ExperimentConfig) -> list[dict]:
    raw = config.to_dict()
    return [
        {"config": raw, "scheme": scheme, "train_seed": seed}
        for seed in config.comparison.seeds
        for scheme in config.comparison.schemes
    ]


def _min_kl_row(digest: str, run: dict, unified: int) -> list:
    record = run["record"]
    kl = record.kl()
    epoch, value = record.min_kl()
    at_unified = kl[unified - 1] if 0 < unified <= len(kl) else float("nan")
    after = float(np.min(kl[unified:])) if unified < len(kl) else float("nan")
    return [digest, run["seed"], run["scheme"], epoch, value, at_unified, after, kl[-1]]


def run_training_comparison(config: ExperimentConfig, out=None) -> dict[str, list[dict]]:
    """Train every configured scheme for every configured seed under matched budgets.

    Writes ``training_curves.csv``, ``min_kl.csv``, ``comparison_summary.csv``,
    one ``beta_trace_<variant>.csv`` per calibrated variant, the final
    parameters, ``metrics.json`` and ``manifest.json``.  Returns the runs
    grouped by scheme.
    """
    started = datetime.now(timezone.utc)
    out = _prepare_out(config, out)
    digest = config.digest()
    runs = _parallel_map(_comparison_run, comparison_jobs(config), config.threads)

    curves, mins = [], []
    traces: dict[str, list[str]] = {}
    for run in runs:
        for e in run["record"].epochs:
            curves.append([digest, run["seed"], run["scheme"], e.epoch, *(float(getattr(e, k)) for k in CSV_FIELDS[1:])])
        mins.append(_min_kl_row(digest, run, config.train.unified_update_epochs))
        if len(run["trace"]):
            lines = run["trace"].to_csv(config.n_visible, config.n_hidden).splitlines()
            block = traces.setdefault(run["scheme"], ["config_digest,seed," + lines[0]])
            block.extend(f"{digest},{run['seed']},{line}" for line in lines[1:])
        (out / f"params_{run['scheme']}_seed{run['seed']}.json").write_text(
            json.dumps(run["params"], indent=1, sort_keys=True) + "\n")
    _write_csv(out / "training_curves.csv", CURVE_FIELDS, curves)
    _write_csv(out / "min_kl.csv", MIN_KL_FIELDS, mins)
    outputs = ["training_curves.csv", "min_kl.csv", "comparison_summary.csv", "metrics.json"]
    outputs += [f"params_{r['scheme']}_seed{r['seed']}.json" for r in runs]
    for scheme, lines in traces.items():
        (out / f"beta_trace_{scheme}.csv").write_text("\n".join(lines) + "\n")
        outputs.append(f"beta_trace_{scheme}.csv")

    summary = []
    for scheme in config.comparison.schemes:
        values = [row[4] for row in mins if row[2] == scheme]
        summary.append([digest, config.seed, scheme, float(np.median(values)), float(np.min(values)),
                        float(np.max(values)), len(values)])
    _write_csv(out / "comparison_summary.csv",
               ("config_digest", "seed", "scheme", "median_min_kl", "best_min_kl", "worst_min_kl", "runs"), summary)
    metrics = [metric_record("median_min_kl_visible", row[3], None, config.seed, row[2], config_digest=digest)
               for row in summary]
    (out / "metrics.json").write_text(metrics_to_json(metrics))
    write_manifest(out, config, "train", outputs, started)

    grouped: dict[str, list[dict]] = {}
    for run in runs:
        grouped.setdefault(run["scheme"], []).append(run)
    return grouped


# ------------------------------------------------------------ KL table

KL_TABLE_FIELDS = ("config_digest", "seed", "sampler", "n_samples", "kl")


def run_kl_table(config: ExperimentConfig, out=None, params: RbmParams | None = None) -> list[list]:
    """KL of each sampler's empirical distribution against the exact model at several sample sizes.

    Samplers: exact (the finite-sample floor), block Gibbs, the raw noisy
    annealer, and the annealer calibrated with each configured variant.
    Also writes energy histograms (total and per term) for Gibbs and the
    calibrated annealers, sharing bin edges per term.
    """
    started = datetime.now(timezone.utc)
    out = _prepare_out(config, out)
    digest = config.digest()
    if params is None:
        params = pretrain_rbm(config)
    params.save(out / "evaluated_params.json")
    n, m = params.n_visible, params.n_hidden
    clean = exact_distribution(params)
    noise = noise_models(config.noise, n, m, config.noise_pool)
    tc = config.train

    betas = {}
    for k, variant in enumerate(config.evaluation.variants):
        betas[variant] = calibrate(params, noise, variant, config.sweep.calibration,
                                   _rng(config.seed, _KL_TABLE, 0, k), tc.fidelity)

    def draw(sampler: str, size: int, rng):
        if sampler == "exact":
            return marginal_sample(params, size, rng)
        if sampler == "gibbs":
            return gibbs_sample(params, size, tc.gibbs_burn_in, tc.gibbs_thinning, tc.gibbs_chains, rng)
        if sampler == "annealer_uncalibrated":
            return noisy_annealer_sample(params, noise, size, rng, fidelity=tc.fidelity)
        return noisy_annealer_sample(compensate(params, betas[sampler]), noise, size, rng, fidelity=tc.fidelity)

    samplers = ["exact", "gibbs", "annealer_uncalibrated", *config.evaluation.variants]
    rows = []
    for i, size in enumerate(config.evaluation.sample_sizes):
        for j, sampler in enumerate(samplers):
            s = draw(sampler, size, _rng(config.seed, _KL_TABLE, 1, i, j))
            rows.append([digest, config.seed, sampler, size, kl_joint(s, clean)])
    _write_csv(out / "kl_table.csv", KL_TABLE_FIELDS, rows)

    hist_samplers = ["gibbs", *config.evaluation.variants]
    sets = [draw(name, config.evaluation.histogram_samples, _rng(config.seed, _KL_TABLE, 2, j))
            for j, name in enumerate(hist_samplers)]
    hists = energy_histograms(params, sets, bins=config.evaluation.bins)
    labels = [hist_samplers[k % len(hist_samplers)] for k in range(len(hists))]
    (out / "energy_histograms.csv").write_text(histograms_to_csv(hists, labels))
    (out / "betas.json").write_text(
        json.dumps({k: b.to_dict() for k, b in betas.items()}, indent=1, sort_keys=True) + "\n")
    metrics = [metric_record("kl_joint", r[4], r[3], config.seed, r[2], config_digest=digest) for r in rows]
    (out / "metrics.json").write_text(metrics_to_json(metrics))
    write_manifest(out, config, "evaluate",
                   ["evaluated_params.json", "kl_table.csv", "energy_histograms.csv", "betas.json", "metrics.json"],
                   started)
    return rows


def timed(fn: Callable, *args, **kwargs):
    """``(result, seconds)``; used by the CLI to log how long a driver took."""
    t0 = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - t0
