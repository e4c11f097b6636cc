"""Command-line entry point: ``rbmcal <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..calibration import BetaSet, compensate
from ..evaluation import energy_histograms, histograms_to_csv, kl_joint, kl_visible, metric_record, metrics_to_json
from ..rbm import RbmParams, exact_distribution
from ..samplers import SampleSet, gibbs_sample, marginal_sample, noisy_annealer_sample
from ..training import MODES, train
from . import experiments
from .config import ExperimentConfig, merge, parse_override
from .datasets import ingest_binary_vectors, write_binary_vectors

logger = logging.getLogger("rbmcal")


def build_parser() -> argparse.ArgumentParser:
    # Global flags are accepted before or after the subcommand.  SUPPRESS keeps
    # the subparser from overwriting a value given before it with a default.
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker processes for sweeps and comparisons")
    common.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="override any config entry, e.g. --set train.epochs=200 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rbmcal", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one model, or compare all schemes")
    p.add_argument("--mode", choices=("comparison",) + MODES, default="comparison")
    p.add_argument("--variant", help="calibration variant for --mode annealer_calibrated")

    sub.add_parser("sweep-noise", parents=[common], help="KL of calibrated samples over a noise grid")

    p = sub.add_parser("sample", parents=[common], help="draw samples from a saved model")
    p.add_argument("--params", type=Path, required=True, help="RbmParams JSON")
    p.add_argument("--sampler", choices=("exact", "gibbs", "noisy_annealer"), default="exact")
    p.add_argument("-n", "--n-samples", type=int, default=10_000)
    p.add_argument("--beta", type=Path, help="BetaSet JSON used to compensate the annealer")

    p = sub.add_parser("evaluate", parents=[common],
                       help="score a sample file, or build the sampler KL table for a model")
    p.add_argument("--params", type=Path, help="RbmParams JSON (default: pretrain from the config)")
    p.add_argument("--samples", type=Path, help="sample file written by `rbmcal sample`")
    p.add_argument("--data", type=Path, help="binary-vector file for the visible-marginal KL")

    sub.add_parser("gen-data", parents=[common], help="write the configured dataset as a binary-vector file")
    return parser


def load_config(args) -> ExperimentConfig:
    raw: dict = {}
    for text in getattr(args, "overrides", []):
        raw = merge(raw, parse_override(text))
    for key in ("seed", "threads"):
        if hasattr(args, key):
            raw[key] = getattr(args, key)
    if hasattr(args, "out"):
        raw["out"] = str(args.out)
    if hasattr(args, "config"):
        return ExperimentConfig.load(args.config, raw)
    return ExperimentConfig.from_dict(raw)


def cmd_train(args, config: ExperimentConfig) -> int:
    if args.mode == "comparison":
        grouped, seconds = experiments.timed(experiments.run_training_comparison, config)
        for scheme, runs in grouped.items():
            mins = [r["record"].min_kl()[1] for r in runs]
            print(f"{scheme:>18}  median min KL {np.median(mins):.4f}  over {len(mins)} seed(s)")
        logger.info("comparison finished in %.1f s", seconds)
        return 0

    started = datetime.now(timezone.utc)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    data = experiments.load_training_data(config)
    tc = config.train if args.variant is None else replace(config.train, variant=args.variant)
    noise = None
    if args.mode == "annealer_calibrated":
        noise = experiments.noise_models(config.noise, config.n_visible, config.n_hidden, config.noise_pool)
    result = train(data, tc, args.mode, noise=noise, n_hidden=config.n_hidden,
                   checkpoint_dir=out / "checkpoints" if tc.checkpoint_every else None)
    result.params.save(out / "params.json")
    (out / "train_record.csv").write_text(result.record.to_csv())
    outputs = ["params.json", "train_record.csv"]
    if result.beta is not None:
        (out / "beta_trace.csv").write_text(result.trace.to_csv(config.n_visible, config.n_hidden))
        (out / "beta.json").write_text(json.dumps(result.beta.to_dict()) + "\n")
        outputs += ["beta_trace.csv", "beta.json"]
    epoch, value = result.record.min_kl()
    print(f"{args.mode}: min KL {value:.4f} at epoch {epoch}")
    experiments.write_manifest(out, config, f"train --mode {args.mode}", outputs, started)
    return 0


def cmd_sweep(args, config: ExperimentConfig) -> int:
    summary, seconds = experiments.timed(experiments.run_noise_sweep, config)
    for row in summary:
        print(f"{row['panel']:>18} sigma={row['sigma']:<5g} {row['variant']:>17}  "
              f"KL {row['kl_mean']:.5f} +- {row['kl_std']:.5f}")
    logger.info("sweep finished in %.1f s", seconds)
    return 0


def cmd_sample(args, config: ExperimentConfig) -> int:
    started = datetime.now(timezone.utc)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    params = RbmParams.load(args.params)
    rng = np.random.default_rng(config.seed)
    tc = config.train
    if args.sampler == "exact":
        s = marginal_sample(params, args.n_samples, rng)
    elif args.sampler == "gibbs":
        s = gibbs_sample(params, args.n_samples, tc.gibbs_burn_in, tc.gibbs_thinning, tc.gibbs_chains, rng)
    else:
        noise = experiments.noise_models(config.noise, params.n_visible, params.n_hidden, config.noise_pool)
        target = params
        if args.beta is not None:
            target = compensate(params, BetaSet.from_dict(json.loads(args.beta.read_text())))
        s = noisy_annealer_sample(target, noise, args.n_samples, rng, fidelity=tc.fidelity)
    s = SampleSet(s.indices, s.n_visible, s.n_hidden, s.source_tag, seed=config.seed)
    s.write(out / "samples.txt")
    print(f"wrote {len(s)} {s.source_tag} samples to {out / 'samples.txt'}")
    experiments.write_manifest(out, config, f"sample --sampler {args.sampler}", ["samples.txt"], started)
    return 0


def cmd_evaluate(args, config: ExperimentConfig) -> int:
    params = RbmParams.load(args.params) if args.params is not None else None
    if args.samples is None:
        rows = experiments.run_kl_table(config, params=params)
        for _, _, sampler, size, kl in rows:
            print(f"{sampler:>22}  N={size:<8d} KL {kl:.5f}")
        return 0

    if params is None:
        raise ValueError("--samples needs --params")
    started = datetime.now(timezone.utc)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    s = SampleSet.read(args.samples)
    kl = kl_joint(s, exact_distribution(params))
    records = [metric_record("kl_joint", kl, len(s), s.seed, None, source_tag=s.source_tag)]
    print(f"kl_joint {kl:.6f} over {len(s)} samples")
    if args.data is not None:
        data = ingest_binary_vectors(args.data)
        kv = kl_visible(data, params)
        records.append(metric_record("kl_visible", kv, len(data), None, None))
        print(f"kl_visible {kv:.6f} against {len(data)} data vectors")
    (out / "metrics.json").write_text(metrics_to_json(records))
    (out / "energy_histograms.csv").write_text(histograms_to_csv(energy_histograms(params, s)))
    experiments.write_manifest(out, config, "evaluate", ["metrics.json", "energy_histograms.csv"], started)
    return 0


def cmd_gen_data(args, config: ExperimentConfig) -> int:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    data = experiments.load_training_data(config)
    write_binary_vectors(data, out / "data.txt")
    print(f"wrote {len(data)} vectors of {data.shape[1]} bits to {out / 'data.txt'}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "sweep-noise": cmd_sweep,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "gen-data": cmd_gen_data,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except (ValueError, OSError) as exc:
        print(f"rbmcal {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
