"""Command-line entry point: ``dynsamp {phantom,mask,run,pilot,oracle}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import arrayio
from .adaptive import BASELINE_KINDS, make_baseline_mask
from .analytic_oracle import GaussianProblem, greedy_oracle_selection, measurement_variance, posterior_moments
from .forward_model import PHANTOM_KINDS, make_operator, make_phantom, simulate_measurements
from .harness import ConfigError, ExperimentConfig, perturbed_frames, run_experiment, run_pilot_transfer


def _shape(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.lower().replace("x", ",").split(",") if s)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.threads is not None:
        changes["threads"] = args.threads
    return cfg.replace(**changes)


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_phantom(args) -> int:
    out = _out(args, "phantom_out")
    img = make_phantom(args.kind, _shape(args.shape))
    arrayio.save_array(out / args.kind, img)
    arrayio.save_pgm(out / f"{args.kind}.pgm", img)
    print(f"wrote {out / args.kind}.bin")
    return 0


def cmd_mask(args) -> int:
    out = _out(args, "mask_out")
    shape = _shape(args.shape)
    units = shape[1] if args.mode == "line" and len(shape) == 2 else int(np.prod(shape))
    count = args.count if args.count is not None else int(round(units / args.undersampling))
    seed = 0 if args.seed is None else args.seed
    for kind in args.kind:
        mask = make_baseline_mask(kind, shape, count, seed=seed, mode=args.mode)
        arrayio.save_mask(out / f"mask_{kind}", mask)
        arrayio.save_pgm(out / f"mask_{kind}.pgm", mask.to_array().astype(float), fftshift=True)
        print(f"{kind}: {mask.count} locations -> {out / ('mask_' + kind)}.bin")
    return 0


def _summarize(report) -> None:
    for method, val in report.psnr.items():
        vals = val if isinstance(val, list) else [val]
        print(f"{method:>16s}  " + "  ".join(f"{v:7.2f} dB" for v in vals))


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = _out(args, "run_out")
    report = run_experiment(cfg, out_dir=out)
    _summarize(report)
    print(f"report written to {out / 'report.json'}")
    return 0


def cmd_pilot(args) -> int:
    cfg = _load_config(args)
    out = _out(args, "pilot_out")
    frames = perturbed_frames(cfg, args.frames, args.amplitude)
    report = run_pilot_transfer(cfg, frames, out_dir=out)
    _summarize(report)
    print(f"report written to {out / 'report.json'}")
    return 0


def cmd_oracle(args) -> int:
    """Dump exact Gaussian-posterior fixtures for a small 1D problem."""
    out = _out(args, "oracle_out")
    seed = 0 if args.seed is None else args.seed
    mask = make_baseline_mask("low_frequency", (args.n,), args.initial)
    op = make_operator((args.n,), mask, noise_sigma=args.sigma)
    prob = GaussianProblem(op, args.lam, args.sigma)
    x = args.scale * make_phantom(args.phantom, (args.n,))
    y = simulate_measurements(x, op, seed)
    mean, cov = posterior_moments(prob, y)
    var = measurement_variance(prob, cov)
    picks = greedy_oracle_selection(prob, mask, args.n_add)
    arrayio.save_array(out / "ground_truth", x)
    arrayio.save_array(out / "measurements", y.values)
    arrayio.save_array(out / "posterior_mean", mean)
    arrayio.save_array(out / "posterior_covariance", cov)
    arrayio.save_array(out / "measurement_variance", var)
    arrayio.save_mask(out / "initial_mask", mask)
    arrayio.write_csv(out / "greedy_picks.csv", ["order", "index"], list(enumerate(picks)))
    meta = {"n": args.n, "lam": args.lam, "noise_sigma": args.sigma, "initial": args.initial,
            "n_add": args.n_add, "seed": seed, "greedy_picks": picks}
    (out / "oracle.json").write_text(arrayio.dumps_json(meta))
    print(f"greedy picks: {picks}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=int, help="root seed (overrides config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for chain batches")

    parser = argparse.ArgumentParser(prog="dynsamp", description="Bayesian adaptive k-space sampling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="write a phantom array and preview")
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="shepp_logan_like")
    p.add_argument("--shape", default="64x64")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("mask", parents=[common], help="write fixed baseline masks")
    p.add_argument("--kind", choices=BASELINE_KINDS, nargs="+", default=["poisson_disk"])
    p.add_argument("--shape", default="64x64")
    p.add_argument("--count", type=int)
    p.add_argument("--undersampling", type=float, default=10.0)
    p.add_argument("--mode", choices=("pointwise", "line"), default="pointwise")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("run", parents=[common], help="adaptive vs fixed masks experiment")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pilot", parents=[common], help="design on frame 1, reuse on later frames")
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--amplitude", type=float, default=0.15)
    p.set_defaults(func=cmd_pilot)

    p = sub.add_parser("oracle", parents=[common], help="dump analytic Gaussian-oracle fixtures")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--initial", type=int, default=4)
    p.add_argument("--n-add", type=int, default=5)
    p.add_argument("--scale", type=float, default=8.0)
    p.add_argument("--phantom", choices=("smooth_bumps", "piecewise_constant_1d"), default="smooth_bumps")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
