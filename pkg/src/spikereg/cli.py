"""Command-line entry point.

Subcommands: simulate (one instance, exact risk plus every bound),
sweep (full grid to CSV), diagnose (spectral diagnostics on one instance),
baiyin (aspect-ratio baseline for extreme singular values), and report
(summaries of a finished sweep). Exit codes: 0 success, 1 configuration
problem, 2 runtime failure, 3 failed `report --assert`.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .bounds import build_bound_report
from .config import ConfigError, ExperimentConfig, load_config
from .diagnostics import bai_yin_check, spectral_diagnostics
from .model import SpikeFamily, validate_hdlss
from .report import ReportError, report
from .risk import conditional_risk
from .sampler import EntryLaw
from .sweep import build_instance, run_sweep
from .util import fmt17


class UsageError(ValueError):
    """Malformed command line; mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikereg", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, threads=False):
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's base seed")
        if threads:
            p.add_argument("--threads", type=int, default=None,
                           help="worker processes (default: all cores)")

    p = sub.add_parser("simulate", help="one replicate: exact risk and all bounds")
    common(p)
    p.add_argument("--n", type=int, default=None,
                   help="sample size (default: first grid point)")

    p = sub.add_parser("sweep", help="run the full grid and write the results CSV")
    common(p, threads=True)
    p.add_argument("--out", default=None, help="results path (overrides output.path)")

    p = sub.add_parser("diagnose", help="spectral diagnostics for one replicate")
    common(p)
    p.add_argument("--n", type=int, default=None,
                   help="sample size (default: first grid point)")

    p = sub.add_parser("baiyin", help="extreme singular values of a flat random matrix")
    p.add_argument("--n", type=int, default=2000, help="rows")
    p.add_argument("--p", type=int, default=500, help="columns")
    p.add_argument("--law", default="gaussian",
                   choices=("gaussian", "rademacher", "uniform", "student_t"))
    p.add_argument("--df", type=float, default=None, help="student_t degrees of freedom")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="summarize a results CSV")
    p.add_argument("results", help="CSV produced by the sweep subcommand")
    p.add_argument("--out", default=None, help="directory for plot-data CSVs")
    p.add_argument("--assert", dest="check", action="store_true",
                   help="exit 3 unless every dominance tally is 1 and no row errored")

    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _pick_n(config: ExperimentConfig, n) -> int:
    return int(n) if n is not None else config.n_grid[0]


def _print_kv(label: str, value) -> None:
    print(f"{label:<24} = {value}")


def _cmd_simulate(args) -> int:
    config = _load(args)
    n = _pick_n(config, args.n)
    model, dataset, dd = build_instance(config, n)
    rr = conditional_risk(model, dd, dataset.theta, config.sigma, seed=dataset.seed)
    br = build_bound_report(
        model, dd, dataset.theta, config.sigma,
        c=config.c, t=config.t, m_cap=config.m_cap,
    )
    print(f"n = {rr.n}  d = {rr.d}  seed = {rr.seed}  law = {config.law}")
    for label in ("bias_sq", "variance", "total", "null_risk", "normalized"):
        _print_kv(label, fmt17(getattr(rr, label)))
    _print_kv("elapsed_ms", f"{rr.elapsed_ms:.3f}")
    print(f"bounds at c = {br.c:g}, t = {br.t:g}:")
    for key, value in br.values.items():
        _print_kv("  " + key, fmt17(value))
    for key, value in br.minimizers.items():
        _print_kv("  " + key, value)
    for j, value in enumerate(br.kl_projector, start=1):
        _print_kv(f"  kl_projector_{j}", fmt17(value))
    return 0


def _cmd_sweep(args) -> int:
    config = _load(args)
    out = run_sweep(config, threads=args.threads, out_path=args.out)
    print(out)
    return 0


def _cmd_diagnose(args) -> int:
    config = _load(args)
    n = _pick_n(config, args.n)
    model, dataset, dd = build_instance(config, n)
    diag = spectral_diagnostics(dataset, dd)
    print(f"n = {dataset.n}  d = {dataset.d}  seed = {dataset.seed}  rank = {dd.rank}")
    _print_kv("eig_ratio_max", fmt17(diag.eig_ratio_max))
    for j, value in enumerate(diag.eig_ratios, start=1):
        _print_kv(f"eig_ratio_{j}", fmt17(value))
    _print_kv("lemma2_piece_signal", fmt17(diag.lemma2_pieces[0]))
    _print_kv("lemma2_piece_sample", fmt17(diag.lemma2_pieces[1]))
    _print_kv("smallest_ratio", fmt17(diag.smallest_ratio))
    for j, value in enumerate(diag.projector_dists, start=1):
        _print_kv(f"proj_dist_{j}", fmt17(value))
    _print_kv("opnorm_diff", fmt17(diag.opnorm_diff))
    _print_kv("split_ratio_max", fmt17(diag.split_ratio_max))
    _print_kv("split_ratio_min", fmt17(diag.split_ratio_min))
    if isinstance(config.family, SpikeFamily) and len(config.n_grid) >= 3:
        print("growth conditions over the config grid:")
        print(validate_hdlss(config.family.spec, config.n_grid))
    return 0


def _cmd_baiyin(args) -> int:
    law = EntryLaw(args.law, args.df)
    rep = bai_yin_check(args.n, args.p, law=law, seed=args.seed, reps=args.reps)
    print(f"n = {rep.n}  p = {rep.p}  y = {rep.y:.6g}  reps = {rep.reps}  law = {law}")
    _print_kv("sigma_max_mean", fmt17(rep.sigma_max_mean))
    _print_kv("expected_max", fmt17(1.0 + rep.y ** 0.5))
    _print_kv("dev_max", fmt17(rep.dev_max))
    _print_kv("sigma_min_mean", fmt17(rep.sigma_min_mean))
    _print_kv("expected_min", fmt17(1.0 - rep.y ** 0.5))
    _print_kv("dev_min", fmt17(rep.dev_min))
    return 0


def _cmd_report(args) -> int:
    summary = report(args.results, out_dir=args.out)
    print(summary)
    if args.check and not summary.passed:
        return 3
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "diagnose": _cmd_diagnose,
    "baiyin": _cmd_baiyin,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything unexpected is a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
