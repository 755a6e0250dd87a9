"""Command-line entry point.

A run directory collects the artifacts of one experiment:

    batch.json            fit-batch
    stream.json           fit-stream (initial/final loadings, schedule, hyperparameters)
    trace.jsonl           fit-stream (+ trace.jsonl.snapshots.json with --snapshots)
    curves.csv/.json      evaluate
    reconstruction.csv    reconstruct (+ reconstruction.json)
    bounds.json           check-bounds
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .batch import fit_batch
from .diagnostics import check_all_bounds, evaluate, phase_curves
from .model import DomainError, Hyperparams, StepSchedule
from .newton import SolverError
from .reconstruct import Pairing, dominant_period, hamming_error, reconstruct_all
from .simgen import (
    CorrelatedBernoulliSpec,
    DayNightSpec,
    gen_correlated_bernoulli,
    gen_day_night,
    gen_planted_lowrank,
)
from .stream import init_stream, run_stream

log = logging.getLogger("slpca")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _nonneg_float(s):
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {s}")
    return v


def _prob(s):
    v = float(s)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"expected a probability in [0, 1], got {s}")
    return v


def _hyper_args(p):
    g = p.add_argument_group("hyperparameters")
    g.add_argument("--gamma", type=_positive_float, default=0.1, help="score ridge weight")
    g.add_argument("--lam", type=_nonneg_float, default=0.1, help="loading ridge weight (batch)")
    g.add_argument("--newton-tol", type=_positive_float, default=Hyperparams.newton_tol)
    g.add_argument("--armijo-alpha", type=float, default=0.3)
    g.add_argument("--armijo-beta", type=float, default=0.5)
    g.add_argument("--initial-step", type=_positive_float, default=1.0)
    g.add_argument("--rank", type=_positive_int, default=1)
    g.add_argument("--seed", type=int, default=0)


def _schedule_args(p):
    p.add_argument("--schedule", choices=["diminishing", "constant"], default="diminishing")
    p.add_argument("--C", dest="C", type=_positive_float, default=None,
                   help="step-size constant (default 0.2 diminishing, 0.05 constant)")


def _params(args) -> Hyperparams:
    c = getattr(args, "C", None) or 0.2
    return Hyperparams(args.gamma, args.lam, args.newton_tol, args.armijo_alpha, args.armijo_beta,
                       args.initial_step, c)


def _schedule(args) -> StepSchedule:
    if args.C is None:
        args.C = 0.2 if args.schedule == "diminishing" else 0.05
    return StepSchedule(args.schedule, args.C)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slpca", description="Batch and sequential logistic PCA for binary streams")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic binary data CSV")
    p.add_argument("--kind", choices=["correlated", "planted", "daynight"], default="correlated")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n", type=_positive_int, default=None, help="rows (default 1000; 2016 for daynight)")
    p.add_argument("--p", type=_positive_int, default=None, help="columns (default 8; 6 for daynight)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--marginal-p", type=_prob, default=0.5)
    p.add_argument("--mixing-prob", type=_prob, default=0.7)
    p.add_argument("--rank", type=_positive_int, default=1)
    p.add_argument("--magnitude", type=_nonneg_float, default=4.0)
    p.add_argument("--period", type=_positive_int, default=144)
    p.add_argument("--day-on-prob", type=_prob, default=0.8)
    p.add_argument("--night-on-prob", type=_prob, default=0.05)
    p.add_argument("--day-fraction", type=_prob, default=0.4)

    for name, helptext in [
        ("fit-batch", "alternating-minimization fit of the whole data set"),
        ("fit-stream", "one pass of the sequential algorithm"),
        ("evaluate", "functionals and prefix curves of a stream run"),
        ("reconstruct", "binary reconstructions under batch, sequential and regret pairings"),
        ("check-bounds", "verify every convergence bound; exit 1 on any failure"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", required=True, type=Path)
        p.add_argument("--run-dir", required=True, type=Path)
        if name == "fit-batch":
            _hyper_args(p)
            p.add_argument("--max-alternations", type=_positive_int, default=500)
            p.add_argument("--tol", type=_positive_float, default=1e-8)
        elif name == "fit-stream":
            _hyper_args(p)
            _schedule_args(p)
            p.add_argument("--snapshots", action="store_true", help="keep every V^{t-1} (needed by evaluate curves, "
                                                                   "surrogate loss and regret reconstruction)")
        elif name == "evaluate":
            p.add_argument("--skip-batch", action="store_true", help="omit C_t and C_N")
            p.add_argument("--refit", action="store_true", help="refit the batch model for every prefix (slow)")
    return parser


def cmd_simulate(args) -> int:
    if args.kind == "correlated":
        data = gen_correlated_bernoulli(CorrelatedBernoulliSpec(
            args.p or 8, args.n or 1000, args.marginal_p, args.mixing_prob, args.seed))
    elif args.kind == "planted":
        data, _ = gen_planted_lowrank(args.n or 200, args.p or 8, args.rank, args.magnitude, args.seed)
    else:
        data = gen_day_night(DayNightSpec(args.p or 6, args.period, args.day_on_prob, args.night_on_prob,
                                          args.day_fraction, args.n or 2016, args.seed))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    io.write_csv(data, args.out)
    label = " (synthetic day/night substitute for monitor data)" if args.kind == "daynight" else ""
    print(f"wrote {data.n} x {data.p} {args.kind} data to {args.out}{label}")
    return 0


def cmd_fit_batch(args) -> int:
    params = _params(args)
    data = io.ingest_csv(args.data)
    report = fit_batch(data, args.rank, params, args.max_alternations, args.tol, args.seed)
    args.run_dir.mkdir(parents=True, exist_ok=True)
    io.save_batch(report, args.run_dir / "batch.json")
    print(f"C_N = {report.batch_loss:.10g} after {report.alternations} alternations "
          f"(converged={report.converged}, max row residual {report.row_residual:.3e})")
    return 0


def cmd_fit_stream(args) -> int:
    schedule = _schedule(args)
    params = _params(args)
    data = io.ingest_csv(args.data)
    state = init_stream(data.p, args.rank, schedule, params, seed=args.seed)
    v0 = state.loadings
    final, trace = run_stream(state, data, snapshots=args.snapshots)
    args.run_dir.mkdir(parents=True, exist_ok=True)
    io.emit_trace(trace, args.run_dir / "trace.jsonl")
    io.save_stream(args.run_dir / "stream.json", v0, final.loadings, schedule, params, args.seed, args.snapshots)
    unconverged = int(sum(not r.converged for r in trace.records))
    print(f"processed {len(trace)} rows, ||V^N||_F^2 = {float(np.sum(final.loadings ** 2)):.6g}, "
          f"omega_hat = {trace.omega_hat:.6g}, unconverged row solves: {unconverged}")
    return 0


def _load_run(args, need_batch: bool):
    data = io.ingest_csv(args.data)
    run = io.load_stream(args.run_dir / "stream.json")
    trace = io.load_trace(args.run_dir / "trace.jsonl", run["initial_loadings"])
    batch = io.load_batch(args.run_dir / "batch.json") if need_batch else None
    return data, run, trace, batch


def cmd_evaluate(args) -> int:
    data, run, trace, batch = _load_run(args, need_batch=not args.skip_batch)
    if not trace.has_snapshots:
        raise DomainError("prefix curves need loading snapshots; re-run fit-stream with --snapshots")
    report = evaluate(trace, data, run["final_loadings"], run["schedule"], run["params"], batch, curves=not args.refit)
    if args.refit:
        report.prefix_curves = phase_curves(trace, data, batch.model if batch else None, run["final_loadings"],
                                            refit=True, params=run["params"])
    io.emit_curves(report, args.run_dir / "curves.csv", extra={"gap_within_bound": bool(report.gap <= report.gap_bound)})
    for k, v in report.scalars().items():
        print(f"{k:>18}: {v}")
    return 0


def cmd_reconstruct(args) -> int:
    data, run, trace, batch = _load_run(args, need_batch=True)
    series = reconstruct_all(batch.model, trace, run["final_loadings"])
    path = args.run_dir / "reconstruction.csv"
    stamps = data.timestamps or [str(i + 1) for i in range(data.n)]
    observed = data.values.sum(axis=1)
    with path.open("w") as fh:
        fh.write("t,observed," + ",".join(p.value for p in Pairing) + "\n")
        for k in range(data.n):
            fh.write(f"{stamps[k]},{observed[k]}," + ",".join(str(series[p].aggregate[k]) for p in Pairing) + "\n")
    max_lag = min(data.n - 1, 400)
    summary = {}
    print(f"{'pairing':<18}{'hamming':>10}{'aggregate MAE':>16}{'period':>8}")
    for p in Pairing:
        s = series[p]
        err = hamming_error(s.states, data)
        mae = float(np.mean(np.abs(s.aggregate - observed)))
        period = dominant_period(s.aggregate, max_lag)
        summary[p.value] = {"hamming_error": err, "aggregate_mae": mae, "dominant_period": period}
        print(f"{p.value:<18}{err:>10.4f}{mae:>16.4f}{str(period):>8}")
    obs_period = dominant_period(observed, max_lag)
    summary["observed"] = {"dominant_period": obs_period}
    (args.run_dir / "reconstruction.json").write_text(json.dumps(summary, indent=2) + "\n")
    return 0


def _finite(x):
    return float(x) if np.isfinite(x) else None


def cmd_check_bounds(args) -> int:
    data, run, trace, batch = _load_run(args, need_batch=(args.run_dir / "batch.json").exists())
    report = check_all_bounds(trace, data, batch, run["schedule"], run["params"], run["final_loadings"])
    doc = {"passed": report.passed, "schedule": report.schedule_kind, "checks": {}}
    for name, c in report.checks.items():
        status = "PASS" if c.passed else "FAIL"
        if not c.applicable:
            status = "N/A "
        print(f"{status} {name:<20} margin={c.margin:.6g} {c.detail}")
        doc["checks"][name] = {
            "passed": c.passed, "applicable": c.applicable, "margin": _finite(c.margin),
            "bound": _finite(c.bound), "measured": _finite(c.measured), "detail": c.detail,
        }
    (args.run_dir / "bounds.json").write_text(json.dumps(doc, indent=2) + "\n")
    return 0 if report.passed else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-batch": cmd_fit_batch,
    "fit-stream": cmd_fit_stream,
    "evaluate": cmd_evaluate,
    "reconstruct": cmd_reconstruct,
    "check-bounds": cmd_check_bounds,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DomainError, SolverError, OSError) as exc:
        print(f"slpca {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
