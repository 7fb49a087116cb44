"""Command line front end.

Two subcommands: `run` executes a config-driven Monte Carlo experiment and
writes trials.csv, aggregates.csv, and one figure per curve family into the
output directory; `solve` runs a single seeded trial and prints key=value
lines. Figures are rendered strictly from the aggregates CSV, never from
in-memory state, so every plotted point exists in the published file.

Exit codes: 0 success, 1 a trial failed, 2 usage or config error.
"""

import argparse
import csv
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # file output only, never a display
import matplotlib.pyplot as plt

from .harness import (
    ConfigError,
    TrialError,
    parse_config,
    run_experiment,
    run_single,
    with_trials,
    write_aggregates_csv,
    write_trials_csv,
)
from .metrics import lad_objective
from .problem import ObservationKind
from .solvers import SolverOptions

_MARKERS = ("o", "s", "^", "d")


@dataclass
class PlotSpec:
    """One figure: which rows of an aggregates CSV to draw and where to."""

    csv_path: Path
    image_path: Path
    x_kind: str            # "iteration" or "snr_db"
    stat: str = "median"


def render_plot(spec):
    """Draw NMSE curves from an aggregates CSV onto a log-scaled axis.

    Returns the image path, or None when the CSV holds no matching rows.
    Zero NMSE values are clamped to 1e-16 for display only; the CSV keeps
    the exact numbers.
    """
    with open(spec.csv_path, newline="") as f:
        rows = [r for r in csv.DictReader(f)
                if r["x_kind"] == spec.x_kind and r["stat"] == spec.stat
                and r["x_value"] != ""]
    if not rows:
        return None

    series = {}
    for r in rows:
        series.setdefault(r["algorithm"], []).append(
            (float(r["x_value"]), max(float(r["nmse"]), 1e-16)))

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for i, (alg, points) in enumerate(series.items()):
        points.sort()
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.semilogy(xs, ys, marker=_MARKERS[i % len(_MARKERS)],
                    markevery=max(1, len(xs) // 20), label=alg)
    ax.set_xlabel("iteration" if spec.x_kind == "iteration" else "SNR (dB)")
    ax.set_ylabel(f"NMSE ({spec.stat})")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(spec.image_path, bbox_inches="tight")
    plt.close(fig)
    return spec.image_path


def cmd_run(args):
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.trials is not None:
        if args.trials < 1:
            print("error: --trials must be positive", file=sys.stderr)
            return 2
        config = with_trials(config, args.trials)
    workers = _resolve_workers(args.workers)
    if workers is None:
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        aggregates, trials = run_experiment(config, workers=workers)
    except TrialError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    trials_csv = out / "trials.csv"
    aggregates_csv = out / "aggregates.csv"
    write_trials_csv(trials_csv, trials)
    write_aggregates_csv(aggregates_csv, aggregates)
    written = [trials_csv, aggregates_csv]

    iteration_mode = any(a.x_kind == "iteration" for a in aggregates)
    snr_points = {a.x_value for a in aggregates
                  if a.x_kind == "snr_db" and a.x_value is not None}
    if iteration_mode:
        image = render_plot(PlotSpec(aggregates_csv,
                                     out / "nmse_vs_iteration.svg",
                                     "iteration"))
        if image:
            written.append(image)
    if len(snr_points) > 1:
        image = render_plot(PlotSpec(aggregates_csv,
                                     out / "nmse_vs_snr.svg", "snr_db"))
        if image:
            written.append(image)

    for path in written:
        print(path)
    return 0


def cmd_solve(args):
    if args.n < 1:
        print("error: --n must be positive", file=sys.stderr)
        return 2
    if args.m < args.n:
        print(f"error: need --m >= --n, got m={args.m}, n={args.n}",
              file=sys.stderr)
        return 2
    model = ObservationKind(args.model)
    snr_db = None if args.noise_free else args.snr_db
    try:
        options = SolverOptions(rho=args.rho)
        record, estimate, instance = run_single(
            model, args.algo, args.n, args.m, snr_db,
            trial_index=0, master_seed=args.seed, options=options)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(f"nmse={record.final_nmse:.9g}")
    print(f"iterations={record.iterations}")
    print(f"lad_objective={lad_objective(instance.ensemble, estimate, instance.observations):.9g}")
    print(f"termination={record.termination}")
    print(f"instance_digest={record.instance_digest}")
    return 0


def _resolve_workers(flag_value):
    """--workers beats ROBUST_PR_WORKERS beats 1; None signals a usage error."""
    if flag_value is not None:
        workers = flag_value
    else:
        raw = os.environ.get("ROBUST_PR_WORKERS", "1")
        try:
            workers = int(raw)
        except ValueError:
            print(f"error: ROBUST_PR_WORKERS={raw!r} is not an integer",
                  file=sys.stderr)
            return None
    if workers < 1:
        print("error: worker count must be positive", file=sys.stderr)
        return None
    return workers


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robustpr",
        description="Robust phase retrieval benchmarks and single solves.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser(
        "run", help="run a Monte Carlo experiment from a config file")
    run_p.add_argument("--config", required=True,
                       help="flat key = value experiment description")
    run_p.add_argument("--out", required=True,
                       help="output directory for CSVs and figures")
    run_p.add_argument("--trials", type=int, default=None,
                       help="override the config's trial count")
    run_p.add_argument("--workers", type=int, default=None,
                       help="parallel trial processes "
                            "(default: ROBUST_PR_WORKERS or 1)")
    run_p.set_defaults(func=cmd_run)

    solve_p = sub.add_parser(
        "solve", help="run one seeded trial and print the results")
    solve_p.add_argument("--model", required=True,
                         choices=["intensity", "amplitude"])
    solve_p.add_argument("--algo", required=True,
                         choices=["wf", "gs", "lad-admm"])
    solve_p.add_argument("--n", type=int, required=True, help="signal length")
    solve_p.add_argument("--m", type=int, required=True,
                         help="number of measurements")
    noise = solve_p.add_mutually_exclusive_group(required=True)
    noise.add_argument("--snr-db", type=float,
                       help="mixture noise calibrated to this SNR")
    noise.add_argument("--noise-free", action="store_true")
    solve_p.add_argument("--seed", type=int, default=0)
    solve_p.add_argument("--rho", type=float, default=1.0,
                         help="ADMM penalty parameter")
    solve_p.set_defaults(func=cmd_solve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
