"""Command-line interface: ``analyze``, ``curves``, ``simulate`` and ``verify``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 budget/resource error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .cdf_model import avg_cdf, avg_cdf_sd, avg_cdf_su
from .io import INPUT_KINDS, DataError, fmt, read_dataset, write_table
from .procedures import critical_values, procedure_direction
from .simstudy import POWER_PROCEDURES, Scenario, run_scenario
from .stepwise import step
from .verify import (
    DEFAULT_BUDGET,
    BudgetExceeded,
    GroundTruth,
    bound_components,
    exact_fdr,
    monte_carlo_fdr,
    simplified_bounds_sd,
    simplified_bounds_su,
)

log = logging.getLogger("discretefdr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3

DEFAULT_ANALYZE = ("BH", "Heyse", "DBH-SU", "DBH-SD", "A-DBH-SU", "A-DBH-SD")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _alpha(text):
    val = float(text)
    if not 0.0 <= val < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1), got {text}")
    return val


def _procedures(text):
    tags = [t.strip() for t in text.split(",") if t.strip()]
    if not tags:
        raise argparse.ArgumentTypeError("at least one procedure is required")
    for tag in tags:
        try:
            procedure_direction(tag)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return tags


def _positive(text):
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="discretefdr", description="FDR procedures for discrete tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, procs):
        p.add_argument("input", type=Path)
        p.add_argument("--kind", choices=INPUT_KINDS, default="pvalue-support-bundle")
        p.add_argument("--sided", choices=("one-sided", "two-sided"), default="two-sided")
        p.add_argument("--alpha", type=_alpha, default=0.05)
        p.add_argument("--procedures", type=_procedures, default=list(procs))
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("analyze", help="run procedures on a data set")
    common(p, DEFAULT_ANALYZE)
    p.add_argument("--output-dir", type=Path, default=None, help="write rejections and critical values here")

    p = sub.add_parser("curves", help="averaged null c.d.f. curves over the merged support")
    common(p, ())
    p.add_argument("--output", default="-")

    p = sub.add_parser("simulate", help="power simulation from a scenario file (JSON)")
    p.add_argument("scenarios", type=Path)
    p.add_argument("--procedures", type=_procedures, default=list(POWER_PROCEDURES))
    p.add_argument("--trials", type=_positive, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=_positive, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", default="-")

    p = sub.add_parser("verify", help="FDR bounds and exact / Monte Carlo FDR for an instance")
    common(p, ("DBH-SU", "DBH-SD", "A-DBH-SU", "A-DBH-SD"))
    p.add_argument("--budget", type=_positive, default=DEFAULT_BUDGET)
    p.add_argument("--trials", type=int, default=0, help="Monte Carlo trials (0 disables)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive, default=1)
    p.add_argument("--output", default="-")
    return parser


def cmd_analyze(args) -> int:
    data = read_dataset(args.input, args.kind, args.sided)
    summary, taus_rows = [], []
    for tag in args.procedures:
        cv = critical_values(tag, data.family, args.alpha)
        res = step(data.pvalues, cv)
        summary.append(
            {
                "procedure": tag,
                "direction": cv.direction,
                "alpha": args.alpha,
                "rejections": res.count,
                "threshold": res.threshold,
                "rejected_ids": ";".join(data.ids[i] for i in res.rejected),
            }
        )
        taus_rows.extend({"procedure": tag, "k": k, "tau": t} for k, t in enumerate(cv.taus.tolist(), start=1))
    width = max(len(r["procedure"]) for r in summary)
    for r in summary:
        print(f"{r['procedure']:<{width}}  {r['rejections']:>6d}  threshold={fmt(r['threshold'])}")
    if args.output_dir is not None:
        args.output_dir.mkdir(parents=True, exist_ok=True)
        ext = args.format
        write_table(summary, args.output_dir / f"rejections.{ext}", args.format)
        write_table(taus_rows, args.output_dir / f"critical_values.{ext}", args.format)
    return EXIT_OK


def cmd_curves(args) -> int:
    data = read_dataset(args.input, args.kind, args.sided)
    fam = data.family
    pts = fam.merged_support
    tau_m = float(critical_values("DBH-SD", fam, args.alpha).taus[-1])
    fbar = avg_cdf(fam, pts)
    fsu = avg_cdf_su(fam, pts, tau_m)
    fsd = avg_cdf_sd(fam, pts)
    rows = [
        {"t": float(t), "F_bar": float(a), "F_bar_su": float(b), "F_bar_sd": float(c), "uniform": float(t)}
        for t, a, b, c in zip(pts, fbar, fsu, fsd)
    ]
    log.info("tau_m = %s", fmt(tau_m))
    write_table(rows, args.output, args.format)
    return EXIT_OK


def _load_scenarios(path: Path) -> list[dict]:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    items = raw if isinstance(raw, list) else [raw]
    if not items or not all(isinstance(x, dict) for x in items):
        raise DataError(f"{path}: expected a scenario object or a list of them")
    return items


def cmd_simulate(args) -> int:
    rows = []
    for item in _load_scenarios(args.scenarios):
        if args.trials is not None:
            item["trials"] = args.trials
        if args.seed is not None:
            item["seed"] = args.seed
        try:
            scenario = Scenario(**item)
        except (TypeError, ValueError) as exc:
            raise DataError(f"bad scenario {item}: {exc}") from exc
        log.info("running %s", scenario)
        rows.extend(run_scenario(scenario, args.procedures, workers=args.threads).rows())
    write_table(rows, args.output, args.format)
    return EXIT_OK


def cmd_verify(args) -> int:
    data = read_dataset(args.input, args.kind, args.sided)
    fam, truth = data.family, data.truth
    if truth is None:
        truth = GroundTruth.all_null(fam.m)
    rows = []
    for tag in args.procedures:
        cv = critical_values(tag, fam, args.alpha)
        first, second = bound_components(fam, cv, cv.direction)
        simple = simplified_bounds_su(cv, fam) if cv.direction == "step-up" else simplified_bounds_sd(cv, fam)
        exact = exact_fdr(truth, fam, cv, budget=args.budget, workers=args.threads)
        row = {
            "procedure": tag,
            "direction": cv.direction,
            "alpha": args.alpha,
            "bound": min(first, second),
            "bound_first": first,
            "bound_adaptive": second,
            "bound_averaged": simple.averaged,
            "exact_fdr": exact.value,
        }
        if args.trials > 0:
            mc = monte_carlo_fdr(truth, fam, cv, trials=args.trials, seed=args.seed, workers=args.threads)
            row["mc_fdr"] = mc.value
            row["mc_standard_error"] = mc.standard_error
        rows.append(row)
    write_table(rows, args.output, args.format)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "curves": cmd_curves, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return EXIT_BUDGET
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
