"""``zeroblock`` command line: simulate, analytics and chain utilities.

Exit status is 0 on success, 1 for invalid input (bad scenario, malformed
or invalid chain file) and 2 for runtime failures.
"""

import argparse
import csv
from concurrent.futures import ProcessPoolExecutor
import io
import logging
import os
from pathlib import Path
import statistics
import sys

from . import analytics, churn
from .chain import ChainFormatError, chain_problem, compact, dumps_chain, loads_chain
from .mining import SIM_TARGET, Target
from .scenario import ScenarioError, bundled_path, bundled_scenarios, load_scenario
from .simnet import run

log = logging.getLogger("zeroblock")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

AGGREGATE_COLUMNS = ["miner", "role", "hash_power", "runs", "share_mean", "share_stddev",
                     "fork_rate_mean", "fork_rate_stddev"]


class InvalidInput(Exception):
    pass


def _g(x) -> str:
    return f"{float(x):.6g}"


# --- simulate ---------------------------------------------------------------

def _resolve_scenario(arg: str):
    p = Path(arg)
    if p.exists():
        return p
    name = arg if arg.endswith(".cfg") else arg + ".cfg"
    if name in bundled_scenarios():
        return bundled_path(name)
    return p


def simulate_one(config):
    """Run one repetition; returns (trace text, report)."""
    trace = run(config)
    return trace.dumps(), analytics.revenue_shares(trace)


def _stdev(xs):
    return statistics.stdev(xs) if len(xs) > 1 else 0.0


def aggregate_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    n = len(reports)
    for pos, m in enumerate(reports[0].miners):
        shares = [r.miners[pos].share for r in reports]
        w.writerow([m.miner, m.role, f"{m.hash_power:.6g}", n, f"{statistics.fmean(shares):.6f}",
                    f"{_stdev(shares):.6f}", "", ""])
    rates = [r.fork_rate for r in reports]
    totals = [sum(m.share for m in r.miners) for r in reports]
    w.writerow(["TOTAL", "", f"{sum(m.hash_power for m in reports[0].miners):.6g}", n,
                f"{statistics.fmean(totals):.6f}", "", f"{statistics.fmean(rates):.6f}",
                f"{_stdev(rates):.6f}"])
    return buf.getvalue()


def cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(_resolve_scenario(args.scenario))
        scenario = scenario.with_overrides(seed=args.seed, reps=args.reps, blocks=args.blocks)
    except OSError as exc:
        raise InvalidInput(f"cannot read scenario: {exc}") from None
    except ScenarioError as exc:
        raise InvalidInput(str(exc)) from None
    out = Path(args.out)
    configs = [scenario.run_config(i) for i in range(scenario.reps)]
    log.info("scenario %s: %d repetition(s), seeds from %d", scenario.name, scenario.reps,
             scenario.config.seed)
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(simulate_one, configs))
    else:
        results = [simulate_one(c) for c in configs]
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for i, (trace_text, report) in enumerate(results):
        (out / f"trace-{i:03d}.csv").write_text(trace_text)
        (out / f"report-{i:03d}.csv").write_text(analytics.report_csv(report))
        reports.append(report)
    (out / "aggregate.csv").write_text(aggregate_csv(reports))
    for m in reports[0].miners:
        mean = statistics.fmean(r.share_of(m.miner) for r in reports)
        print(f"{m.miner},{m.role},{m.hash_power:.6g},{mean:.6f}")
    return EXIT_OK


# --- analytics ----------------------------------------------------------------

def _params(args) -> churn.ChurnParams:
    try:
        return churn.ChurnParams(args.n, args.sigma, args.eta, args.psi)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from None


def _parse_row(text: str) -> churn.ChurnParams:
    try:
        n, sigma, eta, psi = (int(x) for x in text.split(","))
        return churn.ChurnParams(n, sigma, eta, psi)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected n,sigma,eta,psi: {exc}") from None


def churn_table_csv(extra=()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "sigma", "eta", "eta_pct", "psi", "psi_pct", "p_majority"])
    for p, prob in churn.table_rows(extra):
        w.writerow([p.n, p.sigma, p.eta, _g(100 * p.eta / p.n), p.psi, _g(100 * p.psi / p.n),
                    _g(prob)])
    return buf.getvalue()


def cmd_analytics(args) -> int:
    try:
        if args.formula == "threshold":
            print(_g(analytics.selfish_threshold_lower(args.gamma)))
        elif args.formula == "poisson":
            print(_g(analytics.poisson_pmf(args.rho, args.lam)))
        elif args.formula == "event4":
            print(_g(analytics.event4_max_probability(args.sp)))
            if args.compare:
                print(f"pattern,{_g(analytics.event4_exact_pattern(args.sp))}")
                mc = analytics.event4_monte_carlo(args.sp, args.trials, args.seed)
                print(f"monte_carlo,{_g(mc)}")
        elif args.formula == "churn-table":
            sys.stdout.write(churn_table_csv(args.row or ()))
        elif args.formula == "retry":
            print(_g(churn.retry_success_probability(_params(args), args.m)))
    except ValueError as exc:
        raise InvalidInput(str(exc)) from None
    return EXIT_OK


# --- chain --------------------------------------------------------------------

def _target(text: str) -> Target:
    value, _, width = text.partition("/")
    try:
        return Target(int(value), int(width or 256))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load_chain(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInput(f"cannot read chain file: {exc}") from None
    try:
        return loads_chain(text)
    except ChainFormatError as exc:
        raise InvalidInput(f"{path}:{exc.lineno}: {exc.args[0].split(': ', 1)[1]}") from None


def cmd_chain(args) -> int:
    chain = _load_chain(args.file)
    if args.action == "validate":
        problem = chain_problem(chain, args.target)
        if problem is not None:
            pos, reason = problem
            print(f"{args.file}:{pos + 1}: invalid: {reason.value}", file=sys.stderr)
            return EXIT_INVALID
        print(f"valid: {chain.length} blocks, standard height {chain.standard_height}")
        return EXIT_OK
    text = dumps_chain(compact(chain))
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zeroblock", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write trace/report CSVs")
    sim.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    sim.add_argument("--out", default=".", help="output directory")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.add_argument("--reps", type=int, help="override the number of repetitions")
    sim.add_argument("--blocks", type=int, help="override the block horizon")
    sim.add_argument("--format", choices=["csv"], default="csv")
    sim.add_argument("--jobs", type=int, default=1, help="repetitions to run in parallel")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analytics", help="evaluate closed-form probabilities")
    forms = ana.add_subparsers(dest="formula", required=True)
    f = forms.add_parser("threshold", help="lowest profitable withholding share")
    f.add_argument("--gamma", type=float, required=True)
    f = forms.add_parser("poisson", help="Poisson probability of rho discoveries")
    f.add_argument("--rho", type=int, required=True)
    f.add_argument("--lambda", dest="lam", type=float, default=1.0)
    f = forms.add_parser("event4", help="selfish-then-honest discovery bound")
    f.add_argument("--sp", type=float, required=True)
    f.add_argument("--compare", action="store_true", help="also print exact and Monte Carlo values")
    f.add_argument("--trials", type=int, default=200_000)
    f.add_argument("--seed", type=int, default=0)
    f = forms.add_parser("churn-table", help="majority join probabilities as CSV")
    f.add_argument("--row", type=_parse_row, action="append", metavar="N,SIGMA,ETA,PSI")
    f = forms.add_parser("retry", help="probability of m failed joins then an honest one")
    for name in ("n", "sigma", "eta", "psi", "m"):
        f.add_argument(f"--{name}", type=int, required=True)
    ana.set_defaults(func=cmd_analytics)

    ch = sub.add_parser("chain", help="validate or compact a chain file")
    ch.add_argument("action", choices=["validate", "compact"])
    ch.add_argument("file")
    ch.add_argument("-o", "--output", help="compact: write here instead of stdout")
    ch.add_argument("--target", type=_target, default=SIM_TARGET,
                    help="PoW target as VALUE[/WIDTH] (default: the simulator target)")
    ch.set_defaults(func=cmd_chain)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("ZEROBLOCK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"zeroblock: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - report, don't traceback
        log.debug("runtime failure", exc_info=True)
        print(f"zeroblock: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
