"""Command-line front end.

Subcommands: ``eval``, ``solve``, ``oracle``, ``sweep``, ``simulate`` and
``validate-codebook``. Each reads a scenario file (``--spec``) plus
``--override key=value`` pairs and writes one CSV table with a commented
metadata header to ``--out`` or stdout.

Exit status: 0 success, 2 infeasible or negative verdict, 64 usage
error, 70 internal error.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, linkmodel, metrics, solver
from .errors import DomainError, InfeasibleError
from .scenario import (
    LINK_KEYS,
    SCHEMA,
    THRESHOLD_KEYS,
    ResultTable,
    ScenarioSpec,
    UsageError,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70

log = logging.getLogger("pld")

POINT_INPUTS = LINK_KEYS + ("payload.d_m", "payload.d_k") + THRESHOLD_KEYS
ALLOC_INPUTS = ("alloc.n_m", "alloc.n_k")
SOLVER_INPUTS = tuple(k for k in SCHEMA if k.startswith("solver."))
METRIC_COLUMNS = ("eps_bob_m", "eps_bob_k", "eps_eve_m", "eps_eve_k",
                  "eps_lf", "r_d", "throughput")
SLACK_NAMES = ("eps_bob_m", "eps_eve_m", "eps_bob_k", "eps_eve_k", "throughput")


@dataclass
class CommandResult:
    table: ResultTable
    exit_code: int = EXIT_OK
    extra: dict = field(default_factory=dict)  # suffix -> ResultTable


def _meta(spec, command, **extra):
    return {"command": command, "config_hash": spec.config_hash(), **extra}


def _inputs(spec, keys):
    return {k: spec.get(k) for k in keys}


def _usage(fn, *args):
    """Call ``fn`` and report domain errors as usage errors."""
    try:
        return fn(*args)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _metric_row(profile, alloc, thresholds):
    verdict = metrics.check_feasible(profile, alloc, thresholds)
    row = dict(profile.as_dict())
    row["raw_packet_rate"] = alloc.d_m / alloc.total_length
    row["feasible"] = verdict.feasible
    for name in SLACK_NAMES:
        row[f"slack_{name}"] = verdict.slack.get(name)
    return row


EVAL_COLUMNS = list(POINT_INPUTS + ALLOC_INPUTS + METRIC_COLUMNS) + [
    "raw_packet_rate", "feasible"] + [f"slack_{n}" for n in SLACK_NAMES]


def cmd_eval(spec):
    link, thresholds, alloc = spec.link(), spec.thresholds(), spec.allocation()
    profile = metrics.evaluate(link, alloc)
    table = ResultTable(EVAL_COLUMNS, meta=_meta(spec, "eval"))
    row = _inputs(spec, POINT_INPUTS)
    row["alloc.n_m"], row["alloc.n_k"] = alloc.n_m, alloc.n_k
    row.update(_metric_row(profile, alloc, thresholds))
    table.add(row)
    return CommandResult(table)


SOLVE_COLUMNS = list(POINT_INPUTS + SOLVER_INPUTS) + [
    "status", "alloc.n_m", "alloc.n_k", "n_m_continuous", "n_k_continuous",
    *METRIC_COLUMNS, "raw_packet_rate", "feasible",
    "mm_iterations", "bcd_iterations", "fp_iterations", "oracle_gap",
]
TRACE_COLUMNS = ["layer", "mm", "bcd", "index", "n_m", "n_k", "y", "surrogate", "r_d"]


def _solve_payload(spec):
    d_m, d_k = spec.get("payload.d_m"), spec.get("payload.d_k")
    if d_k < 1:
        raise UsageError("payload.d_k must be >= 1 for solve; d_k = 0 is the baseline")
    return d_m, d_k


def _solve_row(spec, result):
    row = _inputs(spec, POINT_INPUTS + SOLVER_INPUTS)
    row["status"] = result.status
    cont = result.continuous or (None, None)
    row["n_m_continuous"], row["n_k_continuous"] = cont
    if result.feasible:
        row["alloc.n_m"], row["alloc.n_k"] = result.n_m_opt, result.n_k_opt
        row.update(result.profile.as_dict())
        row["raw_packet_rate"] = spec.get("payload.d_m") / (result.n_m_opt + result.n_k_opt)
    else:
        row["alloc.n_m"] = row["alloc.n_k"] = row["raw_packet_rate"] = None
        row.update(dict.fromkeys(METRIC_COLUMNS))
    row["feasible"] = result.feasible
    row["mm_iterations"] = max((r.index for r in result.trace.layer("MM")), default=0)
    row["bcd_iterations"] = len(result.trace.layer("BCD"))
    row["fp_iterations"] = len(result.trace.layer("FP"))
    row["oracle_gap"] = result.oracle_gap
    return row


def cmd_solve(spec, oracle=False):
    link, thresholds, config = spec.link(), spec.thresholds(), spec.solver_config()
    d_m, d_k = _solve_payload(spec)
    result = solver.solve(link, d_m, d_k, thresholds, config, oracle=oracle)
    table = ResultTable(SOLVE_COLUMNS, meta=_meta(spec, "solve", status=result.status))
    table.add(_solve_row(spec, result))
    trace = ResultTable(TRACE_COLUMNS, meta=_meta(spec, "solve-trace"))
    for rec in result.trace:
        trace.add({"layer": rec.layer, "mm": rec.mm, "bcd": rec.bcd, "index": rec.index,
                   "n_m": rec.n_m, "n_k": rec.n_k, "y": rec.y,
                   "surrogate": rec.surrogate, "r_d": rec.r_d})
    code = EXIT_OK if result.feasible else EXIT_INFEASIBLE
    return CommandResult(table, code, {"trace": trace})


ORACLE_COLUMNS = list(POINT_INPUTS) + ["alloc.n_m", "alloc.n_k", *solver.SURFACE_COLUMNS[2:]]


def cmd_oracle(spec):
    link, thresholds = spec.link(), spec.thresholds()
    box = (spec.get("solver.n_min"), spec.get("solver.n_max"))
    ref = _usage(solver.grid_oracle, link, spec.get("payload.d_m"), spec.get("payload.d_k"),
                 thresholds, box)
    argmax = "none" if ref.empty else f"{ref.argmax[0]} {ref.argmax[1]}"
    table = ResultTable(ORACLE_COLUMNS,
                        meta=_meta(spec, "oracle", argmax=argmax, r_d_max=repr(ref.r_d)))
    inputs = _inputs(spec, POINT_INPUTS)
    names = ("alloc.n_m", "alloc.n_k") + solver.SURFACE_COLUMNS[2:]
    for values in ref.surface:
        row = dict(inputs)
        row.update(zip(names, values))
        table.add(row)
    return CommandResult(table)


BASE_COLUMNS = ("base_status", "base_n_m", "base_eps_bob_m", "base_eps_eve_m",
                "base_eps_lf", "base_throughput")


def _sweep_point(values):
    spec = ScenarioSpec(values)
    link, thresholds, config = spec.link(), spec.thresholds(), spec.solver_config()
    d_m, d_k = _solve_payload(spec)
    row = _solve_row(spec, solver.solve(link, d_m, d_k, thresholds, config))
    base = solver.baseline_pls(link, d_m, thresholds, config)
    row["base_status"] = base.status
    if base.feasible:
        p = base.profile
        row.update(base_n_m=base.n_m_opt, base_eps_bob_m=p.eps_bob_m,
                   base_eps_eve_m=p.eps_eve_m, base_eps_lf=p.eps_lf,
                   base_throughput=p.throughput)
    else:
        row.update(dict.fromkeys(BASE_COLUMNS[1:]))
    if row["eps_lf"] is not None and row["base_eps_lf"] is not None:
        row["eps_lf_gap"] = row["eps_lf"] - row["base_eps_lf"]
    else:
        row["eps_lf_gap"] = None
    return row


def cmd_sweep(spec, jobs=1):
    axes = spec.axes()
    names = [a.name for a in axes]
    if len(set(names)) != len(names):
        raise UsageError("sweep axes must name different parameters")
    _solve_payload(spec)
    points = []
    for combo in itertools.product(*(a.values() for a in axes)):
        point = spec.updated({n: repr(v) for n, v in zip(names, combo)})
        point.link(), point.thresholds(), point.solver_config()  # validate up front
        _solve_payload(point)
        points.append(point.values)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_sweep_point, points))
    else:
        rows = [_sweep_point(p) for p in points]
    axis_meta = "; ".join(f"{a.name}:{a.start!r}:{a.stop!r}:{a.step!r}" for a in axes)
    table = ResultTable(SOLVE_COLUMNS + list(BASE_COLUMNS) + ["eps_lf_gap"],
                        meta=_meta(spec, "sweep", axes=axis_meta))
    for row in rows:
        table.add(row)
    return CommandResult(table)


SIM_COLUMNS = list(POINT_INPUTS + ALLOC_INPUTS) + [
    "seed", "sim.trials", "r_d", "eps_lf", "r_d_empirical", "r_d_halfwidth",
    "eps_lf_empirical", "eps_lf_halfwidth", "r_d_agree", "eps_lf_agree", "agree",
    "bob_perception", "bob_loss", "bob_deception",
    "eve_perception", "eve_loss", "eve_deception",
    "leakage_failure", "effective_deception",
]


def cmd_simulate(spec, workers=1):
    link, alloc = spec.link(), spec.allocation()
    trials, seed = spec.get("sim.trials"), spec.get("seed")
    if trials < 1:
        raise UsageError("sim.trials must be >= 1")
    if seed < 0:
        raise UsageError("seed must be >= 0")
    profile = metrics.evaluate(link, alloc)
    counts = linkmodel.simulate_outcomes(profile, trials, seed, workers=workers)
    emp = linkmodel.empirical_metrics(counts)
    row = _inputs(spec, POINT_INPUTS + ALLOC_INPUTS)
    row["seed"], row["sim.trials"] = seed, trials
    row["r_d"], row["eps_lf"] = profile.r_d, profile.eps_lf
    row["r_d_empirical"], row["r_d_halfwidth"] = emp.r_d, emp.r_d_halfwidth
    row["eps_lf_empirical"], row["eps_lf_halfwidth"] = emp.eps_lf, emp.eps_lf_halfwidth
    row["r_d_agree"] = abs(emp.r_d - profile.r_d) <= emp.r_d_halfwidth
    row["eps_lf_agree"] = abs(emp.eps_lf - profile.eps_lf) <= emp.eps_lf_halfwidth
    row["agree"] = row["r_d_agree"] and row["eps_lf_agree"]
    row.update({k: v for k, v in counts.as_row().items() if k != "trials"})
    table = ResultTable(SIM_COLUMNS, meta=_meta(spec, "simulate"))
    table.add(row)
    return CommandResult(table)


CODEBOOK_INPUTS = ("codebook.d", "codebook.key_bits", "codebook.repetition",
                   "codebook.d_max", "codebook.litter_count", "codebook.extra_litter", "seed")
CODEBOOK_COLUMNS = list(CODEBOOK_INPUTS) + ["check", "valid", "method", "reason", "witness", "detail"]


def _witness(w):
    return "" if w is None else " ".join(str(x) for x in w)


def _parse_words(text):
    try:
        return [int(t, 0) for t in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"codebook.extra_litter: cannot read {text!r} as integers") from None


def cmd_validate_codebook(spec):
    d = spec.get("codebook.d")
    if not 1 <= d <= 16:
        raise UsageError("codebook.d must lie in [1, 16]")
    code = _usage(linkmodel.RepetitionCode, spec.get("codebook.key_bits"),
                  spec.get("codebook.repetition"))
    d_max = spec.get("codebook.d_max")
    d_max = code.d_max if d_max < 0 else d_max
    inputs = _inputs(spec, CODEBOOK_INPUTS)
    inputs["codebook.d_max"] = d_max
    table = ResultTable(CODEBOOK_COLUMNS, meta=_meta(spec, "validate-codebook"))

    def add(check, verdict, detail=""):
        row = dict(inputs)
        row.update(check=check, valid=verdict.valid, method=verdict.method,
                   reason=verdict.reason, witness=_witness(verdict.witness), detail=detail)
        table.add(row)

    add("cipher", linkmodel.validate_codebook(linkmodel.ToyCodebook.xor_book(d),
                                              seed=spec.get("seed")))
    if d <= linkmodel.EXHAUSTIVE_MAX_BITS:
        enumerated = linkmodel.ToyCodebook(d, d, d, xor=False)
        add("cipher_enumerated", linkmodel.validate_codebook(enumerated))

    keys = range(1 << code.key_bits)
    litter = _usage(linkmodel.generate_litter, keys, code, d_max,
                    spec.get("codebook.litter_count"), spec.get("seed"))
    extra = _parse_words(spec.get("codebook.extra_litter"))
    for w in extra:
        if not 0 <= w < (1 << code.length):
            raise UsageError(f"codebook.extra_litter: {w} is not a {code.length}-bit word")
    litter = linkmodel.LitterSet(litter.codewords, litter.length, d_max, litter.words + tuple(extra))
    bad = linkmodel.check_litter(litter)
    detail = " ".join(str(w) for w in litter.words)
    if bad is None:
        add("litter", linkmodel.Verdict(True, "", None, "exhaustive"), detail)
    else:
        key = {c: k for k, c in zip(keys, litter.codewords)}[bad[0]]
        add("litter", linkmodel.Verdict(
            False, f"litter word within distance {d_max} of a key codeword",
            (key, bad[1]), "exhaustive"), detail)
    code_out = EXIT_OK if all(table.column("valid")) else EXIT_INFEASIBLE
    return CommandResult(table, code_out)


# -- argument handling -----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="pld", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"pld {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", type=Path, help="scenario file (key = value lines)")
    common.add_argument("--out", type=Path, help="output CSV path (default: stdout)")
    common.add_argument("--seed", type=int, help="RNG seed, overrides 'seed'")
    common.add_argument("--trials", type=int, help="Monte-Carlo trials, overrides 'sim.trials'")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set a scenario key; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("eval", parents=[common], help="evaluate one allocation")
    p = sub.add_parser("solve", parents=[common], help="optimize the blocklengths")
    p.add_argument("--trace", type=Path, help="trace CSV path (default: <out>.trace.csv)")
    p.add_argument("--oracle", action="store_true", help="also report the gap to the grid oracle")
    sub.add_parser("oracle", parents=[common], help="exhaustive surface over the integer box")
    p = sub.add_parser("sweep", parents=[common], help="solve and baseline along one or two axes")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo check of the analytic metrics")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    sub.add_parser("validate-codebook", parents=[common], help="cipher and litter checks")
    return parser


def load_spec(args):
    spec = ScenarioSpec.from_file(args.spec) if args.spec else ScenarioSpec()
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.trials is not None:
        overrides.append(f"sim.trials={args.trials}")
    return spec.with_overrides(overrides)


def run(args):
    spec = load_spec(args)
    if args.command == "eval":
        return cmd_eval(spec)
    if args.command == "solve":
        return cmd_solve(spec, oracle=args.oracle)
    if args.command == "oracle":
        return cmd_oracle(spec)
    if args.command == "sweep":
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return cmd_sweep(spec, jobs=args.jobs)
    if args.command == "simulate":
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return cmd_simulate(spec, workers=args.jobs)
    return cmd_validate_codebook(spec)


def _trace_path(args):
    if getattr(args, "trace", None):
        return args.trace
    if args.out:
        return args.out.with_name(args.out.stem + ".trace.csv")
    return None


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(args)
        if args.out:
            result.table.write(args.out)
        else:
            sys.stdout.write(result.table.to_text())
        trace = result.extra.get("trace")
        path = _trace_path(args)
        if trace is not None and path is not None:
            trace.write(path)
    except (UsageError, OSError) as exc:
        print(f"pld: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"pld: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
