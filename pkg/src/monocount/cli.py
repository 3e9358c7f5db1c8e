"""Command line: ``monocount estimate | trace | simulate``.

Exit codes
    0   trace test Complete (estimate, trace); report written (simulate)
    1   usage error (bad flags, missing input file)
    2   trace test Incomplete
    3   loop budget exhausted before the stopping policy fired
    4   witness set could not be built or transported
    64  system or registry file does not parse
    65  no valid seed solution
    70  internal error
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .census import EstimatorKind
from .monodromy import (FabricateLinearInParams, ResidualError, SeedError, SolutionRegistry,
                        UserSupplied, loop_rng, seed_solution)
from .pipeline import (ROW_FIELDS, TRACE_STREAM, EstimateConfig, ReportRow, RunOutcome, StopReason,
                       run_estimate, start_registry)
from .polysys import ParameterizedSystem, SystemFormatError, parse_system
from .popsim import SimConfig, coverage_experiment
from .tracetest import WitnessError, build_slice, run_trace_test
from .tracker import TrackOptions

log = logging.getLogger("monocount")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INCOMPLETE = 2
EXIT_ABORT = 3
EXIT_WITNESS = 4
EXIT_PARSE = 64
EXIT_SEED = 65
EXIT_INTERNAL = 70


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which here means Incomplete
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- value formatting ------------------------------------------------------------

def format_value(v) -> str:
    if v is None:
        return "Undefined"
    if isinstance(v, float):
        if math.isinf(v):
            return "Unbounded"
        return repr(v)
    return str(v)


def json_value(v):
    if v is None:
        return "Undefined"
    if isinstance(v, float) and math.isinf(v):
        return "Unbounded"
    return v


def _complex_list(values, what) -> np.ndarray:
    out = []
    for z in values:
        if isinstance(z, (int, float)) and not isinstance(z, bool):
            out.append(complex(z))
        elif isinstance(z, list) and len(z) == 2:
            out.append(complex(z[0], z[1]))
        else:
            raise UsageError(f"{what}: expected numbers or [re, im] pairs")
    return np.array(out, dtype=complex)


def _load_json_arg(value: str, what: str):
    """A flag value that is either a path to a JSON file or inline JSON."""
    path = Path(value)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    elif value.lstrip().startswith(("{", "[")):
        text = value
    else:
        raise UsageError(f"{what}: no such file {value!r}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: invalid JSON ({exc.msg})")


def _read_system(path: str) -> ParameterizedSystem:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"system file not found: {path}")
    return parse_system(p.read_bytes())


def _read_registry(path: str, system: ParameterizedSystem) -> SolutionRegistry:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"registry file not found: {path}")
    try:
        return SolutionRegistry.from_json(system, p.read_text(encoding="utf-8"))
    except (KeyError, TypeError, ValueError) as exc:
        raise SystemFormatError(f"registry {path}: {exc}")


# --- report writers --------------------------------------------------------------

class ReportWriter:
    """Writes one row per loop as soon as it is available."""

    def __init__(self, path: Path, fmt: str):
        self.path = path
        self.fmt = fmt
        self.rows: List[dict] = []
        if fmt == "csv":
            self._fh = open(path, "w", encoding="utf-8", newline="")
            self._csv = csv.writer(self._fh, lineterminator="\n")
            self._csv.writerow(ROW_FIELDS)
            self._fh.flush()
        else:
            self._dump(None)

    def _dump(self, footer):
        doc = {"rows": self.rows, "footer": footer}
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, self.path)

    def add(self, row: ReportRow):
        d = row.as_dict()
        self.rows.append({k: json_value(d[k]) for k in ROW_FIELDS})
        if self.fmt == "csv":
            self._csv.writerow([format_value(d[k]) for k in ROW_FIELDS])
            self._fh.flush()
        else:
            self._dump(None)

    def finish(self, footer: dict):
        if self.fmt == "csv":
            for k, v in footer.items():
                self._fh.write(f"# {k},{format_value(v)}\n")
            self._fh.close()
        else:
            self._dump({k: json_value(v) for k, v in footer.items()})


def _footer(outcome: RunOutcome) -> dict:
    cert = outcome.certificate
    return {
        "stop_reason": outcome.stop_reason.value,
        "trace_verdict": cert.verdict.value if cert else ("Error" if outcome.trace_error else "NotRun"),
        "trace_residual": cert.residual if cert else None,
        "registry_size": len(outcome.registry),
        "loops": len(outcome.rows),
    }


# --- subcommands -----------------------------------------------------------------

def _track_options(args) -> TrackOptions:
    return TrackOptions(step_initial=args.step_initial, step_min=args.step_min,
                        corrector_tol=args.corrector_tol, endpoint_tol=args.endpoint_tol,
                        max_steps=args.max_steps)


def _seed(args, system: ParameterizedSystem) -> SolutionRegistry:
    if args.registry:
        reg = _read_registry(args.registry, system)
        if not len(reg):
            raise SeedError("registry file holds no solutions")
        return reg
    strategy = args.seed_strategy or ("user" if args.seed_solution else "fabricate")
    if strategy == "user":
        if not args.seed_solution:
            raise UsageError("--seed-strategy user needs --seed-solution")
        doc = _load_json_arg(args.seed_solution, "--seed-solution")
        if not isinstance(doc, dict) or "x" not in doc or "p" not in doc:
            raise UsageError("--seed-solution must hold an object with keys 'x' and 'p'")
        x = _complex_list(doc["x"], "--seed-solution x")
        p = _complex_list(doc["p"], "--seed-solution p")
        x, p = seed_solution(system, UserSupplied(x, p))
    else:
        rng = loop_rng(args.rng_seed, TRACE_STREAM + 1)
        x, p = seed_solution(system, FabricateLinearInParams(rng))
    try:
        return start_registry(system, x, p, args.dedup_tol)
    except ResidualError as exc:
        raise SeedError(str(exc))


def cmd_estimate(args) -> int:
    system = _read_system(args.system)
    registry = _seed(args, system)
    cfg = EstimateConfig(max_loops=args.max_loops, stop_after_no_new=args.stop_after_no_new,
                         window=args.window, rng_seed=args.rng_seed, scale=args.scale,
                         tau=args.tau, trace_tol=args.trace_tol,
                         trace_loop_budget=args.trace_loop_budget, dedup_tol=args.dedup_tol,
                         threads=args.threads, track=_track_options(args))
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    writer = ReportWriter(Path(f"{prefix}.report.{args.format}"), args.format)
    outcome = run_estimate(system, registry, cfg, on_row=writer.add)
    writer.finish(_footer(outcome))
    Path(f"{prefix}.registry.json").write_text(registry.to_json(indent=2) + "\n", encoding="utf-8")
    if outcome.certificate is not None:
        Path(f"{prefix}.certificate.json").write_text(outcome.certificate.to_json() + "\n",
                                                     encoding="utf-8")
    cert = outcome.certificate
    print(f"loops={len(outcome.rows)} registry={len(registry)} stop={outcome.stop_reason.value} "
          f"verdict={cert.verdict.value if cert else 'NotRun'} runtime={outcome.runtime:.2f}s",
          file=sys.stderr)
    if outcome.stop_reason is StopReason.MAX_LOOPS:
        return EXIT_ABORT
    if outcome.trace_error is not None:
        return EXIT_WITNESS
    return EXIT_OK if cert.complete else EXIT_INCOMPLETE


def cmd_trace(args) -> int:
    if not args.registry:
        raise UsageError("--registry is required")
    system = _read_system(args.system)
    registry = _read_registry(args.registry, system)
    if not len(registry):
        raise UsageError("registry file holds no solutions")
    rng = loop_rng(args.rng_seed, TRACE_STREAM)
    ss = None
    if args.slice:
        doc = _load_json_arg(args.slice, "--slice")
        ss = build_slice(system, registry.base, rng,
                         direction=_complex_list(doc["direction"], "direction") if "direction" in doc else None,
                         lambda_coeffs=_complex_list(doc["lambda"], "lambda") if "lambda" in doc else None,
                         lambda_const=_complex_list([doc["lambda_const"]], "lambda_const")[0]
                         if "lambda_const" in doc else None)
    cert, witness = run_trace_test(system, registry, rng, args.tau, args.trace_tol,
                                   args.loop_budget, _track_options(args), args.scale,
                                   args.stop_after_no_new, args.threads, ss=ss)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    doc = cert.to_dict()
    doc["registry_size"] = len(registry)
    doc["unregistered_fiber_points"] = len(witness.unregistered_fiber)
    Path(f"{prefix}.certificate.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"witness={len(witness)} fiber={cert.fiber_count} other={cert.other_count} "
          f"residual={cert.residual:.3e} verdict={cert.verdict.value}", file=sys.stderr)
    return EXIT_OK if cert.complete else EXIT_INCOMPLETE


def cmd_simulate(args) -> int:
    if args.trials < 100:
        raise UsageError("--trials must be at least 100")
    try:
        cfg = SimConfig(population=args.population, n_loops=args.loops,
                        failure_rate=args.failure_rate, seed=args.rng_seed,
                        initial_known=args.initial_known)
        kind = EstimatorKind.parse(args.estimator)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.window < 1:
        raise UsageError("--window must be at least 1")
    report = coverage_experiment(cfg, args.trials, kind, args.window)
    text = report.to_csv()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- argument parsing --------------------------------------------------------------

def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _add_tracking(p):
    g = p.add_argument_group("path tracking")
    g.add_argument("--step-initial", type=_positive_float, default=0.1)
    g.add_argument("--step-min", type=_positive_float, default=1e-14)
    g.add_argument("--corrector-tol", type=_positive_float, default=1e-10)
    g.add_argument("--endpoint-tol", type=_positive_float, default=1e-10)
    g.add_argument("--max-steps", type=_positive_int, default=10_000)


def _add_common(p):
    p.add_argument("--system", required=True, help="system JSON file")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--scale", type=_positive_float, default=1.0, help="loop size relative to 1 + |base|")
    p.add_argument("--tau", type=complex, default=1.0, help="slice offset for the trace test")
    p.add_argument("--trace-tol", type=_positive_float, default=1e-8)
    p.add_argument("--stop-after-no-new", type=_positive_int, default=3)
    p.add_argument("--out-prefix", default="monocount")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--dedup-tol", type=_positive_float, default=1e-6)
    _add_tracking(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="monocount", description=__doc__.splitlines()[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter,
                     epilog="\n".join(__doc__.splitlines()[2:]))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="monodromy loops with running estimates, then a trace test")
    _add_common(est)
    est.add_argument("--seed-solution", help="JSON file or inline JSON {\"x\": [...], \"p\": [...]}")
    est.add_argument("--seed-strategy", choices=["user", "fabricate"])
    est.add_argument("--registry", help="resume from a registry JSON written by an earlier run")
    est.add_argument("--max-loops", type=_positive_int, default=200)
    est.add_argument("--window", type=_positive_int, default=3, help="Schnabel rolling window")
    est.add_argument("--trace-loop-budget", type=_positive_int, default=50)
    est.add_argument("--format", choices=["csv", "json"], default="csv")
    est.set_defaults(func=cmd_estimate)

    tr = sub.add_parser("trace", help="trace test for a saved registry")
    _add_common(tr)
    tr.add_argument("--registry", help="registry JSON file")
    tr.add_argument("--slice", help="JSON file or inline JSON pinning direction / lambda / lambda_const")
    tr.add_argument("--loop-budget", type=_positive_int, default=50)
    tr.set_defaults(func=cmd_trace)

    sim = sub.add_parser("simulate", help="coverage of the estimators on a simulated population")
    sim.add_argument("--population", type=_positive_int, default=1442)
    sim.add_argument("--trials", type=int, default=1000)
    sim.add_argument("--loops", type=_positive_int, default=None,
                     help="loops per trial (default: until half the trials know everyone)")
    sim.add_argument("--failure-rate", type=float, default=0.0)
    sim.add_argument("--estimator", default="chapman", help="lp, chapman or schnabel")
    sim.add_argument("--window", type=int, default=3)
    sim.add_argument("--initial-known", type=_positive_int, default=1)
    sim.add_argument("--rng-seed", type=int, default=0)
    sim.add_argument("--out", help="CSV path (default: stdout)")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"monocount: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemFormatError as exc:
        print(f"monocount: cannot parse input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SeedError, ResidualError) as exc:
        print(f"monocount: seed failure: {exc}", file=sys.stderr)
        return EXIT_SEED
    except WitnessError as exc:
        print(f"monocount: witness failure: {exc}", file=sys.stderr)
        return EXIT_WITNESS
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
