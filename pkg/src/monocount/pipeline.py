"""Monodromy search with running population estimates and a final trace test."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .census import Decision, Estimate, EstimatorKind, StopConfig, all_estimates, stopping_decision
from .monodromy import LoopRecord, SolutionRegistry, loop_rng, random_loop, registry_insert, run_loop
from .polysys import ParameterizedSystem
from .tracetest import TraceCertificate, WitnessError, run_trace_test
from .tracker import TrackOptions

log = logging.getLogger(__name__)

# stream label reserved for the trace test, disjoint from loop labels
TRACE_STREAM = 2**32


class StopReason(str, enum.Enum):
    NO_NEW_SOLUTIONS = "NoNewSolutions"
    MAX_LOOPS = "MaxLoops"


@dataclass(frozen=True)
class EstimateConfig:
    max_loops: int = 200
    stop_after_no_new: int = 3
    window: int = 3
    rng_seed: int = 0
    scale: float = 1.0
    tau: complex = 1.0
    trace_tol: float = 1e-8
    trace_loop_budget: int = 50
    dedup_tol: float = 1e-6
    threads: int = 1
    track: TrackOptions = TrackOptions()


ROW_FIELDS = ["loop_index", "known_count", "n_start", "n_end", "n_overlap", "n_new", "n_failures",
              "lp_beta", "lp_ci_low", "lp_ci_high",
              "chapman_beta", "chapman_ci_low", "chapman_ci_high",
              "schnabel_beta", "schnabel_ci_low", "schnabel_ci_high"]

_PREFIX = {EstimatorKind.LINCOLN_PETERSEN: "lp", EstimatorKind.CHAPMAN: "chapman",
           EstimatorKind.SCHNABEL: "schnabel"}


@dataclass
class ReportRow:
    record: LoopRecord
    estimates: List[Estimate]

    def as_dict(self) -> dict:
        r = self.record
        out = {"loop_index": r.loop_index, "known_count": r.known_after, "n_start": r.n_start,
               "n_end": r.n_end, "n_overlap": r.n_overlap, "n_new": r.n_new,
               "n_failures": r.n_failures}
        for est in self.estimates:
            pre = _PREFIX[est.kind]
            out[f"{pre}_beta"] = est.beta
            out[f"{pre}_ci_low"] = est.ci_low
            out[f"{pre}_ci_high"] = est.ci_high
        return out


@dataclass
class RunOutcome:
    registry: SolutionRegistry
    rows: List[ReportRow]
    stop_reason: StopReason
    certificate: Optional[TraceCertificate] = None
    trace_error: Optional[str] = None
    runtime: float = 0.0

    @property
    def records(self) -> List[LoopRecord]:
        return [row.record for row in self.rows]


def run_estimate(sys: ParameterizedSystem, registry: SolutionRegistry,
                 cfg: EstimateConfig = EstimateConfig(),
                 on_row: Optional[Callable[[ReportRow], None]] = None,
                 run_trace: bool = True) -> RunOutcome:
    """Run loops until the stopping policy fires, then trace-test the registry.

    ``registry`` is grown in place; ``on_row`` sees each loop's row as soon
    as it is available.
    """
    started = time.perf_counter()
    stop = StopConfig(cfg.stop_after_no_new, cfg.max_loops)
    records: List[LoopRecord] = []
    rows: List[ReportRow] = []
    decision = stopping_decision(records, stop)
    k = 0
    while decision is Decision.CONTINUE:
        k += 1
        loop = random_loop(registry.base, loop_rng(cfg.rng_seed, k), cfg.scale, rng_label=k)
        rec = run_loop(sys, registry, loop, cfg.track, loop_index=k, threads=cfg.threads)
        records.append(rec)
        row = ReportRow(rec, all_estimates(records, cfg.window))
        rows.append(row)
        log.info("loop %d: known %d, start %d, end %d, overlap %d, new %d, failed %d",
                 k, rec.known_after, rec.n_start, rec.n_end, rec.n_overlap, rec.n_new, rec.n_failures)
        if on_row is not None:
            on_row(row)
        decision = stopping_decision(records, stop)

    outcome = RunOutcome(registry, rows,
                         StopReason.NO_NEW_SOLUTIONS if decision is Decision.RUN_TRACE_TEST
                         else StopReason.MAX_LOOPS)
    if decision is Decision.RUN_TRACE_TEST and run_trace:
        try:
            outcome.certificate, _ = run_trace_test(
                sys, registry, loop_rng(cfg.rng_seed, TRACE_STREAM), cfg.tau, cfg.trace_tol,
                cfg.trace_loop_budget, cfg.track, cfg.scale, cfg.stop_after_no_new, cfg.threads)
        except WitnessError as exc:
            log.error("trace test failed: %s", exc)
            outcome.trace_error = str(exc)
    outcome.runtime = time.perf_counter() - started
    return outcome


def start_registry(sys: ParameterizedSystem, x_star, p_star, dedup_tol: float = 1e-6) -> SolutionRegistry:
    reg = SolutionRegistry(sys, p_star, dedup_tol)
    registry_insert(reg, x_star)
    return reg
