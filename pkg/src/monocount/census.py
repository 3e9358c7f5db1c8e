"""Capture-mark-recapture estimates of the total number of solutions.

Each monodromy loop is a capture event: ``n_start`` marked individuals go
in, ``n_end`` come out, ``n_overlap`` of them were already marked. All
functions here accept any object exposing those three counts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

Z95 = 1.96


class EstimatorKind(str, enum.Enum):
    LINCOLN_PETERSEN = "LincolnPetersen"
    CHAPMAN = "Chapman"
    SCHNABEL = "Schnabel"

    @classmethod
    def parse(cls, name: str) -> "EstimatorKind":
        key = name.lower().replace("-", "").replace("_", "")
        aliases = {"lp": cls.LINCOLN_PETERSEN, "lincolnpetersen": cls.LINCOLN_PETERSEN,
                   "chapman": cls.CHAPMAN, "schnabel": cls.SCHNABEL}
        if key not in aliases:
            raise ValueError(f"unknown estimator {name!r}")
        return aliases[key]


class Capture(NamedTuple):
    n_start: int
    n_end: int
    n_overlap: int
    loop_index: int = 0


@dataclass
class Estimate:
    """Point estimate and 95% interval.

    ``beta``/``variance`` are None when undefined; unbounded interval ends
    are +-inf. For Schnabel, ``variance`` is the variance of 1/beta.
    """

    kind: EstimatorKind
    beta: Optional[float]
    variance: Optional[float]
    ci_low: float
    ci_high: float
    loops_used: List[int] = field(default_factory=list)

    @property
    def defined(self) -> bool:
        return self.beta is not None

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def _unbounded(kind, loops):
    return Estimate(kind, None, None, -math.inf, math.inf, loops)


def capture_variance(n_start: int, n_end: int, n_overlap: int) -> float:
    """Variance shared by the Lincoln-Petersen and Chapman estimates."""
    only_start = n_start - n_overlap
    only_end = n_end - n_overlap
    return ((n_start + 1) * (n_end + 1) * only_start * only_end
            / ((n_overlap + 1) ** 2 * (n_overlap + 2)))


def _symmetric_ci(kind, beta, var, loops):
    half = Z95 * math.sqrt(var)
    return Estimate(kind, beta, var, beta - half, beta + half, loops)


def lincoln_petersen(rec) -> Estimate:
    loops = [getattr(rec, "loop_index", 0)]
    if rec.n_overlap == 0:
        return _unbounded(EstimatorKind.LINCOLN_PETERSEN, loops)
    beta = rec.n_start * rec.n_end / rec.n_overlap
    var = capture_variance(rec.n_start, rec.n_end, rec.n_overlap)
    return _symmetric_ci(EstimatorKind.LINCOLN_PETERSEN, beta, var, loops)


def chapman(rec) -> Estimate:
    """Chapman's correction; stays finite when nothing is recaptured."""
    loops = [getattr(rec, "loop_index", 0)]
    beta = (rec.n_start + 1) * (rec.n_end + 1) / (rec.n_overlap + 1) - 1
    var = capture_variance(rec.n_start, rec.n_end, rec.n_overlap)
    return _symmetric_ci(EstimatorKind.CHAPMAN, beta, var, loops)


def schnabel(recs: Sequence, window: int = 3) -> Estimate:
    """Pooled estimate over the last ``window`` records.

    The interval is formed for 1/beta and inverted; if its lower end is not
    positive the upper bound on beta is reported as +inf.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    if not recs:
        raise ValueError("no records to estimate from")
    used = list(recs)[-window:]
    loops = [getattr(r, "loop_index", i) for i, r in enumerate(used)]
    products = sum(r.n_start * r.n_end for r in used)
    recaptured = sum(r.n_overlap for r in used)
    if recaptured == 0:
        return _unbounded(EstimatorKind.SCHNABEL, loops)
    inv = recaptured / products
    var_inv = recaptured / products**2
    half = Z95 * math.sqrt(var_inv)
    low = 1.0 / (inv + half)
    high = 1.0 / (inv - half) if inv - half > 0 else math.inf
    return Estimate(EstimatorKind.SCHNABEL, products / recaptured, var_inv, low, high, loops)


def estimate(kind: EstimatorKind, recs: Sequence, window: int = 3) -> Estimate:
    """Estimate from the latest record (single-loop kinds) or a rolling window."""
    if kind is EstimatorKind.SCHNABEL:
        return schnabel(recs, window)
    if not recs:
        raise ValueError("no records to estimate from")
    return (lincoln_petersen if kind is EstimatorKind.LINCOLN_PETERSEN else chapman)(recs[-1])


def all_estimates(recs: Sequence, window: int = 3) -> List[Estimate]:
    return [estimate(k, recs, window) for k in EstimatorKind]


# --- stopping policy -----------------------------------------------------------

class Decision(str, enum.Enum):
    CONTINUE = "Continue"
    RUN_TRACE_TEST = "RunTraceTest"
    ABORT = "Abort"


@dataclass(frozen=True)
class StopConfig:
    consecutive_no_new: int = 3
    max_loops: int = 200

    def __post_init__(self):
        if self.consecutive_no_new < 1 or self.max_loops < 1:
            raise ValueError("stopping thresholds must be positive")


def stopping_decision(recs: Sequence, cfg: StopConfig = StopConfig()) -> Decision:
    """Trace-test once ``consecutive_no_new`` loops in a row found nothing new
    (at least one of them without path failures); abort at ``max_loops``."""
    k = cfg.consecutive_no_new
    if len(recs) >= k:
        tail = list(recs)[-k:]
        if all(r.n_new == 0 for r in tail) and any(r.n_failures == 0 for r in tail):
            return Decision.RUN_TRACE_TEST
    if len(recs) >= cfg.max_loops:
        return Decision.ABORT
    return Decision.CONTINUE
