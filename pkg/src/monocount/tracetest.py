"""Trace test certifying that a fiber F(x; p*) = 0 has been found completely.

Parameters are restricted to a line p = p* + s v, which turns the fiber
into points of a curve in (x, s). That curve is cut by the bilinear slice
lambda(x) s = t. At t = 0 the slice holds the fiber (s = 0) together with
the points where lambda(x) = 0. As t moves, the centroid of the full
witness set moves linearly, and a missing point breaks this.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from math import comb
from typing import List, Optional

import numpy as np

from .census import Decision, StopConfig, stopping_decision
from .monodromy import (LoopRecord, ResidualError, SolutionRegistry, complex_normal, loop_rng,
                        random_loop, registry_insert, run_loop, unit_complex)
from .polysys import Monomial, ParameterizedSystem
from .tracker import SegmentPath, TrackOptions, track_segment

log = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-8
MAX_RESLICES = 10


class WitnessError(RuntimeError):
    """The witness set could not be built or transported reliably."""


class Verdict(str, enum.Enum):
    COMPLETE = "Complete"
    INCOMPLETE = "Incomplete"


def _fresh_name(base: str, taken) -> str:
    name = base
    while name in taken:
        name = "_" + name
    return name


def _poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(a, b)


def restrict_to_line(sys: ParameterizedSystem, p_star, direction, lam, lam_const):
    """Square system in (x, s) with parameter t: F(x; p* + s v) and lambda(x) s - t."""
    p_star = np.asarray(p_star, dtype=complex)
    direction = np.asarray(direction, dtype=complex)
    n = sys.n_vars
    s_idx = n
    polys = []
    for poly in sys.polynomials:
        terms = []
        for m in poly:
            # expand prod_k (p*_k + s v_k)^f_k as a polynomial in s
            coeffs = np.array([m.coefficient], dtype=complex)
            for k, f in m.param_exponents:
                factor = np.array([comb(f, j) * p_star[k] ** (f - j) * direction[k] ** j
                                   for j in range(f + 1)], dtype=complex)
                coeffs = _poly_mul(coeffs, factor)
            for d, c in enumerate(coeffs):
                if c != 0:
                    ve = m.var_exponents + (((s_idx, d),) if d else ())
                    terms.append(Monomial(c, ve, ()))
        polys.append(terms)
    slice_terms = [Monomial(lam[j], ((j, 1), (s_idx, 1))) for j in range(n) if lam[j] != 0]
    if lam_const != 0:
        slice_terms.append(Monomial(lam_const, ((s_idx, 1),)))
    slice_terms.append(Monomial(-1.0, (), ((0, 1),)))
    polys.append(slice_terms)
    taken = set(sys.var_names) | set(sys.param_names)
    s_name = _fresh_name("s", taken)
    t_name = _fresh_name("t", taken | {s_name})
    return ParameterizedSystem(polys, list(sys.var_names) + [s_name], [t_name])


@dataclass
class SlicedSystem:
    sys: ParameterizedSystem
    p_star: np.ndarray
    direction: np.ndarray
    lambda_coeffs: np.ndarray
    lambda_const: complex
    lifted: ParameterizedSystem = field(init=False, repr=False)

    def __post_init__(self):
        self.p_star = np.asarray(self.p_star, dtype=complex).reshape(-1)
        self.direction = np.asarray(self.direction, dtype=complex).reshape(-1)
        self.lambda_coeffs = np.asarray(self.lambda_coeffs, dtype=complex).reshape(-1)
        self.lambda_const = complex(self.lambda_const)
        if not np.any(self.direction):
            raise ValueError("line direction must be nonzero")
        if len(self.direction) != self.sys.n_params or len(self.p_star) != self.sys.n_params:
            raise ValueError("direction and base must have one entry per parameter")
        if len(self.lambda_coeffs) != self.sys.n_vars:
            raise ValueError("lambda needs one coefficient per variable")
        self.lifted = restrict_to_line(self.sys, self.p_star, self.direction,
                                       self.lambda_coeffs, self.lambda_const)

    def lam(self, x) -> complex:
        return complex(np.dot(self.lambda_coeffs, np.asarray(x)[:self.sys.n_vars]) + self.lambda_const)

    def to_params(self, s) -> np.ndarray:
        return self.p_star + complex(s) * self.direction

    def with_new_lambda(self, rng: np.random.Generator) -> "SlicedSystem":
        return SlicedSystem(self.sys, self.p_star, self.direction,
                            complex_normal(rng, self.sys.n_vars), complex_normal(rng, 1)[0])

    def to_dict(self) -> dict:
        pairs = lambda v: [[float(z.real), float(z.imag)] for z in v]
        return {"p_star": pairs(self.p_star), "direction": pairs(self.direction),
                "lambda": pairs(self.lambda_coeffs),
                "lambda_const": [self.lambda_const.real, self.lambda_const.imag]}


def build_slice(sys: ParameterizedSystem, p_star, rng: np.random.Generator,
                direction=None, lambda_coeffs=None, lambda_const=None) -> SlicedSystem:
    """Random line direction and affine form lambda; any of them may be pinned."""
    if sys.n_params < 1:
        raise ValueError("the trace test needs at least one parameter")
    v = complex_normal(rng, sys.n_params)
    lam = complex_normal(rng, sys.n_vars)
    lam0 = complex_normal(rng, 1)[0]
    return SlicedSystem(sys, p_star,
                        v if direction is None else direction,
                        lam if lambda_coeffs is None else lambda_coeffs,
                        lam0 if lambda_const is None else lambda_const)


@dataclass
class WitnessSet:
    t_value: complex
    points: List[np.ndarray]
    sliced: SlicedSystem
    n_lifted: int = 0
    lift_path: Optional[SegmentPath] = None
    loops: List[LoopRecord] = field(default_factory=list)
    unregistered_fiber: List[np.ndarray] = field(default_factory=list)
    n_unclassified: int = 0

    def __len__(self):
        return len(self.points)


def _gamma_segment(a, b, rng) -> SegmentPath:
    while True:
        try:
            return SegmentPath([a], [b], unit_complex(rng), unit_complex(rng))
        except ValueError:
            continue


def second_difference(c_minus, c_zero, c_plus) -> float:
    """Scaled deviation of three centroids from a straight line in t."""
    c_zero = np.asarray(c_zero)
    dev = np.max(np.abs(np.asarray(c_minus) - 2 * c_zero + np.asarray(c_plus)))
    return float(dev / (1 + np.max(np.abs(c_zero))))


def extend_witness(ss: SlicedSystem, fiber: SolutionRegistry, tau: complex,
                   rng: np.random.Generator, loop_budget: int = 50,
                   opts: TrackOptions = TrackOptions(), scale: float = 1.0,
                   consecutive_no_new: int = 3, threads: int = 1,
                   trace_tol: Optional[float] = 1e-8) -> WitnessSet:
    """Witness set of the sliced system at t = tau.

    Fiber points are lifted to (x, 0) and moved from t = 0 to tau. Monodromy
    loops in t around tau then look for further witness points. A point found
    this way is kept when the reversed lift path takes it to the
    lambda(x) = 0 branch. Points that land in the fiber are not in the
    registry, so they are reported separately and left out.

    Loops run until the stopping policy fires. When ``trace_tol`` is set,
    the centroid trace of the current witness is then checked, and the
    search continues while it is not yet linear and the budget lasts.
    """
    if not len(fiber):
        raise WitnessError("fiber is empty")
    for attempt in range(MAX_RESLICES):
        small = [i for i, x in enumerate(fiber.entries) if abs(ss.lam(x)) < LAMBDA_FLOOR]
        if not small:
            break
        log.warning("lambda nearly vanishes at fiber points %s; re-randomizing the slice", small)
        ss = ss.with_new_lambda(rng)
    else:
        raise WitnessError("could not find a slice form nonzero on the fiber")

    G = ss.lifted
    tau = complex(tau)
    witness = SolutionRegistry(G, [tau], fiber.dedup_tol, fiber.residual_tol)
    lift_path = _gamma_segment(0.0, tau, rng)
    for i, x in enumerate(fiber.entries):
        res = track_segment(G, np.append(x, 0.0), lift_path, opts)
        if not res.success:
            raise WitnessError(f"lifting fiber point {i} to t = tau failed: {res.status.value}")
        try:
            _, is_new = registry_insert(witness, res.endpoint)
        except ResidualError as exc:
            raise WitnessError(f"lifted fiber point {i} rejected: {exc}") from None
        if not is_new:
            raise WitnessError(f"lifted fiber point {i} collided with another lift")
    n_lifted = len(witness)

    down = lift_path.reversed()
    across = _gamma_segment(tau, -tau, rng)
    # images at t = 0 and t = -tau per witness index; None when lost
    at_zero = [np.append(x, 0.0) for x in fiber.entries]
    at_minus: List[Optional[np.ndarray]] = []
    kind: List[str] = ["lifted"] * n_lifted

    def image(y, path):
        res = track_segment(G, y, path, opts)
        return res.endpoint if res.success else None

    def classify_new():
        for i in range(len(kind), len(witness)):
            z = image(witness[i], down)
            at_zero.append(z)
            if z is None:
                kind.append("lost")
            elif abs(z[-1]) < fiber.dedup_tol * (1 + np.max(np.abs(z))):
                kind.append("fiber")
            else:
                kind.append("branch")

    def kept_indices():
        return [i for i, k in enumerate(kind) if k in ("lifted", "branch")]

    def trace_residual():
        idx = kept_indices()
        while len(at_minus) < len(witness):
            at_minus.append(image(witness[len(at_minus)], across))
        if any(at_minus[i] is None for i in idx):
            return np.inf
        pts = np.array([witness[i] for i in idx])
        return second_difference(np.mean([at_minus[i] for i in idx], axis=0),
                                 np.mean([at_zero[i] for i in idx], axis=0), pts.mean(axis=0))

    seed = int(rng.integers(2**63))
    stop = StopConfig(consecutive_no_new, max(loop_budget, 1))
    records: List[LoopRecord] = []
    streak: List[LoopRecord] = []
    for k in range(1, loop_budget + 1):
        loop = random_loop([tau], loop_rng(seed, k), scale, rng_label=k)
        rec = run_loop(G, witness, loop, opts, loop_index=k, threads=threads)
        records.append(rec)
        streak.append(rec)
        if stopping_decision(streak, stop) is Decision.CONTINUE:
            continue
        if trace_tol is None:
            break
        classify_new()
        if trace_residual() < trace_tol:
            break
        # trace not linear yet: demand a fresh no-new streak before rechecking
        streak = []
    classify_new()

    kept = [witness[i] for i in kept_indices()]
    stray = [at_zero[i][:-1] for i, k in enumerate(kind) if k == "fiber"]
    unclassified = kind.count("lost")
    if stray:
        log.warning("monodromy in t reached %d fiber point(s) missing from the registry", len(stray))
    if unclassified:
        log.warning("%d witness point(s) could not be moved to t = 0 and were dropped", unclassified)
    return WitnessSet(tau, kept, ss, n_lifted, lift_path, records, stray, unclassified)


@dataclass
class TraceCertificate:
    tau: complex
    t_values: List[complex]
    centroids: List[np.ndarray]
    residual: float
    verdict: Verdict
    fiber_count: int
    other_count: int
    trace_tol: float
    sliced: Optional[SlicedSystem] = None

    @property
    def complete(self) -> bool:
        return self.verdict is Verdict.COMPLETE

    def param_centroids(self) -> List[np.ndarray]:
        """Centroids mapped back to parameter space along the line."""
        return [self.sliced.to_params(c[-1]) for c in self.centroids]

    def to_dict(self) -> dict:
        pairs = lambda v: [[float(z.real), float(z.imag)] for z in v]
        out = {
            "tau": [self.tau.real, self.tau.imag],
            "t_values": pairs(self.t_values),
            "centroids": [pairs(c) for c in self.centroids],
            "residual": self.residual,
            "trace_tol": self.trace_tol,
            "verdict": self.verdict.value,
            "fiber_count": self.fiber_count,
            "other_count": self.other_count,
        }
        if self.sliced is not None:
            out["slice"] = self.sliced.to_dict()
            out["param_centroids"] = [pairs(c) for c in self.param_centroids()]
        return out

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def trace_verdict(ss: SlicedSystem, witness: WitnessSet, trace_tol: float = 1e-8,
                  opts: TrackOptions = TrackOptions(),
                  rng: Optional[np.random.Generator] = None,
                  dedup_tol: float = 1e-6) -> TraceCertificate:
    """Move the witness from tau to 0 and to -tau and compare the centroids.

    The move to t = 0 retraces the witness's lift path when it has one.
    Along that path the t = 0 images of the lifted points are exactly the
    registered fiber.
    """
    if not len(witness):
        raise WitnessError("witness set is empty")
    rng = rng if rng is not None else np.random.default_rng(0)
    tau = complex(witness.t_value)
    G = ss.lifted
    at_tau = np.array(witness.points)
    moved = {}
    for target in (0.0, -tau):
        if target == 0.0 and witness.lift_path is not None:
            # same path the fiber was lifted along, so lifts return to the fiber
            path = witness.lift_path.reversed()
        else:
            path = _gamma_segment(tau, target, rng)
        ends = []
        for i, y in enumerate(at_tau):
            res = track_segment(G, y, path, opts)
            if not res.success:
                raise WitnessError(f"witness point {i} lost moving to t = {target}: {res.status.value}")
            ends.append(res.endpoint)
        moved[target] = np.array(ends)
    c_minus = moved[-tau].mean(axis=0)
    c_zero = moved[0.0].mean(axis=0)
    c_plus = at_tau.mean(axis=0)
    residual = second_difference(c_minus, c_zero, c_plus)
    s_zero = moved[0.0][:, -1]
    fiber_count = int(np.sum(np.abs(s_zero) < dedup_tol))
    verdict = Verdict.COMPLETE if residual < trace_tol else Verdict.INCOMPLETE
    return TraceCertificate(tau, [-tau, 0j, tau], [c_minus, c_zero, c_plus], residual, verdict,
                            fiber_count, len(at_tau) - fiber_count, trace_tol, ss)


def run_trace_test(sys: ParameterizedSystem, registry: SolutionRegistry, rng: np.random.Generator,
                   tau: complex = 1.0, trace_tol: float = 1e-8, loop_budget: int = 50,
                   opts: TrackOptions = TrackOptions(), scale: float = 1.0,
                   consecutive_no_new: int = 3, threads: int = 1, ss: Optional[SlicedSystem] = None):
    """Slice, extend the witness and decide; returns (certificate, witness)."""
    ss = ss if ss is not None else build_slice(sys, registry.base, rng)
    witness = extend_witness(ss, registry, tau, rng, loop_budget, opts, scale,
                             consecutive_no_new, threads, trace_tol)
    cert = trace_verdict(witness.sliced, witness, trace_tol, opts, rng, registry.dedup_tol)
    return cert, witness
