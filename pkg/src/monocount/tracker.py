"""Predictor-corrector continuation of a single solution along a parameter path.

The predictor is an Euler step on the Davidenko equation
``J_x dx/dt = -J_p dp/dt``; the corrector is Newton's method at fixed t.
Steps halve on a failed correction and double after three accepted steps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .polysys import ParameterizedSystem, evaluate, evaluate_and_jacobian

DIVERGENCE_BOUND = 1e10
# a failure this close to t = 1 is reported as a singular endpoint
ENDPOINT_ZONE = 1e-6


class PathStatus(str, enum.Enum):
    SUCCESS = "Success"
    DIVERGED = "Diverged"
    STEP_LIMIT = "StepLimitReached"
    SINGULAR_ENDPOINT = "SingularEndpoint"


@dataclass(frozen=True)
class TrackOptions:
    step_initial: float = 0.1
    step_min: float = 1e-14
    step_max: float = 1.0
    corrector_tol: float = 1e-10
    max_corrector_iters: int = 3
    max_steps: int = 10_000
    endpoint_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.step_min <= self.step_initial <= self.step_max <= 1:
            raise ValueError("need 0 < step_min <= step_initial <= step_max <= 1")
        if self.corrector_tol <= 0 or self.endpoint_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_corrector_iters < 1 or self.max_steps < 1:
            raise ValueError("iteration limits must be positive")


class SegmentPath:
    """Parameter path p(t) = ((1-t) ga a + t gb b) / ((1-t) ga + t gb), t in [0, 1].

    With random unit-modulus ``ga``, ``gb`` the straight segment from a to b
    is bent into a circular arc that misses any fixed proper subvariety of
    parameter space with probability one.
    """

    def __init__(self, a, b, gamma_a: complex = 1.0, gamma_b: complex = 1.0):
        self.a = np.asarray(a, dtype=complex).reshape(-1)
        self.b = np.asarray(b, dtype=complex).reshape(-1)
        if self.a.shape != self.b.shape:
            raise ValueError("segment endpoints differ in length")
        self.gamma_a = complex(gamma_a)
        self.gamma_b = complex(gamma_b)
        if self.gamma_a == 0 or self.gamma_b == 0:
            raise ValueError("gamma values must be nonzero")
        ts = np.linspace(0.0, 1.0, 257)
        den = (1 - ts) * self.gamma_a + ts * self.gamma_b
        if np.min(np.abs(den)) < 1e-8 * max(abs(self.gamma_a), abs(self.gamma_b)):
            raise ValueError("gamma pair makes the path denominator vanish")

    def __call__(self, t: float) -> np.ndarray:
        if t == 0.0:
            return self.a.copy()
        if t == 1.0:
            return self.b.copy()
        den = (1 - t) * self.gamma_a + t * self.gamma_b
        return ((1 - t) * self.gamma_a * self.a + t * self.gamma_b * self.b) / den

    def derivative(self, t: float) -> np.ndarray:
        den = (1 - t) * self.gamma_a + t * self.gamma_b
        return self.gamma_a * self.gamma_b * (self.b - self.a) / den**2

    def reversed(self) -> "SegmentPath":
        return SegmentPath(self.b, self.a, self.gamma_b, self.gamma_a)

    def __eq__(self, other):
        if not isinstance(other, SegmentPath):
            return NotImplemented
        return (np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)
                and self.gamma_a == other.gamma_a and self.gamma_b == other.gamma_b)

    def __repr__(self):
        return f"SegmentPath(a={self.a}, b={self.b}, gamma_a={self.gamma_a}, gamma_b={self.gamma_b})"


@dataclass
class PathResult:
    status: PathStatus
    endpoint: Optional[np.ndarray]
    steps_taken: int

    @property
    def success(self) -> bool:
        return self.status is PathStatus.SUCCESS


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if len(v) else 0.0


def newton_refine(sys: ParameterizedSystem, x, p, tol: float = 1e-10,
                  max_iters: int = 10) -> Tuple[np.ndarray, bool]:
    """Newton's method at fixed parameters.

    Converged means the residual sup-norm is below ``tol`` and the last
    update was below ``tol * (1 + |x|)``. A singular Jacobian stops the
    iteration and reports ``converged=False``.
    """
    x = np.array(x, dtype=complex).reshape(-1)
    p = np.asarray(p, dtype=complex).reshape(-1)
    for _ in range(max_iters):
        F, Jx, _ = evaluate_and_jacobian(sys, x, p, with_params=False)
        try:
            dx = np.linalg.solve(Jx, -F)
        except np.linalg.LinAlgError:
            return x, False
        if not np.all(np.isfinite(dx)):
            return x, False
        x = x + dx
        if _inf_norm(dx) < tol * (1 + _inf_norm(x)):
            if _inf_norm(evaluate(sys, x, p)) < tol:
                return x, True
    return x, False


def _correct(sys, x, p, opts: TrackOptions):
    """Newton corrector; None when it fails to converge or stops contracting.

    Convergence is judged on the last update, or on the error left after it
    as estimated from the observed contraction rate theta: theta^2/(1-theta)
    times the update under quadratic convergence.
    """
    prev = math.inf
    for _ in range(opts.max_corrector_iters):
        F, Jx, _ = evaluate_and_jacobian(sys, x, p, with_params=False)
        try:
            dx = np.linalg.solve(Jx, -F)
        except np.linalg.LinAlgError:
            return None
        nd = _inf_norm(dx)
        if not math.isfinite(nd) or nd > 0.5 * prev:
            return None
        x = x + dx
        bound = opts.corrector_tol * (1 + _inf_norm(x))
        if nd < bound:
            return x
        if prev < math.inf:
            theta = nd / prev
            if theta * theta / (1 - theta) * nd < bound:
                return x
        prev = nd
    return None


def _tangent(sys, x, path: SegmentPath, t):
    _, Jx, Jp = evaluate_and_jacobian(sys, x, path(t))
    rhs = -(Jp @ path.derivative(t)) if Jp.shape[1] else np.zeros(len(x), dtype=complex)
    return np.linalg.solve(Jx, rhs)


def track_segment(sys: ParameterizedSystem, x0, path: SegmentPath,
                  opts: TrackOptions = TrackOptions()) -> PathResult:
    """Continue the solution ``x0`` of F(x; path(0)) = 0 to t = 1."""
    x = np.array(x0, dtype=complex).reshape(-1)
    if len(path.a) != sys.n_params:
        raise ValueError("path dimension does not match the number of parameters")
    t = 0.0
    h = opts.step_initial
    accepted = 0
    steps = 0
    xdot = None
    while t < 1.0:
        if steps >= opts.max_steps:
            return PathResult(PathStatus.STEP_LIMIT, None, steps)
        if h < opts.step_min:
            status = PathStatus.SINGULAR_ENDPOINT if 1.0 - t < ENDPOINT_ZONE else PathStatus.STEP_LIMIT
            return PathResult(status, None, steps)
        steps += 1
        step = min(h, 1.0 - t)
        t_new = 1.0 if step >= 1.0 - t else t + step
        if xdot is None:
            try:
                xdot = _tangent(sys, x, path, t)
            except np.linalg.LinAlgError:
                return PathResult(PathStatus.STEP_LIMIT, None, steps)
        x_new = None
        if np.all(np.isfinite(xdot)):
            x_new = _correct(sys, x + (t_new - t) * xdot, path(t_new), opts)
        if x_new is None:
            h *= 0.5
            accepted = 0
            continue
        x, t = x_new, t_new
        xdot = None
        if _inf_norm(x) > DIVERGENCE_BOUND:
            return PathResult(PathStatus.DIVERGED, None, steps)
        accepted += 1
        if accepted >= 3:
            h = min(2 * h, opts.step_max)
            accepted = 0
    x, ok = newton_refine(sys, x, path.b, opts.endpoint_tol, max(3, opts.max_corrector_iters))
    if not ok or _inf_norm(evaluate(sys, x, path.b)) >= opts.endpoint_tol:
        return PathResult(PathStatus.SINGULAR_ENDPOINT, None, steps)
    return PathResult(PathStatus.SUCCESS, x, steps)
