"""Random monodromy loops and the registry of known solutions at the base parameter.

Every loop transports the whole registry around a random triangle in
parameter space. Endpoints that match registered solutions are recaptures;
the rest are inserted as new individuals.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .polysys import ParameterizedSystem, evaluate, evaluate_and_jacobian
from .tracker import PathResult, SegmentPath, TrackOptions, newton_refine, track_segment

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SeedError(ValueError):
    pass


class ResidualError(ValueError):
    """A candidate point does not solve the system at the base parameter."""


def _inf_norm(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard complex Gaussian samples, E|z|^2 = 1."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def unit_complex(rng: np.random.Generator) -> complex:
    return complex(np.exp(2j * np.pi * rng.random()))


# --- seeding -----------------------------------------------------------------

@dataclass
class UserSupplied:
    x: Sequence[complex]
    p: Sequence[complex]
    tol: float = 1e-8


@dataclass
class FabricateLinearInParams:
    rng: np.random.Generator
    x: Optional[Sequence[complex]] = None


def seed_solution(sys: ParameterizedSystem,
                  strategy: Union[UserSupplied, FabricateLinearInParams]):
    """Return a start pair (x*, p*) with F(x*; p*) = 0.

    ``UserSupplied`` pairs must already satisfy the system to ``tol`` before
    they are polished. ``FabricateLinearInParams`` picks x* (random complex
    unless given) and solves the linear system F(x*; p) = 0 for p, adding a
    random element of its kernel so that p* is generic.
    """
    if isinstance(strategy, UserSupplied):
        x = np.asarray(strategy.x, dtype=complex).reshape(-1)
        p = np.asarray(strategy.p, dtype=complex).reshape(-1)
        if len(x) != sys.n_vars or len(p) != sys.n_params:
            raise SeedError("seed solution has the wrong number of coordinates")
        res = _inf_norm(evaluate(sys, x, p))
        if not res < strategy.tol:
            raise SeedError(f"seed solution residual {res:.3g} exceeds {strategy.tol:g}")
        x, ok = newton_refine(sys, x, p, tol=1e-12, max_iters=10)
        if not ok:
            x2, _ = newton_refine(sys, x, p, tol=RESIDUAL_TOL, max_iters=10)
            if _inf_norm(evaluate(sys, x2, p)) >= RESIDUAL_TOL:
                raise SeedError("seed solution is singular or cannot be refined")
            x = x2
        return x, p

    if isinstance(strategy, FabricateLinearInParams):
        if sys.param_degree() > 1:
            raise SeedError("fabrication needs every polynomial to be affine-linear in the parameters")
        rng = strategy.rng
        n, P = sys.n_vars, sys.n_params
        if strategy.x is None:
            x = complex_normal(rng, n)
        else:
            x = np.asarray(strategy.x, dtype=complex).reshape(-1)
            if len(x) != n:
                raise SeedError("fabrication point has the wrong length")
        zero = np.zeros(P, dtype=complex)
        b, _, A = evaluate_and_jacobian(sys, x, zero)
        # F(x; p) = b + A p exactly, since F is affine in p
        if P == 0 or np.linalg.matrix_rank(A) < n:
            raise SeedError("parameter coefficient matrix is rank deficient; cannot fabricate")
        p0, *_ = np.linalg.lstsq(A, -b, rcond=None)
        _, svals, vh = np.linalg.svd(A)
        kernel = vh[n:].conj().T
        if kernel.shape[1]:
            p0 = p0 + kernel @ complex_normal(rng, kernel.shape[1])
        for _ in range(3):
            r = evaluate(sys, x, p0)
            dp, *_ = np.linalg.lstsq(A, -r, rcond=None)
            p0 = p0 + dp
        x, _ = newton_refine(sys, x, p0, tol=1e-12, max_iters=5)
        res = _inf_norm(evaluate(sys, x, p0))
        if not res < 1e-12:
            raise SeedError(f"fabricated pair has residual {res:.3g}")
        return x, p0

    raise TypeError(f"unknown seed strategy {strategy!r}")


# --- registry ----------------------------------------------------------------

class SolutionRegistry:
    """Deduplicated solutions of F(x; base) = 0 with stable integer IDs."""

    def __init__(self, system: ParameterizedSystem, base, dedup_tol: float = 1e-6,
                 residual_tol: float = RESIDUAL_TOL):
        self.system = system
        self.base = np.asarray(base, dtype=complex).reshape(-1)
        if len(self.base) != system.n_params:
            raise ValueError("base parameter has the wrong length")
        self.dedup_tol = dedup_tol
        self.residual_tol = residual_tol
        self._points = np.empty((0, system.n_vars), dtype=complex)

    def __len__(self):
        return self._points.shape[0]

    @property
    def entries(self) -> List[np.ndarray]:
        return [row.copy() for row in self._points]

    @property
    def ids(self) -> List[int]:
        return list(range(len(self)))

    def __getitem__(self, i: int) -> np.ndarray:
        return self._points[i].copy()

    def points(self) -> np.ndarray:
        return self._points.copy()

    def nearest(self, x) -> Tuple[Optional[int], float]:
        if not len(self):
            return None, np.inf
        d = np.max(np.abs(self._points - x), axis=1)
        i = int(np.argmin(d))
        return i, float(d[i])

    def match(self, x) -> Optional[int]:
        i, d = self.nearest(x)
        if i is not None and d <= self.dedup_tol * (1 + _inf_norm(x)):
            return i
        return None

    def _append(self, x) -> int:
        self._points = np.vstack([self._points, np.asarray(x, dtype=complex)[None, :]])
        return len(self) - 1

    def to_dict(self) -> dict:
        pairs = lambda v: [[float(z.real), float(z.imag)] for z in v]
        return {
            "base": pairs(self.base),
            "dedup_tol": self.dedup_tol,
            "points": [pairs(row) for row in self._points],
        }

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, system: ParameterizedSystem, doc: dict) -> "SolutionRegistry":
        def vec(v):
            return np.array([complex(*z) if isinstance(z, list) else complex(z) for z in v])

        reg = cls(system, vec(doc["base"]), float(doc.get("dedup_tol", 1e-6)))
        for k, row in enumerate(doc.get("points", [])):
            try:
                registry_insert(reg, vec(row))
            except ResidualError as exc:
                raise ResidualError(f"registry point {k}: {exc}") from None
        return reg

    @classmethod
    def from_json(cls, system: ParameterizedSystem, text: str) -> "SolutionRegistry":
        return cls.from_dict(system, json.loads(text))


def registry_insert(registry: SolutionRegistry, x) -> Tuple[int, bool]:
    """Insert ``x`` or find its existing ID.

    The point is polished with a few Newton steps first; it is rejected if
    polishing fails, leaves a residual above the gate, or moves the point
    farther than the dedup radius (the input did not identify a solution).
    """
    x = np.asarray(x, dtype=complex).reshape(-1)
    sys, base = registry.system, registry.base
    refined, ok = newton_refine(sys, x, base, tol=registry.residual_tol, max_iters=5)
    res = _inf_norm(evaluate(sys, refined, base))
    moved = _inf_norm(refined - x)
    if not ok or res >= registry.residual_tol or moved > registry.dedup_tol * (1 + _inf_norm(x)):
        raise ResidualError(f"point does not solve the system at the base (residual {res:.3g})")
    i = registry.match(refined)
    if i is not None:
        return i, False
    return registry._append(refined), True


# --- loops -------------------------------------------------------------------

@dataclass
class Loop:
    base: np.ndarray
    segments: List[SegmentPath]
    rng_label: int = 0

    def __post_init__(self):
        base = np.asarray(self.base, dtype=complex)
        if not (np.array_equal(self.segments[0].a, base) and np.array_equal(self.segments[-1].b, base)):
            raise ValueError("loop is not closed at its base")
        for s, t in zip(self.segments, self.segments[1:]):
            if not np.array_equal(s.b, t.a):
                raise ValueError("loop segments do not chain")

    @property
    def vertices(self) -> List[np.ndarray]:
        return [s.a for s in self.segments]

    def __eq__(self, other):
        if not isinstance(other, Loop):
            return NotImplemented
        return (np.array_equal(self.base, other.base) and self.rng_label == other.rng_label
                and self.segments == other.segments)


def triangle_loop(base, q1, q2, gammas=None, rng_label=0) -> Loop:
    """Closed triangle base -> q1 -> q2 -> base; ``gammas`` is three (ga, gb) pairs."""
    base = np.asarray(base, dtype=complex).reshape(-1)
    verts = [base, np.asarray(q1, dtype=complex).reshape(-1),
             np.asarray(q2, dtype=complex).reshape(-1), base]
    gammas = gammas or [(1.0, 1.0)] * 3
    segs = [SegmentPath(verts[i], verts[i + 1], *gammas[i]) for i in range(3)]
    return Loop(base, segs, rng_label)


def random_loop(base, rng: np.random.Generator, scale: float = 1.0, rng_label: int = 0) -> Loop:
    """Random triangle through ``base`` with independent gamma pairs per edge."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    base = np.asarray(base, dtype=complex).reshape(-1)
    radius = scale * (1 + _inf_norm(base))
    q1 = base + complex_normal(rng, len(base)) * radius
    q2 = base + complex_normal(rng, len(base)) * radius
    while True:
        gammas = [(unit_complex(rng), unit_complex(rng)) for _ in range(3)]
        try:
            return triangle_loop(base, q1, q2, gammas, rng_label)
        except ValueError:
            # antipodal gamma pair; redraw
            continue


@dataclass
class LoopRecord:
    loop_index: int
    start_ids: Set[int]
    end_ids: Set[int]
    n_start: int
    n_end: int
    n_overlap: int
    n_failures: int
    n_new: int
    known_after: int = 0

    def __post_init__(self):
        if self.n_end + self.n_failures != self.n_start:
            raise ValueError("n_end + n_failures must equal n_start")
        if self.n_overlap + self.n_new != self.n_end:
            raise ValueError("n_overlap + n_new must equal n_end")
        if self.n_overlap > min(self.n_start, self.n_end):
            raise ValueError("overlap exceeds the sample sizes")

    @classmethod
    def from_counts(cls, n_start: int, n_end: int, n_overlap: int, loop_index: int = 0):
        """Record with synthetic IDs, for estimator tests and simulations."""
        start = set(range(n_start))
        end = set(range(n_overlap)) | set(range(n_start, n_start + n_end - n_overlap))
        return cls(loop_index, start, end, n_start, n_end, n_overlap,
                   n_start - n_end, n_end - n_overlap, n_start + n_end - n_overlap)


def transport(system: ParameterizedSystem, x, loop: Loop,
              opts: TrackOptions = TrackOptions()) -> PathResult:
    """Track one point around every segment of the loop."""
    steps = 0
    res = None
    for seg in loop.segments:
        res = track_segment(system, x, seg, opts)
        steps += res.steps_taken
        if not res.success:
            return PathResult(res.status, None, steps)
        x = res.endpoint
    return PathResult(res.status, res.endpoint, steps)


def run_loop(system: ParameterizedSystem, registry: SolutionRegistry, loop: Loop,
             opts: TrackOptions = TrackOptions(), loop_index: int = 0,
             threads: int = 1) -> LoopRecord:
    """Transport every registry entry around ``loop`` and record the recapture.

    Paths are tracked first (optionally on several threads); matching and
    insertion then run serially in registry order so results do not depend
    on scheduling.
    """
    if not len(registry):
        raise ValueError("registry is empty")
    start = registry.points()
    start_ids = set(range(len(start)))
    if threads > 1 and len(start) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda x: transport(system, x, loop, opts), start))
    else:
        results = [transport(system, x, loop, opts) for x in start]

    end_ids: Set[int] = set()
    seen: Set[int] = set()
    n_overlap = n_new = n_fail = 0
    for sid, res in enumerate(results):
        if not res.success:
            n_fail += 1
            continue
        try:
            eid, _ = registry_insert(registry, res.endpoint)
        except ResidualError:
            n_fail += 1
            continue
        if eid in seen:
            log.warning("loop %d: two paths ended at solution %d (path jumping)", loop_index, eid)
        seen.add(eid)
        end_ids.add(eid)
        if eid in start_ids:
            n_overlap += 1
        else:
            n_new += 1
    n_end = len(start) - n_fail
    return LoopRecord(loop_index, start_ids, end_ids, len(start), n_end, n_overlap,
                      n_fail, n_new, len(registry))


def loop_rng(seed: int, label: int) -> np.random.Generator:
    """Independent, reproducible stream for the loop numbered ``label``."""
    return np.random.default_rng(np.random.SeedSequence([seed, label]))
