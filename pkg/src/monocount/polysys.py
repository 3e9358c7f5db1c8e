"""Sparse parameterized polynomial systems F(x; p) over the complex numbers.

A system is stored as a flat table of monomials (coefficient, variable
exponents, parameter exponents, owning polynomial) so that evaluation and
both Jacobians are a handful of vectorized numpy operations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np


class SystemFormatError(ValueError):
    """Raised when a system document violates the JSON schema.

    ``location`` is a JSON-pointer-like path to the offending element.
    """

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


@dataclass(frozen=True)
class Monomial:
    coefficient: complex
    var_exponents: Tuple[Tuple[int, int], ...] = ()
    param_exponents: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        c = complex(self.coefficient)
        if c == 0:
            raise ValueError("zero coefficient")
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise ValueError("non-finite coefficient")
        object.__setattr__(self, "coefficient", c)
        for exps in (self.var_exponents, self.param_exponents):
            for _, e in exps:
                if e <= 0:
                    raise ValueError("exponent maps may only hold positive entries")
        object.__setattr__(self, "var_exponents", tuple(sorted(self.var_exponents)))
        object.__setattr__(self, "param_exponents", tuple(sorted(self.param_exponents)))

    @property
    def key(self):
        return (self.var_exponents, self.param_exponents)


def _combine(terms):
    """Sum coefficients of like monomials, dropping exact cancellations."""
    acc: Dict[tuple, complex] = {}
    for m in terms:
        acc[m.key] = acc.get(m.key, 0j) + m.coefficient
    return [Monomial(c, k[0], k[1]) for k, c in acc.items() if c != 0]


class ParameterizedSystem:
    """N polynomials in N variables and P parameters.

    Immutable after construction; evaluation methods allocate fresh arrays
    and may be called from several threads at once.
    """

    def __init__(self, polynomials, var_names, param_names=()):
        var_names = tuple(var_names)
        param_names = tuple(param_names)
        if len(var_names) == 0:
            raise SystemFormatError("at least one variable is required", "/vars")
        if len(set(var_names)) != len(var_names):
            raise SystemFormatError("duplicate variable name", "/vars")
        if len(set(param_names)) != len(param_names):
            raise SystemFormatError("duplicate parameter name", "/params")
        if set(var_names) & set(param_names):
            raise SystemFormatError("name used as both variable and parameter", "/params")
        if len(polynomials) != len(var_names):
            raise SystemFormatError(
                f"system is not square: {len(polynomials)} polynomials in "
                f"{len(var_names)} variables",
                "/polys",
            )
        polys = []
        for i, poly in enumerate(polynomials):
            for j, m in enumerate(poly):
                for idx, _ in m.var_exponents:
                    if not 0 <= idx < len(var_names):
                        raise SystemFormatError("variable index out of range", f"/polys/{i}/{j}/v")
                for idx, _ in m.param_exponents:
                    if not 0 <= idx < len(param_names):
                        raise SystemFormatError("parameter index out of range", f"/polys/{i}/{j}/p")
            polys.append(tuple(_combine(poly)))
        self.polynomials: Tuple[Tuple[Monomial, ...], ...] = tuple(polys)
        self.var_names = var_names
        self.param_names = param_names
        self._compile()

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def n_monomials(self) -> int:
        return sum(len(p) for p in self.polynomials)

    def _compile(self):
        n, P = self.n_vars, self.n_params
        rows, coefs, vexp, pexp = [], [], [], []
        for i, poly in enumerate(self.polynomials):
            for m in poly:
                rows.append(i)
                coefs.append(m.coefficient)
                ve = np.zeros(n, dtype=np.int64)
                for idx, e in m.var_exponents:
                    ve[idx] = e
                pe = np.zeros(P, dtype=np.int64)
                for idx, e in m.param_exponents:
                    pe[idx] = e
                vexp.append(ve)
                pexp.append(pe)
        M = len(coefs)
        self._coef = np.array(coefs, dtype=complex)
        self._vexp = np.array(vexp, dtype=np.int64).reshape(M, n)
        self._pexp = np.array(pexp, dtype=np.int64).reshape(M, P)
        self._vmax = int(self._vexp.max()) if M else 0
        self._pmax = int(self._pexp.max()) if M and P else 0
        # rows -> polynomial incidence, summing monomial values per equation
        self._incidence = np.zeros((n, M))
        self._incidence[rows, np.arange(M)] = 1.0
        self._vcols = np.arange(n)
        self._pcols = np.arange(P)

    def degrees(self) -> List[int]:
        """Total degree in the variables of each polynomial."""
        return [max((sum(e for _, e in m.var_exponents) for m in poly), default=0)
                for poly in self.polynomials]

    def param_degree(self) -> int:
        """Largest joint degree of any monomial in the parameters."""
        return max((sum(e for _, e in m.param_exponents)
                    for poly in self.polynomials for m in poly), default=0)

    def scaled(self, c: complex) -> "ParameterizedSystem":
        polys = [[Monomial(m.coefficient * c, m.var_exponents, m.param_exponents) for m in poly]
                 for poly in self.polynomials]
        return ParameterizedSystem(polys, self.var_names, self.param_names)

    def __eq__(self, other):
        if not isinstance(other, ParameterizedSystem):
            return NotImplemented
        return (self.var_names == other.var_names
                and self.param_names == other.param_names
                and [set(p) for p in self.polynomials] == [set(p) for p in other.polynomials])

    def __repr__(self):
        return (f"ParameterizedSystem(n_vars={self.n_vars}, n_params={self.n_params}, "
                f"n_monomials={self.n_monomials})")


def _power_table(z: np.ndarray, dmax: int) -> np.ndarray:
    """table[j, d] = z[j] ** d for d = 0..dmax, built by repeated products."""
    table = np.empty((z.shape[0], dmax + 1), dtype=complex)
    table[:, 0] = 1.0
    for d in range(1, dmax + 1):
        table[:, d] = table[:, d - 1] * z
    return table


def _check_lengths(sys: ParameterizedSystem, x, p):
    x = np.asarray(x, dtype=complex).reshape(-1)
    p = np.asarray(p, dtype=complex).reshape(-1)
    if x.shape[0] != sys.n_vars:
        raise ValueError(f"expected {sys.n_vars} variable values, got {x.shape[0]}")
    if p.shape[0] != sys.n_params:
        raise ValueError(f"expected {sys.n_params} parameter values, got {p.shape[0]}")
    return x, p


def _factors(sys, x, p):
    X = _power_table(x, sys._vmax)
    Pt = _power_table(p, sys._pmax)
    vf = X[sys._vcols, sys._vexp]          # (M, N): x_j ** e_mj
    pf = Pt[sys._pcols, sys._pexp]         # (M, P)
    return X, Pt, vf, pf


def evaluate(sys: ParameterizedSystem, x, p) -> np.ndarray:
    """Residual vector F(x; p) of length N."""
    x, p = _check_lengths(sys, x, p)
    _, _, vf, pf = _factors(sys, x, p)
    terms = sys._coef * vf.prod(axis=1) * pf.prod(axis=1)
    return sys._incidence @ terms


def _partials(exps, table, cols, factors):
    """Per-monomial partial derivatives: out[m, j] = d/dz_j of prod_l z_l**e_ml."""
    M, n = exps.shape
    if n == 0:
        return np.empty((M, 0), dtype=complex)
    # product of all factors except column j, from prefix and suffix products
    left = np.ones((M, n), dtype=complex)
    right = np.ones((M, n), dtype=complex)
    if n > 1:
        left[:, 1:] = np.cumprod(factors[:, :-1], axis=1)
        right[:, :-1] = np.cumprod(factors[:, :0:-1], axis=1)[:, ::-1]
    lowered = np.maximum(exps - 1, 0)
    return exps * table[cols, lowered] * left * right


def jacobian(sys: ParameterizedSystem, x, p) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians (dF/dx, dF/dp), shapes N x N and N x P."""
    x, p = _check_lengths(sys, x, p)
    X, Pt, vf, pf = _factors(sys, x, p)
    vprod = vf.prod(axis=1)
    pprod = pf.prod(axis=1)
    dx = _partials(sys._vexp, X, sys._vcols, vf) * (sys._coef * pprod)[:, None]
    dp = _partials(sys._pexp, Pt, sys._pcols, pf) * (sys._coef * vprod)[:, None]
    return sys._incidence @ dx, sys._incidence @ dp


def evaluate_and_jacobian(sys: ParameterizedSystem, x, p, with_params: bool = True):
    """F, dF/dx and (unless ``with_params`` is false) dF/dp in one pass."""
    x, p = _check_lengths(sys, x, p)
    X, Pt, vf, pf = _factors(sys, x, p)
    vprod = vf.prod(axis=1)
    pprod = pf.prod(axis=1)
    F = sys._incidence @ (sys._coef * vprod * pprod)
    dx = _partials(sys._vexp, X, sys._vcols, vf) * (sys._coef * pprod)[:, None]
    if not with_params:
        return F, sys._incidence @ dx, None
    dp = _partials(sys._pexp, Pt, sys._pcols, pf) * (sys._coef * vprod)[:, None]
    return F, sys._incidence @ dx, sys._incidence @ dp


# --- JSON schema -----------------------------------------------------------

def _parse_complex(value, where):
    if isinstance(value, bool):
        raise SystemFormatError("coefficient must be numeric", where)
    if isinstance(value, (int, float)):
        c = complex(value)
    elif (isinstance(value, (list, tuple)) and len(value) == 2
          and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        c = complex(value[0], value[1])
    else:
        raise SystemFormatError("expected a number or an [re, im] pair", where)
    if not (math.isfinite(c.real) and math.isfinite(c.imag)):
        raise SystemFormatError("non-finite value", where)
    return c


def _parse_exponents(obj, names: Mapping[str, int], where):
    if not isinstance(obj, dict):
        raise SystemFormatError("exponent map must be an object", where)
    out = []
    for name, e in obj.items():
        if name not in names:
            raise SystemFormatError(f"unknown name {name!r}", f"{where}/{name}")
        if isinstance(e, bool) or not isinstance(e, int) or e < 0:
            raise SystemFormatError("exponent must be a nonnegative integer", f"{where}/{name}")
        if e > 0:
            out.append((names[name], e))
    return tuple(out)


def system_from_dict(doc) -> ParameterizedSystem:
    if not isinstance(doc, dict):
        raise SystemFormatError("top level must be an object", "")
    for key in ("vars", "polys"):
        if key not in doc:
            raise SystemFormatError(f"missing key {key!r}", "")
    unknown = set(doc) - {"vars", "params", "polys"}
    if unknown:
        raise SystemFormatError(f"unknown keys {sorted(unknown)}", "")
    var_names = doc["vars"]
    param_names = doc.get("params", [])
    for key, names in (("vars", var_names), ("params", param_names)):
        if not isinstance(names, list) or not all(isinstance(s, str) and s for s in names):
            raise SystemFormatError("expected a list of non-empty strings", f"/{key}")
    vindex = {s: i for i, s in enumerate(var_names)}
    pindex = {s: i for i, s in enumerate(param_names)}
    polys_doc = doc["polys"]
    if not isinstance(polys_doc, list):
        raise SystemFormatError("expected a list of polynomials", "/polys")
    polys = []
    for i, pdoc in enumerate(polys_doc):
        if not isinstance(pdoc, list):
            raise SystemFormatError("polynomial must be a list of terms", f"/polys/{i}")
        terms = []
        for j, tdoc in enumerate(pdoc):
            where = f"/polys/{i}/{j}"
            if not isinstance(tdoc, dict) or "c" not in tdoc:
                raise SystemFormatError("term must be an object with key 'c'", where)
            extra = set(tdoc) - {"c", "v", "p"}
            if extra:
                raise SystemFormatError(f"unknown keys {sorted(extra)}", where)
            c = _parse_complex(tdoc["c"], where + "/c")
            ve = _parse_exponents(tdoc.get("v", {}), vindex, where + "/v")
            pe = _parse_exponents(tdoc.get("p", {}), pindex, where + "/p")
            if c != 0:
                terms.append(Monomial(c, ve, pe))
        polys.append(terms)
    return ParameterizedSystem(polys, var_names, param_names)


def parse_system(text) -> ParameterizedSystem:
    """Parse a JSON system document (str or bytes, UTF-8)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemFormatError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}")
    return system_from_dict(doc)


def system_to_dict(sys: ParameterizedSystem) -> dict:
    polys = []
    for poly in sys.polynomials:
        terms = []
        for m in poly:
            terms.append({
                "c": [m.coefficient.real, m.coefficient.imag],
                "v": {sys.var_names[i]: e for i, e in m.var_exponents},
                "p": {sys.param_names[i]: e for i, e in m.param_exponents},
            })
        polys.append(terms)
    return {"vars": list(sys.var_names), "params": list(sys.param_names), "polys": polys}


def serialize_system(sys: ParameterizedSystem, indent=None) -> str:
    return json.dumps(system_to_dict(sys), indent=indent)


def random_dense_system(rng: np.random.Generator, degrees: Sequence[int],
                        n_params: int = 0, density: float = 1.0) -> ParameterizedSystem:
    """Random system for property tests: dense (or thinned) polynomials of the
    given degrees, coefficients of modulus <= 1, each term optionally carrying
    a parameter of degree <= 2."""
    from itertools import product

    n = len(degrees)
    polys = []
    for d in degrees:
        terms = []
        for exps in product(range(d + 1), repeat=n):
            if sum(exps) > d or (density < 1.0 and rng.random() > density and sum(exps) > 0):
                continue
            c = complex(*rng.uniform(-1, 1, 2)) / math.sqrt(2)
            if c == 0:
                continue
            ve = tuple((j, e) for j, e in enumerate(exps) if e)
            pe = ()
            if n_params:
                k = int(rng.integers(0, n_params + 1))
                if k < n_params:
                    pe = ((k, int(rng.integers(1, 3))),)
            terms.append(Monomial(c, ve, pe))
        polys.append(terms)
    return ParameterizedSystem(polys, [f"x{i}" for i in range(n)],
                               [f"p{k}" for k in range(n_params)])


def generic_dense_family(degrees: Sequence[int]) -> ParameterizedSystem:
    """Dense polynomials of the given degrees whose every coefficient is a
    parameter. Over generic parameters the fiber has prod(degrees) points."""
    from itertools import product

    n = len(degrees)
    var_names = [f"x{j}" for j in range(n)]
    param_names: List[str] = []
    polys = []
    for i, d in enumerate(degrees):
        terms = []
        for exps in product(range(d + 1), repeat=n):
            if sum(exps) > d:
                continue
            param_names.append(f"c{i}_" + "_".join(map(str, exps)))
            ve = tuple((j, e) for j, e in enumerate(exps) if e)
            terms.append(Monomial(1.0, ve, ((len(param_names) - 1, 1),)))
        polys.append(terms)
    return ParameterizedSystem(polys, var_names, param_names)
