import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monocount.polysys import (Monomial, ParameterizedSystem, SystemFormatError, evaluate,
                               evaluate_and_jacobian, generic_dense_family, jacobian, parse_system,
                               random_dense_system, serialize_system)


def test_square_root_values(square_root):
    assert evaluate(square_root, [2], [4]) == pytest.approx([0])
    Jx, Jp = jacobian(square_root, [3], [1])
    assert Jx[0, 0] == pytest.approx(6)
    assert Jp[0, 0] == pytest.approx(-1)


def test_rational_values(rational):
    x = 1 / np.sqrt(2)
    assert abs(evaluate(rational, [x], [1])[0]) < 1e-15
    Jx, Jp = jacobian(rational, [x], [1])
    assert Jx[0, 0] == pytest.approx(4 * x)
    assert Jp[0, 0] == pytest.approx(x * x - 1)


def test_complex_coefficients_and_degrees():
    sys = parse_system('{"vars": ["x", "y"], "params": [], "polys": ['
                       '[{"c": [0, 1], "v": {"x": 3, "y": 1}}, {"c": 2}],'
                       '[{"c": 1, "v": {"y": 2}}, {"c": -1}]]}')
    assert sys.degrees() == [4, 2]
    assert sys.n_params == 0
    assert evaluate(sys, [1, 1], []) == pytest.approx([2 + 1j, 0])


def test_like_terms_are_merged():
    m = [Monomial(1.0, ((0, 2),)), Monomial(2.0, ((0, 2),)), Monomial(-1.0, ())]
    sys = ParameterizedSystem([m], ["x"], [])
    assert sys.n_monomials == 2
    assert evaluate(sys, [2], []) == pytest.approx([11])


def test_evaluate_and_jacobian_agree(rng):
    sys = random_dense_system(rng, [2, 3], n_params=2)
    x, p = rng.normal(size=2) + 1j * rng.normal(size=2), rng.normal(size=2) + 0j
    f, Jx, Jp = evaluate_and_jacobian(sys, x, p)
    np.testing.assert_allclose(f, evaluate(sys, x, p))
    Jx2, Jp2 = jacobian(sys, x, p)
    np.testing.assert_allclose(Jx, Jx2)
    np.testing.assert_allclose(Jp, Jp2)
    assert evaluate_and_jacobian(sys, x, p, with_params=False)[2] is None


def test_length_mismatch_raises(square_root):
    with pytest.raises(ValueError):
        evaluate(square_root, [1, 2], [1])
    with pytest.raises(ValueError):
        jacobian(square_root, [1], [])


@pytest.mark.parametrize("doc, where", [
    ('{"vars": ["x"], "polys": [[{"c": 1, "v": {"y": 1}}]]}', "/polys/0/0/v"),
    ('{"vars": ["x"], "polys": [[{"c": 1, "v": {"x": -1}}]]}', "/polys/0/0/v"),
    ('{"vars": ["x"], "polys": [[{"v": {"x": 1}}]]}', "/polys/0/0"),
    ('{"polys": []}', ""),
    ('{"vars": ["x"], "polys": [[{"c": 1, "q": 1}]]}', "/polys/0/0"),
    ('{"vars": ["x"], "polys": [[{"c": 1}], [{"c": 2}]]}', ""),
    ('{"vars": ["x"], "polys": [[{"c": "one"}]]}', "/polys/0/0/c"),
    ('{"vars": ["x"], "polys": [[{"c": 1}]', "line 1"),
])
def test_parse_errors_carry_location(doc, where):
    with pytest.raises(SystemFormatError) as info:
        parse_system(doc)
    assert info.value.location.startswith(where)


def test_round_trip(rng):
    sys = random_dense_system(rng, [3, 2, 2], n_params=3, density=0.6)
    again = parse_system(serialize_system(sys, indent=2))
    assert again == sys
    assert json.loads(serialize_system(again)) == json.loads(serialize_system(sys))


def test_scaling_is_linear(rng):
    sys = random_dense_system(rng, [2, 2], n_params=1)
    x, p = rng.normal(size=2) + 0j, np.array([0.3 - 0.1j])
    np.testing.assert_allclose(evaluate(sys.scaled(2 - 1j), x, p), (2 - 1j) * evaluate(sys, x, p))


def test_generic_dense_family_shape():
    sys = generic_dense_family([2, 3])
    assert sys.n_vars == 2
    assert sys.n_params == 6 + 10
    assert sys.param_degree() == 1
    assert sys.degrees() == [2, 3]


def _central_difference(f, z, h):
    cols = []
    for j in range(len(z)):
        e = np.zeros(len(z), dtype=complex)
        e[j] = h
        cols.append((f(z + e) - f(z - e)) / (2 * h))
    return np.array(cols).T


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    degrees = rng.integers(1, 5, size=n).tolist()
    sys = random_dense_system(rng, degrees, n_params=int(rng.integers(0, 3)), density=0.7)
    x = (rng.normal(size=n) + 1j * rng.normal(size=n)) / 2
    p = (rng.normal(size=sys.n_params) + 1j * rng.normal(size=sys.n_params)) / 2
    Jx, Jp = jacobian(sys, x, p)
    h = 1e-6
    fd_x = _central_difference(lambda z: evaluate(sys, z, p), x, h)
    assert np.max(np.abs(Jx - fd_x)) <= 1e-6 * (1 + np.max(np.abs(Jx)))
    if sys.n_params:
        fd_p = _central_difference(lambda z: evaluate(sys, x, z), p, h)
        assert np.max(np.abs(Jp - fd_p)) <= 1e-6 * (1 + np.max(np.abs(Jp)))
