import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_registry
from monocount.monodromy import (FabricateLinearInParams, LoopRecord, ResidualError, SeedError,
                                 SolutionRegistry, UserSupplied, loop_rng, random_loop,
                                 registry_insert, run_loop, seed_solution, transport, triangle_loop)
from monocount.polysys import evaluate, generic_dense_family, parse_system


def test_triangle_around_origin_finds_second_root(square_root):
    reg = make_registry(square_root, [1], [1])
    loop = triangle_loop([1], [-1 + 1j], [-1 - 1j])
    rec = run_loop(square_root, reg, loop, loop_index=1)
    assert len(reg) == 2
    assert reg[1][0] == pytest.approx(-1)
    assert rec.end_ids == {1}
    assert (rec.n_start, rec.n_end, rec.n_overlap, rec.n_new, rec.n_failures) == (1, 1, 0, 1, 0)
    assert rec.known_after == 2


def test_triangle_missing_origin_recaptures(square_root):
    reg = make_registry(square_root, [1], [1])
    rec = run_loop(square_root, reg, triangle_loop([1], [2 + 1j], [2 - 1j]))
    assert rec.n_overlap == 1 and rec.n_new == 0
    assert len(reg) == 1


def test_cube_root_winding():
    sys = parse_system('{"vars": ["x"], "params": ["p"], "polys": [[{"c": 1, "v": {"x": 3}}, {"c": -1, "p": {"p": 1}}]]}')
    w = np.exp(2j * np.pi / 3)
    loop = triangle_loop([1], [w], [w * w])
    res = transport(sys, [1], loop)
    assert res.success
    assert res.endpoint[0] == pytest.approx(w, abs=1e-10)


def test_registry_dedup_and_gate(square_root):
    reg = make_registry(square_root, [1], [1])
    assert registry_insert(reg, [1 + 1e-9]) == (0, False)
    assert registry_insert(reg, [-1]) == (1, True)
    with pytest.raises(ResidualError):
        registry_insert(reg, [np.sqrt(1 + 1e-3)])
    with pytest.raises(ResidualError):
        registry_insert(reg, [0.0])
    assert len(reg) == 2


def test_registry_json_round_trip(square_root):
    reg = make_registry(square_root, [1], [1, -1])
    again = SolutionRegistry.from_json(square_root, reg.to_json())
    np.testing.assert_array_equal(again.points(), reg.points())
    np.testing.assert_array_equal(again.base, reg.base)


def test_registry_json_rejects_non_solutions(square_root):
    doc = make_registry(square_root, [1], [1]).to_dict()
    doc["points"].append([[0.5, 0.0]])
    with pytest.raises(ResidualError):
        SolutionRegistry.from_dict(square_root, doc)


def test_user_seed(square_root):
    x, p = seed_solution(square_root, UserSupplied([1], [1]))
    assert x[0] == 1 and p[0] == 1
    with pytest.raises(SeedError):
        seed_solution(square_root, UserSupplied([2], [1]))
    with pytest.raises(SeedError):
        seed_solution(square_root, UserSupplied([1, 1], [1]))


def test_fabricated_seed_for_given_point(square_root):
    x, p = seed_solution(square_root, FabricateLinearInParams(np.random.default_rng(0), x=[3]))
    assert p[0] == pytest.approx(9)


def test_fabrication_needs_linear_parameters():
    sys = parse_system('{"vars": ["x"], "params": ["p"], "polys": [[{"c": 1, "v": {"x": 2}}, {"c": -1, "p": {"p": 2}}]]}')
    with pytest.raises(SeedError):
        seed_solution(sys, FabricateLinearInParams(np.random.default_rng(0)))
    nopar = parse_system('{"vars": ["x"], "params": [], "polys": [[{"c": 1, "v": {"x": 2}}, {"c": -1}]]}')
    with pytest.raises(SeedError):
        seed_solution(nopar, FabricateLinearInParams(np.random.default_rng(0)))


def test_loop_rng_streams_are_reproducible():
    a = loop_rng(7, 3).random(4)
    np.testing.assert_array_equal(a, loop_rng(7, 3).random(4))
    assert not np.array_equal(a, loop_rng(7, 4).random(4))


def test_random_loop_is_closed():
    loop = random_loop([1, 2j], np.random.default_rng(1), scale=0.5)
    assert len(loop.segments) == 3
    np.testing.assert_array_equal(loop.segments[0].a, loop.segments[-1].b)


def test_loop_record_conservation():
    with pytest.raises(ValueError):
        LoopRecord(1, {0, 1}, {0}, 2, 2, 1, 1, 1)
    with pytest.raises(ValueError):
        LoopRecord(1, {0, 1}, {0}, 2, 1, 1, 1, 1)
    rec = LoopRecord.from_counts(10, 8, 3)
    assert (rec.n_failures, rec.n_new, rec.known_after) == (2, 5, 15)


def test_threads_do_not_change_results():
    sys = generic_dense_family([4])
    x, p = seed_solution(sys, FabricateLinearInParams(np.random.default_rng(5)))
    outs = []
    for threads in (1, 4):
        reg = make_registry(sys, p, [x])
        recs = [run_loop(sys, reg, random_loop(p, loop_rng(5, k)), threads=threads) for k in range(1, 4)]
        outs.append((reg.points(), [(r.n_overlap, r.n_new) for r in recs]))
    np.testing.assert_array_equal(outs[0][0], outs[1][0])
    assert outs[0][1] == outs[1][1]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_registry_monotone_and_conserving(seed, degree):
    sys = generic_dense_family([degree])
    x, p = seed_solution(sys, FabricateLinearInParams(np.random.default_rng(seed)))
    reg = make_registry(sys, p, [x])
    before = len(reg)
    for k in range(1, 4):
        snapshot = reg.points()
        rec = run_loop(sys, reg, random_loop(p, loop_rng(seed, k)), loop_index=k)
        assert len(reg) >= before
        np.testing.assert_array_equal(reg.points()[:before], snapshot)
        assert rec.n_end + rec.n_failures == rec.n_start == before
        assert rec.n_overlap + rec.n_new == rec.n_end
        assert rec.known_after == len(reg) == before + rec.n_new
        assert rec.end_ids <= set(reg.ids)
        before = len(reg)
    assert len(reg) <= degree
    for pt in reg.entries:
        assert np.max(np.abs(evaluate(sys, pt, p))) < 1e-10
