import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from leadfollow.dynamics import (
    DynamicsDiagram,
    LeaderSetSupport,
    NoFrequentStates,
    baum_welch,
    count_occurrences,
    dijkstra_paths,
    encode_states,
    fit_diagram,
    leader_set_supports,
    mine_frequent_sets,
    mine_sequences,
    normalize_offdiag,
    path_support,
    state_changes,
)
from leadfollow.pipeline import PipelineConfig, run_pipeline
from leadfollow.simgen import ScenarioSpec, replica_seeds, simulate


def S(*ids):
    return frozenset(ids)


def test_constant_series():
    assert mine_frequent_sets([S("1")] * 7) == [LeaderSetSupport(S("1"), 1.0)]


def test_two_sets_half_each():
    L = [S("1"), S("1"), S("2"), S("2")]
    assert mine_frequent_sets(L, 0.4) == [LeaderSetSupport(S("1"), 0.5), LeaderSetSupport(S("2"), 0.5)]


def test_empty_set_counts_in_support_but_is_never_frequent():
    L = [S(), S(), S("1"), S("2")]
    sup = leader_set_supports(L)
    assert sup[S()] == 0.5
    assert [f.set for f in mine_frequent_sets(L, 0.0)] == [S("1"), S("2")]
    with pytest.raises(ValueError):
        mine_frequent_sets(L, 1.5)


def test_encode_examples():
    L = [S("1"), S("2"), S("1")]
    enc = encode_states(L, mine_frequent_sets(L))
    assert enc.seq.tolist() == [0, 1, 0]
    enc = encode_states([S("1"), S(), S("2")], [S("1"), S("2")])
    assert enc.seq.tolist() == [0, 1]
    assert enc.positions.tolist() == [0, 2]
    with pytest.raises(NoFrequentStates):
        encode_states(L, mine_frequent_sets(L, 0.9))


def test_alternating_sequence_gives_unit_edges():
    L = [S("1"), S("2")] * 10
    enc = encode_states(L, mine_frequent_sets(L))
    d = fit_diagram(enc)
    np.testing.assert_allclose(d.A_star, [[0, 1], [1, 0]], atol=1e-9)


def test_three_to_one_split():
    seq = np.array([0, 1, 0, 1, 0, 1, 0, 2, 0])
    fit = baum_welch(seq, 3)
    want = oracles.bigram_mle(seq, 3)
    np.testing.assert_allclose(fit.A[0], want[0], atol=1e-6)
    A_star = normalize_offdiag(fit.A)
    assert A_star[0, 1] == pytest.approx(0.75, abs=1e-6)
    assert A_star[0, 2] == pytest.approx(0.25, abs=1e-6)


def test_single_state_gives_no_edges():
    enc = encode_states([S("1")] * 5, [S("1")])
    d = fit_diagram(enc)
    assert d.n == 1 and d.edges() == []


@given(st.integers(2, 6), st.integers(2, 500), st.integers(0, 2**32 - 1))
@settings(max_examples=100)
def test_baum_welch_matches_bigram_counts(m, length, seed):
    rng = np.random.default_rng(seed)
    seq = rng.integers(0, m, size=length)
    fit = baum_welch(seq, m)
    want = oracles.bigram_mle(seq, m)
    seen = want.sum(axis=1) > 0
    assert np.abs(fit.A[seen] - want[seen]).max() <= 1e-6
    # states never left keep a row-stochastic placeholder
    np.testing.assert_allclose(fit.A.sum(axis=1), 1.0, atol=1e-9)
    A_star = normalize_offdiag(fit.A)
    assert np.all(np.diag(A_star) == 0.0)
    rs = A_star.sum(axis=1)
    has = rs > 0
    np.testing.assert_allclose(rs[has], 1.0, atol=1e-9)


@given(st.lists(st.sampled_from([S(), S("1"), S("2"), S("1", "2"), S("3")]), min_size=1, max_size=60), st.randoms())
def test_supports_sum_to_one_and_ignore_order(L, rnd):
    sup = leader_set_supports(L)
    assert math.isclose(sum(sup.values()), 1.0, abs_tol=1e-12)
    shuffled = list(L)
    rnd.shuffle(shuffled)
    assert leader_set_supports(shuffled) == sup


def _all_simple_paths(A, i, j):
    m = A.shape[0]
    others = [k for k in range(m) if k not in (i, j)]
    for r in range(len(others) + 1):
        for mid in itertools.permutations(others, r):
            p = (i, *mid, j)
            if all(A[a, b] > 0 for a, b in zip(p, p[1:])):
                yield p, sum(1.0 / A[a, b] for a, b in zip(p, p[1:]))


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=60)
def test_dijkstra_matches_exhaustive_enumeration(m, seed):
    rng = np.random.default_rng(seed)
    A = rng.random((m, m)) * (rng.random((m, m)) < 0.6)
    A = normalize_offdiag(A)
    for i in range(m):
        reach = dijkstra_paths(A, i)
        for j in range(m):
            if i == j:
                continue
            cands = list(_all_simple_paths(A, i, j))
            if not cands:
                assert j not in reach
                continue
            best = min(c for _, c in cands)
            cost, path = reach[j]
            assert cost == pytest.approx(best, rel=1e-12)
            assert sum(1.0 / A[a, b] for a, b in zip(path, path[1:])) == pytest.approx(cost, rel=1e-12)


def test_single_edge_path_support():
    d = DynamicsDiagram((S("1"), S("2")), (0.5, 0.5), np.array([[0.0, 1.0], [0.0, 0.0]]))
    seq = [0, 0, 1, 1, 0, 1, 0, 1, 0, 1]
    # state changes: 0->1 four times, 1->0 three times
    mined = mine_sequences(d, seq)
    assert mined.n_changes == 7
    (p,) = mined.paths
    assert p.nodes == (0, 1) and p.nu == 4
    assert p.supp == pytest.approx(4 / 7)
    assert mined.unreachable == [(1, 0)]
    only_forward = [0, 1, 1, 1]
    assert path_support((0, 1), only_forward) == (1.0, 1)


def test_nu_is_rarest_step():
    seq = [0, 1, 2, 0, 1, 2, 0, 1, 0]
    assert state_changes(seq)[:3] == [(0, 1), (1, 2), (2, 0)]
    assert count_occurrences((0, 1, 2), seq) == 2
    assert count_occurrences((0, 1, 2), seq, strict=True) == 2
    assert count_occurrences((1, 2, 0, 1), seq) == 2
    supp, nu = path_support((0, 1, 2), seq)
    assert (nu, supp) == (2, 2 * 2 / 8)


def test_strict_counting_needs_contiguous_runs():
    seq = [0, 1, 0, 2, 1, 2]
    assert count_occurrences((0, 1, 2), seq) == 1
    assert count_occurrences((0, 1, 2), seq, strict=True) == 0


def test_diagram_json_roundtrip():
    d = DynamicsDiagram((S("1"), S("2", "3")), (0.4, 0.6), np.array([[0.0, 1.0], [1.0, 0.0]]))
    back = DynamicsDiagram.from_json(d.to_json())
    assert back.states == d.states and back.supports == d.supports
    np.testing.assert_array_equal(back.A_star, d.A_star)
    assert "{2,3}" in d.to_dot()


def test_type2_replica_recovers_the_cycle():
    seed = replica_seeds(0, 1)[0]
    ds, gt = simulate(ScenarioSpec(dynamics="type2", seed=seed))
    res = run_pipeline(ds, PipelineConfig(omega=40))
    d = res.diagram
    assert set(d.states) == {S("1"), S("2"), S("3"), S("4")}
    for a, b in [("1", "2"), ("2", "3"), ("3", "4"), ("4", "1")]:
        assert d.A_star[d.index({a}), d.index({b})] > 0.9
    assert all(abs(s - 0.25) < 0.05 for s in d.supports)
