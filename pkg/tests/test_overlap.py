import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_obs
from oracles import brute_force_kcg, random_kcg
from edgebandit.errors import CapacityError, InfeasibleError
from edgebandit.overlap import (KcgInstance, KcgItem, OverlapGraph, SeenOState, associate,
                                build_explore_kcg, build_kcg, decision_profit, enumerate_decisions,
                                find_components, per_sbs_profit, seeno_step, seeno_update, solve_kcg)
from edgebandit.seen import SeenState, seen_select
from edgebandit.slot import SlotObservation, serving_map


def test_components_examples():
    g = OverlapGraph.from_edges(5, [(2, 3), (3, 4)])
    assert find_components(g) == [(0,), (1,), (2, 3, 4)]
    assert find_components(OverlapGraph.from_edges(4, [])) == [(0,), (1,), (2,), (3,)]
    full = OverlapGraph.from_edges(5, itertools.combinations(range(5), 2))
    assert find_components(full) == [(0, 1, 2, 3, 4)]


@settings(max_examples=50)
@given(st.integers(1, 15), st.lists(st.tuples(st.integers(0, 14), st.integers(0, 14)), max_size=30))
def test_components_partition_vertices(n, edges):
    edges = [(i, j) for i, j in edges if i < n and j < n]
    comps = find_components(OverlapGraph.from_edges(n, edges))
    flat = sorted(v for c in comps for v in c)
    assert flat == list(range(n))
    label = {v: k for k, c in enumerate(comps) for v in c}
    for i, j in edges:
        assert label[i] == label[j]


def test_geometry_edges():
    pos = np.array([[0, 0], [250, 0], [1000, 1000]], dtype=float)
    g = OverlapGraph.from_geometry(pos, [150, 150, 150])
    assert g.edges == frozenset({(0, 1)})
    assert OverlapGraph.from_geometry(pos, [0, 0, 0]).edges == frozenset()
    # touching disks are not an edge
    assert OverlapGraph.from_geometry(np.array([[0, 0], [300, 0]]), [150, 150]).edges == frozenset()


def test_decisions_examples():
    assert enumerate_decisions((5,)) == [(5,)]
    assert enumerate_decisions((2, 3, 4)) == [(2,), (3,), (4,), (2, 3), (2, 4), (3, 4), (2, 3, 4)]
    assert len(enumerate_decisions(range(4))) == 15
    assert len(enumerate_decisions(range(12))) == 4095
    with pytest.raises(CapacityError):
        enumerate_decisions(range(13))


def test_associate_examples():
    gains = np.array([[0.0, 0.0, 0.5, 0.9]])
    assert associate(gains, (2, 3)).tolist() == [3]
    assert associate(gains, (2,)).tolist() == [2]
    assert associate(gains, (0, 1)).tolist() == [-1]


def test_associate_argmax_property():
    rng = np.random.default_rng(4)
    gains = rng.random((50, 6)) * (rng.random((50, 6)) < 0.6)
    for z in enumerate_decisions(range(6)):
        a = associate(gains, z)
        for m in range(50):
            g = gains[m, list(z)]
            if g.max() <= 0:
                assert a[m] == -1
            else:
                assert gains[m, a[m]] == g.max() and a[m] in z


def test_decision_profit_examples():
    gains = np.array([[0.5, 0.9], [0.7, 0.0]])
    weights = np.array([[1.0, 2.0], [3.0, 0.0]])
    demand = np.array([[4.0, 4.0], [5.0, 0.0]])
    assert decision_profit((1,), gains[1:], weights[1:], demand[1:]) == 0.0
    assert decision_profit((0,), gains[1:], weights[1:], demand[1:]) == 15.0
    assert decision_profit((0, 1), gains, weights, demand) == pytest.approx(2 * 4 + 3 * 5)


def test_decision_profit_against_reassignment_oracle():
    rng = np.random.default_rng(5)
    M, N = 40, 4
    gains = rng.random((M, N)) * (rng.random((M, N)) < 0.7)
    weights = rng.uniform(0.05, 0.5, (M, N)) * (gains > 0)
    demand = rng.uniform(0, 10, (M, N))
    for z in enumerate_decisions(range(N)):
        total = 0.0
        for m in range(M):
            best = max(z, key=lambda n: (gains[m, n], -n))
            if gains[m, best] > 0:
                total += weights[m, best] * demand[m, best]
        assert decision_profit(z, gains, weights, demand) == pytest.approx(total)


def item(z, p):
    return KcgItem(z, len(z), p, z)


def test_kcg_examples():
    classes = [[item((1,), 5.0)], [item((2,), 3.0), item((3,), 4.0), item((2, 3), 6.0)]]
    sol = solve_kcg(KcgInstance(classes, 2))
    assert sol.rented == (1, 3) and sol.profit == 9.0
    empty = solve_kcg(KcgInstance(classes, 0))
    assert empty.rented == () and empty.profit == 0.0
    with pytest.raises(InfeasibleError):
        solve_kcg(KcgInstance(classes, -1))


def test_kcg_matches_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(300):
        inst, _ = random_kcg(rng)
        sol = solve_kcg(inst)
        assert sol.profit == pytest.approx(brute_force_kcg(inst), abs=1e-9)
        assert sol.cost <= inst.budget
        assert len({id(cls) for cls in inst.classes for it in sol.items if it in cls}) == len(sol.items)


def test_kcg_tie_break_prefers_more_budget_then_lexmin():
    classes = [[item((0,), 1.0)], [item((1,), 0.0)], [item((2,), 1.0)]]
    assert solve_kcg(KcgInstance(classes, 3)).rented == (0, 1, 2)
    assert solve_kcg(KcgInstance(classes, 1)).rented == (0,)


def test_kcg_dump_lists_items():
    text = build_kcg([(0, 1)], 1, lambda z: {n: 1.0 for n in z}).dump()
    assert "budget 1" in text and "decision [0, 1]" in text


def test_explore_kcg_examples():
    prof = lambda z: {n: float(n) for n in z}
    inst = build_explore_kcg([(2, 3)], {2}, 3, prof)
    assert [[(it.decision, it.cost, it.profit) for it in c] for c in inst.classes] == [[((2, 3), 1, 3.0)]]
    assert inst.budget == 2 and inst.forced == (2,)
    full = build_explore_kcg([(2, 3), (4,)], {2, 3}, 3, prof)
    assert [(it.decision, it.cost) for it in full.classes[0]] == [((2, 3), 0)]
    assert full.budget == 1
    sol = solve_kcg(full)
    assert sol.rented == (2, 3, 4)


def test_explore_kcg_too_many_under_explored():
    with pytest.raises(InfeasibleError):
        build_explore_kcg([(0, 1, 2)], {0, 1, 2}, 2, lambda z: {n: 0.0 for n in z})


def overlap_obs(gains, weights, contexts, t=1):
    gains = np.asarray(gains, dtype=float)
    return SlotObservation(t, np.asarray(contexts, dtype=float), gains, gains > 0,
                           np.asarray(weights, dtype=float), overlap=True)


def seeno_state(N, b, comps, T=500):
    return SeenOState(SeenState.create(T, b, [1.0] * N, [2] * N, 10.0), comps)


def test_seeno_update_covers_all_sbs():
    st_ = seeno_state(3, 1, [(0, 1), (2,)])
    obs = overlap_obs([[0.5, 0.2, 0.0], [0.0, 0.0, 0.3]], [[0.1, 0.1, 0], [0, 0, 0.1]],
                      [[0.1, 0.1], [0.9, 0.9]])
    serving = serving_map(obs, (0,))
    seeno_update(st_, obs, (0,), serving, np.array([3, 7]))
    for n in (0, 1):
        lr = st_.seen.learners[n]
        c = int(lr.cells_of(obs.contexts[:1])[0])
        assert (lr.store.count(c), lr.store.mean(c)) == (1, 3.0)
    assert len(st_.seen.learners[2].store) == 0
    assert st_.t == 2


def test_seeno_single_component_all_rented():
    rng = np.random.default_rng(7)
    N = 5
    st_ = seeno_state(N, N, [tuple(range(N))])
    for lr in st_.seen.learners:
        for c in range(lr.partition.n_cells):
            lr.store.counts[c], lr.store.means[c] = 10**6, float(rng.uniform(0, 10))
    gains = rng.random((30, N))
    obs = overlap_obs(gains, rng.uniform(0.05, 0.5, (30, N)), rng.random((30, 2)), t=50)
    sel = seeno_step(st_, obs, rng)
    # brute force over all rentals of at most N SBSs
    demand = np.zeros((30, N))
    for n, lr in enumerate(st_.seen.learners):
        demand[:, n] = lr.estimates(lr.cells_of(obs.contexts))
    best = max(decision_profit(z, gains, obs.weights, demand) for z in enumerate_decisions(range(N)))
    assert decision_profit(sel.sbs, gains, obs.weights, demand) == pytest.approx(best)


def test_seeno_random_exploration_when_many_under_explored():
    st_ = seeno_state(4, 2, [(0, 1), (2,), (3,)])
    st_.seen.t = 3
    obs = overlap_obs(np.eye(4), np.eye(4) * 0.1, np.full((4, 2), 0.5), t=3)
    sel = seeno_step(st_, obs, np.random.default_rng(0))
    assert sel.phase == "explore" and len(sel.sbs) == 2


def test_seeno_degenerates_to_seen_without_overlap():
    rng = np.random.default_rng(8)
    N, b = 7, 3
    for _ in range(30):
        seen = SeenState.create(500, b, [1.0] * N, [2] * N, 10.0)
        for lr in seen.learners:
            for c in range(lr.partition.n_cells):
                lr.store.counts[c], lr.store.means[c] = 10**6, float(rng.uniform(0, 10))
        seen.t = 100
        owner = rng.integers(0, N, size=25)
        obs = make_obs(owner, rng.uniform(0.05, 0.5, 25), rng.random((25, 2)), N, t=100)
        a = seen_select(seen, obs, np.random.default_rng(1))
        so = SeenOState(seen, [(n,) for n in range(N)])
        obs_o = SlotObservation(100, obs.contexts, obs.gains, obs.connected, obs.weights, overlap=True)
        assert seeno_step(so, obs_o, np.random.default_rng(1)) == a
