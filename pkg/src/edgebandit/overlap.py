"""Coverage overlap: SBS components, component-wise decisions, knapsack with conflict graph, SEEN-O."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import CapacityError, ConfigError, InfeasibleError
from .seen import SeenState, under_explored
from .slot import EXPLOIT, EXPLORE, Selection, SlotObservation

DEFAULT_COMPONENT_CAP = 12

Decision = tuple[int, ...]


@dataclass(frozen=True)
class OverlapGraph:
    n_sbs: int
    edges: frozenset[tuple[int, int]]

    @classmethod
    def from_geometry(cls, positions: np.ndarray, ranges: Sequence[float]) -> "OverlapGraph":
        """Edge ``(i, j)`` iff ``|p_i - p_j| < r_i + r_j``."""
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        r = np.asarray(ranges, dtype=float)
        n = len(pos)
        edges = set()
        for i in range(n):
            for j in range(i + 1, n):
                if np.hypot(*(pos[i] - pos[j])) < r[i] + r[j]:
                    edges.add((i, j))
        return cls(n, frozenset(edges))

    @classmethod
    def from_edges(cls, n_sbs: int, edges: Iterable[tuple[int, int]]) -> "OverlapGraph":
        return cls(n_sbs, frozenset((min(i, j), max(i, j)) for i, j in edges if i != j))

    def neighbours(self, n: int) -> list[int]:
        return sorted({j for i, j in self.edges if i == n} | {i for i, j in self.edges if j == n})


def find_components(graph: OverlapGraph) -> list[tuple[int, ...]]:
    """Maximal connected components, each sorted, ordered by smallest member."""
    if graph.n_sbs == 0:
        return []
    rows = [i for i, j in graph.edges] + [j for i, j in graph.edges]
    cols = [j for i, j in graph.edges] + [i for i, j in graph.edges]
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(graph.n_sbs, graph.n_sbs))
    _, labels = connected_components(adj, directed=False)
    groups: dict[int, list[int]] = {}
    for n, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(n)
    return sorted((tuple(g) for g in groups.values()), key=lambda c: c[0])


def enumerate_decisions(component: Sequence[int], cap: int = DEFAULT_COMPONENT_CAP) -> list[Decision]:
    """All nonempty subsets of a component, by size then lexicographically."""
    comp = sorted(component)
    if len(comp) > cap:
        raise CapacityError(
            f"component of {len(comp)} SBSs exceeds the cap of {cap} "
            f"({2 ** len(comp) - 1} decisions); reduce SBS range/density or raise the cap")
    return [z for k in range(1, len(comp) + 1) for z in itertools.combinations(comp, k)]


def associate(gains: np.ndarray, z: Sequence[int]) -> np.ndarray:
    """Serving SBS per user under decision ``z`` (``-1`` if no SBS of ``z`` reaches the user).

    ``gains`` is ``(M, N)``; the best-gain SBS of ``z`` wins, ties to the lowest id.
    """
    zs = np.asarray(sorted(z), dtype=np.int64)
    g = np.asarray(gains, dtype=float)[:, zs]
    out = np.full(g.shape[0], -1, dtype=np.int64)
    if g.shape[0] == 0:
        return out
    best = np.argmax(g, axis=1)
    ok = g[np.arange(g.shape[0]), best] > 0
    out[ok] = zs[best[ok]]
    return out


def per_sbs_profit(z: Sequence[int], gains: np.ndarray, weights: np.ndarray,
                   demand: np.ndarray) -> dict[int, float]:
    """``u_n(z) = sum over users associated to n of u_{n,m} * demand[m, n]`` for each ``n`` in ``z``.

    ``demand`` is ``(M, N)``: the demand value SBS ``n`` attributes to user
    ``m`` (its cell estimate, or the true mean).
    """
    assoc = associate(gains, z)
    out = {}
    for n in sorted(z):
        users = np.flatnonzero(assoc == n)
        out[n] = float(np.dot(weights[users, n], demand[users, n])) if users.size else 0.0
    return out


def decision_profit(z: Sequence[int], gains: np.ndarray, weights: np.ndarray, demand: np.ndarray) -> float:
    return sum(per_sbs_profit(z, gains, weights, demand).values())


@dataclass(frozen=True)
class KcgItem:
    sbs: Decision  # SBSs this item adds to the rented set
    cost: int
    profit: float
    decision: Decision  # full component-wise decision it stands for


@dataclass
class KcgInstance:
    """Multiple-choice knapsack: at most one item per class, total cost <= budget.

    ``forced`` lists SBSs that are rented regardless (already paid for).
    """

    classes: list[list[KcgItem]]
    budget: int
    forced: tuple[int, ...] = ()

    def dump(self) -> str:
        lines = [f"budget {self.budget}", f"forced {list(self.forced)}"]
        for k, cls in enumerate(self.classes):
            lines.append(f"class {k} ({len(cls)} items)")
            for it in cls:
                lines.append(f"  decision {list(it.decision)} adds {list(it.sbs)} "
                             f"cost {it.cost} profit {it.profit!r}")
        return "\n".join(lines) + "\n"


@dataclass
class KcgSolution:
    items: list[KcgItem]
    profit: float
    rented: tuple[int, ...]

    @property
    def cost(self) -> int:
        return sum(it.cost for it in self.items)


def _better(a: tuple[float, tuple[int, ...]], b: tuple[float, tuple[int, ...]]) -> bool:
    """Is partial solution ``a`` preferred to ``b`` (same cost)? Higher profit, then lexicographically smaller."""
    tol = 1e-9 * max(1.0, abs(a[0]), abs(b[0]))
    if a[0] > b[0] + tol:
        return True
    if b[0] > a[0] + tol:
        return False
    return a[1] < b[1]


def solve_kcg(instance: KcgInstance) -> KcgSolution:
    """Exact optimum by dynamic programming over classes and used budget.

    Among optimal selections the one using the most budget wins, then the
    lexicographically smallest sorted set of added SBS ids.
    """
    b = instance.budget
    if b < 0:
        raise InfeasibleError(f"budget {b} is negative: forced SBSs exceed the budget")
    # dp[c] = (profit, sorted added ids, items) for exactly cost c
    dp: list[tuple[float, tuple[int, ...], tuple[KcgItem, ...]] | None] = [None] * (b + 1)
    dp[0] = (0.0, (), ())
    for cls in instance.classes:
        new = list(dp)
        for c, state in enumerate(dp):
            if state is None:
                continue
            for it in cls:
                c2 = c + it.cost
                if c2 > b:
                    continue
                cand = (state[0] + it.profit, tuple(sorted(state[1] + it.sbs)), state[2] + (it,))
                cur = new[c2]
                if cur is None or _better(cand[:2], cur[:2]):
                    new[c2] = cand
        dp = new
    best_c, best = 0, dp[0]
    for c in range(1, b + 1):
        s = dp[c]
        if s is None:
            continue
        tol = 1e-9 * max(1.0, abs(s[0]), abs(best[0]))
        # strictly better profit, or tie with more budget used
        if s[0] > best[0] + tol or abs(s[0] - best[0]) <= tol:
            best_c, best = c, s
    rented = tuple(sorted(set(instance.forced) | set(best[1])))
    return KcgSolution(list(best[2]), best[0], rented)


def build_kcg(components: Sequence[Sequence[int]], budget: int,
              profit_of: Callable[[Decision], Mapping[int, float]],
              cap: int = DEFAULT_COMPONENT_CAP) -> KcgInstance:
    """Unrestricted instance: every nonempty subset of every component, cost ``|z|``."""
    classes = []
    for comp in components:
        items = []
        for z in enumerate_decisions(comp, cap):
            items.append(KcgItem(z, len(z), sum(profit_of(z).values()), z))
        classes.append(items)
    return KcgInstance(classes, budget)


def build_explore_kcg(components: Sequence[Sequence[int]], under: Iterable[int], budget: int,
                      profit_of: Callable[[Decision], Mapping[int, float]],
                      cap: int = DEFAULT_COMPONENT_CAP) -> KcgInstance:
    """Instance for exploration slots with ``0 < |under| < budget``.

    Drops singleton decisions of under-explored SBSs and any decision that
    omits an under-explored member of its component. Remaining decisions
    cost ``|z minus under|`` and earn only the utility of their non-under-explored
    SBSs; the budget shrinks by ``|under|``.
    """
    ue = set(int(n) for n in under)
    b_tilde = budget - len(ue)
    if b_tilde < 0:
        raise InfeasibleError(f"{len(ue)} under-explored SBSs exceed the budget {budget}")
    classes = []
    for comp in components:
        must = ue & set(comp)
        items = []
        for z in enumerate_decisions(comp, cap):
            zs = set(z)
            if len(z) == 1 and z[0] in ue:
                continue
            if not must <= zs:
                continue
            added = tuple(sorted(zs - ue))
            prof = profit_of(z)
            items.append(KcgItem(added, len(added), sum(prof[n] for n in added), z))
        if items:
            classes.append(items)
    return KcgInstance(classes, b_tilde, forced=tuple(sorted(ue)))


# ---------------------------------------------------------------------------
# SEEN-O


def _demand_table(state: SeenState, obs: SlotObservation, users: np.ndarray,
                  sbs: Sequence[int]) -> np.ndarray:
    """``(M, N)`` estimated demand of each user as seen by each SBS (0 where not covering)."""
    table = np.zeros((obs.n_users, obs.n_sbs))
    cov = obs.connected
    for n in sbs:
        rows = users[cov[users, n]]
        if rows.size:
            lr = state.learners[n]
            table[rows, n] = lr.estimates(lr.cells_of(obs.contexts[rows]))
    return table


@dataclass
class SeenOState:
    seen: SeenState
    components: list[tuple[int, ...]]
    cap: int = DEFAULT_COMPONENT_CAP
    last_instance: KcgInstance | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        for comp in self.components:
            if len(comp) > self.cap:
                enumerate_decisions(comp, self.cap)  # raises CapacityError

    @property
    def t(self) -> int:
        return self.seen.t


def _profit_fn(state: SeenOState, obs: SlotObservation, comp_users: dict[tuple[int, ...], np.ndarray],
               demand: np.ndarray):
    cache: dict[Decision, dict[int, float]] = {}
    comp_of = {n: c for c in state.components for n in c}

    def profit_of(z: Decision) -> dict[int, float]:
        if z not in cache:
            users = comp_users[comp_of[z[0]]]
            assoc = associate(obs.gains[users], z) if users.size else np.zeros(0, np.int64)
            out = {}
            for n in z:
                rows = users[assoc == n]
                out[n] = float(np.dot(obs.weights[rows, n], demand[rows, n])) if rows.size else 0.0
            cache[z] = out
        return cache[z]

    return profit_of


def seeno_step(state: SeenOState, obs: SlotObservation, rng: np.random.Generator) -> Selection:
    seen = state.seen
    b = seen.budget
    if b > obs.n_sbs:
        raise ConfigError("budget exceeds number of SBSs")
    ue = under_explored(seen, obs)
    seen.pending = (seen.t, frozenset(ue))
    if len(ue) >= b:
        picked = sorted(int(n) for n in rng.choice(ue, size=b, replace=False))
        return Selection(tuple(picked), EXPLORE)
    cov = obs.connected
    comp_users = {c: np.flatnonzero(cov[:, list(c)].any(axis=1)) for c in state.components}
    all_users = np.flatnonzero(cov.any(axis=1))
    demand = _demand_table(seen, obs, all_users, range(obs.n_sbs))
    profit_of = _profit_fn(state, obs, comp_users, demand)
    if ue:
        inst = build_explore_kcg(state.components, ue, b, profit_of, state.cap)
        phase = EXPLORE
    else:
        inst = build_kcg(state.components, b, profit_of, state.cap)
        phase = EXPLOIT
    state.last_instance = inst
    return Selection(solve_kcg(inst).rented, phase)


def seeno_update(state: SeenOState, obs: SlotObservation, selected: Sequence[int],
                 serving: np.ndarray, demands: np.ndarray) -> None:
    """Every served user's demand updates the estimator of every SBS covering that user."""
    seen = state.seen
    if seen.pending is not None and seen.pending[0] == seen.t:
        ue = seen.pending[1]
    else:
        ue = set(under_explored(seen, obs))
    seen.pending = None
    served = np.flatnonzero(np.asarray(serving) >= 0)
    cov = obs.connected
    for n, lr in enumerate(seen.learners):
        rows = served[cov[served, n]]
        if rows.size == 0:
            continue
        for cell, d in zip(lr.cells_of(obs.contexts[rows]), demands[rows]):
            lr.store.update(int(cell), float(d))
    for n in selected:
        if n in ue:
            seen.explore_rentals[n] += 1
    seen.t += 1


class SeenOPolicy:
    name = "seen-o"
    supports_overlap = True

    def __init__(self, horizon: int, budget: int, alphas: Sequence[float], dims: Sequence[int],
                 d_max: float, components: Sequence[Sequence[int]], rng: np.random.Generator,
                 cap: int = DEFAULT_COMPONENT_CAP):
        seen = SeenState.create(horizon, budget, alphas, dims, d_max)
        self.state = SeenOState(seen, [tuple(sorted(c)) for c in components], cap)
        self.rng = rng

    def select(self, obs: SlotObservation) -> Selection:
        return seeno_step(self.state, obs, self.rng)

    def update(self, obs: SlotObservation, selection: Selection, serving: np.ndarray,
               demands: np.ndarray) -> None:
        seeno_update(self.state, obs, selection.sbs, serving, demands)

    @property
    def learners(self):
        return self.state.seen.learners
