"""SEEN: contextual-combinatorial placement for non-overlapping small cells."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .context import ContextPartition, EstimatorStore, control_threshold, partition_granularity
from .errors import ConfigError, ProtocolError
from .slot import EXPLOIT, EXPLORE, Selection, SlotObservation


@dataclass
class SbsLearner:
    """Partition and estimator kept by one SBS."""

    partition: ContextPartition
    store: EstimatorStore
    alpha: float

    @property
    def dims(self) -> int:
        return self.partition.dims

    def threshold(self, t: int) -> float:
        return control_threshold(t, self.alpha, self.dims)

    def cells_of(self, contexts: np.ndarray) -> np.ndarray:
        return self.partition.locate_many(contexts[:, : self.dims])

    def estimates(self, cells: np.ndarray) -> np.ndarray:
        means = self.store.means
        return np.fromiter((means.get(int(c), 0.0) for c in cells), dtype=float, count=len(cells))

    def min_count(self, cells: np.ndarray) -> int:
        counts = self.store.counts
        return min((counts.get(int(c), 0) for c in cells), default=math.inf)


def build_learners(T: int, alphas: Sequence[float], dims: Sequence[int], d_max: float) -> list[SbsLearner]:
    learners = []
    for a, d in zip(alphas, dims):
        h = partition_granularity(T, a, d)
        learners.append(SbsLearner(ContextPartition(d, h), EstimatorStore(d_max), a))
    return learners


def exploration_bound(T: int, alpha: float, D: int) -> int:
    """Max slots an SBS can be rented while under-explored: ``h^D * ceil(T^z ln T)``."""
    h = partition_granularity(T, alpha, D)
    z = 2.0 * alpha / (3.0 * alpha + D)
    return h ** D * math.ceil(T ** z * math.log(T))


def top_b(scores: Sequence[float], candidates: Sequence[int], k: int) -> list[int]:
    """The ``k`` best candidates by score; ties go to the lowest id."""
    order = sorted(candidates, key=lambda n: (-scores[n], n))
    return order[:k]


@dataclass
class SeenState:
    learners: list[SbsLearner]
    budget: int
    horizon: int
    t: int = 1
    random_ties: bool = False
    # slots in which each SBS was rented while under-explored
    explore_rentals: list[int] = field(default_factory=list)
    # (slot, under-explored set) computed by the last select call
    pending: tuple[int, frozenset[int]] | None = None

    def __post_init__(self) -> None:
        n = len(self.learners)
        if not 1 <= self.budget <= n:
            raise ConfigError(f"budget b={self.budget} must satisfy 1 <= b <= N={n}")
        if not self.explore_rentals:
            self.explore_rentals = [0] * n

    @classmethod
    def create(cls, horizon: int, budget: int, alphas: Sequence[float], dims: Sequence[int],
               d_max: float, random_ties: bool = False) -> "SeenState":
        return cls(build_learners(horizon, alphas, dims, d_max), budget, horizon, random_ties=random_ties)

    @property
    def n_sbs(self) -> int:
        return len(self.learners)

    def cells(self, obs: SlotObservation) -> list[np.ndarray]:
        """Cell of every connected user, per SBS (aligned with ``obs.users_of(n)``)."""
        return [lr.cells_of(obs.contexts[obs.users_of(n)]) for n, lr in enumerate(self.learners)]


def under_explored(state: SeenState, obs: SlotObservation,
                   cells: list[np.ndarray] | None = None) -> list[int]:
    """SBSs with a connected user whose cell count is below ``K_n(t)``."""
    cells = state.cells(obs) if cells is None else cells
    out = []
    for n, lr in enumerate(state.learners):
        if len(cells[n]) and lr.min_count(cells[n]) < lr.threshold(state.t):
            out.append(n)
    return out


def estimated_sbs_utility(state: SeenState, sbs: int, obs: SlotObservation,
                          cells: np.ndarray | None = None) -> float:
    users = obs.users_of(sbs)
    if users.size == 0:
        return 0.0
    lr = state.learners[sbs]
    cells = lr.cells_of(obs.contexts[users]) if cells is None else cells
    return float(np.dot(obs.weights[users, sbs], lr.estimates(cells)))


def seen_select(state: SeenState, obs: SlotObservation, rng: np.random.Generator) -> Selection:
    if state.budget > obs.n_sbs:
        raise ConfigError("budget exceeds number of SBSs")
    cells = state.cells(obs)
    ue = under_explored(state, obs, cells)
    state.pending = (state.t, frozenset(ue))
    b = state.budget
    scores = [estimated_sbs_utility(state, n, obs, cells[n]) for n in range(state.n_sbs)]
    ids = _order_ids(state, rng)
    if len(ue) >= b:
        picked = sorted(int(n) for n in rng.choice(ue, size=b, replace=False))
        return Selection(tuple(picked), EXPLORE)
    rest = [n for n in ids if n not in set(ue)]
    extra = sorted(rest, key=lambda n: (-scores[n], ids.index(n)))[: b - len(ue)]
    phase = EXPLORE if ue else EXPLOIT
    return Selection(tuple(sorted(ue + extra)), phase)


def _order_ids(state: SeenState, rng: np.random.Generator) -> list[int]:
    """Tie-break order: ascending ids, or a fresh random permutation in random-tie mode."""
    if state.random_ties:
        return [int(n) for n in rng.permutation(state.n_sbs)]
    return list(range(state.n_sbs))


def seen_update(state: SeenState, selected: Sequence[int], obs: SlotObservation,
                demands: Mapping[int, np.ndarray]) -> None:
    """Fold demands observed at rented SBSs into their estimators and advance ``t``.

    ``demands[n]`` holds the demand of each user in ``obs.users_of(n)``, in order.
    """
    sel = set(int(n) for n in selected)
    if state.pending is not None and state.pending[0] == state.t:
        ue = state.pending[1]
    else:
        ue = set(under_explored(state, obs))
    state.pending = None
    for n in demands:
        if n not in sel:
            raise ProtocolError(f"demand reported for SBS {n}, which was not rented")
    for n in sel:
        users = obs.users_of(n)
        d = np.asarray(demands.get(n, ()), dtype=float)
        if d.shape != users.shape:
            raise ProtocolError(f"SBS {n}: {users.size} connected users but {d.size} demands")
        lr = state.learners[n]
        for cell, dm in zip(lr.cells_of(obs.contexts[users]), d):
            lr.store.update(int(cell), float(dm))
        if n in ue:
            state.explore_rentals[n] += 1
    state.t += 1


class SeenPolicy:
    """Stateful wrapper used by the simulator."""

    name = "seen"
    supports_overlap = False

    def __init__(self, horizon: int, budget: int, alphas: Sequence[float], dims: Sequence[int],
                 d_max: float, rng: np.random.Generator, random_ties: bool = False):
        self.state = SeenState.create(horizon, budget, alphas, dims, d_max, random_ties)
        self.rng = rng

    def select(self, obs: SlotObservation) -> Selection:
        return seen_select(self.state, obs, self.rng)

    def update(self, obs: SlotObservation, selection: Selection, serving: np.ndarray,
               demands: np.ndarray) -> None:
        per_sbs = {n: demands[obs.users_of(n)] for n in selection.sbs}
        seen_update(self.state, selection.sbs, obs, per_sbs)

    @property
    def learners(self) -> list[SbsLearner]:
        return self.state.learners
