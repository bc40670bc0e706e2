"""Oracle and comparison policies: cUCB, c2UCB, epsilon-greedy, random."""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from .context import ContextPartition, partition_granularity
from .errors import CapacityError, ConfigError, ParameterError
from .overlap import DEFAULT_COMPONENT_CAP, associate, build_kcg, solve_kcg
from .seen import top_b
from .slot import EXPLOIT, EXPLORE, Selection, SlotObservation

MAX_SUPER_ARMS = 10_000


def oracle_select(obs: SlotObservation, mu: np.ndarray, budget: int,
                  components: Sequence[Sequence[int]] | None = None,
                  cap: int = DEFAULT_COMPONENT_CAP) -> tuple[int, ...]:
    """Clairvoyant placement given the true expected demand ``mu`` of every user.

    Non-overlapping model: top-``b`` SBSs by ``sum u_{n,m} mu_m`` (ties to lowest id).
    Overlapping model: exact knapsack over component-wise decisions.
    """
    N = obs.n_sbs
    if not 0 <= budget <= N:
        raise ConfigError(f"budget {budget} outside [0, {N}]")
    mu = np.asarray(mu, dtype=float)
    if not obs.overlap:
        scores = []
        for n in range(N):
            users = obs.users_of(n)
            scores.append(float(np.dot(obs.weights[users, n], mu[users])) if users.size else 0.0)
        return tuple(sorted(top_b(scores, range(N), budget)))
    if components is None:
        raise ConfigError("overlapping oracle needs the SBS components")
    cov = obs.connected
    comp_of = {n: tuple(c) for c in components for n in c}
    comp_users = {tuple(c): np.flatnonzero(cov[:, list(c)].any(axis=1)) for c in components}
    cache: dict[tuple[int, ...], dict[int, float]] = {}

    def profit_of(z):
        if z not in cache:
            users = comp_users[comp_of[z[0]]]
            assoc = associate(obs.gains[users], z) if users.size else np.zeros(0, np.int64)
            cache[z] = {n: float(np.dot(obs.weights[users[assoc == n], n], mu[users[assoc == n]]))
                        for n in z}
        return cache[z]

    return solve_kcg(build_kcg(components, budget, profit_of, cap)).rented


def realized_utility(obs: SlotObservation, serving: np.ndarray, demands: np.ndarray) -> float:
    m = np.flatnonzero(serving >= 0)
    return float(np.sum(obs.weights[m, serving[m]] * demands[m]))


class OraclePolicy:
    name = "oracle"
    supports_overlap = True

    def __init__(self, budget: int, mu_fn: Callable[[np.ndarray], np.ndarray],
                 components: Sequence[Sequence[int]] | None = None):
        self.budget = budget
        self.mu_fn = mu_fn
        self.components = components

    def select(self, obs: SlotObservation) -> Selection:
        mu = self.mu_fn(obs.contexts) if obs.n_users else np.zeros(0)
        return Selection(oracle_select(obs, mu, self.budget, self.components), EXPLOIT)

    def update(self, obs, selection, serving, demands) -> None:
        pass


class SuperArms:
    """Play counts and mean normalised reward of every ``b``-subset of ``N`` SBSs."""

    def __init__(self, n_sbs: int, budget: int):
        if not 1 <= budget <= n_sbs:
            raise ConfigError(f"budget {budget} outside [1, {n_sbs}]")
        n_arms = math.comb(n_sbs, budget)
        if n_arms > MAX_SUPER_ARMS:
            raise CapacityError(
                f"C({n_sbs},{budget}) = {n_arms} super-arms exceeds the cap of {MAX_SUPER_ARMS}")
        self.arms = list(itertools.combinations(range(n_sbs), budget))
        self.index = {a: i for i, a in enumerate(self.arms)}

    def __len__(self) -> int:
        return len(self.arms)


def ucb1_choice(counts: np.ndarray, means: np.ndarray, t: int) -> tuple[int, bool]:
    """Arm index and whether it is an initial (unplayed) pull. Ties to the lowest index."""
    unplayed = np.flatnonzero(counts == 0)
    if unplayed.size:
        return int(unplayed[0]), True
    idx = means + np.sqrt(2.0 * math.log(max(t, 1)) / counts)
    return int(np.argmax(idx)), False


class CucbPolicy:
    """UCB1 over super-arms with rewards normalised by a utility cap."""

    name = "cucb"
    supports_overlap = True

    def __init__(self, n_sbs: int, budget: int, reward_cap: float):
        if reward_cap <= 0:
            raise ParameterError("reward cap must be positive")
        self.arms = SuperArms(n_sbs, budget)
        self.counts = np.zeros(len(self.arms))
        self.means = np.zeros(len(self.arms))
        self.cap = reward_cap
        self.t = 1

    def select(self, obs: SlotObservation) -> Selection:
        i, init = ucb1_choice(self.counts, self.means, self.t)
        return Selection(self.arms.arms[i], EXPLORE if init else EXPLOIT)

    def update(self, obs, selection, serving, demands) -> None:
        i = self.arms.index[tuple(selection.sbs)]
        r = min(max(realized_utility(obs, serving, demands) / self.cap, 0.0), 1.0)
        self.counts[i] += 1
        self.means[i] += (r - self.means[i]) / self.counts[i]
        self.t += 1


def aggregate_context(contexts: np.ndarray, dims: int) -> np.ndarray:
    """Mean user context padded with 0.5 / truncated to ``dims``; cube centre if nobody is present."""
    out = np.full(dims, 0.5)
    if len(contexts):
        m = np.asarray(contexts, dtype=float).mean(axis=0)[:dims]
        out[: len(m)] = m
    return out


class C2ucbPolicy:
    """UCB1 over super-arms with statistics kept per cell of the aggregate slot context."""

    name = "c2ucb"
    supports_overlap = True

    def __init__(self, n_sbs: int, budget: int, reward_cap: float, dims: int, horizon: int,
                 cells_per_dim: int | None = None):
        if reward_cap <= 0:
            raise ParameterError("reward cap must be positive")
        self.arms = SuperArms(n_sbs, budget)
        h = cells_per_dim if cells_per_dim is not None else partition_granularity(horizon, 1.0, dims)
        self.partition = ContextPartition(dims, h)
        self.counts: dict[int, np.ndarray] = {}
        self.means: dict[int, np.ndarray] = {}
        self.cap = reward_cap
        self.t = 1
        self._cell = 0

    def _tables(self, cell: int) -> tuple[np.ndarray, np.ndarray]:
        if cell not in self.counts:
            self.counts[cell] = np.zeros(len(self.arms))
            self.means[cell] = np.zeros(len(self.arms))
        return self.counts[cell], self.means[cell]

    def select(self, obs: SlotObservation) -> Selection:
        x = aggregate_context(obs.contexts, self.partition.dims)
        self._cell = int(self.partition.locate_many(x[None, :])[0])
        counts, means = self._tables(self._cell)
        i, init = ucb1_choice(counts, means, self.t)
        return Selection(self.arms.arms[i], EXPLORE if init else EXPLOIT)

    def update(self, obs, selection, serving, demands) -> None:
        counts, means = self._tables(self._cell)
        i = self.arms.index[tuple(selection.sbs)]
        r = min(max(realized_utility(obs, serving, demands) / self.cap, 0.0), 1.0)
        counts[i] += 1
        means[i] += (r - means[i]) / counts[i]
        self.t += 1


def random_select(rng: np.random.Generator, n_sbs: int, budget: int) -> tuple[int, ...]:
    if not 0 <= budget <= n_sbs:
        raise ConfigError(f"budget {budget} outside [0, {n_sbs}]")
    return tuple(sorted(int(n) for n in rng.choice(n_sbs, size=budget, replace=False)))


class RandomPolicy:
    name = "random"
    supports_overlap = True

    def __init__(self, n_sbs: int, budget: int, rng: np.random.Generator):
        self.n_sbs, self.budget, self.rng = n_sbs, budget, rng

    def select(self, obs: SlotObservation) -> Selection:
        return Selection(random_select(self.rng, self.n_sbs, self.budget), EXPLORE)

    def update(self, obs, selection, serving, demands) -> None:
        pass


class EpsilonGreedyPolicy:
    """Random ``b``-set with probability epsilon, else top-``b`` by mean observed demand per rented slot."""

    name = "eps-greedy"
    supports_overlap = True

    def __init__(self, n_sbs: int, budget: int, rng: np.random.Generator, epsilon: float = 0.1):
        if not 0.0 < epsilon < 1.0:
            raise ParameterError("epsilon must lie in (0, 1)")
        if not 1 <= budget <= n_sbs:
            raise ConfigError(f"budget {budget} outside [1, {n_sbs}]")
        self.n_sbs, self.budget, self.rng, self.epsilon = n_sbs, budget, rng, epsilon
        self.counts = np.zeros(n_sbs)
        self.means = np.zeros(n_sbs)

    def select(self, obs: SlotObservation) -> Selection:
        if self.rng.random() < self.epsilon:
            return Selection(random_select(self.rng, self.n_sbs, self.budget), EXPLORE)
        return Selection(tuple(sorted(top_b(self.means, range(self.n_sbs), self.budget))), EXPLOIT)

    def update(self, obs, selection, serving, demands) -> None:
        for n in selection.sbs:
            d = float(np.sum(demands[serving == n]))
            self.counts[n] += 1
            self.means[n] += (d - self.means[n]) / self.counts[n]
