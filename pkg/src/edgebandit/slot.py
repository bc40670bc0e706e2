"""Per-slot data handed from the simulator to placement policies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXPLORE = "explore"
EXPLOIT = "exploit"


@dataclass
class SlotObservation:
    """Everything a policy may look at when deciding slot ``t``.

    Arrays are indexed ``[user, sbs]``. ``connected[m, n]`` is the population
    ``M_n^t`` the policy reasons about: the nearest covering SBS in the
    non-overlapping model, every covering SBS in the overlapping model.
    """

    t: int
    contexts: np.ndarray  # (M, D) global user contexts in [0,1]^D
    gains: np.ndarray  # (M, N) uplink gains, 0 when out of range
    connected: np.ndarray  # (M, N) bool
    weights: np.ndarray  # (M, N) per-task delay reduction, 0 when out of range
    overlap: bool = False

    @property
    def n_users(self) -> int:
        return self.contexts.shape[0]

    @property
    def n_sbs(self) -> int:
        return self.gains.shape[1]

    @property
    def coverage(self) -> np.ndarray:
        return self.gains > 0

    def users_of(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.connected[:, n])


@dataclass(frozen=True)
class Selection:
    sbs: tuple[int, ...]
    phase: str = EXPLOIT


def serving_map(obs: SlotObservation, selected) -> np.ndarray:
    """Serving SBS per user (``-1`` = cloud) for a rented set.

    Non-overlapping model: a user is served iff its connected SBS is rented.
    Overlapping model: the rented covering SBS with the largest gain wins,
    ties to the lowest id.
    """
    serving = np.full(obs.n_users, -1, dtype=np.int64)
    sel = np.asarray(sorted(selected), dtype=np.int64)
    if sel.size == 0 or obs.n_users == 0:
        return serving
    if obs.overlap:
        g = np.where(obs.connected[:, sel], obs.gains[:, sel], 0.0)
        best = np.argmax(g, axis=1)
        ok = g[np.arange(obs.n_users), best] > 0
        serving[ok] = sel[best[ok]]
    else:
        c = obs.connected[:, sel]
        ok = c.any(axis=1)
        serving[ok] = sel[np.argmax(c[ok], axis=1)]
    return serving


def expected_utility(obs: SlotObservation, selected, mu: np.ndarray) -> float:
    """Utility of a rented set with demand replaced by its expectation ``mu`` (per user)."""
    serving = serving_map(obs, selected)
    m = np.flatnonzero(serving >= 0)
    return float(np.sum(obs.weights[m, serving[m]] * mu[m]))
