"""Scenario generation, the per-slot protocol, and experiment metrics."""

from __future__ import annotations

import contextlib
import csv
import io
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import (C2ucbPolicy, CucbPolicy, EpsilonGreedyPolicy, OraclePolicy, RandomPolicy,
                        oracle_select, realized_utility)
from .demand import ContextModel, DemandFunction, DemandSampler
from .errors import ConfigError
from .network import (AREA_TYPES, SbsConfig, channel_gain, cloud_delay, edge_delay,
                      max_delay_reduction, uplink_rate)
from .overlap import OverlapGraph, SeenOPolicy, find_components
from .scenario import ScenarioConfig, build_demand_function
from .seen import SeenPolicy
from .slot import EXPLOIT, Selection, SlotObservation, expected_utility, serving_map

log = logging.getLogger(__name__)

# independent random streams derived from one seed
TOPOLOGY, POPULATION, DEMAND, POLICY = range(4)


def stream(seed: int, which: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), which])


# ---------------------------------------------------------------------------
# topology


@dataclass
class Topology:
    sbs: list[SbsConfig]
    mbs_position: tuple[float, float]
    graph: OverlapGraph
    components: list[tuple[int, ...]]
    area_size: float

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.sbs], dtype=float).reshape(-1, 2)

    @property
    def ranges(self) -> np.ndarray:
        return np.array([s.range for s in self.sbs], dtype=float)


def overlap_degree(positions: np.ndarray, ranges: Sequence[float], resolution: float = 1.0) -> float:
    """Grid estimate of (area covered by >= 2 SBSs) / (area covered by >= 1 SBS)."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    r = np.asarray(ranges, dtype=float)
    live = r > 0
    if not live.any():
        log.warning("no covered area; overlap degree reported as 0")
        return 0.0
    pos, r = pos[live], r[live]
    lo = (pos - r[:, None]).min(axis=0)
    hi = (pos + r[:, None]).max(axis=0)
    nx_, ny_ = (np.ceil((hi - lo) / resolution).astype(int) + 1)
    xs = lo[0] + (np.arange(nx_) + 0.5) * resolution
    ys = lo[1] + (np.arange(ny_) + 0.5) * resolution
    count = np.zeros((nx_, ny_), dtype=np.int16)
    for (px, py), rr in zip(pos, r):
        i0, i1 = np.searchsorted(xs, px - rr), np.searchsorted(xs, px + rr, side="right")
        j0, j1 = np.searchsorted(ys, py - rr), np.searchsorted(ys, py + rr, side="right")
        dx = xs[i0:i1, None] - px
        dy = ys[None, j0:j1] - py
        count[i0:i1, j0:j1] += (dx * dx + dy * dy <= rr * rr)
    covered = np.count_nonzero(count >= 1)
    if covered == 0:
        log.warning("no covered area; overlap degree reported as 0")
        return 0.0
    return np.count_nonzero(count >= 2) / covered


def _spread_layout(rng: np.random.Generator, n: int, area: float, min_sep: float,
                   restarts: int = 200, tries: int = 2000) -> np.ndarray:
    """Uniform points in the square with pairwise distance >= ``min_sep`` (sequential rejection)."""
    for _ in range(restarts):
        pts: list[np.ndarray] = []
        for _ in range(n):
            for _ in range(tries):
                p = rng.uniform(0.0, area, size=2)
                if all(np.hypot(*(p - q)) >= min_sep for q in pts):
                    pts.append(p)
                    break
            else:
                break
        if len(pts) == n:
            return np.array(pts)
    raise ConfigError(f"cannot place {n} non-overlapping SBSs of range {min_sep / 2} in a "
                      f"{area} m square; reduce n_sbs or sbs_range")


def _pairs(pos: np.ndarray) -> list[tuple[int, int]]:
    """Greedy closest-pair matching."""
    n = len(pos)
    cand = sorted((np.hypot(*(pos[i] - pos[j])), i, j) for i in range(n) for j in range(i + 1, n))
    used: set[int] = set()
    out = []
    for _, i, j in cand:
        if i not in used and j not in used:
            out.append((i, j))
            used |= {i, j}
    return out


def _contract(pos: np.ndarray, pairs: list[tuple[int, int]], c: float) -> np.ndarray:
    out = pos.copy()
    for i, j in pairs:
        mid = (pos[i] + pos[j]) / 2.0
        out[i] = mid + (1.0 - c) * (pos[i] - mid)
        out[j] = mid + (1.0 - c) * (pos[j] - mid)
    return out


def layout_with_overlap(rng: np.random.Generator, n: int, area: float, radius: float,
                        target: float, tol: float = 0.002, resolution: float = 4.0) -> np.ndarray:
    """Non-overlapping base layout whose closest pairs are pulled together until the
    overlap degree reaches ``target``. Pair midpoints stay fixed, so distances to
    the area centre barely move across targets for the same seed.
    """
    base = _spread_layout(rng, n, area, 2.0 * radius)
    if target <= 0 or radius <= 0:
        return base
    pairs = _pairs(base)
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = (lo + hi) / 2.0
        deg = overlap_degree(_contract(base, pairs, mid), [radius] * n, resolution)
        if abs(deg - target) < tol:
            return _contract(base, pairs, mid)
        if deg < target:
            lo = mid
        else:
            hi = mid
    return _contract(base, pairs, (lo + hi) / 2.0)


def generate_topology(config: ScenarioConfig, seed: int | None = None) -> Topology:
    rng = stream(config.seed if seed is None else seed, TOPOLOGY)
    N, A, R = config.n_sbs, config.area_size, config.sbs_range
    if config.target_overlap is None:
        pos = rng.uniform(0.0, A, size=(N, 2))
    else:
        pos = layout_with_overlap(rng, N, A, R, config.target_overlap)
    mix = np.asarray(config.area_mixture, dtype=float)
    areas = rng.choice(len(AREA_TYPES), size=N, p=mix / mix.sum())
    dims = config.dims_per_sbs
    sbs = [SbsConfig(id=n, position=(float(pos[n, 0]), float(pos[n, 1])), range=R,
                     cpu_freq=config.sbs_cpu_freq, area_type=AREA_TYPES[int(areas[n])],
                     context_dims=dims[n], holder_alpha=config.holder_alpha)
           for n in range(N)]
    graph = OverlapGraph.from_geometry(pos, [R] * N)
    return Topology(sbs, (A / 2.0, A / 2.0), graph, find_components(graph), A)


# ---------------------------------------------------------------------------
# population


@dataclass
class UserSlotState:
    id: int
    position: tuple[float, float]
    contexts: dict[int, np.ndarray]  # per covering SBS, first D_n coordinates
    gains: np.ndarray  # to each SBS, 0 if out of range
    mbs_gain: float


@dataclass
class Population:
    obs: SlotObservation
    positions: np.ndarray
    home_sbs: np.ndarray  # SBS area that generated each user
    mbs_gain: np.ndarray
    backbone_rate: float

    def users(self, dims: Sequence[int]) -> list[UserSlotState]:
        out = []
        for m in range(self.obs.n_users):
            cov = np.flatnonzero(self.obs.gains[m] > 0)
            out.append(UserSlotState(
                m, (float(self.positions[m, 0]), float(self.positions[m, 1])),
                {int(n): self.obs.contexts[m, : dims[n]] for n in cov},
                self.obs.gains[m].copy(), float(self.mbs_gain[m])))
        return out


def generate_population(config: ScenarioConfig, topology: Topology, t: int,
                        rng: np.random.Generator, context_model: ContextModel | None = None) -> Population:
    """Poisson users per SBS area, uniform in its disk, contexts from the SBS's area type."""
    cm = context_model or ContextModel(config.context_dims, config.context_spread, truncate=config.context_truncation)
    N = config.n_sbs
    counts = rng.poisson(config.arrival_rate, size=N)
    pos_parts, ctx_parts, home = [], [], []
    for n, s in enumerate(topology.sbs):
        k = int(counts[n])
        rad = s.range * np.sqrt(rng.random(k))
        ang = rng.uniform(0.0, 2.0 * math.pi, size=k)
        pos_parts.append(np.column_stack([s.position[0] + rad * np.cos(ang),
                                          s.position[1] + rad * np.sin(ang)]))
        ctx_parts.append(cm.sample(s.area_type, k, rng)[0])
        home.append(np.full(k, n))
    v = float(rng.uniform(*config.cloud.backbone_rate))
    positions = np.vstack(pos_parts) if pos_parts else np.zeros((0, 2))
    contexts = np.vstack(ctx_parts) if ctx_parts else np.zeros((0, config.context_dims))
    home_sbs = np.concatenate(home) if home else np.zeros(0, int)
    M = len(positions)

    sbs_pos, ranges = topology.positions, topology.ranges
    dist = np.hypot(positions[:, None, 0] - sbs_pos[None, :, 0], positions[:, None, 1] - sbs_pos[None, :, 1])
    # users are drawn inside their home disk; guard against round-off at the rim
    in_range = dist <= ranges[None, :] * (1.0 + 1e-12)
    in_range[np.arange(M), home_sbs] = True
    gains = np.where(in_range, channel_gain(dist, config.channel), 0.0)
    mbs_d = np.hypot(positions[:, 0] - topology.mbs_position[0], positions[:, 1] - topology.mbs_position[1])
    mbs_gain = channel_gain(mbs_d, config.mbs_channel)
    weights = np.zeros((M, N))
    if M:
        q0 = cloud_delay(uplink_rate(config.mbs_channel, mbs_gain), config.task, config.cloud, v)
        for n, s in enumerate(topology.sbs):
            rows = np.flatnonzero(in_range[:, n])
            if rows.size:
                qn = edge_delay(uplink_rate(config.channel, gains[rows, n]), config.task, s.cpu_freq)
                weights[rows, n] = q0[rows] - qn
    if config.overlap:
        connected = in_range.copy()
    else:
        # nearest covering SBS, ties to the lowest id
        d_masked = np.where(in_range, dist, np.inf)
        nearest = np.argmin(d_masked, axis=1)
        connected = np.zeros((M, N), dtype=bool)
        connected[np.arange(M), nearest] = True
    obs = SlotObservation(t, contexts, gains, connected, weights, overlap=config.overlap)
    return Population(obs, positions, home_sbs, mbs_gain, v)


# ---------------------------------------------------------------------------
# policies


def reward_cap(config: ScenarioConfig, topology: Topology) -> float:
    """``b * M_max * u_max * d_max`` used to normalise rewards for the UCB baselines."""
    rate = config.arrival_rate
    per_area = math.ceil(rate + 4.0 * math.sqrt(rate)) + 1
    biggest = max((len(c) for c in topology.components), default=1)
    m_max = per_area * biggest
    far = math.hypot(config.area_size, config.area_size) / 2.0 + config.sbs_range
    u_max = max_delay_reduction(far, config.mbs_channel, config.task, config.cloud,
                                config.sbs_cpu_freq, config.channel)
    return max(config.budget, 1) * m_max * max(u_max, 1e-12) * config.task.d_max


def check_compatibility(name: str, config: ScenarioConfig, topology: Topology) -> None:
    overlapping = bool(topology.graph.edges)
    if name == "seen" and config.overlap and overlapping:
        raise ConfigError("policy 'seen' assumes non-overlapping coverage; use 'seen-o' "
                          "or set overlap: false")
    if name == "seen-o" and not config.overlap and overlapping:
        raise ConfigError("policy 'seen-o' needs the overlapping association model (overlap: true)")
    if name in ("seen", "seen-o") and config.budget < 1:
        raise ConfigError(f"policy {name!r} needs budget >= 1")


def make_policy(config: ScenarioConfig, topology: Topology, mu_fn: DemandFunction,
                rng: np.random.Generator, name: str | None = None):
    name = name or config.policy.name
    check_compatibility(name, config, topology)
    N, b, T = config.n_sbs, config.budget, config.horizon
    alphas = [s.holder_alpha for s in topology.sbs]
    dims = [s.context_dims for s in topology.sbs]
    d_max = float(config.task.d_max)
    comps = topology.components if config.overlap else None
    if name == "oracle":
        return OraclePolicy(b, mu_fn, comps)
    if name == "seen":
        return SeenPolicy(T, b, alphas, dims, d_max, rng, random_ties=config.policy.random_ties)
    if name == "seen-o":
        return SeenOPolicy(T, b, alphas, dims, d_max, topology.components, rng, config.component_cap)
    if name == "cucb":
        return CucbPolicy(N, b, reward_cap(config, topology))
    if name == "c2ucb":
        return C2ucbPolicy(N, b, reward_cap(config, topology), config.context_dims, T)
    if name == "eps-greedy":
        return EpsilonGreedyPolicy(N, b, rng, config.policy.epsilon)
    if name == "random":
        return RandomPolicy(N, b, rng)
    raise ConfigError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# experiment


@dataclass
class SlotTrace:
    t: int
    phase: str
    selected: tuple[int, ...]
    oracle_selected: tuple[int, ...]
    utility: float  # expected utility of the rented set under true mu
    oracle_utility: float
    regret: float  # pseudo-regret increment
    realized_utility: float
    edge_demand: float
    total_demand: float
    serving: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)  # delay reduction of the serving SBS (0 for cloud)
    demands: np.ndarray = field(repr=False)
    cells: np.ndarray | None = field(default=None, repr=False)  # cell in the serving SBS's partition


@dataclass
class Checkpoint:
    t: int
    mse_visited: float
    mse_all: float
    edge_frac: float


@dataclass
class MetricsReport:
    policy: str
    cumulative_utility: np.ndarray
    cumulative_oracle_utility: np.ndarray
    cumulative_realized_utility: np.ndarray
    cumulative_regret: np.ndarray
    checkpoints: list[Checkpoint]
    edge_fraction: float
    cloud_fraction: float
    overlap_degree: float
    explore_rentals: list[int] | None = None
    explore_slots: int = 0

    @property
    def final_utility(self) -> float:
        return float(self.cumulative_utility[-1]) if len(self.cumulative_utility) else 0.0

    @property
    def final_regret(self) -> float:
        return float(self.cumulative_regret[-1]) if len(self.cumulative_regret) else 0.0


def compute_mse(learners, mu_fn: DemandFunction, dims: int) -> tuple[float, float]:
    """Squared error of cell estimates against ``mu`` at each cell centre.

    Returns ``(mean over visited cells, mean over all cells with unvisited = 0)``.
    Centres of SBSs that see fewer than ``dims`` coordinates are padded with 0.5.
    """
    sq_visited, n_visited, sq_all, n_all = 0.0, 0, 0.0, 0
    for lr in learners:
        part = lr.partition
        flat = np.arange(part.n_cells)
        idx = np.array(np.unravel_index(flat, (part.cells_per_dim,) * part.dims)).T
        centres = np.full((part.n_cells, dims), 0.5)
        centres[:, : part.dims] = (idx + 0.5) / part.cells_per_dim
        truth = np.asarray(mu_fn(centres), dtype=float)
        est = np.array([lr.store.mean(int(c)) for c in flat])
        visited = np.array([lr.store.count(int(c)) > 0 for c in flat])
        err = (est - truth) ** 2
        sq_all += float(err.sum())
        n_all += part.n_cells
        sq_visited += float(err[visited].sum())
        n_visited += int(visited.sum())
    return (sq_visited / n_visited if n_visited else 0.0, sq_all / n_all if n_all else 0.0)


def _serving_cells(policy, obs: SlotObservation, serving: np.ndarray) -> np.ndarray | None:
    learners = getattr(policy, "learners", None)
    if learners is None:
        return None
    cells = np.full(obs.n_users, -1, dtype=np.int64)
    for n in np.unique(serving[serving >= 0]):
        rows = np.flatnonzero(serving == n)
        cells[rows] = learners[int(n)].cells_of(obs.contexts[rows])
    return cells


def run_experiment(config: ScenarioConfig, policy_name: str | None = None,
                   topology: Topology | None = None,
                   keep_users: bool = True) -> tuple[list[SlotTrace], MetricsReport]:
    """Run the slot protocol for ``t = 1..T`` and evaluate the oracle on the same slots.

    Population, demand and policy randomness come from separate streams of
    ``config.seed``, so every policy sees identical users and demands.
    """
    name = policy_name or config.policy.name
    topology = topology or generate_topology(config)
    mu_fn = build_demand_function(config)
    policy = make_policy(config, topology, mu_fn, stream(config.seed, POLICY), name)
    pop_rng = stream(config.seed, POPULATION)
    sampler = DemandSampler(config.task.d_max, stream(config.seed, DEMAND))
    context_model = ContextModel(config.context_dims, config.context_spread, truncate=config.context_truncation)
    comps = topology.components if config.overlap else None
    b = config.budget

    traces: list[SlotTrace] = []
    checkpoints: list[Checkpoint] = []
    T = config.horizon
    util = np.zeros(T)
    oracle_util = np.zeros(T)
    realized = np.zeros(T)
    regret = np.zeros(T)
    edge_total = demand_total = 0.0
    explore_slots = 0
    for t in range(1, T + 1):
        pop = generate_population(config, topology, t, pop_rng, context_model)
        obs = pop.obs
        mu = mu_fn(obs.contexts) if obs.n_users else np.zeros(0)
        sel: Selection = policy.select(obs)
        best = oracle_select(obs, mu, b, comps, config.component_cap)
        serving = serving_map(obs, sel.sbs)
        demands = sampler.sample(mu) if obs.n_users else np.zeros(0, dtype=np.int64)
        u = expected_utility(obs, sel.sbs, mu)
        u_star = expected_utility(obs, best, mu)
        inc = 0.0 if tuple(sel.sbs) == tuple(best) else u_star - u
        if inc < 0:
            if inc < -1e-9 * max(1.0, abs(u_star)):
                raise AssertionError(f"slot {t}: policy beat the oracle by {-inc}")
            inc = 0.0
        r_u = realized_utility(obs, serving, demands)
        served = serving >= 0
        edge_d = float(demands[served].sum())
        tot_d = float(demands.sum())
        cells = _serving_cells(policy, obs, serving) if keep_users else None
        policy.update(obs, sel, serving, demands)

        i = t - 1
        util[i], oracle_util[i], realized[i], regret[i] = u, u_star, r_u, inc
        edge_total += edge_d
        demand_total += tot_d
        explore_slots += sel.phase != EXPLOIT
        w_serv = np.where(served, obs.weights[np.arange(obs.n_users), np.maximum(serving, 0)], 0.0)
        traces.append(SlotTrace(
            t, sel.phase, tuple(sel.sbs), tuple(best), u, u_star, inc, r_u, edge_d, tot_d,
            serving if keep_users else np.zeros(0, np.int64),
            w_serv if keep_users else np.zeros(0),
            demands if keep_users else np.zeros(0), cells))
        if t % config.checkpoint_every == 0 or t == T:
            learners = getattr(policy, "learners", None)
            mse_v, mse_a = compute_mse(learners, mu_fn, config.context_dims) if learners else (math.nan, math.nan)
            frac = edge_total / demand_total if demand_total > 0 else 0.0
            checkpoints.append(Checkpoint(t, mse_v, mse_a, frac))

    edge_frac = edge_total / demand_total if demand_total > 0 else 0.0
    explore_rentals = None
    if hasattr(policy, "learners"):
        st = policy.state
        explore_rentals = list(getattr(st, "explore_rentals", None) or st.seen.explore_rentals)
    report = MetricsReport(
        name, np.cumsum(util), np.cumsum(oracle_util), np.cumsum(realized), np.cumsum(regret),
        checkpoints, edge_frac, 1.0 - edge_frac if demand_total > 0 else 1.0,
        overlap_degree(topology.positions, topology.ranges, config.overlap_resolution),
        explore_rentals, explore_slots)
    return traces, report


def demand_allocation(traces: Sequence[SlotTrace]) -> tuple[float, float]:
    """(edge fraction, cloud fraction) of all realised demand; unserved demand counts as cloud."""
    edge = sum(tr.edge_demand for tr in traces)
    total = sum(tr.total_demand for tr in traces)
    if total <= 0:
        return 0.0, 1.0
    return edge / total, 1.0 - edge / total


# ---------------------------------------------------------------------------
# output files

TRACE_COLUMNS = ("t", "phase", "selected", "utility", "oracle_utility", "regret_cum")
METRICS_COLUMNS = ("checkpoint", "mse_visited", "mse_all", "edge_frac")


def _fmt(x: float) -> str:
    return repr(float(x))


def atomic_write(path: str | Path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def trace_csv(traces: Sequence[SlotTrace]) -> str:
    regret = np.cumsum([tr.regret for tr in traces])
    rows = [(tr.t, tr.phase, " ".join(map(str, tr.selected)), _fmt(tr.utility),
             _fmt(tr.oracle_utility), _fmt(r)) for tr, r in zip(traces, regret)]
    return csv_text(TRACE_COLUMNS, rows)


def metrics_csv(report: MetricsReport) -> str:
    rows = [(c.t, _fmt(c.mse_visited), _fmt(c.mse_all), _fmt(c.edge_frac)) for c in report.checkpoints]
    return csv_text(METRICS_COLUMNS, rows)


def write_trace(path: str | Path, traces: Sequence[SlotTrace]) -> None:
    atomic_write(path, trace_csv(traces))


def write_metrics(path: str | Path, report: MetricsReport) -> None:
    atomic_write(path, metrics_csv(report))
