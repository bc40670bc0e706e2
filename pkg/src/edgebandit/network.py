"""Radio/compute delay model and per-slot utility of a placement."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParameterError, UnreachableError


class AreaType(str, enum.Enum):
    SCHOOL = "school"
    BUSINESS = "business"
    PUBLIC = "public"


AREA_TYPES = (AreaType.SCHOOL, AreaType.BUSINESS, AreaType.PUBLIC)


@dataclass(frozen=True)
class ChannelConfig:
    bandwidth: float = 20e6  # W, Hz
    noise: float = 1e-10  # N_0, W
    interference: float = 0.0  # I, W
    pathloss_exponent: float = 3.5
    tx_power: float = 0.01  # P_u, W (10 dBm)

    def __post_init__(self) -> None:
        if self.bandwidth <= 0 or self.noise <= 0 or self.interference < 0:
            raise ConfigError("channel needs bandwidth > 0, noise > 0, interference >= 0")
        if self.pathloss_exponent <= 0 or self.tx_power <= 0:
            raise ConfigError("channel needs pathloss_exponent > 0 and tx_power > 0")


@dataclass(frozen=True)
class CloudConfig:
    cpu_freq: float = 5.6e9  # f_0, cycles/s
    backbone_rate: tuple[float, float] = (10e6, 20e6)  # v^t interval, bits/s
    round_trip: float = 0.1  # h, s

    def __post_init__(self) -> None:
        lo, hi = self.backbone_rate
        if self.cpu_freq <= 0 or lo <= 0 or hi < lo or self.round_trip <= 0:
            raise ConfigError("cloud needs cpu_freq > 0, 0 < v_lo <= v_hi, round_trip > 0")


@dataclass(frozen=True)
class TaskProfile:
    input_bits: float = 1e6  # lambda
    cycles: float = 1e8  # eta
    d_max: int = 10

    def __post_init__(self) -> None:
        if self.input_bits <= 0 or self.cycles <= 0 or self.d_max <= 0:
            raise ConfigError("task profile values must be positive")


@dataclass(frozen=True)
class SbsConfig:
    id: int
    position: tuple[float, float]
    range: float = 150.0
    cpu_freq: float = 2.8e9
    area_type: AreaType = AreaType.PUBLIC
    context_dims: int = 2
    holder_L: float = 1.0
    holder_alpha: float = 1.0

    def __post_init__(self) -> None:
        if self.range < 0 or self.cpu_freq <= 0:
            raise ConfigError(f"SBS {self.id}: range must be >= 0 and cpu_freq > 0")
        if self.context_dims < 1 or self.holder_L <= 0 or self.holder_alpha <= 0:
            raise ConfigError(f"SBS {self.id}: need D_n >= 1, L_n > 0, alpha_n > 0")


def channel_gain(distance: np.ndarray | float, channel: ChannelConfig) -> np.ndarray:
    """Deterministic path loss ``max(d, 1 m) ** -exponent`` (no fading)."""
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    return d ** (-channel.pathloss_exponent)


def uplink_rate(channel: ChannelConfig, gain, tx_power: float | None = None):
    """Shannon rate ``W log2(1 + P H / (N_0 + I))`` in bits/s; zero when ``H == 0``."""
    p = channel.tx_power if tx_power is None else tx_power
    h = np.asarray(gain, dtype=float)
    if np.any(h < 0):
        raise ParameterError("channel gain must be non-negative")
    r = channel.bandwidth * np.log2(1.0 + p * h / (channel.noise + channel.interference))
    return float(r) if r.ndim == 0 else r


def edge_delay(rate, task: TaskProfile, cpu_freq: float):
    """``lambda / r + eta / f_n``; raises if the SBS is unreachable (``r == 0``)."""
    r = np.asarray(rate, dtype=float)
    if np.any(r <= 0):
        raise UnreachableError("edge delay requested for an unreachable SBS (rate 0)")
    q = task.input_bits / r + task.cycles / cpu_freq
    return float(q) if q.ndim == 0 else q


def cloud_delay(rate0, task: TaskProfile, cloud: CloudConfig, backbone_rate: float):
    """``lambda / r_0 + eta / f_0 + lambda / v + h``."""
    r0 = np.asarray(rate0, dtype=float)
    if np.any(r0 <= 0):
        raise UnreachableError("MBS link has zero rate; the MBS must cover every user")
    if backbone_rate <= 0:
        raise ParameterError("backbone rate must be positive")
    q = (task.input_bits / r0 + task.cycles / cloud.cpu_freq
         + task.input_bits / backbone_rate + cloud.round_trip)
    return float(q) if q.ndim == 0 else q


def delay_reduction(rate, rate0, task: TaskProfile, cpu_freq: float,
                    cloud: CloudConfig, backbone_rate: float):
    """Per-task delay saved by serving at the edge instead of the cloud (may be negative)."""
    return cloud_delay(rate0, task, cloud, backbone_rate) - edge_delay(rate, task, cpu_freq)


def slot_utility(selected: Sequence[int],
                 served: Mapping[int, Sequence[int]],
                 weights: Mapping[int, Sequence[float]],
                 demands: Sequence[float]) -> float:
    """``sum_{n in S} sum_{m in M_n} u_{n,m} d_m``.

    ``served[n]`` lists user indices served by SBS ``n`` and ``weights[n]`` the
    matching delay reductions, in the same order.
    """
    demands = np.asarray(demands, dtype=float)
    total = 0.0
    for n in selected:
        users = np.asarray(served.get(n, ()), dtype=int)
        if users.size == 0:
            continue
        w = np.asarray(weights[n], dtype=float)
        if w.shape != users.shape:
            raise ParameterError(f"SBS {n}: {users.size} users but {w.size} weights")
        if users.max() >= demands.size:
            raise ParameterError("demand vector shorter than the user index set")
        total += float(np.dot(w, demands[users]))
    return total


def max_delay_reduction(max_mbs_distance: float, mbs_channel: ChannelConfig, task: TaskProfile,
                        cloud: CloudConfig, max_cpu_freq: float, sbs_channel: ChannelConfig) -> float:
    """Upper bound on any user's delay reduction given the farthest possible MBS distance."""
    r0 = uplink_rate(mbs_channel, channel_gain(max_mbs_distance, mbs_channel))
    best_edge = uplink_rate(sbs_channel, channel_gain(1.0, sbs_channel))
    return (cloud_delay(r0, task, cloud, cloud.backbone_rate[0])
            - edge_delay(best_edge, task, max_cpu_freq))
