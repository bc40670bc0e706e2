import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgebandit.errors import ConfigError, ParameterError, UnreachableError
from edgebandit.network import (ChannelConfig, CloudConfig, TaskProfile, channel_gain, cloud_delay,
                                delay_reduction, edge_delay, max_delay_reduction, slot_utility,
                                uplink_rate)


def unit_channel(**kw):
    return ChannelConfig(bandwidth=1.0, noise=1.0, tx_power=1.0, **kw)


def test_uplink_rate_examples():
    assert uplink_rate(unit_channel(), 1.0) == pytest.approx(1.0)
    assert uplink_rate(unit_channel(), 0.0) == 0.0
    ch = ChannelConfig(bandwidth=20e6, noise=1e-10, tx_power=0.01)
    gain = 1e3 * 1e-10 / 0.01  # SNR of 1000
    assert uplink_rate(ch, gain) == pytest.approx(20e6 * math.log(1001, 2))
    assert uplink_rate(ch, gain) == pytest.approx(1.994e8, rel=1e-3)


def test_uplink_rate_interference_lowers_rate():
    assert uplink_rate(unit_channel(interference=1.0), 2.0) == pytest.approx(1.0)


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1, 1e7))
def test_uplink_rate_monotone(h1, h2, w):
    ch = ChannelConfig(bandwidth=w, noise=1.0, tx_power=1.0)
    lo, hi = sorted((h1, h2))
    assert uplink_rate(ch, lo) <= uplink_rate(ch, hi)
    wider = ChannelConfig(bandwidth=2 * w, noise=1.0, tx_power=1.0)
    assert uplink_rate(wider, hi) >= uplink_rate(ch, hi)


def test_uplink_rate_rejects_negative_gain():
    with pytest.raises(ParameterError):
        uplink_rate(unit_channel(), -1.0)


def test_edge_delay_examples():
    assert edge_delay(1.0, TaskProfile(1, 1, 1), 1.0) == pytest.approx(2.0)
    task = TaskProfile(input_bits=1e6, cycles=1e9)
    assert edge_delay(1e8, task, 2.8e9) == pytest.approx(0.01 + 1e9 / 2.8e9)
    assert edge_delay(1e8, task, 2.8e9) == pytest.approx(0.3671, abs=1e-4)
    slow, fast = edge_delay(1e8, task, 2.8e9), edge_delay(1e8, task, 5.6e9)
    assert slow - 0.01 == pytest.approx(2 * (fast - 0.01))


def test_edge_delay_unreachable():
    with pytest.raises(UnreachableError):
        edge_delay(0.0, TaskProfile(), 2.8e9)


def test_cloud_delay_examples():
    cloud1 = CloudConfig(cpu_freq=1.0, backbone_rate=(1.0, 1.0), round_trip=1.0)
    assert cloud_delay(1.0, TaskProfile(1, 1, 1), cloud1, 1.0) == pytest.approx(4.0)
    task = TaskProfile(input_bits=1e6, cycles=1e9)
    expect = 1e6 / 1e8 + 1e9 / 5.6e9 + 1e6 / 1.5e7 + 0.1
    assert cloud_delay(1e8, task, CloudConfig(), 1.5e7) == pytest.approx(expect)
    assert cloud_delay(1e8, task, CloudConfig(), 1.5e7) == pytest.approx(0.3552, abs=1e-4)
    with pytest.raises(UnreachableError):
        cloud_delay(0.0, task, CloudConfig(), 1.5e7)


def test_delay_reduction_examples():
    task = TaskProfile(input_bits=1e6, cycles=1e9)
    u = delay_reduction(1e8, 1e8, task, 2.8e9, CloudConfig(), 1.5e7)
    assert u == pytest.approx(0.3552 - 0.3671, abs=2e-4)
    # identical radio: pure compute/backbone difference
    assert u == pytest.approx(1e9 / 5.6e9 - 1e9 / 2.8e9 + 1e6 / 1.5e7 + 0.1)
    vs = [1e7, 1e6, 1e5, 1e4]
    us = [delay_reduction(1e8, 1e8, task, 2.8e9, CloudConfig(), v) for v in vs]
    assert all(a < b for a, b in zip(us, us[1:]))


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(1e9, 1e10), st.floats(1e9, 1e10))
def test_delay_reduction_monotone(h1, h2, f1, f2):
    task = TaskProfile()
    def u(h, f):
        return delay_reduction(5e7, 3e7, task, f, CloudConfig(round_trip=h), 1.5e7)
    if h1 < h2 * (1 - 1e-9):
        assert u(h1, f1) < u(h2, f1)
    if f1 < f2 * (1 - 1e-9):
        assert u(h1, f1) < u(h1, f2)


def test_slot_utility_examples():
    assert slot_utility([], {}, {}, []) == 0.0
    assert slot_utility([0], {0: [0, 1]}, {0: [2.0, 1.0]}, [3, 4]) == pytest.approx(10.0)
    with pytest.raises(ParameterError):
        slot_utility([0], {0: [0, 5]}, {0: [1.0, 1.0]}, [3, 4])


def test_slot_utility_matches_double_sum():
    rng = np.random.default_rng(3)
    for _ in range(50):
        M, N = rng.integers(1, 51), rng.integers(1, 8)
        owner = rng.integers(0, N, size=M)
        d = rng.integers(0, 11, size=M)
        w = rng.normal(0.2, 0.1, size=M)
        sel = [n for n in range(N) if rng.random() < 0.5]
        served = {n: np.flatnonzero(owner == n) for n in range(N)}
        weights = {n: w[served[n]] for n in range(N)}
        total = 0.0
        for m in range(M):
            if owner[m] in sel:
                total += w[m] * d[m]
        assert slot_utility(sel, served, weights, d) == pytest.approx(total)
        # additivity over disjoint selections
        a, b = sel[: len(sel) // 2], sel[len(sel) // 2:]
        assert slot_utility(sel, served, weights, d) == pytest.approx(
            slot_utility(a, served, weights, d) + slot_utility(b, served, weights, d))


def test_gain_positive_and_decreasing():
    ch = ChannelConfig()
    g = channel_gain(np.array([0.0, 1.0, 10.0, 150.0]), ch)
    assert np.all(g > 0)
    assert g[0] == g[1] == 1.0
    assert g[2] > g[3]


def test_max_delay_reduction_bounds_sampled_users():
    task, cloud, sbs, mbs = TaskProfile(), CloudConfig(), ChannelConfig(), ChannelConfig(pathloss_exponent=3.0)
    bound = max_delay_reduction(800.0, mbs, task, cloud, 2.8e9, sbs)
    rng = np.random.default_rng(1)
    for _ in range(200):
        d_sbs, d_mbs, v = rng.uniform(0, 150), rng.uniform(0, 800), rng.uniform(10e6, 20e6)
        r = uplink_rate(sbs, channel_gain(d_sbs, sbs))
        r0 = uplink_rate(mbs, channel_gain(d_mbs, mbs))
        assert delay_reduction(r, r0, task, 2.8e9, cloud, v) <= bound


def test_default_weights_are_positive_in_coverage():
    task, cloud, sbs, mbs = TaskProfile(), CloudConfig(), ChannelConfig(), ChannelConfig(pathloss_exponent=3.0)
    r = uplink_rate(sbs, channel_gain(150.0, sbs))
    r0 = uplink_rate(mbs, channel_gain(0.0, mbs))
    assert delay_reduction(r, r0, task, 2.8e9, cloud, 20e6) > 0


@pytest.mark.parametrize("kw", [dict(bandwidth=0), dict(noise=0), dict(interference=-1), dict(tx_power=0)])
def test_channel_validation(kw):
    with pytest.raises(ConfigError):
        ChannelConfig(**kw)
