import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgebandit.demand import (AREA_TYPES, DEFAULT_CLASS_MIX, USER_CLASSES, ContextModel, DemandSampler,
                               GaussianBumps, GridTable, bundled_demand_functions, class_centers,
                               default_demand_function, load_demand_table, sample_demand,
                               verify_holder, write_demand_table)
from edgebandit.errors import ConfigError, DomainError
from edgebandit.network import AreaType


class FirstCoordinate:
    dims = 3

    def __call__(self, x):
        return np.asarray(x, dtype=float).reshape(-1, 3)[:, 0]


def test_constant_function():
    fn = GaussianBumps.constant(4.0, 2, 10.0)
    assert fn((0.1, 0.9)) == 4.0
    assert np.all(fn(np.random.default_rng(0).random((20, 2))) == 4.0)


def test_bump_peak_on_grid():
    fn = GaussianBumps([[0.3, 0.6]], [5.0], [0.2], base=1.0)
    g = np.linspace(0, 1, 100)
    grid = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    assert fn((0.3, 0.6)) >= fn(grid).max()
    assert fn((0.3, 0.6)) == pytest.approx(6.0)


def test_bilinear_table_midpoint():
    assert GridTable([[0.0, 1.0], [1.0, 0.0]], d_max=1.0)((0.5, 0.5)) == pytest.approx(0.5)


def test_table_round_trip(tmp_path):
    table = GridTable(np.arange(9, dtype=float).reshape(3, 3), d_max=10.0)
    path = tmp_path / "t.csv"
    write_demand_table(path, table)
    assert path.read_text().splitlines()[0] == "dims,h,d_max"
    loaded = load_demand_table(path)
    assert loaded.kind == "csv_table"
    pts = np.random.default_rng(1).random((50, 2))
    assert np.allclose(loaded(pts), table(pts))


def test_table_corner_values():
    vals = np.random.default_rng(2).uniform(0, 10, size=(4, 4))
    fn = GridTable(vals, d_max=10.0)
    assert fn((0.0, 0.0)) == pytest.approx(vals[0, 0])
    assert fn((1.0, 1.0)) == pytest.approx(vals[3, 3])
    assert fn((1 / 3, 2 / 3)) == pytest.approx(vals[1, 2])


@pytest.mark.parametrize("text", ["dims,h\n2,2\n1,2,3,4\n", "dims,h,d_max\n2,2,10\n1,2,3\n"])
def test_table_malformed(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_demand_table(p)


def test_out_of_domain():
    fn = default_demand_function(2, 10.0)
    with pytest.raises(DomainError):
        fn((1.2, 0.3))
    with pytest.raises(DomainError):
        fn((0.2, 0.3, 0.4))


def test_bump_validation():
    with pytest.raises(ConfigError):
        GaussianBumps([[0.5, 0.5]], [8.0], [0.2], base=3.0, d_max=10.0)
    with pytest.raises(ConfigError):
        GaussianBumps(np.full((6, 2), 0.5), [1.0] * 6, [0.2] * 6, d_max=10.0)


def test_sampler_extremes():
    s = DemandSampler(10, 0)
    assert np.all(s.sample(np.zeros(100)) == 0)
    assert np.all(s.sample(np.full(100, 10.0)) == 10)
    assert sample_demand(s, 0.0) == 0
    with pytest.raises(DomainError):
        s.sample(11.0)
    with pytest.raises(DomainError):
        s.sample(-0.1)


def test_sampler_mean_within_three_sigma():
    d_max, n = 10, 100_000
    x = DemandSampler(d_max, 7).sample(np.full(n, d_max / 2))
    sigma = math.sqrt(d_max * 0.25 / n)
    assert abs(x.mean() - d_max / 2) < 3 * sigma
    assert x.min() >= 0 and x.max() <= d_max


def test_sampler_reproducible():
    mu = np.linspace(0, 10, 50)
    assert np.array_equal(DemandSampler(10, 3).sample(mu), DemandSampler(10, 3).sample(mu))


def test_holder_examples():
    assert verify_holder(GaussianBumps.constant(3.0, 2, 10.0), 0.1, 1.0, 1000).worst_ratio == 0.0
    assert verify_holder(FirstCoordinate(), 1.0, 1.0, 2000).passed
    assert verify_holder(FirstCoordinate(), 1.0, 1.0, 2000).worst_ratio <= 1.0 + 1e-12
    assert not verify_holder(FirstCoordinate(), 0.5, 1.0, 2000).passed


@pytest.mark.parametrize("dims", [1, 2, 3, 4])
def test_bundled_functions_declared_constants(dims):
    for name, fn in bundled_demand_functions(dims, 10.0).items():
        assert fn.dims == dims, name
        rep = verify_holder(fn, fn.holder_L, fn.holder_alpha, 10_000, rng=dims)
        assert rep.passed, (name, rep.worst_ratio, fn.holder_L)


def test_bump_lipschitz_constant_is_tight_for_one_bump():
    # slope of h*exp(-r^2/2w^2) peaks at r = w with value h/w * exp(-1/2)
    fn = GaussianBumps([[0.5]], [4.0], [0.1], d_max=10.0)
    eps = 1e-6
    slope = (fn([0.6 + eps]) - fn([0.6 - eps])) / (2 * eps)
    assert abs(slope) == pytest.approx(fn.holder_L, rel=1e-6)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=2))
def test_default_within_bounds(x):
    v = default_demand_function(2, 10.0)(x)
    assert 0.0 <= v <= 10.0


def test_context_model_mixture_one_class():
    cm = ContextModel(2, class_mix={a: (1.0, 0.0, 0.0) for a in AREA_TYPES})
    x, cls = cm.sample(AreaType.PUBLIC, 500, np.random.default_rng(0))
    assert np.all(cls == 0)
    assert np.allclose(x.mean(axis=0), class_centers(2)[0], atol=0.01)


def test_context_model_truncation():
    cm = ContextModel(3, spread=0.02, truncate=2.0)
    x, cls = cm.sample(AreaType.PUBLIC, 5000, np.random.default_rng(1))
    assert np.all(np.abs(x - class_centers(3)[cls]) <= 0.04 + 1e-12)
    assert np.all((x >= 0) & (x <= 1))


def test_class_proportions_match_area_type():
    cm = ContextModel(2)
    _, cls = cm.sample(AreaType.SCHOOL, 100_000, np.random.default_rng(2))
    freq = np.bincount(cls, minlength=len(USER_CLASSES)) / len(cls)
    assert np.allclose(freq, DEFAULT_CLASS_MIX[AreaType.SCHOOL], atol=0.02)


def test_mixture_marginals():
    w = (0.5, 0.3, 0.2)
    cm = ContextModel(2)
    x, area = cm.sample_mixture(w, 100_000, np.random.default_rng(3))
    assert np.allclose(np.bincount(area, minlength=3) / len(area), w, atol=0.02)
    # expected first-coordinate mean from the class mix of each area type
    centres = class_centers(2)
    expect = sum(wa * np.dot(DEFAULT_CLASS_MIX[a], centres[:, 0]) for wa, a in zip(w, AREA_TYPES))
    assert x[:, 0].mean() == pytest.approx(expect, abs=0.02)
