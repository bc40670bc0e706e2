"""Ground-truth expected demand surfaces, bounded demand samplers and user context generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import ndtr, ndtri

from .errors import ConfigError, DomainError, ParameterError
from .network import AREA_TYPES, AreaType


def _as_points(x, dims: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if arr.shape[-1:] != (dims,) and arr.size:
        raise DomainError(f"expected {dims}-dimensional contexts, got shape {arr.shape}")
    arr = arr.reshape(-1, dims) if arr.size else np.zeros((0, dims))
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError("context outside [0,1]^D")
    return arr, single


class DemandFunction:
    """Expected demand ``mu(x)`` over ``[0,1]^dims`` with a declared Hölder pair."""

    kind: str = "abstract"
    dims: int
    d_max: float
    holder_L: float
    holder_alpha: float

    def _evaluate(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        xs, single = _as_points(x, self.dims)
        mu = np.clip(self._evaluate(xs), 0.0, self.d_max)
        return float(mu[0]) if single else mu

    def expected_demand(self, x):
        return self(x)


@dataclass
class GaussianBumps(DemandFunction):
    """``base + sum_i height_i * exp(-|x - c_i|^2 / (2 w_i^2))``.

    Bounded by ``base + sum(heights) <= d_max``. The declared Lipschitz
    constant (alpha = 1) is ``sum_i height_i / w_i * exp(-1/2)``, the sum of
    each bump's maximal slope.
    """

    centers: np.ndarray
    heights: np.ndarray
    widths: np.ndarray
    base: float = 0.0
    d_max: float = 10.0
    kind: str = field(default="gaussian_bumps", init=False)

    def __post_init__(self) -> None:
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.heights = np.asarray(self.heights, dtype=float).reshape(-1)
        self.widths = np.asarray(self.widths, dtype=float).reshape(-1)
        k = len(self.heights)
        if self.centers.shape[0] != k or len(self.widths) != k:
            raise ConfigError("bump centers/heights/widths must have matching lengths")
        if k > 5:
            raise ConfigError("at most 5 bumps are supported")
        if np.any(self.heights < 0) or np.any(self.widths <= 0) or self.base < 0:
            raise ConfigError("bump heights and base must be >= 0, widths > 0")
        if self.base + self.heights.sum() > self.d_max + 1e-12:
            raise ConfigError("base + sum(heights) exceeds d_max")
        self.dims = self.centers.shape[1]
        if k and (self.centers.min() < 0 or self.centers.max() > 1):
            raise ConfigError("bump centers must lie in [0,1]^D")
        self.holder_L = float(np.sum(self.heights / self.widths) * math.exp(-0.5))
        self.holder_alpha = 1.0

    @classmethod
    def constant(cls, value: float, dims: int, d_max: float) -> "GaussianBumps":
        fn = cls(np.zeros((0, dims)), [], [], base=value, d_max=d_max)
        return fn

    def _evaluate(self, xs: np.ndarray) -> np.ndarray:
        out = np.full(len(xs), self.base)
        for c, h, w in zip(self.centers, self.heights, self.widths):
            r2 = np.sum((xs - c) ** 2, axis=1)
            out += h * np.exp(-r2 / (2.0 * w * w))
        return out


@dataclass
class GridTable(DemandFunction):
    """Multilinear interpolation of node values on a uniform ``h^dims`` grid spanning ``[0,1]^dims``.

    Declared Lipschitz constant: ``sqrt(D) * (h - 1) * max |adjacent node difference|``.
    """

    values: np.ndarray
    d_max: float = 10.0
    kind: str = "bilinear_table"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        h = self.values.shape[0]
        if any(s != h for s in self.values.shape):
            raise ConfigError("grid table must have the same size along every axis")
        if np.any(self.values < 0) or np.any(self.values > self.d_max):
            raise ConfigError("grid values must lie in [0, d_max]")
        self.dims = self.values.ndim
        self.h = h
        if h == 1:
            self.holder_L = 0.0
            self._interp = None
        else:
            step = max(float(np.abs(np.diff(self.values, axis=a)).max()) for a in range(self.dims))
            self.holder_L = math.sqrt(self.dims) * (h - 1) * step
            axes = [np.linspace(0.0, 1.0, h)] * self.dims
            self._interp = RegularGridInterpolator(axes, self.values, method="linear")
        self.holder_alpha = 1.0

    def _evaluate(self, xs: np.ndarray) -> np.ndarray:
        if self._interp is None:
            return np.full(len(xs), float(self.values.reshape(-1)[0]))
        if len(xs) == 0:
            return np.zeros(0)
        return self._interp(xs)


def load_demand_table(path: str | Path) -> GridTable:
    """Read a demand grid file.

    Format: first line ``dims,h,d_max`` with values on the second line, then
    ``h ** dims`` row-major node values, comma- or newline-separated.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) < 2 or lines[0].replace(" ", "") != "dims,h,d_max":
        raise ConfigError(f"{path}: expected header line 'dims,h,d_max'")
    try:
        dims_s, h_s, dmax_s = lines[1].split(",")
        dims, h, d_max = int(dims_s), int(h_s), float(dmax_s)
        vals = [float(v) for ln in lines[2:] for v in ln.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed demand table ({exc})") from exc
    if dims < 1 or h < 1:
        raise ConfigError(f"{path}: dims and h must be positive")
    if len(vals) != h ** dims:
        raise ConfigError(f"{path}: expected {h ** dims} values, found {len(vals)}")
    table = GridTable(np.asarray(vals).reshape((h,) * dims), d_max=d_max)
    table.kind = "csv_table"
    return table


def write_demand_table(path: str | Path, table: GridTable) -> None:
    rows = table.values.reshape(-1, table.h)
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in rows)
    Path(path).write_text(f"dims,h,d_max\n{table.dims},{table.h},{table.d_max!r}\n{body}\n")


class DemandSampler:
    """Realised demand ``Binomial(d_max, mu / d_max)`` from a private seeded generator."""

    def __init__(self, d_max: int, rng: np.random.Generator | int | None = None):
        if int(d_max) != d_max or d_max < 1:
            raise ParameterError("d_max must be a positive integer for binomial sampling")
        self.d_max = int(d_max)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    def sample(self, mu):
        mu_arr = np.asarray(mu, dtype=float)
        if np.any(mu_arr < 0) or np.any(mu_arr > self.d_max) or not np.all(np.isfinite(mu_arr)):
            raise DomainError(f"expected demand must lie in [0, {self.d_max}]")
        d = np.asarray(self.rng.binomial(self.d_max, mu_arr / self.d_max))
        return int(d) if d.ndim == 0 else d


def sample_demand(sampler: DemandSampler, mu_x):
    return sampler.sample(mu_x)


@dataclass
class HolderReport:
    passed: bool
    worst_ratio: float
    worst_pair: tuple[np.ndarray, np.ndarray] | None


def verify_holder(fn: Callable, L: float, alpha: float, n_pairs: int,
                  dims: int | None = None, rng: np.random.Generator | int | None = 0) -> HolderReport:
    """Check ``|mu(x) - mu(x')| <= L |x - x'|^alpha`` on random pairs.

    Half of the pairs are uniform in the cube, the other half are short
    perturbations (scales 1e-1 .. 1e-4) to probe local slopes.
    """
    if n_pairs < 1:
        raise ParameterError("n_pairs must be >= 1")
    dims = dims if dims is not None else fn.dims
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n_far = (n_pairs + 1) // 2
    n_near = n_pairs - n_far
    x = rng.random((n_pairs, dims))
    y = np.empty_like(x)
    y[:n_far] = rng.random((n_far, dims))
    scales = 10.0 ** rng.uniform(-4, -1, size=(n_near, 1))
    y[n_far:] = np.clip(x[n_far:] + scales * rng.standard_normal((n_near, dims)), 0.0, 1.0)
    dist = np.linalg.norm(x - y, axis=1)
    keep = dist > 0
    x, y, dist = x[keep], y[keep], dist[keep]
    diff = np.abs(np.asarray(fn(x), dtype=float) - np.asarray(fn(y), dtype=float))
    ratio = diff / dist ** alpha
    if ratio.size == 0:
        return HolderReport(True, 0.0, None)
    i = int(np.argmax(ratio))
    worst = float(ratio[i])
    # small slack for interpolation round-off
    passed = bool(np.all(diff <= L * dist ** alpha + 1e-12))
    return HolderReport(passed, worst, (x[i], y[i]))


# ---------------------------------------------------------------------------
# user context generation per area type

USER_CLASSES = ("student", "worker", "other")

# Per-dimension class centres; dimension k uses row k % len(rows). Clusters sit
# near the cube corners so that, with the default truncation, each one falls in
# a single partition cell for every granularity up to 8 cells per dimension.
_CLASS_CENTER_ROWS = np.array([
    [0.08, 0.92, 0.92],
    [0.08, 0.08, 0.92],
    [0.92, 0.08, 0.08],
    [0.08, 0.92, 0.08],
])

# P(user class | area type)
DEFAULT_CLASS_MIX = {
    AreaType.SCHOOL: (0.70, 0.15, 0.15),
    AreaType.BUSINESS: (0.15, 0.70, 0.15),
    AreaType.PUBLIC: (1 / 3, 1 / 3, 1 / 3),
}


def class_centers(dims: int) -> np.ndarray:
    """``(n_classes, dims)`` context centres of the user classes."""
    rows = [_CLASS_CENTER_ROWS[k % len(_CLASS_CENTER_ROWS)] for k in range(dims)]
    return np.array(rows).T.copy()


@dataclass
class ContextModel:
    """Users of an area type draw a class, then a context ``N(centre, spread^2)``.

    The noise is truncated at ``truncate`` standard deviations (``None`` leaves it
    untruncated); the result is clipped to the unit cube.
    """

    dims: int
    spread: float = 0.02
    class_mix: Mapping[AreaType, Sequence[float]] = field(default_factory=lambda: dict(DEFAULT_CLASS_MIX))
    truncate: float | None = 2.0

    def __post_init__(self) -> None:
        if self.dims < 1 or self.spread < 0:
            raise ConfigError("context model needs dims >= 1 and spread >= 0")
        if self.truncate is not None and self.truncate <= 0:
            raise ConfigError("truncate must be positive or None")
        self.centers = class_centers(self.dims)
        for area, mix in self.class_mix.items():
            if len(mix) != len(USER_CLASSES) or abs(sum(mix) - 1.0) > 1e-9 or min(mix) < 0:
                raise ConfigError(f"class mix for {area} must be a probability vector of length 3")

    def sample(self, area: AreaType, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(contexts (n, dims), class ids (n,))``."""
        mix = np.asarray(self.class_mix[AreaType(area)], dtype=float)
        cls = rng.choice(len(USER_CLASSES), size=n, p=mix)
        return np.clip(self.centers[cls] + self.spread * self._noise(n, rng), 0.0, 1.0), cls

    def _noise(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.truncate is None:
            return rng.standard_normal((n, self.dims))
        # inverse-CDF sampling of the standard normal restricted to [-k, k]
        lo = ndtr(-self.truncate)
        return ndtri(rng.uniform(lo, 1.0 - lo, size=(n, self.dims)))

    def sample_mixture(self, weights: Sequence[float], n: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Composite population: area type ~ ``weights``, then per-area contexts.

        Returns ``(contexts, area indices into AREA_TYPES)``.
        """
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(AREA_TYPES),) or np.any(w < 0) or w.sum() <= 0:
            raise ConfigError("area mixture needs 3 non-negative weights")
        areas = rng.choice(len(AREA_TYPES), size=n, p=w / w.sum())
        out = np.empty((n, self.dims))
        for a, area in enumerate(AREA_TYPES):
            idx = np.flatnonzero(areas == a)
            if idx.size:
                out[idx] = self.sample(area, idx.size, rng)[0]
        return out, areas


def default_demand_function(dims: int, d_max: float) -> GaussianBumps:
    """Peaked surface: a tall bump on the student cluster, a lower one on workers."""
    c = class_centers(dims)
    return GaussianBumps(centers=c[:2], heights=[0.55 * d_max, 0.25 * d_max],
                         widths=[0.35, 0.35], base=0.1 * d_max, d_max=d_max)


def bundled_demand_functions(dims: int = 2, d_max: float = 10.0) -> dict[str, DemandFunction]:
    """Every demand surface shipped with the package, keyed by name."""
    grid_h = 5
    g = np.linspace(0.0, 1.0, grid_h)
    mesh = np.meshgrid(*([g] * dims), indexing="ij")
    ramp = sum(mesh) / dims
    return {
        "default": default_demand_function(dims, d_max),
        "constant": GaussianBumps.constant(0.4 * d_max, dims, d_max),
        "narrow_bumps": GaussianBumps(
            centers=class_centers(dims), heights=[0.5 * d_max, 0.3 * d_max, 0.1 * d_max],
            widths=[0.1, 0.15, 0.2], base=0.05 * d_max, d_max=d_max),
        "ramp_table": GridTable(d_max * (0.1 + 0.8 * ramp), d_max=d_max),
    }
