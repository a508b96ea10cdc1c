"""Closed-form densities, distribution functions and parameter transforms.

These are the scalar building blocks every other module leans on: the law of
the running maximum of Brownian motion, the joint law of (position, maximum),
the Bessel(3) marginal, the (lambda, mu) regime partition for exponential
weights, and the reductions that turn a bivariate penalty f(a, y) into an
equivalent one-sided-maximum density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import special

from ._stable import SQRT_2_OVER_PI

__all__ = [
    "DegeneracyError",
    "DensitySpec",
    "Regime",
    "ExponentialBivariate",
    "SeparableIndicator",
    "TabulatedGrid",
    "BivariatePenalty",
    "p_max",
    "h_cdf",
    "p_joint",
    "p_bessel3",
    "classify_region",
    "fbar",
    "phi_from_f",
    "kennedy_transforms",
    "drift_max_tail",
]


class DegeneracyError(ValueError):
    """Raised when a transform is analytically undefined (e.g. c(lambda, psi) = 0)."""


# ---------------------------------------------------------------------------
# scalar densities
# ---------------------------------------------------------------------------

def p_max(r, z):
    """Density of the running maximum of driftless Brownian motion at time r."""
    if np.any(np.asarray(r) <= 0.0):
        raise ValueError("p_max requires r > 0")
    z = np.asarray(z, dtype=float)
    out = np.where(z > 0.0, SQRT_2_OVER_PI / np.sqrt(r) * np.exp(-z * z / (2.0 * r)), 0.0)
    return float(out) if out.ndim == 0 else out


def h_cdf(r, z):
    """P(S_r < z) for the running maximum; equals erf(z / sqrt(2 r))."""
    if np.any(np.asarray(r) <= 0.0):
        raise ValueError("h_cdf requires r > 0")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0):
        raise ValueError("h_cdf requires z >= 0")
    out = special.erf(z / np.sqrt(2.0 * r))
    return float(out) if np.ndim(out) == 0 else out


def p_joint(v, a, y):
    """Joint density of (X_v, S_v) at (a, y); supported on y > max(a, 0)."""
    if np.any(np.asarray(v) <= 0.0):
        raise ValueError("p_joint requires v > 0")
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    w = 2.0 * y - a
    dens = SQRT_2_OVER_PI / v ** 1.5 * w * np.exp(-w * w / (2.0 * v))
    out = np.where(y > np.maximum(a, 0.0), dens, 0.0)
    return float(out) if out.ndim == 0 else out


def p_bessel3(r, z):
    """Marginal density of a Bessel(3) process started at 0, at time r."""
    if np.any(np.asarray(r) <= 0.0):
        raise ValueError("p_bessel3 requires r > 0")
    z = np.asarray(z, dtype=float)
    out = np.where(z > 0.0, SQRT_2_OVER_PI / r ** 1.5 * z * z * np.exp(-z * z / (2.0 * r)), 0.0)
    return float(out) if out.ndim == 0 else out


def drift_max_tail(mu: float, x: float) -> float:
    """P(S_inf > x) = exp(2 mu x) for Brownian motion with drift mu < 0."""
    if mu >= 0.0:
        raise ValueError("drift_max_tail requires mu < 0 (S_inf is infinite otherwise)")
    if x < 0.0:
        raise ValueError("drift_max_tail requires x >= 0")
    return math.exp(2.0 * mu * x)


# ---------------------------------------------------------------------------
# regime partition for exponential weights
# ---------------------------------------------------------------------------

class Regime(Enum):
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"


def classify_region(lam: float, mu: float) -> Regime:
    """Classify (lambda, mu) into the three-way partition of the plane.

    Boundary membership follows the literal inequalities; the three sets are
    disjoint and cover every input.
    """
    if lam + mu < 0.0 and mu >= 0.0:
        return Regime.R1
    if lam + 2.0 * mu >= 0.0 and lam + mu >= 0.0:
        return Regime.R2
    if lam + 2.0 * mu < 0.0 and mu < 0.0:
        return Regime.R3
    raise AssertionError(f"unclassifiable point ({lam}, {mu}); the partition should be exhaustive")


# ---------------------------------------------------------------------------
# densities on [0, inf)
# ---------------------------------------------------------------------------

def _poly_segment_integral(k: int, alpha, beta, lo, hi):
    """Integral of v^k (alpha + beta v) over [lo, hi] (exact, vectorized)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    p1 = (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)
    p2 = (hi ** (k + 2) - lo ** (k + 2)) / (k + 2)
    return alpha * p1 + beta * p2


def _explin_segment_integral(lam: float, alpha, beta, lo, hi):
    """Integral of (alpha + beta v) e^{-lam v} over [lo, hi] (exact, lam != 0)."""
    def anti(v):
        return -np.exp(-lam * v) * (alpha / lam + beta * v / lam + beta / lam ** 2)

    return anti(np.asarray(hi, dtype=float)) - anti(np.asarray(lo, dtype=float))


@dataclass
class DensitySpec:
    """A density on [0, inf) from a closed-form family or a tabulation.

    ``laplace_lambda is None`` means the usual unit-total-mass normalization.
    Otherwise the curve is scaled so that the integral of pdf(z) e^{-lambda z}
    equals one, the normalization the Kennedy-weight machinery expects (the
    shape is unchanged, only the prefactor moves).

    Instances are treated as immutable; nothing mutates them after
    construction apart from internal caches.
    """

    family: str
    rate: float = 0.0
    upper: float = 0.0
    grid: np.ndarray | None = None
    values: np.ndarray | None = None
    scale: float = 1.0
    laplace_lambda: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def exponential(rate: float, laplace_lambda: float | None = None) -> "DensitySpec":
        if rate <= 0.0:
            raise ValueError("exponential rate must be positive")
        if laplace_lambda is None:
            scale = rate
        else:
            if rate + laplace_lambda <= 0.0:
                raise ValueError("Laplace-weighted mass diverges for rate + lambda <= 0")
            scale = rate + laplace_lambda
        return DensitySpec("exponential", rate=rate, scale=scale, laplace_lambda=laplace_lambda)

    @staticmethod
    def uniform(upper: float, laplace_lambda: float | None = None) -> "DensitySpec":
        if upper <= 0.0:
            raise ValueError("uniform upper bound must be positive")
        if laplace_lambda is None or laplace_lambda == 0.0:
            scale = 1.0 / upper
        else:
            lam = laplace_lambda
            scale = lam / (1.0 - math.exp(-lam * upper))
        return DensitySpec("uniform", upper=upper, scale=scale, laplace_lambda=laplace_lambda)

    @staticmethod
    def tabulated(grid, values, laplace_lambda: float | None = None) -> "DensitySpec":
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ValueError("tabulated density needs matching 1-d grid/values with >= 2 knots")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("tabulated grid must be strictly increasing")
        if grid[0] < 0.0:
            raise ValueError("tabulated grid must live on [0, inf)")
        if np.any(values < 0.0):
            raise ValueError("tabulated density values must be nonnegative")
        probe = DensitySpec("tabulated", grid=grid, values=values,
                            upper=float(grid[-1]), laplace_lambda=laplace_lambda)
        mass = probe._raw_laplace_mass(laplace_lambda) if laplace_lambda is not None \
            else probe._raw_mass()
        if mass <= 0.0:
            raise ValueError("tabulated density has zero mass")
        return DensitySpec("tabulated", grid=grid, values=values / mass,
                           upper=float(grid[-1]), laplace_lambda=laplace_lambda)

    # -- tabulated internals -------------------------------------------------

    def _segments(self):
        if "segments" not in self._cache:
            g, v = self.grid, self.values
            slope = np.diff(v) / np.diff(g)
            alpha = v[:-1] - g[:-1] * slope
            self._cache["segments"] = (alpha, slope)
        return self._cache["segments"]

    def _raw_mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def _raw_laplace_mass(self, lam: float) -> float:
        if lam == 0.0:
            return self._raw_mass()
        alpha, beta = self._segments()
        seg = _explin_segment_integral(lam, alpha, beta, self.grid[:-1], self.grid[1:])
        return float(np.sum(seg))

    def _knot_cdf(self) -> np.ndarray:
        if "knot_cdf" not in self._cache:
            seg = 0.5 * (self.values[:-1] + self.values[1:]) * np.diff(self.grid)
            self._cache["knot_cdf"] = np.concatenate(([0.0], np.cumsum(seg)))
        return self._cache["knot_cdf"]

    def _tail_suffix(self, k: int) -> np.ndarray:
        key = ("tailmom", k)
        if key not in self._cache:
            alpha, beta = self._segments()
            seg = _poly_segment_integral(k, alpha, beta, self.grid[:-1], self.grid[1:])
            self._cache[key] = np.concatenate((np.cumsum(seg[::-1])[::-1], [0.0]))
        return self._cache[key]

    # -- evaluation ----------------------------------------------------------

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.family == "exponential":
            out = np.where(y >= 0.0, self.scale * np.exp(-self.rate * np.maximum(y, 0.0)), 0.0)
        elif self.family == "uniform":
            out = np.where((y >= 0.0) & (y <= self.upper), self.scale, 0.0)
        else:
            out = np.interp(y, self.grid, self.values, left=0.0, right=0.0)
        return float(out) if out.ndim == 0 else out

    def mass(self) -> float:
        """Raw total mass (1 under the unit-mass normalization)."""
        if self.family == "exponential":
            return self.scale / self.rate
        if self.family == "uniform":
            return self.scale * self.upper
        return self._raw_mass()

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        out = self.mass() - self.tail_moment(0, y)
        out = np.where(y < 0.0, 0.0, out)
        return float(out) if np.ndim(out) == 0 else out

    def tail(self, y):
        """Raw upper-tail mass from y."""
        return self.tail_moment(0, y)

    def moment(self, k: int) -> float:
        """Raw integral of y^k pdf(y)."""
        return float(self.tail_moment(k, 0.0))

    def tail_moment(self, k: int, y):
        """Integral of v^k pdf(v) over [max(y, 0), inf), exact per family."""
        y = np.asarray(y, dtype=float)
        yc = np.maximum(y, 0.0)
        if self.family == "exponential":
            d = self.rate
            out = self.scale * special.gamma(k + 1) / d ** (k + 1) * special.gammaincc(k + 1, d * yc)
        elif self.family == "uniform":
            yc2 = np.minimum(yc, self.upper)
            out = self.scale * (self.upper ** (k + 1) - yc2 ** (k + 1)) / (k + 1)
        else:
            g = self.grid
            suffix = self._tail_suffix(k)
            yc2 = np.clip(yc, g[0], g[-1])
            idx = np.clip(np.searchsorted(g, yc2, side="right") - 1, 0, g.size - 2)
            alpha, beta = self._segments()
            part = _poly_segment_integral(k, alpha[idx], beta[idx], yc2, g[idx + 1])
            out = part + suffix[idx + 1]
            out = np.where(yc >= g[-1], 0.0, out)
        return float(out) if np.ndim(out) == 0 else out

    def laplace_mass(self, lam: float) -> float:
        """Raw integral of pdf(z) e^{-lam z}."""
        return float(self.laplace_tail(0.0, lam))

    def laplace_tail(self, y, lam: float):
        """Integral of pdf(z) e^{-lam z} over [max(y, 0), inf)."""
        y = np.asarray(y, dtype=float)
        yc = np.maximum(y, 0.0)
        if self.family == "exponential":
            d = self.rate + lam
            if d <= 0.0:
                raise ValueError("Laplace tail diverges: rate + lam <= 0")
            out = self.scale * np.exp(-d * yc) / d
        elif self.family == "uniform":
            yc2 = np.minimum(yc, self.upper)
            if lam == 0.0:
                out = self.scale * (self.upper - yc2)
            else:
                out = self.scale * (np.exp(-lam * yc2) - math.exp(-lam * self.upper)) / lam
        else:
            key = ("laptail", float(lam))
            if key not in self._cache:
                alpha, beta = self._segments()
                if lam == 0.0:
                    seg = _poly_segment_integral(0, alpha, beta, self.grid[:-1], self.grid[1:])
                else:
                    seg = _explin_segment_integral(lam, alpha, beta, self.grid[:-1], self.grid[1:])
                self._cache[key] = np.concatenate((np.cumsum(seg[::-1])[::-1], [0.0]))
            suffix = self._cache[key]
            g = self.grid
            yc2 = np.clip(yc, g[0], g[-1])
            idx = np.clip(np.searchsorted(g, yc2, side="right") - 1, 0, g.size - 2)
            alpha, beta = self._segments()
            if lam == 0.0:
                part = _poly_segment_integral(0, alpha[idx], beta[idx], yc2, g[idx + 1])
            else:
                part = _explin_segment_integral(lam, alpha[idx], beta[idx], yc2, g[idx + 1])
            out = part + suffix[idx + 1]
            out = np.where(yc >= g[-1], 0.0, out)
        return float(out) if np.ndim(out) == 0 else out

    def ppf(self, q):
        """Inverse CDF; only meaningful under the unit-mass normalization."""
        if self.laplace_lambda is not None:
            raise ValueError("ppf requires the unit-mass normalization")
        q = np.asarray(q, dtype=float)
        if np.any((q < 0.0) | (q > 1.0)):
            raise ValueError("quantile levels must lie in [0, 1]")
        if self.family == "exponential":
            out = -np.log1p(-np.minimum(q, 1.0 - 1e-16)) / self.rate
        elif self.family == "uniform":
            out = q * self.upper
        else:
            g = self.grid
            kc = self._knot_cdf()
            qc = np.clip(q, 0.0, kc[-1])
            idx = np.clip(np.searchsorted(kc, qc, side="right") - 1, 0, g.size - 2)
            v0 = self.values[idx]
            width = g[idx + 1] - g[idx]
            slope = (self.values[idx + 1] - v0) / width
            resid = qc - kc[idx]
            with np.errstate(invalid="ignore", divide="ignore"):
                disc = np.sqrt(np.maximum(v0 * v0 + 2.0 * slope * resid, 0.0))
                s_quad = np.where(slope != 0.0, (disc - v0) / np.where(slope != 0.0, slope, 1.0), 0.0)
                s_lin = np.where(v0 > 0.0, resid / np.where(v0 > 0.0, v0, 1.0), 0.0)
            s = np.where(np.abs(slope) * width > 1e-13 * np.maximum(v0, 1e-300), s_quad, s_lin)
            out = g[idx] + np.clip(s, 0.0, width)
        return float(out) if out.ndim == 0 else out

    def effective_upper(self, eps: float = 1e-12) -> float:
        """Upper truncation point: tail mass beyond it is below eps."""
        if self.family == "exponential":
            return max(-math.log(eps / max(self.mass(), eps)) / self.rate, 1.0)
        return self.upper


# ---------------------------------------------------------------------------
# bivariate penalties f(a, y) on {y >= max(a, 0)}
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialBivariate:
    """f(a, y) = exp(lam * y + mu * a)."""

    lam: float
    mu: float

    def evaluate(self, a, y):
        a = np.asarray(a, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(y < np.maximum(a, 0.0)):
            raise ValueError("f(a, y) evaluated outside {y >= max(a, 0)}")
        out = np.exp(self.lam * y + self.mu * a)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SeparableIndicator:
    """f(a, y) = f1(a) * 1_{[0, A]}(y), with f1 tabulated on (-inf, A]."""

    f1_grid: np.ndarray
    f1_values: np.ndarray
    cutoff: float

    def __post_init__(self):
        g = np.asarray(self.f1_grid, dtype=float)
        v = np.asarray(self.f1_values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ValueError("f1 needs matching 1-d grid/values")
        if np.any(np.diff(g) <= 0.0):
            raise ValueError("f1 grid must be strictly increasing")
        if np.any(v < 0.0):
            raise ValueError("f1 must be nonnegative")
        if self.cutoff <= 0.0:
            raise ValueError("cutoff must be positive")
        if g[-1] > self.cutoff + 1e-12:
            raise ValueError("f1 is only defined on (-inf, cutoff]")
        object.__setattr__(self, "f1_grid", g)
        object.__setattr__(self, "f1_values", v)

    def f1(self, a):
        return np.interp(a, self.f1_grid, self.f1_values, left=0.0, right=0.0)

    def _prefix(self, k: int, x):
        """Integral of a^k f1(a) over (-inf, min(x, grid end)], exact."""
        g = self.f1_grid
        v = self.f1_values
        slope = np.diff(v) / np.diff(g)
        alpha = v[:-1] - g[:-1] * slope
        seg = _poly_segment_integral(k, alpha, slope, g[:-1], g[1:])
        prefix = np.concatenate(([0.0], np.cumsum(seg)))
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, g[0], g[-1])
        idx = np.clip(np.searchsorted(g, xc, side="right") - 1, 0, g.size - 2)
        part = _poly_segment_integral(k, alpha[idx], slope[idx], g[idx], xc)
        out = prefix[idx] + part
        out = np.where(x >= g[-1], prefix[-1], out)
        return float(out) if np.ndim(out) == 0 else out

    def evaluate(self, a, y):
        a = np.asarray(a, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(y < np.maximum(a, 0.0)):
            raise ValueError("f(a, y) evaluated outside {y >= max(a, 0)}")
        out = np.where(y <= self.cutoff, self.f1(a), 0.0)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TabulatedGrid:
    """f tabulated on a rectangular (a, y) grid, bilinear inside, 0 outside."""

    a_grid: np.ndarray
    y_grid: np.ndarray
    table: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_grid, dtype=float)
        y = np.asarray(self.y_grid, dtype=float)
        t = np.asarray(self.table, dtype=float)
        if t.shape != (a.size, y.size):
            raise ValueError("table shape must be (len(a_grid), len(y_grid))")
        if np.any(np.diff(a) <= 0) or np.any(np.diff(y) <= 0):
            raise ValueError("grids must be strictly increasing")
        if np.any(t < 0.0):
            raise ValueError("f must be nonnegative")
        object.__setattr__(self, "a_grid", a)
        object.__setattr__(self, "y_grid", y)
        object.__setattr__(self, "table", t)

    def _bilinear(self, a, y):
        a = np.asarray(a, dtype=float)
        y = np.asarray(y, dtype=float)
        ai = np.clip(np.searchsorted(self.a_grid, a) - 1, 0, self.a_grid.size - 2)
        yi = np.clip(np.searchsorted(self.y_grid, y) - 1, 0, self.y_grid.size - 2)
        fa = np.clip((a - self.a_grid[ai]) / (self.a_grid[ai + 1] - self.a_grid[ai]), 0.0, 1.0)
        fy = np.clip((y - self.y_grid[yi]) / (self.y_grid[yi + 1] - self.y_grid[yi]), 0.0, 1.0)
        t = self.table
        val = ((1 - fa) * (1 - fy) * t[ai, yi] + fa * (1 - fy) * t[ai + 1, yi]
               + (1 - fa) * fy * t[ai, yi + 1] + fa * fy * t[ai + 1, yi + 1])
        inside = ((a >= self.a_grid[0]) & (a <= self.a_grid[-1])
                  & (y >= self.y_grid[0]) & (y <= self.y_grid[-1]))
        return np.where(inside, val, 0.0)

    def evaluate(self, a, y):
        a = np.asarray(a, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(y < np.maximum(a, 0.0)):
            raise ValueError("f(a, y) evaluated outside {y >= max(a, 0)}")
        out = self._bilinear(a, y)
        return float(out) if np.ndim(out) == 0 else out


BivariatePenalty = ExponentialBivariate | SeparableIndicator | TabulatedGrid


def fbar(f: BivariatePenalty) -> float:
    """Weighted total mass of f: integral of (2y - a) f(a, y) over {y >= a+}.

    Returns math.inf when the finiteness criterion fails.
    """
    if isinstance(f, ExponentialBivariate):
        if not (f.mu > 0.0 and f.lam + f.mu < 0.0):
            return math.inf
        beta = -(f.lam + f.mu)
        return (1.0 / f.mu ** 2) * (1.0 / beta) * (1.0 + f.mu / beta)
    if isinstance(f, SeparableIndicator):
        A = f.cutoff
        # A * integral (A - a) f1(a) da, exact on the tabulation
        return float(A * (A * f._prefix(0, A) - f._prefix(1, A)))
    if isinstance(f, TabulatedGrid):
        m0, ma, my, _, _ = _tabgrid_cell_moments(f)
        return float(np.sum(2.0 * my - ma))
    raise TypeError(f"unsupported penalty type {type(f)!r}")


def _tabgrid_cell_moments(f: TabulatedGrid, y_refine: int = 8):
    """Per-cell integrals of f, a*f and eta*f over {eta >= max(a, 0)}.

    Exact for the bilinear interpolant on cells that do not straddle the
    support boundary; straddling cells are handled by midpoint subdivision.
    The y-grid is refined (keeping the original knots, which reproduces the
    interpolant exactly) so downstream tabulations are dense enough.
    """
    a, y = f.a_grid, f.y_grid
    yr = np.unique(np.concatenate([
        np.linspace(y[j], y[j + 1], y_refine + 1) for j in range(y.size - 1)]))
    table = np.vstack([np.interp(yr, y, f.table[i]) for i in range(a.size)])

    a0 = a[:-1][:, None]
    da = np.diff(a)[:, None]
    y0 = yr[:-1][None, :]
    dy = np.diff(yr)[None, :]
    F00 = table[:-1, :-1]
    F10 = table[1:, :-1]
    F01 = table[:-1, 1:]
    F11 = table[1:, 1:]

    area = da * dy
    m0 = area * (F00 + F10 + F01 + F11) / 4.0
    alpha0 = a0 / 2.0 + da / 6.0
    alpha1 = a0 / 2.0 + da / 3.0
    ma = area * (alpha0 * (F00 + F01) + alpha1 * (F10 + F11)) / 2.0
    beta0 = y0 / 2.0 + dy / 6.0
    beta1 = y0 / 2.0 + dy / 3.0
    my = area * (beta0 * (F00 + F10) + beta1 * (F01 + F11)) / 2.0

    a_hi = a[1:][:, None]
    y_hi = yr[1:][None, :]
    supported = y0 >= np.maximum(a_hi, 0.0)
    empty = y_hi <= np.maximum(a0, 0.0)
    straddle = ~supported & ~empty
    if np.any(straddle & ((F00 > 0) | (F10 > 0) | (F01 > 0) | (F11 > 0))):
        ii, jj = np.nonzero(straddle)
        for i, j in zip(ii, jj):
            pa = a[i] + (np.arange(8) + 0.5) / 8.0 * (a[i + 1] - a[i])
            py = yr[j] + (np.arange(8) + 0.5) / 8.0 * (yr[j + 1] - yr[j])
            paa, pyy = np.meshgrid(pa, py, indexing="ij")
            vals = np.where(pyy >= np.maximum(paa, 0.0), f._bilinear(paa, pyy), 0.0)
            w = (a[i + 1] - a[i]) * (yr[j + 1] - yr[j]) / 64.0
            m0[i, j] = float(np.sum(vals)) * w
            ma[i, j] = float(np.sum(paa * vals)) * w
            my[i, j] = float(np.sum(pyy * vals)) * w
    m0 = np.where(empty, 0.0, m0)
    ma = np.where(empty, 0.0, ma)
    my = np.where(empty, 0.0, my)
    return m0, ma, my, yr, table


def _phi_from_f_grid(f: BivariatePenalty) -> np.ndarray:
    if isinstance(f, ExponentialBivariate):
        beta = -(f.lam + f.mu)
        ymax = max(26.0 / beta, 21.0)
        return np.linspace(0.0, ymax, 2 ** 14 + 1)
    if isinstance(f, SeparableIndicator):
        return np.linspace(0.0, f.cutoff, 2 ** 12 + 1)
    return np.linspace(0.0, float(f.y_grid[-1]), 2 ** 11 + 1)


def phi_from_f(f: BivariatePenalty) -> DensitySpec:
    """Reduce a bivariate penalty to its equivalent max-density.

    phi(y) = f* [ integral of f(a, eta) over {eta > y v a+}
                  + integral of f(a, y) (y - a) over a < y ],
    returned as a tabulated density.  The mass is checked to be 1 within 1e-6
    before the (exact) renormalization that tabulation applies.
    """
    total = fbar(f)
    if not math.isfinite(total):
        raise ValueError("phi_from_f requires a finite fbar(f)")
    grid = _phi_from_f_grid(f)

    if isinstance(f, ExponentialBivariate):
        lam, mu = f.lam, f.mu
        expo = np.exp((lam + mu) * grid)
        tail_term = expo * (1.0 / ((-lam) * mu) + 1.0 / ((-lam) * (-(lam + mu))))
        wedge_term = expo / mu ** 2
        raw = (tail_term + wedge_term) / total
    elif isinstance(f, SeparableIndicator):
        A = f.cutoff
        p0_y = f._prefix(0, grid)
        p1_y = f._prefix(1, grid)
        p0_A = f._prefix(0, A)
        p1_A = f._prefix(1, A)
        tail = (A - grid) * p0_y + A * (p0_A - p0_y) - (p1_A - p1_y)
        wedge = np.where(grid <= A, grid * p0_y - p1_y, 0.0)
        raw = (np.maximum(tail, 0.0) + wedge) / total
    else:
        m0, _, _, yr, table = _tabgrid_cell_moments(f, y_refine=32)
        a = f.a_grid
        # upper-tail mass of f above each refined knot (exact cell suffix sums)
        col = np.sum(m0, axis=0)
        tail = np.concatenate((np.cumsum(col[::-1])[::-1], [0.0]))
        grid = yr
        raw = np.empty_like(grid)
        for j, yv in enumerate(grid):
            row = np.where(yv >= np.maximum(a, 0.0), table[:, j], 0.0)
            r_slope = np.diff(row) / np.diff(a)
            r_alpha = row[:-1] - a[:-1] * r_slope
            hi = np.minimum(a[1:], yv)
            lo = np.minimum(a[:-1], yv)
            wedge = yv * _poly_segment_integral(0, r_alpha, r_slope, lo, hi) \
                - _poly_segment_integral(1, r_alpha, r_slope, lo, hi)
            raw[j] = (tail[j] + float(np.sum(wedge))) / total
        if grid[0] > 1e-8:
            # below the table's y-floor the upper tail is flat and the wedge
            # vanishes: the reduced density is constant there, with a genuine
            # jump at the floor (where the table switches on) pinned by an
            # epsilon knot
            head = np.linspace(0.0, grid[0], 65, endpoint=False)
            head = np.append(head, grid[0] - 1e-9 * max(grid[0], 1.0))
            grid = np.concatenate((head, grid))
            raw = np.concatenate((np.full(head.size, tail[0] / total), raw))
    raw = np.maximum(raw, 0.0)
    mass = float(np.trapezoid(raw, grid))
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"phi_from_f mass {mass} deviates from 1 beyond 1e-6")
    return DensitySpec.tabulated(grid, raw)


# ---------------------------------------------------------------------------
# Kennedy-normalized transforms
# ---------------------------------------------------------------------------

def kennedy_transforms(psi: DensitySpec, lam: float):
    """Derive (Phi, varphi, phi1, c) from a Laplace-normalized shape psi.

    Requires integral psi(z) e^{-lam z} dz = 1 within 1e-6.  Raises
    DegeneracyError when c = integral psi(x)(1 - lam x) dx vanishes.
    """
    if lam <= 0.0:
        raise ValueError("kennedy_transforms requires lam > 0")
    norm = psi.laplace_mass(lam)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"psi is not Laplace-normalized for lam={lam}: mass {norm}")
    c = psi.mass() - lam * psi.moment(1)
    if abs(c) < 1e-12:
        raise DegeneracyError("expansion coefficient undefined: c(lambda, psi) = 0")

    def Phi(y):
        y = np.asarray(y, dtype=float)
        out = 1.0 - np.exp(lam * y) * psi.laplace_tail(y, lam)
        return float(out) if out.ndim == 0 else out

    def varphi(y):
        y = np.asarray(y, dtype=float)
        out = psi.pdf(y) - lam * np.exp(lam * y) * psi.laplace_tail(y, lam)
        return float(out) if out.ndim == 0 else out

    hi = psi.effective_upper(1e-14)
    grid = np.linspace(0.0, hi, 2 ** 15 + 1)
    vals = (psi.pdf(grid) - lam * psi.tail_moment(0, grid)) / c
    if np.any(vals < -1e-10 * max(1.0, float(np.max(np.abs(vals))))):
        raise ValueError("phi1 is signed for this psi; not representable as a density")
    vals = np.maximum(vals, 0.0)
    mass = float(np.trapezoid(vals, grid))
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"phi1 mass {mass} deviates from 1 beyond 1e-6")
    phi1 = DensitySpec.tabulated(grid, vals)
    return Phi, varphi, phi1, c
