"""Weight-martingale evaluators at a path state (position, running max, time).

Each evaluator is a pure function of the state and its parameters, with unit
value at the origin state.  Array-valued kernels (suffix ``_xs``) back the
quadrature and Monte Carlo modules; the ``PathState`` wrappers are the scalar
public surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ._stable import log_sinhc, sinhc
from .exact_laws import (
    BivariatePenalty,
    DensitySpec,
    ExponentialBivariate,
    Regime,
    SeparableIndicator,
    classify_region,
    fbar,
    kennedy_transforms,
)

__all__ = [
    "PathState",
    "m_phi",
    "m_mu_lambda",
    "m_kennedy",
    "m_bar",
    "m_phi_from_f",
    "f1_phi",
    "f1_lambda_phi",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class PathState:
    """Snapshot (X_u, S_u, u) of a path started at 0."""

    x: float
    s: float
    u: float = 0.0

    def __post_init__(self):
        if self.s < self.x:
            raise ValueError(f"invalid state: running max {self.s} below position {self.x}")
        if self.s < 0.0:
            raise ValueError("running max of a path started at 0 cannot be negative")
        if self.u < 0.0:
            raise ValueError("elapsed time must be nonnegative")


# ---------------------------------------------------------------------------
# array kernels
# ---------------------------------------------------------------------------

def m_phi_xs(x, s, phi: DensitySpec):
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    return phi.pdf(s) * (s - x) + phi.tail(s)


def m_mu_lambda_xs(x, s, u, lam: float, mu: float):
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    region = classify_region(lam, mu)
    if region is Regime.R1:
        e = np.exp((lam + mu) * s)
        return -(lam + mu) * e * (s - x) + e
    if region is Regime.R2:
        return np.exp((lam + mu) * x - (lam + mu) ** 2 * u / 2.0)
    # R3: mu < 0.  Factored exponential form keeps cosh/sinh from overflowing.
    d = s - x
    q = np.abs(mu) * d
    c_grow = (lam + 2.0 * mu) / (2.0 * mu)       # > 0 in R3
    c_dec = -lam / (2.0 * mu)
    small = q < 1e-4
    qs = np.where(small, q, 0.0)
    series = np.cosh(mu * np.where(small, d, 0.0)) \
        - (lam + mu) * np.where(small, d, 0.0) * sinhc(mu * np.where(small, d, 0.0))
    # masked big-branch lanes can hit inf - inf for subnormal mu; the small
    # branch supplies those values, so the noise is discarded below
    with np.errstate(over="ignore", invalid="ignore"):
        bracket = c_grow + c_dec * np.exp(-2.0 * np.where(small, 1.0, q))
        big_val = np.exp((lam + mu) * s - mu ** 2 * u / 2.0 + np.where(small, 0.0, q)) * bracket
    small_val = np.exp((lam + mu) * s - mu ** 2 * u / 2.0) * series
    out = np.where(small, small_val, big_val)
    return out


def m_kennedy_xs(x, s, u, lam: float, psi: DensitySpec, check: bool = True):
    if check:
        norm = psi.laplace_mass(lam)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"psi is not Laplace-normalized for lam={lam}: mass {norm}")
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    d = s - x
    term1 = psi.pdf(s) * d * sinhc(lam * d)
    term2 = np.exp(lam * x) * psi.laplace_tail(s, lam)
    return (term1 + term2) * np.exp(-(lam ** 2) * u / 2.0)


def m_bar_xs(x, u, lam: float, mu: float):
    """Bessel(3)-side weight martingale; x is the Bessel position."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("Bessel position must be nonnegative")
    if lam + mu < 0.0 and mu <= 0.0:
        return np.ones_like(x) if x.ndim else 1.0
    if lam >= 0.0 and lam + mu >= 0.0:
        c = lam + mu
    elif lam < 0.0 and mu > 0.0:
        c = mu
    else:
        raise ValueError(f"({lam}, {mu}) is outside the supported branches")
    out = np.exp(-(c ** 2) * u / 2.0 + log_sinhc(np.abs(c) * x))
    return out


def f1_phi_xs(x, s, u, phi: DensitySpec):
    """First-order expansion coefficient for a max-density weight.

    This is the martingale form from the expansion's derivation,
    ((u + m2)/2) M - A1/2 with A1(a, y) = phi(y)(y-a)^3/3 + tail second
    moment around a; it prices the exact 1/t coefficient of the penalized
    rectangle probabilities (a circulating cubed-tail variant of this
    coefficient is not a martingale; see the expansion module's reports,
    which show both numbers).
    """
    if not np.isfinite(phi.moment(5)):
        raise ValueError("f1_phi requires a finite fifth moment of phi")
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    m2 = phi.moment(2)
    d = s - x
    a1 = phi.pdf(s) * d ** 3 / 3.0 \
        + phi.tail_moment(2, s) - 2.0 * x * phi.tail_moment(1, s) + x * x * phi.tail_moment(0, s)
    return 0.5 * (u + m2) * m_phi_xs(x, s, phi) - 0.5 * a1


def f1_lambda_phi_xs(x, s, u, lam: float, psi: DensitySpec, transforms=None):
    if transforms is None:
        transforms = kennedy_transforms(psi, lam)
    _, _, phi1, c = transforms
    pref = c / (lam ** 3 * SQRT_2PI)
    return pref * (m_phi_xs(x, s, phi1) - m_kennedy_xs(x, s, u, lam, psi, check=False))


# ---------------------------------------------------------------------------
# bivariate-penalty martingale (independent of the phi reduction)
# ---------------------------------------------------------------------------

def _m_exp_bivariate(x: float, s: float, f: ExponentialBivariate, fstar: float) -> float:
    lam, mu = f.lam, f.mu

    def inner(a):
        # integral over y >= a+ of (2y - a) f(a + x, s v (y + x))
        ap = max(a, 0.0)
        ystar = max(s - x, ap)
        # flat part: S v (y+x) = s for y in [a+, ystar]
        flat = math.exp(lam * s) * ((ystar ** 2 - a * ystar) - (ap ** 2 - a * ap))
        # growing part: integral (2y - a) e^{lam (y + x)} dy from ystar to inf (lam < 0)
        e = math.exp(lam * (ystar + x))
        grow = e * (-(2.0 * ystar - a) / lam + 2.0 / lam ** 2)
        return math.exp(mu * (a + x)) * (flat + grow)

    span = 45.0 / mu
    lo = -span - abs(s - x)
    hi = 45.0 / (-(lam + mu)) + abs(s - x) + 1.0
    val, _ = integrate.quad(inner, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=300)
    return fstar * val


def m_phi_from_f_xs(x: float, s: float, f: BivariatePenalty) -> float:
    total = fbar(f)
    if not math.isfinite(total):
        raise ValueError("m_phi_from_f requires a finite fbar(f)")
    fstar = 1.0 / total
    if isinstance(f, ExponentialBivariate):
        return _m_exp_bivariate(x, s, f, fstar)
    if isinstance(f, SeparableIndicator):
        if s > f.cutoff:
            return 0.0
        A = f.cutoff
        # f* (A - x) * integral f1(b) (A - b) db
        return fstar * (A - x) * (A * f._prefix(0, A) - f._prefix(1, A))
    # generic table: nested trapezoids over the (shifted) support
    a, y = f.a_grid, f.y_grid

    def inner(av):
        yy = np.linspace(max(av, 0.0), max(y[-1] - x, max(av, 0.0)) + 1e-9, 257)
        sv = np.maximum(s, yy + x)
        vals = np.where(sv <= y[-1], f._bilinear(np.full_like(yy, av + x), sv), 0.0)
        return np.trapezoid((2.0 * yy - av) * vals, yy)

    lo = float(a[0]) - x - 1.0
    hi = float(a[-1]) - x + 1.0
    agrid = np.linspace(lo, hi, 513)
    vals = np.array([inner(av) for av in agrid])
    return fstar * float(np.trapezoid(vals, agrid))


# ---------------------------------------------------------------------------
# public scalar surface
# ---------------------------------------------------------------------------

def m_phi(state: PathState, phi: DensitySpec) -> float:
    """phi(S)(S - X) + upper tail of phi at S."""
    return float(m_phi_xs(state.x, state.s, phi))


def m_mu_lambda(state: PathState, lam: float, mu: float) -> float:
    """Exponential-weight martingale, dispatching on the (lam, mu) regime."""
    return float(m_mu_lambda_xs(state.x, state.s, state.u, lam, mu))


def m_kennedy(state: PathState, lam: float, psi: DensitySpec) -> float:
    """Kennedy martingale for a Laplace-normalized shape psi."""
    return float(m_kennedy_xs(state.x, state.s, state.u, lam, psi))


def m_bar(state: PathState, lam: float, mu: float) -> float:
    """Limit martingale for Bessel(3) penalized by exp(mu X + lam J)."""
    if state.x <= 0.0 and state.u > 0.0:
        raise ValueError("Bessel(3) position must be positive for u > 0")
    return float(m_bar_xs(state.x, state.u, lam, mu))


def m_phi_from_f(state: PathState, f: BivariatePenalty) -> float:
    """Martingale of a bivariate penalty, computed from f itself.

    Must agree with m_phi(state, phi_from_f(f)); the two routes are kept
    independent on purpose.
    """
    return float(m_phi_from_f_xs(state.x, state.s, f))


def f1_phi(state: PathState, phi: DensitySpec) -> float:
    """First 1/t expansion coefficient for the phi(S_t) weight (a martingale)."""
    return float(f1_phi_xs(state.x, state.s, state.u, phi))


def f1_lambda_phi(state: PathState, lam: float, psi: DensitySpec) -> float:
    """First discounted expansion coefficient for the Kennedy weight."""
    return float(f1_lambda_phi_xs(state.x, state.s, state.u, lam, psi))
