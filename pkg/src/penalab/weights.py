"""Penalty-weight kernels: terminal weights and their exact conditional
expectations given the state (X_u, S_u).

For a weight F_t = f(X_t, S_t) and r = t - u, the conditional kernel is

    g(x, s, r) = E[ f(X_t, S_t) | X_u = x, S_u = s ],

computed in closed form (exponential weights), via error functions (density
weights from the closed-form families) or by fixed-node Gauss-Legendre
(tabulated shapes, Kennedy weights).  Everything is returned on the log
scale; ratio estimators only consume differences of these logs, so the
arbitrary large factors (e.g. exp(mu^2 r / 2)) never need to be formed.
"""

from __future__ import annotations

import math

import numpy as np

from ._stable import (
    SQRT_2PI,
    gauss_legendre,
    log_gauss_tail_e,
    log_norm_cdf,
    log_norm_sf,
    logsumexp_signed,
    norm_cdf,
    norm_sf,
)
from .exact_laws import DensitySpec

__all__ = [
    "g_phi_hat",
    "log_g_phi",
    "log_g_explinear",
    "g_kennedy_bar",
    "log_g_kennedy",
]


# ---------------------------------------------------------------------------
# phi(S_t) weights
# ---------------------------------------------------------------------------

def g_phi_hat(x, s, r: float, phi: DensitySpec, gl_nodes: int = 96):
    """ghat(x, s, r) with E[phi(S_t) | X_u, S_u] = sqrt(2/(pi r)) ghat.

    ghat = phi(s) * int_0^{s-x} e^{-z^2/2r} dz
           + int_s^inf e^{-(v-x)^2/2r} phi(v) dv.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    d = s - x
    sr = math.sqrt(r)
    flat = phi.pdf(s) * sr * SQRT_2PI * (norm_cdf(d / sr) - 0.5)

    if phi.family == "exponential":
        dlt = phi.rate
        # log-stable: C e^{-dlt x + dlt^2 r/2} sqrt(2 pi r) Q((s - x + dlt r)/sqrt(r))
        logtail = (math.log(phi.scale) - dlt * x + dlt * dlt * r / 2.0
                   + 0.5 * math.log(2.0 * math.pi * r)
                   + log_norm_sf((s - x + dlt * r) / sr))
        tail = np.exp(logtail)
    elif phi.family == "uniform":
        A = phi.upper
        tail = phi.scale * sr * SQRT_2PI * np.maximum(
            norm_sf((s - x) / sr) - norm_sf((A - x) / sr), 0.0)
        tail = np.where(s >= A, 0.0, tail)
    else:
        nodes, wts = gauss_legendre(gl_nodes)
        lo = np.maximum(s, phi.grid[0])
        hi = phi.grid[-1]
        span = np.maximum(hi - lo, 0.0)
        v = lo[..., None] + span[..., None] * nodes
        dens = phi.pdf(v) * np.exp(-(v - x[..., None]) ** 2 / (2.0 * r))
        tail = span * np.einsum("...k,k->...", dens, wts)
    return flat + tail


def log_g_phi(x, s, r: float, phi: DensitySpec):
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(g_phi_hat(x, s, r, phi), 0.0))


# ---------------------------------------------------------------------------
# exponential weights e^{lam S_t + mu X_t}
# ---------------------------------------------------------------------------

def log_g_explinear(x, s, r: float, lam: float, mu: float):
    """log E[e^{lam S_t + mu X_t} | X_u = x, S_u = s], r = t - u.

    Assembled from signed log-pieces of the two closed forms

        G1(d) = E[e^{mu X_r} 1_{S_r < d}]
              = e^{mu^2 r/2} (Phi((d - mu r)/sr) - e^{2 mu d} Q((d + mu r)/sr)),
        G2(d) = E[e^{lam S_r + mu X_r} 1_{S_r >= d}]
              = 2 (lam+mu)/th e^{(lam+mu)^2 r/2} Q((d - (lam+mu) r)/sr)
                + 2 mu/th e^{th d + mu^2 r/2} Q((d + mu r)/sr),      th = lam + 2 mu,

    as  g = e^{lam s + mu x} G1(s - x) + e^{(lam+mu) x} G2(s - x); the
    th = 0 diagonal is handled by its analytic limit.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    d = s - x
    sr = math.sqrt(r)
    th = lam + 2.0 * mu
    nu = lam + mu

    logs = []
    signs = []

    base1 = lam * s + mu * x + mu * mu * r / 2.0
    logs.append(base1 + log_norm_cdf((d - mu * r) / sr))
    signs.append(np.ones_like(d))
    logs.append(base1 + 2.0 * mu * d + log_norm_sf((d + mu * r) / sr))
    signs.append(-np.ones_like(d))

    if th != 0.0:
        if nu != 0.0:
            logs.append(nu * x + math.log(abs(2.0 * nu / th)) + nu * nu * r / 2.0
                        + log_norm_sf((d - nu * r) / sr))
            signs.append(np.full_like(d, math.copysign(1.0, nu / th)))
        if mu != 0.0:
            logs.append(nu * x + math.log(abs(2.0 * mu / th)) + th * d + mu * mu * r / 2.0
                        + log_norm_sf((d + mu * r) / sr))
            signs.append(np.full_like(d, math.copysign(1.0, mu / th)))
    else:
        # lam = -2 mu, mu != 0
        logs.append(nu * x + math.log(2.0) + nu * nu * r / 2.0
                    + log_norm_sf((d - nu * r) / sr))
        signs.append(np.ones_like(d))
        logs.append(nu * x + math.log(2.0 * abs(mu) * sr) + mu * mu * r / 2.0
                    + log_gauss_tail_e((d + mu * r) / sr))
        signs.append(np.full_like(d, math.copysign(1.0, -mu)))

    out, sgn = logsumexp_signed(np.stack(logs), np.stack(signs), axis=0)
    if np.any(sgn <= 0.0):
        raise FloatingPointError("conditional exponential weight lost positivity")
    return out


# ---------------------------------------------------------------------------
# Kennedy weights psi(S_t) e^{lam (S_t - X_t)}
# ---------------------------------------------------------------------------

def _h_bar(z, r: float, lam: float):
    """h(lam, z, r) e^{-lam^2 r / 2} = 2 lam Q((z - lam r)/sr) + sqrt(2/(pi r)) e^{-(z-lam r)^2/2r}."""
    sr = math.sqrt(r)
    alpha = (z - lam * r) / sr
    return 2.0 * lam * norm_sf(alpha) + math.sqrt(2.0 / (math.pi * r)) * np.exp(-0.5 * alpha * alpha)


def g_kennedy_bar(x, s, r: float, lam: float, psi: DensitySpec, gl_nodes: int = 64):
    """gbar with E[psi(S_t) e^{lam (S_t - X_t)} | X_u, S_u] = e^{lam^2 r/2} gbar.

    gbar(x, s, r) = psi(s) e^{lam d} int_0^d e^{-2 lam z} hbar(z) dz
                    + int_d^inf e^{-lam z} psi(x + z) hbar(z) dz,   d = s - x.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    d = s - x
    nodes, wts = gauss_legendre(gl_nodes)

    # flat part (only where psi(s) > 0)
    z1 = d[..., None] * nodes
    k1 = np.exp(lam * d[..., None] - 2.0 * lam * z1) * _h_bar(z1, r, lam)
    flat = psi.pdf(s) * d * np.einsum("...k,k->...", k1, wts)

    # moving part: z in [d, z_hi] with psi(x + z) support
    if psi.family in ("uniform", "tabulated"):
        z_hi = psi.effective_upper() - x
    else:
        z_hi = (-x) + psi.effective_upper(1e-16) + 50.0 / (psi.rate + lam)
    span = np.maximum(z_hi - d, 0.0)
    z2 = d[..., None] + span[..., None] * nodes
    k2 = np.exp(-lam * z2) * psi.pdf(x[..., None] + z2) * _h_bar(z2, r, lam)
    moving = span * np.einsum("...k,k->...", k2, wts)
    return flat + moving


def log_g_kennedy(x, s, r: float, lam: float, psi: DensitySpec):
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(g_kennedy_bar(x, s, r, lam, psi), 0.0))
