"""The acceptance battery: one function per criterion, each returning verdicts.

Sample counts and tolerances are pinned here; ``scale`` (< 1) shrinks the
Monte Carlo sizes proportionally for smoke runs, leaving the deterministic
checks untouched.
"""

from __future__ import annotations

import math

import numpy as np

from .exact_laws import (
    DensitySpec,
    ExponentialBivariate,
    h_cdf,
    kennedy_transforms,
    phi_from_f,
)
from .expansion import f1_coefficient_check, f1_kennedy_check
from .martingales import (
    PathState,
    m_kennedy_xs,
    m_mu_lambda_xs,
    m_phi,
    m_phi_from_f,
    m_phi_xs,
)
from .penalized_mc import ExpLinear, bessel_penalization_check, penalized_estimate
from .quadrature import (
    RectEvent,
    atom_weight,
    q_a_phi_limit,
    q_ay_finite,
    q_ay_limit,
    q_phi_limit,
    q_y_finite,
    q_y_limit,
)
from .report import Verdict, abs_verdict, ks_test
from .samplers import RngStream, draw_penalty_pairs, exact_bm_state, q_level_terminal_batch

EVENT = RectEvent(1.0, b=0.0, c=0.5)
EVENT2 = RectEvent(1.0, b=0.25, c=1.0)
PHI_UNIFORM = DensitySpec.uniform(1.0)
PHI_EXP = DensitySpec.exponential(1.0)
PSI_KENNEDY = DensitySpec.uniform(1.0, laplace_lambda=1.0)


def _chi3_cdf(z):
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    from scipy import stats

    return stats.chi(3).cdf(z)


def _mixture_levels(a: float, y: float, n: int, gen) -> np.ndarray:
    w = atom_weight(a, y)
    pick = gen.random(n) < w
    z = y * (1.0 - gen.random(n))
    return np.where(pick, y, z)


def _event_freq(levels, ev: RectEvent, step: float, gen):
    out = q_level_terminal_batch(levels, ev.u, step, gen)
    ind = (out["x"] <= ev.b) & (out["s"] <= ev.c)
    p = float(np.mean(ind))
    se = math.sqrt(max(p * (1.0 - p), 1e-12) / levels.size)
    return p, se, out


def criterion_1_density_oracles(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Simulated max, Bessel(3) and reflected-path marginals vs closed forms."""
    n = max(int(100000 * scale), 1000)
    rng = RngStream(seed, 1)
    x, s = exact_bm_state(1.0, n, rng.generator(0), steps=1000)   # step 1e-3, bridge max on
    v1 = ks_test(np.sort(s), lambda z: h_cdf(1.0, np.maximum(z, 0.0)),
                 name="ks-running-max", provenance="max law at t=1")
    coords = rng.generator(1).standard_normal((3, 16, n)) * math.sqrt(1.0 / 16)
    bess = np.sqrt(np.sum(np.sum(coords, axis=1) ** 2, axis=0))
    v2 = ks_test(np.sort(bess), _chi3_cdf, name="ks-bessel3",
                 provenance="Bessel(3) marginal at t=1")
    v3 = ks_test(np.sort(2.0 * s - x), _chi3_cdf, name="ks-pitman-2s-x",
                 provenance="reflected path marginal at t=1")
    return [v1, v2, v3]


def criterion_2_unit_means(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Every weight martingale has empirical mean 1 within 4 stderr."""
    n = max(int(100000 * scale), 1000)
    rng = RngStream(seed, 2)
    lam = 1.0
    cases = []
    for tag, fn in [
        ("m_phi[exp(1)]", lambda x, s, u: m_phi_xs(x, s, PHI_EXP)),
        ("m_phi[uniform(1)]", lambda x, s, u: m_phi_xs(x, s, PHI_UNIFORM)),
        ("m_kennedy[lam=1]", lambda x, s, u: m_kennedy_xs(x, s, u, lam, PSI_KENNEDY)),
        ("m_mu_lambda[R1(-2,1)]", lambda x, s, u: m_mu_lambda_xs(x, s, u, -2.0, 1.0)),
        ("m_mu_lambda[R2(0.5,0.25)]", lambda x, s, u: m_mu_lambda_xs(x, s, u, 0.5, 0.25)),
        ("m_mu_lambda[R3(0,-1)]", lambda x, s, u: m_mu_lambda_xs(x, s, u, 0.0, -1.0)),
    ]:
        cases.append((tag, fn))
    verdicts = []
    k = 0
    for u in (0.5, 1.0, 2.0):
        x, s = exact_bm_state(u, n, rng.generator(k), steps=32)
        k += 1
        for tag, fn in cases:
            vals = np.asarray(fn(x, s, u), dtype=float)
            se = float(np.std(vals)) / math.sqrt(n)
            verdicts.append(abs_verdict(f"{tag}@u={u}", float(np.mean(vals)), 1.0,
                                        4.0 * se, "unit martingale mean"))
    return verdicts


def criterion_3_limit_cross_oracle(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Sampler frequencies vs quadrature limit laws; total-mass self-checks."""
    n = max(int(100000 * scale), 2000)
    step = 1e-3
    rng = RngStream(seed, 3)
    verdicts = []

    p, se, _ = _event_freq(np.full(n, 1.0), EVENT, step, rng.generator(0))
    verdicts.append(abs_verdict("sampler-vs-q_y_limit", p, q_y_limit(1.0, EVENT),
                                3.0 * se, "mc-oracle"))

    levels = _mixture_levels(0.0, 1.0, n, rng.generator(1))
    p, se, _ = _event_freq(levels, EVENT, step, rng.generator(2))
    verdicts.append(abs_verdict("sampler-vs-q_ay_limit", p, q_ay_limit(0.0, 1.0, EVENT),
                                3.0 * se, "mc-oracle"))

    levels = PHI_UNIFORM.ppf(rng.generator(3).random(n))
    levels = np.maximum(levels, 1e-9)
    p, se, _ = _event_freq(levels, EVENT, step, rng.generator(4))
    verdicts.append(abs_verdict("sampler-vs-q_phi_limit", p, q_phi_limit(PHI_UNIFORM, EVENT),
                                3.0 * se, "mc-oracle"))

    full = RectEvent(1.0)
    for name, val in [
        ("q_y_limit-total-mass", q_y_limit(1.0, full)),
        ("q_ay_limit-total-mass", q_ay_limit(0.0, 1.0, full)),
        ("q_phi_limit-total-mass", q_phi_limit(PHI_UNIFORM, full)),
        ("q_a_phi_limit-total-mass", q_a_phi_limit(0.0, PHI_UNIFORM, full)),
    ]:
        verdicts.append(abs_verdict(name, val, 1.0, 1e-7, "quadrature"))
    return verdicts


def criterion_4_atom_weight(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Fraction of bridge-law paths whose total supremum sits at the pinned level."""
    n = max(int(100000 * scale), 2000)
    rng = RngStream(seed, 4)
    levels = _mixture_levels(0.0, 1.0, n, rng.generator(0))
    out = q_level_terminal_batch(levels, 1.0, 1e-3, rng.generator(1))
    frac = float(np.mean(np.abs(out["sup_total"] - 1.0) <= 1e-9))
    se = math.sqrt(0.25 / n)
    return [abs_verdict("atom-weight(0,1)", frac, 0.5, 3.0 * se, "mc vs closed form 1/2")]


def criterion_5_finite_t_convergence(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Finite-horizon laws approach their limits at a 1/t rate."""
    ts = np.array([32.0, 64.0, 128.0, 256.0, 512.0, 1024.0])
    verdicts = []
    for name, limit, fn in [
        ("q_y_finite-rate", q_y_limit(1.0, EVENT), lambda t: q_y_finite(1.0, EVENT, t)),
        ("q_ay_finite-rate", q_ay_limit(0.0, 1.0, EVENT), lambda t: q_ay_finite(0.0, 1.0, EVENT, t)),
    ]:
        gaps = np.array([abs(fn(t) - limit) for t in ts])
        slope = float(np.polyfit(np.log(ts), np.log(gaps), 1)[0])
        verdicts.append(abs_verdict(name, -slope, 1.0, 0.2, "log-log decay exponent"))
    return verdicts


def criterion_6_regime_table(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Exponential-weight estimates at t=512 vs the regime quadrature targets."""
    from .quadrature import expect_on_event

    n = max(int(1000000 * scale), 10000)
    t = 512.0
    rng = RngStream(seed, 6)
    verdicts = []
    for i, (lam, mu) in enumerate([(-2.0, 1.0), (1.0, 1.0), (0.0, -1.0)]):
        for j, ev in enumerate((EVENT, EVENT2)):
            target = expect_on_event(ev, lambda x, s: m_mu_lambda_xs(x, s, ev.u, lam, mu))
            est = penalized_estimate(ExpLinear(lam, mu), ev, t, n, rng.substream(10 * i + j))
            tol = 3.0 * est.stderr + 2.0 / t
            verdicts.append(abs_verdict(
                f"regime({lam},{mu})-ev{j}", est.value, target, tol,
                f"mc vs quadrature target, stderr {est.stderr:.2e}"))
    return verdicts


def criterion_7_f_reduction(seed: int, scale: float = 1.0) -> list[Verdict]:
    """The bivariate penalty reduces to its max-density consistently."""
    n = max(int(100000 * scale), 2000)
    rng = RngStream(seed, 7)
    f = ExponentialBivariate(-2.0, 1.0)
    phi = phi_from_f(f)
    ys = np.linspace(0.0, 20.0, 4001)
    dev = float(np.max(np.abs(phi.pdf(ys) - np.exp(-ys))))
    verdicts = [abs_verdict("phi_from_f-pointwise", dev, 0.0, 1e-6, "closed form exp(-y)")]

    gen = rng.generator(0)
    worst = 0.0
    for _ in range(100):
        x = gen.normal()
        s = max(x, 0.0) + abs(gen.normal())
        a_val = m_phi_from_f(PathState(x, s, 0.0), f)
        b_val = m_phi(PathState(x, s, 0.0), phi)
        worst = max(worst, abs(a_val - b_val))
    verdicts.append(abs_verdict("m_phi_from_f-consistency", worst, 0.0, 1e-5,
                                "dual route, 100 random states"))

    gen = rng.generator(1)
    a_arr, y_arr = draw_penalty_pairs(f, n, gen)
    levels = np.where(gen.random(n) < (y_arr - a_arr) / (2.0 * y_arr - a_arr),
                      y_arr, y_arr * (1.0 - gen.random(n)))
    levels = np.maximum(levels, 1e-9)
    p, se, _ = _event_freq(levels, EVENT, 1e-3, rng.generator(2))
    verdicts.append(abs_verdict("sample_Q_f-vs-q_phi_limit", p, q_phi_limit(phi, EVENT),
                                3.0 * se, "mc-oracle"))
    return verdicts


def criterion_8_expansion_coefficient(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Fitted 1/t coefficient matches the quadrature target within 10%."""
    rep = f1_coefficient_check(PHI_UNIFORM, EVENT)
    ratio = rep["residual_half_ratio"]
    return [
        abs_verdict("f1-coefficient-rel-err", rep["rel_err"], 0.0, 0.10,
                    f"fit {rep['fit'].c1:.6f} vs target {rep['target']:.6f}"),
        Verdict("f1-residual-decay", float(ratio), 3.0, math.inf, bool(ratio >= 3.0),
                "max residual in early half over late half (1/t^2 remainder)"),
    ]


def criterion_9_kennedy_expansion(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Discounted-model fit, phi1 and c against the closed forms."""
    lam = 1.0
    c0 = lam / (1.0 - math.exp(-lam))
    rep = f1_kennedy_check(lam, PSI_KENNEDY, EVENT)
    _, _, phi1, c = kennedy_transforms(PSI_KENNEDY, lam)
    ys = np.linspace(0.0, 1.0, 1001)
    dev = float(np.max(np.abs(phi1.pdf(ys) - 2.0 * ys)))
    return [
        abs_verdict("kennedy-coefficient-rel-err", rep["rel_err"], 0.0, 0.15,
                    f"fit {rep['fit'].c1:.6f} vs target {rep['target']:.6f}"),
        abs_verdict("kennedy-phi1-pointwise", dev, 0.0, 1e-8, "closed form 2y on [0,1]"),
        abs_verdict("kennedy-c-value", c, c0 / 2.0, 1e-10, "closed form c0/2"),
    ]


def criterion_10_pitman_regression(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Binned regression of the max on the reflected level: E[S | R=r] = r/2."""
    n = max(int(1000000 * scale), 10000)
    rng = RngStream(seed, 10)
    x, s = exact_bm_state(1.0, n, rng.generator(0), steps=32)
    r = 2.0 * s - x
    verdicts = []
    for r0 in (1.0, 2.0, 3.0):
        mask = np.abs(r - r0) <= 0.05
        est = float(np.mean(s[mask]))
        verdicts.append(abs_verdict(f"pitman-cond-mean-r={r0}", est, r0 / 2.0,
                                    0.05 * (r0 / 2.0),
                                    f"binned regression, {int(mask.sum())} samples"))
    return verdicts


def criterion_11_bessel_penalization(seed: int, scale: float = 1.0) -> list[Verdict]:
    """Trivial-limit Bessel penalizations return the unpenalized law."""
    n = max(int(50000 * scale), 3000)
    rng = RngStream(seed, 11)
    verdicts = []
    rep = bessel_penalization_check(-1.0, -1.0, 1.0, [32.0], n, rng,
                                    fine_step=0.004, fine_span=10.0, coarse_step=0.05)
    for row in rep["rows"]:
        verdicts.append(abs_verdict(
            f"bessel-branch1-b={row['b']}", row["value"], row["target"], row["tol"],
            f"exp(mu X + lam J) weight at t={row['t']}, stderr {row['stderr']:.2e}"))
    f52 = lambda b, j: np.exp(-b) * (j <= 1.0)
    rep = bessel_penalization_check(0.0, 0.0, 1.0, [32.0], n, rng.substream(1), f52=f52,
                                    fine_step=0.004, fine_span=10.0, coarse_step=0.05)
    for row in rep["rows"]:
        verdicts.append(abs_verdict(
            f"bessel-trivial-f-b={row['b']}", row["value"], row["target"], row["tol"],
            f"f(X, J) weight at t={row['t']}, stderr {row['stderr']:.2e}"))
    return verdicts


CRITERIA = [
    ("1 density oracles", criterion_1_density_oracles),
    ("2 martingale unit means", criterion_2_unit_means),
    ("3 limit-law cross-oracle", criterion_3_limit_cross_oracle),
    ("4 atom weight", criterion_4_atom_weight),
    ("5 finite-t convergence", criterion_5_finite_t_convergence),
    ("6 regime table", criterion_6_regime_table),
    ("7 f-reduction", criterion_7_f_reduction),
    ("8 expansion coefficient", criterion_8_expansion_coefficient),
    ("9 kennedy expansion", criterion_9_kennedy_expansion),
    ("10 pitman conditional law", criterion_10_pitman_regression),
    ("11 bessel penalization", criterion_11_bessel_penalization),
]


def run_suite(seed: int = 12345, scale: float = 1.0, which=None):
    """Run the acceptance criteria; returns (verdicts, all_pass)."""
    verdicts = []
    for idx, (label, fn) in enumerate(CRITERIA, start=1):
        if which is not None and idx not in which:
            continue
        verdicts.extend(fn(seed, scale))
    return verdicts, all(v.passed for v in verdicts)
