import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penalab.exact_laws import DensitySpec, ExponentialBivariate, SeparableIndicator
from penalab.martingales import (
    PathState,
    f1_lambda_phi,
    f1_phi,
    f1_phi_xs,
    m_bar,
    m_bar_xs,
    m_kennedy,
    m_kennedy_xs,
    m_mu_lambda,
    m_mu_lambda_xs,
    m_phi,
    m_phi_from_f,
    m_phi_xs,
)
from penalab.exact_laws import phi_from_f
from penalab.samplers import RngStream, exact_two_time_state

UNIFORM = DensitySpec.uniform(1.0)
EXP1 = DensitySpec.exponential(1.0)
PSI = DensitySpec.uniform(1.0, laplace_lambda=1.0)
C0 = 1.0 / (1.0 - math.exp(-1.0))


class TestPathState:
    def test_validation(self):
        with pytest.raises(ValueError):
            PathState(1.0, 0.5, 0.0)
        with pytest.raises(ValueError):
            PathState(-1.0, -0.5, 0.0)
        with pytest.raises(ValueError):
            PathState(0.0, 0.0, -1.0)


class TestUnitInitialValues:
    def test_all_evaluators_start_at_one(self):
        origin = PathState(0.0, 0.0, 0.0)
        assert m_phi(origin, UNIFORM) == 1.0
        assert m_phi(origin, EXP1) == 1.0
        for lam, mu in [(-2.0, 1.0), (1.0, 1.0), (0.0, -1.0), (-1.0, -1.0)]:
            assert m_mu_lambda(origin, lam, mu) == pytest.approx(1.0, abs=1e-14)
        assert m_kennedy(origin, 1.0, PSI) == pytest.approx(1.0, abs=1e-14)
        assert m_bar(origin, -1.0, -1.0) == 1.0
        assert m_bar(origin, 1.0, 0.5) == pytest.approx(1.0, abs=1e-12)
        assert m_phi_from_f(origin, ExponentialBivariate(-2.0, 1.0)) == pytest.approx(1.0, abs=1e-9)


class TestMPhi:
    def test_examples(self):
        assert m_phi(PathState(0.5, 0.8), UNIFORM) == pytest.approx(0.5, abs=1e-14)
        assert m_phi(PathState(-1.0, 2.0), UNIFORM) == 0.0


class TestMMuLambda:
    def test_r1_example(self):
        val = m_mu_lambda(PathState(0.5, 0.8), -2.0, 1.0)
        assert val == pytest.approx(1.3 * math.exp(-0.8), abs=1e-14)

    def test_r3_collapses_to_drift_tilt(self):
        # (0, -1): cosh + sinh collapse to e^{-x - u/2}
        st_ = PathState(0.3, 0.9, 2.0)
        assert m_mu_lambda(st_, 0.0, -1.0) == pytest.approx(math.exp(-0.3 - 1.0), rel=1e-12)

    def test_r3_continuity_at_mu_zero(self):
        st_ = PathState(-0.4, 1.1, 0.7)
        r1 = m_mu_lambda(st_, -1.0, 0.0)
        assert abs(m_mu_lambda(st_, -1.0, -1e-6) - r1) < 1e-6

    def test_r3_large_argument_stable(self):
        val = m_mu_lambda(PathState(-40.0, 2.0, 1.0), -1.0, -3.0)
        assert np.isfinite(val) and val > 0.0

    @given(x=st.floats(-5, 5), d=st.floats(0, 5), lam=st.floats(-4, 4), mu=st.floats(-4, 4))
    @settings(max_examples=200)
    def test_positivity(self, x, d, lam, mu):
        s = max(x, 0.0) + d
        assert m_mu_lambda(PathState(x, s, 0.5), lam, mu) > 0.0


class TestMKennedy:
    def test_closed_form_example(self):
        val = m_kennedy(PathState(0.0, 1.0, 0.0), 1.0, PSI)
        assert val == pytest.approx(C0 * math.sinh(1.0), rel=1e-12)

    def test_time_decay(self):
        v1 = m_kennedy(PathState(0.0, 0.5, 1.0), 1.0, PSI)
        v2 = m_kennedy(PathState(0.0, 0.5, 50.0), 1.0, PSI)
        assert v2 < v1 * 1e-9

    def test_absorbs_beyond_support(self):
        assert m_kennedy(PathState(0.0, 1.5, 0.2), 1.0, PSI) == 0.0

    def test_normalization_checked(self):
        with pytest.raises(ValueError):
            m_kennedy(PathState(0.0, 0.0, 0.0), 1.0, DensitySpec.uniform(1.0))


class TestMBar:
    def test_branch_values(self):
        assert m_bar(PathState(1.0, 1.0, 3.0), -1.0, -1.0) == 1.0
        assert m_bar(PathState(1.0, 1.0, 0.0), -1.0, 2.0) == pytest.approx(math.sinh(2.0) / 2.0, rel=1e-12)
        v = m_bar(PathState(0.7, 0.7, 1.0), 1.0, -0.5)
        assert v == pytest.approx(math.exp(-0.125) * math.sinh(0.35) / 0.35, rel=1e-12)

    def test_small_argument_limit(self):
        assert m_bar_xs(np.array([1e-10]), 0.0, 1.0, 0.5)[0] == pytest.approx(1.0, abs=1e-12)

    @given(lam=st.floats(-5, 5), mu=st.floats(-5, 5))
    @settings(max_examples=200)
    def test_branches_cover_the_plane(self, lam, mu):
        # every (lam, mu) lands in a branch and yields a positive value
        assert m_bar(PathState(0.8, 0.8, 0.6), lam, mu) > 0.0


class TestFReduction:
    F = ExponentialBivariate(-2.0, 1.0)

    def test_example_value(self):
        val = m_phi_from_f(PathState(0.5, 0.8), self.F)
        assert val == pytest.approx(1.3 * math.exp(-0.8), abs=1e-6)

    def test_consistency_with_phi_route(self):
        phi = phi_from_f(self.F)
        gen = RngStream(7).generator()
        for _ in range(25):
            x = gen.normal()
            s = max(x, 0.0) + abs(gen.normal())
            a = m_phi_from_f(PathState(x, s), self.F)
            b = m_phi(PathState(x, s), phi)
            assert a == pytest.approx(b, abs=1e-5)

    def test_separable_indicator_reduction(self):
        g = np.linspace(-12.0, 1.0, 2000)
        f = SeparableIndicator(g, np.exp(g), 1.0)
        # reduces to the uniform-phi martingale: (A - x)/A below the cutoff, 0 above
        assert m_phi_from_f(PathState(0.2, 0.6), f) == pytest.approx(0.8, abs=1e-4)
        assert m_phi_from_f(PathState(0.2, 1.5), f) == 0.0

    def test_infinite_mass_rejected(self):
        with pytest.raises(ValueError):
            m_phi_from_f(PathState(0.0, 0.0), ExponentialBivariate(0.0, -1.0))


class TestExpansionCoefficients:
    def test_f1_phi_origin_is_zero(self):
        # the coefficient martingale starts at 0 (the full-space series is flat)
        assert f1_phi(PathState(0.0, 0.0, 0.0), UNIFORM) == pytest.approx(0.0, abs=1e-14)

    def test_f1_phi_vanishes_beyond_support(self):
        assert f1_phi(PathState(0.2, 1.2, 3.0), UNIFORM) == 0.0

    def test_f1_phi_takes_negative_values(self):
        vals = f1_phi_xs(np.array([-0.5]), np.array([0.2]), 0.0, UNIFORM)
        assert vals[0] < 0.0

    def test_cubic_tail_variant_differs(self):
        # the circulating variant (cubed tail integrand, undivided prefactor)
        # evaluates to 5/24 at the origin for the uniform weight and is *not*
        # the series coefficient; the martingale form is
        m2 = UNIFORM.moment(2)
        variant = -(0.5 * UNIFORM.tail_moment(3, 0.0)) + (0.0 + m2) * 1.0
        assert variant == pytest.approx(5.0 / 24.0, abs=1e-12)
        assert f1_phi(PathState(0.0, 0.0, 0.0), UNIFORM) != pytest.approx(variant, abs=1e-3)

    def test_f1_lambda_phi_origin_is_zero(self):
        assert f1_lambda_phi(PathState(0.0, 0.0, 0.0), 1.0, PSI) == pytest.approx(0.0, abs=1e-12)

    def test_f1_lambda_phi_composition(self):
        # equals the prefactor times the difference of the two martingales
        from penalab.exact_laws import kennedy_transforms

        _, _, phi1, c = kennedy_transforms(PSI, 1.0)
        st_ = PathState(0.0, 0.5, 0.0)
        expected = c / math.sqrt(2 * math.pi) * (m_phi(st_, phi1) - m_kennedy(st_, 1.0, PSI))
        assert f1_lambda_phi(st_, 1.0, PSI) == pytest.approx(expected, rel=1e-10)


N_MART = 100000


def _martingale_gap(weight_fn, s_time, t_time, seed):
    """max over test functions of |E[M_t g] - E[M_s g]| in stderr units."""
    gen = RngStream(seed).generator()
    xs, ss, xt, st_ = exact_two_time_state(s_time, t_time, N_MART, gen)
    ms = np.asarray(weight_fn(xs, ss, s_time), dtype=float)
    mt = np.asarray(weight_fn(xt, st_, t_time), dtype=float)
    worst = 0.0
    for g in (np.ones(N_MART), (xs <= 0.0).astype(float), (ss <= 1.0).astype(float)):
        d = mt * g - ms * g
        se = float(np.std(d)) / math.sqrt(N_MART)
        worst = max(worst, abs(float(np.mean(d))) / max(se, 1e-300))
    return worst


@pytest.mark.parametrize("tag,fn,seed", [
    ("m_phi", lambda x, s, u: m_phi_xs(x, s, UNIFORM), 101),
    ("m_mu_lambda_r1", lambda x, s, u: m_mu_lambda_xs(x, s, u, -2.0, 1.0), 102),
    ("m_mu_lambda_r3", lambda x, s, u: m_mu_lambda_xs(x, s, u, 0.0, -1.0), 103),
    ("m_kennedy", lambda x, s, u: m_kennedy_xs(x, s, u, 1.0, PSI), 104),
    ("f1_phi", lambda x, s, u: f1_phi_xs(x, s, u, UNIFORM), 105),
])
def test_empirical_martingale_property(tag, fn, seed):
    gap = _martingale_gap(fn, 0.5, 2.0, seed)
    assert gap <= 4.0, f"{tag}: martingale increment {gap:.2f} stderr from zero"
