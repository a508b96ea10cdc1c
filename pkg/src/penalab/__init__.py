"""Laboratory for laws of Brownian motion penalized through its one-sided max.

Modules
-------
exact_laws    closed-form densities, the regime partition, penalty reductions
martingales   weight-martingale evaluators at a path state
quadrature    deterministic finite-horizon and limit laws on rectangle events
samplers      seeded path simulation and exact limit-law samplers
penalized_mc  weighted Monte Carlo estimation of penalized laws
expansion     rate fitting and the first-order horizon expansions
acceptance    the acceptance battery (also behind ``penalab verify``)
cli           the ``penalab`` command-line entry point
"""

from .exact_laws import (
    DegeneracyError,
    DensitySpec,
    ExponentialBivariate,
    Regime,
    SeparableIndicator,
    TabulatedGrid,
    classify_region,
    drift_max_tail,
    fbar,
    h_cdf,
    kennedy_transforms,
    p_bessel3,
    p_joint,
    p_max,
    phi_from_f,
)
from .martingales import (
    PathState,
    f1_lambda_phi,
    f1_phi,
    m_bar,
    m_kennedy,
    m_mu_lambda,
    m_phi,
    m_phi_from_f,
)
from .quadrature import (
    RectEvent,
    atom_weight,
    expect_on_event,
    q_a_phi_limit,
    q_ay_finite,
    q_ay_limit,
    q_phi_limit,
    q_y_finite,
    q_y_limit,
    rect_prob,
)
from .samplers import (
    Path,
    RareEventError,
    RngStream,
    bessel3_path,
    bm_path,
    pitman_transform,
    sample_Q_ay,
    sample_Q_f,
    sample_Q_phi,
    sample_Q_y,
)
from .penalized_mc import (
    BivariateF,
    Estimate,
    ExpLinear,
    KennedyWeight,
    PenaltyKind,
    PhiOfMax,
    band_conditional,
    bessel_penalization_check,
    bridge_convergence_check,
    penalized_estimate,
    regime_limit_check,
)
from .expansion import RateFit, f1_coefficient_check, f1_kennedy_check, fit_rate
from .report import Verdict, ks_test

__version__ = "0.1.0"
