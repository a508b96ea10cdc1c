"""Verdict records and the Kolmogorov-Smirnov oracle test."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = ["Verdict", "ks_test"]


@dataclass(frozen=True)
class Verdict:
    """One named check: observed vs target at a tolerance.

    For KS verdicts the observed value is the p-value, the target is the
    level, and passing means observed > target (the statistical criterion
    lives in ``provenance``).
    """

    name: str
    observed: float
    target: float
    tolerance: float
    passed: bool
    provenance: str

    def to_json(self) -> str:
        return json.dumps({
            "name": self.name,
            "observed": self.observed,
            "target": self.target,
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
            "provenance": self.provenance,
        })


def abs_verdict(name: str, observed: float, target: float, tolerance: float,
                provenance: str) -> Verdict:
    return Verdict(name, float(observed), float(target), float(tolerance),
                   bool(abs(observed - target) <= tolerance), provenance)


def ks_test(samples, cdf, level: float = 0.01, name: str = "ks",
            provenance: str = "analytic-cdf") -> Verdict:
    """One-sample Kolmogorov-Smirnov test against an analytic CDF.

    ``samples`` must be sorted ascending (n >= 100); the p-value uses the
    asymptotic Kolmogorov distribution with the small-sample correction
    factor (sqrt(n) + 0.12 + 0.11/sqrt(n)).
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 100:
        raise ValueError("ks_test needs at least 100 samples")
    if np.any(np.diff(samples) < 0.0):
        raise ValueError("samples must be sorted ascending")
    f = np.asarray(cdf(samples), dtype=float)
    grid = np.arange(1, n + 1) / n
    d = float(max(np.max(grid - f), np.max(f - (grid - 1.0 / n))))
    en = math.sqrt(n)
    p = float(special.kolmogorov((en + 0.12 + 0.11 / en) * d))
    return Verdict(name=name, observed=p, target=level, tolerance=level,
                   passed=p > level, provenance=f"KS D={d:.5g}; {provenance}")
