"""Acceptance gate: every criterion at its pinned sample sizes and tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail line
per criterion (the same battery backs ``penalab verify``).
"""

import os

import pytest

from penalab import acceptance

SEED = int(os.environ.get("PENALAB_SEED", "12345"))


@pytest.mark.parametrize("label,fn", acceptance.CRITERIA,
                         ids=[label.replace(" ", "-") for label, _ in acceptance.CRITERIA])
def test_criterion(label, fn):
    verdicts = fn(SEED, 1.0)
    ok = all(v.passed for v in verdicts)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {label}")
    for v in verdicts:
        print(f"    [{'ok' if v.passed else 'FAIL'}] {v.name}: observed={v.observed:.6g} "
              f"target={v.target:.6g} tol={v.tolerance:.3g}")
    failed = [v for v in verdicts if not v.passed]
    assert not failed, f"criterion {label}: {[v.name for v in failed]}"
