"""LogValue arithmetic against plain floats, with hypothesis on the ranges
where doubles are exact enough to compare."""

import math

import numpy as np
from hypothesis import given, strategies as hs

from bbmlab.logvalue import LogValue, logsumexp

finite = hs.floats(min_value=-1e6, max_value=1e6, allow_nan=False).filter(
    lambda x: x == 0.0 or abs(x) > 1e-6
)


@given(finite, finite)
def test_add_matches_floats(a, b):
    got = (LogValue.from_float(a) + LogValue.from_float(b)).to_float()
    want = a + b
    assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-9 * (abs(a) + abs(b) + 1e-300))


@given(finite, finite)
def test_mul_matches_floats(a, b):
    got = (LogValue.from_float(a) * LogValue.from_float(b)).to_float()
    assert math.isclose(got, a * b, rel_tol=1e-12, abs_tol=0.0)


@given(finite)
def test_neg_and_sub(a):
    la = LogValue.from_float(a)
    assert (la - la).sign == 0
    assert (-la).to_float() == -la.to_float()
    assert math.isclose((-la).to_float(), -a, rel_tol=1e-12, abs_tol=0.0)


def test_zero_identity():
    z = LogValue.zero()
    one = LogValue.one()
    assert (z + one).to_float() == 1.0
    assert (z * one).sign == 0
    assert z.to_float() == 0.0


def test_huge_values_survive():
    # e^{5000} overflows floats but not LogValue
    big = LogValue.from_log(5000.0)
    s = big + big
    assert s.log == 5000.0 + math.log(2.0)
    assert (big / big).to_float() == 1.0


def test_powi():
    v = LogValue.from_float(-3.0)
    assert math.isclose(v.powi(2).to_float(), 9.0, rel_tol=1e-12)
    assert math.isclose(v.powi(3).to_float(), -27.0, rel_tol=1e-12)


def test_logsumexp_matches_naive():
    rng = np.random.default_rng(0)
    for _ in range(20):
        xs = rng.uniform(-30, 30, size=50)
        want = math.log(np.sum(np.exp(xs)))
        assert math.isclose(logsumexp(xs), want, rel_tol=1e-12)
    assert logsumexp([]) == -math.inf


def test_log_of_nonpositive_raises():
    import pytest

    with pytest.raises(ValueError):
        LogValue.from_float(-1.0).log
    with pytest.raises(ValueError):
        LogValue.zero().log
