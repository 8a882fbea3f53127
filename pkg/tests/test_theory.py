"""Phase functions and the exact beta=0 quadrature.

The quadrature oracle here is scipy.integrate.quad on the same integrand in
the log substitution — an independent integrator — plus a brute-force Monte
Carlo of the geometric-sum representation at small t.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from bbmlab import theory
from bbmlab.errors import OutOfRange
from bbmlab.theory import (
    Regime,
    exact_mean_overlap_beta0,
    m_centering,
    mean_regime,
    mean_rescaling,
    psi,
    psi_mean,
    psi_typ,
    rescaling_factor,
    typical_regime,
    v_speed,
)

SQRT2 = math.sqrt(2.0)


def test_psi_values():
    assert psi(0.0) == 1.0
    assert psi(SQRT2) == 2.0
    # the identity psi(2b) - 2 psi(b) = -(1 - b^2) used throughout
    for b in np.linspace(0.0, 1.4, 29):
        assert math.isclose(psi(2 * b) - 2 * psi(b), -(1 - b * b), abs_tol=1e-12)


def test_psi_typ_boundaries():
    assert math.isclose(psi_typ(SQRT2 / 2), 0.5, abs_tol=1e-12)
    assert psi_typ(0.0) == 1.0
    eps = 1e-9
    assert math.isclose(psi_typ(SQRT2 / 2 - eps), psi_typ(SQRT2 / 2 + eps), abs_tol=1e-8)
    with pytest.raises(OutOfRange):
        psi_typ(SQRT2)
    with pytest.raises(OutOfRange):
        psi_typ(-0.1)


def test_psi_mean_boundaries():
    b = math.sqrt(2.0 / 3.0)
    assert math.isclose(psi_mean(b), 1.0 / 3.0, abs_tol=1e-12)
    assert math.isclose(psi_mean(1.0), 1.0 / 8.0, abs_tol=1e-12)
    eps = 1e-9
    assert math.isclose(psi_mean(b - eps), psi_mean(b + eps), abs_tol=1e-8)


def test_curve_ordering():
    """The two curves coincide on [0, sqrt(2)/2]; above it the conditional
    (typical) mass decays strictly faster: psi_mean < psi_typ."""
    for b in np.linspace(0.0, SQRT2 / 2, 50):
        assert math.isclose(psi_mean(b), psi_typ(b), abs_tol=1e-12)
        assert math.isclose(psi_mean(b), 1 - b * b, abs_tol=1e-12)
    for b in np.linspace(SQRT2 / 2 + 1e-6, SQRT2 - 1e-9, 100):
        assert psi_mean(b) < psi_typ(b)


def test_v_speed():
    b = math.sqrt(2.0 / 3.0)
    assert math.isclose(v_speed(b), 2.0 * b, abs_tol=1e-12)
    assert math.isclose(v_speed(1.0), 1.5, abs_tol=1e-12)
    assert v_speed(0.0) == 0.0
    for bb in np.linspace(0.01, SQRT2 - 1e-9, 100):
        assert v_speed(bb) <= 2.0 * bb + 1e-12


def test_m_centering():
    assert math.isclose(m_centering(1.0), SQRT2, abs_tol=1e-12)
    e2 = math.exp(2.0)
    assert math.isclose(m_centering(e2), SQRT2 * e2 - 3.0 / SQRT2, abs_tol=1e-12)
    devs = [abs(m_centering(t) / t - SQRT2) for t in (1e2, 1e4, 1e6)]
    assert devs[0] > devs[1] > devs[2]
    assert devs[2] < 1e-3 * SQRT2
    with pytest.raises(OutOfRange):
        m_centering(0.0)


def test_regime_classifiers_exhaustive():
    for b in list(np.linspace(0.0, SQRT2 - 1e-9, 200)) + [SQRT2 / 2, math.sqrt(2 / 3)]:
        assert typical_regime(b) in (
            Regime.INFINITE_TEMP,
            Regime.TYPICAL_HIGH,
            Regime.TYPICAL_CRITICAL,
            Regime.TYPICAL_LOW,
        )
        assert mean_regime(b) in (
            Regime.INFINITE_TEMP,
            Regime.MEAN_HIGH,
            Regime.MEAN_CRITICAL,
            Regime.MEAN_LOW,
        )
    assert typical_regime(SQRT2 / 2) is Regime.TYPICAL_CRITICAL
    assert mean_regime(math.sqrt(2 / 3)) is Regime.MEAN_CRITICAL


def test_rescaling_factor_values():
    # regime 1: log r = (1 - b^2) a t
    assert math.isclose(rescaling_factor(0.3, 0.5, 10.0).log, 0.91 * 5.0, abs_tol=1e-12)
    # critical: r = sqrt(at) e^{at/2}
    r = rescaling_factor(SQRT2 / 2, 0.5, 10.0)
    assert math.isclose(r.log, 0.5 * math.log(5.0) + 2.5, abs_tol=1e-12)
    # low-temperature: (at)^{3b/sqrt2} e^{(sqrt2-b)^2 at}
    r = rescaling_factor(1.0, 0.5, 10.0)
    assert math.isclose(r.log, (3.0 / SQRT2) * math.log(5.0) + (SQRT2 - 1.0) ** 2 * 5.0, abs_tol=1e-12)


def test_mean_rescaling_values():
    b = math.sqrt(2.0 / 3.0)
    r = mean_rescaling(b, 0.5, 10.0)
    assert math.isclose(r.log, 0.5 * math.log(10.0) + 5.0 / 3.0, abs_tol=1e-12)
    r = mean_rescaling(1.0, 0.5, 16.0)
    assert math.isclose(r.log, 1.5 * math.log(16.0) + 8.0 / 8.0, abs_tol=1e-12)
    r = mean_rescaling(0.3, 0.5, 10.0)
    assert math.isclose(r.log, 0.91 * 5.0, abs_tol=1e-12)


# -- quadrature ---------------------------------------------------------------


def _scipy_reference(a, t):
    """Same integral, independent integrator (scipy QUADPACK in log-u)."""
    p = math.exp(-(1 - a) * t)
    q = math.exp(-a * t)
    pq = p * q

    def glog(w):
        u = math.exp(w)
        eu = math.exp(-u)
        d1 = -math.expm1(-u) + p * eu
        d2 = -math.expm1(-u) + pq * eu
        return u * eu * (1.0 + (1.0 - p) * eu) / (d1 * d2 * d2) * u

    edges = [math.log(pq) - 30.0, math.log(pq), math.log(p), 0.0, math.log(700.0)]
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        v, _ = quad(glog, lo, hi, limit=400)
        total += v
    return pq * total


@pytest.mark.parametrize("a,t", [(0.5, 2.0), (0.5, 4.0), (0.3, 6.0), (0.7, 9.0), (0.5, 30.0)])
def test_quadrature_matches_scipy(a, t):
    mine = exact_mean_overlap_beta0(a, t)
    ref = _scipy_reference(a, t)
    assert math.isclose(mine, ref, rel_tol=1e-9)


def test_quadrature_t_to_zero_limit():
    assert math.isclose(exact_mean_overlap_beta0(0.5, 1e-6), 1.0, rel_tol=1e-5)


def test_quadrature_matches_geometric_mc():
    """Monte Carlo of the geometric representation sum N_i^2 / (sum N_i)^2
    with M ~ Geom(e^{-at}) ancestors and N_i ~ Geom(e^{-(1-a)t})."""
    a, t, n = 0.5, 4.0, 400_000
    rng = np.random.default_rng(20240817)
    p = math.exp(-(1 - a) * t)
    q = math.exp(-a * t)
    m = rng.geometric(q, size=n)
    reps = np.repeat(np.arange(n), m)
    draws = rng.geometric(p, size=reps.size).astype(float)
    tot = np.bincount(reps, weights=draws, minlength=n)
    tot2 = np.bincount(reps, weights=draws * draws, minlength=n)
    nu = tot2 / tot**2
    z = abs(nu.mean() - exact_mean_overlap_beta0(a, t)) / (nu.std(ddof=1) / math.sqrt(n))
    assert z < 4.0


def test_quadrature_monotone():
    vals_t = [exact_mean_overlap_beta0(0.5, t) for t in np.linspace(0.5, 12.0, 24)]
    assert all(x > y for x, y in zip(vals_t, vals_t[1:]))
    vals_a = [exact_mean_overlap_beta0(a, 6.0) for a in np.linspace(0.1, 0.9, 17)]
    assert all(x > y for x, y in zip(vals_a, vals_a[1:]))


def test_quadrature_large_t_ratio():
    """Against the first-order decay 2 a t e^{-a t} the exact value sits at
    1 - 1/(a t) + o(1/at): 0.93333 at a t = 15, 0.95 at a t = 20."""
    r30 = exact_mean_overlap_beta0(0.5, 30.0) / (30.0 * math.exp(-15.0))
    assert math.isclose(r30, 1.0 - 1.0 / 15.0, abs_tol=2e-4)
    r40 = exact_mean_overlap_beta0(0.5, 40.0) / (40.0 * math.exp(-20.0))
    assert math.isclose(r40, 1.0 - 1.0 / 20.0, abs_tol=2e-4)


def test_quadrature_domain_errors():
    with pytest.raises(OutOfRange):
        exact_mean_overlap_beta0(0.0, 1.0)
    with pytest.raises(OutOfRange):
        exact_mean_overlap_beta0(0.5, -1.0)
    with pytest.raises(OutOfRange):
        exact_mean_overlap_beta0(0.5, 1.0, rel_tol=1e-15)
