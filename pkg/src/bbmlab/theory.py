"""Closed-form phase functions, rescaling factors, and the exact
infinite-temperature mean-overlap quadrature.

The two decay-rate curves live on the subcritical window [0, sqrt(2)):

    typical axis   1 - b^2            on [0, sqrt(2)/2)
                   (sqrt(2) - b)^2    on [sqrt(2)/2, sqrt(2))

    mean axis      1 - b^2            on [0, sqrt(2/3)]
                   (2 - b^2)^2/(8b^2) on (sqrt(2/3), sqrt(2))

Both are continuous at their kinks (values 1/2 and 1/3) and the mean curve
lies on or below the typical curve: conditional (typical) decay is at least
as fast as the decay of the mean, which above sqrt(2)/2 is carried by rare
high-excursion trees.
"""

from __future__ import annotations

import math
from enum import Enum

from .errors import OutOfRange, QuadratureNotConverged
from .logvalue import LogValue

BETA_C = math.sqrt(2.0)
SQRT_HALF = math.sqrt(2.0) / 2.0
SQRT_TWO_THIRDS = math.sqrt(2.0 / 3.0)


class Regime(Enum):
    INFINITE_TEMP = "infinite_temp"      # beta = 0
    TYPICAL_HIGH = "typical_high"        # 0 < beta < sqrt(2)/2
    TYPICAL_CRITICAL = "typical_critical"  # beta = sqrt(2)/2
    TYPICAL_LOW = "typical_low"          # sqrt(2)/2 < beta < sqrt(2)
    MEAN_HIGH = "mean_high"              # 0 < beta < sqrt(2/3)
    MEAN_CRITICAL = "mean_critical"      # beta = sqrt(2/3)
    MEAN_LOW = "mean_low"                # sqrt(2/3) < beta < sqrt(2)


def _check_subcritical(beta: float) -> None:
    if not (0.0 <= beta < BETA_C):
        raise OutOfRange(f"beta={beta} outside [0, sqrt(2))")


def typical_regime(beta: float) -> Regime:
    """Exhaustive, mutually exclusive classification on [0, sqrt(2))."""
    _check_subcritical(beta)
    if beta == 0.0:
        return Regime.INFINITE_TEMP
    if beta < SQRT_HALF:
        return Regime.TYPICAL_HIGH
    if beta == SQRT_HALF:
        return Regime.TYPICAL_CRITICAL
    return Regime.TYPICAL_LOW


def mean_regime(beta: float) -> Regime:
    _check_subcritical(beta)
    if beta == 0.0:
        return Regime.INFINITE_TEMP
    if beta < SQRT_TWO_THIRDS:
        return Regime.MEAN_HIGH
    if beta == SQRT_TWO_THIRDS:
        return Regime.MEAN_CRITICAL
    return Regime.MEAN_LOW


def psi(beta: float) -> float:
    """Cumulant rate 1 + beta^2/2 of the exponentially weighted population."""
    return 1.0 + beta * beta / 2.0


def psi_typ(beta: float) -> float:
    """Decay rate of the conditional overlap mass nu([a,1]), per unit a*t."""
    _check_subcritical(beta)
    if beta < SQRT_HALF:
        return 1.0 - beta * beta
    return (BETA_C - beta) ** 2


def psi_mean(beta: float) -> float:
    """Decay rate of E[nu([a,1])], per unit a*t."""
    _check_subcritical(beta)
    if beta <= SQRT_TWO_THIRDS:
        return 1.0 - beta * beta
    return (2.0 - beta * beta) ** 2 / (8.0 * beta * beta)


def v_speed(beta: float) -> float:
    """Position (per unit a*t) of the particles that dominate E[nu]:
    min(2 beta, psi(beta)/beta), with the continuity value 0 at beta = 0."""
    _check_subcritical(beta)
    if beta == 0.0:
        return 0.0
    return min(2.0 * beta, 1.0 / beta + beta / 2.0)


def m_centering(t: float) -> float:
    """Centering of the maximum: sqrt(2) t - (3/(2 sqrt(2))) log t."""
    if t <= 0.0:
        raise OutOfRange("m(t) requires t > 0")
    return BETA_C * t - 1.5 / BETA_C * math.log(t)


def rescaling_factor(beta: float, a: float, t: float) -> LogValue:
    """Multiplicative factor r such that r * nu_{beta,t}([a,1]) has an O(1)
    limit, by typical-axis regime."""
    _check_subcritical(beta)
    if not (0.0 < a < 1.0):
        raise OutOfRange("a must lie in (0, 1)")
    at = a * t
    reg = typical_regime(beta)
    if reg in (Regime.INFINITE_TEMP, Regime.TYPICAL_HIGH):
        return LogValue.from_log((1.0 - beta * beta) * at)
    if reg is Regime.TYPICAL_CRITICAL:
        return LogValue.from_log(0.5 * math.log(at) + at / 2.0)
    # typical low: polynomial (at)^{3 beta/sqrt(2)} times e^{(sqrt(2)-beta)^2 at}
    return LogValue.from_log((3.0 * beta / BETA_C) * math.log(at) + (BETA_C - beta) ** 2 * at)


def mean_rescaling(beta: float, a: float, t: float) -> LogValue:
    """Inverse of the decay envelope of E[nu_{beta,t}([a,1])]: exponential
    rate per the mean-axis regime, plus the t^{1/2} / t^{3/2} polynomial
    factors at and above the critical point."""
    _check_subcritical(beta)
    if not (0.0 < a < 1.0):
        raise OutOfRange("a must lie in (0, 1)")
    at = a * t
    reg = mean_regime(beta)
    if reg in (Regime.INFINITE_TEMP, Regime.MEAN_HIGH):
        return LogValue.from_log((1.0 - beta * beta) * at)
    if reg is Regime.MEAN_CRITICAL:
        return LogValue.from_log(0.5 * math.log(t) + at / 3.0)
    rate = (2.0 - beta * beta) ** 2 / (8.0 * beta * beta)
    return LogValue.from_log(1.5 * math.log(t) + rate * at)


# ---------------------------------------------------------------------------
# Exact mean overlap at infinite temperature (beta = 0)
# ---------------------------------------------------------------------------
#
# With q = e^{-at} and p = e^{-(1-a)t}, the mean overlap mass is
#
#   E[nu_{0,t}([a,1])] = p q Int_0^inf u e^{-u} (1 + (1-p) e^{-u})
#                        / [(1-(1-p)e^{-u}) (1-(1-pq)e^{-u})^2] du.
#
# The denominators are evaluated as -expm1(-u) + r e^{-u} (r = p, pq), which
# is exact for u down to 1e-300. The integrand's mass sits on the decades
# between u ~ pq and u ~ 1, so the integral is taken in w = log u with
# forced panel boundaries at log(pq), log(p) and 0, adaptive Simpson within
# each panel.


def _beta0_integrand_logu(w: float, p: float, pq: float) -> float:
    u = math.exp(w)
    if u > 745.0:
        return 0.0
    eu = math.exp(-u)
    d1 = -math.expm1(-u) + p * eu
    d2 = -math.expm1(-u) + pq * eu
    return u * eu * (1.0 + (1.0 - p) * eu) / (d1 * d2 * d2) * u  # extra u: du = u dw


def _adaptive_simpson(f, lo, hi, f_lo, f_mid, f_hi, eps, depth):
    mid = 0.5 * (lo + hi)
    lm = 0.5 * (lo + mid)
    mh = 0.5 * (mid + hi)
    f_lm = f(lm)
    f_mh = f(mh)
    whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)
    left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_lm + f_mid)
    right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_mh + f_hi)
    err = left + right - whole
    if abs(err) <= 15.0 * eps or (hi - lo) < 1e-14:
        return left + right + err / 15.0
    if depth <= 0:
        raise QuadratureNotConverged("adaptive Simpson hit max recursion depth")
    return _adaptive_simpson(f, lo, mid, f_lo, f_lm, f_mid, eps / 2.0, depth - 1) + _adaptive_simpson(
        f, mid, hi, f_mid, f_mh, f_hi, eps / 2.0, depth - 1
    )


def _integrate_panel(f, lo, hi, eps, depth=64):
    mid = 0.5 * (lo + hi)
    return _adaptive_simpson(f, lo, hi, f(lo), f(mid), f(hi), eps, depth)


def exact_mean_overlap_beta0(a: float, t: float, rel_tol: float = 1e-10) -> float:
    """E[nu_{0,t}([a,1])] by adaptive quadrature; relative error <= rel_tol."""
    if not (0.0 < a < 1.0):
        raise OutOfRange("a must lie in (0, 1)")
    if t <= 0.0:
        raise OutOfRange("t must be positive")
    if rel_tol < 1e-12:
        raise OutOfRange("rel_tol below 1e-12 is not supported in doubles")
    p = math.exp(-(1.0 - a) * t)
    q = math.exp(-a * t)
    pq = p * q

    def f(w: float) -> float:
        return _beta0_integrand_logu(w, p, pq)

    # Truncation: below u0 the integrand is O(u^2 / (p (pq)^2)) and the
    # dropped mass is below rel_tol relative to the total, which is at
    # least of order log(1/q)/p.
    w_lo = math.log(pq) + 0.5 * math.log(max(rel_tol, 1e-12)) - 3.0
    w_hi = math.log(745.0)
    knots = sorted({w_lo, math.log(pq), math.log(p), 0.0, w_hi})
    knots = [w for w in knots if w_lo <= w <= w_hi]
    if knots[0] != w_lo:
        knots.insert(0, w_lo)
    if knots[-1] != w_hi:
        knots.append(w_hi)

    coarse = sum(_integrate_panel(f, knots[i], knots[i + 1], eps=math.inf) for i in range(len(knots) - 1))
    if not math.isfinite(coarse) or coarse <= 0.0:
        raise QuadratureNotConverged("coarse pass produced a non-finite or non-positive estimate")
    eps = rel_tol * coarse / (len(knots) - 1) / 4.0
    total = sum(_integrate_panel(f, knots[i], knots[i + 1], eps=eps) for i in range(len(knots) - 1))
    return pq * total


