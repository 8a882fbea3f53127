"""Signed log-domain scalar.

Gibbs-type sums e^{beta X - psi t} overflow doubles once beta X crosses
~709, so martingale values and overlap masses travel through the API as a
(sign, log|x|) pair. Addition is log-sum-exp; exact zero is representable
as sign 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LogValue:
    log_magnitude: float
    sign: int  # -1, 0, +1

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or +1")
        if self.sign == 0 and self.log_magnitude != -math.inf:
            object.__setattr__(self, "log_magnitude", -math.inf)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero() -> "LogValue":
        return LogValue(-math.inf, 0)

    @staticmethod
    def one() -> "LogValue":
        return LogValue(0.0, 1)

    @staticmethod
    def from_float(x: float) -> "LogValue":
        if x == 0.0:
            return LogValue.zero()
        return LogValue(math.log(abs(x)), 1 if x > 0 else -1)

    @staticmethod
    def from_log(log_magnitude: float, sign: int = 1) -> "LogValue":
        if sign == 0 or log_magnitude == -math.inf:
            return LogValue.zero()
        return LogValue(log_magnitude, sign)

    # -- conversions -------------------------------------------------------

    def to_float(self) -> float:
        """May overflow to +/-inf; that is the caller's problem."""
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)

    @property
    def log(self) -> float:
        """log of a positive value; ValueError otherwise."""
        if self.sign <= 0:
            raise ValueError("log of a non-positive LogValue")
        return self.log_magnitude

    def is_positive(self) -> bool:
        return self.sign > 0

    # -- arithmetic --------------------------------------------------------

    def __mul__(self, other: "LogValue | float") -> "LogValue":
        if not isinstance(other, LogValue):
            other = LogValue.from_float(float(other))
        s = self.sign * other.sign
        if s == 0:
            return LogValue.zero()
        return LogValue(self.log_magnitude + other.log_magnitude, s)

    __rmul__ = __mul__

    def __truediv__(self, other: "LogValue | float") -> "LogValue":
        if not isinstance(other, LogValue):
            other = LogValue.from_float(float(other))
        if other.sign == 0:
            raise ZeroDivisionError("LogValue division by zero")
        s = self.sign * other.sign
        if s == 0:
            return LogValue.zero()
        return LogValue(self.log_magnitude - other.log_magnitude, s)

    def __neg__(self) -> "LogValue":
        return LogValue(self.log_magnitude, -self.sign)

    def __add__(self, other: "LogValue | float") -> "LogValue":
        if not isinstance(other, LogValue):
            other = LogValue.from_float(float(other))
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        big, small = (self, other) if self.log_magnitude >= other.log_magnitude else (other, self)
        d = small.log_magnitude - big.log_magnitude  # <= 0
        if big.sign == small.sign:
            return LogValue(big.log_magnitude + math.log1p(math.exp(d)), big.sign)
        if d == 0.0:
            return LogValue.zero()
        # opposite signs: |big| - |small|, sign of the larger magnitude
        return LogValue(big.log_magnitude + math.log1p(-math.exp(d)), big.sign)

    def __sub__(self, other: "LogValue | float") -> "LogValue":
        if not isinstance(other, LogValue):
            other = LogValue.from_float(float(other))
        return self + (-other)

    def powi(self, n: int) -> "LogValue":
        if self.sign == 0:
            return LogValue.one() if n == 0 else LogValue.zero()
        s = 1 if (self.sign > 0 or n % 2 == 0) else -1
        return LogValue(n * self.log_magnitude, s)

    # -- comparison helpers --------------------------------------------------

    def isclose(self, other: "LogValue | float", rel_tol: float = 1e-9) -> bool:
        if not isinstance(other, LogValue):
            other = LogValue.from_float(float(other))
        if self.sign == 0 and other.sign == 0:
            return True
        if self.sign != other.sign:
            return False
        return abs(self.log_magnitude - other.log_magnitude) <= rel_tol


def logsumexp(values) -> float:
    """log(sum(exp(v))) over a 1-D array of (finite or -inf) exponents."""
    import numpy as np

    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return -math.inf
    m = float(np.max(values))
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.sum(np.exp(values - m))))
