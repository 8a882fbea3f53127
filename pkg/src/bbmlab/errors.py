"""Exception types shared across the package."""


class BBMError(Exception):
    """Base class for all package-specific errors."""


class PopulationCapExceeded(BBMError):
    """Alive-particle count crossed the configured cap (the e^t memory wall)."""


class BudgetExceeded(BBMError):
    """Projected cost of a simulation exceeds the configured wall-clock budget."""


class NotACheckpoint(BBMError):
    """A queried time was not requested as a checkpoint at simulation time."""


class UnknownLabel(BBMError):
    """Label does not name a particle of this snapshot."""


class NotAlive(BBMError):
    """Particle exists but is not alive at the queried time."""


class OutOfRange(BBMError):
    """Parameter outside the domain where the quantity is defined."""


class InsufficientSamples(BBMError):
    """Too few samples for the requested order statistics."""


class QuadratureNotConverged(BBMError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class UnknownStatistic(BBMError):
    """Statistic id is not in the fixed Radon-Nikodym check catalog."""


class ConfigInvalid(BBMError):
    """Experiment configuration failed validation."""


class InsufficientPoints(BBMError):
    """Fewer than three usable points for an exponent fit."""


class DegenerateWeights(BBMError):
    """Fit weights are zero, negative or non-finite."""
