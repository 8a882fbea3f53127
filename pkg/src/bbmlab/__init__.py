"""bbmlab: a Monte Carlo laboratory for the overlap distribution of
subcritical branching Brownian motion.

Submodules:
  core           exact event-driven BBM snapshots + genealogy queries
  martingales    additive / derivative / restarted martingales
  overlap_stats  overlap mass by two routes, replica estimation, Hill index
  spinal         tilted-measure (spinal) simulation + importance sampling
  theory         phase functions, rescalings, exact beta=0 quadrature
  brownian       reflection/ballot barrier probabilities
  harness        experiment orchestration, fits, reports
  engine         numba kernels behind the replica-scale estimators
"""

from .core import (
    CensusEntry,
    ParticleLabel,
    Snapshot,
    census,
    max_position,
    mrca_death_time,
    overlap,
    simulate_snapshot,
)
from .logvalue import LogValue
from .martingales import (
    additive_martingale,
    derivative_martingale,
    second_moment_W,
    shifted_martingale,
)
from .overlap_stats import (
    EstimateWithCI,
    OverlapQuery,
    estimate_typical_rescaled,
    hill_tail_index,
    overlap_tail_aggregated,
    overlap_tail_direct,
)
from .spinal import (
    SpineRealization,
    is_mean_overlap_estimator,
    radon_nikodym_check,
    simulate_Q_beta_t,
    simulate_spine_Q,
    spine_gibbs_weight_check,
)
from .theory import (
    exact_mean_overlap_beta0,
    m_centering,
    mean_rescaling,
    psi,
    psi_mean,
    psi_typ,
    rescaling_factor,
    v_speed,
)

__version__ = "0.1.0"
