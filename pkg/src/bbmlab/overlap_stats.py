"""Overlap-distribution functionals, by two independent routes.

nu_{beta,t}([a,1]) is the probability, conditionally on the tree, that two
particles drawn independently from the Gibbs measure at inverse temperature
beta have an overlap of at least a. The direct route evaluates the double
sum over ordered pairs (diagonal included) through the pairwise ancestor
death times; the aggregated route groups both draws by their ancestor alive
at time a*t and is O(|N(t)|). The two must agree to 1e-9 relative — that
identity is the backbone correctness check of the whole package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine
from .core import Snapshot
from .errors import InsufficientSamples, NotACheckpoint, OutOfRange
from .logvalue import LogValue
from .rng import derive_seed
from .theory import BETA_C, rescaling_factor


@dataclass(frozen=True)
class OverlapQuery:
    beta: float
    a: float
    t: float

    def __post_init__(self):
        if self.beta < 0.0:
            raise OutOfRange("beta must be >= 0")
        if not (0.0 <= self.a < 1.0):
            raise OutOfRange("a must lie in [0, 1) (a=0 queries total mass)")
        if self.t <= 0.0:
            raise OutOfRange("t must be positive")


@dataclass(frozen=True)
class EstimateWithCI:
    """A Monte Carlo estimate in the log domain."""

    point: LogValue
    std_error_log: float
    replicas: int
    master_seed: int

    def __post_init__(self):
        if self.std_error_log < 0.0:
            raise ValueError("std_error_log must be >= 0")
        if self.replicas < 2:
            raise ValueError("an estimate needs at least 2 replicas")


def _gibbs_weights(snapshot: Snapshot, beta: float, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(alive indices, un-normalized weights e^{beta(x - max x)}) at time t."""
    alive = np.nonzero(snapshot.alive_mask(t))[0]
    x = snapshot.cpos[t][alive]
    w = np.exp(beta * (x - np.max(x)))
    return alive, w


def _pair_mrca_death(snapshot: Snapshot, alive: np.ndarray) -> np.ndarray:
    """Matrix of ancestor death times d_{u^v} over the alive set.

    Recursion on the tree: for every dead particle w, the pairs made of one
    descendant of each child share d_w. Diagonal gets +inf (never
    separated). Independent of the aggregated route's grouping trick.
    """
    n = alive.shape[0]
    pos_in_alive = {int(i): k for k, i in enumerate(alive)}
    # leaf sets per particle, built bottom-up over the whole table
    children: dict[int, list[int]] = {}
    for j in range(snapshot.n_particles):
        p = int(snapshot.parent[j])
        if p >= 0:
            children.setdefault(p, []).append(j)
    mat = np.full((n, n), np.inf)

    def leafset(j: int) -> np.ndarray:
        if j in pos_in_alive:
            return np.array([pos_in_alive[j]], dtype=np.int64)
        kids = children.get(j)
        if not kids:
            return np.empty(0, dtype=np.int64)
        sets = [leafset(k) for k in kids]
        if len(sets) == 2 and sets[0].size and sets[1].size:
            d = float(snapshot.death[j])
            mat[np.ix_(sets[0], sets[1])] = d
            mat[np.ix_(sets[1], sets[0])] = d
        return np.concatenate(sets) if sets else np.empty(0, dtype=np.int64)

    import sys

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 10000))
    try:
        leafset(0)
    finally:
        sys.setrecursionlimit(old)
    return mat


def overlap_tail_direct(snapshot: Snapshot, q: OverlapQuery) -> LogValue:
    """Double sum over ordered pairs with q_t(u,v) >= a, diagonal included."""
    if q.t not in snapshot.checkpoint_times:
        raise NotACheckpoint(f"{q.t} was not requested as a checkpoint")
    if q.a == 0.0:
        return LogValue.one()
    alive, w = _gibbs_weights(snapshot, q.beta, q.t)
    d_meet = _pair_mrca_death(snapshot, alive)
    keep = np.minimum(d_meet, q.t) / q.t >= q.a
    num = float(np.sum(np.outer(w, w)[keep]))
    den = float(np.sum(w)) ** 2
    return LogValue.from_log(math.log(num) - math.log(den))


def overlap_tail_aggregated(snapshot: Snapshot, q: OverlapQuery) -> LogValue:
    """Group by the ancestor alive at a*t: the pair (u, v) has overlap >= a
    exactly when u and v hang off the same such ancestor, so the mass is the
    participation ratio of the per-ancestor Gibbs weights."""
    if q.t not in snapshot.checkpoint_times:
        raise NotACheckpoint(f"{q.t} was not requested as a checkpoint")
    if q.a == 0.0:
        return LogValue.one()
    at = q.a * q.t
    if at not in snapshot.checkpoint_times:
        raise NotACheckpoint(f"a*t = {at} was not requested as a checkpoint")
    alive, w = _gibbs_weights(snapshot, q.beta, q.t)
    birth = snapshot.birth
    death = snapshot.death
    parent = snapshot.parent
    group = np.empty(alive.shape[0], dtype=np.int64)
    for k, i in enumerate(alive):
        j = int(i)
        while not (birth[j] <= at < death[j]):
            j = int(parent[j])
        group[k] = j
    s_tot = float(np.sum(w))
    _, inv = np.unique(group, return_inverse=True)
    s_w = np.bincount(inv, weights=w)
    return LogValue.from_log(math.log(float(np.sum(s_w * s_w))) - 2.0 * math.log(s_tot))


# -- replica-scale estimation -------------------------------------------------


def overlap_samples(
    beta: float,
    a: float,
    t: float,
    replicas: int,
    seed: int,
    population_cap: int = 10_000_000,
) -> np.ndarray:
    """Per-replica nu_{beta,t}([a,1]) samples via the streaming aggregated
    route (O(depth) memory, e^t time)."""
    stats = engine.overlap_replica_stats(seed, replicas, beta, a, t, population_cap)
    return stats["nu"]


def estimate_typical_rescaled(
    beta: float,
    a: float,
    t_grid,
    replicas: int,
    seed: int,
    population_cap: int = 10_000_000,
) -> list[tuple[float, EstimateWithCI]]:
    """For each t, Monte Carlo of r(beta,a,t) * nu_{beta,t}([a,1]) with the
    regime-correct rescaling r; reports the median in the log domain (the
    low-temperature regime has a heavy-tailed limit, so means are unstable)
    with a quartile-based standard error of the median."""
    if not (0.0 <= beta < BETA_C):
        raise OutOfRange("beta must lie in [0, sqrt(2))")
    out = []
    for k, t in enumerate(t_grid):
        sub_seed = derive_seed(seed, k)
        nu = overlap_samples(beta, a, float(t), replicas, sub_seed, population_cap)
        log_r = rescaling_factor(beta, a, float(t)).log
        logs = np.log(nu) + log_r
        med = float(np.median(logs))
        q1, q3 = np.percentile(logs, [25.0, 75.0])
        # normal-theory se of the median, robust sigma from the IQR
        se = 1.2533 * (q3 - q1) / 1.349 / math.sqrt(len(logs))
        out.append(
            (
                float(t),
                EstimateWithCI(
                    point=LogValue.from_log(med),
                    std_error_log=float(se),
                    replicas=replicas,
                    master_seed=seed,
                ),
            )
        )
    return out


def hill_tail_index(samples, k: int) -> float:
    """Hill estimator of the tail index alpha on the k largest order
    statistics: alpha_hat = k / sum_{i<=k} log(X_(i)/X_(k+1)). Returns +inf
    for degenerate (constant upper-order) samples."""
    x = np.asarray(samples, dtype=float)
    if np.any(x <= 0.0) or not np.all(np.isfinite(x)):
        raise ValueError("Hill estimator needs positive finite samples")
    n = x.shape[0]
    if k < 1 or k >= n:
        raise InsufficientSamples(f"need 1 <= k < n, got k={k}, n={n}")
    x = np.sort(x)[::-1]
    logs = np.log(x[:k]) - math.log(x[k])
    h = float(np.mean(logs))
    if h == 0.0:
        return math.inf
    return 1.0 / h


def default_hill_k(n: int) -> int:
    """floor(sqrt(n)): the standard bias/variance compromise."""
    return max(1, int(math.isqrt(n)))
