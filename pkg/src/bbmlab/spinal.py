"""Spinal (tilted-measure) simulation and the mean-overlap importance sampler.

Under the tilted law at inverse temperature b, one distinguished lineage
(the spine) moves as a Brownian motion with drift b and splits at rate 2;
the spine continuation is chosen uniformly between the two children and the
other child roots an ordinary BBM. The finite-horizon variant tilts the
dynamics only on [0, t]: at t every alive particle, spine included,
continues as an ordinary BBM (for the spine this appears in the particle
table as a single-child handover at the tilt horizon).

The point of the change of measure is the identity

  E[nu_{b,t}([a,1])] = e^{(b^2-1) a t} E_tilt(2b, at)[ W^{(spine,at)}_{t-at}(b)^2
                                                        / W_t(b)^2 ],

which turns the rare high-overlap event into a typical one under the tilt
and is what makes the mean-overlap decay measurable at large a*t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine
from .core import (
    DEFAULT_POPULATION_CAP,
    ParticleLabel,
    Snapshot,
    simulate_snapshot,
)
from .errors import OutOfRange, PopulationCapExceeded, UnknownStatistic
from .logvalue import LogValue
from .martingales import additive_martingale
from .overlap_stats import EstimateWithCI
from .rng import SplitMix64, derive_seed
from .theory import BETA_C


@dataclass
class SpineRealization:
    """A snapshot plus its distinguished lineage.

    spine_labels maps each checkpoint time <= tilt_horizon to the spine
    particle alive there; spine_positions gives the spine path at the same
    times; spine_split_times are the spine's branching times within
    [0, min(horizon, tilt_horizon)].
    """

    snapshot: Snapshot
    spine_labels: dict[float, ParticleLabel]
    spine_positions: dict[float, float]
    spine_split_times: list[float]
    tilt_beta: float
    tilt_horizon: float  # math.inf for the plain (un-truncated) tilt


def _simulate_tilted(
    beta: float,
    horizon: float,
    checkpoints,
    seed: int,
    population_cap: int,
    tilt_horizon: float,
) -> SpineRealization:
    """Shared machinery for the plain and horizon-truncated tilted laws.

    The spine skeleton is laid down first (drift-beta path, rate-2 split
    times up to min(horizon, tilt_horizon)); each off-spine child then
    roots an ordinary BBM simulated with the exact snapshot machinery, as
    does the spine particle itself past the tilt horizon (its residual
    Exp(1) lifetime there is a fresh draw, by memorylessness).
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if beta < 0.0:
        raise OutOfRange("beta must be >= 0")
    checkpoints = tuple(sorted(set(float(s) for s in checkpoints)))
    if checkpoints and (checkpoints[0] < 0.0 or checkpoints[-1] > horizon):
        raise ValueError("checkpoints must lie inside [0, horizon]")
    rng = SplitMix64(seed)
    spine_end = min(horizon, tilt_horizon)

    split_times: list[float] = []
    s_cur = 0.0
    while True:
        gap = rng.exponential(rate=2.0)
        if s_cur + gap > spine_end:
            break
        s_cur += gap
        split_times.append(s_cur)

    sample_times = sorted(set(split_times) | {s for s in checkpoints if s <= spine_end} | {spine_end})
    spine_path: dict[float, float] = {0.0: 0.0}
    t_prev, x_prev = 0.0, 0.0
    for s in sample_times:
        if s > t_prev:
            x_prev += beta * (s - t_prev) + rng.normal() * math.sqrt(s - t_prev)
            t_prev = s
        spine_path[s] = x_prev

    parent: list[int] = []
    slot: list[int] = []
    birth: list[float] = []
    death: list[float] = []
    birth_pos: list[float] = []
    cpos_build: dict[float, dict[int, float]] = {s: {} for s in checkpoints}

    def add_particle(p: int, k: int, b: float, d: float, xb: float) -> int:
        idx = len(parent)
        parent.append(p)
        slot.append(k)
        birth.append(b)
        death.append(d)
        birth_pos.append(xb)
        return idx

    def graft_subtree(p_idx: int, k: int, b: float, xb: float) -> None:
        """Ordinary BBM from (b, xb) up to the global horizon, appended
        under particle p_idx as child k. Global checkpoints >= b are paired
        with the subtree's local checkpoint s - b by index, so no float
        re-matching happens."""
        kept = [s for s in checkpoints if s >= b]
        sub = simulate_snapshot(
            horizon - b,
            tuple(s - b for s in kept),
            rng.u64(),
            population_cap=population_cap,
        )
        base = len(parent)
        for j in range(sub.n_particles):
            pj = int(sub.parent[j])
            add_particle(
                p_idx if pj < 0 else base + pj,
                k if pj < 0 else int(sub.slot[j]),
                b + float(sub.birth[j]),
                b + float(sub.death[j]),
                xb + float(sub.birth_pos[j]),
            )
        for s_global, s_local in zip(kept, sub.checkpoint_times):
            arr = sub.cpos[s_local]
            col = cpos_build[s_global]
            for j in np.nonzero(~np.isnan(arr))[0]:
                col[base + int(j)] = xb + float(arr[j])

    seg_starts = [0.0] + split_times
    spine_labels: dict[float, ParticleLabel] = {}
    spine_word: tuple[int, ...] = ()
    prev_idx = -1
    prev_slot = 0
    for i, b in enumerate(seg_starts):
        is_last = i == len(seg_starts) - 1
        if not is_last:
            d = split_times[i]
        elif tilt_horizon <= horizon:
            d = tilt_horizon  # ordinary-BBM restart hands the lineage to a single child
        else:
            d = math.inf
        xb = spine_path[b]
        idx = add_particle(prev_idx, prev_slot, b, d, xb)
        for s in checkpoints:
            if b <= s < d and s <= spine_end:
                cpos_build[s][idx] = spine_path[s]
                spine_labels[s] = ParticleLabel(spine_word)
        if not is_last:
            s_split = split_times[i]
            spine_child = rng.coin()
            graft_subtree(idx, 3 - spine_child, s_split, spine_path[s_split])
            prev_idx = idx
            prev_slot = spine_child
            spine_word = spine_word + (spine_child,)
        elif tilt_horizon <= horizon:
            graft_subtree(idx, 1, tilt_horizon, spine_path[spine_end])
            if tilt_horizon in checkpoints:
                # the particle alive at the tilt horizon is the restart root
                spine_labels[tilt_horizon] = ParticleLabel(spine_word + (1,))

    n = len(parent)
    cpos = {}
    for s in checkpoints:
        arr = np.full(n, np.nan)
        entries = cpos_build[s]
        if entries:
            arr[list(entries.keys())] = list(entries.values())
        cpos[s] = arr
    snap = Snapshot(
        horizon=float(horizon),
        checkpoint_times=checkpoints,
        rng_seed=int(seed),
        parent=np.asarray(parent, dtype=np.int64),
        slot=np.asarray(slot, dtype=np.int8),
        birth=np.asarray(birth, dtype=np.float64),
        death=np.asarray(death, dtype=np.float64),
        birth_pos=np.asarray(birth_pos, dtype=np.float64),
        cpos=cpos,
    )
    # alive count of a BBM is nondecreasing, so the horizon count is the max
    if int(snap.alive_mask(horizon).sum()) > population_cap:
        raise PopulationCapExceeded(f"alive count exceeds cap {population_cap} at the horizon")
    return SpineRealization(
        snapshot=snap,
        spine_labels=spine_labels,
        spine_positions={s: spine_path[s] for s in spine_path if s in checkpoints or s == spine_end},
        spine_split_times=split_times,
        tilt_beta=beta,
        tilt_horizon=tilt_horizon,
    )


def simulate_spine_Q(
    beta: float,
    horizon: float,
    checkpoints,
    seed: int,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> SpineRealization:
    """Tilted law with the tilt active over the whole horizon."""
    return _simulate_tilted(beta, horizon, checkpoints, seed, population_cap, math.inf)


def simulate_Q_beta_t(
    beta: float,
    t: float,
    horizon: float,
    checkpoints,
    seed: int,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> SpineRealization:
    """Tilted dynamics on [0, t] only; ordinary branching diffusion after."""
    if not (0.0 < t <= horizon):
        raise ValueError("need 0 < t <= horizon")
    return _simulate_tilted(beta, horizon, checkpoints, seed, population_cap, t)


# -- Radon-Nikodym paired checks ----------------------------------------------

#: Fixed, versioned catalog of bounded F_t-measurable statistics. Arbitrary
#: user functionals would make the check unfalsifiable.
RN_CATALOG_VERSION = 1


def _stat_unit(snapshot: Snapshot, t: float) -> float:
    return 1.0


def _stat_capped_count(m: int):
    def f(snapshot: Snapshot, t: float) -> float:
        return float(min(int(snapshot.alive_mask(t).sum()), m))

    return f


def _stat_max_below(x: float):
    def f(snapshot: Snapshot, t: float) -> float:
        alive = snapshot.alive_mask(t)
        return 1.0 if float(np.nanmax(snapshot.cpos[t][alive])) <= x else 0.0

    return f


RN_CATALOG = {
    "unit": _stat_unit,
    "capped_count_10": _stat_capped_count(10),
    "max_below_2": _stat_max_below(2.0),
    "max_below_0": _stat_max_below(0.0),
}


def _mean_log_estimate(values: np.ndarray, replicas: int, seed: int) -> EstimateWithCI:
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(len(values)))
    point = LogValue.from_float(mean)
    se_log = se / abs(mean) if mean != 0.0 else math.inf
    return EstimateWithCI(point=point, std_error_log=se_log, replicas=replicas, master_seed=seed)


def radon_nikodym_check(
    beta: float,
    t: float,
    statistic_id: str,
    replicas: int,
    seed: int,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> tuple[EstimateWithCI, EstimateWithCI]:
    """Paired estimators of the same number: E_P[g * W_t(beta)] from ordinary
    simulation and E_tilt[g] from spinal simulation. The change of measure
    says they agree; the caller checks within combined standard errors."""
    if statistic_id not in RN_CATALOG:
        raise UnknownStatistic(f"{statistic_id!r} not in catalog v{RN_CATALOG_VERSION}")
    g = RN_CATALOG[statistic_id]
    p_vals = np.empty(replicas)
    q_vals = np.empty(replicas)
    for r in range(replicas):
        snap = simulate_snapshot(t, (t,), derive_seed(seed, 0, r), population_cap)
        p_vals[r] = g(snap, t) * additive_martingale(snap, beta, t).to_float()
        sp = simulate_spine_Q(beta, t, (t,), derive_seed(seed, 1, r), population_cap)
        q_vals[r] = g(sp.snapshot, t)
    return (
        _mean_log_estimate(p_vals, replicas, seed),
        _mean_log_estimate(q_vals, replicas, seed),
    )


@dataclass
class GibbsWeightReport:
    """Spine-identity check under the horizon-t tilt: by rank r (descending
    position at t), observed spine counts against the summed normalized
    Gibbs weights of that rank, Pearson chi-square on the pooled bins."""

    observed: np.ndarray
    expected: np.ndarray
    chi2: float
    dof: int
    p_value: float
    replicas: int


def spine_gibbs_weight_check(
    beta: float,
    t: float,
    s_extra: float,
    replicas: int,
    seed: int,
    max_rank: int = 8,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> GibbsWeightReport:
    """Under the horizon-t tilt, P(spine at t = u | tree) is the normalized
    Gibbs weight of u — even given the future up to t + s_extra. Simulate to
    t + s_extra, bucket by position rank at t, and compare spine-rank
    frequencies with the accumulated Gibbs weights."""
    from scipy.stats import chi2 as chi2_dist

    horizon = t + s_extra
    obs = np.zeros(max_rank + 1)
    exp = np.zeros(max_rank + 1)
    for r in range(replicas):
        sp = simulate_Q_beta_t(beta, t, horizon, (t,), derive_seed(seed, r), population_cap)
        snap = sp.snapshot
        alive = np.nonzero(snap.alive_mask(t))[0]
        x = snap.cpos[t][alive]
        order = np.argsort(-x)
        w = np.exp(beta * (x[order] - np.max(x)))
        w /= np.sum(w)
        spine_idx = snap.index_of(sp.spine_labels[t])
        rank = int(np.nonzero(alive[order] == spine_idx)[0][0])
        obs[min(rank, max_rank)] += 1.0
        for k in range(len(w)):
            exp[min(k, max_rank)] += w[k]
    keep = exp >= 5.0
    if keep.sum() < 2:
        keep = exp > 0.0
    chi2 = float(np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep]))
    dof = int(keep.sum()) - 1
    p = float(chi2_dist.sf(chi2, dof)) if dof > 0 else 1.0
    return GibbsWeightReport(
        observed=obs, expected=exp, chi2=chi2, dof=max(dof, 0), p_value=p, replicas=replicas
    )


def is_mean_overlap_estimator(
    beta: float,
    a: float,
    t: float,
    replicas: int,
    seed: int,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> EstimateWithCI:
    """Unbiased importance-sampling estimator of E[nu_{beta,t}([a,1])]:
    simulate under the 2*beta tilt with tilt horizon a*t and average
    e^{(beta^2-1)at} W^{(spine,at)}_{t-at}(beta)^2 / W_t(beta)^2. The
    Gibbs-weight spine selection makes the reweighting over the time-at
    ancestors implicit."""
    if not (0.0 <= beta < BETA_C):
        raise OutOfRange("beta must lie in [0, sqrt(2))")
    if not (0.0 < a < 1.0):
        raise OutOfRange("a must lie in (0, 1)")
    vals = engine.is_mean_replica_values(seed, replicas, beta, a, t)["value"]
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(replicas))
    return EstimateWithCI(
        point=LogValue.from_float(mean),
        std_error_log=se / mean if mean > 0 else math.inf,
        replicas=replicas,
        master_seed=seed,
    )


def naive_mean_overlap(
    beta: float,
    a: float,
    t: float,
    replicas: int,
    seed: int,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> EstimateWithCI:
    """Plain-measure Monte Carlo of E[nu_{beta,t}([a,1])] (the IS
    estimator's paired oracle)."""
    from .overlap_stats import overlap_samples

    nu = overlap_samples(beta, a, t, replicas, seed, population_cap)
    mean = float(np.mean(nu))
    se = float(np.std(nu, ddof=1) / math.sqrt(replicas))
    return EstimateWithCI(
        point=LogValue.from_float(mean),
        std_error_log=se / mean if mean > 0 else math.inf,
        replicas=replicas,
        master_seed=seed,
    )
