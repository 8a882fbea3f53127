"""Streaming Monte Carlo kernels for large-horizon functionals.

The snapshot simulator in `core.py` materializes the whole genealogy and is
the right tool up to ~1e5 particles. The population grows like e^t, so the
estimator suites (overlap masses at t ~ 8..20, importance sampling, Hill
samples) instead walk the tree depth-first and reduce on the fly: memory is
O(tree depth + number of time-at ancestors), never O(e^t). Only the
at-ancestor table is materialized, so the population cap is enforced on it
(the snapshot path enforces the literal alive-count cap).

All kernels draw from an inlined SplitMix64 stream per replica (seeds
derived from the master seed by `rng.derive_seed`), with Exp(1) lifetimes
via inverse transform and exact standard normals via the Marsaglia polar
method. `tests/test_engine.py` pins these against the pure-Python
implementations in `rng.py`.

Key reduction: grouping the overlap-distribution double sum by the ancestor
alive at time a*t collapses it to a participation ratio,

    nu_{beta,t}([a,1]) = sum_w S_w^2 / (sum_w S_w)^2,
    S_w = sum_{v in N(t), v >= w} e^{beta X_v(t)},

which is how the aggregated route avoids the O(|N(t)|^2) pair sum.
"""

from __future__ import annotations

import math
import os

import numpy as np
from numba import njit, prange, set_num_threads

from .errors import OutOfRange, PopulationCapExceeded
from .rng import derive_seed

U64 = np.uint64
_SQRT2 = math.sqrt(2.0)

STATUS_OK = 0
STATUS_ANCESTOR_CAP = 1


def configure_threads(n: int | None = None) -> int:
    """Set numba's thread count from the argument or BBM_THREADS; returns
    the value applied."""
    if n is None:
        n = int(os.environ.get("BBM_THREADS", "0")) or (os.cpu_count() or 1)
    n = max(1, min(n, os.cpu_count() or 1))
    set_num_threads(n)
    return n


# -- inlined SplitMix64 + samplers ------------------------------------------


@njit(cache=True, inline="always")
def _sm64(state):
    state = (state + U64(0x9E3779B97F4A7C15)) & U64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)) & U64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)) & U64(0xFFFFFFFFFFFFFFFF)
    z = z ^ (z >> U64(31))
    return z, state


@njit(cache=True, inline="always")
def _u01(state):
    """Uniform on (0, 1], top 53 bits."""
    z, state = _sm64(state)
    return ((z >> U64(11)) + U64(1)) * (1.0 / 9007199254740992.0), state


@njit(cache=True, inline="always")
def _norm_pair(state):
    """Two independent standard normals, Marsaglia polar method."""
    while True:
        u1, state = _u01(state)
        u2, state = _u01(state)
        v1 = 2.0 * u1 - 1.0
        v2 = 2.0 * u2 - 1.0
        r2 = v1 * v1 + v2 * v2
        if 1e-300 < r2 < 1.0:
            f = math.sqrt(-2.0 * math.log(r2) / r2)
            return v1 * f, v2 * f, state


@njit(cache=True)
def _subtree_reduce(state, b0, x0, d0, horizon, beta, shift, want_z):
    """Depth-first walk of one standard-BBM subtree rooted at (b0, x0) with
    predrawn first death d0 (pass d0 < 0 to draw it), reduced at `horizon`.

    Returns (state, wsum, zsum, count, maxpos) with
      wsum = sum over leaves of e^{beta x - shift}
      zsum = sum over leaves of (sqrt(2) horizon - x) e^{sqrt(2) x - 2 horizon}
    """
    st_b = np.empty(256)
    st_x = np.empty(256)
    top = 0
    wsum = 0.0
    zsum = 0.0
    cnt = 0
    maxp = -1.0e308
    spare = 0.0
    has_spare = False
    cur_b = b0
    cur_x = x0
    cur_d = d0
    while True:
        if cur_d < 0.0:
            u, state = _u01(state)
            cur_d = cur_b - math.log(u)
        if has_spare:
            g = spare
            has_spare = False
        else:
            g, spare, state = _norm_pair(state)
            has_spare = True
        if cur_d > horizon:
            x = cur_x + g * math.sqrt(horizon - cur_b)
            wsum += math.exp(beta * x - shift)
            if want_z:
                zsum += (_SQRT2 * horizon - x) * math.exp(_SQRT2 * x - 2.0 * horizon)
            cnt += 1
            if x > maxp:
                maxp = x
            if top == 0:
                break
            top -= 1
            cur_b = st_b[top]
            cur_x = st_x[top]
            cur_d = -1.0
        else:
            x = cur_x + g * math.sqrt(cur_d - cur_b)
            if top >= st_b.shape[0]:
                nb = np.empty(st_b.shape[0] * 2)
                nx = np.empty(st_x.shape[0] * 2)
                nb[:top] = st_b[:top]
                nx[:top] = st_x[:top]
                st_b = nb
                st_x = nx
            st_b[top] = cur_d
            st_x[top] = x
            top += 1
            cur_b = cur_d
            cur_x = x
            cur_d = -1.0
    return state, wsum, zsum, cnt, maxp


@njit(cache=True)
def _ancestors_at(state, split_time, anc_cap):
    """Phase 1: run the tree from the origin to `split_time`; returns the
    particles alive there as (positions, predrawn death times)."""
    cap0 = 4096
    ax = np.empty(cap0)
    ad = np.empty(cap0)
    n = 0
    st_b = np.empty(256)
    st_x = np.empty(256)
    top = 0
    spare = 0.0
    has_spare = False
    cur_b = 0.0
    cur_x = 0.0
    cur_d = -1.0
    while True:
        if cur_d < 0.0:
            u, state = _u01(state)
            cur_d = cur_b - math.log(u)
        if has_spare:
            g = spare
            has_spare = False
        else:
            g, spare, state = _norm_pair(state)
            has_spare = True
        if cur_d > split_time:
            x = cur_x + g * math.sqrt(split_time - cur_b)
            if n >= ax.shape[0]:
                nx = np.empty(ax.shape[0] * 2)
                nd = np.empty(ad.shape[0] * 2)
                nx[:n] = ax[:n]
                nd[:n] = ad[:n]
                ax = nx
                ad = nd
            ax[n] = x
            ad[n] = cur_d
            n += 1
            if n > anc_cap:
                return state, ax, ad, -1  # cap exceeded
            if top == 0:
                break
            top -= 1
            cur_b = st_b[top]
            cur_x = st_x[top]
            cur_d = -1.0
        else:
            x = cur_x + g * math.sqrt(cur_d - cur_b)
            if top >= st_b.shape[0]:
                nb = np.empty(st_b.shape[0] * 2)
                nx2 = np.empty(st_x.shape[0] * 2)
                nb[:top] = st_b[:top]
                nx2[:top] = st_x[:top]
                st_b = nb
                st_x = nx2
            st_b[top] = cur_d
            st_x[top] = x
            top += 1
            cur_b = cur_d
            cur_x = x
            cur_d = -1.0
    return state, ax[:n], ad[:n], n


@njit(cache=True, parallel=True)
def _overlap_batch(seeds, beta, a, t, anc_cap, status, nu, log_wt, log_w2b, f_norm, count, n_anc, max_pos):
    at = a * t
    psi_b = 1.0 + beta * beta / 2.0
    psi_2b = 1.0 + 2.0 * beta * beta
    shift = beta * _SQRT2 * t
    shift2 = 2.0 * beta * _SQRT2 * at
    for r in prange(seeds.shape[0]):
        state = seeds[r]
        state, ax, ad, n = _ancestors_at(state, at, anc_cap)
        if n < 0:
            status[r] = STATUS_ANCESTOR_CAP
            continue
        s_tot = 0.0
        s_sq = 0.0
        s_2b = 0.0
        cnt = 0
        maxp = -1.0e308
        for w in range(n):
            state, sw, _, cw, mp = _subtree_reduce(state, at, ax[w], ad[w], t, beta, shift, False)
            s_tot += sw
            s_sq += sw * sw
            cnt += cw
            if mp > maxp:
                maxp = mp
            s_2b += math.exp(2.0 * beta * ax[w] - shift2)
        status[r] = STATUS_OK
        nu[r] = s_sq / (s_tot * s_tot)
        log_wt[r] = math.log(s_tot) + shift - psi_b * t
        log_w2b[r] = math.log(s_2b) + shift2 - psi_2b * at
        # F = e^{-psi(2b) at - 2 psi(b)(t-at)} sum_w S_w^2 (true scale)
        log_f = math.log(s_sq) + 2.0 * shift - psi_2b * at - 2.0 * psi_b * (t - at)
        f_norm[r] = math.exp(log_f - log_w2b[r])
        count[r] = cnt
        n_anc[r] = n
        max_pos[r] = maxp


@njit(cache=True, parallel=True)
def _tree_batch(seeds, beta, t, status, count, log_wt, z_t, max_pos):
    psi_b = 1.0 + beta * beta / 2.0
    shift = beta * _SQRT2 * t
    for r in prange(seeds.shape[0]):
        state = seeds[r]
        state, wsum, zsum, cnt, maxp = _subtree_reduce(state, 0.0, 0.0, -1.0, t, beta, shift, True)
        status[r] = STATUS_OK
        count[r] = cnt
        log_wt[r] = math.log(wsum) + shift - psi_b * t
        z_t[r] = zsum
        max_pos[r] = maxp


@njit(cache=True, parallel=True)
def _is_mean_batch(seeds, beta, a, t, value, n_splits, spine_x_at):
    """Importance-sampling replicas under the 2*beta-tilted measure with
    tilt horizon a*t: the spine drifts at 2*beta and splits at rate 2 up to
    a*t, off-spine children (and, past a*t, the spine particle itself) run
    standard BBMs. Per replica the estimand is

        e^{(beta^2-1) at} * (W^{(spine,at)}_{t-at}(beta))^2 / W_t(beta)^2.
    """
    at = a * t
    psi_b = 1.0 + beta * beta / 2.0
    drift = 2.0 * beta
    shift = beta * _SQRT2 * t
    for r in prange(seeds.shape[0]):
        state = seeds[r]
        spare = 0.0
        has_spare = False
        s_cur = 0.0
        x_cur = 0.0
        s_total = 0.0
        k = 0
        while True:
            u, state = _u01(state)
            gap = -0.5 * math.log(u)  # Exp(rate 2)
            if s_cur + gap >= at:
                break
            if has_spare:
                g = spare
                has_spare = False
            else:
                g, spare, state = _norm_pair(state)
                has_spare = True
            s_cur += gap
            x_cur += drift * gap + g * math.sqrt(gap)
            state, sw, _, _, _ = _subtree_reduce(state, s_cur, x_cur, -1.0, t, beta, shift, False)
            s_total += sw
            k += 1
        if has_spare:
            g = spare
            has_spare = False
        else:
            g, spare, state = _norm_pair(state)
            has_spare = True
        dt = at - s_cur
        x_at = x_cur + drift * dt + g * math.sqrt(dt)
        state, s_sp, _, _, _ = _subtree_reduce(state, at, x_at, -1.0, t, beta, shift, False)
        s_total += s_sp
        log_value = (
            (beta * beta - 1.0) * at
            + 2.0 * psi_b * at
            - 2.0 * beta * x_at
            + 2.0 * (math.log(s_sp) - math.log(s_total))
        )
        value[r] = math.exp(log_value)
        n_splits[r] = k
        spine_x_at[r] = x_at


# -- python wrappers ---------------------------------------------------------


def _seed_array(master_seed: int, n: int, base: int = 0) -> np.ndarray:
    return np.array([derive_seed(master_seed, base + r) for r in range(n)], dtype=np.uint64)


def overlap_replica_stats(
    master_seed: int,
    replicas: int,
    beta: float,
    a: float,
    t: float,
    population_cap: int = 10_000_000,
) -> dict[str, np.ndarray]:
    """Per-replica overlap-route statistics at (beta, a, t):

    nu        nu_{beta,t}([a,1])
    log_wt    log W_t(beta)
    log_w2b   log W_{at}(2 beta)
    f_norm    F_t / W_{at}(2 beta), the Gibbs-weighted mean of the squared
              restarted martingales (limit E[W_inf(beta)^2] in regime 1)
    count     |N(t)|,  n_anc  |N(at)|,  max_pos  max over N(t)
    """
    if not (0.0 < a < 1.0):
        raise OutOfRange("a must lie in (0, 1)")
    if t <= 0.0 or beta < 0.0:
        raise OutOfRange("need t > 0 and beta >= 0")
    seeds = _seed_array(master_seed, replicas)
    status = np.zeros(replicas, dtype=np.int64)
    nu = np.empty(replicas)
    log_wt = np.empty(replicas)
    log_w2b = np.empty(replicas)
    f_norm = np.empty(replicas)
    count = np.empty(replicas, dtype=np.int64)
    n_anc = np.empty(replicas, dtype=np.int64)
    max_pos = np.empty(replicas)
    _overlap_batch(seeds, beta, a, t, population_cap, status, nu, log_wt, log_w2b, f_norm, count, n_anc, max_pos)
    if (status == STATUS_ANCESTOR_CAP).any():
        bad = int(np.sum(status == STATUS_ANCESTOR_CAP))
        raise PopulationCapExceeded(
            f"{bad}/{replicas} replicas exceeded the ancestor cap {population_cap} at a*t={a * t}"
        )
    return {
        "nu": nu,
        "log_wt": log_wt,
        "log_w2b": log_w2b,
        "f_norm": f_norm,
        "count": count,
        "n_anc": n_anc,
        "max_pos": max_pos,
    }


def tree_stats(master_seed: int, replicas: int, beta: float, t: float) -> dict[str, np.ndarray]:
    """Per-replica whole-tree reductions: |N(t)|, log W_t(beta), Z_t, max."""
    if t <= 0.0 or beta < 0.0:
        raise OutOfRange("need t > 0 and beta >= 0")
    seeds = _seed_array(master_seed, replicas)
    status = np.zeros(replicas, dtype=np.int64)
    count = np.empty(replicas, dtype=np.int64)
    log_wt = np.empty(replicas)
    z_t = np.empty(replicas)
    max_pos = np.empty(replicas)
    _tree_batch(seeds, beta, t, status, count, log_wt, z_t, max_pos)
    return {"count": count, "log_wt": log_wt, "z_t": z_t, "max_pos": max_pos}


def is_mean_replica_values(
    master_seed: int, replicas: int, beta: float, a: float, t: float
) -> dict[str, np.ndarray]:
    """Per-replica importance-sampling values for E[nu_{beta,t}([a,1])]."""
    if not (0.0 < a < 1.0):
        raise OutOfRange("a must lie in (0, 1)")
    if not (0.0 <= beta < _SQRT2):
        raise OutOfRange("beta must lie in [0, sqrt(2))")
    if t <= 0.0:
        raise OutOfRange("t must be positive")
    seeds = _seed_array(master_seed, replicas)
    value = np.empty(replicas)
    n_splits = np.empty(replicas, dtype=np.int64)
    spine_x_at = np.empty(replicas)
    _is_mean_batch(seeds, beta, a, t, value, n_splits, spine_x_at)
    return {"value": value, "n_splits": n_splits, "spine_x_at": spine_x_at}


def events_estimate(replicas: int, t: float, tilted: bool = False) -> float:
    """Expected particle count driving a run's cost: replicas * e^t, doubled
    under the rate-2 spinal tilt. Used by the harness time-budget guard."""
    return replicas * math.exp(t) * (2.0 if tilted else 1.0)
