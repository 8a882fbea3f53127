"""Additive and derivative martingales of a snapshot, in log-stable form.

W_t(b) = e^{-psi(b) t} sum_{u in N(t)} e^{b X_u(t)},   psi(b) = 1 + b^2/2
Z_t    = sum_{u in N(t)} (sqrt(2) t - X_u(t)) e^{sqrt(2) X_u(t) - 2t}

plus the version of W restarted from a particle u alive at time s:

W_t^{(u,s)}(b) = sum_{v in N(s+t), v >= u} e^{b (X_v(s+t) - X_u(s)) - psi(b) t}

which satisfies, pathwise, the branching decomposition
W_t(b) = sum_{u in N(s)} e^{b X_u(s) - psi(b) s} W_{t-s}^{(u,s)}(b).
"""

from __future__ import annotations

import math

import numpy as np

from .core import ParticleLabel, Snapshot
from .errors import NotAlive, OutOfRange
from .logvalue import LogValue, logsumexp
from .theory import psi


def additive_martingale(snapshot: Snapshot, beta: float, t: float) -> LogValue:
    """W_t(beta); strictly positive, unit mean as a function of the tree."""
    if beta < 0.0:
        raise OutOfRange("beta must be >= 0")
    snapshot._require_checkpoint(t)
    mask = snapshot.alive_mask(t)
    x = snapshot.cpos[t][mask]
    return LogValue.from_log(logsumexp(beta * x) - psi(beta) * t)


def derivative_martingale(snapshot: Snapshot, t: float) -> float:
    """Z_t; starts at 0 and may be negative at finite t."""
    snapshot._require_checkpoint(t)
    mask = snapshot.alive_mask(t)
    x = snapshot.cpos[t][mask]
    s2 = math.sqrt(2.0)
    return float(np.sum((s2 * t - x) * np.exp(s2 * x - 2.0 * t)))


def _descendant_mask(snapshot: Snapshot, anc_idx: int, candidate_idx: np.ndarray) -> np.ndarray:
    """Which of `candidate_idx` descend from (or equal) particle anc_idx.

    Walks parent chains; candidates born before the ancestor cannot descend
    from it, which bounds each walk.
    """
    anc_birth = snapshot.birth[anc_idx]
    out = np.zeros(candidate_idx.shape[0], dtype=bool)
    parent = snapshot.parent
    birth = snapshot.birth
    for k, i in enumerate(candidate_idx):
        j = int(i)
        while j >= 0 and birth[j] >= anc_birth:
            if j == anc_idx:
                out[k] = True
                break
            j = int(parent[j])
    return out


def shifted_martingale(
    snapshot: Snapshot, u: ParticleLabel, s: float, beta: float, t: float
) -> LogValue:
    """W_t^{(u,s)}(beta): the additive martingale of the subtree of u,
    restarted at time s from u's position, evaluated a duration t later."""
    if beta < 0.0:
        raise OutOfRange("beta must be >= 0")
    snapshot._require_checkpoint(s)
    snapshot._require_checkpoint(s + t)
    if not snapshot.is_alive(u, s):
        raise NotAlive(f"particle '{u}' is not alive at s={s}")
    iu = snapshot.index_of(u)
    x_u = snapshot.cpos[s][iu]
    if t == 0.0:
        return LogValue.one()
    alive = np.nonzero(snapshot.alive_mask(s + t))[0]
    keep = _descendant_mask(snapshot, iu, alive)
    x = snapshot.cpos[s + t][alive[keep]]
    return LogValue.from_log(logsumexp(beta * (x - x_u)) - psi(beta) * t)


def second_moment_W(beta: float) -> float:
    """E[W_inf(beta)^2] = 2/(1 - beta^2).

    Splitting at the first branch time tau ~ Exp(1) gives
    m2 = E[e^{(beta^2-2) tau}] (2 m2 + 2) = (2 m2 + 2)/(3 - beta^2),
    i.e. m2 (1 - beta^2) = 2; finite only for beta < 1.
    """
    if not (0.0 <= beta < 1.0):
        raise OutOfRange("E[W_inf(beta)^2] is finite only for 0 <= beta < 1")
    return 2.0 / (1.0 - beta * beta)
