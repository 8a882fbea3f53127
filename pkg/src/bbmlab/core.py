"""Exact event-driven simulation of binary branching Brownian motion.

A particle lives Exp(1), moves as a standard Brownian motion, and dies
giving birth to two children at its death position. The simulator is exact:
positions are drawn only at the times where they are needed (the particle's
own checkpoints and its death), as Gaussian increments over the exact
elapsed time — there is no Euler grid anywhere.

Particles are named by their genealogical word over {1, 2} (Ulam-Harris-
Neveu): the root is the empty word, the children of u are u1 and u2. The
alive set at time s uses the half-open convention b_u <= s < d_u.

Storage is columnar (parent/slot/birth/death plus per-checkpoint position
arrays) because populations grow like e^t and per-particle objects are the
first thing to die at that growth rate.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NotACheckpoint, NotAlive, PopulationCapExceeded, UnknownLabel
from .rng import SplitMix64

DEFAULT_POPULATION_CAP = 10_000_000

NEVER_SEPARATED = math.inf  # mrca_death_time(u, u)


@dataclass(frozen=True, order=False)
class ParticleLabel:
    """A finite word over {1, 2}; the root is the empty word."""

    word: tuple[int, ...] = ()

    def __post_init__(self):
        if any(c not in (1, 2) for c in self.word):
            raise ValueError("label letters must be 1 or 2")

    @property
    def generation(self) -> int:
        return len(self.word)

    @property
    def is_root(self) -> bool:
        return not self.word

    def parent(self) -> "ParticleLabel":
        if self.is_root:
            raise ValueError("the root has no parent")
        return ParticleLabel(self.word[:-1])

    def child(self, k: int) -> "ParticleLabel":
        if k not in (1, 2):
            raise ValueError("child index must be 1 or 2")
        return ParticleLabel(self.word + (k,))

    def is_ancestor_of(self, other: "ParticleLabel") -> bool:
        """Prefix order: u <= v iff u's word is a prefix of v's."""
        n = len(self.word)
        return len(other.word) >= n and other.word[:n] == self.word

    def meet(self, other: "ParticleLabel") -> "ParticleLabel":
        """Most recent common ancestor: the longest common prefix."""
        i = 0
        for a, b in zip(self.word, other.word):
            if a != b:
                break
            i += 1
        return ParticleLabel(self.word[:i])

    @staticmethod
    def from_string(s: str) -> "ParticleLabel":
        return ParticleLabel(tuple(int(c) for c in s))

    def __str__(self) -> str:
        return "".join(str(c) for c in self.word)

    def __repr__(self) -> str:
        return f"ParticleLabel('{self}')"


@dataclass(frozen=True)
class CensusEntry:
    label: ParticleLabel
    position: float


@dataclass
class Snapshot:
    """A realized BBM up to `horizon`.

    Columnar particle table, index-aligned arrays:
      parent[i]    index of the parent (-1 for the root)
      slot[i]      which child of its parent (0 root, else 1 or 2)
      birth[i]     b_u; equals the parent's death time
      death[i]     d_u; may exceed `horizon`
      birth_pos[i] position at birth (continuity: the parent's death position)
      cpos[s][i]   position at checkpoint s, NaN unless b_u <= s < d_u
    """

    horizon: float
    checkpoint_times: tuple[float, ...]
    rng_seed: int
    parent: np.ndarray
    slot: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    birth_pos: np.ndarray
    cpos: dict[float, np.ndarray] = field(repr=False)

    @property
    def n_particles(self) -> int:
        return int(self.parent.shape[0])

    @cached_property
    def _label_index(self) -> dict[tuple[int, ...], int]:
        idx = {}
        words: list[tuple[int, ...]] = [None] * self.n_particles  # type: ignore[list-item]
        for i in range(self.n_particles):
            p = int(self.parent[i])
            if p < 0:
                w: tuple[int, ...] = ()
            else:
                w = words[p] + (int(self.slot[i]),)
            words[i] = w
            idx[w] = i
        return idx

    def label_of(self, i: int) -> ParticleLabel:
        w = []
        j = i
        while self.parent[j] >= 0:
            w.append(int(self.slot[j]))
            j = int(self.parent[j])
        return ParticleLabel(tuple(reversed(w)))

    def index_of(self, label: ParticleLabel) -> int:
        try:
            return self._label_index[label.word]
        except KeyError:
            raise UnknownLabel(f"no particle labelled '{label}'") from None

    def alive_mask(self, s: float) -> np.ndarray:
        return (self.birth <= s) & (s < self.death)

    def is_alive(self, label: ParticleLabel, s: float) -> bool:
        i = self.index_of(label)
        return bool(self.birth[i] <= s < self.death[i])

    def _require_checkpoint(self, s: float) -> None:
        if s not in self.checkpoint_times:
            raise NotACheckpoint(f"{s} was not requested as a checkpoint")

    def positions_at(self, s: float) -> np.ndarray:
        self._require_checkpoint(s)
        return self.cpos[s]


def simulate_snapshot(
    horizon: float,
    checkpoints,
    seed: int,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> Snapshot:
    """Exact simulation up to `horizon`, deterministic given `seed`.

    Raises PopulationCapExceeded as soon as the alive-particle count crosses
    `population_cap`; lower the horizon or raise the cap.
    """
    if horizon < 0.0:
        raise ValueError("horizon must be >= 0")
    if population_cap < 1:
        raise ValueError("population_cap must be >= 1")
    checkpoints = tuple(sorted(set(float(s) for s in checkpoints)))
    if checkpoints and (checkpoints[0] < 0.0 or checkpoints[-1] > horizon):
        raise ValueError("checkpoints must lie inside [0, horizon]")

    rng = SplitMix64(seed)

    parent = [-1]
    slot = [0]
    birth = [0.0]
    death = []
    birth_pos = [0.0]
    # checkpoint positions as {checkpoint -> {particle index -> position}}
    cpos_build: dict[float, dict[int, float]] = {s: {} for s in checkpoints}

    def spawn(idx: int, b: float, x: float) -> float:
        """Draw particle idx's lifetime and its trajectory at every
        checkpoint within its life; return its death position if it dies
        before the horizon (NaN otherwise)."""
        d = b + rng.exponential()
        death.append(d)
        t_prev, x_prev = b, x
        stop = min(d, horizon)
        for s in checkpoints:
            if b <= s < d and s <= horizon:
                if s > t_prev:
                    x_prev += rng.normal() * math.sqrt(s - t_prev)
                    t_prev = s
                cpos_build[s][idx] = x_prev
        if d <= horizon:
            x_d = x_prev + rng.normal() * math.sqrt(d - t_prev) if d > t_prev else x_prev
            return x_d
        return math.nan

    death_pos: dict[int, float] = {}
    x_d = spawn(0, 0.0, 0.0)
    pending: list[tuple[float, int]] = []
    if not math.isnan(x_d):
        death_pos[0] = x_d
        heapq.heappush(pending, (death[0], 0))

    alive = 1
    while pending:
        d_time, i = heapq.heappop(pending)
        alive += 1  # two children replace one parent
        if alive > population_cap:
            raise PopulationCapExceeded(
                f"alive count {alive} exceeds cap {population_cap} at t={d_time:.3f}"
            )
        for k in (1, 2):
            j = len(parent)
            parent.append(i)
            slot.append(k)
            birth.append(d_time)
            birth_pos.append(death_pos[i])
            x_d = spawn(j, d_time, death_pos[i])
            if not math.isnan(x_d):
                death_pos[j] = x_d
                heapq.heappush(pending, (death[j], j))

    n = len(parent)
    cpos = {}
    for s in checkpoints:
        arr = np.full(n, np.nan)
        entries = cpos_build[s]
        if entries:
            arr[list(entries.keys())] = list(entries.values())
        cpos[s] = arr

    return Snapshot(
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


def census(snapshot: Snapshot, s: float) -> list[CensusEntry]:
    """Exactly the particles with b_u <= s < d_u, with their positions."""
    snapshot._require_checkpoint(s)
    pos = snapshot.cpos[s]
    out = []
    for i in np.nonzero(snapshot.alive_mask(s))[0]:
        out.append(CensusEntry(snapshot.label_of(int(i)), float(pos[i])))
    return out


def mrca_death_time(snapshot: Snapshot, u: ParticleLabel, v: ParticleLabel) -> float:
    """Death time of the most recent common ancestor; NEVER_SEPARATED for u == v."""
    iu = snapshot.index_of(u)
    iv = snapshot.index_of(v)
    if iu == iv:
        return NEVER_SEPARATED
    w = u.meet(v)
    return float(snapshot.death[snapshot.index_of(w)])


def overlap(snapshot: Snapshot, u: ParticleLabel, v: ParticleLabel, t: float) -> float:
    """q_t(u, v) = min(d_{u^v}, t)/t, the fraction of [0, t] spent on a
    shared trajectory; q_t(u, u) = 1."""
    if t <= 0.0:
        raise ValueError("t must be positive")
    for lab in (u, v):
        if not snapshot.is_alive(lab, t):
            raise NotAlive(f"particle '{lab}' is not alive at t={t}")
    if u == v:
        return 1.0
    return min(mrca_death_time(snapshot, u, v), t) / t


def max_position(snapshot: Snapshot, t: float) -> float:
    snapshot._require_checkpoint(t)
    mask = snapshot.alive_mask(t)
    if not mask.any():
        raise NotAlive(f"no particles alive at t={t}")
    return float(np.nanmax(snapshot.cpos[t][mask]))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------
#
# One flat JSON document. Field order (also in the README):
#   format, horizon, rng_seed, checkpoint_times,
#   particles: list sorted by label, each
#     [label string over {1,2} ('' = root), birth, death, birth_pos,
#      [position at each checkpoint time, in order, null when not alive]]
# Floats are emitted with repr (shortest round-trip), so identical seeds
# yield identical bytes.

SNAPSHOT_FORMAT = "bbm-snapshot-v1"


def serialize_snapshot(snapshot: Snapshot) -> bytes:
    order = sorted(range(snapshot.n_particles), key=lambda i: snapshot.label_of(i).word)
    rows = []
    for i in order:
        row = [
            str(snapshot.label_of(i)),
            float(snapshot.birth[i]),
            float(snapshot.death[i]),
            float(snapshot.birth_pos[i]),
            [
                None if math.isnan(snapshot.cpos[s][i]) else float(snapshot.cpos[s][i])
                for s in snapshot.checkpoint_times
            ],
        ]
        rows.append(row)
    doc = {
        "format": SNAPSHOT_FORMAT,
        "horizon": snapshot.horizon,
        "rng_seed": snapshot.rng_seed,
        "checkpoint_times": list(snapshot.checkpoint_times),
        "particles": rows,
    }
    return json.dumps(doc, separators=(",", ":")).encode()


def deserialize_snapshot(blob: bytes) -> Snapshot:
    doc = json.loads(blob.decode())
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"unknown snapshot format {doc.get('format')!r}")
    rows = doc["particles"]
    checkpoints = tuple(float(s) for s in doc["checkpoint_times"])
    n = len(rows)
    label_to_i = {r[0]: i for i, r in enumerate(rows)}
    parent = np.empty(n, dtype=np.int64)
    slot = np.empty(n, dtype=np.int8)
    birth = np.empty(n)
    death = np.empty(n)
    birth_pos = np.empty(n)
    cpos = {s: np.full(n, np.nan) for s in checkpoints}
    for i, (lab, b, d, xb, xs) in enumerate(rows):
        parent[i] = label_to_i[lab[:-1]] if lab else -1
        slot[i] = int(lab[-1]) if lab else 0
        birth[i] = b
        death[i] = d
        birth_pos[i] = xb
        for s, x in zip(checkpoints, xs):
            if x is not None:
                cpos[s][i] = x
    return Snapshot(
        horizon=float(doc["horizon"]),
        checkpoint_times=checkpoints,
        rng_seed=int(doc["rng_seed"]),
        parent=parent,
        slot=slot,
        birth=birth,
        death=death,
        birth_pos=birth_pos,
        cpos=cpos,
    )
