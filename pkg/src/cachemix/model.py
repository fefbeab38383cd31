"""Core domain types: popularity laws, cache states, policy configurations.

Items are dense integers ``1..n``, numbered so that request probabilities
are non-increasing (item 1 is the most popular).  Position 1 of a cache
level is the front (most recent / first position).  All types here are
immutable value objects; they can be shared freely between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidParameterError

#: Tolerance used by every "probabilities sum to one" check.
PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class PopularityDist:
    """Item request probabilities, sorted non-increasing, strictly positive.

    ``probs[i-1]`` is the request probability of item ``i``.  The aggregate
    request rate is normalised to one, so probabilities and per-item rates
    coincide.
    """

    n: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if self.n < 1 or probs.shape != (self.n,):
            raise InvalidParameterError(f"need n >= 1 probabilities, got shape {probs.shape}")
        if not np.all(probs > 0.0):
            raise InvalidParameterError("all probabilities must be strictly positive")
        if np.any(np.diff(probs) > 0.0):
            raise InvalidParameterError("probabilities must be non-increasing in item id")
        if abs(float(probs.sum()) - 1.0) > PROB_SUM_TOL:
            raise InvalidParameterError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.flags.writeable = False

    def prob(self, item: int) -> float:
        return float(self.probs[item - 1])


def make_zipf(n: int, alpha: float) -> PopularityDist:
    """Zipf law: item ``i`` is requested with probability ``A / i**alpha``.

    ``A`` normalises the law to total mass one.  ``alpha = 0`` is the
    uniform distribution.
    """
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    if alpha < 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")
    ranks = np.arange(1, n + 1, dtype=np.float64)
    weights = ranks ** (-float(alpha))
    return PopularityDist(n=n, probs=weights / weights.sum())


def from_probs(probs: Sequence[float]) -> PopularityDist:
    """Wrap an explicit probability vector (must already be sorted)."""
    arr = np.asarray(list(probs), dtype=np.float64)
    return PopularityDist(n=arr.size, probs=arr)


REAL = "real"
META = "meta"


@dataclass(frozen=True)
class Level:
    """One cache level: real levels hold data, meta levels only identifiers."""

    kind: str
    slots: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in (REAL, META):
            raise InvalidParameterError(f"level kind must be 'real' or 'meta', got {self.kind!r}")
        object.__setattr__(self, "slots", tuple(int(s) for s in self.slots))


@dataclass(frozen=True)
class CacheState:
    """Ordered multi-level occupancy vector; one Markov state.

    Levels may hold fewer items than their configured capacity during a
    cold start; the exact chain analysis only ever enumerates full states.
    """

    levels: tuple[Level, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))

    def real_items(self) -> tuple[int, ...]:
        """All items held in real levels, in level order."""
        out: list[int] = []
        for level in self.levels:
            if level.kind == REAL:
                out.extend(level.slots)
        return tuple(out)

    def items_anywhere(self) -> set[int]:
        return {s for level in self.levels for s in level.slots}


class PolicyKind(str, Enum):
    LRU = "lru"
    FIFO = "fifo"
    RANDOM = "random"
    CLIMB = "climb"
    KLRU = "klru"
    LRUM = "lrum"
    ARC = "arc"
    ALRU = "alru"


@dataclass(frozen=True)
class PolicyConfig:
    """Full parametrisation of one caching algorithm instance.

    ``m`` is always the real-cache capacity.  ``k`` applies to KLRU
    (``k - 1`` meta levels plus one real level, each of size ``m``).
    ``m_vec`` applies to LRUM (per-level real capacities, bottom first).
    ALRU takes exactly one of a fixed ``beta`` in [0, 1] or a dynamic
    ``schedule = (T, c)``.
    """

    kind: PolicyKind
    m: int
    k: int | None = None
    m_vec: tuple[int, ...] | None = None
    beta: float | None = None
    schedule: tuple[int, float] | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise InvalidParameterError(f"m must be >= 1, got {self.m}")
        if self.m_vec is not None:
            object.__setattr__(self, "m_vec", tuple(int(v) for v in self.m_vec))
        if self.kind == PolicyKind.KLRU:
            if self.k is None or self.k < 1:
                raise InvalidParameterError("KLRU requires k >= 1")
        elif self.kind == PolicyKind.LRUM:
            if not self.m_vec or any(v < 1 for v in self.m_vec):
                raise InvalidParameterError("LRUM requires a vector of per-level capacities >= 1")
            if sum(self.m_vec) != self.m:
                raise InvalidParameterError(
                    f"LRUM capacities {self.m_vec} must sum to m={self.m}"
                )
        elif self.kind == PolicyKind.ALRU:
            if (self.beta is None) == (self.schedule is None):
                raise InvalidParameterError("ALRU requires exactly one of beta or schedule")
            if self.beta is not None and not 0.0 <= self.beta <= 1.0:
                raise InvalidParameterError(f"beta must lie in [0, 1], got {self.beta}")
            if self.schedule is not None:
                t0, c = self.schedule
                if t0 < 0 or c <= 0:
                    raise InvalidParameterError("ALRU schedule needs T >= 0 and c > 0")

    @property
    def levels(self) -> int:
        if self.kind == PolicyKind.KLRU:
            return self.k  # type: ignore[return-value]
        if self.kind == PolicyKind.LRUM:
            return len(self.m_vec)  # type: ignore[arg-type]
        return 1


def lru(m: int) -> PolicyConfig:
    return PolicyConfig(PolicyKind.LRU, m)


def fifo(m: int) -> PolicyConfig:
    return PolicyConfig(PolicyKind.FIFO, m)


def random_policy(m: int, seed: int = 0) -> PolicyConfig:
    return PolicyConfig(PolicyKind.RANDOM, m, rng_seed=seed)


def climb(m: int) -> PolicyConfig:
    return PolicyConfig(PolicyKind.CLIMB, m)


def klru(k: int, m: int) -> PolicyConfig:
    return PolicyConfig(PolicyKind.KLRU, m, k=k)


def lrum(m_vec: Sequence[int]) -> PolicyConfig:
    vec = tuple(int(v) for v in m_vec)
    return PolicyConfig(PolicyKind.LRUM, sum(vec), m_vec=vec)


def arc(m: int, seed: int = 0) -> PolicyConfig:
    return PolicyConfig(PolicyKind.ARC, m, rng_seed=seed)


def alru(m: int, beta: float | None = None, schedule: tuple[int, float] | None = None) -> PolicyConfig:
    return PolicyConfig(PolicyKind.ALRU, m, beta=beta, schedule=schedule)


def ideal_vector(dist: PopularityDist, m: int) -> CacheState:
    """The genie cache: the ``m`` most popular items, most popular first."""
    if not 1 <= m <= dist.n:
        raise InvalidParameterError(f"need 1 <= m <= n={dist.n}, got m={m}")
    order = np.argsort(-dist.probs, kind="stable") + 1
    return CacheState(levels=(Level(REAL, tuple(int(i) for i in order[:m])),))


@dataclass(frozen=True)
class RankWeights:
    """Element weights and position-swap costs for the weighted rank distance.

    ``w[i-1]`` weights item ``i``.  ``zeta[j]`` is the cost of swapping
    positions ``j-1`` and ``j`` (``j >= 2``); ``zeta_1`` is carried for
    completeness but the cumulative cost vector is pinned at ``q_0 = 0``,
    ``q_1 = 1``, ``q_j = q_{j-1} + zeta_j``.
    """

    w: np.ndarray
    zeta_1: float
    zeta: np.ndarray  # zeta[j] for positions j = 2..m, stored at index j-2
    q: np.ndarray = field(init=False)  # q[j] for positions j = 0..m

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        zeta = np.asarray(self.zeta, dtype=np.float64)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "zeta", zeta)
        if not np.all(w > 0):
            raise InvalidParameterError("element weights must be strictly positive")
        if np.any(zeta < 0):
            raise InvalidParameterError("swap costs must be non-negative")
        q = np.empty(zeta.size + 2, dtype=np.float64)
        q[0] = 0.0
        q[1] = 1.0
        np.cumsum(zeta, out=q[2:])
        q[2:] += 1.0
        q.flags.writeable = False
        w.flags.writeable = False
        zeta.flags.writeable = False
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def m(self) -> int:
        return self.q.size - 1


@dataclass(frozen=True)
class RequestStream:
    """A finite sequence of item requests, indexed from t = 1.

    ``timestamps`` carries wall-clock stamps when the stream came from a
    trace file; the analysis itself runs on the request index.
    ``epoch_count`` is filled by the modulated generator (number of
    re-ranking epochs that occurred).
    """

    items: np.ndarray
    timestamps: np.ndarray | None = None
    epoch_count: int | None = None

    def __post_init__(self):
        items = np.asarray(self.items, dtype=np.int64)
        object.__setattr__(self, "items", items)
        if items.ndim != 1:
            raise InvalidParameterError("items must be a 1-d sequence")
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps)
            if ts.shape != items.shape:
                raise InvalidParameterError("timestamps must align with items")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return int(self.items.size)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        """Yield (t, item) pairs with t starting at 1."""
        for t, item in enumerate(self.items.tolist(), start=1):
            yield t, item


def validate_state(state: CacheState, config: PolicyConfig) -> list[str]:
    """Check a state against the structural invariants of a policy.

    Returns a list of human-readable violations; an empty list means the
    state is well-formed.  Violations are data, not failures.
    """
    violations: list[str] = []
    for idx, level in enumerate(state.levels, start=1):
        if len(set(level.slots)) != len(level.slots):
            violations.append(f"duplicate-in-level: level {idx} holds {level.slots}")

    kinds = [level.kind for level in state.levels]
    sizes = [len(level.slots) for level in state.levels]

    def check_caps(caps: Sequence[int]):
        for idx, (size, cap) in enumerate(zip(sizes, caps), start=1):
            if size > cap:
                violations.append(f"over-capacity: level {idx} holds {size} > {cap}")

    if config.kind in (PolicyKind.LRU, PolicyKind.FIFO, PolicyKind.RANDOM, PolicyKind.CLIMB):
        if len(state.levels) != 1:
            violations.append(f"level-count-mismatch: expected 1 level, got {len(state.levels)}")
        elif kinds != [REAL]:
            violations.append("level-kind-mismatch: single-level policies use one real level")
        else:
            check_caps([config.m])
    elif config.kind == PolicyKind.KLRU:
        k = config.k or 1
        if len(state.levels) != k:
            violations.append(f"level-count-mismatch: expected {k} levels, got {len(state.levels)}")
        else:
            if kinds != [META] * (k - 1) + [REAL]:
                violations.append("level-kind-mismatch: KLRU uses k-1 meta levels then one real")
            check_caps([config.m] * k)
    elif config.kind == PolicyKind.LRUM:
        m_vec = config.m_vec or ()
        if len(state.levels) != len(m_vec):
            violations.append(
                f"level-count-mismatch: expected {len(m_vec)} levels, got {len(state.levels)}"
            )
        else:
            if any(kind != REAL for kind in kinds):
                violations.append("level-kind-mismatch: all LRUM levels are real")
            check_caps(m_vec)
            seen = [s for level in state.levels for s in level.slots]
            if len(set(seen)) != len(seen):
                violations.append("duplicate-across-levels: LRUM items are unique globally")
    elif config.kind == PolicyKind.ARC:
        if len(state.levels) != 4:
            violations.append("level-count-mismatch: ARC snapshots carry T1, T2, B1, B2")
        else:
            t1, t2, b1, b2 = sizes
            if kinds != [REAL, REAL, META, META]:
                violations.append("level-kind-mismatch: ARC is (real, real, meta, meta)")
            if t1 + t2 > config.m:
                violations.append(f"over-capacity: |T1|+|T2| = {t1 + t2} > m={config.m}")
            if t1 + b1 > config.m:
                violations.append(f"over-capacity: |T1|+|B1| = {t1 + b1} > m={config.m}")
            if t1 + t2 + b1 + b2 > 2 * config.m:
                violations.append("over-capacity: ARC directory exceeds 2m entries")
    elif config.kind == PolicyKind.ALRU:
        if len(state.levels) != 2 or kinds != [REAL, META]:
            violations.append("level-kind-mismatch: ALRU snapshots carry one real and one meta level")
        else:
            check_caps([config.m, config.m])
    return violations


def arrangement_count(n: int, m: int) -> int:
    """Number of ordered m-arrangements of n items."""
    return math.perm(n, m)
