"""Single-request transition functions for the eight caching algorithms.

Two layers live here.  The pure ``step_*`` functions map an immutable
state and a requested item to the successor state plus a hit flag; the
exact-chain analysis is built on them.  The ``*Runner`` classes are
single-owner mutable equivalents used by the simulators, where millions
of sequential steps make tuple rebuilding too expensive.

State conventions (position 1 = front):

- single level policies: a tuple of item ids, front first;
- KLRU: a tuple of k level tuples, meta levels first, the real level last,
  every level of capacity m.  An item may legitimately sit in several
  levels at once; levels are never deduplicated against each other;
- LRUM: a tuple of h level tuples, entry level first, top level last;
- ALRU: a pair (real, meta) of tuples, each of capacity m, partitioned
  into front/back segments by the mix parameter beta.
"""

from __future__ import annotations

import random

from .errors import InvalidParameterError
from .model import PolicyConfig, PolicyKind

Single = tuple[int, ...]
Leveled = tuple[Single, ...]


# ---------------------------------------------------------------------------
# single-level policies


def step_lru(state: Single, item: int, m: int) -> tuple[Single, bool]:
    """Move-to-front on hit; insert at front and evict the last on miss."""
    if item in state:
        i = state.index(item)
        return (item,) + state[:i] + state[i + 1:], True
    return ((item,) + state)[:m], False


def step_fifo(state: Single, item: int, m: int) -> tuple[Single, bool]:
    """Hits leave the queue untouched; misses behave exactly like LRU."""
    if item in state:
        return state, True
    return ((item,) + state)[:m], False


def step_random(state: Single, item: int, m: int, rng: random.Random) -> tuple[Single, bool]:
    """Hits do nothing; a miss overwrites one uniformly chosen slot."""
    if item in state:
        return state, True
    if len(state) < m:
        return state + (item,), False
    slot = rng.randrange(m)
    return state[:slot] + (item,) + state[slot + 1:], False


def step_climb(state: Single, item: int, m: int) -> tuple[Single, bool]:
    """Hits swap the item one position toward the front; misses take the
    last position, evicting its occupant."""
    if item in state:
        j = state.index(item)
        if j > 0:
            state = state[:j - 1] + (item, state[j - 1]) + state[j + 1:]
        return state, True
    if len(state) < m:
        return state + (item,), False
    return state[:-1] + (item,), False


# ---------------------------------------------------------------------------
# meta-cache and multi-level policies


def step_klru(state: Leveled, item: int, k: int, m: int) -> tuple[Leveled, bool]:
    """One KLRU step: move-to-front in every level that holds the item, and
    insert it at the front of every level whose predecessor held it.

    The request itself plays the role of presence in "level 0", so level 1
    records every request it does not already hold; an item can therefore
    sit in several levels at once and levels are never deduplicated.
    All membership tests are against the pre-request state, so a promotion
    earned this step does not cascade further up within the same step.
    """
    present = [item in lv for lv in state]
    hit = present[k - 1]
    new_levels = []
    for l in range(k):
        lv = state[l]
        if present[l]:
            i = lv.index(item)
            lv = (item,) + lv[:i] + lv[i + 1:]
        elif l == 0 or present[l - 1]:
            lv = ((item,) + lv)[:m]
        new_levels.append(lv)
    return tuple(new_levels), hit


def step_lrum(state: Leveled, item: int, m_vec: tuple[int, ...]) -> tuple[Leveled, bool]:
    """One LRUM step over the linear cache network.

    A hit below the top promotes the item to the front of the next level
    and demotes that level's last occupant to the front of the hit level.
    A hit in the top level is a move-to-front.  A miss enters the first
    level, evicting its last occupant.
    """
    h = len(m_vec)
    for i, lv in enumerate(state):
        if item in lv:
            j = lv.index(item)
            if i == h - 1:
                upper = (item,) + lv[:j] + lv[j + 1:]
                return state[:i] + (upper,) + state[i + 1:], True
            removed = lv[:j] + lv[j + 1:]
            upper = ((item,) + state[i + 1])
            if len(upper) > m_vec[i + 1]:
                demoted = upper[-1]
                upper = upper[:-1]
                removed = (demoted,) + removed
            return state[:i] + (removed, upper) + state[i + 2:], True
    entry = ((item,) + state[0])[:m_vec[0]]
    return (entry,) + state[1:], False


# ---------------------------------------------------------------------------
# ALRU


def alru_partition(beta: float, m: int) -> tuple[int, int, int, int, int, int, int, int]:
    """Segment bounds (c1, c2, c3, c4, m1, m2, m3, m4) for a given beta.

    Real positions c1..c2 form the protected segment C2 and c3..c4 the
    probation segment C1; meta positions m1..m2 form ghost list M2 and
    m3..m4 ghost list M1.  A lower bound above its upper bound (or 0)
    marks an empty segment.
    """
    b = int((1.0 - beta) * m)
    g = int(beta * m)
    c1, c2 = min(1, b), b
    c3, c4 = b + 1, max(m, b + 1)
    m1, m2 = min(1, g), g
    m3, m4 = g + 1, max(m, g + 1)
    return c1, c2, c3, c4, m1, m2, m3, m4


def alru_caps(beta: float, m: int) -> tuple[int, int]:
    """Capacities (b, g) of the protected real segment C2 and ghost M2."""
    return int((1.0 - beta) * m), int(beta * m)


def alru_beta(t: int, m: int, T: int, c: float) -> float:
    """Dynamic mix schedule: beta(t) = m / (m + max(0, t - T) / c).

    Starts at 1 (pure LRU) and decays toward 0 (pure two-level behavior).
    """
    if c <= 0:
        raise InvalidParameterError(f"schedule constant c must be > 0, got {c}")
    if T < 0:
        raise InvalidParameterError(f"schedule offset T must be >= 0, got {T}")
    return m / (m + max(0, t - T) / c)


def step_alru(state: tuple[Single, Single], item: int, beta: float, m: int,
              ) -> tuple[tuple[Single, Single], bool]:
    """One ALRU step on a (real, meta) pair for a fixed mix parameter.

    The real array is split into protected C2 = real[:b] and probation
    C1 = real[b:]; the meta array into ghost lists M2 = meta[:g] and
    M1 = meta[g:].  Fresh misses enter C1 (its overflow ghosts into M1),
    ghost hits re-enter at the front of C2 (its overflow ghosts into M2,
    whose overflow cascades into M1), and any real hit is a move to the
    cache front.  Inserting into a zero-capacity segment drops the entry,
    which at beta = 1 collapses the whole machine to plain LRU.

    At beta = 0 the intended behavior is exactly the two-level KLRU chain
    (promoted items keep their meta entry); use ``step_klru`` there.  This
    function rejects beta = 0 to keep that boundary explicit.
    """
    if beta <= 0.0:
        raise InvalidParameterError("beta = 0 delegates to step_klru(k=2); see AlruRunner")
    real, meta = state
    b, g = alru_caps(beta, m)
    cap_c1 = m - b
    cap_m1 = m - g

    def insert_m1(meta: Single, ghost: int) -> Single:
        if cap_m1 == 0:
            return meta
        m2_part, m1_part = meta[:g], meta[g:]
        m1_part = ((ghost,) + m1_part)[:cap_m1]
        return m2_part + m1_part

    def insert_m2(meta: Single, ghost: int) -> Single:
        if g == 0:
            return meta
        m2_part, m1_part = meta[:g], meta[g:]
        m2_part = (ghost,) + m2_part
        if len(m2_part) > g:
            overflow = m2_part[-1]
            m2_part = m2_part[:-1]
            m1_part = ((overflow,) + m1_part)[:cap_m1] if cap_m1 else m1_part
        return m2_part + m1_part

    if item in real:
        # cases (2a)/(2b): one uniform move to the cache front; the item
        # vacating position c2 slides into the c3 slot, so both segments
        # keep their size and nothing leaves the cache
        i = real.index(item)
        return ((item,) + real[:i] + real[i + 1:], meta), True

    if item in meta:
        # cases (1b)/(1c): ghost hit promotes into the protected front;
        # only C2 shifts, its last occupant ghosts into M2
        i = meta.index(item)
        meta = meta[:i] + meta[i + 1:]
        if b > 0:
            c2_part, c1_part = (item,) + real[:b], real[b:]
            if len(c2_part) > b:
                demoted = c2_part[-1]
                c2_part = c2_part[:-1]
                meta = insert_m2(meta, demoted)
        else:
            c2_part, c1_part = (), (item,) + real
            if len(c1_part) > cap_c1:
                demoted = c1_part[-1]
                c1_part = c1_part[:-1]
                meta = insert_m1(meta, demoted)
        return (c2_part + c1_part, meta), False

    # case (1a): fresh miss enters the probation front, C1 overflow
    # ghosts into M1 (dropped when M1 has no capacity, i.e. plain LRU)
    c2_part, c1_part = real[:b], (item,) + real[b:]
    if len(c1_part) > cap_c1:
        demoted = c1_part[-1]
        c1_part = c1_part[:-1]
        meta = insert_m1(meta, demoted)
    return (c2_part + c1_part, meta), False


# ---------------------------------------------------------------------------
# transition enumeration for the exact chains


def transition_branches(config: PolicyConfig, state, item: int):
    """All (successor, weight) branches for one request.

    Deterministic policies yield a single branch of weight 1; RANDOM
    spreads a miss uniformly over the m replacement slots.
    """
    kind = config.kind
    if kind == PolicyKind.LRU:
        return [(step_lru(state, item, config.m)[0], 1.0)]
    if kind == PolicyKind.FIFO:
        return [(step_fifo(state, item, config.m)[0], 1.0)]
    if kind == PolicyKind.CLIMB:
        return [(step_climb(state, item, config.m)[0], 1.0)]
    if kind == PolicyKind.RANDOM:
        if item in state:
            return [(state, 1.0)]
        if len(state) < config.m:
            return [(state + (item,), 1.0)]
        w = 1.0 / config.m
        return [
            (state[:slot] + (item,) + state[slot + 1:], w)
            for slot in range(config.m)
        ]
    if kind == PolicyKind.KLRU:
        return [(step_klru(state, item, config.k, config.m)[0], 1.0)]
    if kind == PolicyKind.LRUM:
        return [(step_lrum(state, item, config.m_vec)[0], 1.0)]
    if kind == PolicyKind.ALRU:
        if config.beta is None:
            raise InvalidParameterError("exact ALRU chains need a fixed beta")
        if config.beta == 0.0:
            raise InvalidParameterError("use a KLRU(k=2) chain for beta = 0")
        return [(step_alru(state, item, config.beta, config.m)[0], 1.0)]
    raise InvalidParameterError(f"no exact chain for policy {kind}")


def real_projection(config: PolicyConfig, state) -> Single:
    """The ordered real-item content of a chain state, best position first.

    KLRU counts only its top (real) level.  LRUM concatenates levels top
    first, so position 1 is the front of the top level, matching the CLIMB
    reduction.  ALRU's real array is already front-first.
    """
    kind = config.kind
    if kind in (PolicyKind.LRU, PolicyKind.FIFO, PolicyKind.RANDOM, PolicyKind.CLIMB):
        return state
    if kind == PolicyKind.KLRU:
        return state[-1]
    if kind == PolicyKind.LRUM:
        out: list[int] = []
        for lv in reversed(state):
            out.extend(lv)
        return tuple(out)
    if kind == PolicyKind.ALRU:
        return state[0]
    raise InvalidParameterError(f"no chain-state projection for policy {kind}")


# ---------------------------------------------------------------------------
# mutable runners for long simulations


class LruRunner:
    def __init__(self, config: PolicyConfig):
        self.m = config.m
        self.items: list[int] = []

    def step(self, item: int) -> bool:
        items = self.items
        if item in items:
            items.remove(item)
            items.insert(0, item)
            return True
        items.insert(0, item)
        if len(items) > self.m:
            items.pop()
        return False

    def real_items(self) -> list[int]:
        return list(self.items)


class FifoRunner(LruRunner):
    def step(self, item: int) -> bool:
        items = self.items
        if item in items:
            return True
        items.insert(0, item)
        if len(items) > self.m:
            items.pop()
        return False


class RandomRunner(LruRunner):
    def __init__(self, config: PolicyConfig, rng: random.Random | None = None):
        super().__init__(config)
        self.rng = rng if rng is not None else random.Random(config.rng_seed)

    def step(self, item: int) -> bool:
        items = self.items
        if item in items:
            return True
        if len(items) < self.m:
            items.append(item)
        else:
            items[self.rng.randrange(self.m)] = item
        return False


class ClimbRunner(LruRunner):
    def step(self, item: int) -> bool:
        items = self.items
        if item in items:
            j = items.index(item)
            if j > 0:
                items[j - 1], items[j] = items[j], items[j - 1]
            return True
        if len(items) < self.m:
            items.append(item)
        else:
            items[-1] = item
        return False


class KlruRunner:
    def __init__(self, config: PolicyConfig):
        self.k = config.k or 1
        self.m = config.m
        self.levels: list[list[int]] = [[] for _ in range(self.k)]

    def step(self, item: int) -> bool:
        levels = self.levels
        m = self.m
        present = [item in lv for lv in levels]
        hit = present[-1]
        for l in range(self.k):
            lv = levels[l]
            if present[l]:
                lv.remove(item)
                lv.insert(0, item)
            elif l == 0 or present[l - 1]:
                lv.insert(0, item)
                if len(lv) > m:
                    lv.pop()
        return hit

    def real_items(self) -> list[int]:
        return list(self.levels[-1])


class LrumRunner:
    def __init__(self, config: PolicyConfig):
        self.m_vec = list(config.m_vec or ())
        self.levels: list[list[int]] = [[] for _ in self.m_vec]

    def step(self, item: int) -> bool:
        levels = self.levels
        h = len(levels)
        for i in range(h):
            lv = levels[i]
            if item in lv:
                lv.remove(item)
                if i == h - 1:
                    lv.insert(0, item)
                else:
                    upper = levels[i + 1]
                    upper.insert(0, item)
                    if len(upper) > self.m_vec[i + 1]:
                        lv.insert(0, upper.pop())
                return True
        entry = levels[0]
        entry.insert(0, item)
        if len(entry) > self.m_vec[0]:
            entry.pop()
        return False

    def real_items(self) -> list[int]:
        out: list[int] = []
        for lv in reversed(self.levels):
            out.extend(lv)
        return out


class ArcRunner:
    """Adaptive replacement cache with ghost lists B1/B2 and target p.

    Follows the published replacement algorithm: four request cases plus
    the REPLACE subroutine; the adaptation target starts at 0 and is
    clamped to [0, m].  Front of each list is the MRU end.
    """

    def __init__(self, config: PolicyConfig):
        self.m = config.m
        self.t1: list[int] = []
        self.t2: list[int] = []
        self.b1: list[int] = []
        self.b2: list[int] = []
        self.p = 0.0

    def _replace(self, item: int) -> None:
        t1 = self.t1
        if t1 and (len(t1) > self.p or (item in self.b2 and len(t1) == self.p)):
            self.b1.insert(0, t1.pop())
        elif self.t2:
            self.b2.insert(0, self.t2.pop())
        elif t1:
            self.b1.insert(0, t1.pop())

    def step(self, item: int) -> bool:
        m = self.m
        if item in self.t1:
            self.t1.remove(item)
            self.t2.insert(0, item)
            return True
        if item in self.t2:
            self.t2.remove(item)
            self.t2.insert(0, item)
            return True
        if item in self.b1:
            self.p = min(float(m), self.p + max(1.0, len(self.b2) / len(self.b1)))
            self._replace(item)
            self.b1.remove(item)
            self.t2.insert(0, item)
            return False
        if item in self.b2:
            self.p = max(0.0, self.p - max(1.0, len(self.b1) / len(self.b2)))
            self._replace(item)
            self.b2.remove(item)
            self.t2.insert(0, item)
            return False
        l1 = len(self.t1) + len(self.b1)
        if l1 == m:
            if len(self.t1) < m:
                self.b1.pop()
                self._replace(item)
            else:
                self.t1.pop()
        else:
            total = l1 + len(self.t2) + len(self.b2)
            if total >= m:
                if total == 2 * m:
                    self.b2.pop()
                self._replace(item)
        self.t1.insert(0, item)
        return False

    def real_items(self) -> list[int]:
        """Real content, frequency segment first (its front is position 1)."""
        return self.t2 + self.t1


class AlruRunner:
    """ALRU with a fixed beta or the dynamic beta schedule.

    Keeps the four segments as explicit lists.  When beta moves, segment
    capacities are relabeled in place: the adjacent boundary entries slide
    between C2/C1 and between M2/M1, so no cached data is ever fabricated
    or dropped by a repartition.  beta = 0 is delegated to the exact
    two-level KLRU machine, which is the defined extreme of the policy.
    """

    def __init__(self, config: PolicyConfig):
        self.m = config.m
        self.schedule = config.schedule
        self.t = 0
        beta = config.beta if config.beta is not None else 1.0
        self._delegate: KlruRunner | None = None
        if config.schedule is None and beta == 0.0:
            self._delegate = KlruRunner(PolicyConfig(PolicyKind.KLRU, config.m, k=2))
            return
        self.beta = beta
        self.b, self.g = alru_caps(beta, config.m)
        self.c2: list[int] = []
        self.c1: list[int] = []
        self.m2: list[int] = []
        self.m1: list[int] = []

    def _relabel(self, beta: float) -> None:
        b_new, g_new = alru_caps(beta, self.m)
        if b_new != self.b:
            while len(self.c2) > b_new:
                self.c1.insert(0, self.c2.pop())
            while len(self.c1) > self.m - b_new and self.c1 and len(self.c2) < b_new:
                self.c2.append(self.c1.pop(0))
            self.b = b_new
        if g_new != self.g:
            while len(self.m2) > g_new:
                self.m1.insert(0, self.m2.pop())
            while len(self.m1) > self.m - g_new and self.m1 and len(self.m2) < g_new:
                self.m2.append(self.m1.pop(0))
            self.g = g_new
        self.beta = beta

    def _insert_m1(self, ghost: int) -> None:
        if self.m - self.g == 0:
            return
        self.m1.insert(0, ghost)
        if len(self.m1) > self.m - self.g:
            self.m1.pop()

    def _insert_m2(self, ghost: int) -> None:
        if self.g == 0:
            return
        self.m2.insert(0, ghost)
        if len(self.m2) > self.g:
            self._insert_m1(self.m2.pop())

    def step(self, item: int) -> bool:
        if self._delegate is not None:
            return self._delegate.step(item)
        self.t += 1
        if self.schedule is not None:
            T, c = self.schedule
            self._relabel(alru_beta(self.t, self.m, T, c))
        b = self.b
        if item in self.c2:
            self.c2.remove(item)
            self.c2.insert(0, item)
            return True
        if item in self.c1:
            self.c1.remove(item)
            if b > 0:
                self.c2.insert(0, item)
                if len(self.c2) > b:
                    self.c1.insert(0, self.c2.pop())
            else:
                self.c1.insert(0, item)
            return True
        promoted = False
        if item in self.m1:
            self.m1.remove(item)
            promoted = True
        elif item in self.m2:
            self.m2.remove(item)
            promoted = True
        if promoted:
            if b > 0:
                self.c2.insert(0, item)
                if len(self.c2) > b:
                    self._insert_m2(self.c2.pop())
            else:
                self.c1.insert(0, item)
                if len(self.c1) > self.m - b:
                    self._insert_m1(self.c1.pop())
            return False
        if self.m - b > 0:
            self.c1.insert(0, item)
            if len(self.c1) > self.m - b:
                self._insert_m1(self.c1.pop())
        else:
            self._insert_m1(item)
        return False

    def real_items(self) -> list[int]:
        if self._delegate is not None:
            return self._delegate.real_items()
        return self.c2 + self.c1


def make_runner(config: PolicyConfig, rng: random.Random | None = None):
    kind = config.kind
    if kind == PolicyKind.LRU:
        return LruRunner(config)
    if kind == PolicyKind.FIFO:
        return FifoRunner(config)
    if kind == PolicyKind.RANDOM:
        return RandomRunner(config, rng)
    if kind == PolicyKind.CLIMB:
        return ClimbRunner(config)
    if kind == PolicyKind.KLRU:
        return KlruRunner(config)
    if kind == PolicyKind.LRUM:
        return LrumRunner(config)
    if kind == PolicyKind.ARC:
        return ArcRunner(config)
    if kind == PolicyKind.ALRU:
        return AlruRunner(config)
    raise InvalidParameterError(f"unknown policy kind {kind}")
