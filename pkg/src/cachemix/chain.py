"""Exact Markov-chain analysis for small cache instances.

State enumeration, sparse transition kernels, stationary distributions
(product-form and numeric), time reversal, reversibility testing, hit
probability, and the finite arrangement enumeration that underlies the
meta-cache stationary structure.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import InvalidParameterError, NoConvergenceError, TooLargeError
from .model import PolicyConfig, PolicyKind, PopularityDist
from .policies import real_projection, step_klru, transition_branches

DEFAULT_STATE_CAP = 5_000_000

#: Matrix rows must sum to one within this slack.
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    """Enumerated reachable full states for one (policy, library) pair."""

    config: PolicyConfig
    n: int
    states: tuple
    index: dict = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def projection(self, i: int):
        """Ordered real content of state i (metric and hit-mass view)."""
        return real_projection(self.config, self.states[i])

    def projections(self):
        config = self.config
        return (real_projection(config, s) for s in self.states)


@dataclass(frozen=True)
class TransitionMatrix:
    """Sparse row-stochastic kernel over an enumerated state space."""

    space: StateSpace
    matrix: scipy.sparse.csr_matrix

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def min_positive(self) -> float:
        """Smallest positive off-diagonal transition probability."""
        coo = self.matrix.tocoo()
        off = coo.data[(coo.row != coo.col) & (coo.data > 0)]
        if off.size == 0:
            raise InvalidParameterError("kernel has no off-diagonal transitions")
        return float(off.min())


@dataclass(frozen=True)
class StationaryDist:
    """Stationary vector plus the residual it was accepted at."""

    space: StateSpace
    pi: np.ndarray
    residual: float = 0.0

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        object.__setattr__(self, "pi", pi)
        if np.any(pi < -1e-12):
            raise InvalidParameterError("stationary vector has negative mass")
        if abs(float(pi.sum()) - 1.0) > 1e-10:
            raise InvalidParameterError(f"stationary vector sums to {pi.sum()!r}")


# ---------------------------------------------------------------------------
# state enumeration


def _klru_seed(config: PolicyConfig, n: int):
    """A full state reached by flooding every item k times in id order."""
    k, m = config.k, config.m
    state = tuple(() for _ in range(k))
    for item in range(1, n + 1):
        for _ in range(k):
            state, _ = step_klru(state, item, k, m)
    if any(len(lv) != m for lv in state):
        raise InvalidParameterError(f"library n={n} too small to fill a {k}x{m} cache")
    return state


def enumerate_states(config: PolicyConfig, n: int, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    """All full states reachable under the policy, refused above ``cap``.

    Single-level policies and LRUM enumerate arrangements directly; KLRU
    takes the closure of the step function from a flooded seed state, which
    is exact because the seed is recurrent.  ALRU (fixed beta) enumerates
    ordered real arrangements paired with disjoint meta arrangements of any
    length; the meta tuple is read positionally (ghost segment M2 first),
    which is unambiguous whenever the meta is full or M2 has no capacity,
    the only regimes its recurrent dynamics visit.
    """
    kind = config.kind
    m = config.m
    if kind in (PolicyKind.LRU, PolicyKind.FIFO, PolicyKind.RANDOM, PolicyKind.CLIMB):
        count = math.perm(n, m)
        if count > cap:
            raise TooLargeError(f"{count} states exceed cap {cap}; use Monte Carlo")
        states = tuple(itertools.permutations(range(1, n + 1), m))
    elif kind == PolicyKind.LRUM:
        count = math.perm(n, m)
        if count > cap:
            raise TooLargeError(f"{count} states exceed cap {cap}; use Monte Carlo")
        m_vec = config.m_vec
        bounds = np.cumsum((0,) + m_vec)
        states = tuple(
            tuple(perm[bounds[i]:bounds[i + 1]] for i in range(len(m_vec)))
            for perm in itertools.permutations(range(1, n + 1), m)
        )
    elif kind == PolicyKind.KLRU:
        seed = _klru_seed(config, n)
        seen = {seed}
        frontier = [seed]
        items = range(1, n + 1)
        k = config.k
        while frontier:
            next_frontier = []
            for state in frontier:
                for item in items:
                    succ, _ = step_klru(state, item, k, m)
                    if succ not in seen:
                        seen.add(succ)
                        if len(seen) > cap:
                            raise TooLargeError(
                                f"KLRU closure exceeds cap {cap}; use Monte Carlo"
                            )
                        next_frontier.append(succ)
            frontier = next_frontier
        states = tuple(sorted(seen))
    elif kind == PolicyKind.ALRU:
        if config.beta is None or config.beta == 0.0:
            raise InvalidParameterError(
                "exact ALRU chains need a fixed beta > 0; beta = 0 is the KLRU(2) chain"
            )
        count = math.perm(n, m) * sum(math.perm(n - m, j) for j in range(m + 1))
        if count > cap:
            raise TooLargeError(f"{count} states exceed cap {cap}; use Monte Carlo")
        states_list = []
        for real in itertools.permutations(range(1, n + 1), m):
            rest = [i for i in range(1, n + 1) if i not in real]
            for j in range(m + 1):
                for meta in itertools.permutations(rest, j):
                    states_list.append((real, meta))
        states = tuple(states_list)
    else:
        raise InvalidParameterError(f"no exact state space for policy {kind}")
    index = {state: i for i, state in enumerate(states)}
    return StateSpace(config=config, n=n, states=states, index=index)


def build_transition_matrix(config: PolicyConfig, dist: PopularityDist,
                            space: StateSpace) -> TransitionMatrix:
    """Kernel entry (x, y) sums the request probabilities of items whose
    step maps x to y; RANDOM contributes a 1/m slot factor per target."""
    if dist.n != space.n:
        raise InvalidParameterError("distribution and space cover different libraries")
    probs = dist.probs
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    index = space.index
    for i, state in enumerate(space.states):
        for item in range(1, dist.n + 1):
            p = probs[item - 1]
            for succ, weight in transition_branches(config, state, item):
                j = index.get(succ)
                if j is None:
                    raise RuntimeError(
                        f"internal consistency: successor {succ!r} of state {state!r} "
                        "is outside the enumerated space"
                    )
                rows.append(i)
                cols.append(j)
                vals.append(p * weight)
    size = len(space)
    matrix = scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(size, size), dtype=np.float64
    )
    matrix.sum_duplicates()
    row_sums = np.asarray(matrix.sum(axis=1)).ravel()
    if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
        raise RuntimeError("internal consistency: kernel rows do not sum to one")
    return TransitionMatrix(space=space, matrix=matrix)


# ---------------------------------------------------------------------------
# closed-form stationary laws (the four classical single-level policies)

_CLASSICAL = (PolicyKind.LRU, PolicyKind.FIFO, PolicyKind.RANDOM, PolicyKind.CLIMB)


def _position_weight_normalizer(probs: tuple[float, ...], exponents: tuple[int, ...]) -> float:
    """Sum over injective position->item assignments of prod_i p(x_i)^e_i.

    Bitmask DP over the position set; O(n * 2^m * m), exact.
    """
    m = len(exponents)
    if m > 22:
        raise TooLargeError(f"product-form normalizer needs 2^{m} subsets; m is too large")
    full = 1 << m
    dp = np.zeros(full, dtype=np.float64)
    dp[0] = 1.0
    powers = [[p ** e for e in exponents] for p in probs]
    for pw in powers:
        new = dp.copy()
        for mask in range(full):
            base = dp[mask]
            if base == 0.0:
                continue
            for j in range(m):
                bit = 1 << j
                if not mask & bit:
                    new[mask | bit] += base * pw[j]
        dp = new
    return float(dp[full - 1])


@functools.lru_cache(maxsize=64)
def _normalizer(kind: PolicyKind, m: int, probs_key: bytes) -> float:
    probs = tuple(np.frombuffer(probs_key, dtype=np.float64))
    if kind in (PolicyKind.FIFO, PolicyKind.RANDOM):
        return _position_weight_normalizer(probs, (1,) * m)
    if kind == PolicyKind.CLIMB:
        return _position_weight_normalizer(probs, tuple(range(m, 0, -1)))
    raise InvalidParameterError(f"no product-form normalizer for {kind}")


def stationary_closed_form(kind: PolicyKind, dist: PopularityDist, state) -> float:
    """Steady-state probability of one ordered full single-level state.

    FIFO and RANDOM share one product form over ordered arrangements (their
    ordered chains have identical stationary laws); the hit-climbing policy
    weights position i with exponent m-i+1; the move-to-front law divides
    the plain product by its telescoping tail sums.
    """
    if kind not in _CLASSICAL:
        raise InvalidParameterError(f"no closed form for policy {kind}")
    slots = tuple(state)
    m = len(slots)
    p = dist.probs
    if kind == PolicyKind.LRU:
        num = 1.0
        denom = 1.0
        acc = 0.0
        for j, item in enumerate(slots):
            num *= p[item - 1]
            if j < m - 1:
                acc += p[item - 1]
                denom *= 1.0 - acc
        return num / denom
    if kind == PolicyKind.CLIMB:
        num = 1.0
        for i, item in enumerate(slots):
            num *= p[item - 1] ** (m - i)
    else:
        num = float(np.prod(p[np.asarray(slots) - 1]))
    return num / _normalizer(kind, m, dist.probs.tobytes())


def closed_form_vector(kind: PolicyKind, dist: PopularityDist, space: StateSpace) -> np.ndarray:
    return np.array([stationary_closed_form(kind, dist, s) for s in space.states])


def stationary_numeric(P: TransitionMatrix, tol: float = 1e-12,
                       max_iter: int = 10 ** 6, method: str = "auto") -> StationaryDist:
    """Stationary distribution by iteration, with the residual it achieved.

    Small chains square the dense kernel (power iteration with doubled
    step counts); large chains take the dominant left eigenvector by
    Arnoldi iteration and polish with plain power steps.  ``method`` can
    force ``"power"`` (plain iteration) or ``"dense"``/``"arnoldi"``.
    """
    matrix = P.matrix
    size = matrix.shape[0]
    if method == "auto":
        method = "dense" if size <= 2048 else "arnoldi"

    def finalize(pi: np.ndarray) -> StationaryDist:
        pi = np.maximum(pi, 0.0)
        pi = pi / pi.sum()
        residual = float(np.abs(pi @ matrix - pi).sum())
        if residual > 10.0 * tol:
            raise NoConvergenceError(
                f"stationary iteration stalled at residual {residual:.3e}", residual
            )
        return StationaryDist(space=P.space, pi=pi, residual=residual)

    if method == "dense":
        A = matrix.toarray()
        pi = np.full(size, 1.0 / size)
        for _ in range(64):
            pi = A.mean(axis=0)
            pi /= pi.sum()
            if np.abs(pi @ matrix - pi).sum() < tol:
                return finalize(pi)
            A = A @ A
            A /= A.sum(axis=1, keepdims=True)
        return finalize(pi)

    pi = np.full(size, 1.0 / size)
    if method == "arnoldi":
        try:
            vals, vecs = scipy.sparse.linalg.eigs(
                matrix.T.tocsc(), k=1, which="LM", v0=pi, maxiter=5000, tol=1e-14
            )
            cand = np.real(vecs[:, 0])
            if cand.sum() < 0:
                cand = -cand
            cand = np.maximum(cand, 0.0)
            if cand.sum() > 0:
                pi = cand / cand.sum()
        except scipy.sparse.linalg.ArpackError:
            pass
    elif method != "power":
        raise InvalidParameterError(f"unknown method {method!r}")

    for _ in range(max_iter):
        new = pi @ matrix
        if np.abs(new - pi).sum() < tol:
            return finalize(np.asarray(new).ravel())
        pi = np.asarray(new).ravel()
    residual = float(np.abs(pi @ matrix - pi).sum())
    raise NoConvergenceError(
        f"no convergence after {max_iter} iterations, residual {residual:.3e}", residual
    )


# ---------------------------------------------------------------------------
# hit probability


def hit_probability(sd: StationaryDist, dist: PopularityDist) -> float:
    """Long-run hit fraction: the stationary mean of cached request mass.

    Only the real content counts: the top level for KLRU, every level for
    LRUM, the whole cache for single-level policies.
    """
    probs = dist.probs
    total = 0.0
    for p_state, proj in zip(sd.pi, sd.space.projections()):
        mass = 0.0
        for item in proj:
            mass += probs[item - 1]
        total += float(p_state) * mass
    return total


def hit_probability_closed_form(kind: PolicyKind, dist: PopularityDist, m: int) -> float:
    """Exact stationary hit probability from the product forms alone.

    FIFO and RANDOM collapse to a sum over unordered item sets; the other
    two sum over ordered arrangements.
    """
    if kind not in _CLASSICAL:
        raise InvalidParameterError(f"no closed form for policy {kind}")
    n = dist.n
    if m > n:
        raise InvalidParameterError(f"need m <= n, got m={m} > n={n}")
    if m == n:
        return 1.0
    p = dist.probs
    if kind in (PolicyKind.FIFO, PolicyKind.RANDOM):
        z = 0.0
        acc = 0.0
        for combo in itertools.combinations(range(n), m):
            prod = 1.0
            mass = 0.0
            for i in combo:
                prod *= p[i]
                mass += p[i]
            z += prod
            acc += prod * mass
        return acc / z
    total = 0.0
    norm = 0.0
    for perm in itertools.permutations(range(n), m):
        if kind == PolicyKind.LRU:
            num = 1.0
            denom = 1.0
            partial = 0.0
            mass = 0.0
            for j, i in enumerate(perm):
                num *= p[i]
                mass += p[i]
                if j < m - 1:
                    partial += p[i]
                    denom *= 1.0 - partial
            w = num / denom
        else:
            w = 1.0
            mass = 0.0
            for j, i in enumerate(perm):
                w *= p[i] ** (m - j)
                mass += p[i]
        total += w * mass
        norm += w
    return total / norm


# ---------------------------------------------------------------------------
# reversal and reversibility


def time_reversal(P: TransitionMatrix, sd: StationaryDist) -> TransitionMatrix:
    """The reversed kernel P*(x, y) = pi(y) P(y, x) / pi(x)."""
    pi = sd.pi
    if np.min(pi) <= 0.0:
        raise InvalidParameterError("time reversal needs strictly positive stationary mass")
    inv = scipy.sparse.diags(1.0 / pi)
    d = scipy.sparse.diags(pi)
    reversed_matrix = (inv @ P.matrix.T @ d).tocsr()
    row_sums = np.asarray(reversed_matrix.sum(axis=1)).ravel()
    if np.max(np.abs(row_sums - 1.0)) > 1e-10:
        raise InvalidParameterError("reversal rows deviate from one; stationary vector is off")
    return TransitionMatrix(space=P.space, matrix=reversed_matrix)


def additive_reversibilization(P: TransitionMatrix, P_star: TransitionMatrix) -> TransitionMatrix:
    """(P + P*)/2: reversible, same stationary law, same spectral gap."""
    if P.space is not P_star.space and P.space.states != P_star.space.states:
        raise InvalidParameterError("kernels live on different state spaces")
    return TransitionMatrix(space=P.space, matrix=((P.matrix + P_star.matrix) * 0.5).tocsr())


def reversibilized(P: TransitionMatrix, sd: StationaryDist) -> TransitionMatrix:
    return additive_reversibilization(P, time_reversal(P, sd))


def is_reversible(P: TransitionMatrix, sd: StationaryDist, tol: float = 1e-10,
                  ) -> tuple[bool, tuple[int, int, float, float] | None]:
    """Detailed-balance check; on failure returns a witness edge.

    The witness is (x, y, pi(x)P(x,y), pi(y)P(y,x)) for the edge with the
    worst flow imbalance, which also seals the cycle criterion: any cycle
    through an unbalanced edge has unequal forward and backward products.
    """
    flows = (scipy.sparse.diags(sd.pi) @ P.matrix).tocoo()
    asym = (flows - flows.T).tocoo()
    if asym.nnz == 0:
        return True, None
    worst = np.argmax(np.abs(asym.data))
    gap = float(abs(asym.data[worst]))
    if gap <= tol:
        return True, None
    x, y = int(asym.row[worst]), int(asym.col[worst])
    forward = float(sd.pi[x]) * float(P.matrix[x, y])
    backward = float(sd.pi[y]) * float(P.matrix[y, x])
    return False, (x, y, forward, backward)


# ---------------------------------------------------------------------------
# arrangement enumeration (meta-cache stationary structure)


def _distinct_permutations(multiset: list[int]):
    counts: dict[int, int] = {}
    for x in multiset:
        counts[x] = counts.get(x, 0) + 1
    keys = sorted(counts)
    total = len(multiset)
    current: list[int] = []

    def rec():
        if len(current) == total:
            yield tuple(current)
            return
        for key in keys:
            if counts[key] > 0:
                counts[key] -= 1
                current.append(key)
                yield from rec()
                current.pop()
                counts[key] += 1

    yield from rec()


def _replay_promotion_moves(seq, k: int, m: int):
    """Replay a bare request sequence where a promotion moves the single
    copy of an item up one level; this is the sample-path reading under
    which the published arrangement counts come out."""
    levels: list[list[int]] = [[] for _ in range(k)]
    for item in seq:
        placed = False
        for l in range(k):
            lv = levels[l]
            if item in lv:
                lv.remove(item)
                if l == k - 1:
                    lv.insert(0, item)
                else:
                    up = levels[l + 1]
                    up.insert(0, item)
                    if len(up) > m:
                        up.pop()
                placed = True
                break
        if not placed:
            levels[0].insert(0, item)
            if len(levels[0]) > m:
                levels[0].pop()
    return tuple(tuple(lv) for lv in levels)


def enumerate_arrangements(state, config: PolicyConfig, cap: int = 12) -> list[tuple[int, ...]]:
    """All orderings of the final-request multiset that replay to ``state``.

    The multiset holds h(y) copies of each cached item y, where h(y) is the
    highest level containing y.  An ordering is valid when replaying it
    verbatim (no interleaved extras) reproduces the state from an empty
    cache.
    """
    if config.kind != PolicyKind.KLRU:
        raise InvalidParameterError("arrangements are defined for KLRU states")
    k, m = config.k, config.m
    levels = tuple(tuple(lv) for lv in state)
    if len(levels) != k:
        raise InvalidParameterError(f"state has {len(levels)} levels, config wants {k}")
    highest: dict[int, int] = {}
    for l, lv in enumerate(levels, start=1):
        for item in lv:
            highest[item] = max(highest.get(item, 0), l)
    multiset = [item for item, h in highest.items() for _ in range(h)]
    if len(multiset) > cap:
        raise TooLargeError(f"{len(multiset)} fixed requests exceed the cap {cap}")
    out = []
    for candidate in _distinct_permutations(multiset):
        if _replay_promotion_moves(candidate, k, m) == levels:
            out.append(candidate)
    return out


# ---------------------------------------------------------------------------
# export


def export_edges_csv(P: TransitionMatrix, path: str | Path) -> None:
    """Write the kernel as a `row,col,prob` edge list."""
    coo = P.matrix.tocoo()
    lines = ["row,col,prob"]
    for r, c, v in zip(coo.row, coo.col, coo.data):
        lines.append(f"{r},{c},{v!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
