"""Rank distances between cache occupancies and distribution distances.

A cache occupancy is read as a partial permutation sigma over the library:
``sigma(i)`` is the cached position of item ``i`` (1 = front) and 0 means
absent.  The weighted pairwise-inversion distance penalises a pair only
when the two occupancies order it oppositely, the optimistic convention
for missing order information; position 0 enters the cost formulas
literally with cumulative cost ``q_0 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, TooLargeError
from .model import RankWeights


def position_map(slots, n: int) -> np.ndarray:
    """sigma as an array indexed by item id (entry 0 unused); 0 = absent."""
    sigma = np.zeros(n + 1, dtype=np.int64)
    for pos, item in enumerate(slots, start=1):
        sigma[item] = pos
    return sigma


def _order_keys(sigma: np.ndarray) -> np.ndarray:
    """Comparison keys: cached positions as-is, absent items after everything.

    A top-m occupancy is known to rank every cached item ahead of every
    absent one, so for order comparisons absence acts like a position
    beyond m; pairs absent on both sides tie and carry no penalty, the
    optimistic reading.  Movement costs are a separate matter and keep the
    literal q_0 = 0 anchor.
    """
    keys = sigma.astype(np.float64)
    keys[keys == 0] = np.inf
    return keys


def kendall_classic(sigma1: np.ndarray, sigma2: np.ndarray) -> int:
    """Count of pairs ordered one way in sigma1 and the opposite way in sigma2."""
    if sigma1.shape != sigma2.shape:
        raise InvalidParameterError("position maps must cover the same library")
    o1 = _order_keys(sigma1[1:])
    o2 = _order_keys(sigma2[1:])
    gt1 = o1[:, None] > o1[None, :]
    lt2 = o2[:, None] < o2[None, :]
    return int(np.count_nonzero(gt1 & lt2))


def _qbar(sigma1: np.ndarray, sigma2: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Per-item average move cost (q[s1]-q[s2])/(s1-s2), 1 when unmoved."""
    delta = sigma1 - sigma2
    moved = delta != 0
    out = np.ones(sigma1.shape, dtype=np.float64)
    out[moved] = (q[sigma1[moved]] - q[sigma2[moved]]) / delta[moved]
    return out


def kendall_generalized(sigma1: np.ndarray, sigma2: np.ndarray,
                        weights: RankWeights) -> float:
    """Weighted inversion distance with element weights and position costs.

    Sums w_i * w_j * qbar_i * qbar_j over pairs with sigma1(i) < sigma1(j)
    and sigma2(i) > sigma2(j).  With unit element weights and unit swap
    costs it reduces to the classical pair count.
    """
    if sigma1.shape != sigma2.shape:
        raise InvalidParameterError("position maps must cover the same library")
    n = sigma1.size - 1
    if weights.n != n:
        raise InvalidParameterError(f"weights cover {weights.n} items, library has {n}")
    s1 = sigma1[1:]
    s2 = sigma2[1:]
    qbar = _qbar(s1, s2, weights.q)
    wq = weights.w * qbar
    o1 = _order_keys(s1)
    o2 = _order_keys(s2)
    lt1 = o1[:, None] < o1[None, :]
    gt2 = o2[:, None] > o2[None, :]
    mask = lt1 & gt2
    return float(np.einsum("i,j,ij->", wq, wq, mask))


def unit_weights(n: int, m: int) -> RankWeights:
    """w = 1, zeta = 1 (q_j = j): the classical unweighted distance."""
    return RankWeights(w=np.ones(n), zeta_1=1.0, zeta=np.ones(max(m - 1, 0)))


def default_weights(n: int, m: int) -> RankWeights:
    """The figure-reproduction weights: w_i = n-i+1, zeta_1 = 0.1, zeta_j = ln j.

    Values are only meaningful relative to each other, so analyses built on
    them compare orderings across policies rather than absolute magnitudes.
    """
    w = np.arange(n, 0, -1, dtype=np.float64)
    zeta = np.log(np.arange(2, m + 1, dtype=np.float64))
    return RankWeights(w=w, zeta_1=0.1, zeta=zeta)


def presence_weights(n: int, m: int) -> RankWeights:
    """Hit/miss-only mode: flat position costs (zeta = 0, q_j = 1 for j >= 1).

    Reorderings inside the cache then cost nothing; only presence/absence
    inversions contribute, so states with identical content are at
    distance zero, the equivalence-class reading.
    """
    return RankWeights(w=np.ones(n), zeta_1=0.0, zeta=np.zeros(max(m - 1, 0)))


def tv_distance(mu: np.ndarray, nu: np.ndarray) -> float:
    """Total variation distance: half the L1 distance."""
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if mu.shape != nu.shape:
        raise InvalidParameterError(f"length mismatch: {mu.shape} vs {nu.shape}")
    return 0.5 * float(np.abs(mu - nu).sum())


def tau_distance(pi: np.ndarray, projections, n: int, weights: RankWeights,
                 cstar_slots) -> float:
    """Average weighted rank distance from a state distribution to the ideal.

    ``projections`` yields, per state, the ordered real content that the
    metric sees (the real level for meta-cache policies, all real content
    otherwise).  Because the target is a point mass, the optimal-transport
    infimum collapses to this average.
    """
    sigma_star = position_map(cstar_slots, n)
    cache: dict[tuple, float] = {}
    total = 0.0
    for p, proj in zip(pi, projections):
        key = tuple(proj)
        k = cache.get(key)
        if k is None:
            k = kendall_generalized(position_map(key, n), sigma_star, weights)
            cache[key] = k
        total += float(p) * k
    return total


@dataclass(frozen=True)
class KappaResult:
    """Diameter estimate; heuristic mode is only a lower bound."""

    value: float
    exact: bool

    @property
    def mode(self) -> str:
        return "exact" if self.exact else "heuristic-lower-bound"


def kappa_diameter(projections, n: int, weights: RankWeights, mode: str = "exact",
                   pair_cap: int = 10 ** 8, samples: int = 2000, seed: int = 0,
                   ) -> KappaResult:
    """Diameter of the occupancy space under the weighted rank distance.

    ``projections`` is the collection of distinct real-content orderings.
    Exact mode scans every ordered pair (refused beyond ``pair_cap``
    evaluations); heuristic mode scans a structured candidate set plus
    random pairs and reports a lower bound.
    """
    distinct = sorted({tuple(p) for p in projections})
    count = len(distinct)
    if count <= 1:
        return KappaResult(0.0, True)
    sigmas = [position_map(p, n) for p in distinct]
    if mode == "exact":
        if count * count > pair_cap:
            raise TooLargeError(
                f"{count}^2 pair evaluations exceed the cap {pair_cap}; use heuristic mode"
            )
        best = 0.0
        for i in range(count):
            for j in range(i + 1, count):
                d = kendall_generalized(sigmas[i], sigmas[j], weights)
                if d > best:
                    best = d
                d = kendall_generalized(sigmas[j], sigmas[i], weights)
                if d > best:
                    best = d
        return KappaResult(best, True)
    if mode != "heuristic":
        raise InvalidParameterError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    m = len(distinct[0])
    structured = [
        tuple(range(1, m + 1)),
        tuple(range(n, n - m, -1)),
        tuple(range(m, 0, -1)),
        tuple(range(n - m + 1, n + 1)),
    ]
    candidates = [position_map(c, n) for c in structured if len(set(c)) == m]
    best = 0.0
    for a in candidates:
        for b in candidates:
            best = max(best, kendall_generalized(a, b, weights))
    for _ in range(samples):
        i = int(rng.integers(count))
        j = int(rng.integers(count))
        best = max(best, kendall_generalized(sigmas[i], sigmas[j], weights))
    return KappaResult(best, False)
