"""Mixing-time measurement and bounds, plus the combined learning error.

Empirical quantities (t-step evolution, sup-TV mixing time, spectral gap,
conductance, congestion) are computed on explicit small kernels; the bound
evaluators turn stationary extremes and the minimal transition probability
into the conductance-based mixing-time upper bound and its popularity-law
exponents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .chain import StationaryDist, TransitionMatrix, reversibilized
from .errors import (
    InvalidParameterError,
    InvalidPathsError,
    NoConvergenceError,
    TooLargeError,
)
from .model import PopularityDist

ADVERSARIAL = "adversarial"


def evolve(P: TransitionMatrix, start: int, t: int) -> np.ndarray:
    """The t-step distribution from a point mass at state ``start``."""
    if t < 0:
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    mu = np.zeros(P.n_states)
    mu[start] = 1.0
    for _ in range(t):
        mu = mu @ P.matrix
    return np.asarray(mu).ravel()


@dataclass(frozen=True)
class MixingReport:
    """Empirical mixing summary: sup-TV trajectory and the first-passage t.

    ``exact_sup`` records whether the start set covered every state (only
    then is the sup over starts exact; otherwise the trajectory is a lower
    bound on the true worst case).
    """

    epsilon: float
    t_mix: int
    sup_tv: np.ndarray  # sup_tv[t] for t = 0..t_mix
    per_start_tv: np.ndarray  # shape (t_mix+1, n_starts)
    starts: tuple[int, ...]
    start_mode: str
    exact_sup: bool


def empirical_mixing_time(P: TransitionMatrix, sd: StationaryDist, epsilon: float,
                          starts="all", max_t: int = 10 ** 6) -> MixingReport:
    """Smallest t with max-over-starts TV(mu_t, pi) <= epsilon.

    The scan is incremental; the sup envelope is checked to be monotone
    non-increasing (a coupling fact for the exact sup) before reporting.
    ``starts`` is "all", "adversarial" (the minimal-pi state plus the
    maximal-pi state), or an explicit index list.
    """
    if not 0.0 < epsilon <= 1.0:
        raise InvalidParameterError(f"epsilon must be in (0, 1], got {epsilon}")
    size = P.n_states
    if isinstance(starts, str):
        if starts == "all":
            start_list = tuple(range(size))
            mode = "all"
        elif starts == ADVERSARIAL:
            start_list = (int(np.argmin(sd.pi)), int(np.argmax(sd.pi)))
            mode = ADVERSARIAL
        else:
            raise InvalidParameterError(f"unknown start mode {starts!r}")
    else:
        start_list = tuple(int(s) for s in starts)
        mode = "custom"
        if not start_list:
            raise InvalidParameterError("need at least one start state")
    exact = mode == "all"

    pi = sd.pi
    mu = np.zeros((len(start_list), size))
    for row, s in enumerate(start_list):
        mu[row, s] = 1.0
    per_start = [0.5 * np.abs(mu - pi).sum(axis=1)]
    sup = [float(per_start[0].max())]
    t = 0
    while sup[-1] > epsilon:
        if t >= max_t:
            raise NoConvergenceError(
                f"sup-TV still {sup[-1]:.3e} > {epsilon} after {max_t} steps", sup[-1]
            )
        mu = mu @ P.matrix
        t += 1
        tv = 0.5 * np.abs(mu - pi).sum(axis=1)
        per_start.append(tv)
        sup.append(float(tv.max()))
    sup_arr = np.asarray(sup)
    if exact and np.any(np.diff(sup_arr) > 1e-9):
        raise RuntimeError("sup-TV envelope is not monotone; kernel or pi is inconsistent")
    return MixingReport(
        epsilon=epsilon,
        t_mix=t,
        sup_tv=sup_arr,
        per_start_tv=np.asarray(per_start),
        starts=start_list,
        start_mode=mode,
        exact_sup=exact,
    )


# ---------------------------------------------------------------------------
# spectral gap, conductance, congestion


def _detailed_balance_gap(P: TransitionMatrix, pi: np.ndarray) -> float:
    flows = scipy.sparse.diags(pi) @ P.matrix
    asym = flows - flows.T
    return float(np.abs(asym.data).max()) if asym.nnz else 0.0


def spectral_gap(P: TransitionMatrix, sd: StationaryDist, tol: float = 1e-8) -> float:
    """1 - lambda_2 of a reversible kernel (symmetrised in the pi metric).

    Callers with a non-reversible kernel reversibilize first; the additive
    reversibilization preserves both the stationary law and the gap.
    """
    pi = sd.pi
    if np.min(pi) <= 0.0:
        raise InvalidParameterError("spectral gap needs strictly positive stationary mass")
    if _detailed_balance_gap(P, pi) > tol:
        raise InvalidParameterError(
            "kernel is not reversible for this stationary vector; apply "
            "additive reversibilization first"
        )
    size = P.n_states
    sqrt_pi = np.sqrt(pi)
    sym = scipy.sparse.diags(sqrt_pi) @ P.matrix @ scipy.sparse.diags(1.0 / sqrt_pi)
    if size <= 2500:
        sym_dense = 0.5 * (sym.toarray() + sym.toarray().T)
        vals = np.linalg.eigvalsh(sym_dense)
        lam2 = float(vals[-2])
    else:
        sym = 0.5 * (sym + sym.T)
        vals = scipy.sparse.linalg.eigsh(sym.tocsc(), k=2, which="LA",
                                         return_eigenvectors=False)
        lam2 = float(np.sort(vals)[0])
    return 1.0 - lam2


CONDUCTANCE_CAP = 24


def conductance_exact(P: TransitionMatrix, sd: StationaryDist,
                      cap: int = CONDUCTANCE_CAP) -> float:
    """Worst-set conductance min_{pi(S) <= 1/2} Q(S, S^c) / pi(S).

    Exhaustive over all 2^size subsets, vectorised over bitmask arrays;
    refused beyond ``cap`` states.
    """
    size = P.n_states
    if size > cap:
        raise TooLargeError(f"{size} states need 2^{size} subsets; cap is {cap}")
    if size < 2:
        raise InvalidParameterError("conductance needs at least two states")
    pi = sd.pi
    total = 1 << size
    masks = np.arange(total, dtype=np.int64)

    def membership(i: int) -> np.ndarray:
        return ((masks >> i) & 1).astype(np.int8)

    pi_mass = np.zeros(total)
    for i in range(size):
        pi_mass += pi[i] * membership(i)
    flow = np.zeros(total)
    coo = (scipy.sparse.diags(pi) @ P.matrix).tocoo()
    for x, y, q in zip(coo.row, coo.col, coo.data):
        if x == y or q == 0.0:
            continue
        flow += q * (membership(x) & (1 - membership(y)))
    valid = (masks != 0) & (masks != total - 1) & (pi_mass <= 0.5 + 1e-15)
    if not np.any(valid):
        raise InvalidParameterError("no subset with stationary mass <= 1/2")
    ratios = flow[valid] / pi_mass[valid]
    return float(ratios.min())


def _lexicographic_bfs_paths(P: TransitionMatrix) -> list[list[int]]:
    """Per-source BFS parents over positive off-diagonal edges, visiting
    neighbours in state-index order so paths are deterministic."""
    size = P.n_states
    adjacency: list[list[int]] = [[] for _ in range(size)]
    coo = P.matrix.tocoo()
    for x, y, v in zip(coo.row, coo.col, coo.data):
        if x != y and v > 0.0:
            adjacency[x].append(y)
    for nbrs in adjacency:
        nbrs.sort()
    parents: list[list[int]] = []
    for src in range(size):
        parent = [-1] * size
        parent[src] = src
        queue = [src]
        while queue:
            nxt = []
            for u in queue:
                for v in adjacency[u]:
                    if parent[v] == -1:
                        parent[v] = u
                        nxt.append(v)
            queue = nxt
        parents.append(parent)
    return parents


def congestion(P: TransitionMatrix, sd: StationaryDist, paths=None) -> float:
    """Worst edge loading over a canonical path family.

    For each ordered state pair (x, y), x != y, the default family takes
    the BFS shortest path with lexicographic tie-break; the loading of an
    edge is the sum of pi(x) pi(y) over paths through it, divided by its
    ergodic flow.
    """
    size = P.n_states
    pi = sd.pi
    if paths is None:
        parents = _lexicographic_bfs_paths(P)

        def path_edges(x: int, y: int):
            parent = parents[x]
            if parent[y] == -1:
                raise InvalidPathsError(f"no positive-probability path from {x} to {y}")
            edges = []
            v = y
            while v != x:
                u = parent[v]
                edges.append((u, v))
                v = u
            return edges
    else:
        table = {(x, y): list(zip(p[:-1], p[1:])) for (x, y), p in paths.items()}

        def path_edges(x: int, y: int):
            try:
                return table[(x, y)]
            except KeyError:
                raise InvalidPathsError(f"path family misses the pair ({x}, {y})") from None

    load: dict[tuple[int, int], float] = {}
    for x in range(size):
        for y in range(size):
            if x == y:
                continue
            w = float(pi[x] * pi[y])
            for edge in path_edges(x, y):
                load[edge] = load.get(edge, 0.0) + w
    dense = P.matrix.toarray() if size <= 4000 else None
    rho = 0.0
    for (u, v), total in load.items():
        p_uv = float(dense[u, v]) if dense is not None else float(P.matrix[u, v])
        q = float(pi[u]) * p_uv
        if q <= 0.0:
            raise InvalidPathsError(f"path family uses the zero-probability edge ({u}, {v})")
        rho = max(rho, total / q)
    return rho


def cheeger_check(P: TransitionMatrix, sd: StationaryDist,
                  tol: float = 1e-9) -> tuple[float, float, bool]:
    """Verify Phi^2/2 <= gamma <= 2 Phi on the reversibilized kernel.

    A False flag signals an implementation bug, not a property of the
    chain: the inequality is a theorem.
    """
    R = reversibilized(P, sd)
    phi = conductance_exact(R, sd)
    gamma = spectral_gap(R, sd)
    ok = (phi * phi / 2.0 - tol <= gamma <= 2.0 * phi + tol)
    return phi, gamma, ok


# ---------------------------------------------------------------------------
# mixing-time bounds


@dataclass(frozen=True)
class BoundInputs:
    """Stationary extremes and kernel floor feeding the mixing bound."""

    pi_max: float
    pi_min: float
    p_min: float
    gamma: int  # number of states
    epsilon: float
    reversible: bool

    def __post_init__(self):
        if not 0.0 < self.pi_min <= self.pi_max <= 1.0:
            raise InvalidParameterError("need 0 < pi_min <= pi_max <= 1")
        if not 0.0 < self.p_min <= 1.0:
            raise InvalidParameterError("need 0 < p_min <= 1")
        if self.gamma < 2:
            raise InvalidParameterError("need at least two states")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidParameterError("epsilon must be in (0, 1)")


def mixing_bound(inputs: BoundInputs) -> float:
    """Conductance-based mixing-time upper bound.

    8 pi_max^4 Gamma^4 / (pi_min P_min)^2 * (ln 1/pi_min + ln 1/eps); a
    non-reversible kernel pays an extra factor through P_min/2, since the
    reversibilized kernel keeps at least half of every transition.
    """
    p_eff = inputs.p_min if inputs.reversible else inputs.p_min / 2.0
    lead = 8.0 * inputs.pi_max ** 4 * float(inputs.gamma) ** 4 / (inputs.pi_min * p_eff) ** 2
    return lead * (math.log(1.0 / inputs.pi_min) + math.log(1.0 / inputs.epsilon))


def bound_inputs_from_chain(P: TransitionMatrix, sd: StationaryDist, epsilon: float = 0.5,
                            reversible: bool | None = None) -> BoundInputs:
    """Exact bound inputs read off an explicit kernel and stationary law."""
    from .chain import is_reversible

    if reversible is None:
        reversible, _ = is_reversible(P, sd)
    return BoundInputs(
        pi_max=float(sd.pi.max()),
        pi_min=float(sd.pi.min()),
        p_min=P.min_positive(),
        gamma=P.n_states,
        epsilon=epsilon,
        reversible=reversible,
    )


def classical_bound_inputs(kind, dist: PopularityDist, m: int,
                           epsilon: float = 0.5) -> BoundInputs:
    """Policy-specific bound inputs from the product-form stationary laws.

    The extremes are the ideal arrangement (most popular items in order)
    and its mirror (least popular items, least popular in front); the
    kernel floor is the rarest request, split across slots for the random
    policy.
    """
    from .model import PolicyKind
    from .chain import stationary_closed_form

    p = dist.probs
    n = dist.n
    if m >= n:
        raise InvalidParameterError("bound inputs need m < n")
    top = tuple(range(1, m + 1))
    bottom = tuple(range(n, n - m, -1))
    pi_max = stationary_closed_form(kind, dist, top)
    pi_min = stationary_closed_form(kind, dist, bottom)
    p_min = float(p[-1]) / (m if kind == PolicyKind.RANDOM else 1)
    gamma = math.perm(n, m)
    reversible = kind in (PolicyKind.RANDOM, PolicyKind.CLIMB)
    return BoundInputs(pi_max=pi_max, pi_min=pi_min, p_min=p_min, gamma=gamma,
                       epsilon=epsilon, reversible=reversible)


def klru_bound_inputs(dist: PopularityDist, k: int, m: int,
                      epsilon: float = 0.5) -> BoundInputs:
    """Meta-cache bound inputs from the sample-path stationary structure.

    pi_min stacks the least popular km items bottom-up; pi_max combines the
    top-m product per level with the arrangement and interleaving counts.
    """
    p = dist.probs
    n = dist.n
    if k * m > n:
        raise InvalidParameterError("need n >= k*m distinct items")
    pi_min = 1.0
    for i in range(1, k + 1):
        block = 1.0
        for l in range(1 + (i - 1) * m, i * m + 1):
            block *= float(p[n - l])
        pi_min *= block ** (k - i + 1)
    fixed = k * (k + 1) * m // 2
    head_mass = float(p[: m - 1].sum()) if m > 1 else 0.0
    log_pi_max = (
        k * float(np.log(p[:m]).sum())
        + math.lgamma(fixed + 1)
        + (fixed - 1) * (math.log(math.comb(n, m - 1)) - math.log1p(-head_mass))
    )
    pi_max = math.exp(min(log_pi_max, 0.0))
    gamma = math.perm(n, m) ** k
    return BoundInputs(pi_max=pi_max, pi_min=pi_min, p_min=float(p[-1]), gamma=gamma,
                       epsilon=epsilon, reversible=False)


def lrum_bound_inputs(dist: PopularityDist, m_vec: tuple[int, ...],
                      epsilon: float = 0.5) -> BoundInputs:
    """Multi-level bound inputs mirroring the meta-cache construction."""
    p = dist.probs
    n = dist.n
    h = len(m_vec)
    m = sum(m_vec)
    if m > n:
        raise InvalidParameterError("need n >= total capacity")
    pi_min = 1.0
    offset = 0
    for i in range(1, h + 1):
        block = 1.0
        for kk in range(offset + 1, offset + m_vec[i - 1] + 1):
            block *= float(p[n + kk - m - 1])
        pi_min *= block ** i
        offset += m_vec[i - 1]
    log_pi_max = 0.0
    offset = 0
    rev = list(reversed(m_vec))
    for i in range(1, h + 1):
        block = 0.0
        for kk in range(offset + 1, offset + rev[i - 1] + 1):
            block += math.log(float(p[kk - 1]))
        log_pi_max += block * (h - i + 1)
        offset += rev[i - 1]
    fixed = sum(j * mj for j, mj in enumerate(m_vec, start=1))
    head_mass = float(p[: m - 1].sum()) if m > 1 else 0.0
    log_pi_max += (
        math.lgamma(fixed + 1)
        + (fixed - 1) * (math.log(math.comb(n, m - 1)) - math.log1p(-head_mass))
    )
    pi_max = math.exp(min(log_pi_max, 0.0))
    gamma = math.perm(n, m)
    return BoundInputs(pi_max=pi_max, pi_min=pi_min, p_min=float(p[-1]), gamma=gamma,
                       epsilon=epsilon, reversible=False)


def zipf_bound_exponent(kind, alpha: float, m: int, k: int | None = None,
                        m_vec: tuple[int, ...] | None = None) -> float:
    """Exponent e of the O(n^e ln n) mixing bound under a Zipf(alpha) law."""
    from .model import PolicyKind

    if alpha < 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")
    if kind == PolicyKind.LRU:
        return (4.0 * alpha + 2.0) * m + 2.0
    if kind in (PolicyKind.FIFO, PolicyKind.RANDOM):
        return (6.0 * alpha + 2.0) * m + 2.0
    if kind == PolicyKind.CLIMB:
        return 3.0 * alpha * m * (m + 1) + 2.0 * m + 2.0
    if kind == PolicyKind.KLRU:
        if k is None:
            raise InvalidParameterError("KLRU exponent needs k")
        return (k + 1.0) * k * (2.0 * m - 1.0) * m + 4.0 * (k * alpha - 1.0) * m + 6.0
    if kind == PolicyKind.LRUM:
        if not m_vec:
            raise InvalidParameterError("LRUM exponent needs the capacity vector")
        mm = sum(m_vec)
        weighted = sum(j * mj for j, mj in enumerate(m_vec, start=1))
        return (4.0 * mm + 4.0 * alpha - 6.0) * weighted + 6.0
    raise InvalidParameterError(f"no exponent formula for policy {kind}")


def learning_error(tau_dist: float, kappa: float, tv_at_t: float) -> float:
    """Accuracy floor plus the lag term: e(t) = tau + kappa * TV(t)."""
    if tau_dist < 0 or kappa < 0 or tv_at_t < 0:
        raise InvalidParameterError("learning error inputs must be non-negative")
    return tau_dist + kappa * tv_at_t
