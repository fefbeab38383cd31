"""Simulation engine and experiment pipelines.

Monte Carlo estimation of stationary hit probabilities, windowed
hit-rate series, the rank-distance-versus-hit tables, and the
learning-error curves for exact small chains.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.stats

from . import chain as chain_mod
from .chain import (
    StationaryDist,
    TransitionMatrix,
    build_transition_matrix,
    closed_form_vector,
    enumerate_states,
    hit_probability,
    stationary_numeric,
)
from .errors import InvalidParameterError
from .model import PolicyConfig, PolicyKind, PopularityDist, RankWeights, RequestStream
from .policies import alru_beta, alru_caps, make_runner
from .rankmetrics import kendall_generalized, position_map, tau_distance
from .workload import sample_irm

_CLASSICAL = (PolicyKind.LRU, PolicyKind.FIFO, PolicyKind.RANDOM, PolicyKind.CLIMB)


def policy_label(config: PolicyConfig) -> str:
    kind = config.kind
    if kind == PolicyKind.KLRU:
        return f"klru:{config.k}"
    if kind == PolicyKind.LRUM:
        return "lrum:" + ",".join(str(v) for v in config.m_vec)
    if kind == PolicyKind.ALRU:
        if config.schedule is not None:
            T, c = config.schedule
            return f"alru:dyn:{T},{c:g}"
        return f"alru:{config.beta:g}"
    return kind.value


@dataclass(frozen=True)
class ExperimentSpec:
    """Settings for one simulation run over one or many policies."""

    policies: tuple[PolicyConfig, ...]
    dist: PopularityDist | None
    count: int
    burn_in: int = 0
    window: int = 10 ** 4
    reps: int = 1
    seed: int = 0
    stream: RequestStream | None = None

    def __post_init__(self):
        if self.window < 1:
            raise InvalidParameterError("window must be >= 1")
        if not 0 <= self.burn_in < self.count:
            raise InvalidParameterError("need 0 <= burn_in < count")
        if self.reps < 1:
            raise InvalidParameterError("need at least one replication")
        if (self.dist is None) == (self.stream is None):
            raise InvalidParameterError("provide exactly one of dist or stream")
        if self.stream is not None and len(self.stream) == 0:
            raise InvalidParameterError("empty stream")


@dataclass(frozen=True)
class ResultSeries:
    """Hit-rate series for one policy: windows, cumulative, aggregates."""

    policy: str
    window: int
    burn_in: int
    window_rates: np.ndarray  # (reps, n_windows)
    cumulative: np.ndarray  # (reps,)
    mean: float
    stderr: float


def _replay_windows(runner, items: list[int], burn_in: int, window: int,
                    ) -> tuple[np.ndarray, float]:
    """Post-burn-in window hit rates and the cumulative hit rate."""
    step = runner.step
    hits = 0
    post = 0
    w_hits = 0
    w_len = 0
    rates: list[float] = []
    for t, item in enumerate(items):
        h = step(item)
        if t >= burn_in:
            post += 1
            if h:
                hits += 1
                w_hits += 1
            w_len += 1
            if w_len == window:
                rates.append(w_hits / window)
                w_hits = 0
                w_len = 0
    return np.asarray(rates), hits / post


def run_simulation(spec: ExperimentSpec) -> dict[str, ResultSeries]:
    """Replay the request stream through each policy, one result per policy.

    Replications draw independent streams (seed + rep) under a synthetic
    source; a fixed trace stream is replayed identically, with only the
    policies' internal randomness varying across replications.
    """
    out: dict[str, ResultSeries] = {}
    streams: list[list[int]] = []
    for rep in range(spec.reps):
        if spec.dist is not None:
            stream = sample_irm(spec.dist, spec.count, spec.seed + rep)
            streams.append(stream.items.tolist())
        else:
            streams.append(spec.stream.items[: spec.count].tolist())
    for config in spec.policies:
        per_rep_rates = []
        per_rep_cum = []
        for rep in range(spec.reps):
            rng = random.Random((spec.seed + rep) * 1_000_003 + config.rng_seed)
            runner = make_runner(config, rng) if config.kind == PolicyKind.RANDOM \
                else make_runner(config)
            rates, cum = _replay_windows(runner, streams[rep], spec.burn_in, spec.window)
            per_rep_rates.append(rates)
            per_rep_cum.append(cum)
        window_rates = np.asarray(per_rep_rates)
        cumulative = np.asarray(per_rep_cum)
        mean = float(cumulative.mean())
        if spec.reps >= 2:
            stderr = float(cumulative.std(ddof=1) / np.sqrt(spec.reps))
        else:
            post = spec.count - spec.burn_in
            stderr = float(np.sqrt(max(mean * (1.0 - mean), 1e-12) / post))
        out[policy_label(config)] = ResultSeries(
            policy=policy_label(config),
            window=spec.window,
            burn_in=spec.burn_in,
            window_rates=window_rates,
            cumulative=cumulative,
            mean=mean,
            stderr=stderr,
        )
    return out


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo stationary-hit estimate with a stationarity verdict."""

    hit: float
    stderr: float
    converged: bool
    burn_in_used: int
    samples: int


def monte_carlo_stationary(config: PolicyConfig, dist: PopularityDist, burn_in: int,
                           samples: int, seed: int, max_doublings: int = 2) -> McEstimate:
    """Post-burn-in hit frequency with a binomial standard error.

    The first and second halves of the sample window are compared; a gap
    beyond three sigma flags non-stationarity and doubles the burn-in, up
    to ``max_doublings`` retries.  The estimate is returned either way,
    marked unconverged when the flag still trips.
    """
    attempt_burn_in = burn_in
    for attempt in range(max_doublings + 1):
        stream = sample_irm(dist, attempt_burn_in + samples, seed + 7919 * attempt)
        items = stream.items.tolist()
        rng = random.Random(seed * 1_000_003 + config.rng_seed + attempt)
        runner = make_runner(config, rng) if config.kind == PolicyKind.RANDOM \
            else make_runner(config)
        step = runner.step
        for item in items[:attempt_burn_in]:
            step(item)
        half = samples // 2
        hits1 = 0
        for item in items[attempt_burn_in:attempt_burn_in + half]:
            if step(item):
                hits1 += 1
        hits2 = 0
        for item in items[attempt_burn_in + half:]:
            if step(item):
                hits2 += 1
        n2 = samples - half
        total = hits1 + hits2
        p_hat = total / samples
        p1 = hits1 / half
        p2 = hits2 / n2
        var_diff = p_hat * (1.0 - p_hat) * (1.0 / half + 1.0 / n2)
        sigma_diff = float(np.sqrt(max(var_diff, 1e-300)))
        stderr = float(np.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / samples))
        if abs(p1 - p2) <= 3.0 * sigma_diff:
            return McEstimate(p_hat, stderr, True, attempt_burn_in, samples)
        attempt_burn_in *= 2
    return McEstimate(p_hat, stderr, False, attempt_burn_in // 2, samples)


# ---------------------------------------------------------------------------
# exact pipelines


def exact_chain(config: PolicyConfig, dist: PopularityDist,
                cap: int = chain_mod.DEFAULT_STATE_CAP,
                ) -> tuple[TransitionMatrix, StationaryDist]:
    """Enumerate, build the kernel, and solve for the stationary law.

    The four classical policies use their product forms (validated
    elsewhere against the numeric oracle); the rest are solved numerically.
    """
    space = enumerate_states(config, dist.n, cap=cap)
    P = build_transition_matrix(config, dist, space)
    if config.kind in _CLASSICAL:
        pi = closed_form_vector(config.kind, dist, space)
        sd = StationaryDist(space=space, pi=pi,
                            residual=float(np.abs(pi @ P.matrix - pi).sum()))
    else:
        sd = stationary_numeric(P)
    return P, sd


def exact_tau_and_hit(config: PolicyConfig, dist: PopularityDist, weights: RankWeights,
                      ) -> tuple[float, float]:
    P, sd = exact_chain(config, dist)
    cstar = tuple(range(1, config.m + 1))
    tau = tau_distance(sd.pi, sd.space.projections(), dist.n, weights, cstar)
    return tau, hit_probability(sd, dist)


def mc_tau_and_hit(config: PolicyConfig, dist: PopularityDist, weights: RankWeights,
                   burn_in: int, samples: int, seed: int) -> tuple[float, float]:
    """Ergodic-average rank distance and hit rate for chains too large or
    too stateful (ARC) to enumerate."""
    stream = sample_irm(dist, burn_in + samples, seed)
    items = stream.items.tolist()
    rng = random.Random(seed * 1_000_003 + config.rng_seed)
    runner = make_runner(config, rng) if config.kind == PolicyKind.RANDOM \
        else make_runner(config)
    step = runner.step
    for item in items[:burn_in]:
        step(item)
    cstar = tuple(range(1, config.m + 1))
    sigma_star = position_map(cstar, dist.n)
    cache: dict[tuple[int, ...], float] = {}
    total = 0.0
    hits = 0
    for item in items[burn_in:]:
        if step(item):
            hits += 1
        key = tuple(runner.real_items())
        k = cache.get(key)
        if k is None:
            k = kendall_generalized(position_map(key, dist.n), sigma_star, weights)
            cache[key] = k
        total += k
    return total / samples, hits / samples


def tau_vs_hit_table(configs, dist: PopularityDist, weights: RankWeights,
                     mc_policies=(PolicyKind.ARC,), mc_burn_in: int = 200_000,
                     mc_samples: int = 500_000, seed: int = 0) -> dict:
    """Stationary rank distance and hit probability per policy, plus the
    monotone-association statistic (Spearman rank correlation)."""
    rows = []
    for config in configs:
        if config.kind in mc_policies:
            tau, hit = mc_tau_and_hit(config, dist, weights, mc_burn_in, mc_samples, seed)
            exact = False
        else:
            tau, hit = exact_tau_and_hit(config, dist, weights)
            exact = True
        rows.append({
            "policy": policy_label(config),
            "m": config.m,
            "tau": tau,
            "hit": hit,
            "exact": exact,
        })
    taus = [r["tau"] for r in rows]
    hits = [r["hit"] for r in rows]
    spearman = float(scipy.stats.spearmanr(taus, hits).statistic) if len(rows) > 1 else float("nan")
    return {"rows": rows, "spearman": spearman}


# ---------------------------------------------------------------------------
# learning-error curves


def adversarial_start_state(config: PolicyConfig, n: int):
    """The least-favourable full start: least popular items, least popular
    in front (the minimal-stationary-mass arrangement), plus the matching
    construction for layered states."""
    m = config.m
    low = tuple(range(n, n - m, -1))
    if config.kind in _CLASSICAL:
        return low
    if config.kind == PolicyKind.KLRU:
        levels = []
        for lvl in range(config.k):
            start = n - lvl * m
            levels.append(tuple(range(start, start - m, -1)))
        return tuple(reversed(levels))
    if config.kind == PolicyKind.LRUM:
        out = []
        pos = n
        for cap in reversed(config.m_vec):
            out.append(tuple(range(pos, pos - cap, -1)))
            pos -= cap
        return tuple(reversed(out))
    if config.kind == PolicyKind.ALRU:
        return (low, ())
    raise InvalidParameterError(f"no canonical start for {config.kind}")


@dataclass(frozen=True)
class LearningCurve:
    policy: str
    t_grid: np.ndarray
    error: np.ndarray
    tau: float
    kappa: float
    sup_tv: np.ndarray


def learning_error_curve(config: PolicyConfig, dist: PopularityDist,
                         weights: RankWeights, kappa: float, t_grid,
                         starts="adversarial") -> LearningCurve:
    """e(t) = stationary rank distance + kappa * TV(mu_t, pi) on the grid.

    ``starts`` is "all" (exact sup, small chains only) or "adversarial"
    (the canonical worst start; the TV term is then a lower bound on the
    sup, which every figure pipeline uses consistently across policies).
    """
    t_grid = np.asarray(sorted(int(t) for t in t_grid))
    if t_grid.size == 0 or t_grid[0] < 0:
        raise InvalidParameterError("t_grid must hold non-negative integers")
    P, sd = exact_chain(config, dist)
    cstar = tuple(range(1, config.m + 1))
    tau = tau_distance(sd.pi, sd.space.projections(), dist.n, weights, cstar)
    if starts == "all":
        rows = np.eye(len(sd.space))
    else:
        start_state = adversarial_start_state(config, dist.n)
        rows = np.zeros((1, len(sd.space)))
        rows[0, P.space.index[start_state]] = 1.0
    pi = sd.pi
    sup_tv = np.empty(t_grid.size)
    t_now = 0
    for gi, t_target in enumerate(t_grid):
        while t_now < t_target:
            rows = rows @ P.matrix
            t_now += 1
        sup_tv[gi] = float(0.5 * np.abs(rows - pi).sum(axis=1).max())
    error = tau + kappa * sup_tv
    return LearningCurve(policy=policy_label(config), t_grid=t_grid, error=error,
                         tau=tau, kappa=kappa, sup_tv=sup_tv)


def alru_dynamic_curve(m: int, schedule: tuple[int, float], dist: PopularityDist,
                       weights: RankWeights, kappa: float, t_grid) -> LearningCurve:
    """Learning error of the dynamic-mix policy on its exact chain.

    The kernel is rebuilt whenever the schedule crosses a partition
    boundary; the accuracy target is the stationary law of the limiting
    kernel (the partition reached as the mix parameter decays toward 0).
    """
    t_grid = np.asarray(sorted(int(t) for t in t_grid))
    T, c = schedule
    n = dist.n
    space = enumerate_states(PolicyConfig(PolicyKind.ALRU, m, beta=0.5), n)
    kernels: dict[tuple[int, int], TransitionMatrix] = {}

    def kernel_for(beta: float) -> TransitionMatrix:
        caps = alru_caps(beta, m)
        K = kernels.get(caps)
        if K is None:
            config = PolicyConfig(PolicyKind.ALRU, m, beta=beta)
            K = build_transition_matrix(config, dist, space)
            kernels[caps] = K
        return K

    # limiting kernel: any beta in (0, 1/m) yields the terminal partition
    terminal = kernel_for(0.5 / m)
    sd_inf = stationary_numeric(terminal)
    cstar = tuple(range(1, m + 1))
    tau_inf = tau_distance(sd_inf.pi, sd_inf.space.projections(), n, weights, cstar)

    start_state = (tuple(range(n, n - m, -1)), ())
    mu = np.zeros(len(space))
    mu[space.index[start_state]] = 1.0
    sup_tv = np.empty(t_grid.size)
    t_now = 0
    for gi, t_target in enumerate(t_grid):
        while t_now < t_target:
            t_now += 1
            K = kernel_for(alru_beta(t_now, m, T, c))
            mu = mu @ K.matrix
        sup_tv[gi] = float(0.5 * np.abs(mu - sd_inf.pi).sum())
    label = f"alru:dyn:{T},{c:g}"
    return LearningCurve(policy=label, t_grid=t_grid, error=tau_inf + kappa * sup_tv,
                         tau=tau_inf, kappa=kappa, sup_tv=sup_tv)


# ---------------------------------------------------------------------------
# experiment config files


def load_experiment_config(path: str | Path) -> dict:
    """Read a checked-in experiment description (JSON key-value schema)."""
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
