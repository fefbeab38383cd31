"""Command-line surface: generation, simulation, exact analysis, mixing.

Every run writes a JSON manifest (the resolved configuration, seeds, and
package version) next to its outputs, so a run can be reproduced
bit-exactly from the manifest alone.  Exit codes: 0 success, 2 usage
error, 3 capacity refusal, 4 numeric non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import chain as chain_mod
from . import mixing as mixing_mod
from .errors import CachemixError, NoConvergenceError, TooLargeError
from .experiments import (
    ExperimentSpec,
    alru_dynamic_curve,
    exact_chain,
    learning_error_curve,
    monte_carlo_stationary,
    policy_label,
    run_simulation,
)
from .model import (
    PolicyConfig,
    PolicyKind,
    PopularityDist,
    from_probs,
    make_zipf,
)
from .rankmetrics import (
    default_weights,
    kappa_diameter,
    presence_weights,
    tau_distance,
    unit_weights,
)
from .workload import ModulationSpec, fit_zipf, read_trace, sample_irm, sample_modulated, write_trace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TOO_LARGE = 3
EXIT_NO_CONVERGENCE = 4


class UsageError(Exception):
    pass


def parse_policy(text: str, m: int) -> PolicyConfig:
    """Parse a policy spec: lru|fifo|random|climb|klru:k|lrum:m1,m2,..|arc|alru:beta|alru:dyn:T,c."""
    parts = text.lower().split(":")
    head = parts[0]
    try:
        if head == "klru":
            return PolicyConfig(PolicyKind.KLRU, m, k=int(parts[1]))
        if head == "lrum":
            vec = tuple(int(v) for v in parts[1].split(","))
            return PolicyConfig(PolicyKind.LRUM, sum(vec), m_vec=vec)
        if head == "alru":
            if parts[1] == "dyn":
                t0, c = parts[2].split(",")
                return PolicyConfig(PolicyKind.ALRU, m, schedule=(int(t0), float(c)))
            return PolicyConfig(PolicyKind.ALRU, m, beta=float(parts[1]))
        if head in ("lru", "fifo", "random", "climb", "arc") and len(parts) == 1:
            return PolicyConfig(PolicyKind(head), m)
    except (ValueError, IndexError, CachemixError) as exc:
        raise UsageError(f"bad policy spec {text!r}: {exc}") from exc
    raise UsageError(f"unknown policy {text!r}")


def resolve_dist(args) -> PopularityDist:
    if getattr(args, "probs", None):
        return from_probs([float(x) for x in args.probs.split(",")])
    if args.n is None or args.alpha is None:
        raise UsageError("need either --probs or both --n and --alpha")
    return make_zipf(args.n, args.alpha)


def resolve_weights(name: str, n: int, m: int):
    if name == "default":
        return default_weights(n, m)
    if name == "unit":
        return unit_weights(n, m)
    if name == "presence":
        return presence_weights(n, m)
    raise UsageError(f"unknown weights preset {name!r}")


def write_manifest(out_path: Path, command: str, args_dict: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "args": {k: v for k, v in sorted(args_dict.items()) if not k.startswith("_")},
    }
    path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    dist = resolve_dist(args)
    if args.modulate is not None:
        spec = ModulationSpec(shuffle_rate=args.modulate, mode=args.mode)
        stream = sample_modulated(dist, spec, args.count, args.seed)
    else:
        stream = sample_irm(dist, args.count, args.seed)
    out = Path(args.output)
    write_trace(stream, out, format=args.format)
    write_manifest(out, "gen", vars(args))
    print(f"wrote {len(stream)} requests to {out}")
    return EXIT_OK


def cmd_sim(args) -> int:
    policies = tuple(parse_policy(p, args.m) for p in args.policy)
    if args.trace:
        stream = read_trace(args.trace, format=args.trace_format)
        count = min(args.count, len(stream)) if args.count else len(stream)
        spec = ExperimentSpec(policies=policies, dist=None, stream=stream, count=count,
                              burn_in=args.burnin, window=args.window, reps=args.reps,
                              seed=args.seed)
    else:
        dist = resolve_dist(args)
        spec = ExperimentSpec(policies=policies, dist=dist, count=args.count,
                              burn_in=args.burnin, window=args.window, reps=args.reps,
                              seed=args.seed)
    results = run_simulation(spec)
    rows = []
    for label, series in results.items():
        rows.append(("sim", label, args.m, "", "cumulative_hit", series.mean, series.stderr))
        for rep in range(series.window_rates.shape[0]):
            for wi, rate in enumerate(series.window_rates[rep]):
                rows.append(("sim", label, args.m, wi, f"window_hit_rep{rep}", rate, ""))
    out = Path(args.output)
    write_csv(out, ["experiment", "policy", "m", "t", "metric", "value", "stderr"], rows)
    write_manifest(out, "sim", vars(args))
    for label, series in results.items():
        print(f"{label}: cumulative hit {series.mean:.6f} +- {series.stderr:.6f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    config = parse_policy(args.policy, args.m)
    dist = resolve_dist(args)
    P, sd = exact_chain(config, dist, cap=args.cap)
    out_rows = []
    if args.what in ("stationary", "all"):
        for i, state in enumerate(sd.space.states):
            out_rows.append(("stationary", policy_label(config), args.m, i,
                             f"pi[{state}]", sd.pi[i], ""))
    if args.what in ("hit", "all"):
        hit = chain_mod.hit_probability(sd, dist)
        out_rows.append(("hit", policy_label(config), args.m, "", "hit_probability", hit, ""))
        print(f"hit probability: {hit:.6f}")
    if args.what in ("tau", "all"):
        weights = resolve_weights(args.weights, dist.n, config.m)
        cstar = tuple(range(1, config.m + 1))
        tau = tau_distance(sd.pi, sd.space.projections(), dist.n, weights, cstar)
        out_rows.append(("tau", policy_label(config), args.m, "", "tau_distance", tau, ""))
        print(f"tau distance: {tau:.6f}")
    if args.what in ("reversible", "all"):
        ok, witness = chain_mod.is_reversible(P, sd)
        out_rows.append(("reversible", policy_label(config), args.m, "", "reversible", ok, ""))
        print(f"reversible: {ok}")
        if witness is not None:
            x, y, fwd, bwd = witness
            print(f"witness edge: {sd.space.states[x]} -> {sd.space.states[y]} "
                  f"flow {fwd:.3e} vs reverse {bwd:.3e}")
            out_rows.append(("reversible", policy_label(config), args.m, "",
                             f"witness[{x}->{y}]", fwd - bwd, ""))
    if args.edges:
        chain_mod.export_edges_csv(P, args.edges)
    out = Path(args.output)
    write_csv(out, ["experiment", "policy", "m", "state", "metric", "value", "stderr"], out_rows)
    write_manifest(out, "analyze", vars(args))
    return EXIT_OK


def cmd_mix(args) -> int:
    config = parse_policy(args.policy, args.m)
    if args.bounds == "zipf-exponent":
        if args.alpha is None:
            raise UsageError("--bounds zipf-exponent needs --alpha")
        exponent = mixing_mod.zipf_bound_exponent(
            config.kind, args.alpha, args.m, k=config.k, m_vec=config.m_vec
        )
        print(f"zipf exponent: {exponent:g}")
        out = Path(args.output)
        write_csv(out, ["experiment", "policy", "m", "t", "metric", "value", "stderr"],
                  [("mix", policy_label(config), args.m, "", "zipf_exponent", exponent, "")])
        write_manifest(out, "mix", vars(args))
        return EXIT_OK
    dist = resolve_dist(args)
    P, sd = exact_chain(config, dist, cap=args.cap)
    rows = []
    if args.bounds == "lemma1":
        inputs = mixing_mod.bound_inputs_from_chain(P, sd, epsilon=args.eps)
        bound = mixing_mod.mixing_bound(inputs)
        rows.append(("mix", policy_label(config), args.m, "", "mixing_bound", bound, ""))
        print(f"mixing bound: {bound:.6g} (reversible={inputs.reversible})")
    report = mixing_mod.empirical_mixing_time(P, sd, args.eps, starts=args.starts)
    print(f"t_mix({args.eps}) = {report.t_mix} "
          f"({'exact sup' if report.exact_sup else 'lower bound on sup'})")
    for t, sup in enumerate(report.sup_tv):
        rows.append(("mix", policy_label(config), args.m, t, "sup_tv", sup, ""))
    rows.append(("mix", policy_label(config), args.m, report.t_mix, "t_mix", report.t_mix, ""))
    out = Path(args.output)
    write_csv(out, ["experiment", "policy", "m", "t", "metric", "value", "stderr"], rows)
    write_manifest(out, "mix", vars(args))
    return EXIT_OK


def _parse_tgrid(text: str) -> list[int]:
    if text.startswith("log:"):
        lo, hi = text[4:].split("..")
        lo_i, hi_i = max(int(lo), 1), int(hi)
        grid = sorted({int(round(v)) for v in np.geomspace(lo_i, hi_i, num=40)})
        return grid
    return sorted({int(v) for v in text.split(",")})


def cmd_learn_error(args) -> int:
    dist = resolve_dist(args)
    t_grid = _parse_tgrid(args.tgrid)
    weights = resolve_weights(args.weights, dist.n, args.m)
    proj = __import__("itertools").permutations(range(1, dist.n + 1), args.m)
    kappa = kappa_diameter(proj, dist.n, weights, mode=args.kappa_mode).value
    rows = []
    for spec_text in args.policies:
        config = parse_policy(spec_text, args.m)
        if config.kind == PolicyKind.ALRU and config.schedule is not None:
            curve = alru_dynamic_curve(args.m, config.schedule, dist, weights, kappa, t_grid)
        else:
            curve = learning_error_curve(config, dist, weights, kappa, t_grid,
                                         starts=args.starts)
        for t, err, tv in zip(curve.t_grid, curve.error, curve.sup_tv):
            rows.append(("learn-error", curve.policy, args.m, t, "learning_error", err, ""))
            rows.append(("learn-error", curve.policy, args.m, t, "sup_tv", tv, ""))
        rows.append(("learn-error", curve.policy, args.m, "", "tau", curve.tau, ""))
        print(f"{curve.policy}: tau plateau {curve.tau:.4f}, "
              f"e({curve.t_grid[-1]}) = {curve.error[-1]:.4f}")
    rows.append(("learn-error", "-", args.m, "", "kappa", kappa, ""))
    out = Path(args.output)
    write_csv(out, ["experiment", "policy", "m", "t", "metric", "value", "stderr"], rows)
    write_manifest(out, "learn-error", vars(args))
    return EXIT_OK


def cmd_fit(args) -> int:
    stream = read_trace(args.trace, format=args.trace_format)
    if len(stream) == 0:
        raise UsageError(f"trace {args.trace} is empty")
    alpha = fit_zipf(stream)
    print(f"alpha_hat = {alpha:.4f}")
    _, counts = np.unique(stream.items, return_counts=True)
    counts = np.sort(counts)[::-1]
    out = Path(args.output)
    rows = [("fit", "-", "", "", "alpha_hat", alpha, "")]
    for rank, count in enumerate(counts[: args.top], start=1):
        rows.append(("fit", "-", "", rank, "rank_count", int(count), ""))
    write_csv(out, ["experiment", "policy", "m", "rank", "metric", "value", "stderr"], rows)
    write_manifest(out, "fit", vars(args))
    return EXIT_OK


def cmd_mc(args) -> int:
    config = parse_policy(args.policy, args.m)
    dist = resolve_dist(args)
    est = monte_carlo_stationary(config, dist, args.burnin, args.count, args.seed)
    flag = "" if est.converged else " (unconverged)"
    print(f"stationary hit: {est.hit:.6f} +- {est.stderr:.6f}{flag}")
    out = Path(args.output)
    write_csv(out, ["experiment", "policy", "m", "t", "metric", "value", "stderr"],
              [("mc", policy_label(config), args.m, "", "stationary_hit", est.hit, est.stderr),
               ("mc", policy_label(config), args.m, "", "converged", est.converged, "")])
    write_manifest(out, "mc", vars(args))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_dist_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=None, help="library size")
    p.add_argument("--alpha", type=float, default=None, help="Zipf exponent")
    p.add_argument("--probs", type=str, default=None,
                   help="explicit comma-separated probabilities (overrides --n/--alpha)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cachemix",
        description="cache-policy Markov analysis: stationary laws, rank distances, "
                    "mixing times, learning error",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic request trace")
    _add_dist_flags(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--modulate", type=float, default=None,
                   help="per-request probability of a popularity re-ranking epoch")
    p.add_argument("--mode", choices=["full-shuffle", "top-swap"], default="full-shuffle")
    p.add_argument("--format", choices=["lines", "csv"], default="lines")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sim", help="replay a stream through policies")
    p.add_argument("--policy", action="append", required=True,
                   help="lru|fifo|random|climb|klru:k|lrum:m1,m2,..|arc|alru:beta|alru:dyn:T,c")
    p.add_argument("--m", type=int, required=True)
    _add_dist_flags(p)
    p.add_argument("--trace", type=str, default=None)
    p.add_argument("--trace-format", choices=["lines", "csv"], default="lines")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--window", type=int, default=10 ** 4)
    p.add_argument("--burnin", type=int, default=0)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="sim.csv")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("mc", help="Monte Carlo stationary hit probability")
    p.add_argument("--policy", required=True)
    p.add_argument("--m", type=int, required=True)
    _add_dist_flags(p)
    p.add_argument("--count", type=int, required=True, help="post-burn-in samples")
    p.add_argument("--burnin", type=int, default=10 ** 6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="mc.csv")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("analyze", help="exact chain analysis (small instances)")
    p.add_argument("--policy", required=True)
    p.add_argument("--m", type=int, required=True)
    _add_dist_flags(p)
    p.add_argument("--what", choices=["stationary", "hit", "tau", "reversible", "all"],
                   default="all")
    p.add_argument("--weights", choices=["default", "unit", "presence"], default="default")
    p.add_argument("--cap", type=int, default=chain_mod.DEFAULT_STATE_CAP)
    p.add_argument("--edges", type=str, default=None, help="also export the kernel edge list")
    p.add_argument("-o", "--output", default="analyze.csv")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mix", help="empirical mixing time and bounds")
    p.add_argument("--policy", required=True)
    p.add_argument("--m", type=int, required=True)
    _add_dist_flags(p)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--starts", choices=["all", "adversarial"], default="all")
    p.add_argument("--bounds", choices=["lemma1", "zipf-exponent"], default=None)
    p.add_argument("--cap", type=int, default=chain_mod.DEFAULT_STATE_CAP)
    p.add_argument("-o", "--output", default="mix.csv")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("learn-error", help="learning-error curves on exact chains")
    p.add_argument("--policies", nargs="+", required=True)
    p.add_argument("--m", type=int, required=True)
    _add_dist_flags(p)
    p.add_argument("--tgrid", default="log:1..10000")
    p.add_argument("--weights", choices=["default", "unit", "presence"], default="default")
    p.add_argument("--kappa-mode", choices=["exact", "heuristic"], default="exact")
    p.add_argument("--starts", choices=["all", "adversarial"], default="adversarial")
    p.add_argument("-o", "--output", default="learn_error.csv")
    p.set_defaults(func=cmd_learn_error)

    p = sub.add_parser("fit", help="fit a Zipf exponent to a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--trace-format", choices=["lines", "csv"], default="lines")
    p.add_argument("--top", type=int, default=20, help="rank-frequency rows to emit")
    p.add_argument("-o", "--output", default="fit.csv")
    p.set_defaults(func=cmd_fit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TooLargeError as exc:
        print(f"refused: {exc}\nhint: use the `mc` command for a Monte Carlo estimate",
              file=sys.stderr)
        return EXIT_TOO_LARGE
    except NoConvergenceError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except CachemixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
