"""Command-line front end.

Exit codes: 0 success, 2 configuration/usage error, 3 non-convergence beyond
the accepted fraction.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    deflection_coefficient,
    equal_gain_weights,
    exclusion_weights,
    global_moments,
    mixture_tail,
    optimal_weights,
    roc_closed_form,
    transient_mixture,
    WeightAssignment,
    WeightProvenance,
)
from .config import Scenario, load_scenario
from .consensus import matrix_power
from .errors import ConfigError, ConsenslabError
from .figures import FIGURES, render_csv, reproduce_figure
from .learning import learning_loop
from .montecarlo import build_update_matrix, run_monte_carlo
from .sensing import AttackParams, Hypothesis, NodeProfile

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(text)


def _scheme_weights(scenario: Scenario, scheme: str) -> WeightAssignment:
    profiles = list(scenario.profiles)
    if scheme == "conventional":
        base = scenario.weight_assignment()
        return WeightAssignment(base.weights, WeightProvenance.CONVENTIONAL)
    if scheme == "optimal":
        return optimal_weights(profiles)
    if scheme == "equal-gain":
        return equal_gain_weights(len(profiles))
    if scheme == "exclusion":
        return exclusion_weights(profiles)
    if scheme == "learned":
        if scenario.learning is None:
            raise ConfigError("scheme 'learned' needs a [learning] section in the config")
        trace = learning_loop(
            scenario.graph, scenario.node_models(), scenario.learning, scenario.seed
        )
        if not trace.iterations:
            raise ConfigError("learning ran zero iterations; no learned weights")
        return trace.iterations[-1].weights
    raise ConfigError(f"unknown scheme {scheme!r}")


def _cmd_analyze(args) -> int:
    scenario = load_scenario(args.config)
    out = args.out or "."
    meta = {"version": __version__, "config": args.config}

    matrix = build_update_matrix(scenario)
    weights = scenario.weight_assignment()
    rows = []
    steps = min(scenario.max_iter, 20)
    for t in range(1, steps + 1):
        wt = matrix_power(matrix, t)
        for node in range(scenario.node_count):
            mix1 = transient_mixture(
                wt, node, Hypothesis.H1, scenario.profiles, scenario.h1_variance
            )
            mix0 = transient_mixture(
                wt, node, Hypothesis.H0, scenario.profiles, scenario.h1_variance
            )
            rows.append(
                (
                    t,
                    node + 1,
                    mixture_tail(mix1, scenario.threshold),
                    mixture_tail(mix0, scenario.threshold),
                )
            )
    _write(
        os.path.join(out, "transient.csv"),
        render_csv(meta, ["t", "node", "pd", "pf"], rows),
    )

    if any(p.is_byzantine for p in scenario.profiles):
        base_attacks = [
            (k, p.attack) for k, p in enumerate(scenario.profiles) if p.is_byzantine
        ]
        d_ref = max(a.delta for _, a in base_attacks)
        d_top = 2.0 * d_ref if d_ref > 0 else 20.0
        rows = []
        for P in np.linspace(0.05, 1.0, 20):
            for delta in np.linspace(0.0, d_top, 41):
                profiles = [
                    p
                    if not p.is_byzantine
                    else NodeProfile(
                        p.sensing,
                        AttackParams(float(P), float(delta), p.attack.w_tilde),
                    )
                    for p in scenario.profiles
                ]
                d = deflection_coefficient(global_moments(profiles, weights))
                rows.append((float(P), float(delta), d))
        _write(
            os.path.join(out, "deflection.csv"),
            render_csv(meta, ["P", "delta", "deflection"], rows),
        )

    rows = []
    for scheme in ("conventional", "optimal", "equal-gain", "exclusion"):
        curve = roc_closed_form(
            scenario.profiles,
            _scheme_weights(scenario, scheme),
            variance=scenario.h1_variance,
        )
        rows.extend((scheme, float(pf), float(pd)) for pf, pd in zip(curve.pf, curve.pd))
    _write(os.path.join(out, "roc.csv"), render_csv(meta, ["scheme", "pf", "pd"], rows))
    print(f"analyze: wrote transient.csv, roc.csv (+ deflection.csv if attacked) to {out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.config)
    result = run_monte_carlo(
        scenario, trials=args.trials, seed=args.seed, t_max=args.t_max
    )
    meta = {
        "version": __version__,
        "config": args.config,
        "seed": args.seed if args.seed is not None else scenario.seed,
        "trials": args.trials if args.trials is not None else scenario.trials,
        "nonconverged_fraction": result.nonconverged_fraction,
    }
    if result.t_values is None:
        rows = [
            (n + 1, result.pd[n], result.pd_se[n], result.pf[n], result.pf_se[n])
            for n in range(scenario.node_count)
        ]
        header = ["node", "pd", "pd_se", "pf", "pf_se"]
        for row in rows:
            print(
                f"node {row[0]}: Pd = {row[1]:.4f} +/- {row[2]:.4f}, "
                f"Pf = {row[3]:.4f} +/- {row[4]:.4f}"
            )
    else:
        rows = [
            (int(t), n + 1, result.pd[k, n], result.pf[k, n])
            for k, t in enumerate(result.t_values)
            for n in range(scenario.node_count)
        ]
        header = ["t", "node", "pd", "pf"]
        print(f"simulate: {len(result.t_values)} truncated steps x {scenario.node_count} nodes")
    if args.out:
        _write(args.out, render_csv(meta, header, rows))
        print(f"simulate: wrote {args.out}")
    if result.nonconverged_fraction > args.max_nonconverged:
        print(
            f"simulate: nonconverged fraction {result.nonconverged_fraction:.4g} exceeds "
            f"--max-nonconverged {args.max_nonconverged:.4g}",
            file=sys.stderr,
        )
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def _cmd_learn(args) -> int:
    scenario = load_scenario(args.config)
    if scenario.learning is None:
        raise ConfigError("learn needs a [learning] section in the config")
    trace = learning_loop(
        scenario.graph,
        scenario.node_models(),
        scenario.learning,
        seed=args.seed if args.seed is not None else scenario.seed,
        iterations=args.iterations,
    )
    out = args.out or "."
    meta = {
        "version": __version__,
        "config": args.config,
        "seed": args.seed if args.seed is not None else scenario.seed,
    }
    rows = []
    for it in trace.iterations:
        for r in it.records:
            rows.append(
                (
                    it.index,
                    r.observer + 1,
                    r.neighbor + 1,
                    r.verdict.identity,
                    float(r.mixture.alpha[0]),
                    float(r.mixture.mu0[0]),
                    float(r.mixture.mu0[1]),
                    float(r.mixture.mu1[0]),
                    float(r.mixture.mu1[1]),
                    float(r.mixture.var0),
                    float(r.mixture.var1),
                    r.weight,
                )
            )
    header = [
        "t", "observer", "neighbor", "verdict", "alpha1",
        "mu10", "mu20", "mu11", "mu21", "var0", "var1", "weight",
    ]
    _write(os.path.join(out, "learning_trace.csv"), render_csv(meta, header, rows))
    roc_rows = [
        ("known_optimal", float(pf), float(pd))
        for pf, pd in zip(trace.reference_roc.pf, trace.reference_roc.pd)
    ]
    for it in trace.iterations:
        roc_rows.extend(
            (f"learned_iter_{it.index}", float(pf), float(pd))
            for pf, pd in zip(it.roc.pf, it.roc.pd)
        )
    _write(
        os.path.join(out, "learning_roc.csv"),
        render_csv(meta, ["curve", "pf", "pd"], roc_rows),
    )
    for it in trace.iterations:
        print(
            f"iteration {it.index}: AUC = {it.auc:.4f} "
            f"(known-optimal {trace.reference_auc:.4f})"
        )
    print(f"learn: wrote learning_trace.csv, learning_roc.csv to {out}")
    return EXIT_OK


def _cmd_roc(args) -> int:
    scenario = load_scenario(args.config)
    assignment = _scheme_weights(scenario, args.scheme)
    curve = roc_closed_form(scenario.profiles, assignment, variance=scenario.h1_variance)
    meta = {
        "version": __version__,
        "config": args.config,
        "scheme": args.scheme,
        "auc": f"{curve.auc():.6f}",
    }
    rows = [(args.scheme, float(pf), float(pd)) for pf, pd in zip(curve.pf, curve.pd)]
    text = render_csv(meta, ["scheme", "pf", "pd"], rows)
    if args.out:
        _write(args.out, text)
        print(f"roc: wrote {args.out} (AUC {curve.auc():.4f})")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    path = reproduce_figure(args.figure, out_dir=args.out or ".", seed=args.seed)
    print(f"reproduce: wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consenslab",
        description="Consensus-based distributed detection under data falsification",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="closed-form transient/deflection/ROC CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (default .)")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate", help="seeded Monte Carlo detection runs")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--t-max", type=int, default=None, dest="t_max",
                   help="truncate consensus and decide after every step up to T")
    p.add_argument("--max-nonconverged", type=float, default=0.0,
                   help="accepted fraction of non-convergent trials before exit 3")
    p.add_argument("--out", default=None, help="optional CSV path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("learn", help="run the identify/estimate/adapt loop")
    p.add_argument("--config", required=True)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (default .)")
    p.set_defaults(func=_cmd_learn)

    p = sub.add_parser("roc", help="closed-form ROC for a weighting scheme")
    p.add_argument("--config", required=True)
    p.add_argument(
        "--scheme",
        required=True,
        choices=["conventional", "optimal", "learned", "exclusion", "equal-gain"],
    )
    p.add_argument("--out", default=None, help="optional CSV path (default stdout)")
    p.set_defaults(func=_cmd_roc)

    p = sub.add_parser("reproduce", help="emit a built-in artifact CSV")
    p.add_argument("--figure", required=True, choices=sorted(FIGURES))
    p.add_argument("--out", default=None, help="output directory (default .)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConsenslabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
