"""Built-in parameter sets and CSV emission for the reproduction pipelines.

Each named artifact binds one of the package's demonstration setups (the
six-node demo network under various attack and weight regimes) to a runner
and a deterministic CSV. Bodies are byte-identical across runs for the same
seed; run metadata rides in leading ``#`` comment lines.
"""
from __future__ import annotations

import csv
import io
import os
from typing import Callable, Optional

import numpy as np

from . import __version__
from .analysis import (
    blinding_residual,
    conventional_weights,
    deflection_coefficient,
    equal_gain_weights,
    exclusion_weights,
    global_moments,
    mixture_tail,
    optimal_weights,
    roc_closed_form,
    transient_mixture,
)
from .consensus import conventional_perron, matrix_power, robust_perron, run_consensus
from .errors import ConfigError
from .learning import GaussianNodeModel, LearningSettings, learning_loop
from .sensing import AttackParams, Hypothesis, NodeProfile, SensingParams
from .topology import build_graph, laplacian

DEMO_EDGES = [(1, 2), (2, 3), (2, 4), (3, 4), (4, 5), (4, 6)]


def demo_graph():
    """The six-node demonstration topology used by all built-in artifacts."""
    return build_graph(6, DEMO_EDGES)


def deflection_surface_profiles(P: float, delta: float) -> list[NodeProfile]:
    """Six heterogeneous-gain energy detectors, nodes 1-2 Byzantine.

    Tampered self-weights equal the design weights here, so the surface
    isolates the data-falsification effect.
    """
    gains = [0.8, 0.7, 0.72, 0.61, 0.69, 0.9]
    sensing = [SensingParams(sigma2=1.0, h=h, M=12, Es=5.0) for h in gains]
    design = conventional_weights(sensing).weights
    profiles = []
    for k, s in enumerate(sensing):
        if k < 2:
            profiles.append(
                NodeProfile(s, AttackParams(P=P, delta=delta, w_tilde=float(design[k])))
            )
        else:
            profiles.append(NodeProfile(s))
    return profiles


def transient_profiles(attacked: bool) -> list[NodeProfile]:
    """Homogeneous detectors (eta 10, sigma^2 2, M 12), nodes 1-2 Byzantine."""
    sensing = SensingParams(sigma2=2.0, h=1.0, M=12, Es=20.0)
    attack = AttackParams(P=0.5, delta=6.0, w_tilde=1.1) if attacked else None
    return [
        NodeProfile(sensing, attack if k < 2 else None) for k in range(6)
    ]


def transient_matrix(attacked: bool):
    """Conventional update matrix at step size 0.6897 with self-assigned weights."""
    lap = laplacian(demo_graph())
    weights = np.array([1.1, 1.1, 1, 1, 1, 1.0]) if attacked else np.ones(6)
    return conventional_perron(lap, 0.6897, weights)


TRANSIENT_THRESHOLD = 33.0


def roc_comparison_profiles() -> list[NodeProfile]:
    """Homogeneous detectors (eta 3, sigma^2 0.5, M 12), strong attack (0.5, 9)."""
    sensing = SensingParams(sigma2=0.5, h=1.0, M=12, Es=1.5)
    attack = AttackParams(P=0.5, delta=9.0, w_tilde=1.0)
    return [NodeProfile(sensing, attack if k < 2 else None) for k in range(6)]


def learning_demo_models() -> list[GaussianNodeModel]:
    """Normal node models (3, 1.5) / (4, 2) with nodes 1-2 attacking at (0.5, 9)."""
    attack = AttackParams(P=0.5, delta=9.0, w_tilde=1.0)
    return [
        GaussianNodeModel(
            mu10=3.0, mu11=4.0, var10=1.5, var11=2.0, attack=attack if k < 2 else None
        )
        for k in range(6)
    ]


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def render_csv(metadata: dict, header: list, rows) -> str:
    buf = io.StringIO()
    for key, value in metadata.items():
        buf.write(f"# {key} = {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def csv_body(text: str) -> str:
    """Everything below the comment header; the determinism contract applies here."""
    return "".join(
        line for line in text.splitlines(keepends=True) if not line.startswith("#")
    )


# ---------------------------------------------------------------------------
# Figure builders
# ---------------------------------------------------------------------------

def _blinding_locus_delta(P: float) -> float:
    """Attack strength that zeroes the deflection at probability P on the
    deflection-surface setup."""
    probe = deflection_surface_profiles(P, 0.0)
    sensing = [p.sensing for p in probe]
    design = conventional_weights(sensing)
    # residual(P, D) = 2 P D * (byz weight sum) - sum_i w_i eta_i sigma_i^2
    base = -blinding_residual(probe, design)  # = sum_i w_i eta_i sigma_i^2
    byz_weight = sum(
        p.attack.w_tilde for p in probe if p.is_byzantine
    )
    return base / (2.0 * P * byz_weight)


def build_fig2(seed: int) -> tuple[dict, list, list]:
    """Deflection surface over the attack grid, locus points included exactly."""
    p_grid = np.linspace(0.05, 1.0, 20)
    d_grid = np.linspace(0.0, 20.0, 41)
    rows = []
    for P in p_grid:
        deltas = np.append(d_grid, _blinding_locus_delta(float(P)))
        for delta in np.sort(deltas):
            profiles = deflection_surface_profiles(float(P), float(delta))
            weights = conventional_weights([p.sensing for p in profiles])
            d = deflection_coefficient(global_moments(profiles, weights))
            rows.append((float(P), float(delta), d))
    meta = {
        "artifact": "fig2",
        "setup": "six-node heterogeneous network, nodes 1-2 Byzantine, M=12 Es=5 sigma2=1",
    }
    return meta, ["P", "delta", "deflection"], rows


def _transient_values(hypothesis: Hypothesis) -> list:
    clean_profiles = transient_profiles(False)
    attack_profiles = transient_profiles(True)
    clean_m = transient_matrix(False)
    attack_m = transient_matrix(True)
    rows = []
    for t in range(1, 21):
        wt_clean = matrix_power(clean_m, t)
        wt_attack = matrix_power(attack_m, t)
        for node in range(6):
            p_clean = mixture_tail(
                transient_mixture(wt_clean, node, hypothesis, clean_profiles),
                TRANSIENT_THRESHOLD,
            )
            p_attack = mixture_tail(
                transient_mixture(wt_attack, node, hypothesis, attack_profiles),
                TRANSIENT_THRESHOLD,
            )
            rows.append((t, node + 1, p_clean, p_attack))
    return rows


def build_fig3(seed: int) -> tuple[dict, list, list]:
    meta = {
        "artifact": "fig3",
        "setup": "transient detection probability, eta=10 sigma2=2 lambda=33 eps=0.6897",
    }
    return meta, ["t", "node", "pd_no_attack", "pd_with_byzantines"], _transient_values(
        Hypothesis.H1
    )


def build_fig4(seed: int) -> tuple[dict, list, list]:
    meta = {
        "artifact": "fig4",
        "setup": "transient false alarm probability, eta=10 sigma2=2 lambda=33 eps=0.6897",
    }
    return meta, ["t", "node", "pf_no_attack", "pf_with_byzantines"], _transient_values(
        Hypothesis.H0
    )


def build_fig5(seed: int) -> tuple[dict, list, list]:
    weights = np.array([0.65, 0.55, 0.48, 0.95, 0.93, 0.90])
    x0 = np.array([5.0, 2.0, 7.0, 9.0, 8.0, 1.0])
    matrix = robust_perron(laplacian(demo_graph()), 0.3, weights)
    run = run_consensus(matrix, x0, tol=1e-3, max_iter=100)
    rows = [
        (k, *state.tolist()) for k, state in enumerate(run.trajectory)
    ]
    meta = {
        "artifact": "fig5",
        "setup": "robust weighted consensus, eps=0.3",
        "weighted_average": _fmt(float(weights @ x0 / weights.sum())),
        "converged_at": run.converged_at,
    }
    return meta, ["iteration", "x1", "x2", "x3", "x4", "x5", "x6"], rows


def build_fig6(seed: int) -> tuple[dict, list, list]:
    profiles = roc_comparison_profiles()
    schemes = [
        ("optimal", optimal_weights(profiles)),
        ("equal-gain", equal_gain_weights(len(profiles))),
        ("exclusion", exclusion_weights(profiles)),
    ]
    rows = []
    for name, assignment in schemes:
        curve = roc_closed_form(profiles, assignment)
        for pf, pd in zip(curve.pf, curve.pd):
            rows.append((name, float(pf), float(pd)))
    meta = {
        "artifact": "fig6",
        "setup": "steady-state ROC comparison, eta=3 sigma2=0.5 M=12, attack (0.5, 9)",
    }
    return meta, ["scheme", "pf", "pd"], rows


def build_fig7(seed: int) -> tuple[dict, list, list]:
    models = learning_demo_models()
    settings = LearningSettings(D=20, D1=10, iterations=4)
    trace = learning_loop(demo_graph(), models, settings, seed=seed)
    rows = []
    for pf, pd in zip(trace.reference_roc.pf, trace.reference_roc.pd):
        rows.append(("known_optimal", float(pf), float(pd)))
    for it in trace.iterations:
        label = f"learned_iter_{it.index}"
        for pf, pd in zip(it.roc.pf, it.roc.pd):
            rows.append((label, float(pf), float(pd)))
    meta = {
        "artifact": "fig7",
        "setup": "learning-loop ROC per iteration, D=20 D1=10, attack (0.5, 9)",
        "seed": seed,
        "auc_gap_final": _fmt(trace.reference_auc - trace.iterations[-1].auc),
    }
    return meta, ["curve", "pf", "pd"], rows


FIGURES: dict[str, Callable[[int], tuple[dict, list, list]]] = {
    "fig2": build_fig2,
    "fig3": build_fig3,
    "fig4": build_fig4,
    "fig5": build_fig5,
    "fig6": build_fig6,
    "fig7": build_fig7,
}

DEFAULT_FIGURE_SEED = 20240601


def reproduce_figure(name: str, out_dir: str = ".", seed: Optional[int] = None) -> str:
    """Render one named artifact to ``<out_dir>/<name>.csv`` and return the path."""
    if name not in FIGURES:
        raise ConfigError(
            f"unknown figure {name!r}; choices: {', '.join(sorted(FIGURES))}"
        )
    seed = DEFAULT_FIGURE_SEED if seed is None else seed
    meta, header, rows = FIGURES[name](seed)
    meta = {"version": __version__, **meta}
    text = render_csv(meta, header, rows)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.csv")
    with open(path, "w", newline="") as f:
        f.write(text)
    return path
