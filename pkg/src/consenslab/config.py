"""Scenario configuration: one TOML document, unknown keys are hard errors."""
from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analysis import WeightAssignment, WeightProvenance, conventional_weights
from .consensus import MatrixKind
from .errors import ConfigError
from .learning import GaussianNodeModel, LearningSettings
from .sensing import AttackParams, H1Variance, NodeProfile, SensingParams
from .topology import NetworkGraph, build_graph

_TOP_KEYS = {"graph", "node", "consensus", "detection", "learning", "run"}
_GRAPH_KEYS = {"nodes", "edges"}
_NODE_KEYS = {"sigma2", "h", "M", "Es", "attack"}
_ATTACK_KEYS = {"P", "delta", "w_tilde"}
_CONSENSUS_KEYS = {"epsilon", "weights", "rule", "tol", "max_iter"}
_DETECTION_KEYS = {"lambda"}
_LEARNING_KEYS = {"D", "D1", "D1_policy", "iterations", "em_tol", "em_max_iter"}
_RUN_KEYS = {"seed", "trials", "p0", "sampling", "h1_variance"}


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs, resolved and cross-validated."""

    graph: NetworkGraph
    profiles: tuple
    epsilon: float
    rule: MatrixKind
    weights: Optional[np.ndarray]  # None -> SNR weights from the profiles
    tol: float
    max_iter: int
    threshold: float
    learning: Optional[LearningSettings]
    seed: int
    trials: int
    p0: float
    sampling: str  # "exact" chi-square draws or "gaussian" model draws
    h1_variance: H1Variance

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    def weight_assignment(self) -> WeightAssignment:
        """Design weights with the provenance implied by the update rule.

        Under the conventional rule weights are self-assigned, so Byzantine
        nodes substitute their tampered value downstream; under the robust
        rule the configured vector is used as given.
        """
        if self.weights is None:
            base = conventional_weights([p.sensing for p in self.profiles])
            weights = base.weights
        else:
            weights = self.weights
        provenance = (
            WeightProvenance.CONVENTIONAL
            if self.rule is MatrixKind.CONVENTIONAL
            else WeightProvenance.CONFIGURED
        )
        return WeightAssignment(weights=np.asarray(weights, float), provenance=provenance)

    def node_models(self) -> list[GaussianNodeModel]:
        return [GaussianNodeModel.from_profile(p, self.h1_variance) for p in self.profiles]


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in [{where}]; allowed: {sorted(allowed)}"
        )


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing required key '{key}' in [{where}]")
    return mapping[key]


def load_scenario(path) -> Scenario:
    with open(path, "rb") as f:
        try:
            doc = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return scenario_from_mapping(doc)


def scenario_from_mapping(doc: dict) -> Scenario:
    _reject_unknown(doc, _TOP_KEYS, "top level")

    graph_cfg = _require(doc, "graph", "top level")
    _reject_unknown(graph_cfg, _GRAPH_KEYS, "graph")
    node_count = int(_require(graph_cfg, "nodes", "graph"))
    graph = build_graph(node_count, graph_cfg.get("edges", []))

    node_tables = _require(doc, "node", "top level")
    if len(node_tables) != node_count:
        raise ConfigError(
            f"[graph] declares {node_count} nodes but {len(node_tables)} [[node]] tables given"
        )
    profiles = []
    for idx, table in enumerate(node_tables, start=1):
        _reject_unknown(table, _NODE_KEYS, f"node #{idx}")
        sensing = SensingParams(
            sigma2=float(_require(table, "sigma2", f"node #{idx}")),
            h=float(_require(table, "h", f"node #{idx}")),
            M=int(_require(table, "M", f"node #{idx}")),
            Es=float(_require(table, "Es", f"node #{idx}")),
        )
        attack = None
        if "attack" in table:
            atk = table["attack"]
            _reject_unknown(atk, _ATTACK_KEYS, f"node #{idx}.attack")
            attack = AttackParams(
                P=float(_require(atk, "P", f"node #{idx}.attack")),
                delta=float(_require(atk, "delta", f"node #{idx}.attack")),
                w_tilde=float(atk.get("w_tilde", 1.0)),
            )
        profiles.append(NodeProfile(sensing=sensing, attack=attack))

    consensus_cfg = _require(doc, "consensus", "top level")
    _reject_unknown(consensus_cfg, _CONSENSUS_KEYS, "consensus")
    rule_name = str(consensus_cfg.get("rule", "conventional"))
    try:
        rule = MatrixKind(rule_name)
    except ValueError:
        raise ConfigError(
            f"consensus.rule must be 'conventional' or 'robust', got {rule_name!r}"
        ) from None
    weights = consensus_cfg.get("weights")
    if weights is not None:
        weights = np.asarray([float(w) for w in weights])
        if weights.shape != (node_count,):
            raise ConfigError(
                f"consensus.weights must list {node_count} values, got {len(weights)}"
            )

    detection_cfg = _require(doc, "detection", "top level")
    _reject_unknown(detection_cfg, _DETECTION_KEYS, "detection")
    threshold = float(_require(detection_cfg, "lambda", "detection"))

    learning = None
    if "learning" in doc:
        lc = doc["learning"]
        _reject_unknown(lc, _LEARNING_KEYS, "learning")
        D = int(_require(lc, "D", "learning"))
        learning = LearningSettings(
            D=D,
            D1=int(lc.get("D1", D // 2)),
            d1_policy=str(lc.get("D1_policy", "fixed")),
            iterations=int(lc.get("iterations", 4)),
            em_tol=float(lc.get("em_tol", 1e-8)),
            em_max_iter=int(lc.get("em_max_iter", 500)),
        )

    run_cfg = doc.get("run", {})
    _reject_unknown(run_cfg, _RUN_KEYS, "run")
    sampling = str(run_cfg.get("sampling", "exact"))
    if sampling not in ("exact", "gaussian"):
        raise ConfigError(f"run.sampling must be 'exact' or 'gaussian', got {sampling!r}")
    variance_name = str(run_cfg.get("h1_variance", H1Variance.DOF_SHIFTED.value))
    try:
        h1_variance = H1Variance(variance_name)
    except ValueError:
        raise ConfigError(
            f"run.h1_variance must be 'dof-shifted' or 'exact', got {variance_name!r}"
        ) from None
    p0 = float(run_cfg.get("p0", 0.5))
    if not 0.0 < p0 < 1.0:
        raise ConfigError(f"run.p0 must be strictly inside (0,1), got {p0}")

    return Scenario(
        graph=graph,
        profiles=tuple(profiles),
        epsilon=float(_require(consensus_cfg, "epsilon", "consensus")),
        rule=rule,
        weights=weights,
        tol=float(consensus_cfg.get("tol", 1e-6)),
        max_iter=int(consensus_cfg.get("max_iter", 500)),
        threshold=threshold,
        learning=learning,
        seed=int(run_cfg.get("seed", 0)),
        trials=int(run_cfg.get("trials", 10000)),
        p0=p0,
        sampling=sampling,
        h1_variance=h1_variance,
    )
