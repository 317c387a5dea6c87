"""Per-node identification of Byzantine neighbors and adaptive weight design.

Each node watches the statistics its neighbors broadcast over windows of D
detection intervals with genie-supplied hypothesis labels, and fits two
models per neighbor: a per-hypothesis Gaussian (honest) via recursive maximum
likelihood, and a two-component Gaussian mixture (Byzantine) via EM with
mixing probabilities shared across hypotheses and variances tied across
components. A likelihood-ratio verdict picks the model, and the matching
closed-form weight formula turns the fitted parameters into fusion weights.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .analysis import (
    NodeMoments,
    RocCurve,
    WeightAssignment,
    WeightProvenance,
    roc_from_moments,
)
from .errors import InvalidParameterError, WeightUndefinedError
from .sensing import (
    AttackParams,
    H1Variance,
    Hypothesis,
    NodeProfile,
    apply_attacks,
    gaussian_moments,
)
from .topology import NetworkGraph

_LOG_2PI = math.log(2.0 * math.pi)
_COLLAPSE_TOL = 1e-8
_MAX_RESTARTS = 5


# ---------------------------------------------------------------------------
# Observation windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LearningWindow:
    """Labelled samples from one neighbor: values plus genie hypothesis labels."""

    values: np.ndarray
    labels: np.ndarray  # 0 for H0, 1 for H1, per sample

    def __post_init__(self):
        if len(self.values) != len(self.labels):
            raise InvalidParameterError("values and labels must have equal length")

    @property
    def D(self) -> int:
        return len(self.values)

    @property
    def D1(self) -> int:
        """Number of H0 intervals in the window."""
        return int(np.sum(self.labels == 0))

    @property
    def h0_values(self) -> np.ndarray:
        return self.values[self.labels == 0]

    @property
    def h1_values(self) -> np.ndarray:
        return self.values[self.labels == 1]

    @staticmethod
    def concat(windows: Sequence["LearningWindow"]) -> "LearningWindow":
        return LearningWindow(
            values=np.concatenate([w.values for w in windows]),
            labels=np.concatenate([w.labels for w in windows]),
        )


# ---------------------------------------------------------------------------
# Recursive MLE of the honest (per-hypothesis Gaussian) model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HonestEstimate:
    """Cumulative Gaussian parameter estimates; None until data arrives.

    Variances are the population-style maximum likelihood estimates, so the
    running recursion reproduces the batch values exactly.
    """

    mu10: Optional[float] = None
    mu11: Optional[float] = None
    var10: Optional[float] = None
    var11: Optional[float] = None
    count0: int = 0
    count1: int = 0

    @property
    def defined(self) -> bool:
        return self.count0 > 0 and self.count1 > 0


def _mle_one(count, mu, var, values):
    n_new = len(values)
    if n_new == 0:
        return count, mu, var
    if count == 0:
        m = float(values.mean())
        return n_new, m, float(((values - m) ** 2).mean())
    total = count + n_new
    m_next = (count * mu + float(values.sum())) / total
    v_next = (
        count * (var + (m_next - mu) ** 2) + float(((values - m_next) ** 2).sum())
    ) / total
    return total, m_next, v_next


def mle_update(prev: HonestEstimate, window: LearningWindow) -> HonestEstimate:
    """Fold one window into the running per-hypothesis mean/variance estimates.

    Result equals the batch MLE over all samples seen so far; a hypothesis
    with no samples yet stays undefined.
    """
    c0, m0, v0 = _mle_one(prev.count0, prev.mu10, prev.var10, window.h0_values)
    c1, m1, v1 = _mle_one(prev.count1, prev.mu11, prev.var11, window.h1_values)
    return HonestEstimate(mu10=m0, mu11=m1, var10=v0, var11=v1, count0=c0, count1=c1)


# ---------------------------------------------------------------------------
# EM for the Byzantine (two-component mixture) model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureEstimate:
    """Fitted two-component mixture: shared mixing probabilities, per-hypothesis
    component means, per-hypothesis tied variances.

    ``history`` is the log-likelihood at the start of each EM sweep of the
    final run (restarts clear it); EM guarantees it is nondecreasing.
    """

    alpha: np.ndarray
    mu0: np.ndarray  # component means under H0: (honest-side, attacked-side)
    mu1: np.ndarray  # component means under H1
    var0: float
    var1: float
    log_likelihood: float
    iterations: int = 0
    restarts: int = 0
    history: tuple = ()

    def component_separation(self) -> float:
        """Smallest between-component gap in standard deviations across hypotheses.

        Near-zero separation means the mixture is indistinguishable from a
        single Gaussian (a zero-strength attacker); verdicts are then chance.
        """
        gap0 = abs(self.mu0[1] - self.mu0[0]) / math.sqrt(max(self.var0, 1e-300))
        gap1 = abs(self.mu1[1] - self.mu1[0]) / math.sqrt(max(self.var1, 1e-300))
        return min(gap0, gap1)

    def is_identifiable(self, min_separation: float = 0.5) -> bool:
        return self.component_separation() >= min_separation

    def swapped(self) -> "MixtureEstimate":
        """Relabel components 1 <-> 2 (likelihoods are invariant under this)."""
        return replace(
            self,
            alpha=self.alpha[::-1].copy(),
            mu0=self.mu0[::-1].copy(),
            mu1=self.mu1[::-1].copy(),
        )


def default_mixture_init(window: LearningWindow, spread: float = 1.0) -> MixtureEstimate:
    """Deterministic symmetric starting point.

    Component means sit one labelled-sample standard deviation to either side
    of the labelled-sample mean, with component 1 on the unattacked side
    (below the H0 mean, above the H1 mean) so the shared mixing
    probabilities line up across hypotheses.
    """
    y0, y1 = window.h0_values, window.h1_values
    if len(y0) == 0 or len(y1) == 0:
        raise InvalidParameterError("window must contain samples under both hypotheses")
    m0, s0 = float(y0.mean()), float(y0.std())
    m1, s1 = float(y1.mean()), float(y1.std())
    return MixtureEstimate(
        alpha=np.array([0.5, 0.5]),
        mu0=np.array([m0 - spread * s0, m0 + spread * s0]),
        mu1=np.array([m1 + spread * s1, m1 - spread * s1]),
        var0=float(y0.var()),
        var1=float(y1.var()),
        log_likelihood=-math.inf,
    )


def _log_normal_pdf(y: np.ndarray, mu: float, var: float) -> np.ndarray:
    var = max(var, 1e-300)
    return -0.5 * (_LOG_2PI + math.log(var)) - (y - mu) ** 2 / (2.0 * var)


def _mixture_estep(y, alpha, mus, var):
    """Log-domain responsibilities and the window's log-likelihood contribution."""
    logp = np.stack(
        [math.log(max(alpha[j], 1e-300)) + _log_normal_pdf(y, mus[j], var) for j in (0, 1)],
        axis=1,
    )
    peak = logp.max(axis=1, keepdims=True)
    marginal = peak[:, 0] + np.log(np.exp(logp - peak).sum(axis=1))
    resp = np.exp(logp - marginal[:, None])
    return resp, float(marginal.sum())


def mixture_log_likelihood(window: LearningWindow, est: MixtureEstimate) -> float:
    _, ll0 = _mixture_estep(window.h0_values, est.alpha, est.mu0, est.var0)
    _, ll1 = _mixture_estep(window.h1_values, est.alpha, est.mu1, est.var1)
    return ll0 + ll1


def em_fit(
    window: LearningWindow,
    init: Optional[MixtureEstimate] = None,
    max_iter: int = 500,
    tol: float = 1e-8,
) -> MixtureEstimate:
    """Fit the structured mixture by EM.

    Mixing probabilities are re-estimated from responsibilities pooled over
    both hypotheses; per-hypothesis variances sum responsibilities over both
    components (tied). Stops when the log-likelihood gain drops below ``tol``.
    A component whose pooled responsibility mass vanishes triggers a
    deterministic restart with the initial means pushed further apart,
    reported through ``restarts``.
    """
    y0, y1 = window.h0_values, window.h1_values
    if len(y0) == 0 or len(y1) == 0:
        raise InvalidParameterError("window must contain samples under both hypotheses")
    est = init if init is not None else default_mixture_init(window)
    alpha = np.asarray(est.alpha, dtype=float).copy()
    mu0 = np.asarray(est.mu0, dtype=float).copy()
    mu1 = np.asarray(est.mu1, dtype=float).copy()
    var0, var1 = float(est.var0), float(est.var1)
    d_total = window.D
    restarts = 0
    history: list[float] = []
    prev_ll = None
    iterations = 0

    sweep = 0
    while sweep < max_iter:
        sweep += 1
        r0, ll0 = _mixture_estep(y0, alpha, mu0, var0)
        r1, ll1 = _mixture_estep(y1, alpha, mu1, var1)
        ll = ll0 + ll1
        history.append(ll)
        iterations = sweep
        if prev_ll is not None and ll - prev_ll < tol:
            break
        prev_ll = ll

        mass = r0.sum(axis=0) + r1.sum(axis=0)
        if mass.min() < _COLLAPSE_TOL and restarts < _MAX_RESTARTS:
            restarts += 1
            fresh = default_mixture_init(window, spread=1.0 + restarts)
            alpha = fresh.alpha.copy()
            mu0, mu1 = fresh.mu0.copy(), fresh.mu1.copy()
            var0, var1 = fresh.var0, fresh.var1
            prev_ll = None
            history = []
            continue

        alpha = mass / d_total
        mass0 = r0.sum(axis=0)
        mass1 = r1.sum(axis=0)
        mu0 = np.array(
            [r0[:, j] @ y0 / mass0[j] if mass0[j] > 0 else mu0[j] for j in (0, 1)]
        )
        mu1 = np.array(
            [r1[:, j] @ y1 / mass1[j] if mass1[j] > 0 else mu1[j] for j in (0, 1)]
        )
        var0 = float(sum(r0[:, j] @ (y0 - mu0[j]) ** 2 for j in (0, 1)) / len(y0))
        var1 = float(sum(r1[:, j] @ (y1 - mu1[j]) ** 2 for j in (0, 1)) / len(y1))

    return MixtureEstimate(
        alpha=alpha,
        mu0=mu0,
        mu1=mu1,
        var0=var0,
        var1=var1,
        log_likelihood=history[-1],
        iterations=iterations,
        restarts=restarts,
        history=tuple(history),
    )


# ---------------------------------------------------------------------------
# Classification and adaptive weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeVerdict:
    """Outcome of the honest-vs-Byzantine likelihood test for one neighbor.

    The recorded log-likelihoods are unpenalized; the identity is decided on
    the model-order-corrected values (see :func:`classify_node`).
    """

    identity: str  # "H" or "B"
    log_likelihood_h: float
    log_likelihood_b: float

    @property
    def is_byzantine(self) -> bool:
        return self.identity == "B"


# Free parameters of each fitted model: (mu, var) per hypothesis for the
# Gaussian; mixing probability, two means per hypothesis, tied variance per
# hypothesis for the mixture.
_GAUSSIAN_DOF = 4
_MIXTURE_DOF = 7


def honest_log_likelihood(window: LearningWindow, est: HonestEstimate) -> float:
    if not est.defined:
        raise InvalidParameterError("honest estimate is undefined for a hypothesis")
    ll = float(_log_normal_pdf(window.h0_values, est.mu10, est.var10).sum())
    ll += float(_log_normal_pdf(window.h1_values, est.mu11, est.var11).sum())
    return ll


def classify_node(
    window: LearningWindow, honest: HonestEstimate, mixture: MixtureEstimate
) -> NodeVerdict:
    """Model verdict over the whole window; ties go to honest.

    The window should hold all samples observed so far: the cumulative
    likelihood strictly sharpens the test relative to a single window.

    Because the mixture nests the Gaussian, the raw maximized likelihoods
    would flag every honest neighbor as Byzantine (the richer model always
    fits at least as well). The comparison therefore applies the Bayesian
    information criterion, charging each model half its parameter count
    times log(sample count); a genuine attack shifts the likelihood by an
    amount that grows linearly in the data and dwarfs the penalty.
    """
    ll_h = honest_log_likelihood(window, honest)
    ll_b = mixture_log_likelihood(window, mixture)
    n = max(window.D, 1)
    score_h = ll_h - 0.5 * _GAUSSIAN_DOF * math.log(n)
    score_b = ll_b - 0.5 * _MIXTURE_DOF * math.log(n)
    return NodeVerdict(
        identity="H" if score_h >= score_b else "B",
        log_likelihood_h=ll_h,
        log_likelihood_b=ll_b,
    )


def honest_weight(est: HonestEstimate) -> float:
    """(mu11 - mu10) / var10 for an honest-classified neighbor."""
    if not est.defined:
        raise WeightUndefinedError("honest estimate undefined; no data yet")
    if est.var10 == 0:
        raise WeightUndefinedError("zero H0 variance estimate")
    return (est.mu11 - est.mu10) / est.var10


def byzantine_weight(est: MixtureEstimate) -> float:
    """Mixture analogue of the deflection-optimal weight.

    sum_j alpha_j (mu_j1 - mu_j0) over
    alpha_1 alpha_2 (mu_10 - mu_20)^2 + (alpha_1 var_10 + alpha_2 var_20);
    the tied fit makes the variance term simply var0.
    """
    num = float(est.alpha @ (est.mu1 - est.mu0))
    den = float(
        est.alpha[0] * est.alpha[1] * (est.mu0[0] - est.mu0[1]) ** 2 + est.var0
    )
    if den == 0:
        raise WeightUndefinedError("degenerate mixture: zero weight denominator")
    return num / den


def adaptive_weights(
    verdicts: Sequence[NodeVerdict],
    honest_estimates: Sequence[HonestEstimate],
    mixture_estimates: Sequence[MixtureEstimate],
    iteration: Optional[int] = None,
) -> WeightAssignment:
    """Per-node fusion weights from the verdict-matched estimate."""
    out = np.empty(len(verdicts))
    for k, v in enumerate(verdicts):
        out[k] = (
            byzantine_weight(mixture_estimates[k])
            if v.is_byzantine
            else honest_weight(honest_estimates[k])
        )
    return WeightAssignment(
        weights=out, provenance=WeightProvenance.OPTIMAL_LEARNED, iteration=iteration
    )


# ---------------------------------------------------------------------------
# Generative node models for learning scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianNodeModel:
    """Ground-truth normal model of one node's broadcast statistic.

    Honest behaviour is N(mu1k, var1k) under hypothesis k; a Byzantine node
    shifts by +/- delta with probability P. Learning scenarios are specified
    directly at this level.
    """

    mu10: float
    mu11: float
    var10: float
    var11: float
    attack: Optional[AttackParams] = None

    @property
    def is_byzantine(self) -> bool:
        return self.attack is not None

    @classmethod
    def from_profile(
        cls, profile: NodeProfile, variance: H1Variance = H1Variance.DOF_SHIFTED
    ) -> "GaussianNodeModel":
        m0, v0 = gaussian_moments(profile.sensing, Hypothesis.H0, variance)
        m1, v1 = gaussian_moments(profile.sensing, Hypothesis.H1, variance)
        return cls(mu10=m0, mu11=m1, var10=v0, var11=v1, attack=profile.attack)

    def to_moments(self) -> NodeMoments:
        if self.attack is None:
            return NodeMoments(self.mu10, self.mu11, self.var10, self.var11)
        return NodeMoments(
            self.mu10,
            self.mu11,
            self.var10,
            self.var11,
            byzantine=True,
            P=self.attack.P,
            delta=self.attack.delta,
        )

    def draw(
        self, hypothesis: Hypothesis, rng: np.random.Generator, size: int
    ) -> np.ndarray:
        mu = self.mu10 if hypothesis is Hypothesis.H0 else self.mu11
        var = self.var10 if hypothesis is Hypothesis.H0 else self.var11
        values = mu + math.sqrt(var) * rng.standard_normal(size)
        if self.attack is not None:
            values = apply_attacks(values, hypothesis, self.attack, rng)
        return values


def model_optimal_weight(model: GaussianNodeModel) -> float:
    """Deflection-optimal weight from ground-truth model parameters."""
    if model.attack is None:
        return (model.mu11 - model.mu10) / model.var10
    p, d = model.attack.P, model.attack.delta
    num = (model.mu11 - model.mu10) - 2.0 * p * d
    den = p * (1.0 - p) * d * d + model.var10
    return num / den


def model_optimal_weights(models: Sequence[GaussianNodeModel]) -> WeightAssignment:
    return WeightAssignment(
        weights=np.array([model_optimal_weight(m) for m in models]),
        provenance=WeightProvenance.OPTIMAL_KNOWN,
    )


# ---------------------------------------------------------------------------
# The learning loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LearningSettings:
    """Knobs of the identify/estimate/adapt loop."""

    D: int = 20
    D1: int = 10
    d1_policy: str = "fixed"  # or "bernoulli(p0)"
    iterations: int = 4
    em_tol: float = 1e-8
    em_max_iter: int = 500

    def __post_init__(self):
        if self.D < 2:
            raise InvalidParameterError("window length D must be >= 2")
        if not 0 < self.D1 < self.D:
            raise InvalidParameterError("D1 must satisfy 0 < D1 < D")
        if self.d1_policy != "fixed" and self._bernoulli_p() is None:
            raise InvalidParameterError(
                f"d1_policy must be 'fixed' or 'bernoulli(p)', got {self.d1_policy!r}"
            )

    def _bernoulli_p(self) -> Optional[float]:
        m = re.fullmatch(r"bernoulli\(\s*([0-9.eE+-]+)\s*\)", self.d1_policy)
        if not m:
            return None
        p = float(m.group(1))
        return p if 0.0 <= p <= 1.0 else None

    def labels(self, rng: np.random.Generator) -> np.ndarray:
        """Genie hypothesis labels for one window (0 = H0, 1 = H1)."""
        if self.d1_policy == "fixed":
            return np.concatenate(
                (np.zeros(self.D1, dtype=int), np.ones(self.D - self.D1, dtype=int))
            )
        p0 = self._bernoulli_p()
        return (rng.random(self.D) >= p0).astype(int)


@dataclass(frozen=True)
class ObservationRecord:
    """One (iteration, observer, neighbor) row of the learning trace."""

    iteration: int
    observer: int
    neighbor: int
    verdict: NodeVerdict
    honest: HonestEstimate
    mixture: MixtureEstimate
    weight: float


@dataclass(frozen=True)
class LearningIteration:
    index: int
    records: tuple
    weights: WeightAssignment  # per-node, neighbor opinions averaged
    roc: RocCurve
    auc: float


@dataclass(frozen=True)
class LearningTrace:
    iterations: tuple
    reference_weights: WeightAssignment
    reference_roc: RocCurve
    reference_auc: float


def learning_loop(
    graph: NetworkGraph,
    models: Sequence[GaussianNodeModel],
    settings: LearningSettings,
    seed: int,
    iterations: Optional[int] = None,
) -> LearningTrace:
    """Run the identify/estimate/adapt loop for T learning iterations.

    Every node observes the broadcast statistics of its graph neighbors only.
    Honest-model estimates warm-start from the cumulative recursion and the
    mixture fit warm-starts from the previous iteration's estimate; the
    verdict uses the likelihood over all samples seen so far. Per-node
    weights for the ROC are the averaged opinions of the node's neighbors
    (identical when observers share broadcast data, as here). The ROC itself
    is evaluated against the ground-truth models.

    A window's labels are resampled per iteration; all nodes share the genie
    schedule. Samples are drawn node-major from a single seeded generator, so
    identical (models, settings, seed) reproduce the trace exactly.
    """
    T = settings.iterations if iterations is None else iterations
    n = graph.node_count
    rng = np.random.default_rng(seed)
    true_moments = [m.to_moments() for m in models]
    reference = model_optimal_weights(models)
    reference_roc = roc_from_moments(true_moments, reference.weights)

    honest_state: dict[tuple[int, int], HonestEstimate] = {}
    mixture_state: dict[tuple[int, int], MixtureEstimate] = {}
    seen: dict[int, list[LearningWindow]] = {i: [] for i in range(n)}

    out_iterations = []
    for t in range(1, T + 1):
        labels = settings.labels(rng)
        windows = []
        for i in range(n):
            values = np.empty(settings.D)
            for hyp in (Hypothesis.H0, Hypothesis.H1):
                mask = labels == hyp.value
                values[mask] = models[i].draw(hyp, rng, int(mask.sum()))
            windows.append(LearningWindow(values=values, labels=labels))
            seen[i].append(windows[i])

        records = []
        opinions: dict[int, list[float]] = {i: [] for i in range(n)}
        for observer in range(n):
            for neighbor in graph.neighbors(observer):
                key = (observer, neighbor)
                window = windows[neighbor]
                honest = mle_update(
                    honest_state.get(key, HonestEstimate()), window
                )
                honest_state[key] = honest
                mixture = em_fit(
                    window,
                    init=mixture_state.get(key),
                    max_iter=settings.em_max_iter,
                    tol=settings.em_tol,
                )
                mixture_state[key] = mixture
                cumulative = LearningWindow.concat(seen[neighbor])
                verdict = classify_node(cumulative, honest, mixture)
                weight = (
                    byzantine_weight(mixture)
                    if verdict.is_byzantine
                    else honest_weight(honest)
                )
                opinions[neighbor].append(weight)
                records.append(
                    ObservationRecord(
                        iteration=t,
                        observer=observer,
                        neighbor=neighbor,
                        verdict=verdict,
                        honest=honest,
                        mixture=mixture,
                        weight=weight,
                    )
                )

        for i in range(n):
            if not opinions[i]:
                raise InvalidParameterError(
                    f"node {i + 1} has no neighbors; no one can assign its weight"
                )
        merged = np.array([float(np.mean(opinions[i])) for i in range(n)])
        weights = WeightAssignment(
            weights=merged,
            provenance=WeightProvenance.OPTIMAL_LEARNED,
            iteration=t,
        )
        roc = roc_from_moments(true_moments, merged)
        out_iterations.append(
            LearningIteration(
                index=t,
                records=tuple(records),
                weights=weights,
                roc=roc,
                auc=roc.auc(),
            )
        )

    return LearningTrace(
        iterations=tuple(out_iterations),
        reference_weights=reference,
        reference_roc=reference_roc,
        reference_auc=reference_roc.auc(),
    )
