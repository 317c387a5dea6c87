"""Closed-form detection analysis.

Steady-state moments and the deflection coefficient of the fused statistic,
the blinding condition, transient detection probabilities after finitely many
consensus steps (Gaussian-mixture enumeration and its vectorized twin),
deflection-optimal weights, and swept-threshold ROC curves.

The fused statistic is ``sum_i w_i Y_i / sum_i w_i``. A Byzantine node's
reported statistic is, under the normal approximation, a two-component
mixture: its honest-branch Gaussian with probability 1 - P and the
delta-shifted Gaussian with probability P. All closed forms here follow from
that model plus independence across nodes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import erfc

from .errors import (
    DegenerateWeightsError,
    EnumerationLimitError,
    InvalidMomentsError,
    InvalidParameterError,
)
from .sensing import (
    H1Variance,
    Hypothesis,
    NodeProfile,
    SensingParams,
    gaussian_moments,
    local_snr,
)

# Subset enumeration is 2^N1; beyond this cap Monte Carlo is the only option.
ENUMERATION_CAP = 20

_SQRT2 = math.sqrt(2.0)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def q_function(x):
    """Standard Gaussian tail P(Z > x), via erfc (accurate to ~1e-15 relative)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)


# ---------------------------------------------------------------------------
# Weight assignments
# ---------------------------------------------------------------------------

class WeightProvenance(enum.Enum):
    """How a weight vector was produced.

    CONVENTIONAL weights are self-assigned, so a Byzantine node substitutes
    its tampered weight at fusion time; all other provenances are assigned by
    the network designer (or by neighbors) and are used as given.
    """

    CONVENTIONAL = "conventional"
    OPTIMAL_KNOWN = "optimal-known"
    OPTIMAL_LEARNED = "optimal-learned"
    EQUAL_GAIN = "equal-gain"
    EXCLUSION = "exclusion"
    CONFIGURED = "configured"


@dataclass(frozen=True)
class WeightAssignment:
    """Per-node fusion weights plus their provenance.

    Deflection-optimal weights may be negative; running actual consensus with
    such a vector requires the offset trick in :func:`apply_negative_weight_shift`.
    """

    weights: np.ndarray
    provenance: WeightProvenance
    iteration: Optional[int] = None

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    @property
    def normalized(self) -> np.ndarray:
        total = self.total
        if total == 0.0:
            raise DegenerateWeightsError("weights sum to zero; cannot normalize")
        return np.asarray(self.weights, dtype=float) / total


def conventional_weights(params: Sequence[SensingParams]) -> WeightAssignment:
    """SNR-over-noise weights w_i = (eta_i/sigma_i^2) / sum_j (eta_j/sigma_j^2)."""
    raw = np.array([local_snr(p) / p.sigma2 for p in params])
    total = raw.sum()
    if total <= 0:
        raise DegenerateWeightsError("all nodes have zero SNR; weights undefined")
    return WeightAssignment(weights=raw / total, provenance=WeightProvenance.CONVENTIONAL)


def equal_gain_weights(node_count: int) -> WeightAssignment:
    return WeightAssignment(
        weights=np.full(node_count, 1.0 / node_count),
        provenance=WeightProvenance.EQUAL_GAIN,
    )


def exclusion_weights(profiles: Sequence[NodeProfile]) -> WeightAssignment:
    """Zero weight for Byzantines, SNR weights renormalized over honest nodes."""
    raw = np.array(
        [0.0 if p.is_byzantine else local_snr(p.sensing) / p.sensing.sigma2 for p in profiles]
    )
    total = raw.sum()
    if total <= 0:
        raise DegenerateWeightsError("no honest node with positive SNR to keep")
    return WeightAssignment(weights=raw / total, provenance=WeightProvenance.EXCLUSION)


def optimal_weights(profiles: Sequence[NodeProfile]) -> WeightAssignment:
    """Deflection-maximizing weights for known identities and attack parameters.

    Honest: w = eta / (2 M sigma^2). Byzantine:
    w = (eta sigma^2 - 2 P delta) / (delta^2 P (1-P) + 2 M sigma^4), which can
    be negative when the attack is strong; see
    :func:`apply_negative_weight_shift` for running consensus in that case.
    """
    out = np.empty(len(profiles))
    for k, p in enumerate(profiles):
        s = p.sensing
        eta = local_snr(s)
        if p.is_byzantine:
            a = p.attack
            num = eta * s.sigma2 - 2.0 * a.P * a.delta
            den = a.delta**2 * a.P * (1.0 - a.P) + 2.0 * s.M * s.sigma2**2
            out[k] = num / den
        else:
            out[k] = eta / (2.0 * s.M * s.sigma2)
    return WeightAssignment(weights=out, provenance=WeightProvenance.OPTIMAL_KNOWN)


def effective_weight_vector(
    profiles: Sequence[NodeProfile], weights: WeightAssignment
) -> np.ndarray:
    """Weights as they enter the fused statistic.

    Under the self-assigned (CONVENTIONAL) regime Byzantine nodes report
    their tampered weight; designed regimes use the assignment as given.
    """
    eff = np.asarray(weights.weights, dtype=float).copy()
    if weights.provenance is WeightProvenance.CONVENTIONAL:
        for k, p in enumerate(profiles):
            if p.is_byzantine:
                eff[k] = p.attack.w_tilde
    return eff


# ---------------------------------------------------------------------------
# Steady-state moments, deflection, blinding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GlobalStatisticMoments:
    """Conditional moments of the fused statistic: means under both hypotheses
    and the variance under H0."""

    mu0: float
    mu1: float
    var0: float


def global_moments(
    profiles: Sequence[NodeProfile], weights: WeightAssignment
) -> GlobalStatisticMoments:
    """Moments of ``sum w_i Y~_i / sum w_i`` under the attack model.

    The H0 variance picks up the attack's Bernoulli spread
    P(1-P) delta^2 on top of the chi-square term 2 M sigma^4.
    """
    eff = effective_weight_vector(profiles, weights)
    total = float(eff.sum())
    if total == 0.0:
        raise DegenerateWeightsError("effective weights sum to zero")
    delta_w = eff / total
    mu0 = mu1 = var0 = 0.0
    for d, p in zip(delta_w, profiles):
        s = p.sensing
        eta = local_snr(s)
        m0 = s.M * s.sigma2
        m1 = (s.M + eta) * s.sigma2
        v0 = 2.0 * s.M * s.sigma2**2
        if p.is_byzantine:
            a = p.attack
            mu0 += d * (m0 + a.P * a.delta)
            mu1 += d * (m1 - a.P * a.delta)
            var0 += d * d * (a.P * (1.0 - a.P) * a.delta**2 + v0)
        else:
            mu0 += d * m0
            mu1 += d * m1
            var0 += d * d * v0
    return GlobalStatisticMoments(mu0=mu0, mu1=mu1, var0=var0)


def deflection_coefficient(m: GlobalStatisticMoments) -> float:
    """(mu1 - mu0)^2 / var0, the scalar proxy for detection performance."""
    if m.var0 <= 0:
        raise InvalidMomentsError(f"H0 variance must be > 0, got {m.var0}")
    return (m.mu1 - m.mu0) ** 2 / m.var0


def blinding_residual(
    profiles: Sequence[NodeProfile], weights: WeightAssignment
) -> float:
    """Signed distance from the blinding condition; zero iff the deflection is zero.

    Equals ``sum_byz w_i (2 P_i delta_i - eta_i sigma_i^2)
    - sum_honest w_i eta_i sigma_i^2`` with the same effective weights the
    fused statistic uses.
    """
    eff = effective_weight_vector(profiles, weights)
    acc = 0.0
    for w, p in zip(eff, profiles):
        s = p.sensing
        gain = local_snr(s) * s.sigma2
        if p.is_byzantine:
            acc += w * (2.0 * p.attack.P * p.attack.delta - gain)
        else:
            acc -= w * gain
    return acc


def alpha_blind(eta: float, sigma2: float, P: float, delta: float) -> float:
    """Minimum Byzantine fraction that zeroes the deflection, for a homogeneous
    network: min(eta sigma^2 / (2 P delta), 1).

    Returns ``inf`` when P * delta == 0 (no attack pressure; the network
    cannot be blinded at any fraction).
    """
    pressure = P * delta
    if pressure <= 0.0:
        return math.inf
    return min(eta * sigma2 / (2.0 * pressure), 1.0)


# ---------------------------------------------------------------------------
# Per-node mixture moments (normal approximation of reported statistics)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeMoments:
    """Normal-approximation moments of one node's reported statistic.

    ``mu1k``/``var1k`` describe the honest branch under hypothesis k; a
    Byzantine node's attacked branch sits at ``mu1k +/- delta`` with the same
    variance and fires with probability P.
    """

    mu10: float
    mu11: float
    var10: float
    var11: float
    byzantine: bool = False
    P: float = 0.0
    delta: float = 0.0

    @property
    def mu20(self) -> float:
        return self.mu10 + self.delta

    @property
    def mu21(self) -> float:
        return self.mu11 - self.delta

    def branch_means(self, hypothesis: Hypothesis) -> tuple[float, float]:
        if hypothesis is Hypothesis.H0:
            return self.mu10, self.mu20
        return self.mu11, self.mu21

    def variance(self, hypothesis: Hypothesis) -> float:
        return self.var10 if hypothesis is Hypothesis.H0 else self.var11

    @classmethod
    def from_profile(
        cls, profile: NodeProfile, variance: H1Variance = H1Variance.DOF_SHIFTED
    ) -> "NodeMoments":
        m0, v0 = gaussian_moments(profile.sensing, Hypothesis.H0, variance)
        m1, v1 = gaussian_moments(profile.sensing, Hypothesis.H1, variance)
        if profile.is_byzantine:
            return cls(m0, m1, v0, v1, True, profile.attack.P, profile.attack.delta)
        return cls(m0, m1, v0, v1)


def moments_from_profiles(
    profiles: Sequence[NodeProfile], variance: H1Variance = H1Variance.DOF_SHIFTED
) -> list[NodeMoments]:
    return [NodeMoments.from_profile(p, variance) for p in profiles]


# ---------------------------------------------------------------------------
# Transient mixtures (Gaussian-mixture law of the statistic after t steps)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransientMixture:
    """Gaussian mixture of a linearly combined statistic.

    One component per subset of Byzantines behaving honestly; weights are the
    subset probabilities and sum to one.
    """

    component_weights: np.ndarray
    component_means: np.ndarray
    component_vars: np.ndarray

    def __len__(self) -> int:
        return len(self.component_weights)


def statistic_mixture(
    row: np.ndarray, moments: Sequence[NodeMoments], hypothesis: Hypothesis
) -> TransientMixture:
    """Mixture law of ``sum_i row_i * Y~_i`` under the given hypothesis.

    Enumerates every subset A of Byzantines behaving honestly; the component
    probability is ``prod_{u in A}(1-P_u) * prod_{u not in A} P_u``. Means add
    the row-scaled branch means; the variance is shared across components
    because attacked and honest branches have equal spread.
    """
    row = np.asarray(row, dtype=float)
    byz = [k for k, m in enumerate(moments) if m.byzantine]
    n1 = len(byz)
    if n1 > ENUMERATION_CAP:
        raise EnumerationLimitError(
            f"{n1} Byzantine nodes need 2^{n1} components (cap {ENUMERATION_CAP}); "
            "use Monte Carlo instead"
        )
    var = float(sum((row[k] ** 2) * m.variance(hypothesis) for k, m in enumerate(moments)))
    base = float(
        sum(row[k] * m.branch_means(hypothesis)[0] for k, m in enumerate(moments))
    )
    count = 1 << n1
    probs = np.empty(count)
    means = np.empty(count)
    for s in range(count):
        prob = 1.0
        mean = base
        for bit, k in enumerate(byz):
            m = moments[k]
            if (s >> bit) & 1:  # behaves honestly
                prob *= 1.0 - m.P
            else:
                prob *= m.P
                honest_mean, attacked_mean = m.branch_means(hypothesis)
                mean += row[k] * (attacked_mean - honest_mean)
        probs[s] = prob
        means[s] = mean
    return TransientMixture(
        component_weights=probs,
        component_means=means,
        component_vars=np.full(count, var),
    )


def transient_mixture(
    Wt: np.ndarray,
    node: int,
    hypothesis: Hypothesis,
    profiles: Sequence[NodeProfile],
    variance: H1Variance = H1Variance.DOF_SHIFTED,
) -> TransientMixture:
    """Mixture law of node ``node``'s statistic given the consensus power W^t."""
    return statistic_mixture(
        np.asarray(Wt)[node], moments_from_profiles(profiles, variance), hypothesis
    )


def mixture_tail(mix: TransientMixture, threshold: float) -> float:
    """P(statistic > threshold) under the mixture law.

    Zero-variance components degenerate to step functions.
    """
    total = 0.0
    for p, m, v in zip(mix.component_weights, mix.component_means, mix.component_vars):
        if v <= 0.0:
            total += p * (1.0 if m > threshold else 0.0)
        else:
            total += p * float(q_function((threshold - m) / math.sqrt(v)))
    return total


def transient_pd_pf(
    mixture_h1: TransientMixture, mixture_h0: TransientMixture, threshold: float
) -> tuple[float, float]:
    """(Pd, Pf) of the threshold test on the two mixture laws."""
    return mixture_tail(mixture_h1, threshold), mixture_tail(mixture_h0, threshold)


def vectorized_tail(
    row: np.ndarray,
    moments: Sequence[NodeMoments],
    hypothesis: Hypothesis,
    threshold: float,
) -> float:
    """Tail probability via the binary-matrix tensorized form.

    Rows of the 2^N1 x N1 matrix A are the binary expansions of 0..2^N1 - 1
    (1 = behaves honestly); the component probabilities are the row products
    of (1-P) A + P A^c and the means follow by one matrix product per branch.
    Agrees with the subset enumeration to floating-point accuracy.
    """
    row = np.asarray(row, dtype=float)
    byz = [k for k, m in enumerate(moments) if m.byzantine]
    n1 = len(byz)
    if n1 > ENUMERATION_CAP:
        raise EnumerationLimitError(
            f"{n1} Byzantine nodes need 2^{n1} components (cap {ENUMERATION_CAP})"
        )
    var = float(sum((row[k] ** 2) * m.variance(hypothesis) for k, m in enumerate(moments)))
    honest_term = float(
        sum(
            row[k] * m.branch_means(hypothesis)[0]
            for k, m in enumerate(moments)
            if not m.byzantine
        )
    )
    if n1 == 0:
        if var <= 0.0:
            return 1.0 if honest_term > threshold else 0.0
        return float(q_function((threshold - honest_term) / math.sqrt(var)))
    A = (np.arange(1 << n1)[:, None] >> np.arange(n1)[None, :]) & 1
    p_vec = np.array([moments[k].P for k in byz])
    honest_means = np.array([row[k] * moments[k].branch_means(hypothesis)[0] for k in byz])
    attack_means = np.array([row[k] * moments[k].branch_means(hypothesis)[1] for k in byz])
    b = np.prod((1.0 - p_vec) * A + p_vec * (1 - A), axis=1)
    mu = A @ honest_means + (1 - A) @ attack_means + honest_term
    if var <= 0.0:
        return float(b @ (mu > threshold))
    z = (threshold - mu) / math.sqrt(var)
    return float(b @ q_function(z))


def vectorized_pd(
    Wt: np.ndarray,
    node: int,
    threshold: float,
    profiles: Sequence[NodeProfile],
    hypothesis: Hypothesis = Hypothesis.H1,
    variance: H1Variance = H1Variance.DOF_SHIFTED,
) -> float:
    """Transient detection probability via the tensorized form (see
    :func:`vectorized_tail`); identical inputs as :func:`transient_mixture`."""
    return vectorized_tail(
        np.asarray(Wt)[node],
        moments_from_profiles(profiles, variance),
        hypothesis,
        threshold,
    )


# ---------------------------------------------------------------------------
# Negative-weight offset for running consensus with optimal weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NegativeWeightShift:
    """Runtime offset that restores nonnegative consensus weights.

    Each negative-weight node i runs with w_i + c / x_i(0), which adds exactly
    c to the weighted sum per shifted node; a threshold on the weighted-sum
    scale moves up by ``shifted_count * c`` to compensate.
    """

    weights: np.ndarray
    threshold: float
    constant: float
    shifted_count: int


def negative_shift_constant(weights: np.ndarray, scales: np.ndarray) -> float:
    """Design-time offset constant c = max_i(-w_i * scale_i) * (1 + 1e-6).

    ``scales`` is the design scale of each node's statistic (its H0 mean
    M sigma^2). Returns 0.0 when no weight is negative.
    """
    w = np.asarray(weights, dtype=float)
    neg = w < 0
    if not np.any(neg):
        return 0.0
    return float(np.max(-w[neg] * np.asarray(scales, dtype=float)[neg])) * (1.0 + 1e-6)


def apply_negative_weight_shift(
    weights: np.ndarray, x0: np.ndarray, threshold: float, constant: float
) -> NegativeWeightShift:
    """Shift negative weights by c / x_i(0) and adjust the weighted-sum threshold.

    ``threshold`` must be on the weighted-sum scale (sum w_i x_i, not the
    weighted average); it gains c per shifted node so the decision region is
    unchanged whenever the shifted weights are all nonnegative.
    """
    w = np.asarray(weights, dtype=float).copy()
    x0 = np.asarray(x0, dtype=float)
    mask = w < 0
    beta = int(mask.sum())
    if beta:
        if np.any(x0[mask] == 0.0):
            raise InvalidParameterError("zero initial statistic; offset undefined")
        w[mask] = w[mask] + constant / x0[mask]
    return NegativeWeightShift(
        weights=w,
        threshold=threshold + beta * constant,
        constant=constant,
        shifted_count=beta,
    )


# ---------------------------------------------------------------------------
# ROC curves from steady-state mixtures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    """Swept-threshold operating points, ordered by decreasing threshold."""

    thresholds: np.ndarray
    pf: np.ndarray
    pd: np.ndarray

    def auc(self) -> float:
        """Area under the curve with (0,0) and (1,1) anchors appended."""
        order = np.argsort(self.pf)
        x = np.concatenate(([0.0], self.pf[order], [1.0]))
        y = np.concatenate(([0.0], self.pd[order], [1.0]))
        return float(_trapezoid(y, x))

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.pf.tolist(), self.pd.tolist()))


def steady_state_mixtures(
    moments: Sequence[NodeMoments], weights: np.ndarray
) -> tuple[TransientMixture, TransientMixture]:
    """(H1, H0) mixture laws of the converged statistic for given fusion weights."""
    w = np.asarray(weights, dtype=float)
    total = float(w.sum())
    if total == 0.0:
        raise DegenerateWeightsError("weights sum to zero; fused statistic undefined")
    row = w / total
    return (
        statistic_mixture(row, moments, Hypothesis.H1),
        statistic_mixture(row, moments, Hypothesis.H0),
    )


def default_threshold_grid(
    moments: Sequence[NodeMoments], weights: np.ndarray, size: int = 401
) -> np.ndarray:
    """Threshold sweep covering both mixtures out to +/- 8 standard deviations."""
    mix1, mix0 = steady_state_mixtures(moments, weights)
    stds = np.sqrt(np.concatenate((mix1.component_vars, mix0.component_vars)))
    means = np.concatenate((mix1.component_means, mix0.component_means))
    width = 8.0 * float(stds.max()) if stds.max() > 0 else 1.0
    return np.linspace(means.min() - width, means.max() + width, size)


def roc_from_moments(
    moments: Sequence[NodeMoments],
    weights: np.ndarray,
    thresholds: Optional[np.ndarray] = None,
) -> RocCurve:
    """Closed-form ROC of the fused statistic for an explicit weight vector."""
    if thresholds is None:
        thresholds = default_threshold_grid(moments, weights)
    thresholds = np.sort(np.asarray(thresholds, dtype=float))[::-1]
    mix1, mix0 = steady_state_mixtures(moments, weights)
    pd = _mixture_tail_grid(mix1, thresholds)
    pf = _mixture_tail_grid(mix0, thresholds)
    return RocCurve(thresholds=thresholds, pf=pf, pd=pd)


def _mixture_tail_grid(mix: TransientMixture, thresholds: np.ndarray) -> np.ndarray:
    out = np.zeros_like(thresholds)
    for p, m, v in zip(mix.component_weights, mix.component_means, mix.component_vars):
        if v <= 0.0:
            out += p * (m > thresholds)
        else:
            out += p * q_function((thresholds - m) / math.sqrt(v))
    return out


def roc_closed_form(
    profiles: Sequence[NodeProfile],
    weights: WeightAssignment,
    thresholds: Optional[np.ndarray] = None,
    variance: H1Variance = H1Variance.DOF_SHIFTED,
) -> RocCurve:
    """Closed-form ROC under the steady-state mixture model of the fused statistic."""
    moments = moments_from_profiles(profiles, variance)
    eff = effective_weight_vector(profiles, weights)
    return roc_from_moments(moments, eff, thresholds)


def pd_at_matched_pf(
    mixture_h1: TransientMixture,
    mixture_h0: TransientMixture,
    pf_target: float,
    tol: float = 1e-12,
) -> float:
    """Pd at the threshold whose Pf equals ``pf_target`` (bisection).

    Pf is continuous and strictly decreasing in the threshold for
    positive-variance mixtures, so the match is unique.
    """
    if not 0.0 < pf_target < 1.0:
        raise InvalidParameterError("pf target must be strictly inside (0, 1)")
    means = np.concatenate((mixture_h0.component_means, mixture_h1.component_means))
    stds = np.sqrt(
        np.concatenate((mixture_h0.component_vars, mixture_h1.component_vars))
    )
    lo = float(means.min() - 14.0 * max(stds.max(), 1e-12))
    hi = float(means.max() + 14.0 * max(stds.max(), 1e-12))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mixture_tail(mixture_h0, mid) > pf_target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
    return mixture_tail(mixture_h1, 0.5 * (lo + hi))
