"""Per-node energy statistics under both hypotheses, plus the falsification model.

The sensing statistic of a node is the received energy summed over M samples.
Scaled by the noise variance it is exactly chi-square distributed: central
with M degrees of freedom when no signal is present, noncentral with
parameter eta (the local SNR) when it is. Samplers here use the exact
sum-of-squared-Gaussians construction; :func:`gaussian_moments` carries the
normal approximation used by the closed-form analysis.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParameterError


class Hypothesis(enum.Enum):
    H0 = 0
    H1 = 1


class H1Variance(enum.Enum):
    """Convention for the statistic's variance under H1.

    DOF_SHIFTED treats the statistic as if it were a central chi-square with
    M + eta degrees of freedom, giving 2(M + eta) sigma^4. EXACT is the true
    noncentral chi-square variance 2(M + 2 eta) sigma^4. The published
    transient curves follow the DOF_SHIFTED value, so it is the default;
    EXACT is what Monte Carlo sampling of the statistic actually produces.
    """

    DOF_SHIFTED = "dof-shifted"
    EXACT = "exact"


@dataclass(frozen=True)
class SensingParams:
    """Energy-detector parameters of one node.

    sigma2: AWGN variance (> 0)
    h: channel gain
    M: samples per detection interval (time-bandwidth product, >= 1)
    Es: sensed signal energy over the interval (>= 0)
    """

    sigma2: float
    h: float
    M: int
    Es: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise InvalidParameterError(f"sigma2 must be > 0, got {self.sigma2}")
        if self.M < 1:
            raise InvalidParameterError(f"M must be >= 1, got {self.M}")
        if self.Es < 0:
            raise InvalidParameterError(f"Es must be >= 0, got {self.Es}")


@dataclass(frozen=True)
class AttackParams:
    """Falsification behaviour of a Byzantine node.

    With probability P the node shifts its reported statistic by +delta
    under H0 and -delta under H1; it also reports the tampered self-assigned
    weight w_tilde to the conventional update rule.
    """

    P: float
    delta: float
    w_tilde: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.P <= 1.0:
            raise InvalidParameterError(f"attack probability must be in [0,1], got {self.P}")
        if self.delta < 0:
            raise InvalidParameterError(f"attack strength must be >= 0, got {self.delta}")
        if self.w_tilde <= 0:
            raise InvalidParameterError(f"tampered weight must be > 0, got {self.w_tilde}")


@dataclass(frozen=True)
class NodeProfile:
    """Sensing parameters plus identity; ``attack is None`` means honest."""

    sensing: SensingParams
    attack: Optional[AttackParams] = None

    @property
    def is_byzantine(self) -> bool:
        return self.attack is not None


def local_snr(p: SensingParams) -> float:
    """eta = Es * h^2 / sigma^2."""
    return p.Es * p.h * p.h / p.sigma2


def sample_statistic(p: SensingParams, hypothesis: Hypothesis, rng: np.random.Generator) -> float:
    """One draw of the energy statistic by summing M squared Gaussian samples.

    Under H1 each sample carries the constant mean h*sqrt(Es/M), so the scaled
    statistic is exactly noncentral chi-square with parameter eta. This is the
    exact construction, not the normal approximation.
    """
    return float(sample_statistics(p, hypothesis, rng, 1)[0])


def sample_statistics(
    p: SensingParams, hypothesis: Hypothesis, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Vectorised version of :func:`sample_statistic`; returns ``size`` draws."""
    mean = p.h * math.sqrt(p.Es / p.M) if hypothesis is Hypothesis.H1 else 0.0
    x = mean + math.sqrt(p.sigma2) * rng.standard_normal((size, p.M))
    return np.einsum("ij,ij->i", x, x)


def gaussian_moments(
    p: SensingParams,
    hypothesis: Hypothesis,
    variance: H1Variance = H1Variance.DOF_SHIFTED,
) -> tuple[float, float]:
    """(mean, variance) of the statistic's normal approximation.

    H0: (M sigma^2, 2 M sigma^4). H1 mean is (M + eta) sigma^2; the H1
    variance follows the selected :class:`H1Variance` convention.
    """
    s2 = p.sigma2
    if hypothesis is Hypothesis.H0:
        return p.M * s2, 2.0 * p.M * s2 * s2
    eta = local_snr(p)
    if variance is H1Variance.EXACT:
        var = 2.0 * (p.M + 2.0 * eta) * s2 * s2
    else:
        var = 2.0 * (p.M + eta) * s2 * s2
    return (p.M + eta) * s2, var


def attack_shift(hypothesis: Hypothesis, a: AttackParams) -> float:
    """Signed shift applied when the attack branch fires: +delta under H0, -delta under H1."""
    return a.delta if hypothesis is Hypothesis.H0 else -a.delta


def apply_attack(y: float, hypothesis: Hypothesis, a: AttackParams, rng: np.random.Generator) -> float:
    """Falsify one statistic: with probability P shift it against the truth."""
    if rng.random() < a.P:
        return y + attack_shift(hypothesis, a)
    return y


def apply_attacks(
    y: np.ndarray, hypothesis: Hypothesis, a: AttackParams, rng: np.random.Generator
) -> np.ndarray:
    """Vectorised :func:`apply_attack`; one independent coin per entry."""
    fired = rng.random(y.shape) < a.P
    return y + attack_shift(hypothesis, a) * fired
