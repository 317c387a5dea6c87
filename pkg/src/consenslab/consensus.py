"""Perron-type consensus update matrices and their iteration.

Two constructions are provided. The conventional matrix
``W = I - eps * diag(1/w) L`` lets every node scale its own update by its
self-assigned weight, which a Byzantine node can tamper with. The robust
matrix applies each node's data weight through its neighbors instead:
``W_hat = I - eps * (T (.) L)`` with ``(.)`` the elementwise product and
``T_ij = w_j`` off-diagonal, ``T_ii = (sum of neighbor weights) / l_ii``,
realizing the update

    x_i(k+1) = x_i(k) + eps * sum_{j in N_i} w_j (x_j(k) - x_i(k)).

For ``0 < eps < 1 / max_i sum_{j in N_i} w_j`` on a connected graph the
robust matrix is nonnegative and primitive with left eigenvector w and right
eigenvector 1, so iteration converges to the weighted average
``sum w_i x_i(0) / sum w_i``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EpsilonBoundError, InvalidParameterError


class MatrixKind(enum.Enum):
    CONVENTIONAL = "conventional"
    ROBUST = "robust"


@dataclass(frozen=True)
class ConsensusMatrix:
    """An update matrix together with the step size and weights it encodes."""

    matrix: np.ndarray
    epsilon: float
    weights: np.ndarray
    kind: MatrixKind

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SpectralReport:
    """Eigenvalue summary of an update matrix."""

    spectral_radius: float
    modulus_one_count: int
    primitive: bool
    eigenvalues: np.ndarray


@dataclass(frozen=True)
class ConsensusRun:
    """Trajectory of one consensus iteration.

    ``trajectory[k]`` is the state after k update steps; ``converged_at`` is
    the first step at which the max pairwise spread fell within tolerance
    (None if the iteration budget ran out); ``fixed_point`` is the mean of
    the final state.
    """

    trajectory: np.ndarray
    converged_at: Optional[int]
    fixed_point: float

    @property
    def converged(self) -> bool:
        return self.converged_at is not None


def _check_weights(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise InvalidParameterError(f"weights must be > 0, got {w.tolist()}")
    return w


def neighbor_weight_sums(laplacian: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-node sum of neighbor weights, read off the Laplacian's adjacency part."""
    adj = np.diag(np.diag(laplacian)) - laplacian
    return adj @ np.asarray(weights, dtype=float)


def epsilon_bound(laplacian: np.ndarray, weights: np.ndarray) -> float:
    """Upper end of the admissible step-size interval for the robust matrix."""
    sums = neighbor_weight_sums(laplacian, weights)
    peak = float(np.max(sums))
    if peak <= 0:
        raise InvalidParameterError("graph has no edges; step-size bound undefined")
    return 1.0 / peak


def conventional_perron(laplacian: np.ndarray, eps: float, weights: np.ndarray) -> ConsensusMatrix:
    """W = I - eps * diag(1/w) L; rows sum to one for any eps."""
    w = _check_weights(weights)
    if eps < 0:
        raise InvalidParameterError(f"epsilon must be >= 0, got {eps}")
    n = laplacian.shape[0]
    m = np.eye(n) - eps * (laplacian / w[:, None])
    return ConsensusMatrix(matrix=m, epsilon=eps, weights=w, kind=MatrixKind.CONVENTIONAL)


def robust_perron(
    laplacian: np.ndarray,
    eps: float,
    weights: np.ndarray,
    enforce_bound: bool = True,
) -> ConsensusMatrix:
    """Neighbor-assigned-weight update matrix.

    Off-diagonal entry (i, j) is ``eps * w_j`` for neighbors, zero otherwise;
    the diagonal is one minus eps times the node's neighbor-weight sum.
    Raises :class:`EpsilonBoundError` when eps falls outside the open
    admissible interval, unless ``enforce_bound=False`` (useful for
    divergence demonstrations).
    """
    w = _check_weights(weights)
    upper = epsilon_bound(laplacian, w)
    if enforce_bound and not (0.0 < eps < upper):
        raise EpsilonBoundError(eps, upper)
    adj = np.diag(np.diag(laplacian)) - laplacian
    m = eps * adj * w[None, :]
    np.fill_diagonal(m, 1.0 - eps * (adj @ w))
    return ConsensusMatrix(matrix=m, epsilon=eps, weights=w, kind=MatrixKind.ROBUST)


def spectral_check(m: ConsensusMatrix, modulus_tol: float = 1e-8) -> SpectralReport:
    """Eigenvalue report: spectral radius, modulus-one multiplicity, primitivity.

    The matrix is primitive (in the sense that its powers converge to a rank
    one limit) iff exactly one eigenvalue sits on the unit circle.
    """
    eig = np.linalg.eigvals(m.matrix)
    moduli = np.abs(eig)
    radius = float(np.max(moduli))
    ones = int(np.sum(np.abs(moduli - 1.0) <= modulus_tol))
    return SpectralReport(
        spectral_radius=radius,
        modulus_one_count=ones,
        primitive=(ones == 1 and radius <= 1.0 + modulus_tol),
        eigenvalues=eig,
    )


def run_consensus(
    m: ConsensusMatrix, x0: np.ndarray, tol: float, max_iter: int
) -> ConsensusRun:
    """Iterate x(k+1) = M x(k) until the max pairwise spread is within tol.

    Exhausting ``max_iter`` is reported (``converged_at is None``), not
    raised.
    """
    if tol <= 0:
        raise InvalidParameterError(f"tol must be > 0, got {tol}")
    x = np.asarray(x0, dtype=float)
    if x.shape != (m.node_count,):
        raise InvalidParameterError(
            f"state length {x.shape} does not match matrix size {m.node_count}"
        )
    states = [x.copy()]
    converged_at = None
    if float(x.max() - x.min()) <= tol:
        converged_at = 0
    else:
        for k in range(1, max_iter + 1):
            x = m.matrix @ x
            states.append(x.copy())
            if float(x.max() - x.min()) <= tol:
                converged_at = k
                break
    return ConsensusRun(
        trajectory=np.array(states),
        converged_at=converged_at,
        fixed_point=float(np.mean(states[-1])),
    )


def matrix_power(m: ConsensusMatrix, t: int) -> np.ndarray:
    """M^t by repeated squaring; t = 0 gives the identity."""
    if t < 0:
        raise InvalidParameterError(f"power must be >= 0, got {t}")
    result = np.eye(m.node_count)
    base = m.matrix.copy()
    k = t
    while k:
        if k & 1:
            result = result @ base
        base = base @ base
        k >>= 1
    return result
