"""DMD, total-least-squares DMD and forward-backward DMD on block pairs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .embed import BlockData
from .errors import ContractViolation, DegenerateDataError, NumericalSingularityError

PINV_RTOL = 1e-12
COND_LIMIT = 1e14


class BranchCutWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SnapshotPairs:
    X1: np.ndarray  # (M, Q-1): blocks 1..Q-1 as columns
    X2: np.ndarray  # (M, Q-1): blocks 2..Q

    @classmethod
    def from_blocks(cls, data: BlockData | np.ndarray) -> "SnapshotPairs":
        Y = data.blocks if isinstance(data, BlockData) else np.asarray(data, dtype=float)
        if Y.shape[0] < 2:
            raise ContractViolation("need at least two blocks to form a snapshot pair")
        return cls(Y[:-1].T.copy(), Y[1:].T.copy())


def _lstsq_operator(X, Z):
    """Minimum-norm ``A`` minimising ``||Z - A X||_F`` via truncated pinv."""
    if not np.any(X):
        raise DegenerateDataError("snapshot matrix is identically zero")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = s > PINV_RTOL * s[0]
    return (Z @ Vt[keep].T) @ np.diag(1.0 / s[keep]) @ U[:, keep].T


def dmd(pairs: SnapshotPairs) -> np.ndarray:
    return _lstsq_operator(pairs.X1, pairs.X2)


def tdmd(pairs: SnapshotPairs) -> np.ndarray:
    M, n = pairs.X1.shape
    if n < M:
        raise ContractViolation(f"TDMD needs at least M={M} snapshot pairs, got {n}")
    U, _, _ = np.linalg.svd(np.vstack([pairs.X1, pairs.X2]), full_matrices=False)
    Ua, Ub = U[:M, :M], U[M:, :M]
    if np.linalg.cond(Ua) > COND_LIMIT:
        raise NumericalSingularityError("TDMD signal subspace is ill-conditioned")
    return np.linalg.solve(Ua.T, Ub.T).T


def fbdmd(pairs: SnapshotPairs) -> np.ndarray:
    """Geometric mean of the forward fit and the inverse of the backward fit.

    The product ``A_f A_b^{-1}`` estimates ``A^2``; the principal square root
    recovers ``A`` only when its eigenvalues have positive real part. Modes in
    the left half-plane come back reflected through the origin.
    """
    Af = _lstsq_operator(pairs.X1, pairs.X2)
    Ab = _lstsq_operator(pairs.X2, pairs.X1)
    if np.linalg.cond(Ab) > COND_LIMIT:
        raise NumericalSingularityError("backward DMD operator is singular")
    prod = np.linalg.solve(Ab.T, Af.T).T  # Af @ inv(Ab)
    lam = np.linalg.eigvals(prod)
    scale = max(1.0, np.max(np.abs(lam)))
    if np.any((lam.real < 0) & (np.abs(lam.imag) <= 1e-10 * scale)):
        warnings.warn(
            "forward/backward product has a negative real eigenvalue; using the principal root",
            BranchCutWarning,
            stacklevel=2,
        )
    root = scipy.linalg.sqrtm(prod)
    return np.real(root) if np.iscomplexobj(root) else root


METHODS = {"dmd": dmd, "tdmd": tdmd, "fbdmd": fbdmd}


def reconstruct(A: np.ndarray, first_block: np.ndarray, Q: int) -> np.ndarray:
    """Free-run ``z_{k+1} = A z_k`` from ``z_1 = first_block``; returns (Q, M)."""
    out = np.empty((Q, A.shape[0]))
    out[0] = first_block
    for k in range(1, Q):
        out[k] = A @ out[k - 1]
    return out
