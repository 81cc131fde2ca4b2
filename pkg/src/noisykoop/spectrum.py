"""Eigenvalues of the identified operator and the two error metrics."""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, KoopmanError

_TIE_RTOL = 1e-12


@dataclass
class SpectrumResult:
    discrete_eigs: list
    continuous_eigs: list
    selected: list = field(default_factory=list)


def _sort_key_groups(eigs):
    # moduli equal to _TIE_RTOL count as ties so conjugate pairs stay adjacent
    eigs = sorted(eigs, key=lambda z: -abs(z))
    groups, current = [], []
    for z in eigs:
        if current and abs(abs(current[0]) - abs(z)) > _TIE_RTOL * max(1.0, abs(current[0])):
            groups.append(current)
            current = []
        current.append(z)
    if current:
        groups.append(current)
    out = []
    for g in groups:
        out.extend(sorted(g, key=lambda z: (-z.real, -z.imag)))
    return out


def sort_eigs(eigs) -> list:
    """Descending modulus, then descending real part, then descending imaginary part."""
    return _sort_key_groups([complex(z) for z in eigs])


def discrete_eigs(A) -> list:
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ContractViolation("operator contains non-finite entries")
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise KoopmanError(f"eigensolver failed: {exc}") from exc
    return sort_eigs(lam)


def to_continuous(lam: complex, M: int, Ts: float) -> complex:
    """Principal-branch ``log(lam) / (M * Ts)`` with the argument in (-pi, pi]."""
    lam = complex(lam)
    if lam == 0:
        raise KoopmanError("logarithm of a zero eigenvalue is undefined")
    arg = cmath.phase(lam)
    if arg == -math.pi:
        arg = math.pi
    return complex(math.log(abs(lam)), arg) / (M * Ts)


def select_dominant(eigs, n: int) -> list:
    if n < 1 or n > len(eigs):
        raise ContractViolation(f"cannot select {n} eigenvalues out of {len(eigs)}")
    return list(eigs[:n])


def analyze(A, M: int, Ts: float, n: int) -> SpectrumResult:
    lam = discrete_eigs(A)
    chosen = select_dominant(lam, n)
    return SpectrumResult(
        discrete_eigs=lam,
        continuous_eigs=[to_continuous(z, M, Ts) for z in chosen],
        selected=list(range(n)),
    )


def eig_error(approx, truth) -> float:
    """Relative eigenvalue error under the best one-to-one pairing.

    All pairings are enumerated, so this is meant for the handful of
    principal eigenvalues compared in experiments.
    """
    approx = np.asarray(approx, dtype=complex).ravel()
    truth = np.asarray(truth, dtype=complex).ravel()
    if approx.size != truth.size or truth.size == 0:
        raise ContractViolation(
            f"eigenvalue lists must have equal nonzero length, got {approx.size} and {truth.size}"
        )
    denom = np.linalg.norm(truth)
    if denom == 0:
        raise ContractViolation("true eigenvalues are all zero")
    best = min(
        np.linalg.norm(approx[list(p)] - truth)
        for p in itertools.permutations(range(truth.size))
    )
    return float(best / denom)


def state_rmse(estimate, truth) -> float:
    estimate = np.asarray(estimate, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if estimate.size != truth.size or truth.size == 0:
        raise ContractViolation(
            f"sequences must have equal nonzero length, got {estimate.size} and {truth.size}"
        )
    return float(np.sqrt(np.mean((estimate - truth) ** 2)))
