"""Benchmark nonlinear systems, RK4 integration and measurement noise."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DivergenceError

#: Generator used for all noise draws; written into run metadata.
RNG_ALGORITHM = "numpy.random.Philox (counter-based) + Generator.standard_normal (ziggurat)"


class BenchmarkSystem(str, enum.Enum):
    RealSpectrum = "RealSpectrum"
    ImaginarySpectrum = "ImaginarySpectrum"
    ComplexSpectrum = "ComplexSpectrum"

    @property
    def dimension(self) -> int:
        return 2

    @property
    def true_eigenvalues(self) -> list[complex]:
        return list(_TRUE_EIGS[self])


_TRUE_EIGS = {
    BenchmarkSystem.RealSpectrum: (-1 + 0j, -2 + 0j),
    BenchmarkSystem.ImaginarySpectrum: (1j, -1j),
    BenchmarkSystem.ComplexSpectrum: (-1 + 3j, -1 - 3j),
}

DEFAULT_X0 = {
    BenchmarkSystem.RealSpectrum: (1.0, 0.5),
    BenchmarkSystem.ImaginarySpectrum: (1.0, 0.0),
    BenchmarkSystem.ComplexSpectrum: (1.0, 0.0),
}


@dataclass(frozen=True)
class Trajectory:
    sample_period: float
    states: np.ndarray  # (N, n)
    initial_condition: np.ndarray

    def __len__(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    variance: float
    seed: int

    def __post_init__(self):
        if not self.variance >= 0:
            raise ContractViolation(f"noise variance must be >= 0, got {self.variance}")


def vector_field(system: BenchmarkSystem, x) -> np.ndarray:
    system = BenchmarkSystem(system)
    x = np.asarray(x, dtype=float)
    if x.shape != (system.dimension,):
        raise ContractViolation(
            f"{system.value} expects a state of length {system.dimension}, got shape {x.shape}"
        )
    x1, x2 = x
    if system is BenchmarkSystem.RealSpectrum:
        return np.array([-x1, x1 * x1 - x2])
    r2 = x1 * x1 + x2 * x2
    if system is BenchmarkSystem.ImaginarySpectrum:
        return np.array([-x2 + x1 * (1.0 - r2), x1 - x2 * r2])
    return np.array([-3.0 * x2 - x1 * (r2 + 1.0), 3.0 * x1 - x2 * (r2 + 1.0)])


def integrate(system: BenchmarkSystem, x0, Ts: float, N: int, substeps: int = 10) -> Trajectory:
    """Sample a trajectory at ``t = 0, Ts, ..., (N-1) Ts`` with classical RK4.

    Each sample interval is covered by ``substeps`` RK4 steps of size
    ``Ts / substeps``.
    """
    system = BenchmarkSystem(system)
    x0 = np.asarray(x0, dtype=float)
    if N < 2:
        raise ContractViolation(f"N must be >= 2, got {N}")
    if substeps < 1:
        raise ContractViolation(f"substeps must be >= 1, got {substeps}")
    if not Ts > 0:
        raise ContractViolation(f"Ts must be positive, got {Ts}")
    f = lambda y: vector_field(system, y)  # noqa: E731
    h = Ts / substeps
    states = np.empty((N, x0.size))
    states[0] = x0
    x = x0.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, N):
            for _ in range(substeps):
                k1 = f(x)
                k2 = f(x + 0.5 * h * k1)
                k3 = f(x + 0.5 * h * k2)
                k4 = f(x + h * k3)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"non-finite state at sample {k}", step=k)
            states[k] = x
    return Trajectory(sample_period=float(Ts), states=states, initial_condition=x0.copy())


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def add_noise(traj: Trajectory, spec: NoiseSpec) -> Trajectory:
    """Return ``traj`` with i.i.d. N(0, variance) noise added to every entry."""
    states = traj.states.copy()
    if spec.variance > 0:
        rng = make_rng(spec.seed)
        states += np.sqrt(spec.variance) * rng.standard_normal(states.shape)
    return Trajectory(traj.sample_period, states, traj.initial_condition.copy())
