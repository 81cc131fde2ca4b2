"""Non-overlapping delay blocks of a scalar observable."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, InsufficientDataError


class Observable(str, enum.Enum):
    X1 = "X1"
    X2 = "X2"

    @property
    def index(self) -> int:
        return 0 if self is Observable.X1 else 1


@dataclass(frozen=True)
class DelayConfig:
    M: int
    observable: Observable = Observable.X1

    def __post_init__(self):
        if self.M < 2:
            raise ContractViolation(f"block length M must be >= 2, got {self.M}")


@dataclass(frozen=True)
class BlockData:
    """``blocks[k]`` holds samples ``k*M, ..., k*M + M - 1`` of the series."""

    blocks: np.ndarray  # (Q, M)
    sample_period: float = 1.0

    @property
    def Q(self) -> int:
        return self.blocks.shape[0]

    @property
    def M(self) -> int:
        return self.blocks.shape[1]


def build_blocks(series, M: int, sample_period: float = 1.0) -> BlockData:
    series = np.asarray(series, dtype=float).ravel()
    if M < 1:
        raise ContractViolation(f"M must be positive, got {M}")
    if series.size < 2 * M:
        raise InsufficientDataError(
            f"need at least 2*M = {2 * M} samples for one block transition, got {series.size}"
        )
    Q = series.size // M
    return BlockData(series[: Q * M].reshape(Q, M).copy(), float(sample_period))


def flatten_blocks(blocks) -> np.ndarray:
    arr = blocks.blocks if isinstance(blocks, BlockData) else np.asarray(blocks, dtype=float)
    return arr.reshape(-1).copy()


def observable_series(states: np.ndarray, observable: Observable) -> np.ndarray:
    return np.asarray(states)[:, Observable(observable).index].copy()
