"""Koopman spectrum identification from noisy data via Kalman smoothing and EM."""

__version__ = "0.1.0"

from . import baselines, embed, kbk, sim, spectrum  # noqa: E402
from ._backend import NAME as BACKEND  # noqa: E402

__all__ = ["baselines", "embed", "kbk", "sim", "spectrum", "BACKEND", "__version__"]
