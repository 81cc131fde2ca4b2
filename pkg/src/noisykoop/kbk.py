"""EM identification of the lifted linear-Gaussian model.

The lifted model over non-overlapping delay blocks is::

    z_{k+1} = A z_k + v_k,   v_k ~ N(0, R_v)
    y_k     = z_k + w_k,     w_k ~ N(0, R_w)

The E-step is a Kalman filter followed by an RTS smoother; the M-step
updates R_w, R_v (at the previous A) and then A in closed form.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .baselines import SnapshotPairs, dmd
from .embed import BlockData
from .errors import (
    ContractViolation,
    DegenerateDataError,
    EMError,
    KoopmanError,
    NumericalSingularityError,
)

COND_LIMIT = 1e14


@dataclass(frozen=True)
class StateSpaceModel:
    A: np.ndarray
    R_v: np.ndarray
    R_w: np.ndarray
    init_mean: np.ndarray
    init_cov: np.ndarray

    @property
    def M(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class FilterResult:
    predicted_means: np.ndarray  # (Q, M); row 0 is the prior mean
    predicted_covs: np.ndarray  # (Q, M, M)
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    gains: np.ndarray
    log_likelihood: float


@dataclass(frozen=True)
class Posterior:
    means: np.ndarray  # (Q, M)
    covs: np.ndarray  # (Q, M, M)
    lag_one_covs: np.ndarray  # (Q-1, M, M); entry k is Cov(z_{k+1}, z_k | Y)


@dataclass(frozen=True)
class EMConfig:
    max_iterations: int = 500
    likelihood_rel_tol: float = 1e-8
    diagonal_covariances: bool = True
    cov_floor: float = 1e-10

    def __post_init__(self):
        if not self.likelihood_rel_tol > 0:
            raise ContractViolation("likelihood_rel_tol must be positive")
        if self.max_iterations < 1:
            raise ContractViolation("max_iterations must be positive")
        if not self.cov_floor > 0:
            raise ContractViolation("cov_floor must be positive")


class Termination(str, enum.Enum):
    Converged = "Converged"
    MaxIterations = "MaxIterations"


@dataclass
class EMTrace:
    log_likelihoods: list = field(default_factory=list)
    delta_A: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    termination_reason: Termination | None = None

    def record(self, iteration, ll, dA):
        self.iterations.append(iteration)
        self.log_likelihoods.append(ll)
        self.delta_A.append(dA)

    @property
    def n_iterations(self) -> int:
        return len(self.iterations) - 1


def _check(model: StateSpaceModel, data: BlockData):
    if data.M != model.M:
        raise ContractViolation(f"block length {data.M} does not match model dimension {model.M}")


def _as_blocks(data) -> np.ndarray:
    Y = data.blocks if isinstance(data, BlockData) else np.asarray(data, dtype=float)
    return np.ascontiguousarray(Y, dtype=float)


def kalman_filter(model: StateSpaceModel, data: BlockData, backend=None) -> FilterResult:
    """Forward pass; block 1 is measured against the prior ``(init_mean, init_cov)``."""
    _check(model, data)
    Y = _as_blocks(data)
    status, step, pm, pc, fm, fc, K, ll = _backend.get(backend).filter_pass(
        *_model_arrays(model), Y
    )
    if status:
        raise NumericalSingularityError(f"singular innovation covariance at block {step + 1}", step)
    return FilterResult(pm, pc, fm, fc, K, float(ll))


def rts_smoother(filt: FilterResult, model: StateSpaceModel, backend=None) -> Posterior:
    status, step, sm, sc, lag = _backend.get(backend).smoother_pass(
        np.ascontiguousarray(model.A, dtype=float),
        filt.predicted_means,
        filt.predicted_covs,
        filt.filtered_means,
        filt.filtered_covs,
        filt.gains,
    )
    if status:
        raise NumericalSingularityError(f"singular predicted covariance at block {step + 1}", step)
    return Posterior(sm, sc, lag)


def log_likelihood(model: StateSpaceModel, data: BlockData, backend=None) -> float:
    return kalman_filter(model, data, backend).log_likelihood


def _model_arrays(model):
    return tuple(
        np.ascontiguousarray(a, dtype=float)
        for a in (model.A, model.R_v, model.R_w, model.init_mean, model.init_cov)
    )


def _sym(R):
    return 0.5 * (R + R.T)


def _floor_dense(R, eps):
    w, V = np.linalg.eigh(_sym(R))
    if w.min() >= eps:
        return _sym(R)
    return _sym((V * np.maximum(w, eps)) @ V.T)


def _project_cov(R, eps, diagonal):
    R = _sym(R)
    if diagonal:
        return np.diag(np.maximum(np.diag(R), eps))
    return _floor_dense(R, eps)


def sufficient_statistics(post: Posterior):
    """Return ``(H, C)``: ``H[k] = P_k + m_k m_k^T`` and ``C[k] = m_{k+1} m_k^T + P_{k+1,k}``."""
    m = post.means
    H = post.covs + m[:, :, None] * m[:, None, :]
    C = m[1:, :, None] * m[:-1, None, :] + post.lag_one_covs
    return H, C


def raw_updates(post: Posterior, data: BlockData, A_prev: np.ndarray):
    """Unprojected closed-form updates ``(R_w, R_v, A)``; R_v uses ``A_prev``."""
    Y = _as_blocks(data)
    Q = Y.shape[0]
    if post.means.shape != Y.shape:
        raise ContractViolation("posterior and data disagree on (Q, M)")
    m = post.means
    H, C = sufficient_statistics(post)
    R_w = (H - 2.0 * m[:, :, None] * Y[:, None, :] + Y[:, :, None] * Y[:, None, :]).sum(0) / Q
    H0 = H[:-1].sum(0)
    H1 = H[1:].sum(0)
    Cs = C.sum(0)
    R_v = (A_prev @ H0 @ A_prev.T + H1 - 2.0 * Cs @ A_prev.T) / (Q - 1)
    if not np.all(np.isfinite(H0)) or np.linalg.cond(H0) > COND_LIMIT:
        raise DegenerateDataError("summed second moments are singular; A update undefined")
    A = np.linalg.solve(H0.T, Cs.T).T
    return _sym(R_w), _sym(R_v), A


def m_step(
    post: Posterior, data: BlockData, current: StateSpaceModel, config: EMConfig | None = None
) -> StateSpaceModel:
    config = config or EMConfig()
    eps = config.cov_floor
    R_w, R_v, A = raw_updates(post, data, current.A)
    return StateSpaceModel(
        A=A,
        R_v=_project_cov(R_v, eps, config.diagonal_covariances),
        R_w=_project_cov(R_w, eps, config.diagonal_covariances),
        init_mean=post.means[0].copy(),
        init_cov=_floor_dense(post.covs[0], eps),
    )


def e_step(model: StateSpaceModel, data: BlockData, backend=None):
    filt = kalman_filter(model, data, backend)
    return rts_smoother(filt, model, backend), filt.log_likelihood


def default_init(data: BlockData, config: EMConfig | None = None) -> StateSpaceModel:
    """DMD operator plus isotropic covariances at a tenth of the sample variance."""
    config = config or EMConfig()
    eps = config.cov_floor
    Y = _as_blocks(data)
    Q, M = Y.shape
    if Q < 2:
        raise ContractViolation("need at least two blocks")
    var = float(np.var(Y))
    if not var > 0:
        cov = eps * np.eye(M)
        return StateSpaceModel(np.eye(M), cov, cov.copy(), Y[0].copy(), cov.copy())
    A0 = dmd(SnapshotPairs.from_blocks(Y))
    cov = max(0.1 * var, eps) * np.eye(M)
    return StateSpaceModel(A0, cov, cov.copy(), Y[0].copy(), cov.copy())


def em_fit(
    data: BlockData,
    config: EMConfig | None = None,
    init: StateSpaceModel | None = None,
    backend=None,
):
    """Alternate E- and M-steps until the log-likelihood settles.

    Returns ``(model, posterior, trace)``; the posterior is the smoother
    output under the returned model. ``trace`` entry 0 is the initial model.
    """
    config = config or EMConfig()
    if data.Q < 2:
        raise ContractViolation("EM needs at least two blocks")
    model = init if init is not None else default_init(data, config)
    _check(model, data)
    trace = EMTrace()
    try:
        post, ll = e_step(model, data, backend)
    except KoopmanError as exc:
        raise EMError(str(exc), 0) from exc
    trace.record(0, ll, 0.0)
    trace.termination_reason = Termination.MaxIterations
    for it in range(1, config.max_iterations + 1):
        try:
            new = m_step(post, data, model, config)
            post, ll_new = e_step(new, data, backend)
        except KoopmanError as exc:
            raise EMError(str(exc), it) from exc
        trace.record(it, ll_new, float(np.linalg.norm(new.A - model.A)))
        model, converged = new, abs(ll_new - ll) / (abs(ll_new) + 1.0) < config.likelihood_rel_tol
        ll = ll_new
        if converged:
            trace.termination_reason = Termination.Converged
            break
    return model, post, trace


__all__ = [
    "StateSpaceModel",
    "FilterResult",
    "Posterior",
    "EMConfig",
    "EMTrace",
    "Termination",
    "kalman_filter",
    "rts_smoother",
    "log_likelihood",
    "m_step",
    "e_step",
    "em_fit",
    "default_init",
    "sufficient_statistics",
    "raw_updates",
]
