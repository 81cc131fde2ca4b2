"""Pure-Python Kalman filter / RTS smoother kernels.

Reference implementation and fallback for :mod:`noisykoop._ckernel`; both
expose the same two functions with the same return layout. Status codes:
0 ok, 1 singular innovation covariance, 2 singular predicted covariance.
The step index returned alongside is 0-based.
"""

import numpy as np

COND_LIMIT = 1e14
_LOG_2PI = np.log(2.0 * np.pi)


def _chol(S):
    """Lower Cholesky factor, or None if S is not PD or too ill-conditioned."""
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(L)
    if not np.all(d > 0) or (d.max() / d.min()) ** 2 > COND_LIMIT:
        return None
    return L


def _chol_solve(L, B):
    y = np.linalg.solve(L, B)
    return np.linalg.solve(L.T, y)


def filter_pass(A, Rv, Rw, mu1, S1, Y):
    Q, M = Y.shape
    pm = np.empty((Q, M))
    pc = np.empty((Q, M, M))
    fm = np.empty((Q, M))
    fc = np.empty((Q, M, M))
    K = np.empty((Q, M, M))
    ll = 0.0
    I = np.eye(M)
    for k in range(Q):
        if k == 0:
            m_bar, S_bar = mu1, S1
        else:
            m_bar = A @ fm[k - 1]
            S_bar = A @ fc[k - 1] @ A.T + Rv
            S_bar = 0.5 * (S_bar + S_bar.T)
        pm[k], pc[k] = m_bar, S_bar
        L = _chol(S_bar + Rw)
        if L is None:
            return 1, k, pm, pc, fm, fc, K, ll
        Kk = _chol_solve(L, S_bar).T
        e = Y[k] - m_bar
        u = np.linalg.solve(L, e)
        ll -= 0.5 * (M * _LOG_2PI + 2.0 * np.sum(np.log(np.diag(L))) + u @ u)
        K[k] = Kk
        fm[k] = m_bar + Kk @ e
        Sk = (I - Kk) @ S_bar
        fc[k] = 0.5 * (Sk + Sk.T)
    return 0, -1, pm, pc, fm, fc, K, ll


def smoother_pass(A, pm, pc, fm, fc, K):
    """Backward pass; ``lag[k]`` is Cov(z_{k+1}, z_k | Y), 0-based."""
    Q, M = fm.shape
    sm = fm.copy()
    sc = fc.copy()
    lag = np.zeros((max(Q - 1, 0), M, M))
    G = np.zeros((Q, M, M))
    if Q < 2:
        return 0, -1, sm, sc, lag
    for k in range(Q - 2, -1, -1):
        L = _chol(pc[k + 1])
        if L is None:
            return 2, k + 1, sm, sc, lag
        G[k] = _chol_solve(L, A @ fc[k]).T
        sm[k] = fm[k] + G[k] @ (sm[k + 1] - pm[k + 1])
        Pk = fc[k] + G[k] @ (sc[k + 1] - pc[k + 1]) @ G[k].T
        sc[k] = 0.5 * (Pk + Pk.T)
    I = np.eye(M)
    lag[Q - 2] = (I - K[Q - 1]) @ A @ fc[Q - 2]
    for k in range(Q - 2, 0, -1):
        lag[k - 1] = fc[k] @ G[k - 1].T + G[k] @ (lag[k] - A @ fc[k]) @ G[k - 1].T
    return 0, -1, sm, sc, lag
