# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Kalman filter / RTS smoother kernels.

Same signatures, return layout and status codes as ``noisykoop._pykernel``.
Matrices are small (the block length M), so plain loops beat BLAS calls.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, M_PI

cnp.import_array()

cdef double COND_LIMIT = 1e14


cdef int chol(const double* S, double* L, int n) noexcept nogil:
    """Lower Cholesky factor of S into L; 1 if not PD or too ill-conditioned."""
    cdef int i, j, p
    cdef double acc, s, dmax = 0.0, dmin = 1e300
    for i in range(n * n):
        L[i] = 0.0
    for j in range(n):
        acc = S[j * n + j]
        for p in range(j):
            acc -= L[j * n + p] * L[j * n + p]
        if not acc > 0.0:
            return 1
        acc = sqrt(acc)
        L[j * n + j] = acc
        if acc > dmax:
            dmax = acc
        if acc < dmin:
            dmin = acc
        for i in range(j + 1, n):
            s = S[i * n + j]
            for p in range(j):
                s -= L[i * n + p] * L[j * n + p]
            L[i * n + j] = s / acc
    if (dmax / dmin) * (dmax / dmin) > COND_LIMIT:
        return 1
    return 0


cdef void chol_solve(const double* L, double* B, int n, int ncol) noexcept nogil:
    """Overwrite B (n x ncol, row-major) with (L L^T)^{-1} B."""
    cdef int i, p, c
    cdef double s
    for c in range(ncol):
        for i in range(n):
            s = B[i * ncol + c]
            for p in range(i):
                s -= L[i * n + p] * B[p * ncol + c]
            B[i * ncol + c] = s / L[i * n + i]
        for i in range(n - 1, -1, -1):
            s = B[i * ncol + c]
            for p in range(i + 1, n):
                s -= L[p * n + i] * B[p * ncol + c]
            B[i * ncol + c] = s / L[i * n + i]


cdef void matmul(const double* X, const double* Y, double* Z, int n) noexcept nogil:
    """Z = X @ Y for n x n."""
    cdef int i, j, p
    cdef double s
    for i in range(n):
        for j in range(n):
            s = 0.0
            for p in range(n):
                s += X[i * n + p] * Y[p * n + j]
            Z[i * n + j] = s


cdef void matmul_bt(const double* X, const double* Y, double* Z, int n) noexcept nogil:
    """Z = X @ Y.T for n x n."""
    cdef int i, j, p
    cdef double s
    for i in range(n):
        for j in range(n):
            s = 0.0
            for p in range(n):
                s += X[i * n + p] * Y[j * n + p]
            Z[i * n + j] = s


cdef void transpose(const double* X, double* Z, int n) noexcept nogil:
    cdef int i, j
    for i in range(n):
        for j in range(n):
            Z[j * n + i] = X[i * n + j]


def filter_pass(double[:, ::1] A, double[:, ::1] Rv, double[:, ::1] Rw,
                double[::1] mu1, double[:, ::1] S1, double[:, ::1] Y):
    cdef int Q = Y.shape[0], M = Y.shape[1]
    cdef int k, i, j, p, status = 0, fail = -1
    cdef double s, ll = 0.0, logdet
    pm_a = np.empty((Q, M))
    pc_a = np.empty((Q, M, M))
    fm_a = np.empty((Q, M))
    fc_a = np.empty((Q, M, M))
    K_a = np.empty((Q, M, M))
    cdef double[:, ::1] pm = pm_a, fm = fm_a
    cdef double[:, :, ::1] pc = pc_a, fc = fc_a, K = K_a
    cdef double[:, ::1] Sinn = np.empty((M, M)), L = np.empty((M, M))
    cdef double[:, ::1] T1 = np.empty((M, M)), X = np.empty((M, M))
    cdef double[::1] e = np.empty(M), u = np.empty(M)
    cdef double* Sb
    with nogil:
        for k in range(Q):
            Sb = &pc[k, 0, 0]
            if k == 0:
                for i in range(M):
                    pm[0, i] = mu1[i]
                    for j in range(M):
                        Sb[i * M + j] = S1[i, j]
            else:
                for i in range(M):
                    s = 0.0
                    for p in range(M):
                        s += A[i, p] * fm[k - 1, p]
                    pm[k, i] = s
                matmul(&A[0, 0], &fc[k - 1, 0, 0], &T1[0, 0], M)
                matmul_bt(&T1[0, 0], &A[0, 0], &X[0, 0], M)
                for i in range(M):
                    for j in range(M):
                        Sb[i * M + j] = 0.5 * (X[i, j] + X[j, i]) + Rv[i, j]
            for i in range(M):
                for j in range(M):
                    Sinn[i, j] = Sb[i * M + j] + Rw[i, j]
            if chol(&Sinn[0, 0], &L[0, 0], M):
                status = 1
                fail = k
                break
            # K^T = S^{-1} Sbar
            for i in range(M * M):
                (&X[0, 0])[i] = Sb[i]
            chol_solve(&L[0, 0], &X[0, 0], M, M)
            transpose(&X[0, 0], &K[k, 0, 0], M)
            logdet = 0.0
            for i in range(M):
                e[i] = Y[k, i] - pm[k, i]
                logdet += log(L[i, i])
            for i in range(M):
                s = e[i]
                for p in range(i):
                    s -= L[i, p] * u[p]
                u[i] = s / L[i, i]
            s = 0.0
            for i in range(M):
                s += u[i] * u[i]
            ll -= 0.5 * (M * log(2.0 * M_PI) + 2.0 * logdet + s)
            for i in range(M):
                s = pm[k, i]
                for p in range(M):
                    s += K[k, i, p] * e[p]
                fm[k, i] = s
            # Sigma = (I - K) Sbar, symmetrised
            matmul(&K[k, 0, 0], Sb, &T1[0, 0], M)
            for i in range(M):
                for j in range(M):
                    X[i, j] = Sb[i * M + j] - T1[i, j]
            for i in range(M):
                for j in range(M):
                    fc[k, i, j] = 0.5 * (X[i, j] + X[j, i])
    return status, fail, pm_a, pc_a, fm_a, fc_a, K_a, ll


def smoother_pass(double[:, ::1] A, double[:, ::1] pm, double[:, :, ::1] pc,
                  double[:, ::1] fm, double[:, :, ::1] fc, double[:, :, ::1] K):
    cdef int Q = fm.shape[0], M = fm.shape[1]
    cdef int k, i, j, p, status = 0, fail = -1
    cdef double s
    sm_a = np.array(fm, copy=True)
    sc_a = np.array(fc, copy=True)
    lag_a = np.zeros((max(Q - 1, 0), M, M))
    G_a = np.zeros((Q, M, M))
    if Q < 2:
        return 0, -1, sm_a, sc_a, lag_a
    cdef double[:, ::1] sm = sm_a
    cdef double[:, :, ::1] sc = sc_a, lag = lag_a, G = G_a
    cdef double[:, ::1] L = np.empty((M, M)), T1 = np.empty((M, M))
    cdef double[:, ::1] T2 = np.empty((M, M)), D = np.empty((M, M))
    cdef double[::1] d = np.empty(M)
    with nogil:
        for k in range(Q - 2, -1, -1):
            if chol(&pc[k + 1, 0, 0], &L[0, 0], M):
                status = 2
                fail = k + 1
                break
            # G^T = Sbar_{k+1}^{-1} A Sigma_k
            matmul(&A[0, 0], &fc[k, 0, 0], &T1[0, 0], M)
            chol_solve(&L[0, 0], &T1[0, 0], M, M)
            transpose(&T1[0, 0], &G[k, 0, 0], M)
            for i in range(M):
                d[i] = sm[k + 1, i] - pm[k + 1, i]
            for i in range(M):
                s = fm[k, i]
                for p in range(M):
                    s += G[k, i, p] * d[p]
                sm[k, i] = s
            for i in range(M):
                for j in range(M):
                    D[i, j] = sc[k + 1, i, j] - pc[k + 1, i, j]
            matmul(&G[k, 0, 0], &D[0, 0], &T1[0, 0], M)
            matmul_bt(&T1[0, 0], &G[k, 0, 0], &T2[0, 0], M)
            for i in range(M):
                for j in range(M):
                    sc[k, i, j] = fc[k, i, j] + 0.5 * (T2[i, j] + T2[j, i])
    if status:
        return status, fail, sm_a, sc_a, lag_a
    with nogil:
        # lag[Q-2] = (I - K_Q) A Sigma_{Q-1}
        matmul(&A[0, 0], &fc[Q - 2, 0, 0], &T1[0, 0], M)
        matmul(&K[Q - 1, 0, 0], &T1[0, 0], &T2[0, 0], M)
        for i in range(M):
            for j in range(M):
                lag[Q - 2, i, j] = T1[i, j] - T2[i, j]
        for k in range(Q - 2, 0, -1):
            # lag[k-1] = Sigma_k G_{k-1}^T + G_k (lag[k] - A Sigma_k) G_{k-1}^T
            matmul(&A[0, 0], &fc[k, 0, 0], &T1[0, 0], M)
            for i in range(M):
                for j in range(M):
                    D[i, j] = lag[k, i, j] - T1[i, j]
            matmul(&G[k, 0, 0], &D[0, 0], &T2[0, 0], M)
            for i in range(M):
                for j in range(M):
                    T2[i, j] += fc[k, i, j]
            matmul_bt(&T2[0, 0], &G[k - 1, 0, 0], &lag[k - 1, 0, 0], M)
    return 0, -1, sm_a, sc_a, lag_a
