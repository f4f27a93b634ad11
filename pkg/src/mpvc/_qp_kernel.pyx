# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled primal active-set kernel for strictly convex QPs.

Twin of the numpy reference kernel in ``_qp_py`` with identical pivoting,
tie-breaking, and tolerances.  The per-iteration work (KKT assembly,
partially pivoted LU, ratio test, orthonormal-basis maintenance) runs in
C loops; cold paths (singular KKT, dependent-row exchange, least-norm
multipliers) call back into numpy.
"""

from libc.math cimport fabs, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double KKT_STEP_TOL = 1e-11
cdef double MU_TOL = 1e-11
cdef double DIR_TOL = 1e-11
cdef double RANK_TOL = 1e-9

STATUS_OPTIMAL = 0
STATUS_ITER_LIMIT = 2


cdef int _lu_solve(double[:, :] M, double[:] x, Py_ssize_t size) noexcept:
    """Partially pivoted LU of M solving M y = x in place into x.

    Returns 1 on an exactly zero pivot (singular), matching the reference
    kernel's solve-then-fallback criterion.
    """
    cdef Py_ssize_t i, j, k, pr
    cdef double maxv, tmp, f
    for k in range(size):
        pr = k
        maxv = fabs(M[k, k])
        for i in range(k + 1, size):
            tmp = fabs(M[i, k])
            if tmp > maxv:
                maxv = tmp
                pr = i
        if maxv == 0.0:
            return 1
        if pr != k:
            for j in range(size):
                tmp = M[k, j]
                M[k, j] = M[pr, j]
                M[pr, j] = tmp
            tmp = x[k]
            x[k] = x[pr]
            x[pr] = tmp
        for i in range(k + 1, size):
            f = M[i, k] / M[k, k]
            if f != 0.0:
                for j in range(k + 1, size):
                    M[i, j] -= f * M[k, j]
                x[i] -= f * x[k]
            M[i, k] = f
    for k in range(size - 1, -1, -1):
        tmp = x[k]
        for j in range(k + 1, size):
            tmp -= M[k, j] * x[j]
        x[k] = tmp / M[k, k]
    return 0


cdef bint _basis_add(double[:, ::1] A, Py_ssize_t row, double[:, ::1] ortho,
                     Py_ssize_t* n_ortho, double[::1] scratch) noexcept:
    """Gram-Schmidt rank screen; appends the normalized residual on success."""
    cdef Py_ssize_t n = A.shape[1]
    cdef Py_ssize_t q, j
    cdef double dot, na = 0.0, nr = 0.0
    for j in range(n):
        scratch[j] = A[row, j]
        na += A[row, j] * A[row, j]
    na = sqrt(na)
    for q in range(n_ortho[0]):
        dot = 0.0
        for j in range(n):
            dot += ortho[q, j] * scratch[j]
        for j in range(n):
            scratch[j] -= dot * ortho[q, j]
    for j in range(n):
        nr += scratch[j] * scratch[j]
    nr = sqrt(nr)
    if nr <= RANK_TOL * (1.0 if na < 1.0 else na):
        return False
    for j in range(n):
        ortho[n_ortho[0], j] = scratch[j] / nr
    n_ortho[0] += 1
    return True


cdef bint _try_add(double[:, ::1] A, Py_ssize_t row, double[:, ::1] ortho,
                   Py_ssize_t* n_ortho, Py_ssize_t[::1] work,
                   Py_ssize_t* n_work, cnp.uint8_t[::1] in_work,
                   double[::1] scratch) noexcept:
    if not _basis_add(A, row, ortho, n_ortho, scratch):
        return False
    work[n_work[0]] = row
    n_work[0] += 1
    in_work[row] = 1
    return True


cdef void _remove(double[:, ::1] A, double[:, ::1] ortho, Py_ssize_t* n_ortho,
                  Py_ssize_t[::1] work, Py_ssize_t* n_work,
                  cnp.uint8_t[::1] in_work, Py_ssize_t pos,
                  double[::1] scratch) noexcept:
    """Drop ``work[pos]`` and rebuild the orthonormal row basis."""
    cdef Py_ssize_t i
    in_work[work[pos]] = 0
    for i in range(pos, n_work[0] - 1):
        work[i] = work[i + 1]
    n_work[0] -= 1
    n_ortho[0] = 0
    for i in range(n_work[0]):
        _basis_add(A, work[i], ortho, n_ortho, scratch)


def solve_kernel(double[:, ::1] H, double[::1] c, double[:, ::1] A,
                 double[::1] b, Py_ssize_t n_eq, double[::1] z0,
                 cnp.intp_t[::1] w0, Py_ssize_t max_iter):
    """Minimize 0.5 z'Hz + c'z  s.t.  A[:n_eq] z = b[:n_eq], A[n_eq:] z <= b[n_eq:].

    Same contract as ``_qp_py.solve_kernel``: feasible ``z0``, warm-start
    inequality rows in ``w0``; returns ``(status, z, mu, iterations,
    w_final)`` with ``Hz + c + A'mu = 0`` and ``mu >= 0`` on inequality
    rows.
    """
    cdef Py_ssize_t n = H.shape[0]
    cdef Py_ssize_t m_total = A.shape[0]
    cdef Py_ssize_t cap = n + 1

    z_arr = np.array(z0, dtype=float)
    mu_full_arr = np.zeros(m_total)
    row_norm_arr = np.empty(m_total)
    skip_arr = np.zeros(m_total, dtype=np.uint8)
    in_work_arr = np.zeros(m_total, dtype=np.uint8)
    work_arr = np.zeros(cap, dtype=np.intp)
    ortho_arr = np.zeros((cap, n), dtype=float)
    scratch_arr = np.zeros(n, dtype=float)
    kkt_arr = np.zeros((n + cap, n + cap), dtype=float)
    rhs_arr = np.zeros(n + cap, dtype=float)
    p_arr = np.zeros(n, dtype=float)

    cdef double[::1] z = z_arr
    cdef double[::1] row_norm = row_norm_arr
    cdef cnp.uint8_t[::1] skip = skip_arr
    cdef cnp.uint8_t[::1] in_work = in_work_arr
    cdef Py_ssize_t[::1] work = work_arr
    cdef double[:, ::1] ortho = ortho_arr
    cdef double[::1] scratch = scratch_arr
    cdef double[:, ::1] kkt = kkt_arr
    cdef double[::1] rhs = rhs_arr
    cdef double[::1] p = p_arr

    cdef Py_ssize_t n_work = 0, n_ortho = 0
    cdef Py_ssize_t it, i, j, jj, k, size, row, drop, blocker, pos
    cdef double dot, pinf, zinf, alpha, ap, ai, worst, p_norm, best, w

    for i in range(m_total):
        dot = 0.0
        for j in range(n):
            dot += A[i, j] * A[i, j]
        row_norm[i] = sqrt(dot)

    for i in range(n_eq):
        _try_add(A, i, ortho, &n_ortho, work, &n_work, in_work, scratch)
    for i in range(w0.shape[0]):
        _try_add(A, n_eq + w0[i], ortho, &n_ortho, work, &n_work, in_work,
                 scratch)

    for it in range(max_iter):
        k = n_work
        size = n + k
        for i in range(n):
            for j in range(n):
                kkt[i, j] = H[i, j]
            for jj in range(k):
                kkt[i, n + jj] = A[work[jj], i]
                kkt[n + jj, i] = A[work[jj], i]
        for i in range(k):
            for jj in range(k):
                kkt[n + i, n + jj] = 0.0
        for i in range(n):
            dot = c[i]
            for j in range(n):
                dot += H[i, j] * z[j]
            rhs[i] = -dot
        for jj in range(k):
            row = work[jj]
            dot = 0.0
            for j in range(n):
                dot += A[row, j] * z[j]
            rhs[n + jj] = b[row] - dot

        if _lu_solve(kkt[:size, :size], rhs[:size], size):
            # exactly singular working-set system: least-squares step
            sol = _lstsq_kkt(np.asarray(H), np.asarray(c), np.asarray(A),
                             np.asarray(b), work_arr[:k], np.asarray(z_arr))
            for i in range(size):
                rhs[i] = sol[i]
        for i in range(n):
            p[i] = rhs[i]

        pinf = 0.0
        zinf = 0.0
        for i in range(n):
            if fabs(p[i]) > pinf:
                pinf = fabs(p[i])
            if fabs(z[i]) > zinf:
                zinf = fabs(z[i])
        if pinf <= KKT_STEP_TOL * (1.0 + zinf):
            # stationary on the working set: check inequality multipliers
            drop = -1
            worst = -MU_TOL
            for jj in range(k):
                if work[jj] >= n_eq and rhs[n + jj] < worst:
                    worst = rhs[n + jj]
                    drop = jj
            if drop < 0:
                mu_w = _least_norm(np.asarray(H), np.asarray(c),
                                   np.asarray(A), work_arr[:k], n_eq,
                                   z_arr, rhs_arr[n:size].copy())
                mu_full_arr[:] = 0.0
                mu_full_arr[work_arr[:k]] = mu_w
                np.maximum(mu_full_arr[n_eq:], 0.0, out=mu_full_arr[n_eq:])
                w_final = sorted(int(work[jj]) - n_eq for jj in range(k)
                                 if work[jj] >= n_eq)
                return STATUS_OPTIMAL, z_arr, mu_full_arr, it, w_final
            _remove(A, ortho, &n_ortho, work, &n_work, in_work, drop, scratch)
            continue

        # ratio test over inactive inequality rows; the slope threshold
        # scales with |a_i||p| so a row (numerically) orthogonal to the
        # step never registers as blocking
        alpha = 1.0
        blocker = -1
        p_norm = 0.0
        for i in range(n):
            p_norm += p[i] * p[i]
        p_norm = sqrt(p_norm)
        for i in range(n_eq, m_total):
            if in_work[i] or skip[i]:
                continue
            ap = 0.0
            for j in range(n):
                ap += A[i, j] * p[j]
            if ap <= DIR_TOL * (1.0 + fabs(b[i]) + row_norm[i] * p_norm):
                continue
            dot = 0.0
            for j in range(n):
                dot += A[i, j] * z[j]
            ai = (b[i] - dot) / ap
            if ai < alpha - 1e-12:
                alpha = ai
                blocker = i
            elif blocker >= 0 and ai <= alpha + 1e-12 and i < blocker:
                blocker = i
        if alpha < 0.0:
            alpha = 0.0
        elif alpha > 1.0:
            alpha = 1.0
        for i in range(n):
            z[i] += alpha * p[i]
        if blocker >= 0 and not _try_add(A, blocker, ortho, &n_ortho, work,
                                         &n_work, in_work, scratch):
            # dependent blocker: swap it for the working inequality row
            # with the largest weight in its expansion; if the blocker is
            # implied by the equality rows alone, skip it permanently
            pos = -1
            best = 0.0
            y = np.linalg.lstsq(np.asarray(A)[work_arr[:n_work]].T,
                                np.asarray(A)[blocker], rcond=None)[0]
            for jj in range(n_work):
                if work[jj] < n_eq:
                    continue
                w = fabs(<double> y[jj])
                if w > best + 1e-12:
                    best = w
                    pos = jj
            if pos < 0:
                skip[blocker] = 1
            else:
                _remove(A, ortho, &n_ortho, work, &n_work, in_work, pos,
                        scratch)
                if not _try_add(A, blocker, ortho, &n_ortho, work, &n_work,
                                in_work, scratch):
                    skip[blocker] = 1

    w_final = sorted(int(work[jj]) - n_eq for jj in range(n_work)
                     if work[jj] >= n_eq)
    return STATUS_ITER_LIMIT, z_arr, mu_full_arr, max_iter, w_final


def _lstsq_kkt(H, c, A, b, work, z):
    """Least-squares solve of the (singular) working-set KKT system."""
    import numpy as _np
    W = A[work]
    k = W.shape[0]
    n = H.shape[0]
    kkt = _np.zeros((n + k, n + k))
    kkt[:n, :n] = H
    if k:
        kkt[:n, n:] = W.T
        kkt[n:, :n] = W
    rhs = _np.empty(n + k)
    rhs[:n] = -(H @ z + c)
    rhs[n:] = b[work] - W @ z if k else _np.empty(0)
    return _np.linalg.lstsq(kkt, rhs, rcond=None)[0]


def _least_norm(H, c, A, work, n_eq, z, mu_kkt):
    """Least-norm multipliers over the final working set (see `_qp_py`)."""
    import numpy as _np
    if work.shape[0] == 0:
        return mu_kkt
    mu = _np.linalg.lstsq(A[work].T, -(H @ z + c), rcond=None)[0]
    for j, row in enumerate(work):
        if row >= n_eq and mu[j] < -MU_TOL:
            return mu_kkt
    return mu
