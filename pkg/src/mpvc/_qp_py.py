"""Pure numpy primal active-set kernel for strictly convex QPs.

Reference implementation; `_qp_kernel.pyx` is the compiled twin with
identical semantics (same pivoting and tie-breaking rules).  The kernel
expects a feasible start and operates on one stacked constraint matrix
with the equality rows first.
"""

from __future__ import annotations

import numpy as np

KKT_STEP_TOL = 1e-11
MU_TOL = 1e-11
DIR_TOL = 1e-11
RANK_TOL = 1e-9

STATUS_OPTIMAL = 0
STATUS_ITER_LIMIT = 2


def solve_kernel(H, c, A, b, n_eq, z0, w0, max_iter):
    """Minimize 0.5 z'Hz + c'z  s.t.  A[:n_eq] z = b[:n_eq], A[n_eq:] z <= b[n_eq:].

    `z0` must be feasible; `w0` lists inequality rows (indices relative to
    the inequality block) used to seed the working set.  Returns
    ``(status, z, mu, iterations, w_final)`` where `mu` covers all rows in
    the Lagrangian convention ``Hz + c + A'mu = 0`` with ``mu >= 0`` on
    inequality rows.
    """
    n = H.shape[0]
    m_total = A.shape[0]
    m_in = m_total - n_eq
    z = np.array(z0, dtype=float)
    row_norm = np.sqrt(np.sum(A * A, axis=1)) if m_total else np.zeros(0)
    # rows found to be implied by the equality rows; never treated as
    # blocking (their multiplier stays 0, shifted onto the equalities)
    skip = np.zeros(m_total, dtype=bool)

    # Rank-screened working set: equality rows first, then warm-start rows.
    # Dependent rows are skipped (consistency is implied by feasibility of
    # z0); `work` holds global row indices.
    ortho = []
    work = []
    in_work = np.zeros(m_total, dtype=bool)

    def try_add(row_idx):
        a = A[row_idx]
        r = a.astype(float, copy=True)
        for q in ortho:
            r -= (q @ r) * q
        nr = np.linalg.norm(r)
        if nr <= RANK_TOL * max(1.0, np.linalg.norm(a)):
            return False
        ortho.append(r / nr)
        work.append(row_idx)
        in_work[row_idx] = True
        return True

    for i in range(n_eq):
        try_add(i)
    for w in w0:
        try_add(n_eq + int(w))

    mu_full = np.zeros(m_total)
    for it in range(max_iter):
        k = len(work)
        W = A[work] if k else np.zeros((0, n))
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = H
        if k:
            kkt[:n, n:] = W.T
            kkt[n:, :n] = W
        rhs = np.empty(n + k)
        rhs[:n] = -(H @ z + c)
        rhs[n:] = b[work] - W @ z if k else np.empty(0)
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        p = sol[:n]
        mu_w = sol[n:]

        if np.linalg.norm(p, ord=np.inf) <= KKT_STEP_TOL * (1.0 + np.linalg.norm(z, ord=np.inf)):
            # stationary on the working set: check inequality multipliers
            drop = -1
            worst = -MU_TOL
            for j in range(k):
                if work[j] >= n_eq and mu_w[j] < worst:
                    worst = mu_w[j]
                    drop = j
            if drop < 0:
                mu_w = _least_norm_multipliers(H, c, z, A, work, n_eq, mu_w)
                mu_full[:] = 0.0
                mu_full[work] = mu_w
                np.maximum(mu_full[n_eq:], 0.0, out=mu_full[n_eq:])
                w_final = sorted(i - n_eq for i in work if i >= n_eq)
                return STATUS_OPTIMAL, z, mu_full, it, w_final
            _remove(ortho, work, in_work, drop, A)
            continue

        # ratio test over inactive inequality rows; the slope threshold
        # scales with |a_i||p| so a row (numerically) orthogonal to the
        # step never registers as blocking
        alpha = 1.0
        blocker = -1
        p_norm = float(np.linalg.norm(p))
        for i in range(n_eq, m_total):
            if in_work[i] or skip[i]:
                continue
            ap = A[i] @ p
            if ap <= DIR_TOL * (1.0 + abs(b[i]) + row_norm[i] * p_norm):
                continue
            ai = (b[i] - A[i] @ z) / ap
            if ai < alpha - 1e-12:
                alpha = ai
                blocker = i
            elif blocker >= 0 and ai <= alpha + 1e-12 and i < blocker:
                blocker = i
        alpha = min(max(alpha, 0.0), 1.0)
        z = z + alpha * p
        if blocker >= 0 and not try_add(blocker):
            if not _exchange(ortho, work, in_work, try_add, blocker, A, n_eq):
                skip[blocker] = True

    return STATUS_ITER_LIMIT, z, mu_full, max_iter, sorted(
        i - n_eq for i in work if i >= n_eq)


def _least_norm_multipliers(H, c, z, A, work, n_eq, mu_kkt):
    """Least-norm multipliers over the final working set.

    Near-dependent working rows leave the multiplier non-unique, and the
    KKT solve can then return huge canceling coefficients.  The
    least-squares representative of the same stationarity system is
    bounded; it is kept only when it respects the sign constraint on the
    inequality rows, otherwise the KKT multipliers stand.
    """
    if not work:
        return mu_kkt
    mu, *_ = np.linalg.lstsq(A[work].T, -(H @ z + c), rcond=None)
    for j, row in enumerate(work):
        if row >= n_eq and mu[j] < -MU_TOL:
            return mu_kkt
    return mu


def _exchange(ortho, work, in_work, try_add, blocker, A, n_eq):
    """Swap a dependent blocking row into the working set.

    The blocker lies in the span of the working rows, so the step would
    stall on it forever.  Removing any row with weight in that expansion
    restores independence (the working rows are independent), letting
    the blocker take its place.  Picks the inequality row with the
    largest weight; ties keep the earliest working-set position.
    """
    y, *_ = np.linalg.lstsq(A[work].T, A[blocker], rcond=None)
    pos = -1
    best = 0.0
    for j in range(len(work)):
        if work[j] < n_eq:
            continue
        w = abs(float(y[j]))
        if w > best + 1e-12:
            best = w
            pos = j
    if pos < 0:
        return False
    _remove(ortho, work, in_work, pos, A)
    return try_add(blocker)


def _remove(ortho, work, in_work, pos, A):
    """Drop `work[pos]` and rebuild the orthonormal row basis."""
    in_work[work[pos]] = False
    del work[pos]
    ortho.clear()
    for idx in list(work):
        a = A[idx]
        r = a.astype(float, copy=True)
        for q in ortho:
            r -= (q @ r) * q
        nr = np.linalg.norm(r)
        if nr > RANK_TOL * max(1.0, np.linalg.norm(a)):
            ortho.append(r / nr)
