"""Dense bounded-variable revised simplex.

Solves   min c.x   s.t.  A_eq x = b_eq,  A_in x <= b_in,  lb <= x <= ub
(entries of lb/ub may be infinite).

Internally the problem is shifted/split to standard form with variables in
[0, u], slacks for the inequality rows and a full artificial phase 1.
Pivoting is deterministic: largest reduced-cost violation with lowest-index
tie-break, switching to Bland's rule (lowest eligible index) after a run of
degenerate pivots.  Row multipliers are returned in the Lagrangian
convention  c + A_eq'mu_eq + A_in'mu_in - z_lb + z_ub = 0  with mu_in >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
ITER_LIMIT = "IterLimit"

_FEAS_TOL = 1e-9
_OPT_TOL = 1e-9
_DEGEN_STREAK = 12  # consecutive zero-length pivots before Bland mode


@dataclass
class LinProgram:
    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_in: Optional[np.ndarray] = None
    b_in: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None


@dataclass
class LpResult:
    status: str
    x: Optional[np.ndarray] = None
    obj: float = np.nan
    mu_eq: Optional[np.ndarray] = None
    mu_in: Optional[np.ndarray] = None
    kkt_residual: float = np.nan
    iterations: int = 0


def _as_arr(a, shape):
    if a is None:
        return np.zeros(shape)
    return np.asarray(a, dtype=float).reshape(shape)


class _Standard:
    """Standard-form data plus the mapping back to the user's variables."""

    def __init__(self, lp: LinProgram):
        c = np.asarray(lp.c, dtype=float).ravel()
        n = c.size
        A_eq = _as_arr(lp.A_eq, (-1, n)) if lp.A_eq is not None else np.zeros((0, n))
        b_eq = _as_arr(lp.b_eq, (A_eq.shape[0],))
        A_in = _as_arr(lp.A_in, (-1, n)) if lp.A_in is not None else np.zeros((0, n))
        b_in = _as_arr(lp.b_in, (A_in.shape[0],))
        lb = _as_arr(lp.lb, (n,)) if lp.lb is not None else np.full(n, -np.inf)
        ub = _as_arr(lp.ub, (n,)) if lp.ub is not None else np.full(n, np.inf)

        self.n = n
        self.me = A_eq.shape[0]
        self.mi = A_in.shape[0]
        A = np.vstack([A_eq, A_in])
        b = np.concatenate([b_eq, b_in])

        # column per user variable: (j, mode) with mode shift/negate/split
        cols = []
        u = []
        offset = np.zeros(n)
        for j in range(n):
            if lb[j] > ub[j] + _FEAS_TOL:
                raise ValueError(f"empty bound interval for variable {j}")
            if np.isfinite(lb[j]):
                cols.append((j, +1.0))
                u.append(ub[j] - lb[j])
                offset[j] = lb[j]
            elif np.isfinite(ub[j]):
                cols.append((j, -1.0))
                u.append(np.inf)
                offset[j] = ub[j]
            else:
                cols.append((j, +1.0))
                u.append(np.inf)
                cols.append((j, -1.0))
                u.append(np.inf)

        ns = len(cols)
        As = np.zeros((self.me + self.mi, ns + self.mi))
        cs = np.zeros(ns + self.mi)
        for k, (j, s) in enumerate(cols):
            As[:, k] = s * A[:, j]
            cs[k] = s * c[j]
        # slacks for inequality rows
        for i in range(self.mi):
            As[self.me + i, ns + i] = 1.0
        us = np.array(u + [np.inf] * self.mi)
        bs = b - A @ offset

        self.cols = cols
        self.A = As
        self.b = bs
        self.c = cs
        self.u = us
        self.offset = offset
        self.c0 = float(c @ offset)
        self.orig_c = c

    def recover_x(self, xs):
        x = self.offset.copy()
        for k, (j, s) in enumerate(self.cols):
            x[j] += s * xs[k]
        return x


def solve_lp(lp: LinProgram, max_iter: Optional[int] = None) -> LpResult:
    std = _Standard(lp)
    m, nc = std.A.shape
    if max_iter is None:
        max_iter = max(200, 50 * (m + nc))

    # flip rows so b >= 0, remember signs for the duals
    row_sign = np.where(std.b < 0.0, -1.0, 1.0)
    A = std.A * row_sign[:, None]
    b = std.b * row_sign

    # artificial columns form the initial basis
    A1 = np.hstack([A, np.eye(m)])
    u1 = np.concatenate([std.u, np.full(m, np.inf)])
    c_phase1 = np.concatenate([np.zeros(nc), np.ones(m)])

    basis = list(range(nc, nc + m))
    xval = np.zeros(nc + m)
    xval[nc:] = b

    it1, status = _simplex(A1, u1, c_phase1, basis, xval, max_iter)
    if status == ITER_LIMIT:
        return LpResult(status=ITER_LIMIT, iterations=it1)
    art_sum = float(xval[nc:].sum())
    if art_sum > _FEAS_TOL * (1.0 + float(np.abs(b).sum())):
        return LpResult(status=INFEASIBLE, iterations=it1)

    # phase 2: freeze artificials at zero
    u1[nc:] = 0.0
    xval[nc:] = np.maximum(xval[nc:], 0.0)
    c_phase2 = np.concatenate([std.c, np.zeros(m)])
    it2, status = _simplex(A1, u1, c_phase2, basis, xval, max_iter)
    iterations = it1 + it2
    if status != OPTIMAL:
        return LpResult(status=status, iterations=iterations)

    # duals from the final basis, unflipping row signs
    B = A1[:, basis]
    y = np.linalg.lstsq(B.T, c_phase2[basis], rcond=None)[0]
    mu = -(y * row_sign)
    mu_eq = mu[: std.me]
    mu_in = np.maximum(mu[std.me:], 0.0)

    xs = xval[:nc]
    x = std.recover_x(xs)
    obj = float(std.orig_c @ x)
    res = _kkt_residual(lp, std, x, mu_eq, mu_in)
    return LpResult(status=OPTIMAL, x=x, obj=obj, mu_eq=mu_eq, mu_in=mu_in,
                    kkt_residual=res, iterations=iterations)


def _simplex(A, u, c, basis, xval, max_iter):
    """Bounded-variable simplex on  min c.x, A x = b, 0 <= x <= u.

    `basis` and `xval` are updated in place; nonbasic variables sit
    exactly on one of their bounds.  Returns (iterations, status).
    """
    m, ncols = A.shape
    degen_streak = 0
    in_basis = np.zeros(ncols, dtype=bool)
    in_basis[basis] = True

    for it in range(max_iter):
        B = A[:, basis]
        try:
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            y = np.linalg.lstsq(B.T, c[basis], rcond=None)[0]
        d = c - A.T @ y  # reduced costs

        eligible = []  # (index, violation, direction)
        for j in range(ncols):
            if in_basis[j] or u[j] <= 0.0:
                continue
            if xval[j] == 0.0:
                if d[j] < -_OPT_TOL:
                    eligible.append((j, -d[j], +1.0))
            elif d[j] > _OPT_TOL:
                eligible.append((j, d[j], -1.0))
        if not eligible:
            return it, OPTIMAL

        if degen_streak >= _DEGEN_STREAK:
            j_ent, _, sgn = min(eligible)  # Bland: lowest eligible index
        else:
            j_ent, _, sgn = max(eligible, key=lambda e: (e[1], -e[0]))

        try:
            w = np.linalg.solve(B, A[:, j_ent])
        except np.linalg.LinAlgError:
            w = np.linalg.lstsq(B, A[:, j_ent], rcond=None)[0]
        delta = -sgn * w  # change of basic values per unit entering step

        t_basic = np.inf
        leave = -1
        for k in range(m):
            jb = basis[k]
            if delta[k] > 1e-11:
                t = (u[jb] - xval[jb]) / delta[k]
            elif delta[k] < -1e-11:
                t = xval[jb] / (-delta[k])
            else:
                continue
            t = max(t, 0.0)
            if t < t_basic - 1e-12:
                t_basic = t
                leave = k
            elif t <= t_basic + 1e-12 and leave >= 0 and jb < basis[leave]:
                leave = k

        t_flip = u[j_ent]
        if leave >= 0 and t_basic <= t_flip - 1e-12:
            step = t_basic
        elif np.isfinite(t_flip):
            step = t_flip
            leave = -1
        elif leave >= 0:
            step = t_basic
        else:
            return it, UNBOUNDED

        degen_streak = degen_streak + 1 if step <= 1e-12 else 0

        idx = np.asarray(basis, dtype=np.intp)
        xval[idx] = np.maximum(xval[idx] + delta * step, 0.0)
        if leave >= 0:
            jb = basis[leave]
            # snap the leaving variable onto the bound it hit
            xval[jb] = 0.0 if delta[leave] < 0 else u[jb]
            xval[j_ent] += sgn * step
            in_basis[jb] = False
            in_basis[j_ent] = True
            basis[leave] = j_ent
        else:
            # bound flip: the entering variable crosses to its other bound
            xval[j_ent] = u[j_ent] if sgn > 0 else 0.0

    return max_iter, ITER_LIMIT


def _kkt_residual(lp, std, x, mu_eq, mu_in):
    c = std.orig_c
    r = c.copy()
    prim = 0.0
    if std.me:
        A_eq = np.asarray(lp.A_eq, dtype=float).reshape(std.me, std.n)
        b_eq = np.asarray(lp.b_eq, dtype=float).ravel()
        r = r + A_eq.T @ mu_eq
        prim = max(prim, float(np.max(np.abs(A_eq @ x - b_eq), initial=0.0)))
    compl = 0.0
    if std.mi:
        A_in = np.asarray(lp.A_in, dtype=float).reshape(std.mi, std.n)
        b_in = np.asarray(lp.b_in, dtype=float).ravel()
        slack = b_in - A_in @ x
        r = r + A_in.T @ mu_in
        prim = max(prim, float(np.max(-slack, initial=0.0)))
        compl = float(np.max(np.abs(mu_in * slack), initial=0.0))
    # stationarity residual, allowing bound multipliers to absorb r at
    # active bounds with the right sign
    lb = np.full(std.n, -np.inf) if lp.lb is None else np.asarray(lp.lb, dtype=float)
    ub = np.full(std.n, np.inf) if lp.ub is None else np.asarray(lp.ub, dtype=float)
    stat = 0.0
    for j in range(std.n):
        at_lb = np.isfinite(lb[j]) and x[j] <= lb[j] + 1e-8 * (1 + abs(lb[j]))
        at_ub = np.isfinite(ub[j]) and x[j] >= ub[j] - 1e-8 * (1 + abs(ub[j]))
        rj = r[j]
        if at_lb and at_ub:
            viol = 0.0
        elif at_lb:
            viol = max(0.0, -rj)
        elif at_ub:
            viol = max(0.0, rj)
        else:
            viol = abs(rj)
        stat = max(stat, viol)
        prim = max(prim, float(max(lb[j] - x[j], x[j] - ub[j], 0.0)))
    return float(max(prim, stat, compl))
