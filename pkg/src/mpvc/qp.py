"""Strictly convex QP front end with warm starts and backend dispatch.

    min 0.5 z'Hz + c'z   s.t.   A_eq z = b_eq,  A_in z <= b_in

H must be positive definite.  A compiled active-set kernel is used when
available; setting ``MPVC_PURE_PYTHON=1`` (or passing ``backend="python"``)
forces the numpy reference kernel.  Both kernels follow the same pivoting
rules, so solves are deterministic per backend.

When no feasible start is supplied, a phase-1 LP produces one (and detects
infeasibility).  Multipliers satisfy ``Hz + c + A_eq'mu_eq + A_in'mu_in = 0``
with ``mu_in >= 0``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _qp_py
from .lp import INFEASIBLE, ITER_LIMIT, OPTIMAL, LinProgram, LpResult, solve_lp

_kernel_mod = None
if not os.environ.get("MPVC_PURE_PYTHON"):
    try:
        from . import _qp_kernel as _kernel_mod  # type: ignore
    except ImportError:
        _kernel_mod = None

DEFAULT_BACKEND = "cython" if _kernel_mod is not None else "python"


def backend() -> str:
    """Name of the kernel selected at import ("cython" or "python")."""
    return DEFAULT_BACKEND


@dataclass
class QuadProgram:
    H: np.ndarray
    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_in: Optional[np.ndarray] = None
    b_in: Optional[np.ndarray] = None


@dataclass
class QpResult:
    status: str
    z: Optional[np.ndarray] = None
    obj: float = np.nan
    mu_eq: Optional[np.ndarray] = None
    mu_in: Optional[np.ndarray] = None
    kkt_residual: float = np.nan
    iterations: int = 0
    active_set: tuple = ()


def _parts(qp: QuadProgram):
    H = np.asarray(qp.H, dtype=float)
    n = H.shape[0]
    c = np.asarray(qp.c, dtype=float).reshape(n)
    A_eq = (np.zeros((0, n)) if qp.A_eq is None
            else np.asarray(qp.A_eq, dtype=float).reshape(-1, n))
    b_eq = (np.zeros(0) if qp.b_eq is None
            else np.asarray(qp.b_eq, dtype=float).reshape(A_eq.shape[0]))
    A_in = (np.zeros((0, n)) if qp.A_in is None
            else np.asarray(qp.A_in, dtype=float).reshape(-1, n))
    b_in = (np.zeros(0) if qp.b_in is None
            else np.asarray(qp.b_in, dtype=float).reshape(A_in.shape[0]))
    return H, c, A_eq, b_eq, A_in, b_in


def _feasibility(A_eq, b_eq, A_in, b_in, z) -> float:
    r = 0.0
    if A_eq.shape[0]:
        r = max(r, float(np.max(np.abs(A_eq @ z - b_eq))))
    if A_in.shape[0]:
        r = max(r, float(np.max(A_in @ z - b_in)))
    return r


def _phase1(n, A_eq, b_eq, A_in, b_in) -> LpResult:
    return solve_lp(LinProgram(
        c=np.zeros(n), A_eq=A_eq if A_eq.size else None,
        b_eq=b_eq if A_eq.size else None,
        A_in=A_in if A_in.size else None,
        b_in=b_in if A_in.size else None))


def solve_qp(qp: QuadProgram,
             start: Optional[np.ndarray] = None,
             working_set: Optional[Sequence[int]] = None,
             max_iter: Optional[int] = None,
             backend: Optional[str] = None) -> QpResult:
    H, c, A_eq, b_eq, A_in, b_in = _parts(qp)
    n = H.shape[0]
    m_total = A_eq.shape[0] + A_in.shape[0]
    if max_iter is None:
        max_iter = max(100, 50 * (n + m_total))

    scale = 1.0 + max(
        float(np.max(np.abs(b_eq), initial=0.0)),
        float(np.max(np.abs(b_in), initial=0.0)))
    z0 = None
    if start is not None:
        z0 = np.asarray(start, dtype=float).reshape(n)
        if _feasibility(A_eq, b_eq, A_in, b_in, z0) > 1e-8 * scale:
            z0 = None
    if z0 is None:
        ph1 = _phase1(n, A_eq, b_eq, A_in, b_in)
        if ph1.status != OPTIMAL:
            return QpResult(status=ph1.status)
        z0 = ph1.x
        working_set = None

    A = np.ascontiguousarray(np.vstack([A_eq, A_in]))
    b = np.ascontiguousarray(np.concatenate([b_eq, b_in]))
    w0 = np.asarray(sorted(set(int(w) for w in (working_set or ()))), dtype=np.intp)
    if w0.size and (w0[0] < 0 or w0[-1] >= A_in.shape[0]):
        raise ValueError("working set index out of range")

    use = backend or DEFAULT_BACKEND
    if use == "cython" and _kernel_mod is not None:
        status, z, mu, iters, w_final = _kernel_mod.solve_kernel(
            np.ascontiguousarray(H), np.ascontiguousarray(c), A, b,
            A_eq.shape[0], np.ascontiguousarray(z0), w0, max_iter)
    else:
        status, z, mu, iters, w_final = _qp_py.solve_kernel(
            H, c, A, b, A_eq.shape[0], z0, w0, max_iter)

    if status != _qp_py.STATUS_OPTIMAL:
        return QpResult(status=ITER_LIMIT, iterations=iters)

    mu_eq = mu[: A_eq.shape[0]]
    mu_in = mu[A_eq.shape[0]:]
    obj = float(0.5 * z @ H @ z + c @ z)
    stat = float(np.max(np.abs(H @ z + c + A_eq.T @ mu_eq + A_in.T @ mu_in),
                        initial=0.0))
    prim = _feasibility(A_eq, b_eq, A_in, b_in, z)
    compl = float(np.max(np.abs(mu_in * (b_in - A_in @ z)), initial=0.0)) \
        if A_in.shape[0] else 0.0
    return QpResult(status=OPTIMAL, z=z, obj=obj, mu_eq=mu_eq, mu_in=mu_in,
                    kkt_residual=max(stat, prim, compl), iterations=iters,
                    active_set=tuple(int(i) for i in w_final))
