"""Problem container and index-set machinery.

A mathematical program with vanishing constraints (MPVC)::

    min  f(x)
    s.t. h_i(x)  = 0                        i in E
         g_i(x) <= 0                        i in I
         H_i(x) >= 0, G_i(x) H_i(x) <= 0    i in V

is described by two callbacks (values and Jacobians); every evaluation is
bundled into an :class:`EvalPoint` so downstream code never re-evaluates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cones


@dataclass
class Values:
    """Raw constraint/objective values at a point."""

    f: float
    h: np.ndarray
    g: np.ndarray
    H: np.ndarray
    G: np.ndarray


@dataclass
class Jacobians:
    grad_f: np.ndarray  # (n,)
    Jh: np.ndarray      # (|E|, n)
    Jg: np.ndarray      # (|I|, n)
    JH: np.ndarray      # (|V|, n)
    JG: np.ndarray      # (|V|, n)


@dataclass
class ProblemInstance:
    """Dimensions plus value/Jacobian callbacks for one MPVC."""

    n: int
    n_eq: int
    n_ineq: int
    n_vanish: int
    values: Callable[[np.ndarray], Values]
    jacobians: Callable[[np.ndarray], Jacobians]
    name: str = "mpvc"

    def eval_values(self, x) -> Values:
        x = np.asarray(x, dtype=float)
        v = self.values(x)
        return _check_values(self, v)

    def eval_point(self, x) -> "EvalPoint":
        x = np.asarray(x, dtype=float)
        v = self.eval_values(x)
        j = self.jacobians(x)
        return EvalPoint(
            x=x, f=v.f, h=v.h, g=v.g, H=v.H, G=v.G,
            grad_f=np.asarray(j.grad_f, dtype=float).reshape(self.n),
            Jh=_as2d(j.Jh, self.n_eq, self.n),
            Jg=_as2d(j.Jg, self.n_ineq, self.n),
            JH=_as2d(j.JH, self.n_vanish, self.n),
            JG=_as2d(j.JG, self.n_vanish, self.n),
        )


def _as2d(a, rows, cols):
    return np.asarray(a, dtype=float).reshape(rows, cols)


def _check_values(prob, v) -> Values:
    h = np.atleast_1d(np.asarray(v.h, dtype=float)).reshape(prob.n_eq)
    g = np.atleast_1d(np.asarray(v.g, dtype=float)).reshape(prob.n_ineq)
    H = np.atleast_1d(np.asarray(v.H, dtype=float)).reshape(prob.n_vanish)
    G = np.atleast_1d(np.asarray(v.G, dtype=float)).reshape(prob.n_vanish)
    return Values(f=float(v.f), h=h, g=g, H=H, G=G)


@dataclass
class EvalPoint:
    """All values and Jacobians at a fixed point, evaluated once."""

    x: np.ndarray
    f: float
    h: np.ndarray
    g: np.ndarray
    H: np.ndarray
    G: np.ndarray
    grad_f: np.ndarray
    Jh: np.ndarray
    Jg: np.ndarray
    JH: np.ndarray
    JG: np.ndarray

    @property
    def F(self) -> np.ndarray:
        """Branch-space rows F_i = (-H_i, G_i), shape (|V|, 2)."""
        return np.column_stack([-self.H, self.G])

    def violation(self) -> float:
        return violation_of(self.h, self.g, self.H, self.G)


def violation_of(h, g, H, G) -> float:
    """max of |h|, (g)+ and the branch distances d(F_i, P)."""
    F = np.column_stack([-np.atleast_1d(H), np.atleast_1d(G)])
    parts = [
        np.max(np.abs(h), initial=0.0),
        np.max(g, initial=0.0),
        np.max(cones.dist_p(F), initial=0.0) if F.size else 0.0,
    ]
    return float(max(max(parts), 0.0))


@dataclass
class IndexSets:
    """Activity pattern at a (near-)feasible point.

    Vanishing rows are split by the signs of (H_i, G_i); superscripts name
    the (H, G) pattern, e.g. ``i0p`` is {i : H_i = 0 < G_i}.
    """

    active_g: np.ndarray
    i0p: np.ndarray
    i00: np.ndarray
    i0m: np.ndarray
    ip0: np.ndarray
    ipm: np.ndarray

    def as_masks(self, n_vanish):
        out = {}
        for name in ("i0p", "i00", "i0m", "ip0", "ipm"):
            m = np.zeros(n_vanish, dtype=bool)
            m[getattr(self, name)] = True
            out[name] = m
        return out


def classify_indices(pt: EvalPoint, tau_scale: float = 1e-7) -> IndexSets:
    """Classify active/vanishing structure at a near-feasible point.

    Row i uses the scaled tolerance tau_i = tau_scale * (1 + |H_i| + |G_i|);
    the inequality activity test uses tau_scale * (1 + |g_i|).  Rows that
    violate H_i >= 0 beyond tolerance are treated as vanished (H = 0),
    which is only meaningful if the caller has checked feasibility first.
    """
    g_tol = tau_scale * (1.0 + np.abs(pt.g))
    active_g = np.flatnonzero(pt.g >= -g_tol)

    tau = tau_scale * (1.0 + np.abs(pt.H) + np.abs(pt.G))
    h_zero = pt.H <= tau
    g_pos = pt.G > tau
    g_neg = pt.G < -tau
    g_zero = ~g_pos & ~g_neg

    return IndexSets(
        active_g=active_g,
        i0p=np.flatnonzero(h_zero & g_pos),
        i00=np.flatnonzero(h_zero & g_zero),
        i0m=np.flatnonzero(h_zero & g_neg),
        ip0=np.flatnonzero(~h_zero & ~g_neg),
        ipm=np.flatnonzero(~h_zero & g_neg),
    )


def fd_jacobian(fun, x, rel_step: float = 1e-6):
    """Central-difference Jacobian of a vector- or scalar-valued `fun`.

    Testing utility only; steps are scaled per coordinate as
    rel_step * (1 + |x_j|).
    """
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(x), dtype=float))
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        step = rel_step * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        fp = np.atleast_1d(np.asarray(fun(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(fun(xm), dtype=float))
        J[:, j] = (fp - fm) / (2.0 * step)
    return J


def derivative_gap(problem: ProblemInstance, x, rel_step: float = 1e-6) -> float:
    """Worst relative mismatch between the analytic derivatives and
    central differences over every block (gradient and all Jacobians).

    Each block is scaled by max(1, largest analytic entry) so the result
    reads as a relative error even when a block is small.
    """
    x = np.asarray(x, dtype=float)
    pt = problem.eval_point(x)
    blocks = [
        (pt.grad_f.reshape(1, -1), lambda y: problem.eval_values(y).f),
        (pt.Jh, lambda y: problem.eval_values(y).h),
        (pt.Jg, lambda y: problem.eval_values(y).g),
        (pt.JH, lambda y: problem.eval_values(y).H),
        (pt.JG, lambda y: problem.eval_values(y).G),
    ]
    worst = 0.0
    for J, fun in blocks:
        if J.size == 0:
            continue
        F = fd_jacobian(fun, x, rel_step)
        scale = max(1.0, float(np.max(np.abs(J))))
        worst = max(worst, float(np.max(np.abs(F - J))) / scale)
    return worst
