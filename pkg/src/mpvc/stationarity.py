"""Stationarity levels and certificates for vanishing-constraint programs.

A feasible point is graded on the ladder

    None < Weak < M < Q < QM < S

where Weak requires multipliers (lam_h, lam_g, lam_H, lam_G) solving

    grad_f + Jh'lam_h + Jg'lam_g - JH'lam_H + JG'lam_G = 0

with the usual complementarity and sign table, M additionally requires
lam_H_i lam_G_i = 0 on the bi-active rows (H_i = G_i = 0), and S pins
lam_H_i >= 0, lam_G_i = 0 there.  Q-stationarity is certified without
multipliers: for a partition (beta1, beta2) of the bi-active rows, the
point is Q-stationary iff two boxed direction LPs both have optimum 0;
their duals then produce a bracketing witness pair (over, under).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import cones
from .lp import INFEASIBLE, OPTIMAL, LinProgram, solve_lp
from .problem import EvalPoint, IndexSets, ProblemInstance, classify_indices
from .qpvc import PieceMultiplier

LEVEL_NONE = "None"
LEVEL_WEAK = "Weak"
LEVEL_M = "M"
LEVEL_Q = "Q"
LEVEL_QM = "QM"
LEVEL_S = "S"

_RANK = {LEVEL_NONE: 0, LEVEL_WEAK: 1, LEVEL_M: 2,
         LEVEL_Q: 3, LEVEL_QM: 4, LEVEL_S: 5}


def level_rank(level: str) -> int:
    return _RANK[level]


class InfeasiblePointError(ValueError):
    """The point violates the constraints beyond the stated tolerance."""


class CertificationError(RuntimeError):
    """An auxiliary linear program could not be solved."""


@dataclass
class Multiplier:
    """One multiplier tuple in original-constraint coordinates."""

    lam_h: np.ndarray
    lam_g: np.ndarray
    lam_H: np.ndarray
    lam_G: np.ndarray

    def __post_init__(self):
        self.lam_h = np.atleast_1d(np.asarray(self.lam_h, dtype=float))
        self.lam_g = np.atleast_1d(np.asarray(self.lam_g, dtype=float))
        self.lam_H = np.atleast_1d(np.asarray(self.lam_H, dtype=float))
        self.lam_G = np.atleast_1d(np.asarray(self.lam_G, dtype=float))

    @classmethod
    def zeros(cls, n_eq: int, n_ineq: int, n_vanish: int) -> "Multiplier":
        return cls(np.zeros(n_eq), np.zeros(n_ineq),
                   np.zeros(n_vanish), np.zeros(n_vanish))

    @classmethod
    def from_piece(cls, piece: PieceMultiplier) -> "Multiplier":
        return cls(lam_h=piece.lam_h.copy(), lam_g=piece.lam_g.copy(),
                   lam_H=piece.lam_F[:, 0].copy(), lam_G=piece.lam_F[:, 1].copy())

    def as_dict(self) -> dict:
        return {"lam_h": self.lam_h.tolist(), "lam_g": self.lam_g.tolist(),
                "lam_H": self.lam_H.tolist(), "lam_G": self.lam_G.tolist()}


def stationarity_residual(pt: EvalPoint, mult: Multiplier) -> float:
    """Sup-norm of the gradient-of-Lagrangian equation at (pt, mult)."""
    r = (pt.grad_f + pt.Jh.T @ mult.lam_h + pt.Jg.T @ mult.lam_g
         - pt.JH.T @ mult.lam_H + pt.JG.T @ mult.lam_G)
    return float(np.max(np.abs(r), initial=0.0))


def weak_residual(pt: EvalPoint, mult: Multiplier, idx: IndexSets) -> float:
    """Worst violation of the complementarity and sign table."""
    r = 0.0
    if mult.lam_g.size:
        r = max(r, float(np.max(np.abs(mult.lam_g * pt.g), initial=0.0)))
        r = max(r, float(np.max(-mult.lam_g, initial=0.0)))
    if mult.lam_H.size:
        r = max(r, float(np.max(np.abs(mult.lam_H * pt.H), initial=0.0)))
        r = max(r, float(np.max(np.abs(mult.lam_G * pt.G), initial=0.0)))
    if idx.i0m.size:
        r = max(r, float(np.max(-mult.lam_H[idx.i0m], initial=0.0)))
    g_nonneg = np.concatenate([idx.i00, idx.ip0])
    if g_nonneg.size:
        r = max(r, float(np.max(-mult.lam_G[g_nonneg.astype(int)], initial=0.0)))
    return r


def bi_active_product(pt: EvalPoint, mult: Multiplier, idx: IndexSets) -> float:
    """Largest |lam_H_i lam_G_i| over the bi-active rows."""
    if idx.i00.size == 0:
        return 0.0
    prod = mult.lam_H[idx.i00] * mult.lam_G[idx.i00]
    return float(np.max(np.abs(prod)))


def s_residual(pt: EvalPoint, mult: Multiplier, idx: IndexSets) -> float:
    """Worst violation of lam_H >= 0, lam_G = 0 on the bi-active rows."""
    if idx.i00.size == 0:
        return 0.0
    r = float(np.max(-mult.lam_H[idx.i00], initial=0.0))
    return max(r, float(np.max(np.abs(mult.lam_G[idx.i00]), initial=0.0)))


def _abs_tol(pt: EvalPoint, tol: float) -> float:
    return tol * (1.0 + float(np.max(np.abs(pt.grad_f), initial=0.0)))


def check_weak_M(problem: ProblemInstance, x, mult: Multiplier,
                 tol: float = 1e-6, tau_scale: float = 1e-7) -> str:
    """Highest residual-certified level of `mult` at x (None/Weak/M/S)."""
    pt = problem.eval_point(x)
    atol = _abs_tol(pt, tol)
    viol = pt.violation()
    if viol > atol:
        raise InfeasiblePointError(f"constraint violation {viol:.3e} exceeds {atol:.3e}")
    idx = classify_indices(pt, tau_scale)
    if stationarity_residual(pt, mult) > atol or weak_residual(pt, mult, idx) > atol:
        return LEVEL_NONE
    level = LEVEL_WEAK
    if bi_active_product(pt, mult, idx) <= atol:
        level = LEVEL_M
        # With no bi-active rows the stronger labels add nothing; the
        # S claim is reserved for points where it is a real statement.
        if idx.i00.size and s_residual(pt, mult, idx) <= atol:
            level = LEVEL_S
    return level


def direction_lp(pt: EvalPoint, w1: Sequence[int]) -> LinProgram:
    """Boxed first-order direction problem at pt with P1 branch on w1.

    min grad_f.d  s.t.  Jh d = 0;  JH_i d = 0 (i in w1);
    (g_i)- + Jg_i d <= 0;  (-H_i)- - JH_i d <= 0 and (G_i)- + JG_i d <= 0
    (i not in w1);  -1 <= d <= 1,  where (u)- = min(u, 0).  d = 0 is
    always feasible, so the optimum is never positive.
    """
    n = pt.x.size
    w1 = sorted(set(int(i) for i in w1))
    w2 = [i for i in range(pt.H.size) if i not in set(w1)]

    eq_rows = [pt.Jh]
    if w1:
        eq_rows.append(pt.JH[w1])
    A_eq = np.vstack(eq_rows) if eq_rows else np.zeros((0, n))
    b_eq = np.zeros(A_eq.shape[0])

    in_rows = [pt.Jg]
    in_rhs = [-np.minimum(pt.g, 0.0)]
    for i in w2:
        in_rows.append(-pt.JH[i:i + 1])
        in_rhs.append(np.array([-min(-pt.H[i], 0.0)]))
        in_rows.append(pt.JG[i:i + 1])
        in_rhs.append(np.array([-min(pt.G[i], 0.0)]))
    A_in = np.vstack(in_rows)
    b_in = np.concatenate(in_rhs)
    return LinProgram(c=pt.grad_f.copy(), A_eq=A_eq, b_eq=b_eq,
                      A_in=A_in, b_in=b_in,
                      lb=-np.ones(n), ub=np.ones(n))


def _direction_optimum(pt: EvalPoint, w1) -> float:
    res = solve_lp(direction_lp(pt, w1))
    if res.status != OPTIMAL:
        raise CertificationError(f"direction subproblem ended with {res.status}")
    return float(res.obj)


def find_multiplier(pt: EvalPoint, idx: IndexSets,
                    zero_H: Sequence[int] = (), zero_G: Sequence[int] = (),
                    nonneg_H: Sequence[int] = (), nonneg_G: Sequence[int] = (),
                    tol: float = 1e-9) -> Optional[Multiplier]:
    """Feasibility search for a weakly stationary multiplier at pt.

    Complementarity pins every component whose constraint is inactive;
    the sign table adds lam_g >= 0, lam_H >= 0 on {H=0>G}, lam_G >= 0 on
    {G=0}.  Extra pins and sign requirements (per vanishing row index)
    narrow the search to dual-witness, M-pattern or S-pattern shapes.
    Returns None when no such multiplier exists.
    """
    nh, ng, nv = pt.h.size, pt.g.size, pt.H.size
    m = nh + ng + 2 * nv
    if m == 0:
        if float(np.max(np.abs(pt.grad_f), initial=0.0)) <= tol:
            return Multiplier.zeros(nh, ng, nv)
        return None
    oh, og, oH, oG = 0, nh, nh + ng, nh + ng + nv

    stat = np.hstack([pt.Jh.T, pt.Jg.T, -pt.JH.T, pt.JG.T])
    eq_rows: List[np.ndarray] = [stat]
    eq_rhs: List[np.ndarray] = [-pt.grad_f]

    def pin(cols):
        for c in cols:
            row = np.zeros(m)
            row[c] = 1.0
            eq_rows.append(row[None, :])
            eq_rhs.append(np.zeros(1))

    active = np.zeros(ng, dtype=bool)
    active[idx.active_g] = True
    pin(og + i for i in range(ng) if not active[i])
    h_zero = np.zeros(nv, dtype=bool)
    h_zero[np.concatenate([idx.i0p, idx.i00, idx.i0m]).astype(int)] = True
    g_zero = np.zeros(nv, dtype=bool)
    g_zero[np.concatenate([idx.i00, idx.ip0]).astype(int)] = True
    pin(oH + i for i in range(nv) if not h_zero[i])
    pin(oG + i for i in range(nv) if not g_zero[i])
    pin(oH + int(i) for i in zero_H)
    pin(oG + int(i) for i in zero_G)

    sign_cols = set(og + i for i in range(ng) if active[i])
    sign_cols.update(oH + int(i) for i in idx.i0m)
    sign_cols.update(oG + i for i in range(nv) if g_zero[i])
    sign_cols.update(oH + int(i) for i in nonneg_H)
    sign_cols.update(oG + int(i) for i in nonneg_G)
    in_rows = []
    for c in sorted(sign_cols):
        row = np.zeros(m)
        row[c] = -1.0
        in_rows.append(row)
    A_in = np.vstack(in_rows) if in_rows else np.zeros((0, m))

    res = solve_lp(LinProgram(c=np.zeros(m), A_eq=np.vstack(eq_rows),
                              b_eq=np.concatenate(eq_rhs),
                              A_in=A_in, b_in=np.zeros(A_in.shape[0])))
    if res.status != OPTIMAL:
        return None
    lam = res.x
    return Multiplier(lam_h=lam[:nh], lam_g=lam[og:og + ng],
                      lam_H=lam[oH:oH + nv], lam_G=lam[oG:oG + nv])


@dataclass
class QTest:
    """Outcome of the two-LP Q-stationarity test for one partition."""

    ok: bool
    optima: Tuple[float, float]
    beta1: Tuple[int, ...]
    beta2: Tuple[int, ...]
    over: Optional[Multiplier] = None
    under: Optional[Multiplier] = None


def _q_test(pt: EvalPoint, idx: IndexSets, beta1, tol: float,
            with_witnesses: bool = True) -> QTest:
    i00 = set(int(i) for i in idx.i00)
    beta1 = tuple(sorted(int(i) for i in beta1))
    if not set(beta1) <= i00:
        raise ValueError("beta1 must be a subset of the bi-active rows")
    beta2 = tuple(sorted(i00 - set(beta1)))
    i0p = tuple(int(i) for i in idx.i0p)
    w1_over = tuple(sorted(set(i0p) | set(beta1)))
    w1_under = tuple(sorted(set(i0p) | set(beta2)))
    opt1 = _direction_optimum(pt, w1_over)
    opt2 = _direction_optimum(pt, w1_under)
    ok = min(opt1, opt2) >= -tol
    over = under = None
    if ok and with_witnesses:
        nv = pt.H.size
        w2_over = [i for i in range(nv) if i not in set(w1_over)]
        w2_under = [i for i in range(nv) if i not in set(w1_under)]
        over = find_multiplier(pt, idx, zero_G=w1_over, nonneg_H=w2_over)
        under = find_multiplier(pt, idx, zero_G=w1_under, nonneg_H=w2_under)
    return QTest(ok=ok, optima=(opt1, opt2), beta1=beta1, beta2=beta2,
                 over=over, under=under)


def check_Q_via_LP(problem: ProblemInstance, x, beta1=(), tol: float = 1e-8,
                   tau_scale: float = 1e-7, feas_tol: float = 1e-6) -> QTest:
    """Two-LP test: Q-stationary w.r.t. (beta1, complement) iff both
    direction problems (P1 branch on {H=0<G} plus one side of the
    bi-active split) have optimum 0.  Witness multipliers come from the
    dual side when the test passes."""
    pt = problem.eval_point(x)
    viol = pt.violation()
    if viol > feas_tol:
        raise InfeasiblePointError(f"constraint violation {viol:.3e} exceeds {feas_tol:.3e}")
    idx = classify_indices(pt, tau_scale)
    return _q_test(pt, idx, beta1, tol)


@dataclass
class StationarityCertificate:
    """Graded stationarity summary of one point."""

    x: np.ndarray
    level: str
    feasibility: float
    tol_abs: float
    over: Optional[Multiplier] = None
    under: Optional[Multiplier] = None
    beta1: Tuple[int, ...] = ()
    beta2: Tuple[int, ...] = ()
    q_margin: Optional[float] = None
    stationarity: float = float("inf")
    sign_residual: float = float("inf")
    bi_active: float = float("inf")

    def at_least(self, level: str) -> bool:
        return level_rank(self.level) >= level_rank(level)

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "feasibility": self.feasibility,
            "tolerance": self.tol_abs,
            "beta1": [int(i) for i in self.beta1],
            "beta2": [int(i) for i in self.beta2],
            "q_margin": None if self.q_margin is None else float(self.q_margin),
            "stationarity": _json_float(self.stationarity),
            "sign_residual": _json_float(self.sign_residual),
            "bi_active": _json_float(self.bi_active),
            "over": None if self.over is None else self.over.as_dict(),
            "under": None if self.under is None else self.under.as_dict(),
        }


def _json_float(v: float):
    return None if not np.isfinite(v) else float(v)


def _witness_level(pt, idx, mult, atol) -> str:
    if mult is None:
        return LEVEL_NONE
    if stationarity_residual(pt, mult) > atol or weak_residual(pt, mult, idx) > atol:
        return LEVEL_NONE
    if bi_active_product(pt, mult, idx) <= atol:
        return LEVEL_M
    return LEVEL_WEAK


def _fill_residuals(cert: StationarityCertificate, pt, idx, mult) -> None:
    if mult is None:
        return
    cert.stationarity = stationarity_residual(pt, mult)
    cert.sign_residual = weak_residual(pt, mult, idx)
    cert.bi_active = bi_active_product(pt, mult, idx)


def certify(problem: ProblemInstance, x, hints: Optional[Multiplier] = None,
            tol: float = 1e-6, tau_scale: float = 1e-7,
            exhaustive: bool = False) -> StationarityCertificate:
    """Strongest certifiable stationarity level at x.

    Tries the LP test for the two canonical bi-active partitions first
    (all of 2^|I00| behind `exhaustive` for at most 10 bi-active rows);
    on success upgrades Q to QM/S by searching witness multipliers.
    Without a Q certificate it falls back to residual grading of `hints`
    and of multipliers found by feasibility LPs (Weak, then M via the
    per-row zero patterns).  An infeasible point yields level None.
    """
    x = np.asarray(x, dtype=float)
    pt = problem.eval_point(x)
    atol = _abs_tol(pt, tol)
    viol = pt.violation()
    cert = StationarityCertificate(x=x.copy(), level=LEVEL_NONE,
                                   feasibility=viol, tol_abs=atol)
    if viol > atol:
        return cert
    idx = classify_indices(pt, tau_scale)
    i00 = tuple(int(i) for i in idx.i00)

    partitions: List[Tuple[int, ...]] = [()]
    if i00:
        partitions.append(i00)
        if exhaustive and len(i00) <= 10:
            for bits in product((0, 1), repeat=len(i00)):
                cand = tuple(i for i, b in zip(i00, bits) if b)
                if cand not in ((), i00):
                    partitions.append(cand)

    for beta1 in partitions:
        qt = _q_test(pt, idx, beta1, atol)
        if not qt.ok:
            if cert.q_margin is None or min(qt.optima) > cert.q_margin:
                cert.q_margin = min(qt.optima)
            continue
        cert.level = LEVEL_Q
        cert.beta1, cert.beta2 = qt.beta1, qt.beta2
        cert.over, cert.under = qt.over, qt.under
        cert.q_margin = min(qt.optima)
        m_wit = None
        for mult in (qt.under, qt.over):
            if _witness_level(pt, idx, mult, atol) == LEVEL_M:
                m_wit = mult
                break
        if m_wit is not None:
            cert.level = LEVEL_QM
            _fill_residuals(cert, pt, idx, m_wit)
            if i00:
                s_wit = find_multiplier(pt, idx, zero_G=i00, nonneg_H=i00)
                if s_wit is not None and _witness_level(pt, idx, s_wit, atol) == LEVEL_M:
                    cert.level = LEVEL_S
                    cert.under = s_wit
                    _fill_residuals(cert, pt, idx, s_wit)
        elif qt.over is not None or qt.under is not None:
            _fill_residuals(cert, pt, idx, qt.under or qt.over)
        return cert

    # No Q certificate: grade candidate multipliers by their residuals.
    best: Optional[Multiplier] = None
    best_level = LEVEL_NONE
    candidates = [hints] if hints is not None else []
    candidates.append(find_multiplier(pt, idx))
    for cand in candidates:
        lvl = _witness_level(pt, idx, cand, atol)
        if level_rank(lvl) > level_rank(best_level):
            best, best_level = cand, lvl
    if level_rank(best_level) < level_rank(LEVEL_M) and 0 < len(i00) <= 10:
        for bits in product((0, 1), repeat=len(i00)):
            zero_H = tuple(i for i, b in zip(i00, bits) if b)
            zero_G = tuple(i for i, b in zip(i00, bits) if not b)
            cand = find_multiplier(pt, idx, zero_H=zero_H, zero_G=zero_G)
            lvl = _witness_level(pt, idx, cand, atol)
            if level_rank(lvl) > level_rank(best_level):
                best, best_level = cand, lvl
            if level_rank(best_level) >= level_rank(LEVEL_M):
                break
    cert.level = best_level
    cert.under = best
    _fill_residuals(cert, pt, idx, best)
    return cert
