"""Piecewise-convex auxiliary problem and the piece-walking solver.

At an iterate x with model Hessian B and penalty rho >= rho0, the
linearized constraints are relaxed by one scalar delta:

    min  0.5 s'Bs + grad_f.s + rho (0.5 delta^2 + delta)
    s.t. (1 - delta) h_i + grad_h_i.s  = 0                    i in E
         (1 - th_g_i delta) g_i + grad_g_i.s <= 0             i in I
         delta (th_H_i H_i, -th_G_i G_i) + F_i + DF_i s in P  i in V
         delta >= 0

where F_i = (-H_i, G_i) and P is the vanishing set of `cones`.  The
point (s, delta) = (0, 1) is always feasible.  Fixing a branch of P per
vanishing row (V1 -> P1, V2 -> P2) turns the relaxation into a strictly
convex QP; `solve_qpvc` walks those pieces, escalating rho and
restarting whenever delta increases, until the incumbent point solves
all four candidate pieces at once.  The winning point carries two
multiplier sets ("under" from the piece keeping every ambiguous row on
the P1 branch, "over" from the piece keeping none), which downstream
certification consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import cones
from .lp import INFEASIBLE, OPTIMAL, LinProgram, solve_lp
from .problem import EvalPoint
from .qp import QpResult, QuadProgram, solve_qp

CLASSIFY_TOL = 1e-9      # abs tolerance on transformed rows for I1 / I00
GAP_TOL = 1e-9           # relative objective gap in the solution test
MONOTONE_SLACK = 1e-12   # slack before a delta increase triggers a restart
MAX_RESTARTS = 30

QM_STATIONARY = "QMStationary"
DEGENERATE = "Degenerate"


class QpvcError(RuntimeError):
    """A piece subproblem failed in a way the algorithm cannot absorb."""


class RestartLimitError(QpvcError):
    """rho was escalated max_restarts times without a usable epoch."""


@dataclass
class Theta:
    """Per-row relaxation switches, all entries in {0, 1}."""

    g: np.ndarray
    H: np.ndarray
    G: np.ndarray


def choose_theta(pt: EvalPoint) -> Theta:
    """Switch selection: relax exactly the rows the point violates.

    g rows get th_g = 1 iff g_i > 0.  A vanishing row keeps (0, 0) when
    F_i is already in P; otherwise the branch with the smaller distance
    is relaxed, P1 winning ties.  Either way the relaxed coordinates
    satisfy |th_H H_i| + |th_G G_i| = d(F_i, P).
    """
    F = pt.F
    d1 = cones.dist_p1(F)
    d2 = cones.dist_p2(F)
    dp = np.minimum(d1, d2)
    infeas = dp > 0.0
    th_H = (infeas & (d1 <= d2)).astype(float)
    th_G = (infeas & (d2 < d1)).astype(float)
    return Theta(g=(pt.g > 0.0).astype(float), H=th_H, G=th_G)


@dataclass(frozen=True)
class Partition:
    """Branch assignment: rows in `v1` use P1, the rest use P2."""

    v1: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "v1", tuple(sorted(set(int(i) for i in self.v1))))

    def v2(self, n_vanish: int) -> Tuple[int, ...]:
        inside = set(self.v1)
        return tuple(i for i in range(n_vanish) if i not in inside)

    def mask(self, n_vanish: int) -> np.ndarray:
        m = np.zeros(n_vanish, dtype=bool)
        m[list(self.v1)] = True
        return m


@dataclass
class AuxiliaryProblem:
    """One iterate's relaxation data with precomputed constraint rows.

    The rows live over z = (s, delta) and do not depend on rho or the
    branch assignment; `row_H`/`rhs_H` serve both as V1 equalities and
    V2 inequalities (the stored orientation is -H_i - grad_H_i.s
    + delta th_H_i H_i <= / = H_i... stored as a.z <= b with b = H_i).
    """

    pt: EvalPoint
    B: np.ndarray
    theta: Theta
    rho: float
    zeta: float
    rho_bar: float
    row_h: np.ndarray = field(repr=False, default=None)
    rhs_h: np.ndarray = field(repr=False, default=None)
    row_g: np.ndarray = field(repr=False, default=None)
    rhs_g: np.ndarray = field(repr=False, default=None)
    row_H: np.ndarray = field(repr=False, default=None)
    rhs_H: np.ndarray = field(repr=False, default=None)
    row_G: np.ndarray = field(repr=False, default=None)
    rhs_G: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.pt.x.size

    @property
    def n_vanish(self) -> int:
        return self.pt.H.size

    def start_point(self) -> np.ndarray:
        z = np.zeros(self.n + 1)
        z[-1] = 1.0
        return z


def build_aux(pt: EvalPoint, B, rho: float = 1.0, zeta: float = 0.9,
              rho_bar: float = 10.0, theta: Optional[Theta] = None) -> AuxiliaryProblem:
    B = np.asarray(B, dtype=float)
    n = pt.x.size
    if B.shape != (n, n):
        raise ValueError("B shape mismatch")
    th = theta if theta is not None else choose_theta(pt)
    aux = AuxiliaryProblem(pt=pt, B=B, theta=th, rho=float(rho),
                           zeta=float(zeta), rho_bar=float(rho_bar))

    # Multiplier-friendly orientation: each row is written so that the
    # raw QP multiplier is the lambda of the stationarity system
    #   Bs + grad_f + Jh'lh + Jg'lg - JH'lH + JG'lG = 0.
    aux.row_h = np.column_stack([pt.Jh, -pt.h])
    aux.rhs_h = -pt.h
    aux.row_g = np.column_stack([pt.Jg, -th.g * pt.g])
    aux.rhs_g = -pt.g
    aux.row_H = np.column_stack([-pt.JH, th.H * pt.H])
    aux.rhs_H = pt.H.copy()
    aux.row_G = np.column_stack([pt.JG, -th.G * pt.G])
    aux.rhs_G = -pt.G
    return aux


def delta_row(n: int) -> np.ndarray:
    row = np.zeros(n + 1)
    row[-1] = -1.0
    return row


def piece_objective(aux: AuxiliaryProblem, z, rho: Optional[float] = None) -> float:
    rho = aux.rho if rho is None else rho
    s, d = z[:-1], z[-1]
    return float(0.5 * s @ aux.B @ s + aux.pt.grad_f @ s + rho * (0.5 * d * d + d))


def transformed_rows(aux: AuxiliaryProblem, z) -> np.ndarray:
    """Branch-space images delta (th_H H, -th_G G) + F + DF s, shape (|V|, 2)."""
    s, d = np.asarray(z[:-1], dtype=float), float(z[-1])
    pt, th = aux.pt, aux.theta
    v1 = d * th.H * pt.H - pt.H - aux.pt.JH @ s
    v2 = -d * th.G * pt.G + pt.G + aux.pt.JG @ s
    return np.column_stack([v1, v2])


def classify(aux: AuxiliaryProblem, z, tol: float = CLASSIFY_TOL):
    """Index sets I1 (strictly on the P1-only part) and I00 (at the corner)."""
    v = transformed_rows(aux, z)
    first_zero = np.abs(v[:, 0]) <= tol
    i1 = np.flatnonzero(first_zero & (v[:, 1] > tol))
    i00 = np.flatnonzero(first_zero & (np.abs(v[:, 1]) <= tol))
    return tuple(int(i) for i in i1), tuple(int(i) for i in i00)


def _piece_rows(aux: AuxiliaryProblem, part: Partition):
    """Equality/inequality stacks for one piece, plus stable row tags."""
    nv = aux.n_vanish
    v1 = list(part.v1)
    v2 = [i for i in range(nv) if i not in set(v1)]

    eq_rows = [aux.row_h]
    eq_rhs = [aux.rhs_h]
    eq_tags: List[tuple] = [("h", i) for i in range(aux.rhs_h.size)]
    if v1:
        eq_rows.append(aux.row_H[v1])
        eq_rhs.append(aux.rhs_H[v1])
        eq_tags += [("H", i) for i in v1]

    in_rows = [aux.row_g]
    in_rhs = [aux.rhs_g]
    in_tags: List[tuple] = [("g", i) for i in range(aux.rhs_g.size)]
    for i in v2:
        in_rows.append(aux.row_H[i:i + 1])
        in_rhs.append(aux.rhs_H[i:i + 1])
        in_tags.append(("Hv2", i))
        in_rows.append(aux.row_G[i:i + 1])
        in_rhs.append(aux.rhs_G[i:i + 1])
        in_tags.append(("Gv2", i))
    in_rows.append(delta_row(aux.n)[None, :])
    in_rhs.append(np.zeros(1))
    in_tags.append(("delta",))

    A_eq = np.vstack(eq_rows)
    b_eq = np.concatenate(eq_rhs)
    A_in = np.vstack(in_rows)
    b_in = np.concatenate(in_rhs)
    return A_eq, b_eq, A_in, b_in, eq_tags, in_tags


def build_piece_qp(aux: AuxiliaryProblem, part: Partition,
                   rho: Optional[float] = None) -> QuadProgram:
    rho = aux.rho if rho is None else rho
    n = aux.n
    A_eq, b_eq, A_in, b_in, _, _ = _piece_rows(aux, part)
    Hqp = np.zeros((n + 1, n + 1))
    Hqp[:n, :n] = aux.B
    Hqp[n, n] = rho
    c = np.append(aux.pt.grad_f, rho)
    return QuadProgram(H=Hqp, c=c, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)


def piece_feasibility(aux: AuxiliaryProblem, part: Partition, z) -> float:
    """Max constraint violation of z for the piece (0 means feasible)."""
    A_eq, b_eq, A_in, b_in, _, _ = _piece_rows(aux, part)
    r = float(np.max(np.abs(A_eq @ z - b_eq), initial=0.0))
    r = max(r, float(np.max(A_in @ z - b_in, initial=0.0)))
    return r


@dataclass
class PieceMultiplier:
    """KKT multipliers of one piece in original-constraint coordinates.

    `lam_F` holds rows (lam_H_i, lam_G_i); for i in V1 the second entry
    is zero by construction.
    """

    lam_h: np.ndarray
    lam_g: np.ndarray
    lam_F: np.ndarray
    lam_delta: float

    def sup_norm(self) -> np.ndarray:
        """Per-constraint magnitudes stacked as (|h|, |g|, max|lam_F row|)."""
        fmax = np.max(np.abs(self.lam_F), axis=1) if self.lam_F.size else np.zeros(0)
        return np.concatenate([np.abs(self.lam_h), np.abs(self.lam_g), fmax])


def _extract_multiplier(aux, part, res: QpResult, eq_tags, in_tags) -> PieceMultiplier:
    nh = aux.rhs_h.size
    ng = aux.rhs_g.size
    lam_h = np.array(res.mu_eq[:nh], dtype=float)
    lam_F = np.zeros((aux.n_vanish, 2))
    for tag, mu in zip(eq_tags[nh:], res.mu_eq[nh:]):
        lam_F[tag[1], 0] = mu
    lam_g = np.array(res.mu_in[:ng], dtype=float)
    lam_delta = 0.0
    for tag, mu in zip(in_tags[ng:], res.mu_in[ng:]):
        if tag[0] == "Hv2":
            lam_F[tag[1], 0] = mu
        elif tag[0] == "Gv2":
            lam_F[tag[1], 1] = mu
        else:
            lam_delta = float(mu)
    return PieceMultiplier(lam_h=lam_h, lam_g=lam_g, lam_F=lam_F,
                           lam_delta=lam_delta)


def piece_kkt_residual(aux: AuxiliaryProblem, part: Partition, z,
                       mult: PieceMultiplier, rho: Optional[float] = None) -> float:
    """Stationarity + feasibility + complementarity residual at (z, mult)."""
    rho = aux.rho if rho is None else rho
    pt, th = aux.pt, aux.theta
    s, d = z[:-1], float(z[-1])
    lam_H = mult.lam_F[:, 0]
    lam_G = mult.lam_F[:, 1]
    stat_s = (aux.B @ s + pt.grad_f + pt.Jh.T @ mult.lam_h
              + pt.Jg.T @ mult.lam_g - pt.JH.T @ lam_H + pt.JG.T @ lam_G)
    stat_d = (rho * (d + 1.0) - mult.lam_delta - mult.lam_h @ pt.h
              - mult.lam_g @ (th.g * pt.g) + lam_H @ (th.H * pt.H)
              - lam_G @ (th.G * pt.G))
    r = max(float(np.max(np.abs(stat_s), initial=0.0)), abs(float(stat_d)))
    r = max(r, piece_feasibility(aux, part, z))
    # sign and complementarity conditions
    r = max(r, float(np.max(-mult.lam_g, initial=0.0)))
    r = max(r, max(0.0, -mult.lam_delta))
    v2 = part.v2(aux.n_vanish)
    if v2:
        idx = list(v2)
        r = max(r, float(np.max(-mult.lam_F[idx], initial=0.0)))
        resH = aux.row_H[idx] @ z - aux.rhs_H[idx]
        resG = aux.row_G[idx] @ z - aux.rhs_G[idx]
        r = max(r, float(np.max(np.abs(lam_H[idx] * resH), initial=0.0)))
        r = max(r, float(np.max(np.abs(lam_G[idx] * resG), initial=0.0)))
    resg = aux.row_g @ z - aux.rhs_g
    if resg.size:
        r = max(r, float(np.max(np.abs(mult.lam_g * resg), initial=0.0)))
    r = max(r, abs(mult.lam_delta * d))
    return r


def min_delta(aux: AuxiliaryProblem, part: Partition) -> float:
    """Smallest delta reachable inside the piece; +inf if the piece is empty."""
    A_eq, b_eq, A_in, b_in, _, _ = _piece_rows(aux, part)
    c = np.zeros(aux.n + 1)
    c[-1] = 1.0
    res = solve_lp(LinProgram(c=c, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in))
    if res.status == INFEASIBLE:
        return float("inf")
    if res.status != OPTIMAL:
        raise QpvcError(f"min-delta LP ended with status {res.status}")
    return float(res.obj)


def is_solution_of_piece(point, aux: AuxiliaryProblem, part: Partition,
                         tol: float = GAP_TOL, rho: Optional[float] = None) -> bool:
    """True iff the piece optimum cannot beat `point` by more than tol."""
    z = np.asarray(point, dtype=float)
    res = solve_qp(build_piece_qp(aux, part, rho), start=z)
    if res.status != OPTIMAL:
        raise QpvcError(f"piece solve failed: {res.status}")
    ref = piece_objective(aux, z, rho)
    return res.obj >= ref - tol * (1.0 + abs(ref))


@dataclass
class PathStep:
    """One accepted piece solution; step 0 is the start (0, 1), no multiplier."""

    z: np.ndarray
    part: Partition
    mult: Optional[PieceMultiplier]

    @property
    def s(self) -> np.ndarray:
        return self.z[:-1]

    @property
    def delta(self) -> float:
        return float(self.z[-1])


@dataclass
class PiecePath:
    """Accepted steps of the final restart epoch plus exit certificates."""

    steps: List[PathStep]
    status: str
    final_rho: float
    restarts: int
    under_multiplier: Optional[PieceMultiplier]
    over_multiplier: Optional[PieceMultiplier]
    i1_final: Tuple[int, ...] = ()
    i00_final: Tuple[int, ...] = ()

    @property
    def N(self) -> int:
        return len(self.steps) - 1

    @property
    def z_final(self) -> np.ndarray:
        return self.steps[-1].z

    @property
    def s_final(self) -> np.ndarray:
        return self.steps[-1].z[:-1]

    @property
    def delta_final(self) -> float:
        return float(self.steps[-1].z[-1])


class _Piece:
    """Solved piece: point, objective, multiplier, and warm-start tags."""

    __slots__ = ("part", "z", "obj", "mult", "active_tags")

    def __init__(self, part, z, obj, mult, active_tags):
        self.part = part
        self.z = z
        self.obj = obj
        self.mult = mult
        self.active_tags = active_tags


def _solve_piece(aux, rho, part: Partition, warm_z=None,
                 warm_tags=None) -> _Piece:
    A_eq, b_eq, A_in, b_in, eq_tags, in_tags = _piece_rows(aux, part)
    n = aux.n
    Hqp = np.zeros((n + 1, n + 1))
    Hqp[:n, :n] = aux.B
    Hqp[n, n] = rho
    c = np.append(aux.pt.grad_f, rho)
    qp = QuadProgram(H=Hqp, c=c, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)

    ws = None
    if warm_tags is not None:
        pos = {tag: j for j, tag in enumerate(in_tags)}
        ws = [pos[t] for t in warm_tags if t in pos]
    res = solve_qp(qp, start=warm_z, working_set=ws)
    if res.status != OPTIMAL:
        raise QpvcError(f"piece solve failed: {res.status}")
    mult = _extract_multiplier(aux, part, res, eq_tags, in_tags)
    active_tags = [in_tags[j] for j in res.active_set]
    return _Piece(part, res.z, res.obj, mult, active_tags)


_RESTART = object()


def _solve_epoch(aux: AuxiliaryProblem, rho: float):
    """One rho epoch; returns a PiecePath or the restart sentinel."""
    z0 = aux.start_point()
    i1_0, _ = classify(aux, z0)
    part = Partition(i1_0)
    cur = _solve_piece(aux, rho, part, warm_z=z0)
    if cur.z[-1] > z0[-1] + MONOTONE_SLACK:
        return _RESTART

    steps = [PathStep(z=z0, part=part, mult=None),
             PathStep(z=cur.z, part=part, mult=cur.mult)]

    # Improvement loop: stay until the incumbent solves all four
    # candidate pieces, moving to the first one it does not solve.
    max_moves = max(64, 4 * (2 ** min(aux.n_vanish, 20)))
    for _ in range(max_moves):
        i1, i00 = classify(aux, cur.z)
        in_v1 = set(cur.part.v1)
        candidates = [
            Partition(i1 + tuple(i for i in i00 if i in in_v1)),
            Partition(i1 + tuple(i for i in i00 if i not in in_v1)),
            Partition(i1),
            Partition(i1 + i00),
        ]
        solved: Dict[Tuple[int, ...], _Piece] = {}
        moved = None
        for cand in candidates:
            if cand.v1 == cur.part.v1:
                solved[cand.v1] = cur
                continue
            if cand.v1 not in solved:
                solved[cand.v1] = _solve_piece(aux, rho, cand, warm_z=cur.z,
                                               warm_tags=cur.active_tags)
            trial = solved[cand.v1]
            if trial.obj < cur.obj - GAP_TOL * (1.0 + abs(cur.obj)):
                moved = trial
                break
        if moved is not None:
            prev_delta = cur.z[-1]
            cur = moved
            steps.append(PathStep(z=cur.z, part=cur.part, mult=cur.mult))
            if cur.z[-1] > prev_delta + MONOTONE_SLACK:
                return _RESTART
            continue

        # Incumbent solves all four candidates; capture the bracketing
        # multipliers before deciding between success and degeneracy.
        over = solved[Partition(i1).v1]
        under = solved[Partition(i1 + i00).v1]
        delta = float(cur.z[-1])
        if delta < aux.zeta:
            status = QM_STATIONARY
        else:
            if min(min_delta(aux, Partition(i1)),
                   min_delta(aux, Partition(i1 + i00))) < aux.zeta:
                return _RESTART
            status = DEGENERATE
        return PiecePath(steps=steps, status=status, final_rho=rho,
                         restarts=0, under_multiplier=under.mult,
                         over_multiplier=over.mult, i1_final=i1,
                         i00_final=i00)

    raise QpvcError("piece walk failed to settle (move cap reached)")


def solve_qpvc(aux: AuxiliaryProblem,
               max_restarts: int = MAX_RESTARTS) -> PiecePath:
    """Walk the pieces of the relaxation, escalating rho on restarts.

    Returns the path of the final epoch; raises RestartLimitError when
    rho has been escalated `max_restarts` times without finishing.
    """
    rho = float(aux.rho)
    restarts = 0
    while True:
        out = _solve_epoch(aux, rho)
        if out is _RESTART:
            restarts += 1
            if restarts > max_restarts:
                raise RestartLimitError(
                    f"no usable epoch after {max_restarts} rho escalations")
            rho *= aux.rho_bar
            continue
        out.restarts = restarts
        return out
