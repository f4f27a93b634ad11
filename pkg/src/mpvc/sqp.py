"""Outer solver loop: penalties, polygonal line search, curvature model.

Each iteration linearizes the problem at x_k, solves the piecewise
relaxation (producing a polygonal path s^0, ..., s^N of piece solutions),
and walks back along that path: the candidate step for a fraction gamma
of the total path length is compared through an l1 exact-penalty merit
against its piecewise linear-quadratic model, halving gamma until the
actual decrease is at least xi times the model decrease.  Penalty
weights are pulled above the multiplier magnitudes seen on the path, the
curvature matrix B follows a damped BFGS update on the Lagrangian
gradient, and the relaxation weight rho is carried over between
iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import cones
from .problem import EvalPoint, ProblemInstance, Values
from .qpvc import (DEGENERATE, AuxiliaryProblem, Partition, PieceMultiplier,
                   PiecePath, RestartLimitError, build_aux, solve_qpvc)
from .stationarity import Multiplier, StationarityCertificate, certify

STEP_ZERO_TOL = 1e-12
BACKTRACK_LIMIT = 60

STATUS_SOLVED = "Solved"
STATUS_DEGENERATE = "Degenerate"
STATUS_RESTART_LIMIT = "RestartLimit"
STATUS_MAX_ITER = "MaxIter"


class BacktrackLimitError(RuntimeError):
    """The merit line search ran out of halvings without acceptance."""


@dataclass
class PenaltyParams:
    """Per-row l1 penalty weights with their growth thresholds."""

    sigma_h: np.ndarray
    sigma_g: np.ndarray
    sigma_F: np.ndarray
    xi1: float = 2.0
    xi2: float = 3.0

    def __post_init__(self):
        self.sigma_h = np.atleast_1d(np.asarray(self.sigma_h, dtype=float))
        self.sigma_g = np.atleast_1d(np.asarray(self.sigma_g, dtype=float))
        self.sigma_F = np.atleast_1d(np.asarray(self.sigma_F, dtype=float))

    @classmethod
    def fresh(cls, problem: ProblemInstance, value: float = 1.0,
              xi1: float = 2.0, xi2: float = 3.0) -> "PenaltyParams":
        return cls(np.full(problem.n_eq, value), np.full(problem.n_ineq, value),
                   np.full(problem.n_vanish, value), xi1, xi2)

    def max(self) -> float:
        parts = [self.sigma_h, self.sigma_g, self.sigma_F]
        return float(max((p.max() for p in parts if p.size), default=0.0))


def multiplier_bound(path: PiecePath) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Componentwise bound over the path: max_t |lam^t| per row (the
    vanishing rows take the sup norm of their multiplier pair)."""
    mults = [st.mult for st in path.steps[1:] if st.mult is not None]
    if not mults:
        raise ValueError("path carries no multipliers")
    total = np.maximum.reduce([m.sup_norm() for m in mults])
    nh, ng = mults[0].lam_h.size, mults[0].lam_g.size
    return total[:nh], total[nh:nh + ng], total[nh + ng:]


def update_penalties(prev: PenaltyParams, path: PiecePath) -> PenaltyParams:
    """Raise each weight to xi2 * bound wherever it is below xi1 * bound.

    Afterwards every weight dominates the largest multiplier magnitude
    seen on the path, and no weight ever decreases.
    """
    lh, lg, lF = multiplier_bound(path)

    def bump(sigma, lam):
        return np.where(sigma < prev.xi1 * lam, prev.xi2 * lam, sigma)

    return PenaltyParams(bump(prev.sigma_h, lh), bump(prev.sigma_g, lg),
                         bump(prev.sigma_F, lF), prev.xi1, prev.xi2)


@dataclass
class SqpConfig:
    zeta: float = 0.9
    rho0: float = 1.0
    rho_bar: float = 10.0
    xi: float = 0.1
    xi1: float = 2.0
    xi2: float = 3.0
    gamma_ratio: float = 0.5
    sigma0: float = 1.0
    eps_C: float = 1e-8
    eps_1: float = 1e-10
    tau_act: float = 1e-7
    max_outer: int = 2000
    max_restarts: int = 30
    max_backtracks: int = BACKTRACK_LIMIT
    b_update: str = "DampedBFGS"

    def validate(self) -> None:
        for name in ("zeta", "xi", "gamma_ratio"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.rho_bar <= 1.0:
            raise ValueError(f"rho_bar must exceed 1, got {self.rho_bar}")
        if not 1.0 < self.xi1 < self.xi2:
            raise ValueError(f"need 1 < xi1 < xi2, got {self.xi1}, {self.xi2}")
        if self.rho0 <= 0.0:
            raise ValueError(f"rho0 must be positive, got {self.rho0}")
        if self.b_update not in ("DampedBFGS", "Identity"):
            raise ValueError(f"unknown B update policy {self.b_update!r}")


def _penalty_terms(sigma: PenaltyParams, h, g, F, v1_mask) -> float:
    total = 0.0
    if sigma.sigma_h.size:
        total += float(sigma.sigma_h @ np.abs(h))
    if sigma.sigma_g.size:
        total += float(sigma.sigma_g @ np.maximum(g, 0.0))
    if sigma.sigma_F.size:
        dist = np.where(v1_mask, cones.dist_p1(F), cones.dist_p2(F))
        total += float(sigma.sigma_F @ dist)
    return total


def merit_hat_phi(aux: AuxiliaryProblem, sigma: PenaltyParams,
                  part: Partition, s) -> float:
    """Model merit: quadratic objective plus penalties on the linearized
    rows, with the vanishing rows measured against the piece's branch."""
    pt = aux.pt
    s = np.asarray(s, dtype=float)
    base = pt.f + float(pt.grad_f @ s) + 0.5 * float(s @ aux.B @ s)
    h_lin = pt.h + pt.Jh @ s
    g_lin = pt.g + pt.Jg @ s
    F_lin = np.column_stack([-(pt.H + pt.JH @ s), pt.G + pt.JG @ s])
    return base + _penalty_terms(sigma, h_lin, g_lin, F_lin,
                                 part.mask(aux.n_vanish))


def merit_phi(problem: ProblemInstance, sigma: PenaltyParams, part: Partition,
              x_base, s, values: Optional[Values] = None) -> float:
    """True merit at x_base + s with the branch assignment of `part`."""
    if values is None:
        values = problem.eval_values(np.asarray(x_base, dtype=float) + s)
    F = np.column_stack([-np.atleast_1d(values.H), np.atleast_1d(values.G)])
    return values.f + _penalty_terms(sigma, values.h, values.g, F,
                                     part.mask(F.shape[0]))


def merit_Phi(problem: ProblemInstance, sigma: PenaltyParams, x,
              values: Optional[Values] = None) -> float:
    """True merit with every vanishing row measured to the nearer branch."""
    if values is None:
        values = problem.eval_values(np.asarray(x, dtype=float))
    F = np.column_stack([-np.atleast_1d(values.H), np.atleast_1d(values.G)])
    total = values.f
    if sigma.sigma_h.size:
        total += float(sigma.sigma_h @ np.abs(values.h))
    if sigma.sigma_g.size:
        total += float(sigma.sigma_g @ np.maximum(values.g, 0.0))
    if sigma.sigma_F.size:
        total += float(sigma.sigma_F @ cones.dist_p(F))
    return total


def path_lengths(path: PiecePath) -> np.ndarray:
    """Cumulative arc length S_t of the polygonal path, S_0 = 0."""
    S = np.zeros(path.N + 1)
    for t in range(1, path.N + 1):
        S[t] = S[t - 1] + float(np.linalg.norm(path.steps[t].s - path.steps[t - 1].s))
    return S


def parametrize_path(path: PiecePath, gamma: float) -> Tuple[int, float, np.ndarray]:
    """Point at fraction `gamma` of the path's arc length.

    Returns (t, alpha, s_hat) with s_hat on segment t, so that
    ||s_hat|| <= gamma * S_N.  A zero-length path has no parametrization
    (the iterate is already a piece solution) and raises ValueError.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    S = path_lengths(path)
    if S[-1] <= 0.0:
        raise ValueError("cannot parametrize a zero-length path")
    if gamma >= 1.0:
        t, alpha = path.N, 1.0
    else:
        target = gamma * S[-1]
        # smallest t with S_t > target; ties on plateaus skip forward
        t = int(np.searchsorted(S, target, side="right"))
        alpha = (target - S[t - 1]) / (S[t] - S[t - 1])
    s_hat = path.steps[t - 1].s + alpha * (path.steps[t].s - path.steps[t - 1].s)
    return t, alpha, s_hat


@dataclass
class LineSearchResult:
    x_next: np.ndarray
    j: int
    gamma: float
    t: int
    alpha: float
    s_step: np.ndarray
    Y0: float
    Y: float
    Z0: float
    Z: float
    n_values: int  # constraint/objective evaluations consumed


def accept_step(problem: ProblemInstance, aux: AuxiliaryProblem,
                sigma: PenaltyParams, path: PiecePath,
                config: SqpConfig) -> LineSearchResult:
    """Backtrack gamma = 1, ratio, ratio^2, ... along the path until the
    true merit decrease reaches xi times the model decrease.

    The model decrease at gamma interpolates the piece model between the
    segment's endpoints; at gamma = 0 both merits coincide with the
    current penalty value, so the comparison is anchored there.
    """
    x = aux.pt.x
    part1 = path.steps[1].part
    Y0 = merit_Phi(problem, sigma, x)
    Z0 = merit_hat_phi(aux, sigma, part1, np.zeros_like(x))
    n_values = 1
    gamma = 1.0
    for j in range(1, config.max_backtracks + 1):
        t, alpha, s_hat = parametrize_path(path, gamma)
        part_t = path.steps[t].part
        Y = merit_phi(problem, sigma, part_t, x, s_hat)
        n_values += 1
        Z = ((1.0 - alpha) * merit_hat_phi(aux, sigma, part_t, path.steps[t - 1].s)
             + alpha * merit_hat_phi(aux, sigma, part_t, path.steps[t].s))
        if Y - Y0 <= config.xi * (Z - Z0):
            return LineSearchResult(x_next=x + s_hat, j=j, gamma=gamma, t=t,
                                    alpha=alpha, s_step=s_hat, Y0=Y0, Y=Y,
                                    Z0=Z0, Z=Z, n_values=n_values)
        gamma *= config.gamma_ratio
    raise BacktrackLimitError(
        f"no acceptable step in {config.max_backtracks} halvings "
        f"(Y0={Y0:.6e}, last Y={Y:.6e}, last Z-Z0={Z - Z0:.6e})")


def descent_gaps(aux: AuxiliaryProblem, sigma: PenaltyParams,
                 path: PiecePath) -> Tuple[np.ndarray, np.ndarray]:
    """Model-decrease slack along the path (both arrays should be <= 0).

    Entry t-1 of the first array is  phi_hat^t(0) - phi_hat^1(0) plus the
    accumulated segment curvature up to t-1; the second uses the path up
    to t.  Nonpositivity is what makes the line search well posed, and
    it holds whenever the penalties dominate the path multipliers.
    """
    z1 = merit_hat_phi(aux, sigma, path.steps[1].part, path.steps[0].s)
    gaps0, gaps1 = [], []
    acc = 0.0  # sum of (1/2) ||s^tau - s^tau-1||_B^2
    for t in range(1, path.N + 1):
        part = path.steps[t].part
        at0 = merit_hat_phi(aux, sigma, part, path.steps[t - 1].s)
        gaps0.append(at0 - z1 + acc)
        d = path.steps[t].s - path.steps[t - 1].s
        acc += 0.5 * float(d @ aux.B @ d)
        at1 = merit_hat_phi(aux, sigma, part, path.steps[t].s)
        gaps1.append(at1 - z1 + acc)
    return np.asarray(gaps0), np.asarray(gaps1)


def grad_lagrangian(pt: EvalPoint, mult: PieceMultiplier) -> np.ndarray:
    lam_H, lam_G = mult.lam_F[:, 0], mult.lam_F[:, 1]
    return (pt.grad_f + pt.Jh.T @ mult.lam_h + pt.Jg.T @ mult.lam_g
            - pt.JH.T @ lam_H + pt.JG.T @ lam_G)


def update_B(B: np.ndarray, x_prev, x_next, grad_L_prev, grad_L_next,
             policy: str = "DampedBFGS") -> np.ndarray:
    """Damped BFGS update of the curvature model.

    The secant pair is damped toward Bs whenever s'y < 0.2 s'Bs, which
    keeps the update positive definite; a failed Cholesky check resets
    to the identity.  Steps shorter than the zero tolerance are skipped.
    """
    n = B.shape[0]
    if policy == "Identity":
        return np.eye(n)
    s = np.asarray(x_next, dtype=float) - np.asarray(x_prev, dtype=float)
    if float(np.linalg.norm(s)) <= STEP_ZERO_TOL:
        return np.array(B, dtype=float)
    y = np.asarray(grad_L_next, dtype=float) - np.asarray(grad_L_prev, dtype=float)
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 0.0:
        return np.eye(n)
    sy = float(s @ y)
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    B_new = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    B_new = 0.5 * (B_new + B_new.T)
    try:
        np.linalg.cholesky(B_new)
    except np.linalg.LinAlgError:
        return np.eye(n)
    return B_new


@dataclass
class IterationRecord:
    k: int
    x: np.ndarray
    f: float
    viol: float
    delta_N: float
    N_k: int
    step_norm: float
    rho: float
    sigma_max: float
    j_k: int = 0
    gamma: float = 0.0


@dataclass
class IterationDetail:
    """Everything one iteration produced, for invariant checking."""

    record: IterationRecord
    aux: Optional[AuxiliaryProblem]
    path: Optional[PiecePath]
    sigma: PenaltyParams
    line: Optional[LineSearchResult]
    x_next: Optional[np.ndarray]


@dataclass
class SqpResult:
    status: str
    x: np.ndarray
    f: float
    viol: float
    k_star: int
    nfev: int
    ngev: int
    rho_final: float
    sigma: PenaltyParams
    under: Optional[Multiplier] = None
    certificate: Optional[StationarityCertificate] = None
    n_list: List[int] = field(default_factory=list)
    j_list: List[int] = field(default_factory=list)
    message: str = ""

    @property
    def solved(self) -> bool:
        return self.status == STATUS_SOLVED


def run_basic_sqp(problem: ProblemInstance, x0, config: Optional[SqpConfig] = None,
                  record_sink: Optional[Callable[[IterationRecord], None]] = None,
                  detail_sink: Optional[Callable[[IterationDetail], None]] = None,
                  ) -> Tuple[SqpResult, List[IterationRecord]]:
    """Drive the solver from x0 until a piece solution with zero step (or
    the feasibility/step-size stop), degeneracy, or an iteration limit.

    Gradient evaluations: one per visited iterate (the final linearization
    of an accepted step is reused for the BFGS pair), so ngev = k* + 1.
    Value evaluations: the line search of iteration k costs 1 + j(k), so
    nfev = k* + sum j(k) with k* completed iterations.
    """
    cfg = config if config is not None else SqpConfig()
    cfg.validate()
    x = np.asarray(x0, dtype=float).reshape(problem.n).copy()
    B = np.eye(problem.n)
    rho = cfg.rho0
    sigma = PenaltyParams.fresh(problem, cfg.sigma0, cfg.xi1, cfg.xi2)
    trace: List[IterationRecord] = []
    n_list: List[int] = []
    j_list: List[int] = []
    nfev = 0
    pt = problem.eval_point(x)
    ngev = 1
    status = STATUS_MAX_ITER
    message = ""
    under_piece: Optional[PieceMultiplier] = None

    def emit(rec: IterationRecord, detail: IterationDetail) -> None:
        trace.append(rec)
        if record_sink is not None:
            record_sink(rec)
        if detail_sink is not None:
            detail_sink(detail)

    k = 0
    while True:
        viol = pt.violation()
        aux = build_aux(pt, B, rho=rho, zeta=cfg.zeta, rho_bar=cfg.rho_bar)
        try:
            path = solve_qpvc(aux, max_restarts=cfg.max_restarts)
        except RestartLimitError as err:
            status = STATUS_RESTART_LIMIT
            message = str(err)
            rec = IterationRecord(k, x.copy(), pt.f, viol, float("nan"), 0,
                                  float("nan"), rho, sigma.max())
            emit(rec, IterationDetail(rec, aux, None, sigma, None, None))
            break
        rho = path.final_rho
        step_norm = float(np.linalg.norm(path.s_final))
        rec = IterationRecord(k=k, x=x.copy(), f=pt.f, viol=viol,
                              delta_N=path.delta_final, N_k=path.N,
                              step_norm=step_norm, rho=rho, sigma_max=sigma.max())
        if path.status == DEGENERATE:
            status = STATUS_DEGENERATE
            message = ("the relaxation keeps its slack at 1: the linearized "
                       "constraints admit no violation decrease from here")
            emit(rec, IterationDetail(rec, aux, path, sigma, None, None))
            break
        small_step = step_norm <= STEP_ZERO_TOL
        converged = (viol <= cfg.eps_C
                     and float(path.s_final @ B @ path.s_final) <= cfg.eps_1)
        if small_step or converged:
            status = STATUS_SOLVED
            under_piece = path.under_multiplier
            emit(rec, IterationDetail(rec, aux, path, sigma, None, None))
            break
        if k >= cfg.max_outer:
            status = STATUS_MAX_ITER
            message = f"no piece solution accepted within {cfg.max_outer} iterations"
            emit(rec, IterationDetail(rec, aux, path, sigma, None, None))
            break
        sigma = update_penalties(sigma, path)
        rec.sigma_max = sigma.max()
        line = accept_step(problem, aux, sigma, path, cfg)
        nfev += line.n_values
        rec.j_k = line.j
        rec.gamma = line.gamma
        n_list.append(path.N)
        j_list.append(line.j)
        emit(rec, IterationDetail(rec, aux, path, sigma, line, line.x_next))
        pt_next = problem.eval_point(line.x_next)
        ngev += 1
        if cfg.b_update == "DampedBFGS":
            gL = grad_lagrangian(pt, path.under_multiplier)
            gL_next = grad_lagrangian(pt_next, path.under_multiplier)
            B = update_B(B, x, line.x_next, gL, gL_next, cfg.b_update)
        x = line.x_next
        pt = pt_next
        k += 1

    under = None
    certificate = None
    if status == STATUS_SOLVED and under_piece is not None:
        under = Multiplier.from_piece(under_piece)
        certificate = certify(problem, x, hints=under, tau_scale=cfg.tau_act)
    result = SqpResult(status=status, x=x.copy(), f=pt.f, viol=pt.violation(),
                       k_star=len(j_list), nfev=nfev, ngev=ngev,
                       rho_final=rho, sigma=sigma, under=under,
                       certificate=certificate, n_list=n_list, j_list=j_list,
                       message=message)
    return result, trace
