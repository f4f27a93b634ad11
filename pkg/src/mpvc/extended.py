"""Extended driver: a first-order correction step before each iteration.

Near a weakly-but-not-strongly stationary point the plain driver can
stall, because the piece relaxation only sees one branch assignment.
The extended loop therefore estimates the index sets with a threshold
eps_k, solves two boxed direction LPs (branch-equality sets I~0+ and
I~0+ u I~00), and if the better direction descends it walks the iterate
along it under an Armijo test on the exact penalty Phi_k before handing
the corrected point to the usual relaxation/line-search machinery.  An
escape rule stops the backtracking early when the branch-fixed penalty
varphi_k sits strictly above Phi_k, which bounds the useful step sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .lp import OPTIMAL, solve_lp
from .problem import EvalPoint, ProblemInstance, Values
from .qpvc import DEGENERATE, Partition, build_aux, solve_qpvc
from .qpvc import PieceMultiplier, RestartLimitError
from .sqp import (BacktrackLimitError, IterationDetail, IterationRecord,
                  PenaltyParams, SqpConfig, SqpResult, STATUS_DEGENERATE,
                  STATUS_MAX_ITER, STATUS_RESTART_LIMIT, STATUS_SOLVED,
                  STEP_ZERO_TOL, accept_step, grad_lagrangian, merit_Phi,
                  merit_phi, update_B, update_penalties)
from .stationarity import Multiplier, certify, direction_lp


@dataclass
class ExtendedConfig(SqpConfig):
    """Basic driver settings plus the correction-step parameters."""

    mu: float = 0.1
    alpha_ratio: float = 0.5
    eps_init: float = 0.1
    descent_tol: float = 1e-10

    def validate(self) -> None:
        super().validate()
        for name in ("mu", "alpha_ratio"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.eps_init < 0.0:
            raise ValueError(f"eps_init must be nonnegative, got {self.eps_init}")


@dataclass
class EstimatedIndexSets:
    """Vanishing-row classification with slack eps around zero.

    Rows with H < -eps fall into no set; they are infeasible beyond the
    threshold and neither branch estimate applies.
    """

    i0p: np.ndarray
    i00: np.ndarray
    i0m: np.ndarray
    ip0: np.ndarray
    ipm: np.ndarray


def estimate_index_sets(pt: EvalPoint, eps: float) -> EstimatedIndexSets:
    if eps < 0.0:
        raise ValueError(f"threshold must be nonnegative, got {eps}")
    H, G = pt.H, pt.G
    h_zero = np.abs(H) <= eps
    h_pos = H > eps
    g_pos = G > eps
    g_zero = np.abs(G) <= eps
    g_neg = -G > eps
    return EstimatedIndexSets(
        i0p=np.flatnonzero(h_zero & g_pos),
        i00=np.flatnonzero(h_zero & g_zero),
        i0m=np.flatnonzero(h_zero & g_neg),
        ip0=np.flatnonzero(h_pos & g_zero),
        ipm=np.flatnonzero(h_pos & g_neg),
    )


def epsilon_schedule(x_k, x_prev=None, eps_init: float = 0.1) -> float:
    """sqrt of the sup-norm step between consecutive iterates.

    The square root makes the threshold shrink slower than the iterates
    approach their limit, so the estimated sets stabilize at the exact
    ones.  With no previous iterate the configured start value is used.
    """
    if x_prev is None:
        return eps_init
    diff = np.asarray(x_k, dtype=float) - np.asarray(x_prev, dtype=float)
    return float(np.sqrt(np.max(np.abs(diff), initial=0.0)))


def build_lp_correction(pt: EvalPoint, w1):
    """Boxed direction LP with branch equalities on w1 (see direction_lp)."""
    return direction_lp(pt, w1)


def merit_varphi(problem: ProblemInstance, sigma: PenaltyParams, w1, x,
                 values: Optional[Values] = None) -> float:
    """Exact penalty with the branch of every vanishing row fixed by w1."""
    part = Partition(tuple(sorted(int(i) for i in w1)))
    x = np.asarray(x, dtype=float)
    return merit_phi(problem, sigma, part, x, np.zeros_like(x), values=values)


@dataclass
class CorrectionReport:
    """What the correction step saw and did at one iterate."""

    eps: float
    w1_a: Tuple[int, ...]
    w1_b: Tuple[int, ...]
    slope_a: float
    slope_b: float
    w1: Tuple[int, ...]
    d: np.ndarray
    slope: float
    Phi0: float = float("nan")
    varphi0: float = float("nan")
    Phi_new: float = float("nan")
    alpha: float = 0.0
    j: int = 0
    moved: bool = False
    escaped: bool = False
    n_values: int = 0


def _solve_direction(pt: EvalPoint, w1):
    res = solve_lp(direction_lp(pt, w1))
    if res.status != OPTIMAL:
        raise RuntimeError(f"correction subproblem ended with {res.status}")
    return res


def correct_iterate(problem: ProblemInstance, sigma: PenaltyParams, x_k,
                    eps_k: float, config: ExtendedConfig,
                    pt: Optional[EvalPoint] = None,
                    ) -> Tuple[np.ndarray, CorrectionReport]:
    """Move the iterate along the better of two first-order directions.

    Backtracks alpha = 1, ratio, ratio^2, ... under the Armijo test on
    Phi; stops without moving when alpha falls below the escape bound
    (Phi - varphi) / (mu * slope), which certifies that the branch
    mismatch, not the direction, blocks further progress.
    """
    x_k = np.asarray(x_k, dtype=float)
    if pt is None:
        pt = problem.eval_point(x_k)
    est = estimate_index_sets(pt, eps_k)
    w1_a = tuple(int(i) for i in est.i0p)
    w1_b = tuple(sorted(set(w1_a) | set(int(i) for i in est.i00)))
    res_a = _solve_direction(pt, w1_a)
    res_b = _solve_direction(pt, w1_b)
    if res_a.obj <= res_b.obj:
        w1, d, slope = w1_a, res_a.x, float(res_a.obj)
    else:
        w1, d, slope = w1_b, res_b.x, float(res_b.obj)
    report = CorrectionReport(eps=eps_k, w1_a=w1_a, w1_b=w1_b,
                              slope_a=float(res_a.obj), slope_b=float(res_b.obj),
                              w1=w1, d=d, slope=slope)
    if slope >= -config.descent_tol:
        return x_k, report

    at_x = Values(f=pt.f, h=pt.h, g=pt.g, H=pt.H, G=pt.G)
    Phi0 = merit_Phi(problem, sigma, x_k, values=at_x)
    varphi0 = merit_varphi(problem, sigma, w1, x_k, values=at_x)
    report.Phi0, report.varphi0 = Phi0, varphi0
    escape_bound = (Phi0 - varphi0) / (config.mu * slope)
    alpha = 1.0
    for j in range(1, config.max_backtracks + 1):
        trial = x_k + alpha * d
        Phi_trial = merit_Phi(problem, sigma, trial)
        report.n_values = j
        if Phi_trial - Phi0 <= config.mu * alpha * slope:
            report.alpha, report.j, report.moved = alpha, j, True
            report.Phi_new = Phi_trial
            return trial, report
        if alpha <= escape_bound:
            report.j, report.escaped = j, True
            return x_k, report
        alpha *= config.alpha_ratio
    raise BacktrackLimitError(
        f"correction found no acceptable step in {config.max_backtracks} "
        f"trials (slope {slope:.3e}, escape bound {escape_bound:.3e})")


@dataclass
class ExtendedIterationRecord(IterationRecord):
    correction_dfdk: float = 0.0
    correction_alpha: float = 0.0
    eps: float = 0.0


@dataclass
class ExtendedIterationDetail(IterationDetail):
    correction: Optional[CorrectionReport] = None
    x_base: Optional[np.ndarray] = None  # iterate before the correction


def run_extended_sqp(problem: ProblemInstance, x0,
                     config: Optional[ExtendedConfig] = None,
                     record_sink: Optional[Callable[[IterationRecord], None]] = None,
                     detail_sink: Optional[Callable[[IterationDetail], None]] = None,
                     ) -> Tuple[SqpResult, List[ExtendedIterationRecord]]:
    """Like the basic driver, but each iteration first corrects the
    iterate along a descent direction of the boxed LPs, then linearizes
    at the corrected point.  Limit points carry Q_M certificates under
    the usual regularity; the certificate is computed the same way, by
    the partition tests at the final point."""
    cfg = config if config is not None else ExtendedConfig()
    cfg.validate()
    x = np.asarray(x0, dtype=float).reshape(problem.n).copy()
    x_prev: Optional[np.ndarray] = None
    B = np.eye(problem.n)
    rho = cfg.rho0
    sigma = PenaltyParams.fresh(problem, cfg.sigma0, cfg.xi1, cfg.xi2)
    trace: List[ExtendedIterationRecord] = []
    n_list: List[int] = []
    j_list: List[int] = []
    nfev = 0
    pt = problem.eval_point(x)
    ngev = 1
    status = STATUS_MAX_ITER
    message = ""
    under_piece: Optional[PieceMultiplier] = None

    def emit(rec, detail) -> None:
        trace.append(rec)
        if record_sink is not None:
            record_sink(rec)
        if detail_sink is not None:
            detail_sink(detail)

    k = 0
    while True:
        eps = epsilon_schedule(x, x_prev, cfg.eps_init)
        x_t, crep = correct_iterate(problem, sigma, x, eps, cfg, pt=pt)
        nfev += crep.n_values
        if crep.moved:
            pt_t = problem.eval_point(x_t)
            ngev += 1
        else:
            pt_t = pt
        viol = pt_t.violation()
        aux = build_aux(pt_t, B, rho=rho, zeta=cfg.zeta, rho_bar=cfg.rho_bar)
        try:
            path = solve_qpvc(aux, max_restarts=cfg.max_restarts)
        except RestartLimitError as err:
            status = STATUS_RESTART_LIMIT
            message = str(err)
            rec = ExtendedIterationRecord(k, x_t.copy(), pt_t.f, viol,
                                          float("nan"), 0, float("nan"), rho,
                                          sigma.max(), correction_dfdk=crep.slope,
                                          correction_alpha=crep.alpha, eps=eps)
            emit(rec, ExtendedIterationDetail(rec, aux, None, sigma, None, None,
                                              correction=crep, x_base=x.copy()))
            x, pt = x_t, pt_t
            break
        rho = path.final_rho
        step_norm = float(np.linalg.norm(path.s_final))
        rec = ExtendedIterationRecord(k=k, x=x_t.copy(), f=pt_t.f, viol=viol,
                                      delta_N=path.delta_final, N_k=path.N,
                                      step_norm=step_norm, rho=rho,
                                      sigma_max=sigma.max(),
                                      correction_dfdk=crep.slope,
                                      correction_alpha=crep.alpha, eps=eps)
        detail = ExtendedIterationDetail(rec, aux, path, sigma, None, None,
                                         correction=crep, x_base=x.copy())
        if path.status == DEGENERATE:
            status = STATUS_DEGENERATE
            message = ("the relaxation keeps its slack at 1: the linearized "
                       "constraints admit no violation decrease from here")
            emit(rec, detail)
            x, pt = x_t, pt_t
            break
        small_step = step_norm <= STEP_ZERO_TOL
        converged = (viol <= cfg.eps_C
                     and float(path.s_final @ B @ path.s_final) <= cfg.eps_1)
        if small_step or converged:
            status = STATUS_SOLVED
            under_piece = path.under_multiplier
            emit(rec, detail)
            x, pt = x_t, pt_t
            break
        if k >= cfg.max_outer:
            status = STATUS_MAX_ITER
            message = f"no piece solution accepted within {cfg.max_outer} iterations"
            emit(rec, detail)
            x, pt = x_t, pt_t
            break
        sigma = update_penalties(sigma, path)
        rec.sigma_max = sigma.max()
        line = accept_step(problem, aux, sigma, path, cfg)
        nfev += line.n_values
        rec.j_k = line.j
        rec.gamma = line.gamma
        n_list.append(path.N)
        j_list.append(line.j)
        detail.sigma = sigma
        detail.line = line
        detail.x_next = line.x_next
        emit(rec, detail)
        pt_next = problem.eval_point(line.x_next)
        ngev += 1
        if cfg.b_update == "DampedBFGS":
            gL = grad_lagrangian(pt_t, path.under_multiplier)
            gL_next = grad_lagrangian(pt_next, path.under_multiplier)
            B = update_B(B, x_t, line.x_next, gL, gL_next, cfg.b_update)
        x_prev = x
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
