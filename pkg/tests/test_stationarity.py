"""Stationarity grading: residual checks, LP tests, certificates.

The two-variable example has vanishing pairs (x1, 5*sqrt(2)-x1-x2) and
(x2, 5-x1-x2).  Its feasible set has stationary points at (0, 0) and
(0, 5) (both certifiably QM) and a weakly-but-not-M stationary point at
(0, 5*sqrt(2)) where the LP test must fail with margin -2.
"""

import numpy as np
import pytest

from mpvc.problem import Jacobians, ProblemInstance, Values, classify_indices
from mpvc.problems import SQRT2, academic_problem
from mpvc.stationarity import (LEVEL_M, LEVEL_NONE, LEVEL_Q, LEVEL_QM,
                               LEVEL_S, LEVEL_WEAK, InfeasiblePointError,
                               Multiplier, certify, check_Q_via_LP,
                               check_weak_M, direction_lp, find_multiplier,
                               level_rank)
from mpvc.lp import OPTIMAL, solve_lp

UPPER = np.array([0.0, 5.0])
ORIGIN = np.array([0.0, 0.0])
SADDLE = np.array([0.0, 5.0 * SQRT2])


def corner_problem():
    """min x1 + x2^2 with the single vanishing pair (x1, x2).

    At the origin both constraints are bi-active and lam_H = 1,
    lam_G = 0 solves the stationarity equation: an S-stationary point.
    """

    def values(x):
        return Values(f=float(x[0] + x[1] ** 2), h=np.zeros(0), g=np.zeros(0),
                      H=np.array([x[0]]), G=np.array([x[1]]))

    def jacobians(x):
        return Jacobians(grad_f=np.array([1.0, 2.0 * x[1]]),
                         Jh=np.zeros((0, 2)), Jg=np.zeros((0, 2)),
                         JH=np.array([[1.0, 0.0]]), JG=np.array([[0.0, 1.0]]))

    return ProblemInstance(n=2, n_eq=0, n_ineq=0, n_vanish=1,
                           values=values, jacobians=jacobians, name="corner")


def unconstrained_problem():
    def values(x):
        return Values(f=float((x[0] - 2.0) ** 2), h=np.zeros(0), g=np.zeros(0),
                      H=np.zeros(0), G=np.zeros(0))

    def jacobians(x):
        return Jacobians(grad_f=np.array([2.0 * (x[0] - 2.0)]),
                         Jh=np.zeros((0, 1)), Jg=np.zeros((0, 1)),
                         JH=np.zeros((0, 1)), JG=np.zeros((0, 1)))

    return ProblemInstance(n=1, n_eq=0, n_ineq=0, n_vanish=0,
                           values=values, jacobians=jacobians, name="free")


def test_level_rank_order():
    order = [LEVEL_NONE, LEVEL_WEAK, LEVEL_M, LEVEL_Q, LEVEL_QM, LEVEL_S]
    ranks = [level_rank(lv) for lv in order]
    assert ranks == sorted(ranks) and len(set(ranks)) == len(ranks)


def test_check_q_true_at_upper_solution():
    qt = check_Q_via_LP(academic_problem(), UPPER, beta1=(), tol=1e-8)
    assert qt.ok
    assert min(qt.optima) == pytest.approx(0.0, abs=1e-8)
    assert qt.beta1 == () and qt.beta2 == ()


def test_check_q_true_at_origin():
    qt = check_Q_via_LP(academic_problem(), ORIGIN, beta1=(), tol=1e-8)
    assert qt.ok
    assert min(qt.optima) == pytest.approx(0.0, abs=1e-8)


def test_check_q_false_at_saddle():
    # beta1 = {} puts the bi-active row on the equality side of the
    # second LP, which can then slide along the box to objective -2
    qt = check_Q_via_LP(academic_problem(), SADDLE, beta1=(), tol=1e-8)
    assert not qt.ok
    assert min(qt.optima) == pytest.approx(-2.0, abs=1e-8)


def test_check_q_rejects_bad_partition():
    with pytest.raises(ValueError):
        check_Q_via_LP(academic_problem(), UPPER, beta1=(0,))


def test_check_q_rejects_infeasible_point():
    with pytest.raises(InfeasiblePointError):
        check_Q_via_LP(academic_problem(), np.array([1.0, 1.0]))


def test_direction_lp_zero_is_feasible_everywhere():
    # the truncated right-hand sides keep d = 0 feasible at any point,
    # so the boxed LP is always solvable with nonpositive optimum
    prob = academic_problem(with_extra_constraint=True)
    rng = np.random.default_rng(42)
    for _ in range(25):
        pt = prob.eval_point(rng.uniform(-5.0, 10.0, size=2))
        for w1 in [(), (0,), (1,), (0, 1)]:
            res = solve_lp(direction_lp(pt, w1))
            assert res.status == OPTIMAL
            assert res.obj <= 1e-9
            assert np.max(np.abs(res.x)) <= 1.0 + 1e-9


def test_check_weak_m_accepts_hand_multiplier():
    mult = Multiplier(lam_h=np.zeros(0), lam_g=np.zeros(0),
                      lam_H=np.array([2.0, 0.0]), lam_G=np.array([0.0, 2.0]))
    level = check_weak_M(academic_problem(), UPPER, mult)
    assert level_rank(level) >= level_rank(LEVEL_M)


def test_check_weak_m_rejects_zero_multiplier():
    mult = Multiplier.zeros(0, 0, 2)
    assert check_weak_M(academic_problem(), UPPER, mult) == LEVEL_NONE


def test_check_weak_m_rejects_negative_inequality_multiplier():
    prob = academic_problem(with_extra_constraint=True)
    mult = Multiplier(lam_h=np.zeros(0), lam_g=np.array([-0.5]),
                      lam_H=np.array([2.0, 0.0]), lam_G=np.array([0.0, 2.0]))
    assert check_weak_M(prob, UPPER, mult) == LEVEL_NONE


def test_check_weak_m_raises_off_the_feasible_set():
    mult = Multiplier.zeros(0, 0, 2)
    with pytest.raises(InfeasiblePointError):
        check_weak_M(academic_problem(), np.array([1.0, 1.0]), mult)


def test_check_weak_m_grades_weak_only_multiplier():
    # at the saddle the unique multiplier has lam_H * lam_G = 4 on the
    # bi-active row, so it grades Weak but not M
    mult = Multiplier(lam_h=np.zeros(0), lam_g=np.zeros(0),
                      lam_H=np.array([2.0, 0.0]), lam_G=np.array([2.0, 0.0]))
    assert check_weak_M(academic_problem(), SADDLE, mult) == LEVEL_WEAK


def test_check_weak_m_reaches_s_level():
    mult = Multiplier(lam_h=np.zeros(0), lam_g=np.zeros(0),
                      lam_H=np.array([1.0]), lam_G=np.array([0.0]))
    assert check_weak_M(corner_problem(), ORIGIN, mult) == LEVEL_S


def test_find_multiplier_matches_hand_solution():
    prob = academic_problem()
    pt = prob.eval_point(UPPER)
    idx = classify_indices(pt)
    mult = find_multiplier(pt, idx)
    assert mult is not None
    assert mult.lam_H == pytest.approx([2.0, 0.0], abs=1e-9)
    assert mult.lam_G == pytest.approx([0.0, 2.0], abs=1e-9)


def test_find_multiplier_unconstrained_cases():
    prob = unconstrained_problem()
    pt = prob.eval_point(np.array([2.0]))
    assert find_multiplier(pt, classify_indices(pt)) is not None
    pt = prob.eval_point(np.array([3.0]))
    assert find_multiplier(pt, classify_indices(pt)) is None


def test_certify_qm_at_both_solutions():
    prob = academic_problem()
    for x in (UPPER, ORIGIN):
        cert = certify(prob, x)
        assert cert.level == LEVEL_QM
        assert cert.beta1 == () and cert.beta2 == ()
        assert cert.q_margin == pytest.approx(0.0, abs=1e-8)
        assert cert.stationarity <= cert.tol_abs
        assert cert.bi_active <= cert.tol_abs


def test_certify_weak_at_saddle():
    cert = certify(academic_problem(), SADDLE)
    assert cert.level == LEVEL_WEAK
    assert cert.under is not None
    assert cert.under.lam_H[0] == pytest.approx(2.0, abs=1e-8)
    assert cert.under.lam_G[0] == pytest.approx(2.0, abs=1e-8)
    assert cert.q_margin == pytest.approx(-2.0, abs=1e-8)


def test_certify_exhaustive_cannot_upgrade_saddle():
    cert = certify(academic_problem(), SADDLE, exhaustive=True)
    assert cert.level == LEVEL_WEAK


def test_certify_infeasible_reports_none():
    cert = certify(academic_problem(), np.array([1.0, 1.0]))
    assert cert.level == LEVEL_NONE
    assert cert.feasibility > cert.tol_abs


def test_certify_s_corner():
    cert = certify(corner_problem(), ORIGIN)
    assert cert.level == LEVEL_S
    assert cert.under is not None
    assert cert.under.lam_H[0] >= -1e-9
    assert cert.under.lam_G[0] == pytest.approx(0.0, abs=1e-9)


def test_certify_witnesses_pass_residual_check():
    prob = academic_problem()
    for x in (UPPER, ORIGIN, SADDLE):
        cert = certify(prob, x)
        for mult in (cert.under, cert.over):
            if mult is None:
                continue
            level = check_weak_M(prob, x, mult)
            assert level_rank(level) >= level_rank(LEVEL_WEAK)


def test_certify_accepts_hint_when_lps_cannot_help():
    hint = Multiplier(lam_h=np.zeros(0), lam_g=np.zeros(0),
                      lam_H=np.array([2.0, 0.0]), lam_G=np.array([2.0, 0.0]))
    cert = certify(academic_problem(), SADDLE, hints=hint)
    assert cert.level == LEVEL_WEAK


def test_certificate_serializes_to_plain_types():
    cert = certify(academic_problem(), UPPER)
    d = cert.as_dict()
    assert d["level"] == LEVEL_QM
    assert isinstance(d["beta1"], list)
    assert isinstance(d["under"], dict)
    assert all(isinstance(v, float) for v in d["under"]["lam_H"])
