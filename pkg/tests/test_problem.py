import numpy as np
import pytest

from mpvc.problem import (EvalPoint, Jacobians, ProblemInstance, Values,
                          classify_indices, fd_jacobian, violation_of)


def toy_problem():
    # f = x1^2 + x2, h = x1 + x2 - 1, g = x1*x2, H = x1, G = 1 - x1 - x2
    def values(x):
        return Values(f=x[0] ** 2 + x[1], h=np.array([x[0] + x[1] - 1.0]),
                      g=np.array([x[0] * x[1]]), H=np.array([x[0]]),
                      G=np.array([1.0 - x[0] - x[1]]))

    def jacobians(x):
        return Jacobians(grad_f=np.array([2 * x[0], 1.0]),
                         Jh=np.array([[1.0, 1.0]]),
                         Jg=np.array([[x[1], x[0]]]),
                         JH=np.array([[1.0, 0.0]]),
                         JG=np.array([[-1.0, -1.0]]))

    return ProblemInstance(n=2, n_eq=1, n_ineq=1, n_vanish=1,
                           values=values, jacobians=jacobians, name="toy")


def test_eval_point_bundles_all_data():
    prob = toy_problem()
    pt = prob.eval_point([2.0, -1.0])
    assert pt.f == 3.0
    np.testing.assert_allclose(pt.h, [0.0])
    np.testing.assert_allclose(pt.F, [[-2.0, 0.0]])
    np.testing.assert_allclose(pt.grad_f, [4.0, 1.0])
    assert pt.Jh.shape == (1, 2) and pt.JH.shape == (1, 2)


def test_violation_measure():
    # feasible
    assert violation_of(np.zeros(1), np.array([-1.0]), np.array([2.0]),
                        np.array([-3.0])) == 0.0
    # equality violated
    assert violation_of(np.array([0.5]), np.zeros(0), np.zeros(0),
                        np.zeros(0)) == 0.5
    # vanishing pair violated: H=-1 -> F=(1,-3), d(F,P)=1
    assert violation_of(np.zeros(0), np.zeros(0), np.array([-1.0]),
                        np.array([-3.0])) == 1.0
    # product violated: H=2, G=1 -> F=(-2,1), d=min(2,1)+ = 1
    assert violation_of(np.zeros(0), np.zeros(0), np.array([2.0]),
                        np.array([1.0])) == 1.0


def make_point(H, G, g=()):
    nv = len(H)
    ni = len(g)
    z = np.zeros((0, 2))
    return EvalPoint(x=np.zeros(2), f=0.0, h=np.zeros(0),
                     g=np.asarray(g, dtype=float), H=np.asarray(H, dtype=float),
                     G=np.asarray(G, dtype=float), grad_f=np.zeros(2),
                     Jh=np.zeros((0, 2)), Jg=np.zeros((ni, 2)),
                     JH=np.zeros((nv, 2)), JG=np.zeros((nv, 2)))


def test_classification_on_analytic_fixtures():
    root2 = np.sqrt(2.0)
    # at (0,5): H=(0,5), G=(5r2-5, 0)
    s = classify_indices(make_point([0.0, 5.0], [5 * root2 - 5.0, 0.0]))
    assert list(s.i0p) == [0] and list(s.ip0) == [1]
    assert not len(s.i00) and not len(s.i0m) and not len(s.ipm)
    # at (0,0): H=(0,0), G=(5r2,5)
    s = classify_indices(make_point([0.0, 0.0], [5 * root2, 5.0]))
    assert list(s.i0p) == [0, 1]
    # at (0,5r2): H=(0,5r2), G=(0,5-5r2)
    s = classify_indices(make_point([0.0, 5 * root2], [0.0, 5.0 - 5 * root2]))
    assert list(s.i00) == [0] and list(s.ipm) == [1]


def test_classification_uses_scaled_tolerance():
    # |H| below tau = 1e-7*(1+|H|+|G|) counts as zero
    s = classify_indices(make_point([1e-7, 5.0], [1.0, -2e-7]))
    assert list(s.i0p) == [0]
    assert list(s.ip0) == [1]  # |G| = 2e-7 < 1e-7*(1+5) counts as zero
    # H = 1e-5 exceeds tau ~ 2e-7, so the row is not vanished
    s = classify_indices(make_point([1e-5], [1.0]))
    assert list(s.i0p) == [] and list(s.ip0) == [0]


def test_active_inequalities():
    s = classify_indices(make_point([], [], g=[-1e-9, -0.5, 0.0]))
    assert list(s.active_g) == [0, 2]


def test_fd_jacobian_on_polynomial():
    fun = lambda x: np.array([x[0] ** 2 * x[1], np.sin(x[1])])
    x = np.array([1.2, -0.7])
    J = fd_jacobian(fun, x)
    exact = np.array([[2 * x[0] * x[1], x[0] ** 2], [0.0, np.cos(x[1])]])
    np.testing.assert_allclose(J, exact, rtol=1e-8, atol=1e-9)
