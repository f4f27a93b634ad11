import numpy as np
import pytest

from mpvc import cones


def oracle_dist(v, points):
    """l1 distance of v to a sampled point cloud."""
    return np.min(np.abs(points - np.asarray(v)).sum(axis=1))


def branch_samples(branch, radius=12.0, step=0.02):
    ax = np.arange(-radius, radius + step, step)
    neg = ax[ax <= 0.0]
    if branch == cones.P1:
        return np.column_stack([np.zeros_like(ax), ax])
    if branch == cones.P2:
        aa, bb = np.meshgrid(neg, neg, indexing="ij")
        return np.column_stack([aa.ravel(), bb.ravel()])
    return np.vstack([branch_samples(cones.P1, radius, step),
                      branch_samples(cones.P2, radius, step)])


@pytest.mark.parametrize("branch", [cones.P1, cones.P2, cones.P])
def test_distance_matches_sampling_oracle(branch):
    rng = np.random.default_rng(42)
    pts = branch_samples(branch)
    for v in rng.uniform(-5.0, 5.0, size=(40, 2)):
        d_closed = float(cones.dist(v, branch))
        d_oracle = float(oracle_dist(v, pts))
        # closed form can only beat the sampled cloud by the grid pitch
        assert d_closed <= d_oracle + 1e-12
        assert d_oracle - d_closed <= 0.05


def test_distance_closed_forms():
    assert cones.dist_p1([-1.0, 2.0]) == 1.0
    assert cones.dist_p2([-1.0, 2.0]) == 2.0
    assert cones.dist_p([-1.0, 2.0]) == 1.0
    assert cones.dist_p([-3.0, -1.0]) == 0.0
    assert cones.dist_p([0.0, 7.0]) == 0.0
    assert cones.dist_p([2.0, -5.0]) == 2.0
    # infeasible corner: positive H-part and G-part
    assert cones.dist_p([-2.0, 3.0]) == 2.0
    np.testing.assert_allclose(
        cones.dist_p2(np.array([[-1.0, 3.0], [0.5, -2.0]])), [3.0, 0.5])


def test_union_distance_is_min_of_branches():
    rng = np.random.default_rng(7)
    v = rng.uniform(-10.0, 10.0, size=(500, 2))
    np.testing.assert_allclose(
        cones.dist_p(v), np.minimum(cones.dist_p1(v), cones.dist_p2(v)),
        atol=1e-14)


@pytest.mark.parametrize("branch", [cones.P1, cones.P2, cones.P])
def test_distance_is_one_lipschitz_in_l1(branch):
    rng = np.random.default_rng(11)
    u = rng.uniform(-8.0, 8.0, size=(300, 2))
    w = u + rng.uniform(-2.0, 2.0, size=(300, 2))
    lhs = np.abs(cones.dist(u, branch) - cones.dist(w, branch))
    rhs = np.abs(u - w).sum(axis=1)
    assert np.all(lhs <= rhs + 1e-12)


@pytest.mark.parametrize("branch", [cones.P1, cones.P2])
def test_branch_distances_are_convex(branch):
    rng = np.random.default_rng(13)
    u = rng.uniform(-8.0, 8.0, size=(300, 2))
    w = rng.uniform(-8.0, 8.0, size=(300, 2))
    t = rng.uniform(0.0, 1.0, size=300)[:, None]
    mid = t * u + (1 - t) * w
    lhs = cones.dist(mid, branch)
    rhs = t[:, 0] * cones.dist(u, branch) + (1 - t[:, 0]) * cones.dist(w, branch)
    assert np.all(lhs <= rhs + 1e-12)


@pytest.mark.parametrize("branch", [cones.P1, cones.P2, cones.P])
def test_zero_distance_iff_member(branch):
    rng = np.random.default_rng(17)
    v = rng.uniform(-4.0, 4.0, size=(400, 2))
    d = cones.dist(v, branch)
    members = cones.member(v, branch, tol=0.0)
    assert np.array_equal(members, d == 0.0)


def test_normal_cone_membership_cases():
    # at the corner of P: R x {0} union {0} x R+
    assert cones.normal_cone_member((0.0, 0.0), (3.0, 0.0), cones.P)
    assert cones.normal_cone_member((0.0, 0.0), (-2.0, 0.0), cones.P)
    assert cones.normal_cone_member((0.0, 0.0), (0.0, 5.0), cones.P)
    assert not cones.normal_cone_member((0.0, 0.0), (1.0, 1.0), cones.P)
    # H = 0 < G: R x {0}
    assert cones.normal_cone_member((0.0, 2.0), (-7.0, 0.0), cones.P)
    assert not cones.normal_cone_member((0.0, 2.0), (0.0, 1.0), cones.P)
    # H = 0 > G: R+ x {0}
    assert cones.normal_cone_member((0.0, -2.0), (7.0, 0.0), cones.P)
    assert not cones.normal_cone_member((0.0, -2.0), (-7.0, 0.0), cones.P)
    # H > 0 = G: {0} x R+
    assert cones.normal_cone_member((-1.0, 0.0), (0.0, 4.0), cones.P)
    assert not cones.normal_cone_member((-1.0, 0.0), (1.0, 0.0), cones.P)
    # interior pattern H > 0 > G: {0}
    assert cones.normal_cone_member((-1.0, -1.0), (0.0, 0.0), cones.P)
    assert not cones.normal_cone_member((-1.0, -1.0), (0.0, 1e-3), cones.P)
    # P1 and P2 at the corner
    assert cones.normal_cone_member((0.0, 0.0), (-3.0, 0.0), cones.P1)
    assert not cones.normal_cone_member((0.0, 0.0), (0.0, 1.0), cones.P1)
    assert cones.normal_cone_member((0.0, 0.0), (2.0, 3.0), cones.P2)
    assert not cones.normal_cone_member((0.0, 0.0), (-1e-3, 1.0), cones.P2)
    with pytest.raises(ValueError):
        cones.normal_cone_member((1.0, 1.0), (0.0, 0.0), cones.P)
