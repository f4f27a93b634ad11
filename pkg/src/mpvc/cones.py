"""Geometry of the vanishing-constraint branch set.

Each vanishing constraint pair ``H_i(x) >= 0``, ``G_i(x) H_i(x) <= 0`` is
rewritten as ``F_i(x) = (-H_i(x), G_i(x)) in P`` where::

    P1 = {0} x R          (the constraint vanishes: H_i = 0)
    P2 = R_ x R_          (H_i >= 0 and G_i <= 0)
    P  = P1 u P2

All distances below are taken in the l1 norm, for which the three sets
admit the closed forms implemented here.  Everything is vectorized over
rows: ``v`` may be a single pair or an ``(m, 2)`` array.
"""

from __future__ import annotations

import numpy as np

P1 = "P1"
P2 = "P2"
P = "P"

_BRANCHES = (P1, P2, P)


def _split(v):
    v = np.asarray(v, dtype=float)
    return v[..., 0], v[..., 1]


def dist_p1(v):
    """l1 distance to P1 = {0} x R, i.e. |v1|."""
    a, _ = _split(v)
    return np.abs(a)


def dist_p2(v):
    """l1 distance to P2 = R_ x R_, i.e. (v1)+ + (v2)+."""
    a, b = _split(v)
    return np.maximum(a, 0.0) + np.maximum(b, 0.0)


def dist_p(v):
    """l1 distance to P = P1 u P2, i.e. (v1)+ + (min(-v1, v2))+."""
    a, b = _split(v)
    return np.maximum(a, 0.0) + np.maximum(np.minimum(-a, b), 0.0)


def dist(v, branch):
    if branch == P1:
        return dist_p1(v)
    if branch == P2:
        return dist_p2(v)
    if branch == P:
        return dist_p(v)
    raise ValueError(f"unknown branch {branch!r}")


def member(v, branch, tol=0.0):
    """Membership test, elementwise over rows, with absolute slack `tol`."""
    return dist(v, branch) <= tol


def normal_cone_member(v, z, branch=P, tol=1e-9):
    """Test whether `z` lies in the limiting normal cone to `branch` at `v`.

    `v` must belong to the branch within `tol` (the sign pattern of `v`,
    measured against `tol`, selects the normal-cone formula).  Scalars
    only: `v` and `z` are single pairs.
    """
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    if dist(v, branch) > tol:
        raise ValueError(f"point {v} does not lie in {branch}")
    a, b = v
    z1, z2 = z
    z1_zero = abs(z1) <= tol
    z2_zero = abs(z2) <= tol

    if branch == P1:
        # N_{P1}(v) = R x {0}
        return bool(z2_zero)

    if branch == P2:
        # polar orthant, componentwise complementary to v
        if z1 < -tol or z2 < -tol:
            return False
        return bool((abs(a) <= tol or z1_zero) and (abs(b) <= tol or z2_zero))

    # branch == P: five sign cases of v = (-H, G)
    if abs(a) <= tol:
        if b > tol:  # I^{0+}: R x {0}
            return bool(z2_zero)
        if b < -tol:  # I^{0-}: R+ x {0}
            return bool(z1 >= -tol and z2_zero)
        # I^{00}: R x {0} u {0} x R+
        return bool(z2_zero or (z1_zero and z2 >= -tol))
    if abs(b) <= tol:  # I^{+0}: {0} x R+
        return bool(z1_zero and z2 >= -tol)
    # I^{+-}: {0} x {0}
    return bool(z1_zero and z2_zero)
