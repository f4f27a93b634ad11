"""Built-in MPVC instances.

A two-variable linear-objective instance with two vanishing pairs whose
stationary points are known in closed form (plus a variant with one
extra linear inequality), and planar truss topology instances where the
stress constraint of every candidate bar vanishes with its area.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Tuple

import numpy as np

from .problem import Jacobians, ProblemInstance, Values

SQRT2 = float(np.sqrt(2.0))


def academic_problem(with_extra_constraint: bool = False) -> ProblemInstance:
    """min 4 x1 + 2 x2 with vanishing pairs (x1, 5*sqrt(2) - x1 - x2)
    and (x2, 5 - x1 - x2); optionally adds 3 - x1 - x2 <= 0.

    Global minimizer (0, 0) with value 0; (0, 5) is the best point on
    the x1 = 0 ray with the second pair vanished (value 10); with the
    extra inequality the feasible minimum moves to (0, 5).
    """
    n_ineq = 1 if with_extra_constraint else 0

    def values(x):
        g = np.array([3.0 - x[0] - x[1]]) if with_extra_constraint else np.zeros(0)
        return Values(
            f=4.0 * x[0] + 2.0 * x[1],
            h=np.zeros(0),
            g=g,
            H=np.array([x[0], x[1]]),
            G=np.array([5.0 * SQRT2 - x[0] - x[1], 5.0 - x[0] - x[1]]),
        )

    def jacobians(x):
        Jg = np.array([[-1.0, -1.0]]) if with_extra_constraint else np.zeros((0, 2))
        return Jacobians(
            grad_f=np.array([4.0, 2.0]),
            Jh=np.zeros((0, 2)),
            Jg=Jg,
            JH=np.eye(2),
            JG=np.array([[-1.0, -1.0], [-1.0, -1.0]]),
        )

    name = "academic+g" if with_extra_constraint else "academic"
    return ProblemInstance(n=2, n_eq=0, n_ineq=n_ineq, n_vanish=2,
                           values=values, jacobians=jacobians, name=name)


class TrussModel:
    """Planar pin-jointed ground structure; immutable after construction.

    Geometry is fixed, the optimization variables are the bar areas a and
    the free-node displacements u.  For bar i between nodes (p, q) the
    kinematic row b_i maps u to the axial elongation (u_q - u_p) . e_i
    with e_i the unit direction, so the stiffness matrix is
    K(a) = sum_i a_i (E/l_i) b_i b_i^T and the bar stress is
    sigma_i = (E/l_i) b_i^T u.
    """

    def __init__(self, nodes, bars, fixed_nodes, point_loads: Dict[int, Tuple[float, float]],
                 compliance_cap: float, area_cap: float, stress_cap: float,
                 young: float = 1.0, name: str = "truss"):
        self.nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
        self.bars = np.asarray(bars, dtype=int).reshape(-1, 2)
        self.fixed_nodes = tuple(sorted(int(i) for i in fixed_nodes))
        self.point_loads = {int(k): (float(v[0]), float(v[1]))
                            for k, v in point_loads.items()}
        self.compliance_cap = float(compliance_cap)
        self.area_cap = float(area_cap)
        self.stress_cap = float(stress_cap)
        self.young = float(young)
        self.name = name

        fixed = set(self.fixed_nodes)
        self.dof = -np.ones((len(self.nodes), 2), dtype=int)
        free = 0
        for i in range(len(self.nodes)):
            if i not in fixed:
                self.dof[i] = (free, free + 1)
                free += 2
        self.d = free
        self.n_bars = len(self.bars)

        span = self.nodes[self.bars[:, 1]] - self.nodes[self.bars[:, 0]]
        self.lengths = np.hypot(span[:, 0], span[:, 1])
        if np.any(self.lengths <= 0.0):
            raise ValueError("zero-length bar in ground structure")
        unit = span / self.lengths[:, None]

        self.b = np.zeros((self.n_bars, self.d))
        for i, (p, q) in enumerate(self.bars):
            for node, sign in ((p, -1.0), (q, 1.0)):
                ix, iy = self.dof[node]
                if ix >= 0:
                    self.b[i, ix] += sign * unit[i, 0]
                    self.b[i, iy] += sign * unit[i, 1]

        self.load = np.zeros(self.d)
        for node, (fx, fy) in self.point_loads.items():
            ix, iy = self.dof[node]
            if ix < 0:
                raise ValueError(f"load applied to fixed node {node}")
            self.load[ix] += fx
            self.load[iy] += fy

    def as_dict(self) -> dict:
        """JSON-friendly description for export and visualization."""
        return {
            "name": self.name,
            "nodes": self.nodes.tolist(),
            "bars": self.bars.tolist(),
            "fixed_nodes": list(self.fixed_nodes),
            "loads": {str(k): list(v) for k, v in self.point_loads.items()},
            "compliance_cap": self.compliance_cap,
            "area_cap": self.area_cap,
            "stress_cap": self.stress_cap,
            "young": self.young,
        }


def assemble_stiffness(model: TrussModel, a) -> np.ndarray:
    """K(a) on the free dofs; negative areas are clamped to zero."""
    a = np.maximum(np.asarray(a, dtype=float).reshape(model.n_bars), 0.0)
    w = a * model.young / model.lengths
    return model.b.T @ (w[:, None] * model.b)


def bar_stresses(model: TrussModel, u) -> np.ndarray:
    """sigma_i = (E/l_i) * elongation of bar i under displacement u."""
    u = np.asarray(u, dtype=float).reshape(model.d)
    return model.young / model.lengths * (model.b @ u)


def equilibrium_displacement(model: TrussModel, a) -> np.ndarray:
    """Solve K(a) u = load; minimum-norm solution when K is singular."""
    u, *_ = np.linalg.lstsq(assemble_stiffness(model, a), model.load, rcond=None)
    return u


def truss_start(model: TrussModel) -> np.ndarray:
    """All areas at the cap with the matching elastic displacement."""
    a = np.full(model.n_bars, model.area_cap)
    return np.concatenate([a, equilibrium_displacement(model, a)])


def truss_mpvc(model: TrussModel) -> ProblemInstance:
    """Minimum-volume topology design as an MPVC over x = (a, u).

    Equalities: equilibrium K(a)u = load.  Inequalities: compliance
    load.u <= cap and the area caps.  Vanishing pairs: H_i = a_i with
    G_i = sigma_i(u)^2 - cap^2, so the stress limit of a bar applies
    only while the bar exists.  All rows are polynomials in (a, u), so
    the analytic Jacobians below are exact everywhere.
    """
    nb, d = model.n_bars, model.d
    n = nb + d
    stiff = model.young / model.lengths
    b = model.b

    def values(x):
        a, u = x[:nb], x[nb:]
        elong = b @ u
        g = np.concatenate(([model.load @ u - model.compliance_cap],
                            a - model.area_cap))
        return Values(
            f=float(model.lengths @ a),
            h=b.T @ (a * stiff * elong) - model.load,
            g=g,
            H=a.copy(),
            G=(stiff * elong) ** 2 - model.stress_cap ** 2,
        )

    def jacobians(x):
        a, u = x[:nb], x[nb:]
        sigma = stiff * (b @ u)
        # d(K(a)u)/da_j = sigma_j b_j, d/du = K(a)
        Jh = np.hstack([b.T * sigma, b.T @ ((a * stiff)[:, None] * b)])
        Jg = np.zeros((1 + nb, n))
        Jg[0, nb:] = model.load
        Jg[1:, :nb] = np.eye(nb)
        JG = np.zeros((nb, n))
        JG[:, nb:] = (2.0 * sigma * stiff)[:, None] * b
        return Jacobians(
            grad_f=np.concatenate([model.lengths, np.zeros(d)]),
            Jh=Jh,
            Jg=Jg,
            JH=np.hstack([np.eye(nb), np.zeros((nb, d))]),
            JG=JG,
        )

    return ProblemInstance(n=n, n_eq=d, n_ineq=1 + nb, n_vanish=nb,
                           values=values, jacobians=jacobians, name=model.name)


def ten_bar_ground_structure() -> TrussModel:
    """Six nodes on a 2 x 3 unit grid, left column clamped, unit load
    pulling the bottom-right node down.

        B ---9--- D ---7--- F
        | (5) (6) | (3) (8) |
        |    X    1    X    10      (A, B clamped; diagonals cross)
        | (6) (5) | (8) (3) |
        A ---2--- C ---4--- E
                            | load (0, -1)

    Bars in order: 1 C-D, 2 A-C, 3 C-F, 4 C-E, 5 B-C, 6 A-D, 7 D-F,
    8 D-E, 9 B-D, 10 E-F.  The numbering matters only for reading off
    per-bar results; the known optimal design keeps the bottom chords
    2 and 4, the tension/compression diagonals 6 and 8 and the doubled
    top chord 9.
    """
    nodes = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0),
             (1.0, 1.0), (2.0, 0.0), (2.0, 1.0)]
    bars = [(2, 3), (0, 2), (2, 5), (2, 4), (1, 2),
            (0, 3), (3, 5), (3, 4), (1, 3), (4, 5)]
    return TrussModel(nodes, bars, fixed_nodes=(0, 1),
                      point_loads={4: (0.0, -1.0)},
                      compliance_cap=10.0, area_cap=100.0, stress_cap=1.0,
                      name="tenbar")


def cantilever_ground_structure(stress_cap: float = 100.0) -> TrussModel:
    """27 nodes on a 3 x 9 unit grid clamped at the left column, with a
    unit load pulling the bottom-right node down.

    Bars connect every node pair whose column/row offset is coprime, so
    no member passes through an intermediate grid node, and pairs of
    clamped nodes are dropped; that leaves 224 candidate bars over
    d = 48 free dofs.
    """
    cols, rows = 9, 3
    nodes = [(float(c), float(r)) for c in range(cols) for r in range(rows)]
    fixed = tuple(range(rows))  # column 0
    bars = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if i in fixed and j in fixed:
                continue
            dc = abs(int(nodes[j][0] - nodes[i][0]))
            dr = abs(int(nodes[j][1] - nodes[i][1]))
            if math.gcd(dc, dr) == 1:
                bars.append((i, j))
    load_node = (cols - 1) * rows  # bottom-right corner
    return TrussModel(nodes, bars, fixed_nodes=fixed,
                      point_loads={load_node: (0.0, -1.0)},
                      compliance_cap=100.0, area_cap=1.0,
                      stress_cap=stress_cap, name="cantilever")


def load_problem(name: str, stress_cap: Optional[float] = None):
    """Build a named instance: (problem, default start, model or None).

    Names: academic, academic-constrained, tenbar, cantilever.  The
    stress_cap parameter applies to the cantilever only.
    """
    if name == "academic":
        return academic_problem(), np.array([1.0, 1.0]), None
    if name == "academic-constrained":
        return academic_problem(True), np.array([5.0, 5.0]), None
    if name == "tenbar":
        model = ten_bar_ground_structure()
        return truss_mpvc(model), truss_start(model), model
    if name == "cantilever":
        model = cantilever_ground_structure(
            100.0 if stress_cap is None else stress_cap)
        return truss_mpvc(model), truss_start(model), model
    raise KeyError(f"unknown problem {name!r}; pick from academic, "
                   f"academic-constrained, tenbar, cantilever")
