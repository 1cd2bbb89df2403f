"""Linear static analysis of pin-jointed planar trusses (direct stiffness).

Sign convention: axial force is positive in tension.  Forces are in kN,
lengths in meters, EA in kN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trussmodel import PINNED, ROLLER, TrussModel


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Determinacy:
    kind: str  # "determinate" | "indeterminate" | "mechanism"
    degree: int = 0


@dataclass
class StiffnessSystem:
    K: np.ndarray
    F: np.ndarray
    dof_index: dict  # node id -> first DOF index
    constrained: list  # global DOF indices fixed to zero, in the rotated frame
    rotations: dict  # node id -> roll angle (rad) for rotated DOF pairs


@dataclass
class SolveResult:
    displacements: dict  # node id -> (ux, uy) m
    axial: dict  # member id -> N kN, tension positive
    reactions: dict  # node id -> (rx, ry) kN, global frame

    def to_dict(self) -> dict:
        return {
            "sign_convention": "tension positive",
            "axial_kN": {str(k): v for k, v in sorted(self.axial.items())},
            "reactions_kN": {str(k): list(v) for k, v in sorted(self.reactions.items())},
            "displacements_m": {str(k): list(v) for k, v in sorted(self.displacements.items())},
        }


def classify_determinacy(model: TrussModel) -> Determinacy:
    m = len(model.members)
    r = sum(2 if s.kind == PINNED else 1 for s in model.supports)
    j = len(model.nodes)
    excess = m + r - 2 * j
    if excess == 0:
        return Determinacy("determinate")
    if excess > 0:
        return Determinacy("indeterminate", excess)
    return Determinacy("mechanism", -excess)


def _direction(model: TrussModel, member):
    (xa, ya), (xb, yb) = model.node(member.node_a).pos_m, model.node(member.node_b).pos_m
    L = math.hypot(xb - xa, yb - ya)
    if L == 0.0:
        raise SolverError(f"member {member.id} has zero length")
    return (xb - xa) / L, (yb - ya) / L, L


def assemble(model: TrussModel) -> StiffnessSystem:
    """Global stiffness matrix and load vector, with inclined roller nodes
    expressed in their own (rolling, normal) DOF frame."""
    if any(n.pos_m is None for n in model.nodes):
        raise SolverError("model has no scale; calibrate before solving")
    dof = {n.id: 2 * k for k, n in enumerate(model.nodes)}
    ndof = 2 * len(model.nodes)
    K = np.zeros((ndof, ndof))
    F = np.zeros(ndof)
    for mem in model.members:
        c, s, L = _direction(model, mem)
        k = mem.EA / L * np.array([[c * c, c * s], [c * s, s * s]])
        ia, ib = dof[mem.node_a], dof[mem.node_b]
        K[ia : ia + 2, ia : ia + 2] += k
        K[ib : ib + 2, ib : ib + 2] += k
        K[ia : ia + 2, ib : ib + 2] -= k
        K[ib : ib + 2, ia : ia + 2] -= k
    for load in model.loads:
        fx, fy = load.components
        i = dof[load.node]
        F[i] += fx
        F[i + 1] += fy

    # rotate roller DOF pairs into (along rolling line, normal to it)
    T = np.eye(ndof)
    rotations = {}
    constrained = []
    for sup in model.supports:
        i = dof[sup.node]
        if sup.kind == PINNED:
            constrained += [i, i + 1]
        elif sup.kind == ROLLER:
            a = math.radians(sup.roll_angle_deg or 0.0)
            if a != 0.0:
                c, s = math.cos(a), math.sin(a)
                T[i : i + 2, i : i + 2] = [[c, -s], [s, c]]
                rotations[sup.node] = a
            constrained.append(i + 1)
    if rotations:
        K = T.T @ K @ T
        F = T.T @ F
        K = 0.5 * (K + K.T)
    return StiffnessSystem(K, F, dof, sorted(set(constrained)), rotations)


class _Factorization:
    """Symmetric Gaussian elimination without pivoting, stored as LU.

    Rejects the matrix when a pivot falls below 1e-10 of the largest diagonal
    entry, which is how geometric instability shows up.
    """

    def __init__(self, A: np.ndarray):
        A = np.array(A, dtype=float)
        n = A.shape[0]
        tol = 1e-10 * max(float(np.max(np.abs(np.diag(A)))) if n else 0.0, 1e-300)
        L = np.eye(n)
        for k in range(n):
            p = A[k, k]
            if not abs(p) >= tol:
                raise SolverError("unstable geometry")
            f = A[k + 1 :, k] / p
            L[k + 1 :, k] = f
            A[k + 1 :, k:] -= np.outer(f, A[k, k:])
        self.L, self.U = L, np.triu(A)

    def solve(self, b: np.ndarray) -> np.ndarray:
        n = len(b)
        y = np.array(b, dtype=float)
        for k in range(n):
            y[k] -= self.L[k, :k] @ y[:k]
        x = np.zeros(n)
        for k in range(n - 1, -1, -1):
            x[k] = (y[k] - self.U[k, k + 1 :] @ x[k + 1 :]) / self.U[k, k]
        return x


def _solve_refined(A: np.ndarray, b: np.ndarray, sweeps: int = 3) -> np.ndarray:
    """Solve A x = b; residuals are formed in extended precision so the
    refined x is accurate well beyond cond(A) * eps."""
    fac = _Factorization(A)
    A_ext = A.astype(np.longdouble)
    b_ext = b.astype(np.longdouble)
    x = fac.solve(b).astype(np.longdouble)
    for _ in range(sweeps):
        r = b_ext - A_ext @ x
        x += fac.solve(r.astype(float)).astype(np.longdouble)
    return x


def solve(model: TrussModel) -> SolveResult:
    det = classify_determinacy(model)
    if det.kind == "mechanism":
        raise SolverError(f"structure is a mechanism (degree {det.degree})")
    sys = assemble(model)
    ndof = len(sys.F)
    fixed = set(sys.constrained)
    free = [i for i in range(ndof) if i not in fixed]
    u_local = np.zeros(ndof, dtype=np.longdouble)
    if free:
        u_local[free] = _solve_refined(sys.K[np.ix_(free, free)], sys.F[free])
    r_local = sys.K.astype(np.longdouble) @ u_local - sys.F.astype(np.longdouble)

    # back to the global frame
    u = u_local.copy()
    r = r_local.copy()
    for nid, a in sys.rotations.items():
        i = sys.dof_index[nid]
        c, s = math.cos(a), math.sin(a)
        R = np.array([[c, -s], [s, c]], dtype=np.longdouble)
        u[i : i + 2] = R @ u_local[i : i + 2]
        r[i : i + 2] = R @ np.where(np.isin([i, i + 1], list(fixed)), r_local[i : i + 2], 0.0)
    displacements = {n.id: (float(u[sys.dof_index[n.id]]), float(u[sys.dof_index[n.id] + 1])) for n in model.nodes}
    axial = {}
    for mem in model.members:
        c, s, L = _direction(model, mem)
        ia, ib = sys.dof_index[mem.node_a], sys.dof_index[mem.node_b]
        stretch = (u[ib] - u[ia]) * np.longdouble(c) + (u[ib + 1] - u[ia + 1]) * np.longdouble(s)
        axial[mem.id] = float(np.longdouble(mem.EA) / np.longdouble(L) * stretch)
    reactions = {}
    for sup in model.supports:
        i = sys.dof_index[sup.node]
        if sup.node in sys.rotations:
            rx, ry = r[i], r[i + 1]
        else:
            rx = r[i] if i in fixed else 0.0
            ry = r[i + 1] if i + 1 in fixed else 0.0
        reactions[sup.node] = (float(rx) + 0.0, float(ry) + 0.0)
    return SolveResult(displacements, axial, reactions)


def node_balance(model: TrussModel, result: SolveResult) -> dict:
    """Net force on each node from bar forces, loads and reactions."""
    net = {n.id: [0.0, 0.0] for n in model.nodes}
    for mem in model.members:
        c, s, _ = _direction(model, mem)
        N = result.axial[mem.id]
        # a bar in tension pulls each end toward the other
        net[mem.node_a][0] += N * c
        net[mem.node_a][1] += N * s
        net[mem.node_b][0] -= N * c
        net[mem.node_b][1] -= N * s
    for load in model.loads:
        fx, fy = load.components
        net[load.node][0] += fx
        net[load.node][1] += fy
    for nid, (rx, ry) in result.reactions.items():
        net[nid][0] += rx
        net[nid][1] += ry
    return net


def equilibrium_residual(model: TrussModel, result: SolveResult) -> float:
    net = node_balance(model, result)
    return max((math.hypot(fx, fy) for fx, fy in net.values()), default=0.0)
