"""Linear-elastic plane FEM on constant-strain triangles.

Produces the Gauss-point stress snapshots the layout optimization consumes:
static solves for monotonic loading, and Newmark time stepping for impact
(pseudostatic) scenarios.  One Gauss point per element (the centroid), a
consistent mass matrix, no damping.  Prescribed displacements are imposed by
row/column elimination so the snapshot stresses carry no penalty artifacts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, Material, MeshError


class FemError(RuntimeError):
    pass


class SingularSystemError(FemError):
    """The constrained stiffness (or effective stiffness) is singular."""


_AXES = {"x": 0, "y": 1}


@dataclass
class LoadCase:
    """External actions for one analysis.

    Attributes:
        nodal_forces: node id -> (Fx, Fy) in N.
        prescribed: (node id, axis) -> displacement value in m (axis 0=x, 1=y).
        velocity_bc: (node id, axis) -> prescribed velocity in m/s (dynamic
            runs only; integrated to displacements step by step).
        body_force: acceleration vector (m/s^2) applied through the density.
        thickness: out-of-plane thickness in m.
    """

    nodal_forces: dict = field(default_factory=dict)
    prescribed: dict = field(default_factory=dict)
    velocity_bc: dict = field(default_factory=dict)
    body_force: tuple = (0.0, 0.0)
    thickness: float = 1.0

    def validate(self, mesh: Mesh) -> None:
        n = len(mesh.nodes)
        if not self.thickness > 0:
            raise MeshError(f"thickness must be > 0, got {self.thickness}")
        for node in self.nodal_forces:
            if not 0 <= node < n:
                raise MeshError(f"force on out-of-range node {node}")
        for (node, axis) in list(self.prescribed) + list(self.velocity_bc):
            if not 0 <= node < n:
                raise MeshError(f"BC on out-of-range node {node}")
            if axis not in (0, 1):
                raise MeshError(f"BC axis must be 0 or 1, got {axis}")


def load_case_from_dict(data: dict) -> LoadCase:
    forces = {}
    for node, fx, fy in data.get("forces", []):
        forces[int(node)] = (float(fx), float(fy))
    prescribed = {}
    for entry in data.get("fixed", []):
        node, axes = entry[0], entry[1]
        value = float(entry[2]) if len(entry) > 2 else 0.0
        for ax in axes:
            prescribed[(int(node), _AXES[ax])] = value
    velocity = {}
    for entry in data.get("velocity_bc", []):
        node, axes, value = entry[0], entry[1], float(entry[2])
        for ax in axes:
            velocity[(int(node), _AXES[ax])] = value
    gravity = tuple(float(g) for g in data.get("gravity", (0.0, 0.0)))
    return LoadCase(nodal_forces=forces, prescribed=prescribed, velocity_bc=velocity,
                    body_force=gravity, thickness=float(data.get("thickness", 1.0)))


def load_case_to_dict(load: LoadCase) -> dict:
    ax_name = {0: "x", 1: "y"}
    return {
        "forces": [[int(n), fx, fy] for n, (fx, fy) in sorted(load.nodal_forces.items())],
        "fixed": [[int(n), ax_name[a], v] for (n, a), v in sorted(load.prescribed.items())],
        "velocity_bc": [[int(n), ax_name[a], v] for (n, a), v in sorted(load.velocity_bc.items())],
        "gravity": list(load.body_force),
        "thickness": load.thickness,
    }


def load_load_case(path) -> LoadCase:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshError(f"cannot parse load case {path}: {exc}") from exc
    return load_case_from_dict(data)


@dataclass
class FemState:
    """Nodal kinematics at one instant (2 dofs per node, interleaved x/y)."""

    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    t: float = 0.0

    @classmethod
    def zero(cls, n_nodes: int, t: float = 0.0) -> "FemState":
        z = np.zeros(2 * n_nodes)
        return cls(u=z.copy(), v=z.copy(), a=z.copy(), t=t)


# -- element level ------------------------------------------------------------

def elastic_matrix(material: Material, mode: str) -> np.ndarray:
    """Plane stress / plane strain constitutive matrix (Voigt 3x3)."""
    E, nu = material.E, material.nu
    if mode == "plane_stress":
        f = E / (1.0 - nu * nu)
        return f * np.array([[1.0, nu, 0.0],
                             [nu, 1.0, 0.0],
                             [0.0, 0.0, 0.5 * (1.0 - nu)]])
    f = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return f * np.array([[1.0 - nu, nu, 0.0],
                         [nu, 1.0 - nu, 0.0],
                         [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)]])


def cst_b_matrix(coords: np.ndarray):
    """Strain-displacement matrix (3x6) and area of one CST."""
    (x0, y0), (x1, y1), (x2, y2) = coords
    area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    if area2 <= 0:
        raise FemError("degenerate or clockwise element in B-matrix computation")
    b = np.array([y1 - y2, y2 - y0, y0 - y1])
    c = np.array([x2 - x1, x0 - x2, x1 - x0])
    B = np.zeros((3, 6))
    B[0, 0::2] = b
    B[1, 1::2] = c
    B[2, 0::2] = c
    B[2, 1::2] = b
    return B / area2, 0.5 * area2


def element_stiffness(coords: np.ndarray, material: Material, thickness: float,
                      mode: str) -> np.ndarray:
    """6x6 CST stiffness, symmetric PSD with the 3 rigid-body modes in its kernel."""
    B, area = cst_b_matrix(coords)
    D = elastic_matrix(material, mode)
    return (B.T @ D @ B) * (area * thickness)


def element_mass(coords: np.ndarray, rho: float, thickness: float) -> np.ndarray:
    """6x6 consistent CST mass matrix."""
    (x0, y0), (x1, y1), (x2, y2) = coords
    area = 0.5 * abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
    m = rho * area * thickness / 12.0
    M = np.zeros((6, 6))
    for i in range(3):
        for j in range(3):
            v = 2.0 * m if i == j else m
            M[2 * i, 2 * j] = v
            M[2 * i + 1, 2 * j + 1] = v
    return M


# -- assembly -----------------------------------------------------------------

def _element_dofs(tri) -> np.ndarray:
    return np.array([2 * tri[0], 2 * tri[0] + 1, 2 * tri[1], 2 * tri[1] + 1,
                     2 * tri[2], 2 * tri[2] + 1])


def assemble_stiffness(mesh: Mesh, thickness: float) -> sp.csr_matrix:
    ndof = 2 * len(mesh.nodes)
    rows, cols, vals = [], [], []
    for e, tri in enumerate(mesh.elements):
        K = element_stiffness(mesh.nodes[tri], mesh.material_of(e), thickness, mesh.mode)
        dofs = _element_dofs(tri)
        rows.append(np.repeat(dofs, 6))
        cols.append(np.tile(dofs, 6))
        vals.append(K.ravel())
    # COO->CSR sums duplicates in a fixed order, so assembly is deterministic.
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ndof, ndof)).tocsr()
    return K


def assemble_mass(mesh: Mesh, thickness: float) -> sp.csr_matrix:
    ndof = 2 * len(mesh.nodes)
    rows, cols, vals = [], [], []
    for e, tri in enumerate(mesh.elements):
        M = element_mass(mesh.nodes[tri], mesh.material_of(e).rho, thickness)
        dofs = _element_dofs(tri)
        rows.append(np.repeat(dofs, 6))
        cols.append(np.tile(dofs, 6))
        vals.append(M.ravel())
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(ndof, ndof)).tocsr()


def assemble_load_vector(mesh: Mesh, load: LoadCase) -> np.ndarray:
    f = np.zeros(2 * len(mesh.nodes))
    for node, (fx, fy) in load.nodal_forces.items():
        f[2 * node] += fx
        f[2 * node + 1] += fy
    bx, by = load.body_force
    if bx != 0.0 or by != 0.0:
        for e, tri in enumerate(mesh.elements):
            w = mesh.material_of(e).rho * mesh.areas[e] * load.thickness / 3.0
            for k in tri:
                f[2 * k] += w * bx
                f[2 * k + 1] += w * by
    return f


def edge_traction_forces(mesh: Mesh, edges, traction, thickness: float) -> dict:
    """Consistent nodal forces for a uniform traction on a chain of edges.

    Each edge contributes half its length times the traction to both end
    nodes.  Returns a node -> (Fx, Fy) map suitable for LoadCase.nodal_forces.
    """
    tx, ty = traction
    forces: dict = {}
    for (i, j) in edges:
        length = float(np.linalg.norm(mesh.nodes[j] - mesh.nodes[i]))
        half = 0.5 * length * thickness
        for k in (i, j):
            fx, fy = forces.get(int(k), (0.0, 0.0))
            forces[int(k)] = (fx + half * tx, fy + half * ty)
    return forces


# -- solving ------------------------------------------------------------------

def _partition(load: LoadCase, ndof: int):
    pres_idx = []
    pres_val = []
    for (node, axis), value in sorted(load.prescribed.items()):
        pres_idx.append(2 * node + axis)
        pres_val.append(value)
    for (node, axis), _ in sorted(load.velocity_bc.items()):
        dof = 2 * node + axis
        if dof not in pres_idx:
            pres_idx.append(dof)
            pres_val.append(0.0)  # starting displacement; advanced by the integrator
    pres_idx = np.array(pres_idx, dtype=np.int64)
    mask = np.zeros(ndof, dtype=bool)
    mask[pres_idx] = True
    free = np.nonzero(~mask)[0]
    return free, pres_idx, np.array(pres_val)


def _factor(A: sp.csr_matrix):
    try:
        return spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}") from exc


def solve_static(mesh: Mesh, load: LoadCase) -> FemState:
    """Static equilibrium under the load case.

    Raises SingularSystemError when the boundary conditions leave rigid-body
    modes unconstrained.  The returned state has zero velocity/acceleration.
    """
    load.validate(mesh)
    ndof = 2 * len(mesh.nodes)
    K = assemble_stiffness(mesh, load.thickness)
    f = assemble_load_vector(mesh, load)
    free, pres_idx, pres_val = _partition(load, ndof)

    u = np.zeros(ndof)
    u[pres_idx] = pres_val
    rhs = f[free]
    if len(pres_idx):
        rhs = rhs - K[np.ix_(free, pres_idx)] @ pres_val
    Kff = K[np.ix_(free, free)].tocsc()
    lu = _factor(Kff)
    uf = lu.solve(rhs)
    if not np.all(np.isfinite(uf)):
        raise SingularSystemError("static solve produced non-finite displacements")
    resid = np.linalg.norm(Kff @ uf - rhs)
    scale = np.linalg.norm(rhs)
    if resid > 1e-8 * scale + 1e-30:
        raise SingularSystemError(
            f"equilibrium residual {resid:.3e} exceeds contract (1e-8 * {scale:.3e})")
    u[free] = uf
    return FemState(u=u, v=np.zeros(ndof), a=np.zeros(ndof), t=0.0)


def gauss_point_stresses(mesh: Mesh, state: FemState) -> np.ndarray:
    """Per-element stress [sx, sy, txy] at the single (centroid) Gauss point."""
    if len(state.u) != 2 * len(mesh.nodes):
        raise FemError("state size does not match mesh")
    out = np.zeros((len(mesh.elements), 3))
    for e, tri in enumerate(mesh.elements):
        B, _ = cst_b_matrix(mesh.nodes[tri])
        D = elastic_matrix(mesh.material_of(e), mesh.mode)
        out[e] = D @ B @ state.u[_element_dofs(tri)]
    return out


class NewmarkIntegrator:
    """Implicit Newmark stepping with fixed step size and constant BCs.

    The effective stiffness is factorized once and reused for every step;
    prescribed displacement and velocity BCs are imposed by elimination.
    """

    def __init__(self, mesh: Mesh, load: LoadCase, dt: float,
                 alpha: float = 0.25, delta: float = 0.5):
        if dt <= 0:
            raise ValueError("dt must be positive")
        load.validate(mesh)
        self.mesh = mesh
        self.load = load
        self.dt = float(dt)
        self.alpha = float(alpha)
        self.delta = float(delta)
        ndof = 2 * len(mesh.nodes)
        self.K = assemble_stiffness(mesh, load.thickness)
        self.M = assemble_mass(mesh, load.thickness)
        self.f = assemble_load_vector(mesh, load)
        self.free, self.pres_idx, self.pres_val = _partition(load, ndof)
        self.vel_dofs = np.array(sorted(2 * n + ax for (n, ax) in load.velocity_bc),
                                 dtype=np.int64)
        self.vel_vals = np.array([load.velocity_bc[k] for k in
                                  sorted(load.velocity_bc)], dtype=float)
        self.a0 = 1.0 / (self.alpha * dt * dt)
        self.a2 = 1.0 / (self.alpha * dt)
        self.a3 = 1.0 / (2.0 * self.alpha) - 1.0
        Keff = (self.K + self.a0 * self.M).tocsr()
        self.Keff_fp = Keff[np.ix_(self.free, self.pres_idx)] if len(self.pres_idx) else None
        self.lu = _factor(Keff[np.ix_(self.free, self.free)])

    def initial_state(self, u0: np.ndarray | None = None,
                      v0: np.ndarray | None = None) -> FemState:
        """State at t=0 with BC velocities applied and consistent acceleration."""
        state = FemState.zero(len(self.mesh.nodes))
        if u0 is not None:
            state.u[:] = u0
        if v0 is not None:
            state.v[:] = v0
        state.u[self.pres_idx] = self.pres_val
        state.v[self.vel_dofs] = self.vel_vals
        # a(0) = M^{-1} (f - K u0) on the free dofs.
        rhs = (self.f - self.K @ state.u)[self.free]
        Mff = self.M[np.ix_(self.free, self.free)].tocsc()
        a_free = _factor(Mff).solve(rhs)
        state.a[self.free] = a_free
        return state

    def step(self, state: FemState) -> FemState:
        dt = self.dt
        u, v, a = state.u, state.v, state.a
        u_next = np.zeros_like(u)
        u_next[self.pres_idx] = u[self.pres_idx]
        if len(self.vel_dofs):
            u_next[self.vel_dofs] = u[self.vel_dofs] + self.vel_vals * dt

        rhs_full = self.f + self.M @ (self.a0 * u + self.a2 * v + self.a3 * a)
        rhs = rhs_full[self.free]
        if self.Keff_fp is not None:
            rhs = rhs - self.Keff_fp @ u_next[self.pres_idx]
        uf = self.lu.solve(rhs)
        if not np.all(np.isfinite(uf)):
            raise SingularSystemError("Newmark step produced non-finite displacements")
        u_next[self.free] = uf

        a_next = self.a0 * (u_next - u) - self.a2 * v - self.a3 * a
        v_next = v + dt * ((1.0 - self.delta) * a + self.delta * a_next)
        v_next[self.vel_dofs] = self.vel_vals
        a_next[self.vel_dofs] = 0.0
        return FemState(u=u_next, v=v_next, a=a_next, t=state.t + dt)


def newmark_step(mesh: Mesh, state: FemState, dt: float, alpha: float, delta: float,
                 load: LoadCase) -> FemState:
    """Single Newmark update; see NewmarkIntegrator for stepping loops."""
    return NewmarkIntegrator(mesh, load, dt, alpha, delta).step(state)
