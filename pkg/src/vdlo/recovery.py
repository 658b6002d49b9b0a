"""Least-squares smoothing of Gauss-point stresses onto mesh nodes.

The sampling operator A has one row per Gauss point holding the element's
shape-function values there (1/3, 1/3, 1/3 for a CST centroid).  Nodal values
solve the normal equations (A^T A) s_N = A^T s_G, one factorization shared by
all three stress components.  Constant and linear fields are reproduced
exactly because they lie in the CST interpolation space.

Note that A's entries depend only on mesh connectivity.  Perfectly regular
triangulations (uniform diagonals, union-jack refinements) make A^T A
structurally rank-deficient; irregular triangulations are full rank.  The
builder verifies invertibility and raises instead of returning garbage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, locate_element


class RecoveryError(RuntimeError):
    pass


@dataclass
class SmoothingSystem:
    """Factorized normal equations mapping Gauss-point stresses to nodes."""

    n: int
    g: int
    elements: np.ndarray
    normal_matrix: sp.csr_matrix
    _lu: spla.SuperLU = field(repr=False)

    def rhs(self, sigma_g: np.ndarray) -> np.ndarray:
        """A^T sigma_G, one column per stress component."""
        sigma_g = np.asarray(sigma_g, dtype=float)
        if sigma_g.shape[0] != self.g:
            raise RecoveryError(f"expected {self.g} Gauss-point rows, got {sigma_g.shape[0]}")
        cols = sigma_g.reshape(self.g, -1)
        out = np.zeros((self.n, cols.shape[1]))
        for k in range(3):
            np.add.at(out, self.elements[:, k], cols / 3.0)
        return out


def sampling_matrix(mesh: Mesh) -> sp.csr_matrix:
    """The (g x n) Gauss-point sampling operator A itself.

    Row r holds element r's shape-function values at its Gauss point, i.e.
    1/3 on each of its three nodes for a CST centroid.
    """
    g = len(mesh.elements)
    rows = np.repeat(np.arange(g), 3)
    cols = mesh.elements.ravel()
    vals = np.full(3 * g, 1.0 / 3.0)
    return sp.coo_matrix((vals, (rows, cols)), shape=(g, len(mesh.nodes))).tocsr()


def build_smoothing_system(mesh: Mesh) -> SmoothingSystem:
    """Assemble and factorize (A^T A) element by element."""
    n = len(mesh.nodes)
    g = len(mesh.elements)
    covered = np.zeros(n, dtype=bool)
    covered[mesh.elements.ravel()] = True
    if not covered.all():
        node = int(np.nonzero(~covered)[0][0])
        raise RecoveryError(f"node {node} belongs to no element; smoothing system is singular")

    # Each Gauss row is (1/3, 1/3, 1/3) on its element's nodes, so the element
    # contribution to A^T A is 1/9 on every node pair of the element.
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    vals = np.full(rows.shape, 1.0 / 9.0)
    ata = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()

    try:
        lu = spla.splu(ata)
    except RuntimeError as exc:
        raise RecoveryError(f"normal matrix is singular: {exc}") from exc
    # Regular (structured) meshes can be rank-deficient without an exact zero
    # pivot; verify with a deterministic probe solve.
    probe = np.cos(np.arange(n) * 0.7313) + 0.1
    x = lu.solve(probe)
    if not np.all(np.isfinite(x)) or \
            np.linalg.norm(ata @ x - probe) > 1e-8 * np.linalg.norm(probe):
        raise RecoveryError(
            "normal matrix is numerically singular (structured meshes can be "
            "rank-deficient; perturb the triangulation)")
    return SmoothingSystem(n=n, g=g, elements=mesh.elements,
                           normal_matrix=ata.tocsr(), _lu=lu)


def recover_nodal_stresses(system: SmoothingSystem, sigma_g: np.ndarray) -> np.ndarray:
    """Solve the normal equations for each stress component.

    Returns the (n, 3) nodal field; raises if the residual contract
    ||A^T A s_N - A^T s_G|| <= 1e-10 ||A^T s_G|| is violated.
    """
    rhs = system.rhs(sigma_g)
    out = np.empty_like(rhs)
    for k in range(rhs.shape[1]):
        out[:, k] = system._lu.solve(rhs[:, k])
    resid = np.linalg.norm(system.normal_matrix @ out - rhs)
    scale = np.linalg.norm(rhs)
    if not np.all(np.isfinite(out)) or resid > 1e-10 * scale + 1e-300:
        raise RecoveryError(f"normal-equation residual {resid:.3e} exceeds 1e-10 * {scale:.3e}")
    return out


def stress_at_point(mesh: Mesh, sigma_n: np.ndarray, p) -> np.ndarray:
    """Barycentric interpolation of the nodal stress field at point ``p``."""
    e, bary = locate_element(mesh, p, with_bary=True)
    if e is None:
        raise RecoveryError(f"point {tuple(float(x) for x in p)} is outside the domain")
    tri = mesh.elements[e]
    return bary[0] * sigma_n[tri[0]] + bary[1] * sigma_n[tri[1]] + bary[2] * sigma_n[tri[2]]


def save_nodal_stresses(sigma_n: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        json.dump(np.asarray(sigma_n, dtype=float).tolist(), fh)


def load_nodal_stresses(path, n_nodes: int | None = None) -> np.ndarray:
    """Read a nodal stress field (JSON array of per-node [sx, sy, txy]).

    This is also the entry point for snapshots produced by external tools
    (elastoplastic, viscoelastic, ...), bypassing the built-in FEM.
    """
    with open(path) as fh:
        data = json.load(fh)
    arr = np.array(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise RecoveryError("nodal stress file must be an array of [sx, sy, txy] rows")
    if n_nodes is not None and arr.shape[0] != n_nodes:
        raise RecoveryError(f"stress field has {arr.shape[0]} rows, mesh has {n_nodes} nodes")
    if not np.all(np.isfinite(arr)):
        raise RecoveryError("stress field contains non-finite entries")
    return arr
