"""Built-in benchmark scenarios: meshes, load cases and run configs.

Three classic setups are shipped ready to run:

  * ``prandtl``   - strip footing on a deep weightless stratum (plane stress);
                    the bearing-capacity factor for a cohesive soil is 2 + pi.
  * ``inclusion`` - uniaxially compressed square of matrix material with
                    stiff/strong circular inclusions (plane stress),
                    displacement-driven.
  * ``kalthoff``  - edge-cracked half plate under impact shear loading
                    (plane strain), time stepping with snapshots.

The triangulations are Delaunay meshes of jittered grids.  The jitter matters:
perfectly regular triangulations make the stress-smoothing normal matrix
structurally singular, and it also diversifies candidate directions.  For the
footing the jitter is mirrored about the centerline so the mesh stays exactly
symmetric.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np
from scipy.spatial import Delaunay

from .mesh import Material, Mesh
from .fem import LoadCase, edge_traction_forces


def _delaunay_mesh(points: np.ndarray, tag_fn, materials: dict, mode: str,
                   material_fn=None) -> Mesh:
    tri = Delaunay(points)
    elements = np.array(sorted(tuple(int(v) for v in s) for s in tri.simplices),
                        dtype=np.int64)
    counts: dict[tuple, int] = {}
    for t in elements:
        for k in range(3):
            key = (int(t[k]), int(t[(k + 1) % 3]))
            key = key if key[0] < key[1] else (key[1], key[0])
            counts[key] = counts.get(key, 0) + 1
    boundary = []
    for key, cnt in sorted(counts.items()):
        if cnt == 1:
            mid = 0.5 * (points[key[0]] + points[key[1]])
            boundary.append((key, tag_fn(mid)))
    if material_fn is None:
        elem_mat = np.zeros(len(elements), dtype=np.int64)
    else:
        cent = points[elements].mean(axis=1)
        elem_mat = np.array([material_fn(c) for c in cent], dtype=np.int64)
    return Mesh(nodes=points, elements=elements, element_material=elem_mat,
                boundary_edges=boundary, mode=mode, materials=materials)


def _grid_points(x0, x1, y0, y1, nx, ny, jitter, seed, mirror_x=None):
    """Grid points with deterministic interior jitter.

    Boundary nodes stay on the rectangle.  With ``mirror_x`` set, the jitter
    field is mirrored about that vertical line so the point set (and hence
    its Delaunay triangulation) is exactly symmetric.
    """
    rng = np.random.default_rng(seed)
    dx = (x1 - x0) / nx
    dy = (y1 - y0) / ny
    amp = jitter * min(dx, dy)
    pts = np.empty(((nx + 1) * (ny + 1), 2))
    jit = rng.uniform(-amp, amp, size=(ny + 1, nx + 1, 2))
    if mirror_x is not None:
        for j in range(ny + 1):
            for i in range(nx + 1):
                x = x0 + i * dx
                xm = 2 * mirror_x - x
                im = round((xm - x0) / dx)
                if 0 <= im <= nx:
                    if i > im:
                        jit[j, i, 0] = -jit[j, im, 0]
                        jit[j, i, 1] = jit[j, im, 1]
                    elif i == im:
                        jit[j, i, 0] = 0.0
    k = 0
    for j in range(ny + 1):
        for i in range(nx + 1):
            x = x0 + i * dx
            y = y0 + j * dy
            if 0 < i < nx and 0 < j < ny:
                x += jit[j, i, 0]
                y += jit[j, i, 1]
            pts[k] = (x, y)
            k += 1
    return pts


# -- Prandtl strip footing ----------------------------------------------------

def build_prandtl(E: float = 30e6, nx: int = 50, ny: int = 22, seed: int = 20240601):
    """Strip footing of width 1.2 m on a 10 m x 4.4 m weightless stratum.

    Footing pressure equals the cohesion, so the factor of safety equals the
    bearing-capacity factor (2 + pi for the exact mechanism).
    """
    W, H = 10.0, 4.4
    half_b = 0.6
    q = 1000.0           # footing pressure, Pa
    c = 1000.0           # cohesion, Pa
    pts = _grid_points(-W / 2, W / 2, -H, 0.0, nx, ny, jitter=0.25, seed=seed,
                       mirror_x=0.0)
    tol = 1e-9 * math.hypot(W, H)

    def tag(mid):
        if abs(mid[1]) <= tol:
            return "loaded" if abs(mid[0]) <= half_b + tol else "free"
        if abs(mid[1] + H) <= tol:
            return "fixed"
        return "roller_n"

    materials = {0: Material(id=0, E=E, nu=0.3, rho=0.0, c=c, phi=0.0)}
    mesh = _delaunay_mesh(pts, tag, materials, "plane_stress")

    loaded_edges = [e for e, t in mesh.boundary_edges if t == "loaded"]
    forces = edge_traction_forces(mesh, loaded_edges, (0.0, -q), thickness=1.0)
    prescribed = {}
    for k, (x, y) in enumerate(mesh.nodes):
        if abs(y + H) <= tol:
            prescribed[(k, 0)] = 0.0
            prescribed[(k, 1)] = 0.0
        elif abs(abs(x) - W / 2) <= tol:
            prescribed[(k, 0)] = 0.0
    load = LoadCase(nodal_forces=forces, prescribed=prescribed, thickness=1.0)
    vdlo_opts = {"max_length": 0.65, "threshold": 1e-6}
    meta = {"q": q, "c": c, "footing_width": 2 * half_b, "bearing_factor": 2 + math.pi}
    return mesh, load, vdlo_opts, meta


# -- matrix-inclusion compression ----------------------------------------------

_INCLUSION_CENTERS = [(0.27, 0.30), (0.72, 0.24), (0.50, 0.55),
                      (0.24, 0.76), (0.76, 0.72)]


def build_inclusion(E_incl: float = 90e9, n: int = 26, seed: int = 20240602,
                    d: float = 1e-4):
    """1 m x 1 m matrix with five circular inclusions (area 0.008 m^2 each),
    compressed by prescribed top/bottom displacements of total ``d``."""
    r = math.sqrt(0.008 / math.pi)
    pts = _grid_points(0.0, 1.0, 0.0, 1.0, n, n, jitter=0.25, seed=seed)
    tol = 1e-9 * math.sqrt(2.0)

    def tag(mid):
        if abs(mid[1]) <= tol or abs(mid[1] - 1.0) <= tol:
            return "loaded"
        return "free"

    def material_of(c):
        for cx, cy in _INCLUSION_CENTERS:
            if (c[0] - cx) ** 2 + (c[1] - cy) ** 2 <= r * r:
                return 1
        return 0

    phi = math.radians(10.0)
    materials = {0: Material(id=0, E=30e9, nu=0.2, rho=0.0, c=3e6, phi=phi),
                 1: Material(id=1, E=E_incl, nu=0.2, rho=0.0, c=30e6, phi=phi)}
    mesh = _delaunay_mesh(pts, tag, materials, "plane_stress", material_fn=material_of)

    prescribed = {}
    for k, (x, y) in enumerate(mesh.nodes):
        if abs(y) <= tol:
            prescribed[(k, 1)] = 0.0
        elif abs(y - 1.0) <= tol:
            prescribed[(k, 1)] = -d
    corner = int(np.argmin(np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])))
    prescribed[(corner, 0)] = 0.0
    load = LoadCase(prescribed=prescribed, thickness=1.0)
    vdlo_opts = {"max_length": 0.15, "threshold": 1e-6}
    meta = {"d": d, "inclusion_radius": r, "centers": _INCLUSION_CENTERS}
    return mesh, load, vdlo_opts, meta


# -- Kalthoff impact (mode II) ---------------------------------------------------

def build_kalthoff(n: int = 28, impact_velocity: float = 33.0, seed: int = 20240603,
                   phi_deg: float = 10.0):
    """Half model of the edge-cracked impact specimen (plane strain).

    0.1 m x 0.1 m half plate, pre-crack from (0, 0.025) to (0.05, 0.025)
    represented as two coincident boundary polylines (duplicated nodes); the
    projectile face x=0, y <= 0.025 carries a prescribed horizontal velocity;
    y=0 is the symmetry plane.
    """
    L = 0.1
    y_crack = 0.025
    x_tip = 0.05
    for v in (n * y_crack / L, n * x_tip / L):
        if abs(v - round(v)) > 1e-9:
            raise ValueError("n must place the crack line and tip on the grid")
    pts = _grid_points(0.0, L, 0.0, L, n, n, jitter=0.22, seed=seed)
    dx = L / n
    j_crack = round(y_crack / dx)
    # Crack row nodes stay exactly on the crack line so the slit is straight;
    # interior ones keep a small x jitter.
    rng = np.random.default_rng(seed + 1)
    for j in (j_crack,):
        for i in range(n + 1):
            k = j * (n + 1) + i
            x = i * dx
            if 0 < i < n:
                x += rng.uniform(-0.2 * dx, 0.2 * dx) if abs(i * dx - x_tip) > 1e-12 else 0.0
            pts[k] = (x, j * dx)

    tri = Delaunay(pts)
    elements = [tuple(int(v) for v in s) for s in tri.simplices]

    # The crack line must be an unbroken chain of edges before splitting.
    row = [(i, j_crack * (n + 1) + i) for i in range(n + 1)]
    crack_nodes = [k for i, k in row if pts[k][0] <= x_tip + 1e-12]
    edge_set = set()
    for t in elements:
        for kk in range(3):
            a, b = t[kk], t[(kk + 1) % 3]
            edge_set.add((min(a, b), max(a, b)))
    for u, v in zip(crack_nodes[:-1], crack_nodes[1:]):
        if (min(u, v), max(u, v)) not in edge_set:
            raise RuntimeError("jitter broke the crack-line edges; lower the amplitude")

    # Split: duplicate every crack node left of the tip; elements below the
    # line swap to the twin, producing two coincident boundary polylines.
    to_split = [k for k in crack_nodes if pts[k][0] < x_tip - 1e-12]
    twins = {}
    new_pts = [pts]
    next_id = len(pts)
    for k in to_split:
        twins[k] = next_id
        new_pts.append(pts[k][None, :].copy())
        next_id += 1
    pts2 = np.vstack(new_pts)
    elements2 = []
    for t in elements:
        cy = (pts[t[0], 1] + pts[t[1], 1] + pts[t[2], 1]) / 3.0
        if cy < y_crack and any(v in twins for v in t):
            t = tuple(twins.get(v, v) for v in t)
        elements2.append(t)
    elements2 = np.array(sorted(elements2), dtype=np.int64)

    counts: dict[tuple, int] = {}
    for t in elements2:
        for kk in range(3):
            key = (int(t[kk]), int(t[(kk + 1) % 3]))
            key = key if key[0] < key[1] else (key[1], key[0])
            counts[key] = counts.get(key, 0) + 1
    tolg = 1e-9 * L * math.sqrt(2)

    def tag(mid):
        if abs(mid[1]) <= tolg:
            return "roller_n"                      # symmetry plane
        if abs(mid[0]) <= tolg and mid[1] <= y_crack + tolg:
            return "loaded"                        # projectile face
        return "free"

    boundary = []
    for key, cnt in sorted(counts.items()):
        if cnt == 1:
            mid = 0.5 * (pts2[key[0]] + pts2[key[1]])
            boundary.append((key, tag(mid)))

    phi = math.radians(phi_deg)
    materials = {0: Material(id=0, E=190e9, nu=0.3, rho=8000.0, c=1.0e9, phi=phi)}
    mesh = Mesh(nodes=pts2, elements=elements2,
                element_material=np.zeros(len(elements2), dtype=np.int64),
                boundary_edges=boundary, mode="plane_strain", materials=materials)

    impact_nodes = sorted({int(v) for (e, t) in mesh.boundary_edges if t == "loaded"
                           for v in e})
    velocity = {(k, 0): impact_velocity for k in impact_nodes}
    prescribed = {}
    for k, (x, y) in enumerate(mesh.nodes):
        if abs(y) <= tolg:
            prescribed[(k, 1)] = 0.0
    load = LoadCase(prescribed=prescribed, velocity_bc=velocity, thickness=1.0)
    fem_cfg = {"dt": 0.5e-6, "n_steps": 80, "snapshot_every": 4}
    vdlo_opts = {"max_length": 3.2 * dx, "threshold": 1e-6}
    meta = {"impact_velocity": impact_velocity, "crack_tip": (x_tip, y_crack),
            "twins": twins}
    return mesh, load, fem_cfg, vdlo_opts, meta


# -- config writing --------------------------------------------------------------

def write_scenario(name: str, outdir: str, **kwargs) -> dict:
    """Write mesh.json / load.json / config.json for a named scenario."""
    from .mesh import save_mesh
    from .fem import load_case_to_dict

    os.makedirs(outdir, exist_ok=True)
    if name == "prandtl":
        mesh, load, vdlo_opts, meta = build_prandtl(**kwargs)
        config = {"mesh": "mesh.json", "load": "load.json", "analysis": "static",
                  "vdlo": vdlo_opts,
                  "render": {"stress_ranges": [[-15000, 5000], [-3500, 300], [-1500, 1500]],
                             "resolution": [250, 110]}}
    elif name == "inclusion":
        mesh, load, vdlo_opts, meta = build_inclusion(**kwargs)
        config = {"mesh": "mesh.json", "load": "load.json", "analysis": "static",
                  "vdlo": vdlo_opts,
                  "render": {"stress_ranges": [[-6e5, 6e5], [-4e6, -1e5], [-6e5, 6.5e5]],
                             "resolution": [200, 200]}}
    elif name == "kalthoff":
        mesh, load, fem_cfg, vdlo_opts, meta = build_kalthoff(**kwargs)
        config = {"mesh": "mesh.json", "load": "load.json", "analysis": "pseudostatic",
                  "fem": fem_cfg, "vdlo": vdlo_opts,
                  "render": {"stress_ranges": [[-8e9, 5e9], [-2e9, 2e9], [-3e9, 0.15e9]],
                             "resolution": [200, 200]}}
    else:
        raise ValueError(f"unknown scenario {name!r}")
    save_mesh(mesh, os.path.join(outdir, "mesh.json"))
    with open(os.path.join(outdir, "load.json"), "w") as fh:
        json.dump(load_case_to_dict(load), fh, indent=1)
    with open(os.path.join(outdir, "config.json"), "w") as fh:
        json.dump(config, fh, indent=1)
    return config
