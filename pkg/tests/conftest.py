"""Shared fixtures: small hand-authored meshes and helpers."""

import math

import numpy as np
import pytest

from vdlo.mesh import Material, Mesh


def default_material(**kw):
    base = dict(id=0, E=1e6, nu=0.0, rho=1000.0, c=100.0, phi=0.0)
    base.update(kw)
    return Material(**base)


def square_mesh(c=100.0, phi=0.0, E=1e6, nu=0.0, tags=None, mode="plane_stress"):
    """Unit square split along the (0,0)-(1,1) diagonal."""
    tags = tags or {"bottom": "fixed", "right": "free", "top": "loaded", "left": "free"}
    mats = {0: default_material(E=E, nu=nu, c=c, phi=phi)}
    return Mesh(nodes=np.array([[0., 0.], [1., 0.], [1., 1.], [0., 1.]]),
                elements=np.array([[0, 1, 2], [0, 2, 3]]),
                element_material=np.zeros(2, dtype=int),
                boundary_edges=[((0, 1), tags["bottom"]), ((1, 2), tags["right"]),
                                ((2, 3), tags["top"]), ((0, 3), tags["left"])],
                mode=mode, materials=mats)


def star_mesh(**mat_kw):
    """Square with a center node, four elements; spokes are the inner pairs."""
    mats = {0: default_material(**mat_kw)}
    return Mesh(nodes=np.array([[0., 0.], [1., 0.], [1., 1.], [0., 1.], [0.5, 0.5]]),
                elements=np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [0, 4, 3]]),
                element_material=np.zeros(4, dtype=int),
                boundary_edges=[((0, 1), "fixed"), ((1, 2), "free"),
                                ((2, 3), "loaded"), ((0, 3), "free")],
                mode="plane_stress", materials=mats)


def strip_mesh(nx=4, ny=2, width=2.0, height=1.0, mat_split_x=None, c2=400.0):
    """Structured strip; optionally two materials split at x = mat_split_x."""
    xs = np.linspace(0, width, nx + 1)
    ys = np.linspace(0, height, ny + 1)
    nodes = np.array([[x, y] for y in ys for x in xs])
    idx = lambda i, j: j * (nx + 1) + i
    elements = []
    for j in range(ny):
        for i in range(nx):
            a, b, cc, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            elements += [[a, b, cc], [a, cc, d]]
    elements = np.array(elements)
    mats = {0: default_material()}
    if mat_split_x is not None:
        mats[1] = default_material(id=1, c=c2, phi=math.radians(20.0))
        cent = nodes[elements].mean(axis=1)
        emat = (cent[:, 0] > mat_split_x).astype(int)
    else:
        emat = np.zeros(len(elements), dtype=int)
    counts = {}
    for t in elements:
        for k in range(3):
            key = tuple(sorted((t[k], t[(k + 1) % 3])))
            counts[key] = counts.get(key, 0) + 1
    boundary = [(key, "free") for key, cnt in sorted(counts.items()) if cnt == 1]
    return Mesh(nodes=nodes, elements=elements, element_material=emat,
                boundary_edges=boundary, mode="plane_stress", materials=mats)


def jittered_mesh(nx=6, ny=5, seed=7, jitter=0.25, mode="plane_stress", **mat_kw):
    """Irregular Delaunay mesh of a jittered grid (full-rank smoothing)."""
    from vdlo.scenarios import _delaunay_mesh, _grid_points

    pts = _grid_points(0.0, 1.0 * nx / max(nx, ny), 0.0, 1.0 * ny / max(nx, ny),
                       nx, ny, jitter=jitter, seed=seed)
    mats = {0: default_material(**mat_kw)}
    return _delaunay_mesh(pts, lambda mid: "free", mats, mode)


def slit_mesh():
    """Small edge-cracked plate (doubled coincident boundary polylines)."""
    from vdlo.scenarios import build_kalthoff

    mesh, load, fem_cfg, vdlo_opts, meta = build_kalthoff(n=8, seed=3)
    return mesh, meta


@pytest.fixture
def square():
    return square_mesh()


@pytest.fixture
def star():
    return star_mesh()


@pytest.fixture
def jittered():
    return jittered_mesh()
