"""Triangle mesh ingestion, validation and geometric queries.

The mesh is the single geometric source of truth for the whole pipeline:
linear 3-node triangles (counter-clockwise), per-element material ids, and a
tagged boundary.  Slits (pre-cracks) are represented as two geometrically
coincident boundary polylines with opposite orientation, i.e. the nodes along
the slit are duplicated.

All queries are read-only once the mesh is built.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

BOUNDARY_TAGS = ("free", "fixed", "roller_n", "roller_t", "loaded")

# Relative geometric tolerance: multiplied by the bounding-box diagonal to get
# the absolute length tolerance used by containment/collinearity/intersection
# tests.
DEFAULT_REL_TOL = 1e-9


class MeshError(ValueError):
    """Raised for invalid mesh files or inconsistent mesh topology."""


@dataclass
class Material:
    """Isotropic elastic/Mohr-Coulomb material.

    Units are SI: E in Pa, rho in kg/m^3, cohesion c in Pa, friction angle
    phi in radians.
    """

    id: int
    E: float
    nu: float
    rho: float
    c: float
    phi: float

    def validate(self) -> None:
        if not self.E > 0:
            raise MeshError(f"material {self.id}: E must be > 0, got {self.E}")
        if not (0.0 <= self.nu < 0.5):
            raise MeshError(f"material {self.id}: nu must be in [0, 0.5), got {self.nu}")
        if self.c < 0:
            raise MeshError(f"material {self.id}: cohesion must be >= 0, got {self.c}")
        if not (0.0 <= self.phi < math.pi / 2):
            raise MeshError(f"material {self.id}: phi must be in [0, pi/2), got {self.phi}")
        if self.rho < 0:
            raise MeshError(f"material {self.id}: rho must be >= 0, got {self.rho}")

    def to_dict(self) -> dict:
        return {"id": self.id, "E": self.E, "nu": self.nu, "rho": self.rho,
                "c": self.c, "phi": self.phi}

    @classmethod
    def from_dict(cls, d: dict) -> "Material":
        return cls(id=int(d["id"]), E=float(d["E"]), nu=float(d["nu"]),
                   rho=float(d["rho"]), c=float(d["c"]), phi=float(d["phi"]))


class _Grid:
    """Uniform background grid bucketing element bounding boxes.

    Gives expected O(1) point-to-element candidate lookup; required because
    the work-coefficient integration samples many points per discontinuity.
    """

    def __init__(self, nodes: np.ndarray, elements: np.ndarray):
        tri = nodes[elements]                      # (m, 3, 2)
        self.lo = nodes.min(axis=0)
        self.hi = nodes.max(axis=0)
        span = np.maximum(self.hi - self.lo, 1e-300)
        m = len(elements)
        # Aim for ~1 element per cell, capped so the grid stays small.
        ncell = max(1, min(int(math.sqrt(m)) + 1, 512))
        self.nx = ncell
        self.ny = ncell
        self.dx = span[0] / self.nx
        self.dy = span[1] / self.ny
        elo = tri.min(axis=1)
        ehi = tri.max(axis=1)
        ix0 = np.clip(((elo[:, 0] - self.lo[0]) / self.dx).astype(int), 0, self.nx - 1)
        ix1 = np.clip(((ehi[:, 0] - self.lo[0]) / self.dx).astype(int), 0, self.nx - 1)
        iy0 = np.clip(((elo[:, 1] - self.lo[1]) / self.dy).astype(int), 0, self.ny - 1)
        iy1 = np.clip(((ehi[:, 1] - self.lo[1]) / self.dy).astype(int), 0, self.ny - 1)
        buckets: dict[int, list[int]] = {}
        for e in range(m):
            for iy in range(iy0[e], iy1[e] + 1):
                base = iy * self.nx
                for ix in range(ix0[e], ix1[e] + 1):
                    buckets.setdefault(base + ix, []).append(e)
        self.buckets = {k: np.array(v, dtype=np.int64) for k, v in buckets.items()}
        self._empty = np.empty(0, dtype=np.int64)

    def candidates(self, p) -> np.ndarray:
        ix = min(max(int((p[0] - self.lo[0]) / self.dx), 0), self.nx - 1)
        iy = min(max(int((p[1] - self.lo[1]) / self.dy), 0), self.ny - 1)
        return self.buckets.get(iy * self.nx + ix, self._empty)


@dataclass
class Mesh:
    """Validated triangle mesh with tagged boundary.

    Attributes:
        nodes: (n, 2) float array of coordinates in metres.
        elements: (m, 3) int array, counter-clockwise node triples.
        element_material: (m,) int array of material ids.
        boundary_edges: list of ((i, j), tag) pairs; each edge belongs to
            exactly one element.
        mode: "plane_stress" or "plane_strain".
        materials: material id -> Material.
        rel_tol: relative geometric tolerance (times bbox diagonal).
    """

    nodes: np.ndarray
    elements: np.ndarray
    element_material: np.ndarray
    boundary_edges: list
    mode: str
    materials: dict
    rel_tol: float = DEFAULT_REL_TOL

    # derived, filled by __post_init__
    tol: float = field(init=False, repr=False)
    areas: np.ndarray = field(init=False, repr=False)
    min_edge: float = field(init=False, repr=False)
    _grid: _Grid = field(init=False, repr=False)
    _bedge_arr: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        self.element_material = np.ascontiguousarray(self.element_material, dtype=np.int64)
        self._validate()
        self._grid = _Grid(self.nodes, self.elements)
        self._bedge_arr = np.array([e for e, _ in self.boundary_edges], dtype=np.int64) \
            if self.boundary_edges else np.empty((0, 2), dtype=np.int64)

    # -- validation ---------------------------------------------------------

    def _validate(self) -> None:
        n = len(self.nodes)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("node coordinates must be finite")
        if self.elements.ndim != 2 or self.elements.shape[1] != 3:
            raise MeshError("elements must be an (m, 3) array")
        if self.mode not in ("plane_stress", "plane_strain"):
            raise MeshError(f"unknown analysis mode {self.mode!r}")
        if len(self.element_material) != len(self.elements):
            raise MeshError("element_material length must match elements")

        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            bad = int(self.elements.max() if self.elements.max() >= n else self.elements.min())
            raise MeshError(f"element references out-of-range node index {bad}")

        diag = float(np.linalg.norm(self.nodes.max(axis=0) - self.nodes.min(axis=0)))
        if diag <= 0:
            raise MeshError("mesh has zero extent")
        self.tol = self.rel_tol * diag

        for mid in np.unique(self.element_material):
            if int(mid) not in self.materials:
                raise MeshError(f"element material id {int(mid)} not defined")
        for mat in self.materials.values():
            mat.validate()

        # Orientation fix-up: clockwise triangles are silently reordered.
        p = self.nodes[self.elements]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        area2 = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        flip = area2 < 0
        if np.any(flip):
            self.elements[flip] = self.elements[flip][:, [0, 2, 1]]
            area2 = np.abs(area2)
        self.areas = 0.5 * area2
        area_tol = self.tol * diag
        for e in np.nonzero(self.areas <= area_tol)[0]:
            raise MeshError(f"element {int(e)} is degenerate (area {self.areas[e]:.3e})")
        for e, tri in enumerate(self.elements):
            if len(set(int(i) for i in tri)) != 3:
                raise MeshError(f"element {e} repeats a node index")

        # Edge census: interior edges belong to two elements, boundary edges
        # to one; anything else is non-manifold or an unclosed boundary.
        counts: dict[tuple, int] = {}
        for tri in self.elements:
            for k in range(3):
                key = (int(tri[k]), int(tri[(k + 1) % 3]))
                key = key if key[0] < key[1] else (key[1], key[0])
                counts[key] = counts.get(key, 0) + 1
        for key, cnt in counts.items():
            if cnt > 2:
                raise MeshError(f"non-manifold edge {key} shared by {cnt} elements")

        declared = {}
        for (i, j), tag in self.boundary_edges:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise MeshError(f"boundary edge ({i}, {j}) references out-of-range node")
            if tag not in BOUNDARY_TAGS:
                raise MeshError(f"unknown boundary tag {tag!r}")
            key = (i, j) if i < j else (j, i)
            if key in declared:
                raise MeshError(f"boundary edge {key} declared twice")
            declared[key] = tag
            if counts.get(key, 0) != 1:
                raise MeshError(
                    f"boundary edge {key} belongs to {counts.get(key, 0)} elements, expected 1")
        for key, cnt in counts.items():
            if cnt == 1 and key not in declared:
                raise MeshError(f"edge {key} is on the boundary but not declared")

        self.n_edges = len(counts)
        self.min_edge = float(min(
            np.linalg.norm(self.nodes[k1] - self.nodes[k2]) for (k1, k2) in counts))

    # -- queries ------------------------------------------------------------

    def element_centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def boundary_nodes(self) -> np.ndarray:
        if not self.boundary_edges:
            return np.empty(0, dtype=np.int64)
        return np.unique(self._bedge_arr)

    def material_of(self, elem: int) -> Material:
        return self.materials[int(self.element_material[elem])]


def signed_area(p0, p1, p2) -> float:
    return 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))


def locate_element(mesh: Mesh, p, with_bary: bool = False):
    """Find the element containing point ``p``.

    Points within tolerance of a shared edge return the lowest element id,
    which makes downstream interpolation deterministic.  Returns ``None``
    (or ``(None, None)``) for points outside the domain.
    """
    px, py = float(p[0]), float(p[1])
    cand = mesh._grid.candidates((px, py))
    if len(cand) == 0:
        return (None, None) if with_bary else None
    best = None
    best_bary = None
    tol = mesh.tol
    nodes = mesh.nodes
    for e in np.sort(cand):
        i0, i1, i2 = mesh.elements[e]
        x0, y0 = nodes[i0]
        x1, y1 = nodes[i1]
        x2, y2 = nodes[i2]
        # Sub-areas opposite each vertex; w/edge-length = signed distance.
        w0 = (x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)
        w1 = (x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)
        w2 = (x0 - px) * (y1 - py) - (x1 - px) * (y0 - py)
        l0 = math.hypot(x2 - x1, y2 - y1)
        l1 = math.hypot(x0 - x2, y0 - y2)
        l2 = math.hypot(x1 - x0, y1 - y0)
        if w0 >= -tol * l0 and w1 >= -tol * l1 and w2 >= -tol * l2:
            best = int(e)
            # Normalizing by the sum (not 2A) keeps the weights an exact
            # partition of unity, so nodal values interpolate exactly.
            s = w0 + w1 + w2
            best_bary = np.array([w0 / s, w1 / s, w2 / s])
            break
    if best is None:
        return (None, None) if with_bary else None
    return (best, best_bary) if with_bary else best


def segment_blocked(mesh: Mesh, a: int, b: int) -> bool:
    """True iff the open segment between nodes ``a`` and ``b`` is inadmissible.

    A segment is blocked when it properly crosses a boundary edge (slit faces
    included), leaves the domain, or passes through a third node within
    tolerance.  Exits that do not properly cross the boundary can only happen
    past a reflex corner node, which the third-node test already rejects, so
    a single interior sample (the midpoint) suffices for the in-domain check.
    """
    if a == b:
        raise ValueError("segment endpoints must differ")
    pa = mesh.nodes[a]
    pb = mesh.nodes[b]
    u = pb - pa
    ulen = float(np.hypot(u[0], u[1]))
    tol = mesh.tol
    if ulen <= tol:
        return True  # coincident nodes (e.g. slit twins) cannot form a discontinuity

    # Third-node exclusion: any other node within tol of the open segment.
    rel = mesh.nodes - pa
    s = (rel @ u) / (ulen * ulen)
    d = np.abs(rel[:, 0] * u[1] - rel[:, 1] * u[0]) / ulen
    eps = tol / ulen
    hit = (d <= tol) & (s > eps) & (s < 1.0 - eps)
    hit[a] = hit[b] = False
    if np.any(hit):
        return True

    # Proper crossing of any boundary edge (strict sign change on both sides).
    be = mesh._bedge_arr
    if len(be):
        q0 = mesh.nodes[be[:, 0]]
        q1 = mesh.nodes[be[:, 1]]
        v = q1 - q0
        vlen = np.hypot(v[:, 0], v[:, 1])
        d1 = u[0] * (q0[:, 1] - pa[1]) - u[1] * (q0[:, 0] - pa[0])
        d2 = u[0] * (q1[:, 1] - pa[1]) - u[1] * (q1[:, 0] - pa[0])
        d3 = v[:, 0] * (pa[1] - q0[:, 1]) - v[:, 1] * (pa[0] - q0[:, 0])
        d4 = v[:, 0] * (pb[1] - q0[:, 1]) - v[:, 1] * (pb[0] - q0[:, 0])
        tu = tol * ulen
        tv = tol * vlen
        cross = (((d1 > tu) & (d2 < -tu)) | ((d1 < -tu) & (d2 > tu))) \
            & (((d3 > tv) & (d4 < -tv)) | ((d3 < -tv) & (d4 > tv)))
        if np.any(cross):
            return True

    mid = 0.5 * (pa + pb)
    return locate_element(mesh, mid) is None


# -- file format ------------------------------------------------------------

def mesh_from_dict(data: dict, rel_tol: float = DEFAULT_REL_TOL) -> Mesh:
    try:
        nodes = np.array(data["nodes"], dtype=float)
        raw_elements = data["elements"]
        boundary = data["boundary"]
        mode = data["mode"]
        materials = {m["id"]: Material.from_dict(m) for m in data["materials"]}
    except KeyError as exc:
        raise MeshError(f"mesh file missing key {exc}") from exc
    for e in raw_elements:
        if len(e) != 4:
            raise MeshError(f"element entry {e!r} must be [i, j, k, material_id]")
    elements = np.array([e[:3] for e in raw_elements], dtype=np.int64) \
        if raw_elements else np.empty((0, 3), dtype=np.int64)
    elem_mat = np.array([e[3] for e in raw_elements], dtype=np.int64) \
        if raw_elements else np.empty(0, dtype=np.int64)
    bedges = []
    for entry in boundary:
        try:
            i, j = entry["edge"]
            tag = entry["tag"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"bad boundary entry {entry!r}") from exc
        bedges.append(((int(i), int(j)), tag))
    return Mesh(nodes=nodes, elements=elements, element_material=elem_mat,
                boundary_edges=bedges, mode=mode, materials=materials,
                rel_tol=rel_tol)


def mesh_to_dict(mesh: Mesh) -> dict:
    return {
        "nodes": mesh.nodes.tolist(),
        "elements": [[int(i), int(j), int(k), int(m)] for (i, j, k), m
                     in zip(mesh.elements, mesh.element_material)],
        "boundary": [{"edge": [int(i), int(j)], "tag": tag}
                     for (i, j), tag in mesh.boundary_edges],
        "mode": mesh.mode,
        "materials": [m.to_dict() for _, m in sorted(mesh.materials.items())],
    }


def load_mesh(path, rel_tol: float = DEFAULT_REL_TOL) -> Mesh:
    """Load and validate a mesh from a JSON file."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshError(f"cannot parse mesh file {path}: {exc}") from exc
    return mesh_from_dict(data, rel_tol=rel_tol)


def save_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(mesh), fh)
