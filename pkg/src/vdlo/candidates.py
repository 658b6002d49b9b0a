"""Candidate discontinuities between node pairs and their coefficients.

Every admissible node pair is a potential slip line.  For each inner
candidate the module integrates, along the segment,

  * the tangential and normal virtual-work coefficients
        G_t = int t.sigma.n dl,   G_n = int n.sigma.n dl,
  * the dissipation coefficient  ce = int c dl,  and
  * the effective dilation slope tan(phi) (length-weighted average).

Integrals use composite Simpson with the two endpoint samples nudged half a
spacing inward so they never sit on mesh nodes; the nudge cancels for linear
integrands, which keeps the rule exact for stress fields interpolated inside
a single element.

Orientation convention: t points from the lower-numbered node a to b, and
n = [-t_y, t_x] (left of the travel direction); positive zeta_n is opening.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, locate_element, segment_blocked


class CandidateError(RuntimeError):
    pass


# Most-restrictive-tag ordering used when a candidate spans boundary edges
# with mixed tags.
_TAG_RANK = {"free": 0, "loaded": 1, "roller_t": 2, "roller_n": 3, "fixed": 4}


@dataclass
class Candidate:
    """One potential discontinuity between nodes a < b."""

    a: int
    b: int
    t: np.ndarray          # unit tangent, a -> b
    n: np.ndarray          # unit normal, [-t_y, t_x]
    length: float
    kind: str              # "inner" | "boundary"
    tag: str | None = None  # boundary tag when kind == "boundary"
    G_t: float = 0.0
    G_n: float = 0.0
    ce: float = 0.0
    tan_phi: float = 0.0

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "kind": self.kind if self.kind == "inner"
                else f"boundary:{self.tag}", "l": self.length,
                "G_t": self.G_t, "G_n": self.G_n, "ce": self.ce, "tan_phi": self.tan_phi}


@dataclass
class Quadrature:
    """Composite-Simpson rule parameters for the line integrals.

    The sample count for a segment of length l is max(min_points,
    2*ceil(l / h) + 1) with h the shortest mesh edge unless overridden.
    """

    h: float | None = None
    min_points: int = 3
    max_points: int | None = None

    def resolve_h(self, mesh: Mesh) -> float:
        return self.h if self.h is not None else mesh.min_edge

    def sample_count(self, length: float, h: float) -> int:
        n = max(self.min_points, 2 * math.ceil(length / h) + 1)
        if n % 2 == 0:
            n += 1
        if self.max_points is not None:
            n = min(n, self.max_points if self.max_points % 2 == 1 else self.max_points - 1)
        return max(n, 3)


def simpson_points(length: float, npts: int):
    """Abscissae and weights on [0, length]; endpoints nudged inward.

    Standard composite-Simpson weights are kept for the nominal endpoint
    positions, so the symmetric half-spacing nudge cancels exactly for
    linear integrands.
    """
    if npts < 3 or npts % 2 == 0:
        raise ValueError("composite Simpson needs an odd sample count >= 3")
    step = length / (npts - 1)
    s = np.linspace(0.0, length, npts)
    s[0] = 0.5 * step
    s[-1] = length - 0.5 * step
    w = np.full(npts, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    w *= step / 3.0
    return s, w


def classify(mesh: Mesh, a: int, b: int) -> tuple:
    """("boundary", tag) when the segment coincides with a chain of boundary
    edges (most restrictive tag wins); ("inner", None) otherwise."""
    pa, pb = mesh.nodes[a], mesh.nodes[b]
    u = pb - pa
    ulen = float(np.hypot(u[0], u[1]))
    tol = mesh.tol

    def param(p):
        s = float((p - pa) @ u) / (ulen * ulen)
        d = abs(float((p[0] - pa[0]) * u[1] - (p[1] - pa[1]) * u[0])) / ulen
        return s, d

    intervals = []
    best_tag = None
    for (i, j), tag in mesh.boundary_edges:
        si, di = param(mesh.nodes[i])
        sj, dj = param(mesh.nodes[j])
        eps = tol / ulen
        if di > tol or dj > tol:
            continue
        lo, hi = min(si, sj), max(si, sj)
        if hi < -eps or lo > 1.0 + eps:
            continue
        lo = max(lo, 0.0)
        hi = min(hi, 1.0)
        if hi - lo <= eps:
            continue
        intervals.append((lo, hi))
        if best_tag is None or _TAG_RANK[tag] > _TAG_RANK[best_tag]:
            best_tag = tag
    if not intervals:
        return ("inner", None)
    intervals.sort()
    eps = tol / ulen
    covered = 0.0
    for lo, hi in intervals:
        if lo > covered + eps:
            return ("inner", None)
        covered = max(covered, hi)
    if covered < 1.0 - eps:
        return ("inner", None)
    return ("boundary", best_tag)


def _admissible_partners(mesh: Mesh, a: int, partners: np.ndarray) -> np.ndarray:
    """Vectorized segment_blocked over many partners of one anchor node.

    Mirrors the scalar tests: degenerate length, third node on the open
    segment, proper crossing of a boundary edge, midpoint outside the domain.
    """
    nodes = mesh.nodes
    tol = mesh.tol
    pa = nodes[a]
    u = nodes[partners] - pa                       # (k, 2)
    ulen = np.hypot(u[:, 0], u[:, 1])
    ok = ulen > tol
    ulen = np.where(ok, ulen, 1.0)                 # keep the math finite for rejects

    rel = nodes - pa                               # (n, 2)
    s = rel @ u.T                                  # (n, k)
    s /= ulen * ulen
    d = np.abs(np.outer(rel[:, 0], u[:, 1]) - np.outer(rel[:, 1], u[:, 0])) / ulen
    eps = tol / ulen
    hit = (d <= tol) & (s > eps) & (s < 1.0 - eps)
    hit[a, :] = False
    hit[partners, np.arange(len(partners))] = False
    ok &= ~hit.any(axis=0)

    be = mesh._bedge_arr
    if len(be):
        q0 = nodes[be[:, 0]]
        q1 = nodes[be[:, 1]]
        v = q1 - q0
        vlen = np.hypot(v[:, 0], v[:, 1])
        # d1/d2: boundary endpoints against each candidate line (m, k)
        d1 = np.outer(q0[:, 1] - pa[1], u[:, 0]) - np.outer(q0[:, 0] - pa[0], u[:, 1])
        d2 = np.outer(q1[:, 1] - pa[1], u[:, 0]) - np.outer(q1[:, 0] - pa[0], u[:, 1])
        # d3/d4: candidate endpoints against each boundary line (m, k)
        w0 = pa - q0
        d3 = (v[:, 0] * w0[:, 1] - v[:, 1] * w0[:, 0])[:, None]
        pb_rel_x = nodes[partners, 0][None, :] - q0[:, 0][:, None]
        pb_rel_y = nodes[partners, 1][None, :] - q0[:, 1][:, None]
        d4 = v[:, 0][:, None] * pb_rel_y - v[:, 1][:, None] * pb_rel_x
        tu = tol * ulen[None, :]
        tv = (tol * vlen)[:, None]
        cross = (((d1 > tu) & (d2 < -tu)) | ((d1 < -tu) & (d2 > tu))) \
            & (((d3 > tv) & (d4 < -tv)) | ((d3 < -tv) & (d4 > tv)))
        ok &= ~cross.any(axis=0)

    for k in np.nonzero(ok)[0]:
        mid = 0.5 * (pa + nodes[partners[k]])
        if locate_element(mesh, mid) is None:
            ok[k] = False
    return ok


def enumerate_candidates(mesh: Mesh, max_length: float | None = None,
                         exclude_material_crossing: bool = False,
                         quadrature: Quadrature | None = None) -> list:
    """All admissible node pairs in lexicographic (a, b) order.

    Geometry and classification only; coefficients are attached by
    compute_coefficients.  ``max_length`` caps the candidate length (the cap
    shrinks the mechanism set, so the resulting factor of safety stays an
    upper bound).
    """
    nodes = mesh.nodes
    n = len(nodes)
    bnodes = set(int(v) for v in mesh.boundary_nodes())
    out = []
    for a in range(n - 1):
        d = np.hypot(nodes[a + 1:, 0] - nodes[a, 0], nodes[a + 1:, 1] - nodes[a, 1])
        partners = np.nonzero(d <= max_length)[0] + a + 1 if max_length is not None \
            else np.arange(a + 1, n)
        if len(partners) == 0:
            continue
        ok = _admissible_partners(mesh, a, partners)
        for b in partners[ok]:
            b = int(b)
            pa, pb = nodes[a], nodes[b]
            u = pb - pa
            length = float(np.hypot(u[0], u[1]))
            t = u / length
            nvec = np.array([-t[1], t[0]])
            # only boundary-to-boundary pairs can coincide with boundary chains
            kind, tag = classify(mesh, a, b) if (a in bnodes and b in bnodes) \
                else ("inner", None)
            out.append(Candidate(a=a, b=b, t=t, n=nvec, length=length, kind=kind, tag=tag))

    if exclude_material_crossing:
        quad = quadrature or Quadrature()
        h = quad.resolve_h(mesh)
        kept = []
        for c in out:
            if c.kind != "inner":
                kept.append(c)
                continue
            elems = _sample_elements(mesh, c, quad, h)[1]
            mats = mesh.element_material[elems]
            if np.all(mats == mats[0]):
                kept.append(c)
        out = kept
    return out


def _sample_elements(mesh: Mesh, cand: Candidate, quad: Quadrature, h: float):
    """Sample abscissae, containing elements, barycentric weights and triangles."""
    npts = quad.sample_count(cand.length, h)
    s, w = simpson_points(cand.length, npts)
    pa = mesh.nodes[cand.a]
    pts = pa[None, :] + s[:, None] * cand.t[None, :]
    elems = np.empty(npts, dtype=np.int64)
    barys = np.empty((npts, 3))
    for k in range(npts):
        e, bary = locate_element(mesh, pts[k], with_bary=True)
        if e is None:
            raise CandidateError(
                f"sample point {tuple(pts[k])} of candidate ({cand.a}, {cand.b}) "
                "is outside the domain")
        elems[k] = e
        barys[k] = bary
    return (s, w), elems, barys, pts


def work_coefficients(mesh: Mesh, cand: Candidate, sigma_n: np.ndarray,
                      quadrature: Quadrature | None = None) -> tuple:
    """(G_t, G_n) for an inner candidate under the nodal stress field."""
    if cand.kind != "inner":
        raise CandidateError("work coefficients are defined for inner candidates only")
    quad = quadrature or Quadrature()
    h = quad.resolve_h(mesh)
    (s, w), elems, barys, _ = _sample_elements(mesh, cand, quad, h)
    tx, ty = cand.t
    nx, ny = cand.n
    ct = np.array([tx * nx, ty * ny, tx * ny + ty * nx])
    cn = np.array([nx * nx, ny * ny, 2.0 * nx * ny])
    tris = mesh.elements[elems]                      # (N, 3)
    sig = np.einsum("nk,nkc->nc", barys, sigma_n[tris])
    return float(w @ (sig @ ct)), float(w @ (sig @ cn))


def dissipation_coefficient(mesh: Mesh, cand: Candidate,
                            quadrature: Quadrature | None = None) -> float:
    """Integral of the local cohesion along an inner candidate."""
    if cand.kind != "inner":
        raise CandidateError("dissipation is defined for inner candidates only")
    quad = quadrature or Quadrature()
    h = quad.resolve_h(mesh)
    (s, w), elems, _, _ = _sample_elements(mesh, cand, quad, h)
    c = np.array([mesh.material_of(e).c for e in elems])
    return float(w @ c)


def effective_friction(mesh: Mesh, cand: Candidate,
                       quadrature: Quadrature | None = None) -> float:
    """Length-weighted average of tan(phi) over the traversed materials."""
    if cand.kind != "inner":
        raise CandidateError("friction is defined for inner candidates only")
    quad = quadrature or Quadrature()
    h = quad.resolve_h(mesh)
    (s, w), elems, _, _ = _sample_elements(mesh, cand, quad, h)
    tphi = np.array([math.tan(mesh.material_of(e).phi) for e in elems])
    return float(w @ tphi) / cand.length


@dataclass
class CandidateTables:
    """Precomputed per-candidate data reusable across stress snapshots.

    W_t/W_n are sparse (n_inner x 3n) operators so that for a flattened
    nodal field G_t = W_t @ sigma_N.ravel(); only these products need
    recomputing when the snapshot changes.
    """

    candidates: list
    inner_idx: np.ndarray
    W_t: sp.csr_matrix
    W_n: sp.csr_matrix

    def apply(self, sigma_n: np.ndarray) -> None:
        flat = np.asarray(sigma_n, dtype=float).ravel()
        gt = self.W_t @ flat
        gn = self.W_n @ flat
        for j, i in enumerate(self.inner_idx):
            self.candidates[i].G_t = float(gt[j])
            self.candidates[i].G_n = float(gn[j])


def compute_coefficients(mesh: Mesh, candidates: list,
                         quadrature: Quadrature | None = None) -> CandidateTables:
    """Fill ce/tan_phi for all inner candidates and build the work operators."""
    quad = quadrature or Quadrature()
    h = quad.resolve_h(mesh)
    n = len(mesh.nodes)
    inner_idx = np.array([i for i, c in enumerate(candidates) if c.kind == "inner"],
                         dtype=np.int64)
    rows_t, cols, vals_t, vals_n = [], [], [], []
    for j, i in enumerate(inner_idx):
        cand = candidates[i]
        (s, w), elems, barys, _ = _sample_elements(mesh, cand, quad, h)
        coh = np.array([mesh.material_of(e).c for e in elems])
        tphi = np.array([math.tan(mesh.material_of(e).phi) for e in elems])
        cand.ce = float(w @ coh)
        cand.tan_phi = float(w @ tphi) / cand.length
        tx, ty = cand.t
        nx, ny = cand.n
        ct = np.array([tx * nx, ty * ny, tx * ny + ty * nx])
        cn = np.array([nx * nx, ny * ny, 2.0 * nx * ny])
        tris = mesh.elements[elems]                                  # (N, 3)
        wb = w[:, None] * barys                                      # (N, 3)
        # column index = 3*node + component
        col = (3 * tris[:, :, None] + np.arange(3)[None, None, :]).ravel()
        contrib_t = (wb[:, :, None] * ct[None, None, :]).ravel()
        contrib_n = (wb[:, :, None] * cn[None, None, :]).ravel()
        rows_t.append(np.full(col.shape, j, dtype=np.int64))
        cols.append(col)
        vals_t.append(contrib_t)
        vals_n.append(contrib_n)
    if len(inner_idx):
        rows = np.concatenate(rows_t)
        cols_all = np.concatenate(cols)
        W_t = sp.coo_matrix((np.concatenate(vals_t), (rows, cols_all)),
                            shape=(len(inner_idx), 3 * n)).tocsr()
        W_n = sp.coo_matrix((np.concatenate(vals_n), (rows, cols_all)),
                            shape=(len(inner_idx), 3 * n)).tocsr()
    else:
        W_t = sp.csr_matrix((0, 3 * n))
        W_n = sp.csr_matrix((0, 3 * n))
    return CandidateTables(candidates=candidates, inner_idx=inner_idx, W_t=W_t, W_n=W_n)


def dump_candidates(candidates: list, path) -> None:
    """Debug dump, one JSON object per line."""
    with open(path, "w") as fh:
        for c in candidates:
            fh.write(json.dumps(c.to_dict()) + "\n")
