"""Oriented triangle-mesh geometry: STL ingestion, primitive generation,
midpoint subdivision, and the ray / overlap predicates everything downstream
is built on.

Meshes are immutable after construction. Face data is kept in two layouts:
record-major (all coordinates of one face contiguous, the layout the
cell-parallel kernels read) and component-major (one coordinate component
contiguous across faces, the layout face-parallel passes read).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit

__all__ = [
    "TriangleMesh", "Aabb", "PrimitiveSpec", "MeshError", "StlParseError",
    "parse_stl", "make_primitive", "refine_faces", "ray_face_distance",
    "triangle_aabb_overlap", "is_watertight",
]

EPS_PARALLEL = 1e-12


class MeshError(ValueError):
    pass


class StlParseError(MeshError):
    pass


@dataclass(frozen=True)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if not np.all(lo <= hi):
            raise MeshError(f"invalid AABB: lo={lo} hi={hi}")


@dataclass(frozen=True)
class PrimitiveSpec:
    """Description of a generated primitive.

    ``size`` is a diameter for circle/sphere and per-axis edge lengths (or a
    single scalar) for square/box. ``segments`` is the polygon segment count
    in 2D and the icosphere subdivision depth in 3D.
    """

    kind: str
    center: Sequence[float]
    size: Union[float, Sequence[float]]
    segments: int = 4


class TriangleMesh:
    """Watertight oriented surface in dual index-list / coordinate-list form.

    ``faces_coord`` stores, per face, the vertex coordinates flattened
    record-major; ``faces_coord_cm`` stores the same values transposed so one
    component is contiguous across faces.
    """

    def __init__(self, vertices, faces_indexed, dim=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces_indexed = np.ascontiguousarray(faces_indexed, dtype=np.int64)
        self.dim = int(dim if dim is not None else self.vertices.shape[1])
        if self.dim not in (2, 3):
            raise MeshError(f"dim must be 2 or 3, got {self.dim}")
        if self.faces_indexed.ndim != 2 or self.faces_indexed.shape[1] != self.dim:
            raise MeshError("faces_indexed must be (F, 2) in 2D or (F, 3) in 3D")
        if self.faces_indexed.size and self.faces_indexed.max() >= len(self.vertices):
            raise MeshError("face index out of range")
        if len(self.faces_indexed) == 0:
            raise MeshError("empty mesh (zero faces)")
        nv = self.faces_indexed.shape[1]
        fc = self.vertices[self.faces_indexed.reshape(-1)].reshape(
            len(self.faces_indexed), nv * self.dim)
        self.faces_coord = np.ascontiguousarray(fc)
        self.faces_coord_cm = np.ascontiguousarray(fc.T)
        self.normals = _face_normals(self.vertices, self.faces_indexed, self.dim)

    @property
    def n_faces(self) -> int:
        return len(self.faces_indexed)

    def aabb(self) -> Aabb:
        return Aabb(self.vertices.min(axis=0), self.vertices.max(axis=0))

    def face_areas(self) -> np.ndarray:
        v = self.vertices[self.faces_indexed]
        if self.dim == 2:
            return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        cr = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def max_edge_lengths(self) -> np.ndarray:
        v = self.vertices[self.faces_indexed]
        if self.dim == 2:
            return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        e = [np.linalg.norm(v[:, (i + 1) % 3] - v[:, i], axis=1) for i in range(3)]
        return np.max(e, axis=0)


def _face_normals(vertices, faces, dim):
    v = vertices[faces]
    if dim == 2:
        t = v[:, 1] - v[:, 0]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
    else:
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    lens = np.linalg.norm(n, axis=1)
    if np.any(lens == 0.0):
        raise MeshError("degenerate face (zero normal)")
    return n / lens[:, None]


# ---------------------------------------------------------------------------
# STL ingestion

def parse_stl(data: Union[bytes, str], weld_tol: Optional[float] = None) -> TriangleMesh:
    """Parse an ASCII STL stream into a welded triangle mesh.

    Normals are recomputed from the vertex winding; the file's normal records
    are ignored. Vertices closer than ``weld_tol`` (default 1e-12 times the
    model extent) are merged so the index-list representation regains mesh
    connectivity.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise StlParseError("not an ASCII STL stream") from exc
    else:
        text = data

    tokens = []  # (token, line_number)
    for ln, line in enumerate(text.splitlines(), start=1):
        for tok in line.split():
            tokens.append((tok, ln))

    pos = 0
    n_tok = len(tokens)

    def peek():
        return tokens[pos][0] if pos < n_tok else None

    def expect(word, context):
        nonlocal pos
        if pos >= n_tok:
            raise StlParseError(f"unexpected end of file while reading {context}")
        tok, ln = tokens[pos]
        if tok.lower() != word:
            raise StlParseError(f"line {ln}: expected '{word}' in {context}, got '{tok}'")
        pos += 1
        return ln

    def read_float(context):
        nonlocal pos
        if pos >= n_tok:
            raise StlParseError(f"unexpected end of file while reading {context}")
        tok, ln = tokens[pos]
        try:
            val = float(tok)
        except ValueError:
            raise StlParseError(f"line {ln}: bad number '{tok}' in {context}") from None
        pos += 1
        return val

    expect("solid", "header")
    # optional solid name: consume tokens until 'facet' or 'endsolid'
    while peek() is not None and peek().lower() not in ("facet", "endsolid"):
        pos += 1

    tri_verts = []
    facet_idx = 0
    while peek() is not None and peek().lower() == "facet":
        facet_idx += 1
        ctx = f"facet {facet_idx}"
        expect("facet", ctx)
        expect("normal", ctx)
        for _ in range(3):
            read_float(ctx + " normal")
        expect("outer", ctx)
        expect("loop", ctx)
        for k in range(3):
            expect("vertex", ctx)
            tri_verts.append([read_float(ctx + f" vertex {k + 1}") for _ in range(3)])
        expect("endloop", ctx)
        expect("endfacet", ctx)
    expect("endsolid", f"trailer after facet {facet_idx}")

    if facet_idx == 0:
        raise StlParseError("empty mesh: STL contains zero facets")

    raw = np.asarray(tri_verts, dtype=np.float64)
    extent = float((raw.max(axis=0) - raw.min(axis=0)).max()) or 1.0
    tol = weld_tol if weld_tol is not None else 1e-12 * extent

    verts, faces = _weld(raw, tol)
    return TriangleMesh(verts, faces.reshape(-1, 3), dim=3)


def _weld(raw_vertices, tol):
    """Merge duplicate vertices within ``tol`` via grid quantization."""
    if tol <= 0:
        keys = [tuple(v) for v in raw_vertices]
    else:
        keys = [tuple(np.round(v / tol).astype(np.int64)) for v in raw_vertices]
    index = {}
    verts = []
    out = np.empty(len(raw_vertices), dtype=np.int64)
    for i, key in enumerate(keys):
        j = index.get(key)
        if j is None:
            j = len(verts)
            index[key] = j
            verts.append(raw_vertices[i])
        out[i] = j
    return np.asarray(verts), out


# ---------------------------------------------------------------------------
# Primitives

_ICOSA_T = (1.0 + np.sqrt(5.0)) / 2.0
_ICOSA_VERTS = np.array([
    [-1, _ICOSA_T, 0], [1, _ICOSA_T, 0], [-1, -_ICOSA_T, 0], [1, -_ICOSA_T, 0],
    [0, -1, _ICOSA_T], [0, 1, _ICOSA_T], [0, -1, -_ICOSA_T], [0, 1, -_ICOSA_T],
    [_ICOSA_T, 0, -1], [_ICOSA_T, 0, 1], [-_ICOSA_T, 0, -1], [-_ICOSA_T, 0, 1],
], dtype=np.float64)
_ICOSA_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=np.int64)


def make_primitive(spec: PrimitiveSpec) -> TriangleMesh:
    """Generate a closed, outward-oriented primitive mesh."""
    center = np.asarray(spec.center, dtype=np.float64)
    kind = spec.kind.lower()
    if kind == "circle":
        return _make_circle(center, _scalar_size(spec.size), spec.segments)
    if kind == "square":
        return _make_rect(center, _axis_sizes(spec.size, 2))
    if kind == "sphere":
        return _make_sphere(center, _scalar_size(spec.size), spec.segments)
    if kind == "box":
        return _make_box(center, _axis_sizes(spec.size, 3))
    raise MeshError(f"unknown primitive kind '{spec.kind}'")


def _scalar_size(size):
    s = float(np.atleast_1d(size)[0])
    if s <= 0:
        raise MeshError("size must be positive")
    return s


def _axis_sizes(size, dim):
    s = np.atleast_1d(np.asarray(size, dtype=np.float64))
    if s.size == 1:
        s = np.full(dim, s[0])
    if s.size != dim or np.any(s <= 0):
        raise MeshError(f"size must be a positive scalar or {dim} lengths")
    return s


def _make_circle(center, diameter, segments):
    if segments < 3:
        raise MeshError(f"circle needs at least 3 segments, got {segments}")
    r = diameter / 2.0
    ang = 2.0 * np.pi * np.arange(segments) / segments
    verts = center + r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    faces = np.stack([np.arange(segments), (np.arange(segments) + 1) % segments], axis=1)
    return TriangleMesh(verts, faces, dim=2)


def _make_rect(center, sizes):
    hx, hy = sizes / 2.0
    verts = center + np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    faces = np.array([[0, 1], [1, 2], [2, 3], [3, 0]], dtype=np.int64)
    return TriangleMesh(verts, faces, dim=2)


def _make_sphere(center, diameter, subdivisions):
    if subdivisions < 0:
        raise MeshError("sphere subdivision count must be >= 0")
    verts = _ICOSA_VERTS / np.linalg.norm(_ICOSA_VERTS[0])
    faces = _ICOSA_FACES
    for _ in range(subdivisions):
        verts, faces = _subdivide_on_sphere(verts, faces)
    verts = center + (diameter / 2.0) * verts
    return TriangleMesh(verts, faces, dim=3)


def _subdivide_on_sphere(verts, faces):
    verts = list(map(tuple, verts))
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        j = cache.get(key)
        if j is None:
            m = (np.asarray(verts[a]) + np.asarray(verts[b])) / 2.0
            m /= np.linalg.norm(m)
            j = len(verts)
            verts.append(tuple(m))
            cache[key] = j
        return j

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.asarray(verts), np.asarray(out, dtype=np.int64)


def _make_box(center, sizes):
    h = sizes / 2.0
    corners = np.array([[sx, sy, sz] for sz in (-h[2], h[2])
                        for sy in (-h[1], h[1]) for sx in (-h[0], h[0])])
    verts = center + corners
    # 12 outward-wound triangles; corner index bits are (x, y, z) -> 1, 2, 4
    quads = [
        ([0, 2, 3, 1], (0, 0, -1)),
        ([4, 5, 7, 6], (0, 0, 1)),
        ([0, 1, 5, 4], (0, -1, 0)),
        ([2, 6, 7, 3], (0, 1, 0)),
        ([0, 4, 6, 2], (-1, 0, 0)),
        ([1, 3, 7, 5], (1, 0, 0)),
    ]
    faces = []
    for quad, _n in quads:
        faces.append([quad[0], quad[1], quad[2]])
        faces.append([quad[0], quad[2], quad[3]])
    mesh = TriangleMesh(verts, np.asarray(faces, dtype=np.int64), dim=3)
    return mesh


# ---------------------------------------------------------------------------
# Midpoint subdivision to a maximum edge length

def refine_faces(mesh: TriangleMesh, l_spec: float) -> TriangleMesh:
    """Subdivide faces at edge midpoints until every edge is shorter than
    ``l_spec``. Surface area and orientation are preserved exactly."""
    if l_spec <= 0:
        raise MeshError("l_spec must be positive")
    if np.all(mesh.max_edge_lengths() < l_spec):
        return mesh

    verts = [tuple(v) for v in mesh.vertices]
    vmap = {v: i for i, v in enumerate(verts)}

    def vid(p):
        key = tuple(p)
        j = vmap.get(key)
        if j is None:
            j = len(verts)
            verts.append(key)
            vmap[key] = j
        return j

    out_faces = []
    stack = [tuple(f) for f in mesh.faces_indexed]
    if mesh.dim == 2:
        while stack:
            a, b = stack.pop()
            pa, pb = np.asarray(verts[a]), np.asarray(verts[b])
            if np.linalg.norm(pb - pa) < l_spec:
                out_faces.append((a, b))
                continue
            m = vid((pa + pb) / 2.0)
            stack.append((a, m))
            stack.append((m, b))
    else:
        while stack:
            a, b, c = stack.pop()
            pa, pb, pc = (np.asarray(verts[i]) for i in (a, b, c))
            emax = max(np.linalg.norm(pb - pa), np.linalg.norm(pc - pb),
                       np.linalg.norm(pa - pc))
            if emax < l_spec:
                out_faces.append((a, b, c))
                continue
            ab = vid((pa + pb) / 2.0)
            bc = vid((pb + pc) / 2.0)
            ca = vid((pc + pa) / 2.0)
            stack += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]

    out_faces.reverse()
    return TriangleMesh(np.asarray(verts), np.asarray(out_faces, dtype=np.int64),
                        dim=mesh.dim)


def l_spec_bound(domain_lengths, n_spec, l_max, n_b) -> float:
    """Maximum allowed face edge so a face never covers more candidate bins
    than the per-face pair cap admits."""
    lmin = float(np.min(domain_lengths))
    return lmin * (0.95 * n_spec) / (2 ** (l_max - 1) * n_b)


# ---------------------------------------------------------------------------
# Ray / overlap predicates

def ray_face_distance(origin, direction, face_vertices, normal=None,
                      eps_parallel=EPS_PARALLEL):
    """Signed plane distance along a lattice direction.

    Returns ``(d, point)`` with ``point = origin + d * direction``, or None
    when the ray is within ``eps_parallel`` of parallel to the face plane.
    The point-in-face acceptance test is the caller's job.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    fv = np.asarray(face_vertices, dtype=np.float64)
    if normal is None:
        if fv.shape[1] == 2:
            t = fv[1] - fv[0]
            normal = np.array([t[1], -t[0]])
        else:
            normal = np.cross(fv[1] - fv[0], fv[2] - fv[0])
        normal = normal / np.linalg.norm(normal)
    denom = float(direction @ normal)
    if abs(denom) < eps_parallel * np.linalg.norm(direction):
        return None
    d = float((fv[0] - origin) @ normal) / denom
    return d, origin + d * direction


@njit(cache=True)
def _plane_cuts_box(v1x, v1y, v1z, v2x, v2y, v2z, v3x, v3y, v3z,
                    mx, my, mz, Mx, My, Mz):
    nx = (v2y - v1y) * (v3z - v1z) - (v2z - v1z) * (v3y - v1y)
    ny = (v2z - v1z) * (v3x - v1x) - (v2x - v1x) * (v3z - v1z)
    nz = (v2x - v1x) * (v3y - v1y) - (v2y - v1y) * (v3x - v1x)
    cx = (Mx - mx) if nx > 0.0 else 0.0
    cy = (My - my) if ny > 0.0 else 0.0
    cz = (Mz - mz) if nz > 0.0 else 0.0
    d = nx * mx + ny * my + nz * mz
    d1 = nx * (cx - v1x) + ny * (cy - v1y) + nz * (cz - v1z)
    d2 = (nx * ((Mx - mx - cx) - v1x) + ny * ((My - my - cy) - v1y)
          + nz * ((Mz - mz - cz) - v1z))
    return (d + d1) * (d + d2) <= 0.0


@njit(cache=True)
def _axis_gap_2d(axis, v1x, v1y, v2x, v2y, v3x, v3y, rmx, rmy, rMx, rMy):
    # Returns True when the chosen axis separates triangle and rectangle.
    if axis == 0:
        ex, ey = 1.0, 0.0
    elif axis == 1:
        ex, ey = 0.0, 1.0
    elif axis == 2:
        ex, ey = v2y - v1y, v1x - v2x
    elif axis == 3:
        ex, ey = v3y - v2y, v2x - v3x
    else:
        ex, ey = v1y - v3y, v3x - v1x
    t1 = v1x * ex + v1y * ey
    t2 = v2x * ex + v2y * ey
    t3 = v3x * ex + v3y * ey
    tmin = min(min(t1, t2), t3)
    tmax = max(max(t1, t2), t3)
    r1 = rmx * ex + rmy * ey
    r2 = rMx * ex + rmy * ey
    r3 = rmx * ex + rMy * ey
    r4 = rMx * ex + rMy * ey
    rmin = min(min(r1, r2), min(r3, r4))
    rmax = max(max(r1, r2), max(r3, r4))
    return (tmax < rmin) or (rmax < tmin)


@njit(cache=True)
def tri_aabb_overlap_3d(v1x, v1y, v1z, v2x, v2y, v2z, v3x, v3y, v3z,
                        mx, my, mz, Mx, My, Mz):
    """Separating-axis triangle/AABB intersection test."""
    if not _plane_cuts_box(v1x, v1y, v1z, v2x, v2y, v2z, v3x, v3y, v3z,
                           mx, my, mz, Mx, My, Mz):
        return False
    for k in range(5):
        if _axis_gap_2d(k, v1x, v1y, v2x, v2y, v3x, v3y, mx, my, Mx, My):
            return False
    for k in range(5):
        if _axis_gap_2d(k, v1y, v1z, v2y, v2z, v3y, v3z, my, mz, My, Mz):
            return False
    for k in range(5):
        if _axis_gap_2d(k, v1z, v1x, v2z, v2x, v3z, v3x, mz, mx, Mz, Mx):
            return False
    return True


@njit(cache=True)
def seg_aabb_overlap_2d(v1x, v1y, v2x, v2y, mx, my, Mx, My):
    """Separating-axis segment/AABB test (box axes, segment normal and
    segment direction)."""
    # box axes
    if max(v1x, v2x) < mx or min(v1x, v2x) > Mx:
        return False
    if max(v1y, v2y) < my or min(v1y, v2y) > My:
        return False
    # segment normal and direction
    for k in range(2):
        if k == 0:
            ex, ey = v2y - v1y, v1x - v2x
        else:
            ex, ey = v2x - v1x, v2y - v1y
        t1 = v1x * ex + v1y * ey
        t2 = v2x * ex + v2y * ey
        tmin = min(t1, t2)
        tmax = max(t1, t2)
        r1 = mx * ex + my * ey
        r2 = Mx * ex + my * ey
        r3 = mx * ex + My * ey
        r4 = Mx * ex + My * ey
        rmin = min(min(r1, r2), min(r3, r4))
        rmax = max(max(r1, r2), max(r3, r4))
        if tmax < rmin or rmax < tmin:
            return False
    return True


def triangle_aabb_overlap(face_vertices, box: Aabb) -> bool:
    """Exact face/AABB intersection (triangle in 3D, segment in 2D)."""
    fv = np.asarray(face_vertices, dtype=np.float64)
    lo, hi = box.lo, box.hi
    if fv.shape == (2, 2):
        return bool(seg_aabb_overlap_2d(fv[0, 0], fv[0, 1], fv[1, 0], fv[1, 1],
                                        lo[0], lo[1], hi[0], hi[1]))
    if fv.shape == (3, 3):
        return bool(tri_aabb_overlap_3d(
            fv[0, 0], fv[0, 1], fv[0, 2], fv[1, 0], fv[1, 1], fv[1, 2],
            fv[2, 0], fv[2, 1], fv[2, 2],
            lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]))
    raise MeshError(f"unsupported face shape {fv.shape}")


def is_watertight(mesh: TriangleMesh) -> bool:
    """Every undirected edge shared by exactly two faces, with opposite
    orientation (each directed edge appears exactly once)."""
    edges = {}
    if mesh.dim == 2:
        directed = [(int(a), int(b)) for a, b in mesh.faces_indexed]
    else:
        directed = []
        for a, b, c in mesh.faces_indexed:
            directed += [(int(a), int(b)), (int(b), int(c)), (int(c), int(a))]
    for e in directed:
        edges[e] = edges.get(e, 0) + 1
    for (a, b), cnt in edges.items():
        if cnt != 1 or edges.get((b, a), 0) != 1:
            return False
    return True
