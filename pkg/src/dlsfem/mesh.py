"""Conforming simplicial meshes with face connectivity and refinement.

Elements are stored with positive orientation.  The face list is built
once per mesh; each face records an owner element (the lower element
index), a neighbour element (``-1`` on the boundary) and, for boundary
faces, a tag ``"dirichlet"`` or ``"robin"``.  Normals are oriented from
owner to neighbour, hence outward on the boundary.
"""

from __future__ import annotations

import itertools
import logging
import math
import sys
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DIRICHLET = "dirichlet"
ROBIN = "robin"
BOUNDARY_TAGS = (DIRICHLET, ROBIN)
TAG_INTERIOR, TAG_DIRICHLET, TAG_ROBIN = 0, 1, 2
SHAPE_WARNING_RATIO = 20.0


class MeshError(ValueError):
    """Invalid mesh input or geometry."""


@dataclass(frozen=True)
class FaceGeometry:
    diameter: float
    measure: float
    normal: np.ndarray


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _signed_volumes(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    dim = vertices.shape[1]
    x0 = vertices[elements[:, 0]]
    jac = np.stack([vertices[elements[:, j + 1]] - x0 for j in range(dim)], axis=-1)
    return np.linalg.det(jac) / math.factorial(dim)


def _orient(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    elements = np.array(elements, dtype=np.int64)
    neg = _signed_volumes(vertices, elements) < 0
    elements[neg, -2], elements[neg, -1] = elements[neg, -1].copy(), elements[neg, -2].copy()
    return elements


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """Triangle (dim 2) or tetrahedron (dim 3) mesh.

    Parameters
    ----------
    vertices : array (n_vertices, dim)
    elements : array (n_elements, dim+1) of vertex indices
    boundary : dict mapping sorted vertex tuples of boundary faces to a tag
        in ``{"dirichlet", "robin"}``.  Untagged boundary faces default to
        Robin.
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary: dict = field(default_factory=dict)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] not in (2, 3):
            raise MeshError("vertices must have shape (n, 2) or (n, 3)")
        elems = np.asarray(self.elements, dtype=np.int64)
        dim = verts.shape[1]
        if elems.ndim != 2 or elems.shape[1] != dim + 1:
            raise MeshError(f"elements must have shape (m, {dim + 1})")
        if elems.size and (elems.min() < 0 or elems.max() >= len(verts)):
            raise MeshError("element vertex index out of range")
        bnd = {}
        for key, tag in dict(self.boundary).items():
            if tag not in BOUNDARY_TAGS:
                raise MeshError(f"unknown boundary tag {tag!r}")
            key = tuple(sorted(int(v) for v in key))
            if len(key) != dim:
                raise MeshError(f"boundary face {key} must have {dim} vertices")
            bnd[key] = tag
        object.__setattr__(self, "vertices", _freeze(verts))
        object.__setattr__(self, "elements", _freeze(elems))
        object.__setattr__(self, "boundary", bnd)
        if np.any(self.volumes <= 0):
            raise MeshError("element with non-positive signed volume")

    # -- sizes ---------------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    # -- element geometry ----------------------------------------------------
    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine maps x = x0 + B xi; shape (n_elements, dim, dim)."""
        x0 = self.vertices[self.elements[:, 0]]
        cols = [self.vertices[self.elements[:, j + 1]] - x0 for j in range(self.dim)]
        return _freeze(np.stack(cols, axis=-1))

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return _freeze(np.linalg.inv(self.jacobians))

    @cached_property
    def volumes(self) -> np.ndarray:
        return _freeze(np.linalg.det(self.jacobians) / math.factorial(self.dim))

    @cached_property
    def element_diameters(self) -> np.ndarray:
        """h_K = longest edge of each element."""
        h = np.zeros(self.n_elements)
        for a, b in itertools.combinations(range(self.dim + 1), 2):
            d = self.vertices[self.elements[:, a]] - self.vertices[self.elements[:, b]]
            h = np.maximum(h, np.linalg.norm(d, axis=1))
        return _freeze(h)

    @property
    def h(self) -> float:
        return float(self.element_diameters.max())

    def shape_ratios(self) -> np.ndarray:
        """h_K / rho_K with rho_K the inscribed ball diameter."""
        loc = self.local_faces
        total = np.zeros(self.n_elements)
        for lf in range(self.dim + 1):
            verts = self.vertices[self.elements[:, loc[lf]]]
            total += _simplex_measures(verts)
        rho = 2.0 * self.dim * self.volumes / total
        return self.element_diameters / rho

    def check_shape(self) -> float:
        ratio = float(self.shape_ratios().max())
        if ratio > SHAPE_WARNING_RATIO:
            logger.warning("mesh shape ratio h_K/rho_K = %.1f exceeds %.0f", ratio, SHAPE_WARNING_RATIO)
        return ratio

    # -- faces ---------------------------------------------------------------
    @cached_property
    def local_faces(self) -> np.ndarray:
        """Local vertex indices of each element facet; facet j omits vertex j."""
        n = self.dim + 1
        return np.array([[i for i in range(n) if i != j] for j in range(n)])

    @cached_property
    def _face_data(self):
        ne, nloc = self.n_elements, self.dim + 1
        facets = self.elements[:, self.local_faces]  # (ne, nloc, dim)
        flat = np.sort(facets.reshape(-1, self.dim), axis=1)
        faces, inverse, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise MeshError("face shared by more than two elements")
        elem_of = np.repeat(np.arange(ne), nloc)
        local_of = np.tile(np.arange(nloc), ne)
        order = np.argsort(inverse, kind="stable")
        first = np.zeros(len(faces), dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        first = order[starts]
        second = np.where(counts == 2, order[np.minimum(starts + 1, len(order) - 1)], -1)
        face_elements = np.stack([elem_of[first], np.where(second >= 0, elem_of[second], -1)], axis=1)
        face_local = np.stack([local_of[first], np.where(second >= 0, local_of[second], -1)], axis=1)
        tags = np.full(len(faces), TAG_INTERIOR, dtype=np.int8)
        bmask = counts == 1
        for f in np.flatnonzero(bmask):
            tag = self.boundary.get(tuple(int(v) for v in faces[f]), ROBIN)
            tags[f] = TAG_DIRICHLET if tag == DIRICHLET else TAG_ROBIN
        element_faces = inverse.reshape(ne, nloc)
        return faces, face_elements, face_local, tags, element_faces

    @property
    def faces(self) -> np.ndarray:
        return self._face_data[0]

    @property
    def face_elements(self) -> np.ndarray:
        """(owner, neighbour) per face; neighbour is -1 on the boundary."""
        return self._face_data[1]

    @property
    def face_local_index(self) -> np.ndarray:
        return self._face_data[2]

    @property
    def face_tags(self) -> np.ndarray:
        """0 interior, 1 Dirichlet, 2 Robin."""
        return self._face_data[3]

    @property
    def element_faces(self) -> np.ndarray:
        """Face index of local facet j of each element (facet j omits vertex j)."""
        return self._face_data[4]

    @cached_property
    def _face_geometry(self):
        verts = self.vertices[self.faces]  # (nf, dim, dim)
        owner = self.face_elements[:, 0]
        opposite = self.vertices[self.elements[owner, self.face_local_index[:, 0]]]
        if self.dim == 2:
            t = verts[:, 1] - verts[:, 0]
            normal = np.stack([t[:, 1], -t[:, 0]], axis=1)
        else:
            normal = np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0])
        length = np.linalg.norm(normal, axis=1)
        measure = length if self.dim == 2 else 0.5 * length
        with np.errstate(divide="ignore", invalid="ignore"):
            normal = normal / length[:, None]
        flip = np.einsum("fd,fd->f", opposite - verts[:, 0], normal) > 0
        normal[flip] *= -1.0
        diam = np.zeros(len(verts))
        for a, b in itertools.combinations(range(self.dim), 2):
            diam = np.maximum(diam, np.linalg.norm(verts[:, a] - verts[:, b], axis=1))
        return _freeze(diam), _freeze(measure), _freeze(normal)

    @property
    def face_diameters(self) -> np.ndarray:
        return self._face_geometry[0]

    @property
    def face_measures(self) -> np.ndarray:
        return self._face_geometry[1]

    @property
    def face_normals(self) -> np.ndarray:
        return self._face_geometry[2]

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_tags == TAG_INTERIOR)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_tags != TAG_INTERIOR)

    def is_conforming(self) -> bool:
        """Every face is shared by at most two elements and every face with a
        single element is a tagged boundary face (no hanging vertices)."""
        try:
            faces, fe = self.faces, self.face_elements
        except MeshError:
            return False
        single = np.flatnonzero(fe[:, 1] < 0)
        return all(tuple(int(v) for v in faces[f]) in self.boundary for f in single)

    def info(self) -> dict:
        tags = self.face_tags
        return {
            "dim": self.dim,
            "vertices": self.n_vertices,
            "elements": self.n_elements,
            "faces": self.n_faces,
            "interior_faces": int(np.sum(tags == TAG_INTERIOR)),
            "dirichlet_faces": int(np.sum(tags == TAG_DIRICHLET)),
            "robin_faces": int(np.sum(tags == TAG_ROBIN)),
            "h": self.h,
            "measure": float(self.volumes.sum()),
            "max_shape_ratio": float(self.shape_ratios().max()),
        }


def _simplex_measures(verts: np.ndarray) -> np.ndarray:
    """Measures of (n, k+1, dim) simplices of dimension k = dim - 1."""
    k = verts.shape[1] - 1
    edges = verts[:, 1:] - verts[:, :1]
    gram = np.einsum("nid,njd->nij", edges, edges)
    return np.sqrt(np.maximum(np.linalg.det(gram), 0.0)) / math.factorial(k)


def face_quadrature_geometry(mesh: SimplicialMesh, face: int) -> FaceGeometry:
    """Diameter, measure and owner-outward unit normal of one face."""
    if not 0 <= face < mesh.n_faces:
        raise IndexError(f"face index {face} out of range")
    measure = float(mesh.face_measures[face])
    if not measure > 0:
        raise MeshError(f"degenerate face {face}")
    return FaceGeometry(
        diameter=float(mesh.face_diameters[face]),
        measure=measure,
        normal=mesh.face_normals[face].copy(),
    )


# ---------------------------------------------------------------------------
# Structured generators
# ---------------------------------------------------------------------------
def _grid_triangles(nx: int, ny: int, keep=None):
    """Cell-wise triangles of an (nx, ny) grid, diagonal lower-left to upper-right."""
    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            if keep is not None and not keep(i, j):
                continue
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return np.array(tris, dtype=np.int64)


def _boundary_from_elements(elements: np.ndarray, dim: int, tag_of) -> dict:
    loc = [[i for i in range(dim + 1) if i != j] for j in range(dim + 1)]
    facets = np.sort(elements[:, loc].reshape(-1, dim), axis=1)
    faces, counts = np.unique(facets, axis=0, return_counts=True)
    return {tuple(int(v) for v in f): tag_of(f) for f in faces[counts == 1]}


def _compact(vertices: np.ndarray, elements: np.ndarray):
    used = np.unique(elements)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[elements]


def square(n: int, lower: float = 0.0, upper: float = 1.0) -> SimplicialMesh:
    """Square (lower, upper)^2 with n x n cells, two triangles per cell."""
    if n < 1:
        raise MeshError("n must be >= 1")
    if not upper > lower:
        raise MeshError("upper must exceed lower")
    x = np.linspace(lower, upper, n + 1)
    xx, yy = np.meshgrid(x, x)
    verts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    elems = _grid_triangles(n, n)
    bnd = _boundary_from_elements(elems, 2, lambda f: ROBIN)
    return SimplicialMesh(verts, elems, bnd)


def unit_square(n: int) -> SimplicialMesh:
    return square(n, 0.0, 1.0)


def l_shape(n: int) -> SimplicialMesh:
    """(-1,1)^2 minus [0,1) x (-1,0]; each unit square has n x n cells."""
    if n < 1:
        raise MeshError("n must be >= 1")
    m = 2 * n
    x = np.linspace(-1.0, 1.0, m + 1)
    xx, yy = np.meshgrid(x, x)
    verts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    elems = _grid_triangles(m, m, keep=lambda i, j: not (i >= n and j < n))
    verts, elems = _compact(verts, elems)
    bnd = _boundary_from_elements(elems, 2, lambda f: ROBIN)
    return SimplicialMesh(verts, elems, bnd)


def cube(n: int) -> SimplicialMesh:
    """(-1,1)^3 with n^3 cells, each split into six Kuhn tetrahedra."""
    if n < 1:
        raise MeshError("n must be >= 1")
    x = np.linspace(-1.0, 1.0, n + 1)
    zz, yy, xx = np.meshgrid(x, x, x, indexing="ij")
    verts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def vid(i, j, k):
        return (k * (n + 1) + j) * (n + 1) + i

    tets = []
    perms = list(itertools.permutations(range(3)))
    for k in range(n):
        for j in range(n):
            for i in range(n):
                for perm in perms:
                    p = [i, j, k]
                    path = [vid(*p)]
                    for axis in perm:
                        p[axis] += 1
                        path.append(vid(*p))
                    tets.append(path)
    elems = _orient(verts, np.array(tets, dtype=np.int64))
    bnd = _boundary_from_elements(elems, 3, lambda f: ROBIN)
    return SimplicialMesh(verts, elems, bnd)


def annulus(a: float = 1.0, segments: int = 64, n_layers: int | None = None) -> SimplicialMesh:
    """Polygonal ring a < r < 2a; inner ring Dirichlet, outer ring Robin.

    Both circles are approximated by ``segments``-gons.  The default number
    of radial layers keeps the cells close to unit aspect ratio.
    """
    if not a > 0:
        raise MeshError("a must be positive")
    if segments < 16:
        raise MeshError("segments must be >= 16")
    if n_layers is None:
        n_layers = max(1, round(segments * math.log(2.0) / (2.0 * math.pi)))
    if n_layers < 1:
        raise MeshError("n_layers must be >= 1")
    radii = a * np.exp(np.linspace(0.0, math.log(2.0), n_layers + 1))
    radii[0], radii[-1] = a, 2.0 * a
    theta = 2.0 * math.pi * np.arange(segments) / segments
    verts = np.concatenate(
        [np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1) for r in radii]
    )

    def vid(layer, i):
        return layer * segments + (i % segments)

    tris = []
    for layer in range(n_layers):
        for i in range(segments):
            v00, v10 = vid(layer, i), vid(layer, i + 1)
            v01, v11 = vid(layer + 1, i), vid(layer + 1, i + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    elems = _orient(verts, np.array(tris, dtype=np.int64))
    inner = set(range(segments))
    bnd = _boundary_from_elements(
        elems, 2, lambda f: DIRICHLET if int(f[0]) in inner and int(f[1]) in inner else ROBIN
    )
    return SimplicialMesh(verts, elems, bnd)


def generate_structured(domain: str, **params) -> SimplicialMesh:
    """Dispatch on domain name: unit_square, square, cube, l_shape, annulus."""
    builders = {
        "unit_square": unit_square,
        "square": square,
        "cube": cube,
        "l_shape": l_shape,
        "annulus": annulus,
    }
    if domain not in builders:
        raise MeshError(f"unknown domain {domain!r}")
    return builders[domain](**params)


# ---------------------------------------------------------------------------
# Uniform refinement
# ---------------------------------------------------------------------------
def _edge_midpoints(mesh: SimplicialMesh):
    pairs = list(itertools.combinations(range(mesh.dim + 1), 2))
    e = mesh.elements[:, pairs]  # (ne, npairs, 2)
    flat = np.sort(e.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(flat, axis=0, return_inverse=True)
    mids = mesh.n_vertices + inverse.reshape(len(mesh.elements), len(pairs))
    new_verts = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    lookup = {(int(a), int(b)): mesh.n_vertices + i for i, (a, b) in enumerate(edges)}
    return pairs, mids, np.vstack([mesh.vertices, new_verts]), lookup


def _tet_children(v, m, verts):
    """Eight children of tetrahedron v with midpoints m[(i, j)].

    The interior diagonal joins the midpoints of an opposite edge pair; we
    take the shortest one, preferring the pair whose longer edge is shortest.
    This reproduces the Kuhn-preserving choice on cube meshes.
    """
    opp = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]

    def key(pair):
        (a, b), (c, d) = pair
        diag = np.linalg.norm(verts[m[a, b]] - verts[m[c, d]])
        le = max(np.linalg.norm(verts[v[a]] - verts[v[b]]), np.linalg.norm(verts[v[c]] - verts[v[d]]))
        return (round(diag, 12), round(le, 12))

    (a, b), (c, d) = min(opp, key=key)
    corners = []
    for i in range(4):
        corners.append([v[i] if j == i else m[min(i, j), max(i, j)] for j in range(4)])
    mab, mcd = m[a, b], m[c, d]
    # the inner octahedron has vertices at the six midpoints; split along mab-mcd
    ring = [m[min(a, c), max(a, c)], m[min(c, b), max(c, b)], m[min(b, d), max(b, d)], m[min(d, a), max(d, a)]]
    inner = [[mab, mcd, ring[i], ring[(i + 1) % 4]] for i in range(4)]
    return corners + inner


def refine_uniform(mesh: SimplicialMesh) -> SimplicialMesh:
    """Red refinement: 4 similar triangles in 2D, 8 tetrahedra in 3D."""
    pairs, mids, verts, lookup = _edge_midpoints(mesh)
    index = {p: k for k, p in enumerate(pairs)}
    children = []
    for e, v in enumerate(mesh.elements):
        m = {p: mids[e, index[p]] for p in pairs}
        if mesh.dim == 2:
            children += [
                (v[0], m[0, 1], m[0, 2]),
                (m[0, 1], v[1], m[1, 2]),
                (m[0, 2], m[1, 2], v[2]),
                (m[0, 1], m[1, 2], m[0, 2]),
            ]
        else:
            children += _tet_children(v, m, verts)
    elems = _orient(verts, np.array(children, dtype=np.int64))

    def mid(a, b):
        return lookup[(min(a, b), max(a, b))]

    bnd = {}
    for face, tag in mesh.boundary.items():
        if mesh.dim == 2:
            a, b = face
            for f in ((a, mid(a, b)), (mid(a, b), b)):
                bnd[tuple(sorted(f))] = tag
        else:
            a, b, c = face
            mab, mbc, mac = mid(a, b), mid(b, c), mid(a, c)
            for f in ((a, mab, mac), (mab, b, mbc), (mac, mbc, c), (mab, mbc, mac)):
                bnd[tuple(sorted(f))] = tag
    return SimplicialMesh(verts, elems, bnd)


# ---------------------------------------------------------------------------
# Longest-edge bisection with conforming closure
# ---------------------------------------------------------------------------
class _Bisector:
    def __init__(self, mesh: SimplicialMesh):
        self.dim = mesh.dim
        self.verts = [tuple(p) for p in mesh.vertices.tolist()]
        self.elems = {i: tuple(int(v) for v in e) for i, e in enumerate(mesh.elements)}
        self.children: dict[int, tuple[int, int]] = {}
        self.boundary = dict(mesh.boundary)
        self.midpoint: dict[tuple[int, int], int] = {}
        self.edge_elems: dict[tuple[int, int], set] = {}
        self.next_id = len(self.elems)
        for eid, e in self.elems.items():
            self._link(eid, e)

    def _edges(self, e):
        return [(min(a, b), max(a, b)) for a, b in itertools.combinations(e, 2)]

    def _link(self, eid, e):
        for ed in self._edges(e):
            self.edge_elems.setdefault(ed, set()).add(eid)

    def _unlink(self, eid, e):
        for ed in self._edges(e):
            s = self.edge_elems[ed]
            s.discard(eid)
            if not s:
                del self.edge_elems[ed]

    def _edge_key(self, ed):
        a, b = ed
        pa, pb = self.verts[a], self.verts[b]
        length2 = sum((x - y) ** 2 for x, y in zip(pa, pb))
        # total order on edges: longer first, then lexicographically smaller
        return (length2, -a, -b)

    def longest(self, eid):
        return max(self._edges(self.elems[eid]), key=self._edge_key)

    def _split_edge(self, ed):
        a, b = ed
        if ed not in self.midpoint:
            pa, pb = self.verts[a], self.verts[b]
            self.verts.append(tuple(0.5 * (x + y) for x, y in zip(pa, pb)))
            self.midpoint[ed] = len(self.verts) - 1
        m = self.midpoint[ed]
        for eid in sorted(self.edge_elems[ed]):
            e = self.elems.pop(eid)
            self._unlink(eid, e)
            kids = []
            for old in (b, a):
                child = tuple(m if v == old else v for v in e)
                cid = self.next_id
                self.next_id += 1
                self.elems[cid] = child
                self._link(cid, child)
                kids.append(cid)
            self.children[eid] = tuple(kids)
            # boundary faces of e that contain the split edge
            for face in itertools.combinations(e, self.dim):
                if a in face and b in face:
                    key = tuple(sorted(face))
                    tag = self.boundary.pop(key, None)
                    if tag is not None:
                        for old in (b, a):
                            self.boundary[tuple(sorted(m if v == old else v for v in face))] = tag

    def bisect(self, eid):
        while eid in self.elems:
            ed = self.longest(eid)
            blocker = None
            for other in sorted(self.edge_elems[ed]):
                if other != eid and self.longest(other) != ed:
                    blocker = other
                    break
            if blocker is None:
                self._split_edge(ed)
            else:
                self.bisect(blocker)

    def leaves(self, eid):
        if eid not in self.children:
            return [eid]
        out = []
        for c in self.children[eid]:
            out.extend(self.leaves(c))
        return out


def refine_bisection(mesh: SimplicialMesh, marked) -> SimplicialMesh:
    """Bisect every marked element across its longest edge, with closure.

    Elements that are neither marked nor needed for conformity keep their
    vertex tuples unchanged.  Child elements replace their parent in place
    in the element ordering; new vertices are appended.
    """
    marked = sorted({int(i) for i in marked})
    if not marked:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_elements:
        raise IndexError("marked element index out of range")
    work = _Bisector(mesh)
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10000))
    try:
        for eid in marked:
            # an element already split by an earlier closure counts as bisected
            if eid in work.elems:
                work.bisect(eid)
    finally:
        sys.setrecursionlimit(limit)
    order = []
    for eid in range(mesh.n_elements):
        order.extend(work.leaves(eid))
    elems = np.array([work.elems[i] for i in order], dtype=np.int64)
    return SimplicialMesh(np.array(work.verts), elems, work.boundary)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------
def write_mesh(mesh: SimplicialMesh, path) -> None:
    lines = [f"DIM {mesh.dim}", f"VERTICES {mesh.n_vertices}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines.append(f"ELEMENTS {mesh.n_elements}")
    lines += [" ".join(str(int(i)) for i in e) for e in mesh.elements]
    lines.append(f"BOUNDARY {len(mesh.boundary)}")
    lines += [" ".join(str(i) for i in f) + f" {tag}" for f, tag in sorted(mesh.boundary.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> SimplicialMesh:
    tokens = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    it = iter(tokens)

    def header(name):
        try:
            tok = next(it)
        except StopIteration:
            raise MeshError(f"missing {name} section") from None
        if len(tok) != 2 or tok[0].upper() != name:
            raise MeshError(f"expected '{name} <count>', got {' '.join(tok)!r}")
        return int(tok[1])

    try:
        dim = header("DIM")
        nv = header("VERTICES")
        verts = [[float(c) for c in next(it)] for _ in range(nv)]
        ne = header("ELEMENTS")
        elems = [[int(c) for c in next(it)] for _ in range(ne)]
        nb = header("BOUNDARY")
        bnd = {}
        for _ in range(nb):
            tok = next(it)
            bnd[tuple(int(c) for c in tok[:dim])] = tok[dim].lower()
    except StopIteration:
        raise MeshError("unexpected end of mesh file") from None
    if any(len(v) != dim for v in verts):
        raise MeshError("vertex coordinate count does not match DIM")
    verts = np.array(verts, dtype=float).reshape(-1, dim)
    elems = np.array(elems, dtype=np.int64).reshape(-1, dim + 1)
    return SimplicialMesh(verts, elems, bnd)
