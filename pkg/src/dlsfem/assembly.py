"""Least-squares system for the first-order Helmholtz system.

Unknowns are (u_h, p_h) in V_h^m x (V_h^m)^d with a real nodal basis and
complex coefficients.  The functional

    J(u, p) = sum_K ||div p + k u + f/k||^2 + ||grad u - k p||^2
            + sum_{interior e} s/h_e (||[u]||^2 + ||[n.p]||^2)
            + sum_{Dirichlet e} s/h_e ||u - g0||^2
            + sum_{Robin e} s/h_e ||n.p + i u - g/k||^2

(s = ``penalty_scale``) is minimised; its Euler-Lagrange equations give
``A x = b`` with ``A[i, j] = a(phi_j; phi_i)`` Hermitian positive definite
and ``b[i] = l(phi_i)``, so that ``J(x) = x* A x - 2 Re(x* b) + c``.

Global numbering puts all scalar DOFs first: u DOF ``e*ns + l`` and p DOF
``N_u + e*d*ns + j*ns + l`` for direction j.

The functional itself is also evaluated directly from the coefficient
vector (``functional_terms``), without touching the matrix; the two paths
check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fespace import DGSpace, face_rule, volume_rule
from .mesh import TAG_DIRICHLET, TAG_INTERIOR, TAG_ROBIN, SimplicialMesh
from .problems import ProblemSpec

CHUNK_ENTRIES = 4_000_000
POINT_TOLERANCE = 1e-10


class AssemblyError(ValueError):
    pass


def quadrature_order(degree: int) -> int:
    return 2 * degree + 2


@dataclass(frozen=True)
class DofLayout:
    """Global numbering of the product space on one mesh."""

    n_elements: int
    dim: int
    degree: int

    @property
    def n_scalar(self) -> int:
        return math.comb(self.degree + self.dim, self.dim)

    @property
    def n_local(self) -> int:
        return self.n_scalar * (1 + self.dim)

    @property
    def n_u(self) -> int:
        return self.n_elements * self.n_scalar

    @property
    def n_p(self) -> int:
        return self.n_elements * self.n_scalar * self.dim

    @property
    def size(self) -> int:
        return self.n_u + self.n_p

    def element_dofs(self, elements=None) -> np.ndarray:
        """(n, n_local) global indices: u functions, then p by direction."""
        e = np.arange(self.n_elements) if elements is None else np.asarray(elements)
        ns, d = self.n_scalar, self.dim
        u = e[:, None] * ns + np.arange(ns)
        p = self.n_u + e[:, None] * (d * ns) + np.arange(d * ns)
        return np.concatenate([u, p], axis=1)

    def global_index(self, element: int, local: int, field: str, direction: int = 0) -> int:
        if field == "u":
            return element * self.n_scalar + local
        if field == "p":
            return self.n_u + element * self.dim * self.n_scalar + direction * self.n_scalar + local
        raise ValueError(f"unknown field {field!r}")

    def dof_elements(self) -> np.ndarray:
        """Element owning each global DOF."""
        ns, d = self.n_scalar, self.dim
        return np.concatenate([
            np.repeat(np.arange(self.n_elements), ns),
            np.repeat(np.arange(self.n_elements), d * ns),
        ])


@dataclass
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    constant: float
    layout: DofLayout
    diagonal_blocks: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.layout.size

    def quadratic_form(self, x) -> float:
        """x* A x - 2 Re(x* b) + c, the functional value at x."""
        x = np.asarray(x)
        return float(np.real(np.vdot(x, self.matrix @ x)) - 2 * np.real(np.vdot(x, self.rhs)) + self.constant)


# ---------------------------------------------------------------------------
# basis evaluation helpers
# ---------------------------------------------------------------------------
def _chunks(n: int, per_item: int):
    step = max(1, CHUNK_ENTRIES // max(per_item, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def map_to_reference(mesh: SimplicialMesh, elements, points) -> np.ndarray:
    """Reference coordinates of physical points (n, q, dim) in elements (n,)."""
    x0 = mesh.vertices[mesh.elements[elements, 0]]
    return np.einsum("nij,nqj->nqi", mesh.inverse_jacobians[elements], points - x0[:, None, :])


def basis_at(space: DGSpace, mesh: SimplicialMesh, elements, points):
    """Scalar basis values (n, q, ns) and physical gradients (n, q, ns, dim)."""
    xi = map_to_reference(mesh, elements, points)
    n, q, d = xi.shape
    phi, dphi = space.eval_reference(xi.reshape(-1, d))
    phi = phi.reshape(n, q, -1)
    dphi = dphi.reshape(n, q, -1, d)
    grads = np.einsum("nqld,ndj->nqlj", dphi, mesh.inverse_jacobians[elements])
    return phi, grads


def volume_points(mesh: SimplicialMesh, rule, elements) -> tuple[np.ndarray, np.ndarray]:
    """Physical quadrature points (n, q, dim) and weights (n, q)."""
    verts = mesh.vertices[mesh.elements[elements]]  # (n, d+1, d)
    pts = np.einsum("qv,nvd->nqd", rule.points, verts)
    jac = np.abs(np.linalg.det(mesh.jacobians[elements]))
    return pts, jac[:, None] * rule.weights[None, :]


def face_points(mesh: SimplicialMesh, rule, faces) -> tuple[np.ndarray, np.ndarray]:
    verts = mesh.vertices[mesh.faces[faces]]  # (n, d, d)
    pts = np.einsum("qv,nvd->nqd", rule.points, verts)
    scale = mesh.face_measures[faces] * math.factorial(mesh.dim - 1)
    return pts, scale[:, None] * rule.weights[None, :]


def _check(mesh: SimplicialMesh, degree: int, problem: ProblemSpec | None):
    if problem is not None and problem.dim != mesh.dim:
        raise AssemblyError(f"problem dimension {problem.dim} does not match mesh dimension {mesh.dim}")
    if np.any(mesh.volumes <= 0):
        raise AssemblyError("element with non-positive volume")
    return DGSpace(mesh.dim, degree), DofLayout(mesh.n_elements, mesh.dim, degree)


# ---------------------------------------------------------------------------
# matrix and right-hand side
# ---------------------------------------------------------------------------
def _volume_operators(phi, grads, k):
    """Rows of (div p + k u) and (grad u - k p) at quadrature points.

    phi (n, q, ns) or (q, ns) broadcastable; grads (n, q, ns, d).
    Returns r_div (n, q, nloc) and r_grad (n, q, d, nloc).
    """
    n, q, ns, d = grads.shape
    phi = np.broadcast_to(phi, (n, q, ns))
    r_div = np.concatenate([k * phi] + [grads[..., j] for j in range(d)], axis=-1)
    r_grad = np.zeros((n, q, d, ns * (1 + d)))
    for j in range(d):
        r_grad[:, :, j, :ns] = grads[..., j]
        r_grad[:, :, j, ns * (1 + j) : ns * (2 + j)] = -k * phi
    return r_div, r_grad


def assemble(
    mesh: SimplicialMesh,
    degree: int,
    problem: ProblemSpec,
    penalty_scale: float = 1.0,
) -> AssembledSystem:
    """Assemble the Hermitian least-squares matrix and right-hand side."""
    space, layout = _check(mesh, degree, problem)
    k = problem.k
    d, ns, nloc = mesh.dim, layout.n_scalar, layout.n_local
    order = quadrature_order(degree)
    vrule = volume_rule(d, order)
    frule = face_rule(d - 1, order)
    ne = mesh.n_elements

    blocks = np.zeros((ne, nloc, nloc), dtype=complex)
    rhs_loc = np.zeros((ne, nloc), dtype=complex)
    constant = 0.0

    phi_ref, _ = space.eval_reference(vrule.ref_points)
    for sl in _chunks(ne, len(vrule) * nloc * (d + 2)):
        elems = np.arange(ne)[sl]
        pts, wts = volume_points(mesh, vrule, elems)
        _, grads = basis_at(space, mesh, elems, pts)
        r_div, r_grad = _volume_operators(phi_ref[None], grads, k)
        blocks[sl] += np.einsum("nq,nqi,nqj->nij", wts, r_div, r_div)
        blocks[sl] += np.einsum("nq,nqdi,nqdj->nij", wts, r_grad, r_grad)
        fk = problem.f_scaled(pts)
        rhs_loc[sl] -= np.einsum("nq,nq,nqi->ni", wts, fk, r_div)
        constant += float(np.sum(wts * np.abs(fk) ** 2))

    tags = mesh.face_tags
    owner, neigh = mesh.face_elements[:, 0], mesh.face_elements[:, 1]
    normals = mesh.face_normals
    penalty = penalty_scale / mesh.face_diameters

    off_rows, off_cols, off_vals = [], [], []
    interior = np.flatnonzero(tags == TAG_INTERIOR)
    udofs = layout.element_dofs()[:, :ns]
    pdofs = layout.element_dofs()[:, ns:]
    for sl in _chunks(len(interior), len(frule) * ns * 4):
        f = interior[sl]
        pts, wts = face_points(mesh, frule, f)
        wts = wts * penalty[f, None]
        phi_p, _ = basis_at(space, mesh, owner[f], pts)
        phi_m, _ = basis_at(space, mesh, neigh[f], pts)
        mpp = np.einsum("nq,nqi,nqj->nij", wts, phi_p, phi_p)
        mmm = np.einsum("nq,nqi,nqj->nij", wts, phi_m, phi_m)
        mpm = -np.einsum("nq,nqi,nqj->nij", wts, phi_p, phi_m)
        nn = np.einsum("ni,nj->nij", normals[f], normals[f])
        # u-u blocks: jump of u; p-p blocks: jump of n.p, i.e. kron(n n^T, M)
        kron = lambda m: np.einsum("nab,nij->naibj", nn, m).reshape(len(f), d * ns, d * ns)  # noqa: E731
        for side, m in ((owner[f], mpp), (neigh[f], mmm)):
            np.add.at(blocks, (side, slice(None, ns), slice(None, ns)), m)
            np.add.at(blocks, (side, slice(ns, None), slice(ns, None)), kron(m))
        kpm = kron(mpm)
        for rows, cols, vals in (
            (udofs[owner[f]], udofs[neigh[f]], mpm),
            (pdofs[owner[f]], pdofs[neigh[f]], kpm),
        ):
            r = np.broadcast_to(rows[:, :, None], vals.shape)
            c = np.broadcast_to(cols[:, None, :], vals.shape)
            off_rows += [r.ravel(), c.ravel()]
            off_cols += [c.ravel(), r.ravel()]
            off_vals += [vals.ravel(), vals.ravel()]

    dirichlet = np.flatnonzero(tags == TAG_DIRICHLET)
    if len(dirichlet):
        pts, wts = face_points(mesh, frule, dirichlet)
        wts = wts * penalty[dirichlet, None]
        phi, _ = basis_at(space, mesh, owner[dirichlet], pts)
        m = np.einsum("nq,nqi,nqj->nij", wts, phi, phi)
        np.add.at(blocks, (owner[dirichlet], slice(None, ns), slice(None, ns)), m)
        g0 = problem.dirichlet_data(pts)
        np.add.at(rhs_loc, (owner[dirichlet], slice(None, ns)), np.einsum("nq,nq,nqi->ni", wts, g0, phi))
        constant += float(np.sum(wts * np.abs(g0) ** 2))

    robin = np.flatnonzero(tags == TAG_ROBIN)
    if len(robin):
        pts, wts = face_points(mesh, frule, robin)
        wts = wts * penalty[robin, None]
        phi, _ = basis_at(space, mesh, owner[robin], pts)
        n_r = normals[robin]
        ops = np.concatenate([1j * phi] + [n_r[:, None, None, j] * phi for j in range(d)], axis=-1)
        m = np.einsum("nq,nqi,nqj->nij", wts, ops.conj(), ops)
        np.add.at(blocks, owner[robin], m)
        nq_normals = np.broadcast_to(n_r[:, None, :], pts.shape)
        gk = problem.g_scaled(pts, nq_normals)
        np.add.at(rhs_loc, owner[robin], np.einsum("nq,nq,nqi->ni", wts, gk, ops.conj()))
        constant += float(np.sum(wts * np.abs(gk) ** 2))

    dofs = layout.element_dofs()
    rows = np.broadcast_to(dofs[:, :, None], blocks.shape).ravel()
    cols = np.broadcast_to(dofs[:, None, :], blocks.shape).ravel()
    all_rows = np.concatenate([rows] + off_rows)
    all_cols = np.concatenate([cols] + off_cols)
    all_vals = np.concatenate([blocks.ravel()] + [v.astype(complex) for v in off_vals])
    n = layout.size
    matrix = sp.coo_matrix((all_vals, (all_rows, all_cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    rhs = np.zeros(n, dtype=complex)
    np.add.at(rhs, dofs, rhs_loc)
    return AssembledSystem(matrix, rhs, constant, layout, diagonal_blocks=blocks)


# ---------------------------------------------------------------------------
# direct evaluation of the discrete fields and the functional
# ---------------------------------------------------------------------------
@dataclass
class Fields:
    """Discrete fields at a set of points, leading shape (n, q)."""

    u: np.ndarray
    grad_u: np.ndarray
    p: np.ndarray
    div_p: np.ndarray


def _local_coeffs(layout: DofLayout, coeffs, elements):
    c = np.asarray(coeffs)[layout.element_dofs(elements)]
    ns, d = layout.n_scalar, layout.dim
    return c[:, :ns], c[:, ns:].reshape(len(c), d, ns)


def fields_at(mesh: SimplicialMesh, degree: int, coeffs, elements, points) -> Fields:
    """Evaluate (u_h, grad u_h, p_h, div p_h) at points (n, q, dim) of elements (n,)."""
    space = DGSpace(mesh.dim, degree)
    layout = DofLayout(mesh.n_elements, mesh.dim, degree)
    phi, grads = basis_at(space, mesh, elements, points)
    cu, cp = _local_coeffs(layout, coeffs, elements)
    u = np.einsum("nql,nl->nq", phi, cu)
    grad_u = np.einsum("nqlj,nl->nqj", grads, cu)
    p = np.einsum("nql,njl->nqj", phi, cp)
    div_p = np.einsum("nqlj,njl->nq", grads, cp)
    return Fields(u, grad_u, p, div_p)


def evaluate_solution(mesh: SimplicialMesh, degree: int, coeffs, element: int, point):
    """(u, p, grad u, div p) of the discrete solution at one physical point."""
    coeffs = np.asarray(coeffs)
    layout = DofLayout(mesh.n_elements, mesh.dim, degree)
    if coeffs.shape != (layout.size,):
        raise AssemblyError(f"coefficient vector must have length {layout.size}")
    pt = np.asarray(point, dtype=float).reshape(1, 1, mesh.dim)
    xi = map_to_reference(mesh, np.array([element]), pt)[0, 0]
    bary = np.concatenate([[1.0 - xi.sum()], xi])
    if bary.min() < -POINT_TOLERANCE:
        raise AssemblyError(f"point {tuple(pt.ravel())} lies outside element {element}")
    fl = fields_at(mesh, degree, coeffs, np.array([element]), pt)
    return complex(fl.u[0, 0]), fl.p[0, 0].copy(), fl.grad_u[0, 0].copy(), complex(fl.div_p[0, 0])


@dataclass
class FunctionalTerms:
    """Squared residual contributions of the functional.

    ``volume`` is per element; ``interior``, ``dirichlet`` and ``robin`` are
    per face with the face indices in ``*_faces``.
    """

    volume: np.ndarray
    interior: np.ndarray
    interior_faces: np.ndarray
    dirichlet: np.ndarray
    dirichlet_faces: np.ndarray
    robin: np.ndarray
    robin_faces: np.ndarray

    @property
    def total(self) -> float:
        return float(self.volume.sum() + self.interior.sum() + self.dirichlet.sum() + self.robin.sum())


def functional_terms(
    mesh: SimplicialMesh,
    degree: int,
    problem: ProblemSpec,
    coeffs,
    penalty_scale: float = 1.0,
) -> FunctionalTerms:
    """All residual terms of the functional by direct quadrature."""
    _, layout = _check(mesh, degree, problem)
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (layout.size,):
        raise AssemblyError(f"coefficient vector must have length {layout.size}")
    k, d = problem.k, mesh.dim
    order = quadrature_order(degree)
    vrule, frule = volume_rule(d, order), face_rule(d - 1, order)
    ne = mesh.n_elements

    vol = np.zeros(ne)
    for sl in _chunks(ne, len(vrule) * layout.n_local * 2):
        elems = np.arange(ne)[sl]
        pts, wts = volume_points(mesh, vrule, elems)
        fl = fields_at(mesh, degree, coeffs, elems, pts)
        r1 = fl.div_p + k * fl.u + problem.f_scaled(pts)
        r2 = fl.grad_u - k * fl.p
        vol[sl] = np.sum(wts * (np.abs(r1) ** 2 + np.sum(np.abs(r2) ** 2, axis=-1)), axis=1)

    tags = mesh.face_tags
    owner, neigh = mesh.face_elements[:, 0], mesh.face_elements[:, 1]
    penalty = penalty_scale / mesh.face_diameters
    normals = mesh.face_normals

    interior = np.flatnonzero(tags == TAG_INTERIOR)
    jump = np.zeros(len(interior))
    for sl in _chunks(len(interior), len(frule) * layout.n_local * 4):
        f = interior[sl]
        pts, wts = face_points(mesh, frule, f)
        plus = fields_at(mesh, degree, coeffs, owner[f], pts)
        minus = fields_at(mesh, degree, coeffs, neigh[f], pts)
        n = normals[f][:, None, :]
        ju = plus.u - minus.u
        jp = np.sum(n * (plus.p - minus.p), axis=-1)
        jump[sl] = penalty[f] * np.sum(wts * (np.abs(ju) ** 2 + np.abs(jp) ** 2), axis=1)

    dirichlet = np.flatnonzero(tags == TAG_DIRICHLET)
    dterm = np.zeros(len(dirichlet))
    if len(dirichlet):
        pts, wts = face_points(mesh, frule, dirichlet)
        fl = fields_at(mesh, degree, coeffs, owner[dirichlet], pts)
        res = fl.u - problem.dirichlet_data(pts)
        dterm = penalty[dirichlet] * np.sum(wts * np.abs(res) ** 2, axis=1)

    robin = np.flatnonzero(tags == TAG_ROBIN)
    rterm = np.zeros(len(robin))
    if len(robin):
        pts, wts = face_points(mesh, frule, robin)
        fl = fields_at(mesh, degree, coeffs, owner[robin], pts)
        n = np.broadcast_to(normals[robin][:, None, :], pts.shape)
        res = np.sum(n * fl.p, axis=-1) + 1j * fl.u - problem.g_scaled(pts, n)
        rterm = penalty[robin] * np.sum(wts * np.abs(res) ** 2, axis=1)

    return FunctionalTerms(vol, jump, interior, dterm, dirichlet, rterm, robin)


def evaluate_functional(mesh, degree, problem, coeffs, penalty_scale: float = 1.0) -> float:
    """J_h(u_h, p_h) >= 0 by direct quadrature of every residual term."""
    return functional_terms(mesh, degree, problem, coeffs, penalty_scale).total


# ---------------------------------------------------------------------------
# interpolation and matrix output
# ---------------------------------------------------------------------------
def interpolate(mesh: SimplicialMesh, degree: int, u, p=None) -> np.ndarray:
    """Nodal interpolant of (u, p); p defaults to zero."""
    space = DGSpace(mesh.dim, degree)
    layout = DofLayout(mesh.n_elements, mesh.dim, degree)
    nodes = space.nodes  # reference coordinates
    bary = np.concatenate([1.0 - nodes.sum(axis=1, keepdims=True), nodes], axis=1)
    pts = np.einsum("lv,nvd->nld", bary, mesh.vertices[mesh.elements])
    out = np.zeros(layout.size, dtype=complex)
    dofs = layout.element_dofs()
    ns = layout.n_scalar
    out[dofs[:, :ns]] = u(pts)
    if p is not None:
        pv = p(pts)  # (n, ns, d)
        out[dofs[:, ns:]] = np.transpose(pv, (0, 2, 1)).reshape(mesh.n_elements, -1)
    return out


def write_matrix(system: AssembledSystem, path) -> None:
    """Coordinate text dump: one ``row col re im`` line per stored entry."""
    coo = system.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    data = np.column_stack([coo.row[order], coo.col[order], coo.data.real[order], coo.data.imag[order]])
    header = f"{system.size} {system.size} {coo.nnz}"
    np.savetxt(Path(path), data, fmt=["%d", "%d", "%.17e", "%.17e"], header=header, comments="# ")


def read_matrix(path) -> sp.csr_matrix:
    path = Path(path)
    with path.open() as fh:
        n_rows, n_cols, _ = (int(t) for t in fh.readline().lstrip("# ").split())
    data = np.loadtxt(path, ndmin=2)
    vals = data[:, 2] + 1j * data[:, 3]
    return sp.coo_matrix((vals, (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n_rows, n_cols)).tocsr()
