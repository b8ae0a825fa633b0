"""Reference-element Lagrange bases and simplex quadrature.

The reference simplex has vertices ``0, e_1, ..., e_d``.  Scalar basis
functions are nodal Lagrange polynomials on the uniform lattice
``{i/m}``; they are represented through their monomial coefficients,
obtained by inverting the Vandermonde matrix at the lattice nodes.

Quadrature rules are conical (collapsed-coordinate) products of
Gauss-Legendre and Gauss-Jacobi rules, which have positive weights and
arbitrary exactness.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 4
MAX_EXACTNESS = 24

SCALAR = "scalar"
VECTOR = "vector"


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on a reference simplex of dimension ``dim``.

    ``points`` are barycentric coordinates, shape (nq, dim+1); ``weights``
    sum to the reference measure 1/dim!.
    """

    dim: int
    points: np.ndarray
    weights: np.ndarray
    exactness: int

    @property
    def ref_points(self) -> np.ndarray:
        """Cartesian reference coordinates (drop the first barycentric)."""
        return self.points[:, 1:]

    def __len__(self) -> int:
        return len(self.weights)


def _gauss_jacobi01(n: int, alpha: float):
    """n-point rule on [0, 1] for the weight (1 - t)^alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def _collapsed_rule(dim: int, exactness: int) -> QuadratureRule:
    if dim == 0:
        return QuadratureRule(0, np.ones((1, 1)), np.ones(1), exactness)
    n = exactness // 2 + 1
    rules = [_gauss_jacobi01(n, float(j)) for j in range(dim)]
    pts = []
    wts = []
    for combo in itertools.product(range(n), repeat=dim):
        # t_j carries weight (1-t_j)^j; x_j = t_j * prod_{i>j}(1 - t_i)
        t = [rules[j][0][combo[j]] for j in range(dim)]
        w = np.prod([rules[j][1][combo[j]] for j in range(dim)])
        x = np.empty(dim)
        scale = 1.0
        for j in range(dim - 1, -1, -1):
            x[j] = t[j] * scale
            scale *= 1.0 - t[j]
        pts.append(np.concatenate([[1.0 - x.sum()], x]))
        wts.append(w)
    pts = np.array(pts)
    wts = np.array(wts)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(dim, pts, wts, exactness)


def volume_rule(dim: int, exactness: int) -> QuadratureRule:
    """Rule on the reference triangle/tetrahedron exact to ``exactness``."""
    if dim not in (2, 3):
        raise ValueError(f"volume rules exist for dim 2 and 3, got {dim}")
    return simplex_rule(dim, exactness)


def face_rule(dim: int, exactness: int) -> QuadratureRule:
    """Rule on a reference face (segment for dim=1, triangle for dim=2)."""
    if dim not in (1, 2):
        raise ValueError(f"face rules exist for dim 1 and 2, got {dim}")
    return simplex_rule(dim, exactness)


def simplex_rule(dim: int, exactness: int) -> QuadratureRule:
    if exactness < 0 or exactness > MAX_EXACTNESS:
        raise ValueError(f"quadrature exactness must lie in [0, {MAX_EXACTNESS}], got {exactness}")
    return _collapsed_rule(dim, int(exactness))


def exponents(dim: int, degree: int) -> np.ndarray:
    """Monomial exponent tuples of total degree <= degree, graded order."""
    out = []
    for total in range(degree + 1):
        for alpha in itertools.product(range(total + 1), repeat=dim):
            if sum(alpha) == total:
                out.append(alpha[::-1])
    return np.array(out, dtype=int).reshape(-1, dim)


def lattice_nodes(dim: int, degree: int) -> np.ndarray:
    """Uniform Lagrange nodes i/degree in the reference simplex.

    Vertices come first (in reference-vertex order), which makes the
    degree-1 basis coincide with the barycentric coordinates.
    """
    pts = []
    for idx in itertools.product(range(degree + 1), repeat=dim):
        if sum(idx) <= degree:
            pts.append(np.array(idx, dtype=float) / degree)
    pts = np.array(pts)
    verts = np.vstack([np.zeros(dim), np.eye(dim)])
    is_vertex = np.zeros(len(pts), dtype=bool)
    order = []
    for v in verts:
        j = int(np.argmin(np.abs(pts - v).sum(axis=1)))
        order.append(j)
        is_vertex[j] = True
    order.extend(np.flatnonzero(~is_vertex).tolist())
    return pts[order]


def _monomials(x: np.ndarray, exps: np.ndarray):
    """Monomial values and gradients at points x (npts, dim)."""
    npts, dim = x.shape
    vals = np.ones((npts, len(exps)))
    for d in range(dim):
        vals *= x[:, d : d + 1] ** exps[:, d]
    grads = np.zeros((npts, len(exps), dim))
    for d in range(dim):
        e = exps[:, d]
        g = np.where(e > 0, e, 0).astype(float) * np.ones((npts, 1))
        for dd in range(dim):
            power = exps[:, dd] - (1 if dd == d else 0)
            g = g * x[:, dd : dd + 1] ** np.maximum(power, 0)
        grads[:, :, d] = g
    return vals, grads


@dataclass(frozen=True)
class DGSpace:
    """Fully discontinuous degree-m space on a simplicial mesh.

    Global numbering: ``element * dofs_per_element + local``.  Vector spaces
    order their local functions as all scalar functions times direction 0,
    then times direction 1, and so on.
    """

    dim: int
    degree: int
    kind: str = SCALAR
    _coeffs: np.ndarray = field(init=False, repr=False, compare=False)
    _exps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if not 1 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"degree must lie in [1, {MAX_DEGREE}], got {self.degree}")
        if self.kind not in (SCALAR, VECTOR):
            raise ValueError(f"unknown space kind {self.kind!r}")
        coeffs, exps = _reference_basis(self.dim, self.degree)
        object.__setattr__(self, "_coeffs", coeffs)
        object.__setattr__(self, "_exps", exps)

    @property
    def n_scalar(self) -> int:
        return comb(self.degree + self.dim, self.dim)

    @property
    def dofs_per_element(self) -> int:
        return self.n_scalar * (self.dim if self.kind == VECTOR else 1)

    def n_dofs(self, n_elements: int) -> int:
        return self.dofs_per_element * n_elements

    def global_index(self, element, local):
        return np.asarray(element) * self.dofs_per_element + np.asarray(local)

    @property
    def nodes(self) -> np.ndarray:
        return lattice_nodes(self.dim, self.degree)

    def eval_reference(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Scalar basis values (npts, n) and reference gradients (npts, n, dim)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals, grads = _monomials(pts, self._exps)
        phi = vals @ self._coeffs
        dphi = np.einsum("pmd,mn->pnd", grads, self._coeffs)
        return phi, dphi

    def monomial_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """(exponents, coefficient matrix) with phi_n = sum_m C[m, n] x^exp_m."""
        return self._exps, self._coeffs


@lru_cache(maxsize=None)
def _reference_basis(dim: int, degree: int):
    exps = exponents(dim, degree)
    nodes = lattice_nodes(dim, degree)
    vander, _ = _monomials(nodes, exps)
    coeffs = np.linalg.inv(vander)
    coeffs.setflags(write=False)
    return coeffs, exps


def eval_basis(space: DGSpace, b_inv: np.ndarray, points) -> tuple[np.ndarray, np.ndarray]:
    """Basis values and physical gradients at reference points of one element.

    ``b_inv`` is the inverse of the element's affine Jacobian.  For a vector
    space the values have shape (npts, n_scalar*dim, dim).
    """
    phi, dphi = space.eval_reference(points)
    grads = dphi @ b_inv
    if space.kind == SCALAR:
        return phi, grads
    npts, ns = phi.shape
    d = space.dim
    vals = np.zeros((npts, ns * d, d))
    vgrads = np.zeros((npts, ns * d, d, d))
    for k in range(d):
        vals[:, k * ns : (k + 1) * ns, k] = phi
        vgrads[:, k * ns : (k + 1) * ns, k, :] = grads
    return vals, vgrads


def monomial_integral(exps) -> float:
    """Exact integral of x^exps over the reference simplex."""
    exps = [int(e) for e in exps]
    dim = len(exps)
    num = np.prod([factorial(e) for e in exps])
    return float(num) / factorial(sum(exps) + dim)
