"""Error norms, the element indicator, Dörfler marking and adaptive refinement."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import mesh as meshmod
from .assembly import (
    DofLayout,
    FunctionalTerms,
    assemble,
    face_points,
    fields_at,
    functional_terms,
    quadrature_order,
    volume_points,
)
from .fespace import face_rule, volume_rule
from .mesh import TAG_DIRICHLET, TAG_INTERIOR, TAG_ROBIN, SimplicialMesh
from .problems import ProblemError, ProblemSpec
from .solver import SolverConfig, solve

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.45


@dataclass
class ErrorReport:
    """Errors of a discrete solution against the exact one.

    ``energy_error`` is the combined energy norm of (u - u_h, p - p_h),
    with jump terms on interior and Dirichlet faces for u, interior faces
    for n.p and the Robin trace ``n.p + i u``.
    """

    energy_error: float
    l2_u: float
    l2_p: float
    functional_value: float
    per_element_eta: np.ndarray
    n_dofs: int
    h_max: float
    energy_parts: dict = field(default_factory=dict)
    reference_norm: float = 0.0

    @property
    def relative_energy_error(self) -> float:
        """Energy error over the exact solution's mesh-independent volume norm."""
        return self.energy_error / self.reference_norm if self.reference_norm > 0 else math.inf


@dataclass
class Indicators:
    """Element indicators in two bookkeeping conventions.

    ``eta`` charges every interior face to both neighbours, so that
    ``sum(eta**2) = J + interior``.  ``eta_split`` gives half of each interior
    face to each side, so ``sum(eta_split**2) = J``.
    """

    eta: np.ndarray
    eta_split: np.ndarray
    functional_value: float
    interior_total: float


@dataclass
class MarkSet:
    marked: np.ndarray
    fraction_parameter: float
    achieved_fraction: float
    all_zero: bool = False


def _face_sum_to_elements(mesh: SimplicialMesh, terms: FunctionalTerms, interior_weight: float):
    out = np.zeros(mesh.n_elements)
    owner, neigh = mesh.face_elements[:, 0], mesh.face_elements[:, 1]
    f = terms.interior_faces
    np.add.at(out, owner[f], interior_weight * terms.interior)
    np.add.at(out, neigh[f], interior_weight * terms.interior)
    np.add.at(out, owner[terms.dirichlet_faces], terms.dirichlet)
    np.add.at(out, owner[terms.robin_faces], terms.robin)
    return out


def compute_indicators(mesh: SimplicialMesh, degree: int, problem: ProblemSpec, coeffs,
                       penalty_scale: float = 1.0) -> Indicators:
    """Per-element residual indicators from the functional's terms."""
    terms = functional_terms(mesh, degree, problem, coeffs, penalty_scale)
    full = terms.volume + _face_sum_to_elements(mesh, terms, 1.0)
    split = terms.volume + _face_sum_to_elements(mesh, terms, 0.5)
    return Indicators(
        eta=np.sqrt(full),
        eta_split=np.sqrt(split),
        functional_value=terms.total,
        interior_total=float(terms.interior.sum()),
    )


def _zero_field(x):
    return np.zeros(x.shape[:-1], dtype=complex)


def _zero_vector(x):
    return np.zeros(x.shape, dtype=complex)


def _error_norms(mesh: SimplicialMesh, degree: int, coeffs, k: float, exact):
    """Squared norm pieces of (u - u_h, p - p_h); ``exact`` may be None for zero."""
    if exact is None:
        u_fn, grad_fn, p_fn, div_fn = _zero_field, _zero_vector, _zero_vector, _zero_field
    else:
        u_fn, grad_fn, p_fn, div_fn = exact.u, exact.grad_u, exact.p, exact.div_p
    coeffs = np.asarray(coeffs)
    d = mesh.dim
    order = quadrature_order(degree)
    vrule, frule = volume_rule(d, order), face_rule(d - 1, order)

    elems = np.arange(mesh.n_elements)
    pts, wts = volume_points(mesh, vrule, elems)
    fl = fields_at(mesh, degree, coeffs, elems, pts)
    u_ex, grad_ex, div_ex = u_fn(pts), grad_fn(pts), div_fn(pts)
    l2_u2 = float(np.sum(wts * np.abs(u_ex - fl.u) ** 2))
    l2_p2 = float(np.sum(wts * np.sum(np.abs(p_fn(pts) - fl.p) ** 2, axis=-1)))
    grad2 = float(np.sum(wts * np.sum(np.abs(grad_ex - fl.grad_u) ** 2, axis=-1)))
    div2 = float(np.sum(wts * np.abs(div_ex - fl.div_p) ** 2))
    # k^2 |u|^2 + |grad u|^2 + k^2 |p|^2 + |div p|^2 of the exact solution
    ref2 = float(np.sum(wts * (k * k * np.abs(u_ex) ** 2
                               + 2 * np.sum(np.abs(grad_ex) ** 2, axis=-1)
                               + np.abs(div_ex) ** 2)))

    tags = mesh.face_tags
    owner, neigh = mesh.face_elements[:, 0], mesh.face_elements[:, 1]
    inv_h = 1.0 / mesh.face_diameters
    normals = mesh.face_normals

    # the exact solution has no jumps, so interior terms see only u_h and p_h
    jump_u2 = jump_p2 = dir2 = rob2 = 0.0
    f = np.flatnonzero(tags == TAG_INTERIOR)
    if len(f):
        fp, fw = face_points(mesh, frule, f)
        plus = fields_at(mesh, degree, coeffs, owner[f], fp)
        minus = fields_at(mesh, degree, coeffs, neigh[f], fp)
        n = normals[f][:, None, :]
        jump_u2 = float(np.sum(inv_h[f, None] * fw * np.abs(plus.u - minus.u) ** 2))
        jn = np.sum(n * (plus.p - minus.p), axis=-1)
        jump_p2 = float(np.sum(inv_h[f, None] * fw * np.abs(jn) ** 2))
    f = np.flatnonzero(tags == TAG_DIRICHLET)
    if len(f):
        fp, fw = face_points(mesh, frule, f)
        tr = fields_at(mesh, degree, coeffs, owner[f], fp)
        dir2 = float(np.sum(inv_h[f, None] * fw * np.abs(u_fn(fp) - tr.u) ** 2))
    f = np.flatnonzero(tags == TAG_ROBIN)
    if len(f):
        fp, fw = face_points(mesh, frule, f)
        tr = fields_at(mesh, degree, coeffs, owner[f], fp)
        n = normals[f][:, None, :]
        res = np.sum(n * (p_fn(fp) - tr.p), axis=-1) + 1j * (u_fn(fp) - tr.u)
        rob2 = float(np.sum(inv_h[f, None] * fw * np.abs(res) ** 2))

    parts = {
        "u_volume": k * k * l2_u2 + grad2,
        "u_jumps": jump_u2 + dir2,
        "p_volume": k * k * l2_p2 + div2,
        "p_jumps": jump_p2,
        "robin": rob2,
    }
    return parts, l2_u2, l2_p2, ref2


def energy_norm(mesh: SimplicialMesh, degree: int, coeffs, k: float) -> float:
    """Energy norm of the discrete field (u_h, p_h) itself."""
    parts, *_ = _error_norms(mesh, degree, coeffs, k, None)
    return math.sqrt(sum(parts.values()))


def compute_errors(mesh: SimplicialMesh, degree: int, coeffs, problem: ProblemSpec,
                   indicators: Indicators | None = None) -> ErrorReport:
    """Energy and L2 errors by quadrature of exactness 2m+2."""
    if problem.exact is None:
        raise ProblemError(f"problem {problem.name!r} has no exact solution")
    parts, l2_u2, l2_p2, ref2 = _error_norms(mesh, degree, coeffs, problem.k, problem.exact)
    if indicators is None:
        indicators = compute_indicators(mesh, degree, problem, coeffs)
    return ErrorReport(
        energy_error=math.sqrt(sum(parts.values())),
        l2_u=math.sqrt(l2_u2),
        l2_p=math.sqrt(l2_p2),
        functional_value=indicators.functional_value,
        per_element_eta=indicators.eta,
        n_dofs=DofLayout(mesh.n_elements, mesh.dim, degree).size,
        h_max=mesh.h,
        energy_parts=parts,
        reference_norm=math.sqrt(ref2),
    )


def mark_dorfler(etas, fraction: float = DEFAULT_LAMBDA) -> MarkSet:
    """Smallest greedy set whose squared indicators reach ``fraction`` of the total.

    Elements are taken by decreasing eta with ties going to the lower index.
    """
    if not 0 < fraction <= 1:
        raise ValueError("lambda out of (0,1]")
    eta2 = np.asarray(etas, dtype=float) ** 2
    if np.any(eta2 < 0) or not np.all(np.isfinite(eta2)):
        raise ValueError("indicators must be finite and non-negative")
    total = eta2.sum()
    if total == 0:
        return MarkSet(np.zeros(0, dtype=int), fraction, 0.0, all_zero=True)
    order = np.lexsort((np.arange(len(eta2)), -eta2))
    cumulative = np.cumsum(eta2[order])
    if fraction >= 1:
        count = int(np.count_nonzero(eta2 > 0))
    else:
        # relative slack guards against cumsum rounding right at the threshold
        count = int(np.searchsorted(cumulative, fraction * total * (1 - 1e-14))) + 1
    marked = np.sort(order[:count])
    return MarkSet(marked, fraction, float(cumulative[count - 1] / total))


@dataclass
class AdaptiveStep:
    mesh: SimplicialMesh
    coeffs: np.ndarray
    errors: ErrorReport | None
    indicators: Indicators
    marks: MarkSet | None
    iterations: int
    converged: bool
    residual: float = 0.0


def adaptive_solve(
    problem: ProblemSpec,
    degree: int,
    fraction: float = DEFAULT_LAMBDA,
    initial_n: int = 4,
    max_dofs: int | None = 50_000,
    max_iterations: int | None = None,
    eta_threshold: float | None = None,
    solver_config: SolverConfig | None = None,
    initial_mesh: SimplicialMesh | None = None,
) -> list[AdaptiveStep]:
    """Solve, estimate, mark and bisect until a stop criterion holds.

    ``max_iterations`` counts refinement steps (0 gives the initial solve only);
    the loop stops before a solve whose DOF count would exceed ``max_dofs``.
    """
    mesh = initial_mesh if initial_mesh is not None else problem.mesh(initial_n)
    history: list[AdaptiveStep] = []
    step = 0
    while True:
        system = assemble(mesh, degree, problem)
        coeffs, report = solve(system, solver_config)
        ind = compute_indicators(mesh, degree, problem, coeffs)
        errs = compute_errors(mesh, degree, coeffs, problem, ind) if problem.exact is not None else None
        record = AdaptiveStep(mesh, coeffs, errs, ind, None, report.iterations, report.converged,
                              report.relative_residual)
        history.append(record)
        log.info("adaptive step %d: %d elements, %d dofs, J = %.4e", step, mesh.n_elements,
                 system.size, ind.functional_value)
        if not report.converged:
            log.warning("solver failed at adaptive step %d; stopping", step)
            break
        if max_iterations is not None and step >= max_iterations:
            break
        if eta_threshold is not None and math.sqrt(float(np.sum(ind.eta**2))) <= eta_threshold:
            break
        marks = mark_dorfler(ind.eta, fraction)
        record.marks = marks
        if marks.all_zero:
            break
        new_mesh = meshmod.refine_bisection(mesh, marks.marked)
        if max_dofs is not None and DofLayout(new_mesh.n_elements, new_mesh.dim, degree).size > max_dofs:
            break
        mesh = new_mesh
        step += 1
    return history


def convergence_orders(errors, h=None) -> list[float | None]:
    """Per-pair orders log2(e_prev/e_curr); with h given, log(e ratio)/log(h ratio)."""
    out: list[float | None] = [None]
    for i in range(1, len(errors)):
        if errors[i] <= 0 or errors[i - 1] <= 0:
            out.append(None)
            continue
        if h is None:
            out.append(math.log2(errors[i - 1] / errors[i]))
        else:
            out.append(math.log(errors[i - 1] / errors[i]) / math.log(h[i - 1] / h[i]))
    return out


def fitted_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])
