import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from dlsfem.analysis import (
    adaptive_solve,
    compute_errors,
    compute_indicators,
    convergence_orders,
    energy_norm,
    fitted_slope,
    mark_dorfler,
)
from dlsfem.assembly import DofLayout, assemble, evaluate_functional, interpolate
from dlsfem.mesh import SimplicialMesh, unit_square
from dlsfem.problems import ProblemError, make_problem
from dlsfem.solver import SolverConfig, solve


def test_dorfler_examples():
    assert mark_dorfler(np.sqrt([4, 1, 1]), 0.45).marked.tolist() == [0]
    marks = mark_dorfler(np.ones(4), 0.45)
    assert len(marks.marked) == 2 and marks.achieved_fraction == pytest.approx(0.5)
    # ties go to the lower index
    assert marks.marked.tolist() == [0, 1]
    assert mark_dorfler([0.0, 1.0, 2.0, 0.0], 1.0).marked.tolist() == [1, 2]


def test_dorfler_all_zero():
    marks = mark_dorfler(np.zeros(5), 0.45)
    assert marks.all_zero and len(marks.marked) == 0


@given(st.lists(st.floats(0, 10), min_size=1, max_size=60), st.floats(0.01, 0.99))
@settings(max_examples=200, deadline=None)
def test_dorfler_minimality(etas, fraction):
    eta2 = np.asarray(etas) ** 2
    if eta2.sum() == 0:
        return
    marks = mark_dorfler(etas, fraction)
    total = eta2.sum()
    assert eta2[marks.marked].sum() >= fraction * total * (1 - 1e-12)
    # greedy order: every unmarked value is at most every marked value
    unmarked = np.setdiff1d(np.arange(len(eta2)), marks.marked)
    if len(unmarked):
        assert eta2[unmarked].max() <= eta2[marks.marked].min()
    smallest = marks.marked[np.lexsort((-marks.marked, eta2[marks.marked]))[0]]
    assert eta2[marks.marked].sum() - eta2[smallest] < fraction * total


def test_interpolant_of_polynomial_has_no_error():
    for dim, degree in ((2, 1), (2, 3), (3, 2)):
        problem = make_problem("manufactured_poly", k=1.3, m=degree, dim=dim)
        mesh = problem.mesh(2 if dim == 2 else 1)
        coeffs = interpolate(mesh, degree, problem.exact.u, problem.exact.p)
        report = compute_errors(mesh, degree, coeffs, problem)
        assert report.energy_error <= 1e-8 * report.reference_norm
        eta = compute_indicators(mesh, degree, problem, coeffs).eta
        assert eta.max() <= 1e-9 * report.reference_norm


def test_zero_solution_energy_against_direct_quadrature():
    k = 1.0
    problem = make_problem("plane_wave_2d", k=k)
    mesh = unit_square(4)
    report = compute_errors(mesh, 1, np.zeros(DofLayout(mesh.n_elements, 2, 1).size), problem)
    # |u| = 1 and |grad u| = k, so each volume part integrates to 2 over the unit square
    volume = 4.0
    robin = 0.0
    h = 0.25
    sides = [
        (lambda t: np.array([t, 0.0]), np.array([0.0, -1.0])),
        (lambda t: np.array([1.0, t]), np.array([1.0, 0.0])),
        (lambda t: np.array([t, 1.0]), np.array([0.0, 1.0])),
        (lambda t: np.array([0.0, t]), np.array([-1.0, 0.0])),
    ]
    for point, normal in sides:
        def integrand(t, point=point, normal=normal):
            x = point(t)[None]
            val = np.dot(normal, problem.exact.p(x)[0]) + 1j * problem.exact.u(x)[0]
            return abs(val) ** 2
        robin += quad(integrand, 0, 1, epsabs=1e-13)[0] / h
    assert report.energy_error**2 == pytest.approx(volume + robin, rel=1e-10)


def test_single_element_indicator_equals_functional():
    mesh = SimplicialMesh(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 1, 2]]), {(0, 1): "dirichlet"})
    problem = make_problem("plane_wave_2d", k=2.0)
    x = np.random.default_rng(3).standard_normal(9) + 0j
    ind = compute_indicators(mesh, 1, problem, x)
    assert ind.eta[0] ** 2 == pytest.approx(evaluate_functional(mesh, 1, problem, x), rel=1e-13)


@pytest.mark.parametrize("degree", [1, 2])
def test_estimator_identities(degree):
    problem = make_problem("cylinder_radiation", k=math.pi, segments=16)
    mesh = problem.mesh(2)
    coeffs, _ = solve(assemble(mesh, degree, problem))
    ind = compute_indicators(mesh, degree, problem, coeffs)
    j_value = evaluate_functional(mesh, degree, problem, coeffs)
    assert np.sum(ind.eta_split**2) == pytest.approx(j_value, rel=1e-10)
    assert np.sum(ind.eta**2) == pytest.approx(j_value + ind.interior_total, rel=1e-10)
    assert np.all(ind.eta >= ind.eta_split)


def test_lshape_indicator_peaks_at_reentrant_corner():
    problem = make_problem("lshape_singular", k=1.0)
    mesh = problem.mesh(4)
    coeffs, _ = solve(assemble(mesh, 1, problem))
    eta = compute_indicators(mesh, 1, problem, coeffs).eta
    corner = np.linalg.norm(mesh.vertices[mesh.elements[np.argmax(eta)]], axis=1)
    assert corner.min() < 1e-12


def test_indicator_sum_decreases_under_uniform_refinement():
    problem = make_problem("bessel_square", k=2.0)
    totals = []
    for n in (2, 4, 8, 16):
        mesh = problem.mesh(n)
        coeffs, _ = solve(assemble(mesh, 1, problem))
        totals.append(np.sum(compute_indicators(mesh, 1, problem, coeffs).eta ** 2))
    assert all(b < a for a, b in zip(totals, totals[1:]))


def test_energy_norm_triangle_inequality():
    mesh = unit_square(2)
    rng = np.random.default_rng(11)
    size = DofLayout(mesh.n_elements, 2, 2).size
    for _ in range(5):
        a = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        b = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        assert energy_norm(mesh, 2, a + b, 1.0) <= energy_norm(mesh, 2, a, 1.0) + energy_norm(mesh, 2, b, 1.0)
        assert energy_norm(mesh, 2, 2j * a, 1.0) == pytest.approx(2 * energy_norm(mesh, 2, a, 1.0))


def test_adaptive_zero_steps_gives_initial_solve():
    problem = make_problem("lshape_singular", k=1.0)
    history = adaptive_solve(problem, 1, max_iterations=0, initial_n=2)
    assert len(history) == 1
    assert history[0].mesh.n_elements == problem.mesh(2).n_elements


def test_adaptive_on_smooth_problem_is_comparable_to_uniform():
    problem = make_problem("plane_wave_2d", k=1.0)
    history = adaptive_solve(problem, 1, 0.45, initial_n=4, max_dofs=6000)
    assert len(history) >= 4
    n_dofs = [h.errors.n_dofs for h in history]
    uniform_n, uniform_e = [], []
    for n in (4, 8, 16, 32):
        mesh = problem.mesh(n)
        coeffs, _ = solve(assemble(mesh, 1, problem))
        uniform_n.append(DofLayout(mesh.n_elements, 2, 1).size)
        uniform_e.append(compute_errors(mesh, 1, coeffs, problem).energy_error)
    slope = fitted_slope(uniform_n, uniform_e)
    intercept = np.log(uniform_e[0]) - slope * np.log(uniform_n[0])
    predicted = math.exp(intercept + slope * math.log(n_dofs[-1]))
    assert history[-1].errors.energy_error <= 2 * predicted
    assert predicted <= 2 * history[-1].errors.energy_error
    # marks on a smooth problem are spread over many elements
    assert len(history[-2].marks.marked) > 0.1 * history[-2].mesh.n_elements


def test_errors_require_exact_solution():
    problem = make_problem("plane_wave_2d", k=1.0)
    broken = type(problem)(**{**problem.__dict__, "exact": None})
    with pytest.raises(ProblemError):
        compute_errors(unit_square(1), 1, np.zeros(18), broken)


def test_order_helpers():
    errors = [1.0, 0.25, 0.0625]
    assert convergence_orders(errors) == [None, 2.0, 2.0]
    assert convergence_orders([4.0, 1.0], h=[0.2, 0.1]) == [None, pytest.approx(2.0)]
    assert fitted_slope([10, 100, 1000], [1.0, 0.1, 0.01]) == pytest.approx(-1.0)


def test_solver_config_is_forwarded_in_adaptive_loop():
    problem = make_problem("lshape_singular", k=1.0)
    history = adaptive_solve(problem, 1, max_iterations=1, initial_n=2,
                             solver_config=SolverConfig(max_iterations=2))
    assert len(history) == 1 and not history[0].converged
