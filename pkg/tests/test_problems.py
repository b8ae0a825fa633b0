import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlsfem.problems import PROBLEMS, ProblemError, check_consistency, make_problem, sample_points
from dlsfem.special import bessel_j


@pytest.mark.parametrize("name", PROBLEMS)
@pytest.mark.parametrize("k", [1.0, 3.0, 8.0])
def test_first_order_consistency(name, k):
    problem = make_problem(name, k=k)
    assert check_consistency(problem) < 1e-8


@pytest.mark.parametrize("name", PROBLEMS)
def test_helmholtz_residual_by_finite_differences(name):
    problem = make_problem(name, k=2.0)
    pts = sample_points(problem, 20)
    step = 1e-4
    lap = np.zeros(len(pts), dtype=complex)
    for d in range(problem.dim):
        shift = np.zeros(problem.dim)
        shift[d] = step
        lap += (problem.exact.u(pts + shift) - 2 * problem.exact.u(pts) + problem.exact.u(pts - shift)) / step**2
    residual = -lap - problem.k**2 * problem.exact.u(pts) - problem.source(pts)
    scale = max(1.0, np.abs(problem.source(pts)).max(), np.abs(problem.exact.u(pts)).max())
    assert np.abs(residual).max() < 1e-4 * scale


def test_plane_wave_values():
    problem = make_problem("plane_wave_2d", k=1.0)
    x = np.array([[0.3, 0.7]])
    expected = np.exp(1j * (0.3 * math.cos(math.pi / 5) + 0.7 * math.sin(math.pi / 5)))
    assert problem.exact.u(x)[0] == pytest.approx(expected, abs=1e-15)
    assert abs(problem.exact.u(x)[0]) == pytest.approx(1.0)
    assert np.linalg.norm(problem.exact.grad_u(x)[0]) == pytest.approx(1.0)


def test_bessel_square_closed_form():
    k = 1.0
    problem = make_problem("bessel_square", k=k)
    x = np.array([[0.2, -0.1]])
    r = math.hypot(0.2, -0.1)
    c = (math.cos(k) + 1j * math.sin(k)) / (k * (bessel_j(0, k) + 1j * bessel_j(1, k)))
    expected = math.cos(k * r) / k - c * bessel_j(0, k * r)
    assert problem.exact.u(x)[0] == pytest.approx(expected, abs=1e-14)
    # the origin is handled by the small-r branch
    origin = problem.exact.u(np.zeros((1, 2)))[0]
    assert origin == pytest.approx(1 / k - c, abs=1e-14)
    assert np.isfinite(problem.source(np.zeros((1, 2)))).all()


def test_lshape_solution_vanishes_on_reentrant_edges():
    problem = make_problem("lshape_singular", k=1.0)
    t = np.linspace(0.05, 1.0, 9)
    # theta = 0 ray has cos(0) = 1, the ray at theta = 3pi/2 has cos(pi) = -1
    along_x = np.stack([t, 0 * t], axis=1)
    along_neg_y = np.stack([0 * t, -t], axis=1)
    np.testing.assert_allclose(problem.exact.u(along_x), bessel_j(2 / 3, t), atol=1e-13)
    np.testing.assert_allclose(problem.exact.u(along_neg_y), -bessel_j(2 / 3, t), atol=1e-13)


def test_cylinder_solution_is_normalised_on_inner_ring():
    problem = make_problem("cylinder_radiation", k=math.pi)
    theta = np.linspace(0, 2 * math.pi, 7)
    ring = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    np.testing.assert_allclose(problem.exact.u(ring), np.cos(4 * theta), atol=1e-12)


@given(st.floats(0.5, 20.0), st.sampled_from(["plane_wave_2d", "plane_wave_3d", "manufactured_poly"]))
@settings(max_examples=15, deadline=None)
def test_consistency_over_wavenumbers(k, name):
    assert check_consistency(make_problem(name, k=k)) < 1e-8


def test_robin_data_matches_definition():
    problem = make_problem("plane_wave_2d", k=2.0)
    x = np.array([[1.0, 0.4]])
    n = np.array([[1.0, 0.0]])
    g = problem.exact.grad_u(x)[0, 0] + 2j * problem.exact.u(x)[0]
    assert problem.robin_data(x, n)[0] == pytest.approx(g)
    assert problem.g_scaled(x, n)[0] == pytest.approx(g / 2)


def test_problem_errors():
    with pytest.raises(ProblemError):
        make_problem("unknown")
    with pytest.raises(ProblemError):
        make_problem("plane_wave_2d", k=0.0)
    with pytest.raises(ProblemError):
        make_problem("plane_wave_2d", alpha=1.0)
    with pytest.raises(ProblemError):
        make_problem("bessel_square", k=200.0)
