import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlsfem.assembly import (
    AssemblyError,
    DofLayout,
    assemble,
    evaluate_functional,
    evaluate_solution,
    functional_terms,
    interpolate,
    read_matrix,
    write_matrix,
)
from dlsfem.mesh import SimplicialMesh, refine_bisection, unit_square
from dlsfem.problems import make_problem
from oracles import dense_matrix_p1, rhs_by_polarization


@pytest.fixture(scope="module")
def single_element(data_dir):
    golden = json.loads((data_dir / "single_element_matrix.json").read_text())
    boundary = {tuple(key): tag for key, tag in golden["boundary"]}
    mesh = SimplicialMesh(np.array(golden["vertices"]), np.array(golden["elements"]), boundary)
    matrix = np.array(golden["real"]) + 1j * np.array(golden["imag"])
    return mesh, boundary, matrix


def test_layout_numbering():
    layout = DofLayout(n_elements=4, dim=2, degree=1)
    assert layout.size == 4 * 9
    assert layout.global_index(2, 1, "u") == 7
    assert layout.global_index(2, 1, "p", 1) == 12 + 2 * 6 + 3 + 1
    dofs = layout.element_dofs()
    assert sorted(dofs.ravel().tolist()) == list(range(layout.size))
    np.testing.assert_array_equal(layout.dof_elements()[dofs[3]], 3)


def test_single_element_matches_golden(single_element):
    mesh, _, golden = single_element
    system = assemble(mesh, 1, make_problem("plane_wave_2d", k=1.0))
    dense = system.matrix.toarray()
    assert np.abs(dense - golden).max() <= 1e-8 * np.abs(golden).max()


def test_golden_file_is_reproduced_by_oracle(single_element):
    mesh, boundary, golden = single_element
    rebuilt = dense_matrix_p1(mesh.vertices, mesh.elements, boundary, 1.0)
    np.testing.assert_allclose(rebuilt, golden, atol=1e-13)


@pytest.mark.parametrize("name,n,k", [("plane_wave_2d", 5, 1.0), ("plane_wave_3d", 1, 2.0),
                                      ("cylinder_radiation", 1, 3.0)])
def test_matches_dense_oracle(name, n, k):
    problem = make_problem(name, k=k, segments=16) if name == "cylinder_radiation" else make_problem(name, k=k)
    mesh = problem.mesh(n)
    system = assemble(mesh, 1, problem)
    oracle = dense_matrix_p1(mesh.vertices, mesh.elements, mesh.boundary, k)
    assert np.abs(system.matrix.toarray() - oracle).max() <= 1e-8 * np.abs(oracle).max()


def test_rhs_matches_functional_polarization(single_element):
    mesh, _, _ = single_element
    problem = make_problem("bessel_square", k=2.0)
    system = assemble(mesh, 1, problem)
    entries = rhs_by_polarization(lambda x: evaluate_functional(mesh, 1, problem, x), system.size)
    for i, value in entries.items():
        assert system.rhs[i] == pytest.approx(value, abs=1e-10 * np.abs(system.rhs).max())
    assert system.constant == pytest.approx(evaluate_functional(mesh, 1, problem, np.zeros(system.size)))


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_quadratic_form_identity(degree):
    problem = make_problem("lshape_singular", k=1.5)
    mesh = refine_bisection(problem.mesh(1), [0, 4])
    system = assemble(mesh, degree, problem)
    rng = np.random.default_rng(degree)
    for _ in range(3):
        x = rng.standard_normal(system.size) + 1j * rng.standard_normal(system.size)
        direct = evaluate_functional(mesh, degree, problem, x)
        assert system.quadratic_form(x) == pytest.approx(direct, rel=1e-10)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_functional_is_nonnegative_and_matrix_positive(seed):
    problem = make_problem("plane_wave_2d", k=3.0)
    mesh = unit_square(2)
    system = assemble(mesh, 1, problem)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(system.size) + 1j * rng.standard_normal(system.size)
    assert evaluate_functional(mesh, 1, problem, x) >= 0
    assert np.vdot(x, system.matrix @ x).real > 0


def test_penalty_scale_enters_face_terms_only():
    problem = make_problem("plane_wave_2d", k=1.0)
    mesh = unit_square(2)
    x = np.random.default_rng(1).standard_normal(DofLayout(mesh.n_elements, 2, 1).size) + 0j
    one = functional_terms(mesh, 1, problem, x, 1.0)
    three = functional_terms(mesh, 1, problem, x, 3.0)
    np.testing.assert_allclose(three.volume, one.volume)
    np.testing.assert_allclose(three.interior, 3 * one.interior)
    np.testing.assert_allclose(three.robin, 3 * one.robin)
    system = assemble(mesh, 1, problem, penalty_scale=3.0)
    assert system.quadratic_form(x) == pytest.approx(three.total, rel=1e-12)


def test_interpolant_and_point_evaluation():
    problem = make_problem("manufactured_poly", k=1.0, m=2)
    mesh = unit_square(2)
    coeffs = interpolate(mesh, 2, problem.exact.u, problem.exact.p)
    point = mesh.vertices[mesh.elements[3]].mean(axis=0)
    u, p, grad_u, div_p = evaluate_solution(mesh, 2, coeffs, 3, point)
    assert u == pytest.approx(problem.exact.u(point[None])[0], abs=1e-12)
    np.testing.assert_allclose(p, problem.exact.p(point[None])[0], atol=1e-12)
    np.testing.assert_allclose(grad_u, problem.exact.grad_u(point[None])[0], atol=1e-11)
    assert div_p == pytest.approx(problem.exact.div_p(point[None])[0], abs=1e-11)
    with pytest.raises(AssemblyError):
        evaluate_solution(mesh, 2, coeffs, 3, [5.0, 5.0])
    with pytest.raises(AssemblyError):
        evaluate_solution(mesh, 2, coeffs[:-1], 3, point)


def test_dimension_mismatch():
    with pytest.raises(AssemblyError):
        assemble(unit_square(1), 1, make_problem("plane_wave_3d"))


def test_matrix_dump_roundtrip(tmp_path):
    problem = make_problem("plane_wave_2d", k=1.0)
    system = assemble(unit_square(2), 2, problem)
    path = tmp_path / "a.coo"
    write_matrix(system, path)
    back = read_matrix(path)
    assert abs(back - system.matrix).max() == 0
    first = path.read_text().splitlines()[0]
    assert first == f"# {system.size} {system.size} {system.matrix.nnz}"
