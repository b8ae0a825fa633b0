import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlsfem import mesh as meshmod
from dlsfem.mesh import (
    TAG_DIRICHLET,
    TAG_INTERIOR,
    TAG_ROBIN,
    MeshError,
    SimplicialMesh,
    annulus,
    cube,
    l_shape,
    read_mesh,
    refine_bisection,
    refine_uniform,
    unit_square,
    write_mesh,
)


def euler_ok(mesh):
    # V - E + F = 1 for a simply connected triangulation
    return mesh.n_vertices - mesh.n_faces + mesh.n_elements == 1


def test_unit_square_counts():
    mesh = unit_square(5)
    assert (mesh.n_vertices, mesh.n_elements, mesh.n_faces) == (36, 50, 85)
    assert np.count_nonzero(mesh.face_tags == TAG_INTERIOR) == 65
    assert np.count_nonzero(mesh.face_tags == TAG_ROBIN) == 20
    assert mesh.volumes.sum() == pytest.approx(1.0)
    assert mesh.h == pytest.approx(np.sqrt(2) / 5)
    assert euler_ok(mesh)


def test_diagonal_direction():
    mesh = unit_square(1)
    # both triangles share the lower-left to upper-right diagonal
    shared = [tuple(f) for f, e in zip(mesh.faces, mesh.face_elements) if e[1] >= 0]
    assert shared == [(0, 3)]


def test_l_shape_and_cube():
    mesh = l_shape(4)
    assert mesh.n_elements == 96
    assert mesh.volumes.sum() == pytest.approx(3.0)
    assert np.all(mesh.vertices[:, 0] * 0 == 0)
    centroids = mesh.vertices[mesh.elements].mean(axis=1)
    assert not np.any((centroids[:, 0] > 0) & (centroids[:, 1] < 0))
    box = cube(4)
    assert box.n_elements == 384
    assert box.volumes.sum() == pytest.approx(8.0)
    assert box.is_conforming()


def test_annulus_tags():
    mesh = annulus(1.0, segments=64)
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert r.min() == pytest.approx(1.0) and r.max() == pytest.approx(2.0)
    assert np.count_nonzero(mesh.face_tags == TAG_DIRICHLET) == 64
    assert np.count_nonzero(mesh.face_tags == TAG_ROBIN) == 64
    for f in np.flatnonzero(mesh.face_tags == TAG_DIRICHLET):
        assert np.linalg.norm(mesh.vertices[mesh.faces[f]], axis=1) == pytest.approx([1.0, 1.0])


def test_normals_point_outward_from_owner():
    mesh = l_shape(2)
    centroids = mesh.vertices[mesh.elements].mean(axis=1)
    for f in range(mesh.n_faces):
        owner = mesh.face_elements[f, 0]
        mid = mesh.vertices[mesh.faces[f]].mean(axis=0)
        assert np.dot(mesh.face_normals[f], mid - centroids[owner]) > 0
        assert np.linalg.norm(mesh.face_normals[f]) == pytest.approx(1.0)


@pytest.mark.parametrize("base", [unit_square(2), l_shape(1), cube(1)])
def test_uniform_refinement(base):
    fine = refine_uniform(base)
    assert fine.n_elements == base.n_elements * 2**base.dim
    assert fine.volumes.sum() == pytest.approx(base.volumes.sum())
    assert fine.h == pytest.approx(base.h / 2)
    assert fine.is_conforming()
    assert fine.shape_ratios().max() <= base.shape_ratios().max() * (1 + 1e-12)
    assert len(fine.boundary) == len(base.boundary) * 2 ** (base.dim - 1)


def test_red_refinement_reproduces_structured_square():
    fine = refine_uniform(unit_square(3))
    ref = unit_square(6)
    key = lambda m: sorted(tuple(sorted(map(tuple, np.round(m.vertices[e], 12)))) for e in m.elements)  # noqa: E731
    assert key(fine) == key(ref)


def test_bisection_conformity_and_determinism():
    mesh = unit_square(2)
    fine = refine_bisection(refine_bisection(mesh, range(mesh.n_elements)), [0, 3])
    assert fine.is_conforming()
    assert fine.volumes.sum() == pytest.approx(1.0)
    again = refine_bisection(refine_bisection(mesh, range(mesh.n_elements)), [0, 3])
    np.testing.assert_array_equal(fine.elements, again.elements)
    np.testing.assert_array_equal(fine.vertices, again.vertices)
    assert refine_bisection(mesh, []) is mesh
    with pytest.raises(IndexError):
        refine_bisection(mesh, [99])


@given(st.lists(st.integers(0, 47), min_size=1, max_size=6), st.sampled_from(["square", "lshape", "cube"]))
@settings(max_examples=25, deadline=None)
def test_bisection_properties(marked, kind):
    base = {"square": unit_square(3), "lshape": l_shape(1), "cube": cube(1)}[kind]
    marked = [m % base.n_elements for m in marked]
    fine = refine_bisection(base, marked)
    assert fine.is_conforming()
    assert fine.volumes.sum() == pytest.approx(base.volumes.sum())
    assert fine.n_elements > base.n_elements
    # every marked element has been split
    assert fine.n_elements >= base.n_elements + len(set(marked))
    tags = {tuple(sorted(f)) for f in fine.boundary}
    assert len(tags) == np.count_nonzero(fine.face_tags != TAG_INTERIOR)


def test_repeated_corner_refinement_keeps_shape():
    mesh = l_shape(2)
    ratios = []
    for _ in range(8):
        corner = np.flatnonzero(np.any(np.linalg.norm(mesh.vertices[mesh.elements], axis=2) < 1e-12, axis=1))
        mesh = refine_bisection(mesh, corner)
        ratios.append(mesh.shape_ratios().max())
        assert mesh.is_conforming()
    assert max(ratios) < 10


def test_mesh_file_roundtrip(tmp_path):
    mesh = refine_bisection(annulus(1.0, segments=16), [0, 5])
    path = tmp_path / "ring.mesh"
    write_mesh(mesh, path)
    back = read_mesh(path)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.elements, mesh.elements)
    assert back.boundary == mesh.boundary


def test_mesh_file_with_comments(tmp_path):
    text = """# one triangle
DIM 2
VERTICES 3
0 0
1 0   # right
0 1
ELEMENTS 1
0 1 2
BOUNDARY 1
0 1 dirichlet
"""
    path = tmp_path / "tri.mesh"
    path.write_text(text)
    mesh = read_mesh(path)
    assert mesh.n_elements == 1
    assert mesh.boundary == {(0, 1): "dirichlet"}
    # untagged boundary faces default to Robin
    assert sorted(mesh.face_tags.tolist()) == [TAG_DIRICHLET, TAG_ROBIN, TAG_ROBIN]


def test_invalid_meshes(tmp_path):
    with pytest.raises(MeshError):
        SimplicialMesh(np.zeros((3, 2)), np.array([[0, 1, 2]]))
    with pytest.raises(MeshError):
        SimplicialMesh(np.eye(3)[:, :2], np.array([[0, 1, 5]]))
    with pytest.raises(MeshError):
        SimplicialMesh(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 1, 2]]), {(0, 1): "neumann"})
    bad = tmp_path / "bad.mesh"
    bad.write_text("DIM 2\nVERTICES 3\n0 0\n")
    with pytest.raises(MeshError):
        read_mesh(bad)
    with pytest.raises(MeshError):
        meshmod.generate_structured("disk", n=2)
