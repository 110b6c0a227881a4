import numpy as np
import pytest
from hypothesis import given, strategies as st

from quadseq import shapes
from quadseq.mesh import (
    DegenerateExtentError,
    FaceArityError,
    Mesh,
    MeshError,
    ObjParseError,
    PointCloud,
    boundary_faces,
    connected_components,
    load_obj,
    normalize,
    sample_point_cloud,
    save_obj,
)

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 0 1 0
v 1 1 0
v 0 0 1
v 1 0 1
v 0 1 1
v 1 1 1
vn 0 0 1
vt 0 0
f 1 3 4 2
f 5 6 8 7
f 1 2 6 5
f 3 7 8 4
f 1 5 7 3
f 2 4 8 6
"""


def write(tmp_path, text, name="m.obj"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_cube(tmp_path):
    m = load_obj(write(tmp_path, CUBE_OBJ))
    assert m.n_vertices == 8
    assert m.n_faces == 6
    assert all(len(f) == 4 for f in m.faces)
    assert m.faces[0] == (0, 2, 3, 1)


def test_load_triangulated_cube(tmp_path):
    save_obj(shapes.triangulate(shapes.cube()), tmp_path / "t.obj")
    m = load_obj(tmp_path / "t.obj")
    assert (m.n_vertices, m.n_faces, m.n_triangles) == (8, 12, 12)


def test_pentagon_rejected_with_line_number(tmp_path):
    text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 2 0\nf 1 2 3 4 5\n"
    with pytest.raises(FaceArityError) as exc:
        load_obj(write(tmp_path, text))
    assert exc.value.lineno == 6
    m = load_obj(write(tmp_path, text), triangulate_ngons=True)
    assert m.faces == ((0, 1, 2), (0, 2, 3), (0, 3, 4))


def test_malformed_records(tmp_path):
    with pytest.raises(ObjParseError, match="line 2"):
        load_obj(write(tmp_path, "v 0 0 0\nv 1 x 0\n"))
    with pytest.raises(ObjParseError, match="line 2"):
        load_obj(write(tmp_path, "v 0 0 0\nf 1 2 3\n"))
    with pytest.raises(FaceArityError):
        load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nf 1 2\n"))


def test_negative_and_slashed_indices(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1/1 -2//2 -1\n"))
    assert m.faces == ((0, 1, 2),)


def test_save_single_quad(tmp_path):
    q = Mesh(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float), ((0, 1, 2, 3),))
    save_obj(q, tmp_path / "q.obj")
    data = (tmp_path / "q.obj").read_bytes()
    lines = data.decode().splitlines()
    assert sum(l.startswith("v ") for l in lines) == 4
    assert [l for l in lines if l.startswith("f ")] == ["f 1 2 3 4"]
    assert b"\r" not in data


def test_save_empty(tmp_path):
    save_obj(Mesh.empty(), tmp_path / "e.obj")
    assert (tmp_path / "e.obj").read_text() == ""
    assert load_obj(tmp_path / "e.obj").n_faces == 0


@given(st.integers(0, 10_000))
def test_obj_round_trip(seed):
    import tempfile, pathlib

    rng = np.random.default_rng(seed)
    m = shapes.transform(shapes.prism(int(rng.integers(3, 9)), 2), shapes.random_rotation(rng), rng.normal(size=3))
    with tempfile.TemporaryDirectory() as d:
        p = pathlib.Path(d) / "m.obj"
        save_obj(m, p)
        back = load_obj(p)
    assert back.faces == m.faces
    assert np.max(np.abs(back.vertices - m.vertices)) <= 5e-7


def test_mesh_invariants():
    with pytest.raises(MeshError):
        Mesh(np.zeros((3, 3)), ((0, 1, 3),))
    with pytest.raises(MeshError):
        Mesh(np.zeros((3, 3)), ((0, 1, 1),))
    with pytest.raises(FaceArityError):
        Mesh(np.zeros((5, 3)), ((0, 1, 2, 3, 4),))
    m = shapes.cube()
    with pytest.raises(AttributeError):
        m.vertices = None
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0


def test_from_arrays_matches_tuple_constructor():
    m = shapes.prism(5, 2)
    assert Mesh.from_arrays(m.vertices, m.face_array).faces == m.faces
    t = shapes.triangulate(m)
    assert Mesh.from_arrays(t.vertices, np.array(t.faces)).faces == t.faces


def test_normalize_examples():
    cube2 = shapes.cube(size=2.0)
    n = normalize(cube2)
    assert np.allclose(n.vertices.min(axis=0), -0.95) and np.allclose(n.vertices.max(axis=0), 0.95)
    box = shapes.box(1, 1, 1, size=(2.0, 1.0, 1.0))
    n = normalize(box)
    lo, hi = n.bbox()
    assert np.allclose(lo, [-0.95, -0.475, -0.475]) and np.allclose(hi, [0.95, 0.475, 0.475])
    with pytest.raises(DegenerateExtentError):
        normalize(Mesh(np.zeros((3, 3)), ()))


@given(st.integers(0, 10_000))
def test_normalize_idempotent(seed):
    rng = np.random.default_rng(seed)
    m = shapes.transform(shapes.box(1, 2, 3), shapes.random_rotation(rng), rng.normal(size=3) * 10, float(rng.uniform(0.1, 10)))
    once = normalize(m)
    assert np.max(np.abs(normalize(once).vertices - once.vertices)) <= 1e-9


def test_connected_components():
    two = shapes.merge(shapes.cube(), shapes.cube(origin=(3, 0, 0)))
    comps = connected_components(two)
    assert [c.n_faces for c in comps] == [6, 6]
    assert len(connected_components(shapes.cube())) == 1
    c = shapes.cube()
    extra = Mesh(np.vstack([c.vertices, [[9.0, 9.0, 9.0]]]), c.faces)
    comps = connected_components(extra)
    assert len(comps) == 1 and comps[0].n_vertices == 8


@given(st.integers(0, 10_000))
def test_components_partition_faces(seed):
    rng = np.random.default_rng(seed)
    parts = [shapes.cube(origin=tuple(rng.normal(size=3) * 10)) for _ in range(int(rng.integers(1, 4)))]
    parts.append(shapes.grid(2, 2))
    m = shapes.merge(*parts)
    assert sum(c.n_faces for c in connected_components(m)) == m.n_faces


def test_boundary_faces():
    assert boundary_faces(shapes.cube()) == set()
    quad = shapes.grid(1, 1)
    assert boundary_faces(quad) == {0}
    c = shapes.cube()
    top = [i for i, f in enumerate(c.faces) if all(c.vertices[v, 2] == 1 for v in f)][0]
    open_box = Mesh(c.vertices, tuple(f for i, f in enumerate(c.faces) if i != top))
    sides = {i for i, f in enumerate(open_box.faces) if not all(open_box.vertices[v, 2] == 0 for v in f)}
    assert boundary_faces(open_box) == sides and len(sides) == 4


def test_edge_adjacency_opposite_is_involution():
    m = shapes.box(2, 1, 3)
    adj = m.adjacency
    for fid, f in enumerate(m.faces):
        for e in adj.face_edges[fid]:
            assert adj.opposite(fid, adj.opposite(fid, e)) == e
    assert np.all(adj.counts == 2)


def test_sample_point_cloud():
    m = shapes.prism(6, 2)
    pc = sample_point_cloud(m, 40960, seed=3)
    assert len(pc) == 40960
    again = sample_point_cloud(m, 40960, seed=3)
    assert np.array_equal(pc.points, again.points)
    flat = sample_point_cloud(shapes.grid(1, 1), 500, noise_scale=0.0, seed=0)
    assert np.all(flat.positions[:, 2] == 0.0)
    assert np.allclose(np.linalg.norm(flat.normals, axis=1), 1.0)
    with pytest.raises(MeshError):
        sample_point_cloud(Mesh(np.zeros((3, 3)), ((0, 1, 2),)), 10)


def test_point_cloud_rejects_non_unit_normals():
    with pytest.raises(MeshError):
        PointCloud(np.array([[0, 0, 0, 0, 0, 2.0]]))
