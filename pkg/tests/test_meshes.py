import numpy as np
import pytest

from rodsim import meshes


def test_save_load_round_trip(tmp_path, rng):
    vertices = rng.normal(size=(20, 3))
    triangles = rng.integers(0, 20, size=(30, 3)).astype(np.int64)
    path = tmp_path / "mesh.obj"
    meshes.save_mesh(path, vertices, triangles)
    v2, t2 = meshes.load_mesh(path)
    assert np.allclose(v2, vertices, atol=1e-8)
    assert np.array_equal(t2, triangles)


def test_load_skips_comments_and_blanks(tmp_path):
    path = tmp_path / "mesh.obj"
    path.write_text("# header\n\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    v, t = meshes.load_mesh(path)
    assert v.shape == (3, 3) and t.shape == (1, 3)
    assert np.array_equal(t[0], [0, 1, 2])


def test_load_handles_slash_face_indices(tmp_path):
    path = tmp_path / "mesh.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n")
    _, t = meshes.load_mesh(path)
    assert np.array_equal(t[0], [0, 1, 2])


def test_load_malformed_vertex_reports_line(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1\n")
    with pytest.raises(ValueError, match=r"bad\.obj:2"):
        meshes.load_mesh(path)


def test_load_quad_face_reports_line(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n")
    with pytest.raises(ValueError, match=r"quad\.obj:5"):
        meshes.load_mesh(path)


def test_load_empty_mesh_rejected(tmp_path):
    path = tmp_path / "empty.obj"
    path.write_text("# nothing\n")
    with pytest.raises(ValueError, match="no triangles"):
        meshes.load_mesh(path)


def test_curved_tube_shape_and_radius():
    rings, segments, radius = 40, 24, 0.02
    v, t = meshes.curved_tube(length=0.5, radius=radius, rings=rings,
                              segments=segments, curvature=2.0)
    assert v.shape == (rings * segments, 3)
    assert t.shape == (2 * (rings - 1) * segments, 3)
    # every vertex sits exactly `radius` from its ring centre
    ring_verts = v.reshape(rings, segments, 3)
    centres = ring_verts.mean(axis=1)
    d = np.linalg.norm(ring_verts - centres[:, None], axis=2)
    assert np.allclose(d, radius, atol=1e-9)
    # the entry ring is centred on the origin
    assert np.allclose(centres[0], 0.0, atol=1e-12)


def test_straight_tube_centreline():
    v, _ = meshes.curved_tube(length=0.3, radius=0.01, rings=10, segments=8,
                              curvature=0.0)
    centres = v.reshape(10, 8, 3).mean(axis=1)
    assert np.allclose(centres[:, 0], 0.0, atol=1e-12)
    assert np.allclose(centres[:, 1], 0.0, atol=1e-12)
    assert np.allclose(centres[-1], [0.0, 0.0, 0.3], atol=1e-12)


def test_curved_tube_arc_length():
    # the centreline is an arc, so its endpoint sits at the analytic
    # position for the requested curvature
    curvature, length = 3.0, 0.4
    v, _ = meshes.curved_tube(length=length, radius=0.01, rings=20,
                              segments=12, curvature=curvature)
    centres = v.reshape(20, 12, 3).mean(axis=1)
    rc = 1.0 / curvature
    ang = length * curvature
    assert np.allclose(centres[-1],
                       [rc * (1 - np.cos(ang)), 0.0, rc * np.sin(ang)],
                       atol=1e-9)


def test_floor_mesh_flat_and_covering():
    v, t = meshes.floor_mesh(size=2.0, y=-0.5, cells=4)
    assert np.allclose(v[:, 1], -0.5)
    assert t.shape == (32, 3)
    assert v[:, 0].min() == -2.0 and v[:, 0].max() == 2.0
    # triangles are all non-degenerate
    corners = v[t]
    areas = np.linalg.norm(
        np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]),
        axis=1)
    assert np.all(areas > 0.0)
