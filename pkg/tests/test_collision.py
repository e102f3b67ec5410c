import numpy as np
import pytest

from rodsim import bvh, meshes
from rodsim.selfcollide import (SelfCollisionConfig, point_groups,
                                self_collision_pairs)


@pytest.fixture(scope="module")
def tube_tree():
    vertices, triangles = meshes.curved_tube(rings=11, segments=50)
    return bvh.build_aabb_tree(vertices, triangles)


# -- tree construction invariants -------------------------------------------

def test_tree_order_is_permutation(tube_tree):
    t = tube_tree.triangles.shape[0]
    assert sorted(tube_tree.tri_order.tolist()) == list(range(t))


def test_leaves_partition_triangles(tube_tree):
    spans = []
    for node in range(tube_tree.node_count.shape[0]):
        cnt = tube_tree.node_count[node]
        if cnt > 0:
            assert cnt <= bvh.LEAF_MAX_TRIS
            start = tube_tree.node_start[node]
            spans.append((start, start + cnt))
    spans.sort()
    assert spans[0][0] == 0
    assert spans[-1][1] == tube_tree.triangles.shape[0]
    for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
        assert e0 == s1  # contiguous, non-overlapping


def test_node_boxes_contain_their_triangles(tube_tree):
    corners = tube_tree.vertices[tube_tree.triangles]
    tri_min = corners.min(axis=1)
    tri_max = corners.max(axis=1)
    for node in range(tube_tree.node_count.shape[0]):
        cnt = tube_tree.node_count[node]
        if cnt > 0:
            idx = tube_tree.tri_order[
                tube_tree.node_start[node]:tube_tree.node_start[node] + cnt]
            assert np.all(tube_tree.node_min[node] <= tri_min[idx] + 1e-15)
            assert np.all(tube_tree.node_max[node] >= tri_max[idx] - 1e-15)


def test_children_boxes_nested_in_parent(tube_tree):
    n = tube_tree.node_count.shape[0]
    for node in range(n):
        if tube_tree.node_count[node] != 0:
            continue  # only internal nodes have children
        for child in (2 * node + 1, 2 * node + 2):
            assert child < n and tube_tree.node_count[child] >= 0
            assert np.all(
                tube_tree.node_min[node] <= tube_tree.node_min[child] + 1e-15)
            assert np.all(
                tube_tree.node_max[node] >= tube_tree.node_max[child] - 1e-15)


def test_tree_depth_logarithmic(tube_tree):
    t = tube_tree.triangles.shape[0]
    assert tube_tree.max_depth <= int(np.ceil(np.log2(t))) + 2


def test_empty_mesh_rejected():
    with pytest.raises(ValueError):
        bvh.build_aabb_tree(np.zeros((3, 3)), np.zeros((0, 3), dtype=int))


# -- narrow phase ------------------------------------------------------------

def test_sphere_triangle_face_hit():
    a, b, c = np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    res = bvh.sphere_triangle(np.array([0.25, 0.25, 0.05]), 0.1, a, b, c)
    normal, depth = res
    assert np.allclose(normal, [0.0, 0.0, 1.0], atol=1e-12)
    assert depth == pytest.approx(0.05)


def test_sphere_triangle_normal_faces_center():
    a, b, c = np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    normal, _ = bvh.sphere_triangle(np.array([0.25, 0.25, -0.05]), 0.1, a, b, c)
    assert np.allclose(normal, [0.0, 0.0, -1.0], atol=1e-12)


def test_sphere_triangle_edge_and_vertex_distance():
    a, b, c = np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    # nearest feature is the vertex at the origin, sqrt(2)*0.1 away
    center = np.array([-0.1, -0.1, 0.0])
    assert bvh.sphere_triangle(center, 0.1, a, b, c) is None
    _, depth = bvh.sphere_triangle(center, 0.2, a, b, c)
    assert depth == pytest.approx(0.2 - np.sqrt(2) * 0.1)


def test_sphere_triangle_miss():
    a, b, c = np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    assert bvh.sphere_triangle(np.array([0.2, 0.2, 1.0]), 0.5, a, b, c) is None


def test_degenerate_triangle_raises():
    a = np.zeros(3)
    with pytest.raises(bvh.DegenerateTriangleError):
        bvh.sphere_triangle(np.array([0.0, 0.0, 0.1]), 1.0, a, a,
                            np.array([1.0, 0.0, 0.0]))


def test_closest_point_regions(rng):
    a, b, c = np.zeros(3), np.array([2.0, 0.0, 0.0]), np.array([0.0, 2.0, 0.0])
    # the returned point must not be farther than any sampled triangle point
    w = rng.random((500, 3))
    w /= w.sum(axis=1, keepdims=True)
    samples = w @ np.stack([a, b, c])
    for _ in range(100):
        p = rng.normal(scale=2.0, size=3)
        q = bvh.closest_point_on_triangle(p, a, b, c)
        dq = np.linalg.norm(p - q)
        assert dq <= np.min(np.linalg.norm(samples - p, axis=1)) + 1e-9


# -- aggregation -------------------------------------------------------------

def test_aggregate_weighted_normal_and_max_depth():
    n1 = np.array([0.0, 0.0, 1.0])
    n2 = np.array([1.0, 0.0, 0.0])
    normal, depth = bvh.aggregate_response([(n1, 0.3), (n2, 0.1)])
    expected = 0.3 * n1 + 0.1 * n2
    assert np.allclose(normal, expected / np.linalg.norm(expected))
    assert depth == pytest.approx(0.3)


def test_aggregate_cancelling_normals_fall_back_to_deepest():
    up = np.array([0.0, 0.0, 1.0])
    normal, depth = bvh.aggregate_response([(up, 0.2), (-up, 0.2 - 1e-15)])
    assert np.allclose(normal, up)
    assert depth == pytest.approx(0.2)


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        bvh.aggregate_response([])


# -- broad phase vs brute force ----------------------------------------------

def brute_force_hits(vertices, triangles, center, radius):
    hits = set()
    for t in range(triangles.shape[0]):
        tri = triangles[t]
        res = bvh.sphere_triangle(center, radius, vertices[tri[0]],
                                  vertices[tri[1]], vertices[tri[2]])
        if res is not None:
            hits.add(t)
    return hits


def test_narrowphase_set_matches_brute_force(tube_tree, rng):
    v, t = tube_tree.vertices, tube_tree.triangles
    lo, hi = v.min(axis=0), v.max(axis=0)
    for _ in range(100):
        center = rng.uniform(lo - 0.01, hi + 0.01)
        radius = rng.uniform(1e-3, 0.02)
        candidates, _ = bvh.broadphase_query(tube_tree, center, radius)
        tree_hits = set()
        for ti in candidates:
            tri = t[ti]
            res = bvh.sphere_triangle(center, radius, v[tri[0]], v[tri[1]],
                                      v[tri[2]])
            if res is not None:
                tree_hits.add(int(ti))
        assert tree_hits == brute_force_hits(v, t, center, radius)


def test_traversal_stack_bounded_by_depth(tube_tree, rng):
    v = tube_tree.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    for _ in range(50):
        center = rng.uniform(lo, hi)
        _, high_water = bvh.broadphase_query(tube_tree, center, 0.05)
        assert high_water <= tube_tree.max_depth + 1


def test_point_mesh_contact_agrees_with_brute_force(tube_tree, rng):
    v, t = tube_tree.vertices, tube_tree.triangles
    # probe near the wall so some contacts occur
    hits = 0
    for _ in range(60):
        tri = t[rng.integers(t.shape[0])]
        center = v[tri].mean(axis=0) + rng.normal(scale=1e-3, size=3)
        res, _ = bvh.point_mesh_contact(tube_tree, center, 2e-3)
        brute = brute_force_hits(v, t, center, 2e-3)
        if res is None:
            assert not brute
        else:
            hits += 1
            responses = []
            for ti in sorted(brute):
                tb = t[ti]
                responses.append(bvh.sphere_triangle(
                    center, 2e-3, v[tb[0]], v[tb[1]], v[tb[2]]))
            normal, depth = bvh.aggregate_response(responses)
            assert np.allclose(res[0], normal, atol=1e-12)
            assert res[1] == pytest.approx(depth)
    assert hits > 10


# -- self-collision broad phase ---------------------------------------------

def test_point_groups_cover_all_points():
    spans = point_groups(10, 4)
    assert spans == [(0, 4), (4, 8), (8, 10)]


def brute_self_pairs(positions, rod_of_point, point_offsets, config):
    def group_of(i):
        rod = rod_of_point[i]
        return rod, (i - point_offsets[rod]) // config.group_size

    touch = 2.0 * config.point_radius
    pairs = []
    n = positions.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            ra, ga = group_of(i)
            rb, gb = group_of(j)
            if ra == rb and abs(ga - gb) <= config.neighbor_exclusion:
                continue
            if np.linalg.norm(positions[j] - positions[i]) < touch:
                pairs.append((i, j, touch))
    return pairs


def test_self_pairs_match_brute_force_with_loose_broadphase(rng):
    # a sphere radius large enough that the broad phase never prunes makes
    # the group-based pair set exactly the brute-force pair set
    cfg = SelfCollisionConfig(group_size=3, sphere_radius=10.0,
                              neighbor_exclusion=2, point_radius=0.05)
    positions = rng.uniform(-0.2, 0.2, size=(24, 3))
    rod_of_point = np.repeat([0, 1], 12)
    offsets = [0, 12]
    got = self_collision_pairs(positions, rod_of_point, offsets, cfg)
    want = brute_self_pairs(positions, rod_of_point, offsets, cfg)
    assert sorted((a, b) for a, b, _ in got) == [(a, b) for a, b, _ in want]
    for a, b, touch in got:
        assert a < b
        assert touch == pytest.approx(2 * cfg.point_radius)


def test_self_pairs_neighbor_exclusion_on_same_rod():
    cfg = SelfCollisionConfig(group_size=2, sphere_radius=1.0,
                              neighbor_exclusion=1, point_radius=0.5)
    # 6 collinear, tightly spaced points on one rod: only groups 0 and 2
    # are far enough apart in group index to be tested
    positions = np.outer(np.arange(6), [0.01, 0.0, 0.0])
    pairs = self_collision_pairs(positions, np.zeros(6, dtype=int), [0], cfg)
    assert {(a, b) for a, b, _ in pairs} == {(0, 4), (0, 5), (1, 4), (1, 5)}


def test_self_pairs_different_rods_never_excluded():
    cfg = SelfCollisionConfig(group_size=4, sphere_radius=1.0,
                              neighbor_exclusion=10, point_radius=0.5)
    positions = np.zeros((4, 3))
    positions[2:] += 0.01
    pairs = self_collision_pairs(positions, np.array([0, 0, 1, 1]), [0, 2],
                                 cfg)
    assert {(a, b) for a, b, _ in pairs} == {(0, 2), (0, 3), (1, 2), (1, 3)}


def test_self_collision_config_validation():
    with pytest.raises(ValueError):
        SelfCollisionConfig(group_size=0)
    with pytest.raises(ValueError):
        SelfCollisionConfig(point_radius=0.0)
