"""Triangle-mesh collision: balanced AABB tree, sphere narrow phase,
penetration-weighted response aggregation.

The tree is built once by recursive longest-axis median splits of triangle
centroids and stored in an implicit heap array (children of node i are
2i+1 and 2i+2), so queries traverse iteratively with a small fixed stack.
"""

from dataclasses import dataclass

import numpy as np

STACK_CAPACITY = 32
LEAF_MAX_TRIS = 2


class DegenerateTriangleError(ValueError):
    pass


@dataclass
class TriMeshBvh:
    vertices: np.ndarray      # (V, 3)
    triangles: np.ndarray     # (T, 3) int
    node_min: np.ndarray      # (nodes, 3); +inf on unused slots
    node_max: np.ndarray
    node_start: np.ndarray    # leaf: offset into tri_order; internal: -1
    node_count: np.ndarray    # leaf: 1..LEAF_MAX_TRIS; internal: 0; unused: -1
    tri_order: np.ndarray     # permutation of triangle indices
    max_depth: int

    @property
    def num_leaves(self):
        return int(np.sum(self.node_count > 0))

    def stats(self):
        leaves = self.node_count[self.node_count > 0]
        return {
            "triangles": int(self.triangles.shape[0]),
            "nodes": int(np.sum(self.node_count >= 0)),
            "leaves": int(leaves.size),
            "max_depth": self.max_depth,
            "tris_per_leaf": float(np.mean(leaves)) if leaves.size else 0.0,
        }


def build_aabb_tree(vertices, triangles):
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    t = triangles.shape[0]
    if t == 0:
        raise ValueError("empty mesh")

    corners = vertices[triangles]                     # (T, 3, 3)
    tri_min = corners.min(axis=1)
    tri_max = corners.max(axis=1)
    centroids = corners.mean(axis=1)

    # Upper bound on heap size for a balanced split down to <=2 tris/leaf.
    depth_bound = max(1, int(np.ceil(np.log2(max(1, (t + 1) // 2)))) + 1)
    cap = 2 ** (depth_bound + 1) - 1
    node_min = np.full((cap, 3), np.inf)
    node_max = np.full((cap, 3), -np.inf)
    node_start = np.full(cap, -1, dtype=np.int64)
    node_count = np.full(cap, -1, dtype=np.int64)
    order = np.arange(t, dtype=np.int64)

    max_depth = 0
    stack = [(0, 0, t, 1)]  # (node, lo, hi, depth)
    while stack:
        node, lo, hi, depth = stack.pop()
        idx = order[lo:hi]
        node_min[node] = tri_min[idx].min(axis=0)
        node_max[node] = tri_max[idx].max(axis=0)
        max_depth = max(max_depth, depth)
        if hi - lo <= LEAF_MAX_TRIS:
            node_start[node] = lo
            node_count[node] = hi - lo
            continue
        node_count[node] = 0
        cen = centroids[idx]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        mid = (hi - lo) // 2
        local = np.argsort(cen[:, axis], kind="stable")
        order[lo:hi] = idx[local]
        stack.append((2 * node + 1, lo, lo + mid, depth + 1))
        stack.append((2 * node + 2, lo + mid, hi, depth + 1))

    used = min(cap, 2 ** (max_depth + 1) - 1)
    return TriMeshBvh(vertices, triangles, node_min[:used], node_max[:used],
                      node_start[:used], node_count[:used], order, max_depth)


def broadphase_query(tree, center, radius, out=None):
    """Triangle indices in all leaves whose AABB overlaps the sphere's AABB.

    Returns (indices, stack_high_water).  The fixed traversal stack is
    sized so that overflow is unreachable for trees within STACK_CAPACITY.
    """
    if tree.max_depth + 1 > STACK_CAPACITY:
        raise RuntimeError("tree deeper than the traversal stack capacity")
    center = np.asarray(center, dtype=float)
    lo = center - radius
    hi = center + radius
    hits = [] if out is None else out
    stack = np.empty(STACK_CAPACITY, dtype=np.int64)
    stack[0] = 0
    top = 1
    high_water = 1
    nodes = tree.node_min.shape[0]
    while top:
        top -= 1
        node = stack[top]
        if node >= nodes or tree.node_count[node] < 0:
            continue
        if np.any(tree.node_min[node] > hi) or np.any(tree.node_max[node] < lo):
            continue
        cnt = tree.node_count[node]
        if cnt > 0:
            start = tree.node_start[node]
            hits.extend(tree.tri_order[start:start + cnt])
        else:
            stack[top] = 2 * node + 1
            stack[top + 1] = 2 * node + 2
            top += 2
            high_water = max(high_water, top)
    return hits, high_water


def sphere_triangle(center, radius, a, b, c):
    """Sphere vs triangle narrow phase.

    Returns (normal, depth) on overlap, None otherwise; the normal is the
    triangle face normal oriented toward the sphere center.  Degenerate
    triangles raise DegenerateTriangleError.
    """
    center = np.asarray(center, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    face = np.cross(b - a, c - a)
    area2 = np.sqrt(face @ face)
    if area2 == 0.0:
        raise DegenerateTriangleError("zero-area triangle")
    closest = closest_point_on_triangle(center, a, b, c)
    delta = center - closest
    d = np.sqrt(delta @ delta)
    if d >= radius:
        return None
    n = face / area2
    if n @ (center - a) < 0.0:
        n = -n
    return n, radius - d


def closest_point_on_triangle(p, a, b, c):
    """Ericson's closest-point-on-triangle construction."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        return a + (d1 / (d1 - d3)) * ab
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        return a + (d2 / (d2 - d6)) * ac
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b)
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


def aggregate_response(contacts):
    """Combine several (normal, depth) contacts for one point.

    The normal is the penetration-weighted average; the depth is the
    maximum.  Near-cancelling normals fall back to the deepest contact.
    """
    if not contacts:
        raise ValueError("need at least one contact")
    normals = np.array([n for n, _ in contacts])
    depths = np.array([d for _, d in contacts])
    weighted = (depths[:, None] * normals).sum(axis=0)
    norm = np.sqrt(weighted @ weighted)
    deepest = int(np.argmax(depths))
    if norm < 1e-12 * max(1.0, depths.max()):
        return normals[deepest], float(depths[deepest])
    return weighted / norm, float(depths.max())


def point_mesh_contact(tree, center, radius):
    """Broad + narrow phase + aggregation for a single point sphere.

    Returns (normal, depth) or None, plus the traversal high-water mark.
    """
    candidates, high_water = broadphase_query(tree, center, radius)
    hits = []
    for t in candidates:
        tri = tree.triangles[t]
        res = sphere_triangle(center, radius, tree.vertices[tri[0]],
                              tree.vertices[tri[1]], tree.vertices[tri[2]])
        if res is not None:
            hits.append(res)
    if not hits:
        return None, high_water
    return aggregate_response(hits), high_water
