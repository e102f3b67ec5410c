"""Triangle-mesh loading/saving and procedural test geometry.

Meshes are stored as plain-text polygon files (OBJ subset: `v` and `f`
records, triangles only).  A curved-tube generator provides a vessel-like
hollow mesh so the insertion scenarios need no external data.
"""

import numpy as np


def load_mesh(path):
    vertices = []
    faces = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: malformed vertex")
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ValueError(
                        f"{path}:{lineno}: only triangle faces are supported")
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not vertices or not faces:
        raise ValueError(f"{path}: no triangles found")
    return np.array(vertices, dtype=float), np.array(faces, dtype=np.int64)


def save_mesh(path, vertices, triangles):
    with open(path, "w") as fh:
        for v in vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def curved_tube(length=0.5, radius=0.02, rings=160, segments=48,
                curvature=2.0):
    """Hollow tube whose centreline bends in the x-z plane.

    The entry opening sits at the origin with the axis along +z, so a rod
    laid out along -z can be pushed straight in.  `curvature` is the
    centreline curvature in 1/m (0 gives a straight tube).
    """
    s = np.linspace(0.0, length, rings)
    if curvature == 0.0:
        centre = np.stack([np.zeros_like(s), np.zeros_like(s), s], axis=1)
        tangent = np.tile([0.0, 0.0, 1.0], (rings, 1))
    else:
        # Circular arc of radius 1/curvature starting along +z.
        rc = 1.0 / curvature
        ang = s * curvature
        centre = np.stack(
            [rc * (1.0 - np.cos(ang)), np.zeros_like(s), rc * np.sin(ang)],
            axis=1)
        tangent = np.stack(
            [np.sin(ang), np.zeros_like(s), np.cos(ang)], axis=1)
    normal = np.stack(
        [tangent[:, 2], np.zeros(rings), -tangent[:, 0]], axis=1)
    binormal = np.tile([0.0, 1.0, 0.0], (rings, 1))

    theta = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    ring = (np.cos(theta)[:, None, None] * normal[None] +
            np.sin(theta)[:, None, None] * binormal[None])  # (seg, ring, 3)
    vertices = (centre[None] + radius * ring).transpose(1, 0, 2).reshape(-1, 3)

    triangles = []
    for i in range(rings - 1):
        for j in range(segments):
            a = i * segments + j
            b = i * segments + (j + 1) % segments
            c = (i + 1) * segments + j
            d = (i + 1) * segments + (j + 1) % segments
            triangles.append([a, b, c])
            triangles.append([b, d, c])
    return vertices, np.array(triangles, dtype=np.int64)


def floor_mesh(size=1.0, y=0.0, cells=8):
    """Flat horizontal triangle grid at height y, centred on the origin."""
    xs = np.linspace(-size, size, cells + 1)
    zs = np.linspace(-size, size, cells + 1)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    vertices = np.stack([gx.ravel(), np.full(gx.size, y), gz.ravel()], axis=1)
    triangles = []
    for i in range(cells):
        for j in range(cells):
            a = i * (cells + 1) + j
            b = a + 1
            c = a + cells + 1
            d = c + 1
            triangles.append([a, b, c])
            triangles.append([b, d, c])
    return vertices, np.array(triangles, dtype=np.int64)
