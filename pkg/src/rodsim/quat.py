"""Unit-quaternion helpers for material frames.

Convention: q = (w, x, y, z), scalar first.  Frames rotate body vectors into
the world frame; the third column of the rotation matrix is the director d3.
"""

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def multiply(a, b):
    """Hamilton product a*b for (..., 4) arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, av = a[..., 0], a[..., 1:]
    bw, bv = b[..., 0], b[..., 1:]
    out = np.empty(np.broadcast(a, b).shape[:-1] + (4,))
    out[..., 0] = aw * bw - np.sum(av * bv, axis=-1)
    out[..., 1:] = (
        aw[..., None] * bv + bw[..., None] * av + np.cross(av, bv)
    )
    return out


def conjugate(q):
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def rotate(q, v):
    """Rotate body-frame vector(s) v into the world frame."""
    qv = np.zeros(np.asarray(v).shape[:-1] + (4,))
    qv[..., 1:] = v
    return multiply(multiply(q, qv), conjugate(q))[..., 1:]


def director3(q):
    """Third column of R(q), as a polynomial in the components of q.

    Written without normalization so that energies stay smooth functions of
    the raw quaternion components (needed for gradient checks).
    """
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)],
        axis=-1,
    )


def director3_jacobian(q):
    """d director3 / d q, shape (..., 3, 4)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    zero = np.zeros_like(w)
    jac = np.stack(
        [
            np.stack([2 * y, 2 * z, 2 * w, 2 * x], axis=-1),
            np.stack([-2 * x, -2 * w, 2 * z, 2 * y], axis=-1),
            np.stack([zero, -4 * x, -4 * y, zero], axis=-1),
        ],
        axis=-2,
    )
    return jac


def to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# Skew-symmetric bilinear forms: strain_k = 2 * q^T B_k q', equivalent to
# twice the vector part of conj(q) * q'.
B1 = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)
B2 = np.array(
    [
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ]
)
B3 = np.array(
    [
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
    ]
)
B_MATRICES = np.stack([B1, B2, B3])
