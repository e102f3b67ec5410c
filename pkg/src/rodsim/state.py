"""Rod state, material parameters and the discrete mass/inertia lumping."""

from dataclasses import dataclass, field

import numpy as np

from . import quat


class DegenerateSegmentError(ValueError):
    """Raised when two consecutive mass points coincide."""


@dataclass
class RodParams:
    """Material and numerical constants of one rod."""

    radius: float = 1e-3                 # m
    stretch_modulus: float = 1e7         # Pa
    bend_modulus: float = 1e6            # Pa
    shear_modulus: float = 1e6           # Pa
    linear_density: float = 0.05         # kg/m
    penalty_stiffness: float = 1.0       # N
    damping_translational: float = 0.0   # N*s/m
    damping_rotational: float = 0.0      # N*m*s
    extensible: bool = False
    # "r4" uses beam-theory cross-section factors in the bend/twist
    # stiffnesses, "r2" keeps the literal r^2 exponents.
    cross_section_exponent: str = "r4"

    def __post_init__(self):
        for name in ("radius", "stretch_modulus", "bend_modulus",
                     "shear_modulus", "linear_density", "penalty_stiffness"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.damping_translational < 0.0 or self.damping_rotational < 0.0:
            raise ValueError("damping coefficients must be non-negative")
        if self.cross_section_exponent not in ("r2", "r4"):
            raise ValueError("cross_section_exponent must be 'r2' or 'r4'")

    @property
    def stretch_stiffness(self):
        return self.stretch_modulus * np.pi * self.radius**2

    @property
    def bend_stiffness(self):
        """(K1, K2, K3): bend, bend, twist stiffness constants."""
        n = 2 if self.cross_section_exponent == "r2" else 4
        rn = self.radius**n
        k12 = self.bend_modulus * np.pi * rn / 4.0
        k3 = self.shear_modulus * np.pi * rn / 2.0
        return k12, k12, k3


@dataclass
class RodState:
    """Full dynamic state of one discretized rod.

    positions/velocities have N entries, frames/angular velocities N-1.
    Angular velocities are expressed in the body frame.
    """

    positions: np.ndarray
    velocities: np.ndarray
    frames: np.ndarray
    angular_velocities: np.ndarray
    rest_lengths: np.ndarray
    intrinsic_strains: np.ndarray = None

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=float)
        self.frames = np.ascontiguousarray(self.frames, dtype=float)
        self.angular_velocities = np.ascontiguousarray(
            self.angular_velocities, dtype=float)
        self.rest_lengths = np.ascontiguousarray(self.rest_lengths, dtype=float)
        if self.intrinsic_strains is None:
            self.intrinsic_strains = np.zeros((self.num_elements, 3))
        self.intrinsic_strains = np.ascontiguousarray(
            self.intrinsic_strains, dtype=float)
        self.validate()

    @property
    def num_points(self):
        return self.positions.shape[0]

    @property
    def num_elements(self):
        return self.num_points - 1

    def validate(self):
        n = self.num_points
        if n < 2:
            raise ValueError("a rod needs at least two mass points")
        if self.velocities.shape != (n, 3):
            raise ValueError("velocities must match positions in length")
        for name, arr, width in (
            ("frames", self.frames, 4),
            ("angular_velocities", self.angular_velocities, 3),
            ("intrinsic_strains", self.intrinsic_strains, 3),
        ):
            if arr.shape != (n - 1, width):
                raise ValueError(f"{name} must have N-1 = {n - 1} entries")
        if self.rest_lengths.shape != (n - 1,):
            raise ValueError("rest_lengths must have N-1 entries")
        if np.any(self.rest_lengths <= 0.0):
            raise ValueError("rest lengths must be strictly positive")
        norms = np.linalg.norm(self.frames, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("frame quaternions must be unit within 1e-9")

    def copy(self):
        return RodState(
            self.positions.copy(), self.velocities.copy(), self.frames.copy(),
            self.angular_velocities.copy(), self.rest_lengths.copy(),
            self.intrinsic_strains.copy())


def init_rod(num_points, length, axis=(0.0, 0.0, 1.0), origin=(0.0, 0.0, 0.0),
             intrinsic_strains=None):
    """Straight rod of `num_points` mass points along `axis`.

    Rest lengths are uniform, frames align d3 with the axis, velocities are
    zero.  `intrinsic_strains` optionally gives the per-frame rest
    curvature/twist profile (e.g. a curved tip).
    """
    if num_points < 2:
        raise ValueError("num_points must be >= 2")
    if length <= 0.0:
        raise ValueError("length must be positive")
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    seg = length / (num_points - 1)
    positions = np.asarray(origin, dtype=float) + seg * np.outer(
        np.arange(num_points, dtype=float), axis)
    frames = np.tile(_frame_for_axis(axis), (num_points - 1, 1))
    return RodState(
        positions=positions,
        velocities=np.zeros((num_points, 3)),
        frames=frames,
        angular_velocities=np.zeros((num_points - 1, 3)),
        rest_lengths=np.full(num_points - 1, seg),
        intrinsic_strains=intrinsic_strains,
    )


def _frame_for_axis(axis):
    """Unit quaternion rotating (0,0,1) onto `axis`."""
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(z, axis))
    if c > 1.0 - 1e-12:
        return quat.IDENTITY.copy()
    if c < -1.0 + 1e-12:
        return np.array([0.0, 1.0, 0.0, 0.0])  # pi about x
    rot_axis = np.cross(z, axis)
    return quat.from_axis_angle(rot_axis, np.arccos(np.clip(c, -1.0, 1.0)))


def point_masses(rest_lengths, linear_density):
    """Lumped mass per point: half of each adjacent element's mass."""
    m = np.zeros(rest_lengths.shape[0] + 1)
    m[:-1] += 0.5 * linear_density * rest_lengths
    m[1:] += 0.5 * linear_density * rest_lengths
    return m


def frame_inertias(rest_lengths, linear_density, radius):
    """Diagonal body inertia per frame, cylinder cross-section lumping."""
    ms = linear_density * rest_lengths
    inertia = np.empty((rest_lengths.shape[0], 3))
    inertia[:, 0] = 0.25 * ms * radius**2
    inertia[:, 1] = 0.25 * ms * radius**2
    inertia[:, 2] = 0.5 * ms * radius**2
    return inertia


def segment_tangent(r_a, r_b):
    """Unit tangent of the segment from r_a to r_b."""
    d = np.asarray(r_b, dtype=float) - np.asarray(r_a, dtype=float)
    n = np.linalg.norm(d)
    if n == 0.0:
        raise DegenerateSegmentError("coincident mass points")
    return d / n
