"""Flat simulation state over all rods plus per-step constraint buffers.

Both the pure-Python step and the compiled kernels operate on the arrays
held here; rods are concatenated so blocks and kernels can index into
single contiguous buffers.
"""

from dataclasses import dataclass, field

import numpy as np

from . import state as st
from .constraints import SolverConfig
from .selfcollide import SelfCollisionConfig

GRAB_CAPACITY = 16
PAIR_CAPACITY = 8192

BIND_ONE_WAY = 0
BIND_BIDIRECTIONAL = 1


@dataclass
class RodInfo:
    params: st.RodParams
    point_offset: int
    num_points: int
    contact_radius: float
    collide_mesh: bool = True

    @property
    def elem_offset(self):
        # Frame/element j of rod r sits at point_offset - r in the flat
        # element arrays (each rod has one fewer element than points).
        return self.point_offset - self.index

    index: int = 0


class World:
    """Mutable simulation state shared by all backends."""

    def __init__(self, dt=1e-4, gravity=(0.0, -9.81, 0.0),
                 solver=None, self_collision=None):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        self.gravity = np.asarray(gravity, dtype=float)
        self.solver = solver or SolverConfig()
        self.self_collision = self_collision
        self.self_collision_enabled = self_collision is not None
        self.rods = []
        self.tree = None
        self.step_index = 0
        # Collision detection cadence: 1 = every step; larger values reuse
        # the previous contact set on the skipped steps (pair detection
        # radii can be inflated via collision_margin to compensate).
        self.collision_interval = 1
        self.collision_margin = 0.0
        self._finalized = False

    def add_rod(self, rod_state, params, contact_radius=None,
                collide_mesh=True):
        if self._finalized:
            raise RuntimeError("cannot add rods after finalize()")
        info = RodInfo(params=params, point_offset=0,
                       num_points=rod_state.num_points,
                       contact_radius=contact_radius or params.radius,
                       collide_mesh=collide_mesh)
        info.index = len(self.rods)
        self.rods.append((info, rod_state.copy()))
        return info.index

    def set_mesh(self, tree):
        self.tree = tree

    def finalize(self):
        """Concatenate per-rod state into the flat arrays."""
        if not self.rods:
            raise ValueError("world needs at least one rod")
        infos, states = zip(*self.rods)
        offset = 0
        for info, s in zip(infos, states):
            info.point_offset = offset
            offset += s.num_points
        self.num_points = offset
        self.num_elements = offset - len(infos)
        self.rod_infos = list(infos)

        self.positions = np.concatenate([s.positions for s in states])
        self.velocities = np.concatenate([s.velocities for s in states])
        self.frames = np.concatenate([s.frames for s in states])
        self.angular_velocities = np.concatenate(
            [s.angular_velocities for s in states])
        self.rest_lengths = np.concatenate([s.rest_lengths for s in states])
        self.intrinsic_strains = np.concatenate(
            [s.intrinsic_strains for s in states])

        self.masses = np.concatenate([
            st.point_masses(s.rest_lengths, i.params.linear_density)
            for i, s in zip(infos, states)])
        self.inv_masses = 1.0 / self.masses
        self.inertias = np.concatenate([
            st.frame_inertias(s.rest_lengths, i.params.linear_density,
                              i.params.radius)
            for i, s in zip(infos, states)])
        self.point_locked = np.zeros(self.num_points, dtype=bool)
        self.frame_locked = np.zeros(self.num_elements, dtype=bool)

        # Per-element material constants, expanded from the rod params.
        def per_elem(fn):
            return np.concatenate([
                np.full(s.num_elements, fn(i.params))
                for i, s in zip(infos, states)])
        self.stretch_k = per_elem(lambda p: p.stretch_stiffness)
        self.penalty_k = per_elem(lambda p: p.penalty_stiffness)
        self.gamma_t = per_elem(lambda p: p.damping_translational)
        self.gamma_r = per_elem(lambda p: p.damping_rotational)
        self.extensible = per_elem(lambda p: 1.0 if p.extensible else 0.0)
        self.bend_k = np.concatenate([
            np.tile(np.asarray(i.params.bend_stiffness), (s.num_elements, 1))
            for i, s in zip(infos, states)])
        self.contact_radii = np.concatenate([
            np.full(s.num_points, i.contact_radius)
            for i, s in zip(infos, states)])
        self.collide_mesh_mask = np.concatenate([
            np.full(s.num_points, i.collide_mesh, dtype=bool)
            for i, s in zip(infos, states)])

        # Element/rod index maps: element j spans points (pt, pt+1) of one
        # rod; local parity drives the red-black distance colouring.
        elem_point = []
        elem_parity = []
        rod_of_point = []
        for info, s in zip(infos, states):
            for j in range(s.num_elements):
                elem_point.append(info.point_offset + j)
                elem_parity.append(j % 2)
            rod_of_point.extend([info.index] * s.num_points)
        self.elem_point = np.array(elem_point, dtype=np.int64)
        self.elem_parity = np.array(elem_parity, dtype=np.int64)
        self.rod_of_point = np.array(rod_of_point, dtype=np.int64)
        # Junction j couples frames (j, j+1) of one rod: valid where the
        # next element exists on the same rod.
        self.junction_valid = np.zeros(self.num_elements, dtype=bool)
        for info, s in zip(infos, states):
            eo = info.point_offset - info.index
            self.junction_valid[eo:eo + s.num_elements - 1] = True

        # External (driver) state.
        self.external_forces = np.zeros((self.num_points, 3))
        self.driver_velocity = np.zeros((len(infos), 3))
        self.driver_rotation = np.zeros(len(infos))
        self.driven_point = np.full(len(infos), -1, dtype=np.int64)
        self.driven_frame = np.full(len(infos), -1, dtype=np.int64)

        # Contact slots (one aggregated contact per point) and accumulators.
        self.contact_active = np.zeros(self.num_points, dtype=np.uint8)
        self.contact_normal = np.zeros((self.num_points, 3))
        self.contact_depth = np.zeros(self.num_points)
        self.contact_acc_n = np.zeros(self.num_points)
        self.contact_acc_t = np.zeros(self.num_points)

        # Self-collision pair buffers.
        self.pair_a = np.zeros(PAIR_CAPACITY, dtype=np.int64)
        self.pair_b = np.zeros(PAIR_CAPACITY, dtype=np.int64)
        self.pair_min_dist = np.zeros(PAIR_CAPACITY)
        self.pair_acc = np.zeros(PAIR_CAPACITY)
        self.pair_count = 0

        # Rod-to-rod bindings, fixed at scene build time.
        self.bind_a = np.zeros(0, dtype=np.int64)
        self.bind_b = np.zeros(0, dtype=np.int64)
        self.bind_mode = np.zeros(0, dtype=np.int64)

        # Grab anchors: one-way bindings toward a movable target.
        self.grab_active = np.zeros(GRAB_CAPACITY, dtype=np.uint8)
        self.grab_point = np.full(GRAB_CAPACITY, -1, dtype=np.int64)
        self.grab_target = np.zeros((GRAB_CAPACITY, 3))

        self._finalized = True
        return self

    # -- configuration helpers -------------------------------------------

    def clamp_point(self, rod, local_index, velocity=(0.0, 0.0, 0.0)):
        i = self.rod_infos[rod].point_offset + local_index
        self.point_locked[i] = True
        self.inv_masses[i] = 0.0
        self.velocities[i] = velocity

    def clamp_frame(self, rod, local_index):
        info = self.rod_infos[rod]
        self.frame_locked[info.point_offset - info.index + local_index] = True

    def set_driver(self, rod, point=0, frame=0):
        info = self.rod_infos[rod]
        self.driven_point[rod] = info.point_offset + point
        self.driven_frame[rod] = info.point_offset - info.index + frame
        self.clamp_point(rod, point)
        self.clamp_frame(rod, frame)

    def add_bindings(self, rod_a, rod_b, mode, stride=1):
        """Zero-rest-length couplings between same-index points of two rods.

        In one-way mode rod_a dominates (its points act as infinite mass).
        """
        info_a = self.rod_infos[rod_a]
        info_b = self.rod_infos[rod_b]
        n = min(info_a.num_points, info_b.num_points)
        idx = np.arange(0, n, stride, dtype=np.int64)
        self.bind_a = np.concatenate([self.bind_a, info_a.point_offset + idx])
        self.bind_b = np.concatenate([self.bind_b, info_b.point_offset + idx])
        self.bind_mode = np.concatenate([
            self.bind_mode, np.full(idx.size, mode, dtype=np.int64)])

    def grab(self, rod, local_index, target):
        info = self.rod_infos[rod]
        point = info.point_offset + local_index
        for slot in range(GRAB_CAPACITY):
            if self.grab_active[slot] and self.grab_point[slot] == point:
                self.grab_target[slot] = target
                return slot
        for slot in range(GRAB_CAPACITY):
            if not self.grab_active[slot]:
                self.grab_point[slot] = point
                self.grab_target[slot] = target
                self.grab_active[slot] = 1
                return slot
        raise RuntimeError("no free grab slot")

    def release(self, rod, local_index):
        point = self.rod_infos[rod].point_offset + local_index
        for slot in range(GRAB_CAPACITY):
            if self.grab_active[slot] and self.grab_point[slot] == point:
                self.grab_active[slot] = 0
                self.grab_point[slot] = -1

    def release_all_grabs(self):
        self.grab_active[:] = 0
        self.grab_point[:] = -1

    # -- views ------------------------------------------------------------

    def rod_state(self, rod):
        """RodState view (shared memory) of one rod."""
        info = self.rod_infos[rod]
        p0, n = info.point_offset, info.num_points
        e0 = p0 - info.index
        return st.RodState(
            self.positions[p0:p0 + n], self.velocities[p0:p0 + n],
            self.frames[e0:e0 + n - 1],
            self.angular_velocities[e0:e0 + n - 1],
            self.rest_lengths[e0:e0 + n - 1],
            self.intrinsic_strains[e0:e0 + n - 1])

    def max_strain(self):
        d = np.linalg.norm(
            self.positions[self.elem_point + 1] - self.positions[self.elem_point],
            axis=1)
        return float(np.max(np.abs(d - self.rest_lengths) / self.rest_lengths))

    def energies(self):
        totals = {"stretch": 0.0, "bend": 0.0, "penalty": 0.0}
        from .forces import elastic_energies
        for rod in range(len(self.rod_infos)):
            e = elastic_energies(self.rod_state(rod),
                                 self.rod_infos[rod].params)
            for k in totals:
                totals[k] += e[k]
        return totals
