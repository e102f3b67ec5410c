"""Single time-step of the full pipeline, pure numpy.

Phase order follows the per-step loop used by all backends: detect
collisions, external + elastic forces, velocity integration, constraint
sweeps (distance even/odd, contacts, self pairs, bindings/grabs), then
position/orientation integration.  The compiled core mirrors this module
operation for operation.
"""

import numpy as np

from . import bvh as bvh_mod
from . import forces, quat
from .selfcollide import self_collision_pairs
from .world import BIND_ONE_WAY


def detect_collisions(world):
    """Fill the per-point contact slots and the self-collision pair list.

    On steps skipped by collision_interval the previous contact set is
    reused; only the per-step impulse accumulators are reset.
    """
    if world.step_index % world.collision_interval != 0:
        world.contact_acc_n[:] = 0.0
        world.contact_acc_t[:] = 0.0
        world.pair_acc[:] = 0.0
        return int(np.sum(world.contact_active)) + world.pair_count
    world.contact_active[:] = 0
    world.contact_acc_n[:] = 0.0
    world.contact_acc_t[:] = 0.0
    contacts = 0
    if world.tree is not None:
        for i in range(world.num_points):
            if not world.collide_mesh_mask[i]:
                continue
            res, _ = bvh_mod.point_mesh_contact(
                world.tree, world.positions[i],
                world.contact_radii[i] + world.collision_margin)
            if res is not None:
                world.contact_active[i] = 1
                world.contact_normal[i] = res[0]
                # Margin inflates detection only; depth stays relative to
                # the true radius so resting contacts are not pushed out.
                world.contact_depth[i] = max(0.0, res[1] - world.collision_margin)
                contacts += 1
    world.pair_count = 0
    world.pair_acc[:] = 0.0
    if world.self_collision_enabled:
        offsets = [info.point_offset for info in world.rod_infos]
        pairs = self_collision_pairs(world.positions, world.rod_of_point,
                                     offsets, world.self_collision)
        world.pair_count = len(pairs)
        for k, (a, b, min_dist) in enumerate(pairs):
            world.pair_a[k] = a
            world.pair_b[k] = b
            world.pair_min_dist[k] = min_dist
    return contacts + world.pair_count


def compute_forces(world):
    """Elastic + damping + gravity + external forces into fresh buffers."""
    f = np.zeros((world.num_points, 3))
    tau = np.zeros((world.num_elements, 3))
    for rod in range(len(world.rod_infos)):
        info = world.rod_infos[rod]
        s = world.rod_state(rod)
        buf = forces.ForceTorqueBuffer.zeros(s.num_points)
        forces.elastic_forces_torques(s, info.params, buf)
        forces.add_damping(s, info.params, buf)
        p0, e0 = info.point_offset, info.point_offset - info.index
        f[p0:p0 + s.num_points] += buf.forces
        tau[e0:e0 + s.num_elements] += buf.body_torques
    f += world.masses[:, None] * world.gravity
    f += world.external_forces
    return f, tau


def integrate_velocities(world, f, tau):
    dt = world.dt
    free = ~world.point_locked
    world.velocities[free] += dt * f[free] / world.masses[free, None]
    w = world.angular_velocities
    gyro = np.cross(w, world.inertias * w)
    freef = ~world.frame_locked
    world.angular_velocities[freef] += (
        dt * (tau[freef] - gyro[freef]) / world.inertias[freef])
    _apply_drivers(world)


def _apply_drivers(world):
    for rod in range(len(world.rod_infos)):
        pt = world.driven_point[rod]
        if pt >= 0:
            world.velocities[pt] = world.driver_velocity[rod]
        fr = world.driven_frame[rod]
        if fr >= 0:
            world.angular_velocities[fr] = (0.0, 0.0, world.driver_rotation[rod])


def _distance_phase(world, sel):
    if sel.size == 0:
        return
    ia = world.elem_point[sel]
    ib = ia + 1
    pos, vel, invm = world.positions, world.velocities, world.inv_masses
    d = pos[ib] - pos[ia]
    dist = np.sqrt(np.sum(d * d, axis=1))
    wsum = invm[ia] + invm[ib]
    ok = (dist > 0.0) & (wsum > 0.0)
    n = np.where(dist[:, None] > 0.0, d / np.where(dist == 0.0, 1.0, dist)[:, None], 0.0)
    c = dist - world.rest_lengths[sel]
    vrel = np.sum((vel[ib] - vel[ia]) * n, axis=1)
    beta = world.solver.position_bias
    lam = np.where(ok, -(vrel + beta * c / world.dt) /
                   np.where(wsum == 0.0, 1.0, wsum), 0.0)
    vel[ia] -= (invm[ia] * lam)[:, None] * n
    vel[ib] += (invm[ib] * lam)[:, None] * n


def _contact_phase(world):
    sel = np.nonzero((world.contact_active == 1) & ~world.point_locked)[0]
    if sel.size == 0:
        return
    vel = world.velocities
    n = world.contact_normal[sel]
    m = world.masses[sel]
    beta = world.solver.position_bias
    e = world.solver.restitution
    mu = world.solver.mu
    vn = np.sum(vel[sel] * n, axis=1)
    raw = m * (-vn * (1.0 + e) + beta * world.contact_depth[sel] / world.dt)
    new_acc = np.maximum(0.0, world.contact_acc_n[sel] + raw)
    applied = new_acc - world.contact_acc_n[sel]
    vel[sel] += (applied / m)[:, None] * n
    world.contact_acc_n[sel] = new_acc

    if mu > 0.0:
        v = vel[sel]
        vt = v - np.sum(v * n, axis=1)[:, None] * n
        vt_norm = np.sqrt(np.sum(vt * vt, axis=1))
        cap = np.maximum(0.0, mu * new_acc - world.contact_acc_t[sel])
        jt = np.minimum(m * vt_norm, cap)
        scale = np.where(vt_norm > 0.0, jt / (m * np.where(vt_norm == 0.0, 1.0, vt_norm)), 0.0)
        vel[sel] -= scale[:, None] * vt
        world.contact_acc_t[sel] += jt


def _pair_phase(world):
    pos, vel, invm = world.positions, world.velocities, world.inv_masses
    beta = world.solver.position_bias
    dt = world.dt
    for k in range(world.pair_count):
        a, b = world.pair_a[k], world.pair_b[k]
        d = pos[b] - pos[a]
        dist = np.sqrt(d @ d)
        wsum = invm[a] + invm[b]
        if dist == 0.0 or wsum == 0.0:
            continue
        n = d / dist
        vrel = (vel[b] - vel[a]) @ n
        depth = max(0.0, world.pair_min_dist[k] - dist)
        raw = (-vrel + beta * depth / dt) / wsum
        new_acc = max(0.0, world.pair_acc[k] + raw)
        lam = new_acc - world.pair_acc[k]
        world.pair_acc[k] = new_acc
        vel[a] -= invm[a] * lam * n
        vel[b] += invm[b] * lam * n


def _binding_phase(world):
    pos, vel, invm = world.positions, world.velocities, world.inv_masses
    beta = world.solver.position_bias
    dt = world.dt
    for k in range(world.bind_a.shape[0]):
        a, b = world.bind_a[k], world.bind_b[k]
        wa = 0.0 if world.bind_mode[k] == BIND_ONE_WAY else invm[a]
        wb = invm[b]
        d = pos[b] - pos[a]
        dist = np.sqrt(d @ d)
        wsum = wa + wb
        if dist == 0.0 or wsum == 0.0:
            continue
        n = d / dist
        vrel = (vel[b] - vel[a]) @ n
        lam = -(vrel + beta * dist / dt) / wsum
        if wa > 0.0:
            vel[a] -= wa * lam * n
        vel[b] += wb * lam * n
    for slot in range(world.grab_active.shape[0]):
        if not world.grab_active[slot]:
            continue
        b = world.grab_point[slot]
        wb = invm[b]
        if wb == 0.0:
            continue
        d = pos[b] - world.grab_target[slot]
        dist = np.sqrt(d @ d)
        if dist == 0.0:
            continue
        n = d / dist
        lam = -((vel[b] @ n) + beta * dist / dt) / wb
        vel[b] += wb * lam * n


def iterate_constraints(world):
    even = np.nonzero((world.elem_parity == 0) & (world.extensible == 0.0))[0]
    odd = np.nonzero((world.elem_parity == 1) & (world.extensible == 0.0))[0]
    for _ in range(world.solver.iterations):
        _distance_phase(world, even)
        _distance_phase(world, odd)
        _contact_phase(world)
        _pair_phase(world)
        _binding_phase(world)


def integrate_positions(world):
    dt = world.dt
    world.positions += dt * world.velocities
    omega = np.zeros((world.num_elements, 4))
    omega[:, 1:] = world.angular_velocities
    world.frames += dt * 0.5 * quat.multiply(world.frames, omega)
    world.frames /= np.linalg.norm(world.frames, axis=1)[:, None]


def step(world):
    """One full time-step; returns the number of active contacts."""
    contacts = detect_collisions(world)
    f, tau = compute_forces(world)
    if not np.all(np.isfinite(f)) or not np.all(np.isfinite(tau)):
        raise FloatingPointError(
            f"non-finite force/torque at step {world.step_index}")
    integrate_velocities(world, f, tau)
    iterate_constraints(world)
    integrate_positions(world)
    world.step_index += 1
    return contacts
