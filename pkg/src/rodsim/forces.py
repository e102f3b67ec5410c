"""Discrete elastic energies and their analytic gradients.

Stretch and tangent-alignment penalty act on the centreline points and, for
the penalty, on the frame of the same element.  Bend/twist acts on pairs of
neighbouring frames through the finite-difference quaternion derivative.
All gradients are checked against finite differences in the test suite.
"""

from dataclasses import dataclass

import numpy as np

from . import quat


@dataclass
class StrainSample:
    """Strain measures of one element: stretch, bend/twist, unit tangent."""

    v3: float
    u: np.ndarray
    tangent: np.ndarray


@dataclass
class ForceTorqueBuffer:
    """Accumulator for forces on points and generalized torques on frames."""

    forces: np.ndarray          # (N, 3)
    frame_forces: np.ndarray    # (N-1, 4) tangent-projected quaternion force
    body_torques: np.ndarray    # (N-1, 3)

    @classmethod
    def zeros(cls, num_points):
        return cls(
            np.zeros((num_points, 3)),
            np.zeros((num_points - 1, 4)),
            np.zeros((num_points - 1, 3)),
        )

    def clear(self):
        self.forces[:] = 0.0
        self.frame_forces[:] = 0.0
        self.body_torques[:] = 0.0


def hemisphere_flip(q_ref, q):
    """Flip q into the hemisphere of q_ref (negate when the dot is negative)."""
    sign = np.where(np.sum(q_ref * q, axis=-1) < 0.0, -1.0, 1.0)
    return sign[..., None] * q, sign


def quat_spatial_derivative(q, q_next, length):
    """Componentwise finite difference (q_next - q) / length.

    q_next is expected pre-flipped to the hemisphere of q.
    """
    if length <= 0.0:
        raise ValueError("length must be positive")
    return (np.asarray(q_next, dtype=float) - np.asarray(q, dtype=float)) / length


def darboux_strains(q, q_prime):
    """Body-frame bend/twist strain vector: 2 * vec(conj(q) * q_prime)."""
    return 2.0 * quat.multiply(quat.conjugate(q), q_prime)[..., 1:]


def darboux_strains_bmatrix(q, q_prime):
    """Same strains via the skew bilinear forms, 2 * q^T B_k q'."""
    q = np.asarray(q, dtype=float)
    q_prime = np.asarray(q_prime, dtype=float)
    return 2.0 * np.einsum("...i,kij,...j->...k", q, quat.B_MATRICES, q_prime)


def _element_geometry(state):
    d = state.positions[1:] - state.positions[:-1]
    lengths = np.sqrt(np.sum(d * d, axis=1))
    if np.any(lengths == 0.0):
        raise ValueError("degenerate segment: coincident mass points")
    tangents = d / lengths[:, None]
    return lengths, tangents


def _junction_derivatives(state):
    """Flipped neighbour frames and quaternion derivatives per junction."""
    q = state.frames
    qn, sign = hemisphere_flip(q[:-1], q[1:])
    qp = (qn - q[:-1]) / state.rest_lengths[:-1, None]
    return qn, sign, qp


def strain_samples(state):
    lengths, tangents = _element_geometry(state)
    v3 = lengths / state.rest_lengths
    m = state.num_elements
    u = np.zeros((m, 3))
    if m > 1:
        _, _, qp = _junction_derivatives(state)
        u[:-1] = darboux_strains(state.frames[:-1], qp)
    return [StrainSample(v3[j], u[j], tangents[j]) for j in range(m)]


def elastic_energies(state, params):
    """Discrete stretch, bend/twist and alignment-penalty energies.

    Stretch is reported as 0 in inextensible mode, where the distance
    constraints replace it.
    """
    rest = state.rest_lengths
    lengths, tangents = _element_geometry(state)

    v_stretch = 0.0
    if params.extensible:
        v3 = lengths / rest
        v_stretch = 0.5 * params.stretch_stiffness * np.sum((v3 - 1.0) ** 2 * rest)

    v_bend = 0.0
    if state.num_elements > 1:
        _, _, qp = _junction_derivatives(state)
        u = darboux_strains(state.frames[:-1], qp)
        du = u - state.intrinsic_strains[:-1]
        k = np.asarray(params.bend_stiffness)
        v_bend = 0.5 * np.sum((du * du) @ k * rest[:-1])

    d3 = quat.director3(state.frames)
    err = tangents - d3
    v_penalty = 0.5 * params.penalty_stiffness * np.sum(
        np.sum(err * err, axis=1) * rest)

    return {"stretch": float(v_stretch), "bend": float(v_bend),
            "penalty": float(v_penalty)}


def elastic_forces_torques(state, params, buffer=None):
    """Analytic negative gradients of the elastic energies.

    Fills `buffer.forces` with point forces, `buffer.frame_forces` with the
    tangent-projected quaternion-space generalized force and
    `buffer.body_torques` with its body-frame torque equivalent.
    Velocity-dependent damping is handled separately (add_damping).
    """
    if buffer is None:
        buffer = ForceTorqueBuffer.zeros(state.num_points)
    rest = state.rest_lengths
    lengths, tangents = _element_geometry(state)
    q = state.frames

    # Pair force on point j+1 from element j (point j gets the opposite).
    pair = np.zeros((state.num_elements, 3))
    if params.extensible:
        v3 = lengths / rest
        pair -= (params.stretch_stiffness * (v3 - 1.0))[:, None] * tangents

    d3 = quat.director3(q)
    err = tangents - d3
    kp = params.penalty_stiffness
    proj = err - np.sum(err * tangents, axis=1)[:, None] * tangents
    pair -= (kp * rest / lengths)[:, None] * proj

    frame_force = np.zeros((state.num_elements, 4))
    jac = quat.director3_jacobian(q)  # (M, 3, 4)
    frame_force += kp * rest[:, None] * np.einsum("jkl,jk->jl", jac, err)

    if state.num_elements > 1:
        qn, sign, qp = _junction_derivatives(state)
        qa = q[:-1]
        u = darboux_strains(qa, qp)
        du = u - state.intrinsic_strains[:-1]
        k = np.asarray(params.bend_stiffness)
        # du_k/dq and du_k/dq_next per junction, shape (M-1, 3, 4)
        bq_p = np.einsum("kij,mj->mki", quat.B_MATRICES, qp)
        bq_a = np.einsum("kij,mj->mki", quat.B_MATRICES, qa)
        inv_l = 1.0 / rest[:-1]
        grad_qa = 2.0 * bq_p + 2.0 * inv_l[:, None, None] * bq_a
        grad_qn = -2.0 * inv_l[:, None, None] * bq_a
        coeff = (k[None, :] * du) * rest[:-1, None]  # (M-1, 3)
        frame_force[:-1] -= np.einsum("mk,mki->mi", coeff, grad_qa)
        frame_force[1:] -= sign[:, None] * np.einsum("mk,mki->mi", coeff, grad_qn)

    # Project onto the tangent space of the unit-quaternion sphere.
    frame_force -= np.sum(frame_force * q, axis=1)[:, None] * q

    buffer.forces[:-1] -= pair
    buffer.forces[1:] += pair
    buffer.frame_forces += frame_force
    buffer.body_torques += 0.5 * quat.multiply(quat.conjugate(q),
                                               frame_force)[:, 1:]
    if not np.all(np.isfinite(buffer.forces)) or not np.all(
            np.isfinite(buffer.body_torques)):
        raise FloatingPointError("non-finite elastic force/torque")
    return buffer


def add_damping(state, params, buffer):
    """Viscous damping of relative motion between neighbouring elements."""
    gt = params.damping_translational
    if gt > 0.0:
        rel = state.velocities[1:] - state.velocities[:-1]
        buffer.forces[1:] -= gt * rel
        buffer.forces[:-1] += gt * rel
    gr = params.damping_rotational
    if gr > 0.0 and state.num_elements > 1:
        rel = state.angular_velocities[1:] - state.angular_velocities[:-1]
        buffer.body_torques[1:] -= gr * rel
        buffer.body_torques[:-1] += gr * rel
    return buffer


def integrate_velocities(state, buffer, masses, inertias, dt,
                         point_locked=None, frame_locked=None):
    """Semi-implicit velocity update; positions are integrated separately."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    dv = dt * buffer.forces / masses[:, None]
    if point_locked is not None:
        dv[point_locked] = 0.0
    state.velocities += dv

    w = state.angular_velocities
    iw = inertias * w
    gyro = np.cross(w, iw)
    dw = dt * (buffer.body_torques - gyro) / inertias
    if frame_locked is not None:
        dw[frame_locked] = 0.0
    state.angular_velocities += dw


def integrate_positions(state, dt):
    """Position/orientation update from the constrained velocities."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    state.positions += dt * state.velocities
    omega = np.zeros((state.num_elements, 4))
    omega[:, 1:] = state.angular_velocities
    state.frames += dt * 0.5 * quat.multiply(state.frames, omega)
    state.frames /= np.linalg.norm(state.frames, axis=1)[:, None]
