"""Iterative velocity-level impulse solver.

Distance, contact, self-collision and binding constraints are solved as
local pairwise impulses with a Baumgarte position bias, swept a fixed
number of iterations in the order: distance (even elements, then odd),
contacts, self-collision pairs, bindings.  Infinite mass is encoded as
inverse mass 0.
"""

from dataclasses import dataclass, field

import numpy as np

ONE_WAY = 0
BIDIRECTIONAL = 1


@dataclass
class SolverConfig:
    iterations: int = 10
    position_bias: float = 0.2
    restitution: float = 0.0
    mu: float = 0.3

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 <= self.position_bias <= 1.0:
            raise ValueError("position_bias must lie in [0, 1]")


@dataclass
class Contact:
    point_index: int
    normal: np.ndarray
    depth: float
    mu: float = 0.0
    restitution: float = 0.0
    source: str = "mesh"


@dataclass
class ConstraintSet:
    """Constraints assembled for one time-step."""

    distance: list = field(default_factory=list)   # (idx_a, idx_b, rest_len)
    contacts: list = field(default_factory=list)   # Contact
    self_pairs: list = field(default_factory=list)  # (idx_a, idx_b, min_dist)
    bindings: list = field(default_factory=list)   # (idx_a, idx_b, mode)


def distance_impulse(pa, pb, va, vb, inv_ma, inv_mb, rest_len, dt, beta):
    """Impulse pair restoring the rest distance between two mass points.

    Returns (impulse_on_a, impulse_on_b); returns zeros for a degenerate
    (coincident) axis or when both ends are immovable.
    """
    d = np.asarray(pb, dtype=float) - np.asarray(pa, dtype=float)
    dist = np.sqrt(d @ d)
    w = inv_ma + inv_mb
    if dist == 0.0 or w == 0.0:
        return np.zeros(3), np.zeros(3)
    n = d / dist
    v_rel = np.asarray(vb, dtype=float) - np.asarray(va, dtype=float)
    c = dist - rest_len
    lam = -(v_rel @ n + beta * c / dt) / w
    return -lam * n, lam * n


def contact_impulse(velocity, mass, contact, dt, beta=0.2,
                    acc_normal=0.0, acc_tangent=0.0):
    """Single-point contact solve with box friction.

    Returns (new_velocity, acc_normal, acc_tangent); the accumulators keep
    the total normal impulse non-negative and the total tangential impulse
    inside the Coulomb cone across iterations.
    """
    v = np.asarray(velocity, dtype=float).copy()
    n = contact.normal
    vn = v @ n
    raw = mass * (-vn * (1.0 + contact.restitution) + beta * contact.depth / dt)
    new_acc = max(0.0, acc_normal + raw)
    applied = new_acc - acc_normal
    v += (applied / mass) * n

    vt = v - (v @ n) * n
    vt_norm = np.sqrt(vt @ vt)
    if vt_norm > 0.0 and contact.mu > 0.0:
        cap = contact.mu * new_acc
        jt = min(mass * vt_norm, max(0.0, cap - acc_tangent))
        v -= (jt / mass) * (vt / vt_norm)
        acc_tangent += jt
    return v, new_acc, acc_tangent


def self_pair_impulse(pa, pb, va, vb, inv_ma, inv_mb, min_dist, dt, beta,
                      acc=0.0):
    """Non-adhesive separation impulse between two rod points.

    Returns (impulse_on_a, impulse_on_b, acc); the accumulated normal
    impulse never goes negative, so the pair is only ever pushed apart.
    """
    d = np.asarray(pb, dtype=float) - np.asarray(pa, dtype=float)
    dist = np.sqrt(d @ d)
    w = inv_ma + inv_mb
    if dist == 0.0 or w == 0.0:
        return np.zeros(3), np.zeros(3), acc
    n = d / dist
    v_rel = np.asarray(vb, dtype=float) - np.asarray(va, dtype=float)
    depth = max(0.0, min_dist - dist)
    raw = (-(v_rel @ n) + beta * depth / dt) / w
    new_acc = max(0.0, acc + raw)
    lam = new_acc - acc
    return -lam * n, lam * n, new_acc


def binding_impulse(pa, pb, va, vb, inv_ma, inv_mb, dt, beta, mode):
    """Zero-rest-length distance impulse keeping two rods together.

    In one-way mode point a is the dominant side and is treated as
    immovable; in bidirectional mode masses enter symmetrically.
    """
    if mode == ONE_WAY:
        inv_ma = 0.0
    return distance_impulse(pa, pb, va, vb, inv_ma, inv_mb, 0.0, dt, beta)


def iterate_constraints(positions, velocities, inv_masses, constraint_set,
                        config, dt, element_parity=None):
    """Fixed-sweep solve over a ConstraintSet; mutates `velocities`.

    Distance constraints run in two colour phases (even element index,
    then odd) so serial and block-parallel execution order coincide.
    `element_parity` optionally gives the colour per distance constraint;
    by default the list position is used.
    """
    dist = constraint_set.distance
    if element_parity is None:
        element_parity = [k % 2 for k in range(len(dist))]
    acc_n = np.zeros(len(constraint_set.contacts))
    acc_t = np.zeros(len(constraint_set.contacts))
    acc_pairs = np.zeros(len(constraint_set.self_pairs))
    beta = config.position_bias

    for _ in range(config.iterations):
        for phase in (0, 1):
            for k, (ia, ib, rest) in enumerate(dist):
                if element_parity[k] != phase:
                    continue
                imp_a, imp_b = distance_impulse(
                    positions[ia], positions[ib], velocities[ia],
                    velocities[ib], inv_masses[ia], inv_masses[ib],
                    rest, dt, beta)
                velocities[ia] += inv_masses[ia] * imp_a
                velocities[ib] += inv_masses[ib] * imp_b
        for k, c in enumerate(constraint_set.contacts):
            i = c.point_index
            if inv_masses[i] == 0.0:
                continue
            v, acc_n[k], acc_t[k] = contact_impulse(
                velocities[i], 1.0 / inv_masses[i], c, dt, beta,
                acc_n[k], acc_t[k])
            velocities[i] = v
        for k, (ia, ib, min_dist) in enumerate(constraint_set.self_pairs):
            imp_a, imp_b, acc_pairs[k] = self_pair_impulse(
                positions[ia], positions[ib], velocities[ia], velocities[ib],
                inv_masses[ia], inv_masses[ib], min_dist, dt, beta,
                acc_pairs[k])
            velocities[ia] += inv_masses[ia] * imp_a
            velocities[ib] += inv_masses[ib] * imp_b
        for ia, ib, mode in constraint_set.bindings:
            imp_a, imp_b = binding_impulse(
                positions[ia], positions[ib], velocities[ia], velocities[ib],
                inv_masses[ia], inv_masses[ib], dt, beta, mode)
            if mode != ONE_WAY:
                velocities[ia] += inv_masses[ia] * imp_a
            velocities[ib] += inv_masses[ib] * imp_b
    return velocities
