import numpy as np
import pytest

from rodsim import quat
from rodsim import state as st


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_rod_state(rng, num_points=16, length=0.4, scale=0.05):
    """A perturbed rod state with unit frames, for gradient checks."""
    state = st.init_rod(num_points, length, axis=(0.0, 0.0, 1.0))
    state.positions += scale * length * rng.normal(size=state.positions.shape)
    q = state.frames + 0.4 * rng.normal(size=state.frames.shape)
    state.frames = quat.normalize(q)
    state.velocities = rng.normal(size=state.velocities.shape)
    state.angular_velocities = rng.normal(size=state.angular_velocities.shape)
    return state


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
