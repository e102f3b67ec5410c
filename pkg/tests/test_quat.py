import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from rodsim import quat

from conftest import random_unit_quats


def finite_floats(lo=-10.0, hi=10.0):
    return hs.floats(min_value=lo, max_value=hi, allow_nan=False,
                     allow_infinity=False)


def quat_strategy():
    return hs.lists(finite_floats(), min_size=4, max_size=4).filter(
        lambda q: np.linalg.norm(q) > 1e-6).map(
        lambda q: np.asarray(q) / np.linalg.norm(q))


def test_multiply_identity():
    rng = np.random.default_rng(0)
    q = random_unit_quats(rng, 50)
    assert np.allclose(quat.multiply(q, quat.IDENTITY), q)
    assert np.allclose(quat.multiply(quat.IDENTITY, q), q)


def test_multiply_matches_rotation_composition(rng):
    a = random_unit_quats(rng, 20)
    b = random_unit_quats(rng, 20)
    for qa, qb in zip(a, b):
        rab = quat.to_matrix(quat.multiply(qa, qb))
        assert np.allclose(rab, quat.to_matrix(qa) @ quat.to_matrix(qb),
                           atol=1e-12)


def test_rotate_matches_matrix(rng):
    q = random_unit_quats(rng, 20)
    v = rng.normal(size=(20, 3))
    for qi, vi in zip(q, v):
        assert np.allclose(quat.rotate(qi, vi), quat.to_matrix(qi) @ vi,
                           atol=1e-12)


def test_director3_is_third_matrix_column(rng):
    q = random_unit_quats(rng, 100)
    d3 = quat.director3(q)
    for qi, di in zip(q, d3):
        assert np.allclose(di, quat.to_matrix(qi)[:, 2], atol=1e-12)


def test_director3_jacobian_matches_finite_differences(rng):
    q = random_unit_quats(rng, 10)
    h = 1e-7
    jac = quat.director3_jacobian(q)
    for i, qi in enumerate(q):
        for col in range(4):
            dq = np.zeros(4)
            dq[col] = h
            fd = (quat.director3(qi + dq) - quat.director3(qi - dq)) / (2 * h)
            assert np.allclose(jac[i, :, col], fd, atol=1e-6)


def test_b_matrices_are_skew():
    for b in quat.B_MATRICES:
        assert np.array_equal(b, -b.T)


@settings(max_examples=200, deadline=None)
@given(quat_strategy(), hs.lists(finite_floats(), min_size=4, max_size=4))
def test_conjugation_preserves_norm(q, v4):
    qp = np.asarray(v4)
    prod = quat.multiply(quat.multiply(q, qp), quat.conjugate(q))
    assert np.linalg.norm(prod) == pytest.approx(np.linalg.norm(qp), abs=1e-9)


def test_from_axis_angle_round_trip():
    q = quat.from_axis_angle((0.0, 0.0, 1.0), np.pi / 2)
    v = quat.rotate(q, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(v, [0.0, 1.0, 0.0], atol=1e-12)


def test_normalize_unit_output(rng):
    q = rng.normal(size=(30, 4))
    n = np.linalg.norm(quat.normalize(q), axis=1)
    assert np.allclose(n, 1.0, atol=1e-12)
