import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipc_pgo.geometry import (
    ErrorVec3,
    Pose2,
    boxminus,
    boxplus,
    compose,
    compose_arrays,
    inverse,
    inverse_arrays,
    normalize_angle,
    normalize_angles,
    relative,
    relative_arrays,
)

from conftest import angles, close, poses, small_poses
from oracles import mat, unmat

PI = math.pi
ID = Pose2()


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((0, 0, 0), (3, -1, 0.2), (3, -1, 0.2)),
        ((1, 0, PI / 2), (1, 0, 0), (1, 1, PI / 2)),
        ((2, 3, PI), (1, -1, PI / 2), (1, 4, -PI / 2)),
    ],
)
def test_compose_examples(a, b, expected):
    assert close(compose(Pose2(*a), Pose2(*b)), Pose2(*expected))


@pytest.mark.parametrize("a, expected", [((0, 0, 0), (0, 0, 0)), ((1, 0, PI / 2), (0, 1, -PI / 2))])
def test_inverse_examples(a, expected):
    assert close(inverse(Pose2(*a)), Pose2(*expected))


def test_relative_examples():
    p = Pose2(0.3, -2.0, 1.1)
    assert close(relative(p, p), ID)
    assert close(relative(ID, Pose2(2, 1, 0.3)), Pose2(2, 1, 0.3))
    assert close(relative(Pose2(1, 1, PI / 2), Pose2(1, 2, PI / 2)), Pose2(1, 0, 0))


def test_boxminus_examples():
    p = Pose2(1, 1, 0.1)
    assert boxminus(p, p) == ErrorVec3(0, 0, 0)
    e = boxminus(p, Pose2(1, 1, 0.1 - 2 * PI)).to_array()
    np.testing.assert_allclose(e, 0, atol=1e-12)


@pytest.mark.parametrize("t, expected", [(0.0, 0.0), (3 * PI / 2, -PI / 2), (-PI, PI)])
def test_normalize_examples(t, expected):
    assert normalize_angle(t) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_normalize_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        normalize_angle(bad)
    with pytest.raises(ValueError):
        Pose2(0, 0, bad)


def test_error_vector_rejects_non_finite():
    with pytest.raises(ValueError):
        ErrorVec3(math.nan, 0, 0)


@given(angles)
def test_normalize_range_idempotent_periodic(t):
    r = normalize_angle(t)
    assert -PI < r <= PI
    assert normalize_angle(r) == r
    assert abs(math.remainder(normalize_angle(t + 2 * PI) - r, 2 * PI)) < 1e-12
    assert abs(math.remainder(r - t, 2 * PI)) < 1e-12


@given(st.lists(angles, min_size=1, max_size=20))
def test_vectorized_normalize_matches_scalar(ts):
    out = normalize_angles(np.array(ts))
    assert list(out) == [normalize_angle(t) for t in ts]


@given(poses)
def test_identity_and_inverse(p):
    assert close(compose(p, ID), p)
    assert close(compose(ID, p), p)
    assert close(compose(inverse(p), p), ID)
    assert close(compose(p, inverse(p)), ID)


@given(poses, poses, poses)
def test_associativity(a, b, c):
    assert close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-10)


@given(poses, poses)
def test_compose_and_relative_match_matrix_oracle(a, b):
    np.testing.assert_allclose(compose(a, b).to_array()[:2], unmat(mat(a.to_array()) @ mat(b.to_array()))[:2], atol=1e-10)
    r = unmat(np.linalg.inv(mat(a.to_array())) @ mat(b.to_array()))
    assert close(relative(a, b), Pose2(*r), 1e-9)
    assert close(relative(a, b), compose(inverse(a), b), 1e-10)


@given(poses, poses)
def test_boxminus_round_trip(p, z):
    assert close(boxplus(z, boxminus(p, z)), p, 1e-12 * max(1.0, abs(p.x), abs(p.y), abs(z.x), abs(z.y)) * 8)


@given(poses, small_poses)
def test_boxminus_recovers_small_increment(z, d):
    e = boxminus(compose(z, d), z).to_array()
    np.testing.assert_allclose(e, d.to_array(), atol=1e-12 * max(1.0, abs(z.x), abs(z.y)) * 8)


@given(poses)
def test_theta_always_normalized(p):
    for q in (p, inverse(p), compose(p, p), relative(p, ID)):
        assert -PI < q.theta <= PI


def test_array_kernels_match_scalar(rng):
    a = rng.uniform(-10, 10, (50, 3))
    b = rng.uniform(-10, 10, (50, 3))
    for k in range(50):
        pa, pb = Pose2.from_array(a[k]), Pose2.from_array(b[k])
        np.testing.assert_allclose(compose_arrays(a[k], b[k]), compose(pa, pb).to_array(), atol=1e-12)
        np.testing.assert_allclose(inverse_arrays(a[k]), inverse(pa).to_array(), atol=1e-12)
        np.testing.assert_allclose(relative_arrays(a[k], b[k]), relative(pa, pb).to_array(), atol=1e-12)


def test_pose_matrix_and_operator():
    p, q = Pose2(1, 2, 0.5), Pose2(-1, 0.5, 2.0)
    np.testing.assert_allclose((p @ q).matrix(), p.matrix() @ q.matrix(), atol=1e-12)
