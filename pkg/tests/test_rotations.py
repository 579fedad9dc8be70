import numpy as np
import pytest
from scipy.spatial.transform import Rotation as ScipyRotation

from gesturesynth import rotations as rot


def to_scipy(q):
    # scipy uses (x, y, z, w)
    return ScipyRotation.from_quat(np.roll(np.atleast_2d(q), -1, axis=-1))


class TestQuaternionOps:
    def test_multiply_matches_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rot.normalize(rng.normal(size=4))
            b = rot.normalize(rng.normal(size=4))
            ours = rot.multiply(a, b)
            theirs = (to_scipy(a) * to_scipy(b)).as_quat()[0]
            theirs = np.concatenate([theirs[3:], theirs[:3]])
            sign = np.sign(ours[0] * theirs[0]) or 1.0
            np.testing.assert_allclose(ours, sign * theirs, atol=1e-12)

    def test_rotate_matches_scipy(self):
        rng = np.random.default_rng(1)
        q = rot.normalize(rng.normal(size=4))
        v = rng.normal(size=(5, 3))
        np.testing.assert_allclose(
            rot.rotate(q, v), to_scipy(q).apply(v), atol=1e-12
        )

    def test_rotate_batched(self):
        rng = np.random.default_rng(2)
        q = rot.normalize(rng.normal(size=(6, 4)))
        v = rng.normal(size=(6, 3))
        stacked = rot.rotate(q, v)
        for i in range(6):
            np.testing.assert_allclose(stacked[i], rot.rotate(q[i], v[i]), atol=1e-12)

    def test_conjugate_inverts(self):
        rng = np.random.default_rng(3)
        q = rot.normalize(rng.normal(size=4))
        v = rng.normal(size=3)
        np.testing.assert_allclose(
            rot.rotate(rot.conjugate(q), rot.rotate(q, v)), v, atol=1e-12
        )

    def test_axis_angle(self):
        q = rot.from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
        np.testing.assert_allclose(
            rot.rotate(q, np.array([1.0, 0.0, 0.0])), [0.0, 1.0, 0.0], atol=1e-12
        )


class TestShortestArc:
    def test_90_degrees(self):
        q = rot.shortest_arc(np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(
            rot.rotate(q, np.array([0.0, 1.0, 0.0])), [1.0, 0.0, 0.0], atol=1e-12
        )
        angle = 2 * np.arccos(np.clip(q[0], -1, 1))
        assert angle == pytest.approx(np.pi / 2)

    def test_identity_for_equal_vectors(self):
        v = np.array([0.0, 1.0, 0.0])
        np.testing.assert_allclose(rot.shortest_arc(v, v), rot.IDENTITY, atol=1e-15)

    def test_antipodal_still_maps(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            v = rng.normal(size=3)
            v /= np.linalg.norm(v)
            q = rot.shortest_arc(v, -v)
            np.testing.assert_allclose(rot.rotate(q, v), -v, atol=1e-9)
            np.testing.assert_allclose(np.linalg.norm(q), 1.0, atol=1e-12)

    def test_random_pairs_map_exactly(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            a /= np.linalg.norm(a)
            b /= np.linalg.norm(b)
            q = rot.shortest_arc(a, b)
            np.testing.assert_allclose(rot.rotate(q, a), b, atol=1e-12)


class TestEulerZyx:
    def test_round_trip(self):
        rng = np.random.default_rng(6)
        q = rot.normalize(rng.normal(size=(30, 4)))
        angles = rot.to_euler_zyx(q)
        back = rot.from_euler_zyx(angles)
        sign = np.sign(np.sum(q * back, axis=-1))[:, None]
        np.testing.assert_allclose(back * sign, q, atol=1e-9)

    def test_matches_scipy_convention(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            q = rot.normalize(rng.normal(size=4))
            ours = rot.to_euler_zyx(q)
            theirs = to_scipy(q).as_euler("ZYX")[0]
            np.testing.assert_allclose(ours, theirs, atol=1e-9)

    def test_identity_gives_zero_angles(self):
        np.testing.assert_array_equal(rot.to_euler_zyx(rot.IDENTITY), np.zeros(3))


class TestHemisphereAlign:
    def test_flips_sign_changes(self):
        q = np.tile(rot.IDENTITY, (4, 1, 1))
        q[2, 0] = -rot.IDENTITY
        aligned = rot.hemisphere_align(q)
        assert np.all(np.sum(aligned[1:] * aligned[:-1], axis=-1) >= 0)
