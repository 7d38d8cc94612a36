import numpy as np
import pytest

from ubf.systems import (IntegrationError, QuadrotorParams, double_integrator, integrate_step, make_system,
                         quadrotor, rollout, rotation_zyx, single_integrator)


def test_single_integrator():
    s = single_integrator()
    np.testing.assert_array_equal(s.F(np.array([0.5, 1.0]), np.array([2.0, 3.0])), [2, 3])
    np.testing.assert_array_equal(s.F(np.array([7.0, -1.0]), np.zeros(2)), [0, 0])
    np.testing.assert_array_equal(s.output(np.array([4.0, 5.0])), [4, 5])


def test_double_integrator():
    s = double_integrator()
    np.testing.assert_array_equal(s.F(np.array([0, 0, 1.0, 2.0]), np.zeros(2)), [1, 2, 0, 0])
    np.testing.assert_array_equal(s.F(np.zeros(4), np.array([3.0, -4.0])), [0, 0, 3, -4])
    np.testing.assert_array_equal(s.F(np.array([0.5, 1, 0, 0]), np.zeros(2)), np.zeros(4))
    np.testing.assert_array_equal(s.output(np.array([1.0, 2, 3, 4])), [1, 2])


def test_quadrotor_hover_and_free_fall():
    p = QuadrotorParams()
    q = quadrotor(p)
    dx = q.F(np.zeros(12), np.array([p.mass * p.gravity, 0, 0, 0]))
    np.testing.assert_allclose(dx[6:12], 0.0, atol=1e-12)
    dx = q.F(np.zeros(12), np.zeros(4))
    np.testing.assert_allclose(dx[6:9], [0, 0, -p.gravity])


def test_quadrotor_principal_axis_spin():
    x = np.zeros(12)
    x[9:12] = [1.0, 0.0, 0.0]
    np.testing.assert_allclose(quadrotor().F(x, np.zeros(4))[9:12], 0.0, atol=1e-14)


def test_quadrotor_thrust_direction_matches_rotation():
    rng = np.random.default_rng(0)
    q = quadrotor()
    for _ in range(20):
        x = np.zeros(12)
        x[3:6] = rng.uniform(-0.5, 0.5, 3)
        acc = q.F(x, np.array([2.0, 0, 0, 0]))[6:9]
        np.testing.assert_allclose(acc, 2.0 * rotation_zyx(x[3:6])[:, 2] - [0, 0, 9.81], atol=1e-12)
    R = rotation_zyx(rng.uniform(-1, 1, 3))
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)


def test_quadrotor_output_and_params():
    q = quadrotor()
    assert (q.n, q.m) == (12, 4)
    np.testing.assert_array_equal(q.output(np.arange(12.0)), [0, 1, 2, 5])
    with pytest.raises(ValueError):
        QuadrotorParams(mass=-1)
    assert make_system("quadrotor", {"mass": 2.0}).params["mass"] == 2.0
    with pytest.raises(ValueError):
        make_system("bicycle")


def test_integrate_step():
    s = single_integrator()
    np.testing.assert_allclose(integrate_step(s, np.zeros(2), np.ones(2), 0.01), [0.01, 0.01])
    np.testing.assert_array_equal(integrate_step(s, np.array([1.0, 2.0]), np.ones(2), 0.0), [1, 2])
    expo = lambda x, u: x
    assert integrate_step(expo, np.array([1.0]), np.zeros(1), 0.1, "rk4")[0] == pytest.approx(np.exp(0.1), abs=1e-5)
    with pytest.raises(ValueError):
        integrate_step(s, np.zeros(2), np.ones(2), 0.1, "midpoint")
    with pytest.raises(IntegrationError):
        integrate_step(lambda x, u: x * np.inf, np.ones(1), np.zeros(1), 0.1)


def test_rollout_exact_on_double_integrator():
    s = double_integrator()
    x = rollout(s, np.array([0.0, 0, 1, 0]), np.array([2.0, 0]), 1.0, 1)
    np.testing.assert_allclose(x, [1 + 1, 0, 1 + 2, 0])
