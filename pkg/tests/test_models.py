import numpy as np
import pytest

from esrf.errors import InvalidStep, UnknownModel
from esrf.models import (
    CONTINUOUS,
    DISCRETE,
    builtin_model,
    builtin_models,
    check_lipschitz,
    linear_model,
    simulate_continuous,
    simulate_discrete,
    trajectory_rows,
)
from esrf.rng import NoiseStream


def noiseless_scalar(b, flavor=DISCRETE):
    # Gamma must stay PD, so only the model noise is switched off
    return linear_model("test", flavor, [[b]], [[0.0]], [[1.0]], [[1.0]])


def streams(seed=0):
    return NoiseStream(seed, "truth-w"), NoiseStream(seed, "truth-v")


class TestSimulateDiscrete:
    def test_noiseless_linear_decay(self):
        model = noiseless_scalar(0.9)
        traj, obs = simulate_discrete(model, [1.0], 3, NoiseStream(0, "w"), NoiseStream(0, "v"))
        np.testing.assert_allclose(traj.states[:, 0], [1.0, 0.9, 0.81, 0.729])
        # Gamma = 1 adds observation noise; compare against H x + noise draws instead
        assert obs.values.shape == (3, 1)

    def test_zero_drift_zero_noise_constant(self):
        model = linear_model("test", DISCRETE, [[0.0]], [[0.0]], [[1.0]], [[1.0]])
        traj, _ = simulate_discrete(model, [2.5], 4, *streams())
        np.testing.assert_allclose(traj.states[1:, 0], 0.0)

    def test_monte_carlo_mean_matches_analytic(self):
        model = builtin_model("scalar-linear", DISCRETE)
        k_steps, n_rep = 5, 10_000
        finals = np.empty(n_rep)
        for rep in range(n_rep):
            traj, _ = simulate_discrete(
                model, [1.0], k_steps,
                NoiseStream(123, "w", replication=rep),
                NoiseStream(123, "v", replication=rep),
            )
            finals[rep] = traj.states[-1, 0]
        # mean of X_K is 0.9^K x0; variance sum_{j<K} 0.9^(2j)
        analytic_mean = 0.9**k_steps
        se = finals.std(ddof=1) / np.sqrt(n_rep)
        assert abs(finals.mean() - analytic_mean) < 3 * se

    def test_observations_start_at_k1(self):
        model = builtin_model("scalar-linear", DISCRETE)
        _, obs = simulate_discrete(model, [0.0], 3, *streams())
        np.testing.assert_array_equal(obs.times, [1.0, 2.0, 3.0])


class TestSimulateContinuous:
    def test_zero_dynamics_constant(self):
        model = linear_model("test", CONTINUOUS, [[0.0]], [[0.0]], [[1.0]], [[1.0]])
        traj, _ = simulate_continuous(model, [1.5], 0.1, 0.01, *streams())
        np.testing.assert_allclose(traj.states[:, 0], 1.5)

    def test_linear_ode_limit(self):
        model = noiseless_scalar(-1.0, CONTINUOUS)
        traj, _ = simulate_continuous(model, [1.0], 1.0, 1e-3, *streams())
        assert abs(traj.states[-1, 0] - np.exp(-1.0)) < 1e-3

    def test_brownian_variance(self):
        # Euler is exact for pure Brownian motion, so a coarse grid suffices
        model = linear_model("test", CONTINUOUS, [[0.0]], [[1.0]], [[1.0]], [[1.0]])
        horizon, n_rep = 1.0, 10_000
        finals = np.empty(n_rep)
        for rep in range(n_rep):
            traj, _ = simulate_continuous(
                model, [0.0], horizon, 0.1,
                NoiseStream(9, "w", replication=rep),
                NoiseStream(9, "v", replication=rep),
            )
            finals[rep] = traj.states[-1, 0]
        var = finals.var(ddof=1)
        se = var * np.sqrt(2.0 / (n_rep - 1))  # SE of a normal variance estimate
        assert abs(var - horizon) < 3 * se

    def test_bad_step_raises(self):
        model = builtin_model("scalar-linear", CONTINUOUS)
        with pytest.raises(InvalidStep):
            simulate_continuous(model, [0.0], 1.0, -0.1, *streams())
        with pytest.raises(InvalidStep):
            simulate_continuous(model, [0.0], 1.0, 0.3, *streams())

    def test_discrete_euler_equivalence(self):
        # one Euler step equals the discrete recursion with B_d = Id + B dt, C_d = C sqrt(dt)
        dt = 0.05
        cont = linear_model("c", CONTINUOUS, [[-0.5]], [[1.0]], [[1.0]], [[1.0]])
        disc = linear_model("d", DISCRETE, [[1.0 - 0.5 * dt]], [[np.sqrt(dt)]], [[1.0]], [[1.0]])
        w = NoiseStream(5, "w").normals(0, 1)
        x0 = 1.3
        euler = x0 + cont.drift(np.array([x0]))[0] * dt + np.sqrt(dt) * w[0]
        recursion = disc.drift(np.array([x0]))[0] + disc.C[0, 0] * w[0]
        assert euler == pytest.approx(recursion, abs=1e-15)


class TestBuiltins:
    def test_catalog_contents(self):
        catalog = builtin_models()
        assert set(catalog) == {"scalar-linear", "vec3-linear", "tanh-nonlinear"}
        assert catalog["scalar-linear"][DISCRETE].lipschitz_const == pytest.approx(0.9)

    def test_unknown_name(self):
        with pytest.raises(UnknownModel):
            builtin_model("lorenz-96")

    def test_tanh_drift_at_zero(self):
        model = builtin_model("tanh-nonlinear", DISCRETE)
        np.testing.assert_allclose(model.drift(np.zeros(3)), np.zeros(3))

    def test_vec3_q_matches_stored_factor(self):
        model = builtin_model("vec3-linear", DISCRETE)
        np.testing.assert_array_equal(model.Q.entries, model.C @ model.C.T)

    def test_lipschitz_audit_all_builtins(self):
        for name in ("scalar-linear", "vec3-linear", "tanh-nonlinear"):
            for flavor in (DISCRETE, CONTINUOUS):
                ratio = check_lipschitz(builtin_model(name, flavor), seed=1)
                assert ratio <= 1.0 + 1e-9, (name, flavor, ratio)

    def test_determinism_bit_identical(self):
        model = builtin_model("vec3-linear", DISCRETE)
        t1, o1 = simulate_discrete(model, np.zeros(3), 10, *streams(77))
        t2, o2 = simulate_discrete(model, np.zeros(3), 10, *streams(77))
        np.testing.assert_array_equal(t1.states, t2.states)
        np.testing.assert_array_equal(o1.values, o2.values)


def test_trajectory_rows_shape():
    model = builtin_model("vec3-linear", DISCRETE)
    traj, obs = simulate_discrete(model, np.zeros(3), 4, *streams())
    rows = list(trajectory_rows(traj, obs))
    assert rows[0] == ["step_or_time", "x_1", "x_2", "x_3", "y_1", "y_2"]
    assert len(rows) == 6
    assert rows[1][4:] == ["", ""]  # no observation at k = 0
