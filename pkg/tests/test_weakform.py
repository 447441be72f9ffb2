import json
import math

import numpy as np
import pytest

from kinetic_flows.errors import MissingAux, QuadratureUnderResolved
from kinetic_flows.euler import initial_state, simulate
from kinetic_flows.flow import PartitionSchedule
from kinetic_flows.kernels import ModelSpec, collision_c, lipschitz_budget, mu_mass, rate_gamma, sample_angular
from kinetic_flows.measures import GaussianLaw
from kinetic_flows.weakform import (
    Combination,
    TestFunction,
    lambda_batch,
    lambda_bound,
    lambda_phi,
    moment_ode_oracle,
    residual_series,
    synthetic_budget,
    weak_residual,
)

SYNTH = ModelSpec.synthetic(kappa=0.5, g=1.0)
BOLTZMANN = ModelSpec.boltzmann3d()
rng = np.random.default_rng(77)


class TestTestFunctions:
    @pytest.mark.parametrize("phi", [TestFunction.tanh_coordinate(1, 0.7), TestFunction.product_tanh(1.3),
                                     TestFunction.constant(2.0)])
    def test_gradient_matches_central_differences(self, phi):
        X = rng.standard_normal((200, 3))
        h = 1e-5
        fd = np.stack([(phi(X + h * e) - phi(X - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
        assert np.max(np.abs(fd - phi.grad(X))) <= 1e-6

    def test_gradient_sup_is_an_upper_bound(self):
        X = rng.standard_normal((10_000, 3))
        for phi in (TestFunction.tanh_coordinate(0, 2.0), TestFunction.product_tanh(1.5)):
            assert np.max(np.linalg.norm(phi.grad(X), axis=-1)) <= phi.grad_sup(3)

    def test_round_trip(self):
        phi = TestFunction.product_tanh(0.25)
        assert TestFunction.from_dict(json.loads(json.dumps(phi.to_dict()))) == phi

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            TestFunction("polynomial")


class TestLambda:
    def test_synthetic_example(self):
        phi = TestFunction.tanh_coordinate()
        assert lambda_phi(SYNTH, phi, [1.0], [0.0]) == pytest.approx(0.4621172, abs=1e-7)
        assert lambda_phi(SYNTH, phi, [1.0], [0.0]) == pytest.approx(math.tanh(0.5), abs=1e-15)

    def test_equal_points(self):
        assert lambda_phi(BOLTZMANN, TestFunction.product_tanh(), [0.3, 0.2, 0.1], [0.3, 0.2, 0.1]) == 0.0

    def test_constant_function(self):
        assert lambda_phi(BOLTZMANN, TestFunction.constant(3.0), [1.0, 0.0, 0.0], [0.0, 0.5, 0.0]) == 0.0

    def test_requires_enough_nodes(self):
        with pytest.raises(ValueError):
            lambda_phi(BOLTZMANN, TestFunction.constant(), np.ones(3), np.zeros(3), n_quad=4)

    def test_underresolved_quadrature_is_reported(self):
        with pytest.raises(QuadratureUnderResolved):
            lambda_phi(BOLTZMANN.with_(zeta_min=0.01, nu=0.9), TestFunction.tanh_coordinate(0, 3.0),
                       [1.5, -1.0, 0.5], [-1.0, 0.5, 0.0], n_quad=8, tol=1e-12)

    def test_mean_field_needs_aux(self):
        with pytest.raises(MissingAux):
            lambda_phi(ModelSpec.mean_field_enskog(), TestFunction.tanh_coordinate(3), np.ones(6), np.zeros(6))

    def test_monte_carlo_cross_check(self):
        phi = TestFunction.tanh_coordinate(0, 1.0)
        v, x = np.array([1.2, -0.4, 0.3]), np.array([-0.5, 0.6, 0.0])
        value = lambda_phi(BOLTZMANN, phi, v, x)
        zeta, az = sample_angular(BOLTZMANN, np.random.default_rng(5), 1_000_000)
        c = collision_c(BOLTZMANN, v, (zeta, az), x)
        samples = rate_gamma(BOLTZMANN, v, x) * mu_mass(BOLTZMANN) * (phi(x + c) - phi(x))
        se = samples.std(ddof=1) / 1000
        assert abs(value - samples.mean()) <= 4 * se

    def test_quadrature_converges(self):
        phi = TestFunction.product_tanh(1.0)
        v, x = [0.8, -1.1, 0.4], [-0.3, 0.2, 0.9]
        a = lambda_phi(BOLTZMANN, phi, v, x, n_quad=128, tol=1e-6)
        b = lambda_batch(BOLTZMANN, phi, [v], [x], n_quad=128)[0]
        assert abs(a - b) < 1e-6

    def test_linearity(self):
        f, g = TestFunction.tanh_coordinate(0, 0.8), TestFunction.product_tanh(1.2)
        combo = Combination(((2.5, f), (1.0, g)))
        V, X = rng.standard_normal((300, 3)), rng.standard_normal((300, 3))
        lhs = lambda_batch(BOLTZMANN, combo, V, X)
        rhs = 2.5 * lambda_batch(BOLTZMANN, f, V, X) + lambda_batch(BOLTZMANN, g, V, X)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10

    @pytest.mark.parametrize("model", [SYNTH, BOLTZMANN, ModelSpec.enskog()])
    def test_sublinear_bound(self, model):
        phi = TestFunction.tanh_coordinate(model.dim - 1, 1.0)
        V, X = rng.standard_normal((10_000, model.dim)) * 2, rng.standard_normal((10_000, model.dim)) * 2
        m1 = float(np.mean(np.linalg.norm(V, axis=1)))
        lam = lambda_batch(model, phi, V, X, n_quad=16)
        assert np.all(np.abs(lam) <= lambda_bound(model, phi, V, X, m1))

    def test_budget_constant_is_used(self):
        phi = TestFunction.tanh_coordinate()
        bound = lambda_bound(SYNTH, phi, [0.0], [0.0], 0.0)
        assert bound[0] == lipschitz_budget(SYNTH).C_mu


class TestMomentOracle:
    def test_initial_time(self):
        assert moment_ode_oracle(0.5, 1.0, 0.3, 2.0, 0.0) == (0.3, 2.0)

    def test_full_jump_keeps_variance(self):
        assert moment_ode_oracle(1.0, 1.0, 0.0, 1.7, 5.0)[1] == 1.7

    def test_example(self):
        assert moment_ode_oracle(0.5, 1.0, 0.0, 1.0, 1.0)[1] == pytest.approx(0.6065307, abs=1e-7)

    def test_generator_rate_by_quadrature(self):
        # d/dt E[X^2] under the generator, for X, V independent N(0, 1), via Gauss-Hermite nodes
        nodes, weights = np.polynomial.hermite_e.hermegauss(40)
        weights = weights / weights.sum()
        x, v = np.meshgrid(nodes, nodes, indexing="ij")
        w = np.outer(weights, weights)
        for kappa, g in ((0.5, 1.0), (0.3, 2.0), (1.0, 0.7)):
            model = ModelSpec.synthetic(kappa=kappa, g=g)
            square = lambda X: X[..., 0] ** 2  # noqa: E731
            rate = np.sum(w.ravel() * lambda_batch(model, square, v.reshape(-1, 1), x.reshape(-1, 1)))
            dt = 1e-6
            slope = (moment_ode_oracle(kappa, g, 0.0, 1.0, dt)[1] - 1.0) / dt
            assert rate == pytest.approx(slope, rel=1e-5)

    def test_invalid(self):
        with pytest.raises(ValueError):
            moment_ode_oracle(0.5, 1.0, 0.0, -1.0, 1.0)
        with pytest.raises(ValueError):
            moment_ode_oracle(0.5, 1.0, 0.0, 1.0, -1.0)


class TestResidual:
    def test_frozen_model_has_zero_residual(self):
        model = ModelSpec.synthetic(g=0.0)
        traj = simulate(initial_state(GaussianLaw(1), 300, 1), PartitionSchedule(0.0, 1.0, 5), model, 2)
        rep = weak_residual(traj, model, [TestFunction.tanh_coordinate()])
        assert rep.max_residual <= 1e-12

    def test_constant_function_has_zero_residual(self):
        traj = simulate(initial_state(GaussianLaw(3), 200, 1), PartitionSchedule(0.0, 0.5, 3), BOLTZMANN, 2)
        rep = weak_residual(traj, BOLTZMANN, [TestFunction.constant(1.5)], max_pairs=1000)
        assert rep.max_residual <= 1e-12

    def test_affine_drift_term(self):
        # pure drift b = 1: X_t = X_0 + t and the drift integral must cancel the motion up to O(dt)
        model = ModelSpec.synthetic(g=0.0, b0=1.0)
        phi = TestFunction.tanh_coordinate(0, 0.5)
        residuals = []
        for n in (10, 20, 40):
            traj = simulate(initial_state(GaussianLaw(1), 500, 1), PartitionSchedule(0.0, 1.0, n), model, 2)
            residuals.append(abs(residual_series(traj, model, phi)[-1]))
        assert residuals[0] > residuals[1] > residuals[2]
        assert residuals[1] / residuals[2] == pytest.approx(2.0, rel=0.1)

    def test_report_schema(self):
        traj = simulate(initial_state(GaussianLaw(1), 400, 1), PartitionSchedule(0.0, 0.5, 5), SYNTH, 2)
        rep = weak_residual(traj, SYNTH, [TestFunction.tanh_coordinate(0, 0.5)], budget=synthetic_budget(400, 5))
        d = rep.to_dict()
        assert {"phi", "times", "residual_series", "max_residual", "budget", "pass"} <= set(d)
        assert d["times"] == traj.times and d["pass"] is True

    def test_measures_with_times(self):
        traj = simulate(initial_state(GaussianLaw(1), 100, 1), PartitionSchedule(0.0, 0.5, 2), SYNTH, 2)
        phi = TestFunction.tanh_coordinate()
        a = residual_series(traj, SYNTH, phi)
        b = residual_series(traj.measures(), SYNTH, phi, times=traj.times)
        assert a == b
        with pytest.raises(ValueError):
            residual_series(traj.measures(), SYNTH, phi)
        with pytest.raises(ValueError):
            residual_series(traj.measures(), SYNTH, phi, times=[0.0, 0.5, 0.25])

    def test_all_pairs_when_small(self):
        # N^2 <= max_pairs uses every pair, so the result does not depend on the seed
        traj = simulate(initial_state(GaussianLaw(1), 30, 1), PartitionSchedule(0.0, 0.5, 2), SYNTH, 2)
        phi = TestFunction.tanh_coordinate()
        assert residual_series(traj, SYNTH, phi, seed=1) == residual_series(traj, SYNTH, phi, seed=2)

    def test_budget_formula(self):
        assert synthetic_budget(10_000, 100) == pytest.approx(5 * (0.01 + 0.01))
