import json
import math

import numpy as np
import pytest

from kinetic_flows.euler import initial_state, particle_step
from kinetic_flows.flow import (
    PartitionSchedule,
    RateReport,
    compare,
    fit_rate,
    refinement_rate,
    sampling_floor,
    stability_experiment,
    stationarity_check,
    step_rate_parameters,
    time_lipschitz_check,
    translation_equivariance,
)
from kinetic_flows.kernels import ModelSpec, increment_bound
from kinetic_flows.measures import EmpiricalMeasure, GaussianLaw

SYNTH = ModelSpec.synthetic()
GAUSS1 = GaussianLaw(1)


class TestSchedule:
    def test_mesh_and_nodes(self):
        p = PartitionSchedule(1.0, 3.0, 4)
        assert p.mesh == 0.5
        assert np.array_equal(p.nodes, [1.0, 1.5, 2.0, 2.5, 3.0])

    @pytest.mark.parametrize("args", [(1.0, 0.0, 1), (0.0, 1.0, 0), (0.0, 1.0, 1.5), (0.0, math.inf, 1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            PartitionSchedule(*args)

    def test_split(self):
        a, b = PartitionSchedule(0.0, 1.0, 4).split(1)
        assert (a.s, a.t, a.n) == (0.0, 0.25, 1) and (b.s, b.t, b.n) == (0.25, 1.0, 3)


class TestFit:
    def test_exact_power_law(self):
        n = np.array([2.0, 4.0, 8.0, 16.0, 32.0])
        fit = fit_rate(n, 3.0 * n**-1.0)
        assert fit.slope == pytest.approx(-1.0, abs=1e-10)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-10)

    def test_hand_least_squares(self):
        x = np.array([1.0, 2.0, 5.0, 7.0])
        y = np.array([0.9, 0.35, 0.2, 0.11])
        lx, ly = np.log(x), np.log(y)
        slope = np.sum((lx - lx.mean()) * (ly - ly.mean())) / np.sum((lx - lx.mean()) ** 2)
        fit = fit_rate(x, y)
        assert fit.slope == pytest.approx(slope, abs=1e-10)
        assert fit.intercept == pytest.approx(ly.mean() - slope * lx.mean(), abs=1e-10)

    def test_needs_positive_errors(self):
        with pytest.raises(ValueError):
            fit_rate([1.0, 2.0], [1.0, 0.0])

    def test_report_validation_and_json(self):
        rep = RateReport.from_pairs("demo", [1, 2, 4], [1.0, 0.5, 0.25]).judge(-1.2, -0.8)
        d = json.loads(rep.to_json())
        assert {"experiment", "model", "params", "pairs", "slope", "intercept", "r_squared", "pass",
                "threshold"} <= set(d)
        assert d["pass"] is True
        with pytest.raises(ValueError):
            RateReport("bad", [(1, 1.0), (1, 0.5)], 0, 0, 0)
        with pytest.raises(ValueError):
            RateReport("bad", [(1, -1.0), (2, 0.5)], 0, 0, 0)


class TestCompare:
    def test_one_dimensional_is_sorted_matching(self):
        assert compare(np.array([[0.0], [2.0]]), np.array([[3.0], [1.0]])) == 1.0

    def test_accepts_states_and_measures(self):
        s = initial_state(GaussianLaw(3), 50, 0)
        assert compare(s, s.measure) == 0.0


class TestRefinement:
    def test_small_synthetic_run(self):
        rep = refinement_rate(SYNTH, GAUSS1, 1.0, [2, 4, 8], 2000, 2, seed=3)
        errs = [e for _, e in rep.pairs]
        assert errs[0] > errs[-1] > 0
        assert rep.params["reference_n"] == 16
        assert len(rep.extra["per_replica"]) == 2
        assert np.allclose(rep.extra["normalized_errors"], np.array(errs) / rep.extra["normalizer"])

    def test_fine_uncoupled_run_sits_at_floor(self):
        # independent randomness at a fine mesh: the error is essentially the sampling floor
        rep = refinement_rate(SYNTH, GAUSS1, 0.5, [16], 4000, 6, seed=1, coupled=False)
        floor = sampling_floor(SYNTH, GAUSS1, 0.0, 0.5, 32, 4000, 1, pairs=6)
        assert 0.5 * floor <= rep.pairs[0][1] <= 2.0 * floor

    def test_arguments_checked(self):
        with pytest.raises(ValueError):
            refinement_rate(SYNTH, GAUSS1, 1.0, [4, 2], 10, 2, 0)
        with pytest.raises(ValueError):
            refinement_rate(SYNTH, GAUSS1, 1.0, [2, 4], 10, 1, 0)


class TestStationarity:
    def test_same_seed_same_start_is_zero(self):
        assert stationarity_check(SYNTH, GAUSS1, 0.0, 0.5, 5, 500, 9, independent=False) == 0.0

    def test_shifted_start_within_floor(self):
        val = stationarity_check(SYNTH, GAUSS1, 3.7, 0.5, 5, 10_000, 9, replicas=4)
        floor = sampling_floor(SYNTH, GAUSS1, 0.0, 0.5, 5, 10_000, 9, pairs=4)
        assert val <= 1.5 * floor

    def test_rate_parameters_do_not_depend_on_start(self):
        model = ModelSpec.boltzmann3d()
        assert step_rate_parameters(model, 0.0) == step_rate_parameters(model, 3.7)


class TestStability:
    def test_identical_inputs_same_seed(self):
        rho = initial_state(GAUSS1, 500, 1).measure
        res = stability_experiment(SYNTH, rho, rho, 1.0, 5, None, 2)
        assert res.lhs == 0.0 and res.passed

    def test_shifted_synthetic_within_envelope(self):
        rho = initial_state(GAUSS1, 2000, 1).measure
        res = stability_experiment(SYNTH, rho, rho.shifted([0.5]), 1.0, 10, None, 2)
        assert res.initial_distance == pytest.approx(0.5, abs=1e-12)
        assert res.envelope == pytest.approx(math.exp(1.5), rel=1e-12)
        assert res.passed
        assert set(res.to_dict()) >= {"lhs", "rhs", "pass"}

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            stability_experiment(SYNTH, EmpiricalMeasure([0.0]), EmpiricalMeasure([0.0, 1.0]), 1.0, 1, None, 0)

    def test_translation_equivariance_maxwell(self):
        model = ModelSpec.boltzmann3d(a=0.0, gamma_cap=50.0)
        rho = initial_state(GaussianLaw(3), 300, 4).measure
        out = translation_equivariance(model, rho, [0.3, -0.2, 0.1], 0.5, 4, 3, 5)
        assert out["pass"]
        assert out["lhs"] == pytest.approx(math.sqrt(0.14), rel=1e-9)


class TestTimeLipschitz:
    def test_zero_increment(self):
        s = initial_state(GAUSS1, 100, 0)
        later, _ = particle_step(s, 0.0, SYNTH, 1)
        assert compare(s, later) == 0.0

    def test_synthetic_slope_and_bound(self):
        rep = time_lipschitz_check(SYNTH, GAUSS1, 1.0, [0.2, 0.1, 0.05, 0.025], 20_000, 4, band=(0.7, 1.3))
        assert rep.passed
        assert all(rep.extra["bound_ok"])
        m1 = float(np.mean(np.abs(initial_state(GAUSS1, 20_000, 4).particles)))
        assert rep.extra["increment_constant"] == pytest.approx(increment_bound(SYNTH, m1))

    def test_h_list_must_decrease(self):
        with pytest.raises(ValueError):
            time_lipschitz_check(SYNTH, GAUSS1, 1.0, [0.1, 0.2], 10, 0)
