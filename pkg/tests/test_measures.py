import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinetic_flows.errors import CapExceeded, DimensionMismatch, SizeMismatch
from kinetic_flows.measures import (
    EmpiricalMeasure,
    moment,
    sample_index,
    w1,
    w1_1d,
    w1_assignment,
)
from oracles import brute_force_w1


class TestConstruction:
    def test_one_dimensional_input_is_a_column(self):
        mu = EmpiricalMeasure([1.0, 2.0, 3.0])
        assert mu.size == 3 and mu.dim == 1

    def test_points_are_read_only(self):
        mu = EmpiricalMeasure([[0.0, 1.0]])
        with pytest.raises(ValueError):
            mu.points[0, 0] = 5.0

    @pytest.mark.parametrize("bad", [[], [[np.nan]], [[np.inf, 0.0]]])
    def test_rejects_empty_or_nonfinite(self, bad):
        with pytest.raises(ValueError):
            EmpiricalMeasure(bad)

    def test_csv_round_trip_is_bit_exact(self, tmp_path):
        pts = np.random.default_rng(3).standard_normal((20, 3)) * 1e3
        mu = EmpiricalMeasure(pts)
        text = mu.to_csv()
        assert text.splitlines()[0] == "x1,x2,x3"
        back = EmpiricalMeasure.from_csv(text)
        assert np.array_equal(back.points, mu.points)
        path = tmp_path / "mu.csv"
        mu.to_csv(path)
        assert np.array_equal(EmpiricalMeasure.from_csv(path).points, mu.points)

    def test_json_round_trip_is_bit_exact(self):
        mu = EmpiricalMeasure(np.random.default_rng(4).random((7, 2)) / 3)
        assert np.array_equal(EmpiricalMeasure.from_json(mu.to_json()).points, mu.points)


class TestW1OneDimensional:
    def test_two_diracs(self):
        assert w1_1d(EmpiricalMeasure([0.0]), EmpiricalMeasure([1.0])) == 1.0

    def test_identity(self):
        mu = EmpiricalMeasure(np.random.default_rng(0).random(50))
        assert w1_1d(mu, mu) == 0.0

    def test_shifted_pair(self):
        assert w1_1d(EmpiricalMeasure([0.0, 2.0]), EmpiricalMeasure([1.0, 3.0])) == 1.0

    def test_dimension_and_size_errors(self):
        with pytest.raises(DimensionMismatch):
            w1_1d(EmpiricalMeasure([[0.0, 0.0]]), EmpiricalMeasure([[1.0, 0.0]]))
        with pytest.raises(SizeMismatch):
            w1_1d(EmpiricalMeasure([0.0]), EmpiricalMeasure([0.0, 1.0]))


class TestAssignment:
    def test_identical_planar_measures(self):
        mu = EmpiricalMeasure([[0.0, 0.0], [1.0, 0.0]])
        assert w1_assignment(mu, mu) == 0.0

    def test_single_pair_is_euclidean_norm(self):
        assert w1_assignment(EmpiricalMeasure([[0.0, 0.0]]), EmpiricalMeasure([[3.0, 4.0]])) == 5.0

    def test_two_point_example(self):
        mu = EmpiricalMeasure([[0.0, 0.0], [2.0, 0.0]])
        nu = EmpiricalMeasure([[1.0, 0.0], [3.0, 0.0]])
        assert w1_assignment(mu, nu) == 1.0

    def test_cap_exceeded(self):
        mu = EmpiricalMeasure(np.zeros((11, 2)))
        with pytest.raises(CapExceeded):
            w1_assignment(mu, mu, cap=10)

    def test_size_mismatch(self):
        with pytest.raises(SizeMismatch):
            w1_assignment(EmpiricalMeasure(np.zeros((2, 2))), EmpiricalMeasure(np.zeros((3, 2))))

    def test_dispatch_uses_sorting_in_one_dimension(self):
        rng = np.random.default_rng(5)
        a, b = EmpiricalMeasure(rng.random(3000)), EmpiricalMeasure(rng.random(3000))
        assert w1(a, b) == w1_1d(a, b)

    @pytest.mark.parametrize("n", [1, 2, 5, 8])
    def test_matches_brute_force_in_one_dimension(self, n):
        rng = np.random.default_rng(n)
        for _ in range(20):
            a = rng.integers(0, 4, n).astype(float)
            b = rng.integers(0, 4, n).astype(float)
            mu, nu = EmpiricalMeasure(a), EmpiricalMeasure(b)
            assert w1_assignment(mu, nu) == brute_force_w1(a, b)
            assert w1_1d(mu, nu) == pytest.approx(brute_force_w1(a, b), abs=1e-12)


coords = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@st.composite
def measure_triples(draw):
    n = draw(st.integers(1, 6))
    d = draw(st.integers(1, 3))
    pts = [np.array(draw(st.lists(coords, min_size=n * d, max_size=n * d))).reshape(n, d) for _ in range(3)]
    return [EmpiricalMeasure(p) for p in pts]


@settings(max_examples=60, deadline=None)
@given(measure_triples())
def test_metric_axioms(triple):
    a, b, c = triple
    assert w1_assignment(a, a) == 0.0
    assert w1_assignment(a, b) == pytest.approx(w1_assignment(b, a), abs=1e-12)
    assert w1_assignment(a, c) <= w1_assignment(a, b) + w1_assignment(b, c) + 1e-9


@settings(max_examples=60, deadline=None)
@given(measure_triples(), st.floats(-10, 10), st.floats(-3, 3))
def test_translation_and_scaling(triple, shift, lam):
    a, b, _ = triple
    base = w1_assignment(a, b)
    shift_vec = np.full(a.dim, shift)
    assert w1_assignment(a.shifted(shift_vec), b.shifted(shift_vec)) == pytest.approx(base, abs=1e-12 * max(1, base) + 1e-12 * abs(shift) * 10)
    assert w1_assignment(a.scaled(lam), b.scaled(lam)) == pytest.approx(abs(lam) * base, abs=1e-12 * max(1.0, abs(lam) * base))


def test_moment_examples():
    assert moment(EmpiricalMeasure([0.0]), 1) == 0.0
    assert moment(EmpiricalMeasure([[3.0, 4.0]]), 1) == 5.0
    assert moment(EmpiricalMeasure([1.0, 3.0]), 2) == 5.0
    with pytest.raises(ValueError):
        moment(EmpiricalMeasure([1.0]), 0)


class TestSampleIndex:
    def test_single_point(self):
        rng = np.random.default_rng(0)
        assert all(sample_index(EmpiricalMeasure([2.0]), rng) == 0 for _ in range(20))

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(11)
        mu = EmpiricalMeasure([0.0, 1.0, 2.0, 3.0])
        counts = np.bincount([sample_index(mu, rng) for _ in range(100_000)], minlength=4) / 100_000
        assert np.all((counts >= 0.24) & (counts <= 0.26))

    def test_fixed_seed_repeats(self):
        mu = EmpiricalMeasure(np.arange(10.0))
        r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
        assert [sample_index(mu, r1) for _ in range(50)] == [sample_index(mu, r2) for _ in range(50)]
