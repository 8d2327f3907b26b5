import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpttomo.synthdata import (
    GROUND_POLE,
    PAPER_TAUS_US,
    BumpParams,
    ChannelParams,
    apply_decoherence,
    apply_readout_error,
    cell_probability,
    fibonacci_directions,
    ideal_probability,
    sample_frequency_table,
)
from oracles import kraus_cell_probability, kraus_decohere

PARAMS = ChannelParams()


class TestFibonacciDirections:
    def test_paper_list_size(self):
        assert fibonacci_directions(100).shape == (100, 3)

    @given(st.integers(min_value=1, max_value=300))
    @settings(max_examples=30, deadline=None)
    def test_unit_norms(self, m):
        pts = fibonacci_directions(m)
        assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) < 1e-12

    def test_zero_points_rejected(self):
        with pytest.raises(ValueError):
            fibonacci_directions(0)

    def test_deterministic(self):
        assert np.array_equal(fibonacci_directions(64), fibonacci_directions(64))

    def test_near_uniform_cap_areas(self):
        # Monte-Carlo estimate of each point's nearest-neighbour cell area.
        m = 1000
        dirs = fibonacci_directions(m)
        rng = np.random.default_rng(5)
        samples = rng.normal(size=(200_000, 3))
        samples /= np.linalg.norm(samples, axis=1, keepdims=True)
        owner = np.argmax(samples @ dirs.T, axis=1)
        counts = np.bincount(owner, minlength=m)
        share = counts / len(samples)  # fraction of 4*pi per cell
        assert share.min() > 1.0 / (3.0 * m)
        assert share.max() < 3.0 / m


class TestIdealProbability:
    def test_same_direction(self):
        v = np.array([0.0, 0.6, 0.8])
        assert ideal_probability(v, v) == pytest.approx(1.0, abs=1e-15)

    def test_antipodal(self):
        v = np.array([1.0, 0.0, 0.0])
        assert ideal_probability(v, -v) == pytest.approx(0.0, abs=1e-15)

    def test_orthogonal(self):
        assert ideal_probability(np.array([1.0, 0, 0]), np.array([0, 0, 1.0])) == 0.5


class TestDecoherence:
    def test_zero_time_is_identity(self):
        v = np.array([0.3, -0.5, 0.2])
        assert np.allclose(apply_decoherence(v, 0.0, PARAMS), v, atol=1e-15)

    def test_infinite_time_fixed_point(self):
        out = apply_decoherence(np.array([0.7, 0.1, -0.6]), 1e6 * PARAMS.t1, PARAMS)
        assert np.linalg.norm(out - GROUND_POLE) < 1e-9

    def test_transverse_decay_matches_kraus_oracle(self):
        v = np.array([1.0, 0.0, 0.0])
        out = apply_decoherence(v, PARAMS.t2, PARAMS)
        assert out[0] == pytest.approx(np.exp(-1.0), abs=1e-12)
        oracle = kraus_decohere(v, PARAMS.t2, PARAMS.t1, PARAMS.t2)
        assert np.max(np.abs(out - oracle)) < 1e-12

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            apply_decoherence(np.zeros(3), -1.0, PARAMS)

    @given(
        st.tuples(*[st.floats(-1, 1) for _ in range(3)]),
        st.floats(min_value=0.0, max_value=200.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_contraction_toward_pole(self, raw, tau):
        v = np.asarray(raw)
        if np.linalg.norm(v) > 1.0:
            v = v / (np.linalg.norm(v) + 1e-9)
        out = apply_decoherence(v, tau, PARAMS)
        before = np.linalg.norm(v - GROUND_POLE)
        after = np.linalg.norm(out - GROUND_POLE)
        assert after <= before + 1e-12


class TestReadout:
    def test_perfect_fidelity(self):
        assert apply_readout_error(0.3, 1.0) == pytest.approx(0.3, abs=1e-15)

    def test_half_is_fixed_point(self):
        for f in (0.5, 0.7, 0.85, 1.0):
            assert apply_readout_error(0.5, f) == pytest.approx(0.5, abs=1e-15)

    def test_direct_substitution(self):
        assert apply_readout_error(1.0, 0.85) == pytest.approx(0.85, abs=1e-15)


class TestSampling:
    def test_identical_seed_identical_table(self):
        dirs = fibonacci_directions(6)
        a = sample_frequency_table(dirs, dirs, 5.0, 200, PARAMS, seed=9)
        b = sample_frequency_table(dirs, dirs, 5.0, 200, PARAMS, seed=9)
        assert np.array_equal(a.entries, b.entries)
        assert np.array_equal(a.variance, b.variance)

    def test_paper_schedule(self):
        dirs = fibonacci_directions(4)
        tables = [
            sample_frequency_table(dirs, dirs, tau, 2000, PARAMS, seed=1)
            for tau in PAPER_TAUS_US
        ]
        assert len(tables) == 8
        assert [t.tau for t in tables] == list(PAPER_TAUS_US)
        assert all(t.shots == 2000 for t in tables)

    def test_distinct_taus_distinct_streams(self):
        dirs = fibonacci_directions(5)
        a = sample_frequency_table(dirs, dirs, 0.0, 500, PARAMS, seed=3)
        b = sample_frequency_table(dirs, dirs, 5.0, 500, PARAMS, seed=3)
        assert not np.array_equal(a.entries, b.entries)

    def test_large_shot_concentration(self):
        dirs = fibonacci_directions(10)
        shots = 1_000_000
        table = sample_frequency_table(dirs, dirs, 3.0, shots, PARAMS, seed=77)
        probs = np.array(
            [[cell_probability(p, q, 3.0, PARAMS) for q in dirs] for p in dirs]
        )
        sigma = np.sqrt(probs * (1.0 - probs) / shots)
        frac_ok = np.mean(np.abs(table.entries - probs) < 5.0 * sigma)
        assert frac_ok >= 0.99

    def test_empty_directions_rejected(self):
        with pytest.raises(ValueError):
            sample_frequency_table(np.empty((0, 3)), np.eye(3), 0.0, 10, PARAMS, seed=0)

    def test_composition_matches_kraus_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            prep = rng.normal(size=3)
            prep /= np.linalg.norm(prep)
            meas = rng.normal(size=3)
            meas /= np.linalg.norm(meas)
            tau = rng.uniform(0.0, 60.0)
            ours = cell_probability(prep, meas, tau, PARAMS)
            oracle = kraus_cell_probability(
                prep, meas, tau, PARAMS.t1, PARAMS.t2, PARAMS.readout_fidelity
            )
            assert abs(ours - oracle) < 1e-12


class TestBump:
    def test_ramp_shape(self):
        bump = BumpParams(20.0, 30.0, 2.0)
        assert bump.ramp(10.0) == 0.0
        assert bump.ramp(25.0) == pytest.approx(0.5)
        assert bump.ramp(45.0) == 1.0

    def test_transverse_reexpansion(self):
        bump = BumpParams(20.0, 30.0, 2.0)
        v = np.array([1.0, 0.0, 0.0])
        plain = apply_decoherence(v, 30.0, PARAMS)
        bumped = apply_decoherence(v, 30.0, PARAMS, bump=bump)
        assert bumped[0] == pytest.approx(3.0 * plain[0])
        assert bumped[2] == plain[2]

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            BumpParams(30.0, 20.0, 1.0)


class TestChannelParams:
    def test_t2_bound(self):
        with pytest.raises(ValueError):
            ChannelParams(t1=10.0, t2=25.0)

    def test_fidelity_range(self):
        with pytest.raises(ValueError):
            ChannelParams(readout_fidelity=0.3)
