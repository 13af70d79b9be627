import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evdecode import synth
from evdecode.errors import DomainError
from evdecode.events import SpikeTrain
from evdecode.synth import (
    EncoderParams,
    ReachTrajectory,
    TuningModel,
    delta_modulate,
    encode_spike_train,
    gen_reaches,
    gen_spikes,
    ncns_encode,
    synth_waveform,
)

signals = arrays(np.float64, st.integers(1, 300), elements=st.floats(-20, 20, allow_nan=False))


def static_traj(seconds, period_us=4000, velocity=(0.0, 0.0)):
    n = int(seconds * 1e6 // period_us)
    pos = np.zeros((n, 2))
    vel = np.tile(np.asarray(velocity, float), (n, 1))
    return ReachTrajectory(period_us, pos, vel, np.zeros((n, 2)), np.array([0]))


class TestReaches:
    def test_degenerate_reach_has_zero_velocity(self):
        tr = gen_reaches(1, targets=[(0.0, 0.0)])
        assert np.all(tr.velocities == 0)

    def test_velocity_is_discrete_derivative(self):
        tr = gen_reaches(12, seed=3)
        dp = np.diff(tr.positions, axis=0)
        pred = tr.velocities[:-1] * tr.sample_period_us * 1e-6
        np.testing.assert_allclose(dp, pred, rtol=1e-9, atol=1e-15)

    def test_determinism_and_boundaries(self):
        a, b = gen_reaches(10, seed=7), gen_reaches(10, seed=7)
        assert np.array_equal(a.positions, b.positions) and np.array_equal(a.velocities, b.velocities)
        assert len(a.reach_boundaries) == 10
        assert np.all(np.diff(a.reach_boundaries) > 0)
        for k in a.reach_boundaries[1:]:
            assert np.any(a.target_positions[k] != a.target_positions[k - 1])
        assert np.all(np.isfinite(a.velocities))

    def test_trajectory_csv_roundtrip(self, tmp_path):
        tr = gen_reaches(5, seed=2)
        synth.write_trajectory(tr, tmp_path / "t.csv")
        back = synth.read_trajectory(tmp_path / "t.csv")
        assert back.sample_period_us == tr.sample_period_us
        assert np.array_equal(back.positions, tr.positions)
        assert np.array_equal(back.velocities, tr.velocities)
        assert np.array_equal(back.reach_boundaries, tr.reach_boundaries)

    def test_rejects_zero_reaches(self):
        with pytest.raises(DomainError):
            gen_reaches(0)


class TestSpikes:
    def test_poisson_count_at_baseline(self):
        tr = static_traj(100.0)
        tun = TuningModel(np.zeros(1), np.array([10.0]), np.zeros(1))
        n = len(gen_spikes(tr, tun, seed=4).spike_times_us[0])
        assert abs(n - 1000) <= 4 * np.sqrt(1000)

    def test_silent_model(self):
        tun = TuningModel(np.zeros(3), np.zeros(3), np.zeros(3))
        assert len(gen_spikes(static_traj(5.0, velocity=(1, 0)), tun, seed=0)) == 0

    def test_preferred_direction_fires_more(self):
        tun = TuningModel(np.array([0.0, np.pi]), np.array([5.0, 5.0]), np.array([5.0, 5.0]))
        sp = gen_spikes(static_traj(100.0, velocity=(0.8, 0.0)), tun, seed=1)
        assert len(sp.spike_times_us[0]) > len(sp.spike_times_us[1])

    def test_refractory_period(self):
        tr = gen_reaches(20, seed=1)
        tun = synth.random_tuning(8, seed=1, baseline=(200, 300), depth=(100, 200))
        sp = gen_spikes(tr, tun, seed=2)
        for t in sp.spike_times_us:
            assert len(t) > 0
            assert np.all(np.diff(t) >= 1000)

    def test_rates_clamped_non_negative(self):
        tun = TuningModel(np.array([0.0]), np.array([1.0]), np.array([10.0]))
        assert tun.rates(np.array([[-5.0, 0.0]]))[0, 0] == 0.0

    def test_seeded_per_channel(self):
        tr = gen_reaches(4, seed=0)
        a = gen_spikes(tr, synth.random_tuning(6, seed=1), seed=9)
        b = gen_spikes(tr, synth.random_tuning(6, seed=1), seed=9)
        assert a == b


class TestWaveform:
    P0 = dict(noise_std=0.0, spike_amplitude=3.0)

    def test_silent(self):
        x = synth_waveform(SpikeTrain(2, [np.array([], np.int64)] * 2, 10_000), EncoderParams(**self.P0))
        assert x.shape == (2, 240) and np.all(x == 0)

    def test_template_placement(self):
        p = EncoderParams(**self.P0)
        x = synth_waveform(SpikeTrain(1, [np.array([2000])], 10_000), p)[0]
        k = 2000 * 24000 // 1_000_000
        exp = np.zeros(240)
        exp[k:k + len(p.spike_template)] = 3.0 * p.spike_template
        assert np.array_equal(x, exp)
        assert p.spike_template.min() == -1.0

    def test_superposition(self):
        p = EncoderParams(**self.P0)
        both = synth_waveform(SpikeTrain(1, [np.array([1000, 1300])], 10_000), p)[0]
        a = synth_waveform(SpikeTrain(1, [np.array([1000])], 10_000), p)[0]
        b = synth_waveform(SpikeTrain(1, [np.array([1300])], 10_000), p)[0]
        np.testing.assert_allclose(both, a + b, atol=1e-12)

    def test_spike_beyond_duration(self):
        with pytest.raises(DomainError):
            synth_waveform(SpikeTrain(1, [np.array([20_000])], 20_000), EncoderParams(), duration_us=10_000)


class TestEncoder:
    def test_constant_signal(self):
        assert len(ncns_encode(np.full((3, 100), 2.5), EncoderParams(delta=0.5))) == 0

    def test_ramps(self):
        up = np.linspace(0, 10, 1000)[None].repeat(2, axis=0)
        s = ncns_encode(up, EncoderParams(delta=1.0))
        assert len(s) == 20 and np.all(s.polarity == 1)
        assert np.all(np.bincount(s.channel) == 10)
        down = ncns_encode(-up, EncoderParams(delta=1.0))
        assert len(down) == 20 and np.all(down.polarity == -1)

    @given(signals, st.floats(0.05, 5))
    def test_reconstruction_within_delta(self, x, delta):
        idx, pol = delta_modulate(x, delta)
        steps = np.zeros(len(x))
        np.add.at(steps, idx, pol)
        r = x[0] + np.cumsum(steps) * delta
        assert np.all(np.abs(x - r) < delta + 1e-9)

    @given(signals, st.floats(0.05, 5))
    def test_doubling_delta_never_adds_events(self, x, delta):
        assert len(delta_modulate(x, 2 * delta)[0]) <= len(delta_modulate(x, delta)[0])

    @given(signals, st.floats(0.05, 5))
    def test_deterministic(self, x, delta):
        a, b = delta_modulate(x, delta), delta_modulate(x, delta)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_streaming_encoder_matches_two_step(self):
        tr = gen_reaches(3, seed=0)
        sp = gen_spikes(tr, synth.random_tuning(5, seed=0), seed=0)
        p = EncoderParams()
        one = encode_spike_train(sp, p, seed=3)
        two = ncns_encode(synth_waveform(sp, p, seed=3), p)
        assert one == two and len(one) > 0

    def test_invalid_params(self):
        with pytest.raises(DomainError):
            EncoderParams(delta=0)
        with pytest.raises(DomainError):
            EncoderParams(sample_rate_hz=0)
