import numpy as np
import pytest

from astnet.errors import InputError
from astnet.signal import (
    PhoneSegment, Trajectory, Utterance, lowpass, preprocess, resample, zero_mean,
)

rng = np.random.default_rng(5150)


def make_traj(frames, rate=250.0):
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[:, None]
    names = tuple(f"ch{i:02d}" for i in range(frames.shape[1]))
    return Trajectory(frames, rate, names)


def fit_amplitude(signal, freq_hz, rate_hz):
    """Least-squares amplitude of a sinusoid at a known frequency."""
    t = np.arange(len(signal)) / rate_hz
    basis = np.column_stack([np.sin(2 * np.pi * freq_hz * t),
                             np.cos(2 * np.pi * freq_hz * t)])
    coef, *_ = np.linalg.lstsq(basis, signal, rcond=None)
    return float(np.hypot(*coef))


class TestLowpass:
    def test_dc_gain_unity(self):
        traj = make_traj(np.full(500, 7.0))
        out = lowpass(traj, 25.0)
        np.testing.assert_allclose(out.frames[:, 0], 7.0, atol=1e-6)

    def test_passband_5hz_amplitude_preserved(self):
        t = np.arange(1000) / 250.0
        traj = make_traj(np.sin(2 * np.pi * 5.0 * t))
        out = lowpass(traj, 25.0)
        interior = out.frames[50:-50, 0]
        amp = fit_amplitude(interior, 5.0, 250.0)
        assert abs(amp - 1.0) < 0.01

    def test_stopband_80hz_attenuated(self):
        t = np.arange(1000) / 250.0
        traj = make_traj(np.sin(2 * np.pi * 80.0 * t))
        out = lowpass(traj, 25.0)
        interior = out.frames[50:-50, 0]
        assert np.max(np.abs(interior)) < 0.02

    def test_cutoff_at_nyquist_rejected(self):
        traj = make_traj(np.zeros(100))
        with pytest.raises(InputError):
            lowpass(traj, 125.0)

    def test_length_preserved(self):
        traj = make_traj(rng.normal(size=(333, 3)))
        assert lowpass(traj, 25.0).frames.shape == (333, 3)


class TestResample:
    def test_length_arithmetic(self):
        traj = make_traj(np.zeros(251), rate=250.0)
        out = resample(traj, 100.0)
        assert out.n_frames == 101
        assert out.sample_rate_hz == 100.0

    def test_exact_on_ramps(self):
        t = np.arange(250) / 250.0
        traj = make_traj(3.0 * t - 1.0)
        out = resample(traj, 100.0)
        t_new = np.arange(out.n_frames) / 100.0
        np.testing.assert_allclose(out.frames[:, 0], 3.0 * t_new - 1.0, atol=1e-12)

    def test_sinusoid_against_analytic(self):
        t = np.arange(2500) / 250.0
        traj = make_traj(np.sin(2 * np.pi * 5.0 * t))
        out = resample(traj, 100.0)
        t_new = np.arange(out.n_frames) / 100.0
        # linear interpolation midway between 250 Hz samples has worst-case
        # error (h/2)^2 * omega^2 / 2 = 1.98e-3 for a 5 Hz unit sinusoid
        np.testing.assert_allclose(
            out.frames[:, 0], np.sin(2 * np.pi * 5.0 * t_new), atol=2.5e-3
        )

    def test_idempotent_on_bandlimited_ramps(self):
        t = np.arange(500) / 250.0
        traj = make_traj(0.5 * t + 2.0)
        once = resample(traj, 100.0)
        twice = resample(once, 100.0)
        np.testing.assert_allclose(once.frames, twice.frames, atol=1e-9)

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(InputError):
            resample(make_traj(np.zeros(10)), 0.0)


class TestZeroMean:
    def test_hand_case(self):
        out = zero_mean(make_traj([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(out.frames[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)

    def test_idempotent(self):
        traj = zero_mean(make_traj(rng.normal(size=(40, 2))))
        again = zero_mean(traj)
        np.testing.assert_allclose(traj.frames, again.frames, atol=1e-12)

    def test_random_matrix_means_below_tolerance(self):
        traj = make_traj(rng.normal(size=(100, 18)) * 10 + 5)
        out = zero_mean(traj)
        assert np.all(np.abs(out.frames.mean(axis=0)) < 1e-10)


class TestPipeline:
    def test_full_chain_on_synthetic_250hz(self):
        frames = rng.normal(size=(750, 6)).cumsum(axis=0) * 0.1 + 3.0
        traj = make_traj(frames, rate=250.0)
        out = preprocess(traj, cutoff_hz=25.0, to_hz=100.0)
        assert np.all(np.isfinite(out.frames))
        assert out.sample_rate_hz == 100.0
        assert np.all(np.abs(out.frames.mean(axis=0)) < 1e-10)


class TestContainers:
    def test_trajectory_validation(self):
        with pytest.raises(InputError):
            Trajectory(np.zeros((0, 2)), 100.0, ("a", "b"))
        with pytest.raises(InputError):
            Trajectory(np.zeros((5, 2)), 100.0, ("a",))
        with pytest.raises(InputError):
            Trajectory(np.full((5, 1), np.inf), 100.0, ("a",))

    def test_segment_validation(self):
        with pytest.raises(InputError):
            PhoneSegment("aa", 5, 5)

    def test_utterance_cover_invariant(self):
        traj = make_traj(np.zeros(10), rate=100.0)
        good = Utterance("s1", "S1", "neutral", traj,
                         (PhoneSegment("a", 0, 4), PhoneSegment("b", 4, 10)))
        assert good.segments[1].n_frames == 6
        with pytest.raises(InputError):
            Utterance("s1", "S1", "neutral", traj, (PhoneSegment("a", 0, 9),))
        with pytest.raises(InputError):
            Utterance("s1", "S1", "neutral", traj,
                      (PhoneSegment("a", 0, 4), PhoneSegment("b", 5, 10)))
        with pytest.raises(InputError):
            Utterance("s1", "S1", "loud", traj, (PhoneSegment("a", 0, 10),))
