"""Trajectory containers and the preprocessing chain (low-pass, resample, zero-mean).

Trajectories are T x C matrices in millimetres with an explicit sampling
rate. The low-pass stage is a 5th-order Butterworth applied forward and
backward so phone boundaries stay aligned with the filtered signal.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import butter, filtfilt

from .errors import InputError
from .validation import as_float_array

RATES = ("neutral", "fast", "slow")


@dataclass(eq=False)
class Trajectory:
    frames: np.ndarray  # (T, C) in mm
    sample_rate_hz: float
    channel_names: tuple

    def __post_init__(self):
        self.frames = as_float_array(self.frames, "frames")
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise InputError(f"frames must be a T x C matrix with T >= 1, got {self.frames.shape}")
        self.channel_names = tuple(self.channel_names)
        if len(self.channel_names) != self.frames.shape[1]:
            raise InputError(
                f"{len(self.channel_names)} channel names for {self.frames.shape[1]} channels"
            )
        if not self.sample_rate_hz > 0:
            raise InputError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_channels(self):
        return self.frames.shape[1]

    @property
    def duration_s(self):
        return self.n_frames / self.sample_rate_hz


@dataclass(frozen=True)
class PhoneSegment:
    label: str
    start_frame: int
    end_frame: int  # exclusive

    def __post_init__(self):
        if not self.start_frame < self.end_frame:
            raise InputError(
                f"segment {self.label!r} has start {self.start_frame} >= end {self.end_frame}"
            )

    @property
    def n_frames(self):
        return self.end_frame - self.start_frame


@dataclass(eq=False)
class Utterance:
    sentence_id: str
    subject_id: str
    rate: str
    trajectory: Trajectory
    segments: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.rate not in RATES:
            raise InputError(f"rate must be one of {RATES}, got {self.rate!r}")
        self.segments = tuple(self.segments)
        if self.segments:
            if self.segments[0].start_frame != 0:
                raise InputError("first segment must start at frame 0")
            if self.segments[-1].end_frame != self.trajectory.n_frames:
                raise InputError(
                    f"segments end at {self.segments[-1].end_frame}, "
                    f"trajectory has {self.trajectory.n_frames} frames"
                )
            for prev, cur in zip(self.segments, self.segments[1:]):
                if cur.start_frame != prev.end_frame:
                    raise InputError(
                        f"segments not contiguous at frame {prev.end_frame}"
                    )


def lowpass(traj, cutoff_hz):
    """Zero-phase 5th-order Butterworth low-pass, per channel."""
    if not cutoff_hz < traj.sample_rate_hz / 2.0:
        raise InputError(
            f"cutoff {cutoff_hz} Hz must be below Nyquist {traj.sample_rate_hz / 2.0} Hz"
        )
    b, a = butter(5, cutoff_hz, btype="low", fs=traj.sample_rate_hz)
    default_padlen = 3 * (max(len(a), len(b)) - 1)
    padlen = min(default_padlen, traj.n_frames - 1)
    filtered = filtfilt(b, a, traj.frames, axis=0, padlen=padlen)
    return replace(traj, frames=filtered)


def resample(traj, to_hz):
    """Linear-interpolation resampling onto a uniform grid at to_hz.

    The caller is responsible for band-limiting below to_hz / 2 first; the
    standard pipeline applies `lowpass` before this step.
    """
    if not to_hz > 0:
        raise InputError(f"target rate must be positive, got {to_hz}")
    from_hz = traj.sample_rate_hz
    n_old = traj.n_frames
    # tiny epsilon guards the floor against representation error on exact ratios
    n_new = int(np.floor((n_old - 1) * to_hz / from_hz + 1e-9)) + 1
    t_old = np.arange(n_old) / from_hz
    t_new = np.arange(n_new) / to_hz
    out = np.empty((n_new, traj.n_channels))
    for c in range(traj.n_channels):
        out[:, c] = np.interp(t_new, t_old, traj.frames[:, c])
    return replace(traj, frames=out, sample_rate_hz=float(to_hz))


def zero_mean(traj):
    """Remove each channel's mean."""
    return replace(traj, frames=traj.frames - traj.frames.mean(axis=0))


def preprocess(traj, cutoff_hz=25.0, to_hz=100.0, demean=True):
    """Standard chain: lowpass -> resample -> (optionally) zero_mean."""
    out = resample(lowpass(traj, cutoff_hz), to_hz)
    return zero_mean(out) if demean else out


def map_frame_index(index, from_hz, to_hz):
    """Nearest-frame index mapping between sampling rates."""
    return int(round(index * to_hz / from_hz))
