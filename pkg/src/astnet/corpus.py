"""Synthetic paired-rate corpus generation and the on-disk corpus format.

Each sentence is a random phone sequence shared by all subjects. A subject
has a private posture table (target position per phone per channel) and
private per-phone base durations; trajectories are rendered by driving a
critically damped second-order smoother with the stepwise posture signal at
250 Hz, then low-passed at 25 Hz and resampled to 100 Hz. Fast and slow
variants reuse the same phone sequence with per-phone duration scales and an
amplitude scale about the utterance mean, so every utterance has a known
ground-truth counterpart at every rate.

All randomness flows from one seed through named SeedSequence substreams, so
generation is deterministic and order-independent.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputError
from .signal import RATES, PhoneSegment, Trajectory, Utterance, lowpass, map_frame_index, resample

# articulatory channel naming follows the usual EMA sensor layout
CHANNEL_NAMES_18 = (
    "ULx", "ULz", "LLx", "LLz", "RCx", "RCz", "LCx", "LCz", "JAWx", "JAWz",
    "THx", "THz", "TTx", "TTz", "TBx", "TBz", "TDx", "TDz",
)

DEFAULT_PHONES = (
    "aa", "ae", "ah", "ao", "eh", "er", "ey", "ih", "iy", "ow", "uw",
    "b", "d", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
)

RENDER_RATE_HZ = 250.0
TARGET_RATE_HZ = 100.0
LOWPASS_CUTOFF_HZ = 25.0

# natural frequency of the critically damped articulator model (rad/s); short
# phones do not reach their posture targets, so fast speech undershoots
SMOOTHER_OMEGA = 60.0

_POSTURE_RANGE_MM = 8.0
_BASE_DURATION_RANGE_S = (0.06, 0.12)
_DURATION_JITTER = (0.85, 1.15)
_MIN_NEUTRAL_FRAMES = 12  # at 250 Hz
_MIN_SCALED_FRAMES = 5
_PHONES_PER_SENTENCE = (6, 16)

# substream identifiers for named seeding
_STREAM_SCALES = 0
_STREAM_DURATIONS = 1
_STREAM_POSTURES = 2
_STREAM_SENTENCE = 3
_STREAM_JITTER = 4


def channel_names(n):
    if n <= len(CHANNEL_NAMES_18):
        return CHANNEL_NAMES_18[:n]
    return tuple(f"ch{i:02d}" for i in range(n))


@dataclass(eq=False)
class SynthConfig:
    n_subjects: int = 3
    n_sentences: int = 120
    phone_inventory: tuple = DEFAULT_PHONES
    channels: int = 6
    seed: int = 0
    fast_duration_scale: dict = field(default_factory=dict)  # phone -> factor < 1
    slow_duration_scale: dict = field(default_factory=dict)  # phone -> factor > 1
    fast_amplitude_scale: float = 0.8
    slow_amplitude_scale: float = 1.15

    def __post_init__(self):
        self.phone_inventory = tuple(self.phone_inventory)
        if self.n_subjects < 1 or self.n_sentences < 1 or self.channels < 1:
            raise InputError("n_subjects, n_sentences and channels must be >= 1")
        if not self.phone_inventory:
            raise InputError("phone inventory is empty")
        if not self.fast_duration_scale:
            self.fast_duration_scale, self.slow_duration_scale = seeded_duration_scales(
                self.phone_inventory, self.seed
            )
        for table, name in (
            (self.fast_duration_scale, "fast_duration_scale"),
            (self.slow_duration_scale, "slow_duration_scale"),
        ):
            missing = set(self.phone_inventory) - set(table)
            if missing:
                raise InputError(f"{name} missing phones: {sorted(missing)}")
            if any(v <= 0 for v in table.values()):
                raise InputError(f"{name} must be positive")
        if any(self.fast_duration_scale[p] >= 1.0 for p in self.phone_inventory):
            raise InputError("fast duration scales must be < 1")
        if any(self.slow_duration_scale[p] <= 1.0 for p in self.phone_inventory):
            raise InputError("slow duration scales must be > 1")

    @property
    def subject_ids(self):
        return tuple(f"S{i + 1}" for i in range(self.n_subjects))


def seeded_duration_scales(phones, seed, fast_range=(0.45, 0.65), slow_range=(1.7, 2.1)):
    """Draw deterministic per-phone duration scales for a phone inventory."""
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_STREAM_SCALES,)))
    )
    fast = {p: float(rng.uniform(*fast_range)) for p in phones}
    slow = {p: float(rng.uniform(*slow_range)) for p in phones}
    return fast, slow


class Corpus:
    """In-memory collection of utterances indexed by (subject, rate, sentence)."""

    def __init__(self, utterances):
        self.utterances = list(utterances)
        self._index = {}
        for utt in self.utterances:
            key = (utt.subject_id, utt.rate, utt.sentence_id)
            if key in self._index:
                raise DataError(f"duplicate utterance {key}")
            self._index[key] = utt

    def __len__(self):
        return len(self.utterances)

    def get(self, subject_id, rate, sentence_id):
        try:
            return self._index[(subject_id, rate, sentence_id)]
        except KeyError:
            raise DataError(f"no utterance for {(subject_id, rate, sentence_id)}") from None

    @property
    def subject_ids(self):
        return tuple(sorted({u.subject_id for u in self.utterances}))

    @property
    def sentence_ids(self):
        return tuple(sorted({u.sentence_id for u in self.utterances}))

    def pairs(self, direction, subject_id=None, sentence_ids=None):
        """(neutral, target-rate) utterance pairs for a transformation direction."""
        target_rate = direction_target_rate(direction)
        subjects = (subject_id,) if subject_id is not None else self.subject_ids
        sentences = tuple(sentence_ids) if sentence_ids is not None else self.sentence_ids
        out = []
        for subj in subjects:
            for sid in sentences:
                out.append((self.get(subj, "neutral", sid), self.get(subj, target_rate, sid)))
        return out


def direction_target_rate(direction):
    if direction == "n2f":
        return "fast"
    if direction == "n2s":
        return "slow"
    raise InputError(f"direction must be 'n2f' or 'n2s', got {direction!r}")


def _rng(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _render_smoothed(targets_per_segment, seg_frames, omega, dt):
    """Critically damped second-order tracking of a stepwise posture signal.

    Exact per-segment closed form: within a segment with constant target u,
    x(t) = u + (A + B t) e^(-omega t) from the carried-over state.
    """
    n_channels = targets_per_segment.shape[1]
    total = int(np.sum(seg_frames))
    out = np.empty((total, n_channels))
    x = targets_per_segment[0].copy()
    v = np.zeros(n_channels)
    pos = 0
    for u, n in zip(targets_per_segment, seg_frames):
        t = (np.arange(1, n + 1) * dt)[:, None]
        a = x - u
        b_coef = v + omega * a
        decay = np.exp(-omega * t)
        seg = u + (a + b_coef * t) * decay
        out[pos:pos + n] = seg
        # closed-form state at segment end feeds the next segment
        t_end = n * dt
        e_end = np.exp(-omega * t_end)
        x = u + (a + b_coef * t_end) * e_end
        v = (b_coef - omega * (a + b_coef * t_end)) * e_end
        pos += n
    return out


def _scaled_frames(neutral_frames, scale):
    return max(_MIN_SCALED_FRAMES, int(round(neutral_frames * scale)))


def _segments_to_100hz(labels, frames_250, n_frames_100):
    bounds = np.concatenate([[0], np.cumsum(frames_250)])
    mapped = np.array([map_frame_index(b, RENDER_RATE_HZ, TARGET_RATE_HZ) for b in bounds])
    mapped[-1] = n_frames_100
    mapped = np.maximum.accumulate(mapped)
    segs = []
    for i, label in enumerate(labels):
        # minimum rendered phone length keeps every mapped segment non-empty
        if mapped[i + 1] <= mapped[i]:
            raise DataError(f"degenerate segment {label!r} after rate mapping")
        segs.append(PhoneSegment(label, int(mapped[i]), int(mapped[i + 1])))
    return tuple(segs)


def _render_utterance(cfg, subject_id, sentence_id, rate, labels, neutral_frames, postures):
    if rate == "neutral":
        seg_frames = neutral_frames
        amp = 1.0
    elif rate == "fast":
        seg_frames = np.array(
            [_scaled_frames(n, cfg.fast_duration_scale[p]) for p, n in zip(labels, neutral_frames)]
        )
        amp = cfg.fast_amplitude_scale
    else:
        seg_frames = np.array(
            [_scaled_frames(n, cfg.slow_duration_scale[p]) for p, n in zip(labels, neutral_frames)]
        )
        amp = cfg.slow_amplitude_scale
    targets = np.stack([postures[p] for p in labels])
    raw = _render_smoothed(targets, seg_frames, SMOOTHER_OMEGA, 1.0 / RENDER_RATE_HZ)
    if amp != 1.0:
        mean = raw.mean(axis=0)
        raw = mean + amp * (raw - mean)
    traj = Trajectory(raw, RENDER_RATE_HZ, channel_names(cfg.channels))
    traj = resample(lowpass(traj, LOWPASS_CUTOFF_HZ), TARGET_RATE_HZ)
    segments = _segments_to_100hz(labels, seg_frames, traj.n_frames)
    return Utterance(sentence_id, subject_id, rate, traj, segments)


def synth_corpus(cfg):
    """Generate the full paired corpus: every sentence at all three rates per subject."""
    names = channel_names(cfg.channels)
    sentences = []
    for s in range(cfg.n_sentences):
        rng = _rng(cfg.seed, _STREAM_SENTENCE, s)
        length = int(rng.integers(_PHONES_PER_SENTENCE[0], _PHONES_PER_SENTENCE[1] + 1))
        labels = tuple(
            cfg.phone_inventory[i] for i in rng.integers(0, len(cfg.phone_inventory), length)
        )
        sentences.append((f"sent{s:04d}", labels))

    utterances = []
    for si, subject_id in enumerate(cfg.subject_ids):
        rng_post = _rng(cfg.seed, _STREAM_POSTURES, si)
        postures = {
            p: rng_post.uniform(-_POSTURE_RANGE_MM, _POSTURE_RANGE_MM, len(names))
            for p in cfg.phone_inventory
        }
        rng_dur = _rng(cfg.seed, _STREAM_DURATIONS, si)
        base_dur = {
            p: float(rng_dur.uniform(*_BASE_DURATION_RANGE_S)) for p in cfg.phone_inventory
        }
        for sent_idx, (sentence_id, labels) in enumerate(sentences):
            rng_jit = _rng(cfg.seed, _STREAM_JITTER, si, sent_idx)
            jitter = rng_jit.uniform(*_DURATION_JITTER, len(labels))
            neutral_frames = np.array(
                [
                    max(_MIN_NEUTRAL_FRAMES, int(round(base_dur[p] * j * RENDER_RATE_HZ)))
                    for p, j in zip(labels, jitter)
                ]
            )
            for rate in RATES:
                utterances.append(
                    _render_utterance(
                        cfg, subject_id, sentence_id, rate, labels, neutral_frames, postures
                    )
                )
    return Corpus(utterances)


# ---------------------------------------------------------------------------
# on-disk format


def utterance_to_text(utt):
    lines = [
        f"sentence_id {utt.sentence_id}",
        f"rate {utt.rate}",
        f"sample_rate_hz {utt.trajectory.sample_rate_hz:.6f}",
        "channels " + ",".join(utt.trajectory.channel_names),
    ]
    for frame in utt.trajectory.frames:
        lines.append(" ".join(f"{v:.6f}" for v in frame))
    return "\n".join(lines) + "\n"


def segments_to_text(segments):
    return "".join(f"{s.label} {s.start_frame} {s.end_frame}\n" for s in segments)


def parse_utterance_text(text, subject_id, segments_text=None):
    lines = text.splitlines()
    header = {}
    i = 0
    for i, line in enumerate(lines):
        key, _, value = line.partition(" ")
        if key not in ("sentence_id", "rate", "sample_rate_hz", "channels"):
            break
        header[key] = value
    missing = {"sentence_id", "rate", "sample_rate_hz", "channels"} - set(header)
    if missing:
        raise DataError(f"utterance header missing keys: {sorted(missing)}")
    names = tuple(header["channels"].split(","))
    frames = np.array([[float(v) for v in line.split()] for line in lines[i:] if line.strip()])
    if frames.ndim != 2 or frames.shape[1] != len(names):
        raise DataError("frame lines do not match channel count")
    traj = Trajectory(frames, float(header["sample_rate_hz"]), names)
    segments = ()
    if segments_text is not None:
        segments = tuple(
            PhoneSegment(label, int(start), int(end))
            for label, start, end in (line.split() for line in segments_text.splitlines() if line.strip())
        )
    return Utterance(header["sentence_id"], subject_id, header["rate"], traj, segments)


def utterance_paths(root, subject_id, rate, sentence_id):
    base = os.path.join(root, subject_id, rate)
    return os.path.join(base, f"{sentence_id}.txt"), os.path.join(base, f"{sentence_id}.seg")


def save_corpus(corpus, root, cfg=None):
    for utt in corpus.utterances:
        traj_path, seg_path = utterance_paths(root, utt.subject_id, utt.rate, utt.sentence_id)
        os.makedirs(os.path.dirname(traj_path), exist_ok=True)
        with open(traj_path, "w") as fh:
            fh.write(utterance_to_text(utt))
        with open(seg_path, "w") as fh:
            fh.write(segments_to_text(utt.segments))
    if cfg is not None:
        with open(os.path.join(root, "manifest.txt"), "w") as fh:
            fh.write(synth_manifest(cfg))


def synth_manifest(cfg):
    lines = [
        f"n_subjects={cfg.n_subjects}",
        f"n_sentences={cfg.n_sentences}",
        f"channels={cfg.channels}",
        f"seed={cfg.seed}",
        f"fast_amplitude_scale={cfg.fast_amplitude_scale:.6f}",
        f"slow_amplitude_scale={cfg.slow_amplitude_scale:.6f}",
        "phone_inventory=" + ",".join(cfg.phone_inventory),
    ]
    for phone in cfg.phone_inventory:
        lines.append(f"fast_duration_scale.{phone}={cfg.fast_duration_scale[phone]:.6f}")
    for phone in cfg.phone_inventory:
        lines.append(f"slow_duration_scale.{phone}={cfg.slow_duration_scale[phone]:.6f}")
    return "\n".join(lines) + "\n"


def load_corpus(root):
    if not os.path.isdir(root):
        raise DataError(f"corpus directory {root!r} does not exist")
    utterances = []
    for subject_id in sorted(os.listdir(root)):
        subject_dir = os.path.join(root, subject_id)
        if not os.path.isdir(subject_dir):
            continue
        for rate in sorted(os.listdir(subject_dir)):
            rate_dir = os.path.join(subject_dir, rate)
            if not os.path.isdir(rate_dir):
                continue
            for name in sorted(os.listdir(rate_dir)):
                if not name.endswith(".txt"):
                    continue
                with open(os.path.join(rate_dir, name)) as fh:
                    text = fh.read()
                seg_path = os.path.join(rate_dir, name[:-4] + ".seg")
                seg_text = None
                if os.path.exists(seg_path):
                    with open(seg_path) as fh:
                        seg_text = fh.read()
                utterances.append(parse_utterance_text(text, subject_id, seg_text))
    if not utterances:
        raise DataError(f"no utterances found under {root!r}")
    return Corpus(utterances)
