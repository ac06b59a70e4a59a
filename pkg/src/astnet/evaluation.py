"""Evaluation: DTW distance, scheme comparison, movement-range and duration analyses.

DTW jointly aligns all channels with Euclidean local cost and the classic
step set {(1,0),(0,1),(1,1)}. Reported distances are normalized by the
optimal path's length so utterances of different durations are comparable;
the unnormalized total is kept alongside.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, InputError
from .signal import Trajectory, zero_mean
from .stats import paired_t_test

_FLOAT_FMT = "{:.6f}"


@dataclass(eq=False)
class DtwResult:
    distance_mm: float      # per-aligned-frame cost along the optimal path
    total_mm: float         # unnormalized accumulated cost
    path: list              # [(i, j)] from (0, 0) to (Ta-1, Tb-1)
    path_length: int


def _frames(x):
    if isinstance(x, Trajectory):
        return x.frames
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def dtw(a, b):
    """Dynamic time warping between two (T, C) sequences."""
    fa, fb = _frames(a), _frames(b)
    if fa.shape[0] == 0 or fb.shape[0] == 0:
        raise InputError("dtw requires non-empty sequences")
    if fa.shape[1] != fb.shape[1]:
        raise InputError(f"channel mismatch: {fa.shape[1]} vs {fb.shape[1]}")
    ta, tb = fa.shape[0], fb.shape[0]
    diff = fa[:, None, :] - fb[None, :, :]
    cost = np.sqrt(np.einsum("ijc,ijc->ij", diff, diff))

    acc = np.empty((ta, tb))
    acc[0] = np.cumsum(cost[0])
    # row-wise recurrence: entering column k from above (vertical or diagonal)
    # then moving right; a running minimum gives the whole row in vector ops
    for i in range(1, ta):
        above = acc[i - 1]
        enter = np.empty(tb)
        enter[0] = above[0]
        np.minimum(above[1:], above[:-1], out=enter[1:])
        row_cum = np.cumsum(cost[i])
        acc[i] = np.minimum.accumulate(enter + cost[i] - row_cum) + row_cum

    path = [(ta - 1, tb - 1)]
    i, j = ta - 1, tb - 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            best = min(diag, up, left)
            if diag == best:
                i -= 1
                j -= 1
            elif up == best:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    total = float(acc[ta - 1, tb - 1])
    return DtwResult(
        distance_mm=total / len(path), total_mm=total, path=path, path_length=len(path)
    )


def sdat(traj):
    """Per-channel population standard deviation of a trajectory."""
    frames = _frames(traj)
    if frames.shape[0] < 2:
        raise InputError("sdat needs at least 2 frames")
    return np.std(frames, axis=0)


def relative_improvement(baseline_mean, model_mean):
    """Percent improvement of a model over a baseline (positive is better)."""
    if not baseline_mean > 0:
        raise InputError(f"baseline mean must be positive, got {baseline_mean}")
    return 100.0 * (baseline_mean - model_mean) / baseline_mean


IDENTITY_SCHEME = "it_dtw"


@dataclass(eq=False)
class SchemeTable:
    direction: str
    schemes: tuple
    subjects: tuple
    mean_mm: dict       # (scheme, subject) -> float
    std_mm: dict        # (scheme, subject) -> float (ddof=1)
    n_utterances: dict  # (scheme, subject) -> int
    distances: dict     # (scheme, subject) -> list of per-utterance distances

    def format_table(self):
        width = max(len(s) for s in self.schemes) + 2
        header = "Model".ljust(width) + "".join(s.center(16) for s in self.subjects)
        lines = [header]
        for scheme in self.schemes:
            cells = []
            for subject in self.subjects:
                mean = self.mean_mm[(scheme, subject)]
                std = self.std_mm[(scheme, subject)]
                cells.append(f"{mean:.2f} ({std:.2f})".center(16))
            lines.append(scheme.ljust(width) + "".join(cells))
        return "\n".join(lines)


def scheme_table(corpus, direction, folds, scheme_predictions):
    """Aggregate per-utterance DTW distances into a per-subject scheme table.

    scheme_predictions maps scheme name -> {(fold_index, subject, sentence_id):
    predicted frames}; the IT-DTW baseline is computed directly from the
    corpus and needs no entry. Predictions and ground truth are compared
    after per-utterance zero-meaning, matching the training convention.
    """
    from .corpus import direction_target_rate

    target_rate = direction_target_rate(direction)
    subjects = corpus.subject_ids
    schemes = (IDENTITY_SCHEME,) + tuple(s for s in scheme_predictions if s != IDENTITY_SCHEME)
    distances = {(s, subj): [] for s in schemes for subj in subjects}

    for fold in folds:
        if not fold.test_ids:
            raise DataError(f"fold {fold.fold_index} has no test utterances")
        for subject in subjects:
            for sid in fold.test_ids:
                neutral = zero_mean(corpus.get(subject, "neutral", sid).trajectory).frames
                truth = zero_mean(corpus.get(subject, target_rate, sid).trajectory).frames
                distances[(IDENTITY_SCHEME, subject)].append(dtw(neutral, truth).distance_mm)
                for scheme in schemes[1:]:
                    key = (fold.fold_index, subject, sid)
                    preds = scheme_predictions[scheme]
                    if key not in preds:
                        raise DataError(
                            f"missing prediction for scheme={scheme} fold={fold.fold_index} "
                            f"subject={subject} sentence={sid}"
                        )
                    pred = np.asarray(preds[key], dtype=np.float64)
                    if pred.shape[0] == 0:
                        # a degenerate immediate-stop decode still gets scored
                        pred = np.zeros((1, truth.shape[1]))
                    distances[(scheme, subject)].append(dtw(pred, truth).distance_mm)

    mean_mm, std_mm, n_utt = {}, {}, {}
    for key, vals in distances.items():
        if not vals:
            raise DataError(f"no test utterances evaluated for {key}")
        mean_mm[key] = float(np.mean(vals))
        std_mm[key] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        n_utt[key] = len(vals)
    return SchemeTable(
        direction=direction, schemes=schemes, subjects=subjects,
        mean_mm=mean_mm, std_mm=std_mm, n_utterances=n_utt, distances=distances,
    )


# ---------------------------------------------------------------------------
# duration analysis


@dataclass(eq=False)
class PhoneDurationStat:
    phone: str
    n_pairs: int
    neutral_s: list
    target_s: list
    predicted_s: list
    median_neutral_s: float
    median_target_s: float
    median_predicted_s: float
    t_stat: float
    p_value: float
    significant: bool


@dataclass(eq=False)
class DurationStats:
    direction: str
    phones: list        # PhoneDurationStat, rank-ordered (see duration_analysis)
    excluded: list      # phone labels with fewer than 2 usable pairs


def transfer_segment_durations(predicted_frames, truth, rate_hz):
    """Map ground-truth segment boundaries onto a prediction via the DTW path.

    A boundary maps to the first path step that reaches it. Returns a list
    of (label, original_duration_s, predicted_duration_s).
    """
    pred = np.asarray(predicted_frames, dtype=np.float64)
    if pred.shape[0] == 0:
        return []
    truth_frames = zero_mean(truth.trajectory).frames
    alignment = dtw(pred, truth_frames)
    js = np.array([j for _, j in alignment.path])
    i_of = np.array([i for i, _ in alignment.path])

    def pred_index(boundary):
        if boundary >= truth_frames.shape[0]:
            return pred.shape[0]
        pos = np.searchsorted(js, boundary, side="left")
        return int(i_of[pos])

    out = []
    for seg in truth.segments:
        p_start = pred_index(seg.start_frame)
        p_end = pred_index(seg.end_frame)
        out.append((seg.label, seg.n_frames / rate_hz, (p_end - p_start) / rate_hz))
    return out


def duration_analysis(corpus, predictions, direction, significance=0.01):
    """Per-phone duration lists and paired tests for a prediction set.

    predictions maps (subject, sentence_id) -> predicted frames at the
    target rate. Phones are rank-ordered ascending by the absolute gap
    between neutral and target median durations. Pairs with a degenerate
    (zero-length) transferred duration are dropped; phones with fewer than
    2 usable pairs are excluded and reported.
    """
    from .corpus import direction_target_rate

    target_rate = direction_target_rate(direction)
    neutral_by_phone = {}
    target_by_phone = {}
    pairs_by_phone = {}
    for (subject, sid), pred in predictions.items():
        target_utt = corpus.get(subject, target_rate, sid)
        neutral_utt = corpus.get(subject, "neutral", sid)
        rate_hz = target_utt.trajectory.sample_rate_hz
        for seg in neutral_utt.segments:
            neutral_by_phone.setdefault(seg.label, []).append(seg.n_frames / rate_hz)
        transferred = transfer_segment_durations(pred, target_utt, rate_hz)
        for label, original_s, predicted_s in transferred:
            target_by_phone.setdefault(label, []).append(original_s)
            if predicted_s > 0:
                pairs_by_phone.setdefault(label, []).append((original_s, predicted_s))

    stats = []
    excluded = []
    all_phones = sorted(set(neutral_by_phone) | set(target_by_phone))
    for phone in all_phones:
        pairs = pairs_by_phone.get(phone, [])
        if len(pairs) < 2 or phone not in neutral_by_phone:
            excluded.append(phone)
            continue
        original = np.array([p[0] for p in pairs])
        predicted = np.array([p[1] for p in pairs])
        test = paired_t_test(original, predicted)
        stats.append(PhoneDurationStat(
            phone=phone,
            n_pairs=len(pairs),
            neutral_s=sorted(neutral_by_phone[phone]),
            target_s=sorted(target_by_phone[phone]),
            predicted_s=sorted(predicted.tolist()),
            median_neutral_s=float(np.median(neutral_by_phone[phone])),
            median_target_s=float(np.median(target_by_phone[phone])),
            median_predicted_s=float(np.median(predicted)),
            t_stat=test.t_stat,
            p_value=test.p_value,
            significant=test.p_value < significance,
        ))
    stats.sort(key=lambda s: (abs(s.median_neutral_s - s.median_target_s), s.phone))
    return DurationStats(direction=direction, phones=stats, excluded=excluded)


# ---------------------------------------------------------------------------
# report files


@dataclass(eq=False)
class SdatSummary:
    direction: str
    channel_names: tuple
    rows: list  # (condition, channel_name, value) long-format rows


def sdat_summary(corpus, predictions, direction):
    """Long-format SDAT rows for neutral, target-original and target-predicted."""
    from .corpus import direction_target_rate

    target_rate = direction_target_rate(direction)
    rows = []
    names = None
    for (subject, sid) in sorted(predictions):
        pred = np.asarray(predictions[(subject, sid)], dtype=np.float64)
        neutral = corpus.get(subject, "neutral", sid).trajectory
        target = corpus.get(subject, target_rate, sid).trajectory
        names = neutral.channel_names
        for condition, frames in (
            ("neutral", neutral.frames),
            ("target_original", target.frames),
            ("target_predicted", pred),
        ):
            if frames.shape[0] < 2:
                continue
            values = np.std(frames, axis=0)
            for name, value in zip(names, values):
                rows.append((condition, name, float(value)))
    return SdatSummary(direction=direction, channel_names=names or (), rows=rows)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _fmt(value):
    return _FLOAT_FMT.format(value)


def emit_reports(table, sdat_summaries, duration_stats, out_dir):
    """Write the comparison table plus box-plot-ready long-format data files.

    Output is deterministic: identical inputs give byte-identical files.
    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, f"scheme_table_{table.direction}.csv")
    rows = []
    for scheme in table.schemes:
        for subject in table.subjects:
            key = (scheme, subject)
            rows.append((
                scheme, subject, _fmt(table.mean_mm[key]), _fmt(table.std_mm[key]),
                str(table.n_utterances[key]),
            ))
    _write_csv(path, ("scheme", "subject", "mean_mm", "std_mm", "n"), rows)
    written.append(path)

    for summary in sdat_summaries:
        path = os.path.join(out_dir, f"sdat_{summary.direction}.csv")
        _write_csv(
            path, ("condition", "channel", "sdat_mm"),
            [(cond, ch, _fmt(v)) for cond, ch, v in summary.rows],
        )
        written.append(path)

    for stats in duration_stats:
        path = os.path.join(out_dir, f"duration_long_{stats.direction}.csv")
        rows = []
        for stat in stats.phones:
            for condition, values in (
                ("neutral", stat.neutral_s),
                ("target_original", stat.target_s),
                ("target_predicted", stat.predicted_s),
            ):
                rows.extend((stat.phone, condition, _fmt(v)) for v in values)
        _write_csv(path, ("phone", "condition", "duration_s"), rows)
        written.append(path)

        path = os.path.join(out_dir, f"duration_stats_{stats.direction}.csv")
        rows = [
            (
                str(rank), stat.phone, str(stat.n_pairs),
                _fmt(stat.median_neutral_s), _fmt(stat.median_target_s),
                _fmt(stat.median_predicted_s),
                _fmt(abs(stat.median_neutral_s - stat.median_target_s)),
                _fmt(stat.t_stat) if np.isfinite(stat.t_stat) else "inf",
                _fmt(stat.p_value), str(int(stat.significant)),
            )
            for rank, stat in enumerate(stats.phones)
        ]
        _write_csv(
            path,
            ("rank", "phone", "n_pairs", "median_neutral_s", "median_target_s",
             "median_predicted_s", "abs_median_gap_s", "t_stat", "p_value", "significant"),
            rows,
        )
        written.append(path)

        if stats.excluded:
            path = os.path.join(out_dir, f"excluded_phones_{stats.direction}.csv")
            _write_csv(path, ("phone",), [(p,) for p in stats.excluded])
            written.append(path)
    return written
