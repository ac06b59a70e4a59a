import itertools

import numpy as np
import pytest

from astnet.errors import DataError, InputError
from astnet.evaluation import (
    dtw, duration_analysis, emit_reports, relative_improvement, scheme_table, sdat,
    sdat_summary, transfer_segment_durations, SdatSummary,
)
from astnet.corpus import Corpus
from astnet.signal import PhoneSegment, Trajectory, Utterance
from astnet.training import FoldSplit

rng = np.random.default_rng(424242)


def monotone_paths(la, lb):
    """All warping paths from (0,0) to (la-1,lb-1) with steps (1,0),(0,1),(1,1)."""
    paths = []

    def extend(path):
        i, j = path[-1]
        if i == la - 1 and j == lb - 1:
            paths.append(list(path))
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < la and nj < lb:
                path.append((ni, nj))
                extend(path)
                path.pop()

    extend([(0, 0)])
    return paths


def oracle_min_total(a, b, paths):
    best = np.inf
    for path in paths:
        total = sum(abs(a[i] - b[j]) for i, j in path)
        best = min(best, total)
    return best


class TestDtwBasics:
    def test_identity_is_zero_with_diagonal_path(self):
        x = rng.normal(size=(6, 3))
        res = dtw(x, x)
        assert res.distance_mm == 0.0
        assert res.total_mm == 0.0
        assert res.path == [(i, i) for i in range(6)]

    def test_constant_offset(self):
        res = dtw(np.zeros((2, 1)), np.ones((2, 1)))
        assert res.distance_mm == pytest.approx(1.0)
        assert res.total_mm == pytest.approx(2.0)

    def test_symmetry_on_random_pairs(self):
        for _ in range(100):
            a = rng.normal(size=(rng.integers(1, 12), 2))
            b = rng.normal(size=(rng.integers(1, 12), 2))
            assert dtw(a, b).total_mm == pytest.approx(dtw(b, a).total_mm, abs=1e-10)

    def test_nonnegative(self):
        a = rng.normal(size=(8, 2))
        b = rng.normal(size=(5, 2))
        assert dtw(a, b).distance_mm >= 0.0

    def test_path_is_valid_and_consistent(self):
        a = rng.normal(size=(9, 2))
        b = rng.normal(size=(7, 2))
        res = dtw(a, b)
        assert res.path[0] == (0, 0) and res.path[-1] == (8, 6)
        for (i0, j0), (i1, j1) in zip(res.path, res.path[1:]):
            assert (i1 - i0, j1 - j0) in ((1, 0), (0, 1), (1, 1))
        total = sum(np.linalg.norm(a[i] - b[j]) for i, j in res.path)
        assert total == pytest.approx(res.total_mm, rel=1e-9)
        assert res.distance_mm == pytest.approx(res.total_mm / res.path_length, rel=1e-12)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(InputError):
            dtw(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            dtw(np.zeros((0, 1)), np.zeros((3, 1)))


class TestDtwOracle:
    def test_exhaustive_small_alphabet(self):
        """Exhaustive brute-force agreement for lengths <= 3, values {0,1,2}."""
        values = (0.0, 1.0, 2.0)
        sequences = [
            np.array(s, dtype=np.float64)
            for n in (1, 2, 3)
            for s in itertools.product(values, repeat=n)
        ]
        path_cache = {}
        for a in sequences:
            for b in sequences:
                key = (len(a), len(b))
                if key not in path_cache:
                    path_cache[key] = monotone_paths(*key)
                expected = oracle_min_total(a, b, path_cache[key])
                assert dtw(a, b).total_mm == pytest.approx(expected, abs=1e-12)

    def test_random_longer_sequences_against_oracle(self):
        for _ in range(25):
            a = rng.integers(0, 3, rng.integers(4, 6)).astype(float)
            b = rng.integers(0, 3, rng.integers(4, 6)).astype(float)
            paths = monotone_paths(len(a), len(b))
            assert dtw(a, b).total_mm == pytest.approx(
                oracle_min_total(a, b, paths), abs=1e-12
            )


class TestSdat:
    def test_constant_channel_zero(self):
        # 4.25 is exactly representable, so the mean and deviations are exact
        assert sdat(np.full((10, 1), 4.25))[0] == 0.0
        assert sdat(np.full((10, 1), 4.2))[0] < 1e-12

    def test_hand_case(self):
        assert sdat(np.array([[-1.0], [1.0]]))[0] == pytest.approx(1.0)

    def test_against_two_pass_formula(self):
        x = rng.normal(size=(50, 4))
        expected = np.sqrt(((x - x.mean(axis=0)) ** 2).mean(axis=0))
        np.testing.assert_allclose(sdat(x), expected, atol=1e-12)

    def test_translation_invariance(self):
        x = rng.normal(size=(30, 3))
        np.testing.assert_allclose(sdat(x), sdat(x + 17.0), atol=1e-12)

    def test_single_frame_rejected(self):
        with pytest.raises(InputError):
            sdat(np.zeros((1, 2)))


class TestRelativeImprovement:
    def test_published_arithmetic_fast(self):
        assert round(relative_improvement(4.79, 4.69), 2) == 2.09

    def test_published_arithmetic_slow(self):
        assert round(relative_improvement(5.05, 4.76), 2) == 5.74

    def test_no_change(self):
        assert relative_improvement(3.3, 3.3) == 0.0

    def test_exact_fraction(self):
        assert relative_improvement(2.0, 2.0 * (1.0 - 0.25)) == pytest.approx(25.0)

    def test_zero_baseline_rejected(self):
        with pytest.raises(InputError):
            relative_improvement(0.0, 1.0)


def tiny_corpus():
    """Two subjects, two sentences, deterministic trajectories with segments."""
    utts = []
    for subject in ("S1", "S2"):
        offset = 1.0 if subject == "S1" else -1.0
        for k, sid in enumerate(("sent0000", "sent0001")):
            base = rng.normal(size=(20, 2)) + offset
            neutral = Trajectory(base, 100.0, ("a", "b"))
            fast = Trajectory(base[::2] * 0.8, 100.0, ("a", "b"))
            slow = Trajectory(np.repeat(base, 2, axis=0) * 1.15, 100.0, ("a", "b"))
            utts.append(Utterance(sid, subject, "neutral", neutral,
                                  (PhoneSegment("x", 0, 12), PhoneSegment("y", 12, 20))))
            utts.append(Utterance(sid, subject, "fast", fast,
                                  (PhoneSegment("x", 0, 6), PhoneSegment("y", 6, 10))))
            utts.append(Utterance(sid, subject, "slow", slow,
                                  (PhoneSegment("x", 0, 24), PhoneSegment("y", 24, 40))))
    return Corpus(utts)


class TestSchemeTable:
    def test_identity_row_matches_direct_dtw(self):
        corpus = tiny_corpus()
        folds = [FoldSplit(0, ("sent0001",), ("sent0000",))]
        table = scheme_table(corpus, "n2f", folds, {})
        from astnet.signal import zero_mean

        for subject in ("S1", "S2"):
            neutral = zero_mean(corpus.get(subject, "neutral", "sent0000").trajectory).frames
            fast = zero_mean(corpus.get(subject, "fast", "sent0000").trajectory).frames
            expected = dtw(neutral, fast).distance_mm
            assert table.mean_mm[("it_dtw", subject)] == pytest.approx(expected)

    def test_missing_prediction_named_error(self):
        corpus = tiny_corpus()
        folds = [FoldSplit(0, ("sent0001",), ("sent0000",))]
        with pytest.raises(DataError, match="scheme=generic"):
            scheme_table(corpus, "n2f", folds, {"generic": {}})

    def test_empty_fold_rejected(self):
        corpus = tiny_corpus()
        folds = [FoldSplit(0, ("sent0000", "sent0001"), ())]
        with pytest.raises(DataError):
            scheme_table(corpus, "n2f", folds, {})

    def test_table_format_shape(self):
        corpus = tiny_corpus()
        folds = [FoldSplit(0, ("sent0001",), ("sent0000",))]
        preds = {
            "generic": {
                (0, subject, "sent0000"):
                    corpus.get(subject, "fast", "sent0000").trajectory.frames
                for subject in ("S1", "S2")
            }
        }
        table = scheme_table(corpus, "n2f", folds, preds)
        text = table.format_table()
        lines = text.splitlines()
        assert lines[0].startswith("Model")
        assert "S1" in lines[0] and "S2" in lines[0]
        assert len(lines) == 3  # header + it_dtw + generic


class TestDurationTransfer:
    def test_identity_prediction_recovers_durations(self):
        corpus = tiny_corpus()
        target = corpus.get("S1", "fast", "sent0000")
        from astnet.signal import zero_mean

        pred = zero_mean(target.trajectory).frames
        rows = transfer_segment_durations(pred, target, 100.0)
        assert [(label, orig) for label, orig, _ in rows] == [("x", 0.06), ("y", 0.04)]
        for _, orig, predicted in rows:
            assert predicted == pytest.approx(orig, abs=1e-9)

    def test_duration_analysis_identity_predictions(self):
        corpus = tiny_corpus()
        from astnet.signal import zero_mean

        preds = {}
        for subject in ("S1", "S2"):
            for sid in ("sent0000", "sent0001"):
                preds[(subject, sid)] = zero_mean(
                    corpus.get(subject, "fast", sid).trajectory
                ).frames
        stats = duration_analysis(corpus, preds, "n2f")
        assert not stats.excluded
        for stat in stats.phones:
            assert stat.t_stat == 0.0
            assert stat.p_value == 1.0
            assert not stat.significant
            assert stat.median_neutral_s > stat.median_target_s

    def test_rank_ordering_ascending(self):
        corpus = tiny_corpus()
        from astnet.signal import zero_mean

        preds = {
            (subject, sid): zero_mean(corpus.get(subject, "fast", sid).trajectory).frames
            for subject in ("S1", "S2") for sid in ("sent0000", "sent0001")
        }
        stats = duration_analysis(corpus, preds, "n2f")
        gaps = [abs(s.median_neutral_s - s.median_target_s) for s in stats.phones]
        assert gaps == sorted(gaps)


class TestEmitReports:
    def make_inputs(self):
        corpus = tiny_corpus()
        folds = [FoldSplit(0, ("sent0001",), ("sent0000",))]
        from astnet.signal import zero_mean

        preds = {
            "generic": {
                (0, subject, "sent0000"):
                    zero_mean(corpus.get(subject, "fast", "sent0000").trajectory).frames
                for subject in ("S1", "S2")
            }
        }
        table = scheme_table(corpus, "n2f", folds, preds)
        flat = {(s, "sent0000"): preds["generic"][(0, s, "sent0000")] for s in ("S1", "S2")}
        stats = duration_analysis(corpus, flat, "n2f")
        summary = sdat_summary(corpus, flat, "n2f")
        return table, [summary], [stats]

    def test_deterministic_bytes(self, tmp_path):
        table, sdats, stats = self.make_inputs()
        d1 = tmp_path / "a"
        d2 = tmp_path / "b"
        paths1 = emit_reports(table, sdats, stats, str(d1))
        paths2 = emit_reports(table, sdats, stats, str(d2))
        assert [p.split("/")[-1] for p in paths1] == [p.split("/")[-1] for p in paths2]
        for p1, p2 in zip(paths1, paths2):
            assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_round_trip_six_digit_precision(self, tmp_path):
        table, sdats, stats = self.make_inputs()
        paths = emit_reports(table, sdats, stats, str(tmp_path))
        scheme_csv = [p for p in paths if "scheme_table" in p][0]
        lines = open(scheme_csv).read().splitlines()
        header = lines[0].split(",")
        assert header == ["scheme", "subject", "mean_mm", "std_mm", "n"]
        for line in lines[1:]:
            scheme, subject, mean_mm, std_mm, n = line.split(",")
            key = (scheme, subject)
            assert float(mean_mm) == pytest.approx(table.mean_mm[key], abs=5e-7)
            assert float(std_mm) == pytest.approx(table.std_mm[key], abs=5e-7)
            assert int(n) == table.n_utterances[key]

    def test_row_counts(self, tmp_path):
        table, sdats, stats = self.make_inputs()
        paths = emit_reports(table, sdats, stats, str(tmp_path))
        scheme_csv = [p for p in paths if "scheme_table" in p][0]
        rows = open(scheme_csv).read().splitlines()
        assert len(rows) == 1 + len(table.schemes) * len(table.subjects)

    def test_sdat_summary_shape(self):
        corpus = tiny_corpus()
        from astnet.signal import zero_mean

        flat = {
            ("S1", "sent0000"): zero_mean(
                corpus.get("S1", "fast", "sent0000").trajectory
            ).frames
        }
        summary = sdat_summary(corpus, flat, "n2f")
        assert isinstance(summary, SdatSummary)
        conditions = {row[0] for row in summary.rows}
        assert conditions == {"neutral", "target_original", "target_predicted"}
        assert len(summary.rows) == 3 * 2  # 3 conditions x 2 channels
