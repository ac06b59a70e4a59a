"""Training-scheme orchestration: subject-dependent, pooled generic, finetuned.

A generic model pools every subject's fold-train pairs; a finetuned model
continues from the generic weights on one subject's data; a
subject-dependent model trains from scratch on one subject. Evaluation
transforms every fold-test neutral utterance and scores it against the
ground-truth target-rate utterance.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import direction_target_rate
from .errors import DataError, InputError
from .estimator import RateTransformer
from .evaluation import duration_analysis, scheme_table, sdat_summary
from .signal import zero_mean
from .training import pair_arrays

SCHEMES = ("subject_dependent", "generic", "finetuned")


def _estimator(model_kwargs, train_kwargs, seed):
    return RateTransformer(**model_kwargs, **train_kwargs, seed=seed)


def scheme_seed(base_seed, direction, scheme, fold_index, subject_id=None):
    """Stable per-run seed so every scheme/fold/subject trains reproducibly."""
    h = f"{direction}|{scheme}|{fold_index}|{subject_id or ''}"
    return (base_seed * 1000003 + sum(ord(c) * (i + 1) for i, c in enumerate(h))) % (2**31)


def fit_scheme(corpus, direction, scheme, fold, model_kwargs, train_kwargs,
               base_seed=0, subject_id=None, generic=None):
    """Fit one scheme on one fold; returns a fitted RateTransformer."""
    if scheme not in SCHEMES:
        raise InputError(f"unknown scheme {scheme!r}")
    if scheme in ("subject_dependent", "finetuned") and subject_id is None:
        raise InputError(f"scheme {scheme!r} requires a subject_id")
    seed = scheme_seed(base_seed, direction, scheme, fold.fold_index, subject_id)
    if scheme == "finetuned":
        if generic is None:
            raise DataError("finetuned scheme requires a fitted generic model")
        est = _estimator(model_kwargs, train_kwargs, seed)
        est.warm_start = True
        est.params_ = {k: np.array(v) for k, v in generic.params_.items()}
        est.config_ = generic.config_
        est.channels_ = generic.channels_
        est.max_out_frames_ = generic.max_out_frames_
        pairs = corpus.pairs(direction, subject_id=subject_id, sentence_ids=fold.train_ids)
    elif scheme == "subject_dependent":
        est = _estimator(model_kwargs, train_kwargs, seed)
        pairs = corpus.pairs(direction, subject_id=subject_id, sentence_ids=fold.train_ids)
    else:
        est = _estimator(model_kwargs, train_kwargs, seed)
        pairs = corpus.pairs(direction, sentence_ids=fold.train_ids)
    arrays = pair_arrays(pairs)
    est.fit([x for x, _ in arrays], [y for _, y in arrays])
    return est


def _predict_one(args):
    estimator, frames = args
    result = estimator.infer_detailed(frames)
    return result.trajectory.frames, result.truncated


def predict_fold(corpus, direction, fold, estimators_by_subject, threads=1):
    """Transform every fold-test neutral utterance; returns prediction dict.

    estimators_by_subject maps subject_id -> fitted estimator (the same
    estimator may serve all subjects for the generic scheme). Keys of the
    result are (fold_index, subject, sentence_id).
    """
    jobs = []
    keys = []
    for subject, est in sorted(estimators_by_subject.items()):
        for sid in fold.test_ids:
            neutral = zero_mean(corpus.get(subject, "neutral", sid).trajectory).frames
            jobs.append((est, neutral))
            keys.append((fold.fold_index, subject, sid))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_predict_one, jobs, chunksize=4))
    else:
        results = [_predict_one(job) for job in jobs]
    return {key: frames for key, (frames, _) in zip(keys, results)}


@dataclass(eq=False)
class ExperimentResult:
    direction: str
    table: object                  # SchemeTable
    predictions: dict              # scheme -> {(fold, subject, sid): frames}
    estimators: dict               # (scheme, fold_index, subject or None) -> estimator
    duration_stats: object         # DurationStats for the analysis scheme
    sdat: object                   # SdatSummary for the analysis scheme
    analysis_scheme: str


def run_experiment(corpus, direction, folds, model_kwargs=None, train_kwargs=None,
                   schemes=("generic", "finetuned"), base_seed=0,
                   finetune_train_kwargs=None, threads=1, progress=None):
    """Train and evaluate the requested schemes over all folds.

    finetune_train_kwargs overrides the training settings for the finetuned
    stage (typically fewer epochs at a lower learning rate). The last
    requested scheme drives the duration and movement-range analyses.
    """
    model_kwargs = dict(model_kwargs or {})
    train_kwargs = dict(train_kwargs or {})
    if "finetuned" in schemes and "generic" not in schemes:
        raise InputError("finetuned scheme requires the generic scheme")
    say = progress or (lambda msg: None)

    estimators = {}
    predictions = {scheme: {} for scheme in schemes}
    for fold in folds:
        generic_est = None
        if "generic" in schemes:
            say(f"[{direction}] fold {fold.fold_index}: training generic model")
            generic_est = fit_scheme(
                corpus, direction, "generic", fold, model_kwargs, train_kwargs, base_seed
            )
            estimators[("generic", fold.fold_index, None)] = generic_est
            predictions["generic"].update(predict_fold(
                corpus, direction, fold,
                {subj: generic_est for subj in corpus.subject_ids}, threads,
            ))
        for scheme in schemes:
            if scheme == "generic":
                continue
            per_subject = {}
            kwargs = train_kwargs
            if scheme == "finetuned" and finetune_train_kwargs is not None:
                kwargs = dict(finetune_train_kwargs)
            for subject in corpus.subject_ids:
                say(f"[{direction}] fold {fold.fold_index}: {scheme} model for {subject}")
                per_subject[subject] = fit_scheme(
                    corpus, direction, scheme, fold, model_kwargs, kwargs,
                    base_seed, subject_id=subject, generic=generic_est,
                )
                estimators[(scheme, fold.fold_index, subject)] = per_subject[subject]
            predictions[scheme].update(
                predict_fold(corpus, direction, fold, per_subject, threads)
            )

    table = scheme_table(corpus, direction, folds, predictions)
    analysis_scheme = schemes[-1]
    flat = {
        (subject, sid): frames
        for (fold_idx, subject, sid), frames in predictions[analysis_scheme].items()
    }
    stats = duration_analysis(corpus, flat, direction)
    sdat = sdat_summary(corpus, flat, direction)
    return ExperimentResult(
        direction=direction, table=table, predictions=predictions,
        estimators=estimators, duration_stats=stats, sdat=sdat,
        analysis_scheme=analysis_scheme,
    )
