"""Command-line entry point: synth, train, transform, eval, gradcheck.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 verification
failure. Every command validates its configuration before writing anything.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import load_config
from .corpus import (
    direction_target_rate, load_corpus, parse_utterance_text, save_corpus,
    synth_corpus, utterance_to_text,
)
from .errors import AstnetError, InputError
from .estimator import RateTransformer
from .evaluation import emit_reports, scheme_table
from .model import ModelConfig, init_params
from .schemes import SCHEMES, fit_scheme, predict_fold
from .signal import Utterance, zero_mean
from .training import make_folds, training_log_text
from .verify import full_model_grad_check

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(parser):
    parser.add_argument("--config", help="key=value run configuration file")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--threads", type=int, help="worker processes (default 1)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--force", action="store_true",
                        help="allow writing into a non-empty output directory")


def build_parser():
    parser = _Parser(prog="astnet", description=__doc__)
    parser.add_argument("--version", action="version", version=f"astnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate the synthetic paired-rate corpus")
    _add_common(p)
    p.add_argument("--subjects", type=int, help="override synth.n_subjects")
    p.add_argument("--sentences", type=int, help="override synth.n_sentences")
    p.add_argument("--channels", type=int, help="override synth.channels")

    p = sub.add_parser("train", help="train one scheme for one direction and fold")
    _add_common(p)
    p.add_argument("--corpus", help="corpus directory (default: config corpus_dir)")
    p.add_argument("--direction", required=True, choices=("n2f", "n2s"))
    p.add_argument("--scheme", required=True, choices=SCHEMES)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--subject", help="target subject (subject_dependent/finetuned)")
    p.add_argument("--generic-checkpoint", help="starting weights for the finetuned scheme")
    p.add_argument("--epochs", type=int, help="override train.epochs for this run")

    p = sub.add_parser("transform", help="transform one utterance file with a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="utterance text file")
    p.add_argument("--output", required=True, help="path for the predicted trajectory")
    p.add_argument("--max-steps-override", type=int, dest="max_steps")
    p.add_argument("--attention-out", help="optional alignment-matrix side output")

    p = sub.add_parser("eval", help="evaluate schemes over all folds and emit reports")
    _add_common(p)
    p.add_argument("--corpus", help="corpus directory (default: config corpus_dir)")
    p.add_argument("--models-dir", required=True, help="directory with train outputs")
    p.add_argument("--direction", required=True, choices=("n2f", "n2s"))
    p.add_argument("--schemes", default="it_dtw,generic,finetuned",
                   help="comma-separated schemes to evaluate")
    p.add_argument("--analysis-scheme", default=None,
                   help="scheme whose predictions drive SDAT/duration analysis")

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    _add_common(p)
    p.add_argument("--corrupt-gradient", metavar="GROUP",
                   help="test hook: perturb one analytic gradient group")
    return parser


def checkpoint_name(scheme, direction, fold, subject=None):
    stem = f"ckpt_{scheme}_{direction}_fold{fold}"
    if subject:
        stem += f"_{subject}"
    return stem + ".bin"


def _prepare_out_dir(path, force):
    if os.path.exists(path) and os.listdir(path) and not force:
        raise InputError(f"output directory {path!r} is not empty (use --force)")
    os.makedirs(path, exist_ok=True)


def cmd_synth(args):
    overrides = {"seed": args.seed, "threads": args.threads}
    if args.subjects is not None:
        overrides["synth_n_subjects"] = args.subjects
    if args.sentences is not None:
        overrides["synth_n_sentences"] = args.sentences
    if args.channels is not None:
        overrides["synth_channels"] = args.channels
    cfg = load_config(args.config, overrides)
    out = args.out or cfg.corpus_dir
    _prepare_out_dir(out, args.force)
    corpus = synth_corpus(cfg.synth_config())
    save_corpus(corpus, out, cfg.synth_config())
    print(f"wrote {len(corpus)} utterances to {out}")
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args.config, {"seed": args.seed, "threads": args.threads})
    if args.epochs is not None:
        cfg.train_epochs = args.epochs
    corpus_dir = args.corpus or cfg.corpus_dir
    corpus = load_corpus(corpus_dir)
    folds = make_folds(corpus.sentence_ids, k=cfg.train_folds, seed=cfg.seed)
    if not 0 <= args.fold < len(folds):
        raise InputError(f"fold {args.fold} outside 0..{len(folds) - 1}")
    fold = folds[args.fold]
    if args.scheme in ("subject_dependent", "finetuned") and not args.subject:
        raise InputError(f"scheme {args.scheme!r} requires --subject")
    generic = None
    if args.scheme == "finetuned":
        if not args.generic_checkpoint:
            raise InputError("finetuned scheme requires --generic-checkpoint")
        generic = RateTransformer.from_checkpoint(args.generic_checkpoint)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)

    finetune = args.scheme == "finetuned"
    est = fit_scheme(
        corpus, args.direction, args.scheme, fold,
        cfg.model_kwargs(), cfg.train_kwargs(finetune=finetune),
        base_seed=cfg.seed, subject_id=args.subject, generic=generic,
    )
    name = checkpoint_name(args.scheme, args.direction, args.fold, args.subject)
    ckpt_path = os.path.join(out, name)
    est.save_checkpoint(ckpt_path, extras={
        "direction": args.direction, "scheme": args.scheme, "fold": args.fold,
        "subject": args.subject or "", "seed": cfg.seed,
    })
    log_path = os.path.join(out, name.replace("ckpt_", "log_").replace(".bin", ".txt"))
    with open(log_path, "w") as fh:
        fh.write(training_log_text(
            est.config_, est._train_config(), est.loss_trace_,
            extra={
                "direction": args.direction, "scheme": args.scheme,
                "fold": args.fold, "subject": args.subject or "",
                "seed": cfg.seed, "max_out_frames": est.max_out_frames_,
                "n_train_pairs": len(fold.train_ids),
            },
        ))
    final = est.loss_trace_[-1]
    print(f"wrote {ckpt_path} (final total loss {final['total']:.6f})")
    return EXIT_OK


def cmd_transform(args):
    est = RateTransformer.from_checkpoint(args.checkpoint)
    with open(args.input) as fh:
        utt = parse_utterance_text(fh.read(), subject_id="input")
    if utt.trajectory.n_channels != est.channels_:
        raise InputError(
            f"input has {utt.trajectory.n_channels} channels, "
            f"checkpoint expects {est.channels_}"
        )
    frames = zero_mean(utt.trajectory).frames
    result = est.infer_detailed(frames, max_out_frames=args.max_steps)
    if result.truncated:
        print("warning: decoding reached the maximum step bound", file=sys.stderr)
    direction = est.extras_.get("direction", "n2f") if hasattr(est, "extras_") else "n2f"
    out_traj = result.trajectory
    pred = Utterance(
        sentence_id=utt.sentence_id, subject_id="predicted",
        rate=direction_target_rate(direction),
        trajectory=type(utt.trajectory)(
            frames=out_traj.frames if out_traj.n_frames else np.zeros((1, est.channels_)),
            sample_rate_hz=utt.trajectory.sample_rate_hz,
            channel_names=utt.trajectory.channel_names,
        ),
    )
    os.makedirs(os.path.dirname(os.path.abspath(args.output)), exist_ok=True)
    with open(args.output, "w") as fh:
        fh.write(utterance_to_text(pred))
    if args.attention_out:
        np.savetxt(args.attention_out, result.alphas, fmt="%.6f")
    print(f"wrote {args.output} ({out_traj.n_frames} frames)")
    return EXIT_OK


def cmd_eval(args):
    cfg = load_config(args.config, {"seed": args.seed, "threads": args.threads})
    corpus = load_corpus(args.corpus or cfg.corpus_dir)
    folds = make_folds(corpus.sentence_ids, k=cfg.train_folds, seed=cfg.seed)
    schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)

    predictions = {}
    for scheme in schemes:
        if scheme == "it_dtw":
            continue  # computed directly from the corpus, no checkpoint needed
        if scheme not in SCHEMES:
            raise InputError(f"unknown scheme {scheme!r}")
        predictions[scheme] = {}
        for fold in folds:
            per_subject = {}
            for subject in corpus.subject_ids:
                subj_arg = None if scheme == "generic" else subject
                path = os.path.join(
                    args.models_dir,
                    checkpoint_name(scheme, args.direction, fold.fold_index, subj_arg),
                )
                if not os.path.exists(path):
                    raise InputError(
                        f"missing checkpoint for scheme={scheme} "
                        f"fold={fold.fold_index} subject={subj_arg or 'all'}: {path}"
                    )
                per_subject[subject] = RateTransformer.from_checkpoint(path)
            predictions[scheme].update(
                predict_fold(corpus, args.direction, fold, per_subject, cfg.threads)
            )

    table = scheme_table(corpus, args.direction, folds, predictions)
    print(table.format_table())

    analysis_scheme = args.analysis_scheme
    if analysis_scheme is None:
        non_identity = [s for s in schemes if s != "it_dtw"]
        analysis_scheme = non_identity[-1] if non_identity else None
    sdat_list, duration_list = [], []
    if analysis_scheme:
        from .evaluation import duration_analysis, sdat_summary

        flat = {
            (subject, sid): frames
            for (fold_idx, subject, sid), frames in predictions[analysis_scheme].items()
        }
        duration_list = [duration_analysis(corpus, flat, args.direction)]
        sdat_list = [sdat_summary(corpus, flat, args.direction)]
    written = emit_reports(table, sdat_list, duration_list, out)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


GRADCHECK_TOY = dict(channels=2, enc_hidden=4, dec_hidden=6, prenet_units=3,
                     attn_dim=3, location_filters=2, location_kernel_width=3)
GRADCHECK_TOL = 1e-4


def cmd_gradcheck(args):
    config = ModelConfig(**GRADCHECK_TOY)
    params = init_params(config, seed=args.seed or 0)
    report = full_model_grad_check(
        config, params, n_input=5, n_target=4,
        corrupt=args.corrupt_gradient,
    )
    print(report.summary())
    if report.passed(GRADCHECK_TOL):
        print(f"gradcheck PASS (max rel error {report.max_rel_error:.3e} < {GRADCHECK_TOL:g})")
        return EXIT_OK
    print(f"gradcheck FAIL (max rel error {report.max_rel_error:.3e} >= {GRADCHECK_TOL:g}, "
          f"worst group {report.worst_param})")
    return EXIT_VERIFY


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "synth": cmd_synth,
        "train": cmd_train,
        "transform": cmd_transform,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except AstnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
