"""astnet: speaking-rate transformation of articulatory trajectories.

An encoder-decoder network with location-sensitive attention maps
articulatory movement trajectories between speaking rates (neutral to fast,
neutral to slow), predicting target durations with a stop token. The
package includes the preprocessing chain, a synthetic paired-rate corpus
generator with known ground truth, training schemes (subject-dependent,
pooled generic, finetuned), and a DTW/SDAT/duration evaluation suite.
"""

__version__ = "0.1.0"

from .corpus import Corpus, SynthConfig, load_corpus, save_corpus, synth_corpus
from .errors import AstnetError, DataError, GradientCheckError, InputError, NumericalError
from .estimator import RateTransformer
from .evaluation import (
    DtwResult, DurationStats, SchemeTable, dtw, duration_analysis, emit_reports,
    relative_improvement, scheme_table, sdat, sdat_summary,
)
from .model import (
    ModelConfig, encode, infer, init_params, load_checkpoint, prenet, save_checkpoint,
)
from .numeric import GradientCheckReport, affine, conv1d_same, grad_check, softmax
from .schemes import fit_scheme, predict_fold, run_experiment
from .signal import (
    PhoneSegment, Trajectory, Utterance, lowpass, preprocess, resample, zero_mean,
)
from .stats import TTestResult, betainc, paired_t_test, pearson_r, t_two_sided_p
from .training import Adam, FoldSplit, TrainConfig, adam_step, loss, make_folds, train_pairs
from .verify import full_model_grad_check

__all__ = [
    "Adam", "AstnetError", "Corpus", "DataError", "DtwResult", "DurationStats",
    "FoldSplit", "GradientCheckError", "GradientCheckReport", "InputError",
    "ModelConfig", "NumericalError", "PhoneSegment", "RateTransformer",
    "SchemeTable", "SynthConfig", "TTestResult", "TrainConfig", "Trajectory",
    "Utterance", "adam_step", "affine", "betainc", "conv1d_same", "dtw",
    "duration_analysis", "emit_reports", "encode", "fit_scheme",
    "full_model_grad_check", "grad_check", "infer", "init_params",
    "load_checkpoint", "load_corpus", "loss", "lowpass", "make_folds",
    "paired_t_test", "pearson_r", "predict_fold", "prenet", "preprocess",
    "relative_improvement", "resample", "run_experiment", "save_checkpoint",
    "save_corpus", "scheme_table", "sdat", "sdat_summary", "softmax",
    "synth_corpus", "t_two_sided_p", "train_pairs", "zero_mean",
]
