"""Scikit-learn style front end: fit on paired-rate sequences, transform new ones.

X and y are lists of (T_i, C) / (M_i, C) float arrays (variable lengths are
the norm). `warm_start=True` continues training from the previously fitted
weights, which is how the finetuned scheme specializes a pooled model to one
subject.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import model as model_mod
from .errors import InputError
from .evaluation import dtw
from .training import TrainConfig, train_pairs
from .validation import as_float_array


def _check_sequence_list(sequences, name):
    if not isinstance(sequences, (list, tuple)) or not sequences:
        raise InputError(f"{name} must be a non-empty list of (T, C) arrays")
    arrays = []
    channels = None
    for i, seq in enumerate(sequences):
        arr = as_float_array(seq, f"{name}[{i}]")
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise InputError(f"{name}[{i}] must be a non-empty (T, C) array, got {arr.shape}")
        if channels is None:
            channels = arr.shape[1]
        elif arr.shape[1] != channels:
            raise InputError(
                f"{name}[{i}] has {arr.shape[1]} channels, expected {channels}"
            )
        arrays.append(arr)
    return arrays, channels


class RateTransformer(BaseEstimator, TransformerMixin):
    """Sequence-to-sequence speaking-rate transformer with duration prediction.

    Parameters mirror the model and training configuration; fitted state
    lives in `params_` (weights), `config_` (architecture) and
    `max_out_frames_` (inference step bound derived from the training
    targets).
    """

    def __init__(self, enc_hidden=32, dec_hidden=64, prenet_units=32, attn_dim=32,
                 location_filters=8, location_kernel_width=15, stop_threshold=0.5,
                 max_steps_factor=1.2, epochs=60, batch_size=1, learning_rate=1e-3,
                 lr_decay=0.98, grad_clip_norm=1.0, stop_target_positive_weight=5.0,
                 prenet_dropout=0.5, warm_start=False, seed=0):
        self.enc_hidden = enc_hidden
        self.dec_hidden = dec_hidden
        self.prenet_units = prenet_units
        self.attn_dim = attn_dim
        self.location_filters = location_filters
        self.location_kernel_width = location_kernel_width
        self.stop_threshold = stop_threshold
        self.max_steps_factor = max_steps_factor
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.grad_clip_norm = grad_clip_norm
        self.stop_target_positive_weight = stop_target_positive_weight
        self.prenet_dropout = prenet_dropout
        self.warm_start = warm_start
        self.seed = seed

    # -- configuration plumbing ------------------------------------------

    def _model_config(self, channels):
        return model_mod.ModelConfig(
            channels=channels,
            enc_hidden=self.enc_hidden,
            dec_hidden=self.dec_hidden,
            prenet_units=self.prenet_units,
            attn_dim=self.attn_dim,
            location_filters=self.location_filters,
            location_kernel_width=self.location_kernel_width,
            stop_threshold=self.stop_threshold,
            max_steps_factor=self.max_steps_factor,
        )

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lr_decay=self.lr_decay,
            grad_clip_norm=self.grad_clip_norm,
            stop_target_positive_weight=self.stop_target_positive_weight,
            prenet_dropout=self.prenet_dropout,
            seed=self.seed,
        )

    def _is_fitted(self):
        return hasattr(self, "params_")

    def _require_fitted(self):
        if not self._is_fitted():
            raise NotFittedError("RateTransformer is not fitted yet; call fit first")

    # -- estimator API ----------------------------------------------------

    def fit(self, X, y):
        """Learn the source-rate to target-rate mapping from paired sequences."""
        inputs, channels = _check_sequence_list(X, "X")
        targets, target_channels = _check_sequence_list(y, "y")
        if len(inputs) != len(targets):
            raise InputError(f"X has {len(inputs)} sequences, y has {len(targets)}")
        if channels != target_channels:
            raise InputError(
                f"X has {channels} channels, y has {target_channels}"
            )
        init = None
        if self.warm_start and self._is_fitted():
            if self.config_.channels != channels:
                raise InputError(
                    f"warm start with {self.config_.channels}-channel weights "
                    f"on {channels}-channel data"
                )
            init = self.params_
        config = self._model_config(channels) if init is None else self.config_
        params, trace = train_pairs(
            list(zip(inputs, targets)), config, self._train_config(), init_params=init
        )
        self.params_ = params
        self.config_ = config
        self.channels_ = channels
        self.loss_trace_ = trace
        bound = int(np.ceil(self.max_steps_factor * max(t.shape[0] for t in targets)))
        if self.warm_start and init is not None and hasattr(self, "max_out_frames_"):
            bound = max(bound, self.max_out_frames_)
        self.max_out_frames_ = bound
        return self

    def transform(self, X, max_out_frames=None):
        """Predict target-rate sequences; returns a list of (M_i, C) arrays."""
        self._require_fitted()
        inputs, channels = _check_sequence_list(X, "X")
        if channels != self.channels_:
            raise InputError(f"X has {channels} channels, model expects {self.channels_}")
        bound = max_out_frames if max_out_frames is not None else self.max_out_frames_
        out = []
        for arr in inputs:
            result = model_mod.infer(arr, self.params_, self.config_, bound)
            out.append(result.trajectory.frames)
        return out

    def predict(self, X, max_out_frames=None):
        return self.transform(X, max_out_frames=max_out_frames)

    def infer_detailed(self, frames, max_out_frames=None):
        """Full inference record (alignments, stop trace, truncation flag)."""
        self._require_fitted()
        bound = max_out_frames if max_out_frames is not None else self.max_out_frames_
        return model_mod.infer(frames, self.params_, self.config_, bound)

    def score(self, X, y):
        """Negative mean per-frame DTW distance to the targets (higher is better)."""
        preds = self.transform(X)
        targets, _ = _check_sequence_list(y, "y")
        distances = []
        for pred, target in zip(preds, targets):
            if pred.shape[0] == 0:
                pred = np.zeros((1, target.shape[1]))
            distances.append(dtw(pred, target).distance_mm)
        return -float(np.mean(distances))

    # -- persistence ------------------------------------------------------

    def save_checkpoint(self, path, extras=None):
        self._require_fitted()
        merged = {"max_out_frames": self.max_out_frames_}
        merged.update(extras or {})
        model_mod.save_checkpoint(path, self.config_, self.params_, extras=merged)

    @classmethod
    def from_checkpoint(cls, path):
        config, params, extras = model_mod.load_checkpoint(path)
        est = cls(
            enc_hidden=config.enc_hidden,
            dec_hidden=config.dec_hidden,
            prenet_units=config.prenet_units,
            attn_dim=config.attn_dim,
            location_filters=config.location_filters,
            location_kernel_width=config.location_kernel_width,
            stop_threshold=config.stop_threshold,
            max_steps_factor=config.max_steps_factor,
        )
        est.params_ = params
        est.config_ = config
        est.channels_ = config.channels
        est.loss_trace_ = []
        est.max_out_frames_ = int(extras.get("max_out_frames", 1000))
        est.extras_ = extras
        return est
