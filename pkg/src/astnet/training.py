"""Objective, optimizer, fold construction, and the core training loop.

The objective is mean squared error on frames plus class-weighted binary
cross-entropy on the stop head (one positive frame per utterance, so the
positive class gets extra weight). Utterances are consumed one at a time in
a seeded shuffled order per epoch; gradients are clipped by global norm and
applied with Adam.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import model as model_mod
from .errors import InputError, NumericalError
from .signal import zero_mean


@dataclass(eq=False)
class TrainConfig:
    direction: str = "n2f"
    scheme: str = "generic"
    epochs: int = 60
    batch_size: int = 1
    learning_rate: float = 1e-3
    lr_decay: float = 0.98
    grad_clip_norm: float = 1.0
    stop_target_positive_weight: float = 5.0
    prenet_dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.direction not in ("n2f", "n2s"):
            raise InputError(f"direction must be 'n2f' or 'n2s', got {self.direction!r}")
        if self.scheme not in ("subject_dependent", "generic", "finetuned"):
            raise InputError(f"unknown scheme {self.scheme!r}")
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if not 0.0 <= self.prenet_dropout < 1.0:
            raise InputError("prenet_dropout must lie in [0, 1)")


def stop_targets(length, final_index=None):
    """Stop-head target vector: 1 at the final frame, 0 elsewhere."""
    final_index = length - 1 if final_index is None else final_index
    if not 0 <= final_index < length:
        raise InputError(f"final index {final_index} outside [0, {length})")
    y = np.zeros(length)
    y[final_index] = 1.0
    return y


def loss(pred, target, stop_probs, target_length=None, positive_weight=5.0):
    """(mse, bce, total) of a teacher-forced prediction against its target.

    Probabilities are clipped at 1e-12 before the log so degenerate inputs
    stay finite; training uses the logit form of the same objective.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    stop_probs = np.asarray(stop_probs, dtype=np.float64)
    if pred.shape != target.shape:
        raise InputError(f"pred shape {pred.shape} != target shape {target.shape}")
    if stop_probs.shape != (pred.shape[0],):
        raise InputError("stop_probs must have one entry per predicted frame")
    if target_length is None:
        target_length = pred.shape[0]
    mse = float(np.mean((pred - target) ** 2))
    y = stop_targets(stop_probs.shape[0], target_length - 1)
    p = np.clip(stop_probs, 1e-12, 1.0 - 1e-12)
    bce = float(np.mean(-(positive_weight * y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
    return mse, bce, mse + bce


def sequence_loss_tensors(pred, stop_logits, target, positive_weight):
    """Differentiable objective on tape Tensors; returns (total, mse, bce)."""
    m, c = target.shape
    diff = ad.sub(pred, ad.Tensor(target))
    mse = ad.scale(ad.sum_all(ad.mul(diff, diff)), 1.0 / (m * c))
    y = stop_targets(m)
    pos = ad.mul(ad.Tensor(positive_weight * y), ad.softplus(ad.scale(stop_logits, -1.0)))
    neg = ad.mul(ad.Tensor(1.0 - y), ad.softplus(stop_logits))
    bce = ad.scale(ad.sum_all(ad.add(pos, neg)), 1.0 / m)
    return ad.add(mse, bce), mse, bce


class Adam:
    """Standard Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads, lr):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, value in params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {name!r}")
            if name not in self.m:
                self.m[name] = np.zeros_like(value)
                self.v[name] = np.zeros_like(value)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            params[name] = value - lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params


def adam_step(params, grads, state, lr):
    """Functional single Adam update; state is an Adam instance (or None)."""
    state = state or Adam()
    updated = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    state.step(updated, grads, lr)
    return updated, state


def clip_gradients(grads, max_norm):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and total > max_norm:
        factor = max_norm / total
        return {k: g * factor for k, g in grads.items()}, total
    return grads, total


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: tuple
    test_ids: tuple


def make_folds(sentence_ids, k=4, seed=0):
    """Seeded shuffle, then k contiguous test blocks covering every sentence."""
    ids = list(sentence_ids)
    if k < 2:
        raise InputError(f"k must be >= 2, got {k}")
    if len(ids) < k:
        raise InputError(f"{len(ids)} sentences cannot form {k} folds")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    blocks = np.array_split(np.arange(len(ids)), k)
    folds = []
    for fold_index, block in enumerate(blocks):
        test = tuple(shuffled[i] for i in block)
        test_set = set(test)
        train = tuple(s for s in shuffled if s not in test_set)
        folds.append(FoldSplit(fold_index, train, test))
    return folds


def pair_arrays(utterance_pairs):
    """Zero-meaned (input, target) frame matrices for training/evaluation."""
    out = []
    for src, dst in utterance_pairs:
        out.append((zero_mean(src.trajectory).frames, zero_mean(dst.trajectory).frames))
    return out


def compute_gradients(x, y, params, config, positive_weight,
                      prenet_dropout=0.0, dropout_rng=None):
    """One taped forward/backward; returns (grads, mse, bce, total)."""
    tensors = model_mod.as_tensors(params)
    with ad.tape() as t:
        pred, stop_logits, _ = model_mod.forward_teacher_forced(
            x, y, tensors, config,
            prenet_dropout=prenet_dropout, dropout_rng=dropout_rng,
        )
        total, mse, bce = sequence_loss_tensors(pred, stop_logits, y, positive_weight)
        ad.backward(total, t)
    grads = {
        name: (ten.grad if ten.grad is not None else np.zeros_like(ten.value))
        for name, ten in tensors.items()
    }
    return grads, float(mse.value), float(bce.value), float(total.value)


def train_pairs(pairs, model_config, train_config, init_params=None):
    """Train on (input, target) frame-matrix pairs; returns (params, trace).

    trace has one entry per epoch with mean mse/bce/total. Fully
    deterministic for a fixed config and seed.
    """
    if not pairs:
        raise InputError("no training pairs supplied")
    if init_params is not None:
        params = {k: np.array(v, dtype=np.float64) for k, v in init_params.items()}
    else:
        params = model_mod.init_params(model_config, seed=train_config.seed)
    optimizer = Adam()
    trace = []
    n = len(pairs)
    for epoch in range(train_config.epochs):
        lr = train_config.learning_rate * train_config.lr_decay ** epoch
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(train_config.seed, spawn_key=(epoch,)))
        )
        order = rng.permutation(n)
        sums = np.zeros(3)
        batch = []
        for pos, idx in enumerate(order):
            x, y = pairs[idx]
            dropout_rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(train_config.seed, spawn_key=(epoch, int(idx), 7))
            ))
            grads, mse, bce, total = compute_gradients(
                x, y, params, model_config, train_config.stop_target_positive_weight,
                prenet_dropout=train_config.prenet_dropout, dropout_rng=dropout_rng,
            )
            sums += (mse, bce, total)
            batch.append(grads)
            if len(batch) == train_config.batch_size or pos == n - 1:
                if len(batch) == 1:
                    merged = batch[0]
                else:
                    merged = {
                        k: sum(b[k] for b in batch) / len(batch) for k in batch[0]
                    }
                merged, _ = clip_gradients(merged, train_config.grad_clip_norm)
                optimizer.step(params, merged, lr)
                batch = []
        trace.append({
            "epoch": epoch,
            "mse": sums[0] / n,
            "bce": sums[1] / n,
            "total": sums[2] / n,
            "lr": lr,
        })
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite parameter {name!r} after training")
    return params, trace


def training_log_text(model_config, train_config, trace, extra=None):
    """Line-oriented key=value run manifest."""
    lines = []
    for key, value in sorted(vars(model_config).items()):
        lines.append(f"model.{key}={value}")
    for key, value in sorted(vars(train_config).items()):
        lines.append(f"train.{key}={value}")
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    for entry in trace:
        lines.append(
            "epoch={epoch} mse={mse:.8f} bce={bce:.8f} total={total:.8f} lr={lr:.8g}".format(
                **entry
            )
        )
    return "\n".join(lines) + "\n"
