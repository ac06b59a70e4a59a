"""End-to-end gradient verification of the full model objective.

Builds a small random instance, evaluates the teacher-forced loss as a pure
function of the parameter dictionary, and compares the taped analytic
gradients against central finite differences for every element of every
parameter group.
"""

import numpy as np

from . import autodiff as ad
from . import model as model_mod
from .errors import InputError
from .numeric import grad_check
from .training import sequence_loss_tensors


def toy_instance(config, n_input, n_target, seed=123):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(9,))))
    x = rng.normal(0.0, 1.0, (n_input, config.channels))
    y = rng.normal(0.0, 1.0, (n_target, config.channels))
    return x, y


def loss_of_params(x, y, config, positive_weight=5.0):
    """Scalar objective as a function of a parameter-array dictionary."""

    def f(param_arrays):
        tensors = model_mod.as_tensors(param_arrays)
        pred, stop_logits, _ = model_mod.forward_teacher_forced(x, y, tensors, config)
        total, _, _ = sequence_loss_tensors(pred, stop_logits, y, positive_weight)
        return float(total.value)

    return f


def grads_of_params(x, y, config, positive_weight=5.0, corrupt=None):
    """Analytic-gradient counterpart of loss_of_params (optionally corrupted).

    corrupt names a parameter whose gradient gets a constant offset; it
    exists so the verification gate can prove it detects wrong gradients.
    """

    def grad_fn(param_arrays):
        tensors = model_mod.as_tensors(param_arrays)
        with ad.tape() as t:
            pred, stop_logits, _ = model_mod.forward_teacher_forced(x, y, tensors, config)
            total, _, _ = sequence_loss_tensors(pred, stop_logits, y, positive_weight)
            ad.backward(total, t)
        grads = {
            name: (ten.grad if ten.grad is not None else np.zeros_like(ten.value))
            for name, ten in tensors.items()
        }
        if corrupt is not None:
            if corrupt not in grads:
                raise InputError(f"unknown parameter group {corrupt!r}")
            grads[corrupt] = grads[corrupt] + 1e-2
        return grads

    return grad_fn


def full_model_grad_check(config, params, n_input=5, n_target=4, eps=1e-3,
                          positive_weight=5.0, seed=123, corrupt=None):
    """Finite-difference check of every parameter group of the full model.

    eps=1e-3 balances central-difference truncation against float64
    cancellation noise on the smallest gradient elements; the toy objective
    is O(1) so noise is ~1e-12/eps absolute.
    """
    x, y = toy_instance(config, n_input, n_target, seed=seed)
    f = loss_of_params(x, y, config, positive_weight)
    grad_fn = grads_of_params(x, y, config, positive_weight, corrupt=corrupt)
    return grad_check(f, grad_fn, params, eps=eps)
