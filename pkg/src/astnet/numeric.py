"""Dense linear-algebra primitives and a finite-difference gradient checker.

All arithmetic is 64-bit floating point. The gradient checker is the
verification gate for every learnable block in the model: analytic gradients
(however they are computed) must agree with central differences to a few
parts in 1e4.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GradientCheckError, InputError
from .validation import as_matrix, as_vector


def affine(x, w, b):
    """w @ x + b for a 1-D input vector."""
    x = as_vector(x, "x")
    w = as_matrix(w, "w")
    b = as_vector(b, "b")
    if w.shape[1] != x.shape[0]:
        raise InputError(f"weight has {w.shape[1]} columns, input has length {x.shape[0]}")
    if w.shape[0] != b.shape[0]:
        raise InputError(f"weight has {w.shape[0]} rows, bias has length {b.shape[0]}")
    return w @ x + b


def softmax(v):
    """Numerically safe softmax of a 1-D vector (max-subtraction)."""
    v = as_vector(v, "v")
    e = np.exp(v - np.max(v))
    return e / np.sum(e)


def conv1d_same_forward(signal, weights):
    """Same-length 1-D correlation with zero padding; no input checks.

    signal: (N,) or (N, c_in); weights: (n_filters, width) for c_in == 1
    or (n_filters, width, c_in). Returns (N, n_filters).
    """
    x = signal if signal.ndim == 2 else signal[:, None]
    w = weights if weights.ndim == 3 else weights[:, :, None]
    n_filters, width, _ = w.shape
    half = width // 2
    padded = np.concatenate(
        [np.zeros((half, x.shape[1])), x, np.zeros((half, x.shape[1]))], axis=0
    )
    windows = np.lib.stride_tricks.sliding_window_view(padded, width, axis=0)
    # windows: (N, c_in, width) -> output (N, n_filters)
    return np.einsum("ncw,fwc->nf", windows, w)


def conv1d_same(signal, weights):
    """Same-length 1-D convolution of a (N,) or (N, c) signal with a filter bank.

    Kernel width must be odd so symmetric zero padding keeps the output
    length equal to the input length.
    """
    signal = np.asarray(signal, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if signal.size == 0:
        raise InputError("empty signal")
    if signal.ndim not in (1, 2):
        raise InputError(f"signal must be 1-D or 2-D, got shape {signal.shape}")
    if weights.ndim not in (2, 3):
        raise InputError(f"kernel weights must be 2-D or 3-D, got shape {weights.shape}")
    width = weights.shape[1]
    if width % 2 != 1:
        raise InputError(f"kernel width must be odd, got {width}")
    c_in = signal.shape[1] if signal.ndim == 2 else 1
    k_in = weights.shape[2] if weights.ndim == 3 else 1
    if c_in != k_in:
        raise InputError(f"signal has {c_in} channels, kernel expects {k_in}")
    return conv1d_same_forward(signal, weights)


@dataclass
class GradientCheckReport:
    """Per-parameter comparison of analytic gradients to central differences."""

    max_rel_error: float
    worst_param: str
    eps: float
    per_param: dict = field(default_factory=dict)

    def passed(self, tol=1e-4):
        return self.max_rel_error < tol

    def summary(self):
        lines = [
            f"{name}: max rel err {err:.3e}" for name, err in self.per_param.items()
        ]
        lines.append(f"worst: {self.worst_param} ({self.max_rel_error:.3e})")
        return "\n".join(lines)


def _rel_error(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(f, grad_fn, params, eps=1e-5):
    """Compare analytic gradients against central finite differences.

    f(params) must return a finite scalar; grad_fn(params) must return a dict
    mapping each parameter name to an array of the parameter's shape. Every
    element of every parameter is probed with a symmetric step of eps.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise InputError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    analytic = grad_fn(params)
    per_param = {}
    worst = ("", 0.0)
    for name, value in params.items():
        if name not in analytic:
            raise InputError(f"grad_fn returned no gradient for parameter {name!r}")
        grad = np.asarray(analytic[name], dtype=np.float64)
        if grad.shape != np.shape(value):
            raise InputError(
                f"gradient for {name!r} has shape {grad.shape}, "
                f"parameter has shape {np.shape(value)}"
            )
        work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        target = work[name]
        worst_here = 0.0
        for idx in np.ndindex(target.shape):
            original = target[idx]
            target[idx] = original + eps
            f_plus = float(f(work))
            target[idx] = original - eps
            f_minus = float(f(work))
            target[idx] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise GradientCheckError(
                    name, f"objective non-finite while perturbing {name}[{idx}]"
                )
            numeric = (f_plus - f_minus) / (2.0 * eps)
            worst_here = max(worst_here, _rel_error(float(grad[idx]), numeric))
        per_param[name] = worst_here
        if worst_here >= worst[1]:
            worst = (name, worst_here)
    return GradientCheckReport(
        max_rel_error=worst[1], worst_param=worst[0], eps=eps, per_param=per_param
    )
