"""Encoder-decoder trajectory transformer with location-sensitive attention.

A bidirectional LSTM encodes the source-rate trajectory; an autoregressive
two-layer LSTM decoder emits the target-rate trajectory frame by frame. Each
decoder step feeds the previous output frame through a small fully-connected
Pre-Net, concatenated with the previous attention context. Attention scores
combine the decoder state, each encoder state, and convolutional features of
the previous alignment, so alignments advance monotonically without any
pre-alignment of the two rates. A sigmoid stop head decides when generation
is complete at inference time.

All forward paths run on autodiff Tensors; wrapping parameters in a tape
context makes every operation differentiable for training and gradient
verification.
"""

import json
from dataclasses import asdict, dataclass
from types import SimpleNamespace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from . import autodiff as ad
from .errors import DataError, InputError, NumericalError
from .signal import Trajectory
from .validation import check_odd, check_probability, check_positive

GO_FRAME = 0.0  # trajectories are zero-mean, so zero is the rest posture


@dataclass(eq=False)
class ModelConfig:
    channels: int
    enc_hidden: int = 32
    dec_hidden: int = 64
    prenet_units: int = 32
    attn_dim: int = 32
    location_filters: int = 8
    location_kernel_width: int = 15
    stop_threshold: float = 0.5
    max_steps_factor: float = 1.2

    def __post_init__(self):
        for name in (
            "channels", "enc_hidden", "dec_hidden", "prenet_units",
            "attn_dim", "location_filters", "location_kernel_width",
        ):
            check_positive(getattr(self, name), name)
        check_odd(self.location_kernel_width, "location_kernel_width")
        check_probability(self.stop_threshold, "stop_threshold")
        check_positive(self.max_steps_factor, "max_steps_factor")

    @classmethod
    def full_scale(cls, channels=18, **overrides):
        """Production-size configuration (desk defaults are much smaller)."""
        kwargs = dict(
            channels=channels,
            enc_hidden=512,
            dec_hidden=1024,
            prenet_units=256,
            attn_dim=128,
            location_filters=32,
            location_kernel_width=31,
        )
        kwargs.update(overrides)
        return cls(**kwargs)


def _uniform(rng, fan_in, shape):
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, shape)


def _lstm_param_group(rng, d_in, hidden):
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget-gate bias keeps early memory alive
    return {
        "wx": _uniform(rng, d_in, (4 * hidden, d_in)),
        "wh": _uniform(rng, hidden, (4 * hidden, hidden)),
        "b": b,
    }


def init_params(config, seed=0):
    """Fresh parameter dictionary; shapes are derived from the config."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    c = config.channels
    h = config.enc_hidden
    d = config.dec_hidden
    p = config.prenet_units
    a = config.attn_dim
    f = config.location_filters
    k = config.location_kernel_width
    enc_out = 2 * h
    dec_in = p + enc_out
    z_dim = d + enc_out

    params = {}
    for direction in ("fwd", "bwd"):
        for name, value in _lstm_param_group(rng, c, h).items():
            params[f"enc.{direction}.{name}"] = value
    params["attn.query_w"] = _uniform(rng, d, (a, d))
    params["attn.memory_w"] = _uniform(rng, enc_out, (a, enc_out))
    params["attn.location_w"] = _uniform(rng, f, (a, f))
    params["attn.kernel"] = _uniform(rng, k, (f, k))
    params["attn.score_w"] = _uniform(rng, a, (a,))
    params["attn.b"] = np.zeros(a)
    params["prenet.w1"] = _uniform(rng, c, (p, c))
    # nonzero bias keeps the rectifier off its kink for the zero go-frame
    params["prenet.b1"] = _uniform(rng, c, (p,))
    params["prenet.w2"] = _uniform(rng, p, (p, p))
    params["prenet.b2"] = _uniform(rng, p, (p,))
    for layer, d_in in (("l1", dec_in), ("l2", d)):
        for name, value in _lstm_param_group(rng, d_in, d).items():
            params[f"dec.{layer}.{name}"] = value
    params["out.frame_w"] = _uniform(rng, z_dim, (c, z_dim))
    params["out.frame_b"] = np.zeros(c)
    params["out.stop_w"] = _uniform(rng, z_dim, (z_dim,))
    # start pessimistic about stopping so fresh models decode full sequences
    params["out.stop_b"] = np.array(-2.0)
    return params


def as_tensors(params):
    return {name: value if isinstance(value, ad.Tensor) else ad.Tensor(value)
            for name, value in params.items()}


def param_values(params):
    return {name: t.value for name, t in params.items()}


def _frames_of(trajectory_or_array):
    if isinstance(trajectory_or_array, Trajectory):
        return trajectory_or_array.frames
    return np.asarray(trajectory_or_array, dtype=np.float64)


def _check_channels(frames, config):
    if frames.ndim != 2 or frames.shape[1] != config.channels:
        raise InputError(
            f"input has shape {frames.shape}, model expects (*, {config.channels})"
        )


def _lstm_cell(x, h, c, wx, wh, b, hidden):
    pre = ad.add(ad.add(ad.matmul(wx, x), ad.matmul(wh, h)), b)
    gi = ad.sigmoid(ad.slice1d(pre, 0, hidden))
    gf = ad.sigmoid(ad.slice1d(pre, hidden, 2 * hidden))
    gg = ad.tanh(ad.slice1d(pre, 2 * hidden, 3 * hidden))
    go = ad.sigmoid(ad.slice1d(pre, 3 * hidden, 4 * hidden))
    c_new = ad.add(ad.mul(gf, c), ad.mul(gi, gg))
    h_new = ad.mul(go, ad.tanh(c_new))
    return h_new, c_new


def encode_tensor(frames, params, config):
    """Bidirectional encoding of (N, C) input frames to an (N, 2H) Tensor."""
    x = frames if isinstance(frames, ad.Tensor) else ad.Tensor(frames)
    fwd = ad.lstm_sequence(
        x, params["enc.fwd.wx"], params["enc.fwd.wh"], params["enc.fwd.b"], reverse=False
    )
    bwd = ad.lstm_sequence(
        x, params["enc.bwd.wx"], params["enc.bwd.wh"], params["enc.bwd.b"], reverse=True
    )
    return ad.concat_cols(fwd, bwd)


def encode(trajectory, params, config):
    """Public encoder surface: returns the (N, 2H) encoder-state matrix."""
    frames = _frames_of(trajectory)
    _check_channels(frames, config)
    return encode_tensor(frames, as_tensors(params), config).value


def attend(d, alpha_prev, memory, memory_proj, params):
    """One attention read: previous alignments -> new alignments and context.

    memory is the (N, 2H) encoder-state Tensor; memory_proj its projection
    into attention space, precomputed once per utterance.
    """
    loc_features = ad.conv1d_same(alpha_prev, params["attn.kernel"])
    loc_term = ad.matmul(loc_features, ad.transpose(params["attn.location_w"]))
    query_term = ad.add(ad.matmul(params["attn.query_w"], d), params["attn.b"])
    hidden = ad.tanh(ad.add(ad.add(memory_proj, loc_term), query_term))
    scores = ad.matmul(hidden, params["attn.score_w"])
    alpha = ad.softmax1d(scores)
    context = ad.matmul(alpha, memory)
    return alpha, context


def prenet_tensor(y, params):
    h1 = ad.relu(ad.add(ad.matmul(params["prenet.w1"], y), params["prenet.b1"]))
    return ad.relu(ad.add(ad.matmul(params["prenet.w2"], h1), params["prenet.b2"]))


def prenet(y_prev, params):
    """Two rectified fully-connected layers applied to the previous frame."""
    y = np.asarray(y_prev, dtype=np.float64)
    return prenet_tensor(ad.Tensor(y), as_tensors(params)).value


def prenet_batch(y_matrix, params, dropout_masks=None):
    """Pre-Net over a matrix of frames; optional per-layer dropout masks.

    Masks are inverted-dropout multipliers (0 or 1/keep) drawn by the
    caller; they are constants on the tape, so gradients stay exact for
    the masked objective. Inference never applies masks.
    """
    h1 = ad.relu(ad.add(ad.matmul(y_matrix, ad.transpose(params["prenet.w1"])),
                        params["prenet.b1"]))
    if dropout_masks is not None:
        h1 = ad.mul(h1, ad.Tensor(dropout_masks[0]))
    h2 = ad.relu(ad.add(ad.matmul(h1, ad.transpose(params["prenet.w2"])),
                        params["prenet.b2"]))
    if dropout_masks is not None:
        h2 = ad.mul(h2, ad.Tensor(dropout_masks[1]))
    return h2


def prenet_dropout_masks(rng, n_rows, units, p):
    """Two inverted-dropout masks for the Pre-Net layers."""
    keep = 1.0 - p
    return (
        (rng.random((n_rows, units)) >= p) / keep,
        (rng.random((n_rows, units)) >= p) / keep,
    )


@dataclass(eq=False)
class DecoderState:
    h1: ad.Tensor
    c1: ad.Tensor
    h2: ad.Tensor
    c2: ad.Tensor
    alpha: ad.Tensor      # previous alignment weights over encoder steps
    context: ad.Tensor    # previous attention context g
    y_prev: ad.Tensor     # previous output (or teacher) frame


@dataclass(eq=False)
class StepOutput:
    frame: ad.Tensor
    stop_logit: ad.Tensor
    alpha: ad.Tensor
    context: ad.Tensor

    @property
    def stop_prob(self):
        return float(1.0 / (1.0 + np.exp(-self.stop_logit.value)))


def initial_decoder_state(config, n_memory, y0=None):
    d = config.dec_hidden
    alpha0 = np.zeros(n_memory)
    alpha0[0] = 1.0  # alignment starts at the first encoder frame
    return DecoderState(
        h1=ad.Tensor(np.zeros(d)), c1=ad.Tensor(np.zeros(d)),
        h2=ad.Tensor(np.zeros(d)), c2=ad.Tensor(np.zeros(d)),
        alpha=ad.Tensor(alpha0),
        context=ad.Tensor(np.zeros(2 * config.enc_hidden)),
        y_prev=ad.Tensor(np.full(config.channels, GO_FRAME) if y0 is None else y0),
    )


def decoder_step(state, memory, memory_proj, params, config, prenet_out=None,
                 teacher_frame=None, step_index=0):
    """Advance the decoder one frame.

    prenet_out, when given, is the precomputed Pre-Net output for this step
    (teacher-forced batching); otherwise the Pre-Net runs on state.y_prev.
    The next state's y_prev is teacher_frame when provided, else the newly
    predicted frame.
    """
    if prenet_out is None:
        prenet_out = prenet_tensor(state.y_prev, params)
    x = ad.concat1d((prenet_out, state.context))
    h1, c1 = _lstm_cell(x, state.h1, state.c1, params["dec.l1.wx"],
                        params["dec.l1.wh"], params["dec.l1.b"], config.dec_hidden)
    h2, c2 = _lstm_cell(h1, state.h2, state.c2, params["dec.l2.wx"],
                        params["dec.l2.wh"], params["dec.l2.b"], config.dec_hidden)
    alpha, context = attend(h2, state.alpha, memory, memory_proj, params)
    z = ad.concat1d((h2, context))
    frame = ad.add(ad.matmul(params["out.frame_w"], z), params["out.frame_b"])
    stop_logit = ad.add(ad.matmul(params["out.stop_w"], z), params["out.stop_b"])
    if not (np.all(np.isfinite(frame.value)) and np.isfinite(stop_logit.value)):
        raise NumericalError(f"non-finite decoder output at step {step_index}")
    out = StepOutput(frame=frame, stop_logit=stop_logit, alpha=alpha, context=context)
    y_next = ad.Tensor(teacher_frame) if teacher_frame is not None else frame
    new_state = DecoderState(h1=h1, c1=c1, h2=h2, c2=c2, alpha=alpha,
                             context=context, y_prev=y_next)
    return out, new_state


def memory_projection(memory, params):
    return ad.matmul(memory, ad.transpose(params["attn.memory_w"]))


_DECODER_PARAM_NAMES = (
    "dec.l1.wx", "dec.l1.wh", "dec.l1.b", "dec.l2.wx", "dec.l2.wh", "dec.l2.b",
    "attn.query_w", "attn.memory_w", "attn.location_w", "attn.kernel",
    "attn.score_w", "attn.b", "out.frame_w", "out.frame_b", "out.stop_w",
    "out.stop_b",
)


def _decoder_arrays(tensors, memory_value):
    """Raw-array bundle of decoder weights plus per-utterance precomputations."""
    val = {name: tensors[name].value if isinstance(tensors[name], ad.Tensor)
           else np.asarray(tensors[name], dtype=np.float64)
           for name in _DECODER_PARAM_NAMES}
    w = SimpleNamespace(
        wx1=val["dec.l1.wx"], wh1=val["dec.l1.wh"], b1=val["dec.l1.b"],
        wx2=val["dec.l2.wx"], wh2=val["dec.l2.wh"], b2=val["dec.l2.b"],
        wq=val["attn.query_w"], wmem=val["attn.memory_w"],
        wloc=val["attn.location_w"], kernel=val["attn.kernel"],
        score_w=val["attn.score_w"], attn_b=val["attn.b"],
        frame_w=val["out.frame_w"], frame_b=val["out.frame_b"],
        stop_w=val["out.stop_w"], stop_b=val["out.stop_b"],
    )
    w.memory = memory_value
    w.ev = memory_value @ w.wmem.T                       # (N, A)
    w.width = w.kernel.shape[1]
    w.half = w.width // 2
    w.kernel_t = np.ascontiguousarray(w.kernel.T)        # (K, F)
    w.wloc_t = np.ascontiguousarray(w.wloc.T)            # (F, A)
    # correlating with the flipped kernel realizes the transposed convolution;
    # flattened filter-major to pair with (N, F*K) windows of the upstream grad
    w.kernel_flip_flat = np.ascontiguousarray(w.kernel[:, ::-1]).ravel()
    return w


def _np_decoder_step(w, d, state, p_t, cache=None, t=0):
    """One decoder step on raw arrays; returns (state, y, stop_logit).

    When cache is given, every intermediate the backward pass needs is
    written into row t of the cache arrays.
    """
    h1, c1, h2, c2, alpha, ctx = state
    x = np.concatenate([p_t, ctx])
    pre1 = w.wx1 @ x + w.wh1 @ h1 + w.b1
    i1 = expit(pre1[:d]); f1 = expit(pre1[d:2 * d])
    g1 = np.tanh(pre1[2 * d:3 * d]); o1 = expit(pre1[3 * d:])
    c1n = f1 * c1 + i1 * g1
    tc1 = np.tanh(c1n)
    h1n = o1 * tc1
    pre2 = w.wx2 @ h1n + w.wh2 @ h2 + w.b2
    i2 = expit(pre2[:d]); f2 = expit(pre2[d:2 * d])
    g2 = np.tanh(pre2[2 * d:3 * d]); o2 = expit(pre2[3 * d:])
    c2n = f2 * c2 + i2 * g2
    tc2 = np.tanh(c2n)
    h2n = o2 * tc2

    n = alpha.shape[0]
    padded = np.zeros(n + 2 * w.half)
    padded[w.half:w.half + n] = alpha
    floc = sliding_window_view(padded, w.width) @ w.kernel_t        # (N, F)
    s_mat = np.tanh(w.ev + floc @ w.wloc_t + (w.wq @ h2n + w.attn_b))
    scores = s_mat @ w.score_w
    e = np.exp(scores - scores.max())
    alpha_n = e / e.sum()
    ctx_n = alpha_n @ w.memory

    z = np.concatenate([h2n, ctx_n])
    y = w.frame_w @ z + w.frame_b
    stop_logit = float(w.stop_w @ z + w.stop_b)
    if cache is not None:
        cache.x[t] = x
        cache.i1[t] = i1; cache.f1[t] = f1; cache.g1[t] = g1; cache.o1[t] = o1
        cache.c1_prev[t] = c1; cache.tc1[t] = tc1
        cache.h1_prev[t] = h1; cache.h1n[t] = h1n
        cache.i2[t] = i2; cache.f2[t] = f2; cache.g2[t] = g2; cache.o2[t] = o2
        cache.c2_prev[t] = c2; cache.tc2[t] = tc2
        cache.h2_prev[t] = h2; cache.h2n[t] = h2n
        cache.alpha_prev[t] = alpha; cache.floc[t] = floc; cache.s_mat[t] = s_mat
        cache.alpha[t] = alpha_n; cache.ctx[t] = ctx_n
    return (h1n, c1n, h2n, c2n, alpha_n, ctx_n), y, stop_logit


def decoder_sequence(prenet_rows, memory, tensors, config, teacher_frames):
    """Whole teacher-forced decoder loop as a single taped node.

    Returns a combined Tensor (M, C+1+N) holding [frames | stop logits |
    alignment weights]; exposing the alignments as output columns lets loss
    terms on the attention matrix backpropagate through the recurrence. The
    backward pass replays the loop in reverse with cached gates, batching
    all weight-gradient matmuls.
    """
    d = config.dec_hidden
    c_out = config.channels
    p_dim = config.prenet_units
    y = teacher_frames
    m = y.shape[0]
    w = _decoder_arrays(tensors, memory.value)
    n = w.memory.shape[0]
    n_filt = w.kernel.shape[0]
    a_dim = w.wq.shape[0]
    h2_dim = w.memory.shape[1]

    cache = SimpleNamespace(
        x=np.empty((m, p_dim + h2_dim)),
        i1=np.empty((m, d)), f1=np.empty((m, d)), g1=np.empty((m, d)),
        o1=np.empty((m, d)), c1_prev=np.empty((m, d)), tc1=np.empty((m, d)),
        h1_prev=np.empty((m, d)), h1n=np.empty((m, d)),
        i2=np.empty((m, d)), f2=np.empty((m, d)), g2=np.empty((m, d)),
        o2=np.empty((m, d)), c2_prev=np.empty((m, d)), tc2=np.empty((m, d)),
        h2_prev=np.empty((m, d)), h2n=np.empty((m, d)),
        alpha_prev=np.empty((m, n)), alpha=np.empty((m, n)),
        floc=np.empty((m, n, n_filt)), s_mat=np.empty((m, n, a_dim)),
        ctx=np.empty((m, h2_dim)),
    )
    combined = np.empty((m, c_out + 1))

    state = _initial_numpy_state(config, n)
    prenet_vals = prenet_rows.value
    for t in range(m):
        state, y_t, stop_t = _np_decoder_step(w, d, state, prenet_vals[t], cache, t)
        if not (np.all(np.isfinite(y_t)) and np.isfinite(stop_t)):
            raise NumericalError(f"non-finite decoder output at step {t}")
        combined[t, :c_out] = y_t
        combined[t, c_out] = stop_t

    out = ad.Tensor(combined)
    if ad.recording():
        def bw(g, prenet_rows=prenet_rows, memory=memory, tensors=tensors):
            gpred = g[:, :c_out]
            gstop = g[:, c_out]
            # output heads, batched
            z_all = np.concatenate([cache.h2n, cache.ctx], axis=1)
            dz = gpred @ w.frame_w + gstop[:, None] * w.stop_w[None, :]
            dframe_w = gpred.T @ z_all
            dframe_b = gpred.sum(axis=0)
            dstop_w = gstop @ z_all
            dstop_b = np.array(gstop.sum())

            dpre1_all = np.empty((m, 4 * d))
            dpre2_all = np.empty((m, 4 * d))
            dq_all = np.empty((m, a_dim))
            dsc_all = np.empty((m, n))
            dpres_all = np.empty((m, n, a_dim))
            dfloc_all = np.empty((m, n, n_filt))
            dctx_out_all = np.empty((m, h2_dim))
            dprenet = np.empty((m, p_dim))

            wx1_t = w.wx1.T; wh1_t = w.wh1.T
            wx2_t = w.wx2.T; wh2_t = w.wh2.T
            wq_t = w.wq.T
            memory_v = w.memory; score_w = w.score_w; wloc = w.wloc
            kflip = w.kernel_flip_flat
            width = w.width; half = w.half
            c_i1 = cache.i1; c_f1 = cache.f1; c_g1 = cache.g1; c_o1 = cache.o1
            c_c1p = cache.c1_prev; c_tc1 = cache.tc1
            c_i2 = cache.i2; c_f2 = cache.f2; c_g2 = cache.g2; c_o2 = cache.o2
            c_c2p = cache.c2_prev; c_tc2 = cache.tc2
            c_alpha = cache.alpha; c_smat = cache.s_mat
            gpad = np.zeros((n + 2 * half, n_filt))

            carry_h1 = np.zeros(d); carry_c1 = np.zeros(d)
            carry_h2 = np.zeros(d); carry_c2 = np.zeros(d)
            carry_alpha = np.zeros(n)
            carry_ctx = np.zeros(h2_dim)
            for t in range(m - 1, -1, -1):
                dh2n = dz[t, :d] + carry_h2
                dctx_n = dz[t, d:] + carry_ctx
                dctx_out_all[t] = dctx_n
                # attention
                dalpha_n = memory_v @ dctx_n + carry_alpha
                alpha_n = c_alpha[t]
                dsc = alpha_n * (dalpha_n - np.dot(dalpha_n, alpha_n))
                dsc_all[t] = dsc
                s_mat = c_smat[t]
                dpres = (dsc[:, None] * score_w[None, :]) * (1.0 - s_mat * s_mat)
                dpres_all[t] = dpres
                dq = dpres.sum(axis=0)
                dq_all[t] = dq
                dh2n = dh2n + wq_t @ dq
                dfloc = dpres @ wloc
                dfloc_all[t] = dfloc
                # transposed convolution via flat windows of the padded grad
                gpad[half:half + n] = dfloc
                carry_alpha = (
                    sliding_window_view(gpad, width, axis=0).reshape(n, -1) @ kflip
                )
                # layer-2 cell
                tc2 = c_tc2[t]; o2 = c_o2[t]; i2 = c_i2[t]; f2 = c_f2[t]; g2 = c_g2[t]
                do2 = dh2n * tc2
                dc2 = carry_c2 + dh2n * o2 * (1.0 - tc2 * tc2)
                dpre2 = dpre2_all[t]
                dpre2[:d] = dc2 * g2 * i2 * (1.0 - i2)
                dpre2[d:2 * d] = dc2 * c_c2p[t] * f2 * (1.0 - f2)
                dpre2[2 * d:3 * d] = dc2 * i2 * (1.0 - g2 * g2)
                dpre2[3 * d:] = do2 * o2 * (1.0 - o2)
                dh1n = wx2_t @ dpre2 + carry_h1
                carry_h2 = wh2_t @ dpre2
                carry_c2 = dc2 * f2
                # layer-1 cell
                tc1 = c_tc1[t]; o1 = c_o1[t]; i1 = c_i1[t]; f1 = c_f1[t]; g1 = c_g1[t]
                do1 = dh1n * tc1
                dc1 = carry_c1 + dh1n * o1 * (1.0 - tc1 * tc1)
                dpre1 = dpre1_all[t]
                dpre1[:d] = dc1 * g1 * i1 * (1.0 - i1)
                dpre1[d:2 * d] = dc1 * c_c1p[t] * f1 * (1.0 - f1)
                dpre1[2 * d:3 * d] = dc1 * i1 * (1.0 - g1 * g1)
                dpre1[3 * d:] = do1 * o1 * (1.0 - o1)
                dx = wx1_t @ dpre1
                carry_h1 = wh1_t @ dpre1
                carry_c1 = dc1 * f1
                dprenet[t] = dx[:p_dim]
                carry_ctx = dx[p_dim:]

            dev = dpres_all.sum(axis=0)                     # (N, A)
            padded = np.zeros((m, n + 2 * w.half))
            padded[:, w.half:w.half + n] = cache.alpha_prev
            windows = sliding_window_view(padded, w.width, axis=1)  # (M, N, K)
            # flattened (M*N, .) views let BLAS handle the big contractions
            dpres_flat = dpres_all.reshape(m * n, a_dim)
            grads = {
                "dec.l1.wx": dpre1_all.T @ cache.x,
                "dec.l1.wh": dpre1_all.T @ cache.h1_prev,
                "dec.l1.b": dpre1_all.sum(axis=0),
                "dec.l2.wx": dpre2_all.T @ cache.h1n,
                "dec.l2.wh": dpre2_all.T @ cache.h2_prev,
                "dec.l2.b": dpre2_all.sum(axis=0),
                "attn.query_w": dq_all.T @ cache.h2n,
                "attn.b": dq_all.sum(axis=0),
                "attn.memory_w": dev.T @ w.memory,
                "attn.location_w": dpres_flat.T @ cache.floc.reshape(m * n, n_filt),
                "attn.kernel": np.einsum("mnk,mnf->fk", windows, dfloc_all),
                "attn.score_w": dsc_all.reshape(m * n) @ cache.s_mat.reshape(m * n, a_dim),
                "out.frame_w": dframe_w, "out.frame_b": dframe_b,
                "out.stop_w": dstop_w, "out.stop_b": dstop_b,
            }
            for name, grad in grads.items():
                ad._accum(tensors[name], grad)
            ad._accum(memory, dev @ w.wmem + cache.alpha.T @ dctx_out_all)
            ad._accum(prenet_rows, dprenet)
        ad._push(out, bw)
    return out, cache.alpha.copy()


def _initial_numpy_state(config, n_memory):
    d = config.dec_hidden
    alpha0 = np.zeros(n_memory)
    alpha0[0] = 1.0
    return (np.zeros(d), np.zeros(d), np.zeros(d), np.zeros(d),
            alpha0, np.zeros(2 * config.enc_hidden))


def forward_teacher_forced(input_frames, target_frames, params, config,
                           prenet_dropout=0.0, dropout_rng=None):
    """Teacher-forced pass; returns (pred (M,C), stop_logits (M,), alphas (M,N)).

    pred and stop_logits are Tensors (differentiable); alphas is a plain
    array for inspection. Step t consumes target frame t-1, step 0 consumes
    the zero go-frame. prenet_dropout > 0 (training only) draws per-step
    inverted-dropout masks for the Pre-Net from dropout_rng.
    """
    x = _frames_of(input_frames)
    y = _frames_of(target_frames)
    _check_channels(x, config)
    _check_channels(y, config)
    tensors = params if isinstance(next(iter(params.values())), ad.Tensor) else as_tensors(params)

    memory = encode_tensor(x, tensors, config)
    shifted = np.vstack([np.full((1, config.channels), GO_FRAME), y[:-1]])
    masks = None
    if prenet_dropout > 0.0:
        if dropout_rng is None:
            raise InputError("prenet_dropout > 0 requires a dropout_rng")
        masks = prenet_dropout_masks(
            dropout_rng, y.shape[0], config.prenet_units, prenet_dropout
        )
    prenet_rows = prenet_batch(ad.Tensor(shifted), tensors, dropout_masks=masks)
    combined, alphas = decoder_sequence(prenet_rows, memory, tensors, config, y)
    pred = ad.slice_cols(combined, 0, config.channels)
    stop_logits = ad.column(combined, config.channels)
    return pred, stop_logits, alphas


@dataclass(eq=False)
class InferResult:
    trajectory: Trajectory
    alphas: np.ndarray      # (M, N) alignment history
    stop_probs: np.ndarray  # (M + 1,) includes the probability that ended decoding
    truncated: bool


def infer(input_trajectory, params, config, max_out_frames):
    """Free-running decoding with stop-token termination.

    Decoding ends at the first step whose stop probability exceeds the
    configured threshold (that frame is excluded) or after max_out_frames
    frames (flagged as truncated).
    """
    if max_out_frames < 1:
        raise InputError(f"max_out_frames must be >= 1, got {max_out_frames}")
    frames = _frames_of(input_trajectory)
    _check_channels(frames, config)
    tensors = as_tensors(params)
    memory = encode_tensor(frames, tensors, config)
    w = _decoder_arrays(tensors, memory.value)
    d = config.dec_hidden
    state = _initial_numpy_state(config, frames.shape[0])
    prenet_w1 = tensors["prenet.w1"].value
    prenet_b1 = tensors["prenet.b1"].value
    prenet_w2 = tensors["prenet.w2"].value
    prenet_b2 = tensors["prenet.b2"].value

    y_prev = np.full(config.channels, GO_FRAME)
    out_frames = []
    alphas = []
    stop_probs = []
    truncated = False
    step = 0
    while True:
        p_t = np.maximum(
            prenet_w2 @ np.maximum(prenet_w1 @ y_prev + prenet_b1, 0.0) + prenet_b2, 0.0
        )
        state, y_t, stop_logit = _np_decoder_step(w, d, state, p_t)
        if not (np.all(np.isfinite(y_t)) and np.isfinite(stop_logit)):
            raise NumericalError(f"non-finite decoder output at step {step}")
        stop_prob = float(expit(stop_logit))
        stop_probs.append(stop_prob)
        if stop_prob > config.stop_threshold:
            break
        out_frames.append(y_t)
        alphas.append(state[4])
        y_prev = y_t
        step += 1
        if step >= max_out_frames:
            truncated = True
            break

    if isinstance(input_trajectory, Trajectory):
        rate = input_trajectory.sample_rate_hz
        names = input_trajectory.channel_names
    else:
        rate = 1.0
        names = tuple(f"ch{i:02d}" for i in range(config.channels))
    result_frames = (
        np.array(out_frames) if out_frames else np.zeros((0, config.channels))
    )
    return InferResult(
        trajectory=_make_trajectory(result_frames, rate, names),
        alphas=np.array(alphas) if alphas else np.zeros((0, frames.shape[0])),
        stop_probs=np.array(stop_probs),
        truncated=truncated,
    )


def _make_trajectory(frames, rate, names):
    if frames.shape[0] == 0:
        # degenerate but legal result of an immediate stop; keep the shape
        # information without tripping Trajectory's T >= 1 invariant
        return EmptyTrajectory(frames=frames, sample_rate_hz=rate, channel_names=tuple(names))
    return Trajectory(frames, rate, names)


@dataclass(eq=False)
class EmptyTrajectory:
    """Zero-length stand-in returned when the stop head fires immediately."""

    frames: np.ndarray
    sample_rate_hz: float
    channel_names: tuple

    @property
    def n_frames(self):
        return 0

    @property
    def n_channels(self):
        return self.frames.shape[1]


def max_decoder_steps(train_target_lengths, factor):
    """Inference step bound: factor times the longest training target."""
    if not len(train_target_lengths):
        raise InputError("no training target lengths supplied")
    return int(np.ceil(factor * max(train_target_lengths)))


# ---------------------------------------------------------------------------
# checkpoint container

CHECKPOINT_MAGIC = b"ASTNET-CKPT-v1\n"


def save_checkpoint(path, config, params, extras=None):
    """Self-describing binary checkpoint; identical state gives identical bytes.

    The header is canonical JSON (config fields, tensor names and shapes,
    optional scalar extras such as the inference step bound), followed by
    raw little-endian float64 buffers in header order.
    """
    values = {k: (v.value if isinstance(v, ad.Tensor) else np.asarray(v, dtype=np.float64))
              for k, v in params.items()}
    entries = []
    offset = 0
    for name in values:
        arr = np.ascontiguousarray(values[name], dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    header = json.dumps(
        {"config": asdict(config), "extras": extras or {}, "tensors": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(f"{len(header)}\n".encode())
        fh.write(header)
        for name in values:
            fh.write(np.ascontiguousarray(values[name], dtype=np.float64)
                     .astype("<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint back; returns (config, params, extras)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path!r} is not a checkpoint (bad magic)")
        header_len = int(fh.readline().strip())
        header = json.loads(fh.read(header_len).decode())
        config = ModelConfig(**header["config"])
        params = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").astype(np.float64)
            params[entry["name"]] = data.reshape(shape)
    return config, params, header.get("extras", {})
