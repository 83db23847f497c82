"""From-scratch single-layer LSTM regressor trained by BPTT + Adam.

The recurrence uses the x_t . W (row-vector times matrix) convention:

    i_t = sigmoid(x_t.W_ix + h_{t-1}.W_ih + b_i)
    f_t = sigmoid(x_t.W_fx + h_{t-1}.W_fh + b_f)
    g_t = tanh   (x_t.W_cx + h_{t-1}.W_ch + b_c)      (candidate cell)
    o_t = sigmoid(x_t.W_ox + h_{t-1}.W_oh + b_o)
    C_t = f_t * C_{t-1} + i_t * g_t
    h_t = o_t * tanh(C_t)

with a linear scalar head pred = h_T . w_y + b_y and per-sample loss
(pred - target)^2.  Everything runs in float64; the unroll and the
reverse pass are numba kernels with a numpy fallback (see ``_accel``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._accel import njit
from .dataset import WindowedDataset

__all__ = [
    "LstmParams",
    "LstmState",
    "GateCache",
    "AdamState",
    "TrainRecord",
    "LstmConfig",
    "init_params",
    "cell_forward",
    "sequence_forward",
    "bptt_gradients",
    "adam_step",
    "train",
    "epoch_grid",
    "predict_batch",
]

_WEIGHT_FIELDS = (
    "w_ix", "w_fx", "w_cx", "w_ox",
    "w_ih", "w_fh", "w_ch", "w_oh",
    "b_i", "b_f", "b_c", "b_o",
    "w_y",
)


@dataclass
class LstmParams:
    """All gate weights plus the scalar output head.

    Also serves as the container for gradients, which share the layout.
    """

    w_ix: np.ndarray  # (D, H)
    w_fx: np.ndarray
    w_cx: np.ndarray
    w_ox: np.ndarray
    w_ih: np.ndarray  # (H, H)
    w_fh: np.ndarray
    w_ch: np.ndarray
    w_oh: np.ndarray
    b_i: np.ndarray  # (H,)
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray
    w_y: np.ndarray  # (H,)
    b_y: float

    def __post_init__(self):
        d, h = self.w_ix.shape
        for name in ("w_fx", "w_cx", "w_ox"):
            if getattr(self, name).shape != (d, h):
                raise ValueError(f"{name} must have shape {(d, h)}")
        for name in ("w_ih", "w_fh", "w_ch", "w_oh"):
            if getattr(self, name).shape != (h, h):
                raise ValueError(f"{name} must have shape {(h, h)}")
        for name in ("b_i", "b_f", "b_c", "b_o", "w_y"):
            if getattr(self, name).shape != (h,):
                raise ValueError(f"{name} must have shape {(h,)}")

    @property
    def input_dim(self) -> int:
        return self.w_ix.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_ix.shape[1]

    @property
    def n_params(self) -> int:
        return sum(getattr(self, name).size for name in _WEIGHT_FIELDS) + 1

    def to_vector(self) -> np.ndarray:
        """Flatten all parameters into one float64 vector (fixed field order)."""
        parts = [getattr(self, name).ravel() for name in _WEIGHT_FIELDS]
        parts.append(np.array([self.b_y]))
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec: np.ndarray, input_dim: int, hidden_size: int) -> "LstmParams":
        d, h = input_dim, hidden_size
        shapes = [(d, h)] * 4 + [(h, h)] * 4 + [(h,)] * 4 + [(h,)]
        fields = {}
        pos = 0
        for name, shape in zip(_WEIGHT_FIELDS, shapes):
            size = int(np.prod(shape))
            fields[name] = vec[pos : pos + size].reshape(shape).copy()
            pos += size
        b_y = float(vec[pos])
        pos += 1
        if pos != vec.size:
            raise ValueError(f"vector length {vec.size} does not match D={d}, H={h}")
        return cls(**fields, b_y=b_y)

    @classmethod
    def zeros(cls, input_dim: int, hidden_size: int) -> "LstmParams":
        d, h = input_dim, hidden_size
        return cls(
            w_ix=np.zeros((d, h)), w_fx=np.zeros((d, h)),
            w_cx=np.zeros((d, h)), w_ox=np.zeros((d, h)),
            w_ih=np.zeros((h, h)), w_fh=np.zeros((h, h)),
            w_ch=np.zeros((h, h)), w_oh=np.zeros((h, h)),
            b_i=np.zeros(h), b_f=np.zeros(h), b_c=np.zeros(h), b_o=np.zeros(h),
            w_y=np.zeros(h), b_y=0.0,
        )


@dataclass
class LstmState:
    """Hidden and cell state vectors, both length H."""

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> "LstmState":
        return cls(h=np.zeros(hidden_size), c=np.zeros(hidden_size))


@dataclass
class GateCache:
    """Per-step activations needed by the reverse pass."""

    input_gate: np.ndarray
    forget_gate: np.ndarray
    candidate: np.ndarray
    output_gate: np.ndarray
    cell: np.ndarray


@dataclass
class AdamState:
    """Adam moment accumulators over the flattened parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), t=0,
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


@dataclass(frozen=True)
class TrainRecord:
    epoch: int
    train_mse: float
    test_mse: float


@dataclass(frozen=True)
class LstmConfig:
    """Trainer hyperparameters (architecture and optimizer constants)."""

    hidden_size: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    forget_bias: float = 1.0


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def init_params(
    input_dim: int,
    hidden_size: int,
    rng: np.random.Generator,
    forget_bias: float = 1.0,
) -> LstmParams:
    """Uniform(-k, k) init with k = 1/sqrt(H); forget bias starts at 1."""
    k = 1.0 / math.sqrt(hidden_size)

    def u(*shape):
        return rng.uniform(-k, k, size=shape)

    d, h = input_dim, hidden_size
    return LstmParams(
        w_ix=u(d, h), w_fx=u(d, h), w_cx=u(d, h), w_ox=u(d, h),
        w_ih=u(h, h), w_fh=u(h, h), w_ch=u(h, h), w_oh=u(h, h),
        b_i=np.zeros(h), b_f=np.full(h, float(forget_bias)),
        b_c=np.zeros(h), b_o=np.zeros(h),
        w_y=u(h), b_y=0.0,
    )


def cell_forward(
    x_t: np.ndarray, state: LstmState, params: LstmParams
) -> tuple[LstmState, GateCache]:
    """One recurrence step; the cache holds i, f, candidate, o and C_t."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (params.input_dim,):
        raise ValueError(
            f"x_t shape {x_t.shape} does not match input_dim {params.input_dim}"
        )
    if state.h.shape != (params.hidden_size,) or state.c.shape != (params.hidden_size,):
        raise ValueError("state shapes do not match hidden_size")

    i_t = _sigmoid(x_t @ params.w_ix + state.h @ params.w_ih + params.b_i)
    f_t = _sigmoid(x_t @ params.w_fx + state.h @ params.w_fh + params.b_f)
    g_t = np.tanh(x_t @ params.w_cx + state.h @ params.w_ch + params.b_c)
    o_t = _sigmoid(x_t @ params.w_ox + state.h @ params.w_oh + params.b_o)
    c_t = f_t * state.c + i_t * g_t
    h_t = o_t * np.tanh(c_t)
    cache = GateCache(input_gate=i_t, forget_gate=f_t, candidate=g_t,
                      output_gate=o_t, cell=c_t)
    return LstmState(h=h_t, c=c_t), cache


# --- hot kernels -------------------------------------------------------
# Shared by training, prediction and the public per-sample ops.  Kept as
# free functions over raw arrays so numba can compile them; the numpy
# fallback runs the same statements.

@njit(cache=True)
def _forward_kernel(xs, w_ix, w_fx, w_cx, w_ox, w_ih, w_fh, w_ch, w_oh,
                    b_i, b_f, b_c, b_o, w_y, b_y):
    T = xs.shape[0]
    H = b_i.shape[0]
    i_a = np.empty((T, H))
    f_a = np.empty((T, H))
    g_a = np.empty((T, H))
    o_a = np.empty((T, H))
    c_a = np.empty((T, H))
    h_a = np.empty((T, H))
    h = np.zeros(H)
    c = np.zeros(H)
    for t in range(T):
        x = xs[t]
        i_t = 1.0 / (1.0 + np.exp(-(np.dot(x, w_ix) + np.dot(h, w_ih) + b_i)))
        f_t = 1.0 / (1.0 + np.exp(-(np.dot(x, w_fx) + np.dot(h, w_fh) + b_f)))
        g_t = np.tanh(np.dot(x, w_cx) + np.dot(h, w_ch) + b_c)
        o_t = 1.0 / (1.0 + np.exp(-(np.dot(x, w_ox) + np.dot(h, w_oh) + b_o)))
        c = f_t * c + i_t * g_t
        h = o_t * np.tanh(c)
        i_a[t] = i_t
        f_a[t] = f_t
        g_a[t] = g_t
        o_a[t] = o_t
        c_a[t] = c
        h_a[t] = h
    pred = np.dot(h, w_y) + b_y
    return pred, i_a, f_a, g_a, o_a, c_a, h_a


@njit(cache=True)
def _backward_kernel(xs, i_a, f_a, g_a, o_a, c_a, h_a,
                     w_ih, w_fh, w_ch, w_oh, w_y, dpred):
    T = xs.shape[0]
    D = xs.shape[1]
    H = w_y.shape[0]
    g_w_ix = np.zeros((D, H))
    g_w_fx = np.zeros((D, H))
    g_w_cx = np.zeros((D, H))
    g_w_ox = np.zeros((D, H))
    g_w_ih = np.zeros((H, H))
    g_w_fh = np.zeros((H, H))
    g_w_ch = np.zeros((H, H))
    g_w_oh = np.zeros((H, H))
    g_b_i = np.zeros(H)
    g_b_f = np.zeros(H)
    g_b_c = np.zeros(H)
    g_b_o = np.zeros(H)
    g_w_y = dpred * h_a[T - 1]
    g_b_y = dpred

    zeros_h = np.zeros(H)
    dh = dpred * w_y
    dc = np.zeros(H)
    for t in range(T - 1, -1, -1):
        i_t = i_a[t]
        f_t = f_a[t]
        g_t = g_a[t]
        o_t = o_a[t]
        tc = np.tanh(c_a[t])
        if t > 0:
            c_prev = c_a[t - 1]
            h_prev = h_a[t - 1]
        else:
            c_prev = zeros_h
            h_prev = zeros_h

        do = dh * tc
        dc = dc + dh * o_t * (1.0 - tc * tc)
        df = dc * c_prev
        di = dc * g_t
        dg = dc * i_t

        da_i = di * i_t * (1.0 - i_t)
        da_f = df * f_t * (1.0 - f_t)
        da_c = dg * (1.0 - g_t * g_t)
        da_o = do * o_t * (1.0 - o_t)

        x = xs[t]
        g_w_ix += np.outer(x, da_i)
        g_w_fx += np.outer(x, da_f)
        g_w_cx += np.outer(x, da_c)
        g_w_ox += np.outer(x, da_o)
        g_w_ih += np.outer(h_prev, da_i)
        g_w_fh += np.outer(h_prev, da_f)
        g_w_ch += np.outer(h_prev, da_c)
        g_w_oh += np.outer(h_prev, da_o)
        g_b_i += da_i
        g_b_f += da_f
        g_b_c += da_c
        g_b_o += da_o

        dh = (np.dot(w_ih, da_i) + np.dot(w_fh, da_f)
              + np.dot(w_ch, da_c) + np.dot(w_oh, da_o))
        dc = dc * f_t

    return (g_w_ix, g_w_fx, g_w_cx, g_w_ox, g_w_ih, g_w_fh, g_w_ch, g_w_oh,
            g_b_i, g_b_f, g_b_c, g_b_o, g_w_y, g_b_y)


@njit(cache=True)
def _batch_grads_kernel(xs_batch, targets,
                        w_ix, w_fx, w_cx, w_ox, w_ih, w_fh, w_ch, w_oh,
                        b_i, b_f, b_c, b_o, w_y, b_y):
    """Mean gradient of the squared error over a batch, plus mean loss."""
    B = xs_batch.shape[0]
    D = xs_batch.shape[2]
    H = b_i.shape[0]
    a_w_ix = np.zeros((D, H))
    a_w_fx = np.zeros((D, H))
    a_w_cx = np.zeros((D, H))
    a_w_ox = np.zeros((D, H))
    a_w_ih = np.zeros((H, H))
    a_w_fh = np.zeros((H, H))
    a_w_ch = np.zeros((H, H))
    a_w_oh = np.zeros((H, H))
    a_b_i = np.zeros(H)
    a_b_f = np.zeros(H)
    a_b_c = np.zeros(H)
    a_b_o = np.zeros(H)
    a_w_y = np.zeros(H)
    a_b_y = 0.0
    loss = 0.0
    for k in range(B):
        xs = xs_batch[k]
        pred, i_a, f_a, g_a, o_a, c_a, h_a = _forward_kernel(
            xs, w_ix, w_fx, w_cx, w_ox, w_ih, w_fh, w_ch, w_oh,
            b_i, b_f, b_c, b_o, w_y, b_y)
        resid = pred - targets[k]
        loss += resid * resid
        grads = _backward_kernel(xs, i_a, f_a, g_a, o_a, c_a, h_a,
                                 w_ih, w_fh, w_ch, w_oh, w_y, 2.0 * resid)
        a_w_ix += grads[0]
        a_w_fx += grads[1]
        a_w_cx += grads[2]
        a_w_ox += grads[3]
        a_w_ih += grads[4]
        a_w_fh += grads[5]
        a_w_ch += grads[6]
        a_w_oh += grads[7]
        a_b_i += grads[8]
        a_b_f += grads[9]
        a_b_c += grads[10]
        a_b_o += grads[11]
        a_w_y += grads[12]
        a_b_y += grads[13]
    inv = 1.0 / B
    return (a_w_ix * inv, a_w_fx * inv, a_w_cx * inv, a_w_ox * inv,
            a_w_ih * inv, a_w_fh * inv, a_w_ch * inv, a_w_oh * inv,
            a_b_i * inv, a_b_f * inv, a_b_c * inv, a_b_o * inv,
            a_w_y * inv, a_b_y * inv, loss * inv)


@njit(cache=True)
def _predict_batch_kernel(xs_batch,
                          w_ix, w_fx, w_cx, w_ox, w_ih, w_fh, w_ch, w_oh,
                          b_i, b_f, b_c, b_o, w_y, b_y):
    B = xs_batch.shape[0]
    preds = np.empty(B)
    for k in range(B):
        pred, i_a, f_a, g_a, o_a, c_a, h_a = _forward_kernel(
            xs_batch[k], w_ix, w_fx, w_cx, w_ox, w_ih, w_fh, w_ch, w_oh,
            b_i, b_f, b_c, b_o, w_y, b_y)
        preds[k] = pred
    return preds


def _param_arrays(p: LstmParams):
    return (p.w_ix, p.w_fx, p.w_cx, p.w_ox, p.w_ih, p.w_fh, p.w_ch, p.w_oh,
            p.b_i, p.b_f, p.b_c, p.b_o, p.w_y, p.b_y)


def _as_sequence(window) -> np.ndarray:
    """Coerce a window of scalars (or an already (T, D) array) to (T, D)."""
    xs = np.ascontiguousarray(window, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    if xs.ndim != 2:
        raise ValueError("window must be 1-D scalars or a (T, D) array")
    if xs.shape[0] == 0:
        raise ValueError("window must not be empty")
    return xs


def sequence_forward(window, params: LstmParams) -> tuple[float, list[GateCache]]:
    """Unroll the cell over the window from a zero state and apply the head."""
    xs = _as_sequence(window)
    if xs.shape[1] != params.input_dim:
        raise ValueError(
            f"window feature dim {xs.shape[1]} != input_dim {params.input_dim}"
        )
    pred, i_a, f_a, g_a, o_a, c_a, h_a = _forward_kernel(xs, *_param_arrays(params))
    caches = [
        GateCache(input_gate=i_a[t], forget_gate=f_a[t], candidate=g_a[t],
                  output_gate=o_a[t], cell=c_a[t])
        for t in range(xs.shape[0])
    ]
    return float(pred), caches


def bptt_gradients(window, target: float, params: LstmParams) -> LstmParams:
    """Exact gradient of (prediction - target)^2 w.r.t. every parameter."""
    xs = _as_sequence(window)
    if xs.shape[1] != params.input_dim:
        raise ValueError(
            f"window feature dim {xs.shape[1]} != input_dim {params.input_dim}"
        )
    pred, i_a, f_a, g_a, o_a, c_a, h_a = _forward_kernel(xs, *_param_arrays(params))
    dpred = 2.0 * (float(pred) - float(target))
    grads = _backward_kernel(xs, i_a, f_a, g_a, o_a, c_a, h_a,
                             params.w_ih, params.w_fh, params.w_ch, params.w_oh,
                             params.w_y, dpred)
    names = dict(zip(_WEIGHT_FIELDS, grads[:13]))
    return LstmParams(**names, b_y=float(grads[13]))


def adam_step(
    params: LstmParams, grads: LstmParams, state: AdamState
) -> tuple[LstmParams, AdamState]:
    """One Adam update with bias-corrected moments; returns new objects."""
    theta = params.to_vector()
    g = grads.to_vector()
    if g.shape != theta.shape:
        raise ValueError("gradient layout does not match parameter layout")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_params = LstmParams.from_vector(theta, params.input_dim, params.hidden_size)
    new_state = replace(state, m=m, v=v, t=t)
    return new_params, new_state


def predict_batch(params: LstmParams, inputs: np.ndarray) -> np.ndarray:
    """Head output for each window in ``inputs`` (n, W) or (n, W, D)."""
    xs = np.ascontiguousarray(inputs, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[:, :, np.newaxis]
    return _predict_batch_kernel(xs, *_param_arrays(params))


def _dataset_mse(params: LstmParams, data: WindowedDataset) -> float:
    preds = predict_batch(params, data.inputs)
    diff = preds - data.targets
    return float(np.mean(diff * diff))


def _train_loop(data, test, epochs, seed, hyper, snapshot_epochs):
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if len(data) == 0:
        raise ValueError("training dataset is empty")

    rng = np.random.default_rng(seed)
    params = init_params(1, hyper.hidden_size, rng, forget_bias=hyper.forget_bias)
    adam = AdamState.fresh(params.n_params, lr=hyper.learning_rate,
                           beta1=hyper.beta1, beta2=hyper.beta2,
                           eps=hyper.adam_eps)

    xs_all = np.ascontiguousarray(data.inputs, dtype=np.float64)[:, :, np.newaxis]
    ys_all = np.ascontiguousarray(data.targets, dtype=np.float64)
    n = len(data)
    batch = max(1, hyper.batch_size)

    wanted = set(int(e) for e in snapshot_epochs)
    snapshots: dict[int, LstmParams] = {}
    history: list[TrainRecord] = []
    for epoch in range(1, epochs + 1):
        for start in range(0, n, batch):
            stop = min(start + batch, n)
            out = _batch_grads_kernel(xs_all[start:stop], ys_all[start:stop],
                                      *_param_arrays(params))
            grad_fields = dict(zip(_WEIGHT_FIELDS, out[:13]))
            grads = LstmParams(**grad_fields, b_y=float(out[13]))
            params, adam = adam_step(params, grads, adam)
        history.append(TrainRecord(
            epoch=epoch,
            train_mse=_dataset_mse(params, data),
            test_mse=_dataset_mse(params, test),
        ))
        if epoch in wanted:
            snapshots[epoch] = LstmParams.from_vector(
                params.to_vector(), params.input_dim, params.hidden_size)
    return params, history, snapshots


def train(
    data: WindowedDataset,
    test: WindowedDataset,
    epochs: int,
    seed: int,
    hyper: LstmConfig = LstmConfig(),
) -> tuple[LstmParams, list[TrainRecord]]:
    """Full-pass mini-batch training, deterministic for a fixed seed.

    Samples are visited in time order (no shuffling); one Adam step per
    batch of ``hyper.batch_size``.  The history holds train/test MSE
    measured after each epoch.
    """
    params, history, _ = _train_loop(data, test, epochs, seed, hyper, ())
    return params, history


def epoch_grid(
    data: WindowedDataset,
    test: WindowedDataset,
    epoch_counts: Sequence[int],
    seed: int,
    hyper: LstmConfig = LstmConfig(),
) -> tuple[list[tuple[int, float]], dict[int, LstmParams], list[TrainRecord]]:
    """Test MSE after each epoch count in the grid, plus model snapshots.

    Training is deterministic and batches are visited in a fixed order,
    so a run of N epochs passes through exactly the states the shorter
    runs end on; one pass with snapshots therefore reproduces the
    independent per-count runs bit for bit.
    """
    counts = [int(e) for e in epoch_counts]
    if not counts or any(e < 1 for e in counts):
        raise ValueError("epoch grid must be non-empty positive integers")
    top = max(counts)
    _, history, snapshots = _train_loop(data, test, top, seed, hyper,
                                        sorted(set(counts)))
    by_epoch = {rec.epoch: rec for rec in history}
    rows = [(e, by_epoch[e].test_mse) for e in counts]
    return rows, snapshots, history
