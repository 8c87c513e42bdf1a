"""Small feed-forward networks with hand-rolled training.

One implementation backs both the substitute state estimator (regression,
Huber loss) and the supervised detector head (binary classification,
cross-entropy).  Everything is plain numpy and deterministic under a seed:
initialization, batch order and dropout masks all come from one generator.
Inputs and outputs are standardized per channel; ``input_jacobian`` is the
exact reverse-mode derivative of the denormalized output with respect to
the raw input.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"FDBMLP01"
_ACTIVATION_CODES = {"linear": 0, "sigmoid": 1}
_ACTIVATION_NAMES = {v: k for k, v in _ACTIVATION_CODES.items()}


class TrainingDiverged(RuntimeError):
    def __init__(self, step, message="loss became non-finite"):
        self.step = step
        super().__init__(f"{message} at step {step}")


@dataclass
class MlpModel:
    weights: list            # weights[l]: (fan_out, fan_in)
    biases: list
    leaky_slope: float
    in_mean: np.ndarray
    in_scale: np.ndarray
    out_mean: np.ndarray
    out_scale: np.ndarray
    output_activation: str = "linear"
    loss_trace: tuple = field(default=(), repr=False, compare=False)

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_in(self):
        return self.weights[0].shape[1]

    @property
    def n_out(self):
        return self.weights[-1].shape[0]


def normalize(v, mean, scale):
    return (v - mean) / scale


def denormalize(v, mean, scale):
    return v * scale + mean


def fit_normalization(data: np.ndarray, scale_floor: float = 1e-8):
    mean = data.mean(axis=0)
    scale = np.maximum(data.std(axis=0), scale_floor)
    return mean, scale


def _leaky(a, slope):
    return np.where(a >= 0, a, slope * a)


def _leaky_grad(a, slope):
    return np.where(a >= 0, 1.0, slope)


def _forward(model, xn, dropout=0.0, rng=None):
    """Normalized-space forward pass; returns (pre-activations, activations)."""
    pre, acts = [], [xn]
    h = xn
    n_layers = len(model.weights)
    masks = []
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = h @ w.T + b
        pre.append(a)
        if l < n_layers - 1:
            h = _leaky(a, model.leaky_slope)
            if dropout > 0.0:
                mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
            acts.append(h)
        else:
            acts.append(a)
    return pre, acts, masks


def predict(model: MlpModel, z: np.ndarray) -> np.ndarray:
    """Deterministic forward pass on raw inputs, dropout off, denormalized.

    For sigmoid heads the returned value is the probability.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    xn = normalize(np.atleast_2d(z), model.in_mean, model.in_scale)
    if xn.shape[1] != model.n_in:
        raise ValueError(f"expected {model.n_in} inputs, got {xn.shape[1]}")
    _, acts, _ = _forward(model, xn)
    out = denormalize(acts[-1], model.out_mean, model.out_scale)
    if model.output_activation == "sigmoid":
        out = np.where(out >= 0, 1.0 / (1.0 + np.exp(-np.abs(out))),
                       np.exp(-np.abs(out)) / (1.0 + np.exp(-np.abs(out))))
    return out[0] if single else out


def input_jacobian(model: MlpModel, z: np.ndarray) -> np.ndarray:
    """Exact d(denormalized linear output)/d(raw input), shape n_out x n_in."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or len(z) != model.n_in:
        raise ValueError(f"expected a length-{model.n_in} input vector")
    xn = normalize(z, model.in_mean, model.in_scale)
    pre, _, _ = _forward(model, xn[None, :])
    jac = model.weights[0].copy()
    for l in range(1, len(model.weights)):
        d = _leaky_grad(pre[l - 1][0], model.leaky_slope)
        jac = model.weights[l] @ (d[:, None] * jac)
    return (model.out_scale[:, None] * jac) / model.in_scale[None, :]


def min_preactivation_gap(model: MlpModel, z: np.ndarray) -> float:
    """Distance of the closest hidden pre-activation to its kink at 0."""
    xn = normalize(np.asarray(z, dtype=float), model.in_mean, model.in_scale)
    pre, _, _ = _forward(model, xn[None, :])
    return float(min(np.min(np.abs(a)) for a in pre[:-1])) if len(pre) > 1 else np.inf


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def huber_vector_loss(delta: np.ndarray, gamma: float):
    """Paper-form Huber on the whole error vector per sample.

    The quadratic/linear switch compares ``||delta||_1`` against gamma for the
    sample as a whole; returns (per-sample losses, d loss / d delta).
    """
    l1 = np.sum(np.abs(delta), axis=1)
    quad = l1 < gamma
    losses = np.where(quad, 0.5 * np.sum(delta * delta, axis=1),
                      gamma * (l1 - 0.5 * gamma))
    grad = np.where(quad[:, None], delta, gamma * np.sign(delta))
    return losses, grad


def huber_component_loss(delta: np.ndarray, gamma: float):
    """Classical per-component Huber; same return convention."""
    a = np.abs(delta)
    quad = a < gamma
    losses = np.sum(np.where(quad, 0.5 * delta * delta, gamma * (a - 0.5 * gamma)), axis=1)
    grad = np.where(quad, delta, gamma * np.sign(delta))
    return losses, grad


def bce_with_logits(logits: np.ndarray, labels: np.ndarray):
    """Numerically stable binary cross-entropy; returns (losses, d/d logits)."""
    losses = np.maximum(logits, 0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
    grad = 1.0 / (1.0 + np.exp(-logits)) - labels
    return losses.sum(axis=1), grad


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class AdamParams:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_model(layer_sizes, leaky_slope, rng, output_activation="linear") -> MlpModel:
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        std = np.sqrt(2.0 / (fan_in * (1.0 + leaky_slope ** 2)))
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    n_in, n_out = layer_sizes[0], layer_sizes[-1]
    return MlpModel(weights=weights, biases=biases, leaky_slope=leaky_slope,
                    in_mean=np.zeros(n_in), in_scale=np.ones(n_in),
                    out_mean=np.zeros(n_out), out_scale=np.ones(n_out),
                    output_activation=output_activation)


def _backward(model, pre, acts, masks, out_grad):
    """Gradients of the summed loss w.r.t. weights and biases."""
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    delta = out_grad
    for l in reversed(range(len(model.weights))):
        grads_w[l] = delta.T @ acts[l]
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ model.weights[l]
            if masks[l - 1] is not None:
                delta = delta * masks[l - 1]
            delta = delta * _leaky_grad(pre[l - 1], model.leaky_slope)
    return grads_w, grads_b


def train_mlp(model: MlpModel, inputs_n: np.ndarray, targets_n: np.ndarray,
              loss_fn, steps: int, batch_size: int, dropout: float,
              rng: np.random.Generator, adam: AdamParams | None = None,
              trace_every: int = 100) -> MlpModel:
    """Minibatch Adam on normalized data; mutates and returns the model.

    ``loss_fn(predictions, targets)`` returns per-sample losses and the
    gradient of the summed loss with respect to the predictions.
    """
    adam = adam or AdamParams()
    n = len(inputs_n)
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    trace = []
    for step in range(1, steps + 1):
        idx = rng.integers(0, n, size=min(batch_size, n))
        xb, yb = inputs_n[idx], targets_n[idx]
        pre, acts, masks = _forward(model, xb, dropout=dropout, rng=rng)
        losses, dloss = loss_fn(acts[-1], yb)
        loss = float(np.mean(losses))
        if not np.isfinite(loss):
            raise TrainingDiverged(step)
        if step == 1 or step % trace_every == 0 or step == steps:
            trace.append((step, loss))
        grads_w, grads_b = _backward(model, pre, acts, masks, dloss / len(xb))
        t = step
        for l in range(len(model.weights)):
            for g, p, m, v in ((grads_w[l], model.weights[l], m_w[l], v_w[l]),
                               (grads_b[l], model.biases[l], m_b[l], v_b[l])):
                m *= adam.beta1
                m += (1 - adam.beta1) * g
                v *= adam.beta2
                v += (1 - adam.beta2) * g * g
                m_hat = m / (1 - adam.beta1 ** t)
                v_hat = v / (1 - adam.beta2 ** t)
                p -= adam.learning_rate * m_hat / (np.sqrt(v_hat) + adam.eps)
    model.loss_trace = tuple(trace)
    return model


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def save_model(model: MlpModel, path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    sizes = model.layer_sizes
    buf.write(struct.pack("<I", len(sizes)))
    buf.write(struct.pack(f"<{len(sizes)}q", *sizes))
    buf.write(struct.pack("<d", model.leaky_slope))
    buf.write(struct.pack("<B", _ACTIVATION_CODES[model.output_activation]))
    for arr in (model.in_mean, model.in_scale, model.out_mean, model.out_scale):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for w, b in zip(model.weights, model.biases):
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"not a model file (bad magic {data[:8]!r})")
    off = 8
    (n_sizes,) = struct.unpack_from("<I", data, off)
    off += 4
    sizes = list(struct.unpack_from(f"<{n_sizes}q", data, off))
    off += 8 * n_sizes
    (slope,) = struct.unpack_from("<d", data, off)
    off += 8
    (act_code,) = struct.unpack_from("<B", data, off)
    off += 1

    def take(count):
        nonlocal off
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).copy()
        off += 8 * count
        return arr

    n_in, n_out = sizes[0], sizes[-1]
    in_mean, in_scale = take(n_in), take(n_in)
    out_mean, out_scale = take(n_out), take(n_out)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(take(fan_out * fan_in).reshape(fan_out, fan_in))
        biases.append(take(fan_out))
    if off != len(data):
        raise ValueError("trailing bytes in model file")
    return MlpModel(weights=weights, biases=biases, leaky_slope=slope,
                    in_mean=in_mean, in_scale=in_scale,
                    out_mean=out_mean, out_scale=out_scale,
                    output_activation=_ACTIVATION_NAMES[act_code])
