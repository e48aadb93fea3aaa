"""A tiny fully connected regressor with hand-written backprop.

Parameters live in one flat vector: for each layer the weight matrix
``(fan_out, fan_in)`` in row-major order followed by its bias.  The loss is
the mean squared error over samples and outputs.
"""

from dataclasses import asdict, dataclass, field as dc_field
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DivergedTraining, InvalidInput
from .fields import ScalarField

MAX_PARAMS = 2000
ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple
    activation: str = "tanh"
    loss: str = "mse"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2 or min(widths) < 1:
            raise InvalidInput("layer_widths needs at least input and output widths >= 1")
        if self.activation not in ACTIVATIONS:
            raise InvalidInput(f"activation must be one of {ACTIVATIONS}")
        if self.loss != "mse":
            raise InvalidInput("only the mse loss is supported")
        if self.n_params > MAX_PARAMS:
            raise InvalidInput(f"{self.n_params} parameters exceeds the dense-Hessian budget {MAX_PARAMS}")

    @property
    def n_params(self):
        w = self.layer_widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))

    @property
    def smooth(self):
        return self.activation != "relu" or len(self.layer_widths) == 2

    def unpack(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise InvalidInput(f"expected {self.n_params} parameters, got shape {params.shape}")
        layers, pos = [], 0
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            w = params[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in)
            pos += fan_in * fan_out
            b = params[pos:pos + fan_out]
            pos += fan_out
            layers.append((w, b))
        return layers

    def init_params(self, seed):
        rng = np.random.default_rng(seed)
        chunks = []
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            r = 1.0 / math.sqrt(fan_in)
            chunks.append(rng.uniform(-r, r, size=fan_in * fan_out + fan_out))
        return np.concatenate(chunks)


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float).T).T
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float).T).T
        if self.inputs.shape[0] < 1 or self.inputs.shape[0] != self.targets.shape[0]:
            raise InvalidInput("inputs and targets need the same positive number of rows")

    @property
    def n(self):
        return self.inputs.shape[0]

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.targets[idx])


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(float)
    return np.ones_like(z)


def _check(spec, data):
    if data.inputs.shape[1] != spec.layer_widths[0] or data.targets.shape[1] != spec.layer_widths[-1]:
        raise InvalidInput("dataset dimensions do not match the network spec")


def forward(spec, params, inputs):
    out = np.asarray(inputs, dtype=float)
    layers = spec.unpack(params)
    for i, (w, b) in enumerate(layers):
        out = out @ w.T + b
        if i < len(layers) - 1:
            out = _act(spec.activation, out)
    return out


def loss_and_grad(spec, params, data):
    """Mean squared error and its exact gradient by reverse accumulation."""
    layers = spec.unpack(params)
    acts, pres = [data.inputs], []
    out = data.inputs
    for i, (w, b) in enumerate(layers):
        z = out @ w.T + b
        pres.append(z)
        out = _act(spec.activation, z) if i < len(layers) - 1 else z
        acts.append(out)
    resid = out - data.targets
    loss = float(np.mean(resid * resid))
    delta = 2.0 * resid / resid.size
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append(((delta.T @ acts[i]).ravel(), delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w) * _act_grad(spec.activation, pres[i - 1], acts[i])
    flat = np.concatenate([np.concatenate(pair) for pair in reversed(grads)])
    return loss, flat


def min_preactivation(spec, params, data):
    """Smallest |pre-activation| over hidden units; ReLU kinks sit at 0."""
    layers = spec.unpack(params)
    out, best = data.inputs, math.inf
    for w, b in layers[:-1]:
        z = out @ w.T + b
        best = min(best, float(np.min(np.abs(z))))
        out = _act(spec.activation, z)
    return best


def mlp_loss_field(spec, data):
    """The training loss as a :class:`ScalarField` over flattened parameters.

    Gradients are exact; Hessians are assembled column by column from
    central differences of the gradient (``exact_hess`` is False).
    """
    _check(spec, data)
    return ScalarField(
        spec.n_params,
        value=lambda p: loss_and_grad(spec, p, data)[0],
        gradient=lambda p: loss_and_grad(spec, p, data)[1],
        name="mlp", smooth=spec.smooth,
        params={"layer_widths": list(spec.layer_widths), "activation": spec.activation},
    )


# --- data ----------------------------------------------------------------------------

def make_sine_dataset(n, noise_sigma=0.0, seed=0):
    """Inputs uniform on [-pi, pi] (sorted ascending); targets sin(x) plus Gaussian noise."""
    if n < 1:
        raise InvalidInput("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-np.pi, np.pi, size=n))
    y = np.sin(x)
    if noise_sigma > 0:
        y = y + rng.normal(0.0, noise_sigma, size=n)
    return Dataset(x[:, None], y[:, None])


def make_linear_dataset(n, weights, bias, seed=0, noise_sigma=0.0):
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n, weights.shape[1]))
    y = x @ weights.T + bias
    if noise_sigma > 0:
        y = y + rng.normal(0.0, noise_sigma, size=y.shape)
    return Dataset(x, y)


def stride_batches(n, k):
    """Index arrays for k batches, batch j holding samples j, j+k, j+2k, ..."""
    if not 1 <= k <= n:
        raise InvalidInput("need 1 <= k <= n")
    return [np.arange(j, n, k) for j in range(k)]


def minibatch_hessians(spec, data, params, k):
    """Dense loss Hessians of each stride batch at ``params``."""
    return [mlp_loss_field(spec, data.subset(idx)).hessian(params)
            for idx in stride_batches(data.n, k)]


# --- training ------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-2
    steps: int = 1000
    batch_size: Optional[int] = None  # None means full batch
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 100


@dataclass
class TrainResult:
    params: np.ndarray
    trace: list = dc_field(default_factory=list)

    @property
    def final(self):
        return self.trace[-1]


def train(spec, data, cfg, init=None):
    """Minibatch Adam or SGD on the MSE loss; deterministic for fixed inputs.

    The seed drives both the initial parameters (unless ``init`` is given)
    and the per-epoch shuffling.  The trace logs full-data loss and gradient
    norm every ``log_every`` steps and at the last step.
    """
    _check(spec, data)
    if cfg.steps < 1:
        raise InvalidInput("steps must be >= 1")
    if cfg.optimizer not in ("adam", "sgd"):
        raise InvalidInput("optimizer must be 'adam' or 'sgd'")
    batch = data.n if cfg.batch_size is None else int(cfg.batch_size)
    if not 1 <= batch <= data.n:
        raise InvalidInput("batch_size must lie in [1, n]")

    params = spec.init_params(cfg.seed) if init is None else np.array(init, dtype=float)
    rng = np.random.default_rng([cfg.seed, 1])
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    order, cursor = np.arange(data.n), data.n
    trace = []
    for step in range(1, cfg.steps + 1):
        if batch == data.n:
            sub = data
        else:
            if cursor + batch > data.n:
                order, cursor = rng.permutation(data.n), 0
            sub = data.subset(order[cursor:cursor + batch])
            cursor += batch
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = loss_and_grad(spec, params, sub)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise DivergedTraining(step)
        if cfg.optimizer == "adam":
            m = cfg.beta1 * m + (1 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
            m_hat = m / (1 - cfg.beta1**step)
            v_hat = v / (1 - cfg.beta2**step)
            params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        else:
            params = params - cfg.learning_rate * grad
        if step % cfg.log_every == 0 or step == cfg.steps:
            with np.errstate(over="ignore", invalid="ignore"):
                full_loss, full_grad = loss_and_grad(spec, params, data)
            if not math.isfinite(full_loss):
                raise DivergedTraining(step)
            trace.append({"step": step, "loss": full_loss,
                          "grad_norm": float(np.linalg.norm(full_grad))})
    return TrainResult(params, trace)


# --- snapshots -----------------------------------------------------------------------

def save_model(path, spec, params, seed=None, metrics=None, data_config=None, extra=None):
    payload = {
        "spec": {"layer_widths": list(spec.layer_widths), "activation": spec.activation,
                 "loss": spec.loss},
        "params": [float(p) for p in params],
        "seed": seed,
        "metrics": metrics or {},
        "data": data_config or {},
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return Path(path)


def load_model(path):
    """Return ``(spec, params, payload)`` from a snapshot written by :func:`save_model`."""
    payload = json.loads(Path(path).read_text())
    s = payload["spec"]
    spec = MlpSpec(tuple(s["layer_widths"]), s.get("activation", "tanh"), s.get("loss", "mse"))
    params = np.array(payload["params"], dtype=float)
    if params.size != spec.n_params:
        raise InvalidInput("snapshot parameter count does not match its spec")
    return spec, params, payload


def dataset_from_config(cfg):
    """Rebuild a dataset from the ``data`` block of a snapshot."""
    kind = cfg.get("kind", "sine")
    if kind != "sine":
        raise InvalidInput(f"unknown dataset kind {kind!r}")
    return make_sine_dataset(int(cfg["n"]), float(cfg.get("noise_sigma", 0.0)), int(cfg.get("seed", 0)))


def spec_dict(spec):
    return asdict(spec)
