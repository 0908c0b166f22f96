"""Stochastic Gaussian control policy: a tanh MLP with manual gradients.

The network maps a 50-sample observation window to the means and variances
of two independent Gaussians, one per electrode. Means are squashed to the
+/-10 V actuator range with a scaled tanh; variances come from an
exponential head clamped to [SIGMA2_MIN, SIGMA2_MAX]. All gradients are
hand-written backpropagation over numpy arrays; no autograd framework.
"""

import struct
from collections import namedtuple
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MEAN_SCALE = 10.0
SIGMA2_MIN = 1e-4
SIGMA2_MAX = 25.0
DEFAULT_LAYER_SIZES = (50, 128, 128, 128, 128, 4)

WEIGHT_MAGIC = b"MLPW"
WEIGHT_FORMAT_VERSION = 1

# Initialization gains per nonlinearity for the fan-in scheme
_KAIMING_GAINS = {
    "tanh": 5.0 / 3.0,
    "relu": np.sqrt(2.0),
    "leaky_relu": np.sqrt(2.0 / (1.0 + 0.01 ** 2)),
}

GaussianPolicyOutput = namedtuple("GaussianPolicyOutput", ["mean", "variance"])


class WeightFileError(ValueError):
    """Raised for unreadable, truncated, or wrong-version weight files."""


@dataclass(frozen=True)
class InitScheme:
    """Weight initialization: 'xavier-normal' (gain) or 'kaiming-normal'
    (nonlinearity). Biases are zero under every scheme."""

    kind: str
    gain: float = 1.0
    nonlinearity: str = "tanh"

    def __post_init__(self):
        if self.kind not in ("xavier-normal", "kaiming-normal"):
            raise ValueError(f"unknown init scheme kind {self.kind!r}")
        if self.gain <= 0.0:
            raise ValueError("init gain must be positive")
        if self.kind == "kaiming-normal" and self.nonlinearity not in _KAIMING_GAINS:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")

    @classmethod
    def xavier(cls, gain):
        return cls(kind="xavier-normal", gain=gain)

    @classmethod
    def kaiming(cls, nonlinearity):
        return cls(kind="kaiming-normal", nonlinearity=nonlinearity)

    def std(self, fan_in, fan_out):
        """Per-weight standard deviation for a layer of the given fan."""
        if self.kind == "xavier-normal":
            return self.gain * np.sqrt(2.0 / (fan_in + fan_out))
        return _KAIMING_GAINS[self.nonlinearity] * np.sqrt(1.0 / fan_in)

    def describe(self):
        if self.kind == "xavier-normal":
            return f"xavier-normal(gain={self.gain:g})"
        return f"kaiming-normal({self.nonlinearity})"


def parse_init_scheme(text):
    """Inverse of InitScheme.describe, e.g. 'xavier-normal(gain=5)'."""
    text = text.strip()
    if text.startswith("xavier-normal(gain=") and text.endswith(")"):
        return InitScheme.xavier(float(text[len("xavier-normal(gain="):-1]))
    if text.startswith("kaiming-normal(") and text.endswith(")"):
        return InitScheme.kaiming(text[len("kaiming-normal("):-1])
    raise ValueError(f"unparseable init scheme {text!r}")


class MlpParameters:
    """Per-layer weight matrices (fan_in x fan_out) and bias vectors."""

    __slots__ = ("weights", "biases")

    def __init__(self, weights, biases):
        if len(weights) != len(biases):
            raise ValueError("weights and biases must pair up layer by layer")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i > 0 and w.shape[0] != weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input dim does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
        self.weights = list(weights)
        self.biases = list(biases)

    @property
    def layer_sizes(self):
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    @property
    def n_layers(self):
        return len(self.weights)

    def copy(self):
        return MlpParameters(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )

    @classmethod
    def zeros(cls, layer_sizes=DEFAULT_LAYER_SIZES):
        weights = [
            np.zeros((layer_sizes[i], layer_sizes[i + 1]))
            for i in range(len(layer_sizes) - 1)
        ]
        biases = [np.zeros(layer_sizes[i + 1]) for i in range(len(layer_sizes) - 1)]
        return cls(weights, biases)


def init(scheme, seed, layer_sizes=DEFAULT_LAYER_SIZES):
    """Seeded parameter draw: weights per scheme, biases zero."""
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        std = scheme.std(fan_in, fan_out)
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParameters(weights, biases)


def _locate_nonfinite_layer(params, obs2d):
    h = obs2d
    for i in range(params.n_layers - 1):
        h = np.tanh(h @ params.weights[i] + params.biases[i])
        if not np.all(np.isfinite(h)):
            return i
    return params.n_layers - 1


def _forward_cached(params, obs2d):
    """Batched forward pass; returns (mean, variance, cache for backprop)."""
    h = obs2d
    hiddens = [h]
    for i in range(params.n_layers - 1):
        h = np.tanh(h @ params.weights[i] + params.biases[i])
        hiddens.append(h)
    z = h @ params.weights[-1] + params.biases[-1]
    if not np.all(np.isfinite(z)):
        layer = _locate_nonfinite_layer(params, obs2d)
        raise FloatingPointError(f"non-finite activations at layer {layer}")
    tanh_mean = np.tanh(z[:, :2])
    var_raw = np.exp(z[:, 2:])
    variance = np.clip(var_raw, SIGMA2_MIN, SIGMA2_MAX)
    mean = MEAN_SCALE * tanh_mean
    cache = (hiddens, tanh_mean, var_raw, variance)
    return mean, variance, cache


def _backward(params, cache, d_mean, d_var):
    """Backpropagate cotangents on (mean, variance) to all parameters."""
    hiddens, tanh_mean, var_raw, variance = cache
    batch = tanh_mean.shape[0]
    dz = np.empty((batch, 4))
    dz[:, :2] = d_mean * MEAN_SCALE * (1.0 - tanh_mean ** 2)
    # Projected clamp gradient: outside the variance band the gradient
    # passes through only when it points back inside, so the clamp is not
    # an absorbing trap for the exploration variance.
    inside = (var_raw > SIGMA2_MIN) & (var_raw < SIGMA2_MAX)
    flows = inside | ((var_raw >= SIGMA2_MAX) & (d_var < 0.0))
    flows |= (var_raw <= SIGMA2_MIN) & (d_var > 0.0)
    dz[:, 2:] = d_var * variance * flows
    grad_w = [None] * params.n_layers
    grad_b = [None] * params.n_layers
    dcur = dz
    for i in range(params.n_layers - 1, -1, -1):
        grad_w[i] = hiddens[i].T @ dcur
        grad_b[i] = dcur.sum(axis=0)
        if i > 0:
            dcur = (dcur @ params.weights[i].T) * (1.0 - hiddens[i] ** 2)
    return MlpParameters(grad_w, grad_b)


def forward(params, obs):
    """Policy heads for one observation window."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (params.layer_sizes[0],):
        raise ValueError(
            f"observation must have length {params.layer_sizes[0]}, got {obs.shape}"
        )
    mean, variance, _ = _forward_cached(params, obs[None, :])
    return GaussianPolicyOutput(mean[0], variance[0])


def forward_batch(params, obs_batch):
    """Policy heads for a batch of observation windows."""
    obs_batch = np.asarray(obs_batch, dtype=float)
    mean, variance, _ = _forward_cached(params, obs_batch)
    return GaussianPolicyOutput(mean, variance)


def output_vjp(params, obs, mean_cotangent, var_cotangent):
    """Gradient of <mean_cotangent, mean> + <var_cotangent, variance>."""
    obs = np.asarray(obs, dtype=float)
    _, _, cache = _forward_cached(params, obs[None, :])
    return _backward(
        params,
        cache,
        np.asarray(mean_cotangent, dtype=float)[None, :],
        np.asarray(var_cotangent, dtype=float)[None, :],
    )


def sample_action_raw(out, rng):
    """Unclamped Gaussian draw, one per electrode (log_prob refers to this)."""
    return out.mean + np.sqrt(out.variance) * rng.standard_normal(2)


def sample_action(out, rng):
    """Exploratory action on the wire: Gaussian draw clamped to +/-10 V."""
    return np.clip(sample_action_raw(out, rng), -MEAN_SCALE, MEAN_SCALE)


def mean_action(out):
    """Deterministic action used in evaluation and operation."""
    return np.array(out.mean, dtype=float)


def log_prob(out, action):
    """Summed Gaussian log-density of a pre-clamp action pair."""
    action = np.asarray(action, dtype=float)
    resid = action - out.mean
    return float(
        np.sum(-0.5 * np.log(2.0 * np.pi * out.variance) - resid ** 2 / (2.0 * out.variance))
    )


def grad_log_prob(params, obs, action):
    """Backpropagated gradient of log_prob with respect to every parameter."""
    obs = np.asarray(obs, dtype=float)
    action = np.asarray(action, dtype=float)
    mean, variance, cache = _forward_cached(params, obs[None, :])
    resid = action[None, :] - mean
    d_mean = resid / variance
    d_var = 0.5 * (resid ** 2 / variance - 1.0) / variance
    grad = _backward(params, cache, d_mean, d_var)
    for w, b in zip(grad.weights, grad.biases):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise FloatingPointError("non-finite gradient")
    return grad


def weighted_log_prob_grad(params, obs_batch, actions, weights):
    """Gradient of sum_t weights[t] * log_prob(pi(obs[t]), actions[t]).

    One batched backward pass over a whole trajectory; equals the sum of
    per-step grad_log_prob results scaled by the weights.
    """
    obs_batch = np.asarray(obs_batch, dtype=float)
    actions = np.asarray(actions, dtype=float)
    weights = np.asarray(weights, dtype=float)[:, None]
    mean, variance, cache = _forward_cached(params, obs_batch)
    resid = actions - mean
    d_mean = weights * resid / variance
    d_var = weights * 0.5 * (resid ** 2 / variance - 1.0) / variance
    grad = _backward(params, cache, d_mean, d_var)
    for w, b in zip(grad.weights, grad.biases):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise FloatingPointError("non-finite gradient")
    return grad


class AdamState:
    """First/second moment accumulators and step counter for adam_update."""

    def __init__(self, params):
        self.m = MlpParameters.zeros(params.layer_sizes)
        self.v = MlpParameters.zeros(params.layer_sizes)
        self.t = 0


def adam_update(params, grad, state, learning_rate, weight_decay=0.0,
                beta1=0.9, beta2=0.999, eps=1e-8):
    """One ascending Adam step; returns a new parameter snapshot.

    L2 weight decay is applied to weight matrices only, never to biases,
    and enters the gradient before the moment updates.
    """
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    new_w, new_b = [], []
    for i in range(params.n_layers):
        for tensor, g, m, v, bank, decay in (
            (params.weights[i], grad.weights[i], state.m.weights[i],
             state.v.weights[i], new_w, weight_decay),
            (params.biases[i], grad.biases[i], state.m.biases[i],
             state.v.biases[i], new_b, 0.0),
        ):
            if g.shape != tensor.shape:
                raise ValueError(f"layer {i}: gradient shape {g.shape} mismatch")
            g_eff = g - decay * tensor if decay else g
            m *= beta1
            m += (1.0 - beta1) * g_eff
            v *= beta2
            v += (1.0 - beta2) * g_eff ** 2
            step = learning_rate * (m / bc1) / (np.sqrt(v / bc2) + eps)
            bank.append(tensor + step)
    return MlpParameters(new_w, new_b)


def save_weights(params, path, metadata=None):
    """Write parameters as a versioned flat binary plus a text sidecar.

    Layout: magic, u32 version, u32 layer count, per-layer u32 (fan_in,
    fan_out) dims, then per layer the row-major little-endian float64
    weights followed by the biases. Metadata goes to `<stem>.meta` as
    `key: value` lines.
    """
    path = Path(path)
    parts = [WEIGHT_MAGIC, struct.pack("<II", WEIGHT_FORMAT_VERSION, params.n_layers)]
    for w in params.weights:
        parts.append(struct.pack("<II", w.shape[0], w.shape[1]))
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    path.write_bytes(b"".join(parts))
    meta_path = path.with_suffix(".meta")
    lines = [f"{k}: {v}\n" for k, v in (metadata or {}).items()]
    meta_path.write_text("".join(lines))
    return path


def load_weights(path):
    """Read a weight file written by save_weights; returns (params, metadata)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != WEIGHT_MAGIC:
        raise WeightFileError(f"{path}: not a policy weight file")
    version, n_layers = struct.unpack_from("<II", raw, 4)
    if version != WEIGHT_FORMAT_VERSION:
        raise WeightFileError(
            f"{path}: format version {version}, expected {WEIGHT_FORMAT_VERSION}"
        )
    offset = 12
    dims = []
    for _ in range(n_layers):
        if offset + 8 > len(raw):
            raise WeightFileError(f"{path}: truncated header")
        dims.append(struct.unpack_from("<II", raw, offset))
        offset += 8
    weights, biases = [], []
    for fan_in, fan_out in dims:
        w_bytes = fan_in * fan_out * 8
        b_bytes = fan_out * 8
        if offset + w_bytes + b_bytes > len(raw):
            raise WeightFileError(f"{path}: truncated payload")
        weights.append(
            np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset)
            .reshape(fan_in, fan_out)
            .copy()
        )
        offset += w_bytes
        biases.append(
            np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset).copy()
        )
        offset += b_bytes
    if offset != len(raw):
        raise WeightFileError(f"{path}: {len(raw) - offset} trailing bytes")
    metadata = {}
    meta_path = path.with_suffix(".meta")
    if meta_path.exists():
        for line in meta_path.read_text().splitlines():
            if line.strip():
                key, _, value = line.partition(": ")
                metadata[key] = value
    return MlpParameters(weights, biases), metadata
