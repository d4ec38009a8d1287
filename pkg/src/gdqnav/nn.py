"""Minimal dense neural-network engine.

Networks store every weight in one contiguous float64 vector; layers hold
reshaped views into it. That keeps optimizer steps, target-network syncs,
checkpointing and finite-difference probing cheap and simple: they all
operate on the flat vector.

Everything is 64-bit. Forward passes accept a single observation vector or
a (batch, dim) matrix; gradients returned by ``backward`` are summed over
the batch, so loss-level scaling (1/B, importance weights) belongs to the
caller.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, TrainingFault

ACTIVATIONS = ("relu", "tanh", "linear")


def _apply_activation(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(name, z, a):
    # derivative w.r.t. pre-activation z; `a` is the activation output
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


class DenseLayer:
    """Fully connected layer y = act(W x + b), W of shape (out, in).

    ``w`` and ``b`` are views into the owning network's flat parameter
    vector; mutating them in place is how the optimizer updates the net.
    """

    def __init__(self, in_dim: int, out_dim: int, activation: str, w: np.ndarray, b: np.ndarray):
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.w = w
        self.b = b

    def __repr__(self):
        return f"DenseLayer({self.in_dim}->{self.out_dim}, {self.activation})"


def init_layer(w: np.ndarray, b: np.ndarray, activation: str, rng: np.random.Generator) -> None:
    """Seeded uniform init: He-style fan-in scaling for ReLU, Xavier otherwise."""
    fan_in = w.shape[1]
    fan_out = w.shape[0]
    if activation == "relu":
        limit = np.sqrt(6.0 / fan_in)
    else:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    w[...] = rng.uniform(-limit, limit, size=w.shape)
    b[...] = 0.0


class Mlp:
    """A chain of DenseLayers over a flat float64 parameter vector.

    If ``theta`` is given it must be a 1-D view of exactly the right size
    (used when several heads share one parameter vector); otherwise the
    network allocates its own storage.
    """

    def __init__(self, dims, activations, theta: np.ndarray | None = None,
                 rng: np.random.Generator | None = None):
        if len(activations) != len(dims) - 1:
            raise ConfigurationError("need one activation per layer")
        self.dims = tuple(int(d) for d in dims)
        self.activations = tuple(activations)
        need = param_count(dims)
        if theta is None:
            theta = np.zeros(need, dtype=np.float64)
        elif theta.size != need:
            raise ConfigurationError(f"theta has {theta.size} entries, need {need}")
        self.theta = theta
        self.layers: list[DenseLayer] = []
        off = 0
        for i, act in enumerate(self.activations):
            n_in, n_out = self.dims[i], self.dims[i + 1]
            w = theta[off:off + n_out * n_in].reshape(n_out, n_in)
            off += n_out * n_in
            b = theta[off:off + n_out]
            off += n_out
            self.layers.append(DenseLayer(n_in, n_out, act, w, b))
        if rng is not None:
            self.init_params(rng)

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def init_params(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            init_layer(layer.w, layer.b, layer.activation, rng)

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """Run the network. Returns output, or (output, cache) with
        per-layer inputs, pre-activations and activations for backprop."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.in_dim:
            raise ConfigurationError(
                f"input has {x.shape[1]} features, network expects {self.in_dim}")
        cache = [] if want_cache else None
        a = x
        for layer in self.layers:
            z = a @ layer.w.T + layer.b
            out = _apply_activation(layer.activation, z)
            if want_cache:
                cache.append((a, z, out))
            a = out
        if squeeze:
            a = a[0]
        if want_cache:
            return a, cache
        return a

    def backward(self, cache, d_out: np.ndarray, grad: np.ndarray | None = None):
        """Backpropagate ``d_out`` (gradient w.r.t. the network output).

        Writes parameter gradients into ``grad`` (a flat vector shaped like
        ``theta``, allocated if omitted) and returns (d_input, grad).
        Gradients are summed over the batch dimension.
        """
        if len(cache) != len(self.layers):
            raise RuntimeError("cache does not match network (stale cache?)")
        d = np.asarray(d_out, dtype=np.float64)
        squeeze = d.ndim == 1
        if squeeze:
            d = d[None, :]
        if grad is None:
            grad = np.zeros_like(self.theta)
        views = grad_views(grad, self.dims)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            x_in, z, a = cache[i]
            if z.shape != d.shape:
                raise RuntimeError("cache does not match gradient shape (stale cache?)")
            dz = d * _activation_grad(layer.activation, z, a)
            gw, gb = views[i]
            gw += dz.T @ x_in
            gb += dz.sum(axis=0)
            d = dz @ layer.w
        if squeeze:
            d = d[0]
        return d, grad

    def copy_from(self, other: "Mlp") -> None:
        if other.dims != self.dims:
            raise ConfigurationError("cannot copy between differently shaped networks")
        np.copyto(self.theta, other.theta)

    def clone(self) -> "Mlp":
        net = Mlp(self.dims, self.activations)
        np.copyto(net.theta, self.theta)
        return net


def param_count(dims) -> int:
    return int(sum((dims[i] + 1) * dims[i + 1] for i in range(len(dims) - 1)))


def grad_views(flat: np.ndarray, dims):
    """Carve (w, b) views out of a flat vector laid out like Mlp.theta."""
    views = []
    off = 0
    for i in range(len(dims) - 1):
        n_in, n_out = dims[i], dims[i + 1]
        w = flat[off:off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = flat[off:off + n_out]
        off += n_out
        views.append((w, b))
    return views


class Adam:
    """Bias-corrected Adam over a flat parameter vector."""

    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = np.zeros(n_params, dtype=np.float64)
        self.v = np.zeros(n_params, dtype=np.float64)

    def step(self, theta: np.ndarray, grad: np.ndarray, context: str = "adam") -> None:
        if theta.shape != self.m.shape or grad.shape != self.m.shape:
            raise ConfigurationError("parameter/gradient shape does not match optimizer state")
        if not np.all(np.isfinite(grad)):
            raise TrainingFault("non-finite gradient", context)
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1.0 - b1) * grad
        self.v *= b2
        self.v += (1.0 - b2) * (grad * grad)
        m_hat = self.m / (1.0 - b1 ** self.step_count)
        v_hat = self.v / (1.0 - b2 ** self.step_count)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
