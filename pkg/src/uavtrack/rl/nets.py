"""Fully connected networks with hand-written backpropagation.

All parameters of a network live in one flat float64 vector so optimizers,
gradient clipping and checkpoints can treat them uniformly.  Hidden layers
use tanh, the output layer is linear.
"""

from __future__ import annotations

import math

import numpy as np

HIDDEN_ACTIVATION = "tanh"
OUTPUT_ACTIVATION = "linear"
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class PolicyNetwork:
    """MLP ``sizes[0] -> ... -> sizes[-1]``.

    With ``gaussian=True`` the network is an actor: one extra trailing
    parameter per output holds the state-independent ``log_std``.

    Args:
        sizes: layer widths including input and output.
        gaussian: append learned log standard deviations.
        rng: generator for orthogonal initialization; ``None`` gives all zeros.
        output_gain: scale of the orthogonal init of the last layer.
    """

    def __init__(self, sizes, gaussian=False, rng=None, output_gain=1.0, log_std_init=0.0):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.gaussian = bool(gaussian)
        n = sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))
        if self.gaussian:
            n += self.sizes[-1]
        self.params = np.zeros(n)
        self._bind()
        if self.gaussian:
            self.log_std[:] = log_std_init
        if rng is not None:
            n_layers = len(self.weights)
            for i, W in enumerate(self.weights):
                gain = output_gain if i == n_layers - 1 else math.sqrt(2.0)
                W[:] = _orthogonal(W.shape, gain, rng)

    def _bind(self):
        self.weights, self.biases = [], []
        offset = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            self.weights.append(self.params[offset:offset + a * b].reshape(a, b))
            offset += a * b
            self.biases.append(self.params[offset:offset + b])
            offset += b
        self.log_std = self.params[offset:] if self.gaussian else None

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def activations(self) -> tuple[str, ...]:
        return (HIDDEN_ACTIVATION,) * (len(self.weights) - 1) + (OUTPUT_ACTIVATION,)

    def set_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != self.params.shape:
            raise ValueError(f"expected {self.params.shape} parameters, got {flat.shape}")
        self.params[:] = flat

    def copy(self) -> "PolicyNetwork":
        clone = PolicyNetwork(self.sizes, self.gaussian)
        clone.params[:] = self.params
        return clone

    def forward(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        if h.shape[-1] != self.sizes[0]:
            raise ValueError(f"input dimension {h.shape[-1]} != {self.sizes[0]}")
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
        return h

    def forward_cache(self, x):
        """Forward pass keeping every layer input for :meth:`backward`."""
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if h.shape[-1] != self.sizes[0]:
            raise ValueError(f"input dimension {h.shape[-1]} != {self.sizes[0]}")
        cache = [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
                cache.append(h)
        return h, cache

    def backward(self, cache, d_out):
        """Gradients of ``sum(d_out * output)``.

        Returns ``(grad, d_input)`` where ``grad`` matches :attr:`params`
        (its log_std slot is left at zero).
        """
        grad = np.zeros_like(self.params)
        g = _GradViews(self, grad)
        delta = np.atleast_2d(np.asarray(d_out, dtype=float))
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = cache[i]
            g.weights[i][:] = h_in.T @ delta
            g.biases[i][:] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (1.0 - h_in * h_in)
        return grad, delta

    def input_gradient(self, x) -> np.ndarray:
        """d(output[0]) / d(input) for each row of ``x``."""
        out, cache = self.forward_cache(x)
        d_out = np.zeros_like(out)
        d_out[:, 0] = 1.0
        _, d_in = self.backward(cache, d_out)
        return d_in


class _GradViews:
    def __init__(self, net: PolicyNetwork, flat: np.ndarray):
        self.weights, self.biases = [], []
        offset = 0
        for a, b in zip(net.sizes[:-1], net.sizes[1:]):
            self.weights.append(flat[offset:offset + a * b].reshape(a, b))
            offset += a * b
            self.biases.append(flat[offset:offset + b])
            offset += b
        self.log_std = flat[offset:]


def grad_views(net: PolicyNetwork, flat: np.ndarray) -> _GradViews:
    return _GradViews(net, flat)


def _orthogonal(shape, gain, rng) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def make_actor(obs_dim, hidden=(64, 64), rng=None) -> PolicyNetwork:
    return PolicyNetwork((obs_dim, *hidden, 1), gaussian=True, rng=rng, output_gain=0.01)


def make_critic(obs_dim, hidden=(64, 64), rng=None) -> PolicyNetwork:
    return PolicyNetwork((obs_dim, *hidden, 1), gaussian=False, rng=rng, output_gain=1.0)


def forward_actor(net: PolicyNetwork, obs) -> tuple[float, float]:
    """Action mean and log standard deviation for a single observation."""
    mean = net.forward(obs)
    return float(mean.reshape(-1)[0]), float(net.log_std[0])


def gaussian_log_prob(x, mean, log_std):
    z = (x - mean) * np.exp(-log_std)
    return -0.5 * z * z - log_std - LOG_SQRT_2PI


def sample_action(mean: float, log_std: float, rng: np.random.Generator) -> tuple[float, float]:
    """Draw from N(mean, exp(log_std)^2); the log-density is of the raw sample."""
    action = mean + math.exp(log_std) * rng.standard_normal()
    return float(action), float(gaussian_log_prob(action, mean, log_std))


class Adam:
    def __init__(self, n_params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        """Descend ``grad`` in place."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
