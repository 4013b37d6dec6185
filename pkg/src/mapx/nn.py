"""Minimal dense-network engine: forward pass, reverse-mode gradients, Adam.

Only what the pointwise estimator needs: fully connected layers with ReLU or
Tanh hidden activations and a linear output layer, exact backpropagation, and
a per-parameter adaptive moment optimizer. Inputs are batched row vectors.
"""

from __future__ import annotations

import numpy as np

_ACTIVATIONS = ("relu", "tanh")


class Mlp:
    """Fully connected network with fixed widths.

    Weights are stored as (fan_in, fan_out) matrices so a batch forward pass
    is ``x @ W + b``. Hidden layers share one activation; the output layer is
    linear.
    """

    def __init__(
        self,
        widths: tuple[int, ...] | list[int],
        hidden_activation: str = "relu",
        rng: np.random.Generator | None = None,
        out_weight_std: float | None = None,
        out_bias: float = 0.0,
    ):
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if hidden_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {hidden_activation!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.widths = tuple(int(w) for w in widths)
        self.hidden_activation = hidden_activation

        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        n_layers = len(self.widths) - 1
        for layer in range(n_layers):
            fan_in, fan_out = self.widths[layer], self.widths[layer + 1]
            if layer == n_layers - 1 and out_weight_std is not None:
                std = out_weight_std
                bias = np.full(fan_out, float(out_bias))
            else:
                # He for ReLU, Glorot for Tanh.
                if hidden_activation == "relu":
                    std = np.sqrt(2.0 / fan_in)
                else:
                    std = np.sqrt(1.0 / fan_in)
                bias = np.zeros(fan_out)
            self.weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
            self.biases.append(bias)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.hidden_activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch forward pass; x is (batch, widths[0]) or (widths[0],)."""
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping per-layer inputs for backpropagation."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.widths[0]:
            raise ValueError(
                f"input width {x.shape[1]} != expected {self.widths[0]}"
            )
        cache = [x]
        h = x
        for layer in range(self.n_layers):
            z = h @ self.weights[layer] + self.biases[layer]
            h = z if layer == self.n_layers - 1 else self._act(z)
            cache.append(h)
        if squeeze:
            return h[0], cache
        return h, cache

    def backward(
        self, cache: list[np.ndarray], grad_out: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Exact gradients of ``sum(grad_out * output)`` w.r.t. parameters.

        Returns (weight grads, bias grads, input grad), shapes matching the
        parameters and the cached input batch.
        """
        grad = np.asarray(grad_out, dtype=float)
        if grad.ndim == 1:
            grad = grad[None, :]
        grad_w = [np.empty(0)] * self.n_layers
        grad_b = [np.empty(0)] * self.n_layers
        for layer in range(self.n_layers - 1, -1, -1):
            h_in = cache[layer]
            h_out = cache[layer + 1]
            if layer != self.n_layers - 1:
                if self.hidden_activation == "relu":
                    grad = grad * (h_out > 0.0)
                else:
                    grad = grad * (1.0 - h_out * h_out)
            grad_w[layer] = h_in.T @ grad
            grad_b[layer] = grad.sum(axis=0)
            grad = grad @ self.weights[layer].T
        return grad_w, grad_b, grad

    def parameters(self) -> list[np.ndarray]:
        """Flat list of parameter arrays, weights and biases interleaved."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def stack_gradients(
    grad_w: list[np.ndarray], grad_b: list[np.ndarray]
) -> list[np.ndarray]:
    """Order gradients to match :meth:`Mlp.parameters`."""
    out: list[np.ndarray] = []
    for gw, gb in zip(grad_w, grad_b):
        out.extend((gw, gb))
    return out


class Adam:
    """Per-parameter adaptive moment optimizer over a list of arrays."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
