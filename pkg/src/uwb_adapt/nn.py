"""Dense feed-forward Q-network: forward pass, backprop, Adam, checkpoints.

The action-value approximator is a plain MLP in double precision: ReLU on
every hidden layer, a linear output layer, squared-error training.  Gradients
are hand-derived and verifiable against central finite differences.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

Q_NETWORK_LAYERS = (14, 128, 256, 512, 256, 128, 72)


class Mlp:
    """Fully connected network; weights W[i] has shape (fan_in, fan_out)."""

    def __init__(self, layer_sizes=Q_NETWORK_LAYERS, seed: int = 0):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        last = len(self.layer_sizes) - 2
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_sizes, self.layer_sizes[1:])):
            if i == last:
                limit = np.sqrt(6.0 / (fan_in + fan_out))  # Glorot for the linear head
            else:
                limit = np.sqrt(6.0 / fan_in)  # He for ReLU layers
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Network output for a single input vector or a (batch, in) matrix."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"expected input width {self.layer_sizes[0]}, got {a.shape[1]}")
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i != last:
                np.maximum(a, 0.0, out=a)
        return a[0] if single else a

    def _forward_cached(self, x: np.ndarray):
        activations = [x]
        a = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i != last:
                a = np.maximum(a, 0.0)
            activations.append(a)
        return activations

    def loss_and_grads(self, inputs: np.ndarray, targets: np.ndarray):
        """Mean squared error over all outputs, with gradients per parameter."""
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        if x.shape[0] != t.shape[0]:
            raise ValueError("inputs and targets need matching batch sizes")
        if t.shape[1] != self.layer_sizes[-1]:
            raise ValueError(f"expected target width {self.layer_sizes[-1]}")
        acts = self._forward_cached(x)
        y = acts[-1]
        resid = y - t
        loss = float(np.mean(resid * resid))
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss: {loss}")
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        delta = 2.0 * resid / resid.size
        for i in range(self.n_layers - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0.0)
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend((gw, gb))
        return loss, grads

    def clone(self) -> "Mlp":
        copy = Mlp.__new__(Mlp)
        copy.layer_sizes = self.layer_sizes
        copy.weights = [w.copy() for w in self.weights]
        copy.biases = [b.copy() for b in self.biases]
        return copy

    def save(self, stem) -> None:
        """Checkpoint: <stem>.json manifest plus <stem>.bin float64 blob."""
        stem = Path(stem)
        blob = np.concatenate([p.ravel() for p in self.parameters()])
        manifest = {
            "format": 1,
            "layer_sizes": list(self.layer_sizes),
            "dtype": "float64",
            "n_params": int(blob.size),
        }
        stem.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")
        blob.astype("<f8").tofile(stem.with_suffix(".bin"))

    @classmethod
    def load(cls, stem) -> "Mlp":
        stem = Path(stem)
        manifest = json.loads(stem.with_suffix(".json").read_text())
        net = cls(tuple(manifest["layer_sizes"]), seed=0)
        blob = np.fromfile(stem.with_suffix(".bin"), dtype="<f8")
        if blob.size != net.n_params:
            raise ValueError(
                f"checkpoint holds {blob.size} values, expected {net.n_params}"
            )
        offset = 0
        for p in net.parameters():
            p[...] = blob[offset : offset + p.size].reshape(p.shape)
            offset += p.size
        return net


class Adam:
    """Adam over a fixed parameter list; state indexed by parameter position."""

    def __init__(self, params: list[np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def fit_batch(net: Mlp, inputs: np.ndarray, targets: np.ndarray, optimizer: Adam) -> float:
    """One optimizer step on the batch; returns the pre-step loss."""
    loss, grads = net.loss_and_grads(inputs, targets)
    optimizer.step(grads)
    for p in net.parameters():
        if not np.all(np.isfinite(p)):
            raise FloatingPointError("non-finite parameter after optimizer step")
    return loss


def mse_loss(net: Mlp, inputs: np.ndarray, targets: np.ndarray) -> float:
    y = np.atleast_2d(net.forward(inputs))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    resid = y - t
    return float(np.mean(resid * resid))


def finite_difference_grads(
    net: Mlp, inputs: np.ndarray, targets: np.ndarray, h: float = 1e-5
) -> list[np.ndarray]:
    """Central-difference loss gradients; only uses the forward pass."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = mse_loss(net, inputs, targets)
            flat[i] = orig - h
            down = mse_loss(net, inputs, targets)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads
