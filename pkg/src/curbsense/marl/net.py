"""Small fully-connected Q-network in float64 numpy, with Adam.

Hidden layers use rectifiers, the 9-way output is linear. Backprop flows
only through the chosen-action outputs of each batch item (squared TD
error), which is what the gradient check in the test suite verifies against
central finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

MODEL_MAGIC = b"CSQN1"
MODEL_VERSION = 1


@dataclass
class QNet:
    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def create(cls, sizes, seed: int = 0) -> "QNet":
        """Glorot-uniform weights, zero biases, deterministic for a seed."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(list(sizes), weights, biases)

    def forward(self, x: np.ndarray) -> np.ndarray:
        single = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.sizes[0]:
            raise DataError(f"input dim {h.shape[1]} != expected {self.sizes[0]}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h[0] if single else h

    def copy_from(self, other: "QNet") -> None:
        for w, ow in zip(self.weights, other.weights):
            w[...] = ow
        for b, ob in zip(self.biases, other.biases):
            b[...] = ob

    def clone(self) -> "QNet":
        return QNet(
            list(self.sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


def q_forward(net: QNet, s: np.ndarray) -> np.ndarray:
    """Action values for one encoded state (or a batch)."""
    return net.forward(s)


def forward_with_cache(net: QNet, x: np.ndarray):
    """Forward pass keeping pre-activations for backprop."""
    h = np.asarray(x, dtype=np.float64)
    acts = [h]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    return acts


def loss_and_grads(net: QNet, states: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Mean squared TD error over the chosen actions, plus parameter grads."""
    batch = states.shape[0]
    acts = forward_with_cache(net, states)
    out = acts[-1]
    rows = np.arange(batch)
    diff = out[rows, actions] - targets
    loss = float(np.mean(diff**2))

    delta = np.zeros_like(out)
    delta[rows, actions] = 2.0 * diff / batch
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.weights[i].T
            delta[acts[i] <= 0.0] = 0.0  # rectifier gate
    return loss, grads_w, grads_b


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: QNet, lr: float = 1e-3, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            lr, beta1, beta2, eps, 0,
            [np.zeros_like(w) for w in net.weights],
            [np.zeros_like(w) for w in net.weights],
            [np.zeros_like(b) for b in net.biases],
            [np.zeros_like(b) for b in net.biases],
        )


def adam_update(net: QNet, grads_w, grads_b, st: AdamState) -> None:
    st.step += 1
    c1 = 1.0 - st.beta1**st.step
    c2 = 1.0 - st.beta2**st.step
    for i in range(len(net.weights)):
        for p, g, m, v in (
            (net.weights[i], grads_w[i], st.m_w[i], st.v_w[i]),
            (net.biases[i], grads_b[i], st.m_b[i], st.v_b[i]),
        ):
            m *= st.beta1
            m += (1 - st.beta1) * g
            v *= st.beta2
            v += (1 - st.beta2) * g * g
            p -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)


def sync_target(net: QNet, target: QNet, step: int, every: int = 2048) -> bool:
    """Copy training parameters into the target every ``every`` steps."""
    if step % every == 0:
        target.copy_from(net)
        return True
    return False


def save_model(net: QNet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<HI", MODEL_VERSION, len(net.sizes)))
        fh.write(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> QNet:
    with open(path, "rb") as fh:
        if fh.read(len(MODEL_MAGIC)) != MODEL_MAGIC:
            raise DataError(f"{path}: not a model file")
        version, n_sizes = struct.unpack("<HI", fh.read(6))
        if version != MODEL_VERSION:
            raise DataError(f"{path}: unsupported model version {version}")
        sizes = list(struct.unpack(f"<{n_sizes}I", fh.read(4 * n_sizes)))
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            raw = fh.read(8 * fan_in * fan_out)
            if len(raw) != 8 * fan_in * fan_out:
                raise DataError(f"{path}: truncated model file")
            weights.append(np.frombuffer(raw, dtype="<f8").reshape(fan_in, fan_out).copy())
            raw = fh.read(8 * fan_out)
            biases.append(np.frombuffer(raw, dtype="<f8").copy())
        return QNet(sizes, weights, biases)
