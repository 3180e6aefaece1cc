"""Dense neural network kernels: forward, backward, grouped softmax, Adam.

The same machinery drives both the generator (grouped-softmax head over
the design variables' one-hot blocks) and the discriminator (a single
2-way block). Everything is plain numpy float64; inputs may be a single
vector or a (batch, features) matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


class NnError(ValueError):
    pass


@dataclass
class Mlp:
    """Fully connected ReLU network with a block-softmax output head."""

    sizes: tuple[int, ...]
    head_blocks: tuple[int, ...]
    weights: list[np.ndarray]  # (fan_in, fan_out) per layer
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise NnError("need at least input and output sizes")
        if sum(self.head_blocks) != self.sizes[-1]:
            raise NnError(
                f"head blocks {self.head_blocks} must sum to output size "
                f"{self.sizes[-1]}"
            )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (
                self.sizes[i + 1],
            ):
                raise NnError(f"layer {i} parameter shape mismatch")

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def output_size(self) -> int:
        return self.sizes[-1]


def init_mlp(sizes: Sequence[int], head_blocks: Sequence[int], seed: int) -> Mlp:
    """He-style uniform init, range +-sqrt(6 / fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    sizes = tuple(int(s) for s in sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        lim = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, tuple(int(b) for b in head_blocks), weights, biases)


def count_parameters(mlp: Mlp) -> int:
    return sum(w.size + b.size for w, b in zip(mlp.weights, mlp.biases))


def mlp_width_for_params(
    target: int, input_size: int, output_size: int, hidden_layers: int
) -> int:
    """Smallest hidden width whose parameter count reaches ``target``."""

    def params(w):
        sizes = [input_size] + [w] * hidden_layers + [output_size]
        return sum(a * b + b for a, b in zip(sizes, sizes[1:]))

    lo, hi = 1, 1
    while params(hi) < target:
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if params(mid) >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def grouped_softmax(logits: np.ndarray, blocks: Sequence[int]) -> np.ndarray:
    """Softmax applied independently to each consecutive block of columns."""
    out = np.empty_like(logits)
    off = 0
    for size in blocks:
        z = logits[..., off : off + size]
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        out[..., off : off + size] = e / e.sum(axis=-1, keepdims=True)
        off += size
    return out


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each affine layer, 2-D
    relu_mask: list[np.ndarray]
    probs: np.ndarray
    squeeze: bool


def forward(mlp: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Affine + ReLU hidden layers, block softmax head.

    Accepts a single vector or a (batch, input) matrix; the output has
    the matching shape. Every head block sums to 1.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != mlp.input_size:
        raise NnError(f"input has {h.shape[1]} features, expected {mlp.input_size}")
    inputs, masks = [], []
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        inputs.append(h)
        z = h @ w + b
        if i < last:
            mask = z > 0
            masks.append(mask)
            h = np.where(mask, z, 0.0)
        else:
            h = z
    probs = grouped_softmax(h, mlp.head_blocks)
    cache = ForwardCache(inputs, masks, probs, squeeze)
    return (probs[0] if squeeze else probs), cache


def cross_entropy(
    probs: np.ndarray, target: np.ndarray, blocks: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Mean over blocks of -log p(target); gradient taken at the logits.

    For softmax blocks the loss gradient with respect to the logits is
    (p - target) / num_blocks. Probabilities are floored at 1e-12 inside
    the log so an exactly-zero target probability stays finite.
    """
    probs = np.asarray(probs, dtype=float)
    target = np.asarray(target, dtype=float)
    if probs.shape != target.shape:
        raise NnError("probs and target shapes differ")
    p2, t2 = np.atleast_2d(probs), np.atleast_2d(target)
    losses = np.zeros(p2.shape[0])
    off = 0
    for size in blocks:
        p_t = (p2[:, off : off + size] * t2[:, off : off + size]).sum(axis=1)
        losses += -np.log(np.maximum(p_t, PROB_FLOOR))
        off += size
    losses /= len(blocks)
    grad = (p2 - t2) / len(blocks)
    if probs.ndim == 1:
        return float(losses[0]), grad[0]
    return losses, grad


def softmax_backward(
    probs: np.ndarray, dprobs: np.ndarray, blocks: Sequence[int]
) -> np.ndarray:
    """Pull a gradient w.r.t. block-softmax outputs back to the logits."""
    p2 = np.atleast_2d(np.asarray(probs, dtype=float))
    d2 = np.atleast_2d(np.asarray(dprobs, dtype=float))
    out = np.empty_like(p2)
    off = 0
    for size in blocks:
        p = p2[:, off : off + size]
        d = d2[:, off : off + size]
        inner = (p * d).sum(axis=1, keepdims=True)
        out[:, off : off + size] = p * (d - inner)
        off += size
    return out[0] if np.asarray(probs).ndim == 1 else out


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def backward(
    mlp: Mlp, cache: ForwardCache, dlogits: np.ndarray
) -> tuple[Gradients, np.ndarray]:
    """Exact reverse-mode gradients from a gradient at the head logits.

    Returns parameter gradients (summed over the batch) and the gradient
    with respect to the network input. The ReLU subgradient at 0 is 0.
    """
    d = np.atleast_2d(np.asarray(dlogits, dtype=float))
    if d.shape != (cache.inputs[0].shape[0], mlp.output_size):
        raise NnError("gradient shape does not match the forward cache")
    dws = [None] * len(mlp.weights)
    dbs = [None] * len(mlp.biases)
    for i in range(len(mlp.weights) - 1, -1, -1):
        x = cache.inputs[i]
        if x.shape[0] != d.shape[0]:
            raise NnError("stale cache: batch size mismatch")
        dws[i] = x.T @ d
        dbs[i] = d.sum(axis=0)
        d = d @ mlp.weights[i].T
        if i > 0:
            d = d * cache.relu_mask[i - 1]
    dinput = d[0] if cache.squeeze else d
    return Gradients(dws, dbs), dinput


def clip_gradients(grads: Gradients, max_norm: float) -> Gradients:
    """Scale all gradients down so their global L2 norm is <= max_norm."""
    sq = sum(float((g ** 2).sum()) for g in grads.weights + grads.biases)
    norm = np.sqrt(sq)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return Gradients(
        [g * scale for g in grads.weights], [g * scale for g in grads.biases]
    )


@dataclass
class AdamState:
    """First/second moment estimates mirroring the parameter shapes."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_mlp(cls, mlp: Mlp) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in mlp.weights],
            v_w=[np.zeros_like(w) for w in mlp.weights],
            m_b=[np.zeros_like(b) for b in mlp.biases],
            v_b=[np.zeros_like(b) for b in mlp.biases],
        )


def adam_step(mlp: Mlp, grads: Gradients, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for params, gs, ms, vs in (
        (mlp.weights, grads.weights, state.m_w, state.v_w),
        (mlp.biases, grads.biases, state.m_b, state.v_b),
    ):
        for p, g, m, v in zip(params, gs, ms, vs):
            if g.shape != p.shape:
                raise NnError("gradient shape mismatch")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def save_weights(mlp: Mlp, path: str | Path) -> None:
    arrays = {
        "version": np.array([CHECKPOINT_VERSION]),
        "sizes": np.array(mlp.sizes),
        "head_blocks": np.array(mlp.head_blocks),
    }
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    with open(path, "wb") as fh:  # keep the exact path; np.savez appends .npz
        np.savez(fh, **arrays)


def load_weights(
    path: str | Path, expected_blocks: Sequence[int] | None = None
) -> Mlp:
    """Load a checkpoint; optionally demand a specific head descriptor."""
    with np.load(path) as data:
        version = int(data["version"][0])
        if version != CHECKPOINT_VERSION:
            raise NnError(f"unsupported checkpoint version {version}")
        sizes = tuple(int(s) for s in data["sizes"])
        blocks = tuple(int(b) for b in data["head_blocks"])
        if expected_blocks is not None and blocks != tuple(expected_blocks):
            raise NnError(
                f"checkpoint head blocks {blocks} do not match the expected "
                f"descriptor {tuple(expected_blocks)}"
            )
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            weights.append(np.array(data[f"w{i}"]))
            biases.append(np.array(data[f"b{i}"]))
    return Mlp(sizes, blocks, weights, biases)
