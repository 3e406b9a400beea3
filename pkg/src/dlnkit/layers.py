"""Threshold, logic and sum layers with soft (training) and hard (inference) passes.

All soft passes work on batches: ``x`` has shape ``(n_samples, in_dim)``.
``soft_forward`` returns ``(y, cache)``; ``backward(grad_y, cache)`` returns
``(param_grads, grad_x)`` with exact gradients of the relaxed expressions.
With a straight-through flag the forward value is the discretized one and the
gradient is that of the relaxation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .logic_kernel import COEFFS, NUM_OPS, hard_logic_array, soft_logic_array

SUM_THRESHOLD = 0.8
# Sigmoid(z) >= 0.8  <=>  z >= ln(0.8 / 0.2) = ln 4; compared in logit space so
# the boundary is exact (0.8 / (1 - 0.8) rounds to 4.000000000000001).
SUM_LOGIT_THRESHOLD = math.log(4.0)
INIT_SLOPE = 2.0
INIT_WEIGHT_STD = 0.1


class TemperatureError(ValueError):
    pass


class StructureError(ValueError):
    pass


@dataclass
class SteFlags:
    threshold: bool = False
    logic: bool = False
    sum: bool = False


def check_tau(tau: float) -> float:
    if not (np.isfinite(tau) and tau > 0):
        raise TemperatureError(f"temperature must be positive and finite, got {tau!r}")
    return float(tau)


def _check_input(x, in_dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != in_dim:
        raise StructureError(f"expected input of shape (n, {in_dim}), got {x.shape}")
    return x


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise softmax restricted to ``mask``; masked entries get exactly 0."""
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def masked_argmax(weights: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return np.argmax(np.where(mask, weights, -np.inf), axis=1)


def _softmax_backward(p: np.ndarray, grad_p: np.ndarray, tau: float) -> np.ndarray:
    return p * (grad_p - (p * grad_p).sum(axis=1, keepdims=True)) / tau


# --------------------------------------------------------------------------
# ThresholdLayer


@dataclass
class ThresholdLayer:
    bias: np.ndarray
    slope: np.ndarray
    input_index: np.ndarray
    group_size: int

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.slope = np.asarray(self.slope, dtype=np.float64)
        self.input_index = np.asarray(self.input_index, dtype=np.int64)
        if not (self.bias.shape == self.slope.shape == self.input_index.shape):
            raise StructureError("bias, slope and input_index must have equal length")

    @property
    def width(self) -> int:
        return int(self.bias.shape[0])

    @classmethod
    def from_data(cls, x, labels, columns, group_size: int) -> "ThresholdLayer":
        """One group of ``group_size`` neurons per column in ``columns``, tree-initialized."""
        x = np.asarray(x, dtype=np.float64)
        biases, slopes, index = [], [], []
        for col in columns:
            b, s = threshold_init_from_tree(x[:, col], labels, group_size)
            biases.append(b)
            slopes.append(s)
            index.append(np.full(group_size, col, dtype=np.int64))
        if not columns:
            return cls(np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64), group_size)
        return cls(np.concatenate(biases), np.concatenate(slopes), np.concatenate(index), group_size)

    def soft_forward(self, x, tau: float, ste: bool = False):
        tau = check_tau(tau)
        x = np.asarray(x, dtype=np.float64)
        if self.width and x.ndim == 2 and self.input_index.max() >= x.shape[1]:
            raise StructureError("threshold input_index exceeds input width")
        xg = x[:, self.input_index]
        diff = xg - self.bias
        y_soft = expit(self.slope * diff / tau)
        y = self.hard_forward(x).astype(np.float64) if ste else y_soft
        return y, (x, diff, y_soft, tau)

    def hard_forward(self, x) -> np.ndarray:
        # Heaviside(s * (x - b)) with Heaviside(0) = 1, written without the product
        xg = np.asarray(x, dtype=np.float64)[:, self.input_index]
        pos = (xg >= self.bias) & (self.slope > 0)
        neg = (xg <= self.bias) & (self.slope < 0)
        return (pos | neg | (self.slope == 0)).astype(np.uint8)

    def backward(self, grad_y, cache):
        x, diff, y, tau = cache
        grad_y = np.asarray(grad_y, dtype=np.float64)
        if grad_y.shape != y.shape:
            raise StructureError(f"gradient shape {grad_y.shape} != output shape {y.shape}")
        gz = grad_y * y * (1.0 - y) / tau
        grads = {
            "bias": -(gz * self.slope).sum(axis=0),
            "slope": (gz * diff).sum(axis=0),
        }
        grad_x = np.zeros_like(x)
        np.add.at(grad_x.T, self.input_index, (gz * self.slope).T)
        return grads, grad_x


def _best_gini_split(x: np.ndarray, y: np.ndarray):
    """Best single split of ``(x, y)`` by weighted Gini impurity, or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    classes = np.unique(y)
    onehot = (ys[:, None] == classes[None, :]).astype(np.float64)
    left = np.cumsum(onehot, axis=0)[:-1]
    total = onehot.sum(axis=0)
    right = total - left
    n_left = np.arange(1, len(xs), dtype=np.float64)
    n_right = len(xs) - n_left
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    gini_l = 1.0 - ((left / n_left[:, None]) ** 2).sum(axis=1)
    gini_r = 1.0 - ((right / n_right[:, None]) ** 2).sum(axis=1)
    impurity = (n_left * gini_l + n_right * gini_r) / len(xs)
    impurity[~valid] = np.inf
    i = int(np.argmin(impurity))
    parent = 1.0 - ((total / len(xs)) ** 2).sum()
    return (xs[i] + xs[i + 1]) / 2.0, parent - impurity[i]


def threshold_init_from_tree(x_column, labels, group_size: int):
    """Biases from a single-feature Gini tree grown best-first to ``group_size`` splits.

    Missing splits are filled with evenly spaced quantiles of the column.
    Returns ``(bias, slope)``, sorted biases and slopes of 2.
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    x = np.asarray(x_column, dtype=np.float64)
    y = np.asarray(labels)
    slope = np.full(group_size, INIT_SLOPE)
    if x.size == 0 or np.all(x == x[0]):
        return np.full(group_size, 0.5), slope

    splits: list[float] = []
    # best-first growth: repeatedly split the leaf with the largest weighted gain
    leaves = [np.arange(len(x))]
    candidates = {}
    while len(splits) < group_size:
        best = None
        for li, idx in enumerate(leaves):
            if li not in candidates:
                found = _best_gini_split(x[idx], y[idx])
                candidates[li] = None if found is None else (found[0], found[1] * len(idx))
            c = candidates[li]
            if c is not None and c[1] > 1e-12 and (best is None or c[1] > best[1][1]):
                best = (li, c)
        if best is None:
            break
        li, (thr, _) = best
        idx = leaves[li]
        leaves[li] = idx[x[idx] <= thr]
        leaves.append(idx[x[idx] > thr])
        del candidates[li]
        splits.append(float(thr))

    missing = group_size - len(splits)
    if missing:
        qs = np.linspace(0.0, 1.0, missing + 2)[1:-1]
        splits.extend(np.quantile(x, qs).tolist())
    return np.sort(np.clip(np.array(splits), 0.0, 1.0)), slope


# --------------------------------------------------------------------------
# LogicLayer


@dataclass
class LogicLayer:
    gate_weights: np.ndarray
    link_a_weights: np.ndarray
    link_b_weights: np.ndarray
    gate_mask: np.ndarray
    link_a_mask: np.ndarray
    link_b_mask: np.ndarray

    def __post_init__(self):
        out = self.gate_weights.shape[0]
        if self.gate_weights.shape != (out, NUM_OPS) or self.gate_mask.shape != (out, NUM_OPS):
            raise StructureError("gate weights and mask must be (out, 16)")
        shape = self.link_a_weights.shape
        for arr in (self.link_b_weights, self.link_a_mask, self.link_b_mask):
            if arr.shape != shape:
                raise StructureError("link weights and masks must share shape (out, in)")
        for m in (self.gate_mask, self.link_a_mask, self.link_b_mask):
            if out and not m.any(axis=1).all():
                raise StructureError("every neuron needs a non-empty candidate mask")

    @property
    def in_dim(self) -> int:
        return int(self.link_a_weights.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.gate_weights.shape[0])

    @classmethod
    def init(cls, in_dim: int, out_dim: int, subset_gate_num: int, subset_link_num: int,
             rng: np.random.Generator) -> "LogicLayer":
        if in_dim < 1 or out_dim < 1:
            raise StructureError("logic layer dimensions must be positive")

        def sample_mask(n_choices, k):
            mask = np.zeros((out_dim, n_choices), dtype=bool)
            k = min(k, n_choices)
            for i in range(out_dim):
                mask[i, rng.choice(n_choices, size=k, replace=False)] = True
            return mask

        gate_mask = sample_mask(NUM_OPS, subset_gate_num)
        link_a_mask = sample_mask(in_dim, subset_link_num)
        link_b_mask = sample_mask(in_dim, subset_link_num)
        return cls(
            gate_weights=rng.normal(0.0, INIT_WEIGHT_STD, (out_dim, NUM_OPS)),
            link_a_weights=rng.normal(0.0, INIT_WEIGHT_STD, (out_dim, in_dim)),
            link_b_weights=rng.normal(0.0, INIT_WEIGHT_STD, (out_dim, in_dim)),
            gate_mask=gate_mask,
            link_a_mask=link_a_mask,
            link_b_mask=link_b_mask,
        )

    def choices(self):
        """Discrete (gate, link_a, link_b) per neuron; ties go to the lowest index."""
        return (
            masked_argmax(self.gate_weights, self.gate_mask),
            masked_argmax(self.link_a_weights, self.link_a_mask),
            masked_argmax(self.link_b_weights, self.link_b_mask),
        )

    def soft_forward(self, x, tau: float, ste: bool = False):
        tau = check_tau(tau)
        x = _check_input(x, self.in_dim)
        p = masked_softmax(self.gate_weights / tau, self.gate_mask)
        alpha = masked_softmax(self.link_a_weights / tau, self.link_a_mask)
        beta = masked_softmax(self.link_b_weights / tau, self.link_b_mask)
        a = x @ alpha.T
        b = x @ beta.T
        c = p @ COEFFS  # (out, 4) mixture polynomial
        y = c[:, 0] + c[:, 1] * a + c[:, 2] * b + c[:, 3] * a * b
        if ste:
            k, ia, ib = self.choices()
            y = soft_logic_array(k[None, :], x[:, ia], x[:, ib])
        return y, (x, p, alpha, beta, a, b, c, tau)

    def hard_forward(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise StructureError(f"expected input of shape (n, {self.in_dim}), got {x.shape}")
        k, ia, ib = self.choices()
        return hard_logic_array(k[None, :], x[:, ia], x[:, ib]).astype(np.uint8)

    def backward(self, grad_y, cache):
        x, p, alpha, beta, a, b, c, tau = cache
        g = np.asarray(grad_y, dtype=np.float64)
        if g.shape != a.shape:
            raise StructureError(f"gradient shape {g.shape} != output shape {a.shape}")
        ga = g * (c[:, 1] + c[:, 3] * b)
        gb = g * (c[:, 2] + c[:, 3] * a)
        grad_c = np.stack([g.sum(axis=0), (g * a).sum(axis=0), (g * b).sum(axis=0),
                           (g * a * b).sum(axis=0)], axis=1)
        grad_p = grad_c @ COEFFS.T
        grad_alpha = ga.T @ x
        grad_beta = gb.T @ x
        grads = {
            "gate_weights": _softmax_backward(p, grad_p, tau),
            "link_a_weights": _softmax_backward(alpha, grad_alpha, tau),
            "link_b_weights": _softmax_backward(beta, grad_beta, tau),
        }
        return grads, ga @ alpha + gb @ beta


# --------------------------------------------------------------------------
# SumLayer


@dataclass
class SumLayer:
    link_weights: np.ndarray
    sum_threshold: float = field(default=SUM_THRESHOLD, init=False)

    @property
    def num_classes(self) -> int:
        return int(self.link_weights.shape[1])

    @property
    def in_dim(self) -> int:
        return int(self.link_weights.shape[0])

    @classmethod
    def init(cls, in_dim: int, num_classes: int, rng: np.random.Generator) -> "SumLayer":
        return cls(rng.normal(0.0, INIT_WEIGHT_STD, (in_dim, num_classes)))

    def connections(self, tau: float) -> np.ndarray:
        """Boolean (in, C) matrix of connections with Sigmoid(S / tau) >= 0.8."""
        return self.link_weights / check_tau(tau) >= SUM_LOGIT_THRESHOLD

    def soft_forward(self, x, tau: float, ste: bool = False):
        tau = check_tau(tau)
        x = _check_input(x, self.in_dim)
        gate = expit(self.link_weights / tau)
        y = x @ (self.connections(tau).astype(np.float64) if ste else gate)
        return y, (x, gate, tau)

    def hard_forward(self, x, tau: float) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise StructureError(f"expected input of shape (n, {self.in_dim}), got {x.shape}")
        return x.astype(np.int64) @ self.connections(tau).astype(np.int64)

    def backward(self, grad_y, cache):
        x, gate, tau = cache
        g = np.asarray(grad_y, dtype=np.float64)
        if g.shape != (x.shape[0], self.num_classes):
            raise StructureError(f"gradient shape {g.shape} does not match sum output")
        grads = {"link_weights": (x.T @ g) * gate * (1.0 - gate) / tau}
        return grads, g @ gate.T
