#!/usr/bin/env python3
"""
Neural Core

Dense feed-forward classifiers with hand-derived gradients for the composite
loss used to distill experts into a student:

    total = mean_i v_i CE(z_i, y_i) + sum_l w_l mean_i KD_l(z_i)

where KD_l is the cross-entropy between the temperature-softened expert
distribution and the softened student logits restricted to expert l's classes.
Both terms use the batch mean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DatasetFormatError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


# ==================== MODEL ====================

@dataclass
class DenseNet:
    """
    Multilayer perceptron: rectifier hidden layers, linear output (logits).

    weights[k] has shape (layer_dims[k], layer_dims[k+1]) so a batch X of shape
    (B, d) maps through X @ W + b.
    """

    layer_dims: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ShapeError(f"invalid layer dims {self.layer_dims}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("one weight matrix and bias vector per layer expected")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[k], self.layer_dims[k + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape}, expected {expected}")

    @classmethod
    def initialize(cls, layer_dims: Sequence[int], rng: np.random.Generator) -> "DenseNet":
        """Uniform fan-in init: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))"""
        dims = tuple(int(d) for d in layer_dims)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(dims, weights, biases)

    @classmethod
    def zeros(cls, layer_dims: Sequence[int]) -> "DenseNet":
        dims = tuple(int(d) for d in layer_dims)
        return cls(dims,
                   [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
                   [np.zeros(b) for b in dims[1:]])

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "DenseNet":
        return DenseNet(self.layer_dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameters(self) -> List[np.ndarray]:
        """Weights then biases, layer by layer"""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def equals(self, other: "DenseNet") -> bool:
        """Bit-identical parameters"""
        return (self.layer_dims == other.layer_dims
                and all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters())))


def _as_batch(net: DenseNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    batch = x[None, :] if x.ndim == 1 else x
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise ShapeError(f"input of shape {x.shape} does not match input dim {net.input_dim}")
    return batch


def _forward_cached(net: DenseNet, batch: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    activations = [batch]
    pre_activations = []
    h = batch
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre_activations.append(z)
        h = z if k == last else np.maximum(z, 0.0)
        if k != last:
            activations.append(h)
    return h, activations, pre_activations


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Logits for one feature vector (1-d) or a batch (2-d)"""
    logits, _, _ = _forward_cached(net, _as_batch(net, x))
    return logits[0] if np.ndim(x) == 1 else logits


# ==================== LOSSES ====================

def temperature_softmax(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Softmax of z / T along the last axis, max-subtracted"""
    if not temperature > 0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    scaled = np.asarray(z, dtype=np.float64) / temperature
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    e = np.exp(scaled)
    return e / e.sum(axis=-1, keepdims=True)


def log_temperature_softmax(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    if not temperature > 0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    scaled = np.asarray(z, dtype=np.float64) / temperature
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    return scaled - np.log(np.exp(scaled).sum(axis=-1, keepdims=True))


def ce_loss(logits: np.ndarray, label: int) -> float:
    """-log softmax(logits)[label]"""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise ValidationError(f"label {label} out of range for {logits.shape[-1]} classes")
    return float(-log_temperature_softmax(logits)[label])


def kd_loss(expert_logits: np.ndarray, student_slice: np.ndarray, temperature: float) -> float:
    """Cross-entropy -sum_i tau(z)_i log tau(z_hat)_i between softened expert and student slice"""
    expert_logits = np.asarray(expert_logits, dtype=np.float64)
    student_slice = np.asarray(student_slice, dtype=np.float64)
    if expert_logits.shape != student_slice.shape:
        raise ShapeError(f"expert logits {expert_logits.shape} vs student slice {student_slice.shape}")
    p = temperature_softmax(expert_logits, temperature)
    return float(-np.sum(p * log_temperature_softmax(student_slice, temperature)))


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


@dataclass(frozen=True)
class ExpertTarget:
    """Precomputed expert logits for a batch and the student columns they cover."""

    logits: np.ndarray          # (B, |S_l|)
    class_columns: np.ndarray   # student output index of each expert output, ascending class id


@dataclass(frozen=True)
class LossBreakdown:
    weighted_ce: float
    kd_per_expert: Tuple[float, ...]
    total: float


@dataclass
class GradientSet:
    """Per-parameter gradients, shaped like the DenseNet weights and biases."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def parameters(self) -> List[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


def _check_batch(net: DenseNet, batch: np.ndarray, labels: np.ndarray, v: np.ndarray,
                 experts: Sequence[ExpertTarget], w: Sequence[float]):
    b = batch.shape[0]
    if labels.shape != (b,) or v.shape != (b,):
        raise ShapeError(f"labels {labels.shape} and weights {v.shape} must both be ({b},)")
    if b and (labels.min() < 0 or labels.max() >= net.output_dim):
        raise ShapeError(f"labels outside 0..{net.output_dim - 1}")
    if len(w) != len(experts):
        raise ShapeError(f"{len(w)} expert weights for {len(experts)} experts")
    for target in experts:
        if target.logits.shape != (b, len(target.class_columns)):
            raise ShapeError(f"expert logits {target.logits.shape} do not cover "
                             f"{len(target.class_columns)} classes for batch {b}")
        if len(target.class_columns) and target.class_columns.max() >= net.output_dim:
            raise ShapeError("expert class column outside student output")


def _loss_terms(logits: np.ndarray, labels: np.ndarray, v: np.ndarray,
                experts: Sequence[ExpertTarget], temperature: float, kd_scale: float):
    """Per-part losses and the matching gradients w.r.t. the student logits"""
    b = logits.shape[0]
    log_probs = log_temperature_softmax(logits)
    rows = np.arange(b)
    ce = -log_probs[rows, labels]
    weighted_ce = float(np.sum(v * ce)) / b

    grad_ce = np.exp(log_probs)
    grad_ce[rows, labels] -= 1.0
    grad_ce *= (v / b)[:, None]

    kd_values, kd_grads = [], []
    for target in experts:
        columns = np.asarray(target.class_columns, dtype=np.int64)
        p = temperature_softmax(target.logits, temperature)
        log_q = log_temperature_softmax(logits[:, columns], temperature)
        kd_values.append(kd_scale * float(-np.sum(p * log_q)) / b)
        # d/dz_hat of -sum p log softmax(z_hat / T) = (q - p) / T, since sum p = 1
        kd_grads.append((columns, kd_scale * (np.exp(log_q) - p) / (temperature * b)))
    return weighted_ce, grad_ce, kd_values, kd_grads


def _backward(net: DenseNet, grad_logits: np.ndarray, activations: List[np.ndarray],
              pre_activations: List[np.ndarray]) -> GradientSet:
    grads_w: List[np.ndarray] = [None] * len(net.weights)
    grads_b: List[np.ndarray] = [None] * len(net.biases)
    delta = grad_logits
    for k in range(len(net.weights) - 1, -1, -1):
        grads_w[k] = activations[k].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ net.weights[k].T) * (pre_activations[k - 1] > 0)
    return GradientSet(grads_w, grads_b)


def loss_and_gradients(net: DenseNet,
                       batch: np.ndarray,
                       labels: np.ndarray,
                       v: np.ndarray,
                       experts: Sequence[ExpertTarget] = (),
                       w: Sequence[float] = (),
                       temperature: float = 2.0,
                       kd_t2_scaling: bool = False) -> Tuple[LossBreakdown, GradientSet]:
    """
    Composite loss and exact gradients for one batch.

    Expert logits are constants. Experts with w_l == 0 contribute nothing to the
    gradient, although their KD value is still reported.
    """
    batch = _as_batch(net, batch)
    labels = np.asarray(labels, dtype=np.int64)
    v = np.asarray(v, dtype=np.float64)
    w = [float(x) for x in w]
    _check_batch(net, batch, labels, v, experts, w)

    kd_scale = temperature ** 2 if kd_t2_scaling else 1.0
    logits, activations, pre_activations = _forward_cached(net, batch)
    weighted_ce, grad_logits, kd_values, kd_grads = _loss_terms(
        logits, labels, v, experts, temperature, kd_scale)

    for weight, (columns, grad) in zip(w, kd_grads):
        if weight == 0.0:
            continue
        np.add.at(grad_logits, (slice(None), columns), weight * grad)

    total = weighted_ce + sum(weight * value for weight, value in zip(w, kd_values))
    breakdown = LossBreakdown(weighted_ce=weighted_ce, kd_per_expert=tuple(kd_values), total=total)
    return breakdown, _backward(net, grad_logits, activations, pre_activations)


def total_loss(net: DenseNet, batch: np.ndarray, labels: np.ndarray, v: np.ndarray,
               experts: Sequence[ExpertTarget] = (), w: Sequence[float] = (),
               temperature: float = 2.0, kd_t2_scaling: bool = False) -> float:
    """Loss value only; used for finite differences"""
    batch = _as_batch(net, batch)
    logits, _, _ = _forward_cached(net, batch)
    kd_scale = temperature ** 2 if kd_t2_scaling else 1.0
    weighted_ce, _, kd_values, _ = _loss_terms(
        logits, np.asarray(labels, dtype=np.int64), np.asarray(v, dtype=np.float64),
        experts, temperature, kd_scale)
    return weighted_ce + sum(float(a) * b for a, b in zip(w, kd_values))


# ==================== OPTIMIZER ====================

@dataclass
class SGDState:
    """Momentum buffers, created lazily on the first step"""

    weight_velocity: Optional[List[np.ndarray]] = None
    bias_velocity: Optional[List[np.ndarray]] = None
    steps: int = 0


def sgd_step(net: DenseNet, grads: GradientSet, lr: float, momentum: float = 0.9,
             weight_decay: float = 0.0, state: Optional[SGDState] = None) -> Tuple[DenseNet, SGDState]:
    """
    Classic momentum SGD returning a new net and state:
        g <- g + weight_decay * W   (weights only, biases are not decayed)
        buf <- momentum * buf + g
        W <- W - lr * buf
    """
    state = state or SGDState()
    if len(grads.weights) != len(net.weights):
        raise ShapeError("gradient set does not match network depth")
    if not grads.is_finite():
        raise ValidationError("non-finite gradient; lower the learning rate or check the inputs")
    weight_velocity = state.weight_velocity or [np.zeros_like(w) for w in net.weights]
    bias_velocity = state.bias_velocity or [np.zeros_like(b) for b in net.biases]

    new_weights, new_biases, new_wv, new_bv = [], [], [], []
    for w, b, gw, gb, vw, vb in zip(net.weights, net.biases, grads.weights, grads.biases,
                                    weight_velocity, bias_velocity):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ShapeError(f"gradient shape {gw.shape} does not match parameter {w.shape}")
        if weight_decay:
            gw = gw + weight_decay * w
        vw = momentum * vw + gw
        vb = momentum * vb + gb
        new_weights.append(w - lr * vw)
        new_biases.append(b - lr * vb)
        new_wv.append(vw)
        new_bv.append(vb)

    return (DenseNet(net.layer_dims, new_weights, new_biases),
            SGDState(new_wv, new_bv, state.steps + 1))


# ==================== GRADIENT CHECK ====================

@dataclass(frozen=True)
class GradCheckConfig:
    max_input_dim: int = 8
    max_hidden: int = 16
    max_classes: int = 10
    max_experts: int = 3
    temperatures: Tuple[float, ...] = (1.0, 2.0, 4.0)
    batch_size: int = 4
    step: float = 1e-5
    kd_t2_scaling: bool = False
    # pre-activations closer than this to the rectifier kink are redrawn
    kink_margin: float = 1e-3


@dataclass(frozen=True)
class GradCheckReport:
    passed: bool
    trials: int
    tolerance: float
    max_relative_error: float
    per_trial: Tuple[float, ...] = field(default_factory=tuple)

    def to_dict(self):
        return {"passed": self.passed, "trials": self.trials, "tolerance": self.tolerance,
                "max_relative_error": self.max_relative_error, "per_trial": list(self.per_trial)}


def gradient_errors(net: DenseNet, batch: np.ndarray, labels: np.ndarray, v: np.ndarray,
                    experts: Sequence[ExpertTarget], w: Sequence[float], temperature: float,
                    step: float = 1e-5, kd_t2_scaling: bool = False) -> float:
    """
    Max relative error between analytic and central-difference gradients,
    |a - n| / max(|a| + |n|, 1e-4) over every parameter entry.
    """
    _, grads = loss_and_gradients(net, batch, labels, v, experts, w, temperature, kd_t2_scaling)
    shifted = net.copy()
    worst = 0.0
    for param, analytic in zip(shifted.parameters(), grads.parameters()):
        flat = param.reshape(-1)
        flat_grad = analytic.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up = total_loss(shifted, batch, labels, v, experts, w, temperature, kd_t2_scaling)
            flat[i] = original - step
            down = total_loss(shifted, batch, labels, v, experts, w, temperature, kd_t2_scaling)
            flat[i] = original
            numeric = (up - down) / (2.0 * step)
            error = abs(flat_grad[i] - numeric) / max(abs(flat_grad[i]) + abs(numeric), 1e-4)
            worst = max(worst, error)
    return worst


def _random_problem(rng: np.random.Generator, config: GradCheckConfig):
    d = int(rng.integers(1, config.max_input_dim + 1))
    hidden = int(rng.integers(1, config.max_hidden + 1))
    c = int(rng.integers(2, config.max_classes + 1))
    num_experts = int(rng.integers(1, min(config.max_experts, c) + 1))

    while True:
        net = DenseNet.initialize((d, hidden, c), rng)
        net.weights[0] *= 2.0
        batch = rng.standard_normal((config.batch_size, d))
        z = batch @ net.weights[0] + net.biases[0]
        if np.min(np.abs(z)) > config.kink_margin:
            break

    labels = rng.integers(0, c, size=config.batch_size)
    v = rng.uniform(0.0, 1.0, size=config.batch_size)
    cuts = np.sort(rng.choice(np.arange(1, c), size=num_experts - 1, replace=False))
    experts = [ExpertTarget(logits=rng.standard_normal((config.batch_size, len(cols))) * 2.0,
                            class_columns=cols)
               for cols in np.split(np.arange(c), cuts)]
    w = rng.uniform(0.0, 1.0, size=num_experts).tolist()
    temperature = float(rng.choice(config.temperatures))
    return net, batch, labels, v, experts, w, temperature


def grad_check(config: Optional[GradCheckConfig] = None, trials: int = 20,
               tolerance: float = 1e-5, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients with central differences on random problems"""
    config = config or GradCheckConfig()
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(trials):
        net, batch, labels, v, experts, w, temperature = _random_problem(rng, config)
        errors.append(gradient_errors(net, batch, labels, v, experts, w, temperature,
                                      config.step, config.kd_t2_scaling))
    worst = max(errors) if errors else 0.0
    return GradCheckReport(passed=worst < tolerance, trials=trials, tolerance=tolerance,
                           max_relative_error=worst, per_trial=tuple(errors))


# ==================== CHECKPOINTS ====================

def save_checkpoint(net: DenseNet, path: Union[str, Path]):
    arrays = {"version": np.array(CHECKPOINT_VERSION), "layer_dims": np.array(net.layer_dims)}
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{k}"] = w
        arrays[f"b{k}"] = b
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path: Union[str, Path]) -> DenseNet:
    with np.load(path, allow_pickle=False) as data:
        if "version" not in data.files or int(data["version"]) != CHECKPOINT_VERSION:
            raise DatasetFormatError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint")
        dims = tuple(int(d) for d in data["layer_dims"])
        weights = [np.array(data[f"W{k}"], dtype=np.float64) for k in range(len(dims) - 1)]
        biases = [np.array(data[f"b{k}"], dtype=np.float64) for k in range(len(dims) - 1)]
    return DenseNet(dims, weights, biases)
