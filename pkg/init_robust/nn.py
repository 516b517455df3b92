#!/usr/bin/env python3
"""
GCN / GIN / MLP models, cross-entropy, reverse-mode gradients and
full-batch gradient descent with trajectory recording
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ContractError,
    DivergenceError,
    SmoothnessEstimateError,
)
from .graph import Graph, NormalizedAdjacency, normalize_dense, normalize_dense_backward
from .initializers import InitScheme, initialize
from .linalg import as_matrix, spectral_norm


logger = logging.getLogger(__name__)

DEFAULT_ETA = 1e-2
DEFAULT_EPOCHS = 300
DEFAULT_HIDDEN = 16
SMOOTHNESS_INFLATION = 1.5
WSTAR_GRAD_TOL = 1e-3


class Arch(str, Enum):
    GCN = "gcn"
    GIN = "gin"
    MLP = "mlp"


class Activation(str, Enum):
    TANH = "tanh"
    RELU = "relu"
    IDENTITY = "identity"

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.TANH:
            return np.tanh(z)
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        return z

    def derivative_from_output(self, h: np.ndarray) -> np.ndarray:
        """phi'(z) expressed through h = phi(z)"""
        if self is Activation.TANH:
            return 1.0 - h * h
        if self is Activation.RELU:
            return (h > 0).astype(np.float64)
        return np.ones_like(h)


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray
    bias: Optional[np.ndarray] = None
    activation: Activation = Activation.TANH

    @property
    def in_dim(self) -> int:
        return int(self.weights.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.weights.shape[1])


@dataclass(frozen=True)
class Model:
    """Ordered layers; weights are stored (in_dim, out_dim) and act on rows"""

    arch: Arch
    layers: Tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "arch", Arch(self.arch))
        layers = tuple(self.layers)
        if not layers:
            raise ContractError("model needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ContractError(
                    f"layer dimensions do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )
        if self.arch is not Arch.MLP and any(layer.bias is not None for layer in layers):
            raise ContractError(f"{self.arch.value} layers carry no bias")
        if layers[-1].activation is not Activation.IDENTITY:
            raise ContractError("last layer must use the identity activation (logits)")
        object.__setattr__(self, "layers", layers)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        return [layer.weights.shape for layer in self.layers]

    def params(self) -> List[np.ndarray]:
        """Flat parameter list: all weights, then the biases that exist"""
        weights = [layer.weights for layer in self.layers]
        biases = [layer.bias for layer in self.layers if layer.bias is not None]
        return weights + biases

    def with_params(self, params: Sequence[np.ndarray]) -> "Model":
        count = self.num_layers
        weights = list(params[:count])
        biases = iter(params[count:])
        layers = []
        for layer, w in zip(self.layers, weights):
            b = next(biases) if layer.bias is not None else None
            layers.append(replace(layer, weights=np.array(w), bias=None if b is None else np.array(b)))
        return Model(self.arch, tuple(layers))

    def weight_norms(self) -> List[float]:
        return [spectral_norm(layer.weights) for layer in self.layers]


def build_model(
    arch: Arch,
    dims: Sequence[int],
    scheme: InitScheme,
    seed: int,
    activation: Activation = Activation.TANH,
) -> Model:
    """Initialize a model with layer sizes dims[0] -> dims[1] -> ... -> dims[-1].

    Layer l draws its weights with seed ``seed * 1000 + l``; MLP biases start
    at zero.
    """
    arch = Arch(arch)
    activation = Activation(activation)
    if len(dims) < 2:
        raise ContractError("dims needs an input and an output size")
    layers = []
    for index, (rows, cols) in enumerate(zip(dims, dims[1:])):
        weights = initialize(scheme, rows, cols, seed * 1000 + index)
        bias = np.zeros(cols) if arch is Arch.MLP else None
        last = index == len(dims) - 2
        layers.append(Layer(weights, bias, Activation.IDENTITY if last else activation))
    return Model(arch, tuple(layers))


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------


@dataclass
class ForwardContext:
    """Intermediates kept for backward.

    ``operator`` is the propagation matrix (Â for GCN, I + A for GIN, None
    for MLP); ``adjacency`` is the raw adjacency it was built from.
    """

    arch: Arch
    hiddens: List[np.ndarray]
    operator: Optional[np.ndarray] = None
    adjacency: Optional[np.ndarray] = None
    self_loops: bool = False

    @property
    def logits(self) -> np.ndarray:
        return self.hiddens[-1]


def _propagate(model: Model, operator: Optional[np.ndarray], x) -> List[np.ndarray]:
    x = as_matrix(x, "x")
    if x.shape[1] != model.layers[0].in_dim:
        raise ContractError(
            f"input has {x.shape[1]} features, model expects {model.layers[0].in_dim}"
        )
    if operator is not None and operator.shape[1] != x.shape[0]:
        raise ContractError(f"operator {operator.shape} cannot act on {x.shape[0]} rows")
    hiddens = [x]
    h = x
    for layer in model.layers:
        agg = h if operator is None else operator @ h
        z = agg @ layer.weights
        if layer.bias is not None:
            z = z + layer.bias
        h = layer.activation.apply(z)
        hiddens.append(h)
    return hiddens


def _require_arch(model: Model, arch: Arch):
    if model.arch is not arch:
        raise ContractError(f"expected a {arch.value} model, got {model.arch.value}")


def gcn_forward(model: Model, na: NormalizedAdjacency, x):
    """h^(l) = phi(Â h^(l-1) W^(l)); returns (logits, hiddens)"""
    _require_arch(model, Arch.GCN)
    hiddens = _propagate(model, na.ahat, x)
    return hiddens[-1], hiddens


def gin_forward(model: Model, g, x):
    """h^(l) = phi((I + A) h^(l-1) W^(l)) with GIN's epsilon fixed at 0"""
    _require_arch(model, Arch.GIN)
    adjacency = g.adjacency if isinstance(g, Graph) else np.asarray(g, dtype=np.float64)
    hiddens = _propagate(model, np.eye(adjacency.shape[0]) + adjacency, x)
    return hiddens[-1], hiddens


def mlp_forward(model: Model, x):
    """h^(l) = phi(h^(l-1) W^(l) + b^(l)) row-wise"""
    _require_arch(model, Arch.MLP)
    hiddens = _propagate(model, None, x)
    return hiddens[-1], hiddens


def forward_context(model: Model, adjacency, x, self_loops: bool = False) -> ForwardContext:
    """Forward pass for any architecture on a raw (possibly relaxed) adjacency"""
    if model.arch is Arch.MLP:
        return ForwardContext(model.arch, _propagate(model, None, x))
    a = np.asarray(adjacency, dtype=np.float64)
    if model.arch is Arch.GCN:
        operator, _ = normalize_dense(a, self_loops)
    else:
        operator = np.eye(a.shape[0]) + a
    hiddens = _propagate(model, operator, x)
    return ForwardContext(model.arch, hiddens, operator, a, self_loops)


def predict(model: Model, graph: Graph, self_loops: bool = False) -> np.ndarray:
    return forward_context(model, graph.adjacency, graph.features, self_loops).logits


# ---------------------------------------------------------------------------
# Loss and gradients
# ---------------------------------------------------------------------------


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _checked_mask(mask, rows: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (rows,):
        raise ContractError(f"mask shape {mask.shape} != ({rows},)")
    if not mask.any():
        raise ContractError("mask selects no rows")
    return mask


def cross_entropy(logits, labels, mask) -> float:
    """Mean -log softmax(logits)[label] over masked rows"""
    logits = np.asarray(logits, dtype=np.float64)
    mask = _checked_mask(mask, logits.shape[0])
    rows = logits[mask]
    labels = np.asarray(labels)[mask]
    shifted = rows - rows.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(len(labels)), labels]))


def cross_entropy_grad(logits, labels, mask) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    mask = _checked_mask(mask, logits.shape[0])
    grad = np.zeros_like(logits)
    idx = np.flatnonzero(mask)
    probs = _softmax(logits[idx])
    probs[np.arange(len(idx)), np.asarray(labels)[idx]] -= 1.0
    grad[idx] = probs / len(idx)
    return grad


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[Optional[np.ndarray]]
    input: np.ndarray
    adjacency: Optional[np.ndarray] = None

    def params(self) -> List[np.ndarray]:
        """Same ordering as Model.params()"""
        return list(self.weights) + [b for b in self.biases if b is not None]


def backward_from_logits(
    model: Model,
    context: ForwardContext,
    grad_logits: np.ndarray,
    adjacency_grad: bool = False,
) -> Gradients:
    """Reverse-mode pass for an arbitrary upstream gradient on the logits"""
    operator = context.operator
    weight_grads: List[np.ndarray] = [None] * model.num_layers
    bias_grads: List[Optional[np.ndarray]] = [None] * model.num_layers
    grad_operator = None
    if adjacency_grad and operator is not None:
        grad_operator = np.zeros_like(operator)

    grad_h = grad_logits
    for index in reversed(range(model.num_layers)):
        layer = model.layers[index]
        h_in = context.hiddens[index]
        h_out = context.hiddens[index + 1]
        grad_z = grad_h * layer.activation.derivative_from_output(h_out)
        agg = h_in if operator is None else operator @ h_in
        weight_grads[index] = agg.T @ grad_z
        if layer.bias is not None:
            bias_grads[index] = grad_z.sum(axis=0)
        grad_agg = grad_z @ layer.weights.T
        if operator is None:
            grad_h = grad_agg
        else:
            if grad_operator is not None:
                grad_operator += grad_agg @ h_in.T
            grad_h = operator.T @ grad_agg

    grad_adjacency = None
    if grad_operator is not None:
        if context.arch is Arch.GCN:
            grad_adjacency = normalize_dense_backward(
                context.adjacency, grad_operator, context.self_loops
            )
        else:
            grad_adjacency = grad_operator
    return Gradients(weight_grads, bias_grads, grad_h, grad_adjacency)


def backward(
    model: Model,
    context: ForwardContext,
    labels,
    mask,
    adjacency_grad: bool = False,
) -> Gradients:
    """Exact gradients of the masked cross-entropy w.r.t. weights, X and A"""
    grad_logits = cross_entropy_grad(context.logits, labels, mask)
    return backward_from_logits(model, context, grad_logits, adjacency_grad)


# ---------------------------------------------------------------------------
# Gradient descent
# ---------------------------------------------------------------------------

Objective = Callable[[List[np.ndarray]], Tuple[float, List[np.ndarray]]]


@dataclass
class WStarProxy:
    norms: List[float]
    epoch: int
    converged: bool


@dataclass
class Trajectory:
    """Per-epoch record of a full-batch gradient-descent run.

    ``per_epoch_norms`` has epochs + 1 rows (epoch 0 included), one column
    per layer. ``gradient_ratios[t]`` is ||g_{t+1} - g_t||_F / ||W_{t+1} - W_t||_F
    (NaN when consecutive iterates coincide).
    """

    eta: float
    epochs: int
    per_epoch_norms: np.ndarray
    loss_curve: np.ndarray
    grad_norms: np.ndarray
    gradient_ratios: np.ndarray
    final_params: List[np.ndarray] = field(repr=False)
    seed: int = 0
    final_model: Optional[Model] = field(default=None, repr=False)
    snapshots: Dict[int, List[np.ndarray]] = field(default_factory=dict, repr=False)
    wstar_norms: Optional[List[float]] = None
    wstar_epoch: Optional[int] = None
    converged: bool = False
    smoothness_estimate: Optional[float] = None

    @property
    def w0_norms(self) -> List[float]:
        return [float(v) for v in self.per_epoch_norms[0]]

    @property
    def num_layers(self) -> int:
        return int(self.per_epoch_norms.shape[1])

    def norms_at(self, epoch: int) -> List[float]:
        return [float(v) for v in self.per_epoch_norms[epoch]]

    def model_at(self, epoch: int) -> Model:
        if self.final_model is None:
            raise ContractError("trajectory has no model template")
        if epoch == self.epochs:
            return self.final_model
        if epoch not in self.snapshots:
            raise ContractError(f"no snapshot recorded for epoch {epoch}")
        return self.final_model.with_params(self.snapshots[epoch])


def _frobenius_concat(arrays: Sequence[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in arrays))


def gradient_descent(
    params: Sequence[np.ndarray],
    objective: Objective,
    eta: float,
    epochs: int,
    norm_count: Optional[int] = None,
    snapshot_epochs: Sequence[int] = (),
    seed: int = 0,
) -> Trajectory:
    """W_{t+1} = W_t - eta * grad L(W_t), recording norms, loss and gradients.

    The first ``norm_count`` parameters are the layer weights whose spectral
    norms are tracked (all of them by default). The gradient is evaluated at
    every iterate including the last one.
    """
    if eta <= 0:
        raise ContractError(f"eta must be positive, got {eta}")
    if epochs < 0:
        raise ContractError(f"epochs must be non-negative, got {epochs}")
    params = [np.array(p, dtype=np.float64) for p in params]
    norm_count = len(params) if norm_count is None else norm_count
    wanted = set(snapshot_epochs)

    norms = np.zeros((epochs + 1, norm_count))
    losses = np.zeros(epochs + 1)
    grad_norms = np.zeros(epochs + 1)
    ratios = np.full(epochs, np.nan)
    snapshots: Dict[int, List[np.ndarray]] = {}
    prev_grads = None
    prev_step = None

    for epoch in range(epochs + 1):
        loss, grads = objective(params)
        if not math.isfinite(loss):
            raise DivergenceError(epoch, loss)
        losses[epoch] = loss
        grad_norms[epoch] = _frobenius_concat(grads)
        norms[epoch] = [spectral_norm(p) for p in params[:norm_count]]
        if epoch in wanted:
            snapshots[epoch] = [p.copy() for p in params]

        if prev_grads is not None:
            step_norm = _frobenius_concat(prev_step)
            if step_norm > 0.0:
                diff = _frobenius_concat([g - pg for g, pg in zip(grads, prev_grads)])
                ratios[epoch - 1] = diff / step_norm

        if epoch == epochs:
            break
        prev_grads = grads
        prev_step = [eta * g for g in grads]
        params = [p - s for p, s in zip(params, prev_step)]

    logger.debug("gradient descent: %d epochs, final loss %.6g", epochs, losses[-1])
    return Trajectory(
        eta=eta,
        epochs=epochs,
        per_epoch_norms=norms,
        loss_curve=losses,
        grad_norms=grad_norms,
        gradient_ratios=ratios,
        final_params=params,
        seed=seed,
        snapshots=snapshots,
    )


def model_objective(
    model: Model,
    graph: Graph,
    mask=None,
    self_loops: bool = False,
) -> Objective:
    """Masked cross-entropy of ``model``'s architecture as a function of its params"""
    mask = graph.train_mask if mask is None else mask
    if model.arch is Arch.GCN:
        operator, _ = normalize_dense(graph.adjacency, self_loops)
    elif model.arch is Arch.GIN:
        operator = np.eye(graph.n) + graph.adjacency
    else:
        operator = None

    def objective(params):
        current = model.with_params(params)
        hiddens = _propagate(current, operator, graph.features)
        context = ForwardContext(current.arch, hiddens, operator)
        loss = cross_entropy(context.logits, graph.labels, mask)
        grads = backward(current, context, graph.labels, mask)
        return loss, grads.params()

    return objective


def train_gd(
    model: Model,
    graph: Graph,
    eta: float = DEFAULT_ETA,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
    self_loops: bool = False,
    snapshot_epochs: Sequence[int] = (),
    grad_tol: float = WSTAR_GRAD_TOL,
    inflation: float = SMOOTHNESS_INFLATION,
) -> Trajectory:
    """Full-batch gradient descent on the training-mask cross-entropy.

    The returned trajectory carries the final model, the W* proxy and, when
    at least two iterates exist, the inflated smoothness estimate.
    """
    trajectory = gradient_descent(
        model.params(),
        model_objective(model, graph, self_loops=self_loops),
        eta,
        epochs,
        norm_count=model.num_layers,
        snapshot_epochs=snapshot_epochs,
        seed=seed,
    )
    trajectory.final_model = model.with_params(trajectory.final_params)
    finalize_trajectory(trajectory, grad_tol, inflation)
    return trajectory


def finalize_trajectory(
    trajectory: Trajectory,
    grad_tol: float = WSTAR_GRAD_TOL,
    inflation: float = SMOOTHNESS_INFLATION,
) -> Trajectory:
    """Fill the W* proxy and smoothness fields in place"""
    proxy = wstar_proxy(trajectory, grad_tol)
    trajectory.wstar_norms = proxy.norms
    trajectory.wstar_epoch = proxy.epoch
    trajectory.converged = proxy.converged
    try:
        trajectory.smoothness_estimate = estimate_smoothness(trajectory, inflation)
    except SmoothnessEstimateError as e:
        logger.debug("smoothness not estimated: %s", e)
        trajectory.smoothness_estimate = None
    return trajectory


def estimate_smoothness(trajectory: Trajectory, inflation: float = SMOOTHNESS_INFLATION) -> float:
    """L̂ = inflation * max_t ||g_{t+1} - g_t|| / ||W_{t+1} - W_t||"""
    if trajectory.epochs < 1:
        raise SmoothnessEstimateError("need at least two recorded iterates")
    ratios = trajectory.gradient_ratios[np.isfinite(trajectory.gradient_ratios)]
    if ratios.size == 0:
        raise SmoothnessEstimateError("all consecutive iterates are identical")
    return inflation * float(ratios.max())


def wstar_proxy(trajectory: Trajectory, grad_tol: float = WSTAR_GRAD_TOL) -> WStarProxy:
    """Norms of the first iterate whose full gradient norm is below grad_tol.

    Falls back to the final iterate with ``converged=False``.
    """
    below = np.flatnonzero(trajectory.grad_norms < grad_tol)
    if below.size:
        epoch = int(below[0])
        return WStarProxy(trajectory.norms_at(epoch), epoch, True)
    return WStarProxy(trajectory.norms_at(trajectory.epochs), trajectory.epochs, False)
