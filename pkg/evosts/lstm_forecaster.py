"""
Single-layer LSTM with a dense head for direct multi-step forecasting.

A window's F features are consumed as one time step from a zero hidden and
cell state; the dense head emits all T targets at once.

Parameters live in one flat float64 vector, laid out as the four gate
matrices (i, f, g, o; each H x (F + H), row-major), the four gate biases,
the dense weight (T x H, row-major) and the dense bias. The structured
attributes are views into that vector.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import serializers
from .exceptions import (
    CacheMismatch,
    DimensionMismatch,
    EmptyDataset,
    InvalidConfig,
    NonFiniteInput,
    TooFewPairs,
    TrainingDiverged,
)

logger = logging.getLogger(__name__)

GATES = ('i', 'f', 'g', 'o')


class ParameterCount(NamedTuple):
    lstm: int
    dense: int
    total: int


@dataclass(frozen=True)
class LstmDims:
    input_dim: int
    hidden_dim: int
    output_dim: int

    def __post_init__(self):
        for key in ('input_dim', 'hidden_dim', 'output_dim'):
            if getattr(self, key) < 1:
                raise InvalidConfig("must be positive", key=key)


def count_parameters(dims):
    f, h, t = dims.input_dim, dims.hidden_dim, dims.output_dim
    lstm = 4 * h * (f + h + 1)
    dense = t * (h + 1)
    return ParameterCount(lstm=lstm, dense=dense, total=lstm + dense)


class LstmWeights:
    """Value-semantic parameter set of one network."""

    def __init__(self, dims, params=None):
        self.dims = dims
        size = count_parameters(dims).total
        if params is None:
            self.params = np.zeros(size)
        else:
            self.params = np.array(params, dtype=np.float64)
            if self.params.shape != (size,):
                raise DimensionMismatch(f"expected {size} parameters, got {self.params.shape}")

    def _slices(self):
        f, h, t = self.dims.input_dim, self.dims.hidden_dim, self.dims.output_dim
        sizes = [4 * h * (f + h), 4 * h, t * h, t]
        bounds = np.cumsum([0] + sizes)
        return [slice(start, stop) for start, stop in zip(bounds[:-1], bounds[1:])]

    @property
    def gate_weights(self):
        f, h = self.dims.input_dim, self.dims.hidden_dim
        return self.params[self._slices()[0]].reshape(4, h, f + h)

    @property
    def gate_biases(self):
        return self.params[self._slices()[1]].reshape(4, self.dims.hidden_dim)

    @property
    def dense_weight(self):
        return self.params[self._slices()[2]].reshape(self.dims.output_dim, self.dims.hidden_dim)

    @property
    def dense_bias(self):
        return self.params[self._slices()[3]]

    def gate(self, name):
        index = GATES.index(name)
        return self.gate_weights[index], self.gate_biases[index]

    def copy(self):
        return LstmWeights(self.dims, self.params)

    def equals(self, other):
        return self.dims == other.dims and np.array_equal(self.params, other.params)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.params)))

    def checksum(self):
        return serializers.checksum(self.params)

    def __repr__(self):
        return f"LstmWeights({self.dims}, checksum={self.checksum()[:12]})"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    early_stop_patience: int = 5
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidConfig("must be at least 1", key='epochs')
        if self.batch_size < 1:
            raise InvalidConfig("must be at least 1", key='batch_size')
        if self.learning_rate < 0:
            raise InvalidConfig("must be non-negative", key='learning_rate')
        if not 0 <= self.momentum < 1:
            raise InvalidConfig("must be in [0, 1)", key='momentum')
        if self.early_stop_patience < 1:
            raise InvalidConfig("must be at least 1", key='early_stop_patience')
        if not 0 < self.val_fraction < 1:
            raise InvalidConfig("must be between 0 and 1", key='val_fraction')


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def __len__(self):
        return len(self.train_loss)


@dataclass(frozen=True, eq=False)
class ForwardCache:
    weights: LstmWeights
    inputs: np.ndarray
    input_gate: np.ndarray
    forget_gate: np.ndarray
    cell_candidate: np.ndarray
    output_gate: np.ndarray
    cell_prev: np.ndarray
    cell: np.ndarray
    cell_tanh: np.ndarray
    hidden: np.ndarray
    prediction: np.ndarray


def init_weights(dims, seed=0):
    """
    Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per matrix, forget bias 1,
    other biases 0.
    """
    rng = np.random.default_rng(seed)
    weights = LstmWeights(dims)
    gate_limit = 1.0 / math.sqrt(dims.input_dim + dims.hidden_dim)
    weights.gate_weights[:] = rng.uniform(-gate_limit, gate_limit, size=weights.gate_weights.shape)
    weights.gate_biases[GATES.index('f')] = 1.0
    dense_limit = 1.0 / math.sqrt(dims.hidden_dim)
    weights.dense_weight[:] = rng.uniform(-dense_limit, dense_limit, size=weights.dense_weight.shape)
    return weights


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _as_batch(weights, features):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != weights.dims.input_dim:
        raise DimensionMismatch(
            f"features of shape {features.shape} do not match input_dim {weights.dims.input_dim}"
        )
    if not np.all(np.isfinite(features)):
        raise NonFiniteInput("features hold NaN or infinite values")
    return features


def forward_batch(weights, features):
    """One LSTM step for every row of ``features``; returns (predictions, cache)."""
    features = _as_batch(weights, features)
    n, h = len(features), weights.dims.hidden_dim
    hidden_prev = np.zeros((n, h))
    cell_prev = np.zeros((n, h))
    inputs = np.concatenate([features, hidden_prev], axis=1)

    gate_matrix = weights.gate_weights.reshape(4 * h, -1)
    z = inputs @ gate_matrix.T + weights.gate_biases.reshape(-1)
    z_i, z_f, z_g, z_o = np.split(z, 4, axis=1)

    input_gate = _sigmoid(z_i)
    forget_gate = _sigmoid(z_f)
    cell_candidate = np.tanh(z_g)
    output_gate = _sigmoid(z_o)
    cell = forget_gate * cell_prev + input_gate * cell_candidate
    cell_tanh = np.tanh(cell)
    hidden = output_gate * cell_tanh
    prediction = hidden @ weights.dense_weight.T + weights.dense_bias

    cache = ForwardCache(
        weights=weights,
        inputs=inputs,
        input_gate=input_gate,
        forget_gate=forget_gate,
        cell_candidate=cell_candidate,
        output_gate=output_gate,
        cell_prev=cell_prev,
        cell=cell,
        cell_tanh=cell_tanh,
        hidden=hidden,
        prediction=prediction,
    )
    return prediction, cache


def forward(weights, x):
    x = np.asarray(x, dtype=np.float64)
    prediction, cache = forward_batch(weights, x[np.newaxis, :])
    return prediction[0], cache


def mse_loss(prediction, target):
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise DimensionMismatch(f"prediction {prediction.shape} vs target {target.shape}")
    return float(np.mean((prediction - target) ** 2))


def backward_batch(weights, features, targets, cache):
    """
    Gradient of the batch-mean MSE with respect to every parameter,
    returned as an LstmWeights of the same dims.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    f = weights.dims.input_dim
    if cache.weights is not weights or not np.array_equal(cache.inputs[:, :f], features):
        raise CacheMismatch("cache was produced by a different forward call")
    if targets.shape != cache.prediction.shape:
        raise DimensionMismatch(f"targets {targets.shape} vs predictions {cache.prediction.shape}")

    n, t = targets.shape
    grads = LstmWeights(weights.dims)

    d_prediction = 2.0 * (cache.prediction - targets) / (n * t)
    grads.dense_weight[:] = d_prediction.T @ cache.hidden
    grads.dense_bias[:] = d_prediction.sum(axis=0)

    d_hidden = d_prediction @ weights.dense_weight
    d_output = d_hidden * cache.cell_tanh
    d_cell = d_hidden * cache.output_gate * (1.0 - cache.cell_tanh ** 2)
    d_input = d_cell * cache.cell_candidate
    d_forget = d_cell * cache.cell_prev
    d_candidate = d_cell * cache.input_gate

    d_z = np.concatenate([
        d_input * cache.input_gate * (1.0 - cache.input_gate),
        d_forget * cache.forget_gate * (1.0 - cache.forget_gate),
        d_candidate * (1.0 - cache.cell_candidate ** 2),
        d_output * cache.output_gate * (1.0 - cache.output_gate),
    ], axis=1)
    grads.gate_weights[:] = (d_z.T @ cache.inputs).reshape(grads.gate_weights.shape)
    grads.gate_biases[:] = d_z.sum(axis=0).reshape(grads.gate_biases.shape)
    return grads


def backward(weights, x, target, cache):
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return backward_batch(weights, x[np.newaxis, :], target[np.newaxis, :], cache)


class SgdMomentum:
    """Plain SGD with classical momentum; one instance per training run."""

    def __init__(self, learning_rate, momentum=0.9):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = None

    def step(self, weights, grads):
        if self.velocity is None:
            self.velocity = np.zeros_like(weights.params)
        self.velocity *= self.momentum
        self.velocity -= self.learning_rate * grads.params
        weights.params += self.velocity


def predict_batch(weights, features):
    features = np.asarray(features, dtype=np.float64)
    if features.size == 0:
        return np.empty((0, weights.dims.output_dim))
    return forward_batch(weights, features)[0]


def dataset_loss(weights, dataset):
    return mse_loss(predict_batch(weights, dataset.features), dataset.targets)


def train_epoch(weights, dataset, cfg, rng, optimizer=None):
    """
    One pass over ``dataset`` in an order drawn from ``rng``, averaging
    gradients per minibatch. Returns updated weights; the input is untouched.
    """
    if len(dataset) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    optimizer = optimizer or SgdMomentum(cfg.learning_rate, cfg.momentum)
    weights = weights.copy()

    order = rng.permutation(len(dataset))
    for start in range(0, len(order), cfg.batch_size):
        batch = order[start:start + cfg.batch_size]
        features, targets = dataset.features[batch], dataset.targets[batch]
        _, cache = forward_batch(weights, features)
        optimizer.step(weights, backward_batch(weights, features, targets, cache))

    if not weights.is_finite():
        raise TrainingDiverged("weights became non-finite; lower the learning rate")
    return weights


def train(weights, dataset, cfg, rng=None):
    """
    Train with a time-ordered validation holdout and early stopping.

    Returns the weights of the best validation epoch and the per-epoch
    history.
    """
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if n < 2:
        raise TooFewPairs("training needs at least 2 pairs to hold one out for validation")

    n_val = min(max(1, math.ceil(cfg.val_fraction * n)), n - 1)
    train_part = dataset.subset(np.arange(n - n_val))
    val_part = dataset.subset(np.arange(n - n_val, n))
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    optimizer = SgdMomentum(cfg.learning_rate, cfg.momentum)

    history = TrainHistory()
    best_weights, best_val = weights.copy(), math.inf
    stale = 0
    for epoch in range(cfg.epochs):
        weights = train_epoch(weights, train_part, cfg, rng, optimizer)
        history.train_loss.append(dataset_loss(weights, train_part))
        val_loss = dataset_loss(weights, val_part)
        history.val_loss.append(val_loss)
        logger.debug(f"Epoch {epoch}: train {history.train_loss[-1]:.6g}, val {val_loss:.6g}")

        if val_loss < best_val:
            best_val, best_weights, history.best_epoch = val_loss, weights.copy(), epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                history.stopped_early = True
                logger.info(f"Early stopping after epoch {epoch}; best epoch {history.best_epoch}")
                break

    return best_weights, history


def save_checkpoint(weights, path, seed=None, epoch=None):
    path = Path(path)
    serializers.write_array(path, weights.params)
    serializers.write_json(serializers.sidecar_path(path), {
        'schema_version': serializers.SCHEMA_VERSION,
        'dims': {
            'input_dim': weights.dims.input_dim,
            'hidden_dim': weights.dims.hidden_dim,
            'output_dim': weights.dims.output_dim,
        },
        'layout': ['gate_weights[i,f,g,o]', 'gate_biases[i,f,g,o]', 'dense_weight', 'dense_bias'],
        'seed': seed,
        'epoch': epoch,
        'checksum': weights.checksum(),
    })
    return path


def load_checkpoint(path):
    path = Path(path)
    meta = serializers.read_json(serializers.sidecar_path(path))
    dims = LstmDims(**meta['dims'])
    params = serializers.read_array(path, count=count_parameters(dims).total)
    return LstmWeights(dims, params), meta
