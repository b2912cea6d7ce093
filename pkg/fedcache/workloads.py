from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence, Union

import numpy as np
from scipy.special import expit, log_softmax, softmax

from fedcache.core_model import ClientUpdate, GlobalModel
from fedcache.errors import ConfigError, DimensionMismatchError, NonFiniteError
from fedcache.rng import substream

logger = logging.getLogger(__name__)

INIT_SCALE = 0.01
# Accuracy band for regression when the data is noise free.
MIN_REGRESSION_BAND = 1e-6


class Task(str, Enum):
    LINEAR_REGRESSION = "linear-regression"
    LOGISTIC_BINARY = "logistic-binary"
    LOGISTIC_MULTICLASS = "logistic-multiclass"

    @classmethod
    def parse(cls, value) -> Task:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"Unknown task '{value}'. Expected one of: {[t.value for t in cls]}")


@dataclass(frozen=True)
class WorkloadSpec:
    task: Task = Task.LOGISTIC_MULTICLASS
    dim: int = 50
    classes: int = 4
    samples_per_client: Union[int, tuple[int, ...]] = 200
    heterogeneity: float = 0.5
    local_epochs: int = 1
    learning_rate: float = 0.02
    batch_size: int = 32
    noise_std: float = 0.5
    holdout_fraction: float = 0.2

    def validate(self, n_clients: int | None = None) -> WorkloadSpec:
        if self.dim <= 0:
            raise ConfigError("dim", f"must be a positive integer, got {self.dim}")
        if self.task == Task.LOGISTIC_MULTICLASS and self.classes < 2:
            raise ConfigError("classes", f"must be >= 2 for classification, got {self.classes}")
        counts = self.sample_counts(n_clients) if n_clients is not None else self._raw_counts()
        if not counts or any(count <= 0 for count in counts):
            raise ConfigError("samples_per_client", f"every client needs at least one sample, got {counts}")
        if min(counts) < self.n_classes:
            raise ConfigError(
                "samples_per_client", f"{min(counts)} samples cannot cover {self.n_classes} classes"
            )
        if not 0.0 <= self.heterogeneity <= 1.0:
            raise ConfigError("heterogeneity", f"must lie in [0, 1], got {self.heterogeneity}")
        if self.local_epochs <= 0:
            raise ConfigError("local_epochs", f"must be positive, got {self.local_epochs}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate", f"must be non-negative, got {self.learning_rate}")
        if self.batch_size <= 0:
            raise ConfigError("batch_size", f"must be positive, got {self.batch_size}")
        if self.noise_std < 0:
            raise ConfigError("noise_std", f"must be non-negative, got {self.noise_std}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction", f"must lie in (0, 1), got {self.holdout_fraction}")
        return self

    def _raw_counts(self) -> list[int]:
        if isinstance(self.samples_per_client, (int, np.integer)):
            return [int(self.samples_per_client)]
        return [int(count) for count in self.samples_per_client]

    def sample_counts(self, n_clients: int) -> list[int]:
        if isinstance(self.samples_per_client, (int, np.integer)):
            return [int(self.samples_per_client)] * n_clients
        counts = [int(count) for count in self.samples_per_client]
        if len(counts) != n_clients:
            raise ConfigError(
                "samples_per_client", f"per-client list has {len(counts)} entries for {n_clients} clients"
            )
        return counts

    @property
    def n_classes(self) -> int:
        """Label count; binary tasks always have two and regression has none."""
        if self.task == Task.LINEAR_REGRESSION:
            return 0
        return 2 if self.task == Task.LOGISTIC_BINARY else self.classes

    def holdout_count(self, n_train: int) -> int:
        return max(1, math.ceil(n_train * self.holdout_fraction))

    @property
    def param_dim(self) -> int:
        return task_model(self).param_dim


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    features: np.ndarray
    targets: np.ndarray
    holdout_features: np.ndarray
    holdout_targets: np.ndarray
    seed: int = 0

    @property
    def n_train(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_holdout(self) -> int:
        return int(self.holdout_features.shape[0])


@dataclass(frozen=True)
class Federation:
    clients: list[ClientDataset]
    true_params: np.ndarray
    spec: WorkloadSpec
    seed: int

    def __len__(self) -> int:
        return len(self.clients)


def _with_bias(features: np.ndarray) -> np.ndarray:
    return np.hstack([features, np.ones((features.shape[0], 1))])


class TaskModel(ABC):
    """Loss, gradient and prediction for one linear task over a flat parameter vector."""

    def __init__(self, n_features: int):
        self.n_features = n_features

    @property
    @abstractmethod
    def param_dim(self) -> int:
        pass

    @abstractmethod
    def loss(self, params: np.ndarray, features: np.ndarray, targets: np.ndarray) -> float:
        pass

    @abstractmethod
    def gradient(self, params: np.ndarray, features: np.ndarray, targets: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def predict(self, params: np.ndarray, features: np.ndarray) -> np.ndarray:
        pass

    def accuracy(self, params: np.ndarray, features: np.ndarray, targets: np.ndarray) -> float:
        if features.shape[0] == 0:
            return 0.0
        return float(np.mean(self.predict(params, features) == targets))


class LinearRegressionModel(TaskModel):
    def __init__(self, n_features: int, band: float):
        super().__init__(n_features)
        self.band = band

    @property
    def param_dim(self) -> int:
        return self.n_features + 1

    def loss(self, params, features, targets):
        residual = _with_bias(features) @ params - targets
        return float(np.mean(residual**2))

    def gradient(self, params, features, targets):
        design = _with_bias(features)
        residual = design @ params - targets
        return 2.0 * design.T @ residual / features.shape[0]

    def predict(self, params, features):
        return _with_bias(features) @ params

    def accuracy(self, params, features, targets):
        if features.shape[0] == 0:
            return 0.0
        return float(np.mean(np.abs(self.predict(params, features) - targets) <= self.band))


class LogisticBinaryModel(TaskModel):
    @property
    def param_dim(self) -> int:
        return self.n_features + 1

    def loss(self, params, features, targets):
        logits = _with_bias(features) @ params
        return float(np.mean(np.logaddexp(0.0, logits) - targets * logits))

    def gradient(self, params, features, targets):
        design = _with_bias(features)
        return design.T @ (expit(design @ params) - targets) / features.shape[0]

    def predict(self, params, features):
        return (_with_bias(features) @ params > 0).astype(np.int64)


class LogisticMulticlassModel(TaskModel):
    def __init__(self, n_features: int, classes: int):
        super().__init__(n_features)
        self.classes = classes

    @property
    def param_dim(self) -> int:
        return self.classes * (self.n_features + 1)

    def _weights(self, params: np.ndarray) -> np.ndarray:
        return params.reshape(self.classes, self.n_features + 1)

    def loss(self, params, features, targets):
        logits = _with_bias(features) @ self._weights(params).T
        log_probs = log_softmax(logits, axis=1)
        return float(-np.mean(log_probs[np.arange(features.shape[0]), targets.astype(np.int64)]))

    def gradient(self, params, features, targets):
        design = _with_bias(features)
        probs = softmax(design @ self._weights(params).T, axis=1)
        probs[np.arange(features.shape[0]), targets.astype(np.int64)] -= 1.0
        return (probs.T @ design / features.shape[0]).ravel()

    def predict(self, params, features):
        return np.argmax(_with_bias(features) @ self._weights(params).T, axis=1)


def task_model(spec: WorkloadSpec) -> TaskModel:
    task = Task.parse(spec.task)
    if task == Task.LINEAR_REGRESSION:
        band = spec.noise_std if spec.noise_std > 0 else MIN_REGRESSION_BAND
        return LinearRegressionModel(spec.dim, band)
    if task == Task.LOGISTIC_BINARY:
        return LogisticBinaryModel(spec.dim)
    return LogisticMulticlassModel(spec.dim, spec.classes)


def _label_shard(client_id: int, n_clients: int, classes: int) -> np.ndarray:
    """Contiguous block of classes owned by a client under full label skew."""
    shards = np.array_split(np.arange(classes), min(n_clients, classes))
    return shards[client_id % len(shards)]


def _class_scores(spec: WorkloadSpec, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    design = _with_bias(features)
    if spec.task == Task.LOGISTIC_BINARY:
        logits = design @ params
        return np.column_stack([np.zeros_like(logits), logits])
    return design @ params.reshape(spec.classes, spec.dim + 1).T


def _draw_client(
    spec: WorkloadSpec, seed: int, client_id: int, n_clients: int, params: np.ndarray, n_samples: int
) -> tuple[np.ndarray, np.ndarray]:
    features = substream(seed, "features", client_id).standard_normal((n_samples, spec.dim))
    noise = substream(seed, "noise", client_id)

    if spec.task == Task.LINEAR_REGRESSION:
        targets = _with_bias(features) @ params + spec.noise_std * noise.standard_normal(n_samples)
        return features, targets

    scores = _class_scores(spec, params, features)
    scores = scores + spec.noise_std * noise.standard_normal(scores.shape)
    # With probability `heterogeneity` a sample's label is restricted to the client's shard.
    restricted = substream(seed, "label-skew", client_id).random(n_samples) < spec.heterogeneity
    shard = _label_shard(client_id, n_clients, scores.shape[1])
    outside = np.ones(scores.shape[1], dtype=bool)
    outside[shard] = False
    masked = scores.copy()
    masked[np.ix_(restricted, outside)] = -np.inf
    return features, np.argmax(masked, axis=1).astype(np.int64)


def generate_federation(spec: WorkloadSpec, seed: int, n_clients: int) -> Federation:
    """
    Deterministic synthetic federation for (spec, seed).

    Features are N(0, I) for every client. Each client's generating parameters are
    (1 - h) · θ* + h · U_i, with θ* and U_i drawn N(0, I / (dim + 1)) so class scores and regression
    targets have variance at most one before noise. For classification a fraction h of its labels is
    confined to the client's own block of classes, so h = 0 is IID and h = 1 gives disjoint label supports.
    """
    if n_clients <= 0:
        raise ConfigError("n_clients", f"must be positive, got {n_clients}")
    spec = replace(spec, task=Task.parse(spec.task)).validate(n_clients)

    model = task_model(spec)
    # Score variance at most one.
    scale = 1.0 / math.sqrt(spec.dim + 1)
    true_params = scale * substream(seed, "truth").standard_normal(model.param_dim)

    clients = []
    for client_id, n_train in enumerate(spec.sample_counts(n_clients)):
        own = scale * substream(seed, "client-params", client_id).standard_normal(model.param_dim)
        params = (1.0 - spec.heterogeneity) * true_params + spec.heterogeneity * own
        n_holdout = spec.holdout_count(n_train)
        features, targets = _draw_client(spec, seed, client_id, n_clients, params, n_train + n_holdout)
        clients.append(
            ClientDataset(
                client_id=client_id,
                features=features[:n_train],
                targets=targets[:n_train],
                holdout_features=features[n_train:],
                holdout_targets=targets[n_train:],
                seed=seed,
            )
        )
    logger.debug(f"Generated {n_clients} clients for task {spec.task.value} (seed={seed})")
    return Federation(clients=clients, true_params=true_params, spec=spec, seed=seed)


def initial_model(spec: WorkloadSpec, seed: int) -> GlobalModel:
    """Small random start so the relative significance of round-0 updates is well defined."""
    dim = task_model(spec).param_dim
    return GlobalModel(params=INIT_SCALE * substream(seed, "init").standard_normal(dim), round=0)


def local_train(dataset: ClientDataset, model: GlobalModel, spec: WorkloadSpec) -> ClientUpdate:
    """Mini-batch gradient descent from the global params; returns Δ = local_final − global."""
    task = task_model(spec)
    if model.dim != task.param_dim:
        raise DimensionMismatchError(
            f"Model dimension {model.dim} does not match {spec.task} parameter dimension {task.param_dim}"
        )

    params = model.params.copy()
    order_rng = substream(dataset.seed, "shuffle", dataset.client_id, model.round)
    n = dataset.n_train
    for _ in range(spec.local_epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            batch = order[start : start + spec.batch_size]
            features, targets = dataset.features[batch], dataset.targets[batch]
            loss = task.loss(params, features, targets)
            if not math.isfinite(loss):
                raise NonFiniteError(
                    f"Non-finite training loss for client {dataset.client_id} in round {model.round}"
                )
            params = params - spec.learning_rate * task.gradient(params, features, targets)

    if not np.all(np.isfinite(params)):
        raise NonFiniteError(f"Local training diverged for client {dataset.client_id} in round {model.round}")

    accuracy = task.accuracy(params, dataset.holdout_features, dataset.holdout_targets)
    return ClientUpdate.build(
        client_id=dataset.client_id,
        delta=params - model.params,
        reference=model,
        sample_count=n,
        reported_accuracy=accuracy,
    )


def evaluate_global(model: GlobalModel, datasets: Sequence[ClientDataset], spec: WorkloadSpec) -> tuple[float, float]:
    """Macro-averaged held-out accuracy over clients and sample-weighted held-out loss."""
    task = task_model(spec)
    if model.dim != task.param_dim:
        raise DimensionMismatchError(
            f"Model dimension {model.dim} does not match {spec.task} parameter dimension {task.param_dim}"
        )
    if not datasets:
        return 0.0, 0.0

    accuracies = [task.accuracy(model.params, d.holdout_features, d.holdout_targets) for d in datasets]
    losses = np.array([task.loss(model.params, d.holdout_features, d.holdout_targets) for d in datasets])
    sizes = np.array([d.n_holdout for d in datasets], dtype=np.float64)
    return float(np.mean(accuracies)), float(np.average(losses, weights=sizes))
