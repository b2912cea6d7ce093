from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fedcache.errors import DimensionMismatchError, NoParticipantsError, NonFiniteError

# Guards the significance ratio when the global model is (numerically) zero.
EPSILON = 1e-12
SIGNIFICANCE_CEILING = 1.0 / EPSILON

BYTES_PER_PARAM = 8
HEADER_BYTES = 64


def update_size_bytes(dim: int) -> int:
    """Size(Δ) of a dense float64 update of dimension ``dim`` plus its fixed header."""
    return BYTES_PER_PARAM * int(dim) + HEADER_BYTES


def _as_finite_vector(values, what: str) -> np.ndarray:
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1:
        raise DimensionMismatchError(f"{what} must be a 1-d vector, got shape {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise NonFiniteError(f"{what} contains NaN or Inf entries")
    return vector


@dataclass(frozen=True)
class GlobalModel:
    params: np.ndarray
    round: int = 0

    def __post_init__(self):
        object.__setattr__(self, "params", _as_finite_vector(self.params, "Global model params"))
        if self.round < 0:
            raise ValueError(f"Round index must be non-negative, got {self.round}")

    @property
    def dim(self) -> int:
        return int(self.params.shape[0])

    def advanced(self) -> GlobalModel:
        """Same parameters, next round. Used when a round has no participants."""
        return GlobalModel(params=self.params.copy(), round=self.round + 1)


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    round_produced: int
    delta: np.ndarray
    significance: float
    size_bytes: int
    sample_count: int
    reported_accuracy: float

    def __post_init__(self):
        object.__setattr__(self, "delta", _as_finite_vector(self.delta, f"Delta of client {self.client_id}"))
        if self.client_id < 0:
            raise ValueError(f"client_id must be non-negative, got {self.client_id}")
        if self.sample_count <= 0:
            raise ValueError(f"sample_count of client {self.client_id} must be positive, got {self.sample_count}")
        if not 0.0 <= self.reported_accuracy <= 1.0:
            raise ValueError(
                f"reported_accuracy of client {self.client_id} must lie in [0, 1], got {self.reported_accuracy}"
            )
        if self.significance < 0:
            raise ValueError(f"significance must be non-negative, got {self.significance}")

    @classmethod
    def build(
        cls,
        client_id: int,
        delta,
        reference: GlobalModel,
        sample_count: int,
        reported_accuracy: float,
    ) -> ClientUpdate:
        """Create an update whose significance and size are derived from ``delta`` and ``reference``."""
        delta = _as_finite_vector(delta, f"Delta of client {client_id}")
        return cls(
            client_id=int(client_id),
            round_produced=reference.round,
            delta=delta,
            significance=compute_significance(delta, reference),
            size_bytes=update_size_bytes(delta.shape[0]),
            sample_count=int(sample_count),
            reported_accuracy=float(reported_accuracy),
        )

    @property
    def dim(self) -> int:
        return int(self.delta.shape[0])


@dataclass
class AggregationSet:
    transmitted: list[ClientUpdate] = field(default_factory=list)
    cache_substituted: list[ClientUpdate] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for update in self.all():
            if update.client_id in seen:
                raise ValueError(f"Client {update.client_id} appears twice in the aggregation set")
            seen.add(update.client_id)

    def all(self) -> list[ClientUpdate]:
        return list(self.transmitted) + list(self.cache_substituted)

    def __len__(self) -> int:
        return len(self.transmitted) + len(self.cache_substituted)


def fedavg_aggregate(model: GlobalModel, updates: AggregationSet) -> GlobalModel:
    """
    Apply θ' = θ + Σ (n_i / n) Δ_i over every update in the set.

    Fresh and cache-substituted updates are weighted identically by their sample counts.
    Raises NoParticipantsError for an empty set; the caller decides whether to skip the round.
    """
    participants = updates.all()
    if not participants:
        raise NoParticipantsError(f"No participants to aggregate in round {model.round}")

    for update in participants:
        if update.dim != model.dim:
            raise DimensionMismatchError(
                f"Update from client {update.client_id} has dimension {update.dim}, model has {model.dim}"
            )

    deltas = np.stack([update.delta for update in participants])
    weights = np.array([update.sample_count for update in participants], dtype=np.float64)
    mean_delta = np.average(deltas, axis=0, weights=weights)

    new_params = model.params + mean_delta
    if not np.all(np.isfinite(new_params)):
        raise NonFiniteError(f"Aggregation in round {model.round} produced non-finite parameters")
    return GlobalModel(params=new_params, round=model.round + 1)


def compute_significance(delta, reference: GlobalModel) -> float:
    """Relative L2 magnitude ‖Δ‖₂ / ‖θ‖₂; any nonzero Δ against a (near) zero reference scores 1/ε."""
    delta = _as_finite_vector(delta, "Delta")
    if delta.shape[0] != reference.dim:
        raise DimensionMismatchError(f"Delta has dimension {delta.shape[0]}, reference model has {reference.dim}")

    delta_norm = float(np.linalg.norm(delta))
    reference_norm = float(np.linalg.norm(reference.params))
    if delta_norm == 0.0:
        return 0.0
    if reference_norm < EPSILON:
        return SIGNIFICANCE_CEILING
    return delta_norm / reference_norm


def should_transmit(significance: float, tau: float) -> bool:
    if tau < 0 or math.isnan(tau):
        raise ValueError(f"Threshold tau must be non-negative, got {tau}")
    return significance >= tau
