from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from fedcache.core_model import ClientUpdate

logger = logging.getLogger(__name__)


class CachePolicy(str, Enum):
    NONE = "NONE"
    FIFO = "FIFO"
    LRU = "LRU"
    PBR = "PBR"

    @classmethod
    def parse(cls, value) -> CachePolicy:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"Unknown cache policy '{value}'. Expected one of: {[p.value for p in cls]}")


# Deterministic preference order among caching policies.
POLICY_ORDER = {CachePolicy.FIFO: 0, CachePolicy.LRU: 1, CachePolicy.PBR: 2}


@dataclass(frozen=True)
class PriorityConfig:
    alpha: float = 0.7
    beta: float = 0.3
    gamma: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be > 0")


@dataclass
class CacheEntry:
    update: ClientUpdate
    inserted_at: int
    last_used_at: int
    use_count: int = 0

    @property
    def client_id(self) -> int:
        return self.update.client_id

    def priority(self, now: int, cfg: PriorityConfig) -> float:
        return priority_score(self, now, cfg)


@dataclass(frozen=True)
class EvictionReport:
    """Outcome of one insert: what left the cache and whether the new update got in."""

    evicted: tuple[ClientUpdate, ...] = ()
    admitted: bool = True
    replaced: bool = False

    @property
    def evicted_ids(self) -> tuple[int, ...]:
        return tuple(update.client_id for update in self.evicted)


def recency(entry: CacheEntry, now: int) -> float:
    return 1.0 / (1.0 + (now - entry.last_used_at))


def priority_score(entry: CacheEntry, now: int, cfg: PriorityConfig) -> float:
    """Priority = α · reported accuracy + β · recency, recency = 1 / (1 + rounds since last use)."""
    if now < entry.inserted_at:
        raise ValueError(f"Round {now} precedes insertion round {entry.inserted_at} of client {entry.client_id}")
    return cfg.alpha * entry.update.reported_accuracy + cfg.beta * recency(entry, now)


class EvictionStrategy(ABC):
    """Ranks entries; the entry with the smallest (rank, client_id) is the victim."""

    @abstractmethod
    def rank(self, entry: CacheEntry, now: int) -> float:
        pass


class FIFOStrategy(EvictionStrategy):
    def rank(self, entry: CacheEntry, now: int) -> float:
        return entry.inserted_at


class LRUStrategy(EvictionStrategy):
    def rank(self, entry: CacheEntry, now: int) -> float:
        return entry.last_used_at


class PriorityStrategy(EvictionStrategy):
    def __init__(self, cfg: PriorityConfig):
        self.cfg = cfg

    def rank(self, entry: CacheEntry, now: int) -> float:
        return priority_score(entry, now, self.cfg)


def strategy_for(policy: CachePolicy, cfg: PriorityConfig) -> EvictionStrategy:
    if policy == CachePolicy.FIFO:
        return FIFOStrategy()
    if policy == CachePolicy.LRU:
        return LRUStrategy()
    if policy == CachePolicy.PBR:
        return PriorityStrategy(cfg)
    raise ValueError(f"Policy {policy.value} has no cache")


class UpdateCache:
    """
    Bounded server-side store of client updates, at most one entry per client.

    Capacity counts entries, not bytes. The eviction victim is chosen by the configured
    strategy; ties go to the lowest client_id.
    """

    def __init__(self, capacity: int, policy: CachePolicy, priority_config: Optional[PriorityConfig] = None):
        if capacity <= 0:
            raise ValueError(f"Cache capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.policy = CachePolicy.parse(policy)
        self.priority_config = priority_config if priority_config is not None else PriorityConfig()
        self.strategy = strategy_for(self.policy, self.priority_config)
        self.entries: dict[int, CacheEntry] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, client_id: int) -> bool:
        return client_id in self.entries

    def _check_capacity(self):
        assert len(self.entries) <= self.capacity, f"cache holds {len(self.entries)} > {self.capacity} entries"

    def _victim(self, now: int) -> CacheEntry:
        return min(self.entries.values(), key=lambda entry: (self.strategy.rank(entry, now), entry.client_id))

    def insert(self, update: ClientUpdate, now: int) -> EvictionReport:
        client_id = update.client_id
        if client_id in self.entries:
            self.entries[client_id] = CacheEntry(update=update, inserted_at=now, last_used_at=now)
            self._check_capacity()
            return EvictionReport(replaced=True)

        incoming = CacheEntry(update=update, inserted_at=now, last_used_at=now)
        evicted: tuple[ClientUpdate, ...] = ()
        if len(self.entries) >= self.capacity:
            victim = self._victim(now)
            if self.policy == CachePolicy.PBR:
                incoming_priority = priority_score(incoming, now, self.priority_config)
                if incoming_priority < priority_score(victim, now, self.priority_config):
                    logger.debug(
                        f"PBR skipped admission of client {client_id} at round {now}: "
                        f"priority {incoming_priority:.4f} below every cached entry"
                    )
                    return EvictionReport(admitted=False)
            del self.entries[victim.client_id]
            evicted = (victim.update,)
            logger.debug(f"{self.policy.value} evicted client {victim.client_id} at round {now}")

        self.entries[client_id] = incoming
        self._check_capacity()
        return EvictionReport(evicted=evicted)

    def is_eligible(self, entry: CacheEntry, now: int) -> bool:
        """Membership in the substitution set S = {i | Priority_i >= γ}; always true outside PBR."""
        if self.policy != CachePolicy.PBR:
            return True
        return priority_score(entry, now, self.priority_config) >= self.priority_config.gamma

    def eligible_ids(self, now: int) -> set[int]:
        return {client_id for client_id, entry in self.entries.items() if self.is_eligible(entry, now)}

    def lookup_for_substitution(self, client_id: int, now: int) -> Optional[ClientUpdate]:
        entry = self.entries.get(client_id)
        if entry is None or not self.is_eligible(entry, now):
            return None
        entry.last_used_at = now
        entry.use_count += 1
        return entry.update

    def mem_usage(self) -> int:
        """MemUsage = Σ Size(Δ) over resident entries, in bytes."""
        return sum(entry.update.size_bytes for entry in self.entries.values())

    def snapshot(self) -> dict[int, tuple[int, int, int]]:
        """client_id -> (inserted_at, last_used_at, use_count), for logging and comparisons."""
        return {
            client_id: (entry.inserted_at, entry.last_used_at, entry.use_count)
            for client_id, entry in sorted(self.entries.items())
        }


def mem_usage(cache: Optional[UpdateCache]) -> int:
    return 0 if cache is None else cache.mem_usage()
