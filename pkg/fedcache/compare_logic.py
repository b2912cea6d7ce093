from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from fedcache.cache import POLICY_ORDER, CachePolicy
from fedcache.engine import ExperimentConfig
from fedcache.errors import IncompleteTableError
from fedcache.sweep_logic import REPORT_COLUMNS, Objective, sort_table

logger = logging.getLogger(__name__)

CACHING_POLICIES = [CachePolicy.FIFO, CachePolicy.LRU, CachePolicy.PBR]
# Accuracy slack below the best policy when no explicit floor is given.
DEFAULT_ACCURACY_TOLERANCE = 0.03
SUMMARY_METRICS = ["comm_bytes", "cache_hits", "peak_mem_bytes", "final_accuracy", "reduction_vs_baseline"]
STRATEGY_FEATURES = [
    "task",
    "dim",
    "samples_per_client",
    "heterogeneity",
    "n_clients",
    "clients_per_round",
    "tau",
    "capacity",
]


@dataclass(frozen=True)
class Recommendation:
    policy: CachePolicy
    tau: float
    capacity: int
    objective: Objective
    mean_comm_bytes: float
    mean_final_accuracy: float
    mean_cache_hits: float
    mean_peak_mem_bytes: float
    n_seeds: int
    candidates: pd.DataFrame


class StrategyComparer:
    """
    Compare caching policies cell by cell over a sweep table.

    Seeds are averaged per (policy, τ, C). The table is sorted before any grouping so the
    outcome does not depend on the row order it was given in.
    """

    def __init__(
        self,
        table: pd.DataFrame,
        objective: Objective = Objective.MIN_COMM_AT_ACCURACY_FLOOR,
        accuracy_floor: Optional[float] = None,
        comm_budget_bytes: Optional[int] = None,
    ):
        missing_columns = [col for col in REPORT_COLUMNS if col not in table.columns]
        if missing_columns:
            raise ValueError(f"Result table lacks report columns: {missing_columns}")
        self.table = sort_table(table.copy())
        self.objective = Objective.parse(objective)
        self.accuracy_floor = accuracy_floor
        self.comm_budget_bytes = comm_budget_bytes

    def summarize(self) -> pd.DataFrame:
        """Per (policy, τ, C): mean / std / min / max of every metric over seeds."""
        if self.table.empty:
            return pd.DataFrame()
        grouped = self.table.groupby(["policy", "tau", "capacity"], sort=True)[SUMMARY_METRICS]
        summary = grouped.agg(["mean", "std", "min", "max"])
        summary.columns = [f"{metric}_{stat}" for metric, stat in summary.columns]
        summary["n_seeds"] = self.table.groupby(["policy", "tau", "capacity"], sort=True)["seed"].nunique()
        return summary.reset_index()

    def cells(self) -> list[tuple[float, int]]:
        pairs = self.table[["tau", "capacity"]].drop_duplicates()
        return sorted((float(tau), int(capacity)) for tau, capacity in pairs.itertuples(index=False))

    def _cell_rows(self, tau: float, capacity: int) -> pd.DataFrame:
        mask = np.isclose(self.table["tau"].astype(float), tau, rtol=0, atol=1e-12) & (
            self.table["capacity"].astype(int) == capacity
        )
        return self.table[mask]

    def candidates(self, tau: float, capacity: int) -> pd.DataFrame:
        rows = self._cell_rows(tau, capacity)
        present = set(rows["policy"])
        missing = [(policy.value, tau, capacity) for policy in CACHING_POLICIES if policy.value not in present]
        if missing:
            raise IncompleteTableError(missing)

        rows = rows[rows["policy"].isin([policy.value for policy in CACHING_POLICIES])]
        stats = (
            rows.groupby("policy", sort=True)
            .agg(
                mean_comm_bytes=("comm_bytes", "mean"),
                mean_final_accuracy=("final_accuracy", "mean"),
                mean_cache_hits=("cache_hits", "mean"),
                mean_peak_mem_bytes=("peak_mem_bytes", "mean"),
                n_seeds=("seed", "nunique"),
            )
            .reset_index()
        )
        stats["order"] = stats["policy"].map(lambda p: POLICY_ORDER[CachePolicy.parse(p)])
        return stats

    def _feasible(self, stats: pd.DataFrame) -> pd.Series:
        if self.objective == Objective.MIN_COMM_AT_ACCURACY_FLOOR:
            floor = self.accuracy_floor
            if floor is None:
                floor = stats["mean_final_accuracy"].max() - DEFAULT_ACCURACY_TOLERANCE
            return stats["mean_final_accuracy"] >= floor
        if self.comm_budget_bytes is None:
            return pd.Series(True, index=stats.index)
        return stats["mean_comm_bytes"] <= self.comm_budget_bytes

    def recommend(self, tau: float, capacity: int) -> Recommendation:
        """
        Pick the caching policy for one (τ, C) cell under the comparer's objective.

        Minimising communication ranks feasible policies by mean comm bytes alone and breaks ties
        by FIFO < LRU < PBR. Maximising accuracy ranks by mean accuracy, then by comm bytes.

        Args:
            tau (float): Significance threshold of the cell.
            capacity (int): Cache capacity of the cell.

        Raises:
            IncompleteTableError: If a caching policy has no rows for the cell.
        """
        # Seed-averaged statistics for each caching policy in the cell
        stats = self.candidates(tau, capacity)
        feasible = stats[self._feasible(stats)]

        # Rank the feasible policies, or every policy by accuracy when none is feasible
        if feasible.empty:
            logger.warning(
                f"No policy meets the {self.objective.value} constraint at tau={tau}, capacity={capacity}; "
                "falling back to the most accurate policy"
            )
            ranked = stats.sort_values(["mean_final_accuracy", "mean_comm_bytes", "order"], ascending=[False, True, True])
        elif self.objective == Objective.MIN_COMM_AT_ACCURACY_FLOOR:
            ranked = feasible.sort_values(["mean_comm_bytes", "order"], ascending=[True, True])
        else:
            ranked = feasible.sort_values(["mean_final_accuracy", "mean_comm_bytes", "order"], ascending=[False, True, True])

        # Best ranked row becomes the recommendation
        best = ranked.iloc[0]
        return Recommendation(
            policy=CachePolicy.parse(best["policy"]),
            tau=tau,
            capacity=capacity,
            objective=self.objective,
            mean_comm_bytes=float(best["mean_comm_bytes"]),
            mean_final_accuracy=float(best["mean_final_accuracy"]),
            mean_cache_hits=float(best["mean_cache_hits"]),
            mean_peak_mem_bytes=float(best["mean_peak_mem_bytes"]),
            n_seeds=int(best["n_seeds"]),
            candidates=stats.drop(columns="order").reset_index(drop=True),
        )

    def recommend_all(self) -> list[Recommendation]:
        recommendations = []
        for tau, capacity in tqdm(self.cells(), desc="Recommending", leave=False):
            recommendation = self.recommend(tau, capacity)
            tqdm.write(
                f"tau={tau:g} capacity={capacity}: {recommendation.policy.value} "
                f"(comm {recommendation.mean_comm_bytes:.0f} bytes, accuracy {recommendation.mean_final_accuracy:.4f})"
            )
            recommendations.append(recommendation)
        return recommendations


def recommend_strategy(
    table: pd.DataFrame,
    objective: Objective,
    tau: float,
    capacity: int,
    accuracy_floor: Optional[float] = None,
    comm_budget_bytes: Optional[int] = None,
) -> Recommendation:
    return StrategyComparer(table, objective, accuracy_floor, comm_budget_bytes).recommend(tau, capacity)


def summarize_cells(table: pd.DataFrame) -> pd.DataFrame:
    return StrategyComparer(table).summarize()


def recommendations_frame(recommendations: list[Recommendation]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "tau": r.tau,
                "capacity": r.capacity,
                "objective": r.objective.value,
                "policy": r.policy.value,
                "mean_comm_bytes": r.mean_comm_bytes,
                "mean_final_accuracy": r.mean_final_accuracy,
                "mean_cache_hits": r.mean_cache_hits,
                "mean_peak_mem_bytes": r.mean_peak_mem_bytes,
                "n_seeds": r.n_seeds,
            }
            for r in recommendations
        ]
    )


def strategy_dataset(
    table: pd.DataFrame,
    config: ExperimentConfig,
    objective: Objective = Objective.MIN_COMM_AT_ACCURACY_FLOOR,
) -> pd.DataFrame:
    """
    One row per (τ, C) cell: the workload / deployment features a strategy predictor could
    learn from, labelled with the policy the exhaustive comparison selects.
    """
    comparer = StrategyComparer(table, objective)
    workload = config.workload
    samples = workload.samples_per_client
    mean_samples = float(np.mean(samples)) if not isinstance(samples, (int, np.integer)) else float(samples)
    rows = []
    for recommendation in comparer.recommend_all():
        rows.append(
            {
                "task": getattr(workload.task, "value", workload.task),
                "dim": workload.dim,
                "samples_per_client": mean_samples,
                "heterogeneity": workload.heterogeneity,
                "n_clients": config.n_clients,
                "clients_per_round": config.clients_per_round,
                "tau": recommendation.tau,
                "capacity": recommendation.capacity,
                "best_policy": recommendation.policy.value,
            }
        )
    return pd.DataFrame(rows, columns=STRATEGY_FEATURES + ["best_policy"])
