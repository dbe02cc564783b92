"""Client removal by shard-local calibrated retraining, plus two baselines.

SE: the impacted shard alone retrains for G rounds at a reduced epoch
budget, steering each round with the norm of the parameters it stored for
that same round during original training.  FR retrains everything from
scratch (the provable gold standard).  FE is SE without sharding, run
against a single-shard history over the whole population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .federation import HistoryStore, ShardConfig, Stage, fedavg_aggregate
from .models import init_params, train_local
from .params import ParamVector


class EmptyRetainedError(ValueError):
    """Every client of the shard was marked for removal."""


@dataclass(frozen=True)
class UnlearnJob:
    shard_id: int
    unlearn_client_ids: frozenset[int]
    rounds: int  # G', equal to the stored G
    local_epoch_ratio: float = 1.0  # r

    def __post_init__(self) -> None:
        object.__setattr__(self, "unlearn_client_ids", frozenset(self.unlearn_client_ids))
        if not self.unlearn_client_ids:
            raise ValueError("unlearn_client_ids must be non-empty")
        if self.local_epoch_ratio < 1.0:
            raise ValueError("local_epoch_ratio must be >= 1")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")

    def validate_against(self, shard: ShardConfig) -> None:
        unknown = self.unlearn_client_ids - set(shard.client_ids)
        if unknown:
            raise ValueError(f"clients {sorted(unknown)} are not in shard {shard.shard_id}")
        if self.unlearn_client_ids >= set(shard.client_ids):
            raise EmptyRetainedError(f"shard {shard.shard_id} would have no retained clients")

    def retained(self, shard: ShardConfig) -> tuple[int, ...]:
        return tuple(c for c in shard.client_ids if c not in self.unlearn_client_ids)

    def local_epochs(self, shard: ShardConfig) -> int:
        return math.ceil(shard.local_epochs / self.local_epoch_ratio)


@dataclass(frozen=True)
class RoundCost:
    round: int
    client_epochs: int
    bytes_moved: int


@dataclass(frozen=True)
class UnlearnOutcome:
    params: ParamVector
    costs: tuple[RoundCost, ...]
    method: str  # SE | FR | FE

    @property
    def total_client_epochs(self) -> int:
        return sum(c.client_epochs for c in self.costs)

    @property
    def total_bytes_moved(self) -> int:
        return sum(c.bytes_moved for c in self.costs)


def prepare_unlearned_init(history: HistoryStore, job: UnlearnJob) -> ParamVector:
    """Unweighted mean of the retained clients' final-round stored vectors.

    The erased clients' entries are dropped before any arithmetic; nothing
    derived from them reaches the result.
    """
    shard_clients = history.shard_clients.get(job.shard_id)
    if shard_clients is None:
        raise KeyError(f"history has no shard {job.shard_id}")
    retained = [c for c in shard_clients if c not in job.unlearn_client_ids]
    if not retained:
        raise EmptyRetainedError(f"shard {job.shard_id} would have no retained clients")
    stored = history.fetch_round(job.shard_id, job.rounds, actor=f"unlearn:{job.shard_id}")
    return fedavg_aggregate(stored[c] for c in retained)


def calibrated_round(
    current: ParamVector,
    stored_round_g: dict[int, ParamVector],
    fresh_updates: dict[int, ParamVector],
    epsilon: float = 1e-12,
) -> ParamVector:
    """current + (1/M) sum_m (|stored_m| / |fresh_m|) * fresh_m.

    Norms are L2 over the full vector.  A fresh update with norm below
    epsilon contributes nothing instead of dividing by ~zero.
    """
    if set(stored_round_g) != set(fresh_updates):
        raise ValueError("stored and fresh updates must cover the same clients")
    if not fresh_updates:
        raise ValueError("calibration needs at least one client")
    M = len(fresh_updates)
    acc = np.zeros(current.dim, dtype=np.float64)
    for cid, fresh in fresh_updates.items():
        fresh64 = fresh.values.astype(np.float64)
        fresh_norm = float(np.linalg.norm(fresh64))
        if fresh_norm < epsilon:
            continue
        stored_norm = float(np.linalg.norm(stored_round_g[cid].values.astype(np.float64)))
        acc += (stored_norm / fresh_norm) * fresh64
    return current.with_values(current.values.astype(np.float64) + acc / M)


def _exchange_bytes(num_clients: int, dim: int) -> int:
    # One download of the global plus one upload of the update per client.
    return 2 * num_clients * dim * 4


def run_unlearning_se(
    stage: Stage, history: HistoryStore, job: UnlearnJob, seed: int | None = None
) -> UnlearnOutcome:
    """Calibrated shard-local retraining; touches only the job's shard."""
    shard = next(s for s in stage.shards if s.shard_id == job.shard_id)
    job.validate_against(shard)
    base_seed = stage.seed if seed is None else seed
    retained = job.retained(shard)
    epochs = job.local_epochs(shard)
    actor = f"unlearn:{job.shard_id}"
    current = prepare_unlearned_init(history, job)
    costs: list[RoundCost] = []
    slice_bytes = 0
    if history.mode.value == "coded":
        slice_bytes = len(history.points.alphas) * history.block_len * 8
    for g in range(1, job.rounds + 1):
        stored_all = history.fetch_round(job.shard_id, g, actor=actor)
        stored = {c: stored_all[c] for c in retained}
        fresh: dict[int, ParamVector] = {}
        for cid in retained:
            data = stage.dataset_for(cid, actor)
            stream = np.random.SeedSequence(
                [base_seed, stage.stage_id, shard.shard_id, cid, g, 0x5E]
            )
            fresh[cid] = train_local(
                current,
                data,
                epochs=epochs,
                learning_rate=stage.learning_rate,
                batch_size=stage.batch_size,
                seed=stream,
            )
        current = calibrated_round(current, stored, fresh)
        costs.append(
            RoundCost(
                round=g,
                client_epochs=len(retained) * epochs,
                bytes_moved=_exchange_bytes(len(retained), current.dim) + slice_bytes,
            )
        )
    return UnlearnOutcome(params=current, costs=tuple(costs), method="SE")


def run_baseline_fr(stage: Stage, job: UnlearnJob, seed: int | None = None) -> UnlearnOutcome:
    """Retrain from scratch over every retained client of the whole stage."""
    base_seed = stage.seed if seed is None else seed
    shard = next(s for s in stage.shards if s.shard_id == job.shard_id)
    retained = [
        c
        for s in stage.shards
        for c in s.client_ids
        if c not in job.unlearn_client_ids
    ]
    if not retained:
        raise EmptyRetainedError("no retained clients remain in the stage")
    epochs = shard.local_epochs
    rng = np.random.default_rng(np.random.SeedSequence([base_seed, stage.stage_id, 0xF4]))
    current = init_params(stage.model_spec, rng)
    actor = "baseline:fr"
    costs: list[RoundCost] = []
    for g in range(1, job.rounds + 1):
        fresh = []
        for cid in retained:
            data = stage.dataset_for(cid, actor)
            stream = np.random.SeedSequence([base_seed, stage.stage_id, 0xF4, cid, g])
            fresh.append(
                train_local(
                    current,
                    data,
                    epochs=epochs,
                    learning_rate=stage.learning_rate,
                    batch_size=stage.batch_size,
                    seed=stream,
                )
            )
        current = fedavg_aggregate(fresh)
        costs.append(
            RoundCost(
                round=g,
                client_epochs=len(retained) * epochs,
                bytes_moved=_exchange_bytes(len(retained), current.dim),
            )
        )
    return UnlearnOutcome(params=current, costs=tuple(costs), method="FR")


def run_baseline_fe(
    stage: Stage, history_all_clients: HistoryStore, job: UnlearnJob, seed: int | None = None
) -> UnlearnOutcome:
    """Calibrated retraining without sharding: SE over one all-client shard."""
    if len(stage.shards) != 1:
        raise ValueError("the FE baseline runs against a single-shard stage over all clients")
    only = stage.shards[0]
    fe_job = UnlearnJob(
        shard_id=only.shard_id,
        unlearn_client_ids=job.unlearn_client_ids,
        rounds=job.rounds,
        local_epoch_ratio=job.local_epoch_ratio,
    )
    outcome = run_unlearning_se(stage, history_all_clients, fe_job, seed)
    return replace(outcome, method="FE")
