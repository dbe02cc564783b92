"""Shared fixtures: a default codec and small trained stages.

Stage construction is deliberately tiny (2 shards x 2 clients, 2 rounds)
so the unit suite stays fast; the acceptance tests build their own
configurations at the sizes their criteria pin.
"""

from __future__ import annotations

import numpy as np
import pytest

from fusim.codec import FixedPointCodec
from fusim.data import PartitionMode, PartitionSpec, make_synthetic_dataset, partition
from fusim.federation import HistoryStore, ShardConfig, Stage, StorageMode, train_shard
from fusim.models import MLPSpec


@pytest.fixture(scope="session")
def codec() -> FixedPointCodec:
    return FixedPointCodec()


def build_tiny_stage(
    num_shards: int = 2,
    clients_per_shard: int = 2,
    rounds: int = 2,
    local_epochs: int = 2,
    seed: int = 0,
    num_classes: int = 3,
    samples_per_class: int = 12,
    feature_dim: int = 6,
    cluster_spread: float = 1.0,
    hidden: tuple[int, ...] = (8,),
    learning_rate: float = 0.05,
    batch_size: int = 16,
) -> Stage:
    n_clients = num_shards * clients_per_shard
    data = make_synthetic_dataset(
        num_classes=num_classes,
        samples_per_class=samples_per_class,
        feature_dim=feature_dim,
        cluster_spread=cluster_spread,
        seed=seed,
    )
    parts = partition(
        data, PartitionSpec(mode=PartitionMode.IID, num_clients=n_clients, seed=seed)
    )
    shards = tuple(
        ShardConfig(
            shard_id=j,
            client_ids=tuple(range(j * clients_per_shard, (j + 1) * clients_per_shard)),
            rounds=rounds,
            local_epochs=local_epochs,
            server_id=j,
        )
        for j in range(num_shards)
    )
    spec = MLPSpec(feature_dim=feature_dim, num_classes=num_classes, hidden=hidden)
    return Stage(
        stage_id=0,
        shards=shards,
        datasets={cid: parts[cid] for cid in range(n_clients)},
        seed=seed,
        model_spec=spec,
        learning_rate=learning_rate,
        batch_size=batch_size,
    )


def make_uncoded_history(stage: Stage) -> HistoryStore:
    return HistoryStore(
        StorageMode.UNCODED,
        {s.shard_id: s.client_ids for s in stage.shards},
        stage.model_spec.layout(),
    )


def make_coded_history(stage: Stage, codec: FixedPointCodec, key_seed: int = 0) -> HistoryStore:
    return HistoryStore(
        StorageMode.CODED,
        {s.shard_id: s.client_ids for s in stage.shards},
        stage.model_spec.layout(),
        codec=codec,
        key_seed=key_seed,
    )


@pytest.fixture(scope="session")
def tiny_stage() -> Stage:
    return build_tiny_stage()


@pytest.fixture(scope="session")
def trained_uncoded(tiny_stage: Stage):
    """(stage, history, finals) with all shards trained, uncoded storage."""
    history = make_uncoded_history(tiny_stage)
    finals = {}
    for shard in tiny_stage.shards:
        finals[shard.shard_id], _ = train_shard(tiny_stage, shard, history)
    return tiny_stage, history, finals


@pytest.fixture(scope="session")
def trained_coded(tiny_stage: Stage, codec: FixedPointCodec):
    """Same stage as trained_uncoded but committed through the coded store."""
    history = make_coded_history(tiny_stage, codec)
    finals = {}
    for shard in tiny_stage.shards:
        finals[shard.shard_id], _ = train_shard(tiny_stage, shard, history)
    return tiny_stage, history, finals


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
