"""Scalable federated unlearning: isolated sharding + coded parameter storage."""

__version__ = "0.1.0"

from .analytics import (
    Arrival,
    CostLedger,
    Distribution,
    NetworkModel,
    StageProfile,
    UnlearnRequest,
    WorkloadSpec,
    coded_throughput,
    expected_time_concurrent,
    expected_time_sequential,
    generate_workload,
    shard_hit_probability,
    simulate_stage,
    storage_efficiency_bounds,
)
from .codec import ClampWarning, FixedPointCodec, dequantize, quantize
from .coding import (
    AuthorizationError,
    ClientSliceStore,
    CodedSlice,
    DecodeFailure,
    EvalPoints,
    KeyRegistry,
    ShardBlock,
    encode_slices,
    encode_slices_float,
    reconstruct_fast,
    reconstruct_fast_float,
    reconstruct_robust,
)
from .config import ConfigError, ExperimentConfig, RunManifest
from .data import (
    Dataset,
    PartitionMode,
    PartitionSpec,
    concat_datasets,
    make_synthetic_dataset,
    partition,
)
from .federation import (
    HistoryNotFound,
    HistoryStore,
    RoundRecord,
    ShardConfig,
    Stage,
    StorageMode,
    fedavg_aggregate,
    load_history,
    save_history,
    train_shard,
)
from .mia import (
    AttackReport,
    AttackSample,
    collect_losses,
    fit_and_score,
    unlearning_effectiveness,
)
from .models import MLPSpec, TrainingDivergenceError, evaluate, init_params, train_local
from .params import NonFiniteParamsError, ParamVector, from_tensors
from .unlearning import (
    EmptyRetainedError,
    UnlearnJob,
    UnlearnOutcome,
    calibrated_round,
    prepare_unlearned_init,
    run_baseline_fe,
    run_baseline_fr,
    run_unlearning_se,
)

__all__ = [
    "Arrival",
    "AttackReport",
    "AttackSample",
    "AuthorizationError",
    "ClampWarning",
    "ClientSliceStore",
    "CodedSlice",
    "ConfigError",
    "CostLedger",
    "Dataset",
    "DecodeFailure",
    "Distribution",
    "EmptyRetainedError",
    "EvalPoints",
    "ExperimentConfig",
    "FixedPointCodec",
    "HistoryNotFound",
    "HistoryStore",
    "KeyRegistry",
    "MLPSpec",
    "NetworkModel",
    "NonFiniteParamsError",
    "ParamVector",
    "PartitionMode",
    "PartitionSpec",
    "RoundRecord",
    "RunManifest",
    "ShardBlock",
    "ShardConfig",
    "Stage",
    "StageProfile",
    "StorageMode",
    "TrainingDivergenceError",
    "UnlearnJob",
    "UnlearnOutcome",
    "UnlearnRequest",
    "WorkloadSpec",
    "calibrated_round",
    "coded_throughput",
    "collect_losses",
    "concat_datasets",
    "dequantize",
    "encode_slices",
    "encode_slices_float",
    "evaluate",
    "expected_time_concurrent",
    "expected_time_sequential",
    "fedavg_aggregate",
    "fit_and_score",
    "from_tensors",
    "generate_workload",
    "init_params",
    "load_history",
    "make_synthetic_dataset",
    "partition",
    "prepare_unlearned_init",
    "quantize",
    "reconstruct_fast",
    "reconstruct_fast_float",
    "reconstruct_robust",
    "run_baseline_fe",
    "run_baseline_fr",
    "run_unlearning_se",
    "save_history",
    "shard_hit_probability",
    "simulate_stage",
    "storage_efficiency_bounds",
    "train_local",
    "train_shard",
    "unlearning_effectiveness",
]
