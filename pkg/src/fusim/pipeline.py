"""Command implementations: train, unlearn, simulate, report.

Each command owns one subdirectory under the output base, writes a
manifest there, and is a verified no-op when that manifest already exists
(pass force=True to redo).  Everything an unlearn or report run needs is
rebuilt deterministically from the config, so commands can run in
separate processes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    Arrival,
    LEDGER_CSV_COLUMNS,
    StageProfile,
    coded_throughput,
    generate_workload,
    ledger_csv_row,
    pass_comm_seconds,
    shard_hit_probability,
    simulate_stage,
    storage_efficiency_bounds,
    time_model_report,
    write_ledger_csv,
)
from .config import ConfigError, ExperimentConfig, ManifestError, RunManifest
from .data import (
    Dataset,
    PartitionSpec,
    concat_datasets,
    make_synthetic_dataset,
    partition,
    split_train_heldout,
)
from .federation import (
    HistoryStore,
    Stage,
    ShardConfig,
    StorageMode,
    load_client_slices,
    load_history,
    save_client_slices,
    save_history,
    train_shard,
)
from .mia import unlearning_effectiveness
from .models import MLPSpec, evaluate
from .params import load_param_vector, save_param_vector
from .unlearning import (
    UnlearnJob,
    run_baseline_fe,
    run_baseline_fr,
    run_unlearning_se,
)

METHODS = ("SE", "FR", "FE")


# ---------------------------------------------------------------------------
# Deterministic stage construction from a config.


def build_stage(config: ExperimentConfig) -> tuple[Stage, Dataset]:
    """Instantiate the stage (cohort, shards, client datasets) plus held-out data."""
    ds_cfg = config.dataset
    # Draw half again as many samples per class; the surplus holds out for MIA.
    full = make_synthetic_dataset(
        num_classes=ds_cfg.num_classes,
        samples_per_class=ds_cfg.samples_per_class + max(ds_cfg.samples_per_class // 2, 1),
        feature_dim=ds_cfg.feature_dim,
        cluster_spread=ds_cfg.cluster_spread,
        seed=config.seed,
    )
    train, heldout = split_train_heldout(full, ds_cfg.samples_per_class)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xC040]))
    cohort = sorted(
        int(c) for c in rng.choice(config.clients_total, config.clients_selected, replace=False)
    )
    parts = partition(
        train,
        PartitionSpec(
            mode=config.partition,
            num_clients=config.clients_selected,
            primary_fraction=config.primary_fraction,
            seed=config.seed,
        ),
    )
    datasets = {cid: parts[i] for i, cid in enumerate(cohort)}
    per_shard = config.clients_selected // config.shards
    shards = tuple(
        ShardConfig(
            shard_id=j,
            client_ids=tuple(cohort[j * per_shard : (j + 1) * per_shard]),
            rounds=config.rounds,
            local_epochs=config.local_epochs,
            server_id=j,
        )
        for j in range(config.shards)
    )
    spec = MLPSpec(
        feature_dim=ds_cfg.feature_dim,
        num_classes=ds_cfg.num_classes,
        hidden=config.hidden_layers,
    )
    stage = Stage(
        stage_id=0,
        shards=shards,
        datasets=datasets,
        seed=config.seed,
        model_spec=spec,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
    )
    return stage, heldout


def make_history(config: ExperimentConfig, stage: Stage) -> HistoryStore:
    shard_clients = {s.shard_id: s.client_ids for s in stage.shards}
    mode = StorageMode(config.storage_mode)
    if mode is StorageMode.CODED:
        return HistoryStore(
            mode,
            shard_clients,
            stage.model_spec.layout(),
            codec=config.make_codec(),
            key_seed=config.seed,
        )
    return HistoryStore(mode, shard_clients, stage.model_spec.layout())


def _resume(run_dir: Path, force: bool) -> RunManifest | None:
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists() and not force:
        try:
            manifest = RunManifest.load(manifest_path)
            manifest.verify(run_dir)
        except (ValueError, KeyError, FileNotFoundError) as exc:
            raise ManifestError(
                f"existing run at {run_dir} fails verification ({exc}); "
                "pass --force to rebuild it"
            ) from exc
        return manifest
    return None


def _write_config_copy(config: ExperimentConfig, run_dir: Path, manifest: RunManifest) -> None:
    path = run_dir / "config.json"
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest.add_artifact("config", path, run_dir)


# ---------------------------------------------------------------------------
# train


def cmd_train(config: ExperimentConfig, out_base, force: bool = False) -> RunManifest:
    config.validate()
    run_dir = Path(out_base) / "train"
    if (existing := _resume(run_dir, force)) is not None:
        return existing
    run_dir.mkdir(parents=True, exist_ok=True)
    stage, _ = build_stage(config)
    history = make_history(config, stage)
    manifest = RunManifest(
        config_hash=config.config_hash(), command="train", code_version=__version__
    )
    for shard in stage.shards:
        final, _ = train_shard(stage, shard, history)
        path = run_dir / f"model_shard{shard.shard_id}.fupv"
        save_param_vector(path, final)
        manifest.add_artifact(f"model_shard{shard.shard_id}", path, run_dir)
    history_path = run_dir / "history.fush"
    save_history(history_path, history)
    manifest.add_artifact("history", history_path, run_dir)
    if history.mode is StorageMode.CODED:
        for path in save_client_slices(run_dir / "slices", history):
            manifest.add_artifact(f"slices_{path.stem}", path, run_dir)
    _write_config_copy(config, run_dir, manifest)
    manifest.save(run_dir / "manifest.json")
    return manifest


def load_trained_history(config: ExperimentConfig, out_base, stage: Stage) -> HistoryStore:
    train_dir = Path(out_base) / "train"
    manifest_path = train_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(
            f"no training manifest at {manifest_path}; run the train command first"
        )
    manifest = RunManifest.load(manifest_path)
    if manifest.config_hash != config.config_hash():
        raise ConfigError(
            "<config>", f"does not match the training run recorded in {manifest_path}"
        )
    history_path = manifest.artifact_path("history", train_dir)
    shard_clients = {s.shard_id: s.client_ids for s in stage.shards}
    history = load_history(history_path, shard_clients, stage.model_spec.layout())
    if history.mode is StorageMode.CODED:
        load_client_slices(train_dir / "slices", history)
    return history


# ---------------------------------------------------------------------------
# unlearn


def _group_passes(requests, arrival: Arrival) -> list[tuple[int, tuple[int, ...]]]:
    """(shard_id, erased client ids) per retraining pass."""
    if arrival is Arrival.SEQUENTIAL:
        return [(r.shard_id, (r.client_id,)) for r in requests]
    by_shard: dict[int, list[int]] = {}
    for r in requests:
        by_shard.setdefault(r.shard_id, []).append(r.client_id)
    return [(sid, tuple(by_shard[sid])) for sid in sorted(by_shard)]


def cmd_unlearn(
    config: ExperimentConfig, out_base, method: str, force: bool = False
) -> RunManifest:
    config.validate()
    method = method.upper()
    if method not in METHODS:
        raise ConfigError("method", f"must be one of {'/'.join(METHODS)}")
    run_dir = Path(out_base) / f"unlearn-{method.lower()}"
    if (existing := _resume(run_dir, force)) is not None:
        return existing
    stage, _ = build_stage(config)
    if method == "FE" and len(stage.shards) != 1:
        raise ConfigError(
            "shards", "the FE baseline needs a single-shard history; set shards to 1"
        )
    history = load_trained_history(config, out_base, stage)
    run_dir.mkdir(parents=True, exist_ok=True)
    profile = StageProfile.from_stage(stage, config.epoch_ratio)
    requests = generate_workload(config.make_workload(), profile)
    passes = _group_passes(requests, config.make_workload().arrival)
    network = config.make_network()
    coded = config.storage_mode == "coded"
    manifest = RunManifest(
        config_hash=config.config_hash(), command="unlearn", code_version=__version__
    )
    csv_rows: list[dict] = []
    pass_metrics: list[dict] = []
    for i, (sid, targets) in enumerate(passes):
        job = UnlearnJob(
            shard_id=sid,
            unlearn_client_ids=frozenset(targets),
            rounds=config.rounds,
            local_epoch_ratio=config.epoch_ratio,
        )
        if method == "SE":
            outcome = run_unlearning_se(stage, history, job, config.seed)
            shard = next(s for s in stage.shards if s.shard_id == sid)
            retained = list(job.retained(shard))
            comm = pass_comm_seconds(profile, len(retained), coded, network)
            storage = history.server_total_bytes
        elif method == "FR":
            outcome = run_baseline_fr(stage, job, config.seed)
            retained = [
                c
                for s in stage.shards
                for c in s.client_ids
                if c not in job.unlearn_client_ids
            ]
            comm = pass_comm_seconds(
                dataclasses.replace(profile, epoch_ratio=1.0), len(retained), False, network
            )
            storage = 0
        else:
            outcome = run_baseline_fe(stage, history, job, config.seed)
            retained = list(job.retained(stage.shards[0]))
            comm = pass_comm_seconds(profile, len(retained), coded, network)
            storage = history.server_total_bytes
        model_path = run_dir / f"model_{method.lower()}_pass{i}.fupv"
        save_param_vector(model_path, outcome.params)
        manifest.add_artifact(f"model_pass{i}", model_path, run_dir)
        retained_data = concat_datasets([stage.datasets[c] for c in retained])
        erased_data = concat_datasets([stage.datasets[c] for c in targets])
        acc_retained, _, _ = evaluate(outcome.params, retained_data)
        acc_erased, _, _ = evaluate(outcome.params, erased_data)
        csv_rows.append(
            {
                "run_id": f"{method}-pass{i}",
                "mode": config.storage_mode,
                "arrival": config.workload.arrival,
                "distribution": config.workload.distribution,
                "S": len(stage.shards),
                "C": config.clients_selected,
                "K": config.workload.num_requests,
                "client_epochs": outcome.total_client_epochs,
                "comm_seconds": f"{comm:.6f}",
                "storage_bytes": storage,
                "wall_seconds": "0.000000",
            }
        )
        pass_metrics.append(
            {
                "pass": i,
                "shard_id": sid,
                "erased_clients": sorted(targets),
                "client_epochs": outcome.total_client_epochs,
                "comm_seconds": comm,
                "retained_accuracy": acc_retained,
                "erased_accuracy": acc_erased,
                "model": model_path.name,
            }
        )
    ledger_path = run_dir / "ledger.csv"
    write_ledger_csv(ledger_path, csv_rows)
    manifest.add_artifact("ledger", ledger_path, run_dir)
    metrics = {
        "method": method,
        "seed": config.seed,
        "arrival": config.workload.arrival,
        "distribution": config.workload.distribution,
        "num_requests": config.workload.num_requests,
        "storage_mode": config.storage_mode,
        "shards": config.shards,
        "storage_bytes": max((r["storage_bytes"] for r in csv_rows), default=0),
        "total_client_epochs": sum(p["client_epochs"] for p in pass_metrics),
        "passes": pass_metrics,
    }
    metrics_path = run_dir / "metrics.json"
    metrics_path.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    manifest.add_artifact("metrics", metrics_path, run_dir)
    _write_config_copy(config, run_dir, manifest)
    manifest.save(run_dir / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(
    config: ExperimentConfig, out_base, force: bool = False, trials: int = 100_000
) -> RunManifest:
    config.validate()
    run_dir = Path(out_base) / "simulate"
    if (existing := _resume(run_dir, force)) is not None:
        return existing
    run_dir.mkdir(parents=True, exist_ok=True)
    spec = MLPSpec(
        feature_dim=config.dataset.feature_dim,
        num_classes=config.dataset.num_classes,
        hidden=config.hidden_layers,
    )
    per_shard = config.clients_selected // config.shards
    profile = StageProfile(
        shard_clients={
            j: tuple(range(j * per_shard, (j + 1) * per_shard)) for j in range(config.shards)
        },
        param_dim=spec.dim,
        rounds=config.rounds,
        local_epochs=config.local_epochs,
        epoch_ratio=config.epoch_ratio,
    )
    time_rows = time_model_report(
        S_values=(1, 2, 4, 8), K_values=(1, 2, 4, 8, 16), Ct=1.0, trials=trials, seed=config.seed
    )
    gamma_s, gamma_lo, gamma_hi = storage_efficiency_bounds(
        config.clients_selected, config.shards, config.error_fraction
    )
    hit_check = {
        f"i={i}": sum(shard_hit_probability(i, j, config.shards) for j in range(i))
        for i in range(1, 6)
    }
    throughput = {
        "C": config.clients_selected,
        "S": config.shards,
        "kappa": 1.0,
        "lambda": coded_throughput(config.clients_selected, config.shards),
        "lambda_ratio_C16_over_C8": coded_throughput(16, 1) / coded_throughput(8, 1),
    }
    workload = config.make_workload()
    csv_rows = []
    ledgers = {}
    measured_wall = 0.0
    for mode in ("uncoded", "coded"):
        ledger = simulate_stage(profile, workload, mode, config.make_network())
        ledgers[mode] = ledger
        measured_wall += ledger.wall_seconds
        row = ledger_csv_row(f"sim-{mode}", ledger, workload, profile)
        # Wall time is not a function of (config, seed); it lives in the
        # manifest so artifact bytes stay reproducible.
        row["wall_seconds"] = "0.000000"
        csv_rows.append(row)
    report = {
        "time_models": time_rows,
        "max_time_model_rel_error": max(r["rel_error"] for r in time_rows),
        "hit_probability_normalization": hit_check,
        "storage_bounds": {
            "C": config.clients_selected,
            "S": config.shards,
            "mu": config.error_fraction,
            "gamma_s": gamma_s,
            "gamma_c_lower": gamma_lo,
            "gamma_c_upper": gamma_hi,
        },
        "throughput": throughput,
        "ledger_summary": {
            mode: {
                "client_epochs": led.client_epochs,
                "comm_seconds": led.comm_seconds,
                "storage_bytes": led.storage_bytes,
                "failed_requests": len(led.failed_requests),
            }
            for mode, led in ledgers.items()
        },
    }
    manifest = RunManifest(
        config_hash=config.config_hash(),
        command="simulate",
        code_version=__version__,
        wall_seconds=measured_wall,
    )
    report_path = run_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    manifest.add_artifact("report", report_path, run_dir)
    ledger_path = run_dir / "ledger.csv"
    write_ledger_csv(ledger_path, csv_rows)
    manifest.add_artifact("ledger", ledger_path, run_dir)
    _write_config_copy(config, run_dir, manifest)
    manifest.save(run_dir / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# report


def comparable_config_hash(config: ExperimentConfig) -> str:
    """Hash of the fields that must agree for runs to be comparable.

    Shard count and storage mode legitimately differ across methods
    (FE needs S = 1, storage comparisons need coded vs uncoded).
    """
    tree = config.to_dict()
    for key in ("shards", "storage_mode", "out_dir"):
        tree.pop(key, None)
    return hashlib.sha256(json.dumps(tree, sort_keys=True).encode()).hexdigest()


def _mia_for_run(
    config: ExperimentConfig,
    run_dir: Path,
    manifest: RunManifest,
    metrics: dict,
    scratch_params,
    scratch_targets: list[int],
) -> tuple[float | None, float | None, float | None]:
    first = metrics["passes"][0]
    if scratch_params is None or sorted(first["erased_clients"]) != scratch_targets:
        return None, None, None
    stage, heldout = build_stage(config)
    unlearned = load_param_vector(manifest.artifact_path("model_pass0", run_dir))
    erased = concat_datasets([stage.datasets[c] for c in first["erased_clients"]])
    f1_u, f1_s, delta = unlearning_effectiveness(
        unlearned, scratch_params, erased, heldout, split_seed=config.seed
    )
    return f1_u, f1_s, delta


def cmd_report(manifest_paths, out_base, force: bool = False) -> RunManifest:
    paths = [Path(p) for p in manifest_paths]
    if not paths:
        raise ConfigError("manifests", "at least one unlearn manifest is required")
    run_dir = Path(out_base) / "report"
    if (existing := _resume(run_dir, force)) is not None:
        return existing
    loaded: list[tuple[Path, RunManifest, ExperimentConfig, dict]] = []
    for path in paths:
        if not path.exists():
            raise FileNotFoundError(f"manifest not found: {path}")
        manifest = RunManifest.load(path)
        if manifest.command != "unlearn":
            raise ConfigError("manifests", f"{path} is a {manifest.command} manifest, not unlearn")
        base = path.parent
        manifest.verify(base)
        config = ExperimentConfig.from_dict(
            json.loads(manifest.artifact_path("config", base).read_text())
        )
        metrics = json.loads(manifest.artifact_path("metrics", base).read_text())
        loaded.append((base, manifest, config, metrics))
    hashes = {comparable_config_hash(c) for _, _, c, _ in loaded}
    if len(hashes) != 1:
        raise ConfigError("manifests", "runs span incompatible configurations")
    run_dir.mkdir(parents=True, exist_ok=True)
    # The FR run, when present, anchors the MIA comparison.
    scratch_params, scratch_targets = None, []
    for base, manifest, config, metrics in loaded:
        if metrics["method"] == "FR":
            scratch_params = load_param_vector(manifest.artifact_path("model_pass0", base))
            scratch_targets = sorted(metrics["passes"][0]["erased_clients"])
            break
    rows = []
    for base, manifest, config, metrics in loaded:
        f1_u, f1_s, delta = _mia_for_run(
            config, base, manifest, metrics, scratch_params, scratch_targets
        )
        mean_ret = float(
            np.mean([p["retained_accuracy"] for p in metrics["passes"]])
        )
        mean_erased = float(np.mean([p["erased_accuracy"] for p in metrics["passes"]]))
        rows.append(
            {
                "method": metrics["method"],
                "seed": metrics["seed"],
                "arrival": metrics["arrival"],
                "distribution": metrics["distribution"],
                "K": metrics["num_requests"],
                "S": metrics["shards"],
                "storage_mode": metrics["storage_mode"],
                "client_epochs": metrics["total_client_epochs"],
                "comm_seconds": sum(p["comm_seconds"] for p in metrics["passes"]),
                "storage_bytes": metrics["storage_bytes"],
                "retained_accuracy": mean_ret,
                "erased_accuracy": mean_erased,
                "mia_f1": f1_u,
                "mia_f1_scratch": f1_s,
                "mia_delta": delta,
            }
        )
    manifest_out = RunManifest(
        config_hash=loaded[0][2].config_hash(), command="report", code_version=__version__
    )
    csv_path = run_dir / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    manifest_out.add_artifact("report_csv", csv_path, run_dir)
    json_path = run_dir / "report.json"
    json_path.write_text(json.dumps({"rows": rows}, indent=2, sort_keys=True) + "\n")
    manifest_out.add_artifact("report_json", json_path, run_dir)
    from .plots import render_report_figures

    for fig_path in render_report_figures(rows, run_dir):
        manifest_out.add_artifact(fig_path.stem, fig_path, run_dir)
    manifest_out.save(run_dir / "manifest.json")
    return manifest_out
