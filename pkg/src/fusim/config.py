"""Experiment configuration (JSON tree with defaults) and run manifests.

Every run is fully determined by one config plus its seed; the manifest
records the config hash and a sha256 for each artifact so reruns can be
verified byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .analytics import Arrival, Distribution, NetworkModel, WorkloadSpec
from .codec import FixedPointCodec
from .data import PartitionMode


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"
    num_classes: int = 4
    samples_per_class: int = 200
    feature_dim: int = 16
    cluster_spread: float = 1.0


@dataclass(frozen=True)
class WorkloadConfig:
    arrival: str = "sequential"
    distribution: str = "adaptive"
    num_requests: int = 1


@dataclass(frozen=True)
class CodecConfig:
    prime: int = 2_147_483_647
    scale: int = 65_536
    clamp_range: float = 8.0


@dataclass(frozen=True)
class NetworkConfig:
    base_delay_seconds: float = 0.1
    data_rate_bps: float = 1_000_000.0


@dataclass(frozen=True)
class ExperimentConfig:
    clients_total: int = 100
    clients_selected: int = 20
    shards: int = 4
    rounds: int = 30
    local_epochs: int = 10
    epoch_ratio: float = 2.0
    hidden_layers: tuple[int, ...] = (32,)
    learning_rate: float = 0.05
    batch_size: int = 32
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    partition_mode: str = "iid"
    primary_fraction: float = 0.8
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    storage_mode: str = "uncoded"
    codec: CodecConfig = field(default_factory=CodecConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    error_fraction: float = 0.0  # mu
    seed: int = 0
    out_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        def require(cond: bool, fname: str, msg: str) -> None:
            if not cond:
                raise ConfigError(fname, msg)

        require(self.clients_total >= 1, "clients_total", "must be >= 1")
        require(
            1 <= self.clients_selected <= self.clients_total,
            "clients_selected",
            f"must lie in [1, clients_total={self.clients_total}]",
        )
        require(1 <= self.shards <= self.clients_selected, "shards", "must lie in [1, clients_selected]")
        require(
            self.clients_selected % self.shards == 0,
            "shards",
            f"must divide clients_selected={self.clients_selected} evenly",
        )
        require(self.rounds >= 0, "rounds", "must be >= 0")
        require(self.local_epochs >= 1, "local_epochs", "must be >= 1")
        require(self.epoch_ratio >= 1.0, "epoch_ratio", "must be >= 1")
        require(self.learning_rate > 0, "learning_rate", "must be > 0")
        require(self.batch_size >= 1, "batch_size", "must be >= 1")
        require(bool(self.hidden_layers), "hidden_layers", "must name at least one layer width")
        require(all(h >= 1 for h in self.hidden_layers), "hidden_layers", "widths must be >= 1")
        require(self.dataset.kind == "synthetic", "dataset.kind", "only 'synthetic' is supported")
        require(self.dataset.num_classes >= 2, "dataset.num_classes", "must be >= 2")
        require(self.dataset.samples_per_class >= 1, "dataset.samples_per_class", "must be >= 1")
        require(self.dataset.feature_dim >= 1, "dataset.feature_dim", "must be >= 1")
        require(self.dataset.cluster_spread >= 0, "dataset.cluster_spread", "must be >= 0")
        require(
            self.partition_mode in ("iid", "non_iid"),
            "partition_mode",
            "must be 'iid' or 'non_iid'",
        )
        require(0 < self.primary_fraction <= 1, "primary_fraction", "must lie in (0, 1]")
        require(
            self.workload.arrival in ("sequential", "concurrent"),
            "workload.arrival",
            "must be 'sequential' or 'concurrent'",
        )
        require(
            self.workload.distribution in ("even", "adaptive"),
            "workload.distribution",
            "must be 'even' or 'adaptive'",
        )
        require(self.workload.num_requests >= 1, "workload.num_requests", "must be >= 1")
        require(
            self.storage_mode in ("uncoded", "coded"),
            "storage_mode",
            "must be 'uncoded' or 'coded'",
        )
        require(0 <= self.error_fraction < 0.5, "error_fraction", "must lie in [0, 0.5)")
        require(
            2 * self.error_fraction * self.clients_selected
            <= self.clients_selected - self.shards + 1e-9,
            "error_fraction",
            "violates 2*mu*C <= C - S",
        )
        require(self.network.data_rate_bps > 0, "network.data_rate_bps", "must be > 0")
        require(self.network.base_delay_seconds >= 0, "network.base_delay_seconds", "must be >= 0")
        try:
            codec = self.make_codec()
            codec.check_points(self.clients_selected, self.shards)
        except ValueError as exc:
            raise ConfigError("codec", str(exc)) from None
        return self

    # -- adapters to domain objects ----------------------------------------

    def make_codec(self) -> FixedPointCodec:
        return FixedPointCodec(
            prime=self.codec.prime, scale=self.codec.scale, clamp_range=self.codec.clamp_range
        )

    def make_network(self) -> NetworkModel:
        return NetworkModel(
            base_delay_seconds=self.network.base_delay_seconds,
            data_rate_bps=self.network.data_rate_bps,
        )

    def make_workload(self) -> WorkloadSpec:
        return WorkloadSpec(
            arrival=Arrival(self.workload.arrival),
            distribution=Distribution(self.workload.distribution),
            num_requests=self.workload.num_requests,
            seed=self.seed,
        )

    @property
    def partition(self) -> PartitionMode:
        return PartitionMode(self.partition_mode)

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        def unpack(obj):
            if dataclasses.is_dataclass(obj):
                return {f.name: unpack(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
            if isinstance(obj, tuple):
                return [unpack(v) for v in obj]
            return obj

        return unpack(self)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        nested = {
            "dataset": DatasetConfig,
            "workload": WorkloadConfig,
            "codec": CodecConfig,
            "network": NetworkConfig,
        }
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict = {}
        for key, value in raw.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration field")
            if key in nested:
                sub_cls = nested[key]
                if not isinstance(value, dict):
                    raise ConfigError(key, "must be a JSON object")
                sub_known = {f.name for f in dataclasses.fields(sub_cls)}
                for sub_key in value:
                    if sub_key not in sub_known:
                        raise ConfigError(f"{key}.{sub_key}", "unknown configuration field")
                kwargs[key] = sub_cls(**value)
            elif key == "hidden_layers":
                if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
                    raise ConfigError(key, "must be a list of integers")
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        try:
            config = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError("<root>", str(exc)) from None
        return config.validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(raw)


# ---------------------------------------------------------------------------
# Run manifests.


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class ManifestError(RuntimeError):
    """A stored run manifest or one of its artifacts fails verification."""


@dataclass
class RunManifest:
    config_hash: str
    command: str
    artifacts: dict[str, dict] = field(default_factory=dict)
    created: float = field(default_factory=time.time)
    code_version: str = ""
    # Measured run duration; lives here (not in artifacts) because wall time,
    # like `created`, is the one thing a deterministic rerun may not repeat.
    wall_seconds: float = 0.0

    def add_artifact(self, name: str, path, base_dir) -> None:
        path = Path(path)
        self.artifacts[name] = {
            "path": str(path.relative_to(base_dir)),
            "sha256": file_sha256(path),
        }

    def artifact_path(self, name: str, base_dir) -> Path:
        if name not in self.artifacts:
            raise KeyError(f"manifest has no artifact {name!r}")
        return Path(base_dir) / self.artifacts[name]["path"]

    def verify(self, base_dir) -> None:
        """Raise if any listed artifact is missing or has drifted."""
        for name, entry in self.artifacts.items():
            path = Path(base_dir) / entry["path"]
            if not path.exists():
                raise FileNotFoundError(f"artifact {name!r} missing: {path}")
            actual = file_sha256(path)
            if actual != entry["sha256"]:
                raise ValueError(
                    f"artifact {name!r} hash mismatch: expected {entry['sha256'][:12]}..., "
                    f"found {actual[:12]}..."
                )

    def save(self, path) -> None:
        payload = {
            "config_hash": self.config_hash,
            "command": self.command,
            "artifacts": self.artifacts,
            "created": self.created,
            "code_version": self.code_version,
            "wall_seconds": self.wall_seconds,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        raw = json.loads(Path(path).read_text())
        return cls(
            config_hash=raw["config_hash"],
            command=raw["command"],
            artifacts=raw["artifacts"],
            created=raw["created"],
            code_version=raw.get("code_version", ""),
            wall_seconds=raw.get("wall_seconds", 0.0),
        )
