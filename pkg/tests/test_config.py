"""Experiment configuration parsing/validation and run manifests."""

import dataclasses
import json

import pytest

from fusim.analytics import Arrival, Distribution
from fusim.config import (
    ConfigError,
    DatasetConfig,
    ExperimentConfig,
    RunManifest,
    WorkloadConfig,
    file_sha256,
)
from fusim.data import PartitionMode


class TestDefaults:
    def test_defaults_validate(self):
        config = ExperimentConfig()
        assert config.validate() is config

    def test_default_shape(self):
        config = ExperimentConfig()
        assert config.clients_selected == 20
        assert config.shards == 4
        assert config.storage_mode == "uncoded"


FIELD_CASES = [
    ({"clients_total": 0}, "clients_total"),
    ({"clients_selected": 0}, "clients_selected"),
    ({"clients_selected": 101}, "clients_selected"),
    ({"shards": 0}, "shards"),
    ({"shards": 21}, "shards"),
    ({"shards": 3}, "shards"),  # does not divide 20
    ({"rounds": -1}, "rounds"),
    ({"local_epochs": 0}, "local_epochs"),
    ({"epoch_ratio": 0.5}, "epoch_ratio"),
    ({"learning_rate": 0.0}, "learning_rate"),
    ({"batch_size": 0}, "batch_size"),
    ({"hidden_layers": ()}, "hidden_layers"),
    ({"hidden_layers": (0,)}, "hidden_layers"),
    ({"dataset": DatasetConfig(kind="idx")}, "dataset.kind"),
    ({"dataset": DatasetConfig(num_classes=1)}, "dataset.num_classes"),
    ({"dataset": DatasetConfig(samples_per_class=0)}, "dataset.samples_per_class"),
    ({"dataset": DatasetConfig(feature_dim=0)}, "dataset.feature_dim"),
    ({"dataset": DatasetConfig(cluster_spread=-1.0)}, "dataset.cluster_spread"),
    ({"partition_mode": "dirichlet"}, "partition_mode"),
    ({"primary_fraction": 0.0}, "primary_fraction"),
    ({"primary_fraction": 1.5}, "primary_fraction"),
    ({"workload": WorkloadConfig(arrival="poisson")}, "workload.arrival"),
    ({"workload": WorkloadConfig(distribution="zipf")}, "workload.distribution"),
    ({"workload": WorkloadConfig(num_requests=0)}, "workload.num_requests"),
    ({"storage_mode": "parity"}, "storage_mode"),
    ({"error_fraction": 0.5}, "error_fraction"),
    ({"error_fraction": -0.1}, "error_fraction"),
    ({"network": None}, "network.data_rate_bps"),
]


class TestValidation:
    @pytest.mark.parametrize("overrides,field_name", FIELD_CASES[:-1])
    def test_each_field_named_in_error(self, overrides, field_name):
        config = dataclasses.replace(ExperimentConfig(), **overrides)
        with pytest.raises(ConfigError) as err:
            config.validate()
        assert str(err.value).startswith(f"{field_name}: ")
        assert err.value.field_name == field_name

    def test_infeasible_error_fraction(self):
        # 2 * 0.45 * 20 = 18 > 20 - 4 = 16.
        config = dataclasses.replace(ExperimentConfig(), error_fraction=0.45)
        with pytest.raises(ConfigError, match="error_fraction"):
            config.validate()

    def test_feasibility_tolerates_float_fuzz(self):
        config = dataclasses.replace(
            ExperimentConfig(), clients_total=30, clients_selected=30, shards=3,
            error_fraction=0.45,
        )
        config.validate()  # 2*0.45*30 = 27.000000000000004 vs C-S = 27

    def test_codec_checked_against_shape(self):
        from fusim.config import CodecConfig

        config = dataclasses.replace(ExperimentConfig(), codec=CodecConfig(prime=13, scale=2, clamp_range=1.0))
        with pytest.raises(ConfigError, match="codec"):
            config.validate()


class TestFromDict:
    def test_round_trip(self):
        config = ExperimentConfig()
        assert ExperimentConfig.from_dict(config.to_dict()) == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="momentum"):
            ExperimentConfig.from_dict({"momentum": 0.9})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="dataset.noise"):
            ExperimentConfig.from_dict({"dataset": {"noise": 1.0}})

    def test_hidden_layers_list_to_tuple(self):
        config = ExperimentConfig.from_dict({"hidden_layers": [64, 32]})
        assert config.hidden_layers == (64, 32)

    def test_hidden_layers_type_checked(self):
        with pytest.raises(ConfigError, match="hidden_layers"):
            ExperimentConfig.from_dict({"hidden_layers": "32"})
        with pytest.raises(ConfigError, match="hidden_layers"):
            ExperimentConfig.from_dict({"hidden_layers": [32.5]})

    def test_non_object_rejected(self):
        with pytest.raises(ConfigError, match="<root>"):
            ExperimentConfig.from_dict([1, 2, 3])

    def test_non_object_nested_rejected(self):
        with pytest.raises(ConfigError, match="workload"):
            ExperimentConfig.from_dict({"workload": "sequential"})

    def test_from_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"shards": 5, "clients_selected": 20}))
        config = ExperimentConfig.from_file(path)
        assert config.shards == 5

    def test_from_file_bad_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            ExperimentConfig.from_file(path)

    def test_from_file_invalid_value(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"shards": 0}))
        with pytest.raises(ConfigError, match="shards"):
            ExperimentConfig.from_file(path)


class TestConfigHash:
    def test_stable(self):
        assert ExperimentConfig().config_hash() == ExperimentConfig().config_hash()

    def test_sensitive_to_any_field(self):
        base = ExperimentConfig().config_hash()
        assert dataclasses.replace(ExperimentConfig(), seed=1).config_hash() != base
        assert (
            dataclasses.replace(ExperimentConfig(), learning_rate=0.051).config_hash() != base
        )

    def test_nested_change_detected(self):
        base = ExperimentConfig().config_hash()
        changed = dataclasses.replace(
            ExperimentConfig(), dataset=DatasetConfig(cluster_spread=2.0)
        )
        assert changed.config_hash() != base


class TestAdapters:
    def test_make_codec(self):
        codec = ExperimentConfig().make_codec()
        assert codec.prime == 2_147_483_647
        assert codec.scale == 65_536

    def test_make_network(self):
        network = ExperimentConfig().make_network()
        assert network.data_rate_bps == 1_000_000.0

    def test_make_workload_carries_seed(self):
        config = dataclasses.replace(ExperimentConfig(), seed=7)
        spec = config.make_workload()
        assert spec.seed == 7
        assert spec.arrival is Arrival.SEQUENTIAL
        assert spec.distribution is Distribution.ADAPTIVE

    def test_partition_mode(self):
        assert ExperimentConfig().partition is PartitionMode.IID
        non_iid = dataclasses.replace(ExperimentConfig(), partition_mode="non_iid")
        assert non_iid.partition is PartitionMode.NON_IID


class TestRunManifest:
    def test_add_and_resolve_artifact(self, tmp_path):
        out = tmp_path / "out.csv"
        out.write_text("a,b\n1,2\n")
        manifest = RunManifest(config_hash="deadbeef", command="train")
        manifest.add_artifact("ledger", out, tmp_path)
        assert manifest.artifacts["ledger"]["path"] == "out.csv"
        assert manifest.artifact_path("ledger", tmp_path) == out
        with pytest.raises(KeyError, match="no artifact"):
            manifest.artifact_path("missing", tmp_path)

    def test_verify_detects_tampering(self, tmp_path):
        out = tmp_path / "out.csv"
        out.write_text("a,b\n1,2\n")
        manifest = RunManifest(config_hash="deadbeef", command="train")
        manifest.add_artifact("ledger", out, tmp_path)
        manifest.verify(tmp_path)
        out.write_text("a,b\n1,3\n")
        with pytest.raises(ValueError, match="hash mismatch"):
            manifest.verify(tmp_path)
        out.unlink()
        with pytest.raises(FileNotFoundError, match="missing"):
            manifest.verify(tmp_path)

    def test_save_load_round_trip(self, tmp_path):
        out = tmp_path / "out.csv"
        out.write_text("x\n")
        manifest = RunManifest(config_hash="deadbeef", command="simulate")
        manifest.add_artifact("ledger", out, tmp_path)
        manifest.wall_seconds = 1.5
        path = tmp_path / "manifest.json"
        manifest.save(path)
        loaded = RunManifest.load(path)
        assert loaded.config_hash == "deadbeef"
        assert loaded.command == "simulate"
        assert loaded.artifacts == manifest.artifacts
        assert loaded.wall_seconds == 1.5

    def test_file_sha256_matches_hashlib(self, tmp_path):
        import hashlib

        blob = b"x" * 3000
        path = tmp_path / "blob.bin"
        path.write_bytes(blob)
        assert file_sha256(path) == hashlib.sha256(blob).hexdigest()
