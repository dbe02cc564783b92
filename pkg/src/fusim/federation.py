"""Per-shard FedAvg training with a round-by-round parameter history.

The history store is the contract between training and unlearning: in
uncoded mode the shard server keeps every client's parameters for every
round; in coded mode the server keeps only retrieval keys and point
metadata while the parameter payload lives on clients as Lagrange-coded
slices.  Every logical access is recorded so tests can assert shard
isolation.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .codec import FixedPointCodec, dequantize, quantize
from .coding import (
    ClientSliceStore,
    CodedSlice,
    DecodeFailure,
    EvalPoints,
    KeyRegistry,
    ShardBlock,
    encode_slices,
    reconstruct_fast,
    reconstruct_robust,
)
from .data import Dataset
from .models import MLPSpec, init_params, train_local
from .params import Layout, ParamVector

HISTORY_MAGIC = b"FUSH"
HISTORY_VERSION = 1
_AGGREGATE_ID = 0xFFFFFFFF


class StorageMode(enum.Enum):
    UNCODED = "uncoded"
    CODED = "coded"


class HistoryNotFound(KeyError):
    pass


@dataclass(frozen=True)
class ShardConfig:
    shard_id: int
    client_ids: tuple[int, ...]
    rounds: int  # G
    local_epochs: int  # L
    server_id: int = -1

    def __post_init__(self) -> None:
        if len(set(self.client_ids)) != len(self.client_ids):
            raise ValueError("shard client ids must be distinct")
        if self.rounds < 0 or self.local_epochs < 0:
            raise ValueError("rounds and local_epochs must be >= 0")


@dataclass
class RoundRecord:
    round: int
    client_params: dict[int, ParamVector]
    aggregate: ParamVector


@dataclass(frozen=True)
class Stage:
    """Fixed shard membership and data assignment for one learning epoch."""

    stage_id: int
    shards: tuple[ShardConfig, ...]
    datasets: Mapping[int, Dataset]
    seed: int
    model_spec: MLPSpec
    learning_rate: float = 0.05
    batch_size: int = 32
    data_access_log: list[tuple[str, int]] = field(default_factory=list, compare=False)

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for shard in self.shards:
            overlap = seen.intersection(shard.client_ids)
            if overlap:
                raise ValueError(f"clients {sorted(overlap)} appear in more than one shard")
            seen.update(shard.client_ids)
        missing = seen - set(self.datasets)
        if missing:
            raise ValueError(f"clients {sorted(missing)} have no dataset assigned")

    def shard_of(self, client_id: int) -> ShardConfig:
        for shard in self.shards:
            if client_id in shard.client_ids:
                return shard
        raise KeyError(f"client {client_id} is not in any shard")

    def dataset_for(self, client_id: int, actor: str) -> Dataset:
        self.data_access_log.append((actor, client_id))
        return self.datasets[client_id]

    @property
    def num_clients(self) -> int:
        return sum(len(s.client_ids) for s in self.shards)


def fedavg_aggregate(client_params: Iterable[ParamVector]) -> ParamVector:
    """Elementwise unweighted mean; float64 accumulation, float32 result."""
    vecs = list(client_params)
    if not vecs:
        raise ValueError("cannot aggregate zero parameter vectors")
    first = vecs[0]
    for v in vecs[1:]:
        if v.dim != first.dim or v.layout != first.layout:
            raise ValueError("parameter vectors disagree in dimension or layout")
    stacked = np.stack([v.values.astype(np.float64) for v in vecs])
    return first.with_values(stacked.mean(axis=0))


class HistoryStore:
    """Per-(shard, round) parameter records, uncoded or coded.

    Coded commits are staged until every shard of the round has reported,
    then encoded into per-client slices and dropped from the staging area;
    the server side retains zero parameter bytes.
    """

    def __init__(
        self,
        mode: StorageMode,
        shard_clients: Mapping[int, tuple[int, ...]],
        layout: Layout,
        codec: FixedPointCodec | None = None,
        points: EvalPoints | None = None,
        key_seed: int = 0,
    ) -> None:
        self.mode = mode
        self.shard_clients = {int(s): tuple(c) for s, c in sorted(shard_clients.items())}
        self.layout = layout
        self.dim = sum(int(np.prod(shape)) for _, shape in layout)
        self.access_log: list[tuple[str, str, int, int]] = []
        self._records: dict[tuple[int, int], RoundRecord] = {}
        self.server_param_bytes = 0
        self.codec = codec
        self.key_seed = key_seed
        if mode is StorageMode.CODED:
            if codec is None:
                raise ValueError("coded mode requires a codec")
            n_clients = sum(len(c) for c in self.shard_clients.values())
            self.points = points or EvalPoints.default(len(self.shard_clients), n_clients)
            codec.check_points(n_clients, len(self.shard_clients))
            self.block_len = max(len(c) for c in self.shard_clients.values()) * self.dim
            self.clients = ClientSliceStore()
            self.keys = KeyRegistry(key_seed)
            self._staged: dict[int, dict[int, RoundRecord]] = {}
            # Client ids are mapped to alpha indices in sorted id order.
            self._alpha_index = {
                cid: i
                for i, cid in enumerate(
                    sorted(c for ids in self.shard_clients.values() for c in ids)
                )
            }
        else:
            self.points = None
            self.block_len = 0

    # -- commits ----------------------------------------------------------

    def commit_round(
        self, shard_id: int, round_: int, client_params: dict[int, ParamVector], aggregate: ParamVector
    ) -> None:
        if shard_id not in self.shard_clients:
            raise KeyError(f"unknown shard {shard_id}")
        if set(client_params) != set(self.shard_clients[shard_id]):
            raise ValueError("round record must cover exactly the shard's clients")
        record = RoundRecord(round_, dict(client_params), aggregate)
        self.access_log.append((f"train:{shard_id}", "commit", shard_id, round_))
        if self.mode is StorageMode.UNCODED:
            if (shard_id, round_) in self._records:
                raise ValueError(f"round {round_} already committed for shard {shard_id}")
            self._records[(shard_id, round_)] = record
            self.server_param_bytes += len(client_params) * self.dim * 4
        else:
            staged = self._staged.setdefault(round_, {})
            if shard_id in staged:
                raise ValueError(f"round {round_} already staged for shard {shard_id}")
            staged[shard_id] = record
            if len(staged) == len(self.shard_clients):
                self._encode_round(round_)

    def _encode_round(self, round_: int) -> None:
        staged = self._staged.pop(round_)
        blocks = []
        for shard_id, clients in self.shard_clients.items():
            record = staged[shard_id]
            parts = [quantize(record.client_params[c].values, self.codec) for c in clients]
            flat = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
            padded = np.zeros(self.block_len, dtype=np.int64)
            padded[: flat.shape[0]] = flat
            blocks.append(ShardBlock(shard_id=shard_id, round=round_, values=padded))
        slices = encode_slices(blocks, self.points, self.codec)
        for sl in slices:
            self.clients.put(sl)
        for shard_id in self.shard_clients:
            self.keys.issue_key(shard_id, round_)
        self.access_log.append(("store:encode", "encode", -1, round_))

    # -- retrieval --------------------------------------------------------

    def fetch_round(
        self, shard_id: int, round_: int, actor: str = "server", robust: bool = False
    ) -> dict[int, ParamVector]:
        self.access_log.append((actor, "fetch", shard_id, round_))
        if self.mode is StorageMode.UNCODED:
            record = self._records.get((shard_id, round_))
            if record is None:
                raise HistoryNotFound(f"no record for shard {shard_id} round {round_}")
            return dict(record.client_params)
        return self._fetch_coded(shard_id, round_, robust)

    def _fetch_coded(self, shard_id: int, round_: int, robust: bool) -> dict[int, ParamVector]:
        key = self.keys.issue_key(shard_id, round_)
        try:
            slices = self.keys.retrieve_slices(key, self.clients)
        except KeyError as exc:
            raise HistoryNotFound(f"no slices for shard {shard_id} round {round_}") from exc
        if robust:
            blocks, _ = reconstruct_robust(slices, self.points, self.codec)
        else:
            verified = [sl for sl in slices if sl.verify_tag(self.codec)]
            S = len(self.points.omegas)
            if len(verified) < S:
                raise DecodeFailure(
                    f"only {len(verified)} of {len(slices)} slices pass integrity checks; need {S}"
                )
            chosen = verified[:S]
            alphas = tuple(self.points.alphas[sl.client_id] for sl in chosen)
            blocks = reconstruct_fast(chosen, alphas, self.points, self.codec)
        block = next(b for b in blocks if b.shard_id == shard_id)
        out: dict[int, ParamVector] = {}
        for i, cid in enumerate(self.shard_clients[shard_id]):
            seg = block.values[i * self.dim : (i + 1) * self.dim]
            out[cid] = ParamVector(dequantize(seg, self.codec), self.layout)
        return out

    # -- bookkeeping ------------------------------------------------------

    def rounds_for(self, shard_id: int) -> list[int]:
        if self.mode is StorageMode.UNCODED:
            return sorted(g for (s, g) in self._records if s == shard_id)
        return self.clients.rounds()

    def aggregate_for(self, shard_id: int, round_: int) -> ParamVector:
        if self.mode is not StorageMode.UNCODED:
            raise ValueError("aggregates are only stored server-side in uncoded mode")
        record = self._records.get((shard_id, round_))
        if record is None:
            raise HistoryNotFound(f"no record for shard {shard_id} round {round_}")
        return record.aggregate

    def replace_client_vectors(self, client_id: int, maker) -> None:
        """Overwrite one client's stored vectors (test hook for removal proofs)."""
        if self.mode is not StorageMode.UNCODED:
            raise ValueError("only uncoded records can be rewritten in place")
        for (shard_id, round_), record in self._records.items():
            if client_id in record.client_params:
                record.client_params[client_id] = maker(record.client_params[client_id])

    @property
    def server_metadata_bytes(self) -> int:
        if self.mode is StorageMode.UNCODED:
            return 0
        # Eval points plus issued keys; matches the coded checkpoint payload.
        n_points = len(self.points.omegas) + len(self.points.alphas)
        return n_points * 8 + self.keys.metadata_bytes

    @property
    def server_total_bytes(self) -> int:
        return self.server_param_bytes + self.server_metadata_bytes


def train_shard(
    stage: Stage, shard: ShardConfig, history: HistoryStore, seed: int | None = None
) -> tuple[ParamVector, HistoryStore]:
    """Run G FedAvg rounds for one shard, committing every round to history.

    Each client-round RNG stream is derived from
    (seed, stage_id, shard_id, client_id, round), so results do not depend
    on scheduling order across shards.
    """
    base_seed = stage.seed if seed is None else seed
    rng = np.random.default_rng(
        np.random.SeedSequence([base_seed, stage.stage_id, shard.shard_id, 0x1417])
    )
    current = init_params(stage.model_spec, rng)
    actor = f"train:{shard.shard_id}"
    for g in range(1, shard.rounds + 1):
        client_params: dict[int, ParamVector] = {}
        for cid in shard.client_ids:
            data = stage.dataset_for(cid, actor)
            stream = np.random.SeedSequence([base_seed, stage.stage_id, shard.shard_id, cid, g])
            client_params[cid] = train_local(
                current,
                data,
                epochs=shard.local_epochs,
                learning_rate=stage.learning_rate,
                batch_size=stage.batch_size,
                seed=stream,
            )
        aggregate = fedavg_aggregate(client_params.values())
        history.commit_round(shard.shard_id, g, client_params, aggregate)
        current = aggregate
    return current, history


# ---------------------------------------------------------------------------
# Checkpoint file format (FUSH).


def save_history(path, history: HistoryStore) -> None:
    """Write the history checkpoint; coded mode persists keys/points only."""
    S = len(history.shard_clients)
    C = sum(len(c) for c in history.shard_clients.values())
    if history.mode is StorageMode.UNCODED:
        G = max((g for (_, g) in history._records), default=0)
    else:
        G = max((g for (_, g) in history.keys.issued()), default=0)
    mode_byte = 0 if history.mode is StorageMode.UNCODED else 1
    with open(path, "wb") as fh:
        fh.write(HISTORY_MAGIC)
        fh.write(struct.pack("<HBIIII", HISTORY_VERSION, mode_byte, S, C, G, history.dim))
        if history.mode is StorageMode.UNCODED:
            for (shard_id, round_) in sorted(history._records):
                record = history._records[(shard_id, round_)]
                for cid, params in record.client_params.items():
                    fh.write(struct.pack("<III", shard_id, round_, cid))
                    fh.write(params.values.astype("<f4").tobytes())
                fh.write(struct.pack("<III", shard_id, round_, _AGGREGATE_ID))
                fh.write(record.aggregate.values.astype("<f4").tobytes())
        else:
            codec = history.codec
            fh.write(struct.pack("<QQd", codec.prime, codec.scale, codec.clamp_range))
            fh.write(struct.pack("<IQ", history.block_len, history.key_seed))
            for w in history.points.omegas:
                fh.write(struct.pack("<Q", w))
            for a in history.points.alphas:
                fh.write(struct.pack("<Q", a))
            for shard_id, round_ in history.keys.issued():
                key = history.keys.issue_key(shard_id, round_)
                fh.write(struct.pack("<II", shard_id, round_))
                fh.write(bytes.fromhex(key))


def load_history(path, shard_clients: Mapping[int, tuple[int, ...]], layout: Layout) -> HistoryStore:
    """Rebuild a HistoryStore from a checkpoint.

    Coded histories come back without client slices; attach them from the
    slice files via ``load_client_slices``.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != HISTORY_MAGIC:
            raise ValueError(f"not a history checkpoint (magic {magic!r})")
        version, mode_byte, S, C, G, dim = struct.unpack("<HBIIII", fh.read(19))
        if version != HISTORY_VERSION:
            raise ValueError(f"unsupported history version {version}")
        mode = StorageMode.UNCODED if mode_byte == 0 else StorageMode.CODED
        if len(shard_clients) != S or sum(len(c) for c in shard_clients.values()) != C:
            raise ValueError("shard table does not match checkpoint header")
        if mode is StorageMode.UNCODED:
            store = HistoryStore(mode, shard_clients, layout)
            if store.dim != dim:
                raise ValueError(f"layout dim {store.dim} != checkpoint dim {dim}")
            rec_header = struct.Struct("<III")
            staged: dict[tuple[int, int], RoundRecord] = {}
            while True:
                raw = fh.read(rec_header.size)
                if not raw:
                    break
                shard_id, round_, cid = rec_header.unpack(raw)
                values = np.frombuffer(fh.read(dim * 4), dtype="<f4").astype(np.float32)
                params = ParamVector(values, layout)
                key = (shard_id, round_)
                if cid == _AGGREGATE_ID:
                    staged[key].aggregate = params
                else:
                    if key not in staged:
                        staged[key] = RoundRecord(round_, {}, params)
                    staged[key].client_params[cid] = params
            for (shard_id, round_), record in sorted(staged.items()):
                store.commit_round(shard_id, round_, record.client_params, record.aggregate)
            # Rebuild the byte counter; loading re-commits, so reset the log.
            store.access_log.clear()
            return store
        prime, scale, clamp_range = struct.unpack("<QQd", fh.read(24))
        block_len, key_seed = struct.unpack("<IQ", fh.read(12))
        omegas = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(S))
        alphas = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(C))
        codec = FixedPointCodec(prime=prime, scale=scale, clamp_range=clamp_range)
        points = EvalPoints(omegas=omegas, alphas=alphas)
        store = HistoryStore(mode, shard_clients, layout, codec=codec, points=points, key_seed=key_seed)
        if store.block_len != block_len:
            raise ValueError("shard table does not match checkpoint block length")
        key_header = struct.Struct("<II")
        while True:
            raw = fh.read(key_header.size)
            if not raw:
                break
            shard_id, round_ = key_header.unpack(raw)
            issued = store.keys.issue_key(shard_id, round_)
            if bytes.fromhex(issued) != fh.read(16):
                raise ValueError("checkpoint key does not match key seed derivation")
        return store


def save_client_slices(directory, history: HistoryStore) -> list:
    """One file per client holding its slices for every round."""
    from pathlib import Path

    from .coding import write_slice_record

    if history.mode is not StorageMode.CODED:
        raise ValueError("client slices only exist in coded mode")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    by_client: dict[int, list[CodedSlice]] = {}
    for g in history.clients.rounds():
        for sl in history.clients.round_slices(g):
            by_client.setdefault(sl.client_id, []).append(sl)
    for cid in sorted(by_client):
        path = directory / f"client_{cid:04d}.fucs"
        with open(path, "wb") as fh:
            for sl in sorted(by_client[cid], key=lambda s: s.round):
                write_slice_record(fh, sl, history.codec)
        paths.append(path)
    return paths


def load_client_slices(directory, history: HistoryStore) -> None:
    from pathlib import Path

    from .coding import read_slice_record

    for path in sorted(Path(directory).glob("client_*.fucs")):
        with open(path, "rb") as fh:
            while True:
                rec = read_slice_record(fh)
                if rec is None:
                    break
                sl, prime, scale = rec
                if prime != history.codec.prime or scale != history.codec.scale:
                    raise ValueError(f"{path}: slice codec does not match history codec")
                history.clients.put(sl)
