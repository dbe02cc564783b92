"""Workload simulation and the closed-form time/storage/throughput models.

Time is counted in client-epoch units (one client training one local epoch),
which makes the sequential and concurrent expectations exactly checkable by
Monte Carlo without wall-clock noise.  Communication is charged per transfer
as base_delay + bits/rate.  Storage is the server's peak persistent payload.
"""

from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class Arrival(enum.Enum):
    SEQUENTIAL = "sequential"
    CONCURRENT = "concurrent"


class Distribution(enum.Enum):
    EVEN = "even"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class WorkloadSpec:
    arrival: Arrival
    distribution: Distribution
    num_requests: int  # K
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_requests < 1:
            raise ValueError("num_requests must be >= 1")


@dataclass(frozen=True)
class UnlearnRequest:
    request_id: int
    client_id: int
    shard_id: int
    arrival_index: int  # 1..K sequential, 0 for one concurrent batch


@dataclass(frozen=True)
class NetworkModel:
    base_delay_seconds: float = 0.1
    data_rate_bps: float = 1_000_000.0

    def __post_init__(self) -> None:
        if self.data_rate_bps <= 0:
            raise ValueError("data_rate_bps must be > 0")
        if self.base_delay_seconds < 0:
            raise ValueError("base_delay_seconds must be >= 0")

    def transfer_seconds(self, bits: float) -> float:
        return self.base_delay_seconds + bits / self.data_rate_bps


@dataclass(frozen=True)
class StageProfile:
    """The cost-relevant shape of a trained stage; no model state."""

    shard_clients: Mapping[int, tuple[int, ...]]
    param_dim: int  # d
    rounds: int  # G
    local_epochs: int  # L
    epoch_ratio: float = 1.0  # r

    @classmethod
    def from_stage(cls, stage, epoch_ratio: float = 1.0) -> "StageProfile":
        return cls(
            shard_clients={s.shard_id: s.client_ids for s in stage.shards},
            param_dim=stage.model_spec.dim,
            rounds=stage.shards[0].rounds,
            local_epochs=stage.shards[0].local_epochs,
            epoch_ratio=epoch_ratio,
        )

    @property
    def num_shards(self) -> int:
        return len(self.shard_clients)

    @property
    def num_clients(self) -> int:
        return sum(len(c) for c in self.shard_clients.values())

    @property
    def retrain_epochs(self) -> int:
        return math.ceil(self.local_epochs / self.epoch_ratio)

    @property
    def block_len(self) -> int:
        return max(len(c) for c in self.shard_clients.values()) * self.param_dim


@dataclass(frozen=True)
class PassRecord:
    shard_id: int
    retained_clients: int
    client_epochs: int
    comm_seconds: float


@dataclass
class CostLedger:
    mode: str
    records: list[PassRecord] = field(default_factory=list)
    storage_bytes: int = 0
    wall_seconds: float = 0.0
    failed_requests: list[tuple[int, str]] = field(default_factory=list)

    @property
    def client_epochs(self) -> int:
        return sum(r.client_epochs for r in self.records)

    @property
    def comm_seconds(self) -> float:
        return sum(r.comm_seconds for r in self.records)

    def epochs_by_shard(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for r in self.records:
            out[r.shard_id] = out.get(r.shard_id, 0) + r.client_epochs
        return out

    def passes_by_shard(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for r in self.records:
            out[r.shard_id] = out.get(r.shard_id, 0) + 1
        return out


# ---------------------------------------------------------------------------
# Workload generation.


def generate_workload(spec: WorkloadSpec, profile: StageProfile) -> list[UnlearnRequest]:
    """Draw K removal targets; Even spreads over shards, Adaptive hits one."""
    K = spec.num_requests
    if K > profile.num_clients:
        raise ValueError(f"K={K} exceeds the {profile.num_clients} stage clients")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x77C]))
    shard_ids = sorted(profile.shard_clients)
    picks: list[tuple[int, int]] = []  # (shard_id, client_id)
    if spec.distribution is Distribution.EVEN:
        pools = {s: list(profile.shard_clients[s]) for s in shard_ids}
        for i in range(K):
            sid = shard_ids[i % len(shard_ids)]
            pool = pools[sid]
            if not pool:
                raise ValueError(f"shard {sid} has no clients left for request {i}")
            cid = pool.pop(int(rng.integers(len(pool))))
            picks.append((sid, cid))
    else:
        sid = shard_ids[int(rng.integers(len(shard_ids)))]
        pool = list(profile.shard_clients[sid])
        if K > len(pool):
            raise ValueError(f"adaptive workload K={K} exceeds shard {sid} size {len(pool)}")
        chosen = rng.choice(len(pool), size=K, replace=False)
        picks.extend((sid, pool[int(j)]) for j in chosen)
    sequential = spec.arrival is Arrival.SEQUENTIAL
    return [
        UnlearnRequest(
            request_id=i,
            client_id=cid,
            shard_id=sid,
            arrival_index=i + 1 if sequential else 0,
        )
        for i, (sid, cid) in enumerate(picks)
    ]


# ---------------------------------------------------------------------------
# Closed-form models.


def shard_hit_probability(i: int, j: int, S: int) -> float:
    """P(a given shard is hit j times by the first i-1 of i uniform requests)."""
    if S < 1:
        raise ValueError("S must be >= 1")
    if not 0 <= j <= i - 1:
        raise ValueError(f"need 0 <= j <= i-1, got i={i}, j={j}")
    return math.comb(i - 1, j) * (1 / S) ** j * (1 - 1 / S) ** (i - 1 - j)


def expected_time_sequential(K: int, Ct: float) -> float:
    """Each of K one-by-one requests costs one shard retraining pass."""
    if K < 0 or Ct < 0:
        raise ValueError("K and Ct must be >= 0")
    return K * Ct


def expected_time_concurrent(S: int, K: int, Ct: float) -> float:
    """One batched pass per distinct impacted shard; expectation over hits."""
    if S < 1:
        raise ValueError("S must be >= 1")
    if K < 0 or Ct < 0:
        raise ValueError("K and Ct must be >= 0")
    return S * Ct * (1.0 - (1.0 - 1.0 / S) ** K)


def storage_efficiency_bounds(C: int, S: int, mu: float) -> tuple[float, float, float]:
    """(gamma_s, gamma_c lower, gamma_c upper) for an error fraction mu."""
    if not 0 <= mu < 0.5:
        raise ValueError("mu must lie in [0, 0.5)")
    if not 1 <= S <= C:
        raise ValueError("need 1 <= S <= C")
    # Tolerate float fuzz in 2*mu*C (e.g. mu=0.05, C=30 -> 3.0000000000000004).
    if 2 * mu * C > C - S + 1e-9:
        raise ValueError(
            f"error tolerance infeasible: 2*mu*C = {2 * mu * C:.6g} exceeds C - S = {C - S}"
        )
    return float(S), float(S), (1.0 - 2.0 * mu) * C


def coded_throughput(C: int, S: int, kappa: float = 1.0) -> float:
    """Requests per unit time: S over the per-request decode work."""
    if not 1 <= S <= C:
        raise ValueError("need 1 <= S <= C")
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    if C == 1:
        return math.inf  # log(1) = 0: degenerate single-client decode is free
    loglog = max(math.log(math.log(C)), 1.0)  # clamp below e^e
    return S / (kappa * C**2 * math.log(C) ** 2 * loglog)


# ---------------------------------------------------------------------------
# Monte Carlo checks for the two time models.


def mc_time_sequential(S: int, K: int, Ct: float, trials: int, seed: int = 0) -> float:
    """Mean simulated total time of K one-by-one requests (trials runs)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, S, K, 0x5EC]))
    rng.integers(0, S, size=(trials, K))  # shard draws; cost is per request
    totals = np.full(trials, K * Ct, dtype=np.float64)
    return float(totals.mean())


def mc_time_concurrent(S: int, K: int, Ct: float, trials: int, seed: int = 0) -> float:
    """Mean of (distinct shards hit) * Ct over uniform assignments."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, S, K, 0xC0C]))
    draws = rng.integers(0, S, size=(trials, K))
    draws.sort(axis=1)
    distinct = (np.diff(draws, axis=1) != 0).sum(axis=1) + 1
    return float(distinct.mean() * Ct)


def time_model_report(
    S_values: Sequence[int],
    K_values: Sequence[int],
    Ct: float = 1.0,
    trials: int = 100_000,
    seed: int = 0,
) -> list[dict]:
    """Theory-vs-measured rows for both arrival models on an (S, K) grid."""
    rows: list[dict] = []
    for S in S_values:
        for K in K_values:
            seq_theory = expected_time_sequential(K, Ct)
            seq_mc = mc_time_sequential(S, K, Ct, trials, seed)
            con_theory = expected_time_concurrent(S, K, Ct)
            con_mc = mc_time_concurrent(S, K, Ct, trials, seed)
            for arrival, theory, measured in (
                ("sequential", seq_theory, seq_mc),
                ("concurrent", con_theory, con_mc),
            ):
                rel = abs(measured - theory) / theory if theory else 0.0
                rows.append(
                    {
                        "arrival": arrival,
                        "S": S,
                        "K": K,
                        "Ct": Ct,
                        "theory": theory,
                        "measured": measured,
                        "rel_error": rel,
                    }
                )
    return rows


# ---------------------------------------------------------------------------
# Storage accounting.


def uncoded_server_bytes(profile: StageProfile) -> int:
    """G * |C_s| * d * 4 bytes on each shard server."""
    return sum(
        profile.rounds * len(clients) * profile.param_dim * 4
        for clients in profile.shard_clients.values()
    )


def fe_full_storage_bytes(profile: StageProfile) -> int:
    """The unsharded baseline: one server stores all clients, all rounds."""
    return profile.rounds * profile.num_clients * profile.param_dim * 4


def coded_server_metadata_bytes(profile: StageProfile) -> int:
    """Evaluation points plus one 24-byte key entry per (shard, round)."""
    S, C = profile.num_shards, profile.num_clients
    return (S + C) * 8 + S * profile.rounds * 24


# ---------------------------------------------------------------------------
# Stage simulation: pure cost accounting, no model math.


def pass_comm_seconds(
    profile: StageProfile, retained: int, coded: bool, network: NetworkModel
) -> float:
    """Communication charge for one shard retraining pass.

    Per round: one global download and one update upload per retained
    client.  Coded mode adds one reconstruction per fetched round
    (preparation plus G calibrations), each pulling every client's slice.
    """
    G = profile.rounds
    model_bits = profile.param_dim * 32
    comm = G * 2 * retained * network.transfer_seconds(model_bits)
    if coded:
        slice_bits = profile.block_len * 64
        comm += (G + 1) * profile.num_clients * network.transfer_seconds(slice_bits)
    return comm


def _retrain_pass(
    profile: StageProfile, shard_id: int, removed: int, coded: bool, network: NetworkModel
) -> PassRecord:
    size = len(profile.shard_clients[shard_id])
    retained = size - removed
    if retained < 1:
        raise ValueError(f"shard {shard_id}: removing {removed} of {size} leaves no one")
    epochs = retained * profile.retrain_epochs * profile.rounds
    comm = pass_comm_seconds(profile, retained, coded, network)
    return PassRecord(shard_id, retained, epochs, comm)


def simulate_stage(
    profile: StageProfile,
    workload: WorkloadSpec,
    mode: str,
    network: NetworkModel | None = None,
) -> CostLedger:
    """Charge every request its retraining, communication, and storage cost.

    Sequential requests each trigger a full pass on their shard (no
    memoization); concurrent requests are batched into one pass per
    impacted shard.  A request that cannot be served is recorded under
    failed_requests and skipped.
    """
    if mode not in ("uncoded", "coded"):
        raise ValueError(f"unknown storage mode {mode!r}")
    network = network or NetworkModel()
    started = time.perf_counter()
    requests = generate_workload(workload, profile)
    ledger = CostLedger(mode=mode)
    coded = mode == "coded"
    if workload.arrival is Arrival.SEQUENTIAL:
        for req in requests:
            try:
                ledger.records.append(_retrain_pass(profile, req.shard_id, 1, coded, network))
            except ValueError as exc:
                ledger.failed_requests.append((req.request_id, str(exc)))
    else:
        by_shard: dict[int, list[UnlearnRequest]] = {}
        for req in requests:
            by_shard.setdefault(req.shard_id, []).append(req)
        for sid in sorted(by_shard):
            batch = by_shard[sid]
            try:
                ledger.records.append(
                    _retrain_pass(profile, sid, len(batch), coded, network)
                )
            except ValueError as exc:
                ledger.failed_requests.extend((r.request_id, str(exc)) for r in batch)
    ledger.storage_bytes = (
        coded_server_metadata_bytes(profile) if coded else uncoded_server_bytes(profile)
    )
    ledger.wall_seconds = time.perf_counter() - started
    return ledger


LEDGER_CSV_COLUMNS = (
    "run_id",
    "mode",
    "arrival",
    "distribution",
    "S",
    "C",
    "K",
    "client_epochs",
    "comm_seconds",
    "storage_bytes",
    "wall_seconds",
)


def ledger_csv_row(
    run_id: str, ledger: CostLedger, workload: WorkloadSpec, profile: StageProfile
) -> dict:
    return {
        "run_id": run_id,
        "mode": ledger.mode,
        "arrival": workload.arrival.value,
        "distribution": workload.distribution.value,
        "S": profile.num_shards,
        "C": profile.num_clients,
        "K": workload.num_requests,
        "client_epochs": ledger.client_epochs,
        "comm_seconds": f"{ledger.comm_seconds:.6f}",
        "storage_bytes": ledger.storage_bytes,
        "wall_seconds": f"{ledger.wall_seconds:.6f}",
    }


def write_ledger_csv(path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LEDGER_CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
