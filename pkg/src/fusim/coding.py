"""Coded parameter store: Lagrange slices, reconstruction, keyed retrieval.

One round's per-shard parameter blocks are treated as S values of a
degree-<S polynomial u at the shard points omega_1..omega_S.  Client i
stores the single evaluation u(alpha_i), so the C client slices form a
Reed-Solomon codeword of dimension S and length C.  Any S intact slices
reconstruct every block by interpolation; with up to floor((C-S)/2)
corrupted slices the robust path still recovers exactly and names the
offenders.
"""

from __future__ import annotations

import hashlib
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .codec import FixedPointCodec
from .fieldmath import (
    OPS,
    inv_mod,
    lagrange_interpolate,
    matmul_mod,
    poly_deg,
    poly_divmod,
    poly_eval,
    poly_from_roots,
    poly_mul,
    poly_sub,
    solve_mod,
)

SLICE_MAGIC = b"FUCS"
SLICE_VERSION = 1


class DecodeFailure(RuntimeError):
    """Reconstruction cannot produce a consistent decoding; data withheld."""


class AuthorizationError(PermissionError):
    """Slice retrieval attempted without a valid key."""


@dataclass(frozen=True)
class EvalPoints:
    """Distinct field points: one omega per shard, one alpha per client."""

    omegas: tuple[int, ...]
    alphas: tuple[int, ...]

    def __post_init__(self) -> None:
        pts = list(self.omegas) + list(self.alphas)
        if len(set(pts)) != len(pts):
            raise ValueError("evaluation points must be pairwise distinct")

    @classmethod
    def default(cls, num_shards: int, num_clients: int) -> "EvalPoints":
        return cls(
            omegas=tuple(range(1, num_shards + 1)),
            alphas=tuple(range(num_shards + 1, num_shards + num_clients + 1)),
        )

    def validate(self, codec: FixedPointCodec) -> None:
        pts = list(self.omegas) + list(self.alphas)
        if any(not 0 <= pt < codec.prime for pt in pts):
            raise ValueError("evaluation points must be reduced residues mod p")
        if len({pt % codec.prime for pt in pts}) != len(pts):
            raise ValueError("evaluation points must be distinct mod p")


@dataclass(frozen=True)
class ShardBlock:
    shard_id: int
    round: int
    values: np.ndarray  # int64 field elements, length B

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=np.int64)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


def _slice_tag(round_: int, client_id: int, values: np.ndarray, codec: FixedPointCodec) -> bytes:
    header = SLICE_MAGIC + struct.pack(
        "<HIIIQQ", SLICE_VERSION, round_, client_id, len(values), codec.prime, codec.scale
    )
    return hashlib.sha256(header + values.astype("<u8").tobytes()).digest()


@dataclass(frozen=True)
class CodedSlice:
    client_id: int
    round: int
    values: np.ndarray  # int64 field elements, length B
    tag: bytes

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=np.int64)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def verify_tag(self, codec: FixedPointCodec) -> bool:
        return self.tag == _slice_tag(self.round, self.client_id, self.values, codec)

    @property
    def nbytes(self) -> int:
        return len(self.values) * 8


def lagrange_basis_matrix(points: EvalPoints, at: tuple[int, ...], p: int) -> np.ndarray:
    """Row i, column s holds the shard-s Lagrange basis evaluated at at[i]."""
    omegas = points.omegas
    S = len(omegas)
    out = np.zeros((len(at), S), dtype=np.int64)
    for i, a in enumerate(at):
        for s in range(S):
            num, den = 1, 1
            for j in range(S):
                if j == s:
                    continue
                num = num * ((a - omegas[j]) % p) % p
                den = den * ((omegas[s] - omegas[j]) % p) % p
            out[i, s] = num * inv_mod(den, p) % p
            OPS.add(2 * S)
    return out


def encode_slices(
    blocks: list[ShardBlock], points: EvalPoints, codec: FixedPointCodec
) -> list[CodedSlice]:
    """Evaluate the block-interpolating polynomial at every client point."""
    S, C = len(points.omegas), len(points.alphas)
    if len(blocks) != S:
        raise ValueError(f"expected {S} shard blocks, got {len(blocks)}")
    if S > C:
        raise ValueError(f"undecodable configuration: {S} shards but only {C} clients")
    points.validate(codec)
    lengths = {len(b.values) for b in blocks}
    if len(lengths) != 1:
        raise ValueError(f"shard blocks must share one length, got {sorted(lengths)}")
    rounds = {b.round for b in blocks}
    if len(rounds) != 1:
        raise ValueError("shard blocks must belong to one round")
    round_ = rounds.pop()
    by_shard = sorted(blocks, key=lambda b: b.shard_id)
    mat = np.stack([b.values for b in by_shard])  # (S, B)
    if np.any(mat < 0) or np.any(mat >= codec.prime):
        raise ValueError("block values must be reduced residues mod p")
    basis = lagrange_basis_matrix(points, points.alphas, codec.prime)  # (C, S)
    coded = matmul_mod(basis, mat, codec.prime)  # (C, B)
    return [
        CodedSlice(
            client_id=i,
            round=round_,
            values=coded[i],
            tag=_slice_tag(round_, i, coded[i], codec),
        )
        for i in range(C)
    ]


def _blocks_from_coeffs(
    coeffs: np.ndarray, round_: int, points: EvalPoints, p: int
) -> list[ShardBlock]:
    S = len(points.omegas)
    vand = np.zeros((S, coeffs.shape[0]), dtype=np.int64)
    for s, w in enumerate(points.omegas):
        acc = 1
        for t in range(coeffs.shape[0]):
            vand[s, t] = acc
            acc = acc * w % p
    evals = matmul_mod(vand, coeffs, p)
    return [ShardBlock(shard_id=s, round=round_, values=evals[s]) for s in range(S)]


def reconstruct_fast(
    slices: list[CodedSlice],
    alphas: tuple[int, ...],
    points: EvalPoints,
    codec: FixedPointCodec,
) -> list[ShardBlock]:
    """Recover all S blocks from exactly S intact slices.

    Solves the S x S Vandermonde system at the slices' alphas for the
    polynomial coefficients, then evaluates at every omega.  Exact in F_p.
    """
    S = len(points.omegas)
    if len(slices) != S or len(alphas) != S:
        raise ValueError(f"fast path needs exactly {S} slices with their alphas")
    if len(set(alphas)) != S:
        raise ValueError("slice evaluation points must be distinct")
    lengths = {len(s.values) for s in slices}
    if len(lengths) != 1:
        raise ValueError("slices must share one length")
    rounds = {s.round for s in slices}
    if len(rounds) != 1:
        raise ValueError("slices must belong to one round")
    p = codec.prime
    vand = np.zeros((S, S), dtype=np.int64)
    for i, a in enumerate(alphas):
        acc = 1
        for t in range(S):
            vand[i, t] = acc
            acc = acc * a % p
    rhs = np.stack([s.values for s in slices])  # (S, B)
    coeffs = solve_mod(vand, rhs, p)  # (S, B), distinct points => never singular
    return _blocks_from_coeffs(coeffs, rounds.pop(), points, p)


def _gao_decode_column(
    ys: list[int], alphas: list[int], g0: list[int], S: int, e: int, p: int
) -> tuple[list[int], set[int]]:
    """Decode one coordinate; returns (message coefficients, error positions)."""
    C = len(ys)
    g1 = lagrange_interpolate(alphas, ys, p)
    r_prev, r_cur = list(g0), g1
    v_prev, v_cur = [], [1]
    while r_cur and 2 * poly_deg(r_cur) >= C + S:
        q, rem = poly_divmod(r_prev, r_cur, p)
        r_prev, r_cur = r_cur, rem
        v_prev, v_cur = v_cur, poly_sub(v_prev, poly_mul(q, v_cur, p), p)
    if not v_cur:
        raise DecodeFailure("error locator vanished; beyond correction capacity")
    msg, rem = poly_divmod(r_cur, v_cur, p)
    if rem or poly_deg(msg) >= S:
        raise DecodeFailure("no consistent decoding within the error bound")
    bad = {i for i, (a, y) in enumerate(zip(alphas, ys)) if poly_eval(msg, a, p) != y}
    if len(bad) > e:
        raise DecodeFailure(f"{len(bad)} slices disagree, more than the bound {e}")
    return msg, bad


def reconstruct_robust(
    slices: list[CodedSlice], points: EvalPoints, codec: FixedPointCodec
) -> tuple[list[ShardBlock], set[int]]:
    """Reed-Solomon error decoding over all C slices (Gao's algorithm).

    Tolerates up to e = floor((C - S) / 2) corrupted slices; recovers the
    blocks exactly and reports the corrupted slice indices.  Raises
    DecodeFailure instead of ever returning silently wrong data.
    """
    S, C = len(points.omegas), len(points.alphas)
    if len(slices) != C:
        raise ValueError(f"robust path needs all {C} slices, got {len(slices)}")
    lengths = {len(s.values) for s in slices}
    if len(lengths) != 1:
        raise ValueError("slices must share one length")
    rounds = {s.round for s in slices}
    if len(rounds) != 1:
        raise ValueError("slices must belong to one round")
    p = codec.prime
    e = (C - S) // 2
    by_client = sorted(slices, key=lambda s: s.client_id)
    alphas = [points.alphas[i] % p for i in range(C)]
    g0 = poly_from_roots(alphas, p)
    mat = np.stack([s.values for s in by_client])  # (C, B)
    B = mat.shape[1]
    coeffs = np.zeros((S, B), dtype=np.int64)
    corrupted: set[int] = set()
    for k in range(B):
        msg, bad = _gao_decode_column([int(v) for v in mat[:, k]], alphas, g0, S, e, p)
        corrupted |= bad
        for t, c in enumerate(msg):
            coeffs[t, k] = c
    if len(corrupted) > e:
        raise DecodeFailure(f"{len(corrupted)} corrupted slices exceed the bound {e}")
    return _blocks_from_coeffs(coeffs, rounds.pop(), points, p), corrupted


def _real_vandermonde(xs: Sequence[int], degree: int) -> np.ndarray:
    v = np.zeros((len(xs), degree), dtype=np.float64)
    for i, x in enumerate(xs):
        v[i] = [float(x) ** t for t in range(degree)]
    return v


def encode_slices_float(blocks: np.ndarray, points: EvalPoints) -> np.ndarray:
    """Illustrative real-valued encoding: no quantization, no error tolerance.

    Evaluates the real polynomial through (omega_s, blocks[s]) at every
    client point.  Ill-conditioned beyond small S; the field path is the
    production contract.
    """
    S, C = len(points.omegas), len(points.alphas)
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.shape[0] != S:
        raise ValueError(f"expected {S} block rows, got {blocks.shape[0]}")
    coeffs = np.linalg.solve(_real_vandermonde(points.omegas, S), blocks)
    return _real_vandermonde(points.alphas, S) @ coeffs


def reconstruct_fast_float(
    slices: np.ndarray, alphas: Sequence[int], points: EvalPoints
) -> np.ndarray:
    """Least-squares inverse of encode_slices_float from >= S slice rows."""
    S = len(points.omegas)
    slices = np.asarray(slices, dtype=np.float64)
    if slices.shape[0] != len(alphas):
        raise ValueError("one alpha per slice row required")
    if slices.shape[0] < S:
        raise ValueError(f"need at least {S} slices, got {slices.shape[0]}")
    if len(set(alphas)) != len(alphas):
        raise ValueError("slice evaluation points must be distinct")
    coeffs, *_ = np.linalg.lstsq(_real_vandermonde(alphas, S), slices, rcond=None)
    return _real_vandermonde(points.omegas, S) @ coeffs


# ---------------------------------------------------------------------------
# Keyed retrieval: clients hold the slices, servers get them only via keys.


class ClientSliceStore:
    """The client population's slice holdings, one slice per (round, client)."""

    def __init__(self) -> None:
        self._slices: dict[tuple[int, int], CodedSlice] = {}

    def put(self, sl: CodedSlice) -> None:
        self._slices[(sl.round, sl.client_id)] = sl

    def round_slices(self, round_: int) -> list[CodedSlice]:
        found = [sl for (g, _), sl in self._slices.items() if g == round_]
        if not found:
            raise KeyError(f"no slices held for round {round_}")
        return sorted(found, key=lambda s: s.client_id)

    def rounds(self) -> list[int]:
        return sorted({g for g, _ in self._slices})

    @property
    def total_bytes(self) -> int:
        return sum(sl.nbytes for sl in self._slices.values())


class KeyRegistry:
    """Per-(shard, round) access keys plus an audit log of retrievals."""

    def __init__(self, key_seed: int) -> None:
        self._key_seed = key_seed
        self._keys: dict[str, tuple[int, int]] = {}
        self._revoked: set[str] = set()
        self.audit_log: list[tuple[str, int, int, int]] = []

    def issue_key(self, shard_id: int, round_: int) -> str:
        material = f"key|{self._key_seed}|{shard_id}|{round_}".encode()
        key = hashlib.blake2b(material, digest_size=16).hexdigest()
        self._keys[key] = (shard_id, round_)
        return key

    def revoke(self, key: str) -> None:
        self._revoked.add(key)

    def issued(self) -> list[tuple[int, int]]:
        return sorted(set(self._keys.values()))

    def retrieve_slices(self, key: str, clients: ClientSliceStore) -> list[CodedSlice]:
        if key not in self._keys or key in self._revoked:
            raise AuthorizationError("unknown or revoked retrieval key")
        shard_id, round_ = self._keys[key]
        found = clients.round_slices(round_)
        self.audit_log.append((key, shard_id, round_, len(found)))
        return found

    @property
    def metadata_bytes(self) -> int:
        # 16-byte key + (shard, round) u32 pair per issued key.
        return len(self._keys) * (16 + 8)


# ---------------------------------------------------------------------------
# Slice wire format: self-delimiting records, concatenable in one file.


def write_slice_record(fh, sl: CodedSlice, codec: FixedPointCodec) -> None:
    fh.write(SLICE_MAGIC)
    fh.write(
        struct.pack(
            "<HIIIQQ", SLICE_VERSION, sl.round, sl.client_id, len(sl.values), codec.prime, codec.scale
        )
    )
    fh.write(sl.values.astype("<u8").tobytes())
    fh.write(sl.tag)


def read_slice_record(fh) -> tuple[CodedSlice, int, int] | None:
    """Returns (slice, prime, scale) or None at end of file."""
    magic = fh.read(4)
    if not magic:
        return None
    if magic != SLICE_MAGIC:
        raise ValueError(f"bad slice magic {magic!r}")
    version, round_, client_id, length, prime, scale = struct.unpack("<HIIIQQ", fh.read(30))
    if version != SLICE_VERSION:
        raise ValueError(f"unsupported slice record version {version}")
    values = np.frombuffer(fh.read(length * 8), dtype="<u8").astype(np.int64)
    tag = fh.read(32)
    return CodedSlice(client_id=client_id, round=round_, values=values, tag=tag), prime, scale
