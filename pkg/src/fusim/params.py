"""Flat parameter vectors and their binary serialization."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from math import prod

import numpy as np

Layout = tuple[tuple[str, tuple[int, ...]], ...]

_MAGIC = b"FUPV"
_VERSION = 1


class NonFiniteParamsError(ValueError):
    """A parameter operation produced NaN or Inf values."""


def layout_dim(layout: Layout) -> int:
    return sum(prod(shape) for _, shape in layout)


@dataclass(frozen=True)
class ParamVector:
    """Flat float32 view of all model parameters.

    values: 1-D float32 array of dimension d.
    layout: ordered (tensor-name, shape) pairs; d equals the sum of the
    shape products.  Construction rejects non-finite values so every
    operation that returns a ParamVector upholds the finiteness invariant.
    """

    values: np.ndarray
    layout: Layout

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=np.float32)
        if vals.ndim != 1:
            raise ValueError("ParamVector values must be 1-D")
        if vals.shape[0] != layout_dim(self.layout):
            raise ValueError(
                f"dimension {vals.shape[0]} does not match layout dim {layout_dim(self.layout)}"
            )
        if not np.all(np.isfinite(vals)):
            raise NonFiniteParamsError("ParamVector contains NaN or Inf")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=np.float32), self.layout)

    def tensors(self) -> dict[str, np.ndarray]:
        """Unpack the flat vector into named tensors per the layout."""
        out: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in self.layout:
            size = prod(shape)
            out[name] = self.values[offset : offset + size].reshape(shape)
            offset += size
        return out

    def tobytes(self) -> bytes:
        return self.values.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.values, other.values)


def from_tensors(tensors: dict[str, np.ndarray], layout: Layout) -> ParamVector:
    flat = np.concatenate([np.asarray(tensors[name], dtype=np.float32).reshape(-1) for name, _ in layout])
    return ParamVector(flat, layout)


def save_param_vector(path, params: ParamVector) -> None:
    """Write magic, version, dim, layout JSON, then little-endian float32."""
    layout_json = json.dumps([[name, list(shape)] for name, shape in params.layout]).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HII", _VERSION, params.dim, len(layout_json)))
        fh.write(layout_json)
        fh.write(params.values.astype("<f4").tobytes())


def load_param_vector(path) -> ParamVector:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a parameter file (magic {magic!r})")
        version, dim, layout_len = struct.unpack("<HII", fh.read(10))
        if version != _VERSION:
            raise ValueError(f"unsupported parameter file version {version}")
        layout_raw = json.loads(fh.read(layout_len).decode())
        layout = tuple((name, tuple(shape)) for name, shape in layout_raw)
        values = np.frombuffer(fh.read(dim * 4), dtype="<f4").astype(np.float32)
    return ParamVector(values, layout)
