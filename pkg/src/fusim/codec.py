"""Fixed-point codec between real parameter vectors and prime-field elements.

Real values are clamped to a symmetric range, scaled by a power of two,
rounded to the nearest integer and mapped into F_p with negatives stored
as p - |v|.  Decoding of the coded store inverts exactly in F_p, so the
only loss on a round trip is the rounding step, bounded by 1/(2*scale).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fieldmath import is_prime

DEFAULT_PRIME = 2_147_483_647  # 2^31 - 1
DEFAULT_SCALE = 1 << 16
DEFAULT_CLAMP = 8.0


class ClampWarning(UserWarning):
    """Raised as a warning when quantization saturates values."""


@dataclass(frozen=True)
class FixedPointCodec:
    prime: int = DEFAULT_PRIME
    scale: int = DEFAULT_SCALE
    clamp_range: float = DEFAULT_CLAMP

    def __post_init__(self) -> None:
        if not is_prime(self.prime):
            raise ValueError(f"modulus {self.prime} is not prime")
        if self.prime * self.prime >= 2**63:
            raise ValueError("prime too large: p*p must fit in int64")
        if self.scale <= 0 or self.scale & (self.scale - 1):
            raise ValueError("scale must be a positive power of two")
        if self.clamp_range <= 0:
            raise ValueError("clamp_range must be positive")
        if self.prime <= 2 * self.scale * self.clamp_range:
            raise ValueError(
                "prime too small: need p > 2*scale*clamp_range to avoid wraparound"
            )

    def check_points(self, num_clients: int, num_shards: int) -> None:
        """The default evaluation points 1..S+C must be distinct nonzero residues."""
        if self.prime <= num_clients + num_shards:
            raise ValueError(
                f"prime {self.prime} too small for {num_shards} shards + {num_clients} clients"
            )

    @property
    def resolution(self) -> float:
        return 1.0 / (2.0 * self.scale)


def quantize(values: np.ndarray, codec: FixedPointCodec) -> np.ndarray:
    """Map real values to field elements; warns with the clamp count on saturation."""
    vals = np.asarray(values, dtype=np.float64)
    clamped = np.clip(vals, -codec.clamp_range, codec.clamp_range)
    n_clamped = int(np.count_nonzero(clamped != vals))
    if n_clamped:
        warnings.warn(
            f"quantize saturated {n_clamped} of {vals.size} values to +/-{codec.clamp_range}",
            ClampWarning,
            stacklevel=2,
        )
    ints = np.rint(clamped * codec.scale).astype(np.int64)
    return np.where(ints < 0, ints + codec.prime, ints)


def dequantize(field_values: np.ndarray, codec: FixedPointCodec) -> np.ndarray:
    """Inverse of quantize; elements above p/2 are the negative branch."""
    vals = np.asarray(field_values, dtype=np.int64)
    if np.any(vals < 0) or np.any(vals >= codec.prime):
        raise ValueError("field values must lie in [0, p)")
    signed = np.where(vals > codec.prime // 2, vals - codec.prime, vals)
    return (signed.astype(np.float64) / codec.scale).astype(np.float32)
