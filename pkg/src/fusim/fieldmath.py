"""Prime-field arithmetic helpers for the coded parameter store.

Everything here works over F_p for an odd prime p with p*p < 2**63, so
that a product of two reduced residues never overflows a signed 64-bit
integer.  Vectors are numpy ``int64`` arrays of reduced residues;
polynomials are plain Python lists of ints, lowest degree first.
"""

from __future__ import annotations

import numpy as np

_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for every n < 3.3e24."""
    if n < 2:
        return False
    for w in _MR_WITNESSES:
        if n % w == 0:
            return n == w
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for w in _MR_WITNESSES:
        x = pow(w, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def inv_mod(a: int, p: int) -> int:
    """Multiplicative inverse of a in F_p; a must be nonzero mod p."""
    a %= p
    if a == 0:
        raise ZeroDivisionError("no inverse of 0 in F_p")
    return pow(a, p - 2, p)


class OpCounter:
    """Counts field multiplications, used to measure decode complexity."""

    def __init__(self) -> None:
        self.mults = 0
        self.enabled = False

    def add(self, n: int) -> None:
        if self.enabled:
            self.mults += int(n)

    def reset(self) -> None:
        self.mults = 0


# Shared counter; callers enable it around the region they want measured.
OPS = OpCounter()


def mul_mod(a: np.ndarray, b: np.ndarray | int, p: int) -> np.ndarray:
    """Elementwise a*b mod p on int64 arrays of reduced residues."""
    out = (np.asarray(a, dtype=np.int64) * b) % p
    OPS.add(out.size)
    return out


def matmul_mod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """a @ b mod p, reducing after every rank-1 term to avoid overflow."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch {a.shape} @ {b.shape}")
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.int64)
    for k in range(a.shape[1]):
        acc = (acc + a[:, k : k + 1] * b[k : k + 1, :]) % p
        OPS.add(a.shape[0] * b.shape[1])
    return acc


def solve_mod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """Solve the square system a x = b over F_p by Gaussian elimination.

    b may have multiple right-hand-side columns.  Raises if a is singular.
    """
    a = np.array(a, dtype=np.int64) % p
    b = np.array(b, dtype=np.int64) % p
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n:
        raise ValueError("solve_mod expects a square system")
    aug = np.concatenate([a, b.reshape(n, -1)], axis=1)
    for col in range(n):
        piv = col + int(np.argmax(aug[col:, col] != 0))
        if aug[piv, col] == 0:
            raise np.linalg.LinAlgError("singular system mod p")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        inv = inv_mod(int(aug[col, col]), p)
        aug[col] = aug[col] * inv % p
        OPS.add(aug.shape[1])
        for row in range(n):
            if row != col and aug[row, col] != 0:
                aug[row] = (aug[row] - aug[row, col] * aug[col]) % p
                OPS.add(aug.shape[1])
    return aug[:, n:].reshape(b.shape)


# ---------------------------------------------------------------------------
# Dense polynomial arithmetic over F_p (coefficient lists, low degree first).


def poly_trim(f: list[int]) -> list[int]:
    while f and f[-1] == 0:
        f.pop()
    return f


def poly_deg(f: list[int]) -> int:
    return len(f) - 1  # zero polynomial -> -1


def poly_eval(f: list[int], x: int, p: int) -> int:
    acc = 0
    for c in reversed(f):
        acc = (acc * x + c) % p
    OPS.add(len(f))
    return acc


def poly_mul(f: list[int], g: list[int], p: int) -> list[int]:
    if not f or not g:
        return []
    out = [0] * (len(f) + len(g) - 1)
    for i, fi in enumerate(f):
        if fi == 0:
            continue
        for j, gj in enumerate(g):
            out[i + j] = (out[i + j] + fi * gj) % p
        OPS.add(len(g))
    return poly_trim(out)


def poly_sub(f: list[int], g: list[int], p: int) -> list[int]:
    out = [0] * max(len(f), len(g))
    for i, fi in enumerate(f):
        out[i] = fi
    for i, gi in enumerate(g):
        out[i] = (out[i] - gi) % p
    return poly_trim(out)


def poly_divmod(f: list[int], g: list[int], p: int) -> tuple[list[int], list[int]]:
    g = poly_trim(list(g))
    if not g:
        raise ZeroDivisionError("polynomial division by zero")
    rem = list(f)
    poly_trim(rem)
    quo = [0] * max(len(rem) - len(g) + 1, 0)
    ginv = inv_mod(g[-1], p)
    while len(rem) >= len(g):
        shift = len(rem) - len(g)
        coef = rem[-1] * ginv % p
        quo[shift] = coef
        for i, gi in enumerate(g):
            rem[shift + i] = (rem[shift + i] - coef * gi) % p
        OPS.add(len(g) + 1)
        poly_trim(rem)
        if not rem:
            break
    return poly_trim(quo), rem


def poly_from_roots(roots: list[int], p: int) -> list[int]:
    """Monic polynomial with the given roots."""
    f = [1]
    for r in roots:
        f = poly_mul(f, [(-r) % p, 1], p)
    return f


def lagrange_interpolate(xs: list[int], ys: list[int], p: int) -> list[int]:
    """Unique polynomial of degree < len(xs) through the points (xs, ys)."""
    if len(xs) != len(ys):
        raise ValueError("xs and ys must have equal length")
    if len(set(x % p for x in xs)) != len(xs):
        raise ValueError("interpolation points must be distinct mod p")
    # Newton's divided differences: O(n^2) and incremental.
    n = len(xs)
    coeffs = [y % p for y in ys]
    for level in range(1, n):
        for i in range(n - 1, level - 1, -1):
            num = (coeffs[i] - coeffs[i - 1]) % p
            den = (xs[i] - xs[i - level]) % p
            coeffs[i] = num * inv_mod(den, p) % p
            OPS.add(1)
    # Expand the Newton form into monomial coefficients.
    poly: list[int] = []
    for i in range(n - 1, -1, -1):
        poly = poly_mul(poly, [(-xs[i]) % p, 1], p)
        poly = poly_sub(poly, [(-coeffs[i]) % p], p)
    return poly_trim(poly)
