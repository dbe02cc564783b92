"""Prime-field arithmetic: primality, inverses, solves, polynomial ops."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusim.fieldmath import (
    OPS,
    inv_mod,
    is_prime,
    lagrange_interpolate,
    matmul_mod,
    poly_deg,
    poly_divmod,
    poly_eval,
    poly_from_roots,
    poly_mul,
    poly_sub,
    poly_trim,
    solve_mod,
)

P = 10_007  # small prime keeps brute-force oracles cheap


class TestIsPrime:
    def test_small_values(self):
        primes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41}
        for n in range(-3, 42):
            assert is_prime(n) == (n in primes)

    def test_default_modulus_is_prime(self):
        assert is_prime(2_147_483_647)

    def test_carmichael_numbers_rejected(self):
        # Composites that fool Fermat tests; Miller-Rabin must not.
        for n in (561, 1105, 1729, 2465, 2821, 6601, 8911, 41041):
            assert not is_prime(n)

    def test_square_of_prime_rejected(self):
        assert not is_prime(2_147_483_647**2)


class TestInvMod:
    def test_matches_definition(self):
        for a in range(1, 100):
            assert a * inv_mod(a, P) % P == 1

    def test_zero_rejected(self):
        with pytest.raises(ZeroDivisionError):
            inv_mod(0, P)
        with pytest.raises(ZeroDivisionError):
            inv_mod(P, P)  # congruent to zero

    def test_negative_input_reduced_first(self):
        assert (-3) * inv_mod(-3, P) % P == 1


class TestSolveMod:
    def test_known_system(self):
        # x + 2y = 5, 3x + 4y = 6 mod p -> x = -4, y = 4.5 has no integer
        # analogue; verify by substitution instead.
        a = np.array([[1, 2], [3, 4]])
        b = np.array([5, 6])
        x = solve_mod(a, b, P)
        assert np.array_equal(matmul_mod(a, x.reshape(2, 1), P).ravel(), b % P)

    def test_random_systems_against_substitution(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(1, 6))
            a = rng.integers(0, P, size=(n, n))
            # Ensure invertibility by retrying on singular raises.
            b = rng.integers(0, P, size=(n, 3))
            try:
                x = solve_mod(a, b, P)
            except np.linalg.LinAlgError:
                continue
            assert np.array_equal(matmul_mod(a, x, P), b % P)

    def test_singular_system_raises(self):
        a = np.array([[1, 2], [2, 4]])  # rank 1
        with pytest.raises(np.linalg.LinAlgError):
            solve_mod(a, np.array([1, 1]), P)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            solve_mod(np.ones((2, 3), dtype=np.int64), np.ones(2, dtype=np.int64), P)


class TestPolynomials:
    def test_trim_and_degree(self):
        assert poly_trim([1, 2, 0, 0]) == [1, 2]
        assert poly_deg([]) == -1
        assert poly_deg([5]) == 0
        assert poly_deg([0, 0, 3]) == 2

    def test_eval_horner(self):
        # f(x) = 1 + 2x + 3x^2 at x = 5 -> 86
        assert poly_eval([1, 2, 3], 5, P) == 86

    def test_mul_known_product(self):
        # (1 + x)(1 - x) = 1 - x^2
        assert poly_mul([1, 1], [1, P - 1], P) == [1, 0, P - 1]

    def test_mul_with_zero(self):
        assert poly_mul([], [1, 2], P) == []

    def test_sub(self):
        assert poly_sub([3, 2], [1, 2], P) == [2]
        assert poly_sub([1, 2], [1, 2], P) == []

    def test_divmod_reconstructs(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            f = [int(v) for v in rng.integers(0, P, size=rng.integers(1, 8))]
            g = [int(v) for v in rng.integers(0, P, size=rng.integers(1, 5))]
            if not poly_trim(list(g)):
                continue
            q, r = poly_divmod(f, g, P)
            recon = poly_sub(poly_mul(q, g, P), [(-c) % P for c in r], P)
            assert recon == poly_trim(list(f))
            assert poly_deg(r) < poly_deg(poly_trim(list(g)))

    def test_divmod_by_zero_rejected(self):
        with pytest.raises(ZeroDivisionError):
            poly_divmod([1, 2], [0], P)

    def test_from_roots(self):
        f = poly_from_roots([2, 3], P)
        # (x-2)(x-3) = 6 - 5x + x^2
        assert f == [6, P - 5, 1]
        for r in (2, 3):
            assert poly_eval(f, r, P) == 0


class TestLagrangeInterpolate:
    def test_recovers_known_polynomial(self):
        f = [4, 0, 2, 7]  # degree 3
        xs = [1, 2, 3, 4]
        ys = [poly_eval(f, x, P) for x in xs]
        assert lagrange_interpolate(xs, ys, P) == f

    def test_duplicate_points_rejected(self):
        with pytest.raises(ValueError):
            lagrange_interpolate([1, 1], [2, 3], P)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            lagrange_interpolate([1, 2], [1], P)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, P - 1), min_size=1, max_size=6, unique=True), st.data())
    def test_interpolant_passes_through_points(self, xs, data):
        ys = data.draw(
            st.lists(st.integers(0, P - 1), min_size=len(xs), max_size=len(xs))
        )
        f = lagrange_interpolate(xs, ys, P)
        assert poly_deg(f) < len(xs)
        for x, y in zip(xs, ys):
            assert poly_eval(f, x, P) == y


class TestOpCounter:
    def test_counts_only_when_enabled(self):
        OPS.reset()
        OPS.enabled = False
        poly_eval([1, 2, 3], 4, P)
        assert OPS.mults == 0
        OPS.enabled = True
        try:
            poly_eval([1, 2, 3], 4, P)
            assert OPS.mults > 0
        finally:
            OPS.enabled = False
            OPS.reset()
