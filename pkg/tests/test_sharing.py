"""Fixed-point encoding and additive sharing in both domains."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from mpclogreg.errors import FixedPointRangeError, UsageError
from mpclogreg.sharing import (
    DEFAULT_FIXED_POINT,
    DEFAULT_MASK_BOUND,
    FixedPointConfig,
    RealShare,
    RingShare,
    ShareMatrix,
    decode_fixed,
    encode_fixed,
    random_ring_elements,
    reconstruct_fixed,
    reconstruct_real,
    reconstruct_ring,
    ring_add,
    ring_mul,
    ring_shares_from_real_shares,
    share_fixed,
    share_real,
    share_ring_elements,
)


def test_default_config_values():
    assert DEFAULT_FIXED_POINT.ring_bits == 64
    assert DEFAULT_FIXED_POINT.frac_bits == 16
    assert DEFAULT_FIXED_POINT.scale == 65536
    assert DEFAULT_MASK_BOUND == 2.0 ** 40


def test_config_rejects_bad_splits():
    with pytest.raises(UsageError):
        FixedPointConfig(ring_bits=64, frac_bits=0)
    with pytest.raises(UsageError):
        FixedPointConfig(ring_bits=64, frac_bits=64)
    with pytest.raises(UsageError):
        FixedPointConfig(ring_bits=80, frac_bits=16)


def test_encode_known_values():
    # round(x * 2**16) represented two's-complement in the 2**64 ring
    assert encode_fixed(1.0) == np.uint64(65536)
    assert encode_fixed(0.5) == np.uint64(32768)
    assert encode_fixed(-1.0) == np.uint64(2 ** 64 - 65536)
    assert encode_fixed(0.0) == np.uint64(0)
    # ties round to even under rint: 0.5 * 2**-16 * 2**16 = 0.5 -> 0
    assert encode_fixed(2.0 ** -17) == np.uint64(0)


def test_decode_known_values():
    assert decode_fixed(np.uint64(65536)) == 1.0
    assert decode_fixed(np.uint64(2 ** 64 - 65536)) == -1.0
    assert decode_fixed(np.uint64(1)) == 2.0 ** -16


def test_encode_rejects_out_of_range():
    # representable magnitudes stop at 2**(64 - 16 - 1)
    bound = 2.0 ** 47
    with pytest.raises(FixedPointRangeError):
        encode_fixed(bound)
    encode_fixed(bound - 1.0)


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_encode_decode_round_trip(x):
    err = abs(decode_fixed(encode_fixed(x)) - x)
    assert err <= 2.0 ** -17 + 1e-12


@given(
    st.floats(min_value=-1e5, max_value=1e5, allow_nan=False),
    st.floats(min_value=-1e5, max_value=1e5, allow_nan=False),
)
@settings(max_examples=200, deadline=None)
def test_encoding_is_additively_homomorphic(a, b):
    enc = ring_add(encode_fixed(a), encode_fixed(b), DEFAULT_FIXED_POINT)
    assert abs(decode_fixed(enc) - (a + b)) <= 2.0 ** -16 + 1e-12


def test_ring_mul_matches_integer_product_mod_ring():
    a = np.uint64(2 ** 40 + 12345)
    b = np.uint64(2 ** 30 + 678)
    expect = ((2 ** 40 + 12345) * (2 ** 30 + 678)) % 2 ** 64
    assert ring_mul(a, b, DEFAULT_FIXED_POINT) == np.uint64(expect)


@pytest.mark.parametrize("n_parties", [2, 3, 5])
def test_ring_share_reconstruct(n_parties):
    rng = np.random.default_rng(7)
    values = random_ring_elements(rng, (4, 3))
    shares = share_ring_elements(values, n_parties, rng)
    assert len(shares) == n_parties
    assert np.array_equal(reconstruct_ring(shares), values)


@pytest.mark.parametrize("n_parties", [2, 3])
def test_fixed_share_reconstruct(n_parties):
    rng = np.random.default_rng(11)
    values = rng.uniform(-50, 50, (6, 2))
    shares = share_fixed(values, n_parties, rng)
    back = reconstruct_fixed(shares)
    assert np.max(np.abs(back - values)) <= 2.0 ** -17


def test_ring_shares_are_additively_homomorphic():
    rng = np.random.default_rng(3)
    x = rng.uniform(-10, 10, 8)
    y = rng.uniform(-10, 10, 8)
    sx = share_fixed(x, 3, rng)
    sy = share_fixed(y, 3, rng)
    summed = [ring_add(a.values, b.values, DEFAULT_FIXED_POINT) for a, b in zip(sx, sy)]
    assert np.max(np.abs(reconstruct_fixed(summed) - (x + y))) <= 2.0 ** -15


@pytest.mark.parametrize("n_parties", [2, 3, 4])
def test_real_share_reconstruct_default_masks(n_parties):
    rng = np.random.default_rng(5)
    values = rng.uniform(-100, 100, (5, 4))
    shares = share_real(values, n_parties, rng)
    # masks reach 2**40, so reconstruction is exact only to float64
    # cancellation at that magnitude
    back = reconstruct_real(shares)
    assert np.max(np.abs(back - values)) <= n_parties * 2.0 ** (40 - 50)


def test_real_share_reconstruct_tight_masks():
    rng = np.random.default_rng(6)
    values = rng.uniform(-2, 2, 16)
    shares = share_real(values, 3, rng, mask_bound=4.0)
    assert np.max(np.abs(reconstruct_real(shares) - values)) <= 1e-12
    for s in shares[:-1]:
        assert np.max(np.abs(s.values)) <= 4.0


def test_real_to_ring_conversion_is_local():
    rng = np.random.default_rng(9)
    values = rng.uniform(-20, 20, 10)
    real_shares = share_real(values, 3, rng, mask_bound=32.0)
    ring_shares = ring_shares_from_real_shares(real_shares)
    back = reconstruct_fixed(ring_shares)
    # each party rounds its own share onto the fixed-point grid
    assert np.max(np.abs(back - values)) <= 3 * 2.0 ** -17 + 1e-9


def test_share_matrix_validation():
    with pytest.raises(UsageError):
        ShareMatrix(owner=0, values=np.zeros(3, dtype=np.int32))
    with pytest.raises(UsageError):
        ShareMatrix(owner=0, values=np.zeros((2, 2, 2), dtype=np.uint64))
    sm = ShareMatrix(owner=1, values=np.zeros((2, 3), dtype=np.uint64))
    assert sm.is_ring and sm.shape == (2, 3)
    rm = ShareMatrix(owner=0, values=np.zeros(4), mask_bound=8.0, value_bound=2.0)
    assert not rm.is_ring


def test_share_types_carry_owner():
    r = RingShare(value=np.uint64(5), owner=2)
    assert r.owner == 2
    s = RealShare(value=1.5, owner=0)
    assert s.mask_bound == DEFAULT_MASK_BOUND


def test_ring_randomness_is_uniform_over_buckets():
    # low nibble of fresh ring elements, chi-square at the 1% level
    rng = np.random.default_rng(1234)
    draws = random_ring_elements(rng, 160000)
    buckets = np.bincount((draws & np.uint64(0xF)).astype(np.int64), minlength=16)
    expected = draws.size / 16
    stat = float(np.sum((buckets - expected) ** 2 / expected))
    assert stat < chi2.ppf(0.99, df=15)


def test_share_values_are_uniform_over_buckets():
    rng = np.random.default_rng(4321)
    values = np.zeros(120000, dtype=np.uint64)  # sharing zero still looks random
    shares = share_ring_elements(values, 2, rng)
    for s in shares:
        buckets = np.bincount((s & np.uint64(0xF)).astype(np.int64), minlength=16)
        expected = s.size / 16
        stat = float(np.sum((buckets - expected) ** 2 / expected))
        assert stat < chi2.ppf(0.99, df=15)
