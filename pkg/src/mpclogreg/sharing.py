"""Additive secret sharing in two arithmetic domains.

Ring domain: values are fixed-point encoded into uint64 and shared n-out-of-n
additively modulo 2**ring_bits. Real domain: values stay float64 and shares
are masked with uniform offsets, which hides them statistically (mask width
versus value magnitude) rather than information-theoretically; good enough for
a simulation, not for production key material.

All array payloads are numpy arrays so that whole matrices can be shared and
reconstructed in one call.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import FixedPointRangeError, UsageError

_U64 = np.uint64
_FULL_RING = 64


def _as_ring_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.uint64)
    return arr


@dataclass(frozen=True)
class FixedPointConfig:
    """Two's-complement fixed-point layout inside an unsigned ring.

    Attributes:
        ring_bits: width of the ring, at most 64 (uint64 backing store).
        frac_bits: number of fractional bits; resolution is 2**-frac_bits.
    """

    ring_bits: int = 64
    frac_bits: int = 16

    def __post_init__(self):
        if not (0 < self.frac_bits < self.ring_bits):
            raise UsageError(
                f"frac_bits must lie strictly between 0 and ring_bits, "
                f"got frac_bits={self.frac_bits}, ring_bits={self.ring_bits}"
            )
        if self.ring_bits > 64:
            raise UsageError("ring_bits beyond 64 is not representable in uint64")

    @property
    def scale(self) -> float:
        return float(2 ** self.frac_bits)

    @property
    def value_bound(self) -> float:
        """Largest encodable magnitude, exclusive."""
        return float(2 ** (self.ring_bits - self.frac_bits - 1))

    @property
    def ring_mask(self) -> np.uint64:
        if self.ring_bits == _FULL_RING:
            return _U64(0xFFFFFFFFFFFFFFFF)
        return _U64((1 << self.ring_bits) - 1)


DEFAULT_FIXED_POINT = FixedPointConfig()


def ring_wrap(values: np.ndarray, cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    """Reduces uint64 values into the configured ring."""
    arr = _as_ring_array(values)
    if cfg.ring_bits == _FULL_RING:
        return arr
    with np.errstate(over="ignore"):
        return arr & cfg.ring_mask


def ring_add(a, b, cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    with np.errstate(over="ignore"):
        return ring_wrap(_as_ring_array(a) + _as_ring_array(b), cfg)


def ring_sub(a, b, cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    with np.errstate(over="ignore"):
        return ring_wrap(_as_ring_array(a) - _as_ring_array(b), cfg)


def ring_neg(a, cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    with np.errstate(over="ignore"):
        return ring_wrap(-_as_ring_array(a), cfg)


def ring_mul(a, b, cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    with np.errstate(over="ignore"):
        return ring_wrap(_as_ring_array(a) * _as_ring_array(b), cfg)


def encode_fixed(values, cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    """Encodes real values as two's-complement fixed point in the ring.

    Args:
        values: scalar or array of floats with |x| < 2**(ring_bits-frac_bits-1).
        cfg: fixed-point layout.

    Returns:
        uint64 array of ring elements, round(x * 2**frac_bits) mod 2**ring_bits.

    Raises:
        FixedPointRangeError: if any value falls outside the encodable range.
    """
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise FixedPointRangeError("cannot encode non-finite values")
    scaled = np.rint(arr * cfg.scale)
    limit = float(2 ** (cfg.ring_bits - 1))
    if np.any(np.abs(scaled) >= limit):
        worst = float(np.max(np.abs(arr)))
        raise FixedPointRangeError(
            f"value magnitude {worst:g} exceeds fixed-point bound "
            f"{cfg.value_bound:g} (ring_bits={cfg.ring_bits}, frac_bits={cfg.frac_bits})"
        )
    return ring_wrap(scaled.astype(np.int64).astype(np.uint64), cfg)


def decode_fixed(values, cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    """Decodes ring elements back to floats (inverse of encode_fixed up to
    quantization, |error| <= 2**-(frac_bits+1))."""
    arr = ring_wrap(values, cfg)
    if cfg.ring_bits == _FULL_RING:
        signed = arr.astype(np.int64)
    else:
        half = _U64(1 << (cfg.ring_bits - 1))
        signed = arr.astype(np.int64)
        signed = np.where(arr >= half, signed - np.int64(1 << cfg.ring_bits), signed)
    return signed.astype(np.float64) / cfg.scale


def random_ring_elements(rng: np.random.Generator, shape, cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    """Uniform elements of the ring, from the given generator."""
    if cfg.ring_bits == _FULL_RING:
        return rng.integers(0, 2 ** 64 - 1, size=shape, dtype=np.uint64, endpoint=True)
    return rng.integers(0, 1 << cfg.ring_bits, size=shape, dtype=np.uint64)


DEFAULT_MASK_BOUND = float(2 ** 40)


@dataclass(frozen=True)
class RingShare:
    """One additive share of a ring element.

    Attributes:
        value: the share, a uint64 ring element.
        owner: index of the party holding it.
    """

    value: np.uint64
    owner: int


@dataclass(frozen=True)
class RealShare:
    """One additive share of a float, masked by a uniform offset.

    Attributes:
        value: the share.
        owner: index of the party holding it.
        mask_bound: bound on the uniform masks used when the sharing was drawn.
    """

    value: float
    owner: int
    mask_bound: float = DEFAULT_MASK_BOUND


@dataclass
class ShareMatrix:
    """A block of shares held by one party.

    All entries belong to the same owner; dtype uint64 marks the ring domain
    and float64 the real domain. mask_bound and value_bound are public
    metadata used by the real-domain protocols (bounds on share magnitudes and
    on the underlying secret's magnitude); both stay None in the ring domain.
    """

    owner: int
    values: np.ndarray
    mask_bound: Optional[float] = None
    value_bound: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.dtype == np.uint64:
            pass
        elif self.values.dtype == np.float64:
            if self.mask_bound is None:
                self.mask_bound = DEFAULT_MASK_BOUND
        else:
            raise UsageError(f"shares must be uint64 or float64, got {self.values.dtype}")
        if self.owner < 0:
            raise UsageError("owner index must be non-negative")
        if self.values.ndim > 2:
            raise UsageError("share blocks are at most 2-dimensional")

    @property
    def is_ring(self) -> bool:
        return self.values.dtype == np.uint64

    @property
    def rows(self) -> int:
        if self.values.ndim == 0:
            return 1
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        if self.values.ndim < 2:
            return 1
        return int(self.values.shape[1])

    @property
    def shape(self):
        return self.values.shape


def share_ring_elements(
    elements,
    n_parties: int,
    rng: np.random.Generator,
    cfg: FixedPointConfig = DEFAULT_FIXED_POINT,
) -> List[np.ndarray]:
    """Splits ring elements into n additive shares.

    The first n-1 shares are uniform ring elements; the last is the remainder,
    so the sum of all shares reproduces the input modulo 2**ring_bits.
    """
    if n_parties < 2:
        raise UsageError("sharing needs at least 2 parties")
    arr = ring_wrap(elements, cfg)
    shares = [random_ring_elements(rng, arr.shape, cfg) for _ in range(n_parties - 1)]
    last = arr
    for s in shares:
        last = ring_sub(last, s, cfg)
    shares.append(last)
    return shares


def share_fixed(
    values,
    n_parties: int,
    rng: np.random.Generator,
    cfg: FixedPointConfig = DEFAULT_FIXED_POINT,
) -> List[ShareMatrix]:
    """Encodes floats and shares them in the ring; returns one block per party."""
    parts = share_ring_elements(encode_fixed(values, cfg), n_parties, rng, cfg)
    return [ShareMatrix(owner=i, values=part) for i, part in enumerate(parts)]


def reconstruct_ring(shares: Sequence[Union[ShareMatrix, np.ndarray]], cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    """Adds ring shares back together; returns the ring elements."""
    vals = [s.values if isinstance(s, ShareMatrix) else _as_ring_array(s) for s in shares]
    total = vals[0]
    for v in vals[1:]:
        total = ring_add(total, v, cfg)
    return total


def reconstruct_fixed(shares: Sequence[Union[ShareMatrix, np.ndarray]], cfg: FixedPointConfig = DEFAULT_FIXED_POINT) -> np.ndarray:
    """Adds ring shares and decodes the fixed-point result."""
    return decode_fixed(reconstruct_ring(shares, cfg), cfg)


def share_real(
    values,
    n_parties: int,
    rng: np.random.Generator,
    mask_bound: float = DEFAULT_MASK_BOUND,
    value_bound: Optional[float] = None,
) -> List[ShareMatrix]:
    """Splits floats into n additive real shares with uniform masks.

    The first n-1 shares are uniform on [-mask_bound, mask_bound]; the last
    share carries the remainder. Reconstruction error is limited to float64
    rounding at the mask scale (about 1e-16 * mask_bound per share).
    """
    if n_parties < 2:
        raise UsageError("sharing needs at least 2 parties")
    if mask_bound <= 0:
        raise UsageError("mask_bound must be positive")
    arr = np.asarray(values, dtype=np.float64)
    shares = [rng.uniform(-mask_bound, mask_bound, size=arr.shape) for _ in range(n_parties - 1)]
    last = arr - sum(shares)
    shares.append(last)
    return [
        ShareMatrix(owner=i, values=s, mask_bound=mask_bound, value_bound=value_bound)
        for i, s in enumerate(shares)
    ]


def reconstruct_real(shares: Sequence[Union[ShareMatrix, np.ndarray]]) -> np.ndarray:
    vals = [s.values if isinstance(s, ShareMatrix) else np.asarray(s, dtype=np.float64) for s in shares]
    return sum(vals)


def ring_shares_from_real_shares(
    shares: Sequence[ShareMatrix],
    cfg: FixedPointConfig = DEFAULT_FIXED_POINT,
) -> List[ShareMatrix]:
    """Re-encodes each party's real share locally into the fixed-point ring.

    Valid whenever every share magnitude fits the encoding range; the
    reconstructed ring value then equals the real value up to one quantization
    step per party. This is the conversion point between the real-domain
    sigmoid machinery and ring-domain linear algebra, and needs no messages.
    """
    out = []
    for s in shares:
        if s.is_ring:
            raise UsageError("shares are already in the ring domain")
        out.append(ShareMatrix(owner=s.owner, values=encode_fixed(s.values, cfg)))
    return out
