"""Secure arithmetic over additive shares.

Two settings are supported:

- 2 computation parties, dishonest majority ("beaver-2p"): multiplications
  use correlated triples from a trusted dealer, generated during setup only.
  Online, each party sends exactly two messages per multiplication (its d and
  e difference shares); the revealed d and e values are uniform masks.

- 3 computation parties, honest majority, one semi-honest corruption
  ("reshare-3p"): inputs are re-randomized, every party forwards its fresh
  shares to its successor on the ring, evaluates its three of the nine cross
  terms, and the product is re-randomized again. Five rounds of three
  messages make the documented constant of 15 messages per invocation in the
  ring domain; the real-domain variant replaces the final re-randomization
  with a 2-message magnitude-controlled cascade (14 messages).

Ring values are fixed-point; a product carries twice the fractional bits and
is rescaled by probabilistic truncation. With 2 parties truncation is purely
local (logical shift on party 0, negate-shift-negate on party 1). With 3
parties a local shift is not sound (the share sum wraps the ring a random
number of times), so the shares are first re-randomized, party 2 forwards its
fresh share to party 0, and the two remaining holders apply the local rule;
4 messages per truncation, error at most one quantization step except with
probability ~2**-(ring_bits - magnitude_bits - 1).

Real-domain shares carry public magnitude metadata (value_bound, mask_bound).
Masks are drawn proportionally to power-of-two scale hints, which keeps
float64 rounding around kappa**2 * 2**-52 relative per multiplication and
makes triple rescaling lossless. The hints leak coarse operand magnitudes;
that trade-off is inherent to additively masking floats and is documented
where it matters (exponent sharing in the sigmoid module).
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ProtocolError, UsageError
from .runtime import PartyRuntime
from .sharing import (
    FixedPointConfig,
    ShareMatrix,
    encode_fixed,
    random_ring_elements,
    ring_add,
    ring_mul,
    ring_neg,
    ring_sub,
    ring_wrap,
)

KAPPA = 16.0  # hiding ratio: mask width over value bound


def pow2_at_least(x) -> np.ndarray:
    """Smallest power of two >= |x|, elementwise.

    Floored at the smallest normal double so a zero maps to a finite hint.
    The floor must stay far below any reachable scale: exponent-factor
    hints telescope multiplicatively (2**-180 and smaller is routine), and
    an early floor would silently inflate the product hints."""
    arr = np.maximum(np.abs(np.asarray(x, dtype=np.float64)), np.finfo(np.float64).tiny)
    return np.exp2(np.ceil(np.log2(arr)))


@dataclass(frozen=True)
class SecuritySetting:
    """Which protocol family runs and under what corruption assumption."""

    variant: str
    n_parties: int
    corruption_threshold: int

    def __post_init__(self):
        if self.variant == "beaver-2p":
            if (self.n_parties, self.corruption_threshold) != (2, 1):
                raise UsageError("beaver-2p runs with exactly 2 parties, threshold 1")
        elif self.variant == "reshare-3p":
            if (self.n_parties, self.corruption_threshold) != (3, 1):
                raise UsageError("reshare-3p runs with exactly 3 parties, threshold 1")
        else:
            raise UsageError(f"unknown protocol variant {self.variant!r}")


BEAVER_2P = SecuritySetting("beaver-2p", 2, 1)
RESHARE_3P = SecuritySetting("reshare-3p", 3, 1)


@dataclass
class BeaverTriple:
    """One party's shares of a multiplication triple (c = a*b)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    consumed: bool = False


class TripleStore:
    """A party's pre-dealt pool of triples, consumed front to back."""

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray):
        self.a, self.b, self.c = a, b, c
        self.cursor = 0

    @property
    def remaining(self) -> int:
        return self.a.shape[0] - self.cursor

    def consume(self, count: int, shape) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if count > self.remaining:
            raise ProtocolError(
                f"triple pool exhausted: requested {count}, have {self.remaining}; "
                "the dealer sizes pools with the closed-form counts in mpclogreg.mpc"
            )
        lo, hi = self.cursor, self.cursor + count
        self.cursor = hi
        return (
            self.a[lo:hi].reshape(shape),
            self.b[lo:hi].reshape(shape),
            self.c[lo:hi].reshape(shape),
        )


class Dealer:
    """Trusted triple generator for the 2-party setting.

    Lives only in the setup phase: seal() is called when the online protocol
    starts and any generation afterwards is rejected.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.sealed = False
        self.ring_triples_issued = 0
        self.real_triples_issued = 0

    def _check_open(self):
        if self.sealed:
            raise ProtocolError("dealer is sealed: triples cannot be issued after protocol start")

    def deal_ring(self, count: int, cfg: FixedPointConfig, n_parties: int = 2) -> List[TripleStore]:
        self._check_open()
        a = random_ring_elements(self.rng, count, cfg)
        b = random_ring_elements(self.rng, count, cfg)
        c = ring_mul(a, b, cfg)
        stores = []
        parts = []
        for vals in (a, b, c):
            shares = [random_ring_elements(self.rng, count, cfg) for _ in range(n_parties - 1)]
            last = vals
            for s in shares:
                last = ring_sub(last, s, cfg)
            parts.append(shares + [last])
        for i in range(n_parties):
            stores.append(TripleStore(parts[0][i], parts[1][i], parts[2][i]))
        self.ring_triples_issued += count
        return stores

    def deal_real(self, count: int, n_parties: int = 2) -> List[TripleStore]:
        """Unit-scale real triples; engines rescale them by public powers of
        two at use time, which is lossless in float64."""
        self._check_open()
        a = self.rng.uniform(-1.0, 1.0, count)
        b = self.rng.uniform(-1.0, 1.0, count)
        c = a * b
        parts = []
        for vals in (a, b, c):
            shares = [self.rng.uniform(-1.0, 1.0, count) for _ in range(n_parties - 1)]
            shares.append(vals - np.sum(shares, axis=0))
            parts.append(shares)
        stores = [TripleStore(parts[0][i], parts[1][i], parts[2][i]) for i in range(n_parties)]
        self.real_triples_issued += count
        return stores

    def seal(self) -> None:
        self.sealed = True


def matmul_triples(p: int, q: int, r: int) -> int:
    """Triples consumed by one shared matrix product: one per scalar term."""
    return p * q * r


def approx_training_triples(n_records: int, n_coeffs: int, n_iter: int, inv_iterations: int, degree: int) -> int:
    """Ring triples consumed by one fixed-point polynomial-sigmoid training.

    Terms: X'X once, two matrix products per inversion iteration, then per
    Newton iteration the score product, the odd-power chain of the sigmoid
    polynomial ((degree+1)/2 elementwise products), the gradient product and
    the update product.
    """
    n, m = n_records, n_coeffs
    per_iter = 2 * n * m + n * ((degree + 1) // 2) + m * m
    return m * m * n + 2 * inv_iterations * m ** 3 + n_iter * per_iter


def accurate_training_triples(n_records: int, n_coeffs: int, n_iter: int, inv_iterations: int, n_parties: int) -> int:
    """Real triples consumed by one exact-sigmoid training (2-party)."""
    n, m = n_records, n_coeffs
    per_iter = 2 * n * m + (n_parties - 1) * n + 2 * inv_iterations * n + m * m
    return m * m * n + 2 * inv_iterations * m ** 3 + n_iter * per_iter


class RingEngine:
    """Fixed-point protocol operations for one party."""

    def __init__(self, rt: PartyRuntime, setting: SecuritySetting):
        if rt.n_parties != setting.n_parties:
            raise UsageError("runtime and security setting disagree on the party count")
        self.rt = rt
        self.setting = setting
        self.fxp = rt.fxp

    # -- local helpers ----------------------------------------------------

    def _own(self, values: np.ndarray) -> ShareMatrix:
        return ShareMatrix(owner=self.rt.pid, values=np.asarray(values, dtype=np.uint64))

    def _check(self, *tensors: ShareMatrix):
        for t in tensors:
            if not t.is_ring:
                raise UsageError("ring engine got a real-domain share")
            if t.owner != self.rt.pid:
                raise ProtocolError(
                    f"party {self.rt.pid} touched shares owned by party {t.owner}"
                )

    def zeros(self, shape) -> ShareMatrix:
        return self._own(np.zeros(shape, dtype=np.uint64))

    def add(self, x: ShareMatrix, y: ShareMatrix) -> ShareMatrix:
        self._check(x, y)
        return self._own(ring_add(x.values, y.values, self.fxp))

    def sub(self, x: ShareMatrix, y: ShareMatrix) -> ShareMatrix:
        self._check(x, y)
        return self._own(ring_sub(x.values, y.values, self.fxp))

    def neg(self, x: ShareMatrix) -> ShareMatrix:
        self._check(x)
        return self._own(ring_neg(x.values, self.fxp))

    def transpose(self, x: ShareMatrix) -> ShareMatrix:
        self._check(x)
        return self._own(x.values.T)

    def add_public(self, x: ShareMatrix, value, scale_bits: Optional[int] = None) -> ShareMatrix:
        """Adds a public constant; only party 0 shifts its share."""
        self._check(x)
        if self.rt.pid != 0:
            return x
        bits = self.fxp.frac_bits if scale_bits is None else scale_bits
        cfg = FixedPointConfig(self.fxp.ring_bits, bits)
        return self._own(ring_add(x.values, encode_fixed(value, cfg), self.fxp))

    def mul_public(self, x: ShareMatrix, value, scale_bits: Optional[int] = None) -> ShareMatrix:
        """Multiplies by a public constant encoded at scale_bits; the result
        carries the sum of both scales and usually needs a truncate."""
        self._check(x)
        bits = self.fxp.frac_bits if scale_bits is None else scale_bits
        cfg = FixedPointConfig(self.fxp.ring_bits, bits)
        return self._own(ring_mul(x.values, encode_fixed(value, cfg), self.fxp))

    def scale_int(self, x: ShareMatrix, k: int) -> ShareMatrix:
        """Exact multiplication by a small public integer (no scale change)."""
        self._check(x)
        if k < 0:
            return self.neg(self.scale_int(x, -k))
        return self._own(ring_mul(x.values, np.uint64(k), self.fxp))

    # -- interactive primitives -------------------------------------------

    def _reshare_values(self, values: np.ndarray, tag: str) -> np.ndarray:
        rt = self.rt
        r = random_ring_elements(rt.rng, values.shape, self.fxp)
        rt.send(rt.succ, tag, r)
        r_prev = rt.recv(rt.pred, tag, np.uint64, values.shape)
        return ring_add(ring_sub(values, r, self.fxp), r_prev, self.fxp)

    def reshare(self, x: ShareMatrix) -> ShareMatrix:
        self._check(x)
        self.rt.counters.bump("reshare")
        tag = self.rt.next_tag("reshare")
        return self._own(self._reshare_values(x.values, tag))

    def _mul_beaver_values(self, xv: np.ndarray, yv: np.ndarray, tag: str) -> np.ndarray:
        rt = self.rt
        if rt.triples_ring is None:
            raise ProtocolError("no ring triples were dealt to this party")
        a, b, c = rt.triples_ring.consume(xv.size, xv.shape)
        rt.counters.bump("triples_ring_consumed", xv.size)
        other = 1 - rt.pid
        d_loc = ring_sub(xv, a, self.fxp)
        e_loc = ring_sub(yv, b, self.fxp)
        rt.send(other, tag + "/d", d_loc)
        rt.send(other, tag + "/e", e_loc)
        d = ring_add(d_loc, rt.recv(other, tag + "/d", np.uint64, xv.shape), self.fxp)
        e = ring_add(e_loc, rt.recv(other, tag + "/e", np.uint64, xv.shape), self.fxp)
        rt.audit.record("beaver_d", xv.size)
        rt.audit.record("beaver_e", xv.size)
        # x*y = (a+d)(b+e) = c + e*a + d*b + d*e, with the public d*e term
        # folded in once by party 0
        w = ring_add(c, ring_mul(e, a, self.fxp), self.fxp)
        w = ring_add(w, ring_mul(d, b, self.fxp), self.fxp)
        if rt.pid == 0:
            w = ring_add(w, ring_mul(e, d, self.fxp), self.fxp)
        return w

    def _mul_3p_values(self, xv: np.ndarray, yv: np.ndarray, tag: str) -> np.ndarray:
        rt = self.rt
        x1 = self._reshare_values(xv, tag + "/rx")
        y1 = self._reshare_values(yv, tag + "/ry")
        rt.send(rt.succ, tag + "/fx", x1)
        x_prev = rt.recv(rt.pred, tag + "/fx", np.uint64, xv.shape)
        rt.send(rt.succ, tag + "/fy", y1)
        y_prev = rt.recv(rt.pred, tag + "/fy", np.uint64, yv.shape)
        w = ring_add(
            ring_mul(x1, y1, self.fxp),
            ring_add(ring_mul(x1, y_prev, self.fxp), ring_mul(x_prev, y1, self.fxp), self.fxp),
            self.fxp,
        )
        return self._reshare_values(w, tag + "/rw")

    def _mul_values(self, xv: np.ndarray, yv: np.ndarray) -> np.ndarray:
        self.rt.counters.bump("mul")
        tag = self.rt.next_tag("mul")
        if self.setting.variant == "beaver-2p":
            return self._mul_beaver_values(xv, yv, tag)
        return self._mul_3p_values(xv, yv, tag)

    def mul(self, x: ShareMatrix, y: ShareMatrix) -> ShareMatrix:
        """Elementwise product of two shared tensors; the result carries
        doubled fractional bits (truncate to rescale)."""
        self._check(x, y)
        if x.values.shape != y.values.shape:
            raise UsageError(f"shape mismatch {x.values.shape} vs {y.values.shape}")
        return self._own(self._mul_values(x.values, y.values))

    def mul_with_triple(self, x: ShareMatrix, y: ShareMatrix, triple: BeaverTriple) -> ShareMatrix:
        """Single multiplication driven by an explicit triple (2-party only).

        Rejects a triple that has already been used.
        """
        self._check(x, y)
        if self.setting.variant != "beaver-2p":
            raise UsageError("explicit triples only exist in the 2-party setting")
        if triple.consumed:
            raise ProtocolError("Beaver triple reuse rejected: this triple was already consumed")
        triple.consumed = True
        rt = self.rt
        rt.counters.bump("mul")
        rt.counters.bump("triples_ring_consumed", int(np.asarray(x.values).size))
        tag = rt.next_tag("mul")
        other = 1 - rt.pid
        d_loc = ring_sub(x.values, triple.a, self.fxp)
        e_loc = ring_sub(y.values, triple.b, self.fxp)
        rt.send(other, tag + "/d", d_loc)
        rt.send(other, tag + "/e", e_loc)
        d = ring_add(d_loc, rt.recv(other, tag + "/d", np.uint64, np.shape(x.values)), self.fxp)
        e = ring_add(e_loc, rt.recv(other, tag + "/e", np.uint64, np.shape(y.values)), self.fxp)
        rt.audit.record("beaver_d", int(np.asarray(x.values).size))
        rt.audit.record("beaver_e", int(np.asarray(y.values).size))
        w = ring_add(triple.c, ring_mul(e, triple.a, self.fxp), self.fxp)
        w = ring_add(w, ring_mul(d, triple.b, self.fxp), self.fxp)
        if rt.pid == 0:
            w = ring_add(w, ring_mul(e, d, self.fxp), self.fxp)
        return self._own(w)

    def matmul(self, x: ShareMatrix, y: ShareMatrix, rescale: bool = True) -> ShareMatrix:
        """Shared matrix product in one multiplication invocation.

        Scalar product terms are multiplied elementwise (one triple each in
        the 2-party setting), summed locally at doubled scale, then truncated
        once, which keeps the rounding error at one step per output entry.
        """
        self._check(x, y)
        xv, yv = x.values, y.values
        if xv.ndim == 1:
            xv = xv.reshape(1, -1)
        if yv.ndim == 1:
            yv2 = yv.reshape(-1, 1)
        else:
            yv2 = yv
        p, q = xv.shape
        q2, r = yv2.shape
        if q != q2:
            raise UsageError(f"inner dimensions differ: {q} vs {q2}")
        brd_x = np.broadcast_to(xv[:, :, None], (p, q, r))
        brd_y = np.broadcast_to(yv2[None, :, :], (p, q, r))
        prod = self._mul_values(np.ascontiguousarray(brd_x), np.ascontiguousarray(brd_y))
        acc = self._own(prod.sum(axis=1, dtype=np.uint64))
        if x.values.ndim == 1:
            acc = self._own(acc.values.reshape(-1)[0] if r == 1 else acc.values.reshape(r))
        elif y.values.ndim == 1:
            acc = self._own(acc.values.reshape(p))
        if rescale:
            acc = self.truncate(acc)
        return acc

    def truncate(self, x: ShareMatrix, bits: Optional[int] = None) -> ShareMatrix:
        """Rescales by 2**-bits (default one fixed-point scale)."""
        self._check(x)
        rt = self.rt
        rt.counters.bump("truncate")
        bits_u = np.uint64(self.fxp.frac_bits if bits is None else bits)
        if self.setting.n_parties == 2:
            vals = x.values
        else:
            tag = self.rt.next_tag("trunc")
            vals = self._reshare_values(x.values, tag + "/r")
            if rt.pid == 2:
                rt.send(0, tag + "/c", vals)
                return self._own(np.zeros_like(vals))
            if rt.pid == 0:
                vals = ring_add(vals, rt.recv(2, tag + "/c", np.uint64, vals.shape), self.fxp)
        with np.errstate(over="ignore"):
            if rt.pid == 0:
                out = vals >> bits_u
            else:
                out = ring_neg(ring_neg(vals, self.fxp) >> bits_u, self.fxp)
        return self._own(ring_wrap(out, self.fxp))

    def div_pow2(self, x: ShareMatrix, k: int) -> ShareMatrix:
        """Exact-scale division by 2**k (a truncation by k bits)."""
        if k == 0:
            return x
        return self.truncate(x, bits=k)

    def reveal(self, x: ShareMatrix, purpose: str, mode: str = "broadcast", combiner: int = 0) -> Optional[np.ndarray]:
        """Opens a shared value; every reveal lands in the audit log."""
        self._check(x)
        rt = self.rt
        rt.counters.bump("reveal")
        rt.audit.record(purpose, int(np.asarray(x.values).size))
        tag = rt.next_tag("reveal")
        others = [p for p in range(rt.n_parties) if p != rt.pid]
        if mode == "broadcast":
            for p in others:
                rt.send(p, tag, x.values)
            total = x.values
            for p in others:
                total = ring_add(total, rt.recv(p, tag, np.uint64, np.shape(x.values)), self.fxp)
            return total
        if mode == "combine":
            if rt.pid != combiner:
                rt.send(combiner, tag, x.values)
                return None
            total = x.values
            for p in others:
                total = ring_add(total, rt.recv(p, tag, np.uint64, np.shape(x.values)), self.fxp)
            return total
        raise UsageError(f"unknown reveal mode {mode!r}")


class RealEngine:
    """Real-domain protocol operations for one party."""

    def __init__(self, rt: PartyRuntime, setting: SecuritySetting):
        if rt.n_parties != setting.n_parties:
            raise UsageError("runtime and security setting disagree on the party count")
        self.rt = rt
        self.setting = setting

    def _own(self, values, value_bound, mask_bound) -> ShareMatrix:
        return ShareMatrix(
            owner=self.rt.pid,
            values=np.asarray(values, dtype=np.float64),
            mask_bound=mask_bound,
            value_bound=value_bound,
        )

    def _check(self, *tensors: ShareMatrix):
        for t in tensors:
            if t.is_ring:
                raise UsageError("real engine got a ring-domain share")
            if t.owner != self.rt.pid:
                raise ProtocolError(
                    f"party {self.rt.pid} touched shares owned by party {t.owner}"
                )
            if t.value_bound is None:
                raise UsageError("real-domain shares need a value_bound hint")

    def zeros(self, shape) -> ShareMatrix:
        return self._own(np.zeros(shape), value_bound=1.0, mask_bound=0.0)

    def add(self, x: ShareMatrix, y: ShareMatrix) -> ShareMatrix:
        self._check(x, y)
        return self._own(
            x.values + y.values,
            value_bound=np.add(x.value_bound, y.value_bound),
            mask_bound=np.add(x.mask_bound, y.mask_bound),
        )

    def sub(self, x: ShareMatrix, y: ShareMatrix) -> ShareMatrix:
        self._check(x, y)
        return self._own(
            x.values - y.values,
            value_bound=np.add(x.value_bound, y.value_bound),
            mask_bound=np.add(x.mask_bound, y.mask_bound),
        )

    def neg(self, x: ShareMatrix) -> ShareMatrix:
        self._check(x)
        return self._own(-x.values, x.value_bound, x.mask_bound)

    def transpose(self, x: ShareMatrix) -> ShareMatrix:
        self._check(x)
        vb = x.value_bound.T if isinstance(x.value_bound, np.ndarray) and x.value_bound.ndim == 2 else x.value_bound
        mb = x.mask_bound.T if isinstance(x.mask_bound, np.ndarray) and x.mask_bound.ndim == 2 else x.mask_bound
        return self._own(x.values.T, vb, mb)

    def add_public(self, x: ShareMatrix, value) -> ShareMatrix:
        self._check(x)
        bound = np.max(np.abs(value))
        vals = x.values + value if self.rt.pid == 0 else x.values
        return self._own(vals, np.add(x.value_bound, bound), np.add(x.mask_bound, bound))

    def mul_public(self, x: ShareMatrix, value) -> ShareMatrix:
        self._check(x)
        mag = np.abs(value)
        return self._own(x.values * value, np.multiply(x.value_bound, mag), np.multiply(x.mask_bound, mag))

    def scale_int(self, x: ShareMatrix, k: int) -> ShareMatrix:
        return self.mul_public(x, float(k))

    def div_pow2(self, x: ShareMatrix, k: int) -> ShareMatrix:
        return self.mul_public(x, 2.0 ** -k)

    def with_value_bound(self, x: ShareMatrix, value_bound) -> ShareMatrix:
        """Overrides the public magnitude hint (callers document why the
        tighter bound holds; it controls mask sizing only)."""
        self._check(x)
        return self._own(x.values, value_bound, x.mask_bound)

    # -- interactive primitives -------------------------------------------

    def _uniform(self, scale, shape) -> np.ndarray:
        return self.rt.rng.uniform(-1.0, 1.0, shape) * scale

    def _reshare_values(self, values, mask_scale, tag) -> np.ndarray:
        rt = self.rt
        r = self._uniform(mask_scale, values.shape)
        rt.send(rt.succ, tag, r)
        r_prev = rt.recv(rt.pred, tag, np.float64, values.shape)
        return values - r + r_prev

    def reshare(self, x: ShareMatrix) -> ShareMatrix:
        self._check(x)
        self.rt.counters.bump("reshare")
        tag = self.rt.next_tag("reshare")
        scale = KAPPA * pow2_at_least(x.value_bound)
        vals = self._reshare_values(x.values, scale, tag)
        return self._own(vals, x.value_bound, np.add(x.mask_bound, 2.0 * scale))

    def shrink_reshare(self, x: ShareMatrix, mask_bound, value_bound=None) -> ShareMatrix:
        """Re-randomizes with a cascade so every share lands in a small window.

        Party 0 keeps a fresh mask and forwards the remainder; each next party
        folds in its share and a fresh mask; the last party holds the value
        minus all masks. n-1 messages. The last party sees the value hidden
        by the sum of the masks only, which is the documented magnitude
        trade-off of this stage.
        """
        self._check(x)
        rt = self.rt
        rt.counters.bump("shrink")
        tag = rt.next_tag("shrink")
        vb = x.value_bound if value_bound is None else value_bound
        scale = np.broadcast_to(np.asarray(mask_bound, dtype=np.float64), x.values.shape)
        if rt.pid == 0:
            rho = self._uniform(scale, x.values.shape)
            rt.send(1, tag, x.values - rho)
            vals = rho
        else:
            acc = rt.recv(rt.pid - 1, tag, np.float64, x.values.shape) + x.values
            if rt.pid == rt.n_parties - 1:
                vals = acc
            else:
                rho = self._uniform(scale, x.values.shape)
                rt.send(rt.pid + 1, tag, acc - rho)
                vals = rho
        mb = np.asarray(mask_bound, dtype=np.float64) * (rt.n_parties - 1) + np.asarray(vb, dtype=np.float64)
        return self._own(vals, vb, mb)

    def _mul_beaver_values(self, xv, yv, sx, sy, tag):
        rt = self.rt
        if rt.triples_real is None:
            raise ProtocolError("no real triples were dealt to this party")
        a, b, c = rt.triples_real.consume(xv.size, xv.shape)
        rt.counters.bump("triples_real_consumed", xv.size)
        a = a * (KAPPA * sx)
        b = b * (KAPPA * sy)
        c = c * (KAPPA * sx) * (KAPPA * sy)
        other = 1 - rt.pid
        d_loc = xv - a
        e_loc = yv - b
        rt.send(other, tag + "/d", d_loc)
        rt.send(other, tag + "/e", e_loc)
        d = d_loc + rt.recv(other, tag + "/d", np.float64, xv.shape)
        e = e_loc + rt.recv(other, tag + "/e", np.float64, yv.shape)
        rt.audit.record("beaver_d", xv.size)
        rt.audit.record("beaver_e", yv.size)
        w = c + e * a + d * b
        if rt.pid == 0:
            w = w + e * d
        return w

    def _mul_3p_values(self, xv, yv, sx, sy, tag):
        rt = self.rt
        x1 = self._reshare_values(xv, KAPPA * sx, tag + "/rx")
        y1 = self._reshare_values(yv, KAPPA * sy, tag + "/ry")
        rt.send(rt.succ, tag + "/fx", x1)
        x_prev = rt.recv(rt.pred, tag + "/fx", np.float64, xv.shape)
        rt.send(rt.succ, tag + "/fy", y1)
        y_prev = rt.recv(rt.pred, tag + "/fy", np.float64, yv.shape)
        return x1 * y1 + x1 * y_prev + x_prev * y1

    def _mul_shared(self, x: ShareMatrix, y: ShareMatrix, count_invocation: bool = True):
        """Raw product values plus bound metadata (before any summing)."""
        if count_invocation:
            self.rt.counters.bump("mul")
        tag = self.rt.next_tag("mul")
        sx = pow2_at_least(np.broadcast_to(np.asarray(x.value_bound, dtype=np.float64), x.values.shape))
        sy = pow2_at_least(np.broadcast_to(np.asarray(y.value_bound, dtype=np.float64), y.values.shape))
        vb = sx * sy
        if self.setting.variant == "beaver-2p":
            vals = self._mul_beaver_values(x.values, y.values, sx, sy, tag)
            mb = 4.0 * KAPPA * KAPPA * vb
            return vals, vb, mb, tag
        vals = self._mul_3p_values(x.values, y.values, sx, sy, tag)
        mb = 16.0 * KAPPA * KAPPA * vb
        return vals, vb, mb, tag

    def mul(self, x: ShareMatrix, y: ShareMatrix) -> ShareMatrix:
        """Elementwise product; the 3-party variant ends with a shrink cascade
        so share magnitudes stay near the value scale."""
        self._check(x, y)
        if x.values.shape != y.values.shape:
            raise UsageError(f"shape mismatch {x.values.shape} vs {y.values.shape}")
        vals, vb, mb, tag = self._mul_shared(x, y)
        out = self._own(vals, vb, mb)
        if self.setting.variant == "reshare-3p":
            out = self._shrink_after_mul(out, tag)
        return out

    def _shrink_after_mul(self, out: ShareMatrix, tag: str) -> ShareMatrix:
        rt = self.rt
        scale = KAPPA * pow2_at_least(out.value_bound)
        scale = np.broadcast_to(scale, out.values.shape)
        if rt.pid == 0:
            rho = self._uniform(scale, out.values.shape)
            rt.send(1, tag + "/s", out.values - rho)
            vals = rho
        else:
            acc = rt.recv(rt.pid - 1, tag + "/s", np.float64, out.values.shape) + out.values
            if rt.pid == rt.n_parties - 1:
                vals = acc
            else:
                rho = self._uniform(scale, out.values.shape)
                rt.send(rt.pid + 1, tag + "/s", acc - rho)
                vals = rho
        mb = (rt.n_parties - 1) * scale + np.asarray(out.value_bound, dtype=np.float64)
        return self._own(vals, out.value_bound, mb)

    def matmul(self, x: ShareMatrix, y: ShareMatrix) -> ShareMatrix:
        """Shared matrix product; one multiplication invocation plus a local
        sum over the inner axis."""
        self._check(x, y)
        xv, yv = x.values, y.values
        x1d, y1d = xv.ndim == 1, yv.ndim == 1
        if x1d:
            xv = xv.reshape(1, -1)
        yv2 = yv.reshape(-1, 1) if y1d else yv
        p, q = xv.shape
        q2, r = yv2.shape
        if q != q2:
            raise UsageError(f"inner dimensions differ: {q} vs {q2}")
        bx = np.broadcast_to(np.asarray(x.value_bound, dtype=np.float64), x.values.shape)
        by = np.broadcast_to(np.asarray(y.value_bound, dtype=np.float64), y.values.shape)
        bx = bx.reshape(1, -1) if x1d else bx
        by = by.reshape(-1, 1) if y1d else by
        big_x = self._own(np.ascontiguousarray(np.broadcast_to(xv[:, :, None], (p, q, r))).reshape(p * q, r),
                          np.ascontiguousarray(np.broadcast_to(bx[:, :, None], (p, q, r))).reshape(p * q, r),
                          0.0)
        big_y = self._own(np.ascontiguousarray(np.broadcast_to(yv2[None, :, :], (p, q, r))).reshape(p * q, r),
                          np.ascontiguousarray(np.broadcast_to(by[None, :, :], (p, q, r))).reshape(p * q, r),
                          0.0)
        vals, vb, mb, tag = self._mul_shared(big_x, big_y)
        out = self._own(vals, vb, mb)
        if self.setting.variant == "reshare-3p":
            out = self._shrink_after_mul(out, tag)
        vals3 = out.values.reshape(p, q, r).sum(axis=1)
        vb3 = np.broadcast_to(np.asarray(out.value_bound, dtype=np.float64), (p * q, r)).reshape(p, q, r).sum(axis=1)
        mb3 = np.broadcast_to(np.asarray(out.mask_bound, dtype=np.float64), (p * q, r)).reshape(p, q, r).sum(axis=1)
        if x1d and y1d:
            vals3, vb3, mb3 = vals3.reshape(()), vb3.reshape(()), mb3.reshape(())
        elif x1d:
            vals3, vb3, mb3 = vals3.reshape(r), vb3.reshape(r), mb3.reshape(r)
        elif y1d:
            vals3, vb3, mb3 = vals3.reshape(p), vb3.reshape(p), mb3.reshape(p)
        return self._own(vals3, vb3, mb3)

    def share_local(self, values: np.ndarray, value_bound) -> List[ShareMatrix]:
        """Every party secret-shares its own local array to all parties.

        Returns one shared tensor per source party (the entry at index i is
        this party's share of party i's array). Scale hints travel first as
        public power-of-two arrays: 2*n*(n-1) messages per invocation.
        """
        rt = self.rt
        rt.counters.bump("sharein")
        tag = rt.next_tag("sharein")
        values = np.asarray(values, dtype=np.float64)
        my_bound = pow2_at_least(np.broadcast_to(np.asarray(value_bound, dtype=np.float64), values.shape))
        others = [p for p in range(rt.n_parties) if p != rt.pid]
        for p in others:
            rt.send(p, f"{tag}/scale{rt.pid}", my_bound)
        bounds = {rt.pid: my_bound}
        for p in others:
            bounds[p] = rt.recv(p, f"{tag}/scale{p}", np.float64, values.shape)
        mask_scale = KAPPA * my_bound
        remainder = values.copy()
        for p in others:
            piece = self._uniform(mask_scale, values.shape)
            remainder -= piece
            rt.send(p, f"{tag}/share{rt.pid}", piece)
        out: List[Optional[ShareMatrix]] = [None] * rt.n_parties
        out[rt.pid] = self._own(remainder, bounds[rt.pid], (rt.n_parties - 1) * mask_scale + bounds[rt.pid])
        for p in others:
            vals = rt.recv(p, f"{tag}/share{p}", np.float64, values.shape)
            out[p] = self._own(vals, bounds[p], KAPPA * bounds[p])
        return out  # type: ignore[return-value]

    def reveal(self, x: ShareMatrix, purpose: str, mode: str = "broadcast", combiner: int = 0) -> Optional[np.ndarray]:
        self._check(x)
        rt = self.rt
        rt.counters.bump("reveal")
        rt.audit.record(purpose, int(np.asarray(x.values).size))
        tag = rt.next_tag("reveal")
        others = [p for p in range(rt.n_parties) if p != rt.pid]
        if mode == "broadcast":
            for p in others:
                rt.send(p, tag, x.values)
            total = np.array(x.values, dtype=np.float64, copy=True)
            for p in others:
                total = total + rt.recv(p, tag, np.float64, np.shape(x.values))
            return total
        if mode == "combine":
            if rt.pid != combiner:
                rt.send(combiner, tag, x.values)
                return None
            total = np.array(x.values, dtype=np.float64, copy=True)
            for p in others:
                total = total + rt.recv(p, tag, np.float64, np.shape(x.values))
            return total
        raise UsageError(f"unknown reveal mode {mode!r}")
