"""Iterative matrix and elementwise inversion over shares.

Division is not a native shared operation, so inverses come from a Newton
iteration that only needs additions and multiplications:

    X_{s+1} = 2 X_s - X_s M_s        (converges to inv(M_0) / c -> inv(B))
    M_{s+1} = 2 M_s - M_s M_s        (converges to the identity)

with X_0 = I/c and M_0 = B/c for a public scale c >= ||B||. The residual
I - X_s B equals (I - B/c)**(2**s) exactly, which is the quadratic
convergence the tests pin down. Choosing c as a power of two makes the
initial scaling exact in both domains (a plain shift in the ring, a lossless
multiplication on floats).

Three ways to pick c:
- "trace": open the trace of B and round it up to a power of two. For a
  positive definite B the trace dominates every eigenvalue, so ||B/c|| < 1.
  The trace becomes public; callers label the reveal for the audit log.
- "manual": a caller-supplied power of two, nothing is revealed.
- "bound": derived from the public magnitude metadata that real-domain
  shares already carry; nothing new is revealed. Elementwise inversion
  defaults to this.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ProtocolError, UsageError
from .mpc import KAPPA, RealEngine, RingEngine, pow2_at_least
from .sharing import ShareMatrix

TRACE_PURPOSE = "hessian_trace"


@dataclass(frozen=True)
class InversionConfig:
    """How shared inverses are computed.

    iterations: Newton steps; 24 drives the residual of any matrix with
        condition number under cond_bound to the quantization floor.
    mode: "trace", "manual" or "bound" (see module docstring).
    manual_c: the public scale for mode="manual"; must be a power of two.
    cond_bound: public cap on the condition number, used only to size the
        magnitude hints of real-domain intermediates.
    """

    iterations: int = 24
    mode: str = "trace"
    manual_c: Optional[float] = None
    cond_bound: float = 128.0

    def __post_init__(self):
        if self.iterations < 1:
            raise UsageError("inversion needs at least one iteration")
        if self.mode not in ("trace", "manual", "bound"):
            raise UsageError(f"unknown inversion mode {self.mode!r}")
        if self.mode == "manual":
            if self.manual_c is None or self.manual_c <= 0:
                raise UsageError("manual mode needs a positive manual_c")
            if 2.0 ** round(math.log2(self.manual_c)) != self.manual_c:
                raise UsageError("manual_c must be a power of two")


def pow2_ceil_scalar(x: float) -> float:
    if x <= 0:
        raise UsageError("scale must come from a positive value")
    return float(2.0 ** math.ceil(math.log2(x)))


def nardi_invert_plain(
    B: np.ndarray,
    c: Optional[float] = None,
    iterations: int = 24,
    collect_residuals: bool = False,
):
    """Plain float64 reference of the shared iteration, same update order."""
    B = np.asarray(B, dtype=np.float64)
    m = B.shape[0]
    if c is None:
        c = pow2_ceil_scalar(float(np.trace(B)))
    X = np.eye(m) / c
    M = B / c
    residuals: List[float] = []
    for _ in range(iterations):
        XM = X @ M
        MM = M @ M
        X = 2.0 * X - XM
        M = 2.0 * M - MM
        if collect_residuals:
            residuals.append(float(np.max(np.abs(np.eye(m) - X @ B))))
    if collect_residuals:
        return X, residuals
    return X


def _shared_trace_scale(eng, B: ShareMatrix, decode) -> float:
    """Opens the trace (audit-labelled) and rounds it up to a power of two."""
    diag = np.ascontiguousarray(np.diagonal(B.values).copy())
    if B.is_ring:
        # the sum of diagonal shares is a share of the trace
        tr_share = ShareMatrix(owner=B.owner, values=np.asarray([np.sum(diag, dtype=np.uint64)], dtype=np.uint64))
    else:
        vb = np.broadcast_to(np.asarray(B.value_bound, dtype=np.float64), B.values.shape)
        tr_share = ShareMatrix(
            owner=B.owner,
            values=np.asarray([float(np.sum(diag))]),
            mask_bound=float(np.sum(np.broadcast_to(np.asarray(B.mask_bound, dtype=np.float64), B.values.shape).diagonal())),
            value_bound=float(np.sum(vb.diagonal())),
        )
    opened = eng.reveal(tr_share, purpose=TRACE_PURPOSE)
    trace = float(decode(opened)[0])
    if trace <= 0:
        raise ProtocolError(f"trace must be positive for this inversion, got {trace}")
    return pow2_ceil_scalar(trace)


def invert_spd_ring(eng: RingEngine, B: ShareMatrix, cfg: InversionConfig) -> ShareMatrix:
    """Inverse of a shared symmetric positive definite fixed-point matrix."""
    from .sharing import decode_fixed

    if cfg.mode == "manual":
        c = cfg.manual_c
    elif cfg.mode == "trace":
        c = _shared_trace_scale(eng, B, lambda v: decode_fixed(v, eng.fxp))
    else:
        raise UsageError("ring inversion supports trace or manual scaling")
    k = int(round(math.log2(c)))
    if k >= eng.fxp.frac_bits:
        raise UsageError(
            f"scale 2**{k} cannot be represented with {eng.fxp.frac_bits} "
            "fractional bits; standardize the data or raise frac_bits"
        )
    m = B.rows
    M = eng.div_pow2(B, k) if k > 0 else B
    X = eng.add_public(eng.zeros((m, m)), np.eye(m) / c)
    for _ in range(cfg.iterations):
        XM = eng.matmul(X, M)
        MM = eng.matmul(M, M)
        X = eng.sub(eng.scale_int(X, 2), XM)
        M = eng.sub(eng.scale_int(M, 2), MM)
    return X


def invert_spd_real(eng: RealEngine, B: ShareMatrix, cfg: InversionConfig) -> ShareMatrix:
    """Inverse of a shared symmetric positive definite float matrix."""
    if cfg.mode == "manual":
        c = cfg.manual_c
    elif cfg.mode == "trace":
        c = _shared_trace_scale(eng, B, lambda v: np.asarray(v))
    else:
        raise UsageError("matrix inversion supports trace or manual scaling")
    m = B.rows
    # entries of inv(B) are at most cond * m / trace-ish; the hint only has
    # to cover them, correctness never depends on it
    vb_x = pow2_at_least(2.0 * cfg.cond_bound * m / c)
    M = eng.with_value_bound(eng.mul_public(B, 1.0 / c), 1.0)
    X = eng.with_value_bound(eng.add_public(eng.zeros((m, m)), np.eye(m) / c), vb_x)
    for _ in range(cfg.iterations):
        XM = eng.with_value_bound(eng.matmul(X, M), vb_x)
        MM = eng.with_value_bound(eng.matmul(M, M), 1.0)
        X = eng.with_value_bound(eng.sub(eng.scale_int(X, 2), XM), vb_x)
        M = eng.with_value_bound(eng.sub(eng.scale_int(M, 2), MM), 1.0)
        # the doubling recursion doubles share magnitudes each step; left
        # alone they reach 2**iterations times the value scale and the opened
        # differences of later multiplications lose their low bits to float
        # cancellation. Re-randomizing X and M keeps shares near the masks.
        X = eng.shrink_reshare(X, KAPPA * vb_x)
        M = eng.shrink_reshare(M, KAPPA)
    return X


def invert_negdef_shared(eng, B: ShareMatrix, cfg: InversionConfig) -> ShareMatrix:
    """Inverse of a shared negative definite matrix (inverts the negation)."""
    neg = eng.neg(B)
    if B.is_ring:
        inv = invert_spd_ring(eng, neg, cfg)
    else:
        inv = invert_spd_real(eng, neg, cfg)
    return eng.neg(inv)


def invert_elementwise_real(
    eng: RealEngine,
    w: ShareMatrix,
    cfg: InversionConfig,
) -> ShareMatrix:
    """Elementwise 1/w for a shared positive array, nothing revealed.

    The per-element scale comes from the magnitude hints the shares already
    carry ("bound" mode): c = 2 * hint >= w elementwise, while w > hint/16
    would only fail if the hints were broken, so w/c stays well inside the
    convergence region and 24 doubling steps reach float accuracy.
    Entries must be positive (this backs the reciprocal of 1 + e**z, which
    always is); a nonpositive entry makes the iteration diverge instead of
    leaking anything.
    """
    if cfg.mode == "manual":
        c = np.broadcast_to(np.asarray(cfg.manual_c, dtype=np.float64), w.values.shape)
    elif cfg.mode == "bound":
        c = 2.0 * pow2_at_least(np.broadcast_to(np.asarray(w.value_bound, dtype=np.float64), w.values.shape))
    else:
        raise UsageError("elementwise inversion supports bound or manual scaling")
    vb_x = 32.0 / c  # 1/w <= 32/c once c <= 32*w, and both are powers of two
    M = eng.with_value_bound(eng.mul_public(w, 1.0 / c), 1.0)
    X = eng.with_value_bound(eng.add_public(eng.zeros(w.values.shape), 1.0 / c), vb_x)
    for _ in range(cfg.iterations):
        XM = eng.with_value_bound(eng.mul(X, M), vb_x)
        MM = eng.with_value_bound(eng.mul(M, M), 1.0)
        X = eng.with_value_bound(eng.sub(eng.scale_int(X, 2), XM), vb_x)
        M = eng.with_value_bound(eng.sub(eng.scale_int(M, 2), MM), 1.0)
        # same share-magnitude control as the matrix version: without it the
        # doubling recursion grows shares by 2**iterations and float
        # cancellation eats the answer.
        X = eng.shrink_reshare(X, KAPPA * pow2_at_least(vb_x))
        M = eng.shrink_reshare(M, KAPPA)
    return X
