"""Sigmoid evaluation over shares, exact and polynomial.

Two shared strategies back the two trainers:

Exact (real domain): additivity of exponents turns sharing into a product,
    e**z = e**(z_0) * ... * e**(z_{n-1}),
so each party exponentiates its own share locally, the parties multiply the
resulting shared factors, and sigma(z) = 1 - 1/(1 + e**z) finishes with an
elementwise Newton reciprocal and a public subtraction (no extra
multiplication). Before exponentiating, the z shares are re-randomized into
a small window so every local exponent stays well inside double range. The
power-of-two magnitude hints exchanged when the exponent factors are shared
reveal the coarse size of each party's e**(z_i); that is the documented
masking/overflow trade-off of this stage and the reason the window is kept
small.

Polynomial (fixed-point ring): an odd least-squares polynomial g_d on
[-8, 8], evaluated at x = z/8,

    g_d(z) = 0.5 + sum_i c_i * (z/8)**(2i+1),

with published coefficient sets for degrees 3, 5 and 7. Odd powers cost one
shared multiplication each ((d+1)/2 per call); coefficient products are
public, accumulated at doubled fractional scale and truncated once. Higher
degree means smaller worst-case error but more multiplications. The
polynomials are only accurate on [-8, 8] and are not monotone all the way
to the ends: the first stationary point sits near |z| = 5.6 (degree 3),
4.43 (degree 5), 4.05 (degree 7).
"""

from typing import Dict, Tuple

import numpy as np

from .errors import DataError, UsageError
from .linalg import InversionConfig, invert_elementwise_real
from .mpc import RealEngine, RingEngine, pow2_at_least
from .sharing import ShareMatrix

POLY_COEFFS: Dict[int, Tuple[float, ...]] = {
    3: (1.20096, -0.81562),
    5: (1.53048, -2.3533056, 1.3511295),
    7: (1.73496, -4.19407, 5.43402, -2.50739),
}

Z_BOUND = 64.0
EXP_SHARE_WINDOW = 32.0
EXP_GUARD = 700.0


def sigmoid_plain(z):
    """Numerically stable sigmoid on plain floats."""
    z = np.asarray(z, dtype=np.float64)
    decay = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + decay), decay / (1.0 + decay))


def sigmoid_poly_plain(z, degree: int = 3):
    """Plain-float mirror of the shared polynomial approximation."""
    if degree not in POLY_COEFFS:
        raise UsageError(f"polynomial degree must be one of {sorted(POLY_COEFFS)}, got {degree}")
    z = np.asarray(z, dtype=np.float64)
    x = z / 8.0
    # odd powers come from explicit products (the same chain the shared
    # evaluation uses) and the odd part is accumulated separately: products
    # and sums commute with negation exactly in float arithmetic, while
    # numpy's vectorized power does not, so this keeps g(z) + g(-z) within
    # 2 ulp of 1
    x2 = x * x
    odd = np.zeros_like(x)
    power = x
    for coeff in POLY_COEFFS[degree]:
        odd = odd + coeff * power
        power = power * x2
    return 0.5 + odd


def sigmoid_poly_shared(eng: RingEngine, z: ShareMatrix, degree: int = 3) -> ShareMatrix:
    """Polynomial sigmoid on fixed-point ring shares.

    Builds the odd powers of x = z/8 with (d+1)/2 shared multiplications,
    multiplies each by its public coefficient (doubling the fractional
    scale), sums at the doubled scale and truncates once.
    """
    if degree not in POLY_COEFFS:
        raise UsageError(f"polynomial degree must be one of {sorted(POLY_COEFFS)}, got {degree}")
    coeffs = POLY_COEFFS[degree]
    x = eng.div_pow2(z, 3)
    x2 = eng.truncate(eng.mul(x, x))
    powers = {1: x, 3: eng.truncate(eng.mul(x2, x))}
    if degree >= 5:
        powers[5] = eng.truncate(eng.mul(x2, powers[3]))
    if degree >= 7:
        powers[7] = eng.truncate(eng.mul(x2, powers[5]))
    acc = eng.mul_public(powers[1], coeffs[0])
    for i, coeff in enumerate(coeffs[1:], start=1):
        acc = eng.add(acc, eng.mul_public(powers[2 * i + 1], coeff))
    return eng.add_public(eng.truncate(acc), 0.5)


def sigmoid_exact_shared(
    eng: RealEngine,
    z: ShareMatrix,
    value_bound: float = Z_BOUND,
    inv_iterations: int = 24,
) -> ShareMatrix:
    """Exact sigmoid on real shares via exponent factors.

    value_bound is the caller's public promise on |z| (standardized features
    and bounded coefficients keep scores far below the default 64). Shares
    are first re-randomized into a +-(value_bound + masks) window so local
    exponents stay finite; a guard trips if a share would overflow double
    precision, which only happens when the promise was broken badly.
    """
    z = eng.with_value_bound(z, float(value_bound))
    z = eng.shrink_reshare(z, EXP_SHARE_WINDOW)
    if np.any(np.abs(z.values) > EXP_GUARD):
        raise DataError(
            "exponent share out of double range; standardize the features or lower the score bound"
        )
    local = np.exp(z.values)
    factors = eng.share_local(local, pow2_at_least(local))
    prod = factors[0]
    for factor in factors[1:]:
        prod = eng.mul(prod, factor)
    w = eng.add_public(prod, 1.0)
    cfg = InversionConfig(iterations=inv_iterations, mode="bound")
    w_inv = invert_elementwise_real(eng, w, cfg)
    # sigma = 1 - 1/(1 + e**z): a public subtraction, and the result is a
    # probability, so the magnitude hint resets to 1.
    return eng.with_value_bound(eng.add_public(eng.neg(w_inv), 1.0), 1.0)
