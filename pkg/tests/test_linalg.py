"""Iterative inversion: plain reference, quadratic decay, shared variants.

Frozen oracle: for B = [[2, 1], [1, 2]] and c = 4 the residual after s
steps is exactly (I - B/4)**(2**s); its spectral radius is 0.75, so after
three steps the largest eigenvalue of the residual is 0.75**8 =
6561/65536 = 0.1001129150390625.
"""

import numpy as np
import pytest

from mpclogreg.errors import UsageError
from mpclogreg.linalg import (
    InversionConfig,
    invert_elementwise_real,
    invert_negdef_shared,
    invert_spd_real,
    invert_spd_ring,
    nardi_invert_plain,
    pow2_ceil_scalar,
)
from mpclogreg.mpc import BEAVER_2P, KAPPA, RESHARE_3P, Dealer, RealEngine, RingEngine
from mpclogreg.runtime import make_runtimes, run_parties
from mpclogreg.sharing import (
    DEFAULT_FIXED_POINT,
    FixedPointConfig,
    reconstruct_fixed,
    reconstruct_real,
    share_fixed,
    share_real,
)
from mpclogreg.transport import Transport


def random_spd(rng, dim, cond):
    """SPD matrix with the requested condition number, unit-ish scale."""
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    eigs = np.geomspace(1.0, cond, dim)
    return (q * eigs) @ q.T


def test_pow2_ceil():
    assert pow2_ceil_scalar(5.0) == 8.0
    assert pow2_ceil_scalar(8.0) == 8.0
    assert pow2_ceil_scalar(0.3) == 0.5
    with pytest.raises(UsageError):
        pow2_ceil_scalar(0.0)


def test_config_validation():
    with pytest.raises(UsageError):
        InversionConfig(iterations=0)
    with pytest.raises(UsageError):
        InversionConfig(mode="magic")
    with pytest.raises(UsageError):
        InversionConfig(mode="manual")
    with pytest.raises(UsageError):
        InversionConfig(mode="manual", manual_c=3.0)
    InversionConfig(mode="manual", manual_c=4.0)


def test_plain_inversion_matches_numpy():
    rng = np.random.default_rng(2)
    for trial in range(20):
        dim = int(rng.integers(2, 9))
        cond = float(rng.uniform(1.5, 100.0))
        B = random_spd(rng, dim, cond)
        X = nardi_invert_plain(B)
        assert np.max(np.abs(X @ B - np.eye(dim))) < 1e-10


def test_frozen_residual_after_three_steps():
    B = np.array([[2.0, 1.0], [1.0, 2.0]])
    _, residuals = nardi_invert_plain(B, c=4.0, iterations=3, collect_residuals=True)
    R0 = np.eye(2) - B / 4.0
    expect = np.linalg.matrix_power(R0, 8)
    assert abs(np.linalg.norm(expect, 2) - 0.1001129150390625) < 1e-12
    assert abs(residuals[-1] - np.max(np.abs(expect))) < 1e-9


def test_residual_decay_is_quadratic():
    rng = np.random.default_rng(8)
    B = random_spd(rng, 4, 10.0)
    c = pow2_ceil_scalar(float(np.trace(B)))
    _, residuals = nardi_invert_plain(B, c=c, iterations=8, collect_residuals=True)
    R0 = np.eye(4) - B / c
    for s, r in enumerate(residuals, start=1):
        expect = np.max(np.abs(np.linalg.matrix_power(R0, 2 ** s)))
        assert abs(r - expect) <= 1e-9 + 1e-6 * expect


def ring_invert_fixture(n_parties, setting, B, cfg, seed=0, fxp=DEFAULT_FIXED_POINT):
    t = Transport(default_timeout=60.0)
    rts = make_runtimes(t, n_parties, seed=seed, fxp=fxp)
    if setting.variant == "beaver-2p":
        dealer = Dealer(np.random.default_rng(seed + 7))
        m = B.shape[0]
        budget = 2 * cfg.iterations * m ** 3
        for rt, store in zip(rts, dealer.deal_ring(budget, fxp, n_parties)):
            rt.triples_ring = store
        dealer.seal()
    rng = np.random.default_rng(seed + 1)
    shares = share_fixed(B, n_parties, rng, fxp)

    def party(rt):
        eng = RingEngine(rt, setting)
        return invert_spd_ring(eng, shares[rt.pid], cfg).values, rt

    out = run_parties(t, rts, party)
    X = reconstruct_fixed([v for v, _ in out], fxp)
    return X, [rt for _, rt in out]


@pytest.mark.parametrize("n_parties,setting", [(2, BEAVER_2P), (3, RESHARE_3P)])
def test_shared_ring_inversion_residual(n_parties, setting):
    rng = np.random.default_rng(3)
    B = random_spd(rng, 4, 30.0)
    # 20 fractional bits: the residual floor scales with c * 2**-frac_bits,
    # and the default 16 sits right at the tolerance for cond ~ 30
    fxp = FixedPointConfig(ring_bits=64, frac_bits=20)
    X, rts = ring_invert_fixture(n_parties, setting, B, InversionConfig(), fxp=fxp)
    residual = np.max(np.abs(X @ B - np.eye(4)))
    assert residual < 1e-3
    expected = {"hessian_trace"}
    if setting.variant == "beaver-2p":
        expected |= {"beaver_d", "beaver_e"}
    for rt in rts:
        assert rt.audit.purposes() == expected


def real_invert_fixture(n_parties, setting, B, cfg, seed=0, negdef=False):
    t = Transport(default_timeout=60.0)
    rts = make_runtimes(t, n_parties, seed=seed)
    if setting.variant == "beaver-2p":
        dealer = Dealer(np.random.default_rng(seed + 7))
        m = B.shape[0]
        budget = 2 * cfg.iterations * m ** 3
        for rt, store in zip(rts, dealer.deal_real(budget, n_parties)):
            rt.triples_real = store
        dealer.seal()
    rng = np.random.default_rng(seed + 1)
    vb = float(np.max(np.abs(B))) * 2
    shares = share_real(B, n_parties, rng, mask_bound=KAPPA * vb)

    def party(rt):
        eng = RealEngine(rt, setting)
        sm = eng._own(shares[rt.pid].values, value_bound=vb, mask_bound=KAPPA * vb)
        if negdef:
            return invert_negdef_shared(eng, sm, cfg).values
        return invert_spd_real(eng, sm, cfg).values

    return reconstruct_real(run_parties(t, rts, party))


@pytest.mark.parametrize("n_parties,setting", [(2, BEAVER_2P), (3, RESHARE_3P)])
def test_shared_real_inversion_residual(n_parties, setting):
    rng = np.random.default_rng(4)
    B = random_spd(rng, 5, 60.0)
    X = real_invert_fixture(n_parties, setting, B, InversionConfig())
    assert np.max(np.abs(X @ B - np.eye(5))) < 1e-6


def test_negative_definite_inversion():
    rng = np.random.default_rng(5)
    B = -random_spd(rng, 3, 10.0)
    X = real_invert_fixture(3, RESHARE_3P, B, InversionConfig(), negdef=True)
    assert np.max(np.abs(X @ B - np.eye(3))) < 1e-6


def test_manual_scale_skips_the_reveal():
    rng = np.random.default_rng(6)
    B = random_spd(rng, 3, 5.0)
    c = pow2_ceil_scalar(float(np.trace(B)))
    t = Transport(default_timeout=60.0)
    rts = make_runtimes(t, 3, seed=0)
    shares = share_real(B, 3, rng, mask_bound=KAPPA * 8)

    def party(rt):
        eng = RealEngine(rt, RESHARE_3P)
        sm = eng._own(shares[rt.pid].values, value_bound=8.0, mask_bound=KAPPA * 8)
        cfg = InversionConfig(mode="manual", manual_c=c)
        inv = invert_spd_real(eng, sm, cfg)
        return inv.values, sorted(rt.audit.purposes())

    out = run_parties(t, rts, party)
    X = reconstruct_real([v for v, _ in out])
    assert np.max(np.abs(X @ B - np.eye(3))) < 1e-6
    for _, purposes in out:
        assert purposes == []  # nothing opened


def test_ring_inversion_rejects_oversized_scale():
    rng = np.random.default_rng(7)
    B = random_spd(rng, 3, 4.0) * 40000.0  # trace beyond 2**16
    t = Transport(default_timeout=60.0)
    rts = make_runtimes(t, 3, seed=0)
    shares = share_fixed(B, 3, rng)

    def party(rt):
        eng = RingEngine(rt, RESHARE_3P)
        return invert_spd_ring(eng, shares[rt.pid], InversionConfig()).values

    with pytest.raises(UsageError, match="frac"):
        run_parties(t, rts, party)


def test_elementwise_inversion_across_magnitudes():
    # the arguments span 1 .. 1e13; the per-element scale hints cover them
    w = np.array([1.0, 1.5, 7.0, 512.0, 1e6, 9.7e12])
    t = Transport(default_timeout=60.0)
    rts = make_runtimes(t, 3, seed=0)
    rng = np.random.default_rng(11)
    hints = np.array([2.0, 2.0, 8.0, 512.0, 2.0 ** 20, 2.0 ** 44])
    shares = share_real(w, 3, rng, mask_bound=1.0)

    def party(rt):
        eng = RealEngine(rt, RESHARE_3P)
        sm = eng._own(shares[rt.pid].values, value_bound=hints, mask_bound=KAPPA * hints)
        inv = invert_elementwise_real(eng, sm, InversionConfig(mode="bound"))
        return inv.values

    out = reconstruct_real(run_parties(t, rts, party))
    assert np.max(np.abs(out * w - 1.0)) < 1e-8
