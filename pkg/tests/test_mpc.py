"""Protocol engines: triple lifecycle, multiplication, truncation, reveal.

The frozen oracle here is the worked single multiplication x=3, y=4 under
triple (a=1, b=2, c=2): the parties open d = x-a = 2 and e = y-b = 2 and the
product shares must carry w = c + e*a + d*b + e*d = 2 + 2 + 4 + 4 = 12.
"""

import numpy as np
import pytest
from scipy.stats import chi2

from mpclogreg.errors import ProtocolError, UsageError
from mpclogreg.mpc import (
    BEAVER_2P,
    KAPPA,
    RESHARE_3P,
    BeaverTriple,
    Dealer,
    RealEngine,
    RingEngine,
    SecuritySetting,
    TripleStore,
    accurate_training_triples,
    approx_training_triples,
    matmul_triples,
    pow2_at_least,
)
from mpclogreg.runtime import make_runtimes, run_parties
from mpclogreg.sharing import (
    DEFAULT_FIXED_POINT,
    decode_fixed,
    encode_fixed,
    reconstruct_real,
    reconstruct_ring,
    ring_add,
    share_fixed,
    share_real,
    share_ring_elements,
)
from mpclogreg.transport import Transport


class RecordingTransport(Transport):
    """Keeps plaintext copies of every payload for traffic inspection."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.log = []

    def send(self, sender, receiver, round_tag, values):
        self.log.append((sender, receiver, round_tag, np.array(values, copy=True)))
        super().send(sender, receiver, round_tag, values)


def setup(n_parties, seed=0, transport_cls=Transport):
    t = transport_cls(default_timeout=30.0)
    rts = make_runtimes(t, n_parties, seed=seed)
    return t, rts


def deal_to(rts, n_ring=0, n_real=0, seed=99):
    dealer = Dealer(np.random.default_rng(seed))
    if n_ring:
        for rt, store in zip(rts, dealer.deal_ring(n_ring, DEFAULT_FIXED_POINT, len(rts))):
            rt.triples_ring = store
    if n_real:
        for rt, store in zip(rts, dealer.deal_real(n_real, len(rts))):
            rt.triples_real = store
    dealer.seal()
    return dealer


def u64(*xs):
    return np.array(xs, dtype=np.uint64)


def signed(arr):
    return np.asarray(arr, dtype=np.uint64).view(np.int64)


# -- security settings and dealer ------------------------------------------


def test_setting_validation():
    assert BEAVER_2P.n_parties == 2 and BEAVER_2P.corruption_threshold == 1
    assert RESHARE_3P.n_parties == 3 and RESHARE_3P.corruption_threshold == 1
    with pytest.raises(UsageError):
        SecuritySetting("beaver-2p", 3, 1)
    with pytest.raises(UsageError):
        SecuritySetting("reshare-3p", 3, 2)
    with pytest.raises(UsageError):
        SecuritySetting("semi-honest-stack", 2, 1)


def test_dealer_ring_triples_multiply_correctly():
    dealer = Dealer(np.random.default_rng(1))
    stores = dealer.deal_ring(50, DEFAULT_FIXED_POINT, 2)
    a = reconstruct_ring([s.a for s in stores])
    b = reconstruct_ring([s.b for s in stores])
    c = reconstruct_ring([s.c for s in stores])
    assert np.array_equal(c, (a * b))  # uint64 wraps mod 2**64 natively
    assert dealer.ring_triples_issued == 50


def test_dealer_real_triples_are_unit_scale():
    dealer = Dealer(np.random.default_rng(2))
    stores = dealer.deal_real(80, 2)
    a = reconstruct_real([s.a for s in stores])
    b = reconstruct_real([s.b for s in stores])
    c = reconstruct_real([s.c for s in stores])
    assert np.max(np.abs(a)) <= 1.0 and np.max(np.abs(b)) <= 1.0
    assert np.max(np.abs(c - a * b)) <= 1e-12
    assert dealer.real_triples_issued == 80


def test_dealer_refuses_after_seal():
    dealer = Dealer(np.random.default_rng(3))
    dealer.deal_ring(1, DEFAULT_FIXED_POINT, 2)
    dealer.seal()
    with pytest.raises(ProtocolError, match="sealed"):
        dealer.deal_ring(1, DEFAULT_FIXED_POINT, 2)
    with pytest.raises(ProtocolError, match="sealed"):
        dealer.deal_real(1, 2)


def test_triple_store_exhaustion():
    store = TripleStore(u64(1, 2), u64(3, 4), u64(5, 6))
    store.consume(2, (2,))
    with pytest.raises(ProtocolError, match="exhausted"):
        store.consume(1, (1,))


# -- the frozen single-multiplication oracle --------------------------------


def test_beaver_hand_example():
    t, rts = setup(2, transport_cls=RecordingTransport)
    x_shares = [u64(1), u64(2)]          # x = 3
    y_shares = [u64(3), u64(1)]          # y = 4
    a_shares = [u64(5), u64(2 ** 64 - 4)]  # a = 1
    b_shares = [u64(1), u64(1)]          # b = 2
    c_shares = [u64(7), u64(2 ** 64 - 5)]  # c = 2

    def party(rt):
        eng = RingEngine(rt, BEAVER_2P)
        triple = BeaverTriple(a_shares[rt.pid], b_shares[rt.pid], c_shares[rt.pid])
        x = eng._own(x_shares[rt.pid])
        y = eng._own(y_shares[rt.pid])
        return eng.mul_with_triple(x, y, triple).values

    w_shares = run_parties(t, rts, party)
    assert reconstruct_ring(w_shares) == u64(12)

    # exactly two messages per party: its d share and its e share
    stats = t.snapshot_stats()
    assert stats.messages_sent == 4
    assert stats.per_link[(0, 1)][0] == 2
    assert stats.per_link[(1, 0)][0] == 2

    # the opened differences are the masked values d = 2, e = 2
    d_payloads = [v for (_, _, tag, v) in t.log if tag.endswith("/d")]
    e_payloads = [v for (_, _, tag, v) in t.log if tag.endswith("/e")]
    assert ring_add(d_payloads[0], d_payloads[1], DEFAULT_FIXED_POINT) == u64(2)
    assert ring_add(e_payloads[0], e_payloads[1], DEFAULT_FIXED_POINT) == u64(2)

    # both parties logged the opening
    for rt in rts:
        assert ("beaver_d", 1) in rt.audit.entries
        assert ("beaver_e", 1) in rt.audit.entries


def test_beaver_triple_reuse_is_rejected():
    t, rts = setup(2)
    a = [u64(5), u64(2 ** 64 - 4)]
    b = [u64(1), u64(1)]
    c = [u64(7), u64(2 ** 64 - 5)]
    triples = {pid: BeaverTriple(a[pid], b[pid], c[pid]) for pid in (0, 1)}

    def party(rt):
        eng = RingEngine(rt, BEAVER_2P)
        x = eng._own(u64(1))
        eng.mul_with_triple(x, x, triples[rt.pid])
        eng.mul_with_triple(x, x, triples[rt.pid])

    with pytest.raises(ProtocolError, match="reuse"):
        run_parties(t, rts, party)


# -- pooled multiplication in both settings ---------------------------------


def mul_fixture(n_parties, setting, values_x, values_y, seed=0, transport_cls=Transport):
    t, rts = setup(n_parties, seed=seed, transport_cls=transport_cls)
    if setting.variant == "beaver-2p":
        deal_to(rts, n_ring=np.asarray(values_x).size)
    rng = np.random.default_rng(seed + 1)
    xs = share_fixed(values_x, n_parties, rng)
    ys = share_fixed(values_y, n_parties, rng)

    def party(rt):
        eng = RingEngine(rt, setting)
        prod = eng.mul(xs[rt.pid], ys[rt.pid])
        return eng.truncate(prod).values

    shares = run_parties(t, rts, party)
    return decode_fixed(reconstruct_ring(shares)), t, rts


@pytest.mark.parametrize("n_parties,setting", [(2, BEAVER_2P), (3, RESHARE_3P)])
def test_pooled_mul_matches_plain_product(n_parties, setting):
    rng = np.random.default_rng(42)
    x = rng.uniform(-40, 40, 64)
    y = rng.uniform(-40, 40, 64)
    got, _, _ = mul_fixture(n_parties, setting, x, y)
    assert np.max(np.abs(got - x * y)) < 1e-3


def test_two_party_mul_message_count():
    got, t, rts = mul_fixture(2, BEAVER_2P, np.ones(5), np.ones(5))
    # one batched multiplication is 4 messages; truncation is local
    assert t.snapshot_stats().messages_sent == 4
    for rt in rts:
        assert rt.counters["mul"] == 1
        assert rt.counters["triples_ring_consumed"] == 5


def test_three_party_mul_message_count():
    got, t, rts = mul_fixture(3, RESHARE_3P, np.ones(5), np.ones(5))
    # 15 for the multiplication (five rounds of three), 4 for truncation
    assert t.snapshot_stats().messages_sent == 15 + 4
    for rt in rts:
        assert rt.counters["mul"] == 1
        assert rt.counters["truncate"] == 1


def test_three_party_forwarded_shares_look_uniform():
    rng = np.random.default_rng(77)
    x = rng.uniform(-2, 2, 20000)
    _, t, _ = mul_fixture(3, RESHARE_3P, x, x, transport_cls=RecordingTransport)
    forwarded = [v for (_, _, tag, v) in t.log if tag.endswith("/fx")]
    assert len(forwarded) == 3
    pooled = np.concatenate([f.ravel() for f in forwarded])
    buckets = np.bincount((pooled.astype(np.uint64) & np.uint64(0xF)).astype(np.int64), minlength=16)
    expected = pooled.size / 16
    stat = float(np.sum((buckets - expected) ** 2 / expected))
    assert stat < chi2.ppf(0.99, df=15)


def test_beaver_opened_differences_look_uniform():
    rng = np.random.default_rng(88)
    x = rng.uniform(-2, 2, 20000)
    _, t, _ = mul_fixture(2, BEAVER_2P, x, x, transport_cls=RecordingTransport)
    by_tag = {}
    for (_, _, tag, v) in t.log:
        if tag.endswith("/d"):
            by_tag.setdefault(tag, []).append(v)
    (pair,) = by_tag.values()
    opened = ring_add(pair[0], pair[1], DEFAULT_FIXED_POINT)
    buckets = np.bincount((opened & np.uint64(0xF)).astype(np.int64), minlength=16)
    expected = opened.size / 16
    stat = float(np.sum((buckets - expected) ** 2 / expected))
    assert stat < chi2.ppf(0.99, df=15)


# -- truncation --------------------------------------------------------------


@pytest.mark.parametrize(
    "n_parties,setting,expect_msgs",
    [(2, BEAVER_2P, 0), (3, RESHARE_3P, 4)],
)
def test_truncation_error_is_one_step(n_parties, setting, expect_msgs):
    rng = np.random.default_rng(5)
    values = rng.uniform(-1000, 1000, 20000)
    t, rts = setup(n_parties)
    shares = share_fixed(values, n_parties, rng)

    def party(rt):
        eng = RingEngine(rt, setting)
        return eng.truncate(shares[rt.pid], bits=8).values

    out = run_parties(t, rts, party)
    before = signed(encode_fixed(values))
    after = signed(reconstruct_ring(out))
    floor_shift = before >> 8
    assert np.max(np.abs(after - floor_shift)) <= 1
    assert t.snapshot_stats().messages_sent == expect_msgs


def test_three_party_truncation_share_of_party_two_is_zero():
    rng = np.random.default_rng(6)
    values = rng.uniform(-10, 10, 4)
    t, rts = setup(3)
    shares = share_fixed(values, 3, rng)

    def party(rt):
        eng = RingEngine(rt, RESHARE_3P)
        return eng.truncate(shares[rt.pid]).values

    out = run_parties(t, rts, party)
    assert np.all(out[2] == 0)
    assert np.max(np.abs(decode_fixed(reconstruct_ring(out)) - values / 65536)) < 1e-3


# -- matrix products ---------------------------------------------------------


def test_matmul_triple_budget_formula():
    assert matmul_triples(4, 3, 2) == 24
    assert matmul_triples(1, 9, 1) == 9


@pytest.mark.parametrize("n_parties,setting", [(2, BEAVER_2P), (3, RESHARE_3P)])
def test_matmul_matches_plain_product(n_parties, setting):
    rng = np.random.default_rng(13)
    a = rng.uniform(-3, 3, (4, 3))
    b = rng.uniform(-3, 3, (3, 2))
    t, rts = setup(n_parties)
    if setting.variant == "beaver-2p":
        deal_to(rts, n_ring=matmul_triples(4, 3, 2))
    sa = share_fixed(a, n_parties, rng)
    sb = share_fixed(b, n_parties, rng)

    def party(rt):
        eng = RingEngine(rt, setting)
        return eng.matmul(sa[rt.pid], sb[rt.pid]).values

    out = run_parties(t, rts, party)
    got = decode_fixed(reconstruct_ring(out))
    assert got.shape == (4, 2)
    assert np.max(np.abs(got - a @ b)) < 1e-3
    for rt in rts:
        assert rt.counters["mul"] == 1  # one batched invocation for the whole product


def test_matmul_with_vector_operand():
    rng = np.random.default_rng(14)
    a = rng.uniform(-2, 2, (5, 3))
    v = rng.uniform(-2, 2, 3)
    t, rts = setup(2)
    deal_to(rts, n_ring=matmul_triples(5, 3, 1))
    sa = share_fixed(a, 2, rng)
    sv = share_fixed(v, 2, rng)

    def party(rt):
        eng = RingEngine(rt, BEAVER_2P)
        return eng.matmul(sa[rt.pid], sv[rt.pid]).values

    out = run_parties(t, rts, party)
    got = decode_fixed(reconstruct_ring(out))
    assert got.shape == (5,)
    assert np.max(np.abs(got - a @ v)) < 1e-3


def test_matmul_consumes_one_triple_per_scalar_term():
    rng = np.random.default_rng(15)
    a = rng.uniform(-1, 1, (4, 3))
    b = rng.uniform(-1, 1, (3, 2))
    t, rts = setup(2)
    deal_to(rts, n_ring=matmul_triples(4, 3, 2))
    sa = share_fixed(a, 2, rng)
    sb = share_fixed(b, 2, rng)

    def party(rt):
        eng = RingEngine(rt, BEAVER_2P)
        eng.matmul(sa[rt.pid], sb[rt.pid])
        return rt.counters["triples_ring_consumed"]

    counts = run_parties(t, rts, party)
    assert counts == [24, 24]


# -- reveal and audit ---------------------------------------------------------


@pytest.mark.parametrize("n_parties,setting,msgs", [(2, BEAVER_2P, 2), (3, RESHARE_3P, 6)])
def test_reveal_broadcast(n_parties, setting, msgs):
    rng = np.random.default_rng(21)
    values = rng.uniform(-5, 5, 6)
    t, rts = setup(n_parties)
    shares = share_fixed(values, n_parties, rng)

    def party(rt):
        eng = RingEngine(rt, setting)
        return eng.reveal(shares[rt.pid], purpose="hessian_trace")

    opened = run_parties(t, rts, party)
    for o in opened:
        assert np.max(np.abs(decode_fixed(o) - values)) < 1e-4
    assert t.snapshot_stats().messages_sent == msgs
    for rt in rts:
        assert rt.audit.purposes() == {"hessian_trace"}


def test_reveal_combine_only_target_learns_value():
    rng = np.random.default_rng(22)
    values = rng.uniform(-5, 5, 3)
    t, rts = setup(3)
    shares = share_fixed(values, 3, rng)

    def party(rt):
        eng = RingEngine(rt, RESHARE_3P)
        return eng.reveal(shares[rt.pid], purpose="final_beta", mode="combine", combiner=1)

    opened = run_parties(t, rts, party)
    assert opened[0] is None and opened[2] is None
    assert np.max(np.abs(decode_fixed(opened[1]) - values)) < 1e-4
    assert t.snapshot_stats().messages_sent == 2


# -- real-domain engine --------------------------------------------------------


def real_mul_fixture(n_parties, setting, x, y, vb=8.0, seed=0, transport_cls=Transport):
    t, rts = setup(n_parties, seed=seed, transport_cls=transport_cls)
    if setting.variant == "beaver-2p":
        deal_to(rts, n_real=np.asarray(x).size)
    rng = np.random.default_rng(seed + 2)
    xs = share_real(x, n_parties, rng, mask_bound=KAPPA * vb)
    ys = share_real(y, n_parties, rng, mask_bound=KAPPA * vb)

    def party(rt):
        eng = RealEngine(rt, setting)
        xm = eng._own(xs[rt.pid].values, value_bound=vb, mask_bound=KAPPA * vb)
        ym = eng._own(ys[rt.pid].values, value_bound=vb, mask_bound=KAPPA * vb)
        out = eng.mul(xm, ym)
        return out.values, np.broadcast_to(out.mask_bound, out.values.shape)

    results = run_parties(t, rts, party)
    got = reconstruct_real([v for v, _ in results])
    return got, results, t


@pytest.mark.parametrize("n_parties,setting", [(2, BEAVER_2P), (3, RESHARE_3P)])
def test_real_mul_is_accurate_and_bounded(n_parties, setting):
    rng = np.random.default_rng(31)
    x = rng.uniform(-5, 5, 40)
    y = rng.uniform(-5, 5, 40)
    got, results, _ = real_mul_fixture(n_parties, setting, x, y)
    assert np.max(np.abs(got - x * y)) < 1e-8
    for vals, mb in results:
        assert np.all(np.abs(vals) <= mb + 1e-9)


def test_real_three_party_mul_message_count():
    x = np.ones(4)
    _, _, t = real_mul_fixture(3, RESHARE_3P, x, x)
    # five rounds of three minus the final re-randomization, which becomes
    # a two-message magnitude-controlled cascade
    assert t.snapshot_stats().messages_sent == 14


def test_real_beaver_mul_message_count():
    x = np.ones(4)
    _, _, t = real_mul_fixture(2, BEAVER_2P, x, x)
    assert t.snapshot_stats().messages_sent == 4


def test_real_matmul_matches_plain_product():
    rng = np.random.default_rng(33)
    a = rng.uniform(-4, 4, (4, 3))
    b = rng.uniform(-4, 4, (3, 2))
    t, rts = setup(3)
    sa = share_real(a, 3, rng, mask_bound=KAPPA * 4)
    sb = share_real(b, 3, rng, mask_bound=KAPPA * 4)

    def party(rt):
        eng = RealEngine(rt, RESHARE_3P)
        am = eng._own(sa[rt.pid].values, value_bound=4.0, mask_bound=KAPPA * 4)
        bm = eng._own(sb[rt.pid].values, value_bound=4.0, mask_bound=KAPPA * 4)
        return eng.matmul(am, bm).values

    out = run_parties(t, rts, party)
    got = reconstruct_real(out)
    assert got.shape == (4, 2)
    assert np.max(np.abs(got - a @ b)) < 1e-8


def test_shrink_reshare_preserves_value_and_shrinks_shares():
    rng = np.random.default_rng(34)
    values = rng.uniform(-20, 20, 50)
    t, rts = setup(3)
    shares = share_real(values, 3, rng, mask_bound=2.0 ** 30)

    def party(rt):
        eng = RealEngine(rt, RESHARE_3P)
        x = eng._own(shares[rt.pid].values, value_bound=32.0, mask_bound=2.0 ** 30)
        out = eng.shrink_reshare(x, mask_bound=KAPPA * 32.0)
        return out.values

    out = run_parties(t, rts, party)
    assert np.max(np.abs(reconstruct_real(out) - values)) < 1e-6
    for pid in (0, 1):
        assert np.max(np.abs(out[pid])) <= KAPPA * 32.0
    assert np.max(np.abs(out[2])) <= 32.0 + 2 * KAPPA * 32.0


def test_share_local_distributes_every_partys_array():
    locals_ = {pid: np.full(6, float(pid + 1)) for pid in range(3)}
    t, rts = setup(3)

    def party(rt):
        eng = RealEngine(rt, RESHARE_3P)
        pieces = eng.share_local(locals_[rt.pid], value_bound=4.0)
        return [p.values for p in pieces]

    out = run_parties(t, rts, party)
    for source in range(3):
        back = reconstruct_real([out[pid][source] for pid in range(3)])
        assert np.max(np.abs(back - locals_[source])) < 1e-9
    # 2 * n * (n-1) messages: scale hints first, then the shares
    assert t.snapshot_stats().messages_sent == 12


def test_share_local_chain_product():
    rng = np.random.default_rng(36)
    locals_ = {pid: rng.uniform(0.5, 2.0, 8) for pid in range(3)}
    t, rts = setup(3)

    def party(rt):
        eng = RealEngine(rt, RESHARE_3P)
        pieces = eng.share_local(locals_[rt.pid], value_bound=2.0)
        prod = pieces[0]
        for nxt in pieces[1:]:
            prod = eng.mul(prod, nxt)
        return prod.values

    out = run_parties(t, rts, party)
    expect = locals_[0] * locals_[1] * locals_[2]
    assert np.max(np.abs(reconstruct_real(out) - expect)) < 1e-7


# -- engine misuse -------------------------------------------------------------


def test_ring_engine_rejects_real_shares():
    t, rts = setup(2)

    def party(rt):
        eng = RingEngine(rt, BEAVER_2P)
        bad = eng._own(u64(1))
        real = RealEngine(rt, BEAVER_2P)._own(np.ones(1), 1.0, 1.0)
        with pytest.raises(UsageError):
            eng.add(bad, real)
        return True

    assert run_parties(t, rts, party) == [True, True]


def test_engines_reject_foreign_shares():
    t, rts = setup(2)

    def party(rt):
        eng = RingEngine(rt, BEAVER_2P)
        from mpclogreg.sharing import ShareMatrix
        foreign = ShareMatrix(owner=1 - rt.pid, values=u64(1))
        with pytest.raises(ProtocolError):
            eng.add(foreign, foreign)
        return True

    assert run_parties(t, rts, party) == [True, True]


def test_run_parties_propagates_root_cause():
    t, rts = setup(2)

    def party(rt):
        if rt.pid == 0:
            raise ValueError("party zero logic error")
        rt.recv(0, "never#000000", np.float64, (1,))

    with pytest.raises(ValueError, match="party zero logic error"):
        run_parties(t, rts, party)


def test_tag_sequence_is_deterministic():
    t, rts = setup(2)
    tags = [rts[0].next_tag("mul"), rts[0].next_tag("mul"), rts[0].next_tag("reveal")]
    assert tags == ["mul#000000", "mul#000001", "reveal#000002"]


# -- triple budget closed forms -------------------------------------------------


def test_training_triple_formulas_small_cases():
    # one iteration, one inversion step, tiny shapes, counted by hand:
    # X'X: m*m*n = 12; inversion: 2*1*m**3 = 16; per iteration:
    # scores and gradient 2*n*m = 12, degree-3 chain n*2 = 6, update m*m = 4
    assert approx_training_triples(n_records=3, n_coeffs=2, n_iter=1, inv_iterations=1, degree=3) == 12 + 16 + 12 + 6 + 4
    # exact path, 2 parties: chain (np-1)*n = 3, elementwise inversion 2*1*n = 6
    assert accurate_training_triples(n_records=3, n_coeffs=2, n_iter=1, inv_iterations=1, n_parties=2) == 12 + 16 + 12 + 3 + 6 + 4


def test_pow2_hint_covers_magnitude():
    x = np.array([0.3, 1.0, 5.0, 100.0])
    hints = pow2_at_least(x)
    assert np.all(hints >= x)
    assert np.all(hints < 2 * x + 1e-12)
    assert np.array_equal(hints, np.array([0.5, 1.0, 8.0, 128.0]))
