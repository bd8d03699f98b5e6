"""Binary logistic regression with a fixed-Hessian Newton update.

The likelihood curvature -X'WX (W diagonal, w_i = pi_i(1-pi_i) <= 1/4) is
replaced by the data-only bound -X'X/4, so the update direction matrix is
constant across iterations and can be inverted once:

    beta <- beta + (X'X/4)^-1 X'(y - pi),   pi = sigmoid(X beta).

Because the bound dominates the true curvature this is a majorized ascent:
the log-likelihood increases every step and converges to the maximum
likelihood estimate at a linear rate.

Two interchangeable sigmoid strategies give two trainers:
- "accurate": the exact sigmoid via exponent factors, real-domain shares;
- "approx": an odd polynomial of degree 3, 5 or 7, fixed-point ring shares.

`train_plain` runs the same algorithm on plain floats, one mirror per
strategy; a shared run with enough data and the same iteration count lands
on the mirror's coefficients up to quantization (fixed point) or float
noise (real domain).

`train_shared` wires the full pipeline: each record owner secret-shares its
horizontal block (rows) to all computation parties over the transport, the
parties run the SPMD training loop and the final coefficients are the only
values opened beyond the whitelisted protocol openings.
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .data import OwnerShard, owner_share_and_submit
from .errors import DataError, ProtocolError, UsageError
from .linalg import InversionConfig, invert_spd_real, invert_spd_ring
from .mpc import (
    KAPPA,
    Dealer,
    RealEngine,
    RingEngine,
    SecuritySetting,
    accurate_training_triples,
    approx_training_triples,
)
from .runtime import make_runtimes, run_parties
from .sharing import DEFAULT_FIXED_POINT, FixedPointConfig, decode_fixed
from .sigmoid import (
    POLY_COEFFS,
    sigmoid_exact_shared,
    sigmoid_plain,
    sigmoid_poly_plain,
    sigmoid_poly_shared,
)
from .transport import Transport

METHODS = ("accurate", "approx")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs shared by the plain and the protocol trainers.

    method: "accurate" (exact sigmoid, real domain) or "approx"
        (polynomial sigmoid, fixed-point ring).
    poly_degree: 3, 5 or 7; only the approx method reads it.
    newton_iterations: fixed-Hessian update steps.
    inversion_iterations: doubling steps inside each shared inversion.
    frac_bits: fixed-point fractional bits for the ring domain.
    value_bound: public cap on feature magnitudes and linear scores;
        standardized data sits far below the default.
    cond_bound: public cap on the Hessian condition number (mask sizing
        of the real-domain inversion only).
    seed: drives every generator involved (sharing, masks, triples).
    """

    method: str = "accurate"
    poly_degree: int = 3
    newton_iterations: int = 15
    inversion_iterations: int = 24
    frac_bits: int = 16
    value_bound: float = 64.0
    cond_bound: float = 128.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.poly_degree not in POLY_COEFFS:
            raise UsageError(f"poly_degree must be one of {sorted(POLY_COEFFS)}")
        if self.newton_iterations < 1 or self.inversion_iterations < 1:
            raise UsageError("iteration counts must be positive")
        if not 1 <= self.frac_bits <= 62:
            raise UsageError("frac_bits must be in 1..62")


@dataclass
class ModelParams:
    """A trained model plus the run's accounting."""

    beta: np.ndarray
    method: str
    variant: str  # "plain", "beaver-2p" or "reshare-3p"
    poly_degree: Optional[int]
    newton_iterations: int
    n_records: int
    n_coeffs: int
    duration_s: float
    counters: List[Dict[str, int]] = field(default_factory=list)  # one dict per party
    audit_purposes: List[str] = field(default_factory=list)
    messages_sent: int = 0
    bytes_sent: int = 0
    config: Optional[TrainConfig] = None

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.beta.shape[0]:
            raise DataError(
                f"feature matrix must be 2-D with {self.beta.shape[0]} columns, got {X.shape}"
            )
        return sigmoid_plain(X @ self.beta)


def _check_xy(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise DataError(f"labels must be a vector of length {X.shape[0]}, got shape {y.shape}")
    if X.shape[0] == 0:
        raise DataError("no records")
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains non-finite values")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("labels must be 0 or 1")
    return X, y


def log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    """Binary-logistic log-likelihood sum_i [y_i z_i - log(1 + e^{z_i})]."""
    X, y = _check_xy(X, y)
    z = X @ np.asarray(beta, dtype=np.float64)
    return float(y @ z - np.logaddexp(0.0, z).sum())


def gradient_plain(X: np.ndarray, y: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Score vector X'(y - pi) of the log-likelihood."""
    X = np.asarray(X, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],) or pi.shape != y.shape:
        raise DataError("gradient needs X (n, m) with y and pi of length n")
    return X.T @ (y - pi)


def fixed_hessian_plain(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Curvature lower bound -X'X/4 and its inverse.

    The diagonal of the true Hessian weight matrix is pi(1-pi) <= 1/4, so
    -X'X/4 dominates the curvature everywhere; using it keeps the update
    direction matrix constant across iterations and still guarantees a
    likelihood increase each step.
    """
    X = np.asarray(X, dtype=np.float64)
    hessian = -(X.T @ X) / 4.0
    try:
        hessian_inv = np.linalg.inv(hessian)
    except np.linalg.LinAlgError:
        raise DataError("X'X is singular; remove collinear feature columns") from None
    return hessian, hessian_inv


def classify(probabilities: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Hard labels from probabilities; a tie at the threshold classifies as 1."""
    return (np.asarray(probabilities, dtype=np.float64) >= threshold).astype(np.int64)


def accuracy(labels_pred: np.ndarray, labels_true: np.ndarray) -> float:
    """Fraction of correct labels, as a percentage."""
    pred = np.asarray(labels_pred)
    true = np.asarray(labels_true)
    if pred.shape != true.shape:
        raise DataError(f"label vectors differ in shape: {pred.shape} vs {true.shape}")
    return float(np.mean(pred == true) * 100.0)


def auc(probabilities: np.ndarray, labels_true: np.ndarray) -> float:
    """Area under the ROC curve by the Mann-Whitney rank statistic.

    Midranks handle tied probabilities, which makes this equal to the
    trapezoidal area under the empirical ROC curve.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels_true)
    if p.ndim != 1 or p.shape != y.shape:
        raise DataError("probabilities and labels must be equal-length vectors")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC is undefined unless both classes are present")
    ranks = rankdata(p)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


HESSIAN_MODES = ("fixed", "full")


def train_plain(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig = TrainConfig(),
    hessian_mode: str = "fixed",
) -> ModelParams:
    """Plain-float Newton training, the mirror of the shared runs.

    hessian_mode "fixed" inverts -X'X/4 once (what the protocols do);
    "full" recomputes the exact Hessian -X'WX every iteration, as a
    reference for how much the fixed bound costs in convergence speed.
    """
    if hessian_mode not in HESSIAN_MODES:
        raise UsageError(f"hessian_mode must be one of {HESSIAN_MODES}, got {hessian_mode!r}")
    X, y = _check_xy(X, y)
    n, m = X.shape
    start = time.monotonic()
    _, hessian_inv = fixed_hessian_plain(X)
    beta = np.zeros(m)
    for _ in range(config.newton_iterations):
        z = X @ beta
        pi = sigmoid_plain(z) if config.method == "accurate" else sigmoid_poly_plain(z, config.poly_degree)
        if hessian_mode == "full":
            weights = pi * (1.0 - pi)
            try:
                hessian_inv = np.linalg.inv(-(X.T * weights) @ X)
            except np.linalg.LinAlgError:
                raise DataError("Hessian became singular; data may be separable") from None
        beta = beta - hessian_inv @ gradient_plain(X, y, pi)
    return ModelParams(
        beta=beta,
        method=config.method,
        variant="plain",
        poly_degree=config.poly_degree if config.method == "approx" else None,
        newton_iterations=config.newton_iterations,
        n_records=n,
        n_coeffs=m,
        duration_s=time.monotonic() - start,
        config=config,
    )


def _preload_inputs(transport, blocks, setting, config, fxp, rng):
    """Each owner secret-shares its (X | y) block to every computation party.

    Runs before the party threads start (input shares are data at rest, not
    protocol rounds)."""
    for owner, (Xj, yj) in enumerate(blocks):
        shard = OwnerShard(owner_id=owner, X_block=Xj, y_block=yj)
        if config.method == "approx":
            owner_share_and_submit(shard, setting.n_parties, transport, rng, fixed_point=fxp)
        else:
            owner_share_and_submit(
                shard, setting.n_parties, transport, rng,
                mask_bound=KAPPA * config.value_bound,
            )


def _train_party_ring(rt, setting, config, fxp, row_counts, m):
    eng = RingEngine(rt, setting)
    parts = [
        eng._own(rt.recv(owner, f"input/owner{owner}", np.uint64, (rows, m + 1)))
        for owner, rows in enumerate(row_counts)
    ]
    packed = eng._own(np.vstack([p.values for p in parts]))
    X = eng._own(packed.values[:, :m])
    y = eng._own(packed.values[:, m])
    inv_cfg = InversionConfig(
        iterations=config.inversion_iterations, mode="trace", cond_bound=config.cond_bound
    )
    hessian4 = eng.div_pow2(eng.matmul(eng.transpose(X), X), 2)
    hessian_inv = invert_spd_ring(eng, hessian4, inv_cfg)
    beta = eng._own(np.zeros(m, dtype=np.uint64))
    for _ in range(config.newton_iterations):
        z = eng.matmul(X, beta)
        pi = sigmoid_poly_shared(eng, z, config.poly_degree)
        residual = eng.sub(y, pi)
        gradient = eng.matmul(eng.transpose(X), residual)
        beta = eng.add(beta, eng.matmul(hessian_inv, gradient))
    opened = eng.reveal(beta, "final_beta")
    return decode_fixed(opened, fxp), dict(rt.counters), sorted(rt.audit.purposes())


def _train_party_real(rt, setting, config, row_counts, m):
    eng = RealEngine(rt, setting)
    vb, mb = config.value_bound, KAPPA * config.value_bound
    parts = [
        rt.recv(owner, f"input/owner{owner}", np.float64, (rows, m + 1))
        for owner, rows in enumerate(row_counts)
    ]
    packed = np.vstack(parts)
    X = eng._own(packed[:, :m], value_bound=vb, mask_bound=mb)
    y = eng._own(packed[:, m], value_bound=1.0, mask_bound=mb)
    inv_cfg = InversionConfig(
        iterations=config.inversion_iterations, mode="trace", cond_bound=config.cond_bound
    )
    hessian4 = eng.div_pow2(eng.matmul(eng.transpose(X), X), 2)
    hessian_inv = invert_spd_real(eng, hessian4, inv_cfg)
    beta = eng.zeros((m,))
    for _ in range(config.newton_iterations):
        z = eng.matmul(X, beta)
        pi = sigmoid_exact_shared(
            eng, z, value_bound=vb, inv_iterations=config.inversion_iterations
        )
        residual = eng.sub(y, pi)
        gradient = eng.matmul(eng.transpose(X), residual)
        beta = eng.add(beta, eng.matmul(hessian_inv, gradient))
        # coefficients stay below the public score bound; shares are pulled
        # back near it so they do not grow across iterations
        beta = eng.shrink_reshare(eng.with_value_bound(beta, vb), KAPPA * vb)
    opened = eng.reveal(beta, "final_beta")
    return opened, dict(rt.counters), sorted(rt.audit.purposes())


def train_shared(
    blocks: Sequence[Tuple[np.ndarray, np.ndarray]],
    setting: SecuritySetting,
    config: TrainConfig = TrainConfig(),
    transport: Optional[Transport] = None,
) -> ModelParams:
    """Trains over horizontally partitioned records without pooling them.

    blocks: one (X_j, y_j) pair per record owner. Owners are transport
    endpoints of their own; any number of them can feed any party count,
    and the parties append the received blocks in owner order, so the
    result only depends on the concatenated records. Feature columns must
    agree across owners.
    """
    if len(blocks) == 0:
        raise UsageError("at least one record-owner block is required")
    checked = [_check_xy(Xj, yj) for Xj, yj in blocks]
    m = checked[0][0].shape[1]
    for Xj, _ in checked[1:]:
        if Xj.shape[1] != m:
            raise DataError("owners disagree on the number of feature columns")
    row_counts = [Xj.shape[0] for Xj, _ in checked]
    n = sum(row_counts)
    fxp = FixedPointConfig(DEFAULT_FIXED_POINT.ring_bits, config.frac_bits)
    transport = transport if transport is not None else Transport()
    runtimes = make_runtimes(transport, setting.n_parties, seed=config.seed, fxp=fxp)

    start = time.monotonic()
    if setting.variant == "beaver-2p":
        dealer = Dealer(np.random.default_rng(config.seed + 101))
        if config.method == "approx":
            budget = approx_training_triples(
                n, m, config.newton_iterations, config.inversion_iterations, config.poly_degree
            )
            for rt, store in zip(runtimes, dealer.deal_ring(budget, fxp, setting.n_parties)):
                rt.triples_ring = store
        else:
            budget = accurate_training_triples(
                n, m, config.newton_iterations, config.inversion_iterations, setting.n_parties
            )
            for rt, store in zip(runtimes, dealer.deal_real(budget, setting.n_parties)):
                rt.triples_real = store
        dealer.seal()

    _preload_inputs(
        transport, checked, setting, config, fxp, np.random.default_rng(config.seed + 7)
    )

    if config.method == "approx":
        def party(rt):
            return _train_party_ring(rt, setting, config, fxp, row_counts, m)
    else:
        def party(rt):
            return _train_party_real(rt, setting, config, row_counts, m)

    results = run_parties(transport, runtimes, party)
    duration = time.monotonic() - start

    betas = [beta for beta, _, _ in results]
    for other in betas[1:]:
        if not np.array_equal(betas[0], other):
            raise ProtocolError("parties opened different coefficient vectors")
    stats = transport.snapshot_stats()
    purposes = sorted(set().union(*(set(p) for _, _, p in results)))
    return ModelParams(
        beta=betas[0],
        method=config.method,
        variant=setting.variant,
        poly_degree=config.poly_degree if config.method == "approx" else None,
        newton_iterations=config.newton_iterations,
        n_records=n,
        n_coeffs=m,
        duration_s=duration,
        counters=[c for _, c, _ in results],
        audit_purposes=purposes,
        messages_sent=stats.messages_sent,
        bytes_sent=stats.bytes_sent,
        config=config,
    )
