"""Per-party protocol state and the thread runner.

Protocol code is written SPMD-style: every computation party executes the
same function over its own PartyRuntime. Message tags come from a per-party
sequence counter, so as long as all parties issue the same operations in the
same order their tags line up; a divergence surfaces as a round-tag mismatch
instead of silent corruption.
"""

import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DeadlockError, UsageError
from .sharing import FixedPointConfig, DEFAULT_FIXED_POINT
from .transport import PartyId, Transport


class Counters(dict):
    """Plain dict of named integer counters."""

    def bump(self, key: str, amount: int = 1) -> None:
        self[key] = self.get(key, 0) + int(amount)


class RevealAudit:
    """Append-only log of every plaintext reveal a party participates in."""

    def __init__(self):
        self.entries: List[Tuple[str, int]] = []

    def record(self, purpose: str, n_elements: int) -> None:
        self.entries.append((purpose, int(n_elements)))

    def purposes(self) -> set:
        return {p for p, _ in self.entries}


@dataclass
class PartyRuntime:
    """Everything one computation party owns during a protocol run."""

    pid: PartyId
    n_parties: int
    transport: Transport
    rng: np.random.Generator
    fxp: FixedPointConfig = DEFAULT_FIXED_POINT
    counters: Counters = field(default_factory=Counters)
    audit: RevealAudit = field(default_factory=RevealAudit)
    triples_ring: Optional["TripleStore"] = None  # set by the dealer, see mpc.py
    triples_real: Optional["TripleStore"] = None
    _seq: int = 0

    def next_tag(self, op: str) -> str:
        tag = f"{op}#{self._seq:06d}"
        self._seq += 1
        return tag

    @property
    def succ(self) -> PartyId:
        return (self.pid + 1) % self.n_parties

    @property
    def pred(self) -> PartyId:
        return (self.pid - 1) % self.n_parties

    def send(self, to: PartyId, tag: str, values: np.ndarray) -> None:
        self.transport.send(self.pid, to, tag, values)

    def recv(self, frm: PartyId, tag: str, dtype, shape) -> np.ndarray:
        return self.transport.recv(self.pid, frm, tag, dtype, shape)


def make_runtimes(
    transport: Transport,
    n_parties: int,
    seed: int,
    fxp: FixedPointConfig = DEFAULT_FIXED_POINT,
) -> List[PartyRuntime]:
    """Registers party endpoints 0..n-1 and builds their runtimes with
    independent deterministic generators spawned from one seed."""
    if n_parties < 2:
        raise UsageError("at least two computation parties are required")
    seqs = np.random.SeedSequence(seed).spawn(n_parties)
    runtimes = []
    for pid in range(n_parties):
        transport.register(pid)
        runtimes.append(
            PartyRuntime(
                pid=pid,
                n_parties=n_parties,
                transport=transport,
                rng=np.random.default_rng(seqs[pid]),
                fxp=fxp,
            )
        )
    return runtimes


def run_parties(
    transport: Transport,
    runtimes: Sequence[PartyRuntime],
    fn: Callable[[PartyRuntime], object],
    join_timeout: float = 600.0,
) -> List[object]:
    """Runs fn(runtime) on one thread per party and collects the results.

    If any party raises, the others unblock (their recvs turn into deadlock
    errors once the failed party detaches) and the first non-deadlock
    exception is re-raised as the root cause.
    """
    results: Dict[int, object] = {}
    failures: List[Tuple[int, BaseException]] = []
    lock = threading.Lock()
    # every party must be attached before any of them can block on recv,
    # otherwise a fast starter would see "all running parties waiting"
    barrier = threading.Barrier(len(runtimes))

    def body(rt: PartyRuntime):
        try:
            with transport.attach(rt.pid):
                barrier.wait(timeout=join_timeout)
                value = fn(rt)
            with lock:
                results[rt.pid] = value
        except BaseException as exc:  # noqa: BLE001 - propagated to the caller
            with lock:
                failures.append((rt.pid, exc))

    threads = [
        threading.Thread(target=body, args=(rt,), name=f"party-{rt.pid}", daemon=True)
        for rt in runtimes
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=join_timeout)
    if failures:
        root = next((e for _, e in failures if not isinstance(e, DeadlockError)), failures[0][1])
        raise root
    if len(results) != len(runtimes):
        raise DeadlockError("some parties neither finished nor failed within the join timeout")
    return [results[rt.pid] for rt in runtimes]
