"""Simulated message transport between protocol endpoints.

Endpoints (computation parties, data owners, the result collector) exchange
byte payloads over per-link FIFO channels guarded by one lock. Every send is
counted per (from, to) pair and globally, so a finished run can report its
exact communication profile.

Threads executing protocol code attach themselves to the transport; a recv
that would block forever (every attached thread already blocked, all their
queues empty) raises DeadlockError for all of them instead of hanging. A
wall-clock timeout backstops the cases the structural check cannot prove.
"""

import threading
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import DeadlockError, ProtocolError, UsageError

PartyId = int


@dataclass(frozen=True)
class Message:
    """One protocol message.

    Attributes:
        sender: endpoint that sent it.
        receiver: endpoint it is addressed to.
        round_tag: protocol step label; recv must ask for the same tag.
        payload: non-empty bytes.
    """

    sender: PartyId
    receiver: PartyId
    round_tag: str
    payload: bytes

    def __post_init__(self):
        if len(self.payload) == 0:
            raise UsageError("empty message payloads are not allowed")


@dataclass
class ChannelStats:
    """Message and byte counters, per directed link and in total."""

    messages_sent: int = 0
    bytes_sent: int = 0
    per_link: Dict[Tuple[PartyId, PartyId], Tuple[int, int]] = field(default_factory=dict)

    def record(self, sender: PartyId, receiver: PartyId, nbytes: int) -> None:
        self.messages_sent += 1
        self.bytes_sent += nbytes
        m, b = self.per_link.get((sender, receiver), (0, 0))
        self.per_link[(sender, receiver)] = (m + 1, b + nbytes)

    def copy(self) -> "ChannelStats":
        return ChannelStats(self.messages_sent, self.bytes_sent, dict(self.per_link))


def serialize_array(values: np.ndarray) -> bytes:
    """Packs a uint64 or float64 array as little-endian 8-byte words."""
    arr = np.asarray(values)
    if arr.dtype == np.uint64:
        return arr.astype("<u8", copy=False).tobytes()
    if arr.dtype == np.float64:
        return arr.astype("<f8", copy=False).tobytes()
    raise UsageError(f"cannot serialize dtype {arr.dtype}")


def deserialize_array(payload: bytes, dtype, shape) -> np.ndarray:
    kind = np.dtype(dtype)
    if kind == np.uint64:
        arr = np.frombuffer(payload, dtype="<u8").astype(np.uint64)
    elif kind == np.float64:
        arr = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    else:
        raise UsageError(f"cannot deserialize dtype {kind}")
    return arr.reshape(shape)


class Transport:
    """In-memory transport with FIFO links, counters and deadlock detection."""

    def __init__(self, default_timeout: float = 60.0):
        self._cond = threading.Condition()
        self._queues: Dict[Tuple[PartyId, PartyId], deque] = {}
        self._endpoints: set = set()
        self._running: set = set()
        self._waiting: Dict[PartyId, Tuple[PartyId, str]] = {}
        self._stats = ChannelStats()
        self._dead = False
        self.default_timeout = default_timeout

    def register(self, pid: PartyId) -> None:
        if pid < 0:
            raise UsageError("endpoint ids must be non-negative")
        with self._cond:
            self._endpoints.add(pid)

    @contextmanager
    def attach(self, pid: PartyId):
        """Marks the calling thread as a running protocol participant."""
        with self._cond:
            if pid not in self._endpoints:
                raise UsageError(f"endpoint {pid} is not registered")
            self._running.add(pid)
        try:
            yield self
        finally:
            with self._cond:
                self._running.discard(pid)
                self._cond.notify_all()

    def send(self, sender: PartyId, receiver: PartyId, round_tag: str, values: np.ndarray) -> None:
        """Serializes and enqueues one message; never blocks."""
        payload = serialize_array(values)
        msg = Message(sender, receiver, round_tag, payload)
        with self._cond:
            if sender not in self._endpoints or receiver not in self._endpoints:
                raise UsageError(f"send on unregistered link {sender}->{receiver}")
            self._queues.setdefault((sender, receiver), deque()).append(msg)
            self._stats.record(sender, receiver, len(payload))
            self._cond.notify_all()

    def recv(
        self,
        receiver: PartyId,
        sender: PartyId,
        round_tag: str,
        dtype,
        shape,
        timeout: Optional[float] = None,
    ) -> np.ndarray:
        """Dequeues the head message of the (sender, receiver) link.

        The head message must carry the requested round_tag; a mismatch means
        the two parties disagree about the protocol step and raises
        ProtocolError. Blocks while the link is empty; raises DeadlockError
        when no attached thread can make progress any more.
        """
        limit = self.default_timeout if timeout is None else timeout
        deadline = None if limit is None else time.monotonic() + limit
        with self._cond:
            key = (sender, receiver)
            while True:
                if self._dead:
                    raise DeadlockError("transport already failed: all parties were blocked")
                queue = self._queues.get(key)
                if queue:
                    msg = queue.popleft()
                    if msg.round_tag != round_tag:
                        raise ProtocolError(
                            f"round tag mismatch on link {sender}->{receiver}: "
                            f"expected {round_tag!r}, found {msg.round_tag!r}"
                        )
                    return deserialize_array(msg.payload, dtype, shape)
                self._waiting[receiver] = (sender, round_tag)
                try:
                    if (
                        self._running
                        and self._running.issubset(self._waiting.keys())
                        and self._no_deliverable_messages()
                    ):
                        self._dead = True
                        self._cond.notify_all()
                        raise DeadlockError(
                            "deadlock: every running party is blocked on recv "
                            f"(waiting: {sorted(self._waiting)})"
                        )
                    remaining = None if deadline is None else deadline - time.monotonic()
                    if remaining is not None and remaining <= 0:
                        self._dead = True
                        self._cond.notify_all()
                        raise DeadlockError(
                            f"recv timed out after {limit}s on link "
                            f"{sender}->{receiver} tag {round_tag!r}"
                        )
                    self._cond.wait(timeout=remaining)
                finally:
                    self._waiting.pop(receiver, None)

    def _no_deliverable_messages(self) -> bool:
        """True when no waiting party has anything queued on its awaited link.

        A party that was just notified may still sit in the waiting map until
        it re-acquires the lock; a queued message on its link means it will
        make progress, so the situation is not a deadlock.
        """
        for receiver, (sender, _tag) in self._waiting.items():
            if self._queues.get((sender, receiver)):
                return False
        return True

    def snapshot_stats(self) -> ChannelStats:
        """Returns a copy of the counters; later traffic does not mutate it."""
        with self._cond:
            return self._stats.copy()
