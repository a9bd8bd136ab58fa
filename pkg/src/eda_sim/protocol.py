"""Peer-level protocol: sampling, median aggregation, activation and faults.

Every random draw goes through a generator obtained from a ``StreamTable``
keyed by (seed, transaction digest, round, peer), so trajectories do not
depend on iteration order, worker count or which other transactions run
alongside.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "INIT_MODES",
    "Role",
    "TransactionId",
    "PeerState",
    "SamplePlan",
    "StreamTable",
    "ByzantineStrategy",
    "median",
    "activate",
    "sample_size",
    "draw_sample",
    "honest_update",
    "byzantine_emit",
    "initialize_estimate",
    "clamp_unit",
]

INIT_MODES = ("uniform-grid", "random")

_TWO_64 = 2.0**64


class Role(str, Enum):
    HONEST = "honest"
    BYZANTINE = "byzantine"


@dataclass(frozen=True, order=True)
class TransactionId:
    """A transaction identified by position and content digest.

    The first 8 digest bytes, read as a big-endian unsigned integer over
    2**64, give the transaction's anchor in [0, 1].
    """

    index: int
    digest: bytes

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"transaction index must be non-negative, got {self.index}")
        if not isinstance(self.digest, bytes) or not self.digest:
            raise ValueError("transaction digest must be non-empty bytes")

    @property
    def anchor(self) -> float:
        return int.from_bytes(self.digest[:8].ljust(8, b"\0"), "big") / _TWO_64

    @property
    def stream_key(self) -> int:
        """64-bit key for random streams, derived from content only."""
        return int.from_bytes(hashlib.blake2b(self.digest, digest_size=8).digest(), "big")

    @classmethod
    def from_content(cls, index: int, content: bytes | str) -> "TransactionId":
        if isinstance(content, str):
            content = content.encode("utf-8")
        return cls(index, hashlib.sha256(content).digest())

    @classmethod
    def with_anchor(cls, index: int, anchor: float, salt: bytes = b"") -> "TransactionId":
        """Build a digest whose anchor is ``anchor`` (to 64-bit resolution)."""
        if not 0.0 <= anchor <= 1.0:
            raise ValueError(f"anchor must lie in [0, 1], got {anchor}")
        head = min(int(anchor * _TWO_64), 2**64 - 1).to_bytes(8, "big")
        tail = hashlib.sha256(head + salt + index.to_bytes(8, "big")).digest()[:24]
        return cls(index, head + tail)


@dataclass
class PeerState:
    id: int
    role: Role = Role.HONEST
    estimates: dict = field(default_factory=dict)
    inbox: dict = field(default_factory=dict)

    @property
    def is_honest(self) -> bool:
        return self.role is Role.HONEST

    def deliver(self, tx: TransactionId, value: float) -> None:
        self.inbox.setdefault(tx, []).append(clamp_unit(value))

    def clear_inbox(self) -> None:
        self.inbox.clear()


@dataclass(frozen=True)
class SamplePlan:
    sender: int
    recipients: np.ndarray


class StreamTable:
    """Deterministic generators keyed by (seed, purpose, ...).

    ``peer(tx, round, peer)`` serves one peer's draws for one transaction in
    one round; round 0 is the initialization round. ``role_permutation``
    is the seed-only stream that decides which peers are Byzantine.
    """

    _ROLES = 0x524F4C45
    _PEER = 0x50454552

    def __init__(self, seed: int):
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed

    def peer(self, tx: TransactionId, round_: int, peer: int) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed, self._PEER, tx.stream_key, round_, peer])
        return np.random.Generator(np.random.PCG64(ss))

    def role_permutation(self, n_peers: int) -> np.ndarray:
        ss = np.random.SeedSequence([self.seed, self._ROLES, n_peers])
        return np.random.Generator(np.random.PCG64(ss)).permutation(n_peers)


def clamp_unit(x: float) -> float:
    return min(1.0, max(0.0, x))


def median(values: Sequence[float]) -> float:
    """Middle element, or the mean of the two middle elements for even length."""
    if len(values) == 0:
        raise ValueError("median of an empty list")
    s = sorted(values)
    n = len(s)
    # (a + a) / 2 == a exactly, so odd and even share one expression.
    return (s[(n - 1) // 2] + s[n // 2]) / 2


def activate(aggregated: float) -> float:
    """Activation applied to the aggregate; the protocol uses the identity."""
    return aggregated


def sample_size(n_peers: int, sample_ratio: float) -> int:
    # half-up rounding, capped by the number of other peers
    k = math.floor(sample_ratio * (n_peers - 1) + 0.5)
    return min(n_peers - 1, max(1, k))


def draw_sample(sender: int, n_peers: int, sample_ratio: float, rng) -> SamplePlan:
    """Uniform random recipients among the other ``n_peers - 1`` peers."""
    if n_peers < 2:
        raise ValueError(f"need at least 2 peers to sample, got {n_peers}")
    if not 0.0 < sample_ratio <= 1.0:
        raise ValueError(f"sample_ratio must lie in (0, 1], got {sample_ratio}")
    k = sample_size(n_peers, sample_ratio)
    raw = np.asarray(rng.choice(n_peers - 1, size=k, replace=False), dtype=np.int64)
    # skip over the sender's own index
    return SamplePlan(sender, raw + (raw >= sender))


def honest_update(state: PeerState, tx: TransactionId) -> float:
    received = state.inbox.get(tx)
    if not received:
        return state.estimates[tx]
    return activate(median(received))


def byzantine_emit(tx: TransactionId, rng) -> float:
    """Default fault model: a fresh uniform value in [0, 1) per round and transaction."""
    return float(rng.random())


ByzantineStrategy = Callable[[TransactionId, object], float]


def initialize_estimate(
    peer: int,
    tx: TransactionId,
    mode: str,
    anchor: float,
    jitter: float,
    rng=None,
    n_peers: int | None = None,
) -> float:
    if not 0.0 <= anchor <= 1.0:
        raise ValueError(f"anchor must lie in [0, 1], got {anchor}")
    if jitter < 0.0:
        raise ValueError(f"jitter must be non-negative, got {jitter}")
    if mode == "uniform-grid":
        if n_peers is None or n_peers < 2:
            raise ValueError("uniform-grid initialization needs n_peers >= 2")
        offset = (peer / (n_peers - 1) - 0.5) * 2.0 * jitter
    elif mode == "random":
        offset = float(rng.uniform(-jitter, jitter)) if jitter > 0.0 else 0.0
    else:
        raise ValueError(f"unknown init mode {mode!r}; expected one of {INIT_MODES}")
    return clamp_unit(anchor + offset)
