"""Synchronous round driver over all peers and transaction instances."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .protocol import (
    INIT_MODES,
    ByzantineStrategy,
    PeerState,
    Role,
    StreamTable,
    TransactionId,
    activate,
    byzantine_emit,
    clamp_unit,
    draw_sample,
    initialize_estimate,
    median,
    sample_size,
)
from .reporting import RoundStats, collect

__all__ = [
    "ConfigError",
    "SimConfig",
    "World",
    "TxOutcome",
    "ConsensusOutcome",
    "byzantine_count",
    "build_world",
    "initialize",
    "run_round",
    "check_convergence",
    "run_instance",
    "run_consensus",
    "capacity",
    "make_transactions",
]


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _default_transactions():
    return (TransactionId.with_anchor(0, 0.5),)


@dataclass(frozen=True)
class SimConfig:
    n_peers: int = 1000
    sample_ratio: float = 0.02
    epsilon: float = 0.01
    byzantine_fraction: float = 0.0
    seed: int = 0
    init_mode: str = "random"
    jitter: float = 0.5
    transactions: tuple = field(default_factory=_default_transactions)
    max_rounds: int = 100
    record_history: bool = True
    histogram_bins: int = 100

    def __post_init__(self):
        object.__setattr__(self, "transactions", tuple(self.transactions))
        if not isinstance(self.n_peers, int) or self.n_peers < 2:
            raise ConfigError("n_peers", f"must be an integer >= 2, got {self.n_peers!r}")
        if not 0.0 < self.sample_ratio <= 1.0:
            raise ConfigError("sample_ratio", f"must lie in (0, 1], got {self.sample_ratio!r}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon", f"must lie in (0, 1), got {self.epsilon!r}")
        if not 0.0 <= self.byzantine_fraction < 1.0:
            raise ConfigError(
                "byzantine_fraction", f"must lie in [0, 1), got {self.byzantine_fraction!r}"
            )
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.init_mode not in INIT_MODES:
            raise ConfigError("init_mode", f"must be one of {INIT_MODES}, got {self.init_mode!r}")
        if not self.jitter >= 0.0:
            raise ConfigError("jitter", f"must be >= 0, got {self.jitter!r}")
        if not isinstance(self.max_rounds, int) or self.max_rounds < 1:
            raise ConfigError("max_rounds", f"must be an integer >= 1, got {self.max_rounds!r}")
        if not isinstance(self.histogram_bins, int) or self.histogram_bins < 1:
            raise ConfigError("histogram_bins", f"must be an integer >= 1, got {self.histogram_bins!r}")
        if not self.transactions:
            raise ConfigError("transactions", "at least one transaction is required")
        if len({t.index for t in self.transactions}) != len(self.transactions):
            raise ConfigError("transactions", "transaction indices must be unique")
        if byzantine_count(self.n_peers, self.byzantine_fraction) >= self.n_peers:
            raise ConfigError("byzantine_fraction", "leaves no honest peer")

    @property
    def expected_inbox(self) -> int:
        return sample_size(self.n_peers, self.sample_ratio)


def byzantine_count(n_peers: int, fraction: float) -> int:
    # tolerance guards products like 0.07 * 100 = 7.000000000000001 and 0.29 * 100 = 28.999...
    return math.floor(fraction * n_peers + 1e-9)


@dataclass
class World:
    """Per-peer state for every transaction, stored column-wise."""

    n_peers: int
    byzantine: np.ndarray
    estimates: dict = field(default_factory=dict)
    emitted: dict = field(default_factory=dict)

    @property
    def honest(self) -> np.ndarray:
        return ~self.byzantine

    def honest_values(self, tx: TransactionId) -> np.ndarray:
        return self.estimates[tx][~self.byzantine]

    def peer_state(self, peer: int) -> PeerState:
        role = Role.BYZANTINE if self.byzantine[peer] else Role.HONEST
        return PeerState(
            peer, role, {tx: float(v[peer]) for tx, v in self.estimates.items()}, {}
        )

    def fork(self) -> "World":
        """Same roles, no transaction state."""
        return World(self.n_peers, self.byzantine)


def build_world(config: SimConfig, streams=None) -> World:
    streams = streams or StreamTable(config.seed)
    n_byz = byzantine_count(config.n_peers, config.byzantine_fraction)
    mask = np.zeros(config.n_peers, dtype=bool)
    mask[np.asarray(streams.role_permutation(config.n_peers))[:n_byz]] = True
    return World(config.n_peers, mask)


def initialize(world: World, tx: TransactionId, config: SimConfig, streams=None) -> World:
    streams = streams or StreamTable(config.seed)
    n = world.n_peers
    anchor = tx.anchor
    values = np.empty(n)
    for i in range(n):
        rng = streams.peer(tx, 0, i) if config.init_mode == "random" else None
        values[i] = initialize_estimate(i, tx, config.init_mode, anchor, config.jitter, rng, n)
    world.estimates[tx] = values
    world.emitted[tx] = np.empty(0)
    return world


def _grouped_median(recipients: np.ndarray, values: np.ndarray, n_peers: int):
    """Median of the values delivered to each peer, plus inbox sizes."""
    order = np.lexsort((values, recipients))
    sv = values[order]
    counts = np.bincount(recipients, minlength=n_peers)
    starts = np.cumsum(counts) - counts
    has = counts > 0
    lo = starts + (counts - 1) // 2
    hi = starts + counts // 2
    med = np.full(n_peers, np.nan)
    med[has] = (sv[lo[has]] + sv[hi[has]]) / 2
    return med, counts


def run_round(
    world: World,
    tx: TransactionId,
    round_: int,
    config: SimConfig,
    streams=None,
    strategy: ByzantineStrategy = byzantine_emit,
) -> World:
    """One synchronous broadcast-then-aggregate step for one transaction.

    Every peer samples recipients from its (tx, round, peer) stream and sends
    its estimate; Byzantine peers send ``strategy(tx, rng)`` instead, clamped
    to [0, 1] on receipt. Honest peers then replace their estimate with the
    activated median of what they received and hold it on an empty inbox.
    """
    if round_ < 1:
        raise ValueError(f"rounds start at 1, got {round_}")
    streams = streams or StreamTable(config.seed)
    n = world.n_peers
    current = world.estimates[tx]
    byz = world.byzantine
    k = sample_size(n, config.sample_ratio)

    recipients = np.empty((n, k), dtype=np.int64)
    sent = current.copy()
    emitted = []
    for i in range(n):
        rng = streams.peer(tx, round_, i)
        recipients[i] = draw_sample(i, n, config.sample_ratio, rng).recipients
        if byz[i]:
            v = float(strategy(tx, rng))
            emitted.append(v)
            sent[i] = clamp_unit(v)

    med, counts = _grouped_median(recipients.ravel(), np.repeat(sent, k), n)
    update = (counts > 0) & ~byz
    new = current.copy()
    new[update] = activate(med[update])
    world.estimates[tx] = new
    world.emitted[tx] = np.asarray(emitted)
    return world


def check_convergence(world: World, tx: TransactionId, epsilon: float) -> bool:
    """Honest spread (max - min) within epsilon; Byzantine peers are ignored."""
    h = world.honest_values(tx)
    return float(h.max() - h.min()) <= epsilon


@dataclass(frozen=True)
class TxOutcome:
    converged: bool
    rounds_used: int
    final_value: float
    final_spread: float


@dataclass
class ConsensusOutcome:
    per_tx: dict
    package_order: list
    collisions: list
    epsilon: float

    @property
    def all_converged(self) -> bool:
        return all(o.converged for o in self.per_tx.values())


def run_instance(
    config: SimConfig,
    tx: TransactionId,
    world: World | None = None,
    streams=None,
    strategy: ByzantineStrategy = byzantine_emit,
):
    """Run one transaction to convergence or ``max_rounds``.

    Returns ``(TxOutcome, history)``; history is empty unless
    ``config.record_history``.
    """
    streams = streams or StreamTable(config.seed)
    world = (world or build_world(config, streams)).fork()
    initialize(world, tx, config, streams)

    history: list[RoundStats] = []
    converged = check_convergence(world, tx, config.epsilon)
    if config.record_history:
        history.append(collect(world, tx, 0, config, converged=converged))
    rounds = 0
    while not converged and rounds < config.max_rounds:
        rounds += 1
        run_round(world, tx, rounds, config, streams, strategy)
        converged = check_convergence(world, tx, config.epsilon)
        if config.record_history:
            history.append(collect(world, tx, rounds, config, converged=converged))

    h = np.sort(world.honest_values(tx))
    outcome = TxOutcome(
        converged=converged,
        rounds_used=rounds,
        final_value=float(median(h)),
        final_spread=float(h[-1] - h[0]),
    )
    return outcome, history


def _package_order(per_tx: dict, epsilon: float):
    order = sorted(per_tx, key=lambda t: (per_tx[t].final_value, t.index))
    collisions = []
    for i, a in enumerate(order):
        for b in order[i + 1:]:
            if per_tx[b].final_value - per_tx[a].final_value > epsilon:
                break
            collisions.append((a, b))
    return order, collisions


def run_consensus(
    config: SimConfig,
    streams=None,
    strategy: ByzantineStrategy = byzantine_emit,
    workers: int | None = None,
):
    """Run every transaction instance; returns ``(ConsensusOutcome, history)``.

    Instances share only the (read-only) role assignment, so ``workers > 1``
    yields results bit-identical to a sequential run.
    """
    streams = streams or StreamTable(config.seed)
    world = build_world(config, streams)

    def one(tx):
        return run_instance(config, tx, world, streams, strategy)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, config.transactions))
    else:
        results = [one(tx) for tx in config.transactions]

    per_tx = {tx: r[0] for tx, r in zip(config.transactions, results)}
    history = [s for _, hist in results for s in hist]
    order, collisions = _package_order(per_tx, config.epsilon)
    return ConsensusOutcome(per_tx, order, collisions, config.epsilon), history


def capacity(epsilon: float) -> int:
    """Number of epsilon-separated package slots in [0, 1]."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    return math.floor(1.0 / epsilon * (1.0 + 1e-12))


def make_transactions(count: int, seed: int = 0, min_gap: float = 0.0, max_tries: int = 100_000):
    """Content-addressed transactions whose anchors are pairwise >= ``min_gap`` apart.

    Digests are sha256 over ``(seed, index, nonce)``; the nonce is bumped
    until the anchor clears every earlier one. A single transaction is
    anchored at 0.5.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if count == 1:
        return (TransactionId.with_anchor(0, 0.5),)
    txs: list[TransactionId] = []
    tries = 0
    for i in range(count):
        nonce = 0
        while True:
            tries += 1
            if tries > max_tries:
                raise ValueError(
                    f"could not place {count} anchors at min_gap={min_gap}; lower the gap"
                )
            digest = hashlib.sha256(f"eda-tx:{seed}:{i}:{nonce}".encode()).digest()
            cand = TransactionId(i, digest)
            if all(abs(cand.anchor - t.anchor) >= min_gap for t in txs):
                txs.append(cand)
                break
            nonce += 1
    return tuple(txs)
