"""Per-round distribution statistics and CSV/JSON artifacts."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "RoundStats",
    "collect",
    "emit_csv",
    "read_csv",
    "sibling_paths",
    "outcome_to_dict",
    "write_outcome_json",
    "fmt",
]

MAIN_HEADER = ["round", "tx", "mean", "std", "min", "max", "spread", "converged"]
HIST_HEADER = ["round", "tx", "bin_index", "count"]
BYZ_HEADER = ["round", "tx", "value"]


@dataclass
class RoundStats:
    round: int
    tx: object
    mean: float
    std: float
    min: float
    max: float
    spread: float
    histogram: np.ndarray
    converged: bool
    byzantine_values: list | None = field(default=None)


def collect(world, tx, round_, config, converged: bool | None = None) -> RoundStats:
    """Summarize honest estimates for ``tx``.

    Byzantine emissions are attached when the run has faults configured.
    ``converged`` overrides the spread test, letting the harness latch it.
    """
    h = world.honest_values(tx)
    lo, hi = float(h.min()), float(h.max())
    spread = hi - lo
    counts, _ = np.histogram(h, bins=config.histogram_bins, range=(0.0, 1.0))
    if converged is None:
        converged = spread <= config.epsilon
    byz = None
    if config.byzantine_fraction > 0:
        byz = [float(v) for v in world.emitted.get(tx, ())]
    return RoundStats(
        round=round_,
        tx=tx,
        mean=float(h.mean()),
        std=float(h.std()),
        min=lo,
        max=hi,
        spread=spread,
        histogram=counts,
        converged=bool(converged),
        byzantine_values=byz,
    )


def fmt(x: float) -> str:
    return format(x, ".9g")


def _tx_label(tx) -> int:
    return getattr(tx, "index", tx)


def sibling_paths(destination) -> tuple[Path, Path, Path]:
    """``run.csv`` -> (``run.csv``, ``run.hist.csv``, ``run.byz.csv``)."""
    dest = Path(destination)
    stem = dest.name[:-4] if dest.name.endswith(".csv") else dest.name
    return dest, dest.with_name(stem + ".hist.csv"), dest.with_name(stem + ".byz.csv")


def emit_csv(history, destination) -> list[Path]:
    """Write the main, histogram and (with faults) Byzantine CSV files.

    Rows are ordered by (tx index, round). Returns the paths written.
    """
    if not history:
        raise ValueError("history is empty; nothing to emit")
    rows = sorted(history, key=lambda s: (_tx_label(s.tx), s.round))
    main, hist, byz = sibling_paths(destination)
    with_byz = any(s.byzantine_values is not None for s in rows)
    written = []
    try:
        with open(main, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(MAIN_HEADER)
            for s in rows:
                w.writerow([
                    s.round, _tx_label(s.tx), fmt(s.mean), fmt(s.std), fmt(s.min),
                    fmt(s.max), fmt(s.spread), "true" if s.converged else "false",
                ])
        written.append(main)
        with open(hist, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(HIST_HEADER)
            for s in rows:
                label = _tx_label(s.tx)
                for b, c in enumerate(s.histogram):
                    w.writerow([s.round, label, b, int(c)])
        written.append(hist)
        if with_byz:
            with open(byz, "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(BYZ_HEADER)
                for s in rows:
                    for v in s.byzantine_values or ():
                        w.writerow([s.round, _tx_label(s.tx), fmt(v)])
            written.append(byz)
    except OSError as exc:
        raise OSError(f"failed writing report to {destination}: {exc}") from exc
    return written


def read_csv(path) -> list[dict]:
    """Parse a main report file back into typed rows."""
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append({
                "round": int(row["round"]),
                "tx": int(row["tx"]),
                **{k: float(row[k]) for k in ("mean", "std", "min", "max", "spread")},
                "converged": row["converged"] == "true",
            })
    return out


def outcome_to_dict(outcome, config) -> dict:
    txs = []
    for tx in config.transactions:
        o = outcome.per_tx[tx]
        txs.append({
            "index": tx.index,
            "digest": tx.digest.hex(),
            "anchor": tx.anchor,
            "converged": o.converged,
            "rounds_used": o.rounds_used,
            "final_value": float(o.final_value),
            "final_spread": float(o.final_spread),
        })
    return {
        "config": {
            "n_peers": config.n_peers,
            "sample_ratio": config.sample_ratio,
            "epsilon": config.epsilon,
            "byzantine_fraction": config.byzantine_fraction,
            "seed": config.seed,
            "init_mode": config.init_mode,
            "jitter": config.jitter,
            "max_rounds": config.max_rounds,
            "record_history": config.record_history,
        },
        "transactions": txs,
        "package_order": [tx.index for tx in outcome.package_order],
        "collisions": [[a.index, b.index] for a, b in outcome.collisions],
        "all_converged": outcome.all_converged,
    }


def write_outcome_json(outcome, config, destination) -> Path:
    dest = Path(destination)
    try:
        with open(dest, "w", encoding="utf-8") as f:
            json.dump(outcome_to_dict(outcome, config), f, indent=2)
            f.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing outcome to {dest}: {exc}") from exc
    return dest
