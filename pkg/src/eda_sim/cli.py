"""Command-line experiment runner.

Settings resolve in order: built-in defaults, then ``--preset``, then the
``--config`` file, then explicit flags. The config file is flat
``key = value`` text whose keys are the long flag names without dashes
(``sample-ratio = 0.01``, ``no-history = true``); ``#`` starts a comment.

Exit status: 0 when every transaction converged, 1 when any did not,
2 for usage, configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .harness import ConfigError, SimConfig, make_transactions, run_consensus
from .reporting import emit_csv, write_outcome_json

DEFAULTS = {
    "peers": 1000,
    "sample-ratio": 0.02,
    "epsilon": 0.01,
    "byzantine": 0.0,
    "seed": 0,
    "init": "random",
    "jitter": 0.5,
    "transactions": 1,
    "max-rounds": 100,
    "no-history": False,
    "out": "results",
    "workers": 1,
}

_TYPES = {
    "peers": int,
    "sample-ratio": float,
    "epsilon": float,
    "byzantine": float,
    "seed": int,
    "init": str,
    "jitter": float,
    "transactions": int,
    "max-rounds": int,
    "no-history": bool,
    "out": str,
    "workers": int,
    "preset": str,
}

# SimConfig field -> flag, for error messages
_FIELD_FLAGS = {
    "n_peers": "peers",
    "sample_ratio": "sample-ratio",
    "epsilon": "epsilon",
    "byzantine_fraction": "byzantine",
    "seed": "seed",
    "init_mode": "init",
    "jitter": "jitter",
    "transactions": "transactions",
    "max_rounds": "max-rounds",
}


def build_config(settings: dict) -> SimConfig:
    """Turn resolved flat settings into a validated SimConfig."""
    count = settings["transactions"]
    if count < 1:
        raise ConfigError("transactions", f"must be >= 1, got {count}")
    epsilon = settings["epsilon"]
    # spread anchors well beyond epsilon while it still fits in [0, 1]
    min_gap = min(3 * epsilon, 0.5 / count)
    try:
        txs = make_transactions(count, settings["seed"], min_gap)
    except ValueError as exc:
        raise ConfigError("transactions", str(exc)) from exc
    return SimConfig(
        n_peers=settings["peers"],
        sample_ratio=settings["sample-ratio"],
        epsilon=epsilon,
        byzantine_fraction=settings["byzantine"],
        seed=settings["seed"],
        init_mode=settings["init"],
        jitter=settings["jitter"],
        transactions=txs,
        max_rounds=settings["max-rounds"],
        record_history=not settings["no-history"],
    )


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    settings: dict
    description: str

    @property
    def config(self) -> SimConfig:
        return build_config({**DEFAULTS, **self.settings})


_FULL = {"peers": 20000, "sample-ratio": 0.01, "epsilon": 0.01}
_DESK = {"peers": 1000, "sample-ratio": 0.02, "epsilon": 0.01}
_DESK_FAULTS = {"peers": 2000, "sample-ratio": 0.05, "epsilon": 0.01}
_PARALLEL = {"byzantine": 0.01, "init": "random", "jitter": 0.02, "transactions": 10}

PRESETS = {
    p.name: p
    for p in [
        ExperimentPreset(
            "fig1-uniform",
            {**_FULL, "init": "uniform-grid", "jitter": 0.5},
            "20k peers, 1% sample ratio, evenly spaced initial orders over [0, 1]",
        ),
        ExperimentPreset(
            "fig2-random",
            {**_FULL, "init": "random", "jitter": 0.5},
            "20k peers, 1% sample ratio, uniformly random initial orders",
        ),
        ExperimentPreset(
            "fig4-parallel",
            {**_FULL, **_PARALLEL},
            "20k peers, 1% Byzantine, 10 transactions agreed in parallel",
        ),
        ExperimentPreset(
            "fig1-uniform-desk",
            {**_DESK, "init": "uniform-grid", "jitter": 0.5},
            "1k-peer variant of fig1-uniform",
        ),
        ExperimentPreset(
            "fig2-random-desk",
            {**_DESK, "init": "random", "jitter": 0.5},
            "1k-peer variant of fig2-random",
        ),
        ExperimentPreset(
            "fig4-parallel-desk",
            {**_DESK_FAULTS, **_PARALLEL},
            "2k-peer variant of fig4-parallel (5% sample ratio keeps inboxes near 100)",
        ),
    ]
}


def _coerce(key: str, raw, source: str):
    typ = _TYPES[key]
    if typ is bool:
        if isinstance(raw, bool):
            return raw
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean in {source}, got {raw!r}")
    try:
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {typ.__name__} in {source}, got {raw!r}") from None


def read_config_file(path) -> dict:
    settings = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(key, f"unknown key in {path}:{lineno}")
        settings[key] = _coerce(key, value, f"{path}:{lineno}")
    return settings


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="eda-sim",
        description="Simulate epsilon-differential agreement by repeated median aggregation.",
        epilog="presets: " + ", ".join(PRESETS),
    )

    def add(flag, key, help_, **kw):
        p.add_argument(flag, dest=key, default=None, help=f"{help_} (default: {DEFAULTS[key]})", **kw)

    add("--peers", "peers", "number of peers", type=int)
    add("--sample-ratio", "sample-ratio", "fraction of other peers each peer sends to per round", type=float)
    add("--epsilon", "epsilon", "agreement tolerance on the honest spread, in (0, 1)", type=float)
    add("--byzantine", "byzantine", "fraction of Byzantine peers, in [0, 1)", type=float)
    add("--seed", "seed", "64-bit seed for every random stream", type=int)
    add("--init", "init", "initial order distribution", choices=["uniform-grid", "random"])
    add("--jitter", "jitter", "half-width of initial estimates around each anchor", type=float)
    add("--transactions", "transactions", "number of transactions agreed in parallel", type=int)
    add("--max-rounds", "max-rounds", "round cap per transaction", type=int)
    add("--out", "out", "output directory for artifacts")
    add("--workers", "workers", "threads for parallel transaction instances", type=int)
    p.add_argument("--no-history", dest="no-history", action="store_const", const=True, default=None,
                   help=f"skip per-round CSV reports (default: {DEFAULTS['no-history']})")
    p.add_argument("--preset", default=None, choices=list(PRESETS),
                   help="start from a named experiment preset (default: None)")
    p.add_argument("--config", default=None, help="flat key = value settings file (default: None)")
    return p


def resolve_settings(argv=None) -> tuple[dict, str | None]:
    """Merge defaults, preset, config file and flags; returns (settings, preset name)."""
    args = vars(build_parser().parse_args(argv))
    file_settings = read_config_file(args["config"]) if args["config"] else {}
    preset = args["preset"] or file_settings.pop("preset", None)
    if preset is not None and preset not in PRESETS:
        raise ConfigError("preset", f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    settings = dict(DEFAULTS)
    if preset:
        settings.update(PRESETS[preset].settings)
    settings.update(file_settings)
    settings.update({k: v for k, v in args.items() if k in DEFAULTS and v is not None})
    return settings, preset


def parse_config(argv=None) -> SimConfig:
    settings, _ = resolve_settings(argv)
    try:
        return build_config(settings)
    except ConfigError as exc:
        flag = _FIELD_FLAGS.get(exc.field, exc.field)
        raise ConfigError(flag, str(exc).split(": ", 1)[-1]) from None


def run(settings: dict, name: str) -> int:
    config = build_config(settings)
    outcome, history = run_consensus(config, workers=settings["workers"])
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    if history:
        emit_csv(history, out / f"{name}.csv")
    write_outcome_json(outcome, config, out / f"{name}.outcome.json")

    for tx in outcome.package_order:
        o = outcome.per_tx[tx]
        state = f"converged in {o.rounds_used} rounds" if o.converged else "did not converge"
        print(f"tx {tx.index}: {state}, value {o.final_value:.6f}, spread {o.final_spread:.3g}")
    if outcome.collisions:
        print(f"{len(outcome.collisions)} collisions within epsilon={config.epsilon}")
    return 0 if outcome.all_converged else 1


def run_preset(name: str, out=None, **overrides) -> int:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}")
    settings = {**DEFAULTS, **PRESETS[name].settings, **overrides}
    if out is not None:
        settings["out"] = str(out)
    return run(settings, name)


def main(argv=None) -> int:
    try:
        settings, preset = resolve_settings(argv)
        if settings["workers"] < 1:
            raise ConfigError("workers", f"must be >= 1, got {settings['workers']}")
        return run(settings, preset or "eda")
    except ConfigError as exc:
        flag = _FIELD_FLAGS.get(exc.field, exc.field)
        print(f"eda-sim: error: {flag}: {str(exc).split(': ', 1)[-1]}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"eda-sim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
