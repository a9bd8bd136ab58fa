import json

import pytest

from eda_sim.cli import DEFAULTS, PRESETS, build_parser, main, parse_config, run_preset
from eda_sim.harness import ConfigError, SimConfig


def test_empty_input_gives_defaults():
    assert parse_config([]) == SimConfig()
    c = parse_config([])
    assert (c.n_peers, c.sample_ratio, c.epsilon, c.byzantine_fraction, c.seed) == (1000, 0.02, 0.01, 0.0, 0)
    assert (c.init_mode, c.jitter, c.max_rounds, c.record_history) == ("random", 0.5, 100, True)


def test_paper_parallel_configuration():
    c = parse_config(["--peers", "20000", "--sample-ratio", "0.01", "--epsilon", "0.01", "--byzantine", "0.01"])
    assert (c.n_peers, c.sample_ratio, c.epsilon, c.byzantine_fraction) == (20000, 0.01, 0.01, 0.01)
    assert c.expected_inbox == 200


@pytest.mark.parametrize("argv,field", [
    (["--epsilon", "1.5"], "epsilon"),
    (["--peers", "1"], "peers"),
    (["--sample-ratio", "0"], "sample-ratio"),
    (["--byzantine", "1"], "byzantine"),
    (["--transactions", "0"], "transactions"),
])
def test_rejections_name_the_flag(argv, field):
    with pytest.raises(ConfigError) as err:
        parse_config(argv)
    assert err.value.field == field


def test_main_reports_bad_value(capsys, tmp_path):
    assert main(["--epsilon", "1.5", "--out", str(tmp_path / "o")]) == 2
    assert "epsilon" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "exp.conf"
    cfg.write_text("# desk run\npeers = 300\nsample-ratio = 0.05  # M ~ 15\nno-history = true\nseed = 9\n")
    c = parse_config(["--config", str(cfg), "--seed", "4"])
    assert (c.n_peers, c.sample_ratio, c.record_history, c.seed) == (300, 0.05, False, 4)


@pytest.mark.parametrize("text,field", [
    ("colour = blue\n", "colour"),
    ("peers = many\n", "peers"),
    ("no-history = maybe\n", "no-history"),
    ("peers 300\n", "config"),
])
def test_config_file_rejections(tmp_path, text, field):
    cfg = tmp_path / "bad.conf"
    cfg.write_text(text)
    with pytest.raises(ConfigError) as err:
        parse_config(["--config", str(cfg)])
    assert err.value.field == field


def test_preset_then_flags():
    c = parse_config(["--preset", "fig4-parallel-desk", "--seed", "3"])
    assert (c.n_peers, c.byzantine_fraction, c.seed, len(c.transactions)) == (2000, 0.01, 3, 10)


def test_help_lists_every_flag_with_default():
    text = build_parser().format_help()
    flat = " ".join(text.split())
    for key, default in DEFAULTS.items():
        assert f"--{key}" in text
        assert f"(default: {default})" in flat
    for extra in ("--preset", "--config"):
        assert extra in text


def test_preset_names():
    base = {"fig1-uniform", "fig2-random", "fig4-parallel"}
    assert set(PRESETS) == base | {n + "-desk" for n in base}
    full = PRESETS["fig4-parallel"].config
    assert (full.n_peers, full.sample_ratio, full.byzantine_fraction, full.epsilon) == (20000, 0.01, 0.01, 0.01)


def test_fig1_desk_preset(tmp_path):
    assert run_preset("fig1-uniform-desk", out=tmp_path) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["fig1-uniform-desk.csv", "fig1-uniform-desk.hist.csv", "fig1-uniform-desk.outcome.json"]


def test_fig4_desk_preset(tmp_path):
    assert main(["--preset", "fig4-parallel-desk", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "fig4-parallel-desk.outcome.json").read_text())
    assert len(doc["package_order"]) == 10
    assert doc["collisions"] == []
    assert (tmp_path / "fig4-parallel-desk.byz.csv").exists()


def test_unknown_preset(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["--preset", "fig9", "--out", str(tmp_path / "o")])
    assert err.value.code != 0
    assert not (tmp_path / "o").exists()
    with pytest.raises(ConfigError):
        run_preset("fig9", out=tmp_path / "o")
    assert not (tmp_path / "o").exists()


def test_unknown_preset_in_config_file(tmp_path):
    cfg = tmp_path / "p.conf"
    cfg.write_text("preset = fig9\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_exit_status_tracks_convergence(tmp_path):
    argv = ["--peers", "200", "--sample-ratio", "0.05", "--out", str(tmp_path)]
    assert main(argv + ["--max-rounds", "1", "--epsilon", "1e-9"]) == 1
    doc = json.loads((tmp_path / "eda.outcome.json").read_text())
    assert doc["all_converged"] is False
    assert main(argv) == 0
    doc = json.loads((tmp_path / "eda.outcome.json").read_text())
    assert doc["all_converged"] is True


def test_no_history_writes_only_outcome(tmp_path):
    assert main(["--peers", "100", "--no-history", "--out", str(tmp_path)]) == 0
    assert [p.name for p in tmp_path.iterdir()] == ["eda.outcome.json"]


def test_same_invocation_same_bytes(tmp_path):
    argv = ["--peers", "300", "--sample-ratio", "0.05", "--byzantine", "0.02", "--transactions", "3",
            "--jitter", "0.05", "--seed", "12"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(files) == 4
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
