import csv

import pytest

from tetrys import calibration, cli, config

SMALL = ["--override", "traffic.packets=2000"]


def test_presets_listing(capsys):
    assert cli.main(["presets"]) == 0
    assert capsys.readouterr().out.split() == list(config.PRESETS)
    assert cli.main(["presets", "table4"]) == 0
    text = capsys.readouterr().out
    assert config.loads(text) == config.preset("table4")


def test_run_writes_csvs_and_summary(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--preset", "cbr", *SMALL, "--seed", "3",
                     "--out-dir", str(out)]) == 0
    line = capsys.readouterr().out.strip()
    for key in ("ILR=", "mean_redundancy=", "mean_kbps=", "on_time=", "degraded_intervals="):
        assert key in line
    for name in ("packets.csv", "timeline.csv", "events.csv", "scenario.ini"):
        assert (out / name).exists()
    saved = config.load(out / "scenario.ini")
    assert saved.run.seed == 3 and saved.traffic.packets == 2000


def test_run_from_config_file(tmp_path, capsys):
    path = tmp_path / "s.ini"
    cfg = config.preset("cbr")
    cfg.traffic.packets = 1000
    path.write_text(config.dumps(cfg))
    assert cli.main(["run", "--config", str(path)]) == 0
    assert capsys.readouterr().out.startswith("cbr: ILR=")


def test_config_errors_exit_nonzero_with_line(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[run]\nseed = 1\n[codec]\nredundancy = 2\n")
    assert cli.main(["run", "--config", str(path)]) == 2
    assert "line 4" in capsys.readouterr().err
    assert cli.main(["run", "--preset", "cbr", "--override", "codec.nope=1"]) == 2
    assert "unknown setting" in capsys.readouterr().err


def test_sweep_rows(tmp_path):
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--preset", "cbr", *SMALL, "--axis", "f", "--values", "2", "4",
                     "--seeds", "2", "-o", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["value", "seed", "ilr", "mean_redundancy"]
    assert [(r[0], r[1]) for r in rows[1:]] == [("2.0", "1"), ("2.0", "2"), ("4.0", "1"),
                                                 ("4.0", "2")]


def test_sweep_rejects_bad_requests():
    cfg = config.preset("cbr")
    with pytest.raises(ValueError):
        cli.sweep(cfg, "f", [], [1])
    with pytest.raises(ValueError):
        cli.sweep(cfg, "colour", [1], [1])
    fixed = config.preset("fig1")
    with pytest.raises(ValueError):
        cli.sweep(fixed, "min_th", [0.5], [1])
    assert len(cli.sweep(fixed, "feedback_loss", [0.0], [1])) == 1


def test_parallel_sweep_matches_serial():
    cfg = config.preset("cbr")
    cfg.traffic.packets = 1000
    serial = cli.sweep(cfg, "max_th", [0.95, 0.99], [1], jobs=1)
    assert cli.sweep(cfg, "max_th", [0.95, 0.99], [1], jobs=2) == serial


def test_compare_scheme_with_itself():
    cfg = config.preset("table4")
    cfg.traffic.duration_s = 12.0
    rows = cli.compare([cfg, config.loads(config.dumps(cfg))], labels=["a", "b"])
    a = [r[1:] for r in rows if r[0] == "a"]
    b = [r[1:] for r in rows if r[0] == "b"]
    assert a == b
    assert [r[0] for r in a] == [1, 2, "all"]


def test_compare_refuses_mismatched_channels(capsys):
    assert cli.main(["compare", "--preset", "table2", "--preset", "table4"]) == 2
    assert "refusing" in capsys.readouterr().err
    with pytest.raises(ValueError):
        cli.compare([config.preset("table4")])


def test_calibrate_is_deterministic(tmp_path, capsys):
    args = ["calibrate", "--p", "0.05", "--b", "3", "--n", "5", "--budget", "4000",
            "--seed", "2"]
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert cli.main(args + ["-o", str(a)]) == 0
    out = capsys.readouterr().out
    assert "KS=" in out and "wrote 1 entries" in out
    calibration.simulate_point.cache_clear()  # rerun the simulations for real
    assert cli.main(args + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_calibrate_warns_on_sparse_points(tmp_path, capsys):
    path = tmp_path / "t.txt"
    assert cli.main(["calibrate", "--p", "0.01", "--b", "1", "--n", "2", "--budget", "500",
                     "-o", str(path)]) == 0
    out = capsys.readouterr().out
    assert "SKIPPED" in out and "warnings" in out
    assert "wrote 0 entries" in out
