import csv

import pytest

from specmap.exceptions import ConvergenceError
from specmap.experiments import EXPERIMENTS
from specmap.tool.run import EXIT_CONFIG, EXIT_ERROR, EXIT_NUMERICAL, main

CONFIG = """\
k_spec = ["50%"]
partiality = ["khop"]
partiality_levels = [0.5]
landmarks = 0
seeds = 2
workers = 2
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "matching.toml"
    path.write_text(CONFIG)
    return path


def test_matching_eval(config, tmp_path, capsys):
    out = tmp_path / "results"
    main(["matching-eval", "--config", str(config), "--out", str(out)])

    with (out / "results.csv").open() as f:
        rows = list(csv.DictReader(f))
    assert {r["metric"] for r in rows} == {"map_gt"}
    assert len(rows) == 2
    assert (out / "summary.csv").exists()
    assert (out / "config.snapshot.json").exists()
    assert "Results written to" in capsys.readouterr().err


def test_dump(config, tmp_path):
    out = tmp_path / "results"
    main(["transfer-sweep", "--config", str(config), "--out", str(out), "--dump", "--workers", "1"])
    assert list((out / "matrices").glob("map_seed*_k50.spmp"))


def test_output_dir_from_environment(config, tmp_path, monkeypatch):
    monkeypatch.setattr("specmap.env.env_settings.SPECMAP_OUTPUT_DIR", str(tmp_path / "env-out"), raising=False)
    main(["--log-level", "warning", "transfer-sweep", "--config", str(config)])
    assert (tmp_path / "env-out" / "results.csv").exists()


def test_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("rewire_fractions = []\n")
    with pytest.raises(SystemExit) as excinfo:
        main(["rewire-robustness", "--config", str(path), "--out", str(tmp_path)])
    assert excinfo.value.code == EXIT_CONFIG
    assert capsys.readouterr().err.startswith("Error: ")


def test_unknown_dataset(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"dataset": "zachary"}')
    with pytest.raises(SystemExit) as excinfo:
        main(["transfer-sweep", "--config", str(path), "--out", str(tmp_path)])
    assert excinfo.value.code == EXIT_CONFIG


def test_bad_graph_file(tmp_path):
    graph = tmp_path / "edges.txt"
    graph.write_text("0 1\n1 2 3 4\n")
    path = tmp_path / "cfg.toml"
    path.write_text(f'graph_path = "{graph.as_posix()}"\n')
    with pytest.raises(SystemExit) as excinfo:
        main(["transfer-sweep", "--config", str(path), "--out", str(tmp_path)])
    assert excinfo.value.code == EXIT_ERROR


def test_missing_subcommand():
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2


SMALL_ALL = """\
k_spec = ["30%", "50%"]
partiality = ["khop"]
partiality_levels = [0.6]
rewire_fractions = [0.1]
map_size = 8
rwpe_dim = 6
landmarks = 10
seeds = 2
workers = 2
"""


@pytest.mark.parametrize("command", sorted(EXPERIMENTS))
def test_results_are_reproducible(command, tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(SMALL_ALL)
    main([command, "--config", str(path), "--out", str(tmp_path / "a")])
    main([command, "--config", str(path), "--out", str(tmp_path / "b")])

    first = (tmp_path / "a" / "results.csv").read_bytes()
    assert first.count(b"\n") > 1
    assert first == (tmp_path / "b" / "results.csv").read_bytes()


def test_numerical_failure_exit_code(config, tmp_path, monkeypatch, capsys):
    def unconverged(*args, **kwargs):
        raise ConvergenceError("Lanczos converged 3 of 17 eigenpairs before the iteration cap")

    monkeypatch.setattr("specmap.experiments.graph_eigenbasis", unconverged)
    with pytest.raises(SystemExit) as excinfo:
        main(["transfer-sweep", "--config", str(config), "--out", str(tmp_path)])
    assert excinfo.value.code == EXIT_NUMERICAL
    assert "Lanczos converged" in capsys.readouterr().err
