import json

import pytest

from fgiscan import __version__
from fgiscan.cli import RunConfig, main
from fgiscan.profiles import save_profiles
from fgiscan.synthetic import generate_corpus

SMALL_TOML = """\
[features]
dimension = 8
window = 2
negatives = 2
epochs = 1
"""


@pytest.fixture()
def small_config(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(SMALL_TOML)
    return str(path)


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc_info:
        main(["--version"])
    assert exc_info.value.code == 0
    assert capsys.readouterr().out.strip() == f"fgiscan {__version__}"


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc_info:
        main([])
    assert exc_info.value.code == 2


def test_errors_exit_2_with_message(tmp_path, capsys):
    rc = main(["--out", str(tmp_path / "out"), "extract",
               "--manifest", str(tmp_path / "missing.ldjson")])
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:")


def test_run_config_from_toml(tmp_path):
    path = tmp_path / "full.toml"
    path.write_text(
        "[features]\n"
        "dimension = 16\n"
        "embeddings_only = true\n"
        "[corpus]\n"
        "max_files = 123\n"
        "[registry]\n"
        "endpoint_npm = \"http://mirror.test/npm\"\n"
        "cache_dir = \"/tmp/cache\"\n"
        "[benchmark]\n"
        "train_fraction = 0.7\n"
        "[runner]\n"
        "command = \"sandbox-run {archive} {logfile}\"\n"
    )
    config = RunConfig.load(path, seed=9)
    assert config.features.dimension == 16
    assert config.features.embeddings_only is True
    assert config.features.seed == 9
    assert config.caps.max_files == 123
    assert config.caps.max_depth == 32  # untouched default
    assert config.endpoints == {"npm": "http://mirror.test/npm"}
    assert config.registry_cache_dir == "/tmp/cache"
    assert config.train_fraction == 0.7
    assert config.runner_command == "sandbox-run {archive} {logfile}"

    defaults = RunConfig.load(None)
    assert defaults.features.dimension == 100
    assert defaults.runner_command is None


def test_benchmark_synthetic_writes_artifacts(tmp_path, small_config, capsys):
    out = tmp_path / "out"
    rc = main([
        "--config", small_config, "--seed", "3", "--out", str(out),
        "benchmark", "--synthetic", "16", "10",
        "--modes", "metadata", "--algorithms", "decision_tree",
    ])
    assert rc == 0
    assert (out / "benchmark.csv").is_file()
    run_config = json.loads((out / "run_config.json").read_text())
    assert run_config["command"] == "benchmark"
    assert run_config["seed"] == 3
    assert run_config["features"]["dimension"] == 8
    assert "timestamp" not in run_config

    table = (out / "benchmark.csv").read_bytes().split(b"\r\n")
    assert table[0] == b"mode,algorithm,accuracy,precision,recall,f1"
    assert table[1].startswith(b"metadata,decision_tree,")


def test_benchmark_without_inputs_fails(tmp_path, capsys):
    rc = main(["--out", str(tmp_path / "out"), "benchmark"])
    assert rc == 2
    assert "benchmark needs" in capsys.readouterr().err


def test_train_then_detect_exit_codes(tmp_path, small_config, capsys):
    profiles = generate_corpus(12, 8, seed=6)
    profile_dir = tmp_path / "profiles"
    written = save_profiles(profiles, profile_dir)

    out = tmp_path / "out"
    rc = main([
        "--config", small_config, "--seed", "6", "--out", str(out),
        "train", "--profiles", str(profile_dir),
        "--algorithm", "decision_tree",
    ])
    assert rc == 0
    model_dir = out / "model"
    assert (model_dir / "classifier.fgic").is_file()
    assert (model_dir / "bundle" / "bundle.json").is_file()

    # the corpus contains malicious packages: detect must exit 1
    rc = main(["--out", str(out), "detect", "--model", str(model_dir),
               "--profiles", str(profile_dir)])
    assert rc == 1
    assert "flagged malicious" in capsys.readouterr().out

    # a single legitimate profile scans clean: exit 0
    legit_file = next(
        path for path, profile in zip(written, profiles)
        if profile.package.label.value == "legitimate"
    )
    rc = main(["--out", str(out), "detect", "--model", str(model_dir),
               "--profile", str(legit_file)])
    assert rc == 0


def test_analyze_writes_tables_only(tmp_path, capsys):
    profiles = generate_corpus(8, 6, seed=2)
    profile_dir = tmp_path / "profiles"
    save_profiles(profiles, profile_dir)

    out = tmp_path / "out"
    rc = main(["--out", str(out), "analyze", "--profiles", str(profile_dir)])
    assert rc == 0
    report = out / "report"
    assert (report / "url_summary.csv").is_file()
    assert (report / "summary.txt").is_file()
    assert not list(report.glob("*.png"))
