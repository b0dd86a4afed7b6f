"""Config, data ingestion, metrics, probe, CLI and run-folder round trips."""
import hashlib
import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from fedunlearn.cli import main
from fedunlearn.config import ConfigError, ExperimentConfig, format_config, load_config, parse_config
from fedunlearn.data import load_delimited, load_idx_pair, make_blob_clients, read_idx
from fedunlearn.driver import load_run, run_unlearning_scenario, save_run, unlearn_loaded_run, verify_run
from fedunlearn.flcore import GlobalModel
from fedunlearn.metrics import MetricsRecord, emit_metrics, load_metrics
from fedunlearn.mia import mia_probe
from fedunlearn.models import Architecture

SMALL_SETS = [
    "--set", "clients=4",
    "--set", "rounds=3",
    "--set", "local_epochs=2",
    "--set", "samples_per_client=45",
    "--set", "target_samples=45",
    "--set", "test_samples=90",
    "--set", "target_holdout=30",
    "--set", "lambda_bits=32",
]

SMALL_KW = dict(
    clients=4, rounds=3, local_epochs=2, samples_per_client=45,
    target_samples=45, test_samples=90, target_holdout=30, lambda_bits=32,
)


# ---- configuration ------------------------------------------------------------


def test_config_format_parse_round_trip():
    cfg = ExperimentConfig(scenario="tamper", seed=9, clients=6, targets=(1, 2))
    text = format_config(cfg)
    again = parse_config(text)
    assert again == cfg


def test_parse_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        parse_config("schema_version = 1\nbogus_knob = 3\n")


def test_parse_config_requires_schema_version_when_non_empty():
    with pytest.raises(ConfigError):
        parse_config("scenario = honest\n")
    # empty text is the CLI defaults path and needs no version stamp
    assert parse_config("", {"seed": "4"}).seed == 4


def test_parse_config_validates_values():
    with pytest.raises(ConfigError):
        parse_config("", {"scenario": "nonsense"})
    with pytest.raises(ConfigError):
        parse_config("", {"rounds": "0"})
    with pytest.raises(ConfigError):
        parse_config("", {"targets": "12"})  # out of range for 10 clients
    with pytest.raises(ConfigError):
        parse_config("", {"target_samples": "-5"})
    with pytest.raises(ConfigError):
        parse_config("", {"consensus": "postage-stamp"})


def test_load_config_reads_files(tmp_path):
    cfg = ExperimentConfig(scenario="honest", seed=3)
    path = tmp_path / "run.cfg"
    path.write_text(format_config(cfg), encoding="utf-8")
    assert load_config(path) == cfg
    assert load_config(path, {"seed": "8"}).seed == 8


def test_shipped_presets_parse():
    desk = load_config("configs/desk.cfg")
    assert desk.clients == 10 and desk.rounds == 20
    full = load_config("configs/full.cfg")
    assert full.clients == 50 and full.rounds == 40 and full.time_interval == 2


# ---- synthetic data -----------------------------------------------------------


def test_blob_shards_and_eval_splits():
    fed = make_blob_clients(
        5, target_ids=("c0",), samples_per_client=60, target_samples=120,
        test_samples=90, target_holdout=33, seed=4,
    )
    assert sorted(fed.clients) == [f"c{i}" for i in range(5)]
    assert len(fed.clients["c0"]) == 120
    assert all(len(fed.clients[f"c{i}"]) == 60 for i in range(1, 5))
    # size weighting follows shard length
    assert fed.clients["c0"].weight == 120.0
    assert fed.test_X.shape == (90, 2)
    assert fed.target_holdout_X.shape == (33, 2)


def test_blob_target_distribution_is_rotated():
    fed = make_blob_clients(
        4, target_ids=("c0",), samples_per_client=300, noise_sigma=0.2,
        target_shift=1.0, seed=1,
    )
    target_mean_0 = fed.clients["c0"].X[fed.clients["c0"].y == 0].mean(axis=0)
    retained_mean_0 = fed.clients["c1"].X[fed.clients["c1"].y == 0].mean(axis=0)
    assert np.linalg.norm(target_mean_0 - retained_mean_0) > 1.0


def test_blob_uniform_weight_mode():
    fed = make_blob_clients(
        3, target_ids=(), samples_per_client=30, weight_mode="uniform", seed=0
    )
    assert {c.weight for c in fed.clients.values()} == {1.0}


def test_blob_determinism_by_seed():
    a = make_blob_clients(3, target_ids=("c0",), samples_per_client=30, seed=5)
    b = make_blob_clients(3, target_ids=("c0",), samples_per_client=30, seed=5)
    c = make_blob_clients(3, target_ids=("c0",), samples_per_client=30, seed=6)
    assert np.array_equal(a.clients["c1"].X, b.clients["c1"].X)
    assert not np.array_equal(a.clients["c1"].X, c.clients["c1"].X)


def test_delimited_round_trip(tmp_path):
    path = tmp_path / "rows.csv"
    path.write_text("1.0,2.0,0\n3.0,4.0,1\n-1.5,0.25,2\n", encoding="utf-8")
    X, y = load_delimited(path)
    assert X.shape == (3, 2)
    assert y.tolist() == [0, 1, 2]


def test_idx_round_trip(tmp_path):
    images = tmp_path / "img.idx"
    labels = tmp_path / "lbl.idx"
    pixels = np.arange(2 * 2 * 3, dtype=np.uint8).reshape(3, 2, 2)
    images.write_bytes(
        b"\x00\x00\x08\x03" + struct.pack(">3I", 3, 2, 2) + pixels.tobytes()
    )
    labels.write_bytes(b"\x00\x00\x08\x01" + struct.pack(">I", 3) + bytes([0, 1, 0]))
    assert np.array_equal(read_idx(images), pixels)
    X, y = load_idx_pair(images, labels)
    assert X.shape == (3, 4)
    assert X.max() <= 1.0
    assert y.tolist() == [0, 1, 0]
    with pytest.raises(ValueError):
        read_idx(labels.write_bytes(b"\x01\x00\x08\x01") or labels)


# ---- metrics and probe --------------------------------------------------------


def test_metrics_round_trip(tmp_path):
    records = [
        MetricsRecord("honest-s0", "train", 0, accuracy=0.5, loss=1.25,
                      mia_recall=0.75, time_train_ms=120.0),
        MetricsRecord("honest-s0", "unlearn", 1, verification="accept",
                      deviation_l2=0.125),
    ]
    csv_path = tmp_path / "metrics.csv"
    jsonl_path = tmp_path / "metrics.jsonl"
    emit_metrics(records, csv_path, jsonl_path)
    assert load_metrics(csv_path) == records
    assert load_metrics(jsonl_path) == records
    header = csv_path.read_text().splitlines()[0]
    assert header.startswith("scenario,phase,round,accuracy")


def test_metrics_validate_ranges():
    with pytest.raises(ValueError):
        MetricsRecord("s", "train", 0, accuracy=1.5)
    with pytest.raises(ValueError):
        MetricsRecord("s", "train", 0, time_train_ms=-1.0)


def test_mia_probe_separates_by_loss():
    arch = Architecture("logreg", 2, 2)
    # weights that classify x0 > 0 as class 1 with high confidence
    w = np.zeros(arch.n_params)
    w[0] = -4.0  # feature 0 -> class 0 logit
    w[1] = 4.0   # feature 0 -> class 1 logit
    model = GlobalModel(weights=w, arch=arch, round=0)
    members = (np.array([[2.0, 0.0], [3.0, 0.0]]), np.array([1, 1]))      # fit well
    nonmembers = (np.array([[2.0, 0.0], [1.0, 0.0]]), np.array([0, 0]))   # fit badly
    calibration = (np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1, 0]))
    precision, recall = mia_probe(model, members, nonmembers, calibration)
    assert recall == 1.0
    assert precision == 1.0
    # flipped labels on members should drive recall to zero
    flipped = (members[0], 1 - members[1])
    _, recall_flipped = mia_probe(model, flipped, nonmembers, calibration)
    assert recall_flipped == 0.0


# ---- run folders --------------------------------------------------------------


@pytest.fixture(scope="module")
def honest_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "honest"
    cfg = ExperimentConfig(scenario="honest", seed=0, **SMALL_KW)
    result = run_unlearning_scenario(cfg)
    save_run(result, out)
    return out, result


def test_run_folder_contents(honest_run):
    out, _ = honest_run
    for name in ("config.txt", "metrics.csv", "metrics.jsonl", "ledger.jsonl",
                 "summary.json", "model.ckpt", "tracker.json", "keys.json"):
        assert (out / name).exists(), name
    assert list((out / "store").glob("*.entry"))


def test_saved_run_reloads_and_verifies(honest_run):
    out, result = honest_run
    state = load_run(out)
    assert state.cfg == result.cfg
    assert np.array_equal(state.model.weights, result.state.model.weights)
    ok, details = verify_run(state)
    assert ok
    assert details and all(row["ok"] for row in details)


def test_unlearn_guard_rejects_completed_run(honest_run):
    out, _ = honest_run
    state = load_run(out)
    with pytest.raises(ConfigError):
        unlearn_loaded_run(state)


def test_summary_json_matches_result(honest_run):
    out, result = honest_run
    on_disk = json.loads((out / "summary.json").read_text())
    assert on_disk["verification"] == "all-accept"
    assert on_disk["adaptive_rounds"] == result.summary["adaptive_rounds"]


# ---- CLI ----------------------------------------------------------------------


def run_cli(*argv) -> int:
    return main(list(argv))


def test_cli_requires_a_command(capsys):
    assert run_cli() == 3
    assert "usage" in capsys.readouterr().out.lower()


def test_cli_help_exits_zero():
    assert run_cli("--help") == 0


def test_cli_usage_errors_exit_three(capsys):
    assert run_cli("scenario") == 3          # missing --out
    assert run_cli("train", "--bogus") == 3  # unknown flag
    capsys.readouterr()


def test_cli_scenario_requires_seed(tmp_path, capsys):
    code = run_cli("scenario", "--out", str(tmp_path / "x"), *SMALL_SETS)
    assert code == 3
    assert "seed" in capsys.readouterr().err


def test_cli_bad_override_exits_three(tmp_path, capsys):
    code = run_cli("scenario", "--seed", "0", "--out", str(tmp_path / "x"),
                   "--set", "garbage")
    assert code == 3
    capsys.readouterr()


def test_cli_internal_error_exits_four(tmp_path, capsys):
    code = run_cli("report", "--metrics", str(tmp_path / "missing.csv"),
                   "--out-dir", str(tmp_path))
    assert code == 4
    assert "internal error" in capsys.readouterr().err


def test_cli_train_unlearn_verify_cycle(tmp_path, capsys):
    run_dir = tmp_path / "cycle"
    assert run_cli("train", "--seed", "1", "--out", str(run_dir), *SMALL_SETS) == 0
    assert run_cli("unlearn", "--run", str(run_dir)) == 0
    assert run_cli("verify", "--run", str(run_dir)) == 0
    out = capsys.readouterr().out
    assert "verification: ok" in out


def test_cli_scenario_exit_codes(tmp_path, capsys):
    honest = tmp_path / "honest"
    assert run_cli("scenario", "--scenario", "honest", "--seed", "0",
                   "--out", str(honest), *SMALL_SETS) == 0
    tampered = tmp_path / "tamper"
    assert run_cli("scenario", "--scenario", "tamper", "--seed", "0",
                   "--out", str(tampered), "--set", "tamper_round=1", *SMALL_SETS) == 2
    summary = json.loads((tampered / "summary.json").read_text())
    assert summary["verification"] == "reject"
    assert summary["failed_step"] == 1
    capsys.readouterr()


def test_cli_ledger_subcommands(tmp_path, capsys):
    run_dir = tmp_path / "led"
    assert run_cli("train", "--seed", "2", "--out", str(run_dir), *SMALL_SETS) == 0
    capsys.readouterr()

    assert run_cli("ledger", "verify", "--run", str(run_dir)) == 0
    assert "chain ok" in capsys.readouterr().out

    assert run_cli("ledger", "dump", "--run", str(run_dir)) == 0
    dump = capsys.readouterr().out
    assert dump.splitlines()[0].startswith('{"consensus"')

    assert run_cli("ledger", "state", "--run", str(run_dir), "--round", "0") == 0
    out = capsys.readouterr().out
    assert "registered clients" in out and "round 0" in out

    assert run_cli("ledger", "--run", str(run_dir)) == 3  # missing subcommand
    capsys.readouterr()

    # corrupt one block and watch verification fail
    ledger_path = run_dir / "ledger.jsonl"
    lines = ledger_path.read_text().splitlines()
    record = json.loads(lines[1])
    record["txs"][0]["payload"]["h"] = "999"
    lines[1] = json.dumps(record, sort_keys=True, separators=(",", ":"))
    ledger_path.write_text("\n".join(lines) + "\n")
    assert run_cli("ledger", "verify", "--run", str(run_dir)) == 2
    assert run_cli("verify", "--run", str(run_dir)) == 2
    capsys.readouterr()


def test_cli_metrics_summary(tmp_path, capsys):
    run_dir = tmp_path / "m"
    assert run_cli("scenario", "--scenario", "honest", "--seed", "0",
                   "--out", str(run_dir), *SMALL_SETS) == 0
    capsys.readouterr()
    assert run_cli("metrics", "summary", "--file", str(run_dir / "metrics.csv")) == 0
    out = capsys.readouterr().out
    assert "records:" in out and "unlearn" in out


def test_cli_report_renders_figures(tmp_path, capsys):
    run_dir = tmp_path / "r"
    assert run_cli("scenario", "--scenario", "honest", "--seed", "0",
                   "--out", str(run_dir), *SMALL_SETS) == 0
    fig_dir = tmp_path / "figs"
    assert run_cli("report", "--metrics", str(run_dir / "metrics.csv"),
                   "--out-dir", str(fig_dir)) == 0
    capsys.readouterr()
    rendered = sorted(p.name for p in fig_dir.glob("*.png"))
    assert "accuracy_loss.png" in rendered
    assert "mia.png" in rendered
    assert "interaction_time.png" in rendered
    assert all((fig_dir / name).stat().st_size > 0 for name in rendered)


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "fedunlearn", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "scenario" in proc.stdout


def test_same_seed_runs_are_identical(tmp_path):
    digests = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        cfg = ExperimentConfig(scenario="honest", seed=5, **SMALL_KW)
        save_run(run_unlearning_scenario(cfg), out)
        blob = b"".join(
            (out / name).read_bytes()
            for name in ("metrics.csv", "metrics.jsonl", "ledger.jsonl", "model.ckpt")
        )
        digests.append(hashlib.sha256(blob).hexdigest())
    assert digests[0] == digests[1]
