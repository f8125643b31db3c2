"""CLI: config loading, run directories, report printing."""

import numpy as np
import pytest
import yaml

from mcfront.cli import load_experiment_config, main
from mcfront.errors import DomainError


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({
        "seed": 3,
        "corpus": {
            "num_utterances": 10,
            "utterance_seconds": 0.3,
            "snr_range_db": [0, 10],
        },
        "train": {"epochs": 1},
        "sweep_rates": [16, 128],
    }))
    return path


def test_load_config_defaults():
    cfg = load_experiment_config()
    assert cfg.seed == 0
    assert cfg.corpus.geometry.num_mics == 7
    assert cfg.sweep_rates == (8, 16, 32, 128)


def test_load_config_overrides(tiny_config):
    cfg = load_experiment_config(tiny_config)
    assert cfg.seed == 3
    assert cfg.corpus.seed == 3  # corpus follows the file seed
    assert cfg.corpus.num_utterances == 10
    assert cfg.corpus.snr_range_db == (0, 10)
    assert cfg.train.epochs == 1
    assert cfg.sweep_rates == (16, 128)


def test_seed_flag_overrides_file(tiny_config):
    cfg = load_experiment_config(tiny_config, seed=9)
    assert cfg.seed == 9
    assert cfg.corpus.seed == 9


def test_unknown_config_keys_rejected(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"learning_rate": 1.0}))
    with pytest.raises(DomainError):
        load_experiment_config(path)


def test_geometry_from_config(tmp_path):
    path = tmp_path / "geom.yaml"
    path.write_text(yaml.safe_dump({
        "corpus": {
            "num_utterances": 1,
            "utterance_seconds": 0.3,
            "geometry": {"mic_positions": [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]]},
        },
    }))
    cfg = load_experiment_config(path)
    assert cfg.corpus.geometry.num_mics == 2


def test_gen_corpus_command(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["gen-corpus", "--config", str(tiny_config), "--out", str(out)])
    assert rc == 0
    assert (out / "config.yaml").exists()
    assert (out / "labels.csv").exists()
    wavs = list((out / "train").glob("*.wav"))
    assert len(wavs) == 8


def test_transcode_sweep_command(tiny_config, tmp_path):
    out = tmp_path / "run"
    rc = main([
        "transcode-sweep", "--config", str(tiny_config), "--out", str(out),
        "--rates", "8,128",
    ])
    assert rc == 0
    text = (out / "band_energy.csv").read_text()
    assert text.startswith("rate,channel,ratio_above_cutoff")
    assert "8,0," in text and "128,0," in text


def test_sweep_command_writes_report(tiny_config, tmp_path):
    out = tmp_path / "run"
    rc = main(["sweep", "--config", str(tiny_config), "--out", str(out)])
    assert rc in (0, 2)  # orderings are not meaningful at this tiny scale
    assert (out / "report.csv").exists()
    assert (out / "report.csv.txt").exists()


def test_train_command_writes_checkpoint(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["train", "--config", str(tiny_config), "--single", "--out", str(out)])
    assert rc == 0
    assert (out / "model.npz").exists()
    assert (out / "frontend.npz").exists()
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,loss,dev_fer"
    assert len(log) == 2


def test_report_command_prints_table(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    main(["sweep", "--config", str(tiny_config), "--out", str(out)])
    capsys.readouterr()
    rc = main(["report", str(out / "report.csv")])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "condition" in printed and "uncompressed" in printed
