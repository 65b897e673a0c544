import csv
import json
import subprocess
import sys

import pytest

from pitlab.cli import main
from pitlab.datagen import CorpusSpec

SEP = CorpusSpec("sep", n_speakers=4, n_train=8, utterance_sec=0.5, speaker_offset=50,
                 n_valid=2, n_test=2, n_test_speakers=2)
SSL = CorpusSpec("ssl", n_speakers=4, n_train=8, n_sources_per_mix=1, utterance_sec=0.5,
                 noise=True, snr_range_db=(0.0, 10.0), n_valid=2)
MODEL = dict(n_filters=8, kernel=16, hidden=8, masker_blocks=1, batch_size=4,
             separation_epochs=2, pretrain_epochs=1)


def write_json(path, obj):
    path.write_text(json.dumps(obj, indent=1))
    return str(path)


@pytest.fixture(scope="module")
def corpora(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--spec", write_json(root / "sep.json", SEP.to_dict()), "--out", str(root / "sep")]) == 0
    assert main(["gen", "--spec", write_json(root / "ssl.json", SSL.to_dict()), "--out", str(root / "ssl")]) == 0
    return root


def run_cfg(root, tmp_path, **kw):
    d = {**MODEL, "sep_corpus": str(root / "sep"), "ssl_corpus": str(root / "ssl"), **kw}
    return write_json(tmp_path / "run.json", d)


def test_full_pipeline(corpora, tmp_path, capsys):
    cfg = run_cfg(corpora, tmp_path, strategy="ptft", ssl_task="SE")
    assert main(["pretrain", "--config", cfg, "--out", str(tmp_path / "pre")]) == 0
    assert (tmp_path / "pre" / "pretrained.ckpt").is_file()
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "ptft"),
                 "--init", str(tmp_path / "pre" / "pretrained.ckpt")]) == 0
    assert main(["train", "--config", run_cfg(corpora, tmp_path), "--out", str(tmp_path / "scratch")]) == 0
    capsys.readouterr()
    assert main(["evaluate", "--checkpoint", str(tmp_path / "ptft" / "params.ckpt"),
                 "--corpus", str(corpora / "sep"), "--out", str(tmp_path / "eval.csv")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["n"] == 2
    summary = dict(l.split("\t") for l in (tmp_path / "ptft" / "summary.txt").read_text().splitlines())
    assert printed["si_snri_db"] == pytest.approx(float(summary["test_si_snri_db"]), abs=1e-12)
    assert main(["report", "--runs", str(tmp_path / "ptft"), str(tmp_path / "scratch"),
                 "--out", str(tmp_path / "report.csv")]) == 0
    with open(tmp_path / "report.csv") as f:
        assert {r["strategy"] for r in csv.DictReader(f)} == {"ptft-SE", "scratch"}


def test_seed_flag_overrides(corpora, tmp_path):
    cfg = run_cfg(corpora, tmp_path)
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "7"]) == 0
    assert json.loads((tmp_path / "a" / "config.json").read_text())["seed"] == 7


def test_malformed_config_no_outputs(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"strategy": "scratch",\n "batch_size": 0}')
    assert main(["train", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) != 0
    assert "batch_size" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    (tmp_path / "syntax.json").write_text('{"strategy": }')
    assert main(["pretrain", "--config", str(tmp_path / "syntax.json"), "--out", str(tmp_path / "p")]) == 2
    assert not (tmp_path / "p").exists()


def test_missing_corpus(tmp_path):
    cfg = write_json(tmp_path / "c.json", {**MODEL, "sep_corpus": str(tmp_path / "none")})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "pitlab.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("gen", "pretrain", "train", "evaluate", "report"):
        assert cmd in r.stdout
