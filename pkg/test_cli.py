"""
Command Line Test Suite
=======================
Commands run in-process through ``main``: exit codes, JSON records on
stdout and the files each command writes.
"""

import json
from pathlib import Path

import pandas as pd
import pytest

from modules.cli import main
from modules.config import CONFIG_ENV_VAR

FIXTURE = Path(__file__).parent / "data" / "fixture_corrections.csv"


def records(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.strip()]


# ============================================================================
# EXIT CODES
# ============================================================================

def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["ingest", "--csv", "x.csv"])
    assert e.value.code == 2


def test_missing_file_exits_9(tmp_path):
    assert main(["ingest", "--csv", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "out")]) == 9


def test_missing_column_exits_4(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("textID,text,selected_text\n1,hello,hello\n", encoding="utf-8")
    assert main(["ingest", "--csv", str(path), "--out", str(tmp_path / "out")]) == 4


def test_bad_config_exits_3(tmp_path, monkeypatch):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    config = tmp_path / "exp.txt"
    config.write_text("task = XX\n", encoding="utf-8")
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "run")]) == 3


def test_no_config_exits_3(tmp_path, monkeypatch):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    assert main(["train", "--out", str(tmp_path / "run")]) == 3


def test_env_config_is_used(tmp_path, monkeypatch):
    config = tmp_path / "env.txt"
    config.write_text("encoding = Xyz\n", encoding="utf-8")
    monkeypatch.setenv(CONFIG_ENV_VAR, str(config))
    assert main(["train", "--config", str(tmp_path / "ignored.txt"), "--out", str(tmp_path / "run")]) == 3


def test_missing_models_exits_8(tmp_path):
    assert main(["predict", "--models", str(tmp_path), "--text", "hello"]) == 8


# ============================================================================
# DATA COMMANDS
# ============================================================================

def test_ingest(tmp_path, capsys):
    out = tmp_path / "ingested"
    assert main(["ingest", "--csv", str(FIXTURE), "--out", str(out)]) == 0
    (record,) = records(capsys)
    assert record['n_samples'] == 50
    assert record['positive'] + record['negative'] + record['neutral'] == 50
    assert record['positive'] + record['negative'] == 35

    frame = pd.read_csv(out / "preprocessed.csv", keep_default_na=False)
    assert (frame['text'] == frame['text'].str.lower()).all()
    assert (out / "sentiment_distribution.csv").exists()
    assert (out / "length_statistics.csv").exists()


def test_correct(tmp_path, capsys):
    out, report = tmp_path / "corrected.csv", tmp_path / "report.txt"
    assert main(["correct", "--csv", str(FIXTURE), "--out", str(out), "--report", str(report)]) == 0
    (record,) = records(capsys)
    assert record['n_total'] == 50
    assert record['n_nonneutral'] == 35
    assert record['n_corrected'] == 9
    assert record['n_unrecoverable'] == 2
    assert record['fraction_corrected'] == pytest.approx(9 / 35)

    corrected = pd.read_csv(out, keep_default_na=False)
    assert len(corrected) == 50
    assert report.read_text(encoding="utf-8").strip()


def test_eda(tmp_path, capsys):
    out = tmp_path / "eda"
    assert main(["eda", "--csv", str(FIXTURE), "--ngrams", "2", "--top", "5", "--out", str(out)]) == 0
    (record,) = records(capsys)
    assert record['ngram_orders'] == 2

    ngrams = pd.read_csv(out / "ngrams.csv", keep_default_na=False)
    assert set(ngrams['n']) == {1, 2}
    assert ngrams['rank'].max() <= 5
    assert (out / "jaccard_histogram.csv").exists()
    assert (out / "plots" / "ngrams_2_positive.html").exists()
    assert (out / "plots" / "sentiment_distribution.html").exists()


def test_eda_rejects_zero_ngrams(tmp_path):
    assert main(["eda", "--csv", str(FIXTURE), "--ngrams", "0", "--out", str(tmp_path / "eda")]) == 3


# ============================================================================
# PREDICT
# ============================================================================

def test_predict_record(models_dir, capsys):
    assert main(["predict", "--models", str(models_dir), "--text", "The coffee was GREAT", "--cam"]) == 0
    (record,) = records(capsys)
    assert record['input'] == "The coffee was GREAT"
    assert record['sentiment'] in {"positive", "negative", "neutral"}
    assert sum(record['probs'].values()) == pytest.approx(1.0)
    assert record['subsentence'] in "the coffee was great"
    assert sum(item['score'] for item in record['cam']) == pytest.approx(1.0)


def test_predict_with_gold_neutral(models_dir, capsys):
    argv = ["predict", "--models", str(models_dir), "--text", "just another day", "--gold-sentiment", "neutral"]
    assert main(argv) == 0
    (record,) = records(capsys)
    assert record['sentiment'] == "neutral"
    assert record['subsentence'] == "just another day"
    assert not record['refined']
    assert record['cam'] is None


def test_predict_empty_text_exits_4(models_dir):
    assert main(["predict", "--models", str(models_dir), "--text", "   "]) == 4
