import json

import pytest

from ctm.cli import main
from ctm.harness import METRICS_HEADER, Checkpoint


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"hidden_dim": 4, "epochs": 1, "synth_questions": 24, "synth_vocab": 48}))
    return str(path)


def test_synth_then_train_then_eval(tmp_path, tiny_config):
    corpus = tmp_path / "synth.json"
    assert main(["synth", "--config", tiny_config, "--out", str(corpus), "--seed", "3"]) == 0
    assert sum(len(a["questions"]) for a in json.loads(corpus.read_text())) == 24

    model = tmp_path / "m.ctm"
    assert main(["train", "--config", tiny_config, "--data", str(corpus), "--format", "race",
                 "--eval-data", str(corpus), "--out", str(model)]) == 0
    assert Checkpoint.load(model).config.hidden_dim == 4
    rows = (tmp_path / "m.metrics.csv").read_text().splitlines()
    assert rows[0] == ",".join(METRICS_HEADER)
    assert {r.split(",")[1] for r in rows[1:]} == {"train", "eval"}

    out = tmp_path / "eval.csv"
    assert main(["eval", "--checkpoint", str(model), "--data", str(corpus), "--format", "race",
                 "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == ",".join(METRICS_HEADER)


def test_train_synth_default_format(tmp_path, tiny_config):
    assert main(["train", "--config", tiny_config, "--out", str(tmp_path / "s.ctm")]) == 0
    assert (tmp_path / "s.metrics.csv").exists()


def test_ablate_and_sweep(tmp_path, tiny_config):
    ab, sw = tmp_path / "ab.csv", tmp_path / "sw.csv"
    assert main(["ablate", "--config", tiny_config, "--sets", "a,a+q+p,cnn", "--out", str(ab)]) == 0
    assert ab.read_text().splitlines()[0] == "config,accuracy" and len(ab.read_text().splitlines()) == 4
    assert main(["sweep", "--config", tiny_config, "--values", "0,1", "--seeds", "1,2", "--out", str(sw)]) == 0
    assert [r.split(",")[0] for r in sw.read_text().splitlines()[1:]] == ["lambda=0", "lambda=1"]


def test_gradcheck(tmp_path, capsys):
    assert main(["gradcheck", "--seed", "0"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["gradcheck", "--seed", "0", "--tol", "0"]) == 1


def test_dream_needs_data(capsys):
    assert main(["train", "--format", "dream"]) == 2
    assert "--data" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"hidden_dim": -1}))
    assert main(["train", "--config", str(bad)]) == 2
    assert "hidden_dim" in capsys.readouterr().err


def test_corrupt_checkpoint_exits_2(tmp_path, capsys):
    junk = tmp_path / "junk.ctm"
    junk.write_bytes(b"nope")
    assert main(["eval", "--checkpoint", str(junk)]) == 2
    assert "offset" in capsys.readouterr().err


@pytest.mark.parametrize("seed", ["-1", str(2 ** 64), "abc"])
def test_seed_must_be_u64(seed):
    with pytest.raises(SystemExit):
        main(["synth", "--seed", seed])


def test_hex_seed_accepted(tmp_path):
    assert main(["synth", "--seed", "0xff", "--out", str(tmp_path / "x.json")]) == 0
