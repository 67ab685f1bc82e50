import importlib
import json

import numpy as np
import pytest

from senres import encoder as enc
from senres.cli import main
from senres.contrastive import PretrainConfig
from senres.dataset import read_swnd, synthetic_sinusoids, write_swnd
from senres.eval import RunManifest
from senres.parallel import default_workers
from senres.tensor import Tensor, load_params

from conftest import write_ucihar


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def syn(tmp_path):
    path = tmp_path / "syn.swnd"
    write_swnd(synthetic_sinusoids(per_class=10, seed=2), path)
    return path


def _eval_manifest(path, method, scores, fraction=0.01):
    m = RunManifest(kind="eval", method=method, seed=0, scores=list(scores),
                    config={"protocol": "linear", "label_fraction": fraction, "repetitions": len(scores)})
    m.save(path)
    return path


class TestIngest:
    def test_ucihar(self, tmp_path, capsys):
        arrays = write_ucihar(tmp_path / "uci", (3, 2))
        out = tmp_path / "w.swnd"
        assert run("ingest", "--dataset", "ucihar", "--in", tmp_path / "uci", "--out", out) == 0
        ws = read_swnd(out)
        assert ws.data.shape == (5, 128, 6)
        np.testing.assert_allclose(ws.data[:3], arrays["train"][0], rtol=1e-6)
        text = capsys.readouterr().out
        assert "wrote 5 windows of 128x6" in text and "WALKING" in text
        assert RunManifest.load(f"{out}.json").artifacts["out"]

    def test_rerun_is_byte_identical(self, tmp_path):
        write_ucihar(tmp_path / "uci")
        for name in ("a.swnd", "b.swnd"):
            assert run("ingest", "--dataset", "ucihar", "--in", tmp_path / "uci", "--out", tmp_path / name) == 0
        assert (tmp_path / "a.swnd").read_bytes() == (tmp_path / "b.swnd").read_bytes()

    def test_missing_label_file(self, tmp_path, capsys):
        write_ucihar(tmp_path / "uci")
        (tmp_path / "uci" / "train" / "y_train.txt").unlink()
        assert run("ingest", "--dataset", "ucihar", "--in", tmp_path / "uci", "--out", tmp_path / "w.swnd") == 2
        assert "y_train.txt" in capsys.readouterr().err

    def test_bad_value_reports_file_and_line(self, tmp_path, capsys):
        write_ucihar(tmp_path / "uci")
        path = tmp_path / "uci" / "test" / "Inertial Signals" / "body_gyro_y_test.txt"
        lines = path.read_text().splitlines()
        lines[1] = lines[1].replace("e", "x", 1)
        path.write_text("\n".join(lines) + "\n")
        assert run("ingest", "--dataset", "ucihar", "--in", tmp_path / "uci", "--out", tmp_path / "w.swnd") == 2
        assert "body_gyro_y_test.txt:2:" in capsys.readouterr().err

    def test_csv_with_preset_windowing(self, tmp_path):
        data = tmp_path / "csv"
        data.mkdir()
        rows = "\n".join(f"{i},{i},0,0,0,0,0,1,walk" for i in range(1000))
        (data / "a.csv").write_text("t,ax,ay,az,gx,gy,gz,who,act\n" + rows + "\n")
        schema = {"channels": {"ax": "acc_x", "ay": "acc_y", "az": "acc_z", "gx": "gyro_x", "gy": "gyro_y",
                               "gz": "gyro_z"}, "subject_column": "who", "activity_column": "act",
                  "classes": ["walk", "sit"]}
        (tmp_path / "schema.json").write_text(json.dumps(schema))
        out = tmp_path / "w.swnd"
        assert run("ingest", "--dataset", "csv", "--in", data, "--schema", tmp_path / "schema.json",
                   "--windowing", "motionsense", "--out", out) == 0
        ws = read_swnd(out)
        assert ws.data.shape == (5, 200, 6) and ws.class_names == ("walk", "sit")

    def test_csv_needs_windowing(self, tmp_path):
        (tmp_path / "s.json").write_text("{}")
        assert run("ingest", "--dataset", "csv", "--in", tmp_path, "--schema", tmp_path / "s.json",
                   "--out", tmp_path / "w.swnd") == 2

    def test_schema_syntax_error_has_line(self, tmp_path, capsys):
        (tmp_path / "s.json").write_text('{\n "channels": {,\n}')
        assert run("ingest", "--dataset", "csv", "--in", tmp_path, "--schema", tmp_path / "s.json",
                   "--window-len", 10, "--overlap", 0.5, "--out", tmp_path / "w.swnd") == 2
        assert "s.json:2:" in capsys.readouterr().err


class TestAugment:
    def test_invert_twice_is_identity(self, tmp_path, syn):
        assert run("augment", "--in", syn, "--out", tmp_path / "a.swnd", "--kind", "invert") == 0
        assert run("augment", "--in", tmp_path / "a.swnd", "--out", tmp_path / "b.swnd", "--kind", "invert") == 0
        np.testing.assert_array_equal(read_swnd(tmp_path / "b.swnd").data, read_swnd(syn).data)

    def test_resample_is_deterministic(self, tmp_path, syn):
        for name in ("a.swnd", "b.swnd"):
            assert run("augment", "--in", syn, "--out", tmp_path / name, "--kind", "resample",
                       "--M", 1, "--N", 0, "--seed", 7) == 0
        assert (tmp_path / "a.swnd").read_bytes() == (tmp_path / "b.swnd").read_bytes()
        assert not np.array_equal(read_swnd(tmp_path / "a.swnd").data, read_swnd(syn).data)

    def test_times_keeps_originals(self, tmp_path, syn):
        assert run("augment", "--in", syn, "--out", tmp_path / "a.swnd", "--kind", "noise", "--times", 4) == 0
        out, src = read_swnd(tmp_path / "a.swnd"), read_swnd(syn)
        assert len(out) == 5 * len(src)
        np.testing.assert_array_equal(out.data[:len(src)], src.data)

    def test_worker_count_does_not_change_output(self, tmp_path, syn):
        for w in (1, 3):
            assert run("augment", "--in", syn, "--out", tmp_path / f"w{w}.swnd", "--kind", "resample",
                       "--draw-policy", "random", "--workers", w) == 0
        assert (tmp_path / "w1.swnd").read_bytes() == (tmp_path / "w3.swnd").read_bytes()

    @pytest.mark.parametrize("extra", [["--kind", "resample", "--M", 1, "--N", 1],
                                       ["--spec", '{"kind": "warp"}'],
                                       ["--spec", "identity"],
                                       []])
    def test_invalid_spec(self, tmp_path, syn, extra):
        assert run("augment", "--in", syn, "--out", tmp_path / "a.swnd", *extra) == 2

    def test_spec_from_config(self, tmp_path, syn):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"seed": 3, "augmentation": {"spec": {"kind": "reverse"}}}))
        assert run("augment", "--config", cfg, "--in", syn, "--out", tmp_path / "a.swnd") == 0
        np.testing.assert_array_equal(read_swnd(tmp_path / "a.swnd").data, read_swnd(syn).data[:, ::-1])


class TestPretrain:
    def _dry(self, capsys, *argv):
        assert run("pretrain", "--dry-run", *argv) == 0
        return json.loads(capsys.readouterr().out)

    def test_simclr_defaults(self, capsys):
        cfg = self._dry(capsys, "--framework", "simclr")
        assert cfg["temperature"] == 0.1 and cfg["batch_size"] == 2048

    def test_moco_defaults(self, capsys):
        cfg = self._dry(capsys, "--framework", "moco")
        assert cfg["K"] == 8192 and cfg["momentum"] == 0.999

    def test_flags_override_config(self, tmp_path, capsys):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 4, "pretrain": {"framework": "moco", "epochs": 7, "lr": 0.01}}))
        cfg = self._dry(capsys, "--config", path, "--epochs", 3)
        assert (cfg["framework"], cfg["epochs"], cfg["lr"], cfg["seed"]) == ("moco", 3, 0.01, 4)

    @pytest.mark.parametrize("doc", [{"pretrain": {}}, {"seed": 1, "extra": {}},
                                     {"seed": 1, "pretrain": {"warmup": 3}},
                                     {"seed": 1, "dataset": {"path": "/no/such/dir"}}])
    def test_bad_config(self, tmp_path, doc):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(doc))
        assert run("pretrain", "--config", path, "--dry-run") == 2

    def test_zero_epochs_writes_init(self, tmp_path, syn):
        out = tmp_path / "run"
        assert run("pretrain", "--data", syn, "--out", out, "--profile", "desk", "--epochs", 0, "--seed", 5) == 0
        got = load_params(out / "encoder.sprm")
        cfg = PretrainConfig.for_profile("simclr", "desk", seed=5)
        init = enc.cast(enc.init_encoder(cfg.encoder, 6, np.random.default_rng(5)), np.float32)
        assert set(got) == set(init)
        for k in init:
            np.testing.assert_array_equal(got[k].data, init[k].data)
        m = RunManifest.load(out / "pretrain.json")
        assert m.config["epochs"] == 0 and m.artifacts["checkpoint"]

    def test_divergence_exit_code(self, tmp_path, syn, monkeypatch, capsys):
        mod = importlib.import_module("senres.contrastive.pretrain")
        monkeypatch.setattr(mod, "simclr_loss", lambda *a, **k: Tensor(np.array(np.nan)))
        assert run("pretrain", "--data", syn, "--out", tmp_path / "r", "--profile", "desk", "--epochs", 2) == 3
        assert "epoch 0" in capsys.readouterr().err

    def test_missing_data(self, tmp_path):
        assert run("pretrain", "--data", tmp_path / "none.swnd", "--out", tmp_path / "r") == 2


class TestEval:
    @pytest.fixture
    def ckpt(self, tmp_path, syn):
        out = tmp_path / "run"
        assert run("pretrain", "--data", syn, "--out", out, "--profile", "desk", "--epochs", 1) == 0
        return out / "encoder.sprm"

    def test_one_percent_uses_batch_50(self, tmp_path, syn, ckpt):
        out = tmp_path / "e.json"
        assert run("eval", "--data", syn, "--checkpoint", ckpt, "--label-fraction", 0.01, "--repeats", 2,
                   "--epochs", 1, "--out", out) == 0
        m = RunManifest.load(out)
        assert m.config["batch_size"] == 50 and len(m.scores) == 2
        assert m.config["encoder"]["filters"] == 16  # read from the pretraining manifest

    def test_single_repeat_has_no_interval(self, syn, ckpt, capsys):
        assert run("eval", "--data", syn, "--checkpoint", ckpt, "--label-fraction", 0.3, "--repeats", 1,
                   "--epochs", 2) == 0
        text = capsys.readouterr().out
        assert "macro-F1" in text and "limits" not in text

    def test_seed_reproduces_output(self, syn, ckpt, capsys):
        outputs = []
        for _ in range(2):
            assert run("eval", "--data", syn, "--checkpoint", ckpt, "--protocol", "finetune", "--label-fraction", 0.3,
                       "--repeats", 2, "--epochs", 2, "--seed", 9) == 0
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1] and "limits" in outputs[0]

    @pytest.mark.parametrize("protocol", ["linear", "finetune"])
    def test_missing_checkpoint(self, tmp_path, syn, protocol):
        assert run("eval", "--data", syn, "--protocol", protocol) == 2
        assert run("eval", "--data", syn, "--protocol", protocol, "--checkpoint", tmp_path / "no.sprm") == 2

    def test_checkpoint_shape_mismatch(self, tmp_path, syn, ckpt):
        # "paper" profile encoder expected, desk checkpoint supplied and no manifest beside it
        lone = tmp_path / "lone.sprm"
        lone.write_bytes(ckpt.read_bytes())
        assert run("eval", "--data", syn, "--checkpoint", lone, "--profile", "paper") == 2

    def test_supervised_with_augmentation(self, tmp_path, syn):
        out = tmp_path / "e.json"
        assert run("eval", "--data", syn, "--protocol", "supervised", "--profile", "desk", "--label-fraction", 0.3,
                   "--repeats", 1, "--epochs", 1, "--augment-times", 2, "--aug", "resample", "--out", out) == 0
        m = RunManifest.load(out)
        assert m.config["augment_times"] == 2 and m.config["aug"]["kind"] == "resample"


class TestReport:
    def test_identical_scores_never_significant(self, tmp_path, capsys):
        scores = np.linspace(0.5, 0.7, 10)
        a = _eval_manifest(tmp_path / "a.json", "sup", scores)
        b = _eval_manifest(tmp_path / "b.json", "same", scores)
        assert run("report", a, b, "--baseline", "sup", "--out", tmp_path / "rep") == 0
        rows = (tmp_path / "rep" / "report.tsv").read_text().splitlines()
        header = rows[0].split("\t")
        row = dict(zip(header, rows[[r.split("\t")[0] for r in rows].index("same")].split("\t")))
        assert row["verdict"] in ("+", "-") and float(row["p_value"]) == 1.0

    def test_dominant_method_is_s_plus(self, tmp_path, capsys):
        base = np.linspace(0.5, 0.7, 10)
        a = _eval_manifest(tmp_path / "a.json", "sup", base)
        b = _eval_manifest(tmp_path / "b.json", "ours", base + np.arange(1, 11) / 100)
        assert run("report", a, b, "--baseline", "sup", "--out", tmp_path / "rep") == 0
        text = (tmp_path / "rep" / "report.tsv").read_text()
        line = next(l for l in text.splitlines() if l.startswith("ours"))
        assert line.split("\t")[-1] == "s+"
        assert float(line.split("\t")[-2]) == pytest.approx(2 / 1024, rel=1e-5)
        assert "s+" in capsys.readouterr().out

    def test_outputs_and_figures(self, tmp_path):
        a = _eval_manifest(tmp_path / "a.json", "sup", [0.5] * 5)
        b = _eval_manifest(tmp_path / "b.json", "sup", [0.6] * 5, fraction=0.1)
        p = RunManifest(kind="pretrain", method="simclr", seed=1, config={}, epoch_losses=[3.0, 2.5, 2.0])
        p.save(tmp_path / "p.json")
        assert run("report", a, b, tmp_path / "p.json", "--out", tmp_path / "rep") == 0
        for name in ("scores.png", "losses.png"):
            assert (tmp_path / "rep" / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        rows = (tmp_path / "rep" / "report.tsv").read_text().splitlines()
        assert len(rows) == 3 and rows[1].startswith("sup\t0.01\t5")

    def test_missing_baseline(self, tmp_path):
        a = _eval_manifest(tmp_path / "a.json", "sup", [0.5] * 5)
        assert run("report", a, "--baseline", "nope", "--out", tmp_path / "rep") == 2

    def test_mismatched_repetitions(self, tmp_path, capsys):
        a = _eval_manifest(tmp_path / "a.json", "sup", [0.5] * 5)
        b = _eval_manifest(tmp_path / "b.json", "ours", [0.6] * 6)
        assert run("report", a, b, "--baseline", "sup", "--out", tmp_path / "rep") == 2
        assert "repetitions" in capsys.readouterr().err

    def test_manifest_with_wrong_score_count(self, tmp_path):
        path = tmp_path / "a.json"
        doc = json.loads(RunManifest(kind="eval", method="x", seed=0, scores=[0.5],
                                     config={"repetitions": 1, "label_fraction": 0.1}).to_json())
        doc["scores"] = [0.5, 0.6]
        path.write_text(json.dumps(doc))
        assert run("report", path, "--out", tmp_path / "rep") == 2


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("SENRES_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("SENRES_WORKERS", "many")
    assert default_workers() == 1
    monkeypatch.delenv("SENRES_WORKERS")
    assert default_workers() == 1


def test_no_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2
