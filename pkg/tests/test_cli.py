import csv
import json
import os
import subprocess
import sys

import pytest

from imbalbench.cli import main


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


@pytest.fixture
def blobs(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--counts", "40,30,20", "--dim", "4", "--separation", "6",
                 "--out-dir", str(out), "--seed", "1"]) == 0
    return out / "synth.csv"


def manifest(out, command):
    return json.loads((out / f"{command}_manifest.json").read_text())


class TestSynth:
    def test_features(self, blobs):
        rows = list(csv.reader(open(blobs)))
        assert len(rows) == 1 + 90
        doc = manifest(blobs.parent, "synth")
        assert doc["command"] == "synth" and doc["seeds"] == {"seed": 1}
        assert doc["artifacts"][0]["path"].endswith("synth.csv")

    def test_raster(self, tmp_path):
        out = tmp_path / "r"
        assert main(["synth", "--raster", "--counts", "4,5", "--size", "6",
                     "--out-dir", str(out)]) == 0
        files = sorted((out / "synth_rasters").rglob("*.pgm"))
        assert len(files) == 9
        assert len(manifest(out, "synth")["artifacts"]) == 9


class TestSplit:
    def test_defaults(self, blobs, tmp_path, capsys):
        out = tmp_path / "s"
        code, res = run(["split", "--data", blobs, "--out-dir", out], capsys)
        assert code == 0
        assert manifest(out, "split")["config"]["ratios"] == [0.65, 0.20, 0.15]
        rows = list(csv.reader(open(out / "split.csv")))
        assert rows[0] == ["sample_id", "subset"]
        subsets = [r[1] for r in rows[1:]]
        # 40 -> 26/8/6, 30 -> 19/6/5, 20 -> 13/4/3
        assert (subsets.count("train"), subsets.count("val"), subsets.count("test")) == (58, 18, 14)
        assert "train=26" in res.out

    def test_bad_ratios_usage_error(self, blobs, tmp_path, capsys):
        code, res = run(["split", "--data", blobs, "--ratios", "0.5,0.3,0.3",
                         "--out-dir", tmp_path / "s"], capsys)
        assert code == 2
        err = json.loads(res.err)
        assert err["error"] == "usage"
        assert not (tmp_path / "s" / "split.csv").exists()

    def test_missing_data_is_runtime_error(self, tmp_path, capsys):
        code, res = run(["split", "--data", tmp_path / "nope.csv", "--out-dir", tmp_path], capsys)
        assert code == 1
        assert json.loads(res.err)["error"] == "runtime"


class TestWeights:
    PUBLISHED_COUNTS = [1115, 763, 689, 451, 450, 273, 254, 234, 240, 216, 129, 129, 111, 72, 61]

    def test_counts_csv(self, tmp_path, capsys):
        src = tmp_path / "counts.csv"
        src.write_text("class_name,count\n" + "".join(
            f"w{i:02d},{n}\n" for i, n in enumerate(self.PUBLISHED_COUNTS)))
        code, _ = run(["weights", "--counts-csv", src, "--out-dir", tmp_path / "w"], capsys)
        assert code == 0
        rows = list(csv.reader(open(tmp_path / "w" / "weights.csv")))
        assert rows[0] == ["class_name", "weight"]
        w = [float(r[1]) for r in rows[1:]]
        assert w[0] == 1.0
        assert w[-1] == pytest.approx(1115 / 61, abs=1e-12)

    def test_balanced(self, tmp_path, capsys):
        src = tmp_path / "c.csv"
        src.write_text("class_name,count\na,10\nb,10\nc,10\n")
        assert run(["weights", "--counts-csv", src, "--out-dir", tmp_path], capsys)[0] == 0
        rows = list(csv.reader(open(tmp_path / "weights.csv")))
        assert [float(r[1]) for r in rows[1:]] == [1.0, 1.0, 1.0]

    def test_from_dataset(self, blobs, tmp_path, capsys):
        assert run(["weights", "--data", blobs, "--out-dir", tmp_path / "w"], capsys)[0] == 0
        rows = list(csv.reader(open(tmp_path / "w" / "weights.csv")))
        assert [float(r[1]) for r in rows[1:]] == [1.0, 40 / 30, 2.0]

    def test_explicit_requires_file(self, blobs, tmp_path, capsys):
        code, res = run(["weights", "--data", blobs, "--strategy", "explicit",
                         "--out-dir", tmp_path], capsys)
        assert code == 2 and json.loads(res.err)["error"] == "usage"

    def test_explicit(self, blobs, tmp_path, capsys):
        f = tmp_path / "explicit.csv"
        f.write_text("class_name,weight\nclass_0,1.0\nclass_1,2.5\nclass_2,7.0\n")
        code, _ = run(["weights", "--data", blobs, "--strategy", "explicit",
                       "--explicit-file", f, "--out-dir", tmp_path / "w"], capsys)
        assert code == 0
        rows = list(csv.reader(open(tmp_path / "w" / "weights.csv")))
        assert [float(r[1]) for r in rows[1:]] == [1.0, 2.5, 7.0]

    def test_bad_counts(self, tmp_path, capsys):
        src = tmp_path / "c.csv"
        src.write_text("class_name,count\na,10\nb,0\n")
        code, res = run(["weights", "--counts-csv", src, "--out-dir", tmp_path], capsys)
        assert code == 1 and "error" in json.loads(res.err)


class TestTrainEvalSimilarity:
    def test_train_outputs(self, blobs, tmp_path, capsys):
        out = tmp_path / "t"
        code, _ = run(["train", "--data", blobs, "--epochs", "3", "--hidden-dim", "5",
                       "--out-dir", out], capsys)
        assert code == 0
        doc = manifest(out, "train")
        assert {os.path.basename(a["path"]) for a in doc["artifacts"]} == {
            "split.csv", "model.json", "history.csv"}
        assert doc["config"]["epochs"] == 3 and doc["config"]["hidden_dim"] == 5
        rows = list(csv.reader(open(out / "history.csv")))
        assert rows[0] == ["epoch", "lr", "train_loss", "train_f1", "val_f1"] and len(rows) == 4

    def test_config_precedence(self, blobs, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epochs": 2, "batch_size": 4, "loss": {"kind": "FL",
                                                                          "gamma": 1.0}}))
        out = tmp_path / "t"
        code, _ = run(["train", "--data", blobs, "--config", cfg, "--epochs", "1",
                       "--out-dir", out], capsys)
        assert code == 0
        snap = manifest(out, "train")["config"]
        assert snap["epochs"] == 1 and snap["batch_size"] == 4
        assert snap["loss"]["kind"] == "FL" and snap["loss"]["gamma"] == 1.0
        assert snap["base_lr"] == 0.001 and snap["momentum"] == 0.9

    def test_unknown_config_key(self, blobs, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"epochz": 3}')
        code, res = run(["train", "--data", blobs, "--config", cfg, "--out-dir", tmp_path],
                        capsys)
        assert code == 2 and "epochz" in json.loads(res.err)["message"]

    def test_eval_perfect_classifier(self, tmp_path, capsys):
        data = tmp_path / "d"
        main(["synth", "--counts", "20,20", "--dim", "2", "--separation", "30",
              "--noise", "0.5", "--out-dir", str(data)])
        out = tmp_path / "t"
        assert run(["train", "--data", data / "synth.csv", "--lr", "0.1", "--out-dir", out],
                   capsys)[0] == 0
        code, res = run(["eval", "--data", data / "synth.csv", "--model", out / "model.json",
                         "--split-manifest", out / "split.csv", "--subset", "train",
                         "--out-dir", tmp_path / "e"], capsys)
        assert code == 0
        doc = json.loads((tmp_path / "e" / "metrics.json").read_text())
        assert doc["micro_f1"] == 1.0 and doc["subset"] == "train"
        counts = list(csv.reader(open(tmp_path / "e" / "confusion_counts.csv")))
        assert counts == [["", "class_0", "class_1"], ["class_0", "13", "0"],
                          ["class_1", "0", "13"]]
        norm = list(csv.reader(open(tmp_path / "e" / "confusion_normalized.csv")))
        assert norm[1] == ["class_0", "1.00", "0.00"]

    def test_similarity_repeatable(self, blobs, tmp_path, capsys):
        out = tmp_path / "t"
        run(["train", "--data", blobs, "--epochs", "2", "--hidden-dim", "6", "--out-dir", out],
            capsys)
        texts = []
        for i in range(2):
            d = tmp_path / f"s{i}"
            code, _ = run(["similarity", "--data", blobs, "--model", out / "model.json",
                           "--pairs", "1", "--seed", "4", "--out-dir", d], capsys)
            assert code == 0
            texts.append((d / "similarity.csv").read_bytes())
        assert texts[0] == texts[1]
        rows = list(csv.reader(texts[0].decode().splitlines()))
        assert rows[0] == ["", "class_0", "class_1", "class_2"]
        assert [rows[k][k] for k in (1, 2, 3)] == ["1.00"] * 3
        assert manifest(tmp_path / "s0", "similarity")["config"]["subset"] == "test"

    def test_eval_missing_model(self, blobs, tmp_path, capsys):
        code, res = run(["eval", "--data", blobs, "--model", tmp_path / "none.json",
                         "--out-dir", tmp_path], capsys)
        assert code == 1 and json.loads(res.err)["type"] == "FileNotFoundError"

    def test_raster_workflow(self, tmp_path, capsys):
        main(["synth", "--raster", "--counts", "8,8", "--size", "6", "--channels", "3",
              "--out-dir", str(tmp_path)])
        data = tmp_path / "synth_rasters"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epochs": 2, "augment": {
            "rotation_range_degrees": [-20, 20], "flip_horizontal": True,
            "flip_vertical": False}}))
        out = tmp_path / "t"
        assert run(["train", "--data", data, "--config", cfg, "--out-dir", out], capsys)[0] == 0
        assert run(["eval", "--data", data, "--model", out / "model.json", "--subset", "all",
                    "--out-dir", out], capsys)[0] == 0
        assert json.loads((out / "metrics.json").read_text())["n_samples"] == 16


class TestBenchmark:
    def test_defaults_five_replications(self, blobs, tmp_path, capsys):
        out = tmp_path / "b"
        code, res = run(["benchmark", "--data", blobs, "--epochs", "2", "--out-dir", out],
                        capsys)
        assert code == 0
        rep = json.loads((out / "benchmark_report.json").read_text())
        assert rep["replications"] == 5 and len(rep["test_f1"]["values"]) == 5
        rows = list(csv.reader(open(out / "benchmark_report.csv", encoding="utf-8")))
        assert rows[0][:3] == ["model", "parameter_number", "training_time_s"]
        assert "±" in rows[1][4]
        scores = json.loads((out / "benchmark_scores.json").read_text())
        assert "train_time_s" not in scores and "inference_ms" not in scores
        assert manifest(out, "benchmark")["seeds"]["replication_seeds"] == rep["replication_seeds"]
        assert "5 replications" in res.out

    def test_env_out_dir(self, blobs, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("IMBALBENCH_OUT_DIR", str(tmp_path / "env"))
        assert run(["benchmark", "--data", blobs, "--epochs", "1", "--replications", "1"],
                   capsys)[0] == 0
        assert (tmp_path / "env" / "benchmark_report.json").exists()


def test_no_command_is_usage_error(capsys):
    code, res = run([], capsys)
    assert code == 2 and json.loads(res.err)["error"] == "usage"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "imbalbench", "synth", "--counts", "3,3",
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "synth.csv").exists()
