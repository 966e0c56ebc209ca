import json
import os

import pytest

from shotgenre.cli import run

SYNTH = ["synth", "--videos", "40", "--genres", "4", "--d-v", "6", "--d-a", "6",
         "--d-l", "6", "--shots", "5", "--frames", "3", "--seed", "7"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One synthesized dataset + trained model shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "d.jsonl"
    assert run(SYNTH + ["--out", str(data)]) == 0
    model = root / "m.ckpt"
    assert run(["train", "--data", str(data), "--out", str(model),
                "--epochs", "3", "--d-h", "8", "--seed", "1"]) == 0
    return root, data, model


def test_synth_writes_three_artifacts(workdir):
    root, data, _ = workdir
    assert data.exists()
    assert (root / "d.emb.jsonl").exists()
    assert (root / "d.truth.json").exists()
    manifest = json.loads((root / "d.jsonl.manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["seed"] == 7
    assert set(manifest["artifacts"]) == {"d.jsonl", "d.emb.jsonl", "d.truth.json"}
    assert manifest["versions"]["shotgenre"]


def test_synth_byte_reproducible(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run(SYNTH + ["--out", str(a)]) == 0
    assert run(SYNTH + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_train_then_eval(workdir, tmp_path):
    root, data, model = workdir
    assert model.exists()
    assert (root / "m.ckpt.history.csv").exists()
    prefix = tmp_path / "ev"
    code = run(["eval", "--data", str(data), "--model", str(model),
                "--split", "test", "--out-prefix", str(prefix)])
    assert code == 0
    assert (tmp_path / "ev.predictions.jsonl").exists()
    report = (tmp_path / "ev.report.txt").read_text()
    assert "macro" in report and "micro" in report


def test_eval_dim_mismatch_exit_1(workdir, tmp_path, capsys):
    root, data, model = workdir
    other = tmp_path / "other.jsonl"
    assert run(["synth", "--out", str(other), "--videos", "10", "--genres", "4",
                "--d-v", "9", "--d-a", "6", "--d-l", "6", "--seed", "1"]) == 0
    code = run(["eval", "--data", str(other), "--model", str(model),
                "--out-prefix", str(tmp_path / "x")])
    assert code == 1
    err = capsys.readouterr().err
    assert "6" in err and "9" in err  # names both dims


def test_report_from_predictions(workdir, tmp_path):
    root, data, model = workdir
    prefix = tmp_path / "ev"
    assert run(["eval", "--data", str(data), "--model", str(model),
                "--out-prefix", str(prefix)]) == 0
    out = tmp_path / "re"
    code = run(["report", "--data", str(data),
                "--predictions", str(tmp_path / "ev.predictions.jsonl"),
                "--out-prefix", str(out)])
    assert code == 0
    assert (tmp_path / "re.report.csv").read_text() == (tmp_path / "ev.report.csv").read_text()


def test_keywords_and_tfidf(workdir, tmp_path):
    _, data, _ = workdir
    kw = tmp_path / "kw.csv"
    assert run(["keywords", "--data", str(data), "--out", str(kw), "--k", "5"]) == 0
    assert kw.read_text().startswith("id,rank,keyword,frequency")
    prefix = tmp_path / "tf"
    # the dataset has 4 genres, so drop the exclusion threshold below that
    assert run(["tfidf", "--data", str(data), "--out-prefix", str(prefix),
                "--max-genres", "3"]) == 0
    ranked = (tmp_path / "tf.ranked.csv").read_text()
    filtered = (tmp_path / "tf.filtered.csv").read_text()
    assert ranked.startswith("genre,rank,word,score")
    assert "filler0" in ranked and "filler0" not in filtered


def test_slide_and_retrieval(workdir, tmp_path):
    _, data, model = workdir
    out = tmp_path / "slide.csv"
    code = run(["slide", "--data", str(data), "--model", str(model), "--out", str(out),
                "--window", "3", "--stride", "2", "--genre", "Action", "--top-k", "2"])
    assert code == 0
    assert out.read_text().startswith("start,end,genre,score")
    assert (tmp_path / "slide.csv.top.csv").exists()


def test_pixstats(tmp_path):
    data = tmp_path / "px.jsonl"
    assert run(["synth", "--out", str(data), "--videos", "20", "--genres", "4",
                "--pixel-stats", "--seed", "2"]) == 0
    out = tmp_path / "profiles.csv"
    assert run(["pixstats", "--data", str(data), "--out", str(out)]) == 0
    assert out.read_text().startswith("genre,num_videos")


def test_pixstats_without_stats_is_runtime_error(workdir, tmp_path):
    _, data, _ = workdir
    assert run(["pixstats", "--data", str(data), "--out", str(tmp_path / "p.csv")]) == 1


class TestBoundaryCommands:
    @pytest.fixture(scope="class")
    def annotated(self, tmp_path_factory):
        import numpy as np

        from shotgenre import featurestore as fs, sceneboundary as sb

        root = tmp_path_factory.mktemp("boundary")
        seqs, _ = sb.synth_boundary_sequences(num_sequences=8, shots_per_sequence=24,
                                              feature_dim=6, seed=3)
        taxonomy = fs.GenreTaxonomy(("A", "B"))
        records = []
        for i, (feats, flags) in enumerate(seqs):
            shots = [fs.Shot(f.reshape(1, -1)) for f in feats]
            records.append(fs.VideoRecord(f"s{i}", "train", set(), shots,
                                          np.zeros(2, np.float32), [], boundary_flags=flags))
        ds = fs.Dataset(taxonomy, 6, 2, 2, records)
        path = root / "ann.jsonl"
        fs.write_dataset(ds, path)
        return root, path

    def test_train_eval_cycle(self, annotated):
        root, path = annotated
        ckpt = root / "b.ckpt"
        code = run(["boundary-train", "--data", str(path), "--out", str(ckpt),
                    "--epochs", "20", "--max-lr", "0.003", "--hidden", "16,8",
                    "--batch", "64", "--seed", "5"])
        assert code == 0
        out = root / "beval.json"
        assert run(["boundary-eval", "--data", str(path), "--model", str(ckpt),
                    "--out", str(out)]) == 0
        result = json.loads(out.read_text())
        assert set(result) >= {"ap", "recall_at_05", "positives"}
        assert result["ap"] > 0.5

    def test_unannotated_data_rejected(self, annotated, tmp_path):
        root, _ = annotated
        plain = tmp_path / "plain.jsonl"
        assert run(["synth", "--out", str(plain), "--videos", "8", "--genres", "2",
                    "--seed", "0"]) == 0
        assert run(["boundary-train", "--data", str(plain),
                    "--out", str(tmp_path / "x.ckpt"), "--epochs", "1",
                    "--hidden", "4", "--seed", "0"]) == 1


class TestConfigAndErrors:
    def test_config_file_provides_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        out = tmp_path / "c.jsonl"
        cfg.write_text(json.dumps({"videos": 10, "genres": 4, "seed": 3,
                                   "out": str(out)}))
        assert run(["--config", str(cfg), "synth"]) == 0
        assert out.exists()

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"videos": 10, "genres": 4, "seed": 3}))
        out = tmp_path / "c.jsonl"
        assert run(["--config", str(cfg), "synth", "--out", str(out), "--videos", "6"]) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1 + 6

    def test_unknown_config_key_usage_error(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"video": 10}))
        assert run(["--config", str(cfg), "synth", "--out", str(tmp_path / "x.jsonl")]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_missing_required_usage_error(self, capsys):
        assert run(["synth"]) == 2
        assert "--out" in capsys.readouterr().err

    def test_missing_input_usage_error(self, tmp_path):
        assert run(["eval", "--data", str(tmp_path / "nope.jsonl"),
                    "--model", str(tmp_path / "nope.ckpt"),
                    "--out-prefix", str(tmp_path / "x")]) == 2

    def test_unknown_flag_exit_2(self):
        assert run(["synth", "--wat", "1"]) == 2

    def test_env_var_path_default(self, tmp_path, monkeypatch):
        out = tmp_path / "env.jsonl"
        monkeypatch.setenv("SHOTGENRE_OUT", str(out))
        assert run(["synth", "--videos", "5", "--genres", "2", "--seed", "1"]) == 0
        assert out.exists()

    def test_manifest_identical_up_to_paths_and_timestamp(self, tmp_path):
        manifests = []
        for sub in ("one", "two"):
            d = tmp_path / sub
            os.makedirs(d)
            out = d / "h.jsonl"
            assert run(["synth", "--videos", "6", "--genres", "2", "--seed", "9",
                        "--out", str(out)]) == 0
            m = json.loads((d / "h.jsonl.manifest.json").read_text())
            del m["timestamp"]
            del m["config"]["out"]
            manifests.append(m)
        assert manifests[0] == manifests[1]
