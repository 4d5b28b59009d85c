"""End-to-end command-line tests: exit codes, error lines, artifacts."""

import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from setgrade import cli, data, encoder, scorer

FAST = ["--epochs", "2", "--batches-per-epoch", "3", "--batch-size", "8",
        "--set-size", "4", "--n-contexts", "6", "--n-refs", "5"]


def run_cli(argv, capsys):
    rc = cli.main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


@pytest.fixture(scope="module")
def blob_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "blob.csv"
    dataset = data.synth_blobs(300, 12, 4, 4.0, seed=7)
    data.write_csv(dataset, str(path))
    return str(path)


@pytest.fixture(scope="module")
def trained(tmp_path_factory, blob_csv):
    out = str(tmp_path_factory.mktemp("run"))
    rc = cli.main(["train", "--data", blob_csv, "--out", out,
                   "--labeled-anomaly-count", "4", "--seed", "3"] + FAST)
    assert rc == 0
    return out


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

class TestSynth:
    def test_writes_loadable_csv(self, tmp_path, capsys):
        path = str(tmp_path / "s.csv")
        rc, out, err = run_cli(["synth", "--n-normal", "50", "--n-anomaly",
                                "5", "--dim", "3", "--out", path], capsys)
        assert rc == 0 and err == ""
        dataset = data.load_csv(path)
        assert dataset.features.shape == (55, 3)
        assert dataset.n_anomalies == 5

    def test_same_seed_same_bytes(self, tmp_path, capsys):
        paths = [str(tmp_path / f"s{i}.csv") for i in range(2)]
        for path in paths:
            run_cli(["synth", "--n-normal", "20", "--n-anomaly", "2",
                     "--dim", "3", "--seed", "9", "--out", path], capsys)
        with open(paths[0], "rb") as a, open(paths[1], "rb") as b:
            assert a.read() == b.read()


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

class TestTrain:
    def test_artifacts(self, trained):
        for name in ("model.bin", "train_log.jsonl", "config.resolved"):
            assert os.path.exists(os.path.join(trained, name))
        for name in data._PREPARED_FILES:
            assert os.path.exists(os.path.join(trained, "prepared", name))

    def test_train_log_shape(self, trained):
        with open(os.path.join(trained, "train_log.jsonl")) as fh:
            records = [json.loads(line) for line in fh]
        assert "config" in records[0] and "best_epoch" in records[0]
        epochs = records[1:]
        assert len(epochs) == 2
        assert [r["epoch"] for r in epochs] == [1, 2]
        assert all(np.isfinite(r["mean_loss"]) for r in epochs)

    def test_model_loads(self, trained):
        params = encoder.load_model(os.path.join(trained, "model.bin"))
        assert params.input_dim == 4

    def test_same_seed_identical_model(self, tmp_path, blob_csv, capsys):
        outs = [str(tmp_path / f"r{i}") for i in range(2)]
        for out in outs:
            rc, _, _ = run_cli(["train", "--data", blob_csv, "--out", out,
                                "--labeled-anomaly-count", "4",
                                "--seed", "3"] + FAST, capsys)
            assert rc == 0
        blobs = []
        for out in outs:
            with open(os.path.join(out, "model.bin"), "rb") as fh:
                blobs.append(fh.read())
        assert blobs[0] == blobs[1]

    def test_resolved_config_reproduces_run(self, tmp_path, trained, capsys):
        out = str(tmp_path / "replay")
        rc, _, _ = run_cli(["train", "--config",
                            os.path.join(trained, "config.resolved"),
                            "--out", out], capsys)
        assert rc == 0
        with open(os.path.join(trained, "model.bin"), "rb") as a, \
                open(os.path.join(out, "model.bin"), "rb") as b:
            assert a.read() == b.read()

    def test_flag_overrides_config_file(self, tmp_path, blob_csv, capsys):
        config = tmp_path / "cfg"
        config.write_text("epochs=1\nseed=3\nlabeled_anomaly_count=4\n")
        out = str(tmp_path / "run")
        rc, _, _ = run_cli(["train", "--data", blob_csv, "--out", out,
                            "--config", str(config), "--epochs", "2",
                            "--batches-per-epoch", "2", "--batch-size", "4",
                            "--set-size", "4"], capsys)
        assert rc == 0
        resolved = dict(
            line.split("=", 1) for line in
            open(os.path.join(out, "config.resolved")).read().splitlines())
        assert resolved["epochs"] == "2"

    def test_ratio_flag_overrides_count_from_file(self, tmp_path, blob_csv,
                                                  capsys):
        config = tmp_path / "cfg"
        config.write_text("labeled_anomaly_count=4\n")
        out = str(tmp_path / "run")
        rc, _, err = run_cli(["train", "--data", blob_csv, "--out", out,
                              "--config", str(config),
                              "--labeled-ratio", "0.5"] + FAST, capsys)
        assert rc == 0, err


class TestTrainErrors:
    def test_missing_data_is_io(self, tmp_path, capsys):
        rc, _, err = run_cli(["train", "--data", str(tmp_path / "no.csv"),
                              "--out", str(tmp_path / "o"),
                              "--labeled-anomaly-count", "1"], capsys)
        assert rc == 1
        assert err.startswith("error:io: ")

    def test_missing_budget_is_config(self, blob_csv, tmp_path, capsys):
        rc, _, err = run_cli(["train", "--data", blob_csv,
                              "--out", str(tmp_path / "o")], capsys)
        assert rc == 1
        assert err.startswith("error:config: ")

    def test_malformed_csv_is_parse(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,label\n1.0,oops,0\n")
        rc, _, err = run_cli(["train", "--data", str(bad),
                              "--out", str(tmp_path / "o"),
                              "--labeled-anomaly-count", "1"], capsys)
        assert rc == 1
        assert err.startswith("error:parse: ")

    def test_unknown_config_key(self, blob_csv, tmp_path, capsys):
        config = tmp_path / "cfg"
        config.write_text("no_such_knob=1\n")
        rc, _, err = run_cli(["train", "--data", blob_csv,
                              "--out", str(tmp_path / "o"),
                              "--config", str(config)], capsys)
        assert rc == 1
        assert err.startswith("error:config: ")
        assert "no_such_knob" in err

    def test_malformed_config_line(self, blob_csv, tmp_path, capsys):
        config = tmp_path / "cfg"
        config.write_text("this is not key value\n")
        rc, _, err = run_cli(["train", "--data", blob_csv,
                              "--out", str(tmp_path / "o"),
                              "--config", str(config)], capsys)
        assert rc == 1
        assert err.startswith("error:parse: ")

    def test_bad_pooling_is_config(self, blob_csv, tmp_path, capsys):
        rc, _, err = run_cli(["train", "--data", blob_csv,
                              "--out", str(tmp_path / "o"),
                              "--labeled-anomaly-count", "1",
                              "--pooling", "median"], capsys)
        assert rc == 1
        assert err.startswith("error:config: ")

    def test_error_line_is_single_line(self, tmp_path, capsys):
        rc, _, err = run_cli(["train", "--data", str(tmp_path / "no.csv"),
                              "--out", str(tmp_path / "o"),
                              "--labeled-anomaly-count", "1"], capsys)
        assert rc == 1
        assert err.endswith("\n") and err.count("\n") == 1


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

class TestScore:
    def _argv(self, trained, out, extra=()):
        return ["score", "--model", os.path.join(trained, "model.bin"),
                "--pool", os.path.join(trained, "prepared", "unlabeled.csv"),
                "--data", os.path.join(trained, "prepared", "test.csv"),
                "--set-size", "4", "--n-contexts", "6", "--n-refs", "5",
                "--seed", "11", "--out", out] + list(extra)

    def test_labeled_report_has_metrics(self, trained, tmp_path, capsys):
        out = str(tmp_path / "report.jsonl")
        rc, stdout, _ = run_cli(self._argv(trained, out), capsys)
        assert rc == 0
        meta, rows, evaluated = scorer.load_score_report(out)
        assert meta["n_contexts"] == 6 and meta["score_seed"] == 11
        assert "model_hash" in meta
        assert evaluated is not None
        assert 0.0 <= evaluated["auc_roc"] <= 1.0
        assert all("label" in r for r in rows)
        assert "auc_roc=" in stdout

    def test_unlabeled_report_has_no_metrics(self, trained, tmp_path,
                                             capsys):
        raw = tmp_path / "pts.csv"
        rng = np.random.default_rng(0)
        with open(raw, "w") as fh:
            fh.write("a,b,c,d\n")
            for row in rng.normal(size=(6, 4)):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        out = str(tmp_path / "report.jsonl")
        argv = self._argv(trained, out)
        argv[6] = str(raw)                    # swap --data value
        rc, _, _ = run_cli(argv + ["--unlabeled", "--stats",
                                   os.path.join(trained, "prepared",
                                                "stats.json")], capsys)
        assert rc == 0
        meta, rows, evaluated = scorer.load_score_report(out)
        assert evaluated is None
        assert len(rows) == 6
        assert all("label" not in r for r in rows)

    def test_same_seed_identical_report(self, trained, tmp_path, capsys):
        outs = [str(tmp_path / f"r{i}.jsonl") for i in range(2)]
        for out in outs:
            rc, _, _ = run_cli(self._argv(trained, out), capsys)
            assert rc == 0
        with open(outs[0], "rb") as a, open(outs[1], "rb") as b:
            assert a.read() == b.read()

    def test_dim_mismatch_is_shape(self, trained, tmp_path, capsys):
        wide = tmp_path / "wide.csv"
        data.write_csv(data.synth_blobs(30, 3, 5, 4.0, seed=1), str(wide))
        out = str(tmp_path / "r.jsonl")
        argv = self._argv(trained, out)
        argv[6] = str(wide)
        rc, _, err = run_cli(argv, capsys)
        assert rc == 1
        assert err.startswith("error:shape: ") or \
            err.startswith("error:config: ")

    def test_missing_model_is_io(self, trained, tmp_path, capsys):
        argv = self._argv(trained, str(tmp_path / "r.jsonl"))
        argv[2] = str(tmp_path / "no.bin")
        rc, _, err = run_cli(argv, capsys)
        assert rc == 1
        assert err.startswith("error:io: ")

    def test_truncated_model_is_parse(self, trained, tmp_path, capsys):
        clipped = tmp_path / "clip.bin"
        with open(os.path.join(trained, "model.bin"), "rb") as fh:
            clipped.write_bytes(fh.read()[:40])
        argv = self._argv(trained, str(tmp_path / "r.jsonl"))
        argv[2] = str(clipped)
        rc, _, err = run_cli(argv, capsys)
        assert rc == 1
        assert err.startswith("error:parse: ")


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

class TestSweep:
    BASE = ["--labeled-anomaly-count", "4", "--epochs", "1",
            "--batches-per-epoch", "2", "--batch-size", "8",
            "--n-contexts", "4", "--n-refs", "4", "--seed", "6"]

    def read(self, path):
        with open(path, newline="") as fh:
            return list(csv.reader(fh))

    def test_rows_sorted_by_value(self, blob_csv, tmp_path, capsys):
        out = str(tmp_path / "sweep.csv")
        rc, _, err = run_cli(["sweep", "--data", blob_csv, "--out", out,
                              "--axis", "set_size", "--values", "6,3"]
                             + self.BASE, capsys)
        assert rc == 0, err
        rows = self.read(out)
        assert rows[0] == list(cli.SWEEP_HEADER)
        assert [r[0] for r in rows[1:]] == ["set_size", "set_size"]
        assert [r[1] for r in rows[1:]] == ["3", "6"]
        assert all(r[5] == "ok" for r in rows[1:])
        for r in rows[1:]:
            assert 0.0 <= float(r[2]) <= 1.0
            assert 0.0 <= float(r[3]) <= 1.0

    def test_deterministic_modulo_wall(self, blob_csv, tmp_path, capsys):
        outs = [str(tmp_path / f"s{i}.csv") for i in range(2)]
        for out in outs:
            rc, _, _ = run_cli(["sweep", "--data", blob_csv, "--out", out,
                                "--axis", "set_size", "--values", "3,6"]
                               + self.BASE, capsys)
            assert rc == 0
        first, second = self.read(outs[0]), self.read(outs[1])
        for a, b in zip(first, second):
            assert a[:4] == b[:4] and a[5] == b[5]   # wall_ms may differ

    def test_partial_failure_keeps_other_rows(self, blob_csv, tmp_path,
                                              capsys):
        out = str(tmp_path / "sweep.csv")
        rc, _, err = run_cli(["sweep", "--data", blob_csv, "--out", out,
                              "--axis", "labeled_ratio",
                              "--values", "0.01,0.5", "--epochs", "1",
                              "--batches-per-epoch", "2", "--batch-size",
                              "8", "--set-size", "4", "--n-contexts", "4",
                              "--n-refs", "4", "--seed", "6"], capsys)
        assert rc == 1
        assert "error:train: " in err
        rows = self.read(out)
        by_value = {r[1]: r for r in rows[1:]}
        assert by_value[repr(0.01)][5] == "failed"
        assert by_value[repr(0.01)][2] == ""
        assert by_value[repr(0.5)][5] == "ok"

    def test_infeasible_contamination_fails_row(self, blob_csv, tmp_path,
                                                capsys):
        # 12 anomalies total cannot push a ~230-row pool to a 50% rate
        out = str(tmp_path / "sweep.csv")
        rc, _, err = run_cli(["sweep", "--data", blob_csv, "--out", out,
                              "--axis", "contamination",
                              "--values", "0.0,0.5"] + self.BASE, capsys)
        assert rc == 1
        rows = self.read(out)
        by_value = {r[1]: r for r in rows[1:]}
        assert by_value[repr(0.5)][5] == "failed"
        assert "contamination rate 0.5" in err

    def test_bad_axis_is_config(self, blob_csv, tmp_path, capsys):
        rc, _, err = run_cli(["sweep", "--data", blob_csv,
                              "--out", str(tmp_path / "s.csv"),
                              "--axis", "bogus", "--values", "1"]
                             + self.BASE, capsys)
        assert rc == 1
        assert err.startswith("error:config: ")

    def test_unparseable_values(self, blob_csv, tmp_path, capsys):
        rc, _, err = run_cli(["sweep", "--data", blob_csv,
                              "--out", str(tmp_path / "s.csv"),
                              "--axis", "set_size", "--values", "2,x"]
                             + self.BASE, capsys)
        assert rc == 1
        assert err.startswith("error:parse: ")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        path = str(tmp_path / "s.csv")
        proc = subprocess.run(
            [sys.executable, "-m", "setgrade.cli", "synth", "--n-normal",
             "10", "--n-anomaly", "2", "--dim", "3", "--out", path],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert os.path.exists(path)

    def test_error_exit_code_via_subprocess(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "setgrade.cli", "train", "--data",
             str(tmp_path / "no.csv"), "--out", str(tmp_path / "o"),
             "--labeled-anomaly-count", "1"],
            capture_output=True, text=True)
        assert proc.returncode == 1
        assert proc.stderr.startswith("error:io: ")
