import numpy as np
import pytest

from impgcn.cli import main
from impgcn.data import DatasetSplit, load_checkpoint, write_split


def write_dataset(tmp_path, pairs, name="data", val=(), test=()):
    split = DatasetSplit(train=np.array(pairs, dtype=np.int64).reshape(-1, 2),
                         validation=np.array(list(val), dtype=np.int64).reshape(-1, 2),
                         test=np.array(list(test), dtype=np.int64).reshape(-1, 2),
                         user_map={}, item_map={})
    out = tmp_path / name
    write_split(split, out)
    return out


@pytest.fixture
def toy_raw(tmp_path):
    raw = tmp_path / "raw.txt"
    raw.write_text("".join(f"u{u}\ti{k}\n" for u in (1, 2) for k in range(5)))
    return raw


@pytest.fixture
def block_dataset(tmp_path):
    rng = np.random.default_rng(0)
    pairs, val, test = [], [], []
    for u in range(12):
        lo = 0 if u < 6 else 6
        items = rng.choice(np.arange(lo, lo + 6), size=5, replace=False)
        pairs += [(u, int(i)) for i in items[:3]]
        val.append((u, int(items[3])))
        test.append((u, int(items[4])))
    # make sure every item appears in train
    for i in range(12):
        pairs.append((i, i))
    return write_dataset(tmp_path, sorted(set(pairs)), val=val, test=test)


class TestPrepare:
    def test_toy_manifest_keeps_all_interactions(self, toy_raw, tmp_path, capsys):
        out = tmp_path / "prep"
        assert main(["prepare", "--input", str(toy_raw), "--out", str(out),
                     "--k-core", "1", "--seed", "0"]) == 0
        total = sum(len((out / f).read_text().splitlines())
                    for f in ("train.txt", "validation.txt", "test.txt"))
        assert total == 10
        stats = dict(line.split("\t") for line in (out / "stats.txt").read_text().splitlines())
        assert stats["users"] == "2" and stats["items"] == "5"
        assert stats["interactions"] == "10" and stats["dropped"] == "0"
        assert "prepared 10 interactions" in capsys.readouterr().out

    def test_single_user_file_drops_cold_holdouts(self, tmp_path):
        raw = tmp_path / "five.txt"
        raw.write_text("".join(f"u1\ti{k}\n" for k in range(5)))
        out = tmp_path / "prep5"
        assert main(["prepare", "--input", str(raw), "--out", str(out),
                     "--k-core", "1"]) == 0
        stats = dict(line.split("\t") for line in (out / "stats.txt").read_text().splitlines())
        assert stats["dropped"] == "2"
        assert len((out / "train.txt").read_text().splitlines()) == 3

    def test_over_aggressive_kcore_is_data_error(self, toy_raw, tmp_path, capsys):
        code = main(["prepare", "--input", str(toy_raw), "--out",
                     str(tmp_path / "x"), "--k-core", "99"])
        assert code == 2
        assert "no interactions left" in capsys.readouterr().err

    def test_missing_input_is_usage_error(self, tmp_path):
        assert main(["prepare", "--out", str(tmp_path / "x")]) == 1


class TestTrain:
    def run_train(self, data, out, *extra):
        return main(["train", "--data", str(data), "--out", str(out),
                     "--dim", "8", "--layers", "2", "--groups", "2",
                     "--epochs", "4", "--eval-every", "2", "--seed", "5",
                     "--batch-size", "64", *extra])

    def test_writes_artifacts(self, block_dataset, tmp_path):
        out = tmp_path / "run"
        assert self.run_train(block_dataset, out) == 0
        for name in ("checkpoint.impg", "curve.tsv", "group_sizes.tsv",
                     "effective-config.txt"):
            assert (out / name).exists()
        curve = (out / "curve.tsv").read_text().splitlines()
        assert len(curve) == 4
        assert all(len(line.split("\t")) == 4 for line in curve)
        sizes = (out / "group_sizes.tsv").read_text().splitlines()
        assert len(sizes) == 4
        epoch, *groups = sizes[0].split("\t")
        assert epoch == "1" and sum(map(int, groups)) == 12

    def test_lightgcn_equals_one_group(self, block_dataset, tmp_path):
        a, b = tmp_path / "lg", tmp_path / "one"
        assert main(["train", "--data", str(block_dataset), "--out", str(a),
                     "--model", "lightgcn", "--dim", "8", "--layers", "2",
                     "--epochs", "3", "--seed", "5"]) == 0
        assert main(["train", "--data", str(block_dataset), "--out", str(b),
                     "--model", "impgcn", "--groups", "1", "--dim", "8",
                     "--layers", "2", "--epochs", "3", "--seed", "5"]) == 0
        assert (a / "checkpoint.impg").read_bytes() == (b / "checkpoint.impg").read_bytes()
        assert (a / "curve.tsv").read_text() == (b / "curve.tsv").read_text()

    def test_ablate_shorthand(self, block_dataset, tmp_path):
        out = tmp_path / "ab"
        assert self.run_train(block_dataset, out, "--ablate", "structure",
                              "--ablate", "first-order") == 0
        cfg = dict(line.split("=") for line in
                   (out / "effective-config.txt").read_text().splitlines())
        assert cfg["ablate_structure"] == "true"
        assert cfg["ablate_first_order"] == "true"

    def test_unknown_model_is_usage_error(self, block_dataset, tmp_path):
        assert main(["train", "--data", str(block_dataset), "--out",
                     str(tmp_path / "x"), "--model", "svd"]) == 1


class TestEval:
    @pytest.fixture
    def trained(self, block_dataset, tmp_path):
        out = tmp_path / "trained"
        TestTrain().run_train(block_dataset, out)
        return out / "checkpoint.impg"

    def test_metrics_file_format(self, trained, block_dataset, tmp_path, capsys):
        out = tmp_path / "metrics"
        assert main(["eval", "--checkpoint", str(trained), "--data",
                     str(block_dataset), "--out", str(out)]) == 0
        lines = (out / "metrics.tsv").read_text().splitlines()
        metric, cutoff, value = lines[0].split("\t")
        assert (metric, cutoff) == ("recall", "20")
        assert 0.0 <= float(value) <= 1.0
        assert lines[1].startswith("ndcg\t20\t")

    def test_per_group_table(self, trained, block_dataset, tmp_path):
        out = tmp_path / "metrics2"
        assert main(["eval", "--checkpoint", str(trained), "--data",
                     str(block_dataset), "--out", str(out), "--per-group"]) == 0
        lines = (out / "per_group.tsv").read_text().splitlines()
        assert lines[0] == "group\trecall\tndcg\tusers"
        assert sum(int(line.split("\t")[3]) for line in lines[1:]) == 12

    def test_train_split_evaluation(self, trained, block_dataset, tmp_path):
        assert main(["eval", "--checkpoint", str(trained), "--data",
                     str(block_dataset), "--split", "train"]) == 0

    def test_missing_checkpoint_is_data_error(self, block_dataset, tmp_path, capsys):
        code = main(["eval", "--checkpoint", str(tmp_path / "nope.impg"),
                     "--data", str(block_dataset)])
        assert code == 2
        assert "cannot read checkpoint" in capsys.readouterr().err

    def test_checkpoint_for_other_graph_is_data_error(self, trained, tmp_path):
        other = write_dataset(tmp_path, [(0, 0), (0, 1), (1, 0), (1, 1)], name="other")
        assert main(["eval", "--checkpoint", str(trained), "--data", str(other)]) == 2


class TestCoverage:
    def test_path_graph_table(self, tmp_path, capsys):
        data = write_dataset(tmp_path, [(0, 0), (1, 0), (1, 1)])
        assert main(["coverage", "--data", str(data), "--max-k", "3"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "k\tmean"
        values = [float(line.split("\t")[1]) for line in lines[1:]]
        np.testing.assert_allclose(values, [0.625, 0.875, 1.0])

    def test_zero_hops_single_row(self, tmp_path, capsys):
        data = write_dataset(tmp_path, [(0, 0), (1, 0), (1, 1)])
        assert main(["coverage", "--data", str(data), "--max-k", "0"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[1:] == ["0\t0.250000"]

    def test_last_row_at_most_one_and_file_written(self, block_dataset, tmp_path):
        out = tmp_path / "cov"
        assert main(["coverage", "--data", str(block_dataset), "--max-k", "6",
                     "--out", str(out)]) == 0
        lines = (out / "coverage.tsv").read_text().strip().splitlines()
        last = float(lines[-1].split("\t")[1])
        assert last <= 1.0

    def test_per_group_columns(self, block_dataset, tmp_path):
        run = tmp_path / "for-cov"
        TestTrain().run_train(block_dataset, run)
        out = tmp_path / "cov2"
        assert main(["coverage", "--data", str(block_dataset), "--max-k", "2",
                     "--per-group", "--checkpoint", str(run / "checkpoint.impg"),
                     "--out", str(out)]) == 0
        header = (out / "coverage.tsv").read_text().splitlines()[0].split("\t")
        assert header[0] == "k" and header[1] == "mean" and len(header) >= 3


class TestGroups:
    def test_dump_format(self, block_dataset, tmp_path, capsys):
        run = tmp_path / "for-groups"
        TestTrain().run_train(block_dataset, run)
        capsys.readouterr()  # flush the train summary
        assert main(["groups", "--checkpoint", str(run / "checkpoint.impg"),
                     "--data", str(block_dataset)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 12
        users, groups = zip(*(line.split("\t") for line in lines))
        assert list(users) == [str(u) for u in range(12)]
        assert set(groups) <= {"0", "1"}


class TestConfigPrecedence:
    def test_file_beats_default(self, toy_raw, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("k_core=1\nseed=3\n")
        out = tmp_path / "p1"
        assert main(["--config", str(cfg), "prepare", "--input", str(toy_raw),
                     "--out", str(out)]) == 0
        text = (out / "effective-config.txt").read_text()
        assert "seed=3" in text and "k_core=1" in text

    def test_env_beats_file_and_flag_beats_env(self, toy_raw, tmp_path, monkeypatch):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("k_core=1\nseed=3\n")
        monkeypatch.setenv("IMPGCN_SEED", "7")
        out = tmp_path / "p2"
        assert main(["--config", str(cfg), "prepare", "--input", str(toy_raw),
                     "--out", str(out)]) == 0
        assert "seed=7" in (out / "effective-config.txt").read_text()
        out = tmp_path / "p3"
        assert main(["--config", str(cfg), "prepare", "--input", str(toy_raw),
                     "--out", str(out), "--seed", "11"]) == 0
        assert "seed=11" in (out / "effective-config.txt").read_text()

    def test_unknown_config_key_rejected(self, toy_raw, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("momentum=0.9\n")
        code = main(["--config", str(cfg), "prepare", "--input", str(toy_raw),
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_bad_flag_is_usage_error(self):
        assert main(["prepare", "--no-such-flag"]) == 1

    def test_bad_bool_env_is_usage_error(self, toy_raw, tmp_path, monkeypatch):
        monkeypatch.setenv("IMPGCN_SINGLE_PASS_KCORE", "maybe")
        assert main(["prepare", "--input", str(toy_raw),
                     "--out", str(tmp_path / "x")]) == 1


class TestExecutionModes:
    def test_divergence_exits_3(self, tmp_path, capsys):
        pairs = [(u, i) for u in range(6) for i in range(4) if (u + i) % 2 == 0 or i == 0]
        data = write_dataset(tmp_path, pairs)
        code = main(["train", "--data", str(data), "--out", str(tmp_path / "x"),
                     "--dim", "4", "--layers", "2", "--groups", "2",
                     "--epochs", "5", "--lr", "1e32", "--seed", "0"])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

    def test_pure_python_env_selects_numpy_backend(self):
        import subprocess
        import sys

        out = subprocess.run(
            [sys.executable, "-c", "from impgcn.kernels import BACKEND; print(BACKEND)"],
            env={"PATH": "/usr/bin:/bin", "IMPGCN_PURE_PYTHON": "1"},
            capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "numpy"

    def test_global_flags_accepted_after_subcommand(self, toy_raw, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("k_core=1\n")
        out = tmp_path / "p4"
        assert main(["prepare", "--config", str(cfg), "--input", str(toy_raw),
                     "--out", str(out), "--verbose"]) == 0
        assert "k_core=1" in (out / "effective-config.txt").read_text()
