import numpy as np
import pytest

from csptl import load_subject, read_results_csv
from csptl.cli import EXIT_CONFIG, EXIT_FORMAT, EXIT_OK, main


def _gen_args(out_dir, subjects=3, epochs_per_class=24):
    return [
        "gen",
        "--subjects", str(subjects),
        "--channels", "8",
        "--samples", "32",
        "--epochs-per-class", str(epochs_per_class),
        "--sigma-hi", "4.0",
        "--sigma-lo", "1.0",
        "--divergence", "0.2",
        "--noise", "1.0",
        "--seed", "11",
        "--out", str(out_dir),
    ]


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert main(_gen_args(out)) == EXIT_OK
    return out


class TestGen:
    def test_writes_loadable_files(self, data_dir):
        paths = sorted(data_dir.glob("*.eegx"))
        assert [p.name for p in paths] == ["S01.eegx", "S02.eegx", "S03.eegx"]
        ds = load_subject(paths[0])
        assert ds.channels == 8
        assert len(ds) == 48

    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(_gen_args(a)) == EXIT_OK
        assert main(_gen_args(b)) == EXIT_OK
        for pa, pb in zip(sorted(a.glob("*.eegx")), sorted(b.glob("*.eegx"))):
            assert pa.read_bytes() == pb.read_bytes()

    def test_invalid_config_exits_2(self, tmp_path):
        args = _gen_args(tmp_path / "x")
        args[args.index("--sigma-lo") + 1] = "9.0"
        assert main(args) == EXIT_CONFIG


class TestRun:
    def test_run_emits_results_and_summary(self, data_dir, tmp_path):
        out = tmp_path / "results.csv"
        summary = tmp_path / "summary.csv"
        code = main([
            "run", "--data", str(data_dir),
            "--strategies", "BL1,BL2,MA",
            "--m-max", "4", "--reps", "2", "--seed", "5",
            "--out", str(out), "--summary", str(summary),
        ])
        assert code == EXIT_OK
        table = read_results_csv(out)
        assert len(table) == 3 * 3 * 3 * 2
        assert summary.read_text().splitlines()[0] == "strategy,m,mean,std,count"

    def test_missing_data_dir_exits_2(self, tmp_path):
        code = main([
            "run", "--data", str(tmp_path / "nope"),
            "--out", str(tmp_path / "r.csv"),
        ])
        assert code == EXIT_CONFIG

    def test_corrupt_file_exits_3(self, tmp_path):
        data = tmp_path / "data"
        data.mkdir()
        (data / "bad.eegx").write_bytes(b"XXXX" + bytes(60))
        code = main([
            "run", "--data", str(data), "--out", str(tmp_path / "r.csv"),
        ])
        assert code == EXIT_FORMAT

    def test_unknown_strategy_exits_2(self, data_dir, tmp_path):
        code = main([
            "run", "--data", str(data_dir), "--strategies", "BL1,WAT",
            "--out", str(tmp_path / "r.csv"),
        ])
        assert code == EXIT_CONFIG


class TestEval:
    def test_matches_run_cell(self, data_dir, tmp_path, capsys):
        out = tmp_path / "results.csv"
        assert main([
            "run", "--data", str(data_dir), "--strategies", "BL2,MA",
            "--m-max", "4", "--reps", "1", "--seed", "9", "--out", str(out),
        ]) == EXIT_OK
        capsys.readouterr()
        assert main([
            "eval", "--data", str(data_dir), "--target", "S02",
            "--strategy", "MA", "--m", "4", "--seed", "9",
        ]) == EXIT_OK
        printed = float(capsys.readouterr().out.strip())
        rows = [
            r for r in read_results_csv(out).records
            if r.subject == "S02" and r.strategy == "MA" and r.m == 4 and r.rep == 0
        ]
        assert len(rows) == 1
        assert printed == pytest.approx(rows[0].accuracy, abs=5e-7)

    def test_unknown_target_exits_2(self, data_dir):
        assert main([
            "eval", "--data", str(data_dir), "--target", "S99",
            "--strategy", "BL1", "--m", "0",
        ]) == EXIT_CONFIG

    def test_odd_m_exits_2(self, data_dir):
        assert main([
            "eval", "--data", str(data_dir), "--target", "S01",
            "--strategy", "BL1", "--m", "3",
        ]) == EXIT_CONFIG
