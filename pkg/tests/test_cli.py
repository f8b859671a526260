"""Command-line subcommands, exit codes and file outputs."""

import csv
import json

import numpy as np
import pytest

from nmog.cli import main
from nmog.hsi_data import load_cube, save_cube
from nmog.noise_sim import NoiseMetadata, NoiseSpec, corrupt, planted_cube


@pytest.fixture
def clean_file(tmp_path):
    cube, _, _ = planted_cube(24, 24, 10, 3, seed=0)
    path = tmp_path / "clean.hsic"
    save_cube(cube, path)
    return path


class TestSimulate:
    def test_deterministic(self, tmp_path, clean_file):
        outs = []
        for name in ("a", "b"):
            code = main(["simulate", "--input", str(clean_file), "--case", "iid", "--seed", "7",
                         "--output", str(tmp_path / f"{name}.hsic"), "--metadata", str(tmp_path / f"{name}.json")])
            assert code == 0
            outs.append(((tmp_path / f"{name}.hsic").read_bytes(), (tmp_path / f"{name}.json").read_bytes()))
        assert outs[0] == outs[1]

    def test_unknown_case(self, tmp_path, clean_file, capsys):
        with pytest.raises(SystemExit) as info:
            main(["simulate", "--input", str(clean_file), "--case", "gaussianish",
                  "--output", str(tmp_path / "o"), "--metadata", str(tmp_path / "m")])
        assert info.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_noniid_metadata_lists_snr(self, tmp_path, clean_file):
        meta_path = tmp_path / "m.json"
        assert main(["simulate", "--input", str(clean_file), "--case", "noniid", "--seed", "1",
                     "--output", str(tmp_path / "n.hsic"), "--metadata", str(meta_path)]) == 0
        meta = NoiseMetadata.from_json(meta_path)
        assert len(meta.bands) == 10
        assert all(5.0 <= b.snr_db <= 10.0 for b in meta.bands)

    def test_bad_format_input(self, tmp_path):
        bad = tmp_path / "bad.hsic"
        bad.write_bytes(b"XXXX" + bytes(16))
        code = main(["simulate", "--input", str(bad), "--case", "iid",
                     "--output", str(tmp_path / "o"), "--metadata", str(tmp_path / "m")])
        assert code == 1


class TestDenoise:
    def test_planted_rank_recovered(self, tmp_path, clean_file):
        report = tmp_path / "r.json"
        assert main(["denoise", "--input", str(clean_file), "--output", str(tmp_path / "d.hsic"),
                     "--report", str(report)]) == 0
        assert json.loads(report.read_text())["final_rank"] == 3
        out = load_cube(tmp_path / "d.hsic")
        assert out.shape == (24, 24, 10)

    def test_single_component_on_iid(self, tmp_path, clean_file):
        clean = load_cube(clean_file)
        noisy, _ = corrupt(clean, NoiseSpec(sigma=0.05, seed=0))
        save_cube(noisy, tmp_path / "noisy.hsic")
        report = tmp_path / "r.json"
        assert main(["denoise", "--input", str(tmp_path / "noisy.hsic"), "--output", str(tmp_path / "d.hsic"),
                     "--components", "1", "--report", str(report)]) == 0
        data = json.loads(report.read_text())
        assert all(len(b["pi"]) == 1 for b in data["bands"])
        out = load_cube(tmp_path / "d.hsic")
        assert np.mean((out.data - clean.data) ** 2) < np.mean((noisy.data - clean.data) ** 2)

    def test_missing_input(self, tmp_path):
        assert main(["denoise", "--input", str(tmp_path / "none.hsic"), "--output", str(tmp_path / "o")]) == 1

    @pytest.mark.parametrize("flag", [["--rank", "0"], ["--tol", "-1"], ["--max-iters", "x"]])
    def test_bad_flags(self, tmp_path, clean_file, flag):
        with pytest.raises(SystemExit) as info:
            main(["denoise", "--input", str(clean_file), "--output", str(tmp_path / "o"), *flag])
        assert info.value.code == 2

    def test_thread_variable(self, tmp_path, clean_file, monkeypatch):
        monkeypatch.setenv("NMOG_THREADS", "1")
        assert main(["denoise", "--input", str(clean_file), "--output", str(tmp_path / "o.hsic"),
                     "--max-iters", "3"]) == 0
        monkeypatch.setenv("NMOG_THREADS", "many")
        assert main(["denoise", "--input", str(clean_file), "--output", str(tmp_path / "o.hsic")]) == 2


class TestSvdAndEvaluate:
    def test_self_evaluation(self, tmp_path, clean_file):
        assert main(["evaluate", "--reference", str(clean_file), "--test", str(clean_file),
                     "--csv", str(tmp_path / "q.csv"), "--json", str(tmp_path / "q.json")]) == 0
        summary = json.loads((tmp_path / "q.json").read_text())
        assert summary["mssim"] == pytest.approx(1.0)
        rows = list(csv.reader(open(tmp_path / "q.csv")))
        assert rows[0] == ["band", "psnr", "ssim"] and len(rows) == 11

    def test_svd_round_trip(self, tmp_path, clean_file):
        out = tmp_path / "s.hsic"
        assert main(["svd", "--input", str(clean_file), "--output", str(out), "--rank", "3"]) == 0
        clean = load_cube(clean_file)
        # float32 storage bounds the agreement
        assert np.abs(load_cube(out).data - clean.data).max() < 1e-6

    def test_svd_rank_too_large(self, tmp_path, clean_file):
        assert main(["svd", "--input", str(clean_file), "--output", str(tmp_path / "s"), "--rank", "11"]) == 2

    def test_evaluate_shape_mismatch(self, tmp_path, clean_file):
        other = tmp_path / "other.hsic"
        save_cube(planted_cube(8, 8, 10, 2)[0], other)
        assert main(["evaluate", "--reference", str(clean_file), "--test", str(other),
                     "--csv", str(tmp_path / "q.csv"), "--json", str(tmp_path / "q.json")]) == 1


class TestExperiment:
    def _plan(self, tmp_path, clean_file, **extra):
        plan = {"clean_path": str(clean_file), "case": "stripe", "seeds": [0, 1, 2], "K": 3, "R": 6,
                "output_dir": str(tmp_path / "out"), "max_iters": 15, **extra}
        path = tmp_path / "plan.json"
        path.write_text(json.dumps(plan))
        return path

    def test_summary_over_seeds(self, tmp_path, clean_file):
        assert main(["experiment", str(self._plan(tmp_path, clean_file))]) == 0
        out = tmp_path / "out"
        rows = list(csv.DictReader(open(out / "summary.csv")))
        assert list(rows[0]) == ["metric", "Noisy", "SVD", "NMoG"]
        assert [r["metric"] for r in rows] == ["MPSNR", "MSSIM", "time"]
        seeds = list(csv.DictReader(open(out / "seeds.csv")))
        assert len(seeds) == 3
        mean = np.mean([float(s["NMoG_MPSNR"]) for s in seeds])
        assert float(rows[0]["NMoG"]) == pytest.approx(mean, rel=1e-12)
        # every written cube and metadata file reads back
        for seed in (0, 1, 2):
            load_cube(out / f"nmog_{seed}.hsic")
            NoiseMetadata.from_json(out / f"noisy_{seed}.json")

    def test_failed_seed_is_recorded(self, tmp_path, clean_file):
        assert main(["experiment", str(self._plan(tmp_path, clean_file, svd_rank=50))]) == 1
        seeds = list(csv.DictReader(open(tmp_path / "out" / "seeds.csv")))
        assert all(s["status"].startswith("failed") for s in seeds)

    @pytest.mark.parametrize("bad", [{"seeds": []}, {"case": "nope"}, {"seeds": [-1]}])
    def test_invalid_plan(self, tmp_path, clean_file, bad):
        assert main(["experiment", str(self._plan(tmp_path, clean_file, **bad))]) == 2

    def test_missing_plan(self, tmp_path):
        assert main(["experiment", str(tmp_path / "none.json")]) == 1
