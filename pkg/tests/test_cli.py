"""End-to-end tests of the command-line interface."""

import ast
import re
import sys
from pathlib import Path

import openpyxl
import pytest

from seqmia.cli import main
from seqmia.report import read_csv


@pytest.fixture
def synth_path(tmp_path):
    path = tmp_path / "synth.sqmi"
    code = main(["synth", "--m", "8", "--n", "10", "--t", "4", "--shift", "1.5", "--seed", "3", "--out", str(path)])
    assert code == 0
    return path


class TestExitCodes:
    def test_synth_then_validate(self, synth_path, capsys):
        assert main(["validate", "--input", str(synth_path)]) == 0
        out = capsys.readouterr().out
        assert "M=8 N=10 T=4" in out
        assert "membership: balanced" in out

    def test_univariate_with_reduction_is_rejected(self, synth_path, tmp_path):
        code = main(
            [
                "attack",
                "-i",
                str(synth_path),
                "--estimator",
                "univariate",
                "--reduce",
                "min",
                "--reduce-param",
                "2",
                "-o",
                str(tmp_path / "s.csv"),
            ]
        )
        assert code == 1
        assert not (tmp_path / "s.csv").exists()

    def test_reduce_param_required(self, synth_path, tmp_path):
        assert main(["attack", "-i", str(synth_path), "--reduce", "group", "-o", str(tmp_path / "s.csv")]) == 1

    def test_unknown_flag(self, synth_path):
        assert main(["attack", "-i", str(synth_path), "--bogus"]) == 1

    def test_bad_fpr(self, tmp_path):
        scores = tmp_path / "s.csv"
        scores.write_text("target_index,canary_index,score,label,fallback_flag\n0,0,1.0,1,0\n", encoding="utf-8")
        assert main(["eval", "-s", str(scores), "--fpr", "1.5"]) == 1

    def test_missing_input_is_runtime_error(self, tmp_path):
        assert main(["validate", "--input", str(tmp_path / "nope.sqmi")]) == 2

    def test_bad_container_is_validation_error(self, tmp_path):
        path = tmp_path / "bad.sqmi"
        path.write_bytes(b"JUNK" + bytes(32))
        assert main(["validate", "--input", str(path)]) == 1

    def test_shadow_count_too_large(self, synth_path, tmp_path):
        assert main(["attack", "-i", str(synth_path), "--max-shadow", "8", "-o", str(tmp_path / "s.csv")]) == 1


class TestPipeline:
    def test_attack_eval_independent_of_threads(self, synth_path, tmp_path):
        outputs = []
        for threads in ("1", "3"):
            scores = tmp_path / f"scores_{threads}.csv"
            metrics = tmp_path / f"metrics_{threads}.csv"
            roc_out = tmp_path / f"roc_{threads}.csv"
            assert main(["-j", threads, "attack", "-i", str(synth_path), "--estimator", "full", "-o", str(scores)]) == 0
            assert (
                main(["eval", "-s", str(scores), "--fpr", "0.1,0.01", "-o", str(metrics), "--roc-out", str(roc_out)])
                == 0
            )
            outputs.append((scores.read_bytes(), metrics.read_bytes(), roc_out.read_bytes()))
        assert outputs[0] == outputs[1]

        rows = read_csv(tmp_path / "metrics_1.csv")
        assert rows[0]["scope"] == "pooled"
        assert set(rows[0]) == {"scope", "n_pos", "n_neg", "auc", "tpr@0.1", "tpr@0.01"}
        assert len(read_csv(tmp_path / "scores_1.csv")) == 80

    def test_synth_oracle_out(self, tmp_path):
        oracle = tmp_path / "oracle.csv"
        code = main(
            ["synth", "--m", "4", "--n", "3", "--t", "2", "--out", str(tmp_path / "o.sqmi"), "--oracle-out", str(oracle)]
        )
        assert code == 0
        rows = read_csv(oracle)
        assert len(rows) == 12
        assert set(rows[0]) == {"target_index", "canary_index", "score", "label", "fallback_flag"}

    def test_compare_with_workbook_and_curves(self, synth_path, tmp_path):
        out = tmp_path / "compare.csv"
        xlsx = tmp_path / "compare.xlsx"
        roc_dir = tmp_path / "curves"
        code = main(
            [
                "compare",
                "-i",
                str(synth_path),
                "--variants",
                "oas-shared,univariate-shared",
                "--fpr",
                "0.1",
                "-o",
                str(out),
                "--xlsx",
                str(xlsx),
                "--roc-dir",
                str(roc_dir),
            ]
        )
        assert code == 0
        assert [row["variant"] for row in read_csv(out)] == ["oas-shared", "univariate-shared"]
        assert sorted(p.name for p in roc_dir.iterdir()) == ["roc_oas-shared.csv", "roc_univariate-shared.csv"]
        assert openpyxl.load_workbook(xlsx).sheetnames == ["Summary", "TPR@10% FPR"]

        svg = tmp_path / "roc.svg"
        curves = [str(p) for p in sorted(roc_dir.iterdir())]
        assert main(["plot", "--in", curves[0], "--in", curves[1], "-o", str(svg)]) == 0
        assert svg.exists()
        assert main(["plot", "--in", str(out), "-o", str(tmp_path / "bars.svg")]) == 0

    def test_unknown_variant(self, synth_path):
        assert main(["compare", "-i", str(synth_path), "--variants", "magic-shared"]) == 1

    def test_covstudy(self, tmp_path):
        data = tmp_path / "study.sqmi"
        assert main(["synth", "--m", "16", "--n", "4", "--t", "3", "--out", str(data)]) == 0
        out = tmp_path / "covstudy.csv"
        code = main(["covstudy", "-i", str(data), "--grid", "4,8", "--gold", "8", "--canaries", "2", "-o", str(out)])
        assert code == 0
        rows = read_csv(out)
        assert len(rows) == 4 * 2 * 2 * 2
        assert {row["n_canaries"] for row in rows} == {"2"}
        assert main(["plot", "--in", str(out), "-o", str(tmp_path / "covstudy.svg")]) == 0

    def test_covstudy_gold_out_of_range(self, synth_path):
        assert main(["covstudy", "-i", str(synth_path), "--grid", "4", "--gold", "9"]) == 1

    def test_sweep(self, synth_path, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(
            ["sweep", "-i", str(synth_path), "--grid", "4,7", "--variants", "independent-shared", "--fpr", "0.1", "-o", str(out)]
        )
        assert code == 0
        assert [row["shadow_count"] for row in read_csv(out)] == ["4", "7"]
        assert main(["sweep", "-i", str(synth_path), "--grid", "8", "-o", str(out)]) == 1

    def test_reduce_sweep(self, synth_path, tmp_path):
        out = tmp_path / "reduce.csv"
        code = main(
            [
                "reduce-sweep",
                "-i",
                str(synth_path),
                "--variants",
                "independent-shared",
                "--kinds",
                "group,max",
                "--params",
                "2",
                "--fpr",
                "0.1",
                "-o",
                str(out),
            ]
        )
        assert code == 0
        assert [(row["reduction"], row["param"]) for row in read_csv(out)] == [("none", "4"), ("group", "2"), ("max", "2")]

    def test_covmatrix(self, synth_path, tmp_path):
        out = tmp_path / "cov.csv"
        svg = tmp_path / "cov.svg"
        code = main(["covmatrix", "-i", str(synth_path), "--canary", "1", "--correlation", "-o", str(out)])
        assert code == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 4
        assert float(lines[0].split(",")[0]) == pytest.approx(1.0)
        assert main(["plot", "--in", str(out), "-o", str(svg)]) == 0
        assert svg.exists()
        assert main(["covmatrix", "-i", str(synth_path), "--canary", "10"]) == 1

    def test_out_dir(self, synth_path, tmp_path):
        results = tmp_path / "results"
        assert main(["--out-dir", str(results), "attack", "-i", str(synth_path), "-o", "scores.csv"]) == 0
        assert (results / "scores.csv").exists()

    def test_csv_fixture_directory(self, tmp_path):
        fixture = tmp_path / "fx"
        fixture.mkdir()
        for i in range(4):
            (fixture / f"model_{i}.csv").write_text(f"{i}.0,1.0\n{i}.5,2.0\n", encoding="utf-8")
        (fixture / "mask.csv").write_text("1,0\n1,1\n0,0\n0,1\n", encoding="utf-8")
        assert main(["validate", "--input", str(fixture)]) == 0


class TestPackaging:
    def test_third_party_imports_are_declared(self):
        root = Path(__file__).resolve().parents[1]
        declared = {
            re.split(r"[<>=!~\s\[]", line, maxsplit=1)[0].lower()
            for line in (root / "requirements.txt").read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.startswith("#")
        }
        imported = set()
        for path in (root / "src" / "seqmia").glob("*.py"):
            for node in ast.walk(ast.parse(path.read_text(encoding="utf-8"))):
                if isinstance(node, ast.Import):
                    imported.update(alias.name.split(".")[0] for alias in node.names)
                elif isinstance(node, ast.ImportFrom) and node.level == 0 and node.module:
                    imported.add(node.module.split(".")[0])
        third_party = imported - set(sys.stdlib_module_names) - {"seqmia"}
        assert "click" in third_party
        assert third_party <= declared
