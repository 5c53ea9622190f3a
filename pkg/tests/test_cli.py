import json
import re

import pytest

from causalab.cli import main
from causalab.rca import rank_metrics
from causalab import sim


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestSimulate:
    def test_bundle_written(self, tmp_path, capsys):
        code, out, _ = run(
            capsys,
            "simulate", "--model", "er", "--d", "6", "--n", "500",
            "--seed", "7", "--out", str(tmp_path / "case"),
        )
        assert code == 0
        for name in ("meta.json", "graph.json", "normal.csv", "anomalies.csv", "labels.json"):
            assert (tmp_path / "case" / name).exists()

    def test_byte_identical_reruns(self, tmp_path, capsys):
        for sub in ("one", "two"):
            code, _, _ = run(
                capsys,
                "simulate", "--d", "5", "--n", "300", "--seed", "3",
                "--out", str(tmp_path / sub),
            )
            assert code == 0
        for name in ("meta.json", "graph.json", "normal.csv", "anomalies.csv", "labels.json"):
            a = (tmp_path / "one" / name).read_bytes()
            b = (tmp_path / "two" / name).read_bytes()
            assert a == b, name


class TestDiscover:
    def test_shd_line_format(self, tmp_path, capsys):
        run(capsys, "simulate", "--d", "5", "--n", "20000", "--seed", "2",
            "--out", str(tmp_path / "case"))
        code, out, _ = run(
            capsys,
            "discover", "--algo", "pc",
            "--data", str(tmp_path / "case" / "normal.csv"),
            "--truth", str(tmp_path / "case" / "graph.json"),
            "--out", str(tmp_path / "graph.json"),
        )
        assert code == 0
        assert re.search(r"^shd=\d+ normalized=\d+\.\d{6}$", out.strip(), re.M)
        assert (tmp_path / "graph.json").exists()

    def test_forbid_flag_respected(self, tmp_path, capsys):
        run(capsys, "simulate", "--d", "4", "--n", "5000", "--seed", "4",
            "--out", str(tmp_path / "case"))
        graph_out = tmp_path / "g.json"
        truth = json.loads((tmp_path / "case" / "graph.json").read_text())
        edge = truth["edges"][0]
        code, _, _ = run(
            capsys,
            "discover", "--algo", "pc",
            "--data", str(tmp_path / "case" / "normal.csv"),
            "--forbid", f"{edge['from']}->{edge['to']}",
            "--forbid", f"{edge['to']}->{edge['from']}",
            "--out", str(graph_out),
        )
        assert code == 0
        got = json.loads(graph_out.read_text())
        for e in got["edges"]:
            assert {e["from"], e["to"]} != {edge["from"], edge["to"]}


class TestUsageErrors:
    def test_unknown_flag_exit_1(self, tmp_path, capsys):
        code, _, err = run(capsys, "simulate", "--frobnicate", "--out", str(tmp_path))
        assert code == 1
        assert "usage" in err.lower()

    def test_missing_subcommand_exit_1(self, capsys):
        assert run(capsys)[0] == 1

    def test_runtime_error_exit_2(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "discover", "--algo", "pc", "--data", str(tmp_path / "missing.csv")
        )
        assert code == 2
        assert "error" in err.lower()


class TestRcaAndBench:
    @pytest.fixture()
    def cases(self, tmp_path, capsys):
        root = tmp_path / "cases"
        for seed in (1, 2):
            code, _, _ = run(
                capsys,
                "simulate", "--d", "5", "--n", "8000", "--seed", str(seed),
                "--magnitude", "10", "--anomalies", "4",
                "--out", str(root / f"case{seed}"),
            )
            assert code == 0
        return root

    def test_rca_prints_ranking_and_metrics(self, cases, capsys, tmp_path):
        code, out, _ = run(
            capsys,
            "rca", "--method", "cholesky", "--bundle", str(cases / "case1"),
            "--out", str(tmp_path / "ranked.json"),
        )
        assert code == 0
        assert "metrics k=3" in out
        ranked = json.loads((tmp_path / "ranked.json").read_text())
        assert ranked["method"] == "rca_cholesky"
        assert len(ranked["ranking"]) == 5

    def test_bench_metrics_csv(self, cases, capsys, tmp_path):
        out_csv = tmp_path / "metrics.csv"
        code, _, _ = run(
            capsys,
            "bench", "--cases", str(cases), "--methods", "traversal,cholesky",
            "--k", "3", "--out", str(out_csv),
        )
        assert code == 0
        lines = out_csv.read_text().strip().splitlines()
        assert lines[0] == "case,method,k,precision,recall,f1,accuracy_top1,ndcg,mrr,map,wall_ms"
        assert len(lines) == 1 + 2 * 2  # cases x methods
        assert lines[1].startswith("case1,traversal,3,")

    def test_bench_agrees_with_direct_rank_metrics(self, cases, capsys, tmp_path):
        out_csv = tmp_path / "metrics.csv"
        run(capsys, "bench", "--cases", str(cases), "--methods", "cholesky",
            "--k", "3", "--out", str(out_csv))
        row = out_csv.read_text().strip().splitlines()[1].split(",")
        case = sim.read_bundle(cases / "case1")
        from causalab.rca import rca_cholesky

        agg = 0.0
        for idx in sorted(case.labels):
            sample_row = {
                c: float(v)
                for c, v in zip(case.anomalous_data.column_names, case.anomalous_data.values[idx])
            }
            ranked = rca_cholesky(case.normal_data, sample_row, {"search": "exhaustive", "seed": 0})
            agg += rank_metrics(ranked, set(case.labels[idx]), 3).precision
        assert float(row[3]) == pytest.approx(agg / len(case.labels), abs=1e-6)

    def test_bench_deterministic_modulo_wall_ms(self, cases, capsys, tmp_path):
        outs = []
        for name in ("m1.csv", "m2.csv"):
            run(capsys, "bench", "--cases", str(cases), "--methods", "cholesky",
                "--k", "3", "--out", str(tmp_path / name))
            rows = (tmp_path / name).read_text().splitlines()
            outs.append([",".join(r.split(",")[:-1]) for r in rows])
        assert outs[0] == outs[1]


class TestEffect:
    def test_effect_line(self, tmp_path, capsys):
        run(capsys, "simulate", "--d", "4", "--n", "20000", "--seed", "9",
            "--out", str(tmp_path / "case"))
        truth = json.loads((tmp_path / "case" / "graph.json").read_text())
        if not truth["edges"]:
            pytest.skip("seed produced an empty graph")
        edge = truth["edges"][0]
        code, out, _ = run(
            capsys,
            "effect", "--data", str(tmp_path / "case" / "normal.csv"),
            "--t", edge["from"], "--y", edge["to"],
            "--graph", str(tmp_path / "case" / "graph.json"),
        )
        assert code == 0
        assert out.startswith("ate=")
