"""Command-line interface and benchmark harness."""

from __future__ import annotations

import json
import math
import os

import pytest

from refuelopt.bench import BenchPlan, compare_separation, run_bench
from refuelopt.cli import main
from refuelopt.instances import (
    RESULTS_HEADER,
    GeneratorConfig,
    instance_to_json,
)

from conftest import make_fig_instance


@pytest.fixture
def fig_file(tmp_path):
    path = tmp_path / "fig.json"
    path.write_text(instance_to_json(make_fig_instance()))
    return str(path)


class TestSolveCommand:
    def test_cf_solve_writes_artifacts(self, fig_file, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["solve", "--instance", fig_file, "--formulation", "cf", "--out", str(out)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "obj=1" in printed and "gap_pct=0.00" in printed
        rows = (out / "results.csv").read_text().splitlines()
        assert rows[0] == ",".join(RESULTS_HEADER)
        solution = json.loads((out / "solution.json").read_text())
        assert solution["objective"] == 1.0

    def test_pf_solve(self, fig_file, tmp_path, capsys):
        code = main(["solve", "--instance", fig_file, "--formulation", "pf", "--out", str(tmp_path / "o2")])
        assert code == 0
        assert "status=optimal" in capsys.readouterr().out

    def test_node_limit_reports_limit_status(self, tmp_path, capsys):
        # a capacity-tight generated instance cannot close in one node
        gen = tmp_path / "gen"
        assert main(["generate", "--seed", "3", "--out", str(gen),
                     "--stations", "10", "--terminals", "5", "--pairs", "6",
                     "--lambda", "0.4"]) == 0
        inst = str(gen / "instance_seed3.json")
        capsys.readouterr()
        code = main([
            "solve", "--instance", inst, "--kappa", "1", "--node-limit", "1",
            "--formulation", "pf", "--out", str(tmp_path / "o3"),
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "status=" in printed

    def test_missing_instance_errors(self, tmp_path):
        code = main(["solve", "--instance", str(tmp_path / "none.json"), "--out", str(tmp_path)])
        assert code != 0

    def test_unknown_flag_exits_nonzero(self, fig_file):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--instance", fig_file, "--definitely-not-a-flag"])
        assert exc.value.code != 0


class TestGenerateCommand:
    def test_generate_writes_parseable_instance(self, tmp_path):
        out = tmp_path / "g"
        assert main(["generate", "--seed", "5", "--out", str(out)]) == 0
        files = os.listdir(out)
        assert files == ["instance_seed5.json"]
        from refuelopt.instances import load_instance

        inst = load_instance(str(out / files[0]))
        assert len(inst.graph.stations) == 12

    def test_determinism_across_invocations(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["generate", "--seed", "9", "--out", str(a)])
        main(["generate", "--seed", "9", "--out", str(b)])
        assert (a / "instance_seed9.json").read_text() == (b / "instance_seed9.json").read_text()


class TestBench:
    def _plan(self, tmp_path, kappas=(1.0, 2.0, math.inf)):
        return BenchPlan(
            formulations=("cf", "pf"),
            lambdas=(0.35,),
            kappas=kappas,
            generator=GeneratorConfig(
                seed=2, n_stations=8, n_terminals=4, n_pairs=4, lam=0.35
            ),
            out_dir=str(tmp_path / "bench"),
            seed=2,
        )

    def test_grid_rows_and_plot_files(self, tmp_path):
        plan = self._plan(tmp_path)
        rows = run_bench(plan)
        assert len(rows) == 6
        out = tmp_path / "bench"
        csv_lines = (out / "results.csv").read_text().splitlines()
        assert csv_lines[0] == ",".join(RESULTS_HEADER)
        assert len(csv_lines) == 7
        for metric in ("gap_pct", "time_s", "utilization_pct", "obj"):
            lines = (out / f"plot_{metric}.tsv").read_text().splitlines()
            assert lines[0].split("\t") == ["kappa", "cf_lam0.35", "pf_lam0.35"]
            assert len(lines) == 4

    def test_objective_nonincreasing_in_kappa(self, tmp_path):
        rows = run_bench(self._plan(tmp_path))
        for form in ("cf", "pf"):
            objs = [
                float(r["obj"]) if r["obj"] not in ("---",) else math.inf
                for r in rows
                if r["formulation"] == form
            ]
            assert all(a >= b - 1e-9 for a, b in zip(objs, objs[1:]))

    def test_cf_pf_agree_at_zero_gap(self, tmp_path):
        rows = run_bench(self._plan(tmp_path))
        by_kappa = {}
        for r in rows:
            by_kappa.setdefault(r["kappa"], {})[r["formulation"]] = r
        for kappa, cells in by_kappa.items():
            cf, pf = cells["cf"], cells["pf"]
            if cf["gap_pct"] == "0.00" and pf["gap_pct"] == "0.00":
                assert cf["obj"] == pf["obj"]

    def test_utilization_bounded(self, tmp_path):
        rows = run_bench(self._plan(tmp_path))
        for r in rows:
            if r["utilization_pct"] != "---":
                assert 0.0 <= float(r["utilization_pct"]) <= 100.0 + 1e-9

    def test_workers_give_same_rows(self, tmp_path):
        import dataclasses

        base = self._plan(tmp_path, kappas=(2.0, math.inf))
        rows1 = run_bench(base)
        rows2 = run_bench(dataclasses.replace(base, workers=4))
        strip = lambda rows: [
            {k: v for k, v in r.items() if k != "time_s"} for r in rows
        ]
        assert strip(rows1) == strip(rows2)


class TestCompareSeparation:
    def test_rows_and_equal_objectives(self, tmp_path):
        gen = GeneratorConfig(seed=20, n_stations=14, n_terminals=5, n_pairs=6)
        rows = compare_separation(gen, (0.2, 0.5), 2, str(tmp_path / "cmp"))
        assert len(rows) == 4
        for r in rows:
            assert r["obj_ours"] == r["obj_baseline"]
            assert int(r["dijkstra_ours"]) > 0
        assert (tmp_path / "cmp" / "separation.csv").exists()

    def test_cli_command(self, tmp_path, capsys):
        code = main([
            "compare-separation", "--out", str(tmp_path / "c2"),
            "--instances", "2", "--lambdas", "0.3",
            "--stations", "12", "--terminals", "4", "--pairs", "4", "--seed", "1",
        ])
        assert code == 0
        assert "fewer Dijkstra calls" in capsys.readouterr().out


class TestBenchCli:
    def test_bench_command(self, tmp_path, capsys):
        code = main([
            "bench", "--out", str(tmp_path / "b"),
            "--formulations", "cf", "--lambdas", "0.4", "--kappas", "2,inf",
            "--stations", "8", "--terminals", "4", "--pairs", "4", "--seed", "2",
        ])
        assert code == 0
        assert "wrote 2 rows" in capsys.readouterr().out
