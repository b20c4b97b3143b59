import json

import pytest

from qadb.cli import main
from qadb.io import SchemaError, load_instance, parse_instance
from qadb.pipeline import RunOptions, bench, row_seed, run_oracle, run_pipeline
from qadb.qubo import QuboModel
from qadb.sampler import SampleSet

CHAIN = {
    "relations": [
        {"name": "A", "cardinality": 10},
        {"name": "B", "cardinality": 100},
        {"name": "C", "cardinality": 1000},
    ],
    "predicates": [{"a": 0, "b": 1, "selectivity": 0.1}, {"a": 1, "b": 2, "selectivity": 0.01}],
}
EDGELESS = {"transactions": [{"id": "T1", "reads": ["x"]}, {"id": "T2", "reads": ["x"]}]}
CYCLE5 = {
    "transactions": [
        {"id": f"T{i}", "writes": [f"o{i}", f"o{(i + 1) % 5}"]} for i in range(5)
    ]
}
FORCED = {
    "tasks": [{"id": "t0", "demand": 1}],
    "vms": [{"id": "v0", "capacity": 2, "footprint": 1}],
    "pms": [{"id": "p0", "capacity": 2, "carbon_rate": 3.0}],
}
INFEASIBLE_CLOUD = {
    "tasks": [{"id": "t0", "demand": 2}, {"id": "t1", "demand": 2}],
    "vms": [{"id": "v0", "capacity": 3, "footprint": 1}],
    "pms": [{"id": "p0", "capacity": 2, "carbon_rate": 1.0}],
}


def write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestSchemas:
    def test_missing_field_named(self):
        with pytest.raises(SchemaError, match=r"\$\.relations\[1\]\.cardinality"):
            parse_instance("join", {"relations": [{"name": "A", "cardinality": 2}, {"name": "B"}]}, "q.json")

    def test_bad_selectivity_named(self):
        data = dict(CHAIN, predicates=[{"a": 0, "b": 1, "selectivity": 1.5}])
        with pytest.raises(SchemaError, match="selectivity"):
            parse_instance("join", data)

    def test_bad_isolation(self):
        with pytest.raises(SchemaError, match="isolation"):
            parse_instance("tx", dict(EDGELESS, isolation="chaos"))

    def test_cloud_negative_rate(self):
        data = dict(FORCED, pms=[{"id": "p0", "capacity": 2, "carbon_rate": -1}])
        with pytest.raises(SchemaError, match="carbon_rate"):
            parse_instance("cloud", data)

    def test_domain_error_wrapped(self):
        data = dict(CHAIN, predicates=[{"a": 0, "b": 7, "selectivity": 0.5}])
        with pytest.raises(SchemaError, match="src.json"):
            parse_instance("join", data, "src.json")

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{nope")
        with pytest.raises(SchemaError, match="not valid JSON"):
            load_instance("join", p)

    def test_unknown_problem(self):
        with pytest.raises(ValueError):
            parse_instance("graph", {})

    def test_cloud_unit(self):
        c = parse_instance("cloud", dict(FORCED, unit=0.5))
        assert c.tasks[0].demand == 2 and c.pms[0].capacity == 4


class TestPipeline:
    def test_join_exhaustive_matches_oracle(self, tmp_path):
        path = write(tmp_path / "q.json", CHAIN)
        opts = RunOptions(sampler="exhaustive", oracle=True)
        report = run_pipeline("join", path, opts)
        assert report.solution["log_cost"] == pytest.approx(report.oracle["log_cost"], abs=1e-6)
        assert set(report.timings_ms) == {"preprocess", "encode", "optimize", "readout"}
        assert report.variables == 9

    def test_join_sa(self, tmp_path):
        path = write(tmp_path / "q.json", CHAIN)
        report = run_pipeline("join", path, RunOptions(reads=50, sweeps=50))
        assert sorted(report.solution["order"]) == ["A", "B", "C"]

    def test_tx_edgeless(self, tmp_path):
        report = run_pipeline("tx", write(tmp_path / "w.json", EDGELESS), RunOptions(sampler="exhaustive"))
        assert report.solution["slots"] == {"T1": 0, "T2": 0}
        assert report.solution["conflicts"] == []

    def test_tx_cycle_oracle(self, tmp_path):
        path = write(tmp_path / "w.json", CYCLE5)
        report = run_oracle("tx", path, RunOptions(slots=2))
        assert report.solution["violations"] == 1
        assert report.timings_ms["encode"] == 0.0

    def test_cloud_forced(self, tmp_path):
        report = run_pipeline("cloud", write(tmp_path / "c.json", FORCED), RunOptions(sampler="exhaustive"))
        assert report.solution["feasible"] and report.solution["carbon"] == 3.0
        assert report.best_energy == pytest.approx(3.0)

    def test_cloud_infeasible_oracle(self, tmp_path):
        report = run_oracle("cloud", write(tmp_path / "c.json", INFEASIBLE_CLOUD))
        assert not report.solution["feasible"]
        assert report.solution["violations"][0].startswith("instance infeasible")

    def test_row_seed_distinct(self):
        seeds = {row_seed(0, k, r) for k in range(5) for r in range(5)}
        assert len(seeds) == 25


class TestBench:
    def test_empty_directory_header_only(self, tmp_path):
        out = bench("join", tmp_path)
        assert out.count("\n") == 1 and out.startswith("instance,repetition,seed")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ValueError):
            bench("join", tmp_path / "nope")

    def test_rows_and_determinism(self, tmp_path):
        write(tmp_path / "b.json", CHAIN)
        write(tmp_path / "a.json", dict(CHAIN, relations=CHAIN["relations"][:2], predicates=[]))
        (tmp_path / "notes.txt").write_text("ignored")
        opts = RunOptions(reads=40, sweeps=30, seed=3)
        first = bench("join", tmp_path, 2, opts)
        lines = first.strip().split("\n")
        assert len(lines) == 5
        assert [ln.split(",")[0] for ln in lines[1:]] == ["a.json", "a.json", "b.json", "b.json"]
        assert bench("join", tmp_path, 2, opts) == first
        parallel = RunOptions(reads=40, sweeps=30, seed=3, workers=4)
        assert bench("join", tmp_path, 2, parallel) == first

    def test_timings_columns(self, tmp_path):
        write(tmp_path / "a.json", CHAIN)
        out = bench("join", tmp_path, 1, RunOptions(reads=10, sweeps=10), timings=True)
        assert out.split("\n")[0].endswith("preprocess_ms,encode_ms,optimize_ms,readout_ms")


class TestCli:
    def test_run_join(self, tmp_path, capsys):
        path = write(tmp_path / "q.json", CHAIN)
        code, out, _ = run_cli(capsys, "run", path, "--problem", "join", "--sampler", "exhaustive", "--oracle")
        assert code == 0
        report = json.loads(out)
        assert report["solution"]["log_cost"] == pytest.approx(report["oracle"]["log_cost"])

    def test_oracle_tx(self, tmp_path, capsys):
        path = write(tmp_path / "w.json", CYCLE5)
        code, out, _ = run_cli(capsys, "oracle", path, "--problem", "tx", "--slots", "3")
        assert code == 0 and json.loads(out)["solution"]["violations"] == 0

    def test_schema_error_exit_code(self, tmp_path, capsys):
        path = write(tmp_path / "q.json", {"relations": [{"name": "A"}]})
        code, out, err = run_cli(capsys, "run", path, "--problem", "join")
        assert code == 1 and out == ""
        assert "qadb: error:" in err and "q.json" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "run", str(tmp_path / "none.json"), "--problem", "join")
        assert code == 1 and "none.json" in err

    def test_bad_reads(self, tmp_path, capsys):
        path = write(tmp_path / "q.json", CHAIN)
        code, _, err = run_cli(capsys, "run", path, "--problem", "join", "--reads", "0")
        assert code == 1 and "reads" in err

    def test_encode_then_solve(self, tmp_path, capsys):
        path = write(tmp_path / "c.json", FORCED)
        qubo = tmp_path / "c.qubo"
        code, out, _ = run_cli(capsys, "encode", path, "--problem", "cloud", "--out", str(qubo))
        assert code == 0 and qubo.read_text() == out
        model = QuboModel.from_text(out)
        code, out, _ = run_cli(capsys, "solve", str(qubo), "--sampler", "exhaustive", "--keep", "3")
        assert code == 0
        ss = SampleSet.from_text(out, model.n)
        assert len(ss) == 3 and ss.best.energy == pytest.approx(3.0)

    def test_solve_sa(self, tmp_path, capsys):
        qubo = tmp_path / "m.qubo"
        qubo.write_text("qubo 2 0.0\n0 0 1.0\n1 1 -1.0\n")
        code, out, _ = run_cli(capsys, "solve", str(qubo), "--reads", "20", "--sweeps", "20", "--keep", "1")
        assert code == 0 and out.split()[0] == "01"

    def test_bench_cli_byte_identical(self, tmp_path, capsys):
        write(tmp_path / "q.json", CHAIN)
        argv = ["bench", str(tmp_path), "--problem", "join", "--reads", "30", "--sweeps", "20", "--seed", "9"]
        _, first, _ = run_cli(capsys, *argv)
        _, second, _ = run_cli(capsys, *argv, "--workers", "3")
        assert first == second and first.count("\n") == 2

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit):
            main(["run"])
