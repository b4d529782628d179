import csv
import io
import json

import numpy as np
import numpy.testing as nptest
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wassalign import WeightedPointSet
from wassalign.alignment import AlignmentConfig, alternate_minimize
from wassalign.cli import cli_main
from wassalign.core import NumericalError
from wassalign.experiment import (
    ExperimentConfig,
    GeneratorSpec,
    config_from_mapping,
    rate_to_k,
    run_experiment,
)
from wassalign.fileio import (
    load_compression,
    load_plan,
    load_pointset,
    report_to_dict,
    report_to_json,
    save_compression,
    save_plan,
    save_pointset,
    transform_from_dict,
)
from wassalign.generators import generate_planted
from wassalign.transport import wasserstein_exact
from oracles import random_feasible_flow


class TestPointsetFormat:
    def test_minimal_file(self, tmp_path):
        path = tmp_path / "one.pts"
        path.write_text("1 2\n1.0 0.0 0.0\n")
        ps = load_pointset(path)
        assert ps.n == 1 and ps.d == 2
        nptest.assert_array_equal(ps.points, [[0.0, 0.0]])
        nptest.assert_array_equal(ps.weights, [1.0])

    @pytest.mark.parametrize(
        "text,lineno",
        [
            ("", 1),
            ("2\n", 1),
            ("a 2\n", 1),
            ("0 2\n", 1),
            ("1 2\n1.0 0.0\n", 2),
            ("1 2\n1.0 0.0 0.0 9.0\n", 2),
            ("2 2\n1.0 0.0 0.0\n", 3),
            ("1 1\n-0.5 0.0\n", 2),
            ("1 1\nnan 0.0\n", 2),
            ("1 1\n1.0 inf\n", 2),
            ("2 1\n1.0 0.0\n1.0 x\n", 3),
            ("1 1\n1.0 0.0\nextra\n", 3),
        ],
    )
    def test_errors_name_the_line(self, tmp_path, text, lineno):
        path = tmp_path / "bad.pts"
        path.write_text(text)
        with pytest.raises(ValueError, match=f"line {lineno}"):
            load_pointset(path)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_round_trip_is_exact(self, seed, tmp_path_factory):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 12))
        d = int(rng.integers(1, 6))
        # exercise wide magnitude swings, not just unit-scale values
        pts = rng.normal(size=(n, d)) * 10.0 ** rng.integers(-200, 200, size=(n, d))
        w = rng.uniform(0.0, 3.0, n)
        w[int(rng.integers(n))] = 1.0
        original = WeightedPointSet(pts, w)
        path = tmp_path_factory.mktemp("rt") / "set.pts"
        save_pointset(path, original)
        loaded = load_pointset(path)
        nptest.assert_array_equal(loaded.points, original.points)
        nptest.assert_array_equal(loaded.weights, original.weights)

    def test_zero_weight_rows_survive(self, tmp_path):
        path = tmp_path / "zw.pts"
        path.write_text("2 1\n0.0 5.0\n2.0 -1.0\n")
        ps = load_pointset(path)
        nptest.assert_array_equal(ps.weights, [0.0, 2.0])


class TestPlanFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        a = WeightedPointSet(rng.normal(size=(4, 3)), rng.uniform(0.5, 2.0, 4))
        b = WeightedPointSet(rng.normal(size=(5, 3)), rng.uniform(0.5, 2.0, 5))
        plan = wasserstein_exact(a, b)
        path = tmp_path / "plan.txt"
        save_plan(path, plan)
        loaded = load_plan(path, n_source=a.n, n_target=b.n)
        nptest.assert_array_equal(loaded.sources, plan.sources)
        nptest.assert_array_equal(loaded.targets, plan.targets)
        nptest.assert_array_equal(loaded.flows, plan.flows)
        assert loaded.total_flow == plan.total_flow
        assert loaded.cost == plan.cost
        assert loaded.normalized_distance == plan.normalized_distance
        loaded.validate(a, b)

    def test_sizes_inferred_from_indices(self, tmp_path):
        path = tmp_path / "plan.txt"
        path.write_text("1.0 0.5 0.5\n2 1 1.0\n")
        plan = load_plan(path)
        assert plan.n_source == 3 and plan.n_target == 2

    @pytest.mark.parametrize(
        "text,lineno",
        [
            ("", 1),
            ("1.0 0.5\n", 1),
            ("1.0 0.5 0.5\n0 0\n", 2),
            ("1.0 0.5 0.5\n0 0 -1.0\n", 2),
            ("1.0 0.5 0.5\n0 j 1.0\n", 2),
        ],
    )
    def test_errors_name_the_line(self, tmp_path, text, lineno):
        path = tmp_path / "bad.txt"
        path.write_text(text)
        with pytest.raises(ValueError, match=f"line {lineno}"):
            load_plan(path)


class TestCompressionFormat:
    def test_round_trip(self, tmp_path):
        from wassalign.compression import kcenter_plus

        rng = np.random.default_rng(1)
        ps = WeightedPointSet(rng.normal(size=(12, 3)), rng.uniform(0.5, 2.0, 12))
        result = kcenter_plus(ps, 4, seed=2)
        path = tmp_path / "cmp.txt"
        save_compression(path, result)
        loaded = load_compression(path)
        nptest.assert_array_equal(loaded.centers.points, result.centers.points)
        nptest.assert_array_equal(loaded.centers.weights, result.centers.weights)
        nptest.assert_array_equal(loaded.assignment, result.assignment)
        assert loaded.radius == result.radius
        assert loaded.method_tag == result.method_tag
        assert loaded.seed == result.seed

    @pytest.mark.parametrize(
        "text,lineno",
        [
            ("", 1),
            ("2 0.5 kcenter\n", 1),
            ("2 -0.5 kcenter 0\n", 1),
            ("1 0.5 kcenter 0\n", 2),
            ("1 0.5 kcenter 0\n0 1.0 0.0\n5 0\n", 3),
            ("2 0.5 kcenter 0\n0 1.0 0.0\n0 1.0 1.0\n0 0\n", 3),
        ],
    )
    def test_errors_name_the_line(self, tmp_path, text, lineno):
        path = tmp_path / "bad.txt"
        path.write_text(text)
        with pytest.raises(ValueError, match=f"line {lineno}"):
            load_compression(path)


class TestReportFormat:
    def test_json_fields_and_transform_round_trip(self):
        A, B, _ = generate_planted(20, 4, 2, noise=0.05, seed=3)
        rep = alternate_minimize(A, B, AlignmentConfig(max_rounds=5, seed=4))
        doc = json.loads(report_to_json(rep))
        assert set(doc) == {"transform", "final_distance", "fraction", "history", "compression", "timings"}
        assert doc["fraction"] == 1.0
        assert doc["compression"] is None
        assert len(doc["history"]) == len(rep.history)
        rebuilt = transform_from_dict(doc["transform"])
        nptest.assert_array_equal(rebuilt.rotation, rep.transform.rotation)
        nptest.assert_array_equal(rebuilt.translation, rep.transform.translation)

    def test_timings_can_be_omitted(self):
        A, B, _ = generate_planted(10, 3, 2, seed=5)
        rep = alternate_minimize(A, B, AlignmentConfig(max_rounds=3))
        doc = report_to_dict(rep, include_timings=False)
        assert "timings" not in doc


class TestExperimentConfig:
    def test_validation(self):
        gen = GeneratorSpec(n=10, d=3, intrinsic_dim=2)
        with pytest.raises(ValueError):
            ExperimentConfig(methods=(), generator=gen)
        with pytest.raises(ValueError):
            ExperimentConfig(methods=("bogus",), generator=gen)
        with pytest.raises(ValueError):
            ExperimentConfig(rates=(0.0,), generator=gen)
        with pytest.raises(ValueError):
            ExperimentConfig(fractions=(1.5,), generator=gen)
        with pytest.raises(ValueError):
            ExperimentConfig(trials=0, generator=gen)
        with pytest.raises(ValueError):
            ExperimentConfig(generator=None, files=None)
        with pytest.raises(ValueError):
            ExperimentConfig(generator=gen, files=("a", "b"))

    def test_mapping_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            config_from_mapping({"n": 10, "d": 3, "intrinsic_dim": 2, "typo": 1})

    def test_rate_to_k_rounds_and_floors(self):
        assert rate_to_k(0.1, 100, 100) == 10
        assert rate_to_k(0.001, 10, 10) == 1
        assert rate_to_k(1.0, 30, 50) == 40


class TestRunExperiment:
    def test_original_only_normalized_time_is_one(self):
        cfg = ExperimentConfig(
            methods=("original",),
            rates=(),
            fractions=(1.0,),
            trials=3,
            seed=6,
            generator=GeneratorSpec(n=20, d=4, intrinsic_dim=2, noise=0.1),
            alignment=AlignmentConfig(max_rounds=4),
        )
        result = run_experiment(cfg)
        assert len(result.rows) == 3
        assert all(row.normalized_time == 1.0 for row in result.rows)

    def test_identity_rate_matches_original(self):
        cfg = ExperimentConfig(
            methods=("original", "kcenter"),
            rates=(1.0,),
            fractions=(1.0,),
            trials=1,
            seed=7,
            generator=GeneratorSpec(n=30, d=4, intrinsic_dim=2, noise=0.05),
            alignment=AlignmentConfig(max_rounds=8),
        )
        result = run_experiment(cfg)
        by_method = {row.method: row for row in result.rows}
        orig = by_method["original"].distance
        comp = by_method["kcenter"].distance
        assert comp == pytest.approx(orig, rel=1e-9, abs=1e-12)

    def test_row_count_arithmetic(self):
        cfg = ExperimentConfig(
            methods=("original", "kcenter+", "random"),
            rates=(0.2, 0.5),
            fractions=(1.0, 0.9),
            trials=2,
            seed=8,
            generator=GeneratorSpec(n=16, d=3, intrinsic_dim=2, noise=0.1),
            alignment=AlignmentConfig(max_rounds=3),
        )
        result = run_experiment(cfg)
        # per (trial, fraction): 1 original row + 2 methods x 2 rates
        assert len(result.rows) == 2 * 2 * (1 + 2 * 2)
        reader = csv.reader(io.StringIO(result.to_csv()))
        rows = list(reader)
        assert rows[0] == list(
            ("method", "gamma", "lambda", "trial", "distance", "t_compress",
             "t_align", "t_finalflow", "t_total", "normalized_time")
        )
        assert len(rows) == 1 + len(result.rows)
        for row in rows[1:]:
            float(row[4])  # distance parses

    def test_distances_deterministic_across_reruns(self):
        cfg = ExperimentConfig(
            methods=("original", "random+"),
            rates=(0.3,),
            fractions=(0.9,),
            trials=2,
            seed=9,
            generator=GeneratorSpec(n=14, d=3, intrinsic_dim=2, noise=0.2),
            alignment=AlignmentConfig(max_rounds=3, restarts=1),
        )
        first = [(r.method, r.gamma, r.trial, r.distance) for r in run_experiment(cfg).rows]
        second = [(r.method, r.gamma, r.trial, r.distance) for r in run_experiment(cfg).rows]
        assert first == second

    def test_cell_failure_recorded_and_run_continues(self, monkeypatch):
        def boom(*args, **kwargs):
            raise NumericalError("synthetic stage failure")

        monkeypatch.setattr("wassalign.experiment.align_with_compression", boom)
        cfg = ExperimentConfig(
            methods=("original", "kcenter"),
            rates=(0.5,),
            fractions=(1.0,),
            trials=2,
            seed=10,
            generator=GeneratorSpec(n=10, d=3, intrinsic_dim=2),
            alignment=AlignmentConfig(max_rounds=2),
        )
        result = run_experiment(cfg)
        failures = result.failures()
        assert len(failures) == 2
        assert all(row.method == "kcenter" for row in failures)
        assert all(np.isnan(row.distance) for row in failures)
        ok = [row for row in result.rows if row.error is None]
        assert len(ok) == 2 and all(row.method == "original" for row in ok)
        # summary still renders with the failed cells counted
        assert "[2 failed]" in run_summary_text(result)

    def test_file_instances(self, tmp_path):
        A, B, _ = generate_planted(12, 3, 2, noise=0.1, seed=11)
        pa, pb = tmp_path / "a.pts", tmp_path / "b.pts"
        save_pointset(pa, A)
        save_pointset(pb, B)
        cfg = ExperimentConfig(
            methods=("original",),
            rates=(),
            fractions=(1.0,),
            trials=2,
            seed=12,
            files=(str(pa), str(pb)),
            alignment=AlignmentConfig(max_rounds=3),
        )
        result = run_experiment(cfg)
        # same instance both trials, deterministic identity-start loop
        assert result.rows[0].distance == result.rows[1].distance


def run_summary_text(result):
    return result.summary_text()


class TestCli:
    @pytest.fixture()
    def instance_files(self, tmp_path):
        pa = tmp_path / "a.pts"
        pb = tmp_path / "b.pts"
        rc = cli_main(
            ["gen", str(pa), str(pb), "--n", "25", "--d", "4",
             "--intrinsic-dim", "2", "--noise", "0.05", "--seed", "13"]
        )
        assert rc == 0
        return pa, pb

    def test_emd_self_distance_is_zero(self, instance_files, capsys):
        pa, _ = instance_files
        rc = cli_main(["emd", str(pa), str(pa)])
        assert rc == 0
        assert abs(float(capsys.readouterr().out.strip())) <= 1e-9

    def test_emd_fractional_and_backend_flags(self, instance_files, capsys):
        pa, pb = instance_files
        assert cli_main(["emd", str(pa), str(pb), "--lambda", "0.9"]) == 0
        exact = float(capsys.readouterr().out.strip())
        assert cli_main(["emd", str(pa), str(pb), "--lambda", "0.9", "--backend", "sinkhorn"]) == 0
        approx = float(capsys.readouterr().out.strip())
        assert exact > 0
        assert approx == pytest.approx(exact, rel=0.15)

    def test_align_reports_byte_identical(self, instance_files, tmp_path):
        pa, pb = instance_files
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        argv = ["align", str(pa), str(pb), "--method", "kcenter+", "--rate", "0.5",
                "--lambda", "0.9", "--seed", "7", "--max-rounds", "6", "--restarts", "2"]
        assert cli_main(argv + ["--out", str(out1)]) == 0
        assert cli_main(argv + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        doc = json.loads(out1.read_text())
        assert "timings" not in doc
        assert doc["compression"]["method"] == "kcenter+"

    def test_align_timings_flag(self, instance_files, capsys):
        pa, pb = instance_files
        rc = cli_main(["align", str(pa), str(pb), "--method", "original",
                       "--max-rounds", "3", "--timings"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc["timings"]) == {"compress", "align_loop", "final_flow", "compose"}

    def test_compress_output_parses_back(self, instance_files, tmp_path):
        pa, _ = instance_files
        out = tmp_path / "c.txt"
        rc = cli_main(["compress", str(pa), "--method", "kcenter+", "--k", "5",
                       "--seed", "3", "--out", str(out)])
        assert rc == 0
        result = load_compression(out)
        assert result.k == 5
        result.validate(load_pointset(pa))

    def test_compress_epsilon_route(self, instance_files, capsys):
        pa, _ = instance_files
        rc = cli_main(["compress", str(pa), "--method", "kcenter", "--epsilon", "0.3"])
        assert rc == 0
        header = capsys.readouterr().out.splitlines()[0].split()
        assert header[2] == "kcenter"

    def test_gen_deterministic(self, tmp_path):
        args = ["--n", "10", "--d", "3", "--intrinsic-dim", "2", "--seed", "5"]
        a1, b1 = tmp_path / "a1.pts", tmp_path / "b1.pts"
        a2, b2 = tmp_path / "a2.pts", tmp_path / "b2.pts"
        assert cli_main(["gen", str(a1), str(b1), *args]) == 0
        assert cli_main(["gen", str(a2), str(b2), *args]) == 0
        assert a1.read_bytes() == a2.read_bytes()
        assert b1.read_bytes() == b2.read_bytes()

    def test_bench_row_arithmetic(self, tmp_path, capsys):
        config = tmp_path / "sweep.toml"
        config.write_text(
            'methods = ["original", "kcenter+", "random"]\n'
            "rates = [0.2, 0.4]\n"
            "fractions = [1.0]\n"
            "trials = 2\n"
            "seed = 3\n"
            "n = 16\nd = 3\nintrinsic_dim = 2\nnoise = 0.1\n"
            "max_rounds = 3\n"
        )
        out = tmp_path / "report.csv"
        rc = cli_main(["bench", "--config", str(config), "--out", str(out)])
        assert rc == 0
        rows = list(csv.reader(out.read_text().splitlines()))
        assert len(rows) == 1 + 2 * (1 + 2 * 2)
        original_rows = [r for r in rows[1:] if r[0] == "original"]
        assert all(float(r[9]) == 1.0 for r in original_rows)

    @pytest.mark.parametrize(
        "argv",
        [
            ["emd", "only-one.pts"],
            ["align", "a.pts", "b.pts", "--method", "kcenter"],
            ["nonsense"],
            [],
        ],
    )
    def test_usage_errors_exit_one(self, argv, capsys):
        assert cli_main(argv) == 1

    def test_missing_file_exits_one(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.pts")
        assert cli_main(["emd", missing, missing]) == 1

    def test_both_k_and_rate_rejected(self, instance_files, capsys):
        pa, pb = instance_files
        rc = cli_main(["align", str(pa), str(pb), "--method", "kcenter",
                       "--k", "4", "--rate", "0.2"])
        assert rc == 1

    def test_numerical_failure_exits_two(self, instance_files, monkeypatch, capsys):
        pa, _ = instance_files

        def boom(*args, **kwargs):
            raise NumericalError("no convergence")

        monkeypatch.setattr("wassalign.cli.solve_plain", boom)
        assert cli_main(["emd", str(pa), str(pa)]) == 2
        assert "numerical failure in emd" in capsys.readouterr().err

    def test_parse_error_names_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.pts"
        bad.write_text("1 2\n1.0 0.0\n")
        assert cli_main(["emd", str(bad), str(bad)]) == 1
        assert "line 2" in capsys.readouterr().err
