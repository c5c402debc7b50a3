import json

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError as PydanticValidationError

from src.config import settings
from src.main import EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, main
from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.reports import Tolerances
from src.models.scenario import PropulsionModel
from src.models.schemas import ExperimentConfig, GeneratorSettings, dump_scenario, load_defaults, load_scenario
from src.services.experiment_service import (
    build_space,
    draw_datasets,
    evaluate_actual,
    generate_history,
    generate_scenario,
    run_sweep,
)
from src.services.export_service import export_service
from src.services.uncertainty_service import l1_distance
from src.utils.exceptions import ValidationError
from src.utils.validators import audit_decision, audit_trajectory, validate_scenario
from tests.conftest import TINY, make_scenario


@pytest.fixture
def space():
    return build_space(GeneratorSettings.from_defaults())


class TestGenerator:
    def test_same_seed_same_scenario(self):
        assert generate_scenario(11) == generate_scenario(11)
        assert generate_scenario(11) != generate_scenario(12)

    def test_defaults(self):
        scenario = generate_scenario(0)
        assert (scenario.num_gus, scenario.num_uavs, scenario.num_slots) == (15, 3, 15)
        assert validate_scenario(scenario) == []

    def test_override_changes_only_the_gu_count(self):
        base = generate_scenario(0)
        six = generate_scenario(0, {"I": 6})
        assert six.num_gus == 6
        assert six.uavs == base.uavs
        assert six.hap == base.hap

    def test_unknown_override(self):
        with pytest.raises(ValidationError):
            GeneratorSettings.from_defaults({"num_satellites": 2})

    def test_uav_rows_fit_the_flight_budget(self):
        scenario = generate_scenario(0)
        span = np.linalg.norm(scenario.end_xy() - scenario.start_xy(), axis=1)
        assert np.all(span <= scenario.num_slots * 20.0 * 2.0)
        assert scenario.start_xy()[:, 1].tolist() == [250.0, 500.0, 750.0]


class TestHistory:
    def test_single_sample_gives_point_masses(self, tiny_scenario, space):
        history = generate_history(4, tiny_scenario, space, 1)
        for ref in history.references(space):
            assert sorted(ref.probs.tolist()) == [0.0, 0.0, 0.0, 0.0, 1.0]

    def test_large_history_approaches_the_truth(self, tiny_scenario, space):
        history = generate_history(4, tiny_scenario, space, 100_000)
        for ref, truth in zip(history.references(space), history.truths):
            assert l1_distance(ref, truth) < 0.05

    def test_reproducible(self, tiny_scenario, space):
        first = generate_history(9, tiny_scenario, space, 50)
        second = generate_history(9, tiny_scenario, space, 50)
        assert np.array_equal(first.samples, second.samples)

    def test_needs_samples(self, tiny_scenario, space):
        with pytest.raises(ValidationError):
            generate_history(9, tiny_scenario, space, 0)

    def test_datasets_use_sample_values(self, tiny_scenario, space):
        history = generate_history(9, tiny_scenario, space, 50)
        datasets = draw_datasets(9, history.truths, space, tiny_scenario.num_slots, 3)
        assert len(datasets) == 3
        for table in datasets:
            assert table.shape == (2, 2)
            assert np.isin(table, space.values).all()


class TestEvaluateActual:
    def test_identical_datasets_have_no_spread(self, tiny_scenario):
        dec = OffloadDecision.zeros(2, 1, 2)
        traj = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), 2)
        table = np.full((2, 2), 1e6)
        mean, std = evaluate_actual(dec, traj, [table, table], tiny_scenario)
        assert mean == pytest.approx(4.0)
        assert std == 0.0

    def test_population_spread(self, tiny_scenario):
        dec = OffloadDecision.zeros(2, 1, 2)
        traj = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), 2)
        sizes = np.full(2, 5e5)
        mean, std = evaluate_actual(dec, traj, [sizes, 2.0 * sizes], tiny_scenario)
        # All-local: 1e-6 s per bit, two GUs, two slots.
        assert mean == pytest.approx(3.0)
        assert std == pytest.approx(1.0)


class TestValidators:
    def test_gu_outside_area(self):
        scenario = make_scenario(3, gu_xy=[(-1.0, 500.0)], **TINY)
        assert "GU 0 outside area" in validate_scenario(scenario)

    def test_propulsion_outside_its_domain(self, tiny_scenario):
        pp = tiny_scenario.propulsion.model_copy(
            update={"model": PropulsionModel.PRINTED, "mean_rotor_velocity": 0.5}
        )
        scenario = tiny_scenario.model_copy(update={"propulsion": pp})
        problems = validate_scenario(scenario)
        assert any(p.startswith("UAV 0 propulsion: Induced power undefined") for p in problems)

    def test_uavs_start_too_close(self):
        scenario = make_scenario(3, J=2, min_separation_m=600.0)
        assert any(v.startswith("separation") for v in validate_scenario(scenario))

    def test_quota_violation(self):
        scenario = make_scenario(3, uav_quota=1, **TINY)
        y = np.zeros((2, 1, 2))
        y[:, 0, 0] = 1
        problems = audit_decision(OffloadDecision.from_yz(y, np.zeros_like(y)), scenario)
        assert problems == ["UAV 0 computes more than 1 tasks in slot 1"]

    def test_speed_violation(self, tiny_scenario):
        wp = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), 2).waypoints.copy()
        wp[0, 1, 1] += 100.0
        problems = audit_trajectory(TrajectoryPlan(wp), tiny_scenario)
        assert any(p.startswith("speed: UAV 0 slot 1") for p in problems)


class TestFiles:
    def test_scenario_file_rejects_unknown_keys(self, tiny_scenario, space, tmp_path):
        path = dump_scenario(tiny_scenario, space, 0.3, tmp_path / "scenario.json")
        doc = json.loads(path.read_text())
        doc["bogus"] = 1
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError):
            load_scenario(path)

    def test_scenario_file_reload(self, tiny_scenario, space, tmp_path):
        path = dump_scenario(tiny_scenario, space, 0.25, tmp_path / "scenario.json")
        scenario, loaded_space, eps = load_scenario(path)
        assert eps == 0.25
        assert scenario.num_gus == 2
        assert np.allclose(scenario.gu_xy(), tiny_scenario.gu_xy())
        assert np.allclose(loaded_space.values, space.values)

    def test_missing_scenario_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_scenario(tmp_path / "absent.json")

    def test_defaults_carry_provenance(self):
        table = load_defaults()
        assert table["eps"]["value"] == 0.3
        assert {entry["provenance"] for entry in table.values()} <= {"stated", "assumed"}

    def test_tolerances_reject_unknown_keys(self):
        with pytest.raises(PydanticValidationError):
            Tolerances(sca_tolerance=1e-3)

    def test_settings_are_valid(self):
        settings.validate()

    def test_solution_tables_read_back(self, tiny_scenario, tmp_path):
        y = np.zeros((2, 1, 2))
        z = np.zeros((2, 1, 2))
        y[0, 0, 1] = 1
        z[1, 0, 0] = 1
        dec = OffloadDecision.from_yz(y, z)
        traj = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), 2)
        export_service.write_decisions(dec, tmp_path / "decisions.csv")
        export_service.write_trajectory(traj, tmp_path / "trajectory.csv")

        assert export_service.read_decisions(tmp_path / "decisions.csv").equals(dec)
        assert np.allclose(export_service.read_trajectory(tmp_path / "trajectory.csv").waypoints, traj.waypoints)
        assert pd.read_csv(tmp_path / "decisions.csv")["n"].tolist() == [1, 2, 1, 2]

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "datasets.csv"
        path.write_text("dataset,i,size_mbit\n0,0,1.0\n")
        with pytest.raises(ValidationError):
            export_service.read_datasets(path)


class TestCli:
    def test_missing_config_is_invalid_input(self, tmp_path):
        assert main(["sweep", "--config", str(tmp_path / "absent.json")]) == EXIT_INVALID
        assert main(["solve", "--config", str(tmp_path / "absent.json")]) == EXIT_INVALID

    def test_generate(self, tmp_path):
        assert main(["generate", "--seed", "1", "--gus", "4", "--datasets", "2", "--output", str(tmp_path)]) == EXIT_OK
        history = pd.read_csv(tmp_path / "history.csv")
        assert list(history.columns) == ["gu_0", "gu_1", "gu_2", "gu_3"]
        datasets = pd.read_csv(tmp_path / "datasets.csv")
        assert sorted(datasets["dataset"].unique().tolist()) == [0, 1]
        scenario, _, eps = load_scenario(tmp_path / "scenario.json")
        assert scenario.num_gus == 4 and eps == 0.3

    @pytest.mark.slow
    def test_solve_then_eval(self, tiny_scenario, space, tmp_path):
        scenario_path = dump_scenario(tiny_scenario, space, 0.3, tmp_path / "scenario.json")
        history = generate_history(3, tiny_scenario, space, 200)
        export_service.write_history(history.samples, tmp_path / "history.csv")
        datasets = draw_datasets(3, history.truths, space, 2, 4)
        export_service.write_datasets(datasets, tmp_path / "datasets.csv")
        solution = tmp_path / "solution"

        code = main([
            "solve", "--method", "drcoto", "--config", str(scenario_path),
            "--history", str(tmp_path / "history.csv"), "--output", str(solution),
        ])
        assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
        for name in ("objective.csv", "bounds.csv", "decisions.csv", "trajectory.csv", "distributions.csv"):
            assert (solution / name).exists()

        code = main([
            "eval", "--scenario", str(scenario_path), "--solution", str(solution),
            "--datasets", str(tmp_path / "datasets.csv"), "--method", "drcoto", "--output", str(tmp_path / "eval"),
        ])
        assert code == EXIT_OK
        actual = pd.read_csv(tmp_path / "eval" / "actual.csv")
        assert actual["method"].tolist() == ["drcoto"]
        assert actual["mean"].iloc[0] > 0.0


@pytest.mark.slow
def test_small_sweep_is_reproducible(tmp_path):
    def config(out):
        return ExperimentConfig(
            gu_counts=[2, 3],
            eps_values=[0.1, 0.3],
            quota_values=[1, 2],
            eval_datasets=2,
            overrides={"I": 3, "J": 1, "N": 2},
            output_dir=str(out),
            record_timing=False,
        )

    tables = run_sweep(config(tmp_path / "a"))
    run_sweep(config(tmp_path / "b"))

    objective = tables["objective"]
    assert len(objective) == 12
    assert (objective["status"] == "ok").all()
    assert (objective["wall_time"] == 0.0).all()
    assert len(objective[objective["group"] == "grid"]) == 4
    for name in ("objective.csv", "actual.csv", "checks.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.slow
def test_reduced_sweep_reproduces_the_trends(tmp_path):
    config = ExperimentConfig(
        gu_counts=[2, 3, 4],
        eps_values=[0.1, 0.3, 0.5],
        quota_values=[1, 2, 3],
        eval_datasets=5,
        overrides={"I": 3, "J": 1, "N": 2},
        output_dir=str(tmp_path),
        record_timing=False,
    )

    tables = run_sweep(config)

    assert (tables["objective"]["status"] == "ok").all()
    checks = tables["checks"].set_index("check")
    ordering = [name for name in checks.index if name.startswith("so_le_drcoto_le_ro_I")]
    growth = [name for name in checks.index if name.endswith("_nondecreasing_in_I")]
    quota = [name for name in checks.index if name.startswith("drcoto_nonincreasing_in_quota")]
    radius = [name for name in checks.index if name.startswith("drcoto_nondecreasing_in_eps")]
    assert len(ordering) == 3
    assert len(growth) == 4
    assert len(quota) == 3
    assert len(radius) == 3
    for name in ordering + growth + quota + radius:
        assert checks.loc[name, "passed"], f"{name}: {checks.loc[name, 'detail']}"
    # The spread comparison is reported for the largest I.
    assert {"drcoto_std_le_ro", "drcoto_std_le_do"} <= set(checks.index)
