import json

import numpy as np
import pytest

from guidedtamp.bench import (ExperimentSpec, ExperimentSpecError, SCENARIOS,
                              generalized_instance, load_specs, rows_to_csv,
                              rows_to_json, run_experiment, run_seed)
from guidedtamp.demo import load_demonstration, save_demonstration
from guidedtamp.geom import Pose


class TestExperimentSpec:
    def test_defaults(self):
        spec = ExperimentSpec(task="shelf-1")
        assert spec.method == "guided" and spec.seeds == tuple(range(10))

    def test_waiter_requires_kmr(self):
        with pytest.raises(ExperimentSpecError):
            ExperimentSpec(task="waiter", robot="panda7")
        ExperimentSpec(task="waiter", robot="kmr")  # fine

    def test_tunnel_object_scenario_rejected(self):
        with pytest.raises(ExperimentSpecError):
            ExperimentSpec(task="tunnel", scenario="object")

    def test_unknown_method(self):
        with pytest.raises(ExperimentSpecError):
            ExperimentSpec(task="shelf-1", method="magic")

    def test_spec_file_with_experiments_list(self):
        doc = {"experiments": [{"task": "shelf-1", "seeds": [0, 1]},
                               {"task": "tunnel", "seeds": [0]}]}
        specs = load_specs(json.dumps(doc))
        assert [s.task for s in specs] == ["shelf-1", "tunnel"]

    def test_single_spec_file(self):
        specs = load_specs(json.dumps({"task": "shelf-2", "time_limit": 30}))
        assert specs[0].time_limit == 30

    def test_unknown_field_rejected(self):
        with pytest.raises(ExperimentSpecError):
            load_specs(json.dumps({"task": "shelf-1", "frobnicate": 1}))

    def test_not_json(self):
        with pytest.raises(ExperimentSpecError):
            load_specs("{oops")


class TestRunExperiment:
    def test_zero_seeds_valid_csv_header(self):
        spec = ExperimentSpec(task="shelf-1", seeds=())
        row = run_experiment(spec)
        csv = rows_to_csv([row])
        assert csv == "task,robot,method,scenario,seed,status,time_s,path_len_rad,grasps\n"
        assert row.success_rate == 0.0
        assert row.aggregates()["mean_time_s"] is None

    def test_shelf1_two_seeds(self):
        spec = ExperimentSpec(task="shelf-1", seeds=(0, 1), time_limit=60.0)
        row = run_experiment(spec)
        assert row.success_rate == 1.0
        csv = rows_to_csv([row])
        lines = csv.strip().split("\n")
        assert len(lines) == 3
        assert lines[1].startswith("shelf-1,panda7,guided,none,0,success,")

    def test_csv_byte_identical_across_runs(self):
        spec = ExperimentSpec(task="shelf-1", method="guided+shortcut",
                              seeds=(0, 1), time_limit=60.0)
        csv1 = rows_to_csv([run_experiment(spec)])
        csv2 = rows_to_csv([run_experiment(spec)])
        assert csv1 == csv2

    def test_json_mirror_carries_details(self):
        spec = ExperimentSpec(task="shelf-1", seeds=(0,), time_limit=60.0)
        row = run_experiment(spec)
        doc = json.loads(rows_to_json([row]))
        assert doc[0]["spec"]["task"] == "shelf-1"
        assert "node_count" in doc[0]["results"][0]
        assert doc[0]["aggregates"]["success_rate"] == 1.0

    def test_shortcut_method_not_longer(self):
        base = run_seed(ExperimentSpec(task="shelf-1", seeds=(0,)), 0)
        short = run_seed(ExperimentSpec(task="shelf-1", method="guided+shortcut",
                                        seeds=(0,)), 0)
        assert short.status == base.status == "success"
        assert short.path_len_rad <= base.path_len_rad + 1e-9
        assert short.grasps == base.grasps


class TestGeneralization:
    @pytest.mark.parametrize("scenario", [s for s in SCENARIOS if s != "none"])
    def test_shelf1_variations_validate(self, scenario):
        rng = np.random.default_rng(0)
        scene, demo, graph, world, rejected = generalized_instance(
            "shelf-1", "panda7", scenario, rng)
        text = save_demonstration(demo)
        assert save_demonstration(load_demonstration(text)) == text
        assert world.is_free(graph.start_state, scene.q_start)

    def test_environment_moves_shelf_and_goals_together(self):
        rng = np.random.default_rng(3)
        scene, demo, graph, world, _ = generalized_instance(
            "shelf-1", "panda7", "environment", rng)
        base_scene, base_demo = __import__("guidedtamp.scenes", fromlist=["build_scene"]).build_scene("shelf-1")
        delta = (scene.frames["shelf"].translation
                 - base_scene.frames["shelf"].translation)
        goal_before = base_demo.world_pose(2, "sugar").translation
        goal_after = demo.world_pose(2, "sugar").translation
        assert np.allclose(goal_after - goal_before, delta, atol=1e-12)

    def test_object_scenario_changes_catalogue(self):
        rng = np.random.default_rng(4)
        scene, demo, graph, world, _ = generalized_instance(
            "shelf-1", "panda7", "object", rng)
        base_scene, _ = __import__("guidedtamp.scenes", fromlist=["build_scene"]).build_scene("shelf-1")
        assert scene.objects["sugar"] != base_scene.objects["sugar"]
        # handles were regenerated for the new shape
        assert scene.handles["sugar"][0].grip != base_scene.handles["sugar"][0].grip

    def test_graspability_resampling_reports_rejections(self):
        rng = np.random.default_rng(5)
        _, _, _, _, rejected = generalized_instance(
            "shelf-1", "panda7", "environment", rng)
        assert rejected >= 0  # bound checked; mostly asserting it terminates
