import numpy as np
import pytest

from guidedtamp.cspace import (CollisionWorld, Configuration, FixedPose,
                               PLACEMENT, StateManifold, WorldBody,
                               build_state_graph)
from guidedtamp.geom import Box, Pose
from guidedtamp.planner import (Forest, Path, PlannerInputError, PlannerParams,
                                _Budget, _Checker, attempt_link, check_path,
                                metrics, nearest_neighbor, path_from_json,
                                path_to_json, plan, shortcut)
from guidedtamp.robot import load_robot_model
from guidedtamp.scenes import build_scene

FREE_BOT = """
name freebot
base fixed
home 0 0
gripper_offset 0 0 0   1 0 0 0
joint jx prismatic
  axis 1 0 0
  offset 0 0 1   1 0 0 0
  limits -2 2
  sphere 0 0 0 0.05
joint jy prismatic
  axis 0 1 0
  offset 0 0 0   1 0 0 0
  limits -2 2
  sphere 0 0 0 0.05
"""


@pytest.fixture()
def point_world():
    """2-DoF Cartesian point robot one meter above the ground, no obstacles."""
    model = load_robot_model(FREE_BOT)
    return CollisionWorld(model, [], {})


@pytest.fixture()
def wall_world():
    """Same robot with a wall splitting the workspace at x = 0."""
    model = load_robot_model(FREE_BOT)
    wall = WorldBody("wall", Box([0.05, 2.0, 2.0]),
                     FixedPose("world", Pose.from_translation([0.0, 0.0, 1.0])))
    return CollisionWorld(model, [wall], {})


STATE = StateManifold(PLACEMENT, "S", {})


def cfg(x, y):
    return Configuration(np.array([x, y], dtype=float), STATE)


class TestNearestNeighbor:
    def test_single_candidate(self, point_world):
        forest = Forest(2)
        forest.new_tree(np.array([0.5, 0.5]), STATE)
        nn = nearest_neighbor(np.array([0.0, 0.0]), STATE, forest)
        assert np.allclose(nn.q, [0.5, 0.5])

    def test_picks_closer(self, point_world):
        forest = Forest(2)
        forest.new_tree(np.array([0.5, 0.0]), STATE)
        forest.new_tree(np.array([0.7, 0.0]), STATE)
        nn = nearest_neighbor(np.array([0.0, 0.0]), STATE, forest)
        assert np.allclose(nn.q, [0.5, 0.0])

    def test_matches_bruteforce_oracle(self, point_world):
        rng = np.random.default_rng(0)
        forest = Forest(2)
        pts = rng.uniform(-2, 2, size=(1000, 2))
        root = forest.new_tree(pts[0], STATE)
        for p in pts[1:]:
            forest.add_child(root, p, STATE)
        for _ in range(50):
            q = rng.uniform(-2, 2, 2)
            nn = nearest_neighbor(q, STATE, forest)
            expect = pts[np.argmin(((pts - q) ** 2).sum(axis=1))]
            assert np.allclose(nn.q, expect)

    def test_empty_state_raises(self, point_world):
        forest = Forest(2)
        with pytest.raises(ValueError):
            nearest_neighbor(np.zeros(2), STATE, forest)


class TestAttemptLink:
    def _checker(self, world, delta=0.2):
        params = PlannerParams(max_time=10.0, delta=delta)
        return _Checker(world, _Budget(params), delta)

    def test_single_tree_noop(self, point_world):
        forest = Forest(2)
        ref = forest.new_tree(np.zeros(2), STATE)
        assert attempt_link(ref, forest, 0.2, self._checker(point_world)) == 0

    def test_two_trees_merge_in_free_space(self, point_world):
        forest = Forest(2)
        a = forest.new_tree(np.array([-0.5, 0.0]), STATE)
        b = forest.new_tree(np.array([0.5, 0.0]), STATE)
        merges = attempt_link(b, forest, 0.2, self._checker(point_world))
        assert merges == 1
        assert forest.find(a[0]) == forest.find(b[0])
        # the walk retained intermediate nodes with step bound delta
        assert forest.node_count > 2

    def test_wall_blocks_merge_but_keeps_progress(self, wall_world):
        forest = Forest(2)
        a = forest.new_tree(np.array([-0.8, 0.0]), STATE)
        b = forest.new_tree(np.array([0.8, 0.0]), STATE)
        checker = self._checker(wall_world)
        merges = attempt_link(b, forest, 0.2, checker)
        assert merges == 0
        assert forest.find(a[0]) != forest.find(b[0])
        added = forest.node_count - 2
        assert added >= 1  # partial progress retained
        for tree in forest.trees:
            for q in tree.qs:
                assert wall_world.is_free(STATE, q)


class TestShortcut:
    def _zigzag(self):
        pts = [(0, 0), (0.1, 0.4), (0.2, -0.4), (0.3, 0.4), (0.4, -0.4), (0.5, 0)]
        return Path(tuple(cfg(x, y) for x, y in pts))

    def test_straight_line_unchanged(self, point_world):
        path = Path(tuple(cfg(x, 0.0) for x in np.linspace(0, 1, 6)))
        rng = np.random.default_rng(1)
        out = shortcut(path, 100, rng, point_world)
        assert out.length() == pytest.approx(path.length())

    def test_zigzag_strictly_shorter(self, point_world):
        path = self._zigzag()
        rng = np.random.default_rng(2)
        out = shortcut(path, 100, rng, point_world)
        assert out.length() < path.length() - 0.5
        assert np.array_equal(out.waypoints[0].q, path.waypoints[0].q)
        assert np.array_equal(out.waypoints[-1].q, path.waypoints[-1].q)

    def test_never_increases_length(self, point_world):
        rng = np.random.default_rng(3)
        path = self._zigzag()
        prev = path.length()
        for attempts in (1, 5, 20, 100):
            out = shortcut(path, attempts, np.random.default_rng(4), point_world)
            assert out.length() <= prev + 1e-12

    def test_wall_constrains_shortcut(self, wall_world):
        # corridor around the wall: the straight chord would cross it
        pts = [(-0.8, 0.0), (-0.5, 1.2), (0.0, 1.4), (0.5, 1.2), (0.8, 0.0)]
        path = Path(tuple(cfg(x, y) for x, y in pts))
        out = shortcut(path, 200, np.random.default_rng(5), wall_world)
        assert out.length() <= path.length()
        for a, b in zip(out.waypoints, out.waypoints[1:]):
            mid = 0.5 * (a.q + b.q)
            assert wall_world.is_free(STATE, mid)

    def test_transitions_preserved_on_real_path(self):
        scene, demo = build_scene("shelf-1")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        path, _ = plan(graph, demo, world, scene.q_start, scene.q_goal,
                       PlannerParams(seed=0, max_time=60.0))
        before = path.transition_count()
        out = shortcut(path, 200, np.random.default_rng(6), world)
        assert out.transition_count() == before
        assert out.length() <= path.length() + 1e-12
        assert not check_path(out, world, 0.2)


class TestPlan:
    def test_trivial_query_single_waypoint(self):
        scene, demo = build_scene("shelf-1")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        # degenerate demonstration: nothing moves, goal equals start
        from guidedtamp.demo import ContactEvent, make_demonstration
        still = make_demonstration(
            demo.objects, demo.frames,
            [ContactEvent(1, {o: "none" for o in demo.objects},
                          demo.events[0].poses)])
        g2 = build_state_graph(still, handles)
        path, report = plan(g2, still, world, scene.q_start, scene.q_start,
                            PlannerParams(seed=0, max_time=5.0))
        assert report.status == "success"
        assert len(path) == 1
        m = metrics(path, report)
        assert m["path_len_rad"] == 0.0 and m["grasps"] == 0

    def test_shelf1_succeeds_and_is_sound(self):
        scene, demo = build_scene("shelf-1")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        params = PlannerParams(seed=0, max_time=60.0)
        path, report = plan(graph, demo, world, scene.q_start, scene.q_goal, params)
        assert report.status == "success"
        assert path.grasp_count() >= 1
        assert not check_path(path, world, params.delta,
                              q_start=scene.q_start, q_goal=scene.q_goal)

    def test_deterministic_replay(self):
        scene, demo = build_scene("shelf-1")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        params = PlannerParams(seed=3, max_time=60.0)
        p1, r1 = plan(graph, demo, world, scene.q_start, scene.q_goal, params)
        p2, r2 = plan(graph, demo, world, scene.q_start, scene.q_goal, params)
        assert r1.iterations == r2.iterations
        assert r1.time_s == r2.time_s
        assert len(p1) == len(p2)
        for a, b in zip(p1.waypoints, p2.waypoints):
            assert np.array_equal(a.q, b.q) and a.state.sid == b.state.sid

    def test_colliding_start_raises_precondition_error(self):
        scene, demo = build_scene("shelf-1")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        q_bad = scene.q_start.copy()
        q_bad[1] = 1.7  # arm plunged into the table
        with pytest.raises(PlannerInputError):
            plan(graph, demo, world, q_bad, scene.q_goal,
                 PlannerParams(seed=0, max_time=5.0))

    def test_without_guidance_trees_times_out(self):
        # no transition trees beyond start/goal: the manifolds cannot connect
        scene, demo = build_scene("tunnel")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        params = PlannerParams(seed=0, max_time=3.0, eta_sample_tree=1e-9)
        path, report = plan(graph, demo, world, scene.q_start, scene.q_goal, params)
        assert path is None and report.status == "timeout"

    def test_report_counts(self):
        scene, demo = build_scene("shelf-1")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        path, report = plan(graph, demo, world, scene.q_start, scene.q_goal,
                            PlannerParams(seed=0, max_time=60.0))
        assert report.node_count > 2
        assert report.collision_checks > 0
        assert report.time_s == report.collision_checks / PlannerParams().checks_per_second


class TestMetricsAndPathJson:
    def test_two_waypoint_length(self):
        a = cfg(0.0, 0.0)
        b = cfg(0.9, 1.2)
        path = Path((a, b))
        assert path.length() == pytest.approx(1.5)

    def test_path_json_roundtrip(self):
        scene, demo = build_scene("shelf-1")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        path, _ = plan(graph, demo, world, scene.q_start, scene.q_goal,
                       PlannerParams(seed=0, max_time=60.0))
        text = path_to_json(path)
        back = path_from_json(text, scene.handles)
        assert len(back) == len(path)
        for a, b in zip(path.waypoints, back.waypoints):
            assert np.array_equal(a.q, b.q)
            assert a.state.sid == b.state.sid
        assert path_to_json(back) == text


class TestPlannerParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            PlannerParams(eta_sample_tree=0.0)
        with pytest.raises(ValueError):
            PlannerParams(delta=-0.1)
        with pytest.raises(ValueError):
            PlannerParams(max_time=0.0)
