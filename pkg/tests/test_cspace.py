import numpy as np
import pytest

from guidedtamp.cspace import (CollisionWorld, Configuration, FixedPose, Handle,
                               PLACEMENT, GRASPK, StateManifold, WorldBody,
                               build_state_graph, is_free, linear_interpolate,
                               project, sample_configuration, sample_on_transition,
                               transition_residual)
from guidedtamp.demo import ContactEvent, make_demonstration
from guidedtamp.geom import Box, Pose, pose_distance_sq
from guidedtamp.robot import builtin_model
from guidedtamp.scenes import box_handles, build_scene


def simple_demo(n_handles=2, moves=(("a", (-0.1, 0.0), (0.2, 0.1)), ("b", (0.1, 0.1), (-0.2, 0.1)))):
    objects = {}
    events = []
    poses = {}
    names = sorted({m[0] for m in moves})
    for name in names:
        objects[name] = Box([0.03, 0.03, 0.05])
    for name, (sx, sy), _ in moves:
        poses.setdefault(name, ("world", Pose.from_translation([sx, sy, 0.05])))
    k = 0
    for name, _, (gx, gy) in moves:
        k += 1
        events.append(ContactEvent(k, {o: ("grasp" if o == name else "none") for o in names},
                                   dict(poses)))
        poses[name] = ("world", Pose.from_translation([gx, gy, 0.05]))
        k += 1
        events.append(ContactEvent(k, {o: ("release" if o == name else "none") for o in names},
                                   dict(poses)))
    demo = make_demonstration(objects, {}, events)
    labels = ("top", "side_ym", "side_yp")[:n_handles]
    handles = [h for name in names for h in box_handles(name, objects[name], labels)]
    return demo, handles


class TestBuildStateGraph:
    def test_two_objects_two_handles_counts(self):
        # two objects moved once each, two handles apiece
        demo, handles = simple_demo(n_handles=2)
        graph = build_state_graph(demo, handles)
        assert len(graph.placements) == 3
        assert len(graph.grasp_states) == 4
        assert len(graph.transitions) == 8

    def test_degenerate_no_moves(self):
        objects = {"a": Box([0.03, 0.03, 0.05])}
        ev = ContactEvent(1, {"a": "none"},
                          {"a": ("world", Pose.from_translation([0, 0, 0.05]))})
        demo = make_demonstration(objects, {}, [ev])
        graph = build_state_graph(demo, box_handles("a", objects["a"], ("top",)))
        assert len(graph.placements) == 1
        assert len(graph.grasp_states) == 0

    def test_object_moved_twice_three_handles(self):
        demo, handles = simple_demo(
            n_handles=3,
            moves=(("a", (-0.1, 0.0), (0.2, 0.1)), ("a", (0.2, 0.1), (0.0, -0.2))))
        graph = build_state_graph(demo, handles)
        assert len(graph.placements) == 3
        assert len(graph.grasp_states) == 6
        assert len(graph.transitions) == 12

    def test_object_without_handles_rejected(self):
        demo, _ = simple_demo()
        with pytest.raises(ValueError, match="no handles"):
            build_state_graph(demo, [])

    def test_consecutive_placements_differ_in_one_object(self):
        _, demo = build_scene("shelf-3")
        scene, _ = build_scene("shelf-3")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        for a, b in zip(graph.placements, graph.placements[1:]):
            diffs = [o for o in a.fixed
                     if not a.fixed[o].rel.is_close(b.fixed[o].rel, tol=1e-12)]
            assert len(diffs) == 1

    def test_deterministic(self):
        scene, demo = build_scene("shelf-2")
        handles = [h for hs in scene.handles.values() for h in hs]
        g1 = build_state_graph(demo, handles)
        g2 = build_state_graph(demo, handles)
        assert [s.sid for s in g1.placements] == [s.sid for s in g2.placements]
        assert [s.sid for s in g1.grasp_states] == [s.sid for s in g2.grasp_states]


class TestStateManifold:
    def test_placement_cannot_hold(self):
        h = Handle("a", Pose.identity())
        with pytest.raises(ValueError):
            StateManifold(PLACEMENT, "x", {}, grasped=("a", h))

    def test_grasp_needs_object(self):
        with pytest.raises(ValueError):
            StateManifold(GRASPK, "x", {})

    def test_grasped_object_not_fixed(self):
        h = Handle("a", Pose.identity())
        fp = FixedPose("world", Pose.identity())
        with pytest.raises(ValueError):
            StateManifold(GRASPK, "x", {"a": fp}, grasped=("a", h))


@pytest.fixture(scope="module")
def shelf1():
    scene, demo = build_scene("shelf-1")
    handles = [h for hs in scene.handles.values() for h in hs]
    graph = build_state_graph(demo, handles)
    world = scene.collision_world()
    return scene, demo, graph, world


class TestProject:
    def test_satisfying_seed_returned_unchanged(self, shelf1):
        scene, demo, graph, world = shelf1
        model = world.model
        tr = graph.transitions[0]
        rng = np.random.default_rng(0)
        q = None
        while q is None:
            qs, ok, _ = project(model, rng.uniform(model.lower, model.upper),
                                tr.gripper_target())
            if ok:
                q = qs
        q2, ok, iters = project(model, q, tr.gripper_target())
        assert ok and iters == 0
        assert np.array_equal(q2, q)

    def test_reachable_target_converges_to_tolerance(self, shelf1):
        scene, demo, graph, world = shelf1
        model = world.model
        tr = graph.transitions[0]
        rng = np.random.default_rng(1)
        found = 0
        for _ in range(30):
            q, ok, _ = project(model, rng.uniform(model.lower, model.upper),
                               tr.gripper_target())
            if not ok:
                continue
            found += 1
            et, er = transition_residual(q, tr, model)
            assert et < 1e-4 and er < 1e-3
        assert found >= 3

    def test_unreachable_target_fails(self, shelf1):
        scene, demo, graph, world = shelf1
        model = world.model
        far = FixedPose("world", Pose.from_translation([5.0, 0.0, 0.0]))
        q, ok, _ = project(model, model.home, far)
        assert not ok


class TestSampling:
    def test_transition_twins_share_coordinates(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(2)
        pair = None
        while pair is None:
            pair = sample_on_transition(demo.events[0], graph, world.model, rng)
        q_from, q_to = pair
        assert np.array_equal(q_from.q, q_to.q)
        assert q_from.state.kind == PLACEMENT
        assert q_to.state.kind == GRASPK

    def test_release_event_mirrors(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(3)
        pair = None
        while pair is None:
            pair = sample_on_transition(demo.events[1], graph, world.model, rng)
        q_from, q_to = pair
        assert q_from.state.kind == GRASPK
        assert q_to.state.kind == PLACEMENT

    def test_repeated_draws_are_distinct(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(4)
        qs = []
        while len(qs) < 20:
            pair = sample_on_transition(demo.events[0], graph, world.model, rng)
            if pair is not None:
                qs.append(tuple(np.round(pair[0].q, 6)))
        assert len(set(qs)) >= 18

    def test_unknown_event_raises(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(5)
        fake = ContactEvent(99, {}, {})
        with pytest.raises(KeyError):
            sample_on_transition(fake, graph, world.model, rng)

    def test_placement_sample_has_fixed_object_poses(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(6)
        cfg = sample_configuration(graph.start_state, world.model, rng)
        poses = world.object_poses(cfg.state, cfg.q)
        for obj, fp in graph.start_state.fixed.items():
            assert poses[obj] == fp.rel

    def test_grasp_sample_tracks_gripper(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(7)
        state = graph.grasp_states[0]
        cfg = sample_configuration(state, world.model, rng)
        obj, handle = state.grasped
        poses = world.object_poses(cfg.state, cfg.q)
        expect = world.model.gripper_pose(cfg.q) @ handle.grip.inverse()
        assert pose_distance_sq(poses[obj], expect) < 1e-12

    def test_sampling_covers_limits(self, shelf1):
        scene, demo, graph, world = shelf1
        model = world.model
        rng = np.random.default_rng(8)
        qs = np.array([sample_configuration(graph.start_state, model, rng).q
                       for _ in range(1000)])
        spans = qs.max(axis=0) - qs.min(axis=0)
        assert np.all(spans > 0.8 * (model.upper - model.lower))


class TestIsFree:
    def test_home_is_free(self, shelf1):
        scene, demo, graph, world = shelf1
        assert is_free(Configuration(scene.q_start, graph.start_state), world)

    def test_object_inside_table_is_not_free(self, shelf1):
        scene, demo, graph, world = shelf1
        bad = dict(graph.start_state.fixed)
        obj = next(iter(bad))
        bad[obj] = FixedPose("world", Pose.from_translation([0.0, 0.0, 0.73]))
        state = StateManifold(PLACEMENT, "bad", bad)
        assert not is_free(Configuration(scene.q_start, state), world)

    def test_grasped_object_near_gripper_is_free(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(9)
        # the pregrasp twin in the grasp state has the object wrapped around
        # the gripper; the pair is excluded so it must be free
        pair = None
        while pair is None:
            pair = sample_on_transition(demo.events[0], graph, world.model, rng)
            if pair is not None and not is_free(pair[1], world):
                pair = None
        assert is_free(pair[1], world)

    def test_joint_limit_violation_not_free(self, shelf1):
        scene, demo, graph, world = shelf1
        q = scene.q_start.copy()
        q[0] = world.model.upper[0] + 0.1
        assert not is_free(Configuration(q, graph.start_state), world)


class TestInterpolate:
    def test_endpoints(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(10)
        a = sample_configuration(graph.start_state, world.model, rng)
        b = sample_configuration(graph.start_state, world.model, rng)
        assert np.array_equal(linear_interpolate(a, b, 0.0).q, a.q)
        assert np.array_equal(linear_interpolate(a, b, 1.0).q, b.q)

    def test_midpoint(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(11)
        a = sample_configuration(graph.start_state, world.model, rng)
        b = sample_configuration(graph.start_state, world.model, rng)
        mid = linear_interpolate(a, b, 0.5)
        assert np.allclose(mid.q, 0.5 * (a.q + b.q))

    def test_cross_state_rejected(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(12)
        a = sample_configuration(graph.start_state, world.model, rng)
        b = sample_configuration(graph.grasp_states[0], world.model, rng)
        with pytest.raises(ValueError):
            linear_interpolate(a, b, 0.5)

    def test_placement_poses_constant_along_segment(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(13)
        a = sample_configuration(graph.start_state, world.model, rng)
        b = sample_configuration(graph.start_state, world.model, rng)
        ref = world.object_poses(a.state, a.q)
        for t in np.linspace(0, 1, 7):
            cur = world.object_poses(a.state, linear_interpolate(a, b, t).q)
            for obj in ref:
                assert cur[obj] == ref[obj]  # bitwise

    def test_grasp_relative_pose_constant_along_segment(self, shelf1):
        scene, demo, graph, world = shelf1
        rng = np.random.default_rng(14)
        state = graph.grasp_states[0]
        obj, handle = state.grasped
        a = sample_configuration(state, world.model, rng)
        b = sample_configuration(state, world.model, rng)
        for t in np.linspace(0, 1, 7):
            cfg = linear_interpolate(a, b, t)
            poses = world.object_poses(cfg.state, cfg.q)
            rel = world.model.gripper_pose(cfg.q).inverse() @ poses[obj]
            assert pose_distance_sq(rel, handle.grip.inverse()) < 1e-12


class TestRidingBodies:
    def test_tray_objects_move_with_base(self):
        scene, demo = build_scene("waiter")
        handles = [h for hs in scene.handles.values() for h in hs]
        graph = build_state_graph(demo, handles)
        world = scene.collision_world()
        # placement state 3 has both objects riding the tray
        state = graph.placements[2]
        riding = [o for o, fp in state.fixed.items() if fp.frame == "robot"]
        assert len(riding) == 2
        q1 = scene.q_start.copy()
        q2 = q1.copy()
        q2[0] += 0.5
        p1 = world.object_poses(state, q1)
        p2 = world.object_poses(state, q2)
        for obj in riding:
            delta = p2[obj].translation - p1[obj].translation
            assert np.allclose(delta, [0.5, 0, 0], atol=1e-12)
