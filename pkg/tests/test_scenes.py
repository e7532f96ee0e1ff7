import numpy as np
import pytest

from guidedtamp.cspace import build_state_graph
from guidedtamp.demo import load_demonstration, save_demonstration
from guidedtamp.scenes import (CATALOGUE, TASKS, build_scene, scene_from_json,
                               scene_to_json)


class TestBuildScene:
    def test_unknown_task(self):
        with pytest.raises(KeyError):
            build_scene("frisbee")

    def test_shelf2_event_count(self):
        _, demo = build_scene("shelf-2")
        assert len(demo.events) == 4  # two direct moves

    def test_tunnel_two_stage_transfer(self):
        _, demo = build_scene("tunnel")
        assert len(demo.objects) == 1
        assert len(demo.events) == 4
        contacts = [demo.events[k].active_object()[1] for k in range(4)]
        assert contacts == ["grasp", "release", "grasp", "release"]
        # the intermediate placement is anchored to the tunnel
        frame, _ = demo.events[1].poses["sugar"]
        assert frame == "tunnel"

    def test_waiter_event_count_and_tray(self):
        scene, demo = build_scene("waiter")
        assert len(demo.events) >= 8
        tray_frames = [ev.poses[o][0] for ev in demo.events for o in demo.objects]
        assert "robot" in tray_frames
        assert scene.robot_name == "kmr"
        assert any(f.frame == "robot" for f in scene.furniture)

    def test_waiter_rejects_arm_robots(self):
        with pytest.raises(ValueError):
            build_scene("waiter", robot="panda7")

    def test_every_task_validates_and_builds_graph(self):
        for task in TASKS:
            scene, demo = build_scene(task)
            text = save_demonstration(demo)
            assert save_demonstration(load_demonstration(text)) == text
            handles = [h for hs in scene.handles.values() for h in hs]
            graph = build_state_graph(demo, handles)
            releases = sum(1 for ev in demo.events
                           if ev.active_object() and ev.active_object()[1] == "release")
            assert len(graph.placements) == 1 + releases
            world = scene.collision_world()
            assert world.is_free(graph.start_state, scene.q_start)
            assert world.is_free(graph.goal_state, scene.q_goal)

    def test_regions_resolve_to_world(self):
        scene, _ = build_scene("shelf-1")
        regions = scene.world_regions()
        assert all(r.xmax > r.xmin and r.ymax > r.ymin for r in regions)
        table = [r for r in regions if r.name == "table"][0]
        assert table.z == pytest.approx(0.75)

    def test_robot_override(self):
        scene, _ = build_scene("shelf-1", robot="ur5ish")
        assert scene.robot_name == "ur5ish"
        assert scene.robot().dof == 6

    def test_frame_move_shifts_furniture(self):
        scene, _ = build_scene("shelf-1")
        moved = scene.with_frame("shelf", scene.frames["shelf"] @
                                 __import__("guidedtamp.geom", fromlist=["Pose"]).Pose.from_translation([0.1, 0, 0]))
        before = {b.name: b.pose.rel.translation for b in scene.world_furniture()}
        after = {b.name: b.pose.rel.translation for b in moved.world_furniture()}
        assert np.allclose(after["board1"] - before["board1"], [0.1, 0, 0])
        assert np.allclose(after["table_slab"], before["table_slab"])


class TestSceneJson:
    def test_roundtrip(self):
        for task in TASKS:
            scene, _ = build_scene(task)
            text = scene_to_json(scene)
            again = scene_from_json(text)
            assert scene_to_json(again) == text

    def test_catalogue_boxes_positive(self):
        for name, shape in CATALOGUE.items():
            assert np.all(shape.half_extents > 0)
