"""Demonstration-guided task-and-motion planning.

A demonstration (contact events plus object poses) defines a manifold-
structured admissible configuration space; a multi-tree RRT plans multi-step
pick-and-place motion through it, a random shortcut tightens the path, and an
iterative-LQR refinement turns it into a smooth torque trajectory. Ships with
a three-task benchmark (shelf, tunnel, waiter) and a deterministic metrics
harness.
"""

from .geom import (Box, Pose, Shape, Sphere, Twist, pose_distance_sq, se3_exp,
                   se3_log, signed_distance)
from .robot import (RobotModel, builtin_model, forward_kinematics, jacobian,
                    load_robot_model, within_limits)
from .demo import (ContactEvent, Demonstration, PoseVariation, load_demonstration,
                   make_demonstration, reanchor, save_demonstration, swap_object,
                   vary_poses)
from .cspace import (CollisionWorld, Configuration, FixedPose, Handle, StateGraph,
                     StateManifold, Transition, build_state_graph, is_free,
                     linear_interpolate, project, sample_configuration,
                     sample_on_transition)
from .planner import (Forest, Path, PlannerParams, PlanReport, SurfaceRegion,
                      attempt_link, check_path, metrics, nearest_neighbor, plan,
                      plan_unguided, shortcut)
from .ocp import (OcpState, OcpWeights, Trajectory, dynamics_step,
                  extract_keyframes, refine, running_cost, verify_trajectory)
from .scenes import Scene, build_scene, scene_from_json, scene_to_json
from .bench import (ExperimentSpec, ResultRow, load_specs, rows_to_csv,
                    rows_to_json, run_experiment, run_sweep)

__version__ = "0.1.0"
