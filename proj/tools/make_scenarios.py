#!/usr/bin/env python3
"""Writes the bundled scenarios in data/scenarios/. Goal poses come from
forward kinematics of chosen joint configurations so they are reachable.
Obstacle layouts are desk-scale stand-ins, not measured scenes."""

import json
import math
import pathlib

import make_arm7 as arm

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "scenarios"


def ee_pose(q):
    r, t = arm.frames(q)[-1]
    return [round(v, 9) for v in list(t) + arm.quat(r)]


def base(name, start_q, goals, world, seed=1):
    return {
        "schema_version": 1,
        "name": name,
        "robot": "../robots/arm7.json",
        "seed": seed,
        "rate_hz": 50,
        "max_cycles": 1000,
        "start_q": start_q,
        "goals": goals,
        "world": world,
        "sensor": {
            "camera": {
                "width": 320, "height": 240, "fx": 300, "fy": 300,
                "d_min": 0.1, "d_max": 6.0,
                "look_at": {"eye": [1.8, 0.0, 1.5], "target": [0.4, 0.0, 0.3]},
            },
            "render_robot": True,
            "noise_std": 0.0,
        },
        # 150 x 150 x 25 voxels at 2 cm: a 3 x 3 x 0.5 m slab around the work area.
        "grid": {"origin": [-1.1, -1.5, 0.2], "voxel_size": 0.02, "dims": [150, 150, 25]},
        "occupancy": {"l_hit": 0.85, "l_miss": -0.4, "l_min": -2.0, "l_max": 3.5,
                      "l_occupied": 1.0, "tau_occ": 0.05, "mask_padding": 0.02},
        "planner": {
            # Pose weights at 100x the library defaults, with lambda and the
            # collision weights raised to match; sigma halved (pilot-tuned on reach_static).
            "horizon": 30, "samples": 512, "dt": 0.02, "lambda": 2.0, "noise_window": 5,
            "sigma": 1.0,
            "q_running": [500, 500, 500, 200, 200, 200], "q_terminal": [5000, 5000, 5000, 2000, 2000, 2000],
            "w_env": 5e5, "w_self": 5e5, "w_q": 100, "w_qd": 100, "w_qdd": 100,
            "w_s": 0.01, "w_ns": 0.1, "d_act": 0.05, "eps_frac": 0.02,
            "q_ref": arm.Q_REF,
        },
        "convergence": {"n_stable": 5, "eta_rel": 1e-3, "pos_tol": 0.01, "ori_tol": 0.05},
    }


# Background surfaces behind the work area so freed space is observed as free.
FLOOR = {"name": "floor", "type": "box", "size": [4.0, 4.0, 0.1], "pose": {"xyz": [0.0, 0.0, -0.1]}}

Q_LEFT = [-0.7, -0.1, 0.0, -2.0, 0.0, 1.9, 0.785]
Q_RIGHT = [0.7, -0.1, 0.0, -2.0, 0.0, 1.9, 0.785]


def near_goal():
    goal_q = [q + d for q, d in zip(arm.Q_REF, [0.03, -0.02, 0.0, 0.03, 0.0, 0.02, 0.0])]
    return base("near_goal", arm.Q_REF, [{"pose": ee_pose(goal_q)}], [FLOOR])


def reach_static():
    wall = {"name": "box", "type": "box", "size": [0.3, 0.08, 0.25], "pose": {"xyz": [0.5, 0.0, 0.325]}}
    return base("reach_static", Q_LEFT, [{"pose": ee_pose(Q_RIGHT)}], [FLOOR, wall])


def two_goal_dynamic():
    goal_a = [0.5, -0.2, 0.0, -2.2, 0.0, 2.0, 0.785]
    goal_b = [-0.5, -0.2, 0.0, -2.2, 0.0, 2.0, 0.785]
    pb = ee_pose(goal_b)
    # 10 cm cube: waits on the far side of Goal B, moves into the space the
    # hand occupies at Goal B, sits there, then leaves the way it came.
    def at(x, y, z):
        return {"xyz": [round(x, 4), round(y, 4), round(z, 4)]}
    zc = pb[2] - 0.2
    cube = {
        "name": "cube", "type": "box", "size": [0.1, 0.1, 0.1],
        "waypoints": [
            {"t": 0.0, "pose": at(pb[0], pb[1] - 0.5, zc)},
            {"t": 3.0, "pose": at(pb[0], pb[1] - 0.5, zc)},
            {"t": 5.0, "pose": at(pb[0], pb[1], zc)},
            {"t": 6.5, "pose": at(pb[0], pb[1], zc)},
            {"t": 8.0, "pose": at(pb[0] + 0.3, pb[1] - 0.5, zc)},
        ],
    }
    return base("two_goal_dynamic", arm.Q_REF,
                [{"pose": ee_pose(goal_a)}, {"pose": pb, "hold_until_s": 8.5}], [FLOOR, cube])


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for sc in (near_goal(), reach_static(), two_goal_dynamic()):
        path = OUT / f"{sc['name']}.json"
        path.write_text(json.dumps(sc, indent=2) + "\n")
        print(f"wrote {path}: goals {[g['pose'][:3] for g in sc['goals']]}")


if __name__ == "__main__":
    main()
