#!/usr/bin/env python3
"""Writes data/robots/arm7.json: a 7-DoF revolute arm with Panda-like
modified-DH geometry and a hand-placed sphere proxy."""

import itertools
import json
import math
import pathlib

import numpy as np

# (alpha_{i-1}, a_{i-1}, d_i) per joint; every joint rotates about local z.
DH = [
    (0.0, 0.0, 0.333),
    (-math.pi / 2, 0.0, 0.0),
    (math.pi / 2, 0.0, 0.316),
    (math.pi / 2, 0.0825, 0.0),
    (-math.pi / 2, -0.0825, 0.384),
    (math.pi / 2, 0.0, 0.0),
    (math.pi / 2, 0.088, 0.0),
]
LIMITS = [
    (-2.8973, 2.8973, 2.175),
    (-1.7628, 1.7628, 2.175),
    (-2.8973, 2.8973, 2.175),
    (-3.0718, -0.0698, 2.175),
    (-2.8973, 2.8973, 2.61),
    (-0.0175, 3.7525, 2.61),
    (-2.8973, 2.8973, 2.61),
]
ACCEL = 10.0

# (link, center in link frame, radius)
SPHERES = [
    (0, (0.0, 0.0, 0.06), 0.09),
    (0, (-0.08, 0.0, 0.06), 0.08),
    (1, (0.0, 0.0, -0.19), 0.08),
    (1, (0.0, 0.0, -0.07), 0.07),
    (2, (0.0, -0.05, 0.0), 0.07),
    (2, (0.0, -0.15, 0.0), 0.06),
    (3, (0.0, 0.0, -0.08), 0.06),
    (3, (0.04, 0.0, 0.0), 0.065),
    (4, (0.0, 0.0, 0.0), 0.065),
    (4, (-0.04, 0.08, 0.0), 0.06),
    (5, (0.0, 0.0, -0.26), 0.055),
    (5, (0.0, 0.03, -0.17), 0.05),
    (5, (0.0, 0.0, -0.09), 0.05),
    (5, (0.0, 0.0, 0.0), 0.06),
    (6, (0.06, 0.0, 0.0), 0.055),
    (7, (0.0, 0.0, 0.06), 0.05),
    (7, (0.0, 0.0, 0.13), 0.05),
    (7, (0.0, 0.04, 0.18), 0.03),
    (7, (0.0, -0.04, 0.18), 0.03),
]

Q_REF = [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785]


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def offset(alpha, a, d):
    r = rot_x(alpha)
    return r, np.array([a, 0.0, 0.0]) + r @ np.array([0.0, 0.0, d])


def frames(q):
    r, t = np.eye(3), np.zeros(3)
    out = [(r, t)]
    for (alpha, a, d), qi in zip(DH, q):
        ro, to = offset(alpha, a, d)
        t = t + r @ to
        r = r @ ro @ rot_z(qi)
        out.append((r, t))
    return out


def centers(q):
    f = frames(q)
    return [f[link][0] @ np.array(c) + f[link][1] for link, c, _ in SPHERES]


def quat(r):
    w = math.sqrt(max(0.0, 1 + r[0, 0] + r[1, 1] + r[2, 2])) / 2
    x = math.copysign(math.sqrt(max(0.0, 1 + r[0, 0] - r[1, 1] - r[2, 2])) / 2, r[2, 1] - r[1, 2])
    y = math.copysign(math.sqrt(max(0.0, 1 - r[0, 0] + r[1, 1] - r[2, 2])) / 2, r[0, 2] - r[2, 0])
    z = math.copysign(math.sqrt(max(0.0, 1 - r[0, 0] - r[1, 1] + r[2, 2])) / 2, r[1, 0] - r[0, 1])
    return [w, x, y, z]


def self_pairs():
    # Keep pairs two or more links apart that are separated at the reference posture.
    c = centers(Q_REF)
    pairs = []
    for i, j in itertools.combinations(range(len(SPHERES)), 2):
        li, lj = SPHERES[i][0], SPHERES[j][0]
        if abs(li - lj) < 2:
            continue
        gap = np.linalg.norm(c[i] - c[j]) - SPHERES[i][2] - SPHERES[j][2]
        if gap > 0.02 and max(li, lj) >= 5:
            pairs.append([i, j])
    return pairs


def main():
    joints = []
    for (alpha, a, d), (lo, hi, vel) in zip(DH, LIMITS):
        r, t = offset(alpha, a, d)
        joints.append({
            "parent_offset": [round(v, 12) for v in list(t) + quat(r)],
            "axis": [0, 0, 1],
            "limits": {"position": [lo, hi], "velocity": vel, "acceleration": ACCEL},
        })
    robot = {
        "schema_version": 1,
        "name": "arm7",
        "base_pose": [0, 0, 0, 1, 0, 0, 0],
        "joints": joints,
        "spheres": [{"link": l, "center": list(c), "radius": r} for l, c, r in SPHERES],
        "self_pairs": self_pairs(),
    }
    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "robots" / "arm7.json"
    out.write_text(json.dumps(robot, indent=2) + "\n")
    print(f"wrote {out} ({len(SPHERES)} spheres, {len(robot['self_pairs'])} self pairs)")


if __name__ == "__main__":
    main()
