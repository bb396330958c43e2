"""Joint vocabulary for the 18-landmark skeleton.

The landmark set and ordering follow the common 18-point pose-estimation
convention. Everything downstream (edges, bone parents, rest pose) is defined
in terms of this table, so re-mapping to a different landmark convention only
requires editing this module.
"""

from __future__ import annotations

import numpy as np

NUM_JOINTS = 18

JOINT_NAMES = (
    "nose",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_eye",
    "l_eye",
    "r_ear",
    "l_ear",
)

JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}

NOSE = JOINT_INDEX["nose"]
NECK = JOINT_INDEX["neck"]
R_SHOULDER = JOINT_INDEX["r_shoulder"]
R_ELBOW = JOINT_INDEX["r_elbow"]
R_WRIST = JOINT_INDEX["r_wrist"]
L_SHOULDER = JOINT_INDEX["l_shoulder"]
L_ELBOW = JOINT_INDEX["l_elbow"]
L_WRIST = JOINT_INDEX["l_wrist"]
R_HIP = JOINT_INDEX["r_hip"]
R_KNEE = JOINT_INDEX["r_knee"]
R_ANKLE = JOINT_INDEX["r_ankle"]
L_HIP = JOINT_INDEX["l_hip"]
L_KNEE = JOINT_INDEX["l_knee"]
L_ANKLE = JOINT_INDEX["l_ankle"]
R_EYE = JOINT_INDEX["r_eye"]
L_EYE = JOINT_INDEX["l_eye"]
R_EAR = JOINT_INDEX["r_ear"]
L_EAR = JOINT_INDEX["l_ear"]

# The four end effectors used for limb-coordination edges and the classical
# movement indexes.
END_EFFECTORS = (R_WRIST, L_WRIST, R_ANKLE, L_ANKLE)

# Skeletal tree as (parent, child) pairs, rooted at the neck: 17 edges
# spanning all 18 joints.
PHYSICAL_TREE = (
    (NECK, NOSE),
    (NECK, R_SHOULDER),
    (NECK, L_SHOULDER),
    (R_SHOULDER, R_ELBOW),
    (L_SHOULDER, L_ELBOW),
    (R_ELBOW, R_WRIST),
    (L_ELBOW, L_WRIST),
    (NECK, R_HIP),
    (NECK, L_HIP),
    (R_HIP, R_KNEE),
    (L_HIP, L_KNEE),
    (R_KNEE, R_ANKLE),
    (L_KNEE, L_ANKLE),
    (NOSE, R_EYE),
    (NOSE, L_EYE),
    (R_EYE, R_EAR),
    (L_EYE, L_EAR),
)

# parent[j] for the bone stream; the root (neck) maps to itself.
BONE_PARENT = np.arange(NUM_JOINTS)
for _p, _c in PHYSICAL_TREE:
    BONE_PARENT[_c] = _p
BONE_PARENT.setflags(write=False)


def rest_pose() -> np.ndarray:
    """Canonical supine rest pose, shape (18, 3), meters.

    Neck at the origin, spine toward -y, left side toward +x, z up from the
    support surface. Used as the fallback template for graph partitioning
    and as the base skeleton of the synthetic data generator.
    """
    pose = np.zeros((NUM_JOINTS, 3))
    pose[NOSE] = (0.0, 0.075, 0.035)
    pose[NECK] = (0.0, 0.0, 0.0)
    pose[R_SHOULDER] = (-0.055, -0.01, 0.005)
    pose[L_SHOULDER] = (0.055, -0.01, 0.005)
    pose[R_ELBOW] = (-0.09, -0.06, 0.02)
    pose[L_ELBOW] = (0.09, -0.06, 0.02)
    pose[R_WRIST] = (-0.11, -0.105, 0.045)
    pose[L_WRIST] = (0.11, -0.105, 0.045)
    pose[R_HIP] = (-0.045, -0.165, 0.0)
    pose[L_HIP] = (0.045, -0.165, 0.0)
    pose[R_KNEE] = (-0.06, -0.235, 0.03)
    pose[L_KNEE] = (0.06, -0.235, 0.03)
    pose[R_ANKLE] = (-0.07, -0.3, 0.02)
    pose[L_ANKLE] = (0.07, -0.3, 0.02)
    pose[R_EYE] = (-0.02, 0.09, 0.045)
    pose[L_EYE] = (0.02, 0.09, 0.045)
    pose[R_EAR] = (-0.04, 0.07, 0.015)
    pose[L_EAR] = (0.04, 0.07, 0.015)
    return pose
