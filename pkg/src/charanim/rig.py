"""Keypoint-based skeleton embedding, distance-to-bone skin weights, BVH
motion I/O, retargeting and linear blend skinning.

Quaternions are scalar-first (w, x, y, z) throughout. A bone is the segment
from a joint's parent to the joint and deforms with the parent's frame, so
rotating a joint swings everything downstream of it about that joint.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .deform import view_ray_intervals
from .errors import (BvhParseError, KeypointError, ParameterError,
                     ToolkitError)
from .mesh import TriMesh
from .volume import FrontProjection

_IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

KEYPOINT_NAMES = ("chin", "left_elbow", "right_elbow", "left_wrist",
                  "right_wrist", "left_knee", "right_knee", "groin")


def _quat_to_matrix(q):
    """(..., 4) wxyz quaternions to (..., 3, 3) rotation matrices."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def _quat_mul(a, b):
    w1, x1, y1, z1 = np.moveaxis(a, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(b, -1, 0)
    return np.stack([w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                     w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                     w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                     w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2], axis=-1)


def _wxyz(rotation: Rotation):
    q = np.atleast_2d(rotation.as_quat())  # xyzw
    return np.concatenate([q[:, 3:4], q[:, :3]], axis=1)


def _as_xyzw(q):
    q = np.atleast_2d(q)
    return np.concatenate([q[:, 1:4], q[:, 0:1]], axis=1)


@dataclass
class Skeleton:
    """Joint hierarchy with rest local transforms, topologically sorted
    (parent index < child index, exactly one root with parent -1)."""

    names: list
    parents: np.ndarray
    rest_rotations: np.ndarray
    rest_translations: np.ndarray

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=np.int64).reshape(-1)
        self.rest_rotations = np.asarray(self.rest_rotations,
                                         dtype=np.float64).reshape(-1, 4)
        self.rest_translations = np.asarray(self.rest_translations,
                                            dtype=np.float64).reshape(-1, 3)
        n = len(self.names)
        if not (len(self.parents) == len(self.rest_rotations)
                == len(self.rest_translations) == n):
            raise ParameterError("inconsistent joint arrays")
        if (self.parents == -1).sum() != 1 or self.parents[0] != -1:
            raise ParameterError("skeleton needs exactly one root, first")
        if (self.parents[1:] >= np.arange(1, n)).any():
            raise ParameterError("joints must be topologically sorted")
        if len(set(self.names)) != n:
            raise ParameterError("joint names must be unique")

    @property
    def n_joints(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise ParameterError(f"unknown joint '{name}'") from None

    def bones(self):
        """(parent, child) pairs, one per non-root joint."""
        return [(int(self.parents[j]), j) for j in range(1, self.n_joints)]

    def local_matrices(self, rotations=None, root_translation=None):
        rot = self.rest_rotations
        if rotations is not None:
            rot = _quat_mul(self.rest_rotations, np.asarray(rotations))
        mats = np.tile(np.eye(4), (self.n_joints, 1, 1))
        mats[:, :3, :3] = _quat_to_matrix(rot)
        mats[:, :3, 3] = self.rest_translations
        if root_translation is not None:
            mats[0, :3, 3] = (self.rest_translations[0]
                              + np.asarray(root_translation, dtype=np.float64))
        return mats

    def global_matrices(self, rotations=None, root_translation=None):
        local = self.local_matrices(rotations, root_translation)
        out = np.empty_like(local)
        out[0] = local[0]
        for j in range(1, self.n_joints):
            out[j] = out[self.parents[j]] @ local[j]
        return out

    def rest_positions(self):
        return self.global_matrices()[:, :3, 3]

    def root_height(self):
        """Rest height of the root above the lowest joint; 1.0 when flat."""
        pos = self.rest_positions()
        h = pos[0, 1] - pos[:, 1].min()
        return float(h) if h > 0 else 1.0

    def to_json(self):
        return json.dumps({
            "names": list(self.names),
            "parents": self.parents.tolist(),
            "rest_rotations": self.rest_rotations.tolist(),
            "rest_translations": self.rest_translations.tolist(),
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(doc["names"], doc["parents"], doc["rest_rotations"],
                   doc["rest_translations"])


@dataclass
class MotionClip:
    """Per-frame local joint rotations plus root translation."""

    frame_rate: float
    rotations: np.ndarray          # (frames, joints, 4) wxyz
    root_translations: np.ndarray  # (frames, 3)

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        self.root_translations = np.asarray(self.root_translations,
                                            dtype=np.float64).reshape(-1, 3)
        if self.rotations.ndim != 3 or self.rotations.shape[2] != 4:
            raise ParameterError("rotations must be (frames, joints, 4)")
        if len(self.root_translations) != len(self.rotations):
            raise ParameterError("translation count != frame count")
        if self.frame_rate <= 0:
            raise ParameterError("frame rate must be positive")
        norms = np.linalg.norm(self.rotations, axis=2)
        if self.rotations.size and np.abs(norms - 1.0).max() > 1e-6:
            raise ParameterError("rotations must be unit quaternions")

    @property
    def n_frames(self):
        return len(self.rotations)


@dataclass
class KeypointSet:
    """The eight front-view pixel keypoints driving the auto-rig."""

    image_size: tuple
    points: dict

    def __post_init__(self):
        w, h = self.image_size
        missing = [n for n in KEYPOINT_NAMES if n not in self.points]
        if missing:
            raise KeypointError(f"missing keypoints: {', '.join(missing)}")
        self.points = {n: np.asarray(self.points[n], dtype=np.float64).reshape(2)
                       for n in KEYPOINT_NAMES}
        for n, (x, y) in self.points.items():
            if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                raise KeypointError(f"keypoint '{n}' outside the image")

    def to_json(self):
        return json.dumps({
            "image_size": [int(self.image_size[0]), int(self.image_size[1])],
            "keypoints": {n: [float(p[0]), float(p[1])]
                          for n, p in self.points.items()},
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(tuple(doc["image_size"]), doc["keypoints"])


# ---------------------------------------------------------------------------
# embedding

_SHOULDER_SPINE_FRACTION = 0.85
_SHOULDER_PULL = 0.25
_HIP_PULL = 0.2

JOINT_NAMES = ("root", "spine_mid", "chin",
               "left_shoulder", "left_elbow", "left_wrist",
               "right_shoulder", "right_elbow", "right_wrist",
               "left_hip", "left_knee", "left_ankle",
               "right_hip", "right_knee", "right_ankle")
_JOINT_PARENTS = (-1, 0, 1, 1, 3, 4, 1, 6, 7, 0, 9, 10, 0, 12, 13)


def _silhouette_bottom(px, py, column, start_window=2.0):
    window = start_window
    for _ in range(8):
        near = np.abs(px - column) <= window
        if near.any():
            return py[near].max()
        window *= 2.0
    return py.max()


def embed_skeleton(mesh: TriMesh, keypoints: KeypointSet,
                   proj: FrontProjection) -> Skeleton:
    """Build the fixed humanoid topology from the eight keypoints.

    Chains: root(groin) -> spine_mid -> chin; spine_mid -> shoulders ->
    elbows -> wrists; root -> hips -> knees -> ankles. Shoulders sit at 85%
    of the groin-to-chin spine, pulled a fixed fraction toward each elbow;
    hips sit a fixed fraction from groin toward each knee; ankles extrapolate
    to the silhouette bottom below each knee. Every joint's depth is the
    mid-depth of the view ray through its pixel.
    """
    kp = keypoints.points
    groin, chin = kp["groin"], kp["chin"]
    spine = 0.5 * (groin + chin)
    sh_base = groin + _SHOULDER_SPINE_FRACTION * (chin - groin)
    pixels = {"root": groin, "spine_mid": spine, "chin": chin}
    for side in ("left", "right"):
        elbow = kp[f"{side}_elbow"]
        knee = kp[f"{side}_knee"]
        pixels[f"{side}_shoulder"] = sh_base + _SHOULDER_PULL * (elbow - sh_base)
        pixels[f"{side}_elbow"] = elbow
        pixels[f"{side}_wrist"] = kp[f"{side}_wrist"]
        pixels[f"{side}_hip"] = groin + _HIP_PULL * (knee - groin)
        pixels[f"{side}_knee"] = knee

    all_px, all_py = proj.to_pixel(mesh.vertices[:, 0], mesh.vertices[:, 1])
    for side in ("left", "right"):
        knee = pixels[f"{side}_knee"]
        bottom = _silhouette_bottom(all_px, all_py, knee[0])
        pixels[f"{side}_ankle"] = np.array([knee[0], bottom])

    positions = np.empty((len(JOINT_NAMES), 3))
    for j, name in enumerate(JOINT_NAMES):
        x, y = proj.to_model(pixels[name][0], pixels[name][1])
        counts, zmin, zmax = view_ray_intervals(mesh, [x], [y])
        if counts[0] == 0:
            if name in ("root", "chin") or name.endswith(("elbow", "wrist", "knee")):
                raise KeypointError(f"view ray through keypoint '{name}' "
                                    "misses the mesh")
            # synthesized joints may graze the silhouette: use nearby vertices
            near = np.hypot(all_px - pixels[name][0],
                            all_py - pixels[name][1]) <= 4.0
            z = mesh.vertices[near, 2].mean() if near.any() else 0.0
        else:
            z = (zmin[0] + zmax[0]) / 2.0
        positions[j] = (x, y, z)

    parents = np.array(_JOINT_PARENTS)
    locals_ = positions.copy()
    locals_[1:] -= positions[parents[1:]]
    rots = np.tile(_IDENTITY_QUAT, (len(JOINT_NAMES), 1))
    return Skeleton(list(JOINT_NAMES), parents, rots, locals_)


# ---------------------------------------------------------------------------
# skin weights

@dataclass
class SkinWeights:
    """Per-vertex sparse bone weights: (V, K) bone indices and weights,
    non-negative, rows summing to 1, K <= 4."""

    bone_indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.bone_indices = np.asarray(self.bone_indices, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.bone_indices.shape != self.weights.shape or \
                self.bone_indices.ndim != 2:
            raise ParameterError("indices and weights must share (V, K) shape")
        if self.bone_indices.shape[1] > 4:
            raise ParameterError("at most 4 bones per vertex")
        if self.weights.size:
            if self.weights.min() < 0:
                raise ParameterError("weights must be non-negative")
            if np.abs(self.weights.sum(axis=1) - 1.0).max() > 1e-6:
                raise ParameterError("weights must sum to 1 per vertex")

    def save(self, path):
        with open(path, "wb") as f:
            f.write(b"SKW1")
            v, k = self.bone_indices.shape
            f.write(np.array([v, k], dtype="<u4").tobytes())
            f.write(self.bone_indices.astype("<i4").tobytes())
            f.write(self.weights.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            blob = f.read()
        if blob[:4] != b"SKW1":
            raise ToolkitError(f"{path}: not a skin-weights file")
        v, k = np.frombuffer(blob[4:12], dtype="<u4")
        idx = np.frombuffer(blob[12:12 + 4 * v * k], dtype="<i4")
        wgt = np.frombuffer(blob[12 + 4 * v * k:], dtype="<f8", count=v * k)
        return cls(idx.reshape(v, k).astype(np.int64),
                   wgt.reshape(v, k).astype(np.float64))


def _point_segment_distance(points, a, b):
    ab = b - a
    denom = np.dot(ab, ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def compute_skin_weights(mesh: TriMesh, skeleton: Skeleton, power: float = 4.0,
                         max_bones: int = 2) -> SkinWeights:
    """Inverse-distance-to-bone weights over the `max_bones` nearest bones."""
    if power <= 0:
        raise ParameterError("power must be positive")
    if max_bones < 1:
        raise ParameterError("max_bones must be >= 1")
    max_bones = min(max_bones, 4)
    bones = skeleton.bones()
    pos = skeleton.rest_positions()
    dist = np.stack([_point_segment_distance(mesh.vertices, pos[p], pos[c])
                     for p, c in bones], axis=1)
    k = min(max_bones, len(bones))
    nearest = np.argpartition(dist, k - 1, axis=1)[:, :k] if k < len(bones) \
        else np.tile(np.arange(len(bones)), (mesh.n_vertices, 1))
    nearest.sort(axis=1)
    picked = np.take_along_axis(dist, nearest, axis=1)
    raw = 1.0 / np.power(picked + 1e-6, power)
    return SkinWeights(nearest, raw / raw.sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# BVH

_CHANNEL_AXES = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}
_POSITION_CHANNELS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}


class _Tokens:
    def __init__(self, text):
        self.items = []
        for ln, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.items.append((tok, ln))
        self.pos = 0

    def peek(self):
        return self.items[self.pos][0] if self.pos < len(self.items) else None

    @property
    def line(self):
        if self.pos < len(self.items):
            return self.items[self.pos][1]
        return self.items[-1][1] if self.items else 0

    def next(self, expect=None):
        if self.pos >= len(self.items):
            raise BvhParseError("unexpected end of file", self.line)
        tok, ln = self.items[self.pos]
        self.pos += 1
        if expect is not None and tok != expect:
            raise BvhParseError(f"expected '{expect}', got '{tok}'", ln)
        return tok

    def number(self):
        tok = self.next()
        try:
            return float(tok)
        except ValueError:
            raise BvhParseError(f"expected a number, got '{tok}'",
                                self.items[self.pos - 1][1]) from None


def parse_bvh(text):
    """Parse BVH text into (Skeleton, MotionClip).

    End Sites are consumed but not kept as joints; position channels on
    non-root joints are parsed and ignored. Euler rotation channels convert
    to quaternions in the file's channel order (intrinsic rotations).
    """
    toks = _Tokens(text)
    toks.next("HIERARCHY")
    names, parents, offsets, channels = [], [], [], []

    def parse_joint(parent, kind):
        toks.next(kind)
        name = toks.next()
        idx = len(names)
        names.append(name)
        parents.append(parent)
        toks.next("{")
        toks.next("OFFSET")
        offsets.append([toks.number(), toks.number(), toks.number()])
        toks.next("CHANNELS")
        n_ch = int(toks.number())
        chs = []
        for _ in range(n_ch):
            ch = toks.next()
            if ch not in _CHANNEL_AXES and ch not in _POSITION_CHANNELS:
                raise BvhParseError(f"unknown channel name '{ch}'", toks.line)
            chs.append(ch)
        channels.append(chs)
        while toks.peek() in ("JOINT", "End"):
            if toks.peek() == "JOINT":
                parse_joint(idx, "JOINT")
            else:
                toks.next("End")
                toks.next("Site")
                toks.next("{")
                toks.next("OFFSET")
                for _ in range(3):
                    toks.number()
                toks.next("}")
        toks.next("}")

    if toks.peek() != "ROOT":
        raise BvhParseError("expected ROOT after HIERARCHY", toks.line)
    parse_joint(-1, "ROOT")

    toks.next("MOTION")
    toks.next("Frames:")
    n_frames = int(toks.number())
    tok = toks.next("Frame")
    tok = toks.next()
    if tok != "Time:":
        raise BvhParseError(f"expected 'Time:', got '{tok}'", toks.line)
    frame_time = toks.number()
    if frame_time <= 0:
        raise BvhParseError("frame time must be positive", toks.line)

    per_joint = [len(c) for c in channels]
    row_len = sum(per_joint)
    remaining = len(toks.items) - toks.pos
    if remaining != n_frames * row_len:
        raise BvhParseError(
            f"declared {n_frames} frames x {row_len} channels = "
            f"{n_frames * row_len} values, found {remaining}", toks.line)

    n_joints = len(names)
    rotations = np.tile(_IDENTITY_QUAT, (n_frames, n_joints, 1))
    root_trans = np.zeros((n_frames, 3))
    for fr in range(n_frames):
        for j in range(n_joints):
            vals = [toks.number() for _ in range(per_joint[j])]
            order = ""
            angles = []
            for ch, val in zip(channels[j], vals):
                if ch in _POSITION_CHANNELS:
                    if j == 0:
                        root_trans[fr, _POSITION_CHANNELS[ch]] = val
                else:
                    order += _CHANNEL_AXES[ch]
                    angles.append(val)
            if order:
                rot = Rotation.from_euler(order, angles, degrees=True)
                rotations[fr, j] = _wxyz(rot)[0]

    skeleton = Skeleton(names, np.array(parents),
                        np.tile(_IDENTITY_QUAT, (n_joints, 1)),
                        np.array(offsets))
    clip = MotionClip(1.0 / frame_time, rotations, root_trans)
    return skeleton, clip


def serialize_bvh(skeleton: Skeleton, motion: MotionClip) -> str:
    """Emit BVH text: root carries position+ZXY rotation channels, other
    joints ZXY rotations; leaves get zero end sites. Non-identity rest
    rotations are folded into each frame."""
    if motion.rotations.shape[1] != skeleton.n_joints:
        raise ParameterError("motion joint count != skeleton joint count")
    children = [[] for _ in range(skeleton.n_joints)]
    for j in range(1, skeleton.n_joints):
        children[skeleton.parents[j]].append(j)

    lines = ["HIERARCHY"]

    def emit(j, indent, kind):
        pad = "  " * indent
        lines.append(f"{pad}{kind} {skeleton.names[j]}")
        lines.append(f"{pad}{{")
        ox, oy, oz = skeleton.rest_translations[j]
        lines.append(f"{pad}  OFFSET {ox:.6f} {oy:.6f} {oz:.6f}")
        if j == 0:
            lines.append(f"{pad}  CHANNELS 6 Xposition Yposition Zposition "
                         "Zrotation Xrotation Yrotation")
        else:
            lines.append(f"{pad}  CHANNELS 3 Zrotation Xrotation Yrotation")
        if children[j]:
            for ch in children[j]:
                emit(ch, indent + 1, "JOINT")
        else:
            lines.append(f"{pad}  End Site")
            lines.append(f"{pad}  {{")
            lines.append(f"{pad}    OFFSET 0.000000 0.000000 0.000000")
            lines.append(f"{pad}  }}")
        lines.append(f"{pad}}}")

    emit(0, 0, "ROOT")
    lines.append("MOTION")
    lines.append(f"Frames: {motion.n_frames}")
    lines.append(f"Frame Time: {1.0 / motion.frame_rate:.8f}")

    folded = _quat_mul(np.broadcast_to(skeleton.rest_rotations,
                                       motion.rotations.shape),
                       motion.rotations)
    for fr in range(motion.n_frames):
        row = [f"{v:.6f}" for v in motion.root_translations[fr]]
        eulers = Rotation.from_quat(_as_xyzw(folded[fr])).as_euler("ZXY",
                                                                   degrees=True)
        for j in range(skeleton.n_joints):
            row += [f"{a:.6f}" for a in eulers[j]]
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# retarget / skinning

def retarget(motion: MotionClip, source: Skeleton, target: Skeleton,
             name_map: dict) -> MotionClip:
    """Copy mapped joints' local rotations; unmapped target joints hold their
    rest rotation. Root translation scales by the ratio of rest root
    heights."""
    for t_name, s_name in name_map.items():
        target.index(t_name)
        if s_name is not None:
            source.index(s_name)
    rotations = np.tile(_IDENTITY_QUAT,
                        (motion.n_frames, target.n_joints, 1))
    for j, name in enumerate(target.names):
        s_name = name_map.get(name)
        if s_name is None:
            continue
        rotations[:, j] = motion.rotations[:, source.index(s_name)]
    scale = target.root_height() / source.root_height()
    return MotionClip(motion.frame_rate, rotations,
                      motion.root_translations * scale)


def apply_pose_lbs(mesh: TriMesh, skeleton: Skeleton, weights: SkinWeights,
                   rotations, root_translation=(0.0, 0.0, 0.0)) -> TriMesh:
    """Linear blend skinning: v' = sum_k w_k (G_k B_k^-1) v with G/B the
    posed/rest global transforms of each bone's parent joint."""
    bones = skeleton.bones()
    if len(weights.bone_indices) != mesh.n_vertices:
        raise ParameterError("weights are not per-vertex for this mesh")
    if weights.bone_indices.size and weights.bone_indices.max() >= len(bones):
        raise ParameterError("bone index out of range")
    rest = skeleton.global_matrices()
    posed = skeleton.global_matrices(rotations, root_translation)
    drivers = np.array([p for p, _ in bones])
    bone_mats = posed[drivers] @ np.linalg.inv(rest[drivers])

    out = np.zeros_like(mesh.vertices)
    for k in range(weights.bone_indices.shape[1]):
        mats = bone_mats[weights.bone_indices[:, k]]
        moved = np.einsum("vij,vj->vi", mats[:, :3, :3], mesh.vertices) \
            + mats[:, :3, 3]
        out += weights.weights[:, k:k + 1] * moved
    return mesh.with_vertices(out)
