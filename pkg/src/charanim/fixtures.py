"""Synthetic fixture geometry: primitive meshes and the capsule biped used by
the bundled end-to-end example and the test suite."""

import numpy as np

from .mesh import TriMesh
from .raster import BinaryMask, RasterImage, erode


def icosphere(subdivisions: int = 2, radius: float = 1.0,
              center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Subdivided icosahedron projected onto a sphere (outward oriented)."""
    t = (1.0 + 5.0 ** 0.5) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        cache = {}
        verts_list = list(verts)

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts_list[i] + verts_list[j]
                m /= np.linalg.norm(m)
                cache[key] = len(verts_list)
                verts_list.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)
    return TriMesh(verts * radius + np.asarray(center, dtype=np.float64), faces)


def box_mesh(half_extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned box, 12 outward-oriented triangles."""
    hx, hy, hz = half_extents
    corners = np.array([[sx * hx, sy * hy, sz * hz]
                        for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                       dtype=np.float64)
    # corner index bits: x<<2 | y<<1 | z
    quads = [
        (0, 1, 3, 2, (-1, 0, 0)), (4, 6, 7, 5, (1, 0, 0)),
        (0, 4, 5, 1, (0, -1, 0)), (2, 3, 7, 6, (0, 1, 0)),
        (0, 2, 6, 4, (0, 0, -1)), (1, 5, 7, 3, (0, 0, 1)),
    ]
    faces = []
    for a, b, c, d, n in quads:
        # orient each quad so its normal matches the face direction
        tri = np.array([a, b, c])
        v = corners[tri]
        if np.dot(np.cross(v[1] - v[0], v[2] - v[0]), n) < 0:
            a, b, c, d = a, d, c, b
        faces += [[a, b, c], [a, c, d]]
    return TriMesh(corners + np.asarray(center, dtype=np.float64),
                   np.array(faces, dtype=np.int64))


def grid_mesh(nx: int = 12, ny: int = 12, spacing: float = 1.0) -> TriMesh:
    """Planar triangulated grid in the xy plane (z = 0)."""
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    verts = np.stack([xs.ravel() * spacing, ys.ravel() * spacing,
                      np.zeros(nx * ny)], axis=1)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            faces += [[a, b, b + 1], [a, b + 1, a + 1]]
    return TriMesh(verts, np.array(faces, dtype=np.int64))


def tube_mesh(p0, p1, radius, segments: int = 16, rings: int = 8,
              radius_z=None) -> TriMesh:
    """Closed capsule-like tube from p0 to p1 with hemispherical caps.

    radius is the cross-section half-width in the plane orthogonal to the
    axis; radius_z optionally squashes/stretches the component of the section
    along world z (used to fake inflated side profiles).
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    length = np.linalg.norm(axis)
    axis = axis / length
    # orthonormal frame; u chosen to be as world-z-aligned as possible so the
    # radius_z squash is predictable
    ref = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(ref, axis)) > 0.9:
        ref = np.array([1.0, 0.0, 0.0])
    v = np.cross(axis, ref)
    v /= np.linalg.norm(v)
    u = np.cross(v, axis)
    ru = radius if radius_z is None else radius_z
    ang = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    ring_dirs = np.outer(np.cos(ang), u * ru) + np.outer(np.sin(ang), v * radius)

    verts = [p0 - axis * (ru if radius_z is not None else radius)]
    rows = []
    # cap 0 (partial sphere), subdivided cylinder body, cap 1
    cap_t = np.linspace(-np.pi / 2, 0.0, rings // 2 + 1)[1:]
    for t in cap_t:
        centre = p0 + axis * (np.sin(t) * (ru if radius_z is not None else radius))
        row = centre + ring_dirs * np.cos(t)
        rows.append(row)
    n_body = max(1, int(round(length / (2.0 * radius))))
    for s in np.linspace(0.0, 1.0, n_body + 1)[1:]:
        rows.append(p0 + axis * (length * s) + ring_dirs)
    for t in cap_t[::-1]:
        centre = p1 - axis * (np.sin(t) * (ru if radius_z is not None else radius))
        rows.append(centre + ring_dirs * np.cos(t))
    apex1 = p1 + axis * (ru if radius_z is not None else radius)

    for row in rows:
        verts.extend(row)
    verts.append(apex1)
    verts = np.array(verts)
    n_rows = len(rows)
    faces = []
    for s in range(segments):
        s2 = (s + 1) % segments
        faces.append([0, 1 + s2, 1 + s])
    for r in range(n_rows - 1):
        base = 1 + r * segments
        nxt = base + segments
        for s in range(segments):
            s2 = (s + 1) % segments
            faces.append([base + s, base + s2, nxt + s2])
            faces.append([base + s, nxt + s2, nxt + s])
    top = 1 + n_rows * segments
    base = 1 + (n_rows - 1) * segments
    for s in range(segments):
        s2 = (s + 1) % segments
        faces.append([top, base + s, base + s2])
    mesh = TriMesh(verts, np.array(faces, dtype=np.int64))
    # make sure the winding is outward
    c = mesh.vertices.mean(axis=0)
    fn = mesh.face_normals(normalized=False)
    centers = mesh.vertices[mesh.faces].mean(axis=1)
    if np.sum(np.einsum("ij,ij->i", fn, centers - c)) < 0:
        mesh = TriMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def noisy_sphere(subdivisions: int = 3, radius: float = 1.0,
                 noise: float = 0.05, seed: int = 0) -> TriMesh:
    """Icosphere with seeded radial perturbation (for smoothing tests)."""
    base = icosphere(subdivisions, radius)
    rng = np.random.default_rng(seed)
    r = np.linalg.norm(base.vertices, axis=1, keepdims=True)
    bumped = base.vertices / r * (r + rng.uniform(-noise, noise, r.shape))
    return TriMesh(bumped, base.faces)


def merge_meshes(parts, colors=None) -> TriMesh:
    """Concatenate meshes into one triangle soup (optionally one flat color
    per part)."""
    verts, faces, cols = [], [], []
    offset = 0
    for k, part in enumerate(parts):
        verts.append(part.vertices)
        faces.append(part.faces + offset)
        if colors is not None:
            cols.append(np.tile(colors[k], (part.n_vertices, 1)))
        offset += part.n_vertices
    return TriMesh(np.concatenate(verts), np.concatenate(faces),
                   np.concatenate(cols) if colors is not None else None)


# ---------------------------------------------------------------------------
# the stick-figure biped
#
# Model units are roughly drawing pixels (the character stands ~430 units
# tall and renders at 512^2 with a small margin). Limb cross-sections are
# ~5 units so the drawn half-width sits under the move threshold, while the
# z radius is inflated to mimic an over-thick side profile. The torso, neck
# and head stay round.

_BIPED = {
    "torso": ((0.0, -80.0, 0.0), (0.0, 90.0, 0.0), 45.0),
    "neck": ((0.0, 80.0, 0.0), (0.0, 165.0, 0.0), 9.0),
    "head_center": (0.0, 195.0, 0.0),
    "head_radius": 38.0,
    "arm_y": 70.0,
    "arm_x": (35.0, 150.0),
    "arm_radius": 5.0,
    "leg_top": (20.0, -70.0),
    "leg_bottom": (32.0, -185.0),
    "leg_radius": 5.0,
}

_PART_COLORS = {
    "torso": (0.25, 0.45, 0.8),
    "neck": (0.9, 0.75, 0.6),
    "head": (0.9, 0.75, 0.6),
    "arm": (0.85, 0.35, 0.3),
    "leg": (0.3, 0.55, 0.3),
}


def capsule_biped(inflate: float = 2.5, limb_radius: float = None) -> TriMesh:
    """Stick-figure biped as a colored triangle soup, facing +z.

    `inflate` multiplies the limbs' z radius only, so the front view stays
    thin while the side view is fat (the situation thinning corrects).
    `limb_radius` overrides the arm/leg cross-section (model units); small
    test grids need chunkier limbs to stay resolvable.
    """
    b = dict(_BIPED)
    if limb_radius is not None:
        b["arm_radius"] = limb_radius
        b["leg_radius"] = limb_radius
    parts, colors = [], []

    parts.append(tube_mesh(b["torso"][0], b["torso"][1], b["torso"][2],
                           segments=20, rings=10))
    colors.append(_PART_COLORS["torso"])
    parts.append(tube_mesh(b["neck"][0], b["neck"][1], b["neck"][2],
                           segments=12, rings=6))
    colors.append(_PART_COLORS["neck"])
    parts.append(icosphere(2, b["head_radius"], b["head_center"]))
    colors.append(_PART_COLORS["head"])
    for side in (-1.0, 1.0):
        parts.append(tube_mesh((side * b["arm_x"][0], b["arm_y"], 0.0),
                               (side * b["arm_x"][1], b["arm_y"], 0.0),
                               b["arm_radius"], segments=14, rings=6,
                               radius_z=b["arm_radius"] * inflate))
        colors.append(_PART_COLORS["arm"])
        parts.append(tube_mesh((side * b["leg_top"][0], b["leg_top"][1], 0.0),
                               (side * b["leg_bottom"][0], b["leg_bottom"][1], 0.0),
                               b["leg_radius"], segments=14, rings=6,
                               radius_z=b["leg_radius"] * inflate))
        colors.append(_PART_COLORS["leg"])
    return merge_meshes(parts, colors)


def biped_bundle(resolution: int = 512, inflate: float = 2.5,
                 outline_px: float = 2.5, limb_radius: float = None):
    """Render-derived inputs for the biped: drawing with dark contour
    strokes, foreground mask, front projection, camera and pixel keypoints."""
    from .render import Camera, rasterize

    soup = capsule_biped(inflate, limb_radius)
    camera = Camera("front", resolution, margin=0.05).fit_to(soup)
    buffers = rasterize(soup, camera)
    mask = buffers.mask
    drawing = buffers.color.data.copy()
    drawing[~mask.bits] = 1.0  # white paper background
    ring = mask.bits & ~erode(mask, outline_px).bits
    drawing[ring] = (0.08, 0.06, 0.1)

    proj = camera.front_projection()
    b = _BIPED

    def px(x, y):
        X, Y = proj.to_pixel(x, y)
        return [float(X), float(Y)]

    keypoints = {
        "chin": px(0.0, 162.0),
        "groin": px(0.0, -70.0),
        "left_elbow": px(-95.0, b["arm_y"]),
        "right_elbow": px(95.0, b["arm_y"]),
        "left_wrist": px(-145.0, b["arm_y"]),
        "right_wrist": px(145.0, b["arm_y"]),
        "left_knee": px(-26.0, -128.0),
        "right_knee": px(26.0, -128.0),
    }
    return {
        "soup": soup,
        "camera": camera,
        "projection": proj,
        "drawing": RasterImage(drawing),
        "mask": mask,
        "keypoints": keypoints,
        "outline": BinaryMask(ring),
    }


def wave_motion(frames: int = 30, frame_rate: float = 30.0):
    """Source skeleton and waving clip in the biped's proportions."""
    from .rig import MotionClip, Skeleton, _wxyz
    from scipy.spatial.transform import Rotation

    b = _BIPED
    ay = b["arm_y"]
    joints = [
        ("Hips", -1, (0.0, -70.0, 0.0)),
        ("Spine", 0, (0.0, 90.0, 0.0)),
        ("Head", 1, (0.0, 142.0, 0.0)),
        ("LeftArm", 1, (-35.0, 50.0, 0.0)),
        ("LeftForeArm", 3, (-60.0, 0.0, 0.0)),
        ("LeftHand", 4, (-50.0, 0.0, 0.0)),
        ("RightArm", 1, (35.0, 50.0, 0.0)),
        ("RightForeArm", 6, (60.0, 0.0, 0.0)),
        ("RightHand", 7, (50.0, 0.0, 0.0)),
        ("LeftUpLeg", 0, (-20.0, 0.0, 0.0)),
        ("LeftLeg", 9, (-6.0, -58.0, 0.0)),
        ("LeftFoot", 10, (-6.0, -57.0, 0.0)),
        ("RightUpLeg", 0, (20.0, 0.0, 0.0)),
        ("RightLeg", 12, (6.0, -58.0, 0.0)),
        ("RightFoot", 13, (6.0, -57.0, 0.0)),
    ]
    names = [j[0] for j in joints]
    parents = [j[1] for j in joints]
    offsets = [j[2] for j in joints]
    skel = Skeleton(names, parents, np.tile([1.0, 0, 0, 0], (len(names), 1)),
                    offsets)

    rot = np.tile([1.0, 0.0, 0.0, 0.0], (frames, len(names), 1))
    trans = np.zeros((frames, 3))
    phase = 2 * np.pi * np.arange(frames) / frames
    arm_idx = names.index("RightArm")
    fore_idx = names.index("RightForeArm")
    spine_idx = names.index("Spine")
    for f in range(frames):
        wave = np.sin(phase[f])
        rot[f, arm_idx] = _wxyz(Rotation.from_euler("z", 55 + 12 * wave,
                                                    degrees=True))[0]
        rot[f, fore_idx] = _wxyz(Rotation.from_euler("z", 20 * wave,
                                                     degrees=True))[0]
        rot[f, spine_idx] = _wxyz(Rotation.from_euler("z", 4 * wave,
                                                      degrees=True))[0]
        trans[f, 1] = 2.0 * np.sin(2 * phase[f])
    clip = MotionClip(frame_rate, rot, trans)
    return skel, clip


BIPED_NAME_MAP = {
    "root": "Hips", "spine_mid": "Spine", "chin": "Head",
    "left_shoulder": "LeftArm", "left_elbow": "LeftForeArm",
    "left_wrist": "LeftHand",
    "right_shoulder": "RightArm", "right_elbow": "RightForeArm",
    "right_wrist": "RightHand",
    "left_hip": "LeftUpLeg", "left_knee": "LeftLeg", "left_ankle": "LeftFoot",
    "right_hip": "RightUpLeg", "right_knee": "RightLeg",
    "right_ankle": "RightFoot",
}


def write_biped_fixture(out_dir, resolution: int = 512, inflate: float = 2.5,
                        frames: int = 30, limb_radius: float = None):
    """Write the bundled fixture to disk: drawing, mask, input mesh,
    keypoints, motion, name map and a ready-to-run pipeline config. Returns
    the path map."""
    import json
    import os

    from . import pngio
    from .mesh import save_mesh
    from .rig import KeypointSet, serialize_bvh

    os.makedirs(out_dir, exist_ok=True)
    bundle = biped_bundle(resolution, inflate, limb_radius=limb_radius)
    paths = {
        "drawing": os.path.join(out_dir, "drawing.png"),
        "fg_mask": os.path.join(out_dir, "fg_mask.png"),
        "mesh": os.path.join(out_dir, "input_mesh.ply"),
        "keypoints": os.path.join(out_dir, "keypoints.json"),
        "motion": os.path.join(out_dir, "motion.bvh"),
        "name_map": os.path.join(out_dir, "name_map.json"),
        "config": os.path.join(out_dir, "config.json"),
    }
    pngio.write_image(paths["drawing"], bundle["drawing"])
    pngio.write_mask(paths["fg_mask"], bundle["mask"])
    save_mesh(paths["mesh"], bundle["soup"])
    kp = KeypointSet((resolution, resolution), bundle["keypoints"])
    with open(paths["keypoints"], "w") as f:
        f.write(kp.to_json())
    skel, clip = wave_motion(frames)
    with open(paths["motion"], "w") as f:
        f.write(serialize_bvh(skel, clip))
    with open(paths["name_map"], "w") as f:
        json.dump(BIPED_NAME_MAP, f, indent=1, sort_keys=True)
    config = {
        "drawing": paths["drawing"],
        "fg_mask": paths["fg_mask"],
        "mesh": paths["mesh"],
        "keypoints": paths["keypoints"],
        "motion": paths["motion"],
        "name_map": paths["name_map"],
        "out_dir": os.path.join(out_dir, "out"),
    }
    with open(paths["config"], "w") as f:
        json.dump(config, f, indent=1, sort_keys=True)
    return paths
