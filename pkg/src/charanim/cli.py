"""Command-line driver: one subcommand per pipeline stage plus `pipeline`
(run everything from a JSON config, writing a deterministic manifest),
`validate` (dry-run config checks) and `make-fixture` (bundled synthetic
inputs).

The manifest records every stage's parameters and input/output content
hashes; wall-clock timings go to a separate timings.json so reruns with
identical inputs produce byte-identical manifests.
"""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import pngio
from .deform import (HandleSet, biharmonic_deform, laplacian_smooth,
                     region_away_from_silhouette, select_handles,
                     thinning_displacements)
from .errors import ParameterError, StageError, ToolkitError
from .inpaint import (compose_inpaint_mask, composite_foreground,
                      fallback_contour_mask, fast_marching_inpaint)
from .mesh import load_mesh, save_mesh
from .raster import BinaryMask
from .render import Camera, attach_rest_coordinates, guidance_channels, rasterize
from .rig import (KeypointSet, MotionClip, SkinWeights, Skeleton,
                  apply_pose_lbs, compute_skin_weights, embed_skeleton,
                  parse_bvh, retarget, serialize_bvh)
from .texture import backproject_colors, diffuse_hole_colors
from .volume import FrontProjection, SdfGrid, cut_sdf, marching_cubes, mesh_to_sdf

DEFAULTS = {
    "inpaint": {"radius": 5, "band": 4, "darkness": 0.3},
    "volume": {"dims": [128, 128, 128], "padding": 3},
    "thin": {"theta1": 11.0, "theta2": 6.0, "guard": 5.0, "snap": 2.0},
    "smooth": {"iterations": 10, "strength": 1.0},
    "rig": {"power": 4.0, "max_bones": 2},
    "render": {"resolution": 512, "margin": 0.05,
               "canny": {"sigma": 1.4, "low": 0.1, "high": 0.2}},
}


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fit_projection(mesh, mask):
    lo, hi = mesh.bounds()
    return FrontProjection.fit(lo[:2], hi[:2], mask)


def _solid_footprint_projection(grid, mask):
    """Projection aligning the grid's negative-region xy extent with the
    mask's foreground box (used when only the .sdf file is at hand)."""
    neg = grid.values.min(axis=2) <= 0.0
    if not neg.any():
        raise ParameterError("grid contains no interior to align with the mask")
    xy = grid.voxel_centers_xy()
    xs = xy[:, :, 0][neg]
    ys = xy[:, :, 1][neg]
    return FrontProjection.fit((xs.min(), ys.min()), (xs.max(), ys.max()), mask)


# ---------------------------------------------------------------------------
# stage implementations (shared by subcommands and `pipeline`)

def stage_inpaint(drawing_path, fg_mask_path, out_path, contour_mask_path=None,
                  radius=5, band=4, darkness=0.3):
    image = pngio.read_image(drawing_path)
    fg = pngio.read_mask(fg_mask_path)
    if contour_mask_path:
        contour = pngio.read_mask(contour_mask_path)
    else:
        contour = fallback_contour_mask(image, fg, band=band, darkness=darkness)
    region = compose_inpaint_mask(contour, fg)
    filled = fast_marching_inpaint(image, region, radius=radius)
    pngio.write_image(out_path, composite_foreground(filled, image, fg))


def stage_mesh2sdf(mesh_path, out_path, dims=(128, 128, 128), padding=3):
    grid = mesh_to_sdf(load_mesh(mesh_path), dims=dims, padding=padding)
    grid.save(out_path)


def stage_cut(sdf_path, fg_mask_path, out_path):
    grid = SdfGrid.load(sdf_path)
    mask = pngio.read_mask(fg_mask_path)
    proj = _solid_footprint_projection(grid, mask)
    cut_sdf(grid, mask, proj).save(out_path)


def stage_extract(sdf_path, out_path, iso=0.0):
    mesh = marching_cubes(SdfGrid.load(sdf_path), iso=iso)
    save_mesh(out_path, mesh)


def stage_thin(mesh_path, fg_mask_path, out_path, theta1=11.0, theta2=6.0,
               guard=5.0, snap=2.0):
    mesh = load_mesh(mesh_path)
    mask = pngio.read_mask(fg_mask_path)
    proj = _fit_projection(mesh, mask)
    regions = select_handles(mesh, mask, proj, theta1, theta2, guard, snap)
    moving, disp, missed = thinning_displacements(
        mesh, regions.moving_vertices, regions.distance, proj)
    handles = HandleSet(regions.fixed_vertices, moving, disp)
    out = biharmonic_deform(mesh, handles)
    save_mesh(out_path, out)
    return {"fixed": int(len(regions.fixed_vertices)),
            "moving": int(len(moving)), "demoted": int(missed)}


def stage_smooth(mesh_path, out_path, iterations=10, strength=1.0,
                 fg_mask_path=None, keep_silhouette_px=None):
    mesh = load_mesh(mesh_path)
    region = None
    if fg_mask_path is not None and keep_silhouette_px is not None:
        mask = pngio.read_mask(fg_mask_path)
        region = region_away_from_silhouette(
            mesh, mask, _fit_projection(mesh, mask), keep_silhouette_px)
    out = laplacian_smooth(mesh, iterations=iterations, strength=strength,
                           region=region)
    save_mesh(out_path, out)


def stage_bake_color(mesh_path, front_path, out_path, back_path=None,
                     fg_mask_path=None):
    mesh = load_mesh(mesh_path)
    front = pngio.read_image(front_path)
    back = pngio.read_image(back_path) if back_path else front
    if fg_mask_path:
        proj = _fit_projection(mesh, pngio.read_mask(fg_mask_path))
    else:
        lo, hi = mesh.bounds()
        proj = FrontProjection.fit(
            lo[:2], hi[:2],
            BinaryMask(np.ones((front.height, front.width), dtype=bool)))
    colored, uncolored = backproject_colors(mesh, front, back, proj)
    full = diffuse_hole_colors(colored, uncolored)
    save_mesh(out_path, full)
    return {"uncolored": int(uncolored.size)}


def stage_rig(mesh_path, keypoints_path, fg_mask_path, skeleton_out,
              weights_out, power=4.0, max_bones=2):
    mesh = load_mesh(mesh_path)
    with open(keypoints_path) as f:
        keypoints = KeypointSet.from_json(f.read())
    proj = _fit_projection(mesh, pngio.read_mask(fg_mask_path))
    skeleton = embed_skeleton(mesh, keypoints, proj)
    with open(skeleton_out, "w") as f:
        f.write(skeleton.to_json())
    weights = compute_skin_weights(mesh, skeleton, power=power,
                                   max_bones=max_bones)
    weights.save(weights_out)


def stage_retarget(motion_path, skeleton_path, out_path, name_map_path=None):
    with open(motion_path) as f:
        source, clip = parse_bvh(f.read())
    with open(skeleton_path) as f:
        target = Skeleton.from_json(f.read())
    if name_map_path:
        with open(name_map_path) as f:
            name_map = json.load(f)
    else:
        name_map = {n: n for n in target.names if n in source.names}
    out = retarget(clip, source, target, name_map)
    with open(out_path, "w") as f:
        f.write(serialize_bvh(target, out))


def _reorder_clip(bvh_skel, clip, skeleton):
    """Align motion joint columns with the authoritative skeleton by name."""
    if bvh_skel.names == skeleton.names:
        return clip
    index = []
    for name in skeleton.names:
        if name not in bvh_skel.names:
            raise ParameterError(f"motion lacks joint '{name}'")
        index.append(bvh_skel.names.index(name))
    return MotionClip(clip.frame_rate, clip.rotations[:, index],
                      clip.root_translations)


def _parse_frames(spec_str, total):
    if spec_str is None:
        return list(range(total))
    if isinstance(spec_str, (list, tuple)):
        lo, hi = int(spec_str[0]), int(spec_str[1])
    else:
        lo, hi = (int(t) for t in str(spec_str).split(".."))
    if lo < 0 or hi >= total or lo > hi:
        raise ParameterError(f"frame range {lo}..{hi} outside 0..{total - 1}")
    return list(range(lo, hi + 1))


def stage_guidance(mesh_path, motion_path, out_dir, skeleton_path=None,
                   weights_path=None, fg_mask_path=None, frames=None,
                   resolution=512, margin=0.05, sigma=1.4, low=0.1, high=0.2,
                   power=4.0, max_bones=2):
    """Pose the rest mesh per frame and write F/G_mask/G_pos/G_edge/depth."""
    mesh = load_mesh(mesh_path)
    with open(motion_path) as f:
        bvh_skel, clip = parse_bvh(f.read())
    if skeleton_path:
        with open(skeleton_path) as f:
            skeleton = Skeleton.from_json(f.read())
        clip = _reorder_clip(bvh_skel, clip, skeleton)
    else:
        skeleton = bvh_skel
    if weights_path:
        weights = SkinWeights.load(weights_path)
    else:
        weights = compute_skin_weights(mesh, skeleton, power=power,
                                       max_bones=max_bones)

    if mesh.rest_coords is None:
        if fg_mask_path:
            proj = _fit_projection(mesh, pngio.read_mask(fg_mask_path))
        else:
            lo, hi = mesh.bounds()
            proj = FrontProjection.fit(
                lo[:2], hi[:2],
                BinaryMask(np.ones((resolution, resolution), dtype=bool)))
        mesh = attach_rest_coordinates(mesh, proj)

    frame_ids = _parse_frames(frames, clip.n_frames)
    posed = [apply_pose_lbs(mesh, skeleton, weights, clip.rotations[f],
                            clip.root_translations[f]) for f in frame_ids]
    lo = np.min([p.bounds()[0] for p in posed], axis=0)
    hi = np.max([p.bounds()[1] for p in posed], axis=0)
    camera = Camera("front", resolution, margin=margin).fitted(lo, hi)

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for f, pose in zip(frame_ids, posed):
        frame = guidance_channels(pose, camera, sigma=sigma, low=low, high=high)
        written += frame.save(out_dir, f)
    return written


def stage_render(mesh_path, out_path, view="front", resolution=512,
                 margin=0.05, yaw=0.0, pitch=0.0):
    mesh = load_mesh(mesh_path)
    camera = Camera(view, resolution, margin=margin, yaw=yaw,
                    pitch=pitch).fit_to(mesh)
    buffers = rasterize(mesh, camera)
    pngio.write_image(out_path, buffers.color)
    base, ext = os.path.splitext(out_path)
    pngio.write_mask(base + "_mask" + ext, buffers.mask)
    pngio.write_image(base + "_depth" + ext, buffers.normalized_depth())
    return [out_path, base + "_mask" + ext, base + "_depth" + ext]


# ---------------------------------------------------------------------------
# config / pipeline

def load_config(path, overrides=None):
    with open(path) as f:
        config = json.load(f)
    merged = json.loads(json.dumps(DEFAULTS))  # deep copy
    for key, value in config.items():
        if key in merged and isinstance(value, dict):
            for k2, v2 in value.items():
                if isinstance(v2, dict) and isinstance(merged[key].get(k2), dict):
                    merged[key][k2].update(v2)
                else:
                    merged[key][k2] = v2
        else:
            merged[key] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section = merged
        parts = key.split(".")
        for part in parts[:-1]:
            section = section.setdefault(part, {})
        section[parts[-1]] = value
    return merged


def validate_config(config):
    """Dry-run checks; returns a list of problem strings."""
    problems = []

    def need_file(key, required=True):
        path = config.get(key)
        if not path:
            if required:
                problems.append(f"missing required input '{key}'")
            return None
        if not os.path.exists(path):
            problems.append(f"{key}: file not found: {path}")
            return None
        return path

    drawing = need_file("drawing")
    fg = need_file("fg_mask")
    contour = need_file("contour_mask", required=False) \
        if config.get("contour_mask") else None
    if not config.get("mesh") and not config.get("sdf"):
        problems.append("need either 'mesh' or 'sdf' input")
    else:
        need_file("mesh" if config.get("mesh") else "sdf")
    kp_path = need_file("keypoints")
    motion_path = need_file("motion")
    if config.get("name_map"):
        need_file("name_map")
    if not config.get("out_dir"):
        problems.append("missing required 'out_dir'")

    dims = {}
    for key, path in (("drawing", drawing), ("fg_mask", fg),
                      ("contour_mask", contour)):
        if path:
            try:
                img = pngio.read_image(path)
                dims[key] = (img.height, img.width)
            except Exception as exc:
                problems.append(f"{key}: unreadable image: {exc}")
    if len(set(dims.values())) > 1:
        pretty = ", ".join(f"{k}={v[1]}x{v[0]}" for k, v in dims.items())
        problems.append(f"image dimensions disagree: {pretty}")

    if kp_path:
        try:
            with open(kp_path) as f:
                KeypointSet.from_json(f.read())
        except Exception as exc:
            problems.append(f"keypoints: {exc}")
    if motion_path:
        try:
            with open(motion_path) as f:
                parse_bvh(f.read())
        except Exception as exc:
            problems.append(f"motion: {exc}")

    thin = config.get("thin", {})
    t1 = thin.get("theta1", DEFAULTS["thin"]["theta1"])
    t2 = thin.get("theta2", DEFAULTS["thin"]["theta2"])
    if not t1 > t2 > 0:
        problems.append(f"thin thresholds must satisfy theta1 > theta2 > 0, "
                        f"got theta1={t1}, theta2={t2}")
    return problems


def run_pipeline(config, echo=print):
    """Execute every stage; returns the manifest dict. Raises StageError on
    the first failure after writing a .partial marker."""
    problems = validate_config(config)
    if problems:
        raise ParameterError("invalid config: " + "; ".join(problems))
    out_dir = config["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    guide_dir = os.path.join(out_dir, "guidance")
    manifest = {"config": config, "stages": [], "timings_file": "timings.json"}
    timings = {}

    def artifact(name):
        return os.path.join(out_dir, name)

    def run(name, fn, inputs, outputs, params):
        echo(f"[{name}] ...")
        start = time.perf_counter()
        try:
            extra = fn()
        except Exception as exc:
            marker = os.path.join(out_dir, "pipeline.partial")
            with open(marker, "w") as f:
                json.dump({"failed_stage": name, "error": str(exc)}, f, indent=1)
            raise StageError(name, exc) from exc
        timings[name] = round(time.perf_counter() - start, 4)
        entry = {"name": name, "params": params,
                 "inputs": {p: sha256_file(p) for p in inputs},
                 "outputs": {p: sha256_file(p) for p in sorted(outputs)}}
        if isinstance(extra, dict):
            entry["stats"] = extra
        manifest["stages"].append(entry)
        return entry

    cfg_inp = config["inpaint"]
    inpainted = artifact("inpainted.png")
    inputs = [config["drawing"], config["fg_mask"]]
    if config.get("contour_mask"):
        inputs.append(config["contour_mask"])
    run("inpaint-contour",
        lambda: stage_inpaint(config["drawing"], config["fg_mask"], inpainted,
                              config.get("contour_mask"), cfg_inp["radius"],
                              cfg_inp["band"], cfg_inp["darkness"]),
        inputs, [inpainted], cfg_inp)

    cfg_vol = config["volume"]
    if config.get("sdf"):
        raw_sdf = config["sdf"]
    else:
        raw_sdf = artifact("raw.sdf")
        run("mesh2sdf",
            lambda: stage_mesh2sdf(config["mesh"], raw_sdf,
                                   tuple(cfg_vol["dims"]), cfg_vol["padding"]),
            [config["mesh"]], [raw_sdf], cfg_vol)

    cut_path = artifact("cut.sdf")
    run("cut", lambda: stage_cut(raw_sdf, config["fg_mask"], cut_path),
        [raw_sdf, config["fg_mask"]], [cut_path], {})

    cut_mesh = artifact("cut_mesh.ply")
    run("extract", lambda: stage_extract(cut_path, cut_mesh),
        [cut_path], [cut_mesh], {"iso": 0.0})

    cfg_thin = config["thin"]
    thinned = artifact("thinned.ply")
    run("thin",
        lambda: stage_thin(cut_mesh, config["fg_mask"], thinned,
                           cfg_thin["theta1"], cfg_thin["theta2"],
                           cfg_thin["guard"], cfg_thin["snap"]),
        [cut_mesh, config["fg_mask"]], [thinned], cfg_thin)

    cfg_smooth = config["smooth"]
    refined = artifact("refined.ply")
    run("smooth",
        lambda: stage_smooth(thinned, refined, cfg_smooth["iterations"],
                             cfg_smooth["strength"], config["fg_mask"],
                             cfg_thin["guard"]),
        [thinned, config["fg_mask"]], [refined],
        dict(cfg_smooth, keep_silhouette_px=cfg_thin["guard"]))

    colored = artifact("colored.ply")
    back = config.get("back_image") or inpainted
    run("bake-color",
        lambda: stage_bake_color(refined, inpainted, colored, back,
                                 config["fg_mask"]),
        [refined, inpainted, back, config["fg_mask"]], [colored], {})

    cfg_rig = config["rig"]
    skeleton_path = artifact("skeleton.json")
    weights_path = artifact("weights.skw")
    run("rig",
        lambda: stage_rig(colored, config["keypoints"], config["fg_mask"],
                          skeleton_path, weights_path, cfg_rig["power"],
                          cfg_rig["max_bones"]),
        [colored, config["keypoints"], config["fg_mask"]],
        [skeleton_path, weights_path], cfg_rig)

    retargeted = artifact("retargeted.bvh")
    run("retarget",
        lambda: stage_retarget(config["motion"], skeleton_path, retargeted,
                               config.get("name_map")),
        [config["motion"], skeleton_path]
        + ([config["name_map"]] if config.get("name_map") else []),
        [retargeted], {})

    cfg_render = config["render"]
    canny = cfg_render["canny"]
    frames = config.get("frames")
    guide_params = {"resolution": cfg_render["resolution"],
                    "margin": cfg_render["margin"], "canny": canny,
                    "frames": frames}
    written = []

    def do_guidance():
        written.extend(stage_guidance(
            colored, retargeted, guide_dir, skeleton_path, weights_path,
            config["fg_mask"], frames, cfg_render["resolution"],
            cfg_render["margin"], canny["sigma"], canny["low"], canny["high"]))

    run("guidance", do_guidance,
        [colored, retargeted, skeleton_path, weights_path, config["fg_mask"]],
        written, guide_params)

    if config.get("seed") is not None:
        manifest["seed"] = config["seed"]
    with open(artifact("manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    with open(artifact("timings.json"), "w") as f:
        json.dump(timings, f, indent=1, sort_keys=True)
    partial = os.path.join(out_dir, "pipeline.partial")
    if os.path.exists(partial):
        os.remove(partial)
    echo(f"pipeline complete: {len(manifest['stages'])} stages, "
         f"outputs in {out_dir}")
    return manifest


# ---------------------------------------------------------------------------
# argument parsing

def _dims(text):
    parts = [int(t) for t in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("dims must be N or NX,NY,NZ")
    return tuple(parts)


def build_parser():
    p = argparse.ArgumentParser(
        prog="charanim",
        description="Refine, rig, animate and render a character mesh "
                    "against its front-view drawing.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("inpaint-contour", help="remove contour strokes by "
                        "distance-ordered weighted fill")
    sp.add_argument("--image", required=True)
    sp.add_argument("--fg-mask", required=True)
    sp.add_argument("--contour-mask")
    sp.add_argument("--fallback", action="store_true",
                    help="force the heuristic contour mask (default when no "
                         "--contour-mask is given)")
    sp.add_argument("--band", type=int, default=4)
    sp.add_argument("--darkness", type=float, default=0.3)
    sp.add_argument("--radius", type=int, default=5)
    sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("mesh2sdf", help="sample a signed-distance grid")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--dims", type=_dims, default=(128, 128, 128))
    sp.add_argument("--padding", type=int, default=3)
    sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("cut", help="front-view cut of an SDF by the mask")
    sp.add_argument("--sdf", required=True)
    sp.add_argument("--fg-mask", required=True)
    sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("extract", help="marching-cubes isosurface")
    sp.add_argument("--sdf", required=True)
    sp.add_argument("--iso", type=float, default=0.0)
    sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("thin", help="skeleton-based side-view thinning")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--fg-mask", required=True)
    sp.add_argument("--theta1", type=float, default=11.0)
    sp.add_argument("--theta2", type=float, default=6.0)
    sp.add_argument("--guard", type=float, default=5.0)
    sp.add_argument("--snap", type=float, default=2.0)
    sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("smooth", help="shrink-compensated smoothing")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--iters", type=int, default=10)
    sp.add_argument("--strength", type=float, default=1.0)
    sp.add_argument("--fg-mask")
    sp.add_argument("--keep-silhouette-px", type=float,
                    help="only smooth vertices at least this many projected "
                         "px inside the mask (requires --fg-mask)")
    sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("bake-color", help="per-vertex color back-projection")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--front", required=True)
    sp.add_argument("--back", help="defaults to the front image (mirrored "
                                   "per the back-view convention)")
    sp.add_argument("--fg-mask")
    sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("rig", help="embed a skeleton and compute weights")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--keypoints", required=True)
    sp.add_argument("--fg-mask", required=True)
    sp.add_argument("--power", type=float, default=4.0)
    sp.add_argument("--max-bones", type=int, default=2)
    sp.add_argument("-o", "--skeleton-out", required=True)
    sp.add_argument("--weights-out", required=True)

    sp = sub.add_parser("retarget", help="map a BVH clip onto a rig")
    sp.add_argument("--motion", required=True)
    sp.add_argument("--skeleton", required=True)
    sp.add_argument("--name-map")
    sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("render", help="orthographic color/depth/mask render")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--view", choices=("front", "back", "free"),
                    default="front")
    sp.add_argument("--res", type=int, default=512)
    sp.add_argument("--margin", type=float, default=0.05)
    sp.add_argument("--yaw", type=float, default=0.0)
    sp.add_argument("--pitch", type=float, default=0.0)
    sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("guidance", help="per-frame guidance channels")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--motion", required=True)
    sp.add_argument("--skeleton")
    sp.add_argument("--weights")
    sp.add_argument("--fg-mask")
    sp.add_argument("--frames", help="e.g. 0..29 (default: all)")
    sp.add_argument("--res", type=int, default=512)
    sp.add_argument("--margin", type=float, default=0.05)
    sp.add_argument("--canny-sigma", type=float, default=1.4)
    sp.add_argument("--canny-low", type=float, default=0.1)
    sp.add_argument("--canny-high", type=float, default=0.2)
    sp.add_argument("--out-dir", required=True)

    sp = sub.add_parser("pipeline", help="run every stage from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", help="override config out_dir")
    sp.add_argument("--frames", help="override frame range, e.g. 0..29")
    sp.add_argument("--grid", type=int, help="override volume grid resolution")
    sp.add_argument("--seed", type=int, help="reserved (recorded only; no "
                                             "randomized stages)")

    sp = sub.add_parser("validate", help="dry-run config checks")
    sp.add_argument("--config", required=True)

    sp = sub.add_parser("make-fixture", help="write the bundled synthetic "
                        "stick-figure fixture")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--resolution", type=int, default=512)
    sp.add_argument("--frames", type=int, default=30)

    return p


def main(argv=None):
    if os.environ.get("CHARANIM_THREADS"):
        import numba
        numba.set_num_threads(max(1, int(os.environ["CHARANIM_THREADS"])))
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ToolkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    cmd = args.command
    if cmd == "inpaint-contour":
        stage_inpaint(args.image, args.fg_mask, args.output,
                      args.contour_mask, args.radius, args.band, args.darkness)
    elif cmd == "mesh2sdf":
        stage_mesh2sdf(args.mesh, args.output, args.dims, args.padding)
    elif cmd == "cut":
        stage_cut(args.sdf, args.fg_mask, args.output)
    elif cmd == "extract":
        stage_extract(args.sdf, args.output, args.iso)
    elif cmd == "thin":
        stats = stage_thin(args.mesh, args.fg_mask, args.output, args.theta1,
                           args.theta2, args.guard, args.snap)
        print(json.dumps(stats))
    elif cmd == "smooth":
        stage_smooth(args.mesh, args.output, args.iters, args.strength,
                     args.fg_mask, args.keep_silhouette_px)
    elif cmd == "bake-color":
        stats = stage_bake_color(args.mesh, args.front, args.output,
                                 args.back, args.fg_mask)
        print(json.dumps(stats))
    elif cmd == "rig":
        stage_rig(args.mesh, args.keypoints, args.fg_mask, args.skeleton_out,
                  args.weights_out, args.power, args.max_bones)
    elif cmd == "retarget":
        stage_retarget(args.motion, args.skeleton, args.output, args.name_map)
    elif cmd == "render":
        for path in stage_render(args.mesh, args.output, args.view, args.res,
                                 args.margin, args.yaw, args.pitch):
            print(path)
    elif cmd == "guidance":
        written = stage_guidance(args.mesh, args.motion, args.out_dir,
                                 args.skeleton, args.weights, args.fg_mask,
                                 args.frames, args.res, args.margin,
                                 args.canny_sigma, args.canny_low,
                                 args.canny_high)
        print(f"{len(written)} files written to {args.out_dir}")
    elif cmd == "pipeline":
        overrides = {"out_dir": args.out_dir, "frames": args.frames,
                     "seed": args.seed}
        if args.grid:
            overrides["volume.dims"] = [args.grid] * 3
        config = load_config(args.config, overrides)
        run_pipeline(config)
    elif cmd == "validate":
        config = load_config(args.config)
        problems = validate_config(config)
        print(json.dumps({"problems": problems}, indent=1))
        return 1 if problems else 0
    elif cmd == "make-fixture":
        from .fixtures import write_biped_fixture
        paths = write_biped_fixture(args.out_dir, args.resolution,
                                    frames=args.frames)
        print(json.dumps(paths, indent=1, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
