"""Command-line surface: render, fit, cluster, edit, eval-cd, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .editing import (
    PointPromptSet,
    apply_local_edit,
    load_session,
    new_session,
    paint_view,
    partition_view,
    project_segmentation,
    render_prompt_cache,
    save_session,
    segment,
)
from .errors import (
    ContractViolation,
    EmptyCloudError,
    EmptyInputError,
    EmptyRegionError,
    EmptySceneError,
    ResolutionMismatchError,
    UnknownLabelError,
    ZeroCoverageError,
)
from .fixtures import orbit_camera, sphere_scene
from .imgio import load_image, save_image
from .material import MaterialModel, load_material_table, save_material_table
from .mesh import Camera, Scene, load_obj
from .metrics import chamfer_full, chamfer_partial, icp_align, sample_mesh_surface
from .optimize import FitConfig, Observation, fit, write_loss_trace
from .render import RENDER_MODES, render
from .semantics import cluster_segments, load_segment_set, save_label_map
from .sg import load_mixture, save_mixture

_VALIDATION_ERRORS = (
    ContractViolation,
    EmptyInputError,
    EmptyCloudError,
    EmptyRegionError,
    EmptySceneError,
    ResolutionMismatchError,
    UnknownLabelError,
    ZeroCoverageError,
    FileNotFoundError,
    KeyError,
    ValueError,
)


def save_material_dir(model: MaterialModel, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.save(d / "albedo.npy", model.albedo)
    np.save(d / "roughness_offset.npy", model.roughness_offset)
    np.save(d / "specular_offset.npy", model.specular_offset)
    np.save(d / "label_atlas.npy", model.label_atlas)
    save_material_table(model.table, d / "table.txt")


def load_material_dir(directory) -> MaterialModel:
    d = Path(directory)
    return MaterialModel(
        np.load(d / "albedo.npy"),
        load_material_table(d / "table.txt"),
        np.load(d / "roughness_offset.npy"),
        np.load(d / "specular_offset.npy"),
        np.load(d / "label_atlas.npy"),
    )


def _load_scene(spec: str, material_dir=None, env_path=None) -> Scene:
    if spec == "fixture:sphere":
        scene = sphere_scene()
    elif spec.startswith("fixture:"):
        raise ContractViolation(f"unknown fixture {spec!r}")
    else:
        scene = load_obj(spec)
    if material_dir:
        scene.material = load_material_dir(material_dir)
    if env_path:
        scene.environment = load_mixture(env_path)
    return scene


def _camera_from_args(args) -> Camera:
    res = tuple(int(x) for x in args.resolution.split("x"))
    return orbit_camera(args.yaw, args.pitch, args.radius, res, args.fov)


def _cmd_render(args) -> int:
    scene = _load_scene(args.scene, args.material_dir, args.env)
    cam = _camera_from_args(args)
    out = render(scene, cam, args.mode, with_stats=True)
    pixels = out.pixels
    if pixels.dtype == bool:
        pixels = pixels.astype(np.float64)
    elif np.issubdtype(pixels.dtype, np.integer):
        pixels = pixels.astype(np.float64) / max(1, pixels.max())
    save_image(args.out, pixels)
    print(json.dumps({"mode": args.mode, "out": args.out, **json.loads(out.stats.to_json())}))
    return 0


def _cmd_fit(args) -> int:
    scene = _load_scene(args.scene, args.material_dir, args.env)
    config = FitConfig.from_file(args.config) if args.config else FitConfig()
    obs_dir = Path(args.observations)
    manifest = json.loads((obs_dir / "cameras.json").read_text())
    observations = []
    for entry in manifest:
        res = tuple(entry.get("resolution", [64, 64]))
        cam = orbit_camera(entry["yaw"], entry.get("pitch", 15.0),
                           entry.get("radius", 3.0), res, entry.get("fov", 45.0))
        image = load_image(obs_dir / entry["image"])
        ref_albedo = (
            load_image(obs_dir / entry["reference_albedo"])
            if entry.get("reference_albedo")
            else None
        )
        observations.append(Observation(cam, image, entry.get("kind", "novel"), ref_albedo))
    model, env, trace = fit(scene, observations, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_material_dir(model, out / "material")
    save_mixture(env, out / "env.sgmix")
    write_loss_trace(out / "trace.csv", trace)
    summary = {
        "iterations": len(trace),
        "final_data": trace[-1][1],
        "final_L_a": trace[-1][2],
        "final_total": trace[-1][5],
    }
    print(json.dumps(summary))
    return 0


def _cmd_cluster(args) -> int:
    segs = load_segment_set(args.manifest)
    label_map = cluster_segments(segs, args.tau_sim)
    save_label_map(label_map, args.out)
    print(json.dumps({"segments": len(segs), "labels": label_map.n_labels, "out": args.out}))
    return 0


def _cmd_edit(args) -> int:
    scene = _load_scene(args.scene, args.material_dir, args.env)
    session_dir = Path(args.session)
    if (session_dir / "session.json").exists():
        sess = load_session(session_dir, scene)
    else:
        sess = new_session(scene)
    script = json.loads(Path(args.prompts).read_text())
    res = tuple(script.get("resolution", [64, 64]))
    cam = orbit_camera(script["yaw"], script.get("pitch", 15.0),
                       script.get("radius", 3.0), res, script.get("fov", 45.0))
    view = render(scene, cam, "albedo").pixels
    prompts = PointPromptSet.from_lists(script["points"], script["labels"])
    i_sam, i_negsam = segment(sess.segmenter_id, view, prompts)
    l_mask, l_neg = project_segmentation(sess, cam, i_sam, i_negsam)
    q_mask, _, m_t = render_prompt_cache(sess, cam)
    part = partition_view(sess, cam, q_mask & m_t)
    painted = paint_view(sess, cam, part, script.get("tag", "red"))
    apply_local_edit(sess, painted, cam)
    save_session(sess, session_dir)
    print(
        json.dumps(
            {
                "segment_pixels": int(i_sam.sum()),
                "l_mask": l_mask,
                "l_negmask": l_neg,
                "painted": int(part.m_paint.sum()),
                "session": str(session_dir),
            }
        )
    )
    return 0


def _load_cloud(spec: str, samples: int, seed: int):
    if spec.endswith(".npy"):
        return np.load(spec)
    scene = _load_scene(spec)
    return sample_mesh_surface(scene, samples, seed).points


def _cmd_eval_cd(args) -> int:
    a = _load_cloud(args.gt, args.samples, args.seed)
    b = _load_cloud(args.pred, args.samples, args.seed + 1)
    if args.align == "icp":
        b = icp_align(b, a)
    print(json.dumps({"cd_full": chamfer_full(a, b), "cd_partial": chamfer_partial(a, b)}))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    scene = _load_scene(args.scene, args.material_dir, args.env)
    app = create_app(scene)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgtex", description="SG material estimation and texture editing")
    sub = p.add_subparsers(dest="command", required=True)

    def add_scene_args(sp):
        sp.add_argument("--scene", default="fixture:sphere", help="fixture:sphere or an OBJ path")
        sp.add_argument("--material-dir", default=None)
        sp.add_argument("--env", default=None, help="SGMIX environment file")

    def add_camera_args(sp):
        sp.add_argument("--yaw", type=float, default=0.0)
        sp.add_argument("--pitch", type=float, default=15.0)
        sp.add_argument("--radius", type=float, default=3.0)
        sp.add_argument("--fov", type=float, default=45.0)
        sp.add_argument("--resolution", default="64x64")

    sp = sub.add_parser("render", help="render one pass to an image file")
    add_scene_args(sp)
    add_camera_args(sp)
    sp.add_argument("--mode", choices=RENDER_MODES, default="shaded")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_render)

    sp = sub.add_parser("fit", help="inverse-render materials and environment")
    add_scene_args(sp)
    sp.add_argument("--observations", required=True, help="directory with cameras.json + images")
    sp.add_argument("--config", default=None, help="FitConfig as JSON or TOML")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_fit)

    sp = sub.add_parser("cluster", help="consolidate over-segments into labels")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--tau-sim", type=float, default=0.92)
    sp.add_argument("--out", required=True, help="16-bit label PNG path")
    sp.set_defaults(fn=_cmd_cluster)

    sp = sub.add_parser("edit", help="run one scripted edit transaction")
    add_scene_args(sp)
    sp.add_argument("--session", required=True, help="session directory (created if missing)")
    sp.add_argument("--prompts", required=True, help="JSON: yaw, pitch, points, labels, tag")
    sp.set_defaults(fn=_cmd_edit)

    sp = sub.add_parser("eval-cd", help="chamfer distances between meshes or clouds")
    sp.add_argument("--gt", required=True, help="OBJ, fixture:sphere, or .npy points")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--samples", type=int, default=30000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--align", choices=("icp", "none"), default="none")
    sp.set_defaults(fn=_cmd_eval_cd)

    sp = sub.add_parser("serve", help="start the editing session service")
    add_scene_args(sp)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8008)
    sp.set_defaults(fn=_cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except _VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
