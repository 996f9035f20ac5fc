"""Command line entry point: ``xsection {render,fuse,extract,eval2d,eval3d,pipeline,demo}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .demo import write_demos
from .evaluation import extract_blocky_surface, metrics_2d, metrics_3d, solid_voxelize
from ._validation import check_n_jobs, check_positive
from .exceptions import DataError, XSectionError
from .fusion import FusionConfig, TsdfFusion
from .grid import OccupancyGrid
from .pipeline import (PROVIDERS, default_grid_spec, frame_range, load_frames, render_frames,
                       run_pipeline)
from .renderer import RenderScene
from .scene_io import (load_grid, load_scene, read_float_map, read_mask, save_grid, write_csv,
                       write_mesh)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

DEFAULTS = {
    "tau": 0.03,
    "voxel_size": 0.01,
    "mode": "enhanced",
    "provider": "oracle",
    "threshold": 0.0,
    "max_weight": 100,
    "workers": 1,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_fusion_flags(p):
    # None marks "not given" so --config values can fill in
    p.add_argument("--tau", type=float, default=None, help="truncation distance in meters (default 0.03)")
    p.add_argument("--voxel-size", dest="voxel_size", type=float, default=None,
                   help="voxel edge in meters (default 0.01)")
    p.add_argument("--mode", choices=["enhanced", "depth_only"], default=None)
    p.add_argument("--threshold", type=float, default=None,
                   help="occupied if phi < threshold (default 0.0)")
    p.add_argument("--max-weight", dest="max_weight", type=int, default=None)
    p.add_argument("--workers", type=int, default=None, help="threads per stage (default 1)")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file with any of: " + ", ".join(DEFAULTS))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xsection", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("render", help="render depth/thickness/mask frames for a scene")
    p.add_argument("scene", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frames", default=None, help="frame range 'a:b' (default: whole trajectory)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("fuse", help="fuse rendered frames into a TSDF grid")
    p.add_argument("frames_dir", type=Path)
    p.add_argument("scene", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output grid file")
    p.add_argument("--frames", default=None)
    _add_fusion_flags(p)

    p = sub.add_parser("extract", help="binarize a grid and write a blocky OBJ surface")
    p.add_argument("grid", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=0.0)

    p = sub.add_parser("eval2d", help="thickness image metrics")
    p.add_argument("pred", type=Path)
    p.add_argument("gt", type=Path)
    p.add_argument("mask", type=Path)
    p.add_argument("--out", type=Path, default=None, help="CSV output")

    p = sub.add_parser("eval3d", help="occupancy metrics of a fused grid")
    p.add_argument("grid", type=Path)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--scene", type=Path, help="voxelize this scene as ground truth")
    g.add_argument("--gt-grid", dest="gt_grid", type=Path, help="ground-truth grid file")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--out", type=Path, default=None, help="CSV output")

    p = sub.add_parser("pipeline", help="render, fuse (enhanced and depth-only) and evaluate")
    p.add_argument("scene", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--provider", choices=PROVIDERS, default=None)
    p.add_argument("--train-frames", dest="train_frames", type=Path, default=None,
                   help="frames directory used to fit the mean baseline")
    p.add_argument("--train-scene", dest="train_scene", type=Path, default=None,
                   help="scene whose trajectory poses belong to --train-frames")
    p.add_argument("--manifest", type=Path, default=None, help="external prediction manifest CSV")
    _add_fusion_flags(p)

    p = sub.add_parser("demo", help="write the bundled demo scenes")
    p.add_argument("--out", type=Path, required=True)
    return parser


def resolve_options(args) -> dict:
    """Defaults, then ``--config`` values, then explicitly given flags."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None) is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise XSectionError(f"cannot read config {args.config}: {e}") from e
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update(cfg)
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    return opts


def _fusion_config(opts) -> FusionConfig:
    # bad option values are usage errors, not data errors
    try:
        check_positive(opts["voxel_size"], "voxel_size")
        check_n_jobs(opts["workers"])
        if opts["provider"] not in PROVIDERS:
            raise DataError(f"provider must be one of {PROVIDERS}, got {opts['provider']!r}")
        return FusionConfig(tau=opts["tau"], mode=opts["mode"], max_weight=opts["max_weight"],
                            occupancy_threshold=opts["threshold"])
    except (DataError, TypeError) as e:
        raise UsageError(str(e)) from e


def _print_metrics(name, d):
    print(name + ": " + ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                                  for k, v in d.items()))


def cmd_render(args) -> int:
    desc = load_scene(args.scene)
    scene = RenderScene.from_description(desc)
    args.out.mkdir(parents=True, exist_ok=True)
    idx = frame_range(args.frames, len(desc.trajectory))
    render_frames(scene, idx, args.out, args.workers)
    print(f"rendered {len(idx)} frames into {args.out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    opts = resolve_options(args)
    config = _fusion_config(opts)
    desc = load_scene(args.scene)
    idx = frame_range(args.frames, len(desc.trajectory))
    frames = load_frames(args.frames_dir, desc, idx)
    spec = default_grid_spec(desc, config.tau, opts["voxel_size"])
    est = TsdfFusion(desc.camera, spec, config.tau, config.mode, config.max_weight,
                     config.occupancy_threshold, opts["workers"]).fit(frames)
    for f, n in zip(frames, est.n_updated_):
        print(f"frame {f.frame_index}: {n} voxels updated")
    save_grid(args.out, est.grid_)
    return EXIT_OK


def cmd_extract(args) -> int:
    grid = load_grid(args.grid)
    occ = OccupancyGrid(grid.spec, (grid.weight > 0) & (grid.phi < args.threshold))
    mesh = extract_blocky_surface(occ)
    write_mesh(args.out, mesh)
    print(f"{occ.count} occupied voxels, {mesh.n_triangles} triangles -> {args.out}")
    return EXIT_OK


def cmd_eval2d(args) -> int:
    m = metrics_2d(read_float_map(args.pred), read_float_map(args.gt), read_mask(args.mask))
    d = {"abs_rel": m.abs_rel, "sqr_rel": m.sqr_rel, "rmse_linear": m.rmse_linear,
         "rmse_log": m.rmse_log, "n_pixels": m.n_pixels}
    _print_metrics("eval2d", d)
    if args.out:
        write_csv(args.out, list(d), [list(d.values())])
    return EXIT_OK


def cmd_eval3d(args) -> int:
    grid = load_grid(args.grid)
    recon = OccupancyGrid(grid.spec, (grid.weight > 0) & (grid.phi < args.threshold))
    if args.scene is not None:
        gt = solid_voxelize(load_scene(args.scene), grid.spec)
    else:
        g = load_grid(args.gt_grid)
        gt = OccupancyGrid(g.spec, (g.weight > 0) & (g.phi < args.threshold))
    d = metrics_3d(recon, gt).as_dict()
    _print_metrics("eval3d", d)
    if args.out:
        write_csv(args.out, list(d), [list(d.values())])
    return EXIT_OK


def cmd_pipeline(args) -> int:
    opts = resolve_options(args)
    config = _fusion_config(opts)
    if opts["provider"] == "external" and args.manifest is None:
        raise UsageError("--provider external requires --manifest")
    if opts["provider"] == "mean" and args.train_frames is None:
        raise UsageError("--provider mean requires --train-frames")
    desc = load_scene(args.scene)
    train = None
    if opts["provider"] == "mean":
        tdesc = load_scene(args.train_scene or args.scene, load_meshes=False)
        train = load_frames(args.train_frames, tdesc, range(len(tdesc.trajectory)))
    report = run_pipeline(desc, args.out, config, opts["voxel_size"], opts["provider"],
                          train_frames=train, manifest=args.manifest, n_jobs=opts["workers"])
    for mode, m in report.final.items():
        _print_metrics(mode, {"iou": m.iou, "precision": m.precision, "recall": m.recall})
    return EXIT_OK


def cmd_demo(args) -> int:
    for p in write_demos(args.out):
        print(p)
    return EXIT_OK


COMMANDS = {
    "render": cmd_render, "fuse": cmd_fuse, "extract": cmd_extract, "eval2d": cmd_eval2d,
    "eval3d": cmd_eval3d, "pipeline": cmd_pipeline, "demo": cmd_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"xsection: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (XSectionError, OSError) as e:
        print(f"xsection: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
