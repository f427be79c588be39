"""Command line interface.

Exit codes: 0 success, 1 usage or parse error, 2 model written with topology
warnings, 3 a stage failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .boundary_detect import ingest_external
from .cells import assign_points, build_cells
from .core import Config, normalize_points
from .errors import (EmptyInput, MalformedFile, ManifestError, ParseError, SchemaMismatch, ValueOutOfRange,
                     VoronoiBrepError)
from .gt_voronoi import boundary_from_labels
from .metrics import detection_scores, evaluate, model_samples, sample_primitive
from .pipeline import StageError, detect_boundaries, fit_cells, run_pipeline
from .scenes import SCENES, add_noise, make_scene
from .udf import udf_from_points, udf_from_primitive_samples

log = logging.getLogger("voronoi_brep")

EXIT_OK, EXIT_USAGE, EXIT_WARNINGS, EXIT_STAGE = 0, 1, 2, 3
_USAGE_ERRORS = (ParseError, ManifestError, SchemaMismatch, MalformedFile, ValueOutOfRange, FileNotFoundError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_flags(p):
    g = p.add_argument_group("configuration")
    g.add_argument("--resolution", type=int, help="grid resolution r")
    g.add_argument("--eps1", type=float, help="fit acceptance rms")
    g.add_argument("--eps2", type=float, help="surface adjacency distance")
    g.add_argument("--eps3", type=float, help="curve/vertex distance")
    g.add_argument("--tau", type=float, help="absolute third-derivative threshold")
    g.add_argument("--threads", type=int, help="worker threads")
    g.add_argument("--seed", type=int, help="RANSAC seed")
    p.add_argument("-v", "--verbose", action="store_true")


def _config(args, base: Config = None) -> Config:
    base = base or Config()
    changes = {}
    for flag, name in (("resolution", "r"), ("eps1", "eps1"), ("eps2", "eps2"), ("eps3", "eps3"),
                       ("tau", "detect_tau"), ("threads", "threads"), ("seed", "seed")):
        val = getattr(args, flag, None)
        if val is not None:
            changes[name] = val
    try:
        return base.replace(**changes) if changes else base
    except ValueError as exc:
        raise ManifestError(f"invalid configuration: {exc}") from None


def _print_tsv(rows, header, out=None):
    out = out or sys.stdout
    print("\t".join(header), file=out)
    for row in rows:
        print("\t".join(_fmt(v) for v in row), file=out)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write_tsv(path, rows, header):
    with open(path, "w") as fh:
        _print_tsv(rows, header, fh)


def _read_input_points(path, normalize):
    pts, _ = io.read_points(path)
    if len(pts) == 0:
        raise EmptyInput(f"{path}: no points")
    norm = None
    if normalize is not None:
        pts, norm = normalize_points(pts, normalize)
    return pts, norm


# Subcommands ----------------------------------------------------------------


def cmd_udf(args) -> int:
    cfg = _config(args)
    pts, norm = _read_input_points(args.points, args.normalize)
    udf = udf_from_points(pts, cfg)
    io.write_nvdu(args.output, udf)
    if norm is not None:
        io.write_json(Path(args.output).with_suffix(".norm.json"), norm.to_dict())
    print(f"wrote {args.output} (r={udf.r}, {len(pts)} points)")
    return EXIT_OK


def cmd_gt(args) -> int:
    cfg = _config(args)
    sets = io.read_sample_manifest(args.manifest)
    udf, labels = udf_from_primitive_samples(sets, cfg)
    boundary = boundary_from_labels(labels)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_nvdl(out / "labels.nvdl", labels)
    io.write_nvdb(out / "boundary.nvdb", boundary)
    io.write_nvdu(out / "udf.nvdu", udf)
    present = np.unique(labels.labels)
    _print_tsv([(len(sets), len(present), boundary.count)], ("primitives", "labels_present", "boundary_voxels"))
    return EXIT_OK


def cmd_detect(args) -> int:
    udf = io.read_nvdu(args.udf)
    cfg = _config(args, Config(r=udf.r))
    boundary = detect_boundaries(udf, cfg, tiled=args.tiled)
    io.write_nvdb(args.output, boundary)
    print(f"wrote {args.output} ({boundary.count} boundary voxels)")
    return EXIT_OK


def cmd_cells(args) -> int:
    udf = io.read_nvdu(args.udf)
    cfg = _config(args, Config(r=udf.r))
    boundary = ingest_external(args.boundary, udf.r)
    cells = build_cells(boundary, udf, cfg, refine=not args.no_fill)
    io.write_nvdl(args.output, cells)
    _print_tsv([(i, int(n)) for i, n in enumerate(cells.sizes)], ("cell", "voxels"))
    return EXIT_OK


def _fit_records(cell_fits, cell_points):
    out = []
    for i, (cf, pts) in enumerate(zip(cell_fits, cell_points.points)):
        out.append({
            "cell": i,
            "points": len(pts),
            "variant": cf.variant,
            "fits": [{"primitive": f.primitive.canonical().to_dict(), "rms": f.rms_error, "inliers": f.inlier_count}
                     for f in cf.fits],
        })
    return out


def cmd_fit(args) -> int:
    udf = io.read_nvdu(args.udf)
    cfg = _config(args, Config(r=udf.r))
    cells = io.read_cells(args.cells, udf.geometry)
    pts = None
    if args.points:
        pts, _ = io.read_points(args.points)
    cell_points = assign_points(cells, udf, pts)
    fits = fit_cells(cell_points, cfg)
    io.write_json(args.output, {"cells": _fit_records(fits, cell_points)})
    _print_tsv([(i, cf.variant, ",".join(f.kind for f in cf.fits), len(p)) for i, (cf, p)
                in enumerate(zip(fits, cell_points.points))], ("cell", "variant", "kinds", "points"))
    return EXIT_OK


def _load_pipeline_inputs(m: io.PipelineManifest, cfg: Config):
    """Returns ``(udf, boundary or None, input points or None, normalization)``."""
    norm = None
    points = None
    labels = None
    if m.input_kind == "udf-grid":
        udf = io.read_nvdu(m.inputs[0])
    elif m.input_kind == "points":
        points, norm = _read_input_points(m.inputs[0], m.normalize)
        udf = udf_from_points(points, cfg)
    else:
        sets = []
        for path in m.inputs:
            pts, _ = io.read_points(path)
            if len(pts) == 0:
                raise EmptyInput(f"{path}: no points")
            sets.append(pts)
        udf, labels = udf_from_primitive_samples(sets, cfg)
        points = np.concatenate(sets)
    if udf.r != cfg.r:
        cfg = cfg.replace(r=udf.r)
    boundary = None
    if m.boundary == "external":
        boundary = ingest_external(m.boundary_path, udf.r)
    elif m.boundary == "labels":
        if m.boundary_path is not None:
            labels = io.read_nvdl(m.boundary_path, udf.geometry)
        boundary = boundary_from_labels(labels)
    return cfg, udf, boundary, points if m.use_input_points else None, norm


def cmd_pipeline(args) -> int:
    m = io.read_manifest(args.manifest)
    cfg = _config(args, io.config_from_overrides(m.config))
    if args.output:
        m.output = Path(args.output)
    try:
        cfg, udf, boundary, points, norm = _load_pipeline_inputs(m, cfg)
    except (VoronoiBrepError, OSError) as exc:
        if isinstance(exc, _USAGE_ERRORS):
            raise
        raise StageError("input", exc) from exc
    res = run_pipeline(udf, cfg, boundary=boundary, input_points=points, refine=m.refine, tiled=m.tiled)
    model = res.model
    model.normalization = norm
    out = m.output
    out.mkdir(parents=True, exist_ok=True)
    io.write_brep(out / "brep.json", model)
    io.write_nvdu(out / "udf.nvdu", udf)
    io.write_nvdb(out / "boundary.nvdb", res.boundary)
    io.write_nvdb(out / "refined.nvdb", res.refined)
    io.write_nvdl(out / "cells.nvdl", res.cells)
    io.write_json(out / "fits.json", {"cells": _fit_records(res.cell_fits, res.cell_points)})
    V, E, F = model.counts
    _print_tsv([(V, E, F, len(res.warnings))], ("vertices", "curves", "surfaces", "warnings"))
    if args.report:
        _pipeline_report(Path(args.report), res)
    for w in res.warnings:
        log.warning("topology: %s", w)
    return EXIT_WARNINGS if res.warnings else EXIT_OK


def _pipeline_report(out: Path, res):
    from .plotting import plot_model, plot_slices

    out.mkdir(parents=True, exist_ok=True)
    _write_tsv(out / "timings.tsv", sorted(res.timings.items()), ("stage", "seconds"))
    rows = []
    for i, (cf, pts) in enumerate(zip(res.cell_fits, res.cell_points.points)):
        rms = ",".join(f"{f.rms_error:.3g}" for f in cf.fits)
        rows.append((i, int(res.cells.sizes[i]), len(pts), cf.variant, ",".join(f.kind for f in cf.fits), rms))
    _write_tsv(out / "cells.tsv", rows, ("cell", "voxels", "points", "variant", "kinds", "rms"))
    model = res.model
    rows = [("surface", i, s.kind, m.get("cell", ""), m.get("rms", "")) for i, (s, m)
            in enumerate(zip(model.surfaces, model.surface_meta))]
    rows += [("curve", i, c.kind, m.get("cell", ""), m.get("rms", "")) for i, (c, m)
             in enumerate(zip(model.curves, model.curve_meta))]
    rows += [("vertex", i, "point", "", "") for i in range(model.n_vertices)]
    _write_tsv(out / "primitives.tsv", rows, ("class", "index", "kind", "cell", "rms"))
    for axis in range(3):
        plot_slices(out / f"slices_{'xyz'[axis]}.png", res.udf, res.refined, res.cells, axis=axis)
    plot_model(out / "model.png", model_samples(model, surface_density=2500.0, curve_density=300.0),
               title="V={} E={} F={}".format(*model.counts))


def cmd_eval(args) -> int:
    cfg = _config(args)
    pred = io.read_brep(args.pred)
    gt = io.read_brep(args.gt)
    result = evaluate(pred, gt, cfg.match_thresholds, cfg.threads)
    result = dict(result, schema=io.EVAL_SCHEMA, version=io.SCHEMA_VERSION)
    if args.output:
        io.write_json(args.output, result)
    rows = _score_rows(result)
    _print_tsv(rows, _SCORE_HEADER)
    topo = result["topology"]
    _print_tsv([(k, v["precision"], v["recall"], v["f1"]) for k, v in topo.items()], ("matrix", "precision", "recall", "f1"))
    if args.report:
        from .plotting import plot_detection

        out = Path(args.report)
        out.mkdir(parents=True, exist_ok=True)
        _write_tsv(out / "scores.tsv", rows, _SCORE_HEADER)
        reports, _, _ = detection_scores(model_samples(pred), model_samples(gt), cfg.match_thresholds, cfg.threads)
        plot_detection(out / "detection.png", reports)
    return EXIT_OK


_SCORE_HEADER = ("threshold", "class", "precision", "recall", "f1", "good", "total", "chamfer")


def _score_rows(result):
    rows = []
    for rep in result["detection"] + [dict(result["average"], threshold="mean")]:
        for cls, s in rep["classes"].items():
            cd = result["chamfer"][cls]
            rows.append((rep["threshold"], cls, s["precision"], s["recall"], s["f1"], s["good_count"],
                         s["total_count"], "" if cd is None else cd))
    return rows


def cmd_scene(args) -> int:
    """Write a synthetic scene: per-primitive samples, GT B-Rep and manifests."""
    scene = make_scene(args.name)
    out = Path(args.outdir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    files = []
    for k, pts in enumerate(scene.samples):
        if args.noise > 0:
            pts = add_noise(pts, args.noise, seed=args.seed + k)
        name = f"samples/{k:03d}.xyz"
        io.write_points(out / name, pts)
        files.append(name)
    io.write_json(out / "samples.json", {"samples": files})
    io.write_brep(out / "gt_brep.json", scene.gt)
    manifest = {
        "input": {"kind": "samples", "paths": files},
        "boundary": {"source": args.boundary},
        "output": "out",
        "config": {"r": args.resolution},
        "stages": {"fill_holes": args.boundary != "labels"},
    }
    io.write_json(out / "manifest.json", manifest)
    print(f"wrote scene {scene.name} to {out} ({len(files)} sample sets)")
    return EXIT_OK


def cmd_export(args) -> int:
    """Point-sample OBJ of every primitive, one group each (for viewing only)."""
    model = io.read_brep(args.brep)
    with open(args.output, "w") as fh:
        for cls, prims in (("surface", model.surfaces), ("curve", model.curves)):
            density = args.density if cls == "surface" else args.density / 10
            for i, prim in enumerate(prims):
                pts = sample_primitive(prim, density, model.extent_of(cls, i))
                fh.write(f"g {cls}_{i}_{prim.kind}\n")
                np.savetxt(fh, pts, fmt="v %.6f %.6f %.6f")
        if model.n_vertices:
            fh.write("g vertices\n")
            np.savetxt(fh, model.vertices, fmt="v %.6f %.6f %.6f")
    print(f"wrote {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="voronoi-brep", description="Reconstruct B-Rep models from unsigned distance grids.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("udf", help="point file -> NVDU distance grid")
    s.add_argument("points")
    s.add_argument("output")
    s.add_argument("--normalize", type=float, metavar="MARGIN", help="fit points into the unit cube first")
    _config_flags(s)
    s.set_defaults(func=cmd_udf)

    s = sub.add_parser("gt", help="per-primitive samples manifest -> labels, boundary and UDF grids")
    s.add_argument("manifest")
    s.add_argument("outdir")
    _config_flags(s)
    s.set_defaults(func=cmd_gt)

    s = sub.add_parser("detect", help="NVDU -> NVDB boundary probabilities (analytic detector)")
    s.add_argument("udf")
    s.add_argument("output")
    s.add_argument("--tiled", action="store_true", help="run per patch and merge")
    _config_flags(s)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("cells", help="boundary + UDF -> NVDL cell ids")
    s.add_argument("boundary")
    s.add_argument("udf")
    s.add_argument("output")
    s.add_argument("--no-fill", action="store_true", help="skip boundary hole filling")
    _config_flags(s)
    s.set_defaults(func=cmd_cells)

    s = sub.add_parser("fit", help="cells + UDF -> per-cell primitive fits (JSON)")
    s.add_argument("cells")
    s.add_argument("udf")
    s.add_argument("output")
    s.add_argument("--points", help="input point file to fit instead of projected UDF points")
    _config_flags(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("pipeline", help="run every stage from a manifest; writes brep.json")
    s.add_argument("manifest")
    s.add_argument("-o", "--output", help="output directory (overrides the manifest)")
    s.add_argument("--report", help="directory for TSV tables and figures")
    _config_flags(s)
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("eval", help="compare a predicted brep.json against ground truth")
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("-o", "--output", help="evaluation JSON path")
    s.add_argument("--report", help="directory for TSV tables and figures")
    _config_flags(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("scene", help="export a synthetic scene with ground truth and a manifest")
    s.add_argument("name", choices=sorted(SCENES))
    s.add_argument("outdir")
    s.add_argument("--resolution", type=int, default=128)
    s.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma added to the samples")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--boundary", choices=io.BOUNDARY_SOURCES, default="labels")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_scene)

    s = sub.add_parser("export", help="brep.json -> point-sampled OBJ for viewing")
    s.add_argument("brep")
    s.add_argument("output")
    s.add_argument("--density", type=float, default=2500.0, help="surface samples per unit area")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"stage failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (VoronoiBrepError, ValueError) as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
