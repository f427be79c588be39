"""End-to-end reconstruction: UDF -> boundaries -> cells -> fits -> B-Rep."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .boundary_detect import DetectorParams, PatchSpec, analytic_patch_detector, detect_analytic, tile_and_merge
from .cells import CellPoints, assign_points, cell_adjacency, fill_holes, grow_regions
from .core import Config, parallel_map
from .fitting import CellFit, fit_cell
from .grids import BoundaryGrid, VoronoiCells
from .topology import reconstruct_topology
from .udf import UdfGrid

log = logging.getLogger(__name__)


class StageError(Exception):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")


@dataclass(eq=False)
class PipelineResult:
    udf: UdfGrid
    boundary: BoundaryGrid
    refined: BoundaryGrid
    cells: VoronoiCells
    cell_points: CellPoints
    cell_fits: list
    model: object
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def detect_boundaries(udf: UdfGrid, cfg: Config, tiled: bool = False) -> BoundaryGrid:
    params = DetectorParams.from_config(cfg, udf.spacing)
    if tiled:
        return tile_and_merge(udf, PatchSpec.from_config(cfg, udf.r), analytic_patch_detector(params))
    return detect_analytic(udf, params)


def fit_cells(cell_points: CellPoints, cfg: Config) -> list:
    """Fit every cell independently; RANSAC is seeded with the cell id."""

    def one(i):
        if cell_points.is_degenerate(i):
            return CellFit.degenerate()
        return fit_cell(cell_points.points[i], cfg.eps1, seed=cfg.seed + i)

    return parallel_map(one, list(range(len(cell_points))), cfg.threads)


def run_pipeline(udf: UdfGrid, cfg: Config, boundary: BoundaryGrid = None, input_points=None,
                 refine: bool = True, tiled: bool = False) -> PipelineResult:
    """Reconstruct a B-Rep from a UDF grid.

    ``boundary`` overrides the analytic detector (ground truth or an external
    prediction).  ``input_points``, when given, feed the fits instead of the
    UDF's projected surface points.
    """
    timings = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:  # tagged and re-raised for the CLI
            raise StageError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        log.info("%s done in %.2fs", name, timings[name])
        return out

    if boundary is None:
        boundary = stage("detect", lambda: detect_boundaries(udf, cfg, tiled))
    refined = stage("fill_holes", lambda: fill_holes(boundary, udf, cfg)) if refine else boundary
    cells = stage("grow_regions", lambda: grow_regions(refined, cfg.min_cell_voxels))
    cells = stage("cell_adjacency", lambda: cells.with_adjacency(cell_adjacency(cells, refined)))
    cell_points = stage("assign_points", lambda: assign_points(cells, udf, input_points))
    fits = stage("fit", lambda: fit_cells(cell_points, cfg))
    model, warnings = stage("topology", lambda: reconstruct_topology(cells, fits, cell_points, cfg))
    return PipelineResult(udf, boundary, refined, cells, cell_points, fits, model, warnings, timings)
