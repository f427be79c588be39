import functools
import sys
import time
from pathlib import Path

import pytest

from voronoi_brep.core import Config
from voronoi_brep.gt_voronoi import boundary_from_labels
from voronoi_brep.pipeline import run_pipeline
from voronoi_brep.scenes import SCENES, add_noise, make_scene
from voronoi_brep.udf import udf_from_points, udf_from_primitive_samples

sys.path.insert(0, str(Path(__file__).parent))

SCENE_NAMES = tuple(SCENES)
NOISE_SIGMA = 0.002


@functools.lru_cache(maxsize=None)
def scene(name):
    return make_scene(name)


@functools.lru_cache(maxsize=None)
def ground_truth(name, r):
    """``(scene, udf, labels, boundary, seconds)`` from the scene's primitive samples."""
    sc = scene(name)
    t0 = time.perf_counter()
    udf, labels = udf_from_primitive_samples(sc.samples, Config(r=r))
    seconds = time.perf_counter() - t0
    return sc, udf, labels, boundary_from_labels(labels), seconds


@functools.lru_cache(maxsize=None)
def gt_pipeline(name, r):
    """Pipeline driven by the ground-truth boundary; returns ``(result, seconds)``."""
    sc, udf, _, boundary, udf_seconds = ground_truth(name, r)
    t0 = time.perf_counter()
    res = run_pipeline(udf, Config(r=r), boundary=boundary, refine=False)
    return res, udf_seconds + time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def noisy_cylinder_pipeline(r=128):
    """Noisy-sample UDF with the clean ground-truth boundary."""
    sc, _, _, boundary, _ = ground_truth("capped_cylinder", r)
    noisy = add_noise(sc.surface_points(), NOISE_SIGMA, seed=0)
    udf = udf_from_points(noisy, Config(r=r))
    return run_pipeline(udf, Config(r=r), boundary=boundary, refine=False)


@pytest.fixture(scope="session")
def gt():
    return ground_truth


@pytest.fixture(scope="session")
def pipeline_run():
    return gt_pipeline
