"""Split-and-fit reconstruction of B-Rep models from unsigned distance fields.

Pipeline: point cloud -> voxel UDF -> Voronoi boundaries -> cells -> one
primitive per cell -> topology by intersecting neighbouring primitives.
"""

from .core import Config, GridGeometry, VoxelGrid
from .errors import VoronoiBrepError

__version__ = "0.1.0"

__all__ = ["Config", "GridGeometry", "VoxelGrid", "VoronoiBrepError", "__version__"]
