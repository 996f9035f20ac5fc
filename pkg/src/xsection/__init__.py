"""Thickness-enhanced TSDF fusion toolkit.

Render cross-sectional thickness from watertight meshes, fuse depth and
thickness frames into a TSDF volume, and score reconstructions against
solid voxelizations.
"""

__version__ = "0.1.0"

from .evaluation import (Metrics2D, Metrics3D, convergence_curves, extract_blocky_surface,
                         metrics_2d, metrics_3d, solid_voxelize)
from .exceptions import DataError, FormatError, GeometryError, NotWatertightError, XSectionError
from .fusion import (FusionConfig, TsdfFusion, fuse_voxel, integrate_frame, occupancy_from_grid,
                     phi_depth_only, phi_thickness)
from .geometry import CameraIntrinsics, Pose, Ray, project, ray_for_pixel, unproject, voxel_to_camera
from .grid import GridSpec, OccupancyGrid, TsdfGrid
from .providers import (MeanThicknessBaseline, ObjectPatchExtractor, compose_thickness_frame,
                        expand_bbox_4_3, fill_depth_holes, normalize_depth_patch)
from .renderer import RenderScene, first_hit, render_depth, render_frame, render_thickness_and_masks
from .scene_io import FrameBundle, SceneDescription, TriangleMesh, load_mesh, load_scene

__all__ = [
    "CameraIntrinsics", "Pose", "Ray", "project", "unproject", "ray_for_pixel", "voxel_to_camera",
    "TriangleMesh", "SceneDescription", "FrameBundle", "load_mesh", "load_scene",
    "RenderScene", "first_hit", "render_depth", "render_thickness_and_masks", "render_frame",
    "MeanThicknessBaseline", "ObjectPatchExtractor", "compose_thickness_frame", "expand_bbox_4_3",
    "fill_depth_holes", "normalize_depth_patch",
    "FusionConfig", "TsdfFusion", "TsdfGrid", "GridSpec", "OccupancyGrid", "phi_thickness",
    "phi_depth_only", "fuse_voxel", "integrate_frame", "occupancy_from_grid",
    "Metrics2D", "Metrics3D", "solid_voxelize", "metrics_2d", "metrics_3d", "convergence_curves",
    "extract_blocky_surface",
    "XSectionError", "DataError", "FormatError", "GeometryError", "NotWatertightError",
]
