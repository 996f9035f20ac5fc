from __future__ import annotations

import numpy as np
import pytest

from xsection import shapes
from xsection.demo import single_object_scene
from xsection.evaluation import (convergence_curves, extract_blocky_surface, metrics_2d, metrics_3d,
                                 solid_voxelize)
from xsection.exceptions import DataError, NotWatertightError
from xsection.fusion import FusionConfig, integrate_frame, occupancy_from_grid
from xsection.geometry import Pose
from xsection.grid import GridSpec, OccupancyGrid, TsdfGrid
from xsection.pipeline import default_grid_spec
from xsection.renderer import RenderScene, render_frame
from xsection.scene_io import TriangleMesh

from conftest import CAMERA
from oracles import metrics_2d_bruteforce, sig6


def _occ(spec, mask):
    return OccupancyGrid(spec, np.asarray(mask, dtype=bool))


@pytest.fixture(scope="module")
def sphere_sequence():
    desc = single_object_scene("sphere", n_views=8)
    sc = RenderScene.from_description(desc)
    frames = [render_frame(sc, i) for i in range(len(desc.trajectory))]
    spec = default_grid_spec(sc, 0.03, 0.01)
    gt = solid_voxelize(list(zip(sc.object_ids, sc.meshes)), spec)
    return desc, frames, spec, gt


class TestVoxelize:
    def test_unit_cube(self):
        spec = GridSpec.from_bounds((-0.2, -0.2, -0.2), (1.2, 1.2, 1.2), 0.1)
        occ = solid_voxelize([(1, shapes.box(center=(0.5, 0.5, 0.5)))], spec)
        assert occ.count == 1000

    def test_empty_scene(self):
        assert solid_voxelize([], GridSpec((4, 4, 4), 0.1, (0, 0, 0))).count == 0

    def test_sphere_volume(self):
        spec = GridSpec.from_bounds((-0.45,) * 3, (0.45,) * 3, 0.02)
        occ = solid_voxelize([(1, shapes.icosphere(0.4, 5))], spec)
        vol = occ.count * 0.02 ** 3
        assert vol == pytest.approx(4 / 3 * np.pi * 0.4 ** 3, rel=0.02)

    def test_permutation_invariant(self):
        objs = [(1, shapes.icosphere(0.1, 3, center=(0.0, 0.0, 0.1))),
                (2, shapes.box((0.15, 0.1, 0.2), center=(0.05, 0.0, 0.15))),
                (3, shapes.cylinder(0.05, 0.2, 24, center=(-0.1, 0.1, 0.1)))]
        spec = GridSpec.from_bounds((-0.2, -0.15, -0.05), (0.2, 0.2, 0.3), 0.01)
        a = solid_voxelize(objs, spec).occupied
        b = solid_voxelize(objs[::-1], spec).occupied
        assert np.array_equal(a, b) and a.any()

    def test_open_mesh_names_object(self):
        m = shapes.box(center=(0.5, 0.5, 0.5))
        # drop a triangle facing along x, the direction the parity rows travel
        xface = [i for i, t in enumerate(m.triangles) if np.ptp(m.vertices[t][:, 0]) == 0][0]
        opened = TriangleMesh(m.vertices, np.delete(m.triangles, xface, axis=0))
        spec = GridSpec.from_bounds((0, 0, 0), (1, 1, 1), 0.1)
        with pytest.raises(NotWatertightError, match="object 7"):
            solid_voxelize([(7, opened)], spec)

    def test_blocky_round_trip(self, rng):
        spec = GridSpec((12, 10, 8), 0.05, (0.1, -0.2, 0.3))
        occ = rng.random(spec.dims) < 0.35
        occ[0] = False
        mesh = extract_blocky_surface(_occ(spec, occ))
        back = solid_voxelize([(1, mesh)], spec)
        assert np.array_equal(back.occupied, occ)

    def test_non_convex(self):
        m = shapes.l_shape(0.2, 0.08, 0.1)
        spec = GridSpec.from_bounds(*(b + s for b, s in zip(m.bounds(), (-0.05, 0.05))), 0.01)
        occ = solid_voxelize([(1, m)], spec)
        assert occ.count * 1e-6 == pytest.approx(shapes.signed_volume(m), rel=0.05)


class TestMetrics2D:
    def test_fixture(self):
        m = metrics_2d([[1.1, 1.8]], [[1.0, 2.0]], [[1, 1]])
        ref = metrics_2d_bruteforce([1.1, 1.8], [1.0, 2.0])
        got = (m.abs_rel, m.sqr_rel, m.rmse_linear, m.rmse_log)
        for g, r in zip(got, ref):
            assert g == pytest.approx(r, rel=1e-12)
        assert [sig6(v) for v in got] == [0.1, 0.015, 0.158114, 0.100461]
        assert m.n_pixels == 2

    def test_identity(self, rng):
        gt = rng.uniform(0.01, 1, (8, 8))
        m = metrics_2d(gt, gt, np.ones((8, 8)))
        assert (m.abs_rel, m.sqr_rel, m.rmse_linear, m.rmse_log) == (0, 0, 0, 0)

    def test_factor_two(self, rng):
        gt = rng.uniform(0.01, 1, (8, 8))
        assert metrics_2d(2 * gt, gt, np.ones((8, 8))).abs_rel == pytest.approx(1.0, abs=1e-15)

    def test_masking_and_eps(self):
        m = metrics_2d([[5.0, 1.0, 0.0]], [[1.0, 0.0, 2.0]], [[0, 1, 1]])
        assert m.n_pixels == 1
        assert m.rmse_log == pytest.approx(abs(np.log(2.0) - np.log(1e-4)))

    def test_no_valid_pixels(self):
        with pytest.raises(DataError, match="no valid pixels"):
            metrics_2d(np.ones((2, 2)), np.zeros((2, 2)), np.ones((2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(DataError, match="shape"):
            metrics_2d(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2)))


class TestMetrics3D:
    def test_identity(self):
        spec = GridSpec((3, 3, 3), 0.1, (0, 0, 0))
        g = _occ(spec, np.eye(3)[:, :, None].repeat(3, 2))
        m = metrics_3d(g, g)
        assert (m.iou, m.precision, m.recall) == (1.0, 1.0, 1.0)

    def test_slab(self):
        spec = GridSpec((2, 2, 2), 0.1, (0, 0, 0))
        gt = np.ones((2, 2, 2), bool)
        rec = np.zeros_like(gt)
        rec[:, :, 0] = True
        m = metrics_3d(_occ(spec, rec), _occ(spec, gt))
        assert (m.iou, m.precision, m.recall) == (0.5, 1.0, 0.5)
        assert (m.true_positives, m.false_negatives, m.false_positives, m.true_negatives) == (4, 4, 0, 0)

    def test_empty_recon(self):
        spec = GridSpec((2, 2, 2), 0.1, (0, 0, 0))
        m = metrics_3d(_occ(spec, np.zeros((2, 2, 2))), _occ(spec, np.ones((2, 2, 2))))
        assert (m.iou, m.precision, m.recall) == (0.0, 0.0, 0.0)

    def test_random_symmetries(self, rng):
        spec = GridSpec((10, 9, 8), 0.1, (0, 0, 0))
        for _ in range(20):
            a = _occ(spec, rng.random(spec.dims) < 0.3)
            b = _occ(spec, rng.random(spec.dims) < 0.4)
            ab, ba = metrics_3d(a, b), metrics_3d(b, a)
            assert ab.iou == ba.iou
            assert ab.precision == ba.recall and ab.recall == ba.precision
            tp, fp, fn = ab.true_positives, ab.false_positives, ab.false_negatives
            assert ab.precision == tp / (tp + fp) and ab.recall == tp / (tp + fn)
            assert tp + fp + fn + ab.true_negatives == spec.n_voxels

    def test_frame_mismatch(self):
        a = OccupancyGrid.empty(GridSpec((2, 2, 2), 0.1, (0, 0, 0)))
        b = OccupancyGrid.empty(GridSpec((2, 2, 2), 0.1, (0, 0, 0.1)))
        with pytest.raises(DataError):
            metrics_3d(a, b)


class TestConvergence:
    def test_single_frame_reconstruction_as_gt(self, sphere_sequence):
        desc, frames, spec, _ = sphere_sequence
        cfg = FusionConfig(0.03)
        g = TsdfGrid.empty(spec)
        integrate_frame(g, frames[0], desc.camera, cfg)
        gt = occupancy_from_grid(g, cfg)
        rows = convergence_curves(frames[:1], spec, gt, cfg, desc.camera)
        assert len(rows) == 1 and rows[0].iou == 1.0 and rows[0].mean_iou == 1.0

    def test_running_mean(self, sphere_sequence):
        desc, frames, spec, gt = sphere_sequence
        rows = convergence_curves(frames[:3], spec, gt, FusionConfig(0.03), desc.camera)
        assert rows[2].mean_iou == pytest.approx(np.mean([r.iou for r in rows]))
        assert [r.frame_index for r in rows] == [0, 1, 2]

    def test_iou_non_decreasing(self, sphere_sequence):
        desc, frames, spec, gt = sphere_sequence
        rows = convergence_curves(frames, spec, gt, FusionConfig(0.03), desc.camera)
        ious = [r.iou for r in rows]
        assert all(b >= a - 0.02 for a, b in zip(ious, ious[1:])), ious

    def test_enhanced_recall_dominates(self, sphere_sequence):
        desc, frames, spec, gt = sphere_sequence
        e = convergence_curves(frames, spec, gt, FusionConfig(0.03, "enhanced"), desc.camera)
        d = convergence_curves(frames, spec, gt, FusionConfig(0.03, "depth_only"), desc.camera)
        assert all(a.recall >= b.recall for a, b in zip(e, d))

    def test_single_view_recall(self, sphere_sequence):
        desc, frames, spec, gt = sphere_sequence
        rows = convergence_curves(frames[:1], spec, gt, FusionConfig(0.03), desc.camera)
        assert rows[0].recall >= 0.9

    def test_needs_frames(self, sphere_sequence):
        desc, _, spec, gt = sphere_sequence
        with pytest.raises(DataError):
            convergence_curves([], spec, gt, FusionConfig(), desc.camera)


class TestBlocky:
    def test_single_voxel(self):
        spec = GridSpec((3, 3, 3), 0.1, (0, 0, 0))
        occ = np.zeros((3, 3, 3), bool)
        occ[1, 1, 1] = True
        mesh = extract_blocky_surface(_occ(spec, occ))
        assert mesh.n_triangles == 12 and len(mesh.vertices) == 8
        assert mesh.watertight_hint
        assert shapes.signed_volume(mesh) == pytest.approx(0.001)

    def test_empty(self):
        mesh = extract_blocky_surface(OccupancyGrid.empty(GridSpec((2, 2, 2), 0.1, (0, 0, 0))))
        assert mesh.n_triangles == 0

    def test_two_voxels(self):
        spec = GridSpec((2, 1, 1), 0.1, (0, 0, 0))
        mesh = extract_blocky_surface(_occ(spec, np.ones((2, 1, 1))))
        assert mesh.n_triangles == 20 and mesh.watertight_hint

    def test_touching_boundary_is_closed(self):
        spec = GridSpec((2, 2, 2), 0.1, (0, 0, 0))
        mesh = extract_blocky_surface(_occ(spec, np.ones((2, 2, 2))))
        assert mesh.watertight_hint and mesh.n_triangles == 48
