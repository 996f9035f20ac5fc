from __future__ import annotations

import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from xsection import shapes
from xsection.exceptions import DataError, FormatError
from xsection.geometry import Pose
from xsection.grid import GridSpec, TsdfGrid
from xsection.scene_io import (FrameBundle, SceneDescription, SceneObject, is_watertight, load_grid,
                               load_mesh, load_scene, parse_obj, read_csv, read_float_map,
                               read_frame, read_mask, save_grid, save_scene, write_csv,
                               write_float_map, write_frame, write_mask, write_mesh)

from conftest import CAMERA

CUBE_OBJ = """\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
vn 0 0 1
f 1 4 3
f 1 3 2
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestMesh:
    def test_cube_file(self, tmp_path):
        p = tmp_path / "cube.obj"
        p.write_text(CUBE_OBJ)
        m = load_mesh(p)
        assert m.n_triangles == 12 and len(m.vertices) == 8
        assert m.watertight_hint
        assert shapes.signed_volume(m) == pytest.approx(1.0)

    def test_bad_index_names_line(self):
        text = CUBE_OBJ.replace("f 4 5 8", "f 4 5 9")
        with pytest.raises(FormatError, match=r":22:.*vertex 9"):
            parse_obj(text)

    def test_quad_rejected(self):
        with pytest.raises(FormatError, match="triangular"):
            parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")

    def test_slash_and_negative_indices(self):
        m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1/1 -2/2/2 -1//3\n")
        np.testing.assert_array_equal(m.triangles, [[0, 1, 2]])

    def test_degenerate_dropped_with_warning(self):
        text = CUBE_OBJ + "v 2 2 2\nf 1 1 9\n"
        with pytest.warns(UserWarning, match="dropped 1 degenerate"):
            m = parse_obj(text)
        assert m.n_triangles == 12

    @pytest.mark.parametrize("k", [0, 1, 3])
    def test_icosphere_round_trip(self, tmp_path, k):
        ico = shapes.icosphere(0.3, k)
        write_mesh(tmp_path / "s.obj", ico)
        m = load_mesh(tmp_path / "s.obj")
        assert len(m.vertices) == 10 * 4 ** k + 2
        assert m.n_triangles == 20 * 4 ** k
        assert m.watertight_hint

    def test_open_mesh_not_watertight(self):
        m = shapes.box()
        assert is_watertight(m.triangles)
        assert not is_watertight(m.triangles[:-1])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            load_mesh(tmp_path / "nope.obj")


class TestFloatMap:
    def test_small_round_trip_with_nan(self, tmp_path):
        img = np.array([[1.0, 2.0], [3.0, np.nan]], dtype=np.float32)
        write_float_map(tmp_path / "a.pfm", img)
        back = read_float_map(tmp_path / "a.pfm")
        assert back.tobytes() == img.tobytes()

    def test_rows_bottom_to_top(self, tmp_path):
        img = np.array([[1.0], [2.0]], dtype=np.float32)
        write_float_map(tmp_path / "a.pfm", img)
        payload = (tmp_path / "a.pfm").read_bytes()[-8:]
        assert struct.unpack("<2f", payload) == (2.0, 1.0)

    def test_header(self, tmp_path):
        write_float_map(tmp_path / "a.pfm", np.zeros((3, 5)))
        assert (tmp_path / "a.pfm").read_bytes().startswith(b"Pf\n5 3\n-1.0\n")

    def test_zero_sized(self, tmp_path):
        with pytest.raises(FormatError):
            write_float_map(tmp_path / "a.pfm", np.zeros((0, 3)))
        (tmp_path / "b.pfm").write_bytes(b"Pf\n0 3\n-1.0\n")
        with pytest.raises(FormatError, match="zero-sized"):
            read_float_map(tmp_path / "b.pfm")

    def test_wrong_magic(self, tmp_path):
        (tmp_path / "a.pfm").write_bytes(b"PF\n1 1\n-1.0\n" + bytes(12))
        with pytest.raises(FormatError, match="magic"):
            read_float_map(tmp_path / "a.pfm")

    def test_truncated(self, tmp_path):
        write_float_map(tmp_path / "a.pfm", np.ones((4, 4)))
        p = tmp_path / "a.pfm"
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FormatError, match="payload"):
            read_float_map(p)

    def test_big_endian_read(self, tmp_path):
        img = np.arange(6, dtype=np.float32).reshape(2, 3)
        (tmp_path / "a.pfm").write_bytes(b"Pf\n3 2\n1.0\n" + np.flipud(img).astype(">f4").tobytes())
        np.testing.assert_array_equal(read_float_map(tmp_path / "a.pfm"), img)

    def test_large_random_hash_equal(self, tmp_path, rng):
        img = rng.normal(size=(480, 640)).astype(np.float32)
        img[rng.random(img.shape) < 0.05] = np.nan
        write_float_map(tmp_path / "a.pfm", img)
        back = read_float_map(tmp_path / "a.pfm")
        assert hashlib.sha256(back.tobytes()).digest() == hashlib.sha256(img.tobytes()).digest()

    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=16),
                      elements=st.floats(width=32, allow_nan=True, allow_infinity=True)))
    def test_round_trip_property(self, tmp_path_factory, img):
        p = tmp_path_factory.mktemp("pfm") / "x.pfm"
        write_float_map(p, img)
        assert read_float_map(p).tobytes() == img.tobytes()


class TestMask:
    def test_round_trip(self, tmp_path, rng):
        m = rng.integers(0, 256, size=(7, 9)).astype(np.uint8)
        write_mask(tmp_path / "m.pgm", m)
        np.testing.assert_array_equal(read_mask(tmp_path / "m.pgm"), m)
        assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n9 7\n255\n")

    def test_id_out_of_range(self, tmp_path):
        with pytest.raises(FormatError):
            write_mask(tmp_path / "m.pgm", np.array([[256]]))

    def test_wrong_magic(self, tmp_path):
        (tmp_path / "m.pgm").write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(FormatError, match="P5"):
            read_mask(tmp_path / "m.pgm")


def _random_grid(rng, dims):
    spec = GridSpec(dims, 0.01, rng.normal(size=3))
    return TsdfGrid(spec, rng.uniform(-1, 1, dims).astype(np.float32),
                    rng.integers(0, 100, dims).astype(np.float32))


class TestGridDump:
    def test_single_voxel(self, tmp_path):
        g = TsdfGrid(GridSpec((1, 1, 1), 0.05, (0.1, 0.2, 0.3)), np.full((1, 1, 1), -1, np.float32),
                     np.full((1, 1, 1), 3, np.float32))
        save_grid(tmp_path / "g.xsgrid", g)
        back = load_grid(tmp_path / "g.xsgrid")
        assert back.spec == g.spec
        assert back.phi[0, 0, 0] == -1 and back.weight[0, 0, 0] == 3

    def test_layout_is_x_fastest(self, tmp_path):
        phi = np.zeros((2, 3, 1), np.float32)
        phi[1, 0, 0] = 5
        g = TsdfGrid(GridSpec((2, 3, 1), 0.1, (0, 0, 0)), phi, np.zeros_like(phi))
        save_grid(tmp_path / "g.xsgrid", g)
        data = (tmp_path / "g.xsgrid").read_bytes()
        assert data[:8] == b"XSGRID01"
        assert struct.unpack_from("<3I", data, 8) == (2, 3, 1)
        assert struct.unpack_from("<6f", data, 36) == (0, 5, 0, 0, 0, 0)

    def test_random_64_cubed(self, tmp_path, rng):
        g = _random_grid(rng, (64, 64, 64))
        save_grid(tmp_path / "g.xsgrid", g)
        back = load_grid(tmp_path / "g.xsgrid")
        assert back.spec == g.spec
        assert back.phi.tobytes() == g.phi.tobytes()
        assert back.weight.tobytes() == g.weight.tobytes()
        save_grid(tmp_path / "h.xsgrid", back)
        assert _sha(tmp_path / "g.xsgrid") == _sha(tmp_path / "h.xsgrid")

    def test_corrupt_magic(self, tmp_path, rng):
        save_grid(tmp_path / "g.xsgrid", _random_grid(rng, (2, 2, 2)))
        p = tmp_path / "g.xsgrid"
        p.write_bytes(b"XSGRID02" + p.read_bytes()[8:])
        with pytest.raises(FormatError, match="XSGRID01"):
            load_grid(p)

    def test_payload_mismatch(self, tmp_path, rng):
        save_grid(tmp_path / "g.xsgrid", _random_grid(rng, (2, 2, 2)))
        p = tmp_path / "g.xsgrid"
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(FormatError, match="payload"):
            load_grid(p)


class TestScene:
    def _scene(self):
        objs = [SceneObject(1, Pose(translation=(0, 0, 0.1)), mesh=shapes.box((0.1, 0.1, 0.1))),
                SceneObject(7, Pose(), mesh=shapes.icosphere(0.05, 1))]
        return SceneDescription(objs, CAMERA, [Pose(), Pose(translation=(0, 0, -1))], plane_height=0.0)

    def test_round_trip(self, tmp_path):
        save_scene(tmp_path / "scene.json", self._scene())
        d = json.loads((tmp_path / "scene.json").read_text())
        assert d["version"] == 1
        assert np.array(d["trajectory"][1]).shape == (3, 4)
        assert d["objects"][0]["mesh"] == "object_001.obj"
        back = load_scene(tmp_path / "scene.json")
        assert [o.id for o in back.objects] == [1, 7]
        assert back.camera == CAMERA
        assert back.plane_height == 0.0
        assert back.trajectory[1] == Pose(translation=(0, 0, -1))
        assert back.objects[1].mesh.n_triangles == 80

    def test_duplicate_ids(self):
        o = SceneObject(1, Pose(), mesh=shapes.box())
        with pytest.raises(DataError, match="duplicate"):
            SceneDescription([o, SceneObject(1, Pose(), mesh=shapes.box())], CAMERA, [Pose()])

    @pytest.mark.parametrize("oid", [0, 256])
    def test_reserved_ids(self, oid):
        with pytest.raises(DataError):
            SceneDescription([SceneObject(oid, Pose(), mesh=shapes.box())], CAMERA, [Pose()])

    def test_empty_trajectory(self):
        with pytest.raises(DataError, match="trajectory"):
            SceneDescription([], CAMERA, [])

    def test_bad_version(self, tmp_path):
        save_scene(tmp_path / "scene.json", self._scene())
        d = json.loads((tmp_path / "scene.json").read_text())
        d["version"] = 2
        (tmp_path / "scene.json").write_text(json.dumps(d))
        with pytest.raises(FormatError, match="version"):
            load_scene(tmp_path / "scene.json")


class TestFrame:
    def test_invariants(self):
        z = np.zeros((2, 2))
        with pytest.raises(DataError, match="background"):
            FrameBundle(z, np.ones((2, 2)), z, Pose())
        with pytest.raises(DataError, match="negative"):
            FrameBundle(z, -np.ones((2, 2)), np.ones((2, 2)), Pose())
        with pytest.raises(DataError, match="shape"):
            FrameBundle(z, z, np.zeros((2, 3)), Pose())

    def test_write_read(self, tmp_path, rng):
        masks = rng.integers(0, 3, size=(6, 8))
        thick = np.where(masks > 0, rng.uniform(0, 1, masks.shape), 0)
        depth = rng.uniform(0.5, 2, masks.shape)
        depth[0, 0] = np.nan
        f = FrameBundle(depth, thick, masks, Pose(), 12)
        paths = write_frame(tmp_path, f)
        assert sorted(p.name for p in paths) == ["frame_00012.depth.pfm", "frame_00012.mask.pgm",
                                                 "frame_00012.thick.pfm"]
        g = read_frame(tmp_path, 12, Pose())
        assert g.depth.tobytes() == f.depth.tobytes()
        assert g.thickness.tobytes() == f.thickness.tobytes()
        np.testing.assert_array_equal(g.masks, f.masks)

    def test_missing(self, tmp_path):
        with pytest.raises(DataError, match="frame_00003"):
            read_frame(tmp_path, 3, Pose())


class TestCsv:
    def test_format(self, tmp_path):
        write_csv(tmp_path / "r.csv", ["a", "b", "c"], [[1, 0.1234567891, "x"], [np.int64(2), 1e-9, True]])
        raw = (tmp_path / "r.csv").read_bytes()
        assert b"\r" not in raw
        assert raw.decode() == "a,b,c\n1,0.123457,x\n2,1e-09,1\n"
        assert read_csv(tmp_path / "r.csv")[0] == {"a": "1", "b": "0.123457", "c": "x"}
