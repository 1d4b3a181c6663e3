import time

import numpy as np
import pytest

from poseflow.errors import BackendError, ContractError, FormatError
from poseflow.synth import (
    FileBackend,
    GroundTruthHuman,
    GroundTruthScene,
    SynthParams,
    SyntheticBackend,
    dump_feature_maps,
    load_scene_corpus,
    procedural_scene,
    render_feature_maps,
)
from poseflow.topology import load_topology
from poseflow.types import TensorF32, cell_to_pixel


@pytest.fixture(scope="module")
def topo():
    return load_topology("coco18")


def scene_with(kp_map, input_w=96, input_h=96):
    kps = [None] * 18
    for part, xy in kp_map.items():
        kps[part] = xy
    return GroundTruthScene(
        humans=(GroundTruthHuman(tuple(kps)),), input_w=input_w, input_h=input_h
    )


class TestRender:
    def test_empty_scene(self, topo):
        scene = GroundTruthScene(humans=(), input_w=64, input_h=64)
        maps = render_feature_maps(scene, topo, SynthParams())
        assert maps.conf.array[:18].max() == 0.0
        assert (maps.conf.array[18] == 1.0).all()
        assert (maps.paf.array == 0.0).all()

    def test_gaussian_peak_at_cell_center(self, topo):
        x, y = cell_to_pixel(5, 5, 8)
        scene = scene_with({0: (x, y), 1: (x, y + 16), 2: (x + 12, y), 8: (x + 12, y + 16)},
                           input_w=64, input_h=64)
        maps = render_feature_maps(scene, topo, SynthParams())
        c = maps.conf.array[0]
        assert c[5, 5] == 1.0
        rest = np.delete(c.flatten(), 5 * c.shape[1] + 5)
        assert rest.max() < 1.0

    def test_horizontal_limb_unit_vector(self, topo):
        # limb 0 connects parts (1, 2); put them at cells (4, 2) and (4, 10)
        xa, ya = cell_to_pixel(4, 2, 8)
        xb, yb = cell_to_pixel(4, 10, 8)
        scene = scene_with({1: (xa, ya), 2: (xb, yb), 5: (xa, ya + 40), 8: (xb, yb + 40)})
        maps = render_feature_maps(scene, topo, SynthParams())
        cx, cy = topo.paf_channels[0]
        for col in range(2, 11):
            assert maps.paf.array[cx, 4, col] == pytest.approx(1.0)
            assert maps.paf.array[cy, 4, col] == pytest.approx(0.0)

    def test_value_ranges_on_random_scenes(self, topo):
        p = SynthParams()
        for seq in range(5):
            scene = procedural_scene(3, seq, 320, 240, p)
            maps = render_feature_maps(scene, topo, p)
            assert maps.conf.array.min() >= 0.0
            assert maps.conf.array.max() <= 1.0
            mag = np.sqrt(
                maps.paf.array[0::2] ** 2 + maps.paf.array[1::2] ** 2
            )
            assert mag.max() <= 1.0 + 1e-6

    def test_out_of_bounds_keypoint_rejected(self, topo):
        scene = scene_with({0: (200.0, 10.0), 1: (10.0, 10.0), 2: (20.0, 20.0),
                            3: (30.0, 30.0)})
        with pytest.raises(ContractError, match="outside"):
            render_feature_maps(scene, topo, SynthParams())

    def test_extents_must_match_stride(self, topo):
        scene = GroundTruthScene(humans=(), input_w=65, input_h=64)
        with pytest.raises(ContractError, match="divisible"):
            render_feature_maps(scene, topo, SynthParams())


class TestSyntheticBackend:
    def _backend(self, topo, **kwargs):
        return SyntheticBackend(topo, SynthParams(**kwargs), 320, 240,
                                procedural_seed=9)

    def _batch(self, n):
        return TensorF32.from_array(np.zeros((n, 3, 240, 320), dtype=np.float32))

    def test_batch_invariance(self, topo):
        backend = self._backend(topo)
        singles = [backend.infer(self._batch(1), [seq])[0] for seq in range(4)]
        batched = backend.infer(self._batch(4), [0, 1, 2, 3])
        for a, b in zip(singles, batched):
            assert np.array_equal(a.conf.array, b.conf.array)
            assert np.array_equal(a.paf.array, b.paf.array)

    def test_latency_model(self, topo):
        backend = self._backend(topo, batch_overhead_us=8000, per_item_us=1000)
        t0 = time.monotonic()
        backend.infer(self._batch(4), [0, 1, 2, 3])
        assert time.monotonic() - t0 >= 0.012

    def test_procedural_determinism(self, topo):
        b1 = self._backend(topo)
        b2 = self._backend(topo)
        m1 = b1.infer(self._batch(1), [5])[0]
        m2 = b2.infer(self._batch(1), [5])[0]
        assert np.array_equal(m1.conf.array, m2.conf.array)
        assert np.array_equal(m1.paf.array, m2.paf.array)

    def test_unknown_seq_without_fallback(self, topo):
        backend = SyntheticBackend(topo, SynthParams(), 320, 240,
                                   scenes={}, procedural_seed=None)
        with pytest.raises(BackendError, match="no scene registered"):
            backend.infer(self._batch(1), [0])


class TestFileBackend:
    def _dump(self, topo, tmp_path, n):
        backend = SyntheticBackend(topo, SynthParams(), 320, 240, procedural_seed=1)
        batch = TensorF32.from_array(np.zeros((1, 3, 240, 320), dtype=np.float32))
        maps = []
        for seq in range(n):
            m = backend.infer(batch, [seq])[0]
            dump_feature_maps(m, tmp_path)
            maps.append(m)
        return maps

    def test_replay_bit_exact(self, topo, tmp_path):
        originals = self._dump(topo, tmp_path, 10)
        fb = FileBackend(tmp_path, stride=8)
        batch = TensorF32.from_array(np.zeros((10, 3, 240, 320), dtype=np.float32))
        replayed = fb.infer(batch, list(range(10)))
        for orig, back in zip(originals, replayed):
            assert np.array_equal(orig.conf.array, back.conf.array)
            assert np.array_equal(orig.paf.array, back.paf.array)

    def test_missing_file(self, topo, tmp_path):
        self._dump(topo, tmp_path, 10)
        fb = FileBackend(tmp_path, stride=8)
        batch = TensorF32.from_array(np.zeros((1, 3, 240, 320), dtype=np.float32))
        with pytest.raises(BackendError, match="10"):
            fb.infer(batch, [10])

    def test_corrupt_file_surfaces_format_error(self, topo, tmp_path):
        self._dump(topo, tmp_path, 1)
        (tmp_path / "000000.hpt").write_bytes(b"HPT1garbage")
        fb = FileBackend(tmp_path, stride=8)
        batch = TensorF32.from_array(np.zeros((1, 3, 240, 320), dtype=np.float32))
        with pytest.raises(BackendError) as excinfo:
            fb.infer(batch, [0])
        assert isinstance(excinfo.value.__cause__, FormatError)


class TestProceduralScenes:
    def test_same_seed_same_scene(self):
        p = SynthParams()
        s1 = procedural_scene(7, 3, 640, 368, p)
        s2 = procedural_scene(7, 3, 640, 368, p)
        assert s1.humans == s2.humans

    def test_separation_enforced(self):
        p = SynthParams()
        min_sep = 6.0 * p.sigma_conf * p.stride
        for seq in range(20):
            scene = procedural_scene(13, seq, 640, 368, p)
            assert 1 <= len(scene.humans) <= 5
            pts = [np.array([kp for kp in h.keypoints if kp is not None])
                   for h in scene.humans]
            for i in range(len(pts)):
                for j in range(i + 1, len(pts)):
                    d = pts[i][:, None, :] - pts[j][None, :, :]
                    assert np.sqrt((d * d).sum(axis=2)).min() >= min_sep

    def test_keypoints_in_bounds(self):
        p = SynthParams()
        for seq in range(20):
            scene = procedural_scene(21, seq, 640, 368, p)
            scene.validate(18)


def test_corpus_roundtrip(tmp_path):
    corpus = tmp_path / "scenes.toml"
    corpus.write_text(
        "input_w = 64\n"
        "input_h = 64\n"
        "seed = 4\n"
        "[[scenes]]\n"
        "[[scenes.humans]]\n"
        "keypoints = [[10.0, 10.0], [], [20.0, 20.5], [30.0, 30.0], [40.0, 40.0]]\n"
    )
    scenes, seed, w, h = load_scene_corpus(corpus)
    assert seed == 4 and (w, h) == (64, 64)
    assert len(scenes) == 1
    human = scenes[0].humans[0]
    assert human.keypoints[1] is None
    assert human.keypoints[2] == (20.0, 20.5)
    assert human.n_present == 4
