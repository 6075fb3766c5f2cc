"""Feature file round trips, clip splitting, synthetic dataset properties."""

import numpy as np
import pytest

from aftal.losses import Annotation, Instance
from aftal.pipeline import (
    ClipSpec,
    DatasetError,
    SynthSpec,
    VideoRecord,
    load_dataset,
    load_detections,
    load_features,
    load_splits,
    resample_record,
    save_dataset,
    save_detections,
    save_features,
    split_clips,
    synth_dataset,
)
from aftal.pipeline.records import Detection


def make_record(frames=512, rows_per_frame=1, channels=3, instances=(),
                video_id="v0", fps=10.0, seed=0):
    rng = np.random.default_rng(seed)
    s = rows_per_frame
    rows = frames // s
    return VideoRecord(
        id=video_id,
        features={"rgb": rng.normal(size=(rows, channels))},
        frames_per_step=float(s),
        annotation=Annotation([Instance(*i) for i in instances]),
        fps=fps,
        duration_frames=float(frames),
    )


class TestFeatureFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.normal(size=(37, 5)).astype(np.float32)
        path = tmp_path / "x.feat"
        save_features(path, values, fps=10.0)
        loaded, fps = load_features(path)
        assert fps == 10.0
        np.testing.assert_array_equal(loaded, values.astype(np.float64))

    def test_reserialization_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.normal(size=(16, 4))
        save_features(tmp_path / "a.feat", values, fps=25.0)
        loaded, fps = load_features(tmp_path / "a.feat")
        save_features(tmp_path / "b.feat", loaded, fps=fps)
        assert (tmp_path / "a.feat").read_bytes() == (tmp_path / "b.feat").read_bytes()

    def test_header_fields(self, tmp_path):
        save_features(tmp_path / "h.feat", np.zeros((8, 2)), fps=12.5)
        raw = (tmp_path / "h.feat").read_bytes()
        assert raw[:4] == b"AFSD"
        import struct
        version, t, c, fps = struct.unpack_from("<HIIf", raw, 4)
        assert (version, t, c, fps) == (1, 8, 2, 12.5)

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "bad.feat").write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(DatasetError):
            load_features(tmp_path / "bad.feat")

    def test_truncation_rejected(self, tmp_path):
        save_features(tmp_path / "t.feat", np.zeros((8, 2)), fps=10.0)
        raw = (tmp_path / "t.feat").read_bytes()
        (tmp_path / "t.feat").write_bytes(raw[:-4])
        with pytest.raises(DatasetError):
            load_features(tmp_path / "t.feat")


class TestDatasetRoundTrip:
    def test_save_load(self, tmp_path):
        records = [
            make_record(instances=[(10, 50, 1), (100, 180, 2)], video_id="a"),
            make_record(frames=256, instances=[(30, 90, 2)], video_id="b", seed=1),
        ]
        save_dataset(tmp_path, records, ["one", "two"], {"train": ["a"], "test": ["b"]})
        loaded, labels = load_dataset(tmp_path)
        assert labels == ["one", "two"]
        assert [r.id for r in loaded] == ["a", "b"]
        np.testing.assert_allclose(loaded[0].features["rgb"],
                                   records[0].features["rgb"].astype(np.float32),
                                   rtol=1e-6)
        got = [(i.start, i.end, i.label) for i in loaded[0].annotation.instances]
        assert got == [(10, 50, 1), (100, 180, 2)]
        assert load_splits(tmp_path) == {"train": ["a"], "test": ["b"]}

    def test_detections_round_trip(self, tmp_path):
        labels = ["one", "two"]
        dets = [Detection("a", 10.0, 50.0, 1, 0.9), Detection("b", 5.0, 25.0, 2, 0.25)]
        path = tmp_path / "dets.csv"
        save_detections(path, dets, labels, {"a": 10.0, "b": 10.0})
        loaded = load_detections(path, labels)
        assert [(d.video_id, d.start, d.end, d.label) for d in loaded] == \
            [("a", 1.0, 5.0, 1), ("b", 0.5, 2.5, 2)]
        assert loaded[0].score == pytest.approx(0.9, abs=1e-6)


class TestSplitClips:
    def test_stride_fixture(self):
        record = make_record(frames=512)
        clips = split_clips(record, ClipSpec(clip_length=256, test_overlap=128),
                            mode="test")
        assert [c.clip_start for c in clips] == [0.0, 128.0, 256.0]

    def test_short_video_single_padded_clip(self):
        record = make_record(frames=100)
        clips = split_clips(record, ClipSpec(clip_length=256), mode="train")
        assert len(clips) == 1
        assert clips[0].num_rows == 256
        np.testing.assert_array_equal(clips[0].values[100:], 0.0)

    def test_coverage_and_monotone_starts(self):
        record = make_record(frames=520)
        clips = split_clips(record, ClipSpec(clip_length=256, train_overlap=30),
                            mode="train")
        starts = [c.clip_start for c in clips]
        assert starts == sorted(starts)
        assert starts[0] == 0.0
        covered_until = 0.0
        for c in clips:
            assert c.clip_start <= covered_until
            covered_until = max(covered_until, c.clip_start + c.clip_length)
        assert covered_until >= 520

    def test_annotations_translated_and_clipped(self):
        record = make_record(frames=512, instances=[(100, 300, 1), (380, 385, 2)])
        clips = split_clips(record, ClipSpec(clip_length=256, test_overlap=128),
                            mode="test")
        first = clips[0].annotation.instances
        assert [(i.start, i.end) for i in first] == [(100.0, 256.0)]
        second = clips[1].annotation.instances
        assert [(i.start, i.end, i.label) for i in second] == \
            [(0.0, 172.0, 1), (252.0, 256.0, 2)]

    def test_sub_frame_slivers_dropped(self):
        record = make_record(frames=512, instances=[(255.5, 300, 1)])
        clips = split_clips(record, ClipSpec(clip_length=256, test_overlap=0),
                            mode="test")
        assert clips[0].annotation.instances == []
        assert len(clips[1].annotation.instances) == 1

    def test_row_stride_respected(self):
        record = make_record(frames=512, rows_per_frame=4)
        clips = split_clips(record, ClipSpec(clip_length=256, test_overlap=128),
                            mode="test")
        assert all(c.values.shape[0] == 64 for c in clips)
        assert [c.clip_start for c in clips] == [0.0, 128.0, 256.0]

    def test_single_clip_mode_resamples(self):
        record = make_record(frames=512, rows_per_frame=4,
                             instances=[(100, 300, 1)])
        clips = split_clips(record, ClipSpec(clip_length=256,
                                             single_clip_frames=768), mode="test")
        assert len(clips) == 1
        assert clips[0].values.shape[0] == 768 // 4
        inst = clips[0].annotation.instances[0]
        assert inst.start == pytest.approx(150.0)
        assert inst.end == pytest.approx(450.0)


class TestResample:
    def test_length_and_scaling(self):
        record = make_record(frames=512, rows_per_frame=4, instances=[(64, 256, 1)])
        out = resample_record(record, 768)
        assert out.duration_frames == 768
        assert out.features["rgb"].shape[0] == 768 // 4
        inst = out.annotation.instances[0]
        assert inst.start == pytest.approx(96.0)
        assert inst.end == pytest.approx(384.0)

    def test_constant_features_preserved(self):
        record = make_record(frames=512, rows_per_frame=4)
        record.features["rgb"][:] = 3.25
        out = resample_record(record, 256)
        np.testing.assert_allclose(out.features["rgb"], 3.25)


class TestSynthDataset:
    def test_determinism(self):
        spec = SynthSpec(num_train=3, num_test=2)
        a_records, a_labels, a_splits = synth_dataset(11, spec)
        b_records, b_labels, b_splits = synth_dataset(11, spec)
        assert a_labels == b_labels and a_splits == b_splits
        for ra, rb in zip(a_records, b_records):
            np.testing.assert_array_equal(ra.features["rgb"], rb.features["rgb"])
            assert [(i.start, i.end, i.label) for i in ra.annotation.instances] == \
                [(i.start, i.end, i.label) for i in rb.annotation.instances]

    def test_different_seeds_differ(self):
        spec = SynthSpec(num_train=2, num_test=1)
        a, _, _ = synth_dataset(1, spec)
        b, _, _ = synth_dataset(2, spec)
        assert not np.array_equal(a[0].features["rgb"], b[0].features["rgb"])

    def test_annotations_exact_by_construction(self):
        records, labels, _ = synth_dataset(3, SynthSpec(num_train=4, num_test=2))
        assert len(labels) == 3
        for rec in records:
            for inst in rec.annotation.instances:
                assert 0 <= inst.start < inst.end <= rec.duration_frames
                assert 1 <= inst.label <= 3

    def test_every_class_in_both_splits(self):
        records, labels, splits = synth_dataset(5, SynthSpec(num_train=12, num_test=5))
        for split_name, ids in splits.items():
            wanted = set(ids)
            seen = {i.label for r in records if r.id in wanted
                    for i in r.annotation.instances}
            assert seen == {1, 2, 3}, split_name

    def test_planted_action_raises_feature_energy(self):
        records, _, _ = synth_dataset(7, SynthSpec(num_train=4, num_test=1,
                                                   signal_to_noise=3.0))
        rec = records[0]
        inst = rec.annotation.instances[0]
        s = rec.frames_per_step
        rows = rec.features["rgb"]
        inside = rows[int(inst.start // s) + 1:int(inst.end // s) - 1]
        norm_inside = np.linalg.norm(inside, axis=1).mean()
        background = rows[:max(int(inst.start // s) - 2, 1)]
        if background.shape[0] >= 2:
            norm_bg = np.linalg.norm(background, axis=1).mean()
            assert norm_inside > norm_bg

    def test_zero_snr_is_pure_noise(self):
        spec = SynthSpec(num_train=2, num_test=1, signal_to_noise=0.0)
        records, _, _ = synth_dataset(9, spec)
        # with no signal the feature distribution is standard normal
        values = np.concatenate([r.features["rgb"].ravel() for r in records])
        assert abs(values.mean()) < 0.05
        assert abs(values.std() - 1.0) < 0.05
        # annotations still exist (labels uncorrelated with features)
        assert any(r.annotation.instances for r in records)
