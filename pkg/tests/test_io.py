"""Record formats, detector parsing, and manifest loading."""

import json

import numpy as np
import pytest

from posehar.embed import EmbeddingChannels
from posehar.errors import MalformedFrame, ParseError, UnknownLabel
from posehar.io import (
    RawDetectionFrame,
    load_dataset,
    load_manifest,
    load_normalized_dataset,
    manifest_entry,
    merge_head,
    read_detector_clip,
    read_embedding,
    read_normalized,
    read_record,
    read_sample,
    write_embedding,
    write_manifest,
    write_normalized,
    write_sample,
)
from posehar.pose import N_LANDMARKS, Pose, Sample
from posehar.preprocess import LabeledSequence, NormalizedSequence


def random_sample(rng, frames=5, missing_prob=0.2):
    poses = []
    for _ in range(frames):
        xy = rng.normal(300.0, 80.0, (N_LANDMARKS, 2))
        present = rng.random(N_LANDMARKS) > missing_prob
        poses.append(Pose(xy, present))
    return Sample(tuple(poses), "wave", "front-left", "a3", "demo")


def random_normalized(rng, frames=6, missing=frozenset()):
    xy = rng.normal(0.0, 0.7, (frames, N_LANDMARKS, 2))
    xy[:, 1] = 0.0
    for j in missing:
        xy[:, j - 1] = 0.0
    seq = NormalizedSequence(xy, np.diff(xy, axis=0), missing)
    return LabeledSequence(seq, "squat", "rear", "a7", "demo")


def test_sample_roundtrip_is_exact_and_deterministic(tmp_path):
    rng = np.random.default_rng(10)
    for trial in range(5):
        sample = random_sample(rng)
        p1, p2 = tmp_path / f"a{trial}.seq", tmp_path / f"b{trial}.seq"
        write_sample(p1, sample)
        back = read_sample(p1)
        assert back.action == sample.action
        assert back.viewpoint == sample.viewpoint
        assert back.actor == sample.actor
        assert back.dataset == sample.dataset
        for orig, loaded in zip(sample.poses, back.poses):
            np.testing.assert_array_equal(orig.xy[orig.present], loaded.xy[loaded.present])
            np.testing.assert_array_equal(orig.present, loaded.present)
        write_sample(p2, back)
        assert p1.read_bytes() == p2.read_bytes()


def test_normalized_roundtrip_recomputes_derivatives(tmp_path):
    rng = np.random.default_rng(11)
    item = random_normalized(rng, missing=frozenset({5, 8}))
    path = tmp_path / "n.seq"
    write_normalized(path, item)
    back = read_normalized(path)
    np.testing.assert_array_equal(back.seq.xy, item.seq.xy)
    np.testing.assert_array_equal(back.seq.deriv, item.seq.deriv)
    assert back.seq.persistent_missing == frozenset({5, 8})
    assert (back.action, back.viewpoint, back.actor) == ("squat", "rear", "a7")


def test_read_record_dispatches_on_header(tmp_path):
    rng = np.random.default_rng(12)
    raw, norm = tmp_path / "raw.seq", tmp_path / "norm.seq"
    write_sample(raw, random_sample(rng))
    write_normalized(norm, random_normalized(rng))
    assert isinstance(read_record(raw), Sample)
    assert isinstance(read_record(norm), LabeledSequence)
    with pytest.raises(ParseError):
        read_sample(norm)
    with pytest.raises(ParseError):
        read_normalized(raw)


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.seq"
    bad.write_text("not a record\n")
    with pytest.raises(ParseError):
        read_sample(bad)
    bad.write_text("#posehar-seq v1 {notjson}\n0 0 1\n")
    with pytest.raises(ParseError):
        read_sample(bad)
    header = '#posehar-seq v1 {"action":"wave","actor":"a1","viewpoint":"front"}'
    bad.write_text(header + "\n")  # no frames
    with pytest.raises(ParseError):
        read_sample(bad)
    bad.write_text(header + "\n1.0 2.0 1\n")  # wrong field count
    with pytest.raises(ParseError):
        read_sample(bad)
    row = " ".join(["1.0 2.0 1"] * (N_LANDMARKS - 1)) + " 1.0 oops 1"
    bad.write_text(header + "\n" + row + "\n")
    with pytest.raises(ParseError):
        read_sample(bad)
    with pytest.raises(ParseError):
        read_sample(tmp_path / "absent.seq")


def detector_frame(xys, confidences):
    kp = np.zeros((18, 3))
    kp[:, :2] = xys
    kp[:, 2] = confidences
    return kp


def test_merge_head_averages_detected_face_points():
    kp = np.zeros((18, 3))
    kp[:, 2] = 0.9
    for i in range(18):
        kp[i, :2] = (10.0 * i, 5.0 * i)
    pose = merge_head(RawDetectionFrame(kp))
    face = [0, 14, 15, 16, 17]
    np.testing.assert_allclose(pose.xy[0], kp[face, :2].mean(axis=0))
    # neck keypoint becomes the root landmark
    np.testing.assert_array_equal(pose.xy[1], kp[1, :2])
    assert pose.present.all()


def test_merge_head_threshold_and_absence():
    kp = np.zeros((18, 3))
    kp[:, 2] = 0.4
    kp[0, 2] = 0.0
    kp[14, 2] = 0.6
    pose = merge_head(RawDetectionFrame(kp), threshold=0.5)
    # only one facial keypoint clears the threshold; it alone defines the head
    np.testing.assert_array_equal(pose.xy[0], kp[14, :2])
    assert pose.present[0]
    assert not pose.present[1:].any()
    # confidence exactly at the threshold does not count
    kp[14, 2] = 0.5
    pose = merge_head(RawDetectionFrame(kp), threshold=0.5)
    assert not pose.present.any()


def test_raw_detection_frame_validates_shape():
    with pytest.raises(MalformedFrame):
        RawDetectionFrame(np.zeros((17, 3)))


def write_clip(directory, frames):
    directory.mkdir(parents=True, exist_ok=True)
    for t, people in enumerate(frames):
        payload = {"people": [{"pose_keypoints_2d": kp.ravel().tolist()} for kp in people]}
        (directory / f"frame_{t:04d}.json").write_text(json.dumps(payload))


def test_read_detector_clip_tracks_nearest_neck(tmp_path):
    near = detector_frame(np.full((18, 2), 100.0), np.full(18, 0.5))
    far = detector_frame(np.full((18, 2), 400.0), np.full(18, 0.9))
    # frame 0: only the near person; frame 1: both, the far one more confident
    write_clip(tmp_path / "clip", [[near], [far, near]])
    poses = read_detector_clip(tmp_path / "clip")
    np.testing.assert_array_equal(poses[1].xy[1], [100.0, 100.0])
    # without a track, total confidence decides
    write_clip(tmp_path / "fresh", [[far, near]])
    poses = read_detector_clip(tmp_path / "fresh")
    np.testing.assert_array_equal(poses[0].xy[1], [400.0, 400.0])


def test_read_detector_clip_empty_frames_stay_absent(tmp_path):
    person = detector_frame(np.full((18, 2), 50.0), np.full(18, 0.8))
    write_clip(tmp_path / "clip", [[person], [], [person]])
    poses = read_detector_clip(tmp_path / "clip")
    assert len(poses) == 3
    assert not poses[1].present.any()
    empty_dir = tmp_path / "nothing_here"
    empty_dir.mkdir()
    with pytest.raises(ParseError):
        read_detector_clip(empty_dir)


def test_manifest_roundtrip_and_validation(tmp_path):
    rng = np.random.default_rng(13)
    sample = random_sample(rng)
    write_sample(tmp_path / "s0.seq", sample)
    entries = [manifest_entry("s0.seq", sample)]
    write_manifest(tmp_path / "manifest.json", ["wave"], ["front-left"], entries)
    samples, manifest = load_dataset(tmp_path / "manifest.json")
    assert len(samples) == 1
    assert samples[0].action == "wave"
    assert manifest["actions"] == ["wave"]

    with pytest.raises(ParseError):
        load_manifest(tmp_path / "s0.seq")
    bad = dict(manifest, entries=entries * 2)
    (tmp_path / "dup.json").write_text(json.dumps(bad))
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "dup.json")


def test_load_dataset_rejects_label_mismatches(tmp_path):
    rng = np.random.default_rng(14)
    sample = random_sample(rng)
    write_sample(tmp_path / "s0.seq", sample)
    entry = manifest_entry("s0.seq", sample)

    unknown_action = dict(entry, action="jump")
    write_manifest(tmp_path / "m1.json", ["wave"], ["front-left"], [unknown_action])
    with pytest.raises(UnknownLabel):
        load_dataset(tmp_path / "m1.json")

    bogus_view = dict(entry, viewpoint="sideways")
    write_manifest(tmp_path / "m2.json", ["wave"], ["sideways"], [bogus_view])
    with pytest.raises(UnknownLabel):
        load_dataset(tmp_path / "m2.json")

    # record says front-left, manifest entry says front
    lied = dict(entry, viewpoint="front")
    write_manifest(tmp_path / "m3.json", ["wave"], ["front", "front-left"], [lied])
    with pytest.raises(UnknownLabel):
        load_dataset(tmp_path / "m3.json")


def test_load_normalized_dataset(tmp_path):
    rng = np.random.default_rng(15)
    items = [random_normalized(rng) for _ in range(3)]
    entries = []
    for n, item in enumerate(items):
        name = f"n{n}.seq"
        write_normalized(tmp_path / name, item)
        entries.append(manifest_entry(name, item))
    write_manifest(tmp_path / "manifest.json", ["squat"], ["rear"], entries)
    loaded, _ = load_normalized_dataset(tmp_path / "manifest.json")
    assert len(loaded) == 3
    for item, back in zip(items, loaded):
        np.testing.assert_array_equal(back.seq.xy, item.seq.xy)


def test_embedding_roundtrip(tmp_path):
    rng = np.random.default_rng(16)
    values = rng.normal(0.0, 1.0, (7, 9))
    names = tuple(f"ch/{i}" for i in range(7))
    channels = EmbeddingChannels(values, names)
    path = tmp_path / "x.emb"
    write_embedding(path, channels, {"action": "wave", "actor": "a1"})
    back, header = read_embedding(path)
    np.testing.assert_array_equal(back.values, values)
    assert back.names == names
    # format keys are consumed; only the labels come back
    assert header == {"action": "wave", "actor": "a1"}

    twin = tmp_path / "y.emb"
    write_embedding(twin, back, {"action": "wave", "actor": "a1"})
    assert path.read_bytes() == twin.read_bytes()

    bad = tmp_path / "bad.emb"
    bad.write_text("#posehar-emb v1 {\"channels\": [\"a\"], \"length\": 3}\n1.0 2.0\n")
    with pytest.raises(ParseError):
        read_embedding(bad)
