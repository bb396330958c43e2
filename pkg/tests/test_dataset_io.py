import json

import numpy as np
import pytest

from kinetic_age.dataset import (
    DatasetManifest,
    SkeletonSequence,
    SubjectRecord,
    load_dataset,
    split_into_windows,
    synthesize_dataset,
    write_dataset,
)
from kinetic_age.errors import DatasetError


def _tiny_manifest(rng, n=2, c=3):
    subjects = []
    for i in range(n):
        segs = [
            SkeletonSequence(rng.standard_normal((c, 40 + 10 * i, 18)),
                             30.0, f"s{i}_{k}")
            for k in range(2)
        ]
        subjects.append(SubjectRecord(f"sub{i}", 80.0 + i, "Synthetic", "Typical", segs))
    return DatasetManifest(subjects=subjects)


def test_write_load_round_trip_bit_exact(tmp_path, rng):
    manifest = _tiny_manifest(rng)
    write_dataset(manifest, tmp_path / "ds")
    loaded = load_dataset(tmp_path / "ds")
    assert len(loaded.subjects) == 2
    for orig, back in zip(manifest.subjects, loaded.subjects):
        assert back.subject_id == orig.subject_id
        assert back.corrected_age_days == orig.corrected_age_days
        assert back.site == orig.site and back.group == orig.group
        for s_orig, s_back in zip(orig.segments, back.segments):
            assert s_back.segment_id == s_orig.segment_id
            assert s_back.frame_rate == s_orig.frame_rate
            assert np.array_equal(s_back.coords, s_orig.coords)  # bit exact


def test_round_trip_2d(tmp_path, rng):
    manifest = _tiny_manifest(rng, c=2)
    write_dataset(manifest, tmp_path / "ds")
    loaded = load_dataset(tmp_path / "ds")
    assert loaded.subjects[0].segments[0].C == 2
    assert np.array_equal(loaded.subjects[0].segments[0].coords,
                          manifest.subjects[0].segments[0].coords)


def test_empty_manifest_round_trip(tmp_path):
    write_dataset(DatasetManifest(subjects=[]), tmp_path / "ds")
    assert load_dataset(tmp_path / "ds").subjects == []


def test_wrong_joint_count_rejected(tmp_path, rng):
    seq = SkeletonSequence(rng.standard_normal((3, 10, 17)), 30.0, "bad")
    manifest = DatasetManifest(
        subjects=[SubjectRecord("x", 80.0, "Synthetic", "Typical", [seq])])
    with pytest.raises(DatasetError, match="joint"):
        write_dataset(manifest, tmp_path / "ds")


def test_missing_segment_file_reported_with_path(tmp_path, rng):
    write_dataset(_tiny_manifest(rng), tmp_path / "ds")
    victim = tmp_path / "ds" / "s0_1.csv"
    victim.unlink()
    with pytest.raises(DatasetError, match="s0_1.csv"):
        load_dataset(tmp_path / "ds")


def test_nan_coordinates_rejected(tmp_path, rng):
    manifest = _tiny_manifest(rng)
    write_dataset(manifest, tmp_path / "ds")
    path = tmp_path / "ds" / "s0_0.csv"
    content = path.read_text().splitlines()
    parts = content[1].split(",")
    parts[2] = "nan"
    content[1] = ",".join(parts)
    path.write_text("\n".join(content) + "\n")
    with pytest.raises(DatasetError, match="finite"):
        load_dataset(tmp_path / "ds")


def test_duplicate_subject_rejected(rng):
    manifest = _tiny_manifest(rng)
    manifest.subjects[1].subject_id = manifest.subjects[0].subject_id
    with pytest.raises(DatasetError, match="duplicate"):
        manifest.validate()


def test_mixed_dims_within_subject_rejected(tmp_path, rng):
    subj = SubjectRecord("x", 80.0, "Synthetic", "Typical", [
        SkeletonSequence(rng.standard_normal((3, 10, 18)), 30.0, "a"),
        SkeletonSequence(rng.standard_normal((2, 10, 18)), 30.0, "b"),
    ])
    with pytest.raises(DatasetError, match="mixed"):
        write_dataset(DatasetManifest(subjects=[subj]), tmp_path / "ds")


def test_units_field_enforced(tmp_path, rng):
    write_dataset(_tiny_manifest(rng), tmp_path / "ds")
    mpath = tmp_path / "ds" / "manifest.json"
    doc = json.loads(mpath.read_text())
    doc["units"] = "cm"
    mpath.write_text(json.dumps(doc))
    with pytest.raises(DatasetError, match="units"):
        load_dataset(tmp_path / "ds")


def test_age_range_enforced(rng):
    manifest = _tiny_manifest(rng)
    manifest.subjects[0].corrected_age_days = 500.0
    with pytest.raises(DatasetError, match="age"):
        manifest.validate()


# --- window splitting ---------------------------------------------------


def _seq_of_length(t):
    coords = np.arange(t, dtype=float)[None, :, None] * np.ones((1, 1, 18))
    return SkeletonSequence(np.concatenate([coords, coords, coords]), 30.0, "w")


def test_windows_identity_at_target():
    out = split_into_windows(_seq_of_length(600), 600)
    assert len(out) == 1
    assert np.array_equal(out[0].coords, _seq_of_length(600).coords)


def test_windows_tile_short_segment():
    out = split_into_windows(_seq_of_length(250), 600)
    assert len(out) == 1
    frames = out[0].coords[0, :, 0]
    expected = np.concatenate([np.arange(250), np.arange(250), np.arange(100)])
    assert np.array_equal(frames, expected)


def test_windows_cut_long_segment_and_tile_tail():
    out = split_into_windows(_seq_of_length(1300), 600)
    assert len(out) == 3
    assert np.array_equal(out[0].coords[0, :, 0], np.arange(600))
    assert np.array_equal(out[1].coords[0, :, 0], np.arange(600, 1200))
    tail = out[2].coords[0, :, 0]
    expected = np.concatenate([np.arange(1200, 1300)] * 6)
    assert np.array_equal(tail, expected)


@pytest.mark.parametrize("t", [1, 37, 599, 600, 601, 1200, 1999])
def test_window_count_is_ceil(t):
    out = split_into_windows(_seq_of_length(t), 600)
    assert len(out) == -(-t // 600)
    assert all(w.T == 600 for w in out)
    # non-repeated prefix of the windows reproduces the source
    flat = np.concatenate([w.coords[0, :, 0] for w in out])
    reconstructed = []
    for i, w in enumerate(out):
        lo = i * 600
        hi = min((i + 1) * 600, t)
        reconstructed.append(w.coords[0, : hi - lo, 0])
    assert np.array_equal(np.concatenate(reconstructed), np.arange(t))


# --- synthesis ----------------------------------------------------------


def test_synthesize_deterministic():
    a = synthesize_dataset(4, (50, 150), seed=7)
    b = synthesize_dataset(4, (50, 150), seed=7)
    assert len(a.subjects) == len(b.subjects) == 4
    for sa, sb in zip(a.subjects, b.subjects):
        assert sa.corrected_age_days == sb.corrected_age_days
        for ga, gb in zip(sa.segments, sb.segments):
            assert np.array_equal(ga.coords, gb.coords)


def test_synthesize_point_age_range():
    m = synthesize_dataset(1, (90, 90), seed=1)
    assert len(m.subjects) == 1
    assert m.subjects[0].corrected_age_days == 90.0


def test_synthesize_rejects_inverted_range():
    with pytest.raises(ValueError, match="age_range"):
        synthesize_dataset(3, (150, 50), seed=0)


def test_synthesize_segment_shapes():
    m = synthesize_dataset(6, (50, 150), seed=3)
    for s in m.subjects:
        assert 1 <= len(s.segments) <= 5
        for seg in s.segments:
            assert 200 <= seg.T <= 900
            assert seg.C == 3
            assert seg.frame_rate == 30.0


def test_synthesize_age_velocity_correlation():
    # The generator must encode age in movement amplitude strongly enough to
    # be learnable; checked directly on per-subject mean speed.
    m = synthesize_dataset(100, (50, 150), seed=3)
    ages, speed = [], []
    for s in m.subjects:
        ages.append(s.corrected_age_days)
        amps = [np.abs(np.diff(seg.coords, axis=1)).mean() for seg in s.segments]
        speed.append(np.mean(amps))
    r = np.corrcoef(ages, speed)[0, 1]
    assert r > 0.5, f"age/velocity-amplitude correlation too weak: {r:.3f}"


def test_synthesize_midline_crossing_increases_with_age():
    from kinetic_age.joints import L_WRIST

    m = synthesize_dataset(60, (50, 150), seed=11)
    ages, crossings = [], []
    for s in m.subjects:
        ages.append(s.corrected_age_days)
        rates = []
        for seg in s.segments:
            x = seg.coords[0, :, L_WRIST]
            rates.append(np.mean(np.sign(x[1:]) != np.sign(x[:-1])))
        crossings.append(np.mean(rates))
    assert np.corrcoef(ages, crossings)[0, 1] > 0.3


def test_synthesize_mni_group_moves_less():
    m = synthesize_dataset(40, (100, 150), seed=9, mni_fraction=0.5)
    amp = {"Typical": [], "MNI": []}
    for s in m.subjects:
        a = np.mean([np.abs(np.diff(seg.coords, axis=1)).mean() for seg in s.segments])
        amp[s.group].append(a)
    assert np.mean(amp["MNI"]) < np.mean(amp["Typical"])
