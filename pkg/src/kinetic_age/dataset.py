"""Dataset types, on-disk format, synthesis, and window splitting.

On disk a dataset is a directory with one ``manifest.json`` plus one CSV per
annotated segment. Coordinates are meters; every loader rejects datasets
that do not declare ``units: "m"``.

Manifest schema::

    {
      "format_version": 1,
      "units": "m",
      "subjects": [
        {"subject_id": ..., "corrected_age_days": ..., "site": ...,
         "group": ..., "segments": [
            {"segment_id": ..., "file": ..., "frame_rate": ..., "C": ..., "T": ...}
         ]}
      ]
    }

Segment CSV: header ``t,joint,x,y,z`` (no ``z`` column for 2D data), one row
per (frame, joint), frames and joints ascending, floats at full precision.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .joints import L_ANKLE, L_WRIST, NUM_JOINTS, R_ANKLE, R_WRIST, rest_pose

FORMAT_VERSION = 1
SITES = ("Pisa", "Helsinki", "Synthetic")
GROUPS = ("Typical", "MNI")
MAX_AGE_DAYS = 400.0
DEFAULT_FRAME_RATE = 30.0
TARGET_LEN = 600


@dataclass
class SkeletonSequence:
    """One annotated segment: a (C, T, V) coordinate tensor plus metadata."""

    coords: np.ndarray
    frame_rate: float = DEFAULT_FRAME_RATE
    segment_id: str = ""

    @property
    def C(self) -> int:
        return self.coords.shape[0]

    @property
    def T(self) -> int:
        return self.coords.shape[1]

    @property
    def V(self) -> int:
        return self.coords.shape[2]

    def validate(self) -> None:
        if self.coords.ndim != 3:
            raise DatasetError(
                f"segment {self.segment_id!r}: coords must be (C, T, V), got shape {self.coords.shape}"
            )
        c, t, v = self.coords.shape
        if c not in (2, 3):
            raise DatasetError(f"segment {self.segment_id!r}: C must be 2 or 3, got {c}")
        if t < 1:
            raise DatasetError(f"segment {self.segment_id!r}: empty sequence")
        if v != NUM_JOINTS:
            raise DatasetError(
                f"segment {self.segment_id!r}: expected {NUM_JOINTS} joints, got {v}"
            )
        if not np.all(np.isfinite(self.coords)):
            raise DatasetError(f"segment {self.segment_id!r}: non-finite coordinates")
        if not self.frame_rate > 0:
            raise DatasetError(f"segment {self.segment_id!r}: frame_rate must be positive")

    def copy(self) -> "SkeletonSequence":
        return SkeletonSequence(self.coords.copy(), self.frame_rate, self.segment_id)


@dataclass
class SubjectRecord:
    subject_id: str
    corrected_age_days: float
    site: str = "Synthetic"
    group: str = "Typical"
    segments: list[SkeletonSequence] = field(default_factory=list)

    def validate(self) -> None:
        if not self.segments:
            raise DatasetError(f"subject {self.subject_id!r}: no segments")
        if not (0.0 <= self.corrected_age_days <= MAX_AGE_DAYS):
            raise DatasetError(
                f"subject {self.subject_id!r}: age {self.corrected_age_days} outside [0, {MAX_AGE_DAYS}]"
            )
        if self.site not in SITES:
            raise DatasetError(f"subject {self.subject_id!r}: unknown site {self.site!r}")
        if self.group not in GROUPS:
            raise DatasetError(f"subject {self.subject_id!r}: unknown group {self.group!r}")
        dims = {seg.C for seg in self.segments}
        if len(dims) > 1:
            raise DatasetError(
                f"subject {self.subject_id!r}: mixed 2D/3D segments within one subject"
            )
        seen = set()
        for seg in self.segments:
            seg.validate()
            if seg.segment_id in seen:
                raise DatasetError(
                    f"subject {self.subject_id!r}: duplicate segment_id {seg.segment_id!r}"
                )
            seen.add(seg.segment_id)


@dataclass
class DatasetManifest:
    subjects: list[SubjectRecord] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def validate(self) -> None:
        seen = set()
        for subject in self.subjects:
            if subject.subject_id in seen:
                raise DatasetError(f"duplicate subject_id {subject.subject_id!r}")
            seen.add(subject.subject_id)
            subject.validate()

    def ages(self) -> np.ndarray:
        return np.array([s.corrected_age_days for s in self.subjects])


def _read_segment_csv(path: Path, c_expected: int, t_expected: int) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty segment file") from None
        want = ["t", "joint", "x", "y"] + (["z"] if c_expected == 3 else [])
        if header != want:
            raise DatasetError(f"{path}: bad header {header!r}, expected {want!r}")
        coords = np.empty((c_expected, t_expected, NUM_JOINTS))
        n_rows = 0
        for row in reader:
            if len(row) != len(want):
                raise DatasetError(f"{path}: row {n_rows + 2} has {len(row)} columns")
            t, j = int(row[0]), int(row[1])
            expect_t, expect_j = divmod(n_rows, NUM_JOINTS)
            if (t, j) != (expect_t, expect_j):
                raise DatasetError(
                    f"{path}: rows must cover (frame, joint) in ascending order; "
                    f"got ({t}, {j}) where ({expect_t}, {expect_j}) was expected"
                )
            try:
                vals = [float(x) for x in row[2:]]
            except ValueError as exc:
                raise DatasetError(f"{path}: bad float at row {n_rows + 2}: {exc}") from None
            coords[:, t, j] = vals
            n_rows += 1
        if n_rows != t_expected * NUM_JOINTS:
            raise DatasetError(
                f"{path}: expected {t_expected * NUM_JOINTS} rows "
                f"({t_expected} frames x {NUM_JOINTS} joints), got {n_rows}"
            )
    if not np.all(np.isfinite(coords)):
        raise DatasetError(f"{path}: non-finite coordinates")
    return coords


def load_dataset(root_path: str | Path) -> DatasetManifest:
    """Load and fully validate a dataset directory."""
    root = Path(root_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetError(f"{manifest_path}: manifest not found")
    with open(manifest_path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{manifest_path}: invalid JSON: {exc}") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise DatasetError(
            f"{manifest_path}: unsupported format_version {doc.get('format_version')!r}"
        )
    if doc.get("units") != "m":
        raise DatasetError(f"{manifest_path}: units must be 'm', got {doc.get('units')!r}")

    subjects = []
    for sub in doc.get("subjects", []):
        segments = []
        for seg in sub.get("segments", []):
            seg_path = root / seg["file"]
            if not seg_path.is_file():
                raise DatasetError(f"{seg_path}: segment file missing")
            c, t = int(seg["C"]), int(seg["T"])
            if c not in (2, 3):
                raise DatasetError(f"{seg_path}: C must be 2 or 3, got {c}")
            coords = _read_segment_csv(seg_path, c, t)
            segments.append(
                SkeletonSequence(
                    coords=coords,
                    frame_rate=float(seg["frame_rate"]),
                    segment_id=str(seg["segment_id"]),
                )
            )
        subjects.append(
            SubjectRecord(
                subject_id=str(sub["subject_id"]),
                corrected_age_days=float(sub["corrected_age_days"]),
                site=str(sub["site"]),
                group=str(sub["group"]),
                segments=segments,
            )
        )
    manifest = DatasetManifest(subjects=subjects, format_version=FORMAT_VERSION)
    manifest.validate()
    return manifest


def write_dataset(manifest: DatasetManifest, root_path: str | Path) -> None:
    """Write a dataset directory; load_dataset round-trips it bit-exactly.

    Floats are serialized with ``repr``, which is the shortest string that
    parses back to the identical IEEE-754 double.
    """
    manifest.validate()
    root = Path(root_path)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"{root}: cannot create dataset directory: {exc}") from None

    doc = {"format_version": manifest.format_version, "units": "m", "subjects": []}
    for subject in manifest.subjects:
        sub = {
            "subject_id": subject.subject_id,
            "corrected_age_days": subject.corrected_age_days,
            "site": subject.site,
            "group": subject.group,
            "segments": [],
        }
        for seg in subject.segments:
            fname = f"{seg.segment_id}.csv"
            sub["segments"].append(
                {
                    "segment_id": seg.segment_id,
                    "file": fname,
                    "frame_rate": seg.frame_rate,
                    "C": seg.C,
                    "T": seg.T,
                }
            )
            header = ["t", "joint", "x", "y"] + (["z"] if seg.C == 3 else [])
            try:
                with open(root / fname, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(header)
                    for t in range(seg.T):
                        for j in range(NUM_JOINTS):
                            writer.writerow(
                                [t, j] + [repr(float(x)) for x in seg.coords[:, t, j]]
                            )
            except OSError as exc:
                raise DatasetError(f"{root / fname}: cannot write: {exc}") from None
        doc["subjects"].append(sub)
    try:
        with open(root / "manifest.json", "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise DatasetError(f"{root / 'manifest.json'}: cannot write: {exc}") from None


def split_into_windows(seq: SkeletonSequence, target_t: int = TARGET_LEN) -> list[SkeletonSequence]:
    """Cut or tile a segment into fixed-length windows.

    Segments shorter than ``target_t`` are tiled by repetition from their own
    start; longer ones are cut into consecutive non-overlapping windows, with
    the final remainder window likewise completed by repetition from its own
    first frame. Output count is ceil(T / target_t).
    """
    if target_t < 1:
        raise ValueError("target_t must be >= 1")
    t_total = seq.T
    out = []
    n_windows = max(1, math.ceil(t_total / target_t))
    for w in range(n_windows):
        chunk = seq.coords[:, w * target_t : (w + 1) * target_t]
        if chunk.shape[1] < target_t:
            reps = math.ceil(target_t / chunk.shape[1])
            chunk = np.tile(chunk, (1, reps, 1))[:, :target_t]
        out.append(
            SkeletonSequence(
                coords=chunk.copy(),
                frame_rate=seq.frame_rate,
                segment_id=f"{seg_window_id(seq.segment_id, w)}",
            )
        )
    return out


def seg_window_id(segment_id: str, window: int) -> str:
    return f"{segment_id}#w{window}"


def _age_factor(age_days: float) -> float:
    # Developmental intensity scale, saturating outside the 50..150 day range.
    return min(max((age_days - 50.0) / 100.0, 0.0), 1.0)


def _band_limited(rng: np.random.Generator, t_axis: np.ndarray, n_harmonics: int = 4,
                  f_lo: float = 0.25, f_hi: float = 2.5) -> np.ndarray:
    """Smooth zero-mean signal: a few random sinusoids with decaying weights."""
    sig = np.zeros_like(t_axis)
    for h in range(n_harmonics):
        f = rng.uniform(f_lo, f_hi)
        phase = rng.uniform(0, 2 * np.pi)
        sig += rng.uniform(0.5, 1.0) / (h + 1) * np.sin(2 * np.pi * f * t_axis + phase)
    return sig


def synthesize_dataset(
    n_subjects: int,
    age_range: tuple[float, float] = (50.0, 150.0),
    seed: int = 0,
    mni_fraction: float = 0.0,
) -> DatasetManifest:
    """Generate a deterministic synthetic dataset with learnable age structure.

    Each subject receives 1-5 segments of 200-900 frames at 30 Hz. Joint
    trajectories are smooth band-limited oscillations around the rest pose.
    Three properties increase monotonically with the subject's age: movement
    amplitude, correlation between left and right limb drives, and the rate
    at which wrists cross the body midline. Subjects assigned to the MNI
    group (when ``mni_fraction > 0``) move with the intensity of a much
    younger effective age.
    """
    if n_subjects < 1:
        raise ValueError("n_subjects must be >= 1")
    lo, hi = float(age_range[0]), float(age_range[1])
    if lo > hi:
        raise ValueError(f"degenerate age_range: min {lo} > max {hi}")

    rng = np.random.default_rng(seed)
    base = rest_pose()  # (V, 3)
    subjects = []
    n_mni = int(round(mni_fraction * n_subjects))
    for i in range(n_subjects):
        age = lo if lo == hi else float(rng.uniform(lo, hi))
        group = "MNI" if i < n_mni else "Typical"
        effective_age = 50.0 + 0.25 * (age - 50.0) if group == "MNI" else age
        u = _age_factor(effective_age)
        amp = 0.015 + 0.045 * u
        coupling = 0.15 + 0.7 * u
        n_segments = int(rng.integers(1, 6))
        segments = []
        for s in range(n_segments):
            t_len = int(rng.integers(200, 901))
            t_axis = np.arange(t_len) / DEFAULT_FRAME_RATE
            coords = np.repeat(base.T[:, None, :], t_len, axis=1)  # (3, T, V)

            # Shared bilateral drive; per-joint independent component.
            common = np.stack([_band_limited(rng, t_axis) for _ in range(3)])
            for v in range(NUM_JOINTS):
                own = np.stack([_band_limited(rng, t_axis) for _ in range(3)])
                is_limb = v in (R_WRIST, L_WRIST, R_ANKLE, L_ANKLE)
                scale = amp * (1.5 if is_limb else 0.4)
                mix = coupling * common + (1.0 - coupling) * own if is_limb else own
                coords[:, :, v] += scale * mix
            # Wrist x-excursions toward and across the midline grow with age.
            cross = 0.04 + 0.11 * u
            for v, sign in ((R_WRIST, -1.0), (L_WRIST, 1.0)):
                coords[0, :, v] = sign * 0.11 + cross * np.sin(
                    2 * np.pi * rng.uniform(0.3, 0.8) * t_axis + rng.uniform(0, 2 * np.pi)
                )
            # Tiny high-frequency jitter, still band-limited.
            for c in range(3):
                coords[c] += 0.0015 * _band_limited(rng, t_axis, 2, 2.5, 4.0)[:, None]
            segments.append(
                SkeletonSequence(
                    coords=coords,
                    frame_rate=DEFAULT_FRAME_RATE,
                    segment_id=f"sub{i:03d}_seg{s}",
                )
            )
        subjects.append(
            SubjectRecord(
                subject_id=f"sub{i:03d}",
                corrected_age_days=age,
                site="Synthetic",
                group=group,
                segments=segments,
            )
        )
    manifest = DatasetManifest(subjects=subjects)
    manifest.validate()
    return manifest
