"""Dataset ingestion: frame files to clips, sampling policies, manifests.

Directory convention: ``root/<class>/<video>/<frame files>``.  Frames are
binary PGM (P5, read natively) or PNG (via Pillow), sorted by filename.
RGB frames convert to grayscale with luma weights 0.299/0.587/0.114;
pixel values scale to [0, 1].

Two clip-sampling policies:

* ``ar``: every window of 25 consecutive frames yields one 13-frame clip
  taking alternate frames (offsets 0, 2, ..., 24); windows advance by
  ``hop`` frames (default 25, non-overlapping).
* ``dsr``: consecutive 13-frame clips overlapping by ``overlap`` frames
  (default 7, i.e. stride 6); trailing partial windows are dropped.

Manifest file: one record per line, tab-separated
``class_name<TAB>video_path<TAB>frame_count[<TAB>subject_id]``.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

__all__ = [
    "Clip",
    "SamplingPolicy",
    "DatasetManifest",
    "ManifestEntry",
    "load_frame",
    "read_pgm",
    "write_pgm",
    "rgb_to_gray",
    "resize_bilinear",
    "sample_ar_clips",
    "sample_dsr_clips",
    "build_manifest",
    "read_manifest",
    "write_manifest",
    "split_manifest",
    "split_by_subject",
    "load_dataset",
    "save_clips",
    "load_clips",
]

FRAME_EXTENSIONS = (".pgm", ".png")


@dataclass
class Clip:
    """One grayscale spatio-temporal input unit.

    ``data`` is (frames, height, width) float32 in [0, 1], row-major and
    frame-contiguous.
    """

    width: int
    height: int
    frames: int
    data: np.ndarray
    label: int | None = None

    def __post_init__(self):
        expected = (self.frames, self.height, self.width)
        if self.data.shape != expected:
            raise ValueError(f"clip data shape {self.data.shape} != {expected}")
        if self.frames < 1:
            raise ValueError("a clip needs at least one frame")
        if not np.isfinite(self.data).all():
            raise ValueError("clip contains non-finite values")

    @classmethod
    def from_array(cls, data, label=None):
        t, h, w = data.shape
        return cls(width=w, height=h, frames=t,
                   data=np.ascontiguousarray(data, dtype=np.float32),
                   label=label)


@dataclass
class SamplingPolicy:
    """Clip sampling parameters; ``mode`` is "ar" or "dsr"."""

    mode: str = "ar"
    clip_len: int = 13
    window: int = 25
    hop: int = 25
    overlap: int = 7

    def __post_init__(self):
        if self.mode not in ("ar", "dsr"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.mode == "ar" and self.window != 2 * self.clip_len - 1:
            raise ValueError(
                f"ar window must be 2*clip_len-1 = {2 * self.clip_len - 1}, "
                f"got {self.window}"
            )
        if self.mode == "dsr" and not 0 <= self.overlap < self.clip_len:
            raise ValueError("dsr overlap must satisfy 0 <= overlap < clip_len")


# -- frames ------------------------------------------------------------------

def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM as float32 in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        # skip whitespace and '#' comment lines between header tokens
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(f) for f in fields[1:])
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: unsupported maxval {maxval} (8-bit only)")
    pos += 1  # single whitespace byte after maxval
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if raster.size != width * height:
        raise ValueError(f"{path}: truncated raster")
    return (raster.reshape(height, width).astype(np.float32) / maxval)


def write_pgm(path, image: np.ndarray):
    """Write a float [0, 1] or uint8 image as binary PGM."""
    if image.dtype != np.uint8:
        image = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode())
        fh.write(image.tobytes())


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B (channels last)."""
    rgb = np.asarray(rgb, dtype=np.float32)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def load_frame(path) -> np.ndarray:
    """Load one frame as (H, W) float32 grayscale in [0, 1]."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        return read_pgm(path)
    if ext == ".png":
        from PIL import Image

        with Image.open(path) as img:
            if img.mode in ("L", "I;16", "I"):
                arr = np.asarray(img.convert("L"), dtype=np.float32)
                return arr / 255.0
            arr = np.asarray(img.convert("RGB"), dtype=np.float32)
        return rgb_to_gray(arr) / 255.0
    raise ValueError(f"{path}: unsupported frame format {ext!r} (pgm/png)")


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers (identity at native size)."""
    in_h, in_w = image.shape
    if (in_h, in_w) == (out_h, out_w):
        return np.asarray(image, dtype=np.float32).copy()
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    img = np.asarray(image, dtype=np.float64)
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


# -- sampling ------------------------------------------------------------------

def sample_ar_clips(frames: np.ndarray, policy: SamplingPolicy,
                    label=None) -> list[Clip]:
    """Alternate-frame clips from 25-frame windows.

    ``frames`` is (T, H, W).  Videos shorter than the window yield no clips.
    """
    t = frames.shape[0]
    clips = []
    start = 0
    while start + policy.window <= t:
        idx = start + np.arange(policy.clip_len) * 2
        clips.append(Clip.from_array(frames[idx], label=label))
        start += policy.hop
    return clips


def sample_dsr_clips(frames: np.ndarray, policy: SamplingPolicy,
                     label=None) -> list[Clip]:
    """Consecutive 13-frame clips with stride ``clip_len - overlap``."""
    t = frames.shape[0]
    stride = policy.clip_len - policy.overlap
    clips = []
    start = 0
    while start + policy.clip_len <= t:
        clips.append(Clip.from_array(frames[start:start + policy.clip_len],
                                     label=label))
        start += stride
    return clips


def sample_clips(frames, policy, label=None):
    if policy.mode == "ar":
        return sample_ar_clips(frames, policy, label=label)
    return sample_dsr_clips(frames, policy, label=label)


# -- manifests -----------------------------------------------------------------

@dataclass
class ManifestEntry:
    class_name: str
    video_path: str
    frame_count: int
    subject: str | None = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)

    def class_index(self, name: str) -> int:
        return self.class_names.index(name)


def build_manifest(root, subject_pattern: str | None = None) -> DatasetManifest:
    """Scan ``root/<class>/<video>/frames`` into a manifest.

    ``subject_pattern`` is an optional regex with one group, applied to the
    video directory name to extract a subject id (for by-subject splits).
    """
    root = os.fspath(root)
    classes = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
    )
    if not classes:
        raise ValueError(f"{root}: no class directories found")
    pattern = re.compile(subject_pattern) if subject_pattern else None
    entries = []
    seen = set()
    for cls in classes:
        cls_dir = os.path.join(root, cls)
        videos = sorted(
            d for d in os.listdir(cls_dir) if os.path.isdir(os.path.join(cls_dir, d))
        )
        if not videos:
            raise ValueError(f"{cls_dir}: class directory has no videos")
        for vid in videos:
            vid_dir = os.path.join(cls_dir, vid)
            if vid_dir in seen:
                raise ValueError(f"duplicate video id {vid_dir}")
            seen.add(vid_dir)
            count = len(_frame_files(vid_dir))
            subject = None
            if pattern is not None:
                m = pattern.search(vid)
                subject = m.group(1) if m else None
            entries.append(ManifestEntry(cls, vid_dir, count, subject))
    return DatasetManifest(entries=entries, class_names=classes)


def _frame_files(video_dir):
    return sorted(
        os.path.join(video_dir, f)
        for f in os.listdir(video_dir)
        if f.lower().endswith(FRAME_EXTENSIONS)
    )


def write_manifest(path, manifest: DatasetManifest):
    with open(path, "w") as fh:
        for e in manifest.entries:
            cols = [e.class_name, e.video_path, str(e.frame_count)]
            if e.subject is not None:
                cols.append(e.subject)
            fh.write("\t".join(cols) + "\n")


def read_manifest(path) -> DatasetManifest:
    entries = []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) not in (3, 4):
                raise ValueError(f"{path}:{ln}: expected 3 or 4 tab-separated "
                                 f"columns, got {len(cols)}")
            entries.append(ManifestEntry(
                cols[0], cols[1], int(cols[2]),
                cols[3] if len(cols) == 4 else None,
            ))
    classes = sorted({e.class_name for e in entries})
    return DatasetManifest(entries=entries, class_names=classes)


def split_manifest(manifest: DatasetManifest, ratio: float, seed: int):
    """Random video-level split; the first part gets ``ratio`` of videos."""
    order = Rng(seed).permutation(len(manifest.entries))
    cut = int(round(ratio * len(order)))
    first = [manifest.entries[i] for i in order[:cut]]
    second = [manifest.entries[i] for i in order[cut:]]
    return (DatasetManifest(first, manifest.class_names),
            DatasetManifest(second, manifest.class_names))


def split_by_subject(manifest: DatasetManifest, held_out_subjects):
    """Whole-subject split: entries of the named subjects go to the second
    manifest, everything else to the first."""
    held = set(held_out_subjects)
    first = [e for e in manifest.entries if e.subject not in held]
    second = [e for e in manifest.entries if e.subject in held]
    return (DatasetManifest(first, manifest.class_names),
            DatasetManifest(second, manifest.class_names))


# -- dataset assembly ------------------------------------------------------------

def load_video(video_dir, target_hw=None) -> np.ndarray:
    """All frames of one video as (T, H, W), optionally resized."""
    files = _frame_files(video_dir)
    if not files:
        raise ValueError(f"{video_dir}: no frame files")
    frames = []
    for f in files:
        img = load_frame(f)
        if target_hw is not None:
            img = resize_bilinear(img, *target_hw)
        frames.append(img)
    return np.stack(frames)


def load_dataset(manifest: DatasetManifest, policy: SamplingPolicy,
                 target_hw=None, threads: int = 1):
    """Sample every video of a manifest into clip arrays.

    Returns ``(X, y)`` with ``X`` (n, T, H, W) float32 and integer labels.
    Videos shorter than the sampling requirement contribute no clips.
    """
    def one(entry):
        frames = load_video(entry.video_path, target_hw=target_hw)
        label = manifest.class_index(entry.class_name)
        return sample_clips(frames, policy, label=label)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_video = list(pool.map(one, manifest.entries))
    else:
        per_video = [one(e) for e in manifest.entries]

    clips = [c for group in per_video for c in group]
    if not clips:
        raise ValueError("manifest yielded no clips (videos too short?)")
    X = np.stack([c.data for c in clips])
    y = np.array([c.label for c in clips], dtype=np.int64)
    return X, y


def save_clips(path, X, y):
    """Serialize sampled clips losslessly (float32 arrays round-trip
    bit-identically)."""
    np.savez(path, clips=np.asarray(X, np.float32), labels=np.asarray(y, np.int64))


def load_clips(path):
    data = np.load(path)
    return data["clips"], data["labels"]
