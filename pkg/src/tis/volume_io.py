"""Image volumes, label masks, and their binary file formats.

A volume file is magic ``TISVOL1``, u32 extents H, W, D, a u32 dtype tag
(0 = float32 little-endian), then the voxel payload.  A label file is magic
``TISLBL1``, the same extents, a u32 category count C, then one u8 per
voxel.  Both store voxels first-axis-fastest: linear index
i = x + H*(y + W*z).  Round-trips are bit-exact.

Files carry already-normalized intensities: ``Volume.from_raw`` shifts and
scales raw data to zero mean / unit variance, then quantizes through
float32 so an in-memory volume and its reloaded twin are identical.
Loading never renormalizes; it would perturb the stored bits.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

_VOL_MAGIC = b"TISVOL1"
_LBL_MAGIC = b"TISLBL1"


def _check_extents(shape):
    if len(shape) != 3:
        raise ShapeError(f"expected 3 spatial extents, got shape {shape}")
    if any(s <= 0 for s in shape):
        raise ShapeError(f"extents must be positive, got {shape}")
    if any(s % 2 for s in shape):
        raise ShapeError(f"extents must be even, got {shape}")


class Volume:
    """A normalized scalar field on an even-extent voxel grid."""

    __slots__ = ("voxels",)

    def __init__(self, voxels: np.ndarray):
        voxels = np.ascontiguousarray(voxels, dtype=np.float64)
        _check_extents(voxels.shape)
        if not np.all(np.isfinite(voxels)):
            raise ValueError("volume intensities must be finite")
        self.voxels = voxels

    @classmethod
    def from_raw(cls, raw) -> "Volume":
        raw = np.asarray(raw, dtype=np.float64)
        std = raw.std()
        normed = np.zeros_like(raw) if std == 0.0 else (raw - raw.mean()) / std
        return cls(normed.astype(np.float32).astype(np.float64))

    @property
    def shape(self):
        return self.voxels.shape


class LabelMask:
    """Per-voxel category indices in [0, C); category 0 is background."""

    __slots__ = ("labels", "num_categories")

    def __init__(self, labels: np.ndarray, num_categories: int):
        labels = np.ascontiguousarray(labels, dtype=np.uint8)
        _check_extents(labels.shape)
        num_categories = int(num_categories)
        if num_categories < 1 or num_categories > 256:
            raise ValueError(f"category count out of range: {num_categories}")
        if labels.size and int(labels.max()) >= num_categories:
            raise ValueError(
                f"label {int(labels.max())} exceeds category count {num_categories}")
        self.labels = labels
        self.num_categories = num_categories

    @property
    def shape(self):
        return self.labels.shape


def save_volume(path, vol: Volume):
    _atomic_write(Path(path), volume_bytes(vol))


def load_volume(path) -> Volume:
    blob = Path(path).read_bytes()
    return parse_volume(blob, str(path))


def parse_volume(blob: bytes, origin: str = "<bytes>") -> Volume:
    if blob[:7] != _VOL_MAGIC:
        raise FormatError(f"bad volume magic in {origin}")
    if len(blob) < 7 + 16:
        raise FormatError(f"truncated volume header in {origin}")
    h, w, d, tag = struct.unpack("<IIII", blob[7 : 7 + 16])
    if tag != 0:
        raise FormatError(f"unknown volume dtype tag {tag} in {origin}")
    need = 7 + 16 + 4 * h * w * d
    if len(blob) != need:
        raise FormatError(f"volume payload size mismatch in {origin}")
    data = np.frombuffer(blob[7 + 16 :], dtype="<f4")
    voxels = data.reshape((h, w, d), order="F").astype(np.float64)
    if not np.all(np.isfinite(voxels)):
        raise FormatError(f"non-finite intensities in {origin}")
    return Volume(voxels)


def save_labels(path, mask: LabelMask):
    _atomic_write(Path(path), labels_bytes(mask))


def load_labels(path) -> LabelMask:
    blob = Path(path).read_bytes()
    return parse_labels(blob, str(path))


def parse_labels(blob: bytes, origin: str = "<bytes>") -> LabelMask:
    if blob[:7] != _LBL_MAGIC:
        raise FormatError(f"bad label magic in {origin}")
    if len(blob) < 7 + 16:
        raise FormatError(f"truncated label header in {origin}")
    h, w, d, c = struct.unpack("<IIII", blob[7 : 7 + 16])
    need = 7 + 16 + h * w * d
    if len(blob) != need:
        raise FormatError(f"label payload size mismatch in {origin}")
    labels = np.frombuffer(blob[7 + 16 :], dtype=np.uint8).reshape((h, w, d), order="F")
    try:
        return LabelMask(labels.copy(), c)
    except ValueError as e:
        raise FormatError(f"{e} in {origin}") from None


def volume_bytes(vol: Volume) -> bytes:
    h, w, d = vol.shape
    return (_VOL_MAGIC + struct.pack("<IIII", h, w, d, 0)
            + vol.voxels.astype("<f4").flatten(order="F").tobytes())


def labels_bytes(mask: LabelMask) -> bytes:
    h, w, d = mask.shape
    return (_LBL_MAGIC + struct.pack("<IIII", h, w, d, mask.num_categories)
            + mask.labels.flatten(order="F").tobytes())


def _atomic_write(path: Path, blob: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
