"""Feature matrix + per-row metadata: the data model shared by every module.

Disk layout
-----------
Feature file (binary): magic ``GCRF``, format version as u16, row count n as
u32, dimensionality d as u32, all little-endian, followed by ``n * d``
float32 values in row-major order. Storage is 32-bit; everything in memory
is float64 so downstream arithmetic and oracle comparisons stay tight.

Metadata file (UTF-8 CSV): header ``index,person_id,camera_id,tracklet_id,split``
with one row per feature row, sorted by index. ``split`` is ``query`` or
``gallery``. ``person_id`` -1 marks distractor/junk rows.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from gcr.errors import (
    MalformedHeaderError,
    MetaMismatchError,
    NonFiniteError,
    PayloadSizeError,
    ValidationError,
    ZeroRowError,
)

MAGIC = b"GCRF"
FORMAT_VERSION = 1
SPLITS = ("query", "gallery")

_HEADER = struct.Struct("<4sHII")


@dataclass(frozen=True)
class RowMeta:
    """Identity, camera, tracklet and protocol split for one feature row."""

    person_id: int
    camera_id: int
    tracklet_id: int
    split: str

    def __post_init__(self):
        if self.camera_id < 0:
            raise ValidationError(f"camera_id must be nonnegative, got {self.camera_id}")
        if self.tracklet_id < 0:
            raise ValidationError(f"tracklet_id must be nonnegative, got {self.tracklet_id}")
        if self.split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got {self.split!r}")


class FeatureSet:
    """Immutable n x d float64 feature matrix with aligned row metadata.

    The matrix is validated on construction (finite values, at least one row
    and column, metadata length equal to n) and marked read-only, so a
    FeatureSet can be shared freely across threads.
    """

    def __init__(self, data, meta):
        data = np.ascontiguousarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if n < 1 or d < 1:
            raise ValidationError(f"feature matrix must be at least 1x1, got {n}x{d}")
        finite_rows = np.isfinite(data).all(axis=1)
        if not finite_rows.all():
            raise NonFiniteError(int(np.flatnonzero(~finite_rows)[0]))
        meta = tuple(meta)
        if len(meta) != n:
            raise MetaMismatchError(
                f"metadata has {len(meta)} rows but feature matrix has {n}"
            )
        data.flags.writeable = False
        self.data = data
        self.meta = meta
        self.person_ids = _frozen(np.fromiter((m.person_id for m in meta), np.int64, n))
        self.camera_ids = _frozen(np.fromiter((m.camera_id for m in meta), np.int64, n))
        self.tracklet_ids = _frozen(np.fromiter((m.tracklet_id for m in meta), np.int64, n))
        self.is_query = _frozen(np.fromiter((m.split == "query" for m in meta), bool, n))

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def with_data(self, data):
        """New FeatureSet with the same metadata and a replaced matrix."""
        return FeatureSet(data, self.meta)

    def __eq__(self, other):
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return self.meta == other.meta and np.array_equal(self.data, other.data)


def _frozen(arr):
    arr.flags.writeable = False
    return arr


def l2_normalize(fs: FeatureSet) -> FeatureSet:
    """Scale every row to unit Euclidean norm.

    Raises ZeroRowError naming the first offending row if any row has an
    exactly zero norm; there is no epsilon fudge.
    """
    norms = np.linalg.norm(fs.data, axis=1)
    zero = norms == 0.0
    if zero.any():
        raise ZeroRowError(int(np.flatnonzero(zero)[0]))
    return fs.with_data(fs.data / norms[:, None])


def save_features(fs: FeatureSet, path, meta_path) -> None:
    """Write the feature file and metadata CSV described in the module docstring."""
    payload = np.ascontiguousarray(fs.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, fs.n, fs.dim))
        fh.write(payload.tobytes())
    with open(meta_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "person_id", "camera_id", "tracklet_id", "split"])
        for i, m in enumerate(fs.meta):
            writer.writerow([i, m.person_id, m.camera_id, m.tracklet_id, m.split])


def load_features(path, meta_path) -> FeatureSet:
    """Read a feature file plus metadata CSV back into a validated FeatureSet."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise MalformedHeaderError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise MalformedHeaderError(f"{path}: unsupported format version {version}")
    if n < 1 or d < 1:
        raise MalformedHeaderError(f"{path}: header declares empty matrix {n}x{d}")
    expected = n * d * 4
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise PayloadSizeError(
            f"{path}: header declares {n}x{d} ({expected} payload bytes) "
            f"but file carries {len(body)}"
        )
    data = np.frombuffer(body, dtype="<f4").reshape(n, d)
    meta = _load_meta(meta_path, n)
    return FeatureSet(data, meta)


def _load_meta(meta_path, n):
    with open(meta_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MetaMismatchError(f"{meta_path}: empty metadata file") from None
        if header != ["index", "person_id", "camera_id", "tracklet_id", "split"]:
            raise MetaMismatchError(f"{meta_path}: unexpected header {header}")
        meta = []
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise MetaMismatchError(f"{meta_path}: malformed row {row}")
            try:
                index, pid, cam, tid = (int(v) for v in row[:4])
            except ValueError:
                raise MetaMismatchError(f"{meta_path}: non-integer field in {row}") from None
            if index != len(meta):
                raise MetaMismatchError(
                    f"{meta_path}: row index {index} out of order at position {len(meta)}"
                )
            try:
                meta.append(RowMeta(pid, cam, tid, row[4]))
            except ValidationError as exc:
                raise MetaMismatchError(f"{meta_path}: row {index}: {exc}") from None
    if len(meta) != n:
        raise MetaMismatchError(
            f"{meta_path}: {len(meta)} metadata rows for {n} feature rows"
        )
    return meta
