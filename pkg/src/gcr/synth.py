"""Deterministic synthetic re-identification data.

Identities are points on a sphere of radius ``id_spread``; every camera adds
a fixed offset of magnitude ``camera_bias`` to all rows it captures, and each
image adds isotropic Gaussian noise of scale ``noise``. Rows are then
unit-normalized and quantized to float32 storage precision, so a generated
set round-trips bit-exactly through the on-disk format. Per identity there
is one tracklet per camera of ``images_per_id_per_camera`` frames; the
tracklet from camera ``id % cameras`` forms the query split, everything else
is gallery. Distractor rows carry person id -1 and live in the gallery.

Randomness comes from a SplitMix64 stream (documented below), not from a
platform default generator, so a seed pins the dataset everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gcr.errors import ValidationError, ZeroRowError
from gcr.features import FeatureSet, RowMeta


class SplitMix64:
    """Counter-based SplitMix64 stream with Box-Muller normal variates.

    Output i (1-based) is mix64(seed + i * 0x9E3779B97F4A7C15) where mix64
    xors z with z >> 30, multiplies by 0xBF58476D1CE4E5B9, xors with z >> 27,
    multiplies by 0x94D049BB133111EB and xors with z >> 31, all modulo 2^64.
    Uniforms take the top 53 bits over 2^53; normals consume two uniforms per
    pair via the Box-Muller transform with u1 shifted into (0, 1].
    """

    _GOLDEN = np.uint64(0x9E3779B97F4A7C15)
    _MIX1 = np.uint64(0xBF58476D1CE4E5B9)
    _MIX2 = np.uint64(0x94D049BB133111EB)

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._count = 0

    def raw(self, count: int) -> np.ndarray:
        idx = np.arange(self._count + 1, self._count + count + 1, dtype=np.uint64)
        self._count += count
        z = self._seed + idx * self._GOLDEN
        z = (z ^ (z >> np.uint64(30))) * self._MIX1
        z = (z ^ (z >> np.uint64(27))) * self._MIX2
        return z ^ (z >> np.uint64(31))

    def uniform(self, count: int) -> np.ndarray:
        return (self.raw(count) >> np.uint64(11)) * 2.0 ** -53

    def normal(self, count: int) -> np.ndarray:
        pairs = (count + 1) // 2
        u1 = ((self.raw(pairs) >> np.uint64(11)) + np.uint64(1)) * 2.0 ** -53
        u2 = (self.raw(pairs) >> np.uint64(11)) * 2.0 ** -53
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(theta)
        out[1::2] = radius * np.sin(theta)
        return out[:count]


@dataclass(frozen=True)
class SynthConfig:
    num_ids: int = 200
    cameras: int = 4
    images_per_id_per_camera: int = 2
    dim: int = 64
    id_spread: float = 1.0
    noise: float = 0.14
    camera_bias: float = 0.50
    distractor_fraction: float = 0.0
    seed: int = 7

    def __post_init__(self):
        for name in ("num_ids", "cameras", "images_per_id_per_camera", "dim"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.id_spread > 0:
            raise ValidationError(f"id_spread must be positive, got {self.id_spread}")
        if self.noise < 0:
            raise ValidationError(f"noise must be nonnegative, got {self.noise}")
        if self.camera_bias < 0:
            raise ValidationError(f"camera_bias must be nonnegative, got {self.camera_bias}")
        if not 0.0 <= self.distractor_fraction < 1.0:
            raise ValidationError(
                f"distractor_fraction must lie in [0, 1), got {self.distractor_fraction}"
            )


def _unit_rows(rows):
    norms = np.linalg.norm(rows, axis=1)
    zero = norms == 0.0
    if zero.any():
        raise ZeroRowError(int(np.flatnonzero(zero)[0]))
    return rows / norms[:, None]


def generate(cfg: SynthConfig) -> FeatureSet:
    """Build the synthetic FeatureSet described in the module docstring.

    Draw order from the seeded stream: identity centers, camera offsets,
    per-image noise, then distractor centers and distractor noise.
    """
    rng = SplitMix64(cfg.seed)
    dim = cfg.dim
    per_id = cfg.cameras * cfg.images_per_id_per_camera
    n_base = cfg.num_ids * per_id

    centers = _unit_rows(rng.normal(cfg.num_ids * dim).reshape(cfg.num_ids, dim))
    centers *= cfg.id_spread
    camera_dirs = _unit_rows(rng.normal(cfg.cameras * dim).reshape(cfg.cameras, dim))
    camera_dirs *= cfg.camera_bias
    noise = rng.normal(n_base * dim).reshape(n_base, dim)
    noise *= cfg.noise

    ids_col = np.repeat(np.arange(cfg.num_ids), per_id)
    cams_col = np.tile(
        np.repeat(np.arange(cfg.cameras), cfg.images_per_id_per_camera), cfg.num_ids
    )
    data = centers[ids_col] + camera_dirs[cams_col] + noise
    query_cam = ids_col % cfg.cameras
    meta = [
        RowMeta(
            person_id=int(pid),
            camera_id=int(cam),
            tracklet_id=int(pid),
            split="query" if cam == qc else "gallery",
        )
        for pid, cam, qc in zip(ids_col, cams_col, query_cam)
    ]

    n_distract = int(cfg.distractor_fraction * n_base)
    if n_distract:
        d_centers = _unit_rows(rng.normal(n_distract * dim).reshape(n_distract, dim))
        d_centers *= cfg.id_spread
        d_noise = rng.normal(n_distract * dim).reshape(n_distract, dim)
        d_noise *= cfg.noise
        d_cams = np.arange(n_distract) % cfg.cameras
        data = np.vstack([data, d_centers + camera_dirs[d_cams] + d_noise])
        meta.extend(
            RowMeta(-1, int(cam), cfg.num_ids + j, "gallery")
            for j, cam in enumerate(d_cams)
        )

    data = _unit_rows(data)
    data = data.astype(np.float32).astype(np.float64)  # storage precision
    return FeatureSet(data, meta)
