"""Profile vectors: one representative feature per (camera, tracklet) group.

The simple profile is the member mean. The ridge profile solves, per camera,

    (X_z^T X_z + n_z * lambda_p * I) v = m_c,
    m_c = mean(tracklet members) - mean(all camera rows),

and returns v scaled to unit length. The right-hand side is exactly X_z^T z
for the balanced label vector produced by :func:`margin_labels`, which gives
tracklet members the label 1/n_c - 1/n_z and everything else -1/n_z, so the
class margin is 1/n_c and the labels in each camera sum to zero. Subtracting
the camera mean removes per-camera bias; the Gram matrix is factorized once
per camera (Cholesky) and reused for every tracklet in it.

A camera containing a single tracklet has m_c = 0; those tracklets fall back
to the mean profile and are recorded in ``ProfileSet.fallback_rows``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from gcr.errors import NumericError, ValidationError
from gcr.features import FeatureSet, RowMeta, load_features, save_features

logger = logging.getLogger(__name__)

METHODS = ("mean", "ridge")

_RESIDUAL_RTOL = 1e-8
_RESIDUAL_FLOOR = 1e-300  # guards the zero-m_c fallback path only


@dataclass(frozen=True)
class PvgConfig:
    lambda_p: float = 10.0
    method: str = "ridge"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "ridge" and not self.lambda_p > 0:
            raise ValidationError(f"lambda_p must be positive, got {self.lambda_p}")


@dataclass
class ProfileSet:
    """Tracklet-level features plus the mapping back to their source rows.

    ``provenance[p]`` lists the source row indices collapsed into profile p;
    every source row appears in exactly one list. ``fallback_rows`` names the
    profiles where the ridge system degenerated and the mean was used.
    """

    features: FeatureSet
    provenance: tuple
    fallback_rows: tuple = ()

    @property
    def n(self):
        return self.features.n


def _group_rows(fs):
    """Row indices per (camera_id, tracklet_id), in first-occurrence order."""
    groups = {}
    for i, m in enumerate(fs.meta):
        groups.setdefault((m.camera_id, m.tracklet_id), []).append(i)
    return groups


def _group_meta(fs, rows):
    first = fs.meta[rows[0]]
    return RowMeta(first.person_id, first.camera_id, first.tracklet_id, first.split)


def _group_mean(data, rows):
    return data[rows].mean(axis=0)


def mean_profile(fs: FeatureSet) -> ProfileSet:
    """Arithmetic-mean profile per (camera, tracklet) group."""
    groups = _group_rows(fs)
    data = np.stack([_group_mean(fs.data, rows) for rows in groups.values()])
    meta = [_group_meta(fs, rows) for rows in groups.values()]
    provenance = tuple(tuple(rows) for rows in groups.values())
    return ProfileSet(FeatureSet(data, meta), provenance)


def margin_labels(group_sizes, target: int) -> np.ndarray:
    """Balanced label vector for one camera, ordered group by group.

    Rows of tracklet ``target`` get 1/n_c - 1/n_z, all others -1/n_z, where
    n_c is the target tracklet size and n_z the camera total; the labels sum
    to zero exactly in exact arithmetic.
    """
    sizes = [int(s) for s in group_sizes]
    if any(s < 1 for s in sizes):
        raise ValidationError("tracklet sizes must be positive")
    if not 0 <= target < len(sizes):
        raise ValidationError(f"target tracklet {target} not among {len(sizes)} groups")
    n_z = sum(sizes)
    labels = np.full(n_z, -1.0 / n_z)
    start = sum(sizes[:target])
    labels[start:start + sizes[target]] += 1.0 / sizes[target]
    return labels


def _ridge_raw(fs: FeatureSet, lambda_p: float):
    """Unnormalized per-group ridge solutions.

    Returns ``(groups, raw, m_vectors, fallbacks)``: ``raw[p]`` is the
    solution of the camera system for profile p, ``m_vectors[p]`` the
    centered right-hand side it solved (None where the system degenerated
    and ``raw[p]`` holds the group mean instead), ``fallbacks`` the sorted
    degenerate profile positions.
    """
    groups = _group_rows(fs)
    order = {key: p for p, key in enumerate(groups)}
    by_camera = {}
    for key in groups:
        by_camera.setdefault(key[0], []).append(key)

    d = fs.dim
    raw = np.empty((len(groups), d))
    m_vectors = [None] * len(groups)
    fallbacks = []
    for cam, keys in by_camera.items():
        cam_rows = np.flatnonzero(fs.camera_ids == cam)
        X_z = fs.data[cam_rows]
        n_z = len(cam_rows)
        gram = X_z.T @ X_z + (n_z * lambda_p) * np.eye(d)
        try:
            factor = cho_factor(gram, lower=True)
        except LinAlgError as exc:
            raise NumericError(f"camera {cam}: Gram matrix not positive definite") from exc

        sizes = np.array([len(groups[key]) for key in keys])
        gathered = fs.data[np.concatenate([groups[key] for key in keys])]
        starts = np.zeros(len(keys), dtype=np.int64)
        starts[1:] = np.cumsum(sizes)[:-1]
        group_sums = np.add.reduceat(gathered, starts, axis=0)
        # summing the group sums keeps m_c exactly zero for a camera that
        # holds a single tracklet
        camera_sum = np.add.reduce(group_sums, axis=0)
        m_all = group_sums / sizes[:, None] - camera_sum / n_z

        solved = m_all.any(axis=1)
        for pos in np.flatnonzero(~solved):
            key = keys[pos]
            fallbacks.append(order[key])
            raw[order[key]] = _group_mean(fs.data, groups[key])
        if not solved.any():
            continue
        rhs = m_all[solved]
        solved_keys = [keys[pos] for pos in np.flatnonzero(solved)]
        sols = cho_solve(factor, rhs.T).T
        residuals = np.linalg.norm(sols @ gram - rhs, axis=1)
        bounds = _RESIDUAL_RTOL * np.maximum(np.linalg.norm(rhs, axis=1), _RESIDUAL_FLOOR)
        bad = residuals > bounds
        if bad.any():
            key = solved_keys[int(np.flatnonzero(bad)[0])]
            raise NumericError(f"tracklet {key}: ridge solve residual above tolerance")
        for key, sol, m_c in zip(solved_keys, sols, rhs):
            raw[order[key]] = sol
            m_vectors[order[key]] = m_c
    return groups, raw, m_vectors, sorted(fallbacks)


def ridge_profile(fs: FeatureSet, cfg: PvgConfig) -> ProfileSet:
    """Closed-form ridge profile per tracklet, unit-normalized."""
    if cfg.method != "ridge":
        raise ValidationError(f"ridge_profile requires method='ridge', got {cfg.method!r}")
    groups, raw, m_vectors, fallbacks = _ridge_raw(fs, cfg.lambda_p)
    data = raw.copy()
    solved = np.array([m is not None for m in m_vectors])
    if solved.any():
        norms = np.linalg.norm(data[solved], axis=1)
        if (norms == 0).any():
            raise NumericError("ridge solution is the zero vector")
        data[solved] /= norms[:, None]
    if fallbacks:
        logger.warning(
            "ridge profile fell back to the mean for %d single-tracklet camera(s)",
            len(fallbacks),
        )
    meta = [_group_meta(fs, rows) for rows in groups.values()]
    provenance = tuple(tuple(rows) for rows in groups.values())
    return ProfileSet(FeatureSet(data, meta), provenance, tuple(fallbacks))


def pvg(fs: FeatureSet, cfg: PvgConfig) -> ProfileSet:
    """Dispatch to :func:`mean_profile` or :func:`ridge_profile` per config."""
    if cfg.method == "mean":
        return mean_profile(fs)
    return ridge_profile(fs, cfg)


def save_profiles(ps: ProfileSet, path, meta_path, provenance_path) -> None:
    """Write profile features/metadata plus the provenance JSON sidecar."""
    save_features(ps.features, path, meta_path)
    sidecar = {str(p): list(rows) for p, rows in enumerate(ps.provenance)}
    with open(provenance_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=0)
        fh.write("\n")


def load_profiles(path, meta_path, provenance_path) -> ProfileSet:
    features = load_features(path, meta_path)
    with open(provenance_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    provenance = tuple(
        tuple(sidecar[str(p)]) for p in range(features.n)
    )
    return ProfileSet(features, provenance)
