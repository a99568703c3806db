"""2-D PCA projection for external plotting of feature layouts."""

from __future__ import annotations

import numpy as np

from gcr.features import FeatureSet


def pca_coords(fs: FeatureSet) -> np.ndarray:
    """Project rows onto the top two principal axes of the feature covariance.

    Component signs follow the convention that the loading with the largest
    magnitude is positive, which keeps output deterministic. If the data has
    fewer than two directions of variance the remaining column is zero.
    """
    centered = fs.data - fs.data.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    coords = np.zeros((fs.n, 2))
    for axis in range(min(2, vt.shape[0])):
        comp = vt[axis]
        sign = np.sign(comp[np.argmax(np.abs(comp))]) or 1.0
        coords[:, axis] = centered @ (comp * sign)
    return coords


def write_projection_csv(fs: FeatureSet, path) -> None:
    """Write ``index,x,y,person_id,camera_id`` rows for external plotting."""
    coords = pca_coords(fs)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,x,y,person_id,camera_id\n")
        for i, (x, y) in enumerate(coords):
            m = fs.meta[i]
            fh.write(f"{i},{x:.17g},{y:.17g},{m.person_id},{m.camera_id}\n")
