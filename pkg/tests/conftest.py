import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gcr.features import FeatureSet, RowMeta


def make_fs(data, pids=None, cams=None, tids=None, splits=None):
    """FeatureSet with sensible metadata defaults for tests."""
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    pids = list(pids) if pids is not None else list(range(n))
    cams = list(cams) if cams is not None else [0] * n
    tids = list(tids) if tids is not None else list(range(n))
    splits = list(splits) if splits is not None else ["gallery"] * n
    meta = [RowMeta(int(p), int(c), int(t), s) for p, c, t, s in zip(pids, cams, tids, splits)]
    return FeatureSet(data, meta)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
