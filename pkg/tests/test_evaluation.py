from fractions import Fraction

import numpy as np
import pytest

from gcr.errors import ValidationError
from gcr.evaluation import dump_ranked_csv, evaluate, rank
from gcr.propagation import GcrConfig, gcr

import oracles
from conftest import make_fs


def ranked_case(pattern, extra_junk=0):
    """Single query whose post-exclusion gallery relevance equals ``pattern``.

    Gallery row j sits at distance (j+1)^2 from the query, so the ranked
    order is the construction order; relevant rows share the query person id.
    Junk rows (person id -1) are placed nearest so exclusion is observable.
    """
    data = [[0.0]]
    pids = [1]
    cams = [0]
    splits = ["query"]
    for j in range(extra_junk):
        data.append([0.1 + 0.01 * j])
        pids.append(-1)
        cams.append(1)
        splits.append("gallery")
    for j, rel in enumerate(pattern):
        data.append([float(j + 1)])
        pids.append(1 if rel else 2)
        cams.append(1)
        splits.append("gallery")
    n = len(data)
    return make_fs(data, pids=pids, cams=cams, tids=list(range(n)), splits=splits)


AP_PATTERNS = [
    [1],
    [1, 0],
    [0, 1],
    [1, 1],
    [1, 0, 1],
    [0, 0, 1],
    [1, 1, 0, 0],
    [0, 1, 0, 1],
    [1, 0, 0, 1, 0],
    [0, 1, 1, 0, 1, 0, 0, 1],
]


class TestRank:
    def test_near_before_far(self):
        fs = make_fs([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]],
                     pids=[0, 1, 2], cams=[0, 1, 1],
                     splits=["query", "gallery", "gallery"])
        lists = rank(fs)
        assert len(lists) == 1
        assert list(lists[0].gallery_order) == [1, 2]

    def test_tie_break_smaller_index(self):
        fs = make_fs([[0.0], [1.0], [-1.0]],
                     pids=[0, 1, 2], cams=[0, 1, 1],
                     splits=["query", "gallery", "gallery"])
        lists = rank(fs)
        assert list(lists[0].gallery_order) == [1, 2]

    def test_matches_full_sort_oracle(self, rng):
        n_q, n_g = 50, 200
        data = rng.standard_normal((n_q + n_g, 8))
        pids = list(rng.integers(0, 20, n_q + n_g))
        cams = list(rng.integers(0, 4, n_q + n_g))
        splits = ["query"] * n_q + ["gallery"] * n_g
        fs = make_fs(data, pids=pids, cams=cams, tids=list(range(n_q + n_g)), splits=splits)
        lists = rank(fs, block=17)
        dists = oracles.sq_dists(data)
        for rl in lists:
            q = rl.query_index
            valid = [j for j in range(n_q, n_q + n_g)
                     if pids[j] != -1 and not (pids[j] == pids[q] and cams[j] == cams[q])]
            want = sorted(valid, key=lambda j: (dists[q, j], j))
            assert list(rl.gallery_order) == want

    def test_partition_of_gallery(self, rng):
        fs = make_fs(rng.standard_normal((10, 3)),
                     pids=[0, 0, 0, 1, 1, -1, 2, 2, 0, 1],
                     cams=[0, 0, 1, 0, 1, 0, 1, 0, 1, 1],
                     splits=["query", "query"] + ["gallery"] * 8)
        for rl in rank(fs):
            combined = sorted(list(rl.gallery_order) + list(rl.excluded))
            assert combined == list(range(2, 10))

    def test_requires_queries_and_gallery(self, rng):
        with pytest.raises(ValidationError):
            rank(make_fs(rng.standard_normal((3, 2)), splits=["gallery"] * 3))
        with pytest.raises(ValidationError):
            rank(make_fs(rng.standard_normal((3, 2)), splits=["query"] * 3))


class TestEvaluate:
    def test_pos_neg_pos(self):
        report = evaluate(ranked_case([1, 0, 1]))
        assert report.mean_ap == pytest.approx(5.0 / 6.0, abs=1e-12)
        assert report.rank1 == 1.0

    @pytest.mark.parametrize("pattern", AP_PATTERNS, ids=lambda p: "".join(map(str, p)))
    def test_ap_matches_rational_oracle(self, pattern):
        report = evaluate(ranked_case(pattern))
        want = oracles.exact_ap(pattern)
        assert isinstance(want, Fraction)
        assert report.mean_ap == pytest.approx(float(want), abs=1e-12)

    def test_junk_rows_are_excluded(self):
        report = evaluate(ranked_case([1, 0, 1], extra_junk=3))
        assert report.mean_ap == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_same_camera_positives_excluded_and_query_skipped(self):
        fs = make_fs([[0.0], [0.5], [2.0]],
                     pids=[1, 1, 2], cams=[0, 0, 0],
                     splits=["query", "gallery", "gallery"])
        with pytest.raises(ValidationError):
            evaluate(fs)  # the only query loses its only positive

    def test_skipped_query_counted(self):
        fs = make_fs([[0.0], [9.0], [0.5], [2.0]],
                     pids=[1, 2, 1, 2], cams=[0, 0, 0, 1],
                     splits=["query", "query", "gallery", "gallery"])
        # query 0 keeps no positive (its match shares camera 0); query 1 does
        report = evaluate(fs)
        assert report.skipped_queries == 1
        assert len(report.per_query_ap) == 1

    def test_perfect_duplicates(self, rng):
        data = rng.standard_normal((4, 5))
        fs = make_fs(np.vstack([data, data]),
                     pids=[0, 1, 2, 3] * 2, cams=[0] * 4 + [1] * 4,
                     splits=["query"] * 4 + ["gallery"] * 4)
        report = evaluate(fs)
        assert report.mean_ap == 1.0
        assert report.rank1 == 1.0

    def test_cmc_monotone_and_bounded(self, rng):
        n = 60
        fs = make_fs(rng.standard_normal((n, 6)),
                     pids=list(rng.integers(0, 8, n)), cams=list(rng.integers(0, 3, n)),
                     splits=["query"] * 20 + ["gallery"] * 40)
        report = evaluate(fs)
        assert np.all(np.diff(report.cmc) >= 0.0)
        assert report.cmc[-1] <= 1.0
        assert 0.0 <= report.mean_ap <= 1.0
        assert np.all((report.per_query_ap >= 0) & (report.per_query_ap <= 1))

    def test_relabeling_invariance(self, rng):
        n = 40
        pids = rng.integers(0, 6, n)
        cams = rng.integers(0, 3, n)
        data = rng.standard_normal((n, 5))
        splits = ["query"] * 12 + ["gallery"] * 28
        base = evaluate(make_fs(data, pids=pids, cams=cams, splits=splits))
        relabel = {p: 100 - p for p in range(7)}
        mapped = [relabel[p] for p in pids]
        moved = evaluate(make_fs(data, pids=mapped, cams=cams, splits=splits))
        assert moved.mean_ap == base.mean_ap
        assert np.array_equal(moved.cmc, base.cmc)

    def test_rerank_preserves_exclusions(self, rng):
        n = 30
        pids = list(rng.integers(0, 5, n))
        cams = list(rng.integers(0, 2, n))
        splits = ["query"] * 10 + ["gallery"] * 20
        fs = make_fs(rng.standard_normal((n, 6)), pids=pids, cams=cams, splits=splits)
        out = gcr(fs, GcrConfig(k_g=4, k_c=2, iterations=1))
        before = {rl.query_index: set(rl.excluded) for rl in rank(fs)}
        after = {rl.query_index: set(rl.excluded) for rl in rank(out)}
        assert before == after


def test_counting_ranks_match_sorted_lists(rng):
    # duplicate gallery rows force exact distance ties in both code paths
    n_q, n_g = 12, 40
    gallery = rng.standard_normal((n_g // 2, 4))
    data = np.vstack([rng.standard_normal((n_q, 4)), gallery, gallery])
    pids = list(rng.integers(0, 5, n_q)) + list(rng.integers(-1, 5, n_g))
    cams = list(rng.integers(0, 3, n_q + n_g))
    splits = ["query"] * n_q + ["gallery"] * n_g
    fs = make_fs(data, pids=pids, cams=cams, splits=splits)
    report = evaluate(fs)
    aps, firsts = [], []
    for rl in rank(fs):
        hits = np.flatnonzero(np.array(pids)[rl.gallery_order] == pids[rl.query_index])
        if hits.size == 0:
            continue
        ranks = hits + 1
        aps.append(np.mean(np.arange(1, ranks.size + 1) / ranks))
        firsts.append(ranks[0])
    assert np.allclose(np.sort(report.per_query_ap), np.sort(aps), rtol=0, atol=0)
    assert report.rank1 == np.mean(np.array(firsts) == 1)


def test_report_serialization(rng):
    report = evaluate(ranked_case([1, 0, 1]))
    payload = report.to_json()
    assert '"mAP"' in payload and '"rank1"' in payload
    assert '"skipped_queries": 0' in payload
    table = report.format_table()
    assert "mAP" in table and "rank1" in table


def test_ranked_csv_dump(tmp_path):
    fs = ranked_case([1, 0])
    path = tmp_path / "ranked.csv"
    dump_ranked_csv(fs, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "query_index,rank,gallery_index,distance"
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == "1" and first[2] == "1"
    assert float(first[3]) == pytest.approx(1.0)  # true Euclidean, not squared
