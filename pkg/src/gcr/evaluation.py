"""Euclidean-distance retrieval and CMC / mAP evaluation.

Protocol: for each query, gallery rows sharing both its person id and its
camera id are excluded, as are all junk rows (person id -1). The remaining
gallery is sorted by ascending squared Euclidean distance with ties broken
toward the smaller gallery row index. Average precision uses the plain
positives-at-rank / rank form without interpolation; CMC[m] is the fraction
of queries whose first correct match appears within the top m+1. Queries
left with no positives are skipped and counted separately.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from gcr.errors import ValidationError
from gcr.features import FeatureSet
from gcr.graphs import DEFAULT_BLOCK

REPORT_CMC_LIMIT = 100


@dataclass
class RankedList:
    """Distance-ordered gallery for one query, with protocol exclusions."""

    query_index: int
    gallery_order: np.ndarray
    excluded: np.ndarray


@dataclass
class EvalReport:
    per_query_ap: np.ndarray
    cmc: np.ndarray
    rank1: float
    mean_ap: float
    skipped_queries: int
    timings_ms: dict = field(default_factory=dict)

    def to_json(self, cmc_limit: int = REPORT_CMC_LIMIT) -> str:
        payload = {
            "rank1": self.rank1,
            "mAP": self.mean_ap,
            "cmc": [float(v) for v in self.cmc[:cmc_limit]],
            "skipped_queries": self.skipped_queries,
            "timings_ms": {k: float(v) for k, v in sorted(self.timings_ms.items())},
        }
        return json.dumps(payload, sort_keys=True)

    def format_table(self) -> str:
        rows = [
            ("queries", f"{len(self.per_query_ap) + self.skipped_queries:d}"),
            ("skipped_queries", f"{self.skipped_queries:d}"),
            ("rank1", f"{self.rank1:.6f}"),
            ("mAP", f"{self.mean_ap:.6f}"),
        ]
        for m in (4, 9, 19):
            if m < len(self.cmc):
                rows.append((f"cmc[{m + 1}]", f"{self.cmc[m]:.6f}"))
        for name, value in sorted(self.timings_ms.items()):
            rows.append((f"time:{name}", f"{value:.1f} ms"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def _split_rows(features):
    query_rows = np.flatnonzero(features.is_query)
    gallery_rows = np.flatnonzero(~features.is_query)
    if query_rows.size == 0:
        raise ValidationError("evaluation requires at least one query row")
    if gallery_rows.size == 0:
        raise ValidationError("evaluation requires at least one gallery row")
    return query_rows, gallery_rows


def _ranked_rows(features, block):
    """Yield (query_row, gallery_order, excluded, sorted_sq_dists) per query."""
    query_rows, gallery_rows = _split_rows(features)
    X = features.data
    pids = features.person_ids
    cams = features.camera_ids
    g_pids = pids[gallery_rows]
    g_cams = cams[gallery_rows]
    junk = g_pids == -1
    gallery = X[gallery_rows]
    sq_g = np.einsum("ij,ij->i", gallery, gallery)
    for start in range(0, query_rows.size, block):
        stop = min(start + block, query_rows.size)
        Q = X[query_rows[start:stop]]
        dists = Q @ gallery.T
        dists *= -2.0
        dists += np.einsum("ij,ij->i", Q, Q)[:, None]
        dists += sq_g[None, :]
        np.maximum(dists, 0.0, out=dists)
        for r in range(stop - start):
            qrow = query_rows[start + r]
            excluded_mask = junk | ((g_pids == pids[qrow]) & (g_cams == cams[qrow]))
            valid = np.flatnonzero(~excluded_mask)
            order = np.argsort(dists[r, valid], kind="stable")
            yield (
                int(qrow),
                gallery_rows[valid[order]],
                gallery_rows[excluded_mask],
                dists[r, valid[order]],
            )


def rank(features: FeatureSet, block: int = DEFAULT_BLOCK):
    """Per-query ranked gallery lists under the exclusion protocol."""
    return [
        RankedList(qrow, order, excluded)
        for qrow, order, excluded, _ in _ranked_rows(features, block)
    ]


def evaluate(features: FeatureSet, block: int = DEFAULT_BLOCK) -> EvalReport:
    """Rank every query and reduce to AP, mAP and the CMC curve.

    Positive ranks are computed by exact counting (entries strictly closer,
    plus equal-distance entries with a smaller gallery index), which matches
    the sorted ranking of :func:`rank` without materializing it.
    """
    t_start = time.perf_counter()
    query_rows, gallery_rows = _split_rows(features)
    X = features.data
    pids = features.person_ids
    cams = features.camera_ids
    g_pids = pids[gallery_rows]
    g_cams = cams[gallery_rows]
    junk = g_pids == -1
    gallery = X[gallery_rows]
    sq_g = np.einsum("ij,ij->i", gallery, gallery)
    g_arange = np.arange(gallery_rows.size)
    per_ap = []
    first_ranks = []
    skipped = 0
    max_len = 0
    t_rank = 0.0
    for start in range(0, query_rows.size, block):
        stop = min(start + block, query_rows.size)
        t0 = time.perf_counter()
        Q = X[query_rows[start:stop]]
        dists = Q @ gallery.T
        dists *= -2.0
        dists += np.einsum("ij,ij->i", Q, Q)[:, None]
        dists += sq_g[None, :]
        np.maximum(dists, 0.0, out=dists)
        t_rank += time.perf_counter() - t0
        for r in range(stop - start):
            qrow = query_rows[start + r]
            valid = ~(junk | ((g_pids == pids[qrow]) & (g_cams == cams[qrow])))
            positions = np.flatnonzero(valid & (g_pids == pids[qrow]))
            if positions.size == 0:
                skipped += 1
                continue
            d = dists[r]
            ranks = np.empty(positions.size, dtype=np.int64)
            for s in range(0, positions.size, 128):  # bound the broadcast size
                chunk = positions[s:s + 128]
                pos_d = d[chunk]
                closer = ((d[None, :] < pos_d[:, None]) & valid[None, :]).sum(axis=1)
                ties = ((d[None, :] == pos_d[:, None]) & valid[None, :]
                        & (g_arange[None, :] < chunk[:, None])).sum(axis=1)
                ranks[s:s + 128] = closer + ties + 1
            ranks.sort()
            per_ap.append(float(np.mean(np.arange(1, ranks.size + 1) / ranks)))
            first_ranks.append(int(ranks[0]))
            max_len = max(max_len, int(valid.sum()))
    if not per_ap:
        raise ValidationError("every query was skipped; nothing to evaluate")
    hist = np.bincount(first_ranks, minlength=max_len + 1)[1:]
    cmc = np.cumsum(hist) / len(per_ap)
    per_ap_arr = np.asarray(per_ap)
    total_ms = (time.perf_counter() - t_start) * 1e3
    return EvalReport(
        per_query_ap=per_ap_arr,
        cmc=cmc,
        rank1=float(cmc[0]),
        mean_ap=float(per_ap_arr.mean()),
        skipped_queries=skipped,
        timings_ms={"rank": t_rank * 1e3, "total": total_ms},
    )


def dump_ranked_csv(features: FeatureSet, path, block: int = DEFAULT_BLOCK) -> None:
    """Write ``query_index,rank,gallery_index,distance`` rows, one per ranked
    gallery entry; distances are true Euclidean."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query_index,rank,gallery_index,distance\n")
        for qrow, order, _, sq_dists in _ranked_rows(features, block):
            dists = np.sqrt(sq_dists)
            for r, (g, dist) in enumerate(zip(order, dists), start=1):
                fh.write(f"{qrow},{r},{g},{dist:.17g}\n")
