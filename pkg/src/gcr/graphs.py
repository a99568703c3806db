"""Sparse k-NN similarity graphs over a feature set.

Two graph families are built from squared Euclidean distances: a global graph
whose candidates are all other rows, and a cross-camera graph whose candidates
are restricted to rows from a different camera. Edge weights follow the heat
kernel exp(-dist^2 / gamma) with an explicit unit self-loop on every row, so
row and column degrees are always strictly positive.

Distances are computed exactly, in row blocks, via the expansion
|x - y|^2 = |x|^2 + |y|^2 - 2 x.y; the full n x n matrix is never held in
memory. Neighbor selection is exact brute force with ties broken toward the
smaller row index, which keeps results deterministic across runs and thread
counts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from gcr.errors import ValidationError
from gcr.features import FeatureSet

logger = logging.getLogger(__name__)

DEFAULT_BLOCK = 1024

# pair-chunk size for gathered dot products in build_similarity
_PAIR_CHUNK = 32768


@dataclass
class SimilarityGraph:
    """Sparse nonnegative similarity matrix with cached degree vectors.

    ``matrix`` is CSR with sorted indices; every diagonal entry is present
    with weight exactly 1. ``row_degree[i]`` and ``col_degree[j]`` are the
    row/column sums of the matrix. For graphs built by :func:`symmetrize`
    the two degree vectors are the same array.
    """

    matrix: sparse.csr_matrix
    row_degree: np.ndarray
    col_degree: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, matrix, symmetric=False):
        matrix = matrix.tocsr()
        matrix.sort_indices()
        row_degree = np.asarray(matrix.sum(axis=1)).ravel()
        col_degree = row_degree if symmetric else np.asarray(matrix.sum(axis=0)).ravel()
        return cls(matrix, row_degree, col_degree)

    def weight(self, i, j) -> float:
        return float(self.matrix[i, j])

    def to_csv(self, path) -> None:
        """Debug dump: one ``i,j,weight`` line per entry, sorted by (i, j)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("i,j,weight\n")
            for i, j, w in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{i},{j},{w:.17g}\n")


@dataclass
class LocalGraph:
    """Dense symmetric kernel over one row's neighborhood.

    ``member_ids`` lists the center row first, then its neighbors in
    ascending (distance, index) order; ``weights`` is the (k+1) x (k+1)
    heat kernel over those members with unit diagonal.
    """

    center: int
    member_ids: np.ndarray
    weights: np.ndarray


def pairwise_sq_dist(fs: FeatureSet, block: int):
    """Yield ``(start, dists)`` blocks of the squared Euclidean distance matrix.

    Each yielded ``dists`` holds rows ``start : start + dists.shape[0]`` of
    the full n x n matrix; values are clipped at zero and the diagonal is
    exactly zero. ``block`` bounds the number of rows materialized at once.
    """
    if block < 1:
        raise ValidationError(f"block must be positive, got {block}")
    X = fs.data
    sq = np.einsum("ij,ij->i", X, X)
    for start in range(0, fs.n, block):
        stop = min(start + block, fs.n)
        dists = _sq_dist_block(X, sq, start, stop)
        rows = np.arange(stop - start)
        dists[rows, start + rows] = 0.0
        yield start, dists


def _sq_dist_block(X, sq, start, stop):
    dists = X[start:stop] @ X.T
    dists *= -2.0
    dists += sq[start:stop, None]
    dists += sq[None, :]
    np.maximum(dists, 0.0, out=dists)
    return dists


def knn_global(fs: FeatureSet, k: int, block: int = DEFAULT_BLOCK):
    """Per-row lists of the k nearest other rows, smallest index on ties."""
    neighbors, _ = _knn_search(fs.data, _clamp_k(k, fs.n), None, block)
    return neighbors


def knn_cross_camera(fs: FeatureSet, k: int, block: int = DEFAULT_BLOCK):
    """Like :func:`knn_global` but candidates must come from another camera.

    Rows whose cross-camera candidate pool is smaller than k get all of the
    pool, possibly an empty list.
    """
    neighbors, _ = _knn_search(fs.data, _clamp_k(k, fs.n), fs.camera_ids, block)
    return neighbors


def _clamp_k(k, n):
    if k < 1:
        raise ValidationError(f"neighbor count must be positive, got {k}")
    if k > n - 1:
        clamped = max(n - 1, 0)
        logger.warning("requested k=%d exceeds candidate pool, clamped to %d", k, clamped)
        return clamped
    return k


def _knn_search(X, k, cameras, block):
    """Exact blocked k-NN; returns (neighbor index lists, squared-distance lists)."""
    n = X.shape[0]
    if k == 0:
        empty_i = np.empty(0, dtype=np.int64)
        empty_d = np.empty(0, dtype=np.float64)
        return [empty_i] * n, [empty_d] * n
    sq = np.einsum("ij,ij->i", X, X)
    neighbors, dists = [], []
    for start in range(0, n, block):
        stop = min(start + block, n)
        d_blk = _sq_dist_block(X, sq, start, stop)
        rows = np.arange(stop - start)
        d_blk[rows, start + rows] = np.inf
        if cameras is not None:
            d_blk[cameras[start:stop, None] == cameras[None, :]] = np.inf
        idx, val = _block_topk(d_blk, k)
        neighbors.extend(idx)
        dists.extend(val)
    return neighbors, dists


def _block_topk_matrix(d_blk, k):
    """(b, min(k, n)) index/value matrices of the k smallest entries per row
    in exact (value, index) order; rows with fewer than k finite candidates
    are padded with +inf values (their pad indices are meaningless).
    """
    b, n = d_blk.shape
    if k >= n:
        idx = np.argsort(d_blk, axis=1, kind="stable").astype(np.int64)
        val = np.take_along_axis(d_blk, idx, axis=1)
        return idx, val
    part = np.argpartition(d_blk, k - 1, axis=1)[:, :k]
    pvals = np.take_along_axis(d_blk, part, axis=1)
    tau = pvals.max(axis=1)
    # A partition pins the selection down only when every entry equal to the
    # k-th smallest value already sits inside it; other rows need a rescan.
    eq_all = (d_blk == tau[:, None]).sum(axis=1)
    eq_part = (pvals == tau[:, None]).sum(axis=1)
    clean = (eq_all == eq_part) & np.isfinite(tau)
    cand = np.sort(part, axis=1)
    cvals = np.take_along_axis(d_blk, cand, axis=1)
    order = np.argsort(cvals, axis=1, kind="stable")
    idx = np.take_along_axis(cand, order, axis=1).astype(np.int64)
    val = np.take_along_axis(cvals, order, axis=1)
    for r in np.flatnonzero(~clean):
        row = d_blk[r]
        pool = np.flatnonzero(row <= tau[r]) if np.isfinite(tau[r]) else (
            np.flatnonzero(np.isfinite(row)))
        o = np.argsort(row[pool], kind="stable")[:k]
        m = len(o)
        idx[r, :m] = pool[o]
        val[r, :m] = row[pool][o]
        val[r, m:] = np.inf
    return idx, val


def _block_topk(d_blk, k):
    """Per-row lists of the k smallest entries, exact (value, index) order;
    +inf entries are never selected."""
    idx, val = _block_topk_matrix(d_blk, k)
    out_idx, out_val = [], []
    for r in range(d_blk.shape[0]):
        m = int(np.isfinite(val[r]).sum())
        out_idx.append(idx[r, :m])
        out_val.append(val[r, :m])
    return out_idx, out_val


def build_similarity(fs: FeatureSet, neighbors, gamma: float) -> SimilarityGraph:
    """Heat-kernel similarity graph over the given neighbor lists.

    Entry (i, j) is exp(-|x_i - x_j|^2 / gamma) for each j in
    ``neighbors[i]`` plus a unit self-loop per row; nothing else is stored.
    """
    _check_gamma(gamma)
    n = fs.n
    if len(neighbors) != n:
        raise ValidationError(f"{len(neighbors)} neighbor lists for {n} rows")
    counts = np.fromiter((len(nb) for nb in neighbors), np.int64, n)
    rows_rep = np.repeat(np.arange(n, dtype=np.int64), counts)
    flat = (np.concatenate([np.asarray(nb, dtype=np.int64) for nb in neighbors])
            if counts.sum() else np.empty(0, dtype=np.int64))
    _check_neighbors(neighbors, n)
    X = fs.data
    sq = np.einsum("ij,ij->i", X, X)
    dists = np.empty(flat.shape[0])
    for s in range(0, flat.shape[0], _PAIR_CHUNK):
        e = min(s + _PAIR_CHUNK, flat.shape[0])
        dots = np.einsum("ij,ij->i", X[rows_rep[s:e]], X[flat[s:e]])
        dists[s:e] = sq[rows_rep[s:e]] + sq[flat[s:e]] - 2.0 * dots
    np.maximum(dists, 0.0, out=dists)
    return _assemble(n, rows_rep, flat, dists, gamma)


def _check_gamma(gamma):
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")


def _check_neighbors(neighbors, n):
    for i, nb in enumerate(neighbors):
        nb = np.asarray(nb, dtype=np.int64)
        if nb.size == 0:
            continue
        if nb.min() < 0 or nb.max() >= n:
            raise ValidationError(f"row {i}: neighbor index out of range")
        if (nb == i).any():
            raise ValidationError(f"row {i}: row listed as its own neighbor")
        if np.unique(nb).size != nb.size:
            raise ValidationError(f"row {i}: duplicate neighbor indices")


def _assemble(n, rows_rep, cols, sq_dists, gamma):
    """CSR assembly shared by the public builder and the propagation loop."""
    weights = np.exp(-sq_dists / gamma)
    diag = np.arange(n, dtype=np.int64)
    data = np.concatenate([weights, np.ones(n)])
    coo_rows = np.concatenate([rows_rep, diag])
    coo_cols = np.concatenate([cols, diag])
    matrix = sparse.csr_matrix((data, (coo_rows, coo_cols)), shape=(n, n))
    matrix.eliminate_zeros()  # kernel underflow must not leave zero entries
    return SimilarityGraph.from_matrix(matrix)


def _similarity_from_search(n, neighbors, sq_dists, gamma):
    """Graph from k-NN output where squared distances are already known."""
    counts = np.fromiter((len(nb) for nb in neighbors), np.int64, n)
    rows_rep = np.repeat(np.arange(n, dtype=np.int64), counts)
    if counts.sum():
        flat = np.concatenate(neighbors)
        dist = np.concatenate(sq_dists)
    else:
        flat = np.empty(0, dtype=np.int64)
        dist = np.empty(0, dtype=np.float64)
    return _assemble(n, rows_rep, flat, dist, gamma)


def symmetrize(g: SimilarityGraph) -> SimilarityGraph:
    """Average a graph with its transpose over the union sparsity pattern."""
    matrix = (g.matrix + g.matrix.T).tocsr()
    matrix.data *= 0.5
    return SimilarityGraph.from_matrix(matrix, symmetric=True)


def local_graphs(fs: FeatureSet, k: int, gamma: float, camera_filter: bool = False):
    """One dense :class:`LocalGraph` per row over its k-NN plus itself.

    With ``camera_filter`` the neighborhood comes from the cross-camera
    candidate pool instead of the global one.
    """
    _check_gamma(gamma)
    k = _clamp_k(k, fs.n)
    if k:
        cameras = fs.camera_ids if camera_filter else None
        neighbors, _ = _knn_search(fs.data, k, cameras, DEFAULT_BLOCK)
    else:
        neighbors = [np.empty(0, dtype=np.int64)] * fs.n
    X = fs.data
    graphs = []
    for i, nb in enumerate(neighbors):
        members = np.concatenate([np.array([i], dtype=np.int64), nb])
        graphs.append(LocalGraph(i, members, _local_kernel(X[members], gamma)))
    return graphs


def _local_kernel(members, gamma):
    diffs = members[:, None, :] - members[None, :, :]
    dists = np.einsum("uvd,uvd->uv", diffs, diffs)
    return np.exp(-dists / gamma)
