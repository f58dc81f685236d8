"""Column-wise clustering of an n x p matrix and its aggregation.

The l1 fusion penalty separates over columns, so each column gets its own
one-dimensional path. The per-column clusterings are turned into a matrix of
rescaled labels and clustered again by rows; the result depends on the data
only through the per-column clusterings and orderings.

Row, column and cluster indices are 0-based. ``vec`` stacks columns.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.cluster.hierarchy import cut_tree, linkage as _linkage
from scipy.spatial.distance import pdist

from .errors import InvalidInput, UndefinedContrast
from .path import (RegularizationPath, SegmentedClustering, clustering_at, compute_path)
from .polyhedron import PolyhedralConstraint, build_constraints

LINKAGES = ("complete", "average", "single", "ward")
METHODS = ("euclidean", "hamming", "unanimity")


def as_data_matrix(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] < 1 or Y.shape[1] < 1:
        raise InvalidInput("expected a non-empty n x p matrix")
    if not np.all(np.isfinite(Y)):
        raise InvalidInput("data matrix contains non-finite values")
    return Y


def vec(Y) -> np.ndarray:
    return np.asarray(Y, dtype=float).reshape(-1, order="F")


@dataclass(frozen=True, eq=False)
class ColumnClusterings:
    lam: float
    paths: Tuple[RegularizationPath, ...]
    clusterings: Tuple[SegmentedClustering, ...]

    @property
    def n(self) -> int:
        return self.clusterings[0].n

    @property
    def p(self) -> int:
        return len(self.clusterings)

    @property
    def K(self) -> List[int]:
        return [c.K for c in self.clusterings]


def columnwise_paths(Y, lam: float) -> ColumnClusterings:
    Y = as_data_matrix(Y)
    if not lam > 0:
        raise InvalidInput("lambda must be positive")
    paths = tuple(compute_path(Y[:, j]) for j in range(Y.shape[1]))
    return ColumnClusterings(float(lam), paths, tuple(clustering_at(p, lam) for p in paths))


def rescale_labels(cc: ColumnClusterings) -> np.ndarray:
    """Class index of each entry mapped to {0, 1/(K-1), ..., 1}; zeros when K = 1."""
    out = np.zeros((cc.n, cc.p))
    for j, c in enumerate(cc.clusterings):
        if c.K > 1:
            out[:, j] = c.labels() / (c.K - 1)
    return out


@dataclass(frozen=True, eq=False)
class AggregatedClustering:
    labels: np.ndarray
    K: int
    method: str
    degraded: bool = False

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)


def _first_appearance(labels) -> np.ndarray:
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=np.int64)
    remap[order] = np.arange(order.size)
    _, inv = np.unique(labels, return_inverse=True)
    return remap[inv.reshape(-1)]


def aggregate(Ytilde, K: int = 2, method: str = "euclidean",
              linkage: str = "complete") -> AggregatedClustering:
    """Cluster the rows of the rescaled label matrix.

    ``method`` is "euclidean" or "hamming" (hierarchical clustering cut into
    ``K`` groups) or "unanimity" (rows share a cluster iff they share every
    column label; ``K`` is ignored). Labels are numbered by first appearance.
    """
    Yt = np.asarray(Ytilde, dtype=float)
    if Yt.ndim == 1:
        Yt = Yt[:, None]
    if method not in METHODS:
        raise InvalidInput(f"unknown aggregation method {method!r}")
    if linkage not in LINKAGES:
        raise InvalidInput(f"unknown linkage {linkage!r}")
    n = Yt.shape[0]
    distinct = np.unique(Yt, axis=0, return_inverse=True)[1].reshape(-1)
    n_distinct = int(distinct.max()) + 1
    if method == "unanimity":
        lab = _first_appearance(distinct)
        return AggregatedClustering(lab, n_distinct, method)
    if not 1 <= K <= n:
        raise InvalidInput(f"K={K} must lie in [1, n={n}]")
    if K > n_distinct:
        warnings.warn(f"only {n_distinct} distinct rows, cannot cut into K={K}; "
                      "using the distinct-row clustering", RuntimeWarning, stacklevel=2)
        return AggregatedClustering(_first_appearance(distinct), n_distinct, method, degraded=True)
    if K == 1 or n == 1:
        return AggregatedClustering(np.zeros(n, dtype=np.int64), 1, method)
    if linkage == "ward":
        if method != "euclidean":
            raise InvalidInput("ward linkage requires the euclidean distance")
        Z = _linkage(Yt, method="ward")
    else:
        Z = _linkage(pdist(Yt, metric=method), method=linkage)
    lab = cut_tree(Z, n_clusters=K).reshape(-1)
    return AggregatedClustering(_first_appearance(lab), K, method)


def aggregate_columns(cc: ColumnClusterings, K: int = 2, method: str = "euclidean",
                      linkage: str = "complete") -> AggregatedClustering:
    return aggregate(rescale_labels(cc), K, method, linkage)


def group_contrast(labels, k1: int, k2: int) -> np.ndarray:
    """Difference of group means: 1/|C_k1| on C_k1, -1/|C_k2| on C_k2."""
    labels = np.asarray(labels)
    if k1 == k2:
        raise UndefinedContrast("k1 and k2 must differ")
    a, b = labels == k1, labels == k2
    if not a.any() or not b.any():
        raise UndefinedContrast(f"cluster {k1 if not a.any() else k2} is empty")
    return a / a.sum() - b / b.sum()


def build_kappa(agg: AggregatedClustering, j0: int, k1: int, k2: int, n: int, p: int) -> np.ndarray:
    if not 0 <= j0 < p:
        raise InvalidInput(f"column {j0} out of range for p={p}")
    if agg.labels.size != n:
        raise InvalidInput("aggregated clustering has the wrong number of rows")
    kappa = np.zeros(n * p)
    kappa[j0 * n:(j0 + 1) * n] = group_contrast(agg.labels, k1, k2)
    return kappa


@dataclass(frozen=True, eq=False)
class BlockConstraints:
    """Block-diagonal stack of the per-column polyhedra."""

    blocks: Tuple[PolyhedralConstraint, ...]
    sigmas: Tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.blocks[0].n

    @property
    def p(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> np.ndarray:
        return np.concatenate([b.m for b in self.blocks])

    @property
    def n_rows(self) -> int:
        return sum(b.n_rows for b in self.blocks)

    def apply(self, v) -> np.ndarray:
        """Stacked ``M D_sigma v`` for a vectorized n x p quantity ``v``."""
        v = np.asarray(v, dtype=float)
        n = self.n
        return np.concatenate([b.apply(v[j * n:(j + 1) * n][s])
                               for j, (b, s) in enumerate(zip(self.blocks, self.sigmas))])

    def row_norms(self) -> np.ndarray:
        return np.concatenate([b.row_norms() for b in self.blocks])

    def matrix(self) -> sp.csr_matrix:
        return sp.block_diag([b.M for b in self.blocks], format="csr")

    def permutation(self) -> sp.csr_matrix:
        n = self.n
        mats = [sp.csr_matrix((np.ones(n), (np.arange(n), s)), shape=(n, n)) for s in self.sigmas]
        return sp.block_diag(mats, format="csr")


def build_block_constraints(cc: ColumnClusterings) -> BlockConstraints:
    return BlockConstraints(tuple(build_constraints(c) for c in cc.clusterings),
                            tuple(c.sigma for c in cc.clusterings))


def single_block(c: SegmentedClustering) -> BlockConstraints:
    return BlockConstraints((build_constraints(c),), (c.sigma,))
