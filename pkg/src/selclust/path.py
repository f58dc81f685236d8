"""Exact regularization path of one-dimensional convex clustering.

The problem solved is

    minimize_B  1/2 ||B - x||^2 + lam * sum_{i < i'} |B_i - B_i'|

for every ``lam >= 0`` at once. Fitted values keep the order of the data, so
every clustering is a segmentation of the decreasingly sorted data. Each
cluster's fitted value is an affine function of ``lam`` (its mean plus ``lam``
times the number of points above it minus the number below it), and two
adjacent clusters fuse at a ``lam`` that only depends on them. Pending fusions
live in an indexed min-heap (compiled with numba), which gives O(n log n) time
and O(n) memory.

All indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Sequence, Tuple

import numpy as np
from numba import njit

from .errors import InvalidInput, NotEnoughClusters, OracleSizeExceeded

# Adjacent pairs whose fusion values agree to this relative tolerance fuse in
# the same step.
SIMULTANEOUS_RTOL = 1e-12
BRUTE_FORCE_MAX_N = 20


def as_data_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        x = x.reshape(-1)
    if x.size < 1:
        raise InvalidInput("data vector must have at least one entry")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("data vector contains non-finite values")
    return x


def ordering(x) -> np.ndarray:
    """Permutation sorting ``x`` decreasingly; ties by ascending index."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(-x)
    xs = x[order]
    if np.any(xs[1:] == xs[:-1]):
        # the fast sort is not stable; redo it when ties need breaking
        order = np.lexsort((np.arange(x.size), -x))
    return order


def _frozen(a, dtype=None) -> np.ndarray:
    """Read-only array; already read-only arrays of the right dtype are reused."""
    if (isinstance(a, np.ndarray) and not a.flags.writeable
            and (dtype is None or a.dtype == np.dtype(dtype))):
        return a
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _seal(a: np.ndarray) -> np.ndarray:
    """Make a freshly built internal array read-only without copying it."""
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SegmentedClustering:
    """Clustering given by right-limits ``t`` over the ordering ``sigma``.

    Cluster ``k`` (0-based) holds the original indices
    ``sigma[t[k]:t[k + 1]]``; ``t[0] == 0`` and ``t[-1] == n``.
    """

    t: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        t = _frozen(self.t, dtype=np.int64)
        sigma = _frozen(self.sigma, dtype=np.int64)
        n = sigma.size
        if t.ndim != 1 or t.size < 2 or t[0] != 0 or t[-1] != n or np.any(np.diff(t) <= 0):
            raise InvalidInput(f"invalid right-limits {t.tolist()} for n={n}")
        if sigma.ndim != 1 or (n and (sigma.min() < 0 or sigma.max() >= n
                                      or np.any(np.bincount(sigma, minlength=n) != 1))):
            raise InvalidInput("sigma is not a permutation")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n(self) -> int:
        return int(self.sigma.size)

    @property
    def K(self) -> int:
        return int(self.t.size - 1)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.t)

    def clusters(self) -> List[np.ndarray]:
        return [self.sigma[self.t[k]:self.t[k + 1]] for k in range(self.K)]

    def labels(self) -> np.ndarray:
        """Cluster index of every original index."""
        lab = np.empty(self.n, dtype=np.int64)
        lab[self.sigma] = np.repeat(np.arange(self.K), self.sizes)
        return lab

    def __eq__(self, other):
        if not isinstance(other, SegmentedClustering):
            return NotImplemented
        return np.array_equal(self.t, other.t) and np.array_equal(self.sigma, other.sigma)

    def same_partition(self, other: "SegmentedClustering") -> bool:
        """True when both describe the same ordered clusters as index sets."""
        if self.n != other.n or self.K != other.K:
            return False
        return all(set(a.tolist()) == set(b.tolist())
                   for a, b in zip(self.clusters(), other.clusters()))

    def __repr__(self):
        return f"SegmentedClustering(n={self.n}, K={self.K}, t={self.t.tolist()})"


@dataclass(frozen=True)
class MergeEvent:
    """Fusion of two adjacent clusters at step ``step``.

    Clusters are identified by the sorted position of their first element at
    the start of the step.
    """

    step: int
    lam: float
    left_cluster: int
    right_cluster: int


@dataclass(frozen=True, eq=False)
class RegularizationPath:
    """Breakpoints and fusions of the whole path.

    Fusion ``i`` happens at step ``merge_step[i]`` (value
    ``breakpoints[merge_step[i]]``) between the clusters starting at sorted
    positions ``merge_left[i]`` and ``merge_right[i]``.
    """

    values: np.ndarray
    sigma: np.ndarray
    breakpoints: np.ndarray
    merge_step: np.ndarray
    merge_left: np.ndarray
    merge_right: np.ndarray
    # fuse_lambda[i]: value of lam at which sorted positions i and i + 1 join
    # (0 for tied inputs).
    fuse_lambda: np.ndarray
    initial_clustering: SegmentedClustering = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def r_max(self) -> int:
        return int(self.breakpoints.size - 1)

    @property
    def initial_centers(self) -> np.ndarray:
        xs = self.values[self.sigma]
        return xs[self.initial_clustering.t[:-1]]

    @property
    def n_clusters(self) -> np.ndarray:
        """K^(r) for r = 0..r_max."""
        k0 = self.initial_clustering.K
        removed = np.bincount(self.merge_step, minlength=self.r_max + 1)
        return k0 - np.cumsum(removed)

    @cached_property
    def merge_events(self) -> Tuple[MergeEvent, ...]:
        lam = self.breakpoints[self.merge_step].tolist()
        return tuple(MergeEvent(int(r), l, int(a), int(b)) for r, l, a, b in
                     zip(self.merge_step.tolist(), lam, self.merge_left.tolist(),
                         self.merge_right.tolist()))

    def merge_tree(self) -> List[Tuple[int, Tuple[Tuple[int, int], ...]]]:
        steps = {}
        for r, a, b in zip(self.merge_step.tolist(), self.merge_left.tolist(),
                           self.merge_right.tolist()):
            steps.setdefault(r, []).append((a, b))
        return [(s, tuple(sorted(p))) for s, p in sorted(steps.items())]


@dataclass(frozen=True, eq=False)
class FittedSolution:
    lam: float
    B_hat: np.ndarray
    centers: np.ndarray
    clustering: SegmentedClustering

    def objective(self, x) -> float:
        return objective(x, self.B_hat, self.lam)


def objective(x, B, lam: float) -> float:
    """Penalized least-squares criterion of the clustering problem."""
    x = np.asarray(x, dtype=float)
    B = np.asarray(B, dtype=float)
    b = np.sort(B)
    n = b.size
    pair_sum = float(np.dot(b, 2.0 * np.arange(n) - (n - 1)))
    return 0.5 * float(np.sum((B - x) ** 2)) + lam * pair_sum


def _initial_blocks(xs: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])


def _assemble(x, sigma, starts, step_lams, merge_step, left, right) -> RegularizationPath:
    n = x.size
    merge_step = np.asarray(merge_step, dtype=np.int64)
    breakpoints = np.r_[0.0, np.asarray(step_lams, dtype=float)]
    fuse = np.zeros(max(n - 1, 0))
    right = np.asarray(right, dtype=np.int64)
    fuse[right - 1] = breakpoints[merge_step]
    init = SegmentedClustering(_seal(np.r_[starts, n].astype(np.int64)),
                               _seal(np.asarray(sigma, dtype=np.int64)))
    return RegularizationPath(
        values=_frozen(x),
        sigma=init.sigma,
        breakpoints=_seal(breakpoints),
        merge_step=_seal(merge_step),
        merge_left=_seal(np.asarray(left, dtype=np.int64)),
        merge_right=_seal(right),
        fuse_lambda=_seal(fuse),
        initial_clustering=init,
    )


def _steps_to_arrays(steps):
    step_lams = [lam for lam, _ in steps]
    merge_step = [r for r, (_, pairs) in enumerate(steps, start=1) for _ in pairs]
    left = [a for _, pairs in steps for a, _ in pairs]
    right = [b for _, pairs in steps for _, b in pairs]
    return step_lams, merge_step, left, right


def _fusion_lambda(s1, c1, s2, c2) -> float:
    return (s1 / c1 - s2 / c2) / (c1 + c2)


# Per-cluster state, one 24-byte record per initial cluster; a cluster is dead
# once its count is zero.
_NODE = np.dtype([("tot", np.float64), ("cnt", np.float64), ("nxt", np.int32), ("prv", np.int32)])

# Pending fusions live in an indexed binary min-heap of (key, k) rows, one per
# live adjacent pair (k, next(k)); pos[k] is the slot of pair k, or -1. Keys
# are updated in place, so the heap never holds stale entries.


@njit(cache=True)
def _less(ka, ia, kb, ib):
    return ka < kb or (ka == kb and ia < ib)


@njit(cache=True)
def _place(h, pos, j, key, k):
    h[j, 0] = key
    h[j, 1] = k
    pos[int(k)] = j


@njit(cache=True)
def _sift_down(h, pos, j, size):
    key, k = h[j, 0], h[j, 1]
    while True:
        c = 2 * j + 1
        if c >= size:
            break
        if c + 1 < size and _less(h[c + 1, 0], h[c + 1, 1], h[c, 0], h[c, 1]):
            c += 1
        if not _less(h[c, 0], h[c, 1], key, k):
            break
        _place(h, pos, j, h[c, 0], h[c, 1])
        j = c
    _place(h, pos, j, key, k)


@njit(cache=True)
def _sift(h, pos, j, size):
    """Move the entry at slot ``j`` up or down to restore heap order."""
    key, k = h[j, 0], h[j, 1]
    if j > 0 and _less(key, k, h[(j - 1) // 2, 0], h[(j - 1) // 2, 1]):
        while j > 0:
            par = (j - 1) // 2
            if not _less(key, k, h[par, 0], h[par, 1]):
                break
            _place(h, pos, j, h[par, 0], h[par, 1])
            j = par
        _place(h, pos, j, key, k)
    else:
        _sift_down(h, pos, j, size)


@njit(cache=True)
def _remove(h, pos, j, size):
    """Remove heap slot ``j``; returns the new size."""
    pos[int(h[j, 1])] = -1
    size -= 1
    if j != size:
        _place(h, pos, j, h[size, 0], h[size, 1])
        _sift(h, pos, j, size)
    return size


@njit(cache=True)
def _set_key(h, pos, k, key, size):
    """Insert or update the pending fusion of pair k; returns the new size."""
    j = pos[k]
    if j == -1:
        j = size
        size += 1
    _place(h, pos, j, key, k)
    _sift(h, pos, j, size)
    return size


@njit(cache=True)
def _pair_lambda(nd, left, right):
    return ((nd[left].tot / nd[left].cnt - nd[right].tot / nd[right].cnt)
            / (nd[left].cnt + nd[right].cnt))


@njit(cache=True)
def _path_kernel(total, count, rtol):
    """Merge sequence of the heap engine.

    Returns the value of each step, and for each of the K0 - 1 fusions its
    step (1-based) and the initial indices of the two clusters involved (each
    cluster keeps the index of its leftmost initial cluster).
    """
    K0 = total.size
    m = max(K0 - 1, 0)
    out_lam = np.empty(m)
    out_step = np.empty(m, np.int32)
    out_left = np.empty(m, np.int32)
    out_right = np.empty(m, np.int32)
    nd = np.empty(K0, _NODE)
    pos = np.full(K0, -1, np.int32)
    h = np.empty((m + 1, 2))
    for k in range(K0):
        nd[k].tot = total[k]
        nd[k].cnt = count[k]
        nd[k].nxt = k + 1 if k + 1 < K0 else -1
        nd[k].prv = k - 1
    for k in range(m):
        _place(h, pos, k, _pair_lambda(nd, k, k + 1), k)
    size = m
    for j in range(size // 2 - 1, -1, -1):
        _sift_down(h, pos, j, size)
    batch = np.empty(K0, np.int32)
    surv = np.empty(K0, np.int32)
    n_out = 0
    n_steps = 0
    lam_cur = 0.0
    while size > 0:
        lam = max(h[0, 0], lam_cur)
        thr = lam + rtol * abs(lam)
        n_steps += 1
        out_lam[n_steps - 1] = lam
        while size > 0 and h[0, 0] <= thr:
            nb = 0
            while size > 0 and h[0, 0] <= thr:
                batch[nb] = int(h[0, 1])
                nb += 1
                size = _remove(h, pos, 0, size)
            # insertion sort by position; batches are almost always tiny
            for q in range(1, nb):
                cur = batch[q]
                j = q - 1
                while j >= 0 and batch[j] > cur:
                    batch[j + 1] = batch[j]
                    j -= 1
                batch[j + 1] = cur
            for q in range(nb):
                out_step[n_out + q] = n_steps
                out_left[n_out + q] = batch[q]
                out_right[n_out + q] = nd[batch[q]].nxt
            n_out += nb
            ns = 0
            for q in range(nb):
                # batch[q] may already have been absorbed by its left neighbour
                s = batch[q]
                while nd[s].cnt == 0.0:
                    s = nd[s].prv
                r = nd[s].nxt
                nd[s].tot += nd[r].tot
                nd[s].cnt += nd[r].cnt
                nd[r].cnt = 0.0
                if pos[r] != -1:
                    if pos[s] == -1:
                        # hand r's heap slot to the pair (s, next(r)); its key
                        # is refreshed below
                        pos[s] = pos[r]
                        h[pos[s], 1] = s
                        pos[r] = -1
                    else:
                        size = _remove(h, pos, pos[r], size)
                nr = nd[r].nxt
                nd[s].nxt = nr
                if nr != -1:
                    nd[nr].prv = s
                nd[r].prv = s
                if ns == 0 or surv[ns - 1] != s:
                    surv[ns] = s
                    ns += 1
            for q in range(ns):
                s = surv[q]
                left = nd[s].prv
                if left != -1:
                    size = _set_key(h, pos, left, _pair_lambda(nd, left, s), size)
                if nd[s].nxt != -1:
                    size = _set_key(h, pos, s, _pair_lambda(nd, s, nd[s].nxt), size)
        lam_cur = lam
    return out_lam[:n_steps], out_step, out_left, out_right


def compute_path(x) -> RegularizationPath:
    """Full regularization path using a heap of pending fusions."""
    x = as_data_vector(x)
    sigma = ordering(x)
    xs = x[sigma]
    starts = _initial_blocks(xs)
    total = np.add.reduceat(xs, starts) if starts.size else np.zeros(0)
    count = np.diff(np.r_[starts, x.size]).astype(np.int64)
    step_lams, merge_step, left, right = _path_kernel(total, count.astype(float),
                                                      SIMULTANEOUS_RTOL)
    return _assemble(x, sigma, starts, step_lams, merge_step, starts[left], starts[right])


def compute_path_naive(x) -> RegularizationPath:
    """Reference O(n^2) path: rescans every adjacent pair at each step."""
    x = as_data_vector(x)
    sigma = ordering(x)
    xs = x[sigma]
    starts = _initial_blocks(xs)
    start = starts.tolist()
    count = np.diff(np.r_[starts, x.size]).tolist()
    total = np.add.reduceat(xs, starts).tolist()
    steps = []
    lam_cur = 0.0
    while len(start) > 1:
        cand = [_fusion_lambda(total[k], count[k], total[k + 1], count[k + 1])
                for k in range(len(start) - 1)]
        lam = max(min(cand), lam_cur)
        thr = lam + SIMULTANEOUS_RTOL * abs(lam)
        pairs = []
        while True:
            chosen = [k for k, c in enumerate(cand) if c <= thr]
            if not chosen:
                break
            pairs.extend((start[k], start[k + 1]) for k in chosen)
            # fuse from the right so that indices stay valid; sums are
            # accumulated left to right within each chain
            runs = []
            for k in chosen:
                if runs and runs[-1][1] == k:
                    runs[-1][1] = k + 1
                else:
                    runs.append([k, k + 1])
            for a, b in reversed(runs):
                s, c = total[a], count[a]
                for j in range(a + 1, b + 1):
                    s += total[j]
                    c += count[j]
                total[a:b + 1] = [s]
                count[a:b + 1] = [c]
                start[a:b + 1] = [start[a]]
            cand = [_fusion_lambda(total[k], count[k], total[k + 1], count[k + 1])
                    for k in range(len(start) - 1)]
        steps.append((lam, pairs))
        lam_cur = lam
    return _assemble(x, sigma, starts, *_steps_to_arrays(steps))


def clustering_at(path: RegularizationPath, lam: float) -> SegmentedClustering:
    if lam < 0:
        raise InvalidInput("lambda must be non-negative")
    keep = np.flatnonzero(path.fuse_lambda > lam)
    return SegmentedClustering(np.r_[0, keep + 1, path.n], path.sigma)


def centers_for(xs_sorted: np.ndarray, t: np.ndarray, lam: float) -> np.ndarray:
    """Fitted value of each segment: mean + lam * (#above - #below)."""
    n = xs_sorted.size
    sizes = np.diff(t)
    means = np.add.reduceat(xs_sorted, t[:-1]) / sizes
    return means + lam * (t[:-1] - (n - t[1:]))


def solution_at(path: RegularizationPath, lam: float) -> FittedSolution:
    """Minimizer at ``lam``, rebuilt in O(n) from the stored fusion values."""
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise InvalidInput("lambda must be finite and non-negative")
    c = clustering_at(path, lam)
    xs = path.values[path.sigma]
    centers = centers_for(xs, c.t, lam)
    B = np.empty(path.n)
    B[path.sigma] = np.repeat(centers, c.sizes)
    return FittedSolution(lam, _frozen(B), _frozen(centers), c)


def lambda_max(x) -> float:
    """Smallest ``lam`` giving a single cluster, in closed form."""
    x = as_data_vector(x)
    n = x.size
    if n < 2:
        raise InvalidInput("lambda_max needs at least two observations")
    xs = np.sort(x)[::-1]
    if xs[0] == xs[-1]:
        return 0.0
    i = np.arange(1, n)
    head_means = np.cumsum(xs)[:-1] / i
    return float(np.max((head_means - xs.mean()) / (n - i)))


def brute_force_solve(x, lam: float) -> FittedSolution:
    """Exhaustive minimizer over all contiguous segmentations (testing only)."""
    x = as_data_vector(x)
    n = x.size
    if n > BRUTE_FORCE_MAX_N:
        raise OracleSizeExceeded(f"n={n} exceeds {BRUTE_FORCE_MAX_N}")
    if lam < 0:
        raise InvalidInput("lambda must be non-negative")
    sigma = ordering(x)
    xs = x[sigma]
    cs = np.r_[0.0, np.cumsum(xs)]
    pos = np.arange(n)
    best_val, best_mask = np.inf, None
    n_masks = 1 << (n - 1)
    chunk = 1 << 15
    for lo in range(0, n_masks, chunk):
        masks = np.arange(lo, min(lo + chunk, n_masks), dtype=np.int64)
        # cut[:, i] is True when a cluster boundary sits between positions i-1 and i
        cut = np.zeros((masks.size, n), dtype=bool)
        cut[:, 0] = True
        if n > 1:
            cut[:, 1:] = ((masks[:, None] >> np.arange(n - 1)) & 1).astype(bool)
        seg_start = np.maximum.accumulate(np.where(cut, pos, 0), axis=1)
        ends_flag = np.zeros_like(cut)
        ends_flag[:, -1] = True
        ends_flag[:, :-1] = cut[:, 1:]
        seg_end = np.minimum.accumulate(np.where(ends_flag, pos + 1, n)[:, ::-1], axis=1)[:, ::-1]
        mean = (cs[seg_end] - cs[seg_start]) / (seg_end - seg_start)
        B = mean + lam * (seg_start - (n - seg_end))
        Bs = np.sort(B, axis=1)
        vals = 0.5 * np.sum((B - xs) ** 2, axis=1) + lam * (Bs @ (2.0 * pos - (n - 1)))
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_mask = vals[j], int(masks[j])
    bounds = [i + 1 for i in range(n - 1) if (best_mask >> i) & 1]
    t = np.array([0] + bounds + [n])
    centers = centers_for(xs, t, lam)
    # adjacent segments with identical fitted values form a single cluster
    keep = np.r_[True, centers[1:] != centers[:-1], True]
    t = t[keep]
    centers = centers_for(xs, t, lam)
    c = SegmentedClustering(t, sigma)
    B = np.empty(n)
    B[sigma] = np.repeat(centers, c.sizes)
    return FittedSolution(float(lam), _frozen(B), _frozen(centers), c)


def balanced_two_merge(c: SegmentedClustering) -> SegmentedClustering:
    """Merge adjacent clusters into two groups of sizes as equal as possible."""
    if c.K < 2:
        raise NotEnoughClusters("need at least two clusters")
    head = c.t[1:-1]
    q = int(np.argmin(np.abs(2 * head - c.n)))
    return SegmentedClustering([0, head[q], c.n], c.sigma)
