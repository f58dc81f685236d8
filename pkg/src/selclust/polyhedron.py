"""Polyhedral description of "this clustering and this data order occurred".

For a segmented clustering with right-limits ``t`` and ordering ``sigma`` the
event is ``{M(t) P_sigma x <= lam * m(t)}`` where the rows of ``M(t)`` come in
three blocks:

* ``M1`` (n-1 rows): consecutive sorted values are non-increasing;
* ``M2`` (K-1 rows, strict): adjacent cluster means are far enough apart;
* ``M3`` (n-K rows): no prefix of a cluster would rather split off.

Rows are kept sparse (CSR). Every consumer only needs products ``M v`` for a
vector already permuted by ``sigma``; :meth:`PolyhedralConstraint.apply`
computes those in O(n) from prefix sums without touching the matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInput
from .path import RegularizationPath, SegmentedClustering, as_data_vector, clustering_at

MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PolyhedralConstraint:
    t: np.ndarray
    M1: sp.csr_matrix
    M2: sp.csr_matrix
    M3: sp.csr_matrix
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray

    @property
    def n(self) -> int:
        return int(self.t[-1])

    @property
    def K(self) -> int:
        return int(self.t.size - 1)

    @property
    def M(self) -> sp.csr_matrix:
        return sp.vstack([self.M1, self.M2, self.M3], format="csr")

    @property
    def m(self) -> np.ndarray:
        return np.concatenate([self.m1, self.m2, self.m3])

    @property
    def strict_mask(self) -> np.ndarray:
        mask = np.zeros(2 * (self.n - 1), dtype=bool)
        mask[self.n - 1:self.n - 1 + self.K - 1] = True
        return mask

    @property
    def n_rows(self) -> int:
        return 2 * (self.n - 1)

    def apply(self, v_sorted: np.ndarray) -> np.ndarray:
        """``M @ v_sorted`` in O(n), for ``v_sorted = P_sigma v``."""
        v = np.asarray(v_sorted, dtype=float)
        t = self.t
        sizes = np.diff(t)
        r1 = v[1:] - v[:-1]
        means = np.add.reduceat(v, t[:-1]) / sizes
        r2 = means[1:] - means[:-1]
        # prefix means within each cluster, minus the cluster mean
        cs = np.r_[0.0, np.cumsum(v)]
        owner = np.repeat(np.arange(self.K), sizes)
        pos = np.arange(self.n)
        within = pos - t[owner] + 1            # ell = 1..n_k
        is_row = within < sizes[owner]         # ell = n_k has no row
        ell = within[is_row]
        k = owner[is_row]
        prefix = (cs[pos[is_row] + 1] - cs[t[k]]) / ell
        r3 = prefix - means[k]
        return np.concatenate([r1, r2, r3])

    def row_norms(self) -> np.ndarray:
        sizes = np.diff(self.t).astype(float)
        n1 = np.full(self.n - 1, np.sqrt(2.0))
        n2 = np.sqrt(1.0 / sizes[:-1] + 1.0 / sizes[1:])
        ell, nk = _m3_rows(self.t)
        n3 = np.sqrt(np.maximum(1.0 / ell - 1.0 / nk, 0.0))
        return np.concatenate([n1, n2, n3])

    def to_json(self) -> str:
        def rows(A):
            A = A.tocsr()
            return [[[int(j), float(v)] for j, v in zip(A.indices[A.indptr[i]:A.indptr[i + 1]],
                                                         A.data[A.indptr[i]:A.indptr[i + 1]])]
                    for i in range(A.shape[0])]
        return json.dumps({
            "t": self.t.tolist(),
            "M1": rows(self.M1), "M2": rows(self.M2), "M3": rows(self.M3),
            "m": self.m.tolist(), "strict": self.strict_mask.tolist(),
        })


def _m3_rows(t):
    """(ell, n_k) for every M3 row, block by block."""
    sizes = np.diff(t)
    ell = np.concatenate([np.arange(1, nk) for nk in sizes]) if sizes.size else np.zeros(0)
    nk = np.repeat(sizes, sizes - 1)
    return ell.astype(float), nk.astype(float)


def build_constraints(c: SegmentedClustering) -> PolyhedralConstraint:
    n, K, t = c.n, c.K, c.t
    sizes = c.sizes
    # M1: -1, +1 on consecutive sorted positions
    i = np.arange(n - 1)
    M1 = sp.csr_matrix((np.r_[-np.ones(n - 1), np.ones(n - 1)], (np.r_[i, i], np.r_[i, i + 1])),
                       shape=(n - 1, n))
    # M2: -1/n_k on cluster k, +1/n_{k+1} on cluster k+1
    rows, cols, vals = [], [], []
    for k in range(K - 1):
        a, b, e = t[k], t[k + 1], t[k + 2]
        rows += [k] * (e - a)
        cols += list(range(a, e))
        vals += [-1.0 / sizes[k]] * (b - a) + [1.0 / sizes[k + 1]] * (e - b)
    M2 = sp.csr_matrix((vals, (rows, cols)), shape=(K - 1, n))
    m2 = -(t[2:] - t[:-2]).astype(float)
    # M3: block diagonal, row ell of block k is (prefix average over ell) - 1/n_k
    rows, cols, vals = [], [], []
    r = 0
    for k in range(K):
        nk, a = int(sizes[k]), int(t[k])
        for ell in range(1, nk):
            rows += [r] * nk
            cols += list(range(a, a + nk))
            vals += [1.0 / ell - 1.0 / nk] * ell + [-1.0 / nk] * (nk - ell)
            r += 1
    M3 = sp.csr_matrix((vals, (rows, cols)), shape=(n - K, n))
    ell, nk = _m3_rows(t)
    m3 = nk - ell
    return PolyhedralConstraint(t=t, M1=M1, M2=M2, M3=M3,
                                m1=np.zeros(n - 1), m2=m2, m3=m3)


@dataclass(frozen=True)
class MembershipReport:
    member: bool
    worst_slack: Dict[str, float]
    failed_block: str | None


def slack(pc: PolyhedralConstraint, sigma, x, lam: float) -> np.ndarray:
    x = as_data_vector(x)
    sigma = np.asarray(sigma)
    if x.size != pc.n or sigma.size != pc.n:
        raise InvalidInput(f"dimension mismatch: constraint n={pc.n}, x has {x.size}, "
                           f"sigma has {sigma.size}")
    return lam * pc.m - pc.apply(x[sigma])


def check_membership(pc: PolyhedralConstraint, sigma, x, lam: float,
                     tol: float = MEMBERSHIP_TOL) -> MembershipReport:
    """Is ``M P_sigma x <= lam m``? M2 rows strict, others up to ``tol``."""
    s = slack(pc, sigma, x, lam)
    n, K = pc.n, pc.K
    blocks = {"M1": slice(0, n - 1), "M2": slice(n - 1, n + K - 2), "M3": slice(n + K - 2, None)}
    allowed = -tol * (1.0 + np.abs(lam * pc.m))
    worst = {}
    failed = None
    for name, sl in blocks.items():
        sb = s[sl]
        worst[name] = float(sb.min()) if sb.size else np.inf
        ok = np.all(sb > 0) if name == "M2" else np.all(sb >= allowed[sl])
        if not ok and failed is None:
            failed = name
    return MembershipReport(failed is None, worst, failed)


def _perturbations(c: SegmentedClustering, xs: np.ndarray, rng: np.random.Generator):
    n, t = c.n, c.t.tolist()
    out = []
    interior = t[1:-1]
    free = [i for i in range(1, n) if i not in set(interior)]
    for b in interior:
        out.append((sorted(set(t) - {b}), c.sigma))
        for d in (-1, 1):
            nb = b + d
            if 0 < nb < n and nb not in t:
                out.append((sorted((set(t) - {b}) | {nb}), c.sigma))
    for b in rng.permutation(free)[:5] if free else []:
        out.append((sorted(set(t) | {int(b)}), c.sigma))
    # swap adjacent sorted positions holding different values
    swappable = np.flatnonzero(xs[:-1] != xs[1:])
    for i in rng.permutation(swappable)[:5] if swappable.size else []:
        s = c.sigma.copy()
        s[[i, i + 1]] = s[[i + 1, i]]
        out.append((t, s))
    # a few entirely random segmentations
    for _ in range(3):
        if n < 2:
            break
        k = int(rng.integers(0, n))
        cuts = sorted(rng.choice(np.arange(1, n), size=k, replace=False).tolist()) if k else []
        cand = [0] + cuts + [n]
        if cand != t:
            out.append((cand, c.sigma))
    return [SegmentedClustering(tt, ss) for tt, ss in out]


def verify_equivalence(x, lam: float, path: RegularizationPath | None = None,
                       rng: np.random.Generator | None = None) -> bool:
    """Check both directions of the polyhedral characterization on ``x``.

    The path's own (clustering, order) must be a member, and perturbed
    alternatives must not be (alternatives that describe the same partition,
    which only happens with tied data, are allowed).
    """
    from .path import compute_path

    x = as_data_vector(x)
    rng = np.random.default_rng(0) if rng is None else rng
    path = compute_path(x) if path is None else path
    c = clustering_at(path, lam)
    if not check_membership(build_constraints(c), c.sigma, x, lam).member:
        return False
    xs = x[c.sigma]
    for alt in _perturbations(c, xs, rng):
        if check_membership(build_constraints(alt), alt.sigma, x, lam).member:
            if not alt.same_partition(c):
                return False
    return True
