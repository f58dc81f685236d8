"""Selective tests of a linear contrast of the mean after convex clustering.

Given the polyhedron ``{M P x <= lam m}`` of the realized clustering and
order, the observation splits as ``x = c (eta'x) + z`` with ``z`` independent
of ``eta'x``. Conditionally on ``z`` the event becomes an interval
``[v_minus, v_plus]`` for ``eta'x``, and the truncated Gaussian CDF at
``eta'x`` is uniform under ``eta'mu = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._linalg import cholesky_factor
from .errors import (DegenerateTruncation, InconsistentConditioning, InvalidInput,
                     UndefinedContrast)
from .multidim import (AggregatedClustering, BlockConstraints, ColumnClusterings,
                       as_data_matrix, build_block_constraints, columnwise_paths,
                       group_contrast, single_block, vec)
from .path import (RegularizationPath, SegmentedClustering, as_data_vector,
                   balanced_two_merge, clustering_at, compute_path)
from .polyhedron import MEMBERSHIP_TOL
from .truncnorm import trunc_gauss_tails

SIGN_TOL = 1e-12
DEGENERATE_TOL = 1e-12


class GaussianModel:
    """Known covariance of the (vectorized) observations.

    Either a dense ``dim x dim`` matrix, or a Kronecker pair ``(Sigma, Delta)``
    standing for ``Delta (x) Sigma``, the covariance of ``vec(Y)`` for a matrix
    normal ``Y`` with row covariance ``Sigma`` and column covariance ``Delta``.
    The Kronecker form is never materialized.
    """

    def __init__(self, cov=None, *, sigma=None, delta=None):
        if cov is not None:
            if sigma is not None or delta is not None:
                raise InvalidInput("give either cov or (sigma, delta)")
            self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
            cholesky_factor(self.cov, "covariance")
            self.sigma = self.delta = None
            self.dim = self.cov.shape[0]
        else:
            if sigma is None:
                raise InvalidInput("sigma is required")
            self.sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
            self.delta = np.eye(1) if delta is None else np.atleast_2d(np.asarray(delta, dtype=float))
            cholesky_factor(self.sigma, "Sigma")
            cholesky_factor(self.delta, "Delta")
            self.cov = None
            self.dim = self.sigma.shape[0] * self.delta.shape[0]

    @classmethod
    def identity(cls, n: int, p: int = 1) -> "GaussianModel":
        return cls(sigma=np.eye(n), delta=np.eye(p))

    @classmethod
    def kronecker(cls, Sigma, Delta) -> "GaussianModel":
        return cls(sigma=Sigma, delta=Delta)

    def cov_dot(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.size != self.dim:
            raise InvalidInput(f"vector of length {v.size} for a model of dimension {self.dim}")
        if self.cov is not None:
            return self.cov @ v
        n, p = self.sigma.shape[0], self.delta.shape[0]
        V = v.reshape(p, n).T
        return vec(self.sigma @ V @ self.delta)

    def dense(self) -> np.ndarray:
        if self.cov is not None:
            return self.cov
        return np.kron(self.delta, self.sigma)


def as_model(cov, dim: int) -> GaussianModel:
    if cov is None:
        return GaussianModel.identity(dim)
    if isinstance(cov, GaussianModel):
        model = cov
    elif np.isscalar(cov):
        model = GaussianModel(sigma=float(cov) * np.eye(dim))
    else:
        model = GaussianModel(cov)
    if model.dim != dim:
        raise InvalidInput(f"covariance of dimension {model.dim}, data of dimension {dim}")
    return model


@dataclass(frozen=True, eq=False)
class TruncationBounds:
    v_minus: float
    v_plus: float
    v_zero: float
    z: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class SelectiveTestResult:
    stat: float
    variance: float
    bounds: TruncationBounds
    T: float
    pvalue: float
    lam: float
    clusterings: tuple = field(default=(), repr=False)
    contrast: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def v_minus(self):
        return self.bounds.v_minus

    @property
    def v_plus(self):
        return self.bounds.v_plus

    def to_dict(self) -> dict:
        def enc(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
        cl = [{"t": c.t.tolist(), "sigma": c.sigma.tolist()} for c in self.clusterings]
        return {
            "stat": self.stat, "variance": self.variance,
            "v_minus": enc(self.bounds.v_minus), "v_plus": enc(self.bounds.v_plus),
            "v_zero": enc(self.bounds.v_zero),
            "T": self.T, "pvalue": self.pvalue,
            "clustering": cl[0] if len(cl) == 1 else cl,
            "lambda": self.lam,
        }


def _check_contrast(eta, dim) -> np.ndarray:
    if eta is None:
        raise UndefinedContrast("contrast undefined for the realized clustering")
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if eta.size != dim:
        raise InvalidInput(f"contrast of length {eta.size}, expected {dim}")
    if not np.any(eta):
        raise UndefinedContrast("contrast is the zero vector")
    return eta


def conditional_bounds(constraints: BlockConstraints, model: GaussianModel, eta, obs,
                       lam: float, check: bool = True) -> TruncationBounds:
    """Truncation interval of ``eta'obs`` given the residual ``z``.

    ``constraints`` holds one polyhedron per column of the (vectorized)
    observation; a one-dimensional problem is a single block.
    """
    obs = np.asarray(obs, dtype=float).reshape(-1)
    eta = _check_contrast(eta, obs.size)
    if constraints.n * constraints.p != obs.size:
        raise InvalidInput("constraints and observation sizes disagree")
    g = model.cov_dot(eta)
    var = float(eta @ g)
    c = g / var
    stat = float(eta @ obs)
    z = obs - c * stat
    Mc = constraints.apply(c)
    Mz = constraints.apply(z)
    rhs = lam * constraints.m - Mz
    tol = SIGN_TOL * (1.0 + constraints.row_norms() * np.linalg.norm(c))
    pos, neg = Mc > tol, Mc < -tol
    zero = ~(pos | neg)
    v_minus = float(np.max(rhs[neg] / Mc[neg])) if neg.any() else -math.inf
    v_plus = float(np.min(rhs[pos] / Mc[pos])) if pos.any() else math.inf
    v_zero = float(np.min(rhs[zero])) if zero.any() else math.inf
    if check:
        scale = 1.0 + float(np.max(np.abs(lam * constraints.m), initial=0.0))
        if v_zero < -MEMBERSHIP_TOL * scale:
            raise InconsistentConditioning(f"V0 = {v_zero} < 0")
        lo_tol = MEMBERSHIP_TOL * (1.0 + abs(stat) + abs(v_minus)) if neg.any() else 0.0
        hi_tol = MEMBERSHIP_TOL * (1.0 + abs(stat) + abs(v_plus)) if pos.any() else 0.0
        if stat < v_minus - lo_tol or stat > v_plus + hi_tol:
            raise InconsistentConditioning(
                f"statistic {stat} outside [{v_minus}, {v_plus}]")
    return TruncationBounds(v_minus, v_plus, v_zero, z, c)


def _finish(stat, var, bounds, lam, clusterings, eta) -> SelectiveTestResult:
    a, b = bounds.v_minus, bounds.v_plus
    if math.isfinite(a) and math.isfinite(b) and b - a <= DEGENERATE_TOL * (1 + max(abs(a), abs(b))):
        raise DegenerateTruncation(f"V- = {a} and V+ = {b} coincide")
    x = min(max(stat, a), b)
    T, upper = trunc_gauss_tails(x, 0.0, var, a, b)
    pval = min(1.0, 2.0 * min(T, upper))
    return SelectiveTestResult(stat, var, bounds, T, pval, lam, tuple(clusterings), eta)


def pvalue_from_constraints(obs, lam: float, model: GaussianModel, constraints: BlockConstraints,
                          eta, clusterings=()) -> SelectiveTestResult:
    """p-value for fixed conditioning polyhedra and contrast."""
    bounds = conditional_bounds(constraints, model, eta, obs, lam)
    eta = np.asarray(eta, dtype=float).reshape(-1)
    g = model.cov_dot(eta)
    return _finish(float(eta @ np.asarray(obs, dtype=float).reshape(-1)), float(eta @ g),
                   bounds, lam, clusterings, eta)


# -- contrast builders -------------------------------------------------------

def cluster_contrast(k1: int = 0, k2: int = 1) -> Callable[[SegmentedClustering], Optional[np.ndarray]]:
    """Mean of cluster ``k1`` minus mean of cluster ``k2`` (clusters sorted decreasingly)."""
    def build(c: SegmentedClustering):
        if c.K <= max(k1, k2):
            return None
        return group_contrast(c.labels(), k1, k2)
    return build


def balanced_contrast(c: SegmentedClustering) -> Optional[np.ndarray]:
    """Two-group contrast after merging adjacent clusters into balanced halves."""
    if c.K < 2:
        return None
    return group_contrast(balanced_two_merge(c).labels(), 0, 1)


# -- tests -------------------------------------------------------------------

def selective_pvalue_1d(x, lam: float, Sigma=None, eta_builder=balanced_contrast,
                        path: RegularizationPath | None = None) -> SelectiveTestResult:
    x = as_data_vector(x)
    if not lam > 0:
        raise InvalidInput("lambda must be positive")
    model = as_model(Sigma, x.size)
    path = compute_path(x) if path is None else path
    c = clustering_at(path, lam)
    eta = _check_contrast(eta_builder(c), x.size)
    return pvalue_from_constraints(x, lam, model, single_block(c), eta, (c,))


def selective_pvalue_multidim(Y, lam: float, model: GaussianModel, kappa_builder,
                              cc: ColumnClusterings | None = None) -> SelectiveTestResult:
    """General p-dimensional test, conditioning on every column's clustering and order."""
    Y = as_data_matrix(Y)
    n, p = Y.shape
    if model.dim != n * p:
        raise InvalidInput(f"model dimension {model.dim} != n*p = {n * p}")
    cc = columnwise_paths(Y, lam) if cc is None else cc
    kappa = _check_contrast(kappa_builder(cc), n * p)
    return pvalue_from_constraints(vec(Y), lam, model, build_block_constraints(cc), kappa,
                                 cc.clusterings)


def selective_pvalue_independent(Y, lam: float, Sigma, aggregated: AggregatedClustering,
                                 j0: int, k1: int, k2: int,
                                 cc: ColumnClusterings | None = None) -> SelectiveTestResult:
    """Shortcut for independent columns: only column ``j0`` enters the test."""
    Y = as_data_matrix(Y)
    n = Y.shape[0]
    model = as_model(Sigma, n)
    eta = group_contrast(aggregated.labels, k1, k2)
    if cc is not None:
        c = cc.clusterings[j0]
    else:
        c = clustering_at(compute_path(Y[:, j0]), lam)
    return pvalue_from_constraints(Y[:, j0], lam, model, single_block(c), eta, (c,))
