"""Simulation and calibration helpers.

Matrix-normal sampling, null calibration of lambda, a Wilcoxon rank-sum
baseline, KS uniformity diagnostics, and drivers for the 1D and p-dimensional
Monte Carlo studies. Each replicate draws from its own counter-based (Philox)
stream keyed by ``(seed, replicate)``, so serial and parallel runs agree.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import comb, ndtr
from scipy.stats import rankdata

from ._linalg import cholesky_factor
from .errors import DegenerateTruncation, InvalidInput, UndefinedContrast
from .inference import GaussianModel, balanced_contrast, pvalue_from_constraints
from .multidim import (aggregate_columns, build_block_constraints, build_kappa,
                       columnwise_paths, group_contrast, single_block, vec)
from .path import clustering_at, compute_path

KS_CRIT_1PCT = 1.63


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for one replicate."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(ss))


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(0 if rng is None else int(rng)))


def sample_matrix_normal(u, Sigma, Delta, rng) -> np.ndarray:
    """Draw ``Y = u + L_S G L_D'`` so that ``vec(Y)`` has covariance ``Delta (x) Sigma``."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    n, p = u.shape
    Ls = cholesky_factor(Sigma, "Sigma")
    Ld = cholesky_factor(Delta, "Delta")
    if Ls.shape[0] != n or Ld.shape[0] != p:
        raise InvalidInput(f"mean is {n}x{p}, Sigma is {Ls.shape[0]}, Delta is {Ld.shape[0]}")
    G = _as_rng(rng).standard_normal((n, p))
    return u + Ls @ G @ Ld.T


def lambda_max_rows(X) -> np.ndarray:
    """Row-wise single-cluster threshold for a batch of data vectors."""
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    xs = -np.sort(-X, axis=1)
    i = np.arange(1, n)
    head = np.cumsum(xs, axis=1)[:, :-1] / i
    out = np.max((head - xs.mean(axis=1, keepdims=True)) / (n - i), axis=1)
    out[xs[:, 0] == xs[:, -1]] = 0.0
    return out


def null_lambda_max(n: int, Sigma=None, B: int = 10000, rng=None, chunk: int = 500) -> np.ndarray:
    if n < 2:
        raise InvalidInput("need n >= 2")
    if B < 2:
        raise InvalidInput("need B >= 2")
    rng = _as_rng(rng)
    L = None if Sigma is None else cholesky_factor(Sigma, "Sigma")
    out = np.empty(B)
    for s in range(0, B, chunk):
        m = min(chunk, B - s)
        Z = rng.standard_normal((m, n))
        if L is not None:
            Z = Z @ L.T
        out[s:s + m] = lambda_max_rows(Z)
    return out


def calibrate_lambda(n: int, Sigma=None, B: int = 10000, rng=None) -> float:
    """First percentile minus standard deviation of null single-cluster thresholds.

    ``Sigma=None`` means the identity.
    """
    lam = null_lambda_max(n, Sigma, B, rng)
    return float(np.quantile(lam, 0.01) - np.std(lam, ddof=1))


# -- Wilcoxon ----------------------------------------------------------------

def _rank_sum_counts(N: int, m: int) -> np.ndarray:
    """counts[s] = number of m-subsets of {1..N} with sum s."""
    smax = m * N
    table = np.zeros((m + 1, smax + 1))
    table[0, 0] = 1.0
    for r in range(1, N + 1):
        for k in range(min(m, r), 0, -1):
            table[k, r:] += table[k - 1, :smax + 1 - r]
    return table[m]


def wilcoxon_rank_sum(a, b) -> float:
    """Two-sided p-value of the Wilcoxon rank-sum test.

    Exact null distribution for at most 20 observations without ties,
    otherwise the normal approximation with tie and continuity corrections.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise InvalidInput("both groups must be nonempty")
    m, n2 = a.size, b.size
    N = m + n2
    ranks = rankdata(np.r_[a, b])
    W = float(ranks[:m].sum())
    _, tie_counts = np.unique(np.r_[a, b], return_counts=True)
    if N <= 20 and tie_counts.size == N:
        counts = _rank_sum_counts(N, m)
        total = comb(N, m, exact=True)
        w = int(round(W))
        p_le = counts[:w + 1].sum() / total
        p_ge = counts[w:].sum() / total
        return float(min(1.0, 2.0 * min(p_le, p_ge)))
    U = W - m * (m + 1) / 2
    mean = m * n2 / 2
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (N * (N - 1))
    var = m * n2 / 12 * ((N + 1) - tie_term)
    if var <= 0:
        return 1.0
    d = U - mean
    z = (d - math.copysign(0.5, d)) / math.sqrt(var) if d != 0 else 0.0
    return float(min(1.0, 2.0 * min(ndtr(z), ndtr(-z))))


def ks_uniformity(pvals) -> float:
    """Sup-distance between the empirical CDF of ``pvals`` and Uniform[0, 1]."""
    u = np.sort(np.asarray(pvals, dtype=float).reshape(-1))
    if u.size == 0:
        raise InvalidInput("no p-values")
    m = u.size
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - u), np.max(u - (i - 1) / m)))


def ks_critical(m: int) -> float:
    """Asymptotic 1% critical value of the one-sample KS statistic."""
    return KS_CRIT_1PCT / math.sqrt(m)


# -- experiment drivers ------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Monte Carlo settings; ``lam=None`` calibrates lambda under the null.

    ``contrast`` is "balanced" (1D two-group contrast after balanced merging),
    "pair" (clusters ``k1`` vs ``k2``), or "all_pairs" (every pair among the
    first ``K0`` clusters; replicates with fewer clusters are resampled).
    For p > 1, ``j0=None`` tests every column.
    """

    n: int = 100
    p: int = 1
    nu: float = 0.0
    rho: float = 0.0
    lam: Optional[float] = None
    replicates: int = 1000
    seed: int = 0
    j0: Optional[int] = None
    k1: int = 0
    k2: int = 1
    contrast: str = "balanced"
    K0: int = 10
    agg: str = "euclidean"
    linkage: str = "complete"
    K: int = 2
    wilcoxon: bool = True
    threads: int = 1
    max_attempts: Optional[int] = None
    calibration_B: int = 10000

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidInput("replicates must be >= 1")
        if self.n < 2 or self.p < 1:
            raise InvalidInput("need n >= 2 and p >= 1")
        if self.lam is not None and not self.lam > 0:
            raise InvalidInput("lambda must be positive")
        if self.contrast not in ("balanced", "pair", "all_pairs"):
            raise InvalidInput(f"unknown contrast {self.contrast!r}")
        if self.j0 is not None and not 0 <= self.j0 < self.p:
            raise InvalidInput(f"j0={self.j0} out of range for p={self.p}")

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        """Build from a flat mapping of strings or values (key=value or JSON config)."""
        kw = {}
        fields = cls.__dataclass_fields__
        for k, v in d.items():
            key = "lam" if k in ("lambda", "lam") else k
            if key not in fields:
                raise InvalidInput(f"unknown config key {k!r}")
            kw[key] = _coerce(fields[key].type, v)
        return cls(**kw)


def _coerce(typ: str, v):
    if not isinstance(v, str):
        return v
    if v.lower() in ("none", "null", ""):
        return None
    if "bool" in typ:
        return v.lower() in ("1", "true", "yes")
    if "int" in typ:
        return int(v)
    if "float" in typ:
        return float(v)
    return v


@dataclass(frozen=True, eq=False)
class EcdfTable:
    """Empirical CDF of the accepted p-values of one (nu, rho, j, method) cell."""

    values: np.ndarray
    fractions: np.ndarray
    accepted: int
    rejected: int

    @classmethod
    def from_values(cls, values, rejected: int = 0) -> "EcdfTable":
        v = np.sort(np.asarray(values, dtype=float))
        return cls(v, np.arange(1, v.size + 1) / v.size, int(v.size), int(rejected))

    def rejection_rate(self, alpha: float = 0.05) -> float:
        return float(np.mean(self.values <= alpha))

    def ks(self) -> float:
        return ks_uniformity(self.values)

    def within_band(self) -> bool:
        return self.ks() < ks_critical(self.accepted)

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.values.tolist(), self.fractions.tolist()))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    lam: float
    records: List[dict]
    accepted: int
    rejected: int
    degenerate: int
    attempts: int
    tables: Dict[tuple, EcdfTable] = field(default_factory=dict)

    def table(self, method: str = "selective", j: int = 0, pair: str = "0-1") -> EcdfTable:
        return self.tables[(method, j, pair)]

    def signal_histogram(self):
        return signal_histogram([r["kappa_beta"] for r in self.records if r["method"] == "selective"],
                                self.config.nu)


RECORD_FIELDS = ("seed", "nu", "rho", "j", "pair", "pvalue", "method", "kappa_beta")


def signal_histogram(values, nu: float) -> List[Tuple[float, float, int, float]]:
    """Histogram of true contrast values with bin width 0.05 * max(|nu|, 1).

    Rows are (left, right, count, density).
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return []
    width = 0.05 * max(abs(nu), 1.0)
    lo = math.floor(v.min() / width) * width
    nb = max(1, int(math.ceil((v.max() - lo) / width + 1e-12)))
    if lo + nb * width <= v.max():
        nb += 1
    edges = lo + width * np.arange(nb + 1)
    counts, _ = np.histogram(v, bins=edges)
    dens = counts / (v.size * width)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i]), float(dens[i]))
            for i in range(nb)]


def _mean_1d(n: int, nu: float) -> np.ndarray:
    return np.r_[np.full(n // 2, nu), np.zeros(n - n // 2)]


def _replicate_1d(cfg: ExperimentConfig, lam: float, attempt: int):
    """Records for one draw, or None when the contrast is undefined."""
    rng = replicate_rng(cfg.seed, attempt)
    mu = _mean_1d(cfg.n, cfg.nu)
    x = mu + rng.standard_normal(cfg.n)
    c = clustering_at(compute_path(x), lam)
    if cfg.contrast == "balanced":
        if c.K < 2:
            return None
        pairs = [((0, 1), balanced_contrast(c))]
    elif cfg.contrast == "pair":
        if c.K <= max(cfg.k1, cfg.k2):
            return None
        pairs = [((cfg.k1, cfg.k2), group_contrast(c.labels(), cfg.k1, cfg.k2))]
    else:
        if c.K < cfg.K0:
            return None
        lab = c.labels()
        pairs = [((a, b), group_contrast(lab, a, b))
                 for a in range(cfg.K0) for b in range(a + 1, cfg.K0)]
    model = GaussianModel.identity(cfg.n)
    block = single_block(c)
    out = []
    for (a, b), eta in pairs:
        res = pvalue_from_constraints(x, lam, model, block, eta, (c,))
        out.append(dict(seed=attempt, nu=cfg.nu, rho=cfg.rho, j=0, pair=f"{a}-{b}",
                        pvalue=res.pvalue, method="selective", kappa_beta=float(eta @ mu)))
    return out


def _mean_multidim(n: int, p: int, nu: float) -> np.ndarray:
    u = np.zeros((n, p))
    u[:n // 2, 0] = nu
    u[n // 2:, 0] = -nu
    return u


def column_covariance(p: int, rho: float) -> np.ndarray:
    """Identity with correlation ``rho`` between the first and last variables."""
    D = np.eye(p)
    if p >= 2:
        D[0, -1] = D[-1, 0] = rho
    return D


def _replicate_multidim(cfg: ExperimentConfig, lam: float, attempt: int):
    rng = replicate_rng(cfg.seed, attempt)
    n, p = cfg.n, cfg.p
    u = _mean_multidim(n, p, cfg.nu)
    Delta = column_covariance(p, cfg.rho)
    Y = sample_matrix_normal(u, np.eye(n), Delta, rng)
    cc = columnwise_paths(Y, lam)
    agg = aggregate_columns(cc, cfg.K, cfg.agg, cfg.linkage)
    k1, k2 = cfg.k1, cfg.k2
    if agg.K <= max(k1, k2):
        return None
    model = GaussianModel.kronecker(np.eye(n), Delta)
    blocks = build_block_constraints(cc)
    vy, vu = vec(Y), vec(u)
    pair = f"{k1}-{k2}"
    out = []
    for j in ([cfg.j0] if cfg.j0 is not None else range(p)):
        kappa = build_kappa(agg, j, k1, k2, n, p)
        res = pvalue_from_constraints(vy, lam, model, blocks, kappa, cc.clusterings)
        kb = float(kappa @ vu)
        out.append(dict(seed=attempt, nu=cfg.nu, rho=cfg.rho, j=j, pair=pair,
                        pvalue=res.pvalue, method="selective", kappa_beta=kb))
        if cfg.wilcoxon:
            pw = wilcoxon_rank_sum(Y[agg.members(k1), j], Y[agg.members(k2), j])
            out.append(dict(seed=attempt, nu=cfg.nu, rho=cfg.rho, j=j, pair=pair,
                            pvalue=pw, method="wilcoxon", kappa_beta=kb))
    return out


def _safe(fn, cfg, lam, attempt):
    try:
        return attempt, fn(cfg, lam, attempt)
    except UndefinedContrast:
        return attempt, None
    except DegenerateTruncation:
        return attempt, "degenerate"


def _run_batch(args):
    fn, cfg, lam, attempts = args
    return [_safe(fn, cfg, lam, a) for a in attempts]


def _drive(cfg: ExperimentConfig, fn) -> ExperimentResult:
    if cfg.lam is None:
        lam = calibrate_lambda(cfg.n, None, cfg.calibration_B, replicate_rng(cfg.seed, 2 ** 62))
    else:
        lam = float(cfg.lam)
    N = cfg.replicates
    max_attempts = cfg.max_attempts or 50 * N + 100
    records: List[dict] = []
    accepted = rejected = degenerate = 0
    next_attempt = 0
    pool = ProcessPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        while accepted < N and next_attempt < max_attempts:
            need = N - accepted
            size = min(max(need + need // 4 + 1, cfg.threads), max_attempts - next_attempt)
            attempts = list(range(next_attempt, next_attempt + size))
            next_attempt += size
            if pool is None:
                results = _run_batch((fn, cfg, lam, attempts))
            else:
                chunks = [attempts[i::cfg.threads] for i in range(cfg.threads)]
                results = sorted((r for part in pool.map(_run_batch, [(fn, cfg, lam, ch) for ch in chunks])
                                  for r in part), key=lambda r: r[0])
            # consume in attempt order so the outcome does not depend on batching
            for attempt, recs in results:
                if accepted >= N:
                    break
                if recs is None:
                    rejected += 1
                elif recs == "degenerate":
                    degenerate += 1
                else:
                    accepted += 1
                    records.extend(recs)
    finally:
        if pool is not None:
            pool.shutdown()
    consumed = accepted + rejected + degenerate
    res = ExperimentResult(cfg, lam, records, accepted, rejected, degenerate, consumed)
    res.tables = _tables(records, rejected)
    return res


def _tables(records, rejected) -> Dict[tuple, EcdfTable]:
    groups: Dict[tuple, list] = {}
    for r in records:
        groups.setdefault((r["method"], r["j"], r["pair"]), []).append(r["pvalue"])
    return {k: EcdfTable.from_values(v, rejected) for k, v in sorted(groups.items())}


def run_experiment_1d(cfg: ExperimentConfig) -> ExperimentResult:
    """Null/alternative study with mean ``(nu 1_{n/2}, 0_{n/2})`` and identity covariance."""
    if cfg.n % 2:
        raise InvalidInput("n must be even")
    return _drive(cfg, _replicate_1d)


def run_experiment_multidim(cfg: ExperimentConfig) -> ExperimentResult:
    """Matrix-normal study: first variable carries +-nu halves, first and last correlate by rho."""
    if cfg.n % 2:
        raise InvalidInput("n must be even")
    return _drive(cfg, _replicate_multidim)


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
