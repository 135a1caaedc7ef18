"""Cumulants and their estimation from path-delay samples.

Covers closed-form cumulants of the supported link-delay distributions,
multivariate k-statistics of orders 1 through 4 (minimum-variance unbiased
cumulant estimators), the averaged common-cumulant estimator over all
representative multi-indices of a path set, split/bootstrap resampling, and
the t-test used to decide whether an estimated cumulant entry is nonzero.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np

from ._special import student_t_two_sided_p
from .lattice import MultiIndex, PathSet, representative_multi_indices

__all__ = [
    "LinkDistribution",
    "DelaySample",
    "EstimateWithSpread",
    "NonzeroTestConfig",
    "analytic_cumulant",
    "mixture_cumulant",
    "k_statistic",
    "common_cumulant_estimate",
    "resample_estimates",
    "nonzero_test",
    "ResampleEstimator",
]

MAX_K_ORDER = 4


@dataclass(frozen=True)
class LinkDistribution:
    """A link-delay distribution: normal, exponential, or gamma.

    Parameter conventions (delays in ms): normal takes (mean, variance);
    exponential takes a rate per ms, so cumulants are (i-1)!/rate^i; gamma
    takes (shape, rate), cumulants shape*(i-1)!/rate^i. Exact rational
    parameters (Fraction) flow through to exact cumulants.
    """

    kind: Literal["normal", "exponential", "gamma"]
    params: tuple

    def __post_init__(self) -> None:
        if self.kind == "normal":
            mean, var = self.params
            if var <= 0:
                raise ValueError("normal variance must be positive")
        elif self.kind == "exponential":
            (rate,) = self.params
            if rate <= 0:
                raise ValueError("exponential rate must be positive")
        elif self.kind == "gamma":
            shape, rate = self.params
            if shape <= 0 or rate <= 0:
                raise ValueError("gamma shape and rate must be positive")
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def normal(cls, mean, variance) -> "LinkDistribution":
        return cls("normal", (mean, variance))

    @classmethod
    def exponential(cls, rate) -> "LinkDistribution":
        return cls("exponential", (rate,))

    @classmethod
    def gamma(cls, shape, rate) -> "LinkDistribution":
        return cls("gamma", (shape, rate))

    def mean(self):
        return analytic_cumulant(self, 1)

    def variance(self):
        return analytic_cumulant(self, 2)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "normal":
            mean, var = self.params
            return rng.normal(float(mean), math.sqrt(float(var)), size)
        if self.kind == "exponential":
            (rate,) = self.params
            return rng.exponential(1.0 / float(rate), size)
        shape, rate = self.params
        return rng.gamma(float(shape), 1.0 / float(rate), size)

    def to_json(self) -> dict:
        if self.kind == "normal":
            mean, var = self.params
            return {"kind": "normal", "mean": float(mean), "variance": float(var)}
        if self.kind == "exponential":
            (rate,) = self.params
            return {"kind": "exponential", "rate": float(rate)}
        shape, rate = self.params
        return {"kind": "gamma", "shape": float(shape), "rate": float(rate)}

    @classmethod
    def from_json(cls, obj: dict) -> "LinkDistribution":
        kind = obj["kind"]
        if kind == "normal":
            return cls.normal(obj["mean"], obj["variance"])
        if kind == "exponential":
            return cls.exponential(obj["rate"])
        if kind == "gamma":
            return cls.gamma(obj["shape"], obj["rate"])
        raise ValueError(f"unknown distribution kind {kind!r}")


def analytic_cumulant(dist: LinkDistribution, i: int):
    """The ith cumulant of a link distribution, in closed form."""
    if i < 1:
        raise ValueError("cumulant order must be positive")
    if dist.kind == "normal":
        mean, var = dist.params
        if i == 1:
            return mean
        if i == 2:
            return var
        return 0
    if dist.kind == "exponential":
        (rate,) = dist.params
        fact = math.factorial(i - 1)
        if isinstance(rate, (int, Fraction)):
            return Fraction(fact) / Fraction(rate) ** i
        return fact / rate**i
    shape, rate = dist.params
    fact = math.factorial(i - 1)
    if isinstance(rate, (int, Fraction)) and isinstance(shape, (int, Fraction)):
        return Fraction(shape) * fact / Fraction(rate) ** i
    return shape * fact / rate**i


def mixture_cumulant(routing, links: Sequence[LinkDistribution], alpha: MultiIndex):
    """kappa_alpha of the path-delay vector V = R U, computed analytically.

    By independence of the link delays and multilinearity of cumulants this
    is sum over links l of (prod over j in supp(alpha) of r[j,l]) times the
    |alpha|-th cumulant of link l: only links common to every path in the
    support contribute.
    """
    matrix = getattr(routing, "matrix", routing)
    i = alpha.size()
    if i < 1:
        raise ValueError("multi-index must have positive size")
    n_rows = len(matrix)
    m = len(matrix[0]) if n_rows else 0
    if alpha.n != n_rows:
        raise ValueError(
            f"multi-index width {alpha.n} does not match {n_rows} routing rows"
        )
    if len(links) != m:
        raise ValueError(f"{len(links)} link distributions for {m} routing columns")
    support = alpha.support().members()
    total = 0
    for ell in range(m):
        if all(matrix[j][ell] for j in support):
            total = total + analytic_cumulant(links[ell], i)
    return total


@dataclass
class DelaySample:
    """An N-by-n matrix of path-delay observations (ms), one column per path."""

    data: np.ndarray
    path_ids: list[str]

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("sample data must be a 2-D array")
        if self.data.shape[1] != len(self.path_ids):
            raise ValueError("column count does not match path_ids")
        if self.data.shape[0] < 1:
            raise ValueError("sample must contain at least one observation")
        if not np.isfinite(self.data).all():
            raise ValueError("sample contains missing or non-finite entries")

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.path_ids)
            for row in self.data:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "DelaySample":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise ValueError(f"{path}: missing header row")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise ValueError(f"{path}: no observations")
        return cls(np.array(rows), list(header))


def _central_moment(centered: np.ndarray, indices: tuple[int, ...]) -> float:
    prod = centered[:, indices[0]].copy()
    for j in indices[1:]:
        prod *= centered[:, j]
    return float(prod.mean())


def _k_from_centered(
    centered: np.ndarray,
    indices: tuple[int, ...],
    N: int,
    means: np.ndarray | None = None,
) -> float:
    """k-statistic from pre-centered data and an expanded index tuple.

    Order 1 needs the original column means, which centering removes.
    """
    r = len(indices)
    if r == 1:
        if means is None:
            raise ValueError("order-1 statistic needs the column means")
        return float(means[indices[0]])
    if r == 2:
        return N / (N - 1) * _central_moment(centered, indices)
    if r == 3:
        return N * N / ((N - 1) * (N - 2)) * _central_moment(centered, indices)
    a, b, c, d = indices
    m4 = _central_moment(centered, indices)
    pair = (
        _central_moment(centered, (a, b)) * _central_moment(centered, (c, d))
        + _central_moment(centered, (a, c)) * _central_moment(centered, (b, d))
        + _central_moment(centered, (a, d)) * _central_moment(centered, (b, c))
    )
    return N * N / ((N - 1) * (N - 2) * (N - 3)) * ((N + 1) * m4 - (N - 1) * pair)


def k_statistic(sample: DelaySample, alpha: MultiIndex) -> float:
    """Unbiased estimate of the multivariate cumulant kappa_alpha.

    Orders 2-4 use closed forms built from central power sums with the
    standard bias-correcting denominators; order 1 is the sample mean.
    At order 2 this is exactly the unbiased sample covariance.
    """
    order = alpha.size()
    if order < 1:
        raise ValueError("multi-index must have positive size")
    if order > MAX_K_ORDER:
        raise ValueError(f"order not supported: {order} > {MAX_K_ORDER}")
    if alpha.n != sample.n:
        raise ValueError("multi-index width does not match sample columns")
    indices = alpha.expanded_indices()
    if order == 1:
        return float(sample.data[:, indices[0]].mean())
    if sample.N <= order:
        raise ValueError(f"sample too small: need N > {order}, got N={sample.N}")
    centered = sample.data - sample.data.mean(axis=0)
    return _k_from_centered(centered, indices, sample.N)


def common_cumulant_estimate(sample: DelaySample, P: PathSet, i: int) -> float:
    """Average of k-statistics over all ith-order representative
    multi-indices of P; the order-i common-cumulant estimate for P."""
    if i > MAX_K_ORDER:
        raise ValueError(f"order not supported: {i} > {MAX_K_ORDER}")
    alphas = representative_multi_indices(P, i)
    return sum(k_statistic(sample, a) for a in alphas) / len(alphas)


@dataclass
class EstimateWithSpread:
    """Replicate estimates with their mean and standard error."""

    mean: float
    stderr: float
    replicates: list[float]

    @classmethod
    def from_replicates(cls, replicates: Sequence[float]) -> "EstimateWithSpread":
        reps = [float(v) for v in replicates]
        if len(reps) < 1:
            raise ValueError("need at least one replicate")
        mean = float(np.mean(reps))
        if len(reps) == 1:
            stderr = 0.0
        else:
            stderr = float(np.std(reps, ddof=1) / math.sqrt(len(reps)))
        return cls(mean=mean, stderr=stderr, replicates=reps)

    @property
    def M(self) -> int:
        return len(self.replicates)

    def spread(self) -> float:
        """Sample standard deviation of the replicates (stderr * sqrt(M))."""
        return self.stderr * math.sqrt(self.M)


@dataclass(frozen=True)
class NonzeroTestConfig:
    """How to resample and at what level to reject the zero hypothesis."""

    method: Literal["split", "bootstrap"] = "bootstrap"
    M: int = 50
    p_threshold: float = 0.01
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ValueError("need at least two replicates")
        if not 0.0 < self.p_threshold < 1.0:
            raise ValueError("p_threshold must lie in (0, 1)")
        if self.method not in ("split", "bootstrap"):
            raise ValueError(f"unknown resampling method {self.method!r}")

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "M": self.M,
            "p_threshold": self.p_threshold,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NonzeroTestConfig":
        return cls(
            method=obj.get("method", "bootstrap"),
            M=obj.get("M", 50),
            p_threshold=obj.get("p_threshold", 0.01),
            rng_seed=obj.get("rng_seed", 0),
        )


def replicate_indices(N: int, cfg: NonzeroTestConfig) -> list[np.ndarray]:
    """Row-index arrays for the M replicates of a size-N sample.

    Splits are disjoint equal-size blocks in original order (any remainder
    rows are dropped); bootstrap replicates draw N rows with replacement
    from a generator seeded by cfg.rng_seed.
    """
    if cfg.method == "split":
        size = N // cfg.M
        if size < 1:
            raise ValueError(f"sample of {N} rows cannot be split {cfg.M} ways")
        return [np.arange(k * size, (k + 1) * size) for k in range(cfg.M)]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
    return [rng.integers(0, N, size=N) for _ in range(cfg.M)]


def resample_estimates(
    sample: DelaySample, P: PathSet, i: int, cfg: NonzeroTestConfig
) -> EstimateWithSpread:
    """Common-cumulant estimate for P at order i on each of M resamples."""
    est = ResampleEstimator(sample, cfg)
    return est.estimate(P, i)


def nonzero_test(
    est: EstimateWithSpread, cfg: NonzeroTestConfig
) -> tuple[bool, float]:
    """Two-sided one-sample t-test of zero mean on the replicate estimates.

    Returns (decision, p_value) with decision = (p < cfg.p_threshold).
    Zero spread degenerates to p=1 for zero mean and p=0 otherwise.
    """
    if est.M < 2:
        raise ValueError("nonzero test needs at least two replicates")
    if est.stderr == 0.0:
        p = 1.0 if est.mean == 0.0 else 0.0
    else:
        t = est.mean / est.stderr
        p = student_t_two_sided_p(t, est.M - 1)
    return p < cfg.p_threshold, p


class ResampleEstimator:
    """Replicate common-cumulant estimates over a fixed set of resamples.

    One pass over the replicates centers each resample once and evaluates
    every requested (path set, order) pair on it; results are memoized so
    pipeline stages can share estimates. All estimates are pure functions
    of (sample, cfg).
    """

    def __init__(self, sample: DelaySample, cfg: NonzeroTestConfig) -> None:
        self.sample = sample
        self.cfg = cfg
        self.indices = replicate_indices(sample.N, cfg)
        self._cache: dict[tuple[int, int], EstimateWithSpread] = {}

    def prefetch(self, requests: Sequence[tuple[PathSet, int]]) -> None:
        """Evaluate all missing (P, i) pairs in a single replicate sweep."""
        pending: list[tuple[PathSet, int]] = []
        seen = set()
        for P, i in requests:
            key = (P.bits, i)
            if key in self._cache or key in seen:
                continue
            if i > MAX_K_ORDER:
                raise ValueError(f"order not supported: {i} > {MAX_K_ORDER}")
            seen.add(key)
            pending.append((P, i))
        if not pending:
            return
        expanded = {
            (P.bits, i): [a.expanded_indices() for a in representative_multi_indices(P, i)]
            for P, i in pending
        }
        values = {key: [] for key in expanded}
        data = self.sample.data
        max_order = max(i for _, i in pending)
        for idx in self.indices:
            rows = data[idx]
            N = rows.shape[0]
            if max_order > 1 and N <= max_order:
                raise ValueError(
                    f"sample too small: replicate of {N} rows for order {max_order}"
                )
            means = rows.mean(axis=0)
            centered = rows - means
            for key, alpha_list in expanded.items():
                acc = 0.0
                for indices in alpha_list:
                    acc += _k_from_centered(centered, indices, N, means)
                values[key].append(acc / len(alpha_list))
        for key, reps in values.items():
            self._cache[key] = EstimateWithSpread.from_replicates(reps)

    def estimate(self, P: PathSet, i: int) -> EstimateWithSpread:
        key = (P.bits, i)
        if key not in self._cache:
            self.prefetch([(P, i)])
        return self._cache[key]

    def nonzero(self, P: PathSet, i: int, p_threshold: float) -> tuple[bool, float]:
        est = self.estimate(P, i)
        if est.stderr == 0.0:
            p = 1.0 if est.mean == 0.0 else 0.0
        else:
            p = student_t_two_sided_p(est.mean / est.stderr, est.M - 1)
        return p < p_threshold, p

    def sigma(self, P: PathSet, i: int) -> float:
        """Standard deviation of the order-i estimate for P.

        Bootstrap replicates estimate the sampling deviation of the
        full-sample statistic directly (spread of the replicates); split
        replicates estimate it as the standard error of their mean.
        """
        est = self.estimate(P, i)
        if self.cfg.method == "bootstrap":
            return est.spread()
        return est.stderr
