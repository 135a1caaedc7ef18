"""Routing-matrix reconstruction from path-delay cumulants.

Exact mode consumes an analytic cumulant oracle and recovers the routing
matrix by inverting the superset-sum structure of the order-n cumulant
vector. Data mode replaces the oracle with averaged k-statistics over
split/bootstrap replicates and a per-set hypothesis test on the inverted
replicates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .cumulants import (
    EstimateWithSpread,
    DelaySample,
    LinkDistribution,
    NonzeroTestConfig,
    ResampleEstimator,
    mixture_cumulant,
    nonzero_test,
)
from .lattice import (
    CumulantVector,
    MultiIndex,
    PathSet,
    all_nonempty_sets,
    inversion_matrix,
    mobius_inverse,
)

__all__ = [
    "TestRecord",
    "InferenceResult",
    "oracle_from_ground_truth",
    "infer_routing_exact",
    "infer_routing_from_sample",
    "MAX_DATA_ORDER",
]

MAX_DATA_ORDER = 4
EXACT_ZERO_RTOL = 1e-9


@dataclass
class TestRecord:
    p_value: float
    decision: bool
    mean: float
    stderr: float


@dataclass
class InferenceResult:
    """Cumulant vectors, accepted path sets, and the reconstructed matrix."""

    mode: str
    n: int
    path_ids: list[str]
    f: CumulantVector
    g: CumulantVector
    accepted: list[PathSet]
    tests: dict[PathSet, TestRecord] = field(default_factory=dict)

    def __post_init__(self) -> None:
        bits = [P.bits for P in self.accepted]
        if len(set(bits)) != len(bits):
            raise ValueError("duplicate columns in reconstructed matrix")

    def routing_matrix(self) -> np.ndarray:
        """Columns are the characteristic vectors of the accepted sets."""
        cols = [P.characteristic_vector() for P in self.accepted]
        if not cols:
            return np.zeros((self.n, 0), dtype=np.int8)
        return np.array(cols, dtype=np.int8).T

    def to_json(self) -> dict:
        obj = {
            "mode": self.mode,
            "n": self.n,
            "path_ids": list(self.path_ids),
            "f_order": self.f.order,
            "g_order": self.g.order,
            "f": {str(P.bits): float(v) for P, v in sorted(
                self.f.entries.items(), key=lambda kv: kv[0].bits)},
            "g": {str(P.bits): float(v) for P, v in sorted(
                self.g.entries.items(), key=lambda kv: kv[0].bits)},
            "columns": [P.characteristic_vector() for P in self.accepted],
            "accepted_bits": [P.bits for P in self.accepted],
        }
        if self.tests:
            obj["tests"] = {
                str(P.bits): {
                    "p_value": rec.p_value,
                    "decision": rec.decision,
                    "mean": rec.mean,
                    "stderr": rec.stderr,
                }
                for P, rec in sorted(self.tests.items(), key=lambda kv: kv[0].bits)
            }
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "InferenceResult":
        n = int(obj["n"])
        f = CumulantVector(
            int(obj["f_order"]),
            n,
            {PathSet(int(b), n): float(v) for b, v in obj["f"].items()},
        )
        g = CumulantVector(
            int(obj["g_order"]),
            n,
            {PathSet(int(b), n): float(v) for b, v in obj["g"].items()},
        )
        tests = {}
        for b, rec in obj.get("tests", {}).items():
            tests[PathSet(int(b), n)] = TestRecord(
                p_value=rec["p_value"],
                decision=rec["decision"],
                mean=rec["mean"],
                stderr=rec["stderr"],
            )
        return cls(
            mode=obj["mode"],
            n=n,
            path_ids=[str(p) for p in obj["path_ids"]],
            f=f,
            g=g,
            accepted=[PathSet(int(b), n) for b in obj["accepted_bits"]],
            tests=tests,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "InferenceResult":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def representative_for(P: PathSet, i: int) -> MultiIndex:
    """Deterministic representative: all excess multiplicity on the
    lowest-indexed path in P."""
    members = P.members()
    if i < len(members):
        raise ValueError("order below set size")
    mult = [0] * P.n
    for j in members:
        mult[j] = 1
    mult[members[0]] += i - len(members)
    return MultiIndex(tuple(mult))


def oracle_from_ground_truth(
    routing, links: Sequence[LinkDistribution]
) -> Callable[[MultiIndex], float]:
    """Cumulant oracle kappa_alpha(V) computed from a known scenario."""

    def oracle(alpha: MultiIndex):
        return mixture_cumulant(routing, links, alpha)

    return oracle


def _is_exact(values) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in values)


def infer_routing_exact(
    oracle: Callable[[MultiIndex], float],
    n: int,
    path_ids: Sequence[str] | None = None,
    order: int | None = None,
) -> InferenceResult:
    """Reconstruct the routing matrix from an exact cumulant oracle.

    Fills the order-n cumulant entry of every nonempty path set from one
    representative multi-index, inverts the superset-sum structure, and
    emits the characteristic vector of every set with a nonzero inverted
    entry. Rational oracle values are handled exactly; float values use a
    relative zero tolerance.
    """
    if order is None:
        order = n
    if order < n:
        raise ValueError("cumulant order must be at least the path count")
    sets = all_nonempty_sets(n)
    entries = {P: oracle(representative_for(P, order)) for P in sets}
    f = CumulantVector(order, n, entries)
    g = mobius_inverse(f)
    values = list(g.entries.values())
    if _is_exact(values):
        accepted = [P for P in sets if g.entries[P] != 0]
    else:
        scale = max(1.0, max((abs(float(v)) for v in values), default=0.0))
        accepted = [
            P for P in sets if abs(float(g.entries[P])) > EXACT_ZERO_RTOL * scale
        ]
    ids = list(path_ids) if path_ids is not None else [f"p{j+1}" for j in range(n)]
    return InferenceResult(
        mode="exact", n=n, path_ids=ids, f=f, g=g, accepted=accepted
    )


def infer_routing_from_sample(
    sample: DelaySample,
    cfg: NonzeroTestConfig,
    test: Callable[[PathSet, EstimateWithSpread], tuple[bool, float]] | None = None,
) -> InferenceResult:
    """Data-driven reconstruction at full order n = number of paths.

    Each replicate gets its own averaged common-cumulant vector, the
    inversion applies per replicate, and the per-set hypothesis test runs
    on the M replicate values of the inverted entry. A custom `test`
    callable may replace the default two-sided t-test.
    """
    n = sample.n
    if n > MAX_DATA_ORDER:
        raise ValueError(
            f"full-order inference supports up to {MAX_DATA_ORDER} paths; "
            "use the sparse pipeline for larger problems"
        )
    sets = all_nonempty_sets(n)
    estimator = ResampleEstimator(sample, cfg)
    estimator.prefetch([(P, n) for P in sets])
    f_reps = np.array(
        [estimator.estimate(P, n).replicates for P in sets]
    )  # (2^n - 1, M)
    X = inversion_matrix(sets).astype(float)
    g_reps = X @ f_reps
    f_est = {P: EstimateWithSpread.from_replicates(f_reps[k]) for k, P in enumerate(sets)}
    g_est = {P: EstimateWithSpread.from_replicates(g_reps[k]) for k, P in enumerate(sets)}
    tests: dict[PathSet, TestRecord] = {}
    accepted = []
    for P in sets:
        est = g_est[P]
        if test is not None:
            decision, p = test(P, est)
        else:
            decision, p = nonzero_test(est, cfg)
        tests[P] = TestRecord(
            p_value=p, decision=decision, mean=est.mean, stderr=est.stderr
        )
        if decision:
            accepted.append(P)
    f = CumulantVector(n, n, {P: f_est[P].mean for P in sets})
    g = CumulantVector(n, n, {P: g_est[P].mean for P in sets})
    return InferenceResult(
        mode="data",
        n=n,
        path_ids=list(sample.path_ids),
        f=f,
        g=g,
        accepted=accepted,
        tests=tests,
    )
