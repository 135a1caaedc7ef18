"""Three-stage sparse routing inference.

Stage 1 bounds the support of the common-cumulant vector with low-order
nonzero tests: a covariance-clique initial guess, then iterative
tightening order by order, splitting any candidate set whose passing
size-i subsets fall below a binomial-quantile threshold. Stage 2 builds
the restricted inversion matrix, eliminating large non-maximal sets
through the antichain correction. Stage 3 assembles and solves the
weighted-L1 filtering problem and reads the routing matrix off the support
of the inverted solution.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ._special import binomial_cdf
from .cumulants import (
    DelaySample,
    LinkDistribution,
    NonzeroTestConfig,
    ResampleEstimator,
    mixture_cumulant,
)
from .inference import InferenceResult, representative_for
from .lattice import (
    CumulantVector,
    PathSet,
    modified_inversion_matrix,
)
from .solver import GenLassoSpec, SolveResult, solve

__all__ = [
    "BoundingTopology",
    "ThresholdFunction",
    "threshold",
    "maximal_cliques",
    "clique_init",
    "size_subsets",
    "tighten",
    "bounding_topology",
    "SparseProblem",
    "assemble_problem",
    "PipelineConfig",
    "default_test_levels",
    "PreparedPipeline",
    "prepare_pipeline",
    "finish_pipeline",
    "run_sparse_pipeline",
]


def _canon(sets: Iterable[PathSet]) -> list[PathSet]:
    return sorted(set(sets), key=lambda p: (p.card(), p.bits))


@dataclass
class BoundingTopology:
    """An antichain of path sets whose downward closure over-approximates
    the support of the common-cumulant vector."""

    sets: list[PathSet]

    def __post_init__(self) -> None:
        # keep only maximal members; dropping dominated sets leaves the
        # support estimate unchanged
        canon = _canon(self.sets)
        self.sets = [
            A for A in canon
            if not any(A != B and A.subset_of(B) for B in canon)
        ]

    @property
    def n(self) -> int:
        return self.sets[0].n if self.sets else 0

    def covers(self, P: PathSet) -> bool:
        return any(P.subset_of(B) for B in self.sets)

    def support_estimate(self) -> list[PathSet]:
        """Union of the power sets of the members, minus the empty set."""
        seen: set[int] = set()
        out: list[PathSet] = []
        for B in self.sets:
            for P in B.subsets():
                if P.bits not in seen:
                    seen.add(P.bits)
                    out.append(P)
        return _canon(out)

    def to_json(self) -> dict:
        return {"n": self.n, "sets": [B.bits for B in self.sets]}

    @classmethod
    def from_json(cls, obj: dict) -> "BoundingTopology":
        n = int(obj["n"])
        return cls([PathSet(int(b), n) for b in obj["sets"]])


@dataclass(frozen=True)
class ThresholdFunction:
    """Binomial-quantile vote threshold for retaining a candidate set.

    `beta` estimates the miss rate of the per-set nonzero test and `gamma`
    bounds the probability of falsely splitting a set that truly belongs
    to the support. Either may be overridden per cumulant order.
    """

    beta: float = 0.05
    gamma: float = 0.15
    per_order: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for b, g in [(self.beta, self.gamma), *self.per_order.values()]:
            if not 0.0 < b < 1.0 or not 0.0 < g < 1.0:
                raise ValueError("beta and gamma must lie in (0, 1)")

    def params(self, i: int) -> tuple[float, float]:
        return self.per_order.get(i, (self.beta, self.gamma))

    def __call__(self, q: int, i: int) -> int:
        return threshold(q, i, self)


def threshold(q: int, i: int, tf: ThresholdFunction) -> int:
    """Largest integer t with Binomial(C(q, i), 1 - beta) CDF below gamma.

    One less than the gamma quantile of the vote count. May be -1 or 0,
    in which case the retention condition is trivially satisfied and the
    set in question can never be split.
    """
    if i > q:
        raise ValueError("order exceeds set size")
    beta, gamma = tf.params(i)
    trials = math.comb(q, i)
    p = 1.0 - beta
    t = -1
    while t + 1 < trials and binomial_cdf(t + 1, trials, p) < gamma:
        t += 1
    return t


def maximal_cliques(adjacency: Sequence[int], n: int) -> list[int]:
    """All maximal cliques of a graph on n vertices, as bitmasks.

    Bron-Kerbosch with pivoting; `adjacency[v]` is the neighbor bitmask of
    vertex v. Isolated vertices yield singleton cliques.
    """
    cliques: list[int] = []

    def expand(r: int, p: int, x: int) -> None:
        if p == 0 and x == 0:
            cliques.append(r)
            return
        # pivot on the candidate/excluded vertex with most candidates
        pivot, best = -1, -1
        pool = p | x
        while pool:
            v = (pool & -pool).bit_length() - 1
            pool &= pool - 1
            deg = (p & adjacency[v]).bit_count()
            if deg > best:
                pivot, best = v, deg
        candidates = p & ~adjacency[pivot]
        while candidates:
            v = (candidates & -candidates).bit_length() - 1
            candidates &= candidates - 1
            bit = 1 << v
            expand(r | bit, p & adjacency[v], x & adjacency[v])
            p &= ~bit
            x |= bit

    expand(0, (1 << n) - 1, 0)
    return sorted(cliques)


def clique_init(
    n: int, edge_nonzero: Callable[[int, int], bool]
) -> BoundingTopology:
    """Initial bounding topology from pairwise covariance decisions.

    Builds the graph with an edge wherever the pairwise nonzero test fires
    and returns its maximal cliques; paths with no incident edge become
    singleton sets.
    """
    adjacency = [0] * n
    for j in range(n):
        for k in range(j + 1, n):
            if edge_nonzero(j, k):
                adjacency[j] |= 1 << k
                adjacency[k] |= 1 << j
    masks = maximal_cliques(adjacency, n)
    return BoundingTopology([PathSet(m, n) for m in masks])


def size_subsets(sets: Iterable[PathSet], i: int) -> list[PathSet]:
    """Distinct size-i subsets of the given sets."""
    seen: set[int] = set()
    out: list[PathSet] = []
    for B in sets:
        if B.card() < i:
            continue
        for combo in _combinations_bits(B.bits, i):
            if combo not in seen:
                seen.add(combo)
                out.append(PathSet(combo, B.n))
    return _canon(out)


def _combinations_bits(bits: int, i: int) -> Iterable[int]:
    members = [j for j in range(bits.bit_length()) if bits >> j & 1]
    for combo in itertools.combinations(members, i):
        mask = 0
        for j in combo:
            mask |= 1 << j
        yield mask


def problem_index(B: BoundingTopology, s: int) -> list[PathSet]:
    """Index set of the restricted problem: support-estimate sets of size
    at most s, then antichain members above s."""
    small = [P for P in B.support_estimate() if P.card() <= s]
    large = [P for P in B.sets if P.card() > s]
    return _canon(small) + _canon(large)


def tighten(
    B: BoundingTopology,
    i: int,
    tf: Callable[[int, int], int],
    is_nonzero: Callable[[PathSet], bool],
) -> BoundingTopology:
    """One tightening pass at cumulant order i.

    Every size-i set in the support estimate is tested exactly once.
    Each passing set votes for all of its supersets; a queued set B is
    retained if |B| < i or it collects at least tf(|B|, i) votes, and is
    otherwise split into its |B| one-element-removed subsets. The output's
    support estimate is a subset of the input's. `tf` may be any threshold
    callable; ThresholdFunction provides the binomial-quantile form.
    """
    if i < 1:
        raise ValueError("cumulant order must be positive")
    passing = [P.bits for P in size_subsets(B.sets, i) if is_nonzero(P)]
    queue = deque(B.sets)
    kept: list[PathSet] = []
    processed: set[int] = set()
    queued: set[int] = {S.bits for S in B.sets}
    while queue:
        cur = queue.popleft()
        processed.add(cur.bits)
        votes = sum(1 for bits in passing if bits & ~cur.bits == 0)
        if cur.card() < i or votes >= tf(cur.card(), i):
            kept.append(cur)
            continue
        for j in cur.members():
            sub = cur.without(j)
            if sub.bits in processed or sub.bits in queued:
                continue
            if any(sub.subset_of(S) for S in queue) or any(
                sub.subset_of(S) for S in kept
            ):
                continue
            queue.append(sub)
            queued.add(sub.bits)
    return BoundingTopology(kept)


def bounding_topology(
    B0: BoundingTopology,
    i0: int,
    i_f: int,
    tf: Callable[[int, int], int],
    is_nonzero: Callable[[PathSet, int], bool],
    on_order: Callable[[int, BoundingTopology], None] | None = None,
) -> BoundingTopology:
    """Fold tightening passes over orders i0..i_f."""
    if i0 > i_f:
        raise ValueError("initial order exceeds final order")
    B = B0
    for i in range(i0, i_f + 1):
        B = tighten(B, i, tf, lambda P, _i=i: is_nonzero(P, _i))
        if on_order is not None:
            on_order(i, B)
    return B


@dataclass
class SparseProblem:
    """Assembled filtering problem over the restricted index set.

    `index` lists the path sets addressing both the rows (inverted
    entries) and columns (superset-sum entries) of the square restricted
    matrix; columns are partitioned into observed (size <= i_max) and
    unobserved blocks.
    """

    index: list[PathSet]
    observed: list[PathSet]
    unobserved: list[PathSet]
    s: int
    i_max: int
    matrix: np.ndarray  # rows: index order; columns: observed + unobserved
    f_hat: np.ndarray
    sigma: np.ndarray
    weights: np.ndarray
    equality: bool = False

    def spec(self) -> GenLassoSpec:
        return GenLassoSpec(
            sigma=self.sigma,
            target=self.f_hat,
            mapping=self.matrix,
            weights=self.weights,
            n_observed=len(self.observed),
            equality=self.equality,
        )


def assemble_problem(
    B: BoundingTopology,
    s: int,
    i_max: int,
    estimates: dict[PathSet, tuple[float, float]],
    lam: float,
    weight_exponent: float,
    equality: bool = False,
) -> SparseProblem:
    """Build the restricted inversion and the row-weighted L1 problem.

    `estimates` maps each observed set (size <= i_max within the support
    estimate, plus antichain members of that size) to its (value, sigma)
    pair. Row weights follow lam * a(P)^b where a(P) counts the inverted
    entries depending on the column of P.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if not 0.0 <= weight_exponent <= 1.0:
        raise ValueError("weight exponent must lie in [0, 1]")
    se = B.support_estimate()
    mod = modified_inversion_matrix(se, B.sets, s)
    index = list(mod.cols)
    assert index == problem_index(B, s)
    size = len(index)
    X = np.zeros((size, size), dtype=float)
    X[: len(mod.rows), :] = mod.matrix
    for r in range(len(mod.rows), size):
        X[r, r] = 1.0  # antichain members above s: inverted entry equals the sum entry
    observed = [P for P in index if P.card() <= i_max]
    unobserved = [P for P in index if P.card() > i_max]
    order = observed + unobserved
    perm = [index.index(P) for P in order]
    M = X[:, perm]
    f_hat = np.empty(len(observed))
    sigma = np.empty(len(observed))
    for k, P in enumerate(observed):
        if P not in estimates:
            raise ValueError(f"missing estimate for observed set {P}")
        value, sig = estimates[P]
        f_hat[k] = value
        sigma[k] = sig
    floor = 1e-12 * max(1.0, float(np.max(np.abs(f_hat), initial=0.0)))
    sigma = np.maximum(sigma, floor)
    depend_counts = (M > 0).sum(axis=0)
    col_of = {P: k for k, P in enumerate(order)}
    weights = np.array(
        [lam * float(depend_counts[col_of[P]]) ** weight_exponent for P in index]
    )
    return SparseProblem(
        index=index,
        observed=observed,
        unobserved=unobserved,
        s=s,
        i_max=i_max,
        matrix=M,
        f_hat=f_hat,
        sigma=sigma,
        weights=weights,
        equality=equality,
    )


def default_test_levels(N: int) -> dict[int, float]:
    """Per-order p-value thresholds tuned per sample size bracket."""
    if N < 30_000:
        return {2: 1e-20, 3: 1e-10, 4: 1e-2}
    if N < 75_000:
        return {2: 1e-40, 3: 1e-30, 4: 1e-5}
    return {2: 1e-40, 3: 1e-30, 4: 1e-10}


def default_threshold_function(N: int) -> ThresholdFunction:
    if N < 30_000:
        return ThresholdFunction(per_order={3: (0.1, 0.15), 4: (0.25, 0.3)})
    return ThresholdFunction(per_order={3: (0.05, 0.15), 4: (0.05, 0.15)})


@dataclass(frozen=True)
class PipelineConfig:
    """All knobs of the three-stage procedure."""

    i0: int = 3
    i_f: int = 3
    i_max: int = 3
    s: int | None = None  # defaults to i_f
    initial_mode: str = "cliques"  # or "full" for the whole path set
    levels: dict[int, float] | None = None  # per-order p thresholds
    threshold_function: ThresholdFunction | None = None
    lam: float = 1.2
    weight_exponent: float = 0.3
    test: NonzeroTestConfig = NonzeroTestConfig()
    support_tol: float = 1e-6
    use_true_cumulants: bool = False

    def __post_init__(self) -> None:
        if not 2 <= self.i0 <= self.i_f:
            raise ValueError("need 2 <= i0 <= i_f")
        if self.i_max < 2:
            raise ValueError("i_max must be at least 2")
        if self.initial_mode not in ("cliques", "full"):
            raise ValueError(f"unknown initial mode {self.initial_mode!r}")

    def effective_s(self) -> int:
        return self.i_f if self.s is None else self.s

    def effective_levels(self, N: int) -> dict[int, float]:
        levels = default_test_levels(N)
        if self.levels:
            levels.update(self.levels)
        for alpha in levels.values():
            if not 0.0 < alpha < 1.0:
                raise ValueError("p-value thresholds must lie in (0, 1)")
        return levels

    def effective_tf(self, N: int) -> ThresholdFunction:
        return (
            self.threshold_function
            if self.threshold_function is not None
            else default_threshold_function(N)
        )

    def to_json(self) -> dict:
        return {
            "i0": self.i0,
            "i_f": self.i_f,
            "i_max": self.i_max,
            "s": self.s,
            "initial_mode": self.initial_mode,
            "levels": {str(k): v for k, v in (self.levels or {}).items()} or None,
            "threshold_function": None
            if self.threshold_function is None
            else {
                "beta": self.threshold_function.beta,
                "gamma": self.threshold_function.gamma,
                "per_order": {
                    str(k): list(v)
                    for k, v in self.threshold_function.per_order.items()
                },
            },
            "lam": self.lam,
            "weight_exponent": self.weight_exponent,
            "test": self.test.to_json(),
            "support_tol": self.support_tol,
            "use_true_cumulants": self.use_true_cumulants,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        tf = None
        if obj.get("threshold_function"):
            tobj = obj["threshold_function"]
            tf = ThresholdFunction(
                beta=tobj.get("beta", 0.05),
                gamma=tobj.get("gamma", 0.15),
                per_order={
                    int(k): tuple(v) for k, v in tobj.get("per_order", {}).items()
                },
            )
        levels = obj.get("levels")
        return cls(
            i0=obj.get("i0", 3),
            i_f=obj.get("i_f", 3),
            i_max=obj.get("i_max", 3),
            s=obj.get("s"),
            initial_mode=obj.get("initial_mode", "cliques"),
            levels={int(k): float(v) for k, v in levels.items()} if levels else None,
            threshold_function=tf,
            lam=obj.get("lam", 1.2),
            weight_exponent=obj.get("weight_exponent", 0.3),
            test=NonzeroTestConfig.from_json(obj["test"]) if "test" in obj else NonzeroTestConfig(),
            support_tol=obj.get("support_tol", 1e-6),
            use_true_cumulants=obj.get("use_true_cumulants", False),
        )


@dataclass
class PreparedPipeline:
    """Stage 1-2 outputs plus the estimate source, ready for Stage 3.

    Splitting preparation from the final solve lets hyperparameter sweeps
    reuse the expensive stages.
    """

    config: PipelineConfig
    n: int
    path_ids: list[str]
    bounding: BoundingTopology
    history: dict[int, BoundingTopology]
    estimator: ResampleEstimator | None
    oracle_values: Callable[[PathSet, int], float] | None

    def estimates_for(self, sets: Sequence[PathSet], i: int) -> dict[PathSet, tuple[float, float]]:
        if self.oracle_values is not None:
            return {P: (float(self.oracle_values(P, i)), 1.0) for P in sets}
        assert self.estimator is not None
        self.estimator.prefetch([(P, i) for P in sets])
        return {
            P: (self.estimator.estimate(P, i).mean, self.estimator.sigma(P, i))
            for P in sets
        }


def _true_common_value(
    routing, links: Sequence[LinkDistribution], P: PathSet, i: int
) -> float:
    return mixture_cumulant(routing, links, representative_for(P, max(i, P.card())))


def prepare_pipeline(
    sample: DelaySample | None,
    config: PipelineConfig,
    scenario=None,
) -> PreparedPipeline:
    """Run Stage 1 (and record the per-order bounding topologies).

    Data mode requires `sample`; ground-truth mode requires `scenario`
    (anything with `.routing` and `.link_distributions()`).
    """
    if config.use_true_cumulants:
        if scenario is None:
            raise ValueError("ground-truth mode requires a scenario")
        routing = scenario.routing
        links = scenario.link_distributions()
        n = routing.n
        path_ids = list(routing.path_ids)
        oracle = lambda P, i: _true_common_value(routing, links, P, i)
        is_nonzero = lambda P, i: oracle(P, i) != 0
        estimator = None
    else:
        if sample is None:
            raise ValueError("data mode requires a sample")
        n = sample.n
        path_ids = list(sample.path_ids)
        estimator = ResampleEstimator(sample, config.test)
        levels = config.effective_levels(sample.N)

        def is_nonzero(P: PathSet, i: int) -> bool:
            level = levels.get(i)
            if level is None:
                raise ValueError(f"no test level configured for order {i}")
            return estimator.nonzero(P, i, level)[0]

        oracle = None

    if config.initial_mode == "full":
        B0 = BoundingTopology([PathSet.full(n)])
    else:
        if estimator is not None:
            pairs = [
                (PathSet.from_members((j, k), n), 2)
                for j in range(n)
                for k in range(j + 1, n)
            ]
            estimator.prefetch(pairs)
        B0 = clique_init(
            n,
            lambda j, k: is_nonzero(PathSet.from_members((j, k), n), 2),
        )
    history: dict[int, BoundingTopology] = {2: B0}

    tf = config.effective_tf(sample.N if sample is not None else 0)
    B = B0
    for i in range(config.i0, config.i_f + 1):
        if estimator is not None:
            estimator.prefetch([(P, i) for P in size_subsets(B.sets, i)])
        B = tighten(B, i, tf, lambda P, _i=i: is_nonzero(P, _i))
        history[i] = B
    return PreparedPipeline(
        config=config,
        n=n,
        path_ids=path_ids,
        bounding=B,
        history=history,
        estimator=estimator,
        oracle_values=oracle,
    )


@dataclass
class PipelineResult:
    result: InferenceResult
    bounding: BoundingTopology
    history: dict[int, BoundingTopology]
    problem: SparseProblem
    solve: SolveResult


def finish_pipeline(
    prepared: PreparedPipeline,
    lam: float | None = None,
    weight_exponent: float | None = None,
    i_max: int | None = None,
) -> PipelineResult:
    """Stages 2-3 with optional hyperparameter overrides."""
    cfg = prepared.config
    lam = cfg.lam if lam is None else lam
    b = cfg.weight_exponent if weight_exponent is None else weight_exponent
    i_max = cfg.i_max if i_max is None else i_max
    s = cfg.effective_s()
    B = prepared.bounding
    observed = [P for P in problem_index(B, s) if P.card() <= i_max]
    estimates = prepared.estimates_for(observed, i_max)
    problem = assemble_problem(
        B,
        s,
        i_max,
        estimates,
        lam,
        b,
        equality=cfg.use_true_cumulants,
    )
    sol = solve(problem.spec())
    g_vals = sol.g
    scale = max(1.0, float(np.max(np.abs(g_vals), initial=0.0)))
    accepted = [
        P
        for P, v in zip(problem.index, g_vals)
        if abs(v) > cfg.support_tol * scale
    ]
    order_idx = problem.observed + problem.unobserved
    f_vec = CumulantVector(
        i_max,
        prepared.n,
        {P: float(v) for P, v in zip(order_idx, sol.f)},
        domain=list(order_idx),
    )
    g_vec = CumulantVector(
        i_max,
        prepared.n,
        {P: float(v) for P, v in zip(problem.index, g_vals)},
        domain=list(problem.index),
    )
    result = InferenceResult(
        mode="sparse",
        n=prepared.n,
        path_ids=prepared.path_ids,
        f=f_vec,
        g=g_vec,
        accepted=_canon(accepted),
    )
    return PipelineResult(
        result=result,
        bounding=B,
        history=prepared.history,
        problem=problem,
        solve=sol,
    )


def run_sparse_pipeline(
    sample: DelaySample | None,
    config: PipelineConfig,
    scenario=None,
) -> PipelineResult:
    """Stages 1-3 end to end."""
    prepared = prepare_pipeline(sample, config, scenario=scenario)
    return finish_pipeline(prepared)
