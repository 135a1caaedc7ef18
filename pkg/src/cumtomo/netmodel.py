"""Synthetic networks and ground truth: topologies, routing matrices,
monitor-path construction, and path-delay sampling.

Scenarios are deterministic functions of (topology, seed): link-delay
distributions, monitor selection, and shortest-path routing all draw from a
single seeded generator, and shortest-path ties break on the
lexicographically smallest node sequence.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cumulants import DelaySample, LinkDistribution, analytic_cumulant
from .lattice import PathSet

__all__ = [
    "Link",
    "Topology",
    "RoutingMatrix",
    "Scenario",
    "DelayConfig",
    "common_links",
    "exact_links",
    "AssumptionReport",
    "check_assumptions",
    "generate_scenario",
    "sample_delays",
    "SparsityReport",
    "sparsity_report",
    "random_topology",
]


@dataclass
class Link:
    id: str
    src: str
    dst: str
    dist: LinkDistribution | None = None


@dataclass
class Topology:
    """A graph with optional per-link delay distributions."""

    nodes: list[str]
    links: list[Link]
    directed: bool = False

    def __post_init__(self) -> None:
        node_set = set(self.nodes)
        ids = set()
        for link in self.links:
            if link.src not in node_set or link.dst not in node_set:
                raise ValueError(f"link {link.id} references unknown endpoints")
            if link.src == link.dst:
                raise ValueError(f"link {link.id} is a self-loop")
            if link.id in ids:
                raise ValueError(f"duplicate link id {link.id}")
            ids.add(link.id)

    def to_json(self) -> dict:
        return {
            "directed": self.directed,
            "nodes": list(self.nodes),
            "links": [
                {
                    "id": l.id,
                    "src": l.src,
                    "dst": l.dst,
                    **({"dist": l.dist.to_json()} if l.dist is not None else {}),
                }
                for l in self.links
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Topology":
        links = [
            Link(
                id=str(l["id"]),
                src=str(l["src"]),
                dst=str(l["dst"]),
                dist=LinkDistribution.from_json(l["dist"]) if "dist" in l else None,
            )
            for l in obj["links"]
        ]
        return cls(
            nodes=[str(v) for v in obj["nodes"]],
            links=links,
            directed=bool(obj.get("directed", False)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Topology":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class RoutingMatrix:
    """Binary incidence of monitor paths (rows) and links (columns)."""

    matrix: np.ndarray
    path_ids: list[str]
    link_ids: list[str]

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.int8)
        if self.matrix.ndim != 2:
            raise ValueError("routing matrix must be 2-D")
        if self.matrix.shape != (len(self.path_ids), len(self.link_ids)):
            raise ValueError("routing matrix shape does not match id lists")
        if not np.isin(self.matrix, (0, 1)).all():
            raise ValueError("routing matrix entries must be 0/1")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.matrix.shape[1]

    def column_set(self, ell: int) -> PathSet:
        """The set of paths using link column ell."""
        bits = 0
        for j in range(self.n):
            if self.matrix[j, ell]:
                bits |= 1 << j
        return PathSet(bits, self.n)

    def column_sets(self) -> list[PathSet]:
        return [self.column_set(ell) for ell in range(self.m)]

    def distinct_columns(self) -> bool:
        return len({p.bits for p in self.column_sets()}) == self.m

    def prune_unused(self) -> "RoutingMatrix":
        used = [ell for ell in range(self.m) if self.matrix[:, ell].any()]
        return RoutingMatrix(
            self.matrix[:, used],
            list(self.path_ids),
            [self.link_ids[ell] for ell in used],
        )


def common_links(R: RoutingMatrix, P: PathSet) -> set[str]:
    """Links traversed by every path in P."""
    if P.is_empty():
        raise ValueError("path set must be nonempty")
    rows = R.matrix[list(P.members()), :]
    mask = rows.all(axis=0)
    return {R.link_ids[ell] for ell in range(R.m) if mask[ell]}


def exact_links(R: RoutingMatrix, P: PathSet) -> set[str]:
    """Links traversed by exactly the paths in P and no others."""
    if P.is_empty():
        raise ValueError("path set must be nonempty")
    chi = np.array(P.characteristic_vector(), dtype=np.int8)
    return {
        R.link_ids[ell]
        for ell in range(R.m)
        if (R.matrix[:, ell] == chi).all()
    }


@dataclass
class Scenario:
    """Ground truth for one synthetic experiment."""

    topology: Topology
    monitors: list[str]
    paths: list[list[str]]  # one link-id list per monitor path
    routing: RoutingMatrix
    seed: int

    def __post_init__(self) -> None:
        by_id = {l.id: l for l in self.topology.links}
        for j, path in enumerate(self.paths):
            used = {lid for lid in path}
            for ell, lid in enumerate(self.routing.link_ids):
                if bool(self.routing.matrix[j, ell]) != (lid in used):
                    raise ValueError(
                        f"routing row {j} disagrees with path {self.routing.path_ids[j]}"
                    )
            for lid in path:
                if lid not in by_id:
                    raise ValueError(f"path {j} uses unknown link {lid}")
            if not _is_simple_chain(path, by_id, self.topology.directed):
                raise ValueError(f"path {j} is not a simple path in the topology")

    def link_distributions(self) -> list[LinkDistribution]:
        """Distributions aligned with the routing-matrix columns."""
        by_id = {l.id: l for l in self.topology.links}
        dists = []
        for lid in self.routing.link_ids:
            dist = by_id[lid].dist
            if dist is None:
                raise ValueError(f"link {lid} has no delay distribution")
            dists.append(dist)
        return dists

    def to_json(self) -> dict:
        obj = self.topology.to_json()
        obj["monitors"] = list(self.monitors)
        obj["paths"] = [list(p) for p in self.paths]
        obj["path_ids"] = list(self.routing.path_ids)
        obj["link_order"] = list(self.routing.link_ids)
        obj["routing_matrix"] = [
            [int(v) for v in row] for row in self.routing.matrix
        ]
        obj["seed"] = self.seed
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        topo = Topology.from_json(obj)
        matrix = np.array(obj["routing_matrix"], dtype=np.int8)
        routing = RoutingMatrix(
            matrix,
            [str(p) for p in obj["path_ids"]],
            [str(l) for l in obj["link_order"]],
        )
        return cls(
            topology=topo,
            monitors=[str(v) for v in obj["monitors"]],
            paths=[[str(l) for l in p] for p in obj["paths"]],
            routing=routing,
            seed=int(obj.get("seed", 0)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _is_simple_chain(path: list[str], by_id: dict, directed: bool) -> bool:
    """True if the link sequence forms a walk that repeats no node."""
    if not path:
        return False
    first = by_id[path[0]]
    starts = [first.src] if directed else [first.src, first.dst]
    for start in starts:
        node = start
        visited = {node}
        ok = True
        for lid in path:
            link = by_id[lid]
            if link.src == node:
                node = link.dst
            elif not directed and link.dst == node:
                node = link.src
            else:
                ok = False
                break
            if node in visited:
                ok = False
                break
            visited.add(node)
        if ok:
            return True
    return False


@dataclass(frozen=True)
class DelayConfig:
    """Gamma link-delay assignment: shape mu/shape_divisor at fixed rate,
    with mu drawn from Normal(mu_mean, mu_sd^2) truncated below min_mu."""

    mu_mean: float = 10.0
    mu_sd: float = 2.0
    min_mu: float = 0.5
    shape_divisor: float = 4.0
    rate: float = 0.25


@dataclass
class AssumptionReport:
    distinct_columns: bool
    duplicate_column_pair: tuple[str, str] | None
    nonzero_link_cumulants: bool
    offending_link: tuple[str, int] | None
    nonzero_common_sums: bool
    offending_set: PathSet | None

    def all_ok(self) -> bool:
        return (
            self.distinct_columns
            and self.nonzero_link_cumulants
            and self.nonzero_common_sums
        )


def check_assumptions(
    R: RoutingMatrix,
    links: Sequence[LinkDistribution],
    max_order: int,
    exhaustive_limit: int = 20,
    sample_sets: int = 4096,
    seed: int = 0,
) -> AssumptionReport:
    """Verdicts for the three identifiability conditions with witnesses:
    distinct routing columns, nonzero link cumulants up to max_order, and
    nonzero sums of cumulants over every nonempty common link set."""
    dup_pair = None
    seen: dict[int, int] = {}
    for ell in range(R.m):
        bits = R.column_set(ell).bits
        if bits in seen:
            dup_pair = (R.link_ids[seen[bits]], R.link_ids[ell])
            break
        seen[bits] = ell
    offending_link = None
    for ell, dist in enumerate(links):
        for i in range(2, max_order + 1):
            if analytic_cumulant(dist, i) == 0:
                offending_link = (R.link_ids[ell], i)
                break
        if offending_link:
            break
    offending_set = None
    n = R.n
    if n <= exhaustive_limit:
        candidates = range(1, 1 << n)
    else:
        rng = np.random.default_rng(seed)
        candidates = [
            int(v) | 1 << int(rng.integers(0, n))
            for v in rng.integers(1, 1 << n, size=sample_sets, dtype=np.uint64)
        ]
    col_bits = [R.column_set(ell).bits for ell in range(R.m)]
    kappas = {
        i: [analytic_cumulant(d, i) for d in links] for i in range(2, max_order + 1)
    }
    for bits in candidates:
        in_common = [ell for ell in range(R.m) if bits & ~col_bits[ell] == 0]
        if not in_common:
            continue
        for i in range(2, max_order + 1):
            if sum(kappas[i][ell] for ell in in_common) == 0:
                offending_set = PathSet(int(bits), n)
                break
        if offending_set:
            break
    return AssumptionReport(
        distinct_columns=dup_pair is None,
        duplicate_column_pair=dup_pair,
        nonzero_link_cumulants=offending_link is None,
        offending_link=offending_link,
        nonzero_common_sums=offending_set is None,
        offending_set=offending_set,
    )


def _shortest_path(
    adjacency: dict[str, list[tuple[str, float, str]]],
    source: str,
    target: str,
) -> list[str] | None:
    """Dijkstra returning the link-id list of the minimum-weight path.

    Ties break on the lexicographically smallest node sequence (then link
    ids), so routing is deterministic.
    """
    # heap entries: (cost, node_sequence, link_sequence)
    heap = [(0.0, (source,), ())]
    best: set[str] = set()
    while heap:
        cost, nodes, links = heapq.heappop(heap)
        node = nodes[-1]
        if node == target:
            return list(links)
        if node in best:
            continue
        best.add(node)
        for nxt, weight, lid in adjacency.get(node, ()):
            if nxt not in best:
                heapq.heappush(heap, (cost + weight, nodes + (nxt,), links + (lid,)))
    return None


def _build_adjacency(topo: Topology) -> dict[str, list[tuple[str, float, str]]]:
    adjacency: dict[str, list[tuple[str, float, str]]] = {v: [] for v in topo.nodes}
    for link in topo.links:
        if link.dist is None:
            raise ValueError(f"link {link.id} has no delay distribution")
        weight = float(link.dist.mean())
        adjacency[link.src].append((link.dst, weight, link.id))
        if not topo.directed:
            adjacency[link.dst].append((link.src, weight, link.id))
    for entries in adjacency.values():
        entries.sort(key=lambda e: (e[0], e[2]))
    return adjacency


def assign_link_delays(
    topo: Topology, cfg: DelayConfig, rng: np.random.Generator
) -> Topology:
    """Fill in missing link distributions with the gamma family of cfg."""
    links = []
    for link in topo.links:
        dist = link.dist
        if dist is None:
            mu = float(rng.normal(cfg.mu_mean, cfg.mu_sd))
            while mu <= cfg.min_mu:
                mu = float(rng.normal(cfg.mu_mean, cfg.mu_sd))
            dist = LinkDistribution.gamma(mu / cfg.shape_divisor, cfg.rate)
        links.append(Link(link.id, link.src, link.dst, dist))
    return Topology(nodes=list(topo.nodes), links=links, directed=topo.directed)


def routing_from_paths(paths: list[list[str]], path_ids: list[str]) -> RoutingMatrix:
    """Routing matrix over the union of used links, in sorted link-id order."""
    used = sorted({lid for path in paths for lid in path})
    index = {lid: ell for ell, lid in enumerate(used)}
    matrix = np.zeros((len(paths), len(used)), dtype=np.int8)
    for j, path in enumerate(paths):
        for lid in path:
            matrix[j, index[lid]] = 1
    return RoutingMatrix(matrix, path_ids, used)


def generate_scenario(
    topo: Topology,
    n_monitors: int,
    cfg: DelayConfig | None = None,
    seed: int = 0,
) -> Scenario:
    """Random monitors plus one shortest path per unordered monitor pair.

    Links without an explicit distribution get a gamma delay with shape
    mu/4 and rate 1/4 where mu ~ Normal(10, 2^2) truncated above min_mu.
    Links unused by every monitor path are pruned from the routing matrix.
    """
    if cfg is None:
        cfg = DelayConfig()
    if not 2 <= n_monitors <= len(topo.nodes):
        raise ValueError("monitor count must be between 2 and the node count")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    topo = assign_link_delays(topo, cfg, rng)
    nodes_sorted = sorted(topo.nodes)
    picked = rng.choice(len(nodes_sorted), size=n_monitors, replace=False)
    monitors = sorted(nodes_sorted[k] for k in picked)
    adjacency = _build_adjacency(topo)
    paths = []
    path_ids = []
    for a_idx in range(len(monitors)):
        for b_idx in range(a_idx + 1, len(monitors)):
            a, b = monitors[a_idx], monitors[b_idx]
            path = _shortest_path(adjacency, a, b)
            if path is None:
                raise ValueError(f"monitor pair ({a}, {b}) is unreachable")
            paths.append(path)
            path_ids.append(f"{a}-{b}")
    routing = routing_from_paths(paths, path_ids)
    return Scenario(
        topology=topo, monitors=monitors, paths=paths, routing=routing, seed=seed
    )


def sample_delays(
    sc: Scenario, N: int, seed: int = 0, return_link_delays: bool = False
):
    """N i.i.d. draws of the link delays pushed through the routing matrix.

    With return_link_delays the underlying N x m link-delay matrix is
    returned alongside the sample, for debug checks of the row-wise sums.
    """
    if N < 1:
        raise ValueError("sample size must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dists = sc.link_distributions()
    U = np.empty((N, sc.routing.m))
    for ell, dist in enumerate(dists):
        U[:, ell] = dist.sample(rng, N)
    V = U @ sc.routing.matrix.T.astype(float)
    sample = DelaySample(V, list(sc.routing.path_ids))
    if return_link_delays:
        return sample, U
    return sample


@dataclass
class SparsityReport:
    """Ground-truth sparsity of the cumulant vectors at one order."""

    order: int
    n: int
    supp_g_size: int
    supp_f_size: int
    density: float
    largest_set: int


def true_exact_cumulants(
    R: RoutingMatrix, links: Sequence[LinkDistribution], i: int
) -> dict[PathSet, float]:
    """Nonzero entries of the order-i exact cumulant map, from ground truth."""
    sums: dict[int, float] = {}
    for ell in range(R.m):
        bits = R.column_set(ell).bits
        if bits == 0:
            continue
        sums[bits] = sums.get(bits, 0) + analytic_cumulant(links[ell], i)
    return {PathSet(b, R.n): v for b, v in sums.items() if v != 0}


def true_common_support(
    R: RoutingMatrix, links: Sequence[LinkDistribution], i: int
) -> set[PathSet]:
    """Support of the order-i common cumulant map (downward-closed sums of
    the exact entries), enumerated sparsely."""
    g = true_exact_cumulants(R, links, i)
    totals: dict[int, float] = {}
    for Q, v in g.items():
        for P in Q.subsets():
            totals[P.bits] = totals.get(P.bits, 0) + v
    return {PathSet(b, R.n) for b, v in totals.items() if v != 0}


def sparsity_report(
    R: RoutingMatrix, links: Sequence[LinkDistribution], i: int
) -> SparsityReport:
    g = true_exact_cumulants(R, links, i)
    supp_f = true_common_support(R, links, i)
    largest = max((P.card() for P in supp_f), default=0)
    return SparsityReport(
        order=i,
        n=R.n,
        supp_g_size=len(g),
        supp_f_size=len(supp_f),
        density=len(supp_f) / (2**R.n - 1),
        largest_set=largest,
    )


def random_topology(
    n_nodes: int, avg_degree: float = 4.0, seed: int = 0
) -> Topology:
    """A connected random graph for desk-scale experiments.

    Edges are sampled Erdos-Renyi style at the requested average degree;
    disconnected draws are retried with a shifted seed.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    p = min(1.0, avg_degree / (n_nodes - 1))
    for attempt in range(1000):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        nodes = [f"v{k:02d}" for k in range(n_nodes)]
        links = []
        for a in range(n_nodes):
            for b in range(a + 1, n_nodes):
                if rng.random() < p:
                    links.append(Link(f"e{len(links):03d}", nodes[a], nodes[b]))
        if _connected(nodes, links):
            return Topology(nodes=nodes, links=links, directed=False)
    raise RuntimeError("failed to draw a connected topology")


def _connected(nodes: list[str], links: list[Link]) -> bool:
    if not links:
        return len(nodes) <= 1
    adj: dict[str, set[str]] = {v: set() for v in nodes}
    for l in links:
        adj[l.src].add(l.dst)
        adj[l.dst].add(l.src)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(nodes)
