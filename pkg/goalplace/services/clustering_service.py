import logging
import math
from collections import deque
from typing import Optional, Sequence

import Levenshtein
import numpy as np
from joblib import Parallel, delayed
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from sklearn.metrics import davies_bouldin_score

from goalplace.core.config import settings
from goalplace.core.exceptions import InputError
from goalplace.schemas.clustering import (
    ClusterReport,
    ClusterStat,
    Clustering,
    Partition,
    TrieNode,
    WeightedGraph,
)
from goalplace.schemas.density import CellDensityVector
from goalplace.schemas.netlist import Netlist, Placement
from goalplace.services import density_service, netlist_service
from goalplace.utils.seeding import child_seeds
from goalplace.utils.stats import pearson

logger = logging.getLogger(__name__)

HIERARCHY_SEPARATOR = "/"
REFINE_TEMPERATURE = 0.01


def build_trie(names: Sequence[str]) -> TrieNode:
    """Trie over '/'-separated hierarchical names; every node counts the instances below it."""
    root = TrieNode()
    for cell_id, name in enumerate(names):
        node = root
        node.count += 1
        for segment in name.split(HIERARCHY_SEPARATOR):
            child = node.children.get(segment)
            if child is None:
                path = f"{node.path}{HIERARCHY_SEPARATOR}{segment}" if node.path else segment
                child = TrieNode(segment=segment, path=path, children={})
                node.children[segment] = child
            node = child
            node.count += 1
        node.cell_id = cell_id
    return root


def decompose_modules(netlist: Netlist, min_size: int, max_size: int) -> list[np.ndarray]:
    """Top-down module groups with instance counts in [min_size, max_size].

    Cells without a qualifying module (flat names, undersized modules, cells sitting
    directly in an oversized module) are bundled into one residual group, returned last.
    """
    if not 0 < min_size < max_size:
        raise InputError(f"module range must satisfy 0 < min < max, got [{min_size}, {max_size}]")
    groups: list[np.ndarray] = []
    residual: list[int] = []
    stack = [child for _, child in sorted(build_trie(netlist.names).children.items(), reverse=True)]
    while stack:
        node = stack.pop()
        if not node.children or node.count < min_size:
            residual.extend(node.cells())
        elif node.count > max_size:
            if node.cell_id is not None:
                residual.append(node.cell_id)
            stack.extend(child for _, child in sorted(node.children.items(), reverse=True))
        else:
            groups.append(np.array(node.cells(), dtype=np.int64))
    if residual:
        groups.append(np.array(sorted(residual), dtype=np.int64))
    logger.debug("decomposed %d cells into %d groups (%d residual)", netlist.size, len(groups), len(residual))
    return groups


def normalized_levenshtein(u: str, v: str) -> float:
    """Normalized edit distance 2L / (|u| + |v| + L); a metric on [0, 1]."""
    distance = Levenshtein.distance(u, v)
    if distance == 0:
        return 0.0
    return 2.0 * distance / (len(u) + len(v) + distance)


def clique_expand(
    netlist: Netlist,
    group: Sequence[int] | np.ndarray,
    net_cap: Optional[int] = None,
) -> WeightedGraph:
    """Weighted clique graph of ``group``: each net adds 2 / |e| per pin pair inside the group,
    scaled per pair by 1 / (1 + normalized Levenshtein distance of the two names).

    |e| counts the distinct cells of the whole net. Nets with fewer than two cells or more
    than ``net_cap`` are skipped.
    """
    net_cap = net_cap or settings.clique_net_cap
    vertices = np.unique(np.asarray(group, dtype=np.int64))
    n = vertices.size
    if n == 0 or not netlist.nets:
        return WeightedGraph(vertices=vertices, adjacency=sparse.csr_matrix((n, n)))

    net, cell, _, _ = netlist.pin_table
    pairs = np.unique(net * netlist.size + cell)
    pair_net, pair_cell = pairs // netlist.size, pairs % netlist.size
    cardinality = np.bincount(pair_net, minlength=len(netlist.nets))

    local = np.full(netlist.size, -1, dtype=np.int64)
    local[vertices] = np.arange(n)
    keep = (local[pair_cell] >= 0) & (cardinality[pair_net] >= 2) & (cardinality[pair_net] <= net_cap)
    incidence = sparse.csr_matrix(
        (np.ones(int(keep.sum())), (local[pair_cell[keep]], pair_net[keep])),
        shape=(n, len(netlist.nets)),
    )
    scale = sparse.diags(2.0 / np.maximum(cardinality, 1))
    tsay_kuh = sparse.triu(incidence @ scale @ incidence.T, k=1).tocoo()

    names = netlist.names
    attraction = np.array([
        1.0 / (1.0 + normalized_levenshtein(names[vertices[i]], names[vertices[j]]))
        for i, j in zip(tsay_kuh.row, tsay_kuh.col)
    ])
    upper = sparse.csr_matrix(
        (tsay_kuh.data * attraction, (tsay_kuh.row, tsay_kuh.col)), shape=(n, n)
    )
    adjacency = (upper + upper.T).tocsr()
    adjacency.eliminate_zeros()
    adjacency.sort_indices()
    return WeightedGraph(vertices=vertices, adjacency=adjacency)


def modularity(graph: WeightedGraph | sparse.spmatrix, membership: np.ndarray, resolution: float = 1.0) -> float:
    """Q = sum_c [ in_c / 2m - gamma (tot_c / 2m)^2 ]; 0 for a graph without edges."""
    adjacency = graph.adjacency if isinstance(graph, WeightedGraph) else graph
    adjacency = sparse.coo_matrix(adjacency)
    membership = np.asarray(membership)
    total = float(adjacency.sum())
    if total <= 0:
        return 0.0
    inside = float(adjacency.data[membership[adjacency.row] == membership[adjacency.col]].sum())
    strength = np.asarray(adjacency.sum(axis=1)).ravel()
    tot = np.bincount(membership, weights=strength)
    return inside / total - resolution * float(np.sum((tot / total) ** 2))


def _set_partitions(n: int) -> np.ndarray:
    """Every partition of n labelled nodes as a restricted growth string."""
    out: list[list[int]] = []
    labels = [0] * n

    def grow(i: int, blocks: int) -> None:
        if i == n:
            out.append(labels.copy())
            return
        for c in range(blocks + 1):
            labels[i] = c
            grow(i + 1, max(blocks, c + 1))

    if n:
        grow(1, 1)
    return np.array(out, dtype=np.int64).reshape(-1, n)


def optimal_modularity(graph: WeightedGraph, resolution: float = 1.0) -> tuple[float, np.ndarray]:
    """Brute-force maximum modularity over all partitions; only for graphs of at most 10 nodes."""
    n = graph.n
    if n > 10:
        raise InputError(f"brute-force modularity is limited to 10 nodes, got {n}")
    if n == 0:
        return 0.0, np.zeros(0, dtype=np.int64)
    adjacency = graph.adjacency.toarray()
    total = adjacency.sum()
    if total <= 0:
        return 0.0, np.arange(n)
    strength = adjacency.sum(axis=1)
    gain = adjacency / total - resolution * np.outer(strength, strength) / total**2
    candidates = _set_partitions(n)
    same = candidates[:, :, None] == candidates[:, None, :]
    quality = (same * gain).sum(axis=(1, 2))
    best = int(np.argmax(quality))
    return float(quality[best]), candidates[best]


def _move_nodes(adjacency: sparse.csr_matrix, strength, membership, resolution, total, rng) -> bool:
    """Queue-based local moving; returns whether any node changed community."""
    n = membership.size
    tot = np.bincount(membership, weights=strength, minlength=n)
    size = np.bincount(membership, minlength=n)
    free = [c for c in range(n - 1, -1, -1) if size[c] == 0]
    queue = deque(int(v) for v in rng.permutation(n))
    queued = np.ones(n, dtype=bool)
    indptr, indices, data = adjacency.indptr, adjacency.indices, adjacency.data
    moved = False
    while queue:
        v = queue.popleft()
        queued[v] = False
        current = int(membership[v])
        links: dict[int, float] = {}
        neighbours = indices[indptr[v]:indptr[v + 1]]
        for u, w in zip(neighbours, data[indptr[v]:indptr[v + 1]]):
            if u != v:
                c = int(membership[u])
                links[c] = links.get(c, 0.0) + w
        k_v = strength[v]
        tot[current] -= k_v
        size[current] -= 1

        best = current
        best_gain = links.get(current, 0.0) - resolution * k_v * tot[current] / total
        for c in sorted(links):
            gain = links[c] - resolution * k_v * tot[c] / total
            if gain > best_gain + 1e-15:
                best, best_gain = c, gain
        if best_gain < -1e-15 and size[current] > 0:
            best = free.pop()

        if size[current] == 0 and best != current:
            free.append(current)
        tot[best] += k_v
        size[best] += 1
        if best != current:
            membership[v] = best
            moved = True
            for u in neighbours:
                if not queued[u] and membership[u] != best:
                    queue.append(int(u))
                    queued[u] = True
    return moved


def _refine(adjacency: sparse.csr_matrix, strength, membership, resolution, total, rng) -> np.ndarray:
    """Merge singletons inside each community into well-connected sub-communities."""
    n = membership.size
    refined = np.arange(n)
    for community in np.unique(membership):
        nodes = np.flatnonzero(membership == community)
        if nodes.size == 1:
            continue
        sub = adjacency[nodes][:, nodes].tocsr()
        k = strength[nodes]
        k_total = k.sum()
        external = np.asarray(sub.sum(axis=1)).ravel() - sub.diagonal()
        label = np.arange(nodes.size)
        k_label = k.copy()
        ext_label = external.copy()
        size = np.ones(nodes.size, dtype=np.int64)
        for v in rng.permutation(nodes.size):
            if size[label[v]] != 1:
                continue
            if external[v] < resolution * k[v] * (k_total - k[v]) / total:
                continue
            links: dict[int, float] = {}
            for u, w in zip(sub.indices[sub.indptr[v]:sub.indptr[v + 1]], sub.data[sub.indptr[v]:sub.indptr[v + 1]]):
                if u != v:
                    c = int(label[u])
                    links[c] = links.get(c, 0.0) + w
            options, gains = [int(label[v])], [0.0]
            for c in sorted(links):
                if ext_label[c] < resolution * k_label[c] * (k_total - k_label[c]) / total:
                    continue
                gain = (links[c] - resolution * k[v] * k_label[c] / total) / (total / 2)
                if gain >= 0:
                    options.append(c)
                    gains.append(gain)
            gains = np.array(gains)
            weights = np.exp((gains - gains.max()) / REFINE_TEMPERATURE)
            choice = options[int(rng.choice(len(options), p=weights / weights.sum()))]
            if choice == label[v]:
                continue
            own = label[v]
            ext_label[choice] += external[v] - 2 * links[choice]
            k_label[choice] += k[v]
            size[choice] += 1
            size[own] = 0
            label[v] = choice
        refined[nodes] = nodes[label]
    _, refined = np.unique(refined, return_inverse=True)
    return refined


def _split_disconnected(adjacency: sparse.csr_matrix, membership: np.ndarray) -> np.ndarray:
    coo = adjacency.tocoo()
    inside = membership[coo.row] == membership[coo.col]
    internal = sparse.csr_matrix((coo.data[inside], (coo.row[inside], coo.col[inside])), shape=adjacency.shape)
    _, component = connected_components(internal, directed=False)
    return component


def _first_seen_labels(membership: np.ndarray) -> np.ndarray:
    _, first, inverse = np.unique(membership, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64)


def leiden(
    graph: WeightedGraph,
    resolution: Optional[float] = None,
    seed: int = 0,
    max_level: int = 100,
) -> Partition:
    """Leiden community detection maximising modularity with resolution ``resolution``.

    Local moving, refinement and aggregation repeat until every aggregate node is its own
    community. Communities are relabelled 0..k-1 in order of first appearance. The quality
    history holds the modularity of the singleton start and of each level.
    """
    resolution = settings.leiden_resolution if resolution is None else resolution
    if resolution <= 0:
        raise InputError(f"resolution must be > 0, got {resolution}")
    n = graph.n
    if n == 0:
        return Partition(membership=np.zeros(0, dtype=np.int64))
    base = sparse.csr_matrix(graph.adjacency, dtype=float)
    total = float(base.sum())
    history = [modularity(base, np.arange(n), resolution)]
    if total <= 0:
        return Partition(membership=np.arange(n), quality_history=history)

    rng = np.random.default_rng(seed)
    adjacency = base
    node_of = np.arange(n)
    membership = np.arange(n)
    for _ in range(max_level):
        strength = np.asarray(adjacency.sum(axis=1)).ravel()
        _move_nodes(adjacency, strength, membership, resolution, total, rng)
        _, membership = np.unique(membership, return_inverse=True)
        history.append(modularity(base, membership[node_of], resolution))
        if membership.max() + 1 == adjacency.shape[0]:
            break
        refined = _refine(adjacency, strength, membership, resolution, total, rng)
        if refined.max() + 1 == adjacency.shape[0]:
            refined = membership
        collapse = sparse.csr_matrix(
            (np.ones(refined.size), (np.arange(refined.size), refined)),
            shape=(refined.size, refined.max() + 1),
        )
        adjacency = (collapse.T @ adjacency @ collapse).tocsr()
        aggregate_membership = np.zeros(collapse.shape[1], dtype=np.int64)
        aggregate_membership[refined] = membership
        node_of = refined[node_of]
        membership = aggregate_membership

    final = _split_disconnected(base, membership[node_of])
    final = _first_seen_labels(final)
    quality = modularity(base, final, resolution)
    if quality > history[-1]:
        history.append(quality)
    if n <= 10:
        optimum, _ = optimal_modularity(graph, resolution)
        if optimum - quality > 1e-9:
            logger.warning("leiden modularity %.12f below the optimum %.12f on %d nodes", quality, optimum, n)
    return Partition(membership=final, quality_history=history)


def dbi(netlist: Netlist, placement: Placement, membership: np.ndarray) -> float:
    """Davies-Bouldin index of the cell centres under ``membership``.

    Returns 0.0 when there are as many clusters as cells, where every cluster is a single point.
    """
    membership = np.asarray(membership)
    clusters = np.unique(membership)
    if clusters.size < 2:
        raise InputError("DBI needs at least 2 clusters")
    x0, y0 = placement.align(netlist.names)
    points = np.column_stack([x0 + netlist.widths / 2, y0 + netlist.heights / 2])
    if clusters.size >= len(points):
        return 0.0
    centroids = np.array([points[membership == c].mean(axis=0) for c in clusters])
    gaps = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    coincident = int(np.count_nonzero(np.triu(gaps == 0, k=1)))
    if coincident:
        logger.warning("%d cluster pairs with coincident centroids skipped in DBI", coincident)
    return float(davies_bouldin_score(points, membership))


def cluster_stats(
    clustering: Clustering,
    densities: Sequence[CellDensityVector],
    slacks: np.ndarray,
) -> Clustering:
    """Per-cluster density and slack statistics and the density/timing correlations.

    The timing-critical subset is the quartile of clusters with the lowest mean slack.
    sigma_cluster_density needs two or more density vectors (one per placement); the spread
    across placements is the population standard deviation (ddof=0).
    """
    if not densities:
        raise InputError("cluster statistics need at least one density vector")
    names = densities[0].names
    if any(d.names != names for d in densities[1:]):
        raise InputError("density vectors cover different cells")
    assignment = clustering.assignment
    slacks = np.asarray(slacks, dtype=float)
    if assignment.size != len(names) or slacks.size != len(names):
        raise InputError("assignment, densities and slacks must cover the same cells")

    k = clustering.n_clusters
    counts = np.bincount(assignment, minlength=k)
    per_placement = np.array([clustering.cluster_means(d.values) for d in densities])
    mean_density = per_placement.mean(axis=0)
    density_std = per_placement.std(axis=0) if len(densities) > 1 else None

    finite = np.isfinite(slacks)
    slack_count = np.bincount(assignment[finite], minlength=k)
    slack_sum = np.bincount(assignment[finite], weights=slacks[finite], minlength=k)
    mean_slack = np.full(k, np.nan)
    mean_slack[slack_count > 0] = slack_sum[slack_count > 0] / slack_count[slack_count > 0]

    flags = list(clustering.flags)
    usable = np.flatnonzero(np.isfinite(mean_slack))
    rho_dt = rho_crit = None
    if k < 2:
        flags.append("rho_DT undefined: single cluster")
    else:
        rho_dt = pearson(mean_density[usable], mean_slack[usable])
        if rho_dt is None:
            flags.append("rho_DT undefined: degenerate cluster means")
        critical = usable[np.argsort(mean_slack[usable], kind="stable")][:math.ceil(usable.size / 4)]
        if critical.size < 3:
            flags.append("rho_DT_timcrit undefined: fewer than 3 critical clusters")
        else:
            rho_crit = pearson(mean_density[critical], mean_slack[critical])
            if rho_crit is None:
                flags.append("rho_DT_timcrit undefined: degenerate cluster means")
    sigma = None
    if density_std is None:
        flags.append("sigma_cluster_density undefined: single placement")
    else:
        sigma = float(density_std.mean())

    stats = [
        ClusterStat(
            cluster=c,
            size=int(counts[c]),
            mean_density=float(mean_density[c]),
            density_std=None if density_std is None else float(density_std[c]),
            mean_slack=None if np.isnan(mean_slack[c]) else float(mean_slack[c]),
        )
        for c in range(k)
    ]
    return clustering.model_copy(update={
        "stats": stats, "rho_DT": rho_dt, "rho_DT_timcrit": rho_crit,
        "sigma_cluster_density": sigma, "flags": flags,
    })


def _cluster_group(netlist: Netlist, group: np.ndarray, resolution: float, net_cap: int, seed: int) -> Partition:
    return leiden(clique_expand(netlist, group, net_cap), resolution, seed)


def cluster_netlist(
    netlist: Netlist,
    placements: Sequence[Placement],
    slacks: Optional[dict[str, float]] = None,
    resolution: Optional[float] = None,
    min_size: Optional[int] = None,
    max_size: Optional[int] = None,
    net_cap: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> Clustering:
    """Decompose, clique-expand and Leiden-cluster every module, then score the result on ``placements``."""
    if not placements:
        raise InputError("clustering needs at least one placement")
    resolution = settings.leiden_resolution if resolution is None else resolution
    min_size = min_size or settings.module_min
    max_size = max_size or settings.module_max
    net_cap = net_cap or settings.clique_net_cap
    seed = settings.seed if seed is None else seed
    threads = threads or settings.threads

    groups = decompose_modules(netlist, min_size, max_size)
    seeds = child_seeds(seed, len(groups), "leiden")
    partitions = Parallel(n_jobs=threads)(
        delayed(_cluster_group)(netlist, group, resolution, net_cap, s) for group, s in zip(groups, seeds)
    )
    assignment = np.zeros(netlist.size, dtype=np.int64)
    offset = 0
    for group, partition in zip(groups, partitions):
        assignment[group] = partition.membership + offset
        offset += partition.n_communities

    flags: list[str] = []
    score = None
    if offset >= 2:
        score = dbi(netlist, placements[0], assignment)
    else:
        flags.append("dbi undefined: single cluster")
    clustering = Clustering(
        assignment=assignment, n_clusters=offset, dbi=score, flags=flags,
        quality_history=[p.quality_history for p in partitions],
    )
    densities = []
    for placement in placements:
        grid = density_service.build_grid(netlist, placement)
        densities.append(density_service.cell_density(grid, netlist, placement))
    clustering = cluster_stats(clustering, densities, netlist_service.slack_array(netlist, slacks))
    logger.info(
        "clustered %d cells into %d clusters over %d groups (rho_DT=%s, dbi=%s)",
        netlist.size, offset, len(groups), clustering.rho_DT, clustering.dbi,
    )
    return clustering


def cluster_report(clustering: Clustering) -> ClusterReport:
    return ClusterReport(
        cells=int(clustering.assignment.size), clusters=clustering.n_clusters,
        rho_DT=clustering.rho_DT, rho_DT_timcrit=clustering.rho_DT_timcrit,
        sigma_cluster_density=clustering.sigma_cluster_density, dbi=clustering.dbi,
        flags=clustering.flags,
    )
