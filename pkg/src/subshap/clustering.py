"""Density-based clustering of train embeddings and label propagation.

The clusterer follows the hierarchical density formulation: core distance
per point (distance to its min_samples-th other neighbor), mutual
reachability max(core_a, core_b, d(a, b)), a minimum spanning tree over
that metric, single-linkage merges sorted by height, a condensed tree that
sheds sub-threshold children, and excess-of-mass cluster selection with
lambda = 1/distance. Points in no selected cluster are noise (-1).

Zero-distance merges never count as cluster splits: components joined at
distance zero are one cluster at every finite density level, so identical
duplicates aggregate instead of fragmenting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ValidationError
from .embedding import pairwise_distances


@dataclass
class HdbscanConfig:
    min_cluster_size: int = 15
    min_samples: int | None = None

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ConfigError("min_cluster_size must be >= 2")
        if self.min_samples is None:
            self.min_samples = self.min_cluster_size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HdbscanConfig":
        return cls(**d)


@dataclass
class ClusterAssignment:
    labels: np.ndarray  # -1 noise, 0..M-1 clusters
    n_clusters: int
    strengths: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.strengths = np.asarray(self.strengths, dtype=float)
        present = set(np.unique(self.labels).tolist()) - {-1}
        if present and (min(present) < 0 or max(present) >= self.n_clusters):
            raise ValidationError("labels must lie in {-1} or [0, n_clusters)")
        if np.any(self.strengths < 0) or np.any(self.strengths > 1):
            raise ValidationError("membership strengths must lie in [0, 1]")

    def label_set(self, include_noise: bool = True) -> list[int]:
        labels = sorted(set(np.unique(self.labels).tolist()))
        if not include_noise:
            labels = [l for l in labels if l != -1]
        return labels


def mutual_reachability(points: np.ndarray, min_samples: int) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    dist = pairwise_distances(points, points)
    np.fill_diagonal(dist, np.inf)
    k = min(min_samples, n - 1)
    core = np.sort(dist, axis=1)[:, k - 1]
    np.fill_diagonal(dist, 0.0)
    mreach = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(mreach, 0.0)
    return mreach


def minimum_spanning_tree(weights: np.ndarray) -> list[tuple[int, int, float]]:
    """Prim's algorithm over a dense symmetric weight matrix."""
    n = weights.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = weights[0].copy()
    best[0] = np.inf
    parent = np.zeros(n, dtype=np.int64)
    in_tree[0] = True
    edges = []
    for _ in range(n - 1):
        masked = np.where(in_tree, np.inf, best)
        v = int(np.argmin(masked))
        edges.append((int(parent[v]), v, float(best[v])))
        in_tree[v] = True
        improved = weights[v] < best
        improved &= ~in_tree
        best[improved] = weights[v][improved]
        parent[improved] = v
    return edges


def single_linkage(edges: list[tuple[int, int, float]], n: int) -> np.ndarray:
    """Merge matrix (left_node, right_node, height, size); leaves are
    0..n-1, merge i creates node n+i. Edge ties break on (height, u, v)."""
    order = sorted(range(len(edges)), key=lambda i: (edges[i][2], edges[i][0], edges[i][1]))
    parent = list(range(2 * n - 1))
    node_of = list(range(n))
    size = [1] * n + [0] * (n - 1)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    merges = np.zeros((len(edges), 4))
    next_node = n
    for row, i in enumerate(order):
        u, v, w = edges[i]
        ru, rv = find(u), find(v)
        left, right = node_of[ru], node_of[rv]
        merged_size = size[left] + size[right]
        merges[row] = (left, right, w, merged_size)
        parent[ru] = rv
        node_of[rv] = next_node
        size[next_node] = merged_size
        next_node += 1
    return merges


@dataclass
class _CondensedTree:
    # per cluster: birth lambda, parent cluster (-1 for root)
    birth: list[float] = field(default_factory=list)
    parent: list[int] = field(default_factory=list)
    children: dict[int, list[int]] = field(default_factory=dict)
    # per cluster: list of (point, lambda_leave)
    point_edges: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    # per cluster: list of (child_cluster, lambda_split, size)
    cluster_edges: dict[int, list[tuple[int, float, int]]] = field(default_factory=dict)

    def new_cluster(self, parent: int, birth: float) -> int:
        cid = len(self.birth)
        self.birth.append(birth)
        self.parent.append(parent)
        self.children[cid] = []
        self.point_edges[cid] = []
        self.cluster_edges[cid] = []
        if parent >= 0:
            self.children[parent].append(cid)
        return cid


def _condense(merges: np.ndarray, n: int, min_cluster_size: int) -> tuple[_CondensedTree, np.ndarray]:
    """Walk the dendrogram top-down, shedding sub-threshold children.

    Returns the condensed tree and, per point, the cluster it was attached
    to when it left (or stayed in forever).
    """
    tree = _CondensedTree()
    root = tree.new_cluster(-1, 0.0)
    attachment = np.full(n, root, dtype=np.int64)

    n_merges = merges.shape[0]

    def node_size(node: int) -> int:
        return 1 if node < n else int(merges[node - n, 3])

    def leaves_under(node: int) -> list[int]:
        out = []
        stack = [node]
        while stack:
            v = stack.pop()
            if v < n:
                out.append(v)
            else:
                row = merges[v - n]
                stack.append(int(row[0]))
                stack.append(int(row[1]))
        return out

    if n_merges == 0:
        return tree, attachment

    # iterative top-down walk: (dendrogram node, cluster id)
    stack = [(n + n_merges - 1, root)]
    while stack:
        node, cluster = stack.pop()
        if node < n:
            # reachable only through zero-distance continuation: the point
            # never leaves this cluster at any finite density
            attachment[node] = cluster
            tree.point_edges[cluster].append((node, np.inf))
            continue
        left, right, dist, _ = merges[node - n]
        left, right = int(left), int(right)
        lam = np.inf if dist <= 0.0 else 1.0 / dist
        if dist <= 0.0:
            # same cluster at every finite level; aggregate both sides
            stack.append((left, cluster))
            stack.append((right, cluster))
            continue
        sl, sr = node_size(left), node_size(right)
        if sl >= min_cluster_size and sr >= min_cluster_size:
            for child_node, child_size in ((left, sl), (right, sr)):
                child = tree.new_cluster(cluster, lam)
                tree.cluster_edges[cluster].append((child, lam, child_size))
                stack.append((child_node, child))
        else:
            for child_node, child_size in ((left, sl), (right, sr)):
                if child_size >= min_cluster_size:
                    stack.append((child_node, cluster))
                else:
                    for p in leaves_under(child_node):
                        attachment[p] = cluster
                        tree.point_edges[cluster].append((p, lam))
    return tree, attachment


def _stability(tree: _CondensedTree, cluster: int) -> float:
    birth = tree.birth[cluster]
    total = 0.0
    for _, lam in tree.point_edges[cluster]:
        if np.isinf(lam):
            return np.inf
        total += lam - birth
    for _, lam, size in tree.cluster_edges[cluster]:
        total += (lam - birth) * size
    return total


def _select_eom(tree: _CondensedTree) -> list[int]:
    """Excess-of-mass: keep a cluster when its own stability is at least
    the propagated sum of its descendants'. The root is never selectable;
    if no other cluster exists the caller falls back to the root."""
    n_clusters = len(tree.birth)
    if n_clusters == 1:
        return []
    stability = [_stability(tree, c) for c in range(n_clusters)]
    selected = [False] * n_clusters
    subtree: list[float] = [0.0] * n_clusters
    # children always have larger ids; reverse order is leaves-first
    for c in range(n_clusters - 1, 0, -1):
        child_sum = sum(subtree[k] for k in tree.children[c])
        if stability[c] >= child_sum:
            selected[c] = True
            subtree[c] = stability[c]
            # deselect descendants
            stack = list(tree.children[c])
            while stack:
                k = stack.pop()
                selected[k] = False
                stack.extend(tree.children[k])
        else:
            subtree[c] = child_sum
    return [c for c in range(n_clusters) if selected[c]]


def hdbscan(points: np.ndarray, config: HdbscanConfig) -> ClusterAssignment:
    """Cluster 2D embedding rows; labels -1 (noise) or 0..M-1."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < 2:
        raise ValidationError("clustering needs at least 2 rows")
    if n < config.min_cluster_size:
        return ClusterAssignment(np.full(n, -1), 0, np.zeros(n))

    mreach = mutual_reachability(points, config.min_samples)
    edges = minimum_spanning_tree(mreach)
    merges = single_linkage(edges, n)
    tree, attachment = _condense(merges, n, config.min_cluster_size)
    selected = _select_eom(tree)
    if not selected:
        # no true split anywhere: the whole sample is one cluster
        selected = [0]

    # map each attachment cluster to its selected ancestor (or none)
    selected_set = set(selected)
    resolve: dict[int, int] = {}
    for c in range(len(tree.birth)):
        cursor = c
        label = -1
        while cursor >= 0:
            if cursor in selected_set:
                label = cursor
                break
            cursor = tree.parent[cursor]
        resolve[c] = label

    member_lambda = np.zeros(n)
    raw_labels = np.full(n, -1, dtype=np.int64)
    for c in range(len(tree.birth)):
        target = resolve[c]
        if target < 0:
            continue
        for p, lam in tree.point_edges[c]:
            raw_labels[p] = target
            member_lambda[p] = lam

    # canonical numbering: big clusters first
    ordering = []
    for c in selected:
        members = np.flatnonzero(raw_labels == c)
        if members.size == 0:
            continue
        ordering.append((-members.size, tree.birth[c], int(members.min()), c))
    ordering.sort()
    relabel = {c: i for i, (_, _, _, c) in enumerate(ordering)}

    labels = np.full(n, -1, dtype=np.int64)
    strengths = np.zeros(n)
    for c, new in relabel.items():
        members = np.flatnonzero(raw_labels == c)
        labels[members] = new
        lams = member_lambda[members]
        lam_max = lams.max()
        if np.isinf(lam_max):
            strengths[members] = np.where(np.isinf(lams), 1.0, 0.0)
        elif lam_max > 0:
            strengths[members] = np.minimum(lams, lam_max) / lam_max
        else:
            strengths[members] = 1.0
    return ClusterAssignment(labels, len(relabel), strengths)


def knn_propagate(
    train_coords: np.ndarray,
    train_labels: np.ndarray,
    test_coords: np.ndarray,
    k: int,
    exclude_noise_voters: bool = False,
) -> ClusterAssignment:
    """Label each test row by majority vote of its k nearest train rows.

    Noise (-1) votes like any other label unless excluded; vote ties go to
    the single nearest neighbor's label. Strength is the winning vote
    fraction.
    """
    train_coords = np.asarray(train_coords, dtype=float)
    test_coords = np.asarray(test_coords, dtype=float)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if k < 1:
        raise ConfigError("k must be >= 1")
    if train_coords.shape[0] == 0:
        raise ValidationError("train coordinates are empty")
    if k > train_coords.shape[0]:
        raise ConfigError(f"k={k} exceeds train size {train_coords.shape[0]}")

    dist = pairwise_distances(test_coords, train_coords)
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    labels = np.empty(test_coords.shape[0], dtype=np.int64)
    strengths = np.empty(test_coords.shape[0])
    for i in range(test_coords.shape[0]):
        votes = train_labels[order[i]]
        pool = votes
        if exclude_noise_voters and np.any(pool != -1):
            pool = pool[pool != -1]
        uniq, counts = np.unique(pool, return_counts=True)
        winners = uniq[counts == counts.max()]
        if winners.size == 1:
            chosen = int(winners[0])
        else:
            chosen = int(train_labels[order[i, 0]])
        labels[i] = chosen
        strengths[i] = float(np.sum(pool == chosen)) / pool.size
    n_clusters = int(train_labels.max()) + 1 if np.any(train_labels >= 0) else 0
    return ClusterAssignment(labels, n_clusters, strengths)
