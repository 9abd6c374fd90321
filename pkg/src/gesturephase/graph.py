"""Skeleton graph and the spatial partitioning used by the graph layers.

Each node's neighborhood (itself plus adjacent joints) splits into three
subsets by hop distance to a fixed center joint: the root subset (the
node itself, and neighbors at equal distance), the centripetal subset
(neighbors closer to the center) and the centrifugal subset (neighbors
further away). The three adjacency matrices are disjoint and sum to
A + I exactly.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import GraphError

N_PARTITIONS = 3
ROOT, CENTRIPETAL, CENTRIFUGAL = range(N_PARTITIONS)
DEGREE_EPSILON = 1e-6


def hop_distances(n_nodes: int, edges, center: int) -> np.ndarray:
    """BFS hop count from every node to ``center``; errors if disconnected."""
    adj = [[] for _ in range(n_nodes)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    dist = np.full(n_nodes, -1, dtype=np.int64)
    dist[center] = 0
    queue = deque([center])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    if (dist < 0).any():
        unreachable = np.flatnonzero(dist < 0).tolist()
        raise GraphError(f"graph is disconnected, nodes {unreachable} unreachable")
    return dist


def build_partitions(n_nodes: int, edges, center: int) -> np.ndarray:
    """Return the (3, n_nodes, n_nodes) partition adjacency stack."""
    if not 0 <= center < n_nodes:
        raise GraphError(f"center {center} outside 0..{n_nodes - 1}")
    seen = set()
    for i, j in edges:
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise GraphError(f"edge ({i}, {j}) outside 0..{n_nodes - 1}")
        if i == j:
            raise GraphError(f"self-loop on node {i}; self links are implicit")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphError(f"duplicate edge ({i}, {j})")
        seen.add(key)
    dist = hop_distances(n_nodes, edges, center)
    parts = np.zeros((N_PARTITIONS, n_nodes, n_nodes), dtype=np.float64)
    parts[ROOT, np.arange(n_nodes), np.arange(n_nodes)] = 1.0
    for i, j in edges:
        for a, b in ((i, j), (j, i)):
            # row a receives from neighbor b
            if dist[b] == dist[a]:
                parts[ROOT, a, b] = 1.0
            elif dist[b] < dist[a]:
                parts[CENTRIPETAL, a, b] = 1.0
            else:
                parts[CENTRIFUGAL, a, b] = 1.0
    return parts


def normalize_adjacency(a: np.ndarray, epsilon: float = DEGREE_EPSILON) -> np.ndarray:
    """Symmetric degree normalization with an epsilon floor on the degree."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError(f"adjacency must be square, got {a.shape}")
    deg = a.sum(axis=1) + epsilon
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


@dataclass(frozen=True)
class SkeletonGraph:
    """Joint connectivity plus the precomputed partition stack."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    center: int
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "edges", tuple((int(i), int(j)) for i, j in self.edges)
        )
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != self.n_nodes:
                raise GraphError("names length does not match n_nodes")
            object.__setattr__(self, "names", names)
        object.__setattr__(
            self, "_partitions", build_partitions(self.n_nodes, self.edges, self.center)
        )

    @property
    def partitions(self) -> np.ndarray:
        """(3, V, V) raw partition adjacency; read-only view."""
        p = self._partitions.view()
        p.flags.writeable = False
        return p

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=np.float64)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def normalized_partitions(self, epsilon: float = DEGREE_EPSILON) -> np.ndarray:
        """Partitions scaled by the shared degrees of the full
        adjacency-with-self-loops.

        Normalizing each partition by its own degrees would divide
        entries in a zero-degree node's column by sqrt(epsilon); the
        centripetal partition always has such a node (the center), so
        the degrees come from the partition sum, where every node has
        at least its self-loop."""
        full = self._partitions.sum(axis=0)
        deg = full.sum(axis=1) + epsilon
        inv_sqrt = 1.0 / np.sqrt(deg)
        return self._partitions * inv_sqrt[None, :, None] * inv_sqrt[None, None, :]

    def content_hash(self) -> str:
        payload = {
            "n_nodes": self.n_nodes,
            "edges": sorted((min(i, j), max(i, j)) for i, j in self.edges),
            "center": self.center,
            "names": list(self.names) if self.names else None,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def graph_from_dict(raw: dict) -> SkeletonGraph:
    try:
        names = raw.get("names")
        n_nodes = len(names) if names else int(raw["n_nodes"])
        return SkeletonGraph(
            n_nodes=n_nodes,
            edges=tuple((int(i), int(j)) for i, j in raw["edges"]),
            center=int(raw["center"]),
            names=tuple(names) if names else None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise GraphError(f"bad graph definition: {e}") from e


def load_graph(path) -> SkeletonGraph:
    """Read a graph definition file (JSON with edges, center, names)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise GraphError(f"graph file {path} does not exist")
    except json.JSONDecodeError as e:
        raise GraphError(f"graph file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise GraphError(f"graph file {path} must hold an object")
    return graph_from_dict(raw)


def default_graph() -> SkeletonGraph:
    """The shipped 27-joint upper-body tree, centered on the nose."""
    raw = json.loads(
        resources.files("gesturephase.data").joinpath("graph_27.json").read_text()
    )
    return graph_from_dict(raw)
