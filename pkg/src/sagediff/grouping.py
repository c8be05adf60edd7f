"""Semantic grouping over prompt embeddings: similarity graph with an open
(tau_min, tau_max) window, exhaustive clique enumeration for dataset
construction, and greedy first-fit partitioning for inference batches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; rejects zero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero vectors")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(embeddings: np.ndarray) -> np.ndarray:
    """All pairwise cosines of the rows of an (n, m) matrix."""
    e = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(e, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("cosine similarity is undefined for zero vectors")
    unit = e / norms[:, None]
    return np.clip(unit @ unit.T, -1.0, 1.0)


@dataclass(frozen=True)
class PromptGroup:
    """Members of one group, indexed into a shared embedding pool.

    The centroid (the plain mean, not re-normalized) is recomputed from the
    pool on access so it can never go stale.
    """

    member_ids: tuple[int, ...]
    pool: np.ndarray
    beta_override: float | None = None

    def __post_init__(self):
        if not self.member_ids:
            raise ValueError("a group needs at least one member")

    @property
    def size(self) -> int:
        return len(self.member_ids)

    @property
    def embeddings(self) -> np.ndarray:
        return self.pool[list(self.member_ids)]

    @property
    def centroid(self) -> np.ndarray:
        return self.embeddings.mean(axis=0)


@dataclass(frozen=True)
class SimilarityGraph:
    """Undirected graph with an edge wherever the pairwise cosine falls
    strictly inside the (tau_min, tau_max) window."""

    embeddings: np.ndarray
    adjacency: np.ndarray
    tau_min: float
    tau_max: float

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]


def build_graph(embeddings: np.ndarray, tau_min: float, tau_max: float) -> SimilarityGraph:
    """Similarity graph over embedding rows; the window is open at both ends,
    so identical embeddings (cosine 1.0) never connect when tau_max < 1."""
    if tau_min >= tau_max:
        raise ValueError("need tau_min < tau_max")
    e = np.asarray(embeddings, dtype=np.float64)
    sims = cosine_matrix(e)
    adj = (sims > tau_min) & (sims < tau_max)
    np.fill_diagonal(adj, False)
    adj = adj & adj.T
    adj.setflags(write=False)
    return SimilarityGraph(e, adj, float(tau_min), float(tau_max))


def enumerate_cliques(graph: SimilarityGraph, min_size: int = 2, max_size: int = 5,
                      cap: int = 1_000_000) -> list[PromptGroup]:
    """Every clique with min_size <= size <= max_size, each exactly once.

    Cliques are grown by appending only higher-numbered mutual neighbors, so
    the output comes in lexicographic order of the sorted member tuple and a
    cap simply keeps the first `cap` cliques of that order.
    """
    if min_size < 1 or max_size < min_size:
        raise ValueError("need 1 <= min_size <= max_size")
    adj = graph.adjacency
    n = graph.n_nodes
    neighbors = [np.flatnonzero(adj[v]) for v in range(n)]
    out: list[PromptGroup] = []

    def grow(members: list[int], candidates: np.ndarray) -> bool:
        if len(out) >= cap:
            return False
        if len(members) >= min_size:
            out.append(PromptGroup(tuple(members), graph.embeddings))
            if len(out) >= cap:
                return False
        if len(members) == max_size:
            return True
        for v in candidates:
            higher = neighbors[v][neighbors[v] > v]
            if not grow(members + [int(v)], np.intersect1d(candidates, higher, assume_unique=True)):
                return False
        return True

    for v in range(n):
        if not grow([v], neighbors[v][neighbors[v] > v]):
            break
    return out


def brute_force_cliques(graph: SimilarityGraph, min_size: int = 2,
                        max_size: int = 5) -> list[tuple[int, ...]]:
    """Oracle: scan every vertex subset up to max_size. Exponential; for
    cross-checking enumerate_cliques on small graphs only."""
    from itertools import combinations

    adj = graph.adjacency
    found = []
    for size in range(min_size, max_size + 1):
        for combo in combinations(range(graph.n_nodes), size):
            if all(adj[a, b] for a, b in combinations(combo, 2)):
                found.append(combo)
    return sorted(found)


def greedy_partition(embeddings: np.ndarray, threshold: float,
                     max_size: int | None = None) -> list[PromptGroup]:
    """Disjoint groups with all pairwise cosines >= threshold.

    First-fit in input order: each prompt joins the earliest-created group it
    is compatible with (every current member at or above the threshold, and
    room under max_size when given), else opens a new one. Deterministic for
    a fixed input order; a different order may give a different partition.
    """
    if not -1.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (-1, 1)")
    e = np.asarray(embeddings, dtype=np.float64)
    sims = cosine_matrix(e)
    groups: list[list[int]] = []
    for i in range(e.shape[0]):
        for members in groups:
            if max_size is not None and len(members) >= max_size:
                continue
            if all(sims[i, j] >= threshold for j in members):
                members.append(i)
                break
        else:
            groups.append([i])
    return [PromptGroup(tuple(members), e) for members in groups]


def write_groups(path, member_lists, provenance: dict) -> None:
    """Groups file: a `# {json}` provenance header line (tau window,
    threshold, generation parameters), then one group per line as
    comma-separated member ids."""
    import json

    with open(path, "w") as fh:
        fh.write("# " + json.dumps(provenance) + "\n")
        for members in member_lists:
            fh.write(",".join(str(i) for i in members) + "\n")


def read_groups(path) -> tuple[list[tuple[int, ...]], dict]:
    """Parse a groups file back into member-id tuples plus its provenance."""
    import json

    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError(f"groups file missing provenance header: {path}")
    provenance = json.loads(lines[0][2:])
    members = [tuple(int(x) for x in line.split(",")) for line in lines[1:] if line]
    return members, provenance
