"""Synthetic concept world: unit-norm concept embeddings arranged in
meta-concept families with a controllable sibling-similarity window, Gaussian
data distributions coupled to embedding distance, record sampling, and
clique-grouped dataset construction with file round-trips."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grouping import build_graph, cosine_matrix, enumerate_cliques, read_groups, write_groups
from .numerics import Rng

# Children are never placed closer than this squared-sine angle to their meta
# direction; windows demanding tighter placement are rejected as infeasible.
PERTURBATION_FLOOR = 1e-3


class WorldGenerationError(RuntimeError):
    """Raised when no concept placement satisfies the similarity window."""


@dataclass
class Concept:
    """One prompt stand-in: a unit embedding plus the Gaussian it names."""

    id: int
    meta_id: int
    embedding: np.ndarray
    mean: np.ndarray
    spread: float


@dataclass
class OracleWorld:
    """Full generative ground truth: every concept's embedding, mean and
    spread, so optimal denoisers and exact metric references are available."""

    concepts: list[Concept]
    provenance: dict

    @property
    def embed_dim(self) -> int:
        return self.concepts[0].embedding.shape[0]

    @property
    def data_dim(self) -> int:
        return self.concepts[0].mean.shape[0]

    def concept(self, concept_id: int) -> Concept:
        c = self.concepts[concept_id]
        if c.id != concept_id:
            raise KeyError(f"concept ids are not positional: {concept_id}")
        return c

    def embedding_matrix(self) -> np.ndarray:
        return np.stack([c.embedding for c in self.concepts])

    def mean_matrix(self) -> np.ndarray:
        return np.stack([c.mean for c in self.concepts])


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _place_children(rng: Rng, meta_emb: np.ndarray, count: int,
                    tau_min: float, tau_max: float, max_tries: int = 20) -> np.ndarray:
    """Children at a common angle from the meta direction, the angle bisected
    until every sibling pair's cosine falls strictly inside the window.

    Child i = cos(theta) * meta + sin(theta) * u_i with u_i unit directions
    orthogonal to the meta, so pairwise cosines are
    cos^2(theta) + sin^2(theta) * (u_i . u_j), monotone in theta. Distinct
    children are additionally kept at pairwise cosine <= 1 - PERTURBATION_FLOOR,
    so windows demanding tighter placement fail deterministically.
    """
    m = meta_emb.shape[0]
    cap = 1.0 - PERTURBATION_FLOOR
    if count > 1 and tau_min >= cap:
        raise WorldGenerationError(
            f"window ({tau_min}, {tau_max}) demands children closer than the "
            f"distinctness floor {cap}")
    target = 0.5 * (tau_min + min(tau_max, cap))
    for _ in range(max_tries):
        dirs = np.stack([rng.gaussian(m) for _ in range(count)])
        dirs -= np.outer(dirs @ meta_emb, meta_emb)
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        if count == 1:
            theta = np.arcsin(np.sqrt(PERTURBATION_FLOOR))
        else:
            rho = dirs @ dirs.T
            pair = rho[np.triu_indices(count, k=1)]

            def mid_cosine(theta):
                c = np.cos(theta) ** 2 + np.sin(theta) ** 2 * pair
                return 0.5 * (c.max() + c.min())

            lo, hi = 1e-6, 0.5 * np.pi
            for _ in range(60):
                theta = 0.5 * (lo + hi)
                if mid_cosine(theta) > target:
                    lo = theta
                else:
                    hi = theta
            theta = 0.5 * (lo + hi)
        children = np.cos(theta) * meta_emb + np.sin(theta) * dirs
        children /= np.linalg.norm(children, axis=1)[:, None]
        if count > 1:
            sims = cosine_matrix(children)[np.triu_indices(count, k=1)]
            if not np.all((sims > tau_min) & (sims < tau_max) & (sims <= cap)):
                continue
        return children
    raise WorldGenerationError(
        f"no placement of {count} children fits window ({tau_min}, {tau_max})")


# Fraction of embedding variance carried by the data-space latent block.
# Uniform-on-sphere metas would leave cross-family embedding similarity
# independent of data-mean distance, killing the global cosine/distance
# coupling the similarity premise rests on; too much weight floods the
# similarity window with cross-family pairs and the record-level clique
# count explodes. 0.40 sits on the working side of both constraints.
LATENT_WEIGHT = 0.40

# Spiral layout scale for family latents (quasi-uniform disk coverage keeps
# nearest families apart deterministically) and the saturating radial gain
# that bounds how much a large radius can raise embedding cosines.
LATENT_RADIUS = 1.55

# Radial curvature of the embedding-to-mean shadow map and the reference
# squared radius it is normalized at. Curvature makes the map of a centroid
# differ from the centroid of the maps, so averaged conditions genuinely
# mispoint in data space; a linear map would make shared conditioning
# trivially correct.
SHADOW_WARP = 2.0
SHADOW_R0_SQ = 0.45


def _shadow_map(shadow: np.ndarray, mean_scale: float, warp: float) -> np.ndarray:
    r2 = float(shadow @ shadow)
    return mean_scale * shadow * (1.0 + warp * r2) / (1.0 + warp * SHADOW_R0_SQ)


def separated_tails(rng: Rng, count: int, dim: int, iters: int = 600,
                    step: float = 2.0) -> np.ndarray:
    """Unit vectors pushed apart by frame-potential descent.

    Random unit tails in few dimensions collide (pairwise dots reach 0.8),
    pushing unrelated families into the similarity window; repulsion caps
    the worst coherence near 0.6 so window membership stays structural.
    """
    tails = rng.gaussian(count * dim).reshape(count, dim)
    tails /= np.linalg.norm(tails, axis=1)[:, None]
    for _ in range(iters):
        overlaps = tails @ tails.T
        np.fill_diagonal(overlaps, 0.0)
        tails -= step * (overlaps ** 3) @ tails / count
        tails /= np.linalg.norm(tails, axis=1)[:, None]
    return tails


def make_world(rng: Rng, n_meta: int = 200, children_per_meta: int = 3,
               embed_dim: int = 16, data_dim: int = 2,
               tau_min: float = 0.6, tau_max: float = 0.9,
               spread: float = 0.15, meta_scale: float = 3.0,
               coupling: float = 1.0, warp: float = SHADOW_WARP) -> OracleWorld:
    """Generate concepts in meta families.

    Each family draws a data-space latent that seeds the first data_dim
    embedding coordinates; every concept's mean is one fixed curved "shadow"
    map of its embedding, so embedding cosine and data distance stay
    rank-coupled across the whole world while averaged conditions land
    slightly off averaged means (see SHADOW_WARP). Sibling embeddings fall
    pairwise inside the (tau_min, tau_max) cosine window, and child means
    move off the family mean by coupling times the shadow of the embedding
    perturbation. Fails with WorldGenerationError if the window is
    infeasible or the 95% separation rates are missed.
    """
    if not (n_meta >= 1 and children_per_meta >= 1):
        raise ValueError("need at least one meta and one child")
    if not -1.0 < tau_min < tau_max <= 1.0:
        raise ValueError("similarity window must satisfy -1 < tau_min < tau_max <= 1")
    if embed_dim <= data_dim:
        raise ValueError("embed_dim must exceed data_dim")
    if data_dim != 2:
        raise ValueError("the latent spiral layout is built for data_dim = 2")
    a = np.sqrt(LATENT_WEIGHT)
    b = np.sqrt(1.0 - LATENT_WEIGHT)
    mean_scale = meta_scale * np.sqrt(data_dim) / a
    golden = np.pi * (3.0 - np.sqrt(5.0))
    tails = separated_tails(rng, n_meta, embed_dim - data_dim)
    concepts: list[Concept] = []
    for meta_id in range(n_meta):
        radius = np.sqrt((meta_id + 0.5) / n_meta) * LATENT_RADIUS
        angle = meta_id * golden
        direction = np.array([np.cos(angle), np.sin(angle)])
        gain = np.sqrt((radius * radius + 1.0) / (LATENT_RADIUS * LATENT_RADIUS + 1.0))
        meta_emb = _unit(np.concatenate([a * gain * direction, b * tails[meta_id]]))
        meta_mean = _shadow_map(meta_emb[:data_dim], mean_scale, warp)
        children = _place_children(rng, meta_emb, children_per_meta, tau_min, tau_max)
        for child_emb in children:
            child_point = _shadow_map(child_emb[:data_dim], mean_scale, warp)
            concepts.append(Concept(len(concepts), meta_id, child_emb,
                                    meta_mean + coupling * (child_point - meta_mean),
                                    spread))
    world = OracleWorld(concepts, {
        "n_meta": n_meta, "children_per_meta": children_per_meta,
        "embed_dim": embed_dim, "data_dim": data_dim,
        "tau_min": tau_min, "tau_max": tau_max, "spread": spread,
        "meta_scale": meta_scale, "coupling": coupling, "warp": warp,
        "seed": rng.seed, "stream": rng.stream,
    })
    sib_rate, cross_rate = separation_rates(world)
    if sib_rate < 0.95 or cross_rate < 0.95:
        raise WorldGenerationError(
            f"separation check failed: sibling in-window rate {sib_rate:.3f}, "
            f"cross-family below tau_min rate {cross_rate:.3f}")
    return world


def separation_rates(world: OracleWorld) -> tuple[float, float]:
    """(fraction of sibling pairs inside the window, fraction of cross-family
    pairs below tau_min)."""
    tau_min = world.provenance["tau_min"]
    tau_max = world.provenance["tau_max"]
    sims = cosine_matrix(world.embedding_matrix())
    metas = np.array([c.meta_id for c in world.concepts])
    same = metas[:, None] == metas[None, :]
    iu = np.triu_indices(len(world.concepts), k=1)
    sib = sims[iu][same[iu]]
    cross = sims[iu][~same[iu]]
    sib_rate = 1.0 if sib.size == 0 else float(np.mean((sib > tau_min) & (sib < tau_max)))
    cross_rate = 1.0 if cross.size == 0 else float(np.mean(cross < tau_min))
    return sib_rate, cross_rate


def embedding_data_coupling(world: OracleWorld) -> float:
    """Spearman rank correlation, over all concept pairs, between embedding
    cosine and negative distance of data means. Positive values mean
    semantically similar prompts name nearby data."""
    sims = cosine_matrix(world.embedding_matrix())
    means = world.mean_matrix()
    dist = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
    iu = np.triu_indices(len(world.concepts), k=1)
    return spearman(sims[iu], -dist[iu])


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman correlation via ranks (no tie correction)."""
    rx = np.argsort(np.argsort(x)).astype(np.float64)
    ry = np.argsort(np.argsort(y)).astype(np.float64)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry)))


# ---------------------------------------------------------------------------
# Records and grouped datasets


@dataclass
class Record:
    """One prompt-data pair; id doubles as the row index everywhere."""

    id: int
    concept_id: int
    embedding: np.ndarray
    x: np.ndarray


def sample_records(rng: Rng, world: OracleWorld, per_concept: int) -> list[Record]:
    """Draw per_concept data points x ~ N(mean_c, spread_c^2 I) per concept.

    Record ids interleave concepts round-robin (all concepts' first records,
    then all second records, ...) so a capped, lexicographically truncated
    clique enumeration still covers every concept instead of only the
    low-numbered ones.
    """
    if per_concept < 1:
        raise ValueError("per_concept must be >= 1")
    records = []
    for _ in range(per_concept):
        for concept in world.concepts:
            x = concept.mean + concept.spread * rng.gaussian(world.data_dim)
            records.append(Record(len(records), concept.id, concept.embedding.copy(), x))
    return records


@dataclass
class GroupedDataset:
    """Records plus clique groups over them, with generation provenance."""

    records: list[Record]
    groups: list[tuple[int, ...]]
    provenance: dict
    _pool: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def pool(self) -> np.ndarray:
        if self._pool is None:
            object.__setattr__(self, "_pool", np.stack([r.embedding for r in self.records]))
        return self._pool

    def group_sizes(self) -> list[int]:
        return [len(g) for g in self.groups]


def build_grouped_dataset(records: list[Record], tau_min: float, tau_max: float,
                          target_groups: int, min_size: int = 2, max_size: int = 5,
                          cap: int = 2_500_000, extra_provenance: dict | None = None,
                          ) -> GroupedDataset:
    """Enumerate cliques of the record-similarity graph and keep an evenly
    strided subsample of target_groups of them (canonical order).

    If fewer cliques exist than requested, all are kept and the provenance
    carries short_of_target = True.
    """
    if not records:
        raise ValueError("records must be non-empty")
    for i, r in enumerate(records):
        if r.id != i:
            raise ValueError("record ids must be consecutive row indices")
    pool = np.stack([r.embedding for r in records])
    graph = build_graph(pool, tau_min, tau_max)
    cliques = enumerate_cliques(graph, min_size=min_size, max_size=max_size, cap=cap)
    all_groups = [g.member_ids for g in cliques]
    short = len(all_groups) < target_groups
    if short:
        chosen = all_groups
    else:
        idx = (np.arange(target_groups) * len(all_groups)) // target_groups
        chosen = [all_groups[i] for i in idx]
    provenance = {
        "tau_min": tau_min, "tau_max": tau_max,
        "target_groups": target_groups, "n_cliques": len(all_groups),
        "short_of_target": short,
    }
    provenance.update(extra_provenance or {})
    return GroupedDataset(list(records), chosen, provenance, _pool=pool)


def validate_dataset(ds: GroupedDataset) -> bool:
    """Re-check every stored group against a graph rebuilt from the stored
    embeddings and stored window."""
    graph = build_graph(ds.pool, ds.provenance["tau_min"], ds.provenance["tau_max"])
    for members in ds.groups:
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                if not graph.adjacency[a, b]:
                    return False
    return True


def dataset_equal(a: GroupedDataset, b: GroupedDataset) -> bool:
    if a.provenance != b.provenance or a.groups != b.groups:
        return False
    if len(a.records) != len(b.records):
        return False
    for ra, rb in zip(a.records, b.records):
        if ra.id != rb.id or ra.concept_id != rb.concept_id:
            return False
        if not (np.array_equal(ra.embedding, rb.embedding) and np.array_equal(ra.x, rb.x)):
            return False
    return True


# ---------------------------------------------------------------------------
# Files: world.json, records.jsonl, groups.txt


def write_world(path, world: OracleWorld) -> None:
    payload = {
        "provenance": world.provenance,
        "concepts": [{
            "id": c.id, "meta_id": c.meta_id,
            "embedding": c.embedding.tolist(),
            "mean": c.mean.tolist(), "spread": c.spread,
        } for c in world.concepts],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def read_world(path) -> OracleWorld:
    with open(path) as fh:
        payload = json.load(fh)
    concepts = [Concept(c["id"], c["meta_id"],
                        np.array(c["embedding"], dtype=np.float64),
                        np.array(c["mean"], dtype=np.float64), c["spread"])
                for c in payload["concepts"]]
    return OracleWorld(concepts, payload["provenance"])


def write_records(path, records: list[Record]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "concept_id": r.concept_id,
                                 "embedding": r.embedding.tolist(),
                                 "x": r.x.tolist()}) + "\n")


def read_records(path) -> list[Record]:
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(Record(obj["id"], obj["concept_id"],
                                  np.array(obj["embedding"], dtype=np.float64),
                                  np.array(obj["x"], dtype=np.float64)))
    return records


def write_dataset(records_path, groups_path, ds: GroupedDataset) -> None:
    write_records(records_path, ds.records)
    write_groups(groups_path, ds.groups, ds.provenance)


def read_dataset(records_path, groups_path) -> GroupedDataset:
    records = read_records(records_path)
    groups, provenance = read_groups(groups_path)
    return GroupedDataset(records, groups, provenance)
