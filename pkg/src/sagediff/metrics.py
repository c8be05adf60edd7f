"""Desk-scale quality metrics: Fréchet distance between Gaussian fits in data
space, a bounded prompt-alignment score from the concept's own likelihood
kernel, within-group sample diversity, and the evaluation roll-up that mirrors
the report table."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GroupedDataset, OracleWorld, Concept
from .sampling import CostReport, GeneratedSample


@dataclass
class GaussianFit:
    """Mean and covariance of a sample population.

    Covariance must be symmetric to 1e-12 with eigenvalues >= -1e-10;
    negligible negative eigenvalues are treated as zero downstream.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("covariance shape does not match mean")
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-12:
            raise ValueError("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(self.cov)) < -1e-10:
            raise ValueError("covariance is not PSD within tolerance")


def fit_gaussian(samples: np.ndarray) -> GaussianFit:
    """Sample mean and (unbiased, symmetrized) covariance of (k, d) samples."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    mean = x.mean(axis=0)
    if x.shape[0] < 2:
        cov = np.zeros((x.shape[1], x.shape[1]))
    else:
        cov = np.cov(x, rowvar=False, ddof=1)
        cov = np.atleast_2d(cov)
        cov = 0.5 * (cov + cov.T)
    return GaussianFit(mean, cov)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if np.min(vals) < -1e-10:
        raise ArithmeticError(f"matrix not PSD after clamping: min eigenvalue {np.min(vals)}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(fit_a: GaussianFit, fit_b: GaussianFit) -> float:
    """Squared 2-Wasserstein distance between two Gaussian fits.

    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}); the cross square
    root comes from the symmetric eigendecomposition of A^{1/2} S_b A^{1/2},
    which shares its spectrum with S_a S_b.
    """
    if fit_a.mean.shape != fit_b.mean.shape:
        raise ValueError("fits live in different dimensions")
    diff = fit_a.mean - fit_b.mean
    root_a = _psd_sqrt(fit_a.cov)
    inner = root_a @ fit_b.cov @ root_a
    inner = 0.5 * (inner + inner.T)
    vals, _ = np.linalg.eigh(inner)
    if np.min(vals) < -1e-10:
        raise ArithmeticError("cross term not PSD after clamping")
    cross = np.sum(np.sqrt(np.clip(vals, 0.0, None)))
    value = float(diff @ diff + np.trace(fit_a.cov) + np.trace(fit_b.cov) - 2.0 * cross)
    return max(value, 0.0)


def alignment_score(samples: np.ndarray, concept: Concept) -> float:
    """Mean of exp(-||x - mean_c||^2 / (2 spread_c^2)) over samples, in [0, 1].

    A zero-spread concept degenerates to the exact-match indicator.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("alignment needs at least one sample")
    d2 = np.sum((x - concept.mean[None, :]) ** 2, axis=1)
    if concept.spread == 0.0:
        return float(np.mean(d2 == 0.0))
    return float(np.mean(np.exp(-d2 / (2.0 * concept.spread ** 2))))


def diversity(groups: list[np.ndarray]) -> float | None:
    """Mean over groups (size >= 2) of the mean pairwise Euclidean distance
    among final samples; None when no group is eligible."""
    per_group = []
    for g in groups:
        g = np.atleast_2d(g)
        n = g.shape[0]
        if n < 2:
            continue
        dists = np.linalg.norm(g[:, None, :] - g[None, :, :], axis=-1)
        per_group.append(dists[np.triu_indices(n, k=1)].mean())
    if not per_group:
        return None
    return float(np.mean(per_group))


@dataclass
class MetricsReport:
    """One report row; column names match the CSV exactly."""

    model: str
    scheme: str
    beta: float
    frechet: float | None
    alignment: float | None
    diversity: float | None
    cost_saving: float | None

    COLUMNS = ("model", "scheme", "beta", "frechet", "alignment", "diversity", "cost_saving")


@dataclass
class EvalResult:
    report: MetricsReport
    skipped_prompt_ids: list[int]


def evaluate(samples: list[GeneratedSample], dataset: GroupedDataset | None,
             world: OracleWorld | None, cost: CostReport | None,
             model: str, scheme: str, beta: float) -> EvalResult:
    """Roll generated samples up into one report row.

    Prompt ids are concept ids; samples whose id does not resolve in the
    world are skipped and listed. The Fréchet reference population is the
    dataset records of the concepts that were actually sampled. Fields whose
    inputs are missing stay None, except diversity, which is 0.0 when no
    group has two members (a report value must stay finite).
    """
    if not samples:
        raise ValueError("no samples to evaluate")
    skipped = []
    resolved = []
    if world is not None:
        known = {c.id for c in world.concepts}
        for s in samples:
            (resolved if s.prompt_id in known else skipped).append(s)
    else:
        resolved = list(samples)

    frechet = None
    if dataset is not None and resolved:
        concept_ids = {s.prompt_id for s in resolved}
        reference = np.stack([r.x for r in dataset.records if r.concept_id in concept_ids])
        generated = np.stack([s.x0 for s in resolved])
        frechet = frechet_distance(fit_gaussian(generated), fit_gaussian(reference))

    alignment = None
    if world is not None and resolved:
        by_prompt: dict[int, list[np.ndarray]] = {}
        for s in resolved:
            by_prompt.setdefault(s.prompt_id, []).append(s.x0)
        scores = [alignment_score(np.stack(xs), world.concept(pid))
                  for pid, xs in sorted(by_prompt.items())]
        alignment = float(np.mean(scores))

    by_group: dict[int, list[np.ndarray]] = {}
    for s in resolved:
        if s.group_id is not None:
            by_group.setdefault(s.group_id, []).append(s.x0)
    div = diversity([np.stack(xs) for xs in by_group.values()]) if by_group else None
    div = 0.0 if div is None else div

    report = MetricsReport(model, scheme, beta, frechet, alignment, div,
                           None if cost is None else cost.saving_ratio)
    return EvalResult(report, sorted({s.prompt_id for s in skipped}))


# ---------------------------------------------------------------------------
# Report CSV


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(path, rows: list[MetricsReport], config_hash: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config={config_hash}\n")
        fh.write(",".join(MetricsReport.COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(_cell(getattr(r, col)) for col in MetricsReport.COLUMNS) + "\n")


def append_report(path, rows: list[MetricsReport]) -> None:
    with open(path, "a") as fh:
        for r in rows:
            fh.write(",".join(_cell(getattr(r, col)) for col in MetricsReport.COLUMNS) + "\n")


def read_report(path) -> tuple[list[MetricsReport], str]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    config_hash = ""
    if lines and lines[0].startswith("# config="):
        config_hash = lines[0][len("# config="):]
        lines = lines[1:]
    if not lines or lines[0] != ",".join(MetricsReport.COLUMNS):
        raise ValueError(f"report header mismatch in {path}")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split(",")
        rows.append(MetricsReport(
            cells[0], cells[1], float(cells[2]),
            *(None if c == "" else float(c) for c in cells[3:7])))
    return rows, config_hash
