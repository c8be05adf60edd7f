"""Group-wise shared sampling: one noise draw and a centroid-conditioned
prefix per group, per-prompt branches from the shared latent, the independent
baseline, step accounting, and the closed-form optimal denoiser used to
validate the sampler."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grouping import PromptGroup, greedy_partition
from .model import omega_at
from .numerics import Rng
from .schedule import NoiseSchedule, SamplingGrid, ddim_step


@dataclass
class SampleTrace:
    """Latent history of one group: shared prefix, per-member branches, and
    the decoded samples (decoding is the identity at this scale).

    shared_prefix[k] is (timestep, latent) with the last entry the branch
    point; every branch starts from exactly that latent and ends at t = 0.
    """

    group_id: int | None
    member_ids: tuple[int, ...]
    shared_prefix: list[tuple[int, np.ndarray]]
    branches: list[list[tuple[int, np.ndarray]]]
    finals: np.ndarray  # (N, d)
    steps_shared: int
    steps_branch_total: int

    @property
    def size(self) -> int:
        return len(self.member_ids)


@dataclass
class CostReport:
    """Denoiser evaluations charged against a batch, against the independent
    baseline of n_steps evaluations per prompt."""

    independent_steps: int
    shared_steps: int

    @property
    def saving_ratio(self) -> float:
        return 1.0 - self.shared_steps / self.independent_steps

    @staticmethod
    def from_traces(traces: list[SampleTrace], n_steps: int) -> "CostReport":
        total_prompts = sum(t.size for t in traces)
        used = sum(t.steps_shared + t.steps_branch_total for t in traces)
        return CostReport(total_prompts * n_steps, used)

    @staticmethod
    def from_group_sizes(sizes, n_steps: int, shared_count: int) -> "CostReport":
        """Closed-form accounting for uniform sharing: each group of size N
        is charged shared_count + N * (n_steps - shared_count)."""
        sizes = list(sizes)
        used = sum(shared_count + n * (n_steps - shared_count) for n in sizes)
        return CostReport(sum(sizes) * n_steps, used)


def ddim_trajectory(denoiser, schedule: NoiseSchedule, timesteps, z: np.ndarray,
                    c: np.ndarray, omega, end_t: int = 0) -> list[tuple[int, np.ndarray]]:
    """Run guided DDIM over the given timestep positions for a (k, d) batch
    of latents under per-row conditions.

    Returns [(t, latent)] including the start state; the final update lands
    on end_t (0 unless a shared prefix hands over mid-grid).
    """
    timesteps = list(timesteps)
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    states = [(timesteps[0] if timesteps else end_t, z)]
    for pos, t in enumerate(timesteps):
        t_next = timesteps[pos + 1] if pos + 1 < len(timesteps) else end_t
        eps_hat = denoiser.predict_cfg(z, t, c, omega_at(omega, t))
        z = ddim_step(schedule, z, eps_hat, t, t_next)
        states.append((t_next, z))
    return states


def _effective_shared(grid: SamplingGrid, group: PromptGroup) -> int:
    if group.beta_override is None:
        return grid.shared_count
    return int(np.floor(group.beta_override * grid.n_steps + 0.5))


def sample_shared(denoiser, grid: SamplingGrid, group: PromptGroup, omega,
                  rng: Rng) -> SampleTrace:
    """Sample every member of a group from one shared noise draw.

    The shared phase runs the first shared_count grid positions under the
    group centroid condition; each member then continues from the shared
    latent under its own condition. Consumes exactly one Gaussian latent
    draw from rng.
    """
    sched = denoiser.schedule
    d = denoiser.data_dim
    n = group.size
    s = _effective_shared(grid, group)
    ts = grid.timesteps
    z_init = rng.gaussian(d)

    handoff_t = ts[s] if s < grid.n_steps else 0
    shared_states = ddim_trajectory(denoiser, sched, ts[:s], z_init[None, :],
                                    group.centroid[None, :], omega, end_t=handoff_t)
    shared_prefix = [(t, z[0].copy()) for t, z in shared_states]
    branch_t, z_star = shared_prefix[-1]

    if s < grid.n_steps:
        start = np.tile(z_star, (n, 1))
        branch_states = ddim_trajectory(denoiser, sched, ts[s:], start,
                                        group.embeddings, omega, end_t=0)
        branches = [[(t, z[i].copy()) for t, z in branch_states] for i in range(n)]
        finals = branch_states[-1][1].copy()
    else:
        branches = [[(branch_t, z_star.copy())] for _ in range(n)]
        finals = np.tile(z_star, (n, 1))
    return SampleTrace(None, group.member_ids, shared_prefix, branches, finals,
                       steps_shared=s, steps_branch_total=n * (grid.n_steps - s))


def sample_independent(denoiser, grid: SamplingGrid, embeddings: np.ndarray,
                       omega, rng: Rng, ids=None) -> list[SampleTrace]:
    """Baseline: per-prompt fresh noise and a full-length guided DDIM run.

    Each prompt costs n_steps evaluations; noise is drawn per prompt in order
    so the draws do not depend on how prompts are batched.
    """
    e = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    m_prompts = e.shape[0]
    ids = tuple(range(m_prompts)) if ids is None else tuple(ids)
    d = denoiser.data_dim
    z0 = np.stack([rng.gaussian(d) for _ in range(m_prompts)])
    states = ddim_trajectory(denoiser, denoiser.schedule, grid.timesteps, z0, e,
                             omega, end_t=0)
    traces = []
    for i, pid in enumerate(ids):
        branch = [(t, z[i].copy()) for t, z in states]
        traces.append(SampleTrace(None, (pid,), [branch[0]], [branch],
                                  states[-1][1][i:i + 1].copy(),
                                  steps_shared=0, steps_branch_total=grid.n_steps))
    return traces


def run_batch(denoiser, embeddings: np.ndarray, grid: SamplingGrid,
              threshold: float, omega, rng: Rng) -> tuple[list[SampleTrace], CostReport]:
    """Partition prompts greedily by cosine threshold, share-sample each
    group on its own rng stream (stream = base + group index), and account
    the work against independent sampling."""
    groups = greedy_partition(embeddings, threshold)
    traces = []
    for k, group in enumerate(groups):
        trace = sample_shared(denoiser, grid, group, omega, rng.substream(k))
        trace.group_id = k
        traces.append(trace)
    return traces, CostReport.from_traces(traces, grid.n_steps)


@dataclass
class OracleDenoiser:
    """Optimal noise predictor for a single Gaussian concept N(mean, spread^2 I).

    predict returns (z_t - alpha_t * E[z_0 | z_t]) / sigma_t with the exact
    posterior mean E[z_0 | z_t] =
    (alpha_t spread^2 z_t + sigma_t^2 mean) / (alpha_t^2 spread^2 + sigma_t^2).
    Guidance is a no-op because conditional and unconditional predictions
    coincide.
    """

    schedule: NoiseSchedule
    mean: np.ndarray
    spread: float

    @property
    def data_dim(self) -> int:
        return self.mean.shape[0]

    def predict(self, z_t: np.ndarray, t: int, c=None) -> np.ndarray:
        a = self.schedule.alpha[t]
        sig = self.schedule.sigma[t]
        s2 = self.spread * self.spread
        posterior_mean = (a * s2 * z_t + sig * sig * self.mean) / (a * a * s2 + sig * sig)
        return (z_t - a * posterior_mean) / sig

    def predict_cfg(self, z_t: np.ndarray, t: int, c=None, omega=1.0) -> np.ndarray:
        return self.predict(z_t, t, c)


# ---------------------------------------------------------------------------
# Samples file (JSON lines)


@dataclass
class GeneratedSample:
    prompt_id: int
    group_id: int | None
    x0: np.ndarray
    beta: float
    omega: float
    seed: int


def samples_from_traces(traces: list[SampleTrace], beta: float, omega: float,
                        seed: int, id_map=None) -> list[GeneratedSample]:
    """Flatten traces into sample records; id_map translates trace member
    positions into external prompt ids."""
    out = []
    for trace in traces:
        for i, pid in enumerate(trace.member_ids):
            prompt_id = int(pid) if id_map is None else int(id_map[pid])
            out.append(GeneratedSample(prompt_id, trace.group_id, trace.finals[i],
                                       beta, float(omega), seed))
    return out


def write_samples(path, samples: list[GeneratedSample], config_hash: str) -> None:
    """One JSON object per sample, preceded by a metadata line carrying the
    producing config hash."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"_meta": {"config_hash": config_hash}}) + "\n")
        for s in samples:
            fh.write(json.dumps({
                "prompt_id": s.prompt_id, "group_id": s.group_id,
                "x0": s.x0.tolist(), "beta": s.beta, "omega": s.omega,
                "seed": s.seed,
            }) + "\n")


def read_samples(path) -> tuple[list[GeneratedSample], str]:
    samples = []
    config_hash = ""
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                config_hash = obj["_meta"].get("config_hash", "")
                continue
            samples.append(GeneratedSample(obj["prompt_id"], obj["group_id"],
                                           np.array(obj["x0"], dtype=np.float64),
                                           obj["beta"], obj["omega"], obj["seed"]))
    return samples, config_hash
