"""Discrete noise schedule, forward noising, the deterministic DDIM update,
and the inference-time sampling grid with its shared/branch split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Terminal squared signal level alpha_T^2; keeps alpha_T strictly positive so
# the DDIM inversion never divides by zero.
ALPHA_BAR_MIN = 1e-4

SCHEDULE_KINDS = ("linear", "cosine")


@dataclass(frozen=True)
class NoiseSchedule:
    """Tables of signal scale alpha_t and noise scale sigma_t, t = 0..t_train.

    Variance preserving: alpha^2 + sigma^2 = 1 at every t; alpha strictly
    decreases from 1, sigma strictly increases from 0.
    """

    t_train: int
    alpha: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        a, s = self.alpha, self.sigma
        if a.shape != (self.t_train + 1,) or s.shape != (self.t_train + 1,):
            raise ValueError("alpha/sigma tables must have t_train + 1 entries")
        if a[0] != 1.0 or s[0] != 0.0:
            raise ValueError("schedule must start at alpha=1, sigma=0")
        if not (np.all(np.diff(a) < 0) and np.all(np.diff(s) > 0)):
            raise ValueError("alpha must strictly decrease and sigma strictly increase")
        if np.max(np.abs(a * a + s * s - 1.0)) > 1e-12:
            raise ValueError("schedule is not variance preserving")


def build_schedule(t_train: int, kind: str = "linear") -> NoiseSchedule:
    """Construct the (alpha_t, sigma_t) tables.

    "linear": squared signal level alpha_t^2 falls linearly from 1 to
    ALPHA_BAR_MIN. "cosine": alpha_t = cos(u * t / t_train) with the angle
    capped so the terminal signal level equals ALPHA_BAR_MIN as well.
    """
    if t_train < 2:
        raise ValueError("t_train must be at least 2")
    u = np.arange(t_train + 1, dtype=np.float64) / t_train
    if kind == "linear":
        alpha_bar = 1.0 + u * (ALPHA_BAR_MIN - 1.0)
        alpha = np.sqrt(alpha_bar)
    elif kind == "cosine":
        cap = np.arccos(np.sqrt(ALPHA_BAR_MIN))
        alpha = np.cos(u * cap)
        alpha_bar = alpha * alpha
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    sigma = np.sqrt(1.0 - alpha_bar)
    alpha.setflags(write=False)
    sigma.setflags(write=False)
    return NoiseSchedule(t_train, alpha, sigma)


def forward_sample(schedule: NoiseSchedule, z0: np.ndarray, eps: np.ndarray,
                   t: int) -> np.ndarray:
    """Noised latent alpha_t * z0 + sigma_t * eps."""
    if not 0 <= t <= schedule.t_train:
        raise ValueError(f"t={t} outside schedule range")
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValueError("z0 and eps must have the same shape")
    return schedule.alpha[t] * z0 + schedule.sigma[t] * eps


def ddim_step(schedule: NoiseSchedule, z_t: np.ndarray, eps_hat: np.ndarray,
              t: int, t_prev: int) -> np.ndarray:
    """Deterministic DDIM update from timestep t to t_prev < t.

    Reconstructs z0_hat = (z_t - sigma_t * eps_hat) / alpha_t and re-noises it
    to the target level: alpha_prev * z0_hat + sigma_prev * eps_hat.
    """
    if not (schedule.t_train >= t > t_prev >= 0):
        raise ValueError(f"need t_train >= t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    a_t = schedule.alpha[t]
    if a_t == 0.0:
        raise ZeroDivisionError("alpha_t = 0; schedule must keep alpha positive")
    z0_hat = (z_t - schedule.sigma[t] * eps_hat) / a_t
    return schedule.alpha[t_prev] * z0_hat + schedule.sigma[t_prev] * eps_hat


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass(frozen=True)
class SamplingGrid:
    """Strictly decreasing training timesteps visited at inference, plus the
    index where per-prompt branches take over from the shared phase.

    The first `shared_count` positions run once per group; the remaining
    `branch_index` positions run once per prompt. The successor of the last
    entry is timestep 0.
    """

    timesteps: tuple[int, ...]
    branch_index: int

    def __post_init__(self):
        ts = self.timesteps
        if not ts or ts[-1] <= 0:
            raise ValueError("grid must end at a positive timestep")
        if any(a <= b for a, b in zip(ts, ts[1:])):
            raise ValueError("grid timesteps must strictly decrease")
        if not 0 <= self.branch_index <= len(ts):
            raise ValueError("branch_index out of range")

    @property
    def n_steps(self) -> int:
        return len(self.timesteps)

    @property
    def shared_count(self) -> int:
        return self.n_steps - self.branch_index

    @property
    def beta(self) -> float:
        return self.shared_count / self.n_steps

    def successor(self, position: int) -> int:
        """Timestep the update at `position` lands on (0 after the last)."""
        return self.timesteps[position + 1] if position + 1 < self.n_steps else 0


def build_grid(schedule: NoiseSchedule, n_steps: int = 30, beta: float = 0.0) -> SamplingGrid:
    """Uniform-stride sub-sequence of training timesteps with a branch point.

    Midpoint striding: t_i = round((i - 1/2) * t_train / n_steps), so the top
    grid entry stays clear of the near-singular terminal timestep (alpha
    there is tiny and the DDIM inversion would amplify prediction error).
    The shared phase gets round(beta * n_steps) positions (ties round half
    up), so beta = 0 means no sharing and beta = 1 shares every step.
    """
    if not 1 <= n_steps <= schedule.t_train:
        raise ValueError("need 1 <= n_steps <= t_train")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    stride = schedule.t_train / n_steps
    timesteps = tuple(_round_half_up(stride * (i - 0.5)) for i in range(n_steps, 0, -1))
    shared = _round_half_up(beta * n_steps)
    return SamplingGrid(timesteps, branch_index=n_steps - shared)
