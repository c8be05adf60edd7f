"""Training losses and loop: the per-record noise-prediction loss, the
three-term group loss whose soft target is frozen with respect to the
parameters, and a deterministic AdamW loop over a grouped dataset."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import GroupedDataset
from .model import Denoiser, make_denoiser
from .numerics import (DivergenceError, ParamGrads, Rng, adamw_step,
                       init_adam_state, mlp_backward, mlp_forward)
from .schedule import build_schedule


@dataclass
class TrainingGroup:
    """Latents and conditions of one group; the shared representations are
    recomputed on access so they can never go stale."""

    z: np.ndarray  # (N, d)
    c: np.ndarray  # (N, m)

    def __post_init__(self):
        if self.z.ndim != 2 or self.c.ndim != 2 or self.z.shape[0] != self.c.shape[0]:
            raise ValueError("z and c must be (N, d) and (N, m) with matching N")
        if self.z.shape[0] == 0:
            raise ValueError("a training group needs at least one member")

    @property
    def size(self) -> int:
        return self.z.shape[0]

    @property
    def z_bar(self) -> np.ndarray:
        return self.z.mean(axis=0)

    @property
    def c_bar(self) -> np.ndarray:
        return self.c.mean(axis=0)


@dataclass
class SageLossConfig:
    """Weights and ranges for the hybrid group loss.

    t_star splits the training timesteps: the shared phase draws
    t_s in [t_star, t_train], the branch phase t_b in [1, t_star].
    soft_target_flow lets gradients pass through the averaged per-member
    prediction (ablation hook); by default that target is a constant.
    """

    t_star: int
    lambda1: float = 1.0
    lambda2: float = 1.0
    cfg_dropout: float = 0.1
    soft_target_flow: bool = False
    weight_policy: str = "one"

    def weight(self, t: int) -> float:
        if self.weight_policy == "one":
            return 1.0
        raise ValueError(f"unknown weight policy {self.weight_policy!r}")


@dataclass
class LossResult:
    value: float
    grads: ParamGrads
    terms: tuple[float, float, float] = (0.0, 0.0, 0.0)


def loss_ldm(denoiser: Denoiser, z: np.ndarray, c: np.ndarray, eps: np.ndarray,
             t: int, weight: float = 1.0) -> LossResult:
    """Squared error between predicted and true noise at one timestep,
    with exact parameter gradients."""
    sched = denoiser.schedule
    x_t = sched.alpha[t] * z + sched.sigma[t] * eps
    inputs = denoiser.features(x_t, t, c)
    out, tape = mlp_forward(denoiser.params, inputs)
    resid = out[0] - eps
    value = weight * float(resid @ resid)
    grads = mlp_backward(denoiser.params, tape, (2.0 * weight) * resid[None, :])
    return LossResult(value, grads, (value, 0.0, 0.0))


def soft_target(denoiser: Denoiser, group: TrainingGroup, eps: np.ndarray,
                t_s: int, conditions: np.ndarray | None = None) -> np.ndarray:
    """Average of the per-member noise predictions at the shared timestep."""
    sched = denoiser.schedule
    c = group.c if conditions is None else conditions
    x_members = sched.alpha[t_s] * group.z + sched.sigma[t_s] * eps[None, :]
    preds = denoiser.predict(x_members, t_s, c)
    return preds.mean(axis=0)


def loss_sage(denoiser: Denoiser, group: TrainingGroup, eps: np.ndarray,
              t_s: int, t_b: int, cfg: SageLossConfig,
              target: np.ndarray | None = None,
              shared_condition: np.ndarray | None = None,
              member_conditions: np.ndarray | None = None) -> LossResult:
    """Hybrid group loss: shared-phase noise supervision at t_s, alignment of
    the shared prediction with the averaged per-member prediction (the soft
    target, a constant w.r.t. parameters unless cfg.soft_target_flow), and
    the per-member branch loss at t_b. All three terms consume the same eps.

    `target` pins the soft target explicitly (used by gradient checks so the
    finite-difference loss differentiates the same frozen objective);
    condition overrides support guidance dropout without mutating the group.
    """
    sched = denoiser.schedule
    if not (cfg.t_star <= t_s <= sched.t_train and 1 <= t_b <= cfg.t_star):
        raise ValueError(f"timesteps out of phase: t_s={t_s}, t_b={t_b}, t_star={cfg.t_star}")
    n = group.size
    w_s, w_b = cfg.weight(t_s), cfg.weight(t_b)
    c_bar = group.c_bar if shared_condition is None else shared_condition
    c_members = group.c if member_conditions is None else member_conditions

    # Shared-phase work at t_s: the mean-latent row and (when the target is
    # not pinned) the member rows ride in one stacked forward pass, so a
    # degenerate group of identical members gives a bitwise-zero alignment
    # term and the shared evaluation is still computed exactly once.
    x_shared = sched.alpha[t_s] * group.z_bar + sched.sigma[t_s] * eps
    if target is None:
        x_members_s = sched.alpha[t_s] * group.z + sched.sigma[t_s] * eps[None, :]
        stack_x = np.vstack([x_shared[None, :], x_members_s])
        stack_c = np.vstack([np.atleast_2d(c_bar), c_members])
        out_s, tape_s = mlp_forward(denoiser.params, denoiser.features(stack_x, t_s, stack_c))
        f_shared = out_s[0]
        target = out_s[1:].mean(axis=0)
        member_rows = n
    else:
        out_s, tape_s = mlp_forward(denoiser.params, denoiser.features(x_shared, t_s, c_bar))
        f_shared = out_s[0]
        member_rows = 0

    shared_resid = f_shared - eps
    align_resid = f_shared - target
    term1 = cfg.lambda1 * w_s * float(shared_resid @ shared_resid)
    term2 = cfg.lambda2 * float(align_resid @ align_resid)

    x_branch = sched.alpha[t_b] * group.z + sched.sigma[t_b] * eps[None, :]
    branch_out, branch_tape = mlp_forward(
        denoiser.params, denoiser.features(x_branch, t_b, c_members))
    branch_resid = branch_out - eps[None, :]
    term3 = (w_b / n) * float(np.sum(branch_resid * branch_resid))

    d_shared = 2.0 * cfg.lambda1 * w_s * shared_resid + 2.0 * cfg.lambda2 * align_resid
    d_stack = np.zeros((1 + member_rows, d_shared.size))
    d_stack[0] = d_shared
    if cfg.soft_target_flow and member_rows:
        d_stack[1:] = (-2.0 * cfg.lambda2 / n) * align_resid
    grads = mlp_backward(denoiser.params, tape_s, d_stack)
    grads.add_scaled(mlp_backward(denoiser.params, branch_tape,
                                  (2.0 * w_b / n) * branch_resid))
    return LossResult(term1 + term2 + term3, grads, (term1, term2, term3))


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class TrainResult:
    denoiser: Denoiser
    curve: np.ndarray  # rows of (step, term1, term2, term3, total)
    diverged: bool
    steps_completed: int


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def groups_from_dataset(dataset: GroupedDataset, flatten: bool) -> list[TrainingGroup]:
    """Materialize training groups; flatten=True yields one singleton group
    per distinct record used by any group (standard fine-tuning)."""
    xs = np.stack([r.x for r in dataset.records])
    if flatten:
        seen = sorted({i for members in dataset.groups for i in members})
        return [TrainingGroup(xs[[i]], dataset.pool[[i]]) for i in seen]
    return [TrainingGroup(xs[list(members)], dataset.pool[list(members)])
            for members in dataset.groups]


def train(dataset: GroupedDataset, config, rng: Rng, steps: int | None = None,
          on_checkpoint: Callable[[int, Denoiser], None] | None = None) -> TrainResult:
    """Run the training loop described by an ExperimentConfig.

    Per iteration: draw a batch of groups uniformly, then per group draw the
    shared and branch timesteps, one shared noise vector (exactly one
    Gaussian latent draw per group), apply condition dropout, accumulate
    gradients in batch order and take one AdamW step. Images are identity
    encoded, so latents are the record data points. Deterministic given the
    rng; a non-finite step aborts with the last good parameters.
    """
    if not dataset.groups:
        raise ValueError("dataset has no groups to train on")
    n_steps = config.train_steps if steps is None else steps
    sched = build_schedule(config.t_train, config.schedule_kind)
    t_star = round_half_up((1.0 - config.beta) * config.t_train)
    t_star = min(max(t_star, 1), config.t_train)
    loss_cfg = SageLossConfig(t_star=t_star, lambda1=config.lambda1,
                              lambda2=config.lambda2, cfg_dropout=config.cfg_dropout,
                              soft_target_flow=config.soft_target_flow)
    sage_mode = config.loss == "sage"
    if config.loss not in ("sage", "ldm"):
        raise ValueError(f"unknown loss mode {config.loss!r}")
    groups = groups_from_dataset(dataset, flatten=not sage_mode)
    data_dim = groups[0].z.shape[1]
    embed_dim = groups[0].c.shape[1]
    denoiser = make_denoiser(rng, sched, data_dim, embed_dim,
                             hidden_widths=config.hidden_widths(),
                             activation=config.activation)
    state = init_adam_state(denoiser.params)
    null = np.zeros(embed_dim)
    curve = np.zeros((n_steps, 5))
    completed = 0
    for step in range(n_steps):
        picks = rng.integers(0, len(groups), size=config.batch_groups)
        accum = ParamGrads.zeros_like(denoiser.params)
        totals = np.zeros(4)
        ok = True
        for gi in picks:
            group = groups[int(gi)]
            if sage_mode:
                t_s = rng.integers(t_star, config.t_train + 1)
                t_b = rng.integers(1, t_star + 1)
                eps = rng.gaussian(data_dim)
                c_bar = null if rng.uniform() < loss_cfg.cfg_dropout else None
                keep = np.array([rng.uniform() >= loss_cfg.cfg_dropout
                                 for _ in range(group.size)])
                c_members = np.where(keep[:, None], group.c, null[None, :])
                result = loss_sage(denoiser, group, eps, t_s, t_b, loss_cfg,
                                   shared_condition=c_bar,
                                   member_conditions=c_members)
            else:
                t = rng.integers(1, config.t_train + 1)
                eps = rng.gaussian(data_dim)
                c = null if rng.uniform() < loss_cfg.cfg_dropout else group.c[0]
                result = loss_ldm(denoiser, group.z[0], c, eps, t)
            if not np.isfinite(result.value):
                ok = False
                break
            accum.add_scaled(result.grads)
            totals += np.array([*result.terms, result.value])
        if not ok:
            return TrainResult(denoiser, curve[:completed], True, completed)
        accum.scale(1.0 / config.batch_groups)
        try:
            new_params, state = adamw_step(denoiser.params, accum, state,
                                           lr=config.lr, weight_decay=config.weight_decay)
        except DivergenceError:
            return TrainResult(denoiser, curve[:completed], True, completed)
        denoiser = Denoiser(new_params, sched, data_dim, embed_dim)
        completed = step + 1
        curve[step] = [step, *(totals / config.batch_groups)]
        if on_checkpoint and config.checkpoint_every and completed % config.checkpoint_every == 0:
            on_checkpoint(completed, denoiser)
    return TrainResult(denoiser, curve[:completed], False, completed)
