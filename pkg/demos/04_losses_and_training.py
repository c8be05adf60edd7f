"""The two training losses and a short training run.

Shows the single-member collapse identity (the group loss degenerates to two
plain noise-prediction terms), checks gradients against finite differences,
then trains briefly on a small world and prints the loss trajectory.
"""

import numpy as np

from sagediff import (ExperimentConfig, Rng, build_grouped_dataset, build_schedule,
                      finite_diff_check, loss_ldm, loss_sage, make_denoiser,
                      make_world, sample_records, train)
from sagediff.model import normalize_embedding
from sagediff.training import SageLossConfig, TrainingGroup, soft_target

sched = build_schedule(1000)
rng = Rng(5)
den = make_denoiser(Rng(6), sched, data_dim=2, embed_dim=4, hidden_widths=(6, 5))

z = rng.gaussian(2)
c = normalize_embedding(rng.gaussian(4))
eps = rng.gaussian(2)
single = TrainingGroup(z[None, :], c[None, :])
cfg = SageLossConfig(t_star=700, lambda1=0.7, lambda2=3.0)
combined = loss_sage(den, single, eps, t_s=880, t_b=140, cfg=cfg)
two_terms = (cfg.lambda1 * loss_ldm(den, z, c, eps, 880).value
             + loss_ldm(den, z, c, eps, 140).value)
print(f"single-member group loss:  {combined.value:.12f}")
print(f"lam1*ldm(t_s) + ldm(t_b):  {two_terms:.12f}")
print(f"soft-target term: {combined.terms[1]} (vanishes for one member)")

frozen = soft_target(den, single, eps, 880)


def loss_fn(params):
    probe = make_denoiser(Rng(0), sched, 2, 4, hidden_widths=(6, 5))
    probe.params = params
    result = loss_sage(probe, single, eps, 880, 140, cfg, target=frozen)
    return result.value, result.grads


report = finite_diff_check(loss_fn, den.params, tolerance=1e-4)
print(f"gradient check vs central differences: max rel error {report.max_rel_error:.2e} "
      f"({'ok' if report.passed else 'FAILED'})")

world = make_world(Rng(40), n_meta=24, children_per_meta=3, embed_dim=8)
records = sample_records(Rng(41), world, per_concept=4)
dataset = build_grouped_dataset(records, 0.6, 0.9, target_groups=300)
config = ExperimentConfig(loss="sage", train_steps=1500, hidden_width=32,
                          embed_dim=8, checkpoint_every=0)
result = train(dataset, config, Rng(42))
curve = result.curve
print(f"trained {result.steps_completed} steps; batch loss "
      f"{curve[:25, 4].mean():.3f} -> {curve[-100:, 4].mean():.3f}")
print("terms at the end (shared / soft-target / branch):",
      np.round(curve[-100:, 1:4].mean(axis=0), 4))
