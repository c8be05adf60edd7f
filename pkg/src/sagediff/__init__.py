"""Shared diffusion sampling at desk scale.

Semantically similar prompts share the early part of a deterministic
denoising trajectory under their centroid condition, then branch per prompt;
a hybrid training loss keeps quality intact under that sharing. Everything
runs on a synthetic low-dimensional concept world where ground truth is
known in closed form.
"""

from .config import ExperimentConfig, config_hash, load_config
from .data import (GroupedDataset, OracleWorld, WorldGenerationError,
                   build_grouped_dataset, make_world, sample_records)
from .grouping import (PromptGroup, SimilarityGraph, build_graph, cosine,
                       enumerate_cliques, greedy_partition)
from .metrics import (GaussianFit, MetricsReport, alignment_score, diversity,
                      evaluate, fit_gaussian, frechet_distance)
from .model import Denoiser, centroid, load_checkpoint, make_denoiser, save_checkpoint
from .numerics import (DenoiserParams, DivergenceError, Rng, adamw_step,
                       finite_diff_check, init_params, mlp_backward, mlp_forward)
from .sampling import (CostReport, OracleDenoiser, SampleTrace, ddim_trajectory,
                       run_batch, sample_independent, sample_shared)
from .schedule import (NoiseSchedule, SamplingGrid, build_grid, build_schedule,
                       ddim_step, forward_sample)
from .training import SageLossConfig, TrainingGroup, loss_ldm, loss_sage, train

__version__ = "0.1.0"
