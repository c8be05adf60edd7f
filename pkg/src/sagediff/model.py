"""Conditional noise predictor: a small MLP over [latent; time features;
concept embedding], classifier-free guidance, condition centroids, and
checkpoint serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numerics import DenoiserParams, init_params, mlp_forward, Rng
from .schedule import NoiseSchedule, build_schedule

CHECKPOINT_MAGIC = "SAGE-CKPT-1"
N_TIME_FREQS = 8
TIME_FEATURE_WIDTH = 2 * N_TIME_FREQS


def normalize_embedding(values: np.ndarray) -> np.ndarray:
    """Scale a vector to unit Euclidean norm."""
    v = np.asarray(values, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / n


def centroid(embeddings) -> np.ndarray:
    """Arithmetic mean of condition vectors; deliberately NOT re-normalized,
    so the shared condition of a group lies inside the unit ball."""
    arr = np.asarray(embeddings, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("need a non-empty list of equal-length embeddings")
    return arr.mean(axis=0)


def time_features(t, t_train: int) -> np.ndarray:
    """Sinusoidal features of t / t_train at N_TIME_FREQS octave frequencies.

    Accepts a scalar (returns (16,)) or an array of timesteps (returns
    (k, 16)).
    """
    u = np.asarray(t, dtype=np.float64) / t_train
    freqs = np.pi * (2.0 ** np.arange(N_TIME_FREQS))
    angles = np.multiply.outer(u, freqs)
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


@dataclass
class PiecewiseOmega:
    """Time-varying guidance profile: piecewise constant over timesteps.

    `breaks` holds (threshold, value) pairs sorted by descending threshold;
    the value of the first pair whose threshold is >= t applies, the
    `default` below the last threshold.
    """

    breaks: list[tuple[int, float]]
    default: float

    def at(self, t: int) -> float:
        for threshold, value in self.breaks:
            if t >= threshold:
                return value
        return self.default


def omega_at(omega, t: int) -> float:
    """Resolve a guidance scale that is either a constant or a profile."""
    return omega.at(t) if isinstance(omega, PiecewiseOmega) else float(omega)


@dataclass
class Denoiser:
    """Noise prediction network eps(z_t, t, c) with classifier-free guidance.

    Inputs are concatenated as [z_t ; time features ; c]; the null condition
    is the all-zeros embedding.
    """

    params: DenoiserParams
    schedule: NoiseSchedule
    data_dim: int
    embed_dim: int

    def __post_init__(self):
        expected = self.data_dim + TIME_FEATURE_WIDTH + self.embed_dim
        if self.params.input_width != expected:
            raise ValueError(f"params expect input width {self.params.input_width}, "
                             f"layout needs {expected}")
        if self.params.output_width != self.data_dim:
            raise ValueError("network output width must equal the data dimension")

    @property
    def null_condition(self) -> np.ndarray:
        return np.zeros(self.embed_dim)

    def features(self, z_t: np.ndarray, t: int, c: np.ndarray) -> np.ndarray:
        """Network input rows [z_t ; time features ; c], always 2-D."""
        z = np.atleast_2d(np.asarray(z_t, dtype=np.float64))
        if z.shape[1] != self.data_dim:
            raise ValueError(f"latent width {z.shape[1]} != data dim {self.data_dim}")
        cond = np.atleast_2d(np.asarray(c, dtype=np.float64))
        if cond.shape[1] != self.embed_dim:
            raise ValueError(f"condition width {cond.shape[1]} != embed dim {self.embed_dim}")
        if cond.shape[0] == 1 and z.shape[0] > 1:
            cond = np.broadcast_to(cond, (z.shape[0], self.embed_dim))
        tf = np.broadcast_to(time_features(t, self.schedule.t_train), (z.shape[0], TIME_FEATURE_WIDTH))
        return np.concatenate([z, tf, cond], axis=1)

    def predict(self, z_t: np.ndarray, t: int, c: np.ndarray) -> np.ndarray:
        """Conditional noise prediction; batched when z_t is (k, d)."""
        squeeze = np.asarray(z_t).ndim == 1
        out, _ = mlp_forward(self.params, self.features(z_t, t, c))
        return out[0] if squeeze else out

    def predict_cfg(self, z_t: np.ndarray, t: int, c: np.ndarray, omega) -> np.ndarray:
        """Guided prediction: uncond + omega * (cond - uncond).

        omega = 1 collapses to the conditional prediction, omega = 0 to the
        unconditional one. Conditional and unconditional rows are evaluated
        in one stacked forward pass.
        """
        w = omega_at(omega, t)
        if w < 0:
            raise ValueError("guidance scale must be >= 0")
        squeeze = np.asarray(z_t).ndim == 1
        z = np.atleast_2d(np.asarray(z_t, dtype=np.float64))
        cond = np.atleast_2d(np.asarray(c, dtype=np.float64))
        if cond.shape[0] == 1 and z.shape[0] > 1:
            cond = np.broadcast_to(cond, (z.shape[0], self.embed_dim))
        k = z.shape[0]
        stacked_c = np.vstack([np.zeros((k, self.embed_dim)), cond])
        inputs = self.features(np.vstack([z, z]), t, stacked_c)
        out, _ = mlp_forward(self.params, inputs)
        uncond, conditional = out[:k], out[k:]
        guided = uncond + w * (conditional - uncond)
        return guided[0] if squeeze else guided


def make_denoiser(rng: Rng, schedule: NoiseSchedule, data_dim: int, embed_dim: int,
                  hidden_widths=(64, 64), activation: str = "silu") -> Denoiser:
    widths = [data_dim + TIME_FEATURE_WIDTH + embed_dim, *hidden_widths, data_dim]
    return Denoiser(init_params(rng, widths, activation), schedule, data_dim, embed_dim)


def save_checkpoint(path, denoiser: Denoiser, config_hash: str,
                    schedule_kind: str = "linear") -> None:
    """Versioned text checkpoint; floats round-trip bit-exactly via repr."""
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "config_hash": config_hash,
        "schedule_kind": schedule_kind,
        "t_train": denoiser.schedule.t_train,
        "data_dim": denoiser.data_dim,
        "embed_dim": denoiser.embed_dim,
        "activation": denoiser.params.activation,
        "weights": [w.tolist() for w in denoiser.params.weights],
        "biases": [b.tolist() for b in denoiser.params.biases],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path) -> tuple[Denoiser, str]:
    """Load a checkpoint; returns (denoiser, config_hash)."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"not a {CHECKPOINT_MAGIC} checkpoint: {path}")
    params = DenoiserParams([np.array(w, dtype=np.float64) for w in payload["weights"]],
                            [np.array(b, dtype=np.float64) for b in payload["biases"]],
                            payload["activation"])
    sched = build_schedule(payload["t_train"], payload["schedule_kind"])
    den = Denoiser(params, sched, payload["data_dim"], payload["embed_dim"])
    return den, payload["config_hash"]
