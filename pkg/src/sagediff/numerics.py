"""Deterministic numerics: seeded random streams, a small dense MLP with
hand-written reverse-mode gradients, an AdamW optimizer, and a
finite-difference gradient checker.

Everything runs in float64. All operations are pure functions of their
inputs and the explicit Rng state, so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.random import Generator, Philox

MASK64 = (1 << 64) - 1


class DivergenceError(RuntimeError):
    """Raised when non-finite values reach an optimizer step."""


class Rng:
    """Counter-based random stream addressed by (seed, stream).

    Backed by Philox-4x64 keyed directly with the pair, so the mixing
    function from master seed to stream is the Philox key schedule itself:
    distinct stream ids under one seed give independent sequences, and the
    same pair reproduces the same sequence on any platform. Gaussian draws
    are counted (`gaussian_calls`, `gaussian_values`) so callers can audit
    noise consumption.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream) & MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = Generator(Philox(key=key))
        self.gaussian_calls = 0
        self.gaussian_values = 0

    def gaussian(self, n: int) -> np.ndarray:
        """n independent standard-normal draws, advancing the stream."""
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        self.gaussian_calls += 1
        self.gaussian_values += int(n)
        return self._gen.standard_normal(int(n))

    def uniform(self) -> float:
        """One draw from U[0, 1)."""
        return float(self._gen.random())

    def integers(self, low: int, high: int, size: int | None = None):
        """Integer draws from [low, high), numpy half-open convention."""
        out = self._gen.integers(int(low), int(high), size=size)
        return int(out) if size is None else out

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n)."""
        return self._gen.permutation(int(n))

    def substream(self, offset: int) -> "Rng":
        """Fresh stream at (seed, stream + offset); the caller owns the
        convention that offsets do not collide."""
        return Rng(self.seed, (self.stream + offset) & MASK64)

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream})"


# ---------------------------------------------------------------------------
# MLP with explicit tape and reverse-mode gradients


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "silu": (silu, silu_grad),
}


@dataclass
class DenoiserParams:
    """Weights and biases of a fully connected network.

    weights[i] has shape (fan_in, fan_out); the hidden layers use the named
    smooth activation, the last layer is linear. Adjacent shapes must
    compose.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "silu"

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        if not self.weights:
            raise ValueError("need at least one layer")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} does not match {w.shape}")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i - 1}->{i} shapes do not compose")

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_width(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "DenoiserParams":
        return DenoiserParams([w.copy() for w in self.weights],
                              [b.copy() for b in self.biases], self.activation)

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and \
            all(np.isfinite(b).all() for b in self.biases)


def init_params(rng: Rng, widths: Sequence[int], activation: str = "silu") -> DenoiserParams:
    """Fresh parameters for layer widths [in, h1, ..., out]; W ~ N(0, 1/fan_in), b = 0."""
    if len(widths) < 2:
        raise ValueError("widths must list at least input and output")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = rng.gaussian(fan_in * fan_out).reshape(fan_in, fan_out) / np.sqrt(fan_in)
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return DenoiserParams(weights, biases, activation)


@dataclass
class ParamGrads:
    """Gradient holder mirroring DenoiserParams layout."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @staticmethod
    def zeros_like(params: DenoiserParams) -> "ParamGrads":
        return ParamGrads([np.zeros_like(w) for w in params.weights],
                          [np.zeros_like(b) for b in params.biases])

    def add_scaled(self, other: "ParamGrads", scale: float = 1.0) -> None:
        for a, b in zip(self.weights, other.weights):
            a += scale * b
        for a, b in zip(self.biases, other.biases):
            a += scale * b

    def scale(self, factor: float) -> None:
        for w in self.weights:
            w *= factor
        for b in self.biases:
            b *= factor

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and \
            all(np.isfinite(b).all() for b in self.biases)


def mlp_forward(params: DenoiserParams, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Evaluate the network on x of shape (in,) or (batch, in).

    Returns (output, tape); the tape holds each layer's input and
    pre-activation, enough for an exact reverse pass.
    """
    act, _ = ACTIVATIONS[params.activation]
    squeeze = x.ndim == 1
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if h.shape[1] != params.input_width:
        raise ValueError(f"input width {h.shape[1]} != expected {params.input_width}")
    tape = []
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        pre = h @ w + b
        tape.append((h, pre))
        h = act(pre) if i < last else pre
    return (h[0] if squeeze else h), tape


def mlp_backward(params: DenoiserParams, tape: list, dy: np.ndarray) -> ParamGrads:
    """Exact reverse-mode gradients given the forward tape and d(scalar)/d(output)."""
    _, dact = ACTIVATIONS[params.activation]
    d = np.atleast_2d(np.asarray(dy, dtype=np.float64))
    grads = ParamGrads.zeros_like(params)
    last = params.n_layers - 1
    for i in range(last, -1, -1):
        h_in, pre = tape[i]
        if i < last:
            d = d * dact(pre)
        grads.weights[i][...] = h_in.T @ d
        grads.biases[i][...] = d.sum(axis=0)
        if i > 0:
            d = d @ params.weights[i].T
    return grads


# ---------------------------------------------------------------------------
# AdamW


@dataclass
class AdamState:
    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0


def init_adam_state(params: DenoiserParams) -> AdamState:
    return AdamState([np.zeros_like(w) for w in params.weights],
                     [np.zeros_like(b) for b in params.biases],
                     [np.zeros_like(w) for w in params.weights],
                     [np.zeros_like(b) for b in params.biases])


def adamw_step(params: DenoiserParams, grads: ParamGrads, state: AdamState,
               lr: float, weight_decay: float = 0.0,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
               ) -> tuple[DenoiserParams, AdamState]:
    """One decoupled-weight-decay Adam update; returns fresh params and state.

    Rejects non-finite gradients with DivergenceError instead of poisoning
    the parameters.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    if not grads.all_finite():
        raise DivergenceError("non-finite gradient; step rejected")
    t = state.step + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t

    def update(p, g, m, v):
        m_new = beta1 * m + (1.0 - beta1) * g
        v_new = beta2 * v + (1.0 - beta2) * g * g
        step = (m_new / c1) / (np.sqrt(v_new / c2) + eps)
        p_new = p - lr * (step + weight_decay * p)
        return p_new, m_new, v_new

    new_w, new_b = [], []
    new_state = AdamState([], [], [], [], step=t)
    for p, g, m, v in zip(params.weights, grads.weights, state.m_weights, state.v_weights):
        p2, m2, v2 = update(p, g, m, v)
        new_w.append(p2)
        new_state.m_weights.append(m2)
        new_state.v_weights.append(v2)
    for p, g, m, v in zip(params.biases, grads.biases, state.m_biases, state.v_biases):
        p2, m2, v2 = update(p, g, m, v)
        new_b.append(p2)
        new_state.m_biases.append(m2)
        new_state.v_biases.append(v2)
    out = DenoiserParams(new_w, new_b, params.activation)
    if not out.all_finite():
        raise DivergenceError("non-finite parameters after step")
    return out, new_state


# ---------------------------------------------------------------------------
# Finite-difference gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: str
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _flatten(params: DenoiserParams) -> np.ndarray:
    parts = [w.ravel() for w in params.weights] + [b.ravel() for b in params.biases]
    return np.concatenate(parts)


def _unflatten(flat: np.ndarray, like: DenoiserParams) -> DenoiserParams:
    weights, biases = [], []
    k = 0
    for w in like.weights:
        weights.append(flat[k:k + w.size].reshape(w.shape).copy())
        k += w.size
    for b in like.biases:
        biases.append(flat[k:k + b.size].reshape(b.shape).copy())
        k += b.size
    return DenoiserParams(weights, biases, like.activation)


def finite_diff_check(loss_fn: Callable[[DenoiserParams], tuple[float, ParamGrads]],
                      params: DenoiserParams, tolerance: float,
                      step: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients against central differences, coordinate by
    coordinate.

    loss_fn must be deterministic given params and return (value, grads).
    Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator so
    near-zero coordinates do not divide by zero.
    """
    _, grads = loss_fn(params)
    analytic = _flatten(DenoiserParams(grads.weights, grads.biases, params.activation))
    base = _flatten(params)
    worst_err, worst_idx = 0.0, -1
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] = base[i] + step
        hi, _ = loss_fn(_unflatten(bumped, params))
        bumped[i] = base[i] - step
        lo, _ = loss_fn(_unflatten(bumped, params))
        numeric = (hi - lo) / (2.0 * step)
        err = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), 1e-6)
        if err > worst_err:
            worst_err, worst_idx = err, i
    return GradCheckReport(worst_err, f"coordinate {worst_idx}", tolerance)
