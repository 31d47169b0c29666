"""Transforms between raw policy outputs and environment actions.

Covers output normalization (with its backward pass, since it sits inside
the policy's computation graph), tanh squashing, the inverting-gradients
transform, clipping, and the saturation / entropy diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ActionBounds:
    """Per-dimension action box.

    ``low``/``high`` feed the inverting-gradients path and clipping; the
    symmetric half-range ``scale`` feeds tanh squashing.
    """

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.atleast_1d(np.asarray(self.low, dtype=np.float64))
        high = np.atleast_1d(np.asarray(self.high, dtype=np.float64))
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        if low.shape != high.shape:
            raise ValueError("low/high shape mismatch")
        if not np.all(low < high):
            raise ValueError("require low < high component-wise")

    @classmethod
    def symmetric(cls, scale: float | np.ndarray, dim: int) -> "ActionBounds":
        m = np.broadcast_to(np.asarray(scale, dtype=np.float64), (dim,)).copy()
        if not np.all(m > 0):
            raise ValueError("scale must be positive")
        return cls(low=-m, high=m)

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    @property
    def scale(self) -> np.ndarray:
        """Symmetric half-range M; only meaningful for tanh squashing."""
        m = (self.high - self.low) / 2.0
        center = (self.high + self.low) / 2.0
        if np.any(np.abs(center) > 1e-12 * np.maximum(m, 1.0)):
            raise ValueError("tanh squashing requires symmetric bounds")
        return m


@dataclass(frozen=True)
class NoiseConfig:
    """Gaussian stds for exploration and target smoothing."""

    sigma_explore: float = 0.29
    sigma_target: float = 0.29

    def __post_init__(self):
        if self.sigma_explore < 0 or self.sigma_target < 0:
            raise ValueError("noise stds must be nonnegative")


def normalize_output(mu: np.ndarray) -> np.ndarray:
    """Rescale a raw policy output when its mean magnitude exceeds one.

    With G the mean of |mu_k|: if G > 1 return mu / G, otherwise mu
    unchanged.  After the G > 1 branch the mean magnitude is nudged back
    below one if float rounding pushed it a few ulp over, so the
    "mean |mu_k| <= 1" postcondition holds exactly.  Works on a single
    vector or a batch (last axis is the action dimension).
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape[-1] == 0:
        raise ValueError("empty action vector")
    g = np.mean(np.abs(mu), axis=-1, keepdims=True)
    over = g > 1.0
    if not np.any(over):
        return mu.copy()
    out = np.where(over, mu / np.where(over, g, 1.0), mu)
    # ulp guard: division can round the mean magnitude to just above 1
    for _ in range(4):
        m = np.mean(np.abs(out), axis=-1, keepdims=True)
        bad = over & (m > 1.0)
        if not np.any(bad):
            break
        out = np.where(bad, out / np.where(bad, m, 1.0), out)
    return out


def normalize_output_vjp(mu: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Backward pass of normalize_output at primal ``mu``.

    On the G > 1 branch, n_i = mu_i / G with G = mean|mu_k| gives
    dL/dmu_j = v_j / G - (v . mu) sign(mu_j) / (K G^2); the subgradient of
    |.| at zero is taken as 0.  On the other branch the map is identity.
    """
    mu = np.asarray(mu, dtype=np.float64)
    v = np.asarray(grad_out, dtype=np.float64)
    k = mu.shape[-1]
    g = np.mean(np.abs(mu), axis=-1, keepdims=True)
    over = g > 1.0
    g_safe = np.where(over, g, 1.0)
    sign = np.sign(mu)
    vdotmu = np.sum(v * mu, axis=-1, keepdims=True)
    scaled = v / g_safe - vdotmu * sign / (k * g_safe * g_safe)
    return np.where(over, scaled, v)


def squash(mu: np.ndarray, noise: np.ndarray, bounds: ActionBounds) -> np.ndarray:
    """a = M * tanh(mu + noise); evaluation mode passes zero noise."""
    mu = np.asarray(mu, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if mu.shape != noise.shape:
        raise ValueError(f"mu shape {mu.shape} != noise shape {noise.shape}")
    return bounds.scale * np.tanh(mu + noise)


def squash_grad(u: np.ndarray, bounds: ActionBounds) -> np.ndarray:
    """d(M tanh u)/du, used to chain the policy objective through squash."""
    t = np.tanh(np.asarray(u, dtype=np.float64))
    return bounds.scale * (1.0 - t * t)


def invert_gradients(grad_p: np.ndarray, p: np.ndarray,
                     bounds: ActionBounds) -> np.ndarray:
    """Scale an ascent gradient on raw outputs by distance to the bounds.

    Components whose gradient points up are scaled by (high - p) / range,
    the rest by (p - low) / range.  For p inside the box both factors lie in
    [0, 1] and hit 0 exactly at the relevant boundary; callers clip p first,
    but out-of-box values produce a negative factor, i.e. the gradient
    inverts.
    """
    grad_p = np.asarray(grad_p, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    span = bounds.high - bounds.low
    factor = np.where(grad_p > 0, (bounds.high - p) / span, (p - bounds.low) / span)
    return grad_p * factor


def clip_action(a: np.ndarray, bounds: ActionBounds) -> np.ndarray:
    return np.clip(np.asarray(a, dtype=np.float64), bounds.low, bounds.high)


def saturation_fraction(actions: np.ndarray, bounds: ActionBounds,
                        near: float = 0.99) -> float:
    """Fraction of action components within ``near`` of the bound magnitude."""
    if not 0.0 < near < 1.0:
        raise ValueError("near must be in (0, 1)")
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    if actions.size == 0:
        raise ValueError("empty action batch")
    return float(np.mean(np.abs(actions) >= near * bounds.scale))


def _log_sech2(u: np.ndarray) -> np.ndarray:
    # log(1 - tanh^2 u) in a form stable for large |u|
    au = np.abs(u)
    return 2.0 * (np.log(2.0) - au - np.log1p(np.exp(-2.0 * au)))


def squashed_policy_entropy(mu: np.ndarray, sigma: float, bounds: ActionBounds,
                            n_samples: int, seed: int) -> float:
    """Monte-Carlo differential entropy of a = M tanh(u), u ~ N(mu, sigma^2 I).

    Change of variables gives H(a) = H(u) + E[sum_k log(M_k (1 - tanh^2 u_k))]
    with H(u) known in closed form; only the correction term is sampled.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    k = mu.shape[0]
    rng = np.random.Generator(np.random.PCG64(seed))
    u = mu + sigma * rng.standard_normal((n_samples, k))
    h_u = 0.5 * k * np.log(2.0 * np.pi * np.e * sigma * sigma)
    correction = np.sum(np.log(bounds.scale)) + np.sum(_log_sech2(u), axis=1)
    return float(h_u + np.mean(correction))
