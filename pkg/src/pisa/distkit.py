"""Distribution of dropping times for an object seen at a fixed image height.

With depth uniform on ``[Z_min, Z_max]`` and the object's bottom on the ray
``Y = h_offset + beta * Z``, the drop time ``t = sqrt(2 Y / g)`` has density
``g t / ((Z_max - Z_min) beta)`` on ``[t_min, t_max]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnsupportedRayError, ValidationError
from .rng import make_rng

KS_TERM_TOL = 1e-12


@dataclass(frozen=True)
class DropTimeDistribution:
    beta: float
    h_offset: float
    Z_min: float = 2.0
    Z_max: float = 18.0
    g: float = 9.81

    def __post_init__(self):
        if not self.beta > 0:
            raise UnsupportedRayError(f"ray slope must be positive, got beta={self.beta}")
        if not self.Z_max > self.Z_min > 0:
            raise ValidationError("need Z_max > Z_min > 0")
        if not self.height(self.Z_min) > 0:
            raise ValidationError("drop height at Z_min is not positive")

    def height(self, Z):
        return self.h_offset + self.beta * np.asarray(Z, dtype=float)

    @property
    def t_min(self) -> float:
        return math.sqrt(2.0 * float(self.height(self.Z_min)) / self.g)

    @property
    def t_max(self) -> float:
        return math.sqrt(2.0 * float(self.height(self.Z_max)) / self.g)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.t_min) & (t <= self.t_max)
        out = np.where(inside, self.g * t / ((self.Z_max - self.Z_min) * self.beta), 0.0)
        return out if out.ndim else float(out)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        Z = (self.g * t**2 / 2.0 - self.h_offset) / self.beta
        out = np.clip((Z - self.Z_min) / (self.Z_max - self.Z_min), 0.0, 1.0)
        out = np.where(t < 0, 0.0, out)
        return out if out.ndim else float(out)

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        Z = self.Z_min + q * (self.Z_max - self.Z_min)
        out = np.sqrt(2.0 * self.height(Z) / self.g)
        return out if out.ndim else float(out)

    def sample(self, n: int, rng_seed=0) -> np.ndarray:
        """Exact draws: push uniform depths through the drop-time map."""
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else make_rng(rng_seed)
        Z = rng.uniform(self.Z_min, self.Z_max, size=n)
        return np.sqrt(2.0 * self.height(Z) / self.g)


def quantize(times, fps: float, n_frames: int = 32) -> np.ndarray:
    """Frame bin ``floor(t * fps)`` of each time, clamped to the clip's frames."""
    t = np.asarray(times, dtype=float)
    if not fps > 0:
        raise DomainError("fps must be positive")
    if np.any(t < 0):
        raise DomainError("times must be non-negative")
    return np.clip(np.floor(t * fps), 0, n_frames - 1).astype(int)


def kolmogorov_sf(lam: float) -> float:
    """``Q_KS(lam) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2)``."""
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        # the alternating series converges slowly here; use the equivalent theta-function form
        s = 0.0
        k = 1
        c = math.pi**2 / (8.0 * lam * lam)
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * c)
            s += term
            if term < KS_TERM_TOL:
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * s))
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < KS_TERM_TOL:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pooled = np.concatenate([a, b])
    Fa = np.searchsorted(a, pooled, side="right") / a.size
    Fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value."""
    n, m = len(a), len(b)
    if n < 8 or m < 8:
        raise ValidationError(f"KS test needs at least 8 values per sample, got {n} and {m}")
    D = ks_statistic(a, b)
    ne = n * m / (n + m)
    sq = math.sqrt(ne)
    return D, kolmogorov_sf((sq + 0.12 + 0.11 / sq) * D)


def misalignment_experiment(
    d: DropTimeDistribution,
    observed_times,
    fps: float = 16,
    n_frames: int = 32,
    n_mc: int = 1000,
    rng_seed=0,
) -> tuple[float, float]:
    """KS test of observed drop times against frame-quantized Monte Carlo truth."""
    observed = np.asarray(observed_times, dtype=float)
    if observed.size < 8:
        raise ValidationError("need at least 8 observed drop times")
    truth = quantize(d.sample(n_mc, rng_seed), fps, n_frames)
    model = quantize(observed, fps, n_frames)
    return ks_two_sample(model.astype(float), truth.astype(float))


def cdf_curves(
    d: DropTimeDistribution, observed_times, fps: float = 16, n_frames: int = 32, n_points: int = 257
) -> dict:
    """Plot-ready CDFs on a shared time grid over the clip.

    ``F_model`` is the empirical CDF of the observed times quantized to bin
    start times; ``F_truth_quantized`` is the exact CDF of the quantized truth.
    """
    t = np.linspace(0.0, n_frames / fps, n_points)
    model = np.sort(quantize(observed_times, fps, n_frames) / fps)
    F_model = np.searchsorted(model, t, side="right") / model.size
    k = np.clip(np.floor(t * fps), 0, n_frames - 1)
    F_q = np.where(k >= n_frames - 1, 1.0, d.cdf((k + 1) / fps))
    return {"t": t, "F_model": F_model, "F_truth": d.cdf(t), "F_truth_quantized": F_q}
