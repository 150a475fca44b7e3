"""Diffusion noise schedules.

A schedule is the per-step noise intensity sequence beta together with the
cumulative signal-retention products alpha_bar, indexed so that
``alpha_bars[0] == 1`` exactly and ``alpha_bars[n]`` covers steps 1..n.
Anchoring alpha_bar at 1 for step 0 makes the final reverse jump
well-defined (its coefficients degenerate to "output the current clean
estimate").

All arithmetic is float64 and monotonicity is enforced strictly (tolerance
zero). Schedules are immutable after construction and safe to share across
workers.

The default configuration (scaled-linear, T=1000, beta from 8.5e-4 to
1.2e-2) follows the convention widely used by pretrained latent diffusion
models; it is a convention, not a derived value, and every field is
configurable.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidRangeError, StepRangeError

KINDS = ("constant", "linear", "scaled_linear", "cosine")

# Wire identifiers for the bitstream container header.
KIND_IDS = {kind: i for i, kind in enumerate(KINDS)}
KIND_FROM_ID = {i: kind for kind, i in KIND_IDS.items()}

DEFAULT_KIND = "scaled_linear"
DEFAULT_T = 1000
DEFAULT_BETA_START = 0.00085
DEFAULT_BETA_END = 0.012

_COSINE_OFFSET = 0.008
_COSINE_BETA_MAX = 0.999


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = DEFAULT_KIND
    total_steps: int = DEFAULT_T
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END


@dataclass(frozen=True)
class Schedule:
    """Immutable noise schedule: betas has length T, alpha_bars length T+1."""

    kind: str
    total_steps: int
    betas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)

    def alpha_bar(self, n: int) -> float:
        """Cumulative product at step n, with step 0 pinned to 1."""
        if not 0 <= n <= self.total_steps:
            raise StepRangeError(f"step {n} outside 0..{self.total_steps}")
        return float(self.alpha_bars[n])

    def beta(self, n: int) -> float:
        """Per-step noise intensity at step n (1-based)."""
        if not 1 <= n <= self.total_steps:
            raise StepRangeError(f"step {n} outside 1..{self.total_steps}")
        return float(self.betas[n - 1])


def _beta_sequence(config: ScheduleConfig) -> np.ndarray:
    kind, t = config.kind, config.total_steps
    b0, b1 = float(config.beta_start), float(config.beta_end)
    if kind == "constant":
        return np.full(t, b0, dtype=np.float64)
    if kind == "linear":
        return np.linspace(b0, b1, t, dtype=np.float64)
    if kind == "scaled_linear":
        return np.linspace(math.sqrt(b0), math.sqrt(b1), t, dtype=np.float64) ** 2
    if kind == "cosine":
        # Squared-cosine alpha_bar ramp; betas derived from consecutive ratios.
        s = _COSINE_OFFSET
        steps = np.arange(t + 1, dtype=np.float64)
        bars = np.cos((steps / t + s) / (1 + s) * math.pi / 2) ** 2
        betas = 1.0 - bars[1:] / bars[:-1]
        return np.clip(betas, 0.0, _COSINE_BETA_MAX)
    raise InvalidRangeError(f"unknown schedule kind {kind!r}")


def build_schedule(config: ScheduleConfig) -> Schedule:
    """Construct a schedule, validating bounds and the type invariants."""
    if config.total_steps < 1:
        raise InvalidRangeError(f"total_steps must be >= 1, got {config.total_steps}")
    if not (0.0 < config.beta_start <= config.beta_end < 1.0):
        raise InvalidRangeError(
            f"need 0 < beta_start <= beta_end < 1, got "
            f"({config.beta_start}, {config.beta_end})"
        )
    if config.kind not in KINDS:
        raise InvalidRangeError(f"unknown schedule kind {config.kind!r}")

    betas = _beta_sequence(config)
    if not np.all((betas > 0.0) & (betas < 1.0)):
        raise InvalidRangeError("derived betas left (0, 1)")
    return schedule_from_betas(config.kind, betas)


def schedule_from_betas(kind: str, betas: np.ndarray) -> Schedule:
    """Build a schedule from an explicit beta sequence (bit-reproducible)."""
    betas = np.asarray(betas, dtype=np.float64).copy()
    alpha_bars = np.empty(len(betas) + 1, dtype=np.float64)
    alpha_bars[0] = 1.0
    np.cumprod(1.0 - betas, out=alpha_bars[1:])
    if np.any(np.diff(alpha_bars) >= 0.0):
        raise InvalidRangeError("alpha_bar sequence is not strictly decreasing")
    if alpha_bars[-1] <= 0.0:
        raise InvalidRangeError("alpha_bar underflowed to zero; schedule too long")
    betas.flags.writeable = False
    alpha_bars.flags.writeable = False
    return Schedule(kind=kind, total_steps=len(betas), betas=betas, alpha_bars=alpha_bars)


def sigma_n(schedule: Schedule, n: int, eta: float) -> float:
    """Reverse-step noise magnitude at step n.

    sigma_n = eta * sqrt((1 - abar_{n-1}) / (1 - abar_n))
                  * sqrt(1 - abar_n / abar_{n-1})

    Zero for eta = 0 and at n = 1 (where abar_0 = 1).
    """
    if not 1 <= n <= schedule.total_steps:
        raise StepRangeError(f"step {n} outside 1..{schedule.total_steps}")
    if eta < 0:
        raise InvalidRangeError(f"eta must be >= 0, got {eta}")
    return sigma_between(schedule, n - 1, n, eta)


def sigma_between(schedule: Schedule, prev: int, n: int, eta: float) -> float:
    """sigma for a (possibly subsampled) reverse transition n -> prev."""
    a_prev = schedule.alpha_bar(prev)
    a_n = schedule.alpha_bar(n)
    return eta * math.sqrt((1.0 - a_prev) / (1.0 - a_n)) * math.sqrt(1.0 - a_n / a_prev)


def dump_csv(schedule: Schedule) -> str:
    """CSV with columns (n, beta, alpha_bar) for n = 1..T."""
    out = io.StringIO()
    out.write("n,beta,alpha_bar\n")
    for n in range(1, schedule.total_steps + 1):
        out.write(f"{n},{float(schedule.betas[n - 1])!r},{float(schedule.alpha_bars[n])!r}\n")
    return out.getvalue()
