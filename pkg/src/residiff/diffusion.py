"""Compression-aware residual diffusion: forward process, reverse sampler.

The forward process injects the compression residual (compressed minus clean
latent) into the marginal mean so that the noising endpoint coincides with a
noised version of the *compressed* latent rather than of the clean one:

    z_n = sqrt(abar_n) z0 + sqrt(1 - abar_n) (gain_n * (zc - z0) + eps_n)

with gain chosen so that at the endpoint step the z0 coefficient vanishes and
the zc coefficient equals sqrt(abar_endpoint). The reverse update is

    z_prev = zn_weight * z_n + z0_weight * z0_hat + sigma * eps

whose coefficients are pinned by a three-equation consistency system (mean
match on z0, variance match, residual-gain recursion). Two closed-form
solutions are supported: eta = 0 (deterministic) and eta = 1 (stochastic);
other eta values are rejected because the residual-gain recursion has no
published closed form off those two points.

Coefficients are scalars per step; latent operations broadcast elementwise,
so all functions accept arrays of any shape (including batches).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import InvalidRangeError, ShapeMismatchError, StepRangeError
from .schedule import Schedule, sigma_between

# Below this magnitude the clean-estimate denominator is treated as the
# endpoint singularity and the compressed latent is returned directly.
SINGULARITY_GUARD = 1e-8


class Denoiser(Protocol):
    def predict(self, z_n: np.ndarray, n: int, zc: np.ndarray) -> np.ndarray:
        """Noise prediction for the latent z_n at step n."""


@dataclass(frozen=True)
class ResidualPair:
    """Clean latent, compressed latent, and their residual (zc - z0)."""

    z0: np.ndarray
    zc: np.ndarray

    def __post_init__(self):
        z0 = np.asarray(self.z0, dtype=np.float64)
        zc = np.asarray(self.zc, dtype=np.float64)
        if z0.shape != zc.shape:
            raise ShapeMismatchError(f"z0 {z0.shape} vs zc {zc.shape}")
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "zc", zc)

    @property
    def residual(self) -> np.ndarray:
        return self.zc - self.z0


@dataclass(frozen=True)
class SamplerCoeffs:
    """Reverse-transition coefficients for one step n -> prev_step."""

    step: int
    prev_step: int
    endpoint_step: int
    eta: float
    zn_weight: float
    z0_weight: float
    sigma: float
    residual_gain: float
    residual_gain_prev: float


def _check_eta(eta: float) -> float:
    if eta not in (0, 1):
        raise InvalidRangeError(f"eta must be 0 or 1, got {eta}")
    return float(eta)


def _check_steps(schedule: Schedule, n: int, endpoint_step: int) -> None:
    if not 1 <= endpoint_step <= schedule.total_steps:
        raise StepRangeError(
            f"endpoint step {endpoint_step} outside 1..{schedule.total_steps}"
        )
    if not 1 <= n <= endpoint_step:
        raise StepRangeError(f"step {n} outside 1..{endpoint_step}")


def gamma(schedule: Schedule, endpoint_step: int, n: int, eta: float) -> float:
    """Residual gain at step n for the chosen sampling mode.

    Deterministic mode uses the step-independent endpoint ratio; stochastic
    mode scales it by the step's own noise-to-signal ratio. Both coincide at
    n = endpoint_step.
    """
    eta = _check_eta(eta)
    _check_steps(schedule, n, endpoint_step)
    a_end = schedule.alpha_bar(endpoint_step)
    if eta == 0.0:
        return math.sqrt(a_end) / math.sqrt(1.0 - a_end)
    a_n = schedule.alpha_bar(n)
    return (math.sqrt(1.0 - a_n) / math.sqrt(a_n)) * (a_end / (1.0 - a_end))


def _gamma_at(schedule: Schedule, endpoint_step: int, n: int, eta: float) -> float:
    """gamma extended to n = 0 (needed for transition targets)."""
    if n == 0:
        if eta == 0.0:
            a_end = schedule.alpha_bar(endpoint_step)
            return math.sqrt(a_end) / math.sqrt(1.0 - a_end)
        return 0.0
    return gamma(schedule, endpoint_step, n, eta)


def forward_mean_coeffs(
    schedule: Schedule, n: int, endpoint_step: int, eta: float
) -> tuple[float, float]:
    """(z0 coefficient, zc coefficient) of the forward marginal mean at step n.

    Expanding the residual gives mean = a*z0 + b*zc with
    a = sqrt(abar_n) - sqrt(1 - abar_n)*gain_n and b = sqrt(1 - abar_n)*gain_n.
    At n = endpoint_step, a = 0 and b = sqrt(abar_endpoint).
    """
    g = gamma(schedule, endpoint_step, n, eta)
    a_n = schedule.alpha_bar(n)
    b = math.sqrt(1.0 - a_n) * g
    return math.sqrt(a_n) - b, b


def forward_sample(
    pair: ResidualPair,
    n: int,
    endpoint_step: int,
    schedule: Schedule,
    eta: float,
    noise: np.ndarray,
) -> np.ndarray:
    """Draw z_n from the residual-shifted forward marginal with given noise."""
    eta = _check_eta(eta)
    _check_steps(schedule, n, endpoint_step)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != pair.z0.shape:
        raise ShapeMismatchError(f"noise {noise.shape} vs latent {pair.z0.shape}")
    g = gamma(schedule, endpoint_step, n, eta)
    a_n = schedule.alpha_bar(n)
    return math.sqrt(a_n) * pair.z0 + math.sqrt(1.0 - a_n) * (
        g * pair.residual + noise
    )


def endpoint_sample(
    zc: np.ndarray, endpoint_step: int, schedule: Schedule, noise: np.ndarray
) -> np.ndarray:
    """Denoising start point: zc noised to the endpoint step."""
    if not 1 <= endpoint_step <= schedule.total_steps:
        raise StepRangeError(
            f"endpoint step {endpoint_step} outside 1..{schedule.total_steps}"
        )
    zc = np.asarray(zc, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != zc.shape:
        raise ShapeMismatchError(f"noise {noise.shape} vs latent {zc.shape}")
    a = schedule.alpha_bar(endpoint_step)
    return math.sqrt(a) * zc + math.sqrt(1.0 - a) * noise


def reverse_coeffs(
    schedule: Schedule,
    n: int,
    endpoint_step: int,
    eta: float,
    prev: int | None = None,
) -> SamplerCoeffs:
    """Coefficients of the reverse transition from step n to ``prev``.

    ``prev`` defaults to n - 1; few-step sampling passes the next entry of
    its step list (0 for the final jump, which forces zn_weight = 0,
    z0_weight = 1, sigma = 0 for both modes).
    """
    eta = _check_eta(eta)
    _check_steps(schedule, n, endpoint_step)
    if prev is None:
        prev = n - 1
    if not 0 <= prev < n:
        raise StepRangeError(f"prev step {prev} must lie in 0..{n - 1}")

    a_prev = schedule.alpha_bar(prev)
    a_n = schedule.alpha_bar(n)
    if eta == 0.0:
        zn_w = math.sqrt(1.0 - a_prev) / math.sqrt(1.0 - a_n)
    else:
        zn_w = ((1.0 - a_prev) / (1.0 - a_n)) * (math.sqrt(a_n) / math.sqrt(a_prev))
    z0_w = math.sqrt(a_prev) - math.sqrt(a_n) * zn_w
    sig = sigma_between(schedule, prev, n, eta)
    return SamplerCoeffs(
        step=n,
        prev_step=prev,
        endpoint_step=endpoint_step,
        eta=eta,
        zn_weight=zn_w,
        z0_weight=z0_w,
        sigma=sig,
        residual_gain=gamma(schedule, endpoint_step, n, eta),
        residual_gain_prev=_gamma_at(schedule, endpoint_step, prev, eta),
    )


def recover_z0(
    z_n: np.ndarray,
    eps_hat: np.ndarray,
    zc: np.ndarray,
    n: int,
    endpoint_step: int,
    schedule: Schedule,
    eta: float,
) -> np.ndarray:
    """Invert the forward marginal to estimate the clean latent.

    z0 = (z_n - sqrt(1 - abar_n) * (gain_n * zc + eps)) /
         (sqrt(abar_n) - sqrt(1 - abar_n) * gain_n)

    The denominator vanishes exactly at n = endpoint_step; at the singularity
    (or within the guard band around it) the compressed latent is returned,
    which is the continuous extension of the endpoint branch.
    """
    eta = _check_eta(eta)
    _check_steps(schedule, n, endpoint_step)
    z_n = np.asarray(z_n, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    zc = np.asarray(zc, dtype=np.float64)
    if not (z_n.shape == eps_hat.shape == zc.shape):
        raise ShapeMismatchError(
            f"shapes differ: z_n {z_n.shape}, eps {eps_hat.shape}, zc {zc.shape}"
        )
    if n == endpoint_step:
        return zc.copy()
    g = gamma(schedule, endpoint_step, n, eta)
    a_n = schedule.alpha_bar(n)
    root_rem = math.sqrt(1.0 - a_n)
    denom = math.sqrt(a_n) - root_rem * g
    if abs(denom) < SINGULARITY_GUARD:
        return zc.copy()
    return (z_n - root_rem * (g * zc + eps_hat)) / denom


def make_step_list(endpoint_step: int, num_steps: int) -> list[int]:
    """Evenly spaced decreasing steps from the endpoint, ending at 1.

    The implicit final jump to step 0 is appended by the sampler itself.
    """
    if num_steps < 1:
        raise InvalidRangeError(f"num_steps must be >= 1, got {num_steps}")
    if num_steps >= endpoint_step:
        return list(range(endpoint_step, 0, -1))
    pts = np.linspace(endpoint_step, 1, num_steps)
    steps = sorted({int(round(p)) for p in pts}, reverse=True)
    return steps


def _validate_step_list(step_list: Sequence[int], endpoint_step: int) -> list[int]:
    steps = [int(s) for s in step_list]
    if not steps:
        raise StepRangeError("step_list is empty")
    if steps[0] != endpoint_step:
        raise StepRangeError(
            f"step_list must start at the endpoint step {endpoint_step}, "
            f"got {steps[0]}"
        )
    if any(b >= a for a, b in zip(steps, steps[1:])):
        raise StepRangeError(f"step_list must be strictly decreasing: {steps}")
    if steps[-1] < 1:
        raise StepRangeError("step_list entries must be >= 1")
    return steps


def sample(
    denoiser: Denoiser,
    zc: np.ndarray,
    endpoint_step: int,
    step_list: Sequence[int],
    eta: float,
    schedule: Schedule,
    noise_source: Callable[[tuple[int, ...]], np.ndarray] | np.random.Generator,
) -> np.ndarray:
    """Run the reverse sampler from the compressed latent.

    Starts at endpoint_sample(zc) with one draw from ``noise_source``, then
    for each step n in ``step_list`` computes the clean estimate (zc itself
    at the endpoint step, the marginal inverse elsewhere) and applies the
    reverse transition toward the next entry; the last entry jumps to 0,
    whose coefficients force the output to equal the final clean estimate.

    The sampler keeps a single coefficient system: the deterministic
    transition weights and the constant residual gain in the clean-estimate
    inverse, with eta only scaling the injected noise (the noise term
    vanishes at the final jump in both modes). The mode-dependent gain and
    the exactly variance-matched stochastic weights remain available through
    gamma and reverse_coeffs for consistency analysis.

    With eta = 0 the run consumes exactly one noise draw and is a pure
    function of (zc, that draw, step_list).
    """
    eta = _check_eta(eta)
    zc = np.asarray(zc, dtype=np.float64)
    steps = _validate_step_list(step_list, endpoint_step)

    if isinstance(noise_source, np.random.Generator):
        rng = noise_source
        draw = lambda shape: rng.standard_normal(shape)
    else:
        draw = noise_source

    z = endpoint_sample(zc, endpoint_step, schedule, np.asarray(draw(zc.shape)))
    targets = list(steps[1:]) + [0]
    for n, prev in zip(steps, targets):
        if n == endpoint_step:
            z0_hat = zc
        else:
            eps_hat = np.asarray(denoiser.predict(z, n, zc), dtype=np.float64)
            if eps_hat.shape != z.shape:
                raise ShapeMismatchError(
                    f"denoiser returned {eps_hat.shape}, expected {z.shape}"
                )
            z0_hat = recover_z0(z, eps_hat, zc, n, endpoint_step, schedule, 0.0)
        c = reverse_coeffs(schedule, n, endpoint_step, 0.0, prev=prev)
        z = c.zn_weight * z + c.z0_weight * z0_hat
        if eta > 0.0:
            sig = sigma_between(schedule, prev, n, eta)
            if sig > 0.0:
                z = z + sig * np.asarray(draw(zc.shape))
    if not np.all(np.isfinite(z)):
        raise InvalidRangeError("sampler produced non-finite values")
    return z


def loss_weight(
    schedule: Schedule, n: int, endpoint_step: int, eta: float = 0.0
) -> float:
    """Squared per-step weight of the noise-prediction training loss.

    (z0_weight_n * sqrt(1 - abar_n) / (sqrt(abar_n) - sqrt(1 - abar_n) * gain_n))^2

    Zero at the endpoint step, where the clean estimate is pinned to zc and
    the prediction does not enter the transition.
    """
    eta = _check_eta(eta)
    _check_steps(schedule, n, endpoint_step)
    if n == endpoint_step:
        return 0.0
    g = gamma(schedule, endpoint_step, n, eta)
    a_n = schedule.alpha_bar(n)
    root_rem = math.sqrt(1.0 - a_n)
    denom = math.sqrt(a_n) - root_rem * g
    if abs(denom) < SINGULARITY_GUARD:
        return 0.0
    c = reverse_coeffs(schedule, n, endpoint_step, eta)
    return (c.z0_weight * root_rem / denom) ** 2
