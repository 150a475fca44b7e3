"""Pluggable noise predictors for the reverse sampler.

Three families:

* verification oracles: a recorded per-step noise table, and an exact oracle
  that knows the true (clean, compressed) pair and returns the noise implied
  by the current trajectory state, which steers the sampler back to the
  clean latent to rounding accuracy;
* a closed-form Gaussian-world predictor: under a Gaussian prior on the
  clean latent and additive Gaussian quantization noise, the posterior mean
  given (z_n, zc) is a linear combination whose coefficients follow from
  joint-Gaussian conditioning, and the implied noise is the forward-marginal
  inverse of that mean;
* a small fully connected network trained by plain gradient descent on the
  noise-prediction objective, with optional per-step weighting and an
  optional clean-estimate distortion term.

The network is deliberately simple (tanh activations, no adaptive optimizer)
so that analytic gradients can be validated against central differences.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diffusion import (
    ResidualPair,
    forward_mean_coeffs,
    forward_sample,
    gamma,
    loss_weight,
)
from .errors import DenoiserError, InvalidRangeError, ShapeMismatchError
from .schedule import Schedule


class RecordedNoiseDenoiser:
    """Replays a per-step noise table; deterministic by construction."""

    kind = "oracle"

    def __init__(self, table: dict[int, np.ndarray]):
        self.table = {int(n): np.asarray(e, dtype=np.float64) for n, e in table.items()}

    def predict(self, z_n: np.ndarray, n: int, zc: np.ndarray) -> np.ndarray:
        if n not in self.table:
            raise DenoiserError(f"no recorded noise for step {n}")
        eps = self.table[n]
        if eps.shape != np.shape(z_n):
            raise ShapeMismatchError(f"recorded noise {eps.shape} vs z_n {np.shape(z_n)}")
        return eps.copy()


class ExactNoiseDenoiser:
    """Returns the noise implied by the true clean latent at the current state.

    For a genuine forward sample this is exactly the noise that was drawn; fed
    to the sampler it makes every clean estimate equal the true clean latent.
    """

    kind = "oracle"

    def __init__(
        self,
        pair: ResidualPair,
        schedule: Schedule,
        endpoint_step: int,
        eta: float,
    ):
        self.pair = pair
        self.schedule = schedule
        self.endpoint_step = endpoint_step
        self.eta = eta

    def predict(self, z_n: np.ndarray, n: int, zc: np.ndarray) -> np.ndarray:
        a, b = forward_mean_coeffs(self.schedule, n, self.endpoint_step, self.eta)
        c = math.sqrt(1.0 - self.schedule.alpha_bar(n))
        return (z_n - a * self.pair.z0 - b * zc) / c


class ZeroDenoiser:
    """Predicts zero noise everywhere (a deliberately weak baseline)."""

    kind = "zero"

    def predict(self, z_n: np.ndarray, n: int, zc: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(z_n, dtype=np.float64))


class PerturbedDenoiser:
    """Wraps a predictor with seeded additive prediction error.

    Models an imperfect network: real predictors never return the exact
    posterior-implied noise, and their residual error is what makes long
    denoising runs costly when the compressed latent is already accurate.
    """

    kind = "perturbed"

    def __init__(self, inner, error_std: float, rng: np.random.Generator):
        if error_std < 0:
            raise InvalidRangeError(f"error_std must be >= 0, got {error_std}")
        self.inner = inner
        self.error_std = float(error_std)
        self.rng = rng

    def predict(self, z_n: np.ndarray, n: int, zc: np.ndarray) -> np.ndarray:
        eps = self.inner.predict(z_n, n, zc)
        if self.error_std == 0.0:
            return eps
        return eps + self.error_std * self.rng.standard_normal(np.shape(eps))


class GaussianAnalyticDenoiser:
    """Posterior-mean predictor for the linear-Gaussian world.

    Model: z0 ~ N(prior_mean, prior_var I), zc = z0 + q with
    q ~ N(0, quant_var I), and z_n from the residual-shifted forward marginal.
    The posterior mean E[z0 | z_n, zc] is linear; prediction returns the noise
    whose marginal inverse equals that mean.
    """

    kind = "gaussian_analytic"

    def __init__(
        self,
        prior_mean: float,
        prior_var: float,
        quant_var: float,
        schedule: Schedule,
        endpoint_step: int,
        eta: float,
    ):
        if prior_var <= 0 or quant_var < 0:
            raise InvalidRangeError("prior_var must be > 0 and quant_var >= 0")
        self.prior_mean = float(prior_mean)
        self.prior_var = float(prior_var)
        self.quant_var = float(quant_var)
        self.schedule = schedule
        self.endpoint_step = endpoint_step
        self.eta = eta

    def posterior_coeffs(self, n: int) -> tuple[float, float, float]:
        """(weight on z_n, weight on zc, constant) of E[z0 | z_n, zc]."""
        a, b = forward_mean_coeffs(self.schedule, n, self.endpoint_step, self.eta)
        c_sq = 1.0 - self.schedule.alpha_bar(n)
        if self.quant_var == 0.0:
            return 0.0, 1.0, 0.0
        v1 = 1.0 / (1.0 / self.prior_var + 1.0 / self.quant_var)
        k = a * v1 / (a * a * v1 + c_sq)
        w_zc = (1.0 - k * a) * (v1 / self.quant_var) - k * b
        const = (1.0 - k * a) * (v1 / self.prior_var) * self.prior_mean
        return k, w_zc, const

    def clean_estimate(self, z_n: np.ndarray, n: int, zc: np.ndarray) -> np.ndarray:
        w_zn, w_zc, const = self.posterior_coeffs(n)
        return w_zn * np.asarray(z_n) + w_zc * np.asarray(zc) + const

    def predict(self, z_n: np.ndarray, n: int, zc: np.ndarray) -> np.ndarray:
        a, b = forward_mean_coeffs(self.schedule, n, self.endpoint_step, self.eta)
        c = math.sqrt(1.0 - self.schedule.alpha_bar(n))
        z0_hat = self.clean_estimate(z_n, n, zc)
        return (np.asarray(z_n) - a * z0_hat - b * np.asarray(zc)) / c


@dataclass
class TrainConfig:
    """Hyperparameters of the gradient-descent training loop.

    The perceptual weight is accepted for interface completeness but must be
    zero: no perceptual metric exists at this scale.
    """

    learning_rate: float = 0.05
    steps: int = 500
    batch: int = 16
    lambda_r: float = 0.0
    lambda_d: float = 0.0
    lambda_p: float = 0.0
    use_omega_weights: bool = False

    def __post_init__(self):
        if self.lambda_p != 0.0:
            raise InvalidRangeError("lambda_p must be 0: perceptual loss unsupported")
        if self.learning_rate < 0 or self.steps < 1 or self.batch < 1:
            raise InvalidRangeError("learning_rate >= 0, steps >= 1, batch >= 1 required")


def step_embedding(n: int, dim: int, max_steps: int = 10_000) -> np.ndarray:
    """Sinusoidal embedding of a step index (dim must be even)."""
    half = dim // 2
    freqs = max_steps ** (-np.arange(half) / max(half, 1))
    ang = n * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


class MlpDenoiser:
    """Two-hidden-layer tanh network over [z_n, zc, step embedding, condition]."""

    kind = "mlp"

    def __init__(
        self,
        latent_dim: int,
        hidden: int = 64,
        embed_dim: int = 8,
        condition: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
    ):
        if embed_dim % 2:
            raise InvalidRangeError("embed_dim must be even")
        rng = rng or np.random.default_rng(0)
        self.latent_dim = int(latent_dim)
        self.embed_dim = int(embed_dim)
        self.condition = (
            np.zeros(0) if condition is None else np.asarray(condition, dtype=np.float64)
        )
        in_dim = 2 * self.latent_dim + self.embed_dim + self.condition.size
        sizes = [in_dim, hidden, hidden, self.latent_dim]
        self.weights = [
            rng.standard_normal((o, i)) / math.sqrt(i)
            for i, o in zip(sizes[:-1], sizes[1:])
        ]
        self.biases = [np.zeros(o) for o in sizes[1:]]

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def _input(self, z_n, n, zc, cond) -> np.ndarray:
        z_n = np.asarray(z_n, dtype=np.float64)
        zc = np.asarray(zc, dtype=np.float64)
        if z_n.shape[-1] != self.latent_dim or zc.shape != z_n.shape:
            raise ShapeMismatchError(
                f"expected trailing dim {self.latent_dim}, got z_n {z_n.shape}, zc {zc.shape}"
            )
        emb = step_embedding(n, self.embed_dim)
        cond = self.condition if cond is None else np.asarray(cond, dtype=np.float64)
        if cond.size != self.condition.size:
            raise ShapeMismatchError(
                f"condition length {cond.size} != configured {self.condition.size}"
            )
        tail = np.broadcast_to(
            np.concatenate([emb, cond]), z_n.shape[:-1] + (emb.size + cond.size,)
        )
        return np.concatenate([z_n, zc, tail], axis=-1)

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w.T + b)
            acts.append(h)
        out = h @ self.weights[-1].T + self.biases[-1]
        return out, acts

    def predict(self, z_n, n: int, zc, cond=None) -> np.ndarray:
        out, _ = self._forward(self._input(z_n, n, zc, cond))
        return out

    def backward(
        self, x: np.ndarray, acts: list[np.ndarray], d_out: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Gradients of a scalar loss given d(loss)/d(output); also d/d(input)."""
        d_w = [None] * len(self.weights)
        d_b = [None] * len(self.biases)
        delta = np.atleast_2d(d_out)
        flat_acts = [np.atleast_2d(a) for a in acts]
        for layer in reversed(range(len(self.weights))):
            d_w[layer] = delta.T @ flat_acts[layer]
            d_b[layer] = delta.sum(axis=0)
            if layer:
                delta = (delta @ self.weights[layer]) * (1.0 - flat_acts[layer] ** 2)
            else:
                delta = delta @ self.weights[layer]
        d_input = delta.reshape(np.shape(x))
        return d_w, d_b, d_input

    # -- flat parameter access (gradient checks, serialization) --------------

    def params_vector(self) -> np.ndarray:
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b for b in self.biases]
        )

    def set_params_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        pos = 0
        for i, w in enumerate(self.weights):
            self.weights[i] = vec[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
        for i, b in enumerate(self.biases):
            self.biases[i] = vec[pos : pos + b.size].copy()
            pos += b.size
        if pos != vec.size:
            raise ShapeMismatchError(f"parameter vector has {vec.size} entries, need {pos}")

    def to_blob(self) -> bytes:
        """Little-endian blob: layer sizes, step/condition setup, per-layer sections."""
        sizes = self.sizes
        head = struct.pack("<I", len(sizes)) + struct.pack(f"<{len(sizes)}I", *sizes)
        head += struct.pack("<II", self.embed_dim, self.condition.size)
        head += self.condition.astype("<f8").tobytes()
        body = b""
        for w, b in zip(self.weights, self.biases):
            body += struct.pack("<I", w.size) + w.astype("<f8").tobytes()
            body += struct.pack("<I", b.size) + b.astype("<f8").tobytes()
        return head + body

    @classmethod
    def from_blob(cls, blob: bytes) -> "MlpDenoiser":
        try:
            pos = 4
            (n_sizes,) = struct.unpack("<I", blob[:4])
            sizes = list(struct.unpack_from(f"<{n_sizes}I", blob, pos))
            pos += 4 * n_sizes
            embed_dim, cond_len = struct.unpack_from("<II", blob, pos)
            pos += 8
            cond = np.frombuffer(blob, dtype="<f8", count=cond_len, offset=pos).copy()
            pos += 8 * cond_len
            latent_dim = sizes[-1]
            d = cls.__new__(cls)
            d.latent_dim = latent_dim
            d.embed_dim = embed_dim
            d.condition = cond
            d.weights, d.biases = [], []
            for i, o in zip(sizes[:-1], sizes[1:]):
                (count,) = struct.unpack_from("<I", blob, pos)
                pos += 4
                if count != i * o:
                    raise DenoiserError("layer section size disagrees with header")
                w = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
                pos += 8 * count
                d.weights.append(w.reshape(o, i).copy())
                (count,) = struct.unpack_from("<I", blob, pos)
                pos += 4
                if count != o:
                    raise DenoiserError("bias section size disagrees with header")
                d.biases.append(
                    np.frombuffer(blob, dtype="<f8", count=count, offset=pos).copy()
                )
                pos += 8 * count
            if pos != len(blob):
                raise DenoiserError(f"{len(blob) - pos} trailing bytes in denoiser blob")
            return d
        except DenoiserError:
            raise
        except (struct.error, ValueError, IndexError) as exc:
            raise DenoiserError(f"malformed denoiser blob: {exc}") from exc


def _sample_draws(
    batch: Sequence[ResidualPair],
    step_pool: Sequence[int],
    rng: np.random.Generator,
) -> list[tuple[int, np.ndarray]]:
    return [
        (int(rng.choice(step_pool)), rng.standard_normal(pair.z0.shape))
        for pair in batch
    ]


def batch_loss_and_grads(
    d: MlpDenoiser,
    batch: Sequence[ResidualPair],
    schedule: Schedule,
    endpoint_step: int,
    cfg: TrainConfig,
    draws: Sequence[tuple[int, np.ndarray]],
    eta: float = 0.0,
):
    """Training loss and parameter gradients for fixed (step, noise) draws.

    Separated from the update so finite-difference checks can treat the loss
    as a deterministic function of the parameters.
    """
    total = 0.0
    g_w = [np.zeros_like(w) for w in d.weights]
    g_b = [np.zeros_like(b) for b in d.biases]
    m = len(batch)
    for pair, (n, eps) in zip(batch, draws):
        z_n = forward_sample(pair, n, endpoint_step, schedule, eta, eps)
        x = d._input(z_n, n, pair.zc, None)
        out, acts = d._forward(x)
        diff = out - eps
        dim = diff.size
        weight = loss_weight(schedule, n, endpoint_step, eta) if cfg.use_omega_weights else 1.0
        loss = weight * float(diff @ diff) / dim
        d_out = weight * 2.0 * diff / dim

        if cfg.lambda_d > 0.0 and n != endpoint_step:
            g = gamma(schedule, endpoint_step, n, eta)
            a_n = schedule.alpha_bar(n)
            root_rem = math.sqrt(1.0 - a_n)
            denom = math.sqrt(a_n) - root_rem * g
            if abs(denom) >= 1e-8:
                z0_hat = (z_n - root_rem * (g * pair.zc + out)) / denom
                d_diff = z0_hat - pair.z0
                loss += cfg.lambda_d * float(d_diff @ d_diff) / dim
                d_out = d_out + cfg.lambda_d * 2.0 * d_diff / dim * (-root_rem / denom)

        total += loss / m
        dw, db, _ = d.backward(x, acts, d_out / m)
        for i in range(len(g_w)):
            g_w[i] += dw[i]
            g_b[i] += db[i]
    return total, g_w, g_b


def train_step(
    d: MlpDenoiser,
    batch: Sequence[ResidualPair],
    schedule: Schedule,
    endpoint_step: int,
    cfg: TrainConfig,
    rng: np.random.Generator,
    step_pool: Sequence[int] | None = None,
    eta: float = 0.0,
) -> float:
    """One gradient-descent update on the noise-prediction loss.

    Steps are drawn uniformly from ``step_pool`` (default: every step up to
    the endpoint, mirroring the restricted pools used at inference). Returns
    the batch loss before the update; the denoiser is updated in place.
    """
    if d.kind != "mlp":
        raise DenoiserError(f"train_step requires an mlp denoiser, got {d.kind}")
    if not batch:
        raise InvalidRangeError("batch must be nonempty")
    pool = list(step_pool) if step_pool is not None else list(range(1, endpoint_step + 1))
    draws = _sample_draws(batch, pool, rng)
    loss, g_w, g_b = batch_loss_and_grads(d, batch, schedule, endpoint_step, cfg, draws, eta)
    for i in range(len(d.weights)):
        d.weights[i] -= cfg.learning_rate * g_w[i]
        d.biases[i] -= cfg.learning_rate * g_b[i]
    return loss
