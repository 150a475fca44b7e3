"""Rate-distortion sweeps, peak projection, delta-rate, and KL rate proxy.

A sweep walks a (quantization step x noising endpoint) grid over a dataset
of latents: each cell encodes, decodes, runs the reverse sampler, and scores
mean squared error against the clean latents. Cell randomness derives from
(seed, cell index), so cells are independent and order-free; bits per pixel
within a column depend only on the quantization step.

The peak projection extracts, per rate point, the endpoint that minimizes
distortion. Delta-rate compares two rate-distortion curves by cubic
least-squares fits of log2 rate against quality (negative distortion here),
integrated over the overlapping quality range after normalizing that range
to [0, 1] for conditioning.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .codec import EntropyModel, dequantize, estimate_rate, quantize
from .diffusion import Denoiser, make_step_list, sample
from .errors import InvalidRangeError, ResidiffError
from .schedule import Schedule

CSV_HEADER = "bpp,distortion,N_r,quant_step"

DenoiserFactory = Callable[[float, int], Denoiser]


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    distortion: float
    endpoint_step: int
    quant_step: float

    def __post_init__(self):
        if not (math.isfinite(self.bpp) and self.bpp >= 0):
            raise InvalidRangeError(f"bpp must be finite and nonnegative, got {self.bpp}")


@dataclass(frozen=True)
class RDCurve:
    """Points sorted by strictly increasing bpp; four or more for delta-rate."""

    points: tuple[RDPoint, ...]

    def __post_init__(self):
        pts = tuple(self.points)
        if any(b.bpp <= a.bpp for a, b in zip(pts, pts[1:])):
            raise InvalidRangeError("curve bpp values must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def bpp(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points])

    @property
    def distortion(self) -> np.ndarray:
        return np.array([p.distortion for p in self.points])


@dataclass(frozen=True)
class RDSurface:
    """Grid of points indexed [rate point][endpoint]; complete by construction."""

    quant_steps: tuple[float, ...]
    endpoint_steps: tuple[int, ...]
    points: tuple[tuple[RDPoint, ...], ...]

    def __post_init__(self):
        if len(self.points) != len(self.quant_steps) or any(
            len(row) != len(self.endpoint_steps) for row in self.points
        ):
            raise InvalidRangeError("surface grid does not match its axes")

    def column_bpp(self, i: int) -> float:
        return self.points[i][0].bpp

    def best_fixed_endpoint(self) -> int:
        """Endpoint with the lowest mean distortion across rate points."""
        mean_d = [
            float(np.mean([row[j].distortion for row in self.points]))
            for j in range(len(self.endpoint_steps))
        ]
        return self.endpoint_steps[int(np.argmin(mean_d))]


def fit_symbol_model(symbols: np.ndarray) -> EntropyModel:
    """Gaussian entropy model matched to observed symbol moments."""
    symbols = np.asarray(symbols)
    if symbols.size == 0:
        return EntropyModel.gaussian(0.0, 1.0)
    loc = float(np.mean(symbols))
    scale = max(float(np.std(symbols)), 0.05)
    return EntropyModel.gaussian(loc, scale)


def sweep(
    quant_steps: Sequence[float],
    endpoint_steps: Sequence[int],
    dataset: np.ndarray,
    schedule: Schedule,
    denoiser: Denoiser | DenoiserFactory,
    eta: float,
    num_steps: int = 4,
    pixels_per_latent: int | None = None,
    seed: int = 0,
) -> RDSurface:
    """Encode / decode / sample / score every grid cell over the dataset.

    ``denoiser`` is either a ready predictor or a factory called with
    (quant_step, endpoint_step) per cell, which lets analytic predictors
    adapt to the cell's quantization noise. Deterministic given ``seed``.
    """
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.ndim != 2 or dataset.size == 0:
        raise InvalidRangeError("dataset must be a nonempty (count, dim) array")
    if not quant_steps or not len(endpoint_steps):
        raise InvalidRangeError("grids must be nonempty")
    pixels = pixels_per_latent or dataset.shape[1]
    n_latents = dataset.shape[0]

    rows = []
    for i, step in enumerate(quant_steps):
        q = quantize(dataset, step)
        model = fit_symbol_model(q.symbols)
        bits = estimate_rate(q, model)
        bpp = bits / (n_latents * pixels)
        zc = dequantize(q)
        row = []
        for j, endpoint in enumerate(endpoint_steps):
            rng = np.random.default_rng([seed, i, j])
            cell_denoiser = (
                denoiser(step, endpoint) if callable(denoiser) else denoiser
            )
            try:
                out = sample(
                    cell_denoiser,
                    zc,
                    endpoint,
                    make_step_list(endpoint, num_steps),
                    eta,
                    schedule,
                    rng,
                )
            except ResidiffError as exc:
                raise type(exc)(
                    f"sweep cell (quant_step={step}, endpoint={endpoint}): {exc}"
                ) from exc
            mse = float(np.mean((out - dataset) ** 2))
            row.append(
                RDPoint(
                    bpp=bpp,
                    distortion=mse,
                    endpoint_step=int(endpoint),
                    quant_step=float(step),
                )
            )
        rows.append(tuple(row))
    return RDSurface(
        quant_steps=tuple(float(s) for s in quant_steps),
        endpoint_steps=tuple(int(n) for n in endpoint_steps),
        points=tuple(rows),
    )


def peak_projection(surface: RDSurface) -> list[tuple[float, int]]:
    """Per rate point, the distortion-minimizing endpoint (ties: smaller).

    Returned sorted by increasing bits per pixel.
    """
    out = []
    for i in range(len(surface.quant_steps)):
        row = surface.points[i]
        best = min(range(len(row)), key=lambda j: (row[j].distortion, row[j].endpoint_step))
        out.append((surface.column_bpp(i), row[best].endpoint_step))
    return sorted(out, key=lambda t: t[0])


def _cubic_fit(quality: np.ndarray, log_rate: np.ndarray) -> np.ndarray:
    return np.polyfit(quality, log_rate, 3)


def bd_rate(anchor: RDCurve, test: RDCurve) -> float:
    """Average percent rate difference of ``test`` against ``anchor``.

    Quality is negative distortion. Both curves are fitted with cubic least
    squares of log2 rate over quality normalized to [0, 1] across the
    overlapping range; the mean fitted log-rate gap integrates in closed
    form and 100 * (2**gap - 1) is returned.
    """
    for curve, name in ((anchor, "anchor"), (test, "test")):
        if len(curve.points) < 4:
            raise InvalidRangeError(f"{name} curve needs >= 4 points, has {len(curve.points)}")
    q_anchor = -anchor.distortion
    q_test = -test.distortion
    lo = max(q_anchor.min(), q_test.min())
    hi = min(q_anchor.max(), q_test.max())
    if hi <= lo:
        raise InvalidRangeError("curves share no overlapping quality range")

    def norm(q):
        return (q - lo) / (hi - lo)

    fit_a = _cubic_fit(norm(q_anchor), np.log2(anchor.bpp))
    fit_t = _cubic_fit(norm(q_test), np.log2(test.bpp))
    gap_poly = np.polyint(np.polysub(fit_t, fit_a))
    mean_gap = np.polyval(gap_poly, 1.0) - np.polyval(gap_poly, 0.0)
    return 100.0 * (2.0**mean_gap - 1.0)


def kl_rate_gaussian(
    p: tuple[float, float], q: tuple[float, float], dim: int = 1
) -> float:
    """KL(N(p) || N(q)) in nats for (mean, variance) pairs, times ``dim``."""
    (mp, vp), (mq, vq) = p, q
    if vp <= 0 or vq <= 0:
        raise InvalidRangeError("variances must be positive")
    if dim < 1:
        raise InvalidRangeError(f"dim must be >= 1, got {dim}")
    per_dim = 0.5 * (math.log(vq / vp) + (vp + (mp - mq) ** 2) / vq - 1.0)
    return dim * per_dim


# -- CSV and SVG export -------------------------------------------------------


def points_to_csv(points: Sequence[RDPoint]) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for p in points:
        out.write(f"{p.bpp!r},{p.distortion!r},{p.endpoint_step},{p.quant_step!r}\n")
    return out.getvalue()


def surface_to_csv(surface: RDSurface) -> str:
    return points_to_csv([p for row in surface.points for p in row])


def curve_from_csv(text: str) -> RDCurve:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise InvalidRangeError(f"expected CSV header {CSV_HEADER!r}")
    pts = []
    for ln in lines[1:]:
        bpp, dist, endpoint, qstep = ln.split(",")
        pts.append(
            RDPoint(
                bpp=float(bpp),
                distortion=float(dist),
                endpoint_step=int(endpoint),
                quant_step=float(qstep),
            )
        )
    pts.sort(key=lambda p: p.bpp)
    return RDCurve(tuple(pts))


def surface_to_svg(surface: RDSurface, width: int = 640, height: int = 420) -> str:
    """Distortion-vs-bpp polylines, one per endpoint, as a standalone SVG."""
    pad = 50.0
    xs = np.array([surface.column_bpp(i) for i in range(len(surface.quant_steps))])
    ys = np.array([[p.distortion for p in row] for row in surface.points])
    x_lo, x_hi = float(xs.min()), float(xs.max()) or 1.0
    y_lo, y_hi = float(ys.min()), float(ys.max()) or 1.0
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x):
        return pad + (x - x_lo) / x_span * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / y_span * (height - 2 * pad)

    colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
              "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="12">bits per pixel</text>',
        f'<text x="14" y="{height / 2}" font-size="12" transform="rotate(-90 14 {height / 2})" text-anchor="middle">distortion (MSE)</text>',
    ]
    order = np.argsort(xs)
    for j, endpoint in enumerate(surface.endpoint_steps):
        color = colors[j % len(colors)]
        path = " ".join(f"{sx(xs[i]):.1f},{sy(ys[i][j]):.1f}" for i in order)
        parts.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{width - pad + 4}" y="{pad + 14 * j + 10}" font-size="10" '
            f'fill="{color}">endpoint {endpoint}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
