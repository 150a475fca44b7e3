"""Parametric and tabular entropy models over quantized symbol alphabets.

A model materializes integer frequencies summing to exactly 2**16 with a
minimum of 1 per alphabet slot, so every realized bin probability is a
multiple of 2**-16, at least 2**-16, and the set sums to 1 exactly. Rate
estimates and the range coder share these frequencies, which is what makes
measured bits track estimates to well under a percent.

Parametric kinds (laplace, gaussian) cover a finite window of symbols where
the distribution carries visible mass, plus one escape slot: symbols outside
the window cost the escape probability plus 16 raw bits, bounding the worst
case while keeping the alphabet open over the full clipped symbol range.
Table kind is a closed alphabet; symbols outside it are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from ..errors import InvalidRangeError
from .rc import TOTAL

SYMBOL_MIN = -(1 << 15)
SYMBOL_MAX = (1 << 15) - 1
ESCAPE_RAW_BITS = 16

_TAIL_Q = 2.0**-20
_MAX_WINDOW = TOTAL - 1  # leave room for the escape slot

KIND_IDS = {"laplace": 0, "gaussian": 1, "table": 2}
KIND_FROM_ID = {v: k for k, v in KIND_IDS.items()}


def _quantize_freqs(probs: np.ndarray) -> np.ndarray:
    """Integer frequencies summing to exactly TOTAL, each at least 1."""
    freqs = np.maximum(1, np.rint(probs * TOTAL).astype(np.int64))
    delta = TOTAL - int(freqs.sum())
    if delta > 0:
        freqs[int(np.argmax(freqs))] += delta
    while delta < 0:
        order = np.argsort(-freqs, kind="stable")
        for i in order:
            take = min(-delta, int(freqs[i]) - 1)
            freqs[i] -= take
            delta += take
            if delta == 0:
                break
        else:
            raise InvalidRangeError("alphabet too large for frequency budget")
    return freqs.astype(np.uint32)


def _laplace_cdf(x: np.ndarray, loc: float, scale: float) -> np.ndarray:
    z = (np.asarray(x, dtype=np.float64) - loc) / scale
    return np.where(z < 0, 0.5 * np.exp(z), 1.0 - 0.5 * np.exp(-z))


def _laplace_quantile(q: float, loc: float, scale: float) -> float:
    if q < 0.5:
        return loc + scale * math.log(2.0 * q)
    return loc - scale * math.log(2.0 * (1.0 - q))


@dataclass(frozen=True)
class EntropyModel:
    """Frozen symbol distribution shared by rate estimation and the coder."""

    kind: str
    loc: float = 0.0
    scale: float = 1.0
    table: np.ndarray | None = None

    # Derived coding state (set in __post_init__).
    window_lo: int = field(init=False, repr=False, default=0)
    freqs: np.ndarray = field(init=False, repr=False, default=None)
    cum: np.ndarray = field(init=False, repr=False, default=None)
    bits: np.ndarray = field(init=False, repr=False, default=None)
    escape_slot: int | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.kind not in KIND_IDS:
            raise InvalidRangeError(f"unknown entropy model kind {self.kind!r}")
        if self.kind == "table":
            probs = np.asarray(self.table, dtype=np.float64)
            if probs.ndim != 1 or probs.size == 0:
                raise InvalidRangeError("table must be a nonempty 1-d probability array")
            if np.any(probs <= 0) or not math.isclose(
                float(probs.sum()), 1.0, abs_tol=1e-9
            ):
                raise InvalidRangeError("table probabilities must be positive and sum to 1")
            if probs.size > TOTAL:
                raise InvalidRangeError("table alphabet exceeds frequency budget")
            lo = int(self.loc)
            freqs = _quantize_freqs(probs)
            escape = None
        else:
            if not math.isfinite(self.loc) or not math.isfinite(self.scale):
                raise InvalidRangeError(
                    f"model parameters must be finite, got ({self.loc}, {self.scale})"
                )
            if self.scale <= 0:
                raise InvalidRangeError(f"scale must be positive, got {self.scale}")
            lo, hi = self._window()
            edges = np.arange(lo, hi + 2, dtype=np.float64) - 0.5
            cdf = self._cdf(edges)
            probs = np.diff(cdf)
            tail = max(1.0 - float(cdf[-1] - cdf[0]), 0.0)
            freqs = _quantize_freqs(np.append(probs, tail))
            escape = int(freqs.size - 1)
        cum = np.zeros(freqs.size + 1, dtype=np.uint32)
        np.cumsum(freqs, out=cum[1:], dtype=np.uint32)
        bits = -np.log2(freqs.astype(np.float64) / TOTAL)
        for name, val in [
            ("window_lo", lo),
            ("freqs", freqs),
            ("cum", cum),
            ("bits", bits),
            ("escape_slot", escape),
        ]:
            object.__setattr__(self, name, val)

    def _cdf(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "laplace":
            return _laplace_cdf(x, self.loc, self.scale)
        return ndtr((np.asarray(x, dtype=np.float64) - self.loc) / self.scale)

    def _window(self) -> tuple[int, int]:
        if self.kind == "laplace":
            lo = _laplace_quantile(_TAIL_Q, self.loc, self.scale)
            hi = _laplace_quantile(1.0 - _TAIL_Q, self.loc, self.scale)
        else:
            z = float(ndtri(_TAIL_Q))
            lo = self.loc + z * self.scale
            hi = self.loc - z * self.scale
        lo = max(SYMBOL_MIN, int(math.floor(lo)))
        hi = min(SYMBOL_MAX, int(math.ceil(hi)))
        if hi < lo:
            lo = hi = min(max(int(round(self.loc)), SYMBOL_MIN), SYMBOL_MAX)
        if hi - lo + 1 > _MAX_WINDOW:
            hi = lo + _MAX_WINDOW - 1
        return lo, hi

    @classmethod
    def laplace(cls, loc: float, scale: float) -> "EntropyModel":
        return cls("laplace", loc=float(loc), scale=float(scale))

    @classmethod
    def gaussian(cls, loc: float, scale: float) -> "EntropyModel":
        return cls("gaussian", loc=float(loc), scale=float(scale))

    @classmethod
    def from_table(cls, probs, offset: int = 0) -> "EntropyModel":
        return cls("table", loc=float(offset), table=np.asarray(probs, dtype=np.float64))

    @property
    def alphabet_size(self) -> int:
        return int(self.freqs.size)

    def probabilities(self) -> np.ndarray:
        """Realized bin probabilities (multiples of 2**-16, summing to 1)."""
        return self.freqs.astype(np.float64) / TOTAL

    def to_indices(self, symbols: np.ndarray) -> np.ndarray:
        """Map raw symbol values to alphabet slots (escape slot if outside)."""
        symbols = np.asarray(symbols, dtype=np.int64)
        window = self.alphabet_size - (0 if self.escape_slot is None else 1)
        pos = symbols - self.window_lo
        inside = (pos >= 0) & (pos < window)
        if self.escape_slot is None:
            if not np.all(inside):
                raise InvalidRangeError("symbol outside the table alphabet")
            return pos.astype(np.uint32)
        return np.where(inside, pos, self.escape_slot).astype(np.uint32)

    def symbol_bits(self, symbols: np.ndarray) -> np.ndarray:
        """Ideal code length per symbol, escape overhead included."""
        idx = self.to_indices(symbols)
        bits = self.bits[idx]
        if self.escape_slot is not None:
            bits = bits + ESCAPE_RAW_BITS * (idx == self.escape_slot)
        return bits

    def params(self) -> list[float]:
        """Wire parameters (f64 sequence) sufficient to rebuild the model."""
        if self.kind == "table":
            return [self.loc, float(self.table.size), *self.table.tolist()]
        return [self.loc, self.scale]

    @classmethod
    def from_params(cls, kind: str, params: list[float]) -> "EntropyModel":
        if kind == "table":
            count = int(params[1])
            return cls.from_table(params[2 : 2 + count], offset=int(params[0]))
        return cls(kind, loc=params[0], scale=params[1])
