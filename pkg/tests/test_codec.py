import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from residiff.codec import (
    BACKEND,
    EntropyModel,
    QuantizedLatent,
    bits_per_pixel,
    decode_latent,
    dequantize,
    encode_latent,
    estimate_rate,
    quantize,
    residual,
    section_info,
)
from residiff.codec import rc, rc_py
from residiff.codec.entropy import TOTAL
from residiff.errors import (
    ChecksumError,
    DecodeError,
    InvalidRangeError,
    ShapeMismatchError,
)


def _discretized_entropy(model: EntropyModel) -> float:
    """Direct-summation entropy oracle over the model's realized bins."""
    p = model.probabilities()
    return float(-(p * np.log2(p)).sum())


class TestQuantize:
    def test_rounding_examples(self):
        q = quantize(np.array([0.4, -1.5, 1.5, 0.5, -0.49]), 1.0)
        assert q.symbols.tolist() == [0, -2, 2, 1, 0]

    def test_dequantize_examples(self):
        q = QuantizedLatent((2,), np.array([0, -2]), 1.0)
        np.testing.assert_array_equal(dequantize(q), [0.0, -2.0])

    def test_round_trip_bound(self):
        rng = np.random.default_rng(2)
        z = rng.normal(0, 3, size=(7, 5))
        for step in (0.1, 0.5, 2.0):
            err = np.abs(dequantize(quantize(z, step)) - z)
            assert err.max() <= step / 2 + 1e-12

    def test_residual_of_round_trip_bound(self):
        rng = np.random.default_rng(3)
        z0 = rng.normal(size=16)
        zc = dequantize(quantize(z0, 0.4))
        assert np.abs(residual(z0, zc)).max() <= 0.2 + 1e-12

    def test_rejects_nonpositive_step(self):
        with pytest.raises(InvalidRangeError):
            quantize(np.zeros(3), 0.0)

    def test_saturates_at_alphabet_edge(self):
        q = quantize(np.array([1e9, -1e9]), 1.0)
        assert q.symbols.tolist() == [32767, -32768]


class TestResidual:
    def test_examples(self):
        np.testing.assert_array_equal(
            residual(np.array([1.0, 2.0]), np.array([3.0, 1.0])), [2.0, -1.0]
        )
        z = np.arange(4.0)
        assert np.all(residual(z, z) == 0.0)

    def test_exact_reconstruction(self):
        # Dyadic-rational values so float subtraction and re-addition are exact.
        rng = np.random.default_rng(4)
        z0 = rng.integers(-4000, 4000, size=32) / 16.0
        zc = rng.integers(-4000, 4000, size=32) / 16.0
        np.testing.assert_array_equal(residual(z0, zc) + z0, zc)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            residual(np.zeros(2), np.zeros(3))


class TestEntropyModel:
    def test_realized_probabilities_sum_to_one_with_floor(self):
        for m in (
            EntropyModel.laplace(0.3, 2.5),
            EntropyModel.gaussian(-1.0, 4.0),
            EntropyModel.from_table([0.7, 0.2, 0.1]),
        ):
            p = m.probabilities()
            assert p.sum() == 1.0
            assert p.min() >= 2.0**-16
            assert int(m.cum[-1]) == TOTAL

    def test_uniform_table_rate_is_exact(self):
        m = EntropyModel.from_table(np.full(256, 1 / 256))
        q = QuantizedLatent((100,), np.arange(100) % 256, 1.0)
        assert estimate_rate(q, m) == 800.0

    def test_single_symbol_half_probability(self):
        m = EntropyModel.from_table([0.5, 0.5])
        assert estimate_rate(QuantizedLatent((1,), np.array([1]), 1.0), m) == 1.0

    def test_table_rejects_out_of_alphabet(self):
        m = EntropyModel.from_table([0.5, 0.5])
        with pytest.raises(InvalidRangeError):
            estimate_rate(QuantizedLatent((1,), np.array([7]), 1.0), m)

    def test_rejects_bad_params(self):
        with pytest.raises(InvalidRangeError):
            EntropyModel.laplace(0.0, 0.0)
        with pytest.raises(InvalidRangeError):
            EntropyModel.from_table([0.5, 0.6])

    def test_gaussian_quantizer_rate_tracks_discretized_entropy(self):
        # Gaussian(0, 1) samples at step 0.5: the per-symbol rate estimate
        # must sit within 5% of the discretized-Gaussian entropy computed by
        # direct summation.
        rng = np.random.default_rng(5)
        step = 0.5
        z = rng.normal(0, 1, size=200_000)
        q = quantize(z, step)
        m = EntropyModel.gaussian(0.0, 1.0 / step)
        h = _discretized_entropy(m)
        per_symbol = estimate_rate(q, m) / q.symbols.size
        assert per_symbol == pytest.approx(h, rel=0.05)

    def test_laplace_rate_within_one_percent_of_entropy(self):
        rng = np.random.default_rng(6)
        n = 100_000
        scale = 3.0
        z = rng.laplace(0.0, scale, size=n)
        q = quantize(z, 1.0)
        m = EntropyModel.laplace(0.0, scale)
        h = _discretized_entropy(m)
        assert estimate_rate(q, m) == pytest.approx(n * h, rel=0.01)

    def test_bits_per_pixel(self):
        assert bits_per_pixel(800.0, 100) == 8.0
        with pytest.raises(InvalidRangeError):
            bits_per_pixel(1.0, 0)


class TestRangeCoderBackends:
    def test_selected_backend_reported(self):
        assert BACKEND in ("compiled", "python")

    @settings(max_examples=40, deadline=None)
    @given(st.data())
    def test_backends_emit_identical_bytes(self, data):
        k = data.draw(st.integers(2, 40))
        freqs = data.draw(
            st.lists(st.integers(1, 5000), min_size=k, max_size=k)
        )
        freqs = np.asarray(freqs, dtype=np.int64)
        freqs[0] += TOTAL - freqs.sum()
        if freqs[0] < 1:
            freqs[0] = 1
            freqs = np.maximum(1, (freqs * (TOTAL - k) / freqs.sum()).astype(np.int64))
            freqs[0] += TOTAL - freqs.sum()
        cum = np.concatenate([[0], np.cumsum(freqs)]).astype(np.uint32)
        n = data.draw(st.integers(0, 300))
        idx = data.draw(
            st.lists(st.integers(0, k - 1), min_size=n, max_size=n)
        )
        idx = np.asarray(idx, dtype=np.uint32)

        py_bytes = rc_py.encode_block(idx.tolist(), cum)
        via_dispatch = rc.encode(idx, cum)
        assert py_bytes == via_dispatch

        assert rc_py.decode_block(py_bytes, n, cum) == idx.tolist()
        np.testing.assert_array_equal(rc.decode(py_bytes, n, cum), idx)


class TestCoderSection:
    def test_empty_sequence_round_trips(self):
        q = QuantizedLatent((0,), np.empty(0, dtype=np.int32), 1.0)
        m = EntropyModel.laplace(0.0, 1.0)
        blob = encode_latent(q, m)
        back = decode_latent(blob, m, (0,), 1.0)
        assert back.symbols.size == 0

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.integers(-40, 40), max_size=200),
        st.sampled_from(["laplace", "gaussian"]),
    )
    def test_round_trip_identity(self, vals, kind):
        q = QuantizedLatent((len(vals),), np.asarray(vals, dtype=np.int32), 0.5)
        m = EntropyModel(kind, loc=0.0, scale=6.0)
        back = decode_latent(encode_latent(q, m), m, q.shape, q.step)
        np.testing.assert_array_equal(back.symbols, q.symbols)

    def test_round_trip_with_escapes(self):
        rng = np.random.default_rng(7)
        vals = rng.integers(-20, 21, size=500).astype(np.int32)
        vals[::50] = rng.integers(-32768, 32768, size=10)
        q = QuantizedLatent((500,), vals, 1.0)
        m = EntropyModel.laplace(0.0, 4.0)
        back = decode_latent(encode_latent(q, m), None, (500,), 1.0)
        np.testing.assert_array_equal(back.symbols, vals)

    def test_coded_size_bound(self):
        rng = np.random.default_rng(8)
        z = rng.laplace(0, 2.0, size=5000)
        q = quantize(z, 0.25)
        m = EntropyModel.laplace(0.0, 8.0)
        blob = encode_latent(q, m)
        assert len(blob) <= estimate_rate(q, m) / 8 + 64

    def test_measured_bits_track_estimate_at_scale(self):
        rng = np.random.default_rng(9)
        n = 100_000
        q = quantize(rng.laplace(0, 2.0, size=n), 0.5)
        m = EntropyModel.laplace(0.0, 4.0)
        blob = encode_latent(q, m)
        assert 8 * len(blob) == pytest.approx(estimate_rate(q, m), rel=0.01)

    def test_uniform_256_coded_size(self):
        rng = np.random.default_rng(10)
        sym = rng.integers(0, 256, size=100_000).astype(np.int32)
        q = QuantizedLatent((sym.size,), sym, 1.0)
        m = EntropyModel.from_table(np.full(256, 1 / 256))
        info = section_info(encode_latent(q, m))
        assert info["coded_bytes"] == pytest.approx(100_000, rel=0.001)

    def test_rate_monotone_in_quantization_step(self):
        rng = np.random.default_rng(11)
        z = rng.normal(0, 2.0, size=4096)
        steps = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0]
        rates = []
        for step in steps:
            q = quantize(z, step)
            rates.append(estimate_rate(q, EntropyModel.gaussian(0.0, 2.0 / step)))
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_single_bit_corruption_detected(self):
        rng = np.random.default_rng(12)
        q = quantize(rng.laplace(0, 1.5, size=400), 0.5)
        m = EntropyModel.laplace(0.0, 3.0)
        blob = bytearray(encode_latent(q, m))
        positions = rng.integers(0, len(blob) * 8, size=64)
        for bitpos in positions:
            corrupted = bytearray(blob)
            corrupted[bitpos // 8] ^= 1 << (bitpos % 8)
            with pytest.raises(DecodeError):
                decode_latent(bytes(corrupted), m, q.shape, q.step)

    def test_truncation_detected(self):
        q = quantize(np.linspace(-3, 3, 64), 0.5)
        m = EntropyModel.laplace(0.0, 3.0)
        blob = encode_latent(q, m)
        with pytest.raises(DecodeError):
            decode_latent(blob[: len(blob) // 2], m, q.shape, q.step)

    def test_checksum_error_is_distinct(self):
        q = quantize(np.linspace(-3, 3, 64), 0.5)
        m = EntropyModel.laplace(0.0, 3.0)
        blob = bytearray(encode_latent(q, m))
        blob[-1] ^= 0xFF
        with pytest.raises(ChecksumError):
            decode_latent(bytes(blob), m, q.shape, q.step)

    def test_wrong_model_rejected(self):
        q = quantize(np.linspace(-3, 3, 64), 0.5)
        blob = encode_latent(q, EntropyModel.laplace(0.0, 3.0))
        with pytest.raises(DecodeError):
            decode_latent(blob, EntropyModel.laplace(0.0, 4.0), q.shape, q.step)
