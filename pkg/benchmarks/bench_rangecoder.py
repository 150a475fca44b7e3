#!/usr/bin/env python3
"""Benchmark: compiled range-coder kernel vs the pure-Python fallback.

Times encode and decode over synthetic symbol streams at three entropy
levels and prints throughput plus the speedup ratio. Run from the repo root:

    python benchmarks/bench_rangecoder.py [--symbols N]
"""

import argparse
import time

import numpy as np

from residiff.codec import EntropyModel, rc_py

try:
    from residiff.codec import _rc
except ImportError:
    _rc = None


def bench_python(idx, cum, rounds):
    ids = idx.tolist()
    t0 = time.perf_counter()
    for _ in range(rounds):
        coded = rc_py.encode_block(ids, cum)
    t_enc = (time.perf_counter() - t0) / rounds
    t0 = time.perf_counter()
    for _ in range(rounds):
        rc_py.decode_block(coded, len(ids), cum)
    t_dec = (time.perf_counter() - t0) / rounds
    return coded, t_enc, t_dec


def bench_compiled(idx, cum, rounds):
    idx = np.ascontiguousarray(idx, dtype=np.uint32)
    cum = np.ascontiguousarray(cum, dtype=np.uint32)
    out = np.empty(len(idx), dtype=np.uint32)
    t0 = time.perf_counter()
    for _ in range(rounds):
        coded = _rc.encode_block(idx, cum)
    t_enc = (time.perf_counter() - t0) / rounds
    t0 = time.perf_counter()
    for _ in range(rounds):
        _rc.decode_block(coded, len(idx), cum, out)
    t_dec = (time.perf_counter() - t0) / rounds
    return coded, t_enc, t_dec


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--symbols", type=int, default=200_000)
    parser.add_argument("--rounds", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = {
        "laplace scale 2": EntropyModel.laplace(0.0, 2.0),
        "laplace scale 20": EntropyModel.laplace(0.0, 20.0),
        "uniform-256 table": EntropyModel.from_table(np.full(256, 1 / 256)),
    }

    print(f"{'case':<20} {'backend':<9} {'enc Msym/s':>11} {'dec Msym/s':>11} {'bytes':>9}")
    for name, model in cases.items():
        k = model.alphabet_size
        probs = model.probabilities()
        idx = rng.choice(k, size=args.symbols, p=probs).astype(np.uint32)

        coded_py, enc_py, dec_py = bench_python(idx, model.cum, 1)
        rows = [("python", enc_py, dec_py, len(coded_py))]
        if _rc is not None:
            coded_c, enc_c, dec_c = bench_compiled(idx, model.cum, args.rounds)
            assert coded_c == coded_py, "backends diverged"
            rows.append(("compiled", enc_c, dec_c, len(coded_c)))
        for backend, t_enc, t_dec, size in rows:
            print(
                f"{name:<20} {backend:<9} "
                f"{args.symbols / t_enc / 1e6:>11.2f} {args.symbols / t_dec / 1e6:>11.2f} "
                f"{size:>9}"
            )
        if _rc is not None:
            print(
                f"{'':<20} {'speedup':<9} {enc_py / enc_c:>10.1f}x {dec_py / dec_c:>10.1f}x"
            )
    if _rc is None:
        print("compiled kernel not built; showing the fallback only")


if __name__ == "__main__":
    main()
