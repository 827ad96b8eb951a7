#!/usr/bin/env python3
"""Generate range-coder conformance vectors for independent implementations.

Writes a little-endian binary fixture:

  magic    4 bytes "RVF1"
  n_tables u32, table_width u32
  tables   n_tables * table_width * u32   (cumulative rows, 0..65536)
  ref_encode_sps f64, ref_decode_sps f64  (reference coder throughput)
  n_streams u32
  per stream: n_symbols u32, symbols u16*n (table indices),
              contexts u16*n, ref_len u32, ref bytes

All streams are encoded with the reference coder; matching them byte for
byte is the conformance bar for any other implementation.
"""

import argparse
import struct
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ctxcodec.entropy import build_cdf, quantize_pmf
from ctxcodec.rans import PROB_SCALE, range_decode, range_encode


def build_table_pool(rng):
    mu = rng.uniform(-30, 30, size=56)
    sigma = rng.uniform(0.04, 40.0, size=56)
    tables = [build_cdf(mu, sigma)]
    # adversarial rows: near-degenerate, near-uniform, two-valued, staircase
    tables.append(build_cdf(np.zeros(2), np.array([0.04, 1e6])))
    flat = np.full((1, 256), 1.0 / 256)
    tables.append(quantize_pmf(flat))
    two = np.full((1, 256), 1e-9)
    two[0, 0] = 0.7
    two[0, 255] = 0.3
    tables.append(quantize_pmf(two))
    ramp = np.arange(1, 257, dtype=np.float64)[None, :]
    tables.append(quantize_pmf(ramp / ramp.sum()))
    pool = np.concatenate(tables, axis=0)
    assert (pool[:, -1] == PROB_SCALE).all()
    return pool


def sample_symbols(rng, tables, contexts):
    u = rng.integers(0, PROB_SCALE, size=contexts.size)
    out = np.empty(contexts.size, dtype=np.int64)
    for i, c in enumerate(contexts):
        out[i] = np.searchsorted(tables[c], u[i], side="right") - 1
    return out


def measure_throughput(tables, rng, n=1_000_000):
    contexts = rng.integers(0, tables.shape[0], size=n)
    symbols = sample_symbols(rng, tables, contexts)
    t0 = time.perf_counter()
    stream = range_encode(symbols, contexts, tables)
    t1 = time.perf_counter()
    out = range_decode(stream, contexts, tables, expected=n)
    t2 = time.perf_counter()
    assert np.array_equal(out, symbols)
    return n / (t1 - t0), n / (t2 - t1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--streams", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240901)
    ap.add_argument("--throughput-symbols", type=int, default=1_000_000)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "coder-ts/fixtures/streams.bin"))
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    tables = build_table_pool(rng)
    n_tables, width = tables.shape

    print(f"measuring reference throughput on {args.throughput_symbols} symbols ...", flush=True)
    enc_sps, dec_sps = measure_throughput(tables, rng, args.throughput_symbols)
    print(f"reference coder: encode {enc_sps:,.0f} sym/s, decode {dec_sps:,.0f} sym/s")

    out = bytearray()
    out += b"RVF1"
    out += struct.pack("<II", n_tables, width)
    out += tables.astype("<u4").tobytes()
    out += struct.pack("<dd", enc_sps, dec_sps)
    out += struct.pack("<I", args.streams)
    total_syms = 0
    for i in range(args.streams):
        if i == 0:
            n = 0  # the empty stream is part of the contract
        elif i == 1:
            n = 1
        else:
            n = int(rng.integers(2, 400))
        contexts = rng.integers(0, n_tables, size=n)
        if i % 3 == 2:
            symbols = rng.integers(0, width - 1, size=n)  # uniform stress
        else:
            symbols = sample_symbols(rng, tables, contexts)
        ref = range_encode(symbols, contexts, tables)
        assert np.array_equal(range_decode(ref, contexts, tables, expected=n), symbols)
        out += struct.pack("<I", n)
        out += symbols.astype("<u2").tobytes()
        out += contexts.astype("<u2").tobytes()
        out += struct.pack("<I", len(ref))
        out += ref
        total_syms += n
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(out))
    print(f"wrote {path} ({len(out)} bytes, {args.streams} streams, {total_syms} symbols)")


if __name__ == "__main__":
    main()
