import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxcodec.entropy import build_cdf, quantize_pmf
from ctxcodec.errors import CodingError
from ctxcodec.rans import (
    HEADER_BYTES,
    PROB_SCALE,
    range_decode,
    range_encode,
    table_bits,
    validate_tables,
)


def random_tables(rng, n_ctx, n_sym):
    pmf = rng.dirichlet(np.full(n_sym, rng.uniform(0.05, 2.0)), size=n_ctx)
    return quantize_pmf(pmf)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_round_trip_property(data):
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    n_ctx = data.draw(st.integers(1, 5))
    n_sym = data.draw(st.integers(2, 40))
    n = data.draw(st.integers(0, 200))
    tables = random_tables(rng, n_ctx, n_sym)
    symbols = rng.integers(0, n_sym, size=n)
    contexts = rng.integers(0, n_ctx, size=n)
    stream = range_encode(symbols, contexts, tables)
    out = range_decode(stream, contexts, tables, expected=n)
    assert np.array_equal(out, symbols)


def test_degenerate_full_mass_symbol():
    tables = np.array([[0, PROB_SCALE]], dtype=np.uint32)
    symbols = np.zeros(17, dtype=np.int64)
    contexts = np.zeros(17, dtype=np.int64)
    stream = range_encode(symbols, contexts, tables)
    assert len(stream) == HEADER_BYTES  # no renorm bytes at all
    assert np.array_equal(range_decode(stream, contexts, tables), symbols)


def test_empty_stream_is_header_only():
    tables = np.array([[0, PROB_SCALE]], dtype=np.uint32)
    stream = range_encode([], [], tables)
    assert len(stream) == HEADER_BYTES
    assert range_decode(stream, [], tables, expected=0).size == 0


def test_out_of_support_symbol_rejected():
    tables = random_tables(np.random.default_rng(0), 1, 4)
    with pytest.raises(CodingError):
        range_encode([4], [0], tables)
    with pytest.raises(CodingError):
        range_encode([0], [1], tables)


def test_truncated_stream_raises(rng):
    tables = random_tables(rng, 2, 16)
    symbols = rng.integers(0, 16, size=300)
    contexts = rng.integers(0, 2, size=300)
    stream = range_encode(symbols, contexts, tables)
    assert len(stream) > HEADER_BYTES
    with pytest.raises(CodingError):
        range_decode(stream[:-1], contexts, tables)
    with pytest.raises(CodingError):
        range_decode(stream[: HEADER_BYTES - 3], contexts, tables)


def test_corrupt_stream_never_crashes(rng):
    tables = random_tables(rng, 2, 16)
    symbols = rng.integers(0, 16, size=200)
    contexts = rng.integers(0, 2, size=200)
    stream = bytearray(range_encode(symbols, contexts, tables))
    for _ in range(50):
        mutated = bytearray(stream)
        mutated[rng.integers(0, len(stream))] ^= 1 << rng.integers(0, 8)
        try:
            out = range_decode(bytes(mutated), contexts, tables)
            assert out.shape == symbols.shape
        except CodingError:
            pass


def test_count_mismatch_detected(rng):
    tables = random_tables(rng, 1, 8)
    stream = range_encode([1, 2, 3], [0, 0, 0], tables)
    with pytest.raises(CodingError):
        range_decode(stream, [0, 0, 0], tables, expected=4)
    with pytest.raises(CodingError):
        range_decode(stream, [0, 0], tables)


def test_validate_tables():
    good = np.array([[0, 10, PROB_SCALE]], dtype=np.uint32)
    validate_tables(good)
    with pytest.raises(CodingError):
        validate_tables(np.array([[0, 0, PROB_SCALE]], dtype=np.uint32))
    with pytest.raises(CodingError):
        validate_tables(np.array([[0, 10, PROB_SCALE - 1]], dtype=np.uint32))


def test_stream_length_tracks_entropy(rng):
    # spec bound: bytes in [H, 1.02*H + 8] with H the table-entropy in bytes
    for _ in range(8):
        mu = rng.uniform(-3, 3, size=64)
        sigma = rng.uniform(0.05, 8.0, size=64)
        tables = build_cdf(mu, sigma)
        n = 20_000
        contexts = rng.integers(0, 64, size=n)
        # sample symbols from the actual table distributions
        u = rng.integers(0, PROB_SCALE, size=n)
        rows = tables[contexts]
        symbols = np.array([np.searchsorted(rows[i], u[i], side="right") - 1 for i in range(n)])
        stream = range_encode(symbols, contexts, tables)
        h_bytes = table_bits(symbols, contexts, tables) / 8.0
        assert h_bytes <= len(stream) <= 1.02 * h_bytes + 8


def test_table_bits_oracle():
    tables = np.array([[0, PROB_SCALE // 2, PROB_SCALE]], dtype=np.uint32)
    # eight half-probability symbols cost exactly eight bits
    assert table_bits([0, 1] * 4, [0] * 8, tables) == pytest.approx(8.0, abs=1e-9)
