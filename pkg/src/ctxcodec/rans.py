"""Reference range coder (byte-wise rANS), the normative bitstream definition.

Scheme, pinned so independent implementations can match it byte for byte:

* 32-bit state, lower bound ``L = 1 << 16``; cumulative-frequency tables sum
  to exactly ``1 << 16`` (16-bit precision).
* Encoding walks the symbols in reverse. Before coding a symbol with
  frequency ``f`` the state is renormalized by emitting its low 8 bits while
  ``state >= f << 8``; then ``state = (state // f) << 16 | (state % f) + start``.
* The stream is ``count:u32le | final_state:u32le | renorm bytes`` with the
  renorm bytes reversed into decode order, so decoding reads strictly forward.
* Decoding inverts exactly: after the declared number of symbols the state
  must be back at ``L`` with every byte consumed; anything else is corruption.

Symbols here are table *indices* (row offsets into a cumulative table);
mapping latent values into index space belongs to the caller.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CodingError

STATE_LOWER_BOUND = 1 << 16
PROB_SCALE = 1 << 16
HEADER_BYTES = 8  # count + flushed state


def validate_tables(tables: np.ndarray) -> np.ndarray:
    """Check cumulative rows: start 0, end PROB_SCALE, strictly increasing."""
    tables = np.ascontiguousarray(tables, dtype=np.uint32)
    if tables.ndim != 2 or tables.shape[1] < 2:
        raise CodingError(f"tables must be (contexts, symbols+1), got {tables.shape}")
    if (tables[:, 0] != 0).any() or (tables[:, -1] != PROB_SCALE).any():
        raise CodingError("cumulative rows must run from 0 to 65536")
    if (np.diff(tables.astype(np.int64), axis=1) <= 0).any():
        raise CodingError("cumulative rows must be strictly increasing")
    return tables


def range_encode(symbols, contexts, tables: np.ndarray) -> bytes:
    """Encode index symbols against per-symbol table rows."""
    symbols = np.asarray(symbols, dtype=np.int64)
    contexts = np.asarray(contexts, dtype=np.int64)
    if symbols.shape != contexts.shape or symbols.ndim != 1:
        raise CodingError("symbols and contexts must be equal-length 1-D arrays")
    tables = np.ascontiguousarray(tables, dtype=np.uint32)
    n_ctx, width = tables.shape
    n_sym = width - 1
    if symbols.size and (
        symbols.min() < 0 or symbols.max() >= n_sym or contexts.min() < 0 or contexts.max() >= n_ctx
    ):
        raise CodingError("symbol or context index out of table support")

    rows = tables.tolist()
    state = STATE_LOWER_BOUND
    emitted = bytearray()
    for i in range(symbols.size - 1, -1, -1):
        row = rows[contexts[i]]
        s = symbols[i]
        start = row[s]
        freq = row[s + 1] - start
        if freq <= 0:
            raise CodingError(f"symbol {s} has zero frequency in context {contexts[i]}")
        threshold = freq << 8
        while state >= threshold:
            emitted.append(state & 0xFF)
            state >>= 8
        state = ((state // freq) << 16) + (state % freq) + start

    emitted.reverse()
    return struct.pack("<II", symbols.size, state) + bytes(emitted)


def range_decode(data: bytes, contexts, tables: np.ndarray, expected: int | None = None) -> np.ndarray:
    """Decode a stream produced by range_encode; returns index symbols."""
    contexts = np.asarray(contexts, dtype=np.int64)
    tables = np.ascontiguousarray(tables, dtype=np.uint32)
    n_ctx, width = tables.shape
    if len(data) < HEADER_BYTES:
        raise CodingError(f"stream truncated at byte {len(data)}: header needs {HEADER_BYTES}")
    count, state = struct.unpack_from("<II", data, 0)
    if expected is not None and count != expected:
        raise CodingError(f"stream declares {count} symbols, expected {expected}")
    if count != contexts.size:
        raise CodingError(f"stream declares {count} symbols but {contexts.size} contexts given")
    if contexts.size and (contexts.min() < 0 or contexts.max() >= n_ctx):
        raise CodingError("context index out of table range")
    if count and not STATE_LOWER_BOUND <= state < (STATE_LOWER_BOUND << 8):
        raise CodingError(f"corrupt stream: initial state {state:#x} out of range")

    rows = tables.tolist()
    pos = HEADER_BYTES
    total = len(data)
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        row = rows[contexts[i]]
        cf = state & 0xFFFF
        # binary search for the bin holding cf
        lo, hi = 0, width - 1
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if row[mid] <= cf:
                lo = mid
            else:
                hi = mid
        start = row[lo]
        freq = row[lo + 1] - start
        out[i] = lo
        state = freq * (state >> 16) + cf - start
        while state < STATE_LOWER_BOUND:
            if pos >= total:
                raise CodingError(f"stream truncated at byte {pos} while decoding symbol {i}")
            state = (state << 8) | data[pos]
            pos += 1

    if pos != total:
        raise CodingError(f"corrupt stream: {total - pos} unconsumed bytes at offset {pos}")
    if state != STATE_LOWER_BOUND:
        raise CodingError(f"corrupt stream: final state {state:#x} != {STATE_LOWER_BOUND:#x}")
    return out


def table_bits(symbols, contexts, tables: np.ndarray) -> float:
    """Shannon bits of index symbols under the quantized tables."""
    symbols = np.asarray(symbols, dtype=np.int64)
    contexts = np.asarray(contexts, dtype=np.int64)
    tables = np.asarray(tables, dtype=np.int64)
    freqs = tables[contexts, symbols + 1] - tables[contexts, symbols]
    if (freqs <= 0).any():
        raise CodingError("zero-frequency symbol in rate accounting")
    return float(np.sum(np.log2(PROB_SCALE) - np.log2(freqs)))
