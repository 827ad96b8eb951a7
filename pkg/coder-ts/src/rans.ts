/**
 * Byte-wise rANS coder, byte-identical to the reference implementation.
 *
 * Wire format (all little-endian):
 *   count:u32 | final_state:u32 | renorm bytes in decode order
 *
 * Scheme: 32-bit state with lower bound L = 1<<16; cumulative-frequency
 * tables sum to exactly 1<<16. Encoding walks symbols in reverse, emitting
 * the state's low byte while `state >= freq << 8` before each symbol;
 * decoding reads strictly forward and must land back on L with every byte
 * consumed.
 *
 * Everything crosses this boundary as flat integer buffers: symbols are
 * table indices (Uint16Array-compatible), contexts index rows of a flat
 * Uint32Array of cumulative tables, and failures come back as error codes
 * rather than exceptions.
 */

export const STATE_LOWER_BOUND = 1 << 16;
export const PROB_SCALE = 1 << 16;
export const HEADER_BYTES = 8;

export enum CoderError {
  None = 0,
  LengthMismatch = 1,
  OutOfSupport = 2,
  ZeroFrequency = 3,
  BadTables = 4,
  Truncated = 5,
  Corrupt = 6,
  CountMismatch = 7,
}

export type EncodeResult =
  | { ok: true; bytes: Uint8Array }
  | { ok: false; code: CoderError; detail: string };

export type DecodeResult =
  | { ok: true; symbols: Uint16Array }
  | { ok: false; code: CoderError; byteOffset: number; detail: string };

export interface CdfTables {
  /** Flat row-major cumulative rows; each row runs 0..65536. */
  values: Uint32Array;
  /** Row length: symbol count + 1. */
  width: number;
}

export function validateTables(tables: CdfTables): CoderError {
  const { values, width } = tables;
  if (width < 2 || values.length % width !== 0) return CoderError.BadTables;
  const rows = values.length / width;
  for (let r = 0; r < rows; r++) {
    const base = r * width;
    if (values[base] !== 0 || values[base + width - 1] !== PROB_SCALE) return CoderError.BadTables;
    for (let i = 1; i < width; i++) {
      if (values[base + i] <= values[base + i - 1]) return CoderError.BadTables;
    }
  }
  return CoderError.None;
}

export function encode(
  symbols: ArrayLike<number>,
  contexts: ArrayLike<number>,
  tables: CdfTables,
): EncodeResult {
  const n = symbols.length;
  if (contexts.length !== n) {
    return { ok: false, code: CoderError.LengthMismatch, detail: "symbols vs contexts" };
  }
  const { values, width } = tables;
  const rows = (values.length / width) | 0;
  const nSym = width - 1;

  let state = STATE_LOWER_BOUND;
  // worst case ~3 renorm bytes per symbol plus slack
  let emitted = new Uint8Array(Math.max(64, n * 3 + 16));
  let pos = 0;
  for (let i = n - 1; i >= 0; i--) {
    const s = symbols[i];
    const c = contexts[i];
    if (c < 0 || c >= rows) {
      return { ok: false, code: CoderError.OutOfSupport, detail: `context ${c} at symbol ${i}` };
    }
    if (s < 0 || s >= nSym) {
      return { ok: false, code: CoderError.OutOfSupport, detail: `symbol ${s} at position ${i}` };
    }
    const base = c * width + s;
    const start = values[base];
    const freq = values[base + 1] - start;
    if (freq <= 0) {
      return { ok: false, code: CoderError.ZeroFrequency, detail: `symbol ${s} in context ${c}` };
    }
    const threshold = freq << 8;
    while (state >= threshold) {
      if (pos === emitted.length) {
        const grown = new Uint8Array(emitted.length * 2);
        grown.set(emitted);
        emitted = grown;
      }
      emitted[pos++] = state & 0xff;
      state >>>= 8;
    }
    state = ((state / freq) | 0) * PROB_SCALE + (state % freq) + start;
  }

  const out = new Uint8Array(HEADER_BYTES + pos);
  const view = new DataView(out.buffer);
  view.setUint32(0, n, true);
  view.setUint32(4, state, true);
  for (let i = 0; i < pos; i++) {
    out[HEADER_BYTES + i] = emitted[pos - 1 - i]; // reverse into decode order
  }
  return { ok: true, bytes: out };
}

export function decode(
  data: Uint8Array,
  contexts: ArrayLike<number>,
  tables: CdfTables,
  expected?: number,
): DecodeResult {
  const { values, width } = tables;
  const rows = (values.length / width) | 0;
  if (data.length < HEADER_BYTES) {
    return {
      ok: false,
      code: CoderError.Truncated,
      byteOffset: data.length,
      detail: `header needs ${HEADER_BYTES} bytes`,
    };
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const count = view.getUint32(0, true);
  let state = view.getUint32(4, true);
  if (expected !== undefined && count !== expected) {
    return {
      ok: false,
      code: CoderError.CountMismatch,
      byteOffset: 0,
      detail: `stream declares ${count}, expected ${expected}`,
    };
  }
  if (count !== contexts.length) {
    return {
      ok: false,
      code: CoderError.CountMismatch,
      byteOffset: 0,
      detail: `stream declares ${count}, got ${contexts.length} contexts`,
    };
  }
  if (count > 0 && (state < STATE_LOWER_BOUND || state >= STATE_LOWER_BOUND * 256)) {
    return { ok: false, code: CoderError.Corrupt, byteOffset: 4, detail: `initial state ${state}` };
  }

  const out = new Uint16Array(count);
  let pos = HEADER_BYTES;
  for (let i = 0; i < count; i++) {
    const c = contexts[i];
    if (c < 0 || c >= rows) {
      return { ok: false, code: CoderError.OutOfSupport, byteOffset: pos, detail: `context ${c}` };
    }
    const base = c * width;
    const cf = state & 0xffff;
    let lo = 0;
    let hi = width - 1;
    while (hi - lo > 1) {
      const mid = (lo + hi) >> 1;
      if (values[base + mid] <= cf) lo = mid;
      else hi = mid;
    }
    const start = values[base + lo];
    const freq = values[base + lo + 1] - start;
    out[i] = lo;
    state = freq * (state >>> 16) + cf - start;
    while (state < STATE_LOWER_BOUND) {
      if (pos >= data.length) {
        return {
          ok: false,
          code: CoderError.Truncated,
          byteOffset: pos,
          detail: `ran out of bytes at symbol ${i}`,
        };
      }
      state = (state << 8) | data[pos++];
    }
  }
  if (pos !== data.length) {
    return {
      ok: false,
      code: CoderError.Corrupt,
      byteOffset: pos,
      detail: `${data.length - pos} unconsumed bytes`,
    };
  }
  if (state !== STATE_LOWER_BOUND) {
    return { ok: false, code: CoderError.Corrupt, byteOffset: pos, detail: `final state ${state}` };
  }
  return { ok: true, symbols: out };
}
