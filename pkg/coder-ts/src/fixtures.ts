/**
 * Parser for the conformance-vector file emitted by the reference coder
 * (scripts/make_coder_vectors.py in the main package).
 */

import { readFileSync } from "node:fs";
import type { CdfTables } from "./rans.js";

export interface FixtureStream {
  symbols: Uint16Array;
  contexts: Uint16Array;
  reference: Uint8Array;
}

export interface Fixture {
  tables: CdfTables;
  refEncodeSps: number;
  refDecodeSps: number;
  streams: FixtureStream[];
}

export function parseFixture(buf: Uint8Array): Fixture {
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (buf.length < 4 || String.fromCharCode(buf[0], buf[1], buf[2], buf[3]) !== "RVF1") {
    throw new Error("bad fixture magic");
  }
  let pos = 4;
  const nTables = view.getUint32(pos, true);
  const width = view.getUint32(pos + 4, true);
  pos += 8;
  const values = new Uint32Array(nTables * width);
  for (let i = 0; i < values.length; i++, pos += 4) {
    values[i] = view.getUint32(pos, true);
  }
  const refEncodeSps = view.getFloat64(pos, true);
  const refDecodeSps = view.getFloat64(pos + 8, true);
  pos += 16;
  const nStreams = view.getUint32(pos, true);
  pos += 4;
  const streams: FixtureStream[] = [];
  for (let s = 0; s < nStreams; s++) {
    const n = view.getUint32(pos, true);
    pos += 4;
    const symbols = new Uint16Array(n);
    for (let i = 0; i < n; i++, pos += 2) symbols[i] = view.getUint16(pos, true);
    const contexts = new Uint16Array(n);
    for (let i = 0; i < n; i++, pos += 2) contexts[i] = view.getUint16(pos, true);
    const refLen = view.getUint32(pos, true);
    pos += 4;
    const reference = buf.subarray(pos, pos + refLen);
    pos += refLen;
    streams.push({ symbols, contexts, reference });
  }
  if (pos !== buf.length) throw new Error(`fixture has ${buf.length - pos} trailing bytes`);
  return { tables: { values, width }, refEncodeSps, refDecodeSps, streams };
}

export function loadFixture(path: string): Fixture {
  return parseFixture(new Uint8Array(readFileSync(path)));
}

/** Deterministic 32-bit PRNG for property and fuzz tests. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}
