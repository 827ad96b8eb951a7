/**
 * Throughput benchmark on a 10^6-symbol stream, logged against the
 * reference coder's measured speed (stored in the fixture). Advisory:
 * the conformance tests gate correctness, this only reports the ratio.
 */

import path from "node:path";
import { fileURLToPath } from "node:url";

import { loadFixture, mulberry32 } from "../src/fixtures.js";
import { decode, encode } from "../src/rans.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const fixture = loadFixture(path.join(here, "..", "..", "fixtures", "streams.bin"));

const N = 1_000_000;
const rand = mulberry32(99);
const rows = fixture.tables.values.length / fixture.tables.width;
const contexts = new Uint16Array(N);
const symbols = new Uint16Array(N);
for (let i = 0; i < N; i++) {
  contexts[i] = Math.floor(rand() * rows);
  // sample from the table's own distribution via inverse CDF
  const u = Math.floor(rand() * 65536);
  const base = contexts[i] * fixture.tables.width;
  let lo = 0;
  let hi = fixture.tables.width - 1;
  while (hi - lo > 1) {
    const mid = (lo + hi) >> 1;
    if (fixture.tables.values[base + mid] <= u) lo = mid;
    else hi = mid;
  }
  symbols[i] = lo;
}

let t0 = performance.now();
const enc = encode(symbols, contexts, fixture.tables);
let t1 = performance.now();
if (!enc.ok) throw new Error("encode failed");
const encodeSps = N / ((t1 - t0) / 1000);

t0 = performance.now();
const dec = decode(enc.bytes, contexts, fixture.tables, N);
t1 = performance.now();
if (!dec.ok) throw new Error("decode failed");
const decodeSps = N / ((t1 - t0) / 1000);

for (let i = 0; i < N; i++) {
  if (dec.symbols[i] !== symbols[i]) throw new Error(`mismatch at ${i}`);
}

console.log(`stream: ${N} symbols, ${enc.bytes.length} bytes`);
console.log(
  `encode: ${Math.round(encodeSps).toLocaleString()} sym/s ` +
    `(${(encodeSps / fixture.refEncodeSps).toFixed(1)}x reference)`,
);
console.log(
  `decode: ${Math.round(decodeSps).toLocaleString()} sym/s ` +
    `(${(decodeSps / fixture.refDecodeSps).toFixed(1)}x reference)`,
);
const ratio = Math.min(encodeSps / fixture.refEncodeSps, decodeSps / fixture.refDecodeSps);
console.log(`advisory 10x target: ${ratio >= 10 ? "met" : "NOT met"} (${ratio.toFixed(1)}x)`);
