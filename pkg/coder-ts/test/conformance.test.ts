import { describe, expect, it } from "vitest";
import { fileURLToPath } from "node:url";
import path from "node:path";

import { loadFixture } from "../src/fixtures.js";
import { CoderError, decode, encode, validateTables } from "../src/rans.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const fixture = loadFixture(path.join(here, "..", "fixtures", "streams.bin"));

describe("conformance against the reference coder", () => {
  it("fixture is sane", () => {
    expect(fixture.streams.length).toBeGreaterThanOrEqual(1000);
    expect(validateTables(fixture.tables)).toBe(CoderError.None);
    expect(fixture.refEncodeSps).toBeGreaterThan(0);
  });

  it("encodes every stream byte-identically", () => {
    for (const [i, s] of fixture.streams.entries()) {
      const res = encode(s.symbols, s.contexts, fixture.tables);
      expect(res.ok, `stream ${i} failed to encode`).toBe(true);
      if (res.ok) {
        expect(Buffer.from(res.bytes).equals(Buffer.from(s.reference)), `stream ${i} differs`).toBe(
          true,
        );
      }
    }
  });

  it("decodes every reference stream exactly (cross direction)", () => {
    for (const [i, s] of fixture.streams.entries()) {
      const res = decode(s.reference, s.contexts, fixture.tables, s.symbols.length);
      expect(res.ok, `stream ${i} failed to decode`).toBe(true);
      if (res.ok) {
        expect(Buffer.from(res.symbols.buffer, res.symbols.byteOffset, res.symbols.byteLength)
          .equals(Buffer.from(s.symbols.buffer, s.symbols.byteOffset, s.symbols.byteLength)),
          `stream ${i} symbols differ`).toBe(true);
      }
    }
  });

  it("handles the empty stream as header-only", () => {
    const empty = fixture.streams.find((s) => s.symbols.length === 0);
    expect(empty).toBeDefined();
    expect(empty!.reference.length).toBe(8);
    const enc = encode(new Uint16Array(0), new Uint16Array(0), fixture.tables);
    expect(enc.ok && enc.bytes.length === 8).toBe(true);
    const dec = decode(empty!.reference, new Uint16Array(0), fixture.tables, 0);
    expect(dec.ok && dec.symbols.length === 0).toBe(true);
  });
});
