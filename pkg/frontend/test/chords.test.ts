import { describe, expect, it } from "vitest";
import { parseChordLane, parseChordSymbol } from "../src/chords.js";

describe("chord symbol grammar (shared with the server)", () => {
  it("parses plain and slash chords", () => {
    expect(parseChordSymbol("C:maj")).toEqual({ root: 0, bass: 0, chroma: [0, 4, 7] });
    expect(parseChordSymbol("A:min/C")).toEqual({ root: 9, bass: 0, chroma: [0, 4, 9] });
    expect(parseChordSymbol("Bb:dom7")).toEqual({ root: 10, bass: 10, chroma: [2, 5, 8, 10] });
    expect(parseChordSymbol("G")).toEqual({ root: 7, bass: 7, chroma: [2, 7, 11] });
    expect(parseChordSymbol("F#:min7").root).toBe(6);
  });

  it("supports the dom7 alias and no-chord markers", () => {
    expect(parseChordSymbol("C:7")).toEqual(parseChordSymbol("C:dom7"));
    expect(parseChordSymbol("N")).toEqual({ root: null, bass: null, chroma: [] });
    expect(parseChordSymbol("nc")).toEqual({ root: null, bass: null, chroma: [] });
  });

  it("rejects unknown roots and qualities", () => {
    expect(() => parseChordSymbol("H:maj")).toThrow();
    expect(() => parseChordSymbol("C:weird")).toThrow();
  });

  it("expands repeat counts to a full 32-beat lane", () => {
    const lane = parseChordLane("C:maj*8, F:maj*8 G:maj*8,C:maj*8");
    expect(lane.length).toBe(32);
    expect(lane[8]).toEqual({ root: 5, bass: 5, chroma: [0, 5, 9] });
    expect(() => parseChordLane("C:maj*3")).toThrow(/expands to 3/);
    expect(() => parseChordLane("C:maj*x C:maj*31")).toThrow(/repeat/);
  });
});
