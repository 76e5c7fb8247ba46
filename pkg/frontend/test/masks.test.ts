import { describe, expect, it } from "vitest";
import { MaskPainter } from "../src/masks.js";
import { maskBitmap } from "../src/state.js";
import { NUM_PITCHES } from "../src/types.js";

describe("mask painting", () => {
  it("painting bars {3,4,5,7} produces the exact MaskSpec JSON", () => {
    const painter = new MaskPainter();
    painter.selectBarRange(3, 5);
    painter.selectBar(7);
    expect(painter.toMaskSpec()).toEqual({ kind: "time_bars", bars: [3, 4, 5, 7] });
    expect(JSON.stringify(painter.toMaskSpec()))
      .toBe('{"kind":"time_bars","bars":[3,4,5,7]}');
  });

  it("no selection means a full-generate mask", () => {
    const spec = new MaskPainter().toMaskSpec();
    expect(spec).toEqual({ kind: "time_steps", start: 0, stop: 128 });
    const bitmap = maskBitmap(spec, 128);
    expect(bitmap.every((v) => v === 0)).toBe(true);
  });

  it("invert emits a complement spec", () => {
    const painter = new MaskPainter();
    painter.selectBar(1);
    painter.invert();
    expect(painter.toMaskSpec()).toEqual({
      kind: "complement",
      spec: { kind: "time_bars", bars: [1] },
    });
  });

  it("bar selections mark exactly the named bars as generated", () => {
    const painter = new MaskPainter();
    painter.selectBar(3);
    painter.selectBar(7);
    const bitmap = maskBitmap(painter.toMaskSpec(), 128);
    for (let t = 0; t < 128; t++) {
      const bar = Math.floor(t / 16) + 1;
      const expected = bar === 3 || bar === 7 ? 0 : 1;
      expect(bitmap[t * NUM_PITCHES]).toBe(expected);
      expect(bitmap[128 * NUM_PITCHES + t * NUM_PITCHES + 64]).toBe(expected);
    }
  });

  it("fix-mode deselects a painted bar", () => {
    const painter = new MaskPainter();
    painter.selectBarRange(1, 3);
    painter.selectBar(2, "fix");
    expect(painter.toMaskSpec()).toEqual({ kind: "time_bars", bars: [1, 3] });
  });

  it("combined bar and pitch selections union their generated regions", () => {
    const painter = new MaskPainter();
    painter.selectBar(1);
    painter.selectPitchRange(60, 71);
    const bitmap = maskBitmap(painter.toMaskSpec(), 128);
    expect(bitmap[0 * NUM_PITCHES + 0]).toBe(0); // bar 1, any pitch
    expect(bitmap[32 * NUM_PITCHES + 65]).toBe(0); // pitch range, any bar
    expect(bitmap[32 * NUM_PITCHES + 40]).toBe(1); // untouched region stays fixed
  });

  it("lasso cells serialize as an explicit complement", () => {
    const painter = new MaskPainter();
    painter.lasso([[10, 60], [11, 60]]);
    const bitmap = maskBitmap(painter.toMaskSpec(), 128);
    expect(bitmap[10 * NUM_PITCHES + 60]).toBe(0);
    expect(bitmap[128 * NUM_PITCHES + 11 * NUM_PITCHES + 60]).toBe(0);
    expect(bitmap[12 * NUM_PITCHES + 60]).toBe(1);
  });

  it("rejects out-of-range selections", () => {
    const painter = new MaskPainter();
    expect(() => painter.selectBar(0)).toThrow();
    expect(() => painter.selectBar(9)).toThrow();
    expect(() => painter.selectPitchRange(100, 40)).toThrow();
  });
});
