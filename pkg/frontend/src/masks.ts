import { MaskSpecJson, NUM_PITCHES, STEPS_PER_BAR, TIME_STEPS } from "./types.js";

export type PaintMode = "fix" | "generate";

/**
 * Mask overlay the user paints over the grid. Selections name the region to
 * regenerate (mask 0 serverside); fix-mode selections pin cells instead.
 * The overlay always serializes to a MaskSpec the server reproduces exactly.
 */
export class MaskPainter {
  private generateBars = new Set<number>(); // 1-based bars
  private generatePitches: { low: number; high: number } | null = null;
  private lassoCells = new Set<number>(); // explicit generate cells, both layers
  private inverted = false;

  constructor(readonly steps: number = TIME_STEPS) {}

  get numBars(): number {
    return this.steps / STEPS_PER_BAR;
  }

  selectBarRange(firstBar: number, lastBar: number, mode: PaintMode = "generate"): void {
    for (let bar = firstBar; bar <= lastBar; bar++) this.selectBar(bar, mode);
  }

  selectBar(bar: number, mode: PaintMode = "generate"): void {
    if (bar < 1 || bar > this.numBars) throw new RangeError(`bar ${bar} out of range`);
    if (mode === "generate") this.generateBars.add(bar);
    else this.generateBars.delete(bar);
  }

  selectPitchRange(low: number, high: number, mode: PaintMode = "generate"): void {
    if (low < 0 || high >= NUM_PITCHES || low > high) {
      throw new RangeError(`pitch range ${low}..${high} invalid`);
    }
    this.generatePitches = mode === "generate" ? { low, high } : null;
  }

  lasso(cells: [number, number][], mode: PaintMode = "generate"): void {
    for (const [t, p] of cells) {
      const key = t * NUM_PITCHES + p;
      if (mode === "generate") this.lassoCells.add(key);
      else this.lassoCells.delete(key);
    }
  }

  invert(): void {
    this.inverted = !this.inverted;
  }

  clear(): void {
    this.generateBars.clear();
    this.generatePitches = null;
    this.lassoCells.clear();
    this.inverted = false;
  }

  /** Serialize to MaskSpec JSON with pianoroll-core semantics. No selection
   * means "generate everything" (an all-zero mask). */
  toMaskSpec(): MaskSpecJson {
    const parts: MaskSpecJson[] = [];
    if (this.generateBars.size > 0) {
      parts.push({ kind: "time_bars", bars: [...this.generateBars].sort((a, b) => a - b) });
    }
    if (this.generatePitches) {
      parts.push({ kind: "pitch_range", ...this.generatePitches });
    }
    if (this.lassoCells.size > 0) {
      const ones: number[][] = [];
      for (const key of [...this.lassoCells].sort((a, b) => a - b)) {
        const t = Math.floor(key / NUM_PITCHES);
        const p = key % NUM_PITCHES;
        ones.push([0, t, p], [1, t, p]);
      }
      // lasso marks generate cells; explicit specs list FIXED cells, so wrap
      parts.push({
        kind: "complement",
        spec: { kind: "explicit", shape: [2, this.steps, NUM_PITCHES], ones },
      });
    }
    let spec: MaskSpecJson;
    if (parts.length === 0) {
      spec = { kind: "time_steps", start: 0, stop: this.steps }; // generate all
    } else if (parts.length === 1) {
      spec = parts[0];
    } else {
      // each selection may only shrink the fixed region: intersect the masks,
      // i.e. union of generated regions = complement of union of complements
      spec = {
        kind: "complement",
        spec: { kind: "union", specs: parts.map((s) => ({ kind: "complement", spec: s } as MaskSpecJson)) },
      };
    }
    return this.inverted ? { kind: "complement", spec } : spec;
  }
}
