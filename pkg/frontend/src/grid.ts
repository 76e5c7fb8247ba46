import { NUM_PITCHES, RollJson, TIME_STEPS } from "./types.js";

/**
 * The editable piano-roll grid: two binary layers (onset heads and sustain
 * tails) over a 128-step x 128-pitch lattice. The onset step of a note is
 * never marked in the sustain layer, matching the server codec.
 */
export class RollGrid {
  readonly steps: number;
  onsets: Uint8Array;
  sustains: Uint8Array;

  constructor(steps: number = TIME_STEPS) {
    this.steps = steps;
    this.onsets = new Uint8Array(steps * NUM_PITCHES);
    this.sustains = new Uint8Array(steps * NUM_PITCHES);
  }

  private idx(step: number, pitch: number): number {
    if (step < 0 || step >= this.steps || pitch < 0 || pitch >= NUM_PITCHES) {
      throw new RangeError(`cell (${step}, ${pitch}) outside grid`);
    }
    return step * NUM_PITCHES + pitch;
  }

  onsetAt(step: number, pitch: number): boolean {
    return this.onsets[this.idx(step, pitch)] === 1;
  }

  sustainAt(step: number, pitch: number): boolean {
    return this.sustains[this.idx(step, pitch)] === 1;
  }

  /** Place a note; an onset inside an existing note truncates it (the grid
   * cannot express same-pitch overlap). */
  addNote(pitch: number, onsetStep: number, durationSteps: number): void {
    if (durationSteps < 1) throw new RangeError("duration must be >= 1");
    const end = Math.min(onsetStep + durationSteps, this.steps);
    this.onsets[this.idx(onsetStep, pitch)] = 1;
    this.sustains[this.idx(onsetStep, pitch)] = 0;
    for (let t = onsetStep + 1; t < end; t++) {
      this.sustains[this.idx(t, pitch)] = 1;
      this.onsets[this.idx(t, pitch)] = 0;
    }
  }

  /** Remove the note covering (step, pitch), if any. */
  eraseAt(step: number, pitch: number): void {
    let start = step;
    while (start >= 0 && !this.onsetAt(start, pitch)) {
      if (!this.sustainAt(start, pitch)) return; // empty cell
      start--;
    }
    if (start < 0) {
      // orphan sustain run: clear it
      let t = step;
      while (t < this.steps && this.sustainAt(t, pitch)) {
        this.sustains[this.idx(t, pitch)] = 0;
        t++;
      }
      return;
    }
    this.onsets[this.idx(start, pitch)] = 0;
    let t = start + 1;
    while (t < this.steps && this.sustainAt(t, pitch) && !this.onsetAt(t, pitch)) {
      this.sustains[this.idx(t, pitch)] = 0;
      t++;
    }
  }

  clear(): void {
    this.onsets.fill(0);
    this.sustains.fill(0);
  }

  clone(): RollGrid {
    const copy = new RollGrid(this.steps);
    copy.onsets.set(this.onsets);
    copy.sustains.set(this.sustains);
    return copy;
  }

  equals(other: RollGrid): boolean {
    if (other.steps !== this.steps) return false;
    return (
      this.onsets.every((v, i) => v === other.onsets[i]) &&
      this.sustains.every((v, i) => v === other.sustains[i])
    );
  }

  /** Cells (layer, step, pitch) whose value differs from `other`. */
  diff(other: RollGrid): [number, number, number][] {
    const out: [number, number, number][] = [];
    for (let t = 0; t < this.steps; t++) {
      for (let p = 0; p < NUM_PITCHES; p++) {
        const i = t * NUM_PITCHES + p;
        if (this.onsets[i] !== other.onsets[i]) out.push([0, t, p]);
        if (this.sustains[i] !== other.sustains[i]) out.push([1, t, p]);
      }
    }
    return out;
  }

  toRollJson(): RollJson {
    const onsets: [number, number][] = [];
    const sustains: [number, number][] = [];
    for (let t = 0; t < this.steps; t++) {
      for (let p = 0; p < NUM_PITCHES; p++) {
        if (this.onsets[t * NUM_PITCHES + p]) onsets.push([t, p]);
        if (this.sustains[t * NUM_PITCHES + p]) sustains.push([t, p]);
      }
    }
    return { shape: [2, this.steps, NUM_PITCHES], onsets, sustains };
  }

  static fromRollJson(json: RollJson): RollGrid {
    const grid = new RollGrid(json.shape[1]);
    for (const [t, p] of json.onsets) grid.onsets[grid.idx(t, p)] = 1;
    for (const [t, p] of json.sustains) grid.sustains[grid.idx(t, p)] = 1;
    return grid;
  }
}
