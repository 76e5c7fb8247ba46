import { RollGrid } from "./grid.js";
import { NUM_PITCHES, NoteEvent } from "./types.js";

/**
 * Decode a grid into notes with the exact server rule: a note spans its
 * onset step plus the consecutive sustain steps after it, stopping early if
 * another onset restarts the pitch; sustain runs without an onset are
 * dropped. Playback and conformance checks both go through this.
 */
export function decodeNotes(grid: RollGrid): { notes: NoteEvent[]; droppedRuns: number } {
  const notes: NoteEvent[] = [];
  let droppedRuns = 0;
  for (let p = 0; p < NUM_PITCHES; p++) {
    const consumed = new Uint8Array(grid.steps);
    for (let t = 0; t < grid.steps; t++) {
      if (!grid.onsetAt(t, p)) continue;
      let end = t + 1;
      while (end < grid.steps && grid.sustainAt(end, p) && !grid.onsetAt(end, p)) {
        end++;
      }
      notes.push({ pitch: p, onsetStep: t, durationSteps: end - t });
      consumed.fill(1, t, end);
    }
    let inRun = false;
    for (let t = 0; t < grid.steps; t++) {
      const orphan = grid.sustainAt(t, p) && !consumed[t];
      if (orphan && !inRun) droppedRuns++;
      inRun = orphan;
    }
  }
  notes.sort((a, b) => a.onsetStep - b.onsetStep || a.pitch - b.pitch);
  return { notes, droppedRuns };
}
