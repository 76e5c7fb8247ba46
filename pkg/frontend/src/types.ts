/** Wire formats shared with the generation service (/v1 API). */

export const TIME_STEPS = 128;
export const NUM_PITCHES = 128;
export const STEPS_PER_BAR = 16;
export const STEPS_PER_BEAT = 4;
export const BEATS = 32;

/** Sparse piano-roll interchange: cell lists of [time, pitch]. */
export interface RollJson {
  shape: [number, number, number];
  onsets: [number, number][];
  sustains: [number, number][];
}

export type MaskSpecJson =
  | { kind: "time_bars"; bars: number[] }
  | { kind: "time_steps"; start: number; stop: number }
  | { kind: "pitch_range"; low: number; high: number }
  | { kind: "part"; part: string }
  | { kind: "explicit"; shape: number[]; ones: number[][] }
  | { kind: "union"; specs: MaskSpecJson[] }
  | { kind: "complement"; spec: MaskSpecJson };

export interface ChordJson {
  root: number | null;
  bass: number | null;
  chroma: number[];
}

export interface GenerateRequest {
  checkpoint: string;
  seed: number;
  sync?: boolean;
  guidance?: { scale: number; chords?: ChordJson[]; texture_src?: RollJson };
  inpaint?: { source: RollJson; mask: MaskSpecJson };
  long?: { prompt: RollJson; iterations: number; overlap_bars?: number };
}

export interface JobJson {
  id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  result: { roll: string; midi: string; dropped_sustain_runs: number } | null;
  error: string | null;
}

export interface NoteEvent {
  pitch: number;
  onsetStep: number;
  durationSteps: number;
}
