import { ApiClient } from "./client.js";
import { parseChordLane } from "./chords.js";
import { decodeNotes } from "./decode.js";
import { RollGrid } from "./grid.js";
import { SessionHistory } from "./history.js";
import { MaskPainter } from "./masks.js";
import { GenerateRequest, JobJson, MaskSpecJson, NUM_PITCHES, RollJson } from "./types.js";

export interface Take {
  label: string;
  grid: RollGrid;
  droppedSustainRuns: number;
  changedCellsUnderFixedMask: [number, number, number][];
}

/**
 * Editor session: the working grid, the painted mask, the chord lane, the
 * guidance slider, and the take history. Results merged from the service are
 * re-verified cell by cell under the fixed mask (the server guarantees the
 * invariant; the UI still checks it and highlights violations).
 */
export class EditorState {
  grid = new RollGrid();
  mask = new MaskPainter();
  chordLaneText = "";
  guidanceScale = 1.0;
  checkpoint = "";
  seed = 0;
  takes: Take[] = [];
  private history: SessionHistory<RollGrid>;

  constructor(private client?: ApiClient) {
    this.history = new SessionHistory(this.grid, (g) => g.clone());
  }

  commitEdit(): void {
    this.history.push(this.grid);
  }

  undo(): void {
    this.grid = this.history.undo();
  }

  redo(): void {
    this.grid = this.history.redo();
  }

  buildRequest(): GenerateRequest {
    const request: GenerateRequest = {
      checkpoint: this.checkpoint,
      seed: this.seed,
      inpaint: { source: this.grid.toRollJson(), mask: this.mask.toMaskSpec() },
    };
    const guidance: NonNullable<GenerateRequest["guidance"]> = { scale: this.guidanceScale };
    if (this.chordLaneText.trim()) {
      guidance.chords = parseChordLane(this.chordLaneText);
    }
    request.guidance = guidance;
    return request;
  }

  /** Submit, poll, merge the resulting take, and verify the mask invariant. */
  async submitGenerate(): Promise<Take> {
    if (!this.client) throw new Error("no API client configured");
    const request = this.buildRequest();
    const jobId = await this.client.submitGenerate(request);
    const job = await this.client.pollUntilDone(jobId);
    if (job.state === "failed" || !job.result) {
      throw new Error(`generation failed: ${job.error ?? "unknown error"}`);
    }
    const roll = await this.client.fetchRollArtifact(job.result.roll);
    return this.mergeResult(roll, job);
  }

  mergeResult(roll: RollJson, job: JobJson | null = null): Take {
    const result = RollGrid.fromRollJson(roll);
    const take: Take = {
      label: `take ${this.takes.length + 1}`,
      grid: result,
      droppedSustainRuns: job?.result?.dropped_sustain_runs ?? 0,
      changedCellsUnderFixedMask: this.verifyFixedCells(result),
    };
    this.takes.push(take);
    this.grid = result.clone();
    this.commitEdit();
    return take;
  }

  /** Defensive re-check of the sampler invariant: cells fixed by the mask
   * must be bit-identical to the pre-submission grid. */
  verifyFixedCells(result: RollGrid): [number, number, number][] {
    const fixed = maskBitmap(this.mask.toMaskSpec(), this.grid.steps);
    const violations: [number, number, number][] = [];
    for (const [layer, t, p] of this.grid.diff(result)) {
      if (fixed[layer * this.grid.steps * NUM_PITCHES + t * NUM_PITCHES + p]) {
        violations.push([layer, t, p]);
      }
    }
    return violations;
  }

  decodedNotes() {
    return decodeNotes(this.grid);
  }
}

/** Evaluate a MaskSpec to a dense fixed-cell bitmap [2 * steps * pitches],
 * mirroring the server's make_mask semantics. */
export function maskBitmap(spec: MaskSpecJson, steps: number): Uint8Array {
  const size = 2 * steps * NUM_PITCHES;
  const out = new Uint8Array(size);
  const cell = (layer: number, t: number, p: number) =>
    layer * steps * NUM_PITCHES + t * NUM_PITCHES + p;
  switch (spec.kind) {
    case "time_bars": {
      out.fill(1);
      for (const bar of spec.bars) {
        for (let t = (bar - 1) * 16; t < bar * 16; t++) {
          for (let p = 0; p < NUM_PITCHES; p++) {
            out[cell(0, t, p)] = 0;
            out[cell(1, t, p)] = 0;
          }
        }
      }
      return out;
    }
    case "time_steps": {
      out.fill(1);
      for (let t = spec.start; t < spec.stop; t++) {
        for (let p = 0; p < NUM_PITCHES; p++) {
          out[cell(0, t, p)] = 0;
          out[cell(1, t, p)] = 0;
        }
      }
      return out;
    }
    case "pitch_range": {
      out.fill(1);
      for (let t = 0; t < steps; t++) {
        for (let p = spec.low; p <= spec.high; p++) {
          out[cell(0, t, p)] = 0;
          out[cell(1, t, p)] = 0;
        }
      }
      return out;
    }
    case "explicit": {
      for (const [layer, t, p] of spec.ones) out[cell(layer, t, p)] = 1;
      return out;
    }
    case "union": {
      for (const sub of spec.specs) {
        const bitmap = maskBitmap(sub, steps);
        for (let i = 0; i < size; i++) out[i] |= bitmap[i];
      }
      return out;
    }
    case "complement": {
      const bitmap = maskBitmap(spec.spec, steps);
      for (let i = 0; i < size; i++) out[i] = bitmap[i] ? 0 : 1;
      return out;
    }
    default:
      throw new Error(`cannot evaluate mask kind ${(spec as { kind: string }).kind} client-side`);
  }
}
