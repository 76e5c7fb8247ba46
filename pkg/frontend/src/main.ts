import { ApiClient } from "./client.js";
import { decodeNotes } from "./decode.js";
import { EditorState, maskBitmap } from "./state.js";
import { Synth } from "./synth.js";
import { NUM_PITCHES, STEPS_PER_BAR } from "./types.js";

const CELL_W = 7;
const CELL_H = 5;
const VISIBLE_PITCHES = { low: 24, high: 107 }; // C1..B7 keeps the grid on screen

type Tool = "draw" | "erase" | "mask-bars" | "mask-pitches";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class StudioApp {
  state: EditorState;
  synth = new Synth();
  tool: Tool = "draw";
  activeTake = -1;
  private canvas: HTMLCanvasElement;
  private status: HTMLElement;

  constructor() {
    const client = new ApiClient("");
    this.state = new EditorState(client);
    this.canvas = el<HTMLCanvasElement>("grid");
    this.status = el("status");
    this.canvas.width = 128 * CELL_W;
    this.canvas.height = (VISIBLE_PITCHES.high - VISIBLE_PITCHES.low + 1) * CELL_H;
    this.bind();
    this.render();
  }

  private bind(): void {
    this.canvas.addEventListener("mousedown", (ev) => this.onCanvasClick(ev));
    el("tool-draw").onclick = () => (this.tool = "draw");
    el("tool-erase").onclick = () => (this.tool = "erase");
    el("tool-mask-bars").onclick = () => (this.tool = "mask-bars");
    el("tool-mask-pitches").onclick = () => (this.tool = "mask-pitches");
    el("mask-invert").onclick = () => {
      this.state.mask.invert();
      this.render();
    };
    el("mask-clear").onclick = () => {
      this.state.mask.clear();
      this.render();
    };
    el("undo").onclick = () => {
      this.state.undo();
      this.render();
    };
    el("redo").onclick = () => {
      this.state.redo();
      this.render();
    };
    const slider = el<HTMLInputElement>("guidance");
    slider.oninput = () => {
      this.state.guidanceScale = Number(slider.value);
      el("guidance-value").textContent = slider.value;
    };
    el<HTMLInputElement>("chord-lane").onchange = (ev) => {
      this.state.chordLaneText = (ev.target as HTMLInputElement).value;
    };
    el<HTMLInputElement>("checkpoint").onchange = (ev) => {
      this.state.checkpoint = (ev.target as HTMLInputElement).value;
    };
    el<HTMLInputElement>("seed").onchange = (ev) => {
      this.state.seed = Number((ev.target as HTMLInputElement).value);
    };
    el("generate").onclick = () => void this.generate();
    el("play").onclick = () => this.audition();
    el("stop").onclick = () => this.synth.stop();
    el("take-prev").onclick = () => this.switchTake(-1);
    el("take-next").onclick = () => this.switchTake(1);
  }

  private cellAt(ev: MouseEvent): { step: number; pitch: number } {
    const rect = this.canvas.getBoundingClientRect();
    const step = Math.floor((ev.clientX - rect.left) / CELL_W);
    const pitch = VISIBLE_PITCHES.high - Math.floor((ev.clientY - rect.top) / CELL_H);
    return { step, pitch };
  }

  private onCanvasClick(ev: MouseEvent): void {
    const { step, pitch } = this.cellAt(ev);
    if (step < 0 || step >= 128 || pitch < 0 || pitch >= NUM_PITCHES) return;
    if (this.tool === "draw") {
      this.state.grid.addNote(pitch, step, 4);
      this.state.commitEdit();
    } else if (this.tool === "erase") {
      this.state.grid.eraseAt(step, pitch);
      this.state.commitEdit();
    } else if (this.tool === "mask-bars") {
      this.state.mask.selectBar(Math.floor(step / STEPS_PER_BAR) + 1);
    } else if (this.tool === "mask-pitches") {
      this.state.mask.selectPitchRange(Math.max(0, pitch - 6),
                                       Math.min(NUM_PITCHES - 1, pitch + 6));
    }
    this.render();
  }

  private async generate(): Promise<void> {
    this.status.textContent = "generating...";
    try {
      const take = await this.state.submitGenerate();
      this.activeTake = this.state.takes.length - 1;
      const bad = take.changedCellsUnderFixedMask.length;
      this.status.textContent = bad
        ? `done, but ${bad} fixed cells changed (server invariant violated!)`
        : `done: ${take.label}, dropped sustain runs ${take.droppedSustainRuns}`;
    } catch (err) {
      this.status.textContent = `error: ${(err as Error).message}`;
    }
    this.render();
  }

  private audition(): void {
    const { notes } = decodeNotes(this.state.grid);
    const played = this.synth.play(notes);
    this.status.textContent = this.synth.available
      ? `playing ${played} notes`
      : "audio unavailable: visual-only mode";
  }

  private switchTake(direction: number): void {
    if (this.state.takes.length === 0) return;
    this.activeTake = (this.activeTake + direction + this.state.takes.length)
      % this.state.takes.length;
    this.state.grid = this.state.takes[this.activeTake].grid.clone();
    this.status.textContent = `viewing ${this.state.takes[this.activeTake].label}`;
    this.render();
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.fillStyle = "#14151a";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);

    const fixed = this.maskBitmapSafe();
    for (let t = 0; t < 128; t++) {
      for (let p = VISIBLE_PITCHES.low; p <= VISIBLE_PITCHES.high; p++) {
        const x = t * CELL_W;
        const y = (VISIBLE_PITCHES.high - p) * CELL_H;
        if (t % STEPS_PER_BAR === 0) {
          ctx.fillStyle = "#23252d";
          ctx.fillRect(x, y, 1, CELL_H);
        }
        if (fixed && !fixed[t * NUM_PITCHES + p]) {
          ctx.fillStyle = "rgba(90, 120, 220, 0.18)"; // generate region tint
          ctx.fillRect(x, y, CELL_W, CELL_H);
        }
        // sustain bar in green, onset head as the red dot at the note front
        if (this.state.grid.sustainAt(t, p)) {
          ctx.fillStyle = "#3fa34d";
          ctx.fillRect(x, y + 1, CELL_W, CELL_H - 2);
        }
        if (this.state.grid.onsetAt(t, p)) {
          ctx.fillStyle = "#d64545";
          ctx.fillRect(x, y + 1, CELL_W - 1, CELL_H - 2);
        }
      }
    }
  }

  private maskBitmapSafe(): Uint8Array | null {
    try {
      // render layer 0 of the fixed bitmap as the overlay
      return maskBitmap(this.state.mask.toMaskSpec(), 128).subarray(0, 128 * NUM_PITCHES);
    } catch {
      return null;
    }
  }
}

declare global {
  interface Window {
    studio?: StudioApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("grid")) {
  window.studio = new StudioApp();
}
