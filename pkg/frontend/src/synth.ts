import { NoteEvent, STEPS_PER_BEAT } from "./types.js";

/**
 * Minimal built-in synthesizer: one triangle oscillator per note with a
 * short attack/release envelope. Playback is driven by the decoded note
 * list, so what you hear is exactly what the codec would write to MIDI.
 * Without an AudioContext (headless or blocked autoplay) the synth reports
 * itself unavailable and the UI stays visual-only.
 */
export class Synth {
  private context: AudioContext | null = null;
  private playing: { osc: OscillatorNode; gain: GainNode }[] = [];

  get available(): boolean {
    if (this.context) return true;
    try {
      const Ctor = (globalThis as { AudioContext?: typeof AudioContext }).AudioContext;
      if (!Ctor) return false;
      this.context = new Ctor();
      return true;
    } catch {
      return false;
    }
  }

  /** Schedule a take; returns the number of audible events, 0 when silent
   * or when audio is unavailable. */
  play(notes: NoteEvent[], tempoBpm = 120): number {
    if (!this.available || notes.length === 0) return 0;
    this.stop();
    const ctx = this.context!;
    const secondsPerStep = 60 / tempoBpm / STEPS_PER_BEAT;
    const base = ctx.currentTime + 0.05;
    for (const note of notes) {
      const start = base + note.onsetStep * secondsPerStep;
      const stop = start + note.durationSteps * secondsPerStep;
      const osc = ctx.createOscillator();
      osc.type = "triangle";
      osc.frequency.value = 440 * 2 ** ((note.pitch - 69) / 12);
      const gain = ctx.createGain();
      gain.gain.setValueAtTime(0, start);
      gain.gain.linearRampToValueAtTime(0.18, start + 0.01);
      gain.gain.setValueAtTime(0.18, Math.max(start + 0.01, stop - 0.03));
      gain.gain.linearRampToValueAtTime(0, stop);
      osc.connect(gain).connect(ctx.destination);
      osc.start(start);
      osc.stop(stop + 0.01);
      this.playing.push({ osc, gain });
    }
    return notes.length;
  }

  stop(): void {
    for (const { osc } of this.playing) {
      try {
        osc.stop();
      } catch {
        // already stopped
      }
    }
    this.playing = [];
  }
}
