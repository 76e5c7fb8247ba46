import grammar from "./chord-grammar.json" with { type: "json" };
import { BEATS, ChordJson } from "./types.js";

const NOTE_NAMES = grammar.note_names as Record<string, number>;
const QUALITIES = grammar.qualities as Record<string, number[]>;
const ALIASES = grammar.aliases as Record<string, string>;
const NO_CHORD = new Set(grammar.no_chord as string[]);

const SYMBOL_RE = /^([A-Ga-g][#b]?)(?::(\w+))?(?:\/([A-Ga-g][#b]?))?$/;

export function parseChordSymbol(symbol: string): ChordJson {
  const text = symbol.trim();
  if (text === "" || NO_CHORD.has(text.toUpperCase())) {
    return { root: null, bass: null, chroma: [] };
  }
  const match = SYMBOL_RE.exec(text);
  if (!match) throw new Error(`cannot parse chord symbol "${symbol}"`);
  const root = NOTE_NAMES[match[1].toUpperCase()];
  let quality = match[2] ?? "maj";
  quality = ALIASES[quality] ?? quality;
  const intervals = QUALITIES[quality];
  if (root === undefined || intervals === undefined) {
    throw new Error(`unknown chord "${symbol}"`);
  }
  const bass = match[3] ? NOTE_NAMES[match[3].toUpperCase()] : root;
  if (bass === undefined) throw new Error(`unknown bass in "${symbol}"`);
  const chroma = [...new Set(intervals.map((i) => (root + i) % 12))].sort((a, b) => a - b);
  return { root, bass, chroma };
}

/** Parse a chord lane: comma/space separated symbols, each optionally "*n"
 * repeated, expanding to exactly `beats` entries. */
export function parseChordLane(text: string, beats: number = BEATS): ChordJson[] {
  const chords: ChordJson[] = [];
  for (const token of text.trim().split(/[\s,]+/)) {
    if (!token) continue;
    const star = token.indexOf("*");
    if (star >= 0) {
      const count = Number(token.slice(star + 1));
      if (!Number.isInteger(count) || count < 1) {
        throw new Error(`bad repeat count in "${token}"`);
      }
      const chord = parseChordSymbol(token.slice(0, star));
      for (let i = 0; i < count; i++) chords.push(chord);
    } else {
      chords.push(parseChordSymbol(token));
    }
  }
  if (chords.length !== beats) {
    throw new Error(`chord lane expands to ${chords.length} beats, expected ${beats}`);
  }
  return chords;
}
