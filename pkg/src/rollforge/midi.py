"""Minimal Standard MIDI File reader and writer.

Covers exactly what the piano-roll codec needs: format 0/1 files, note
on/off pairing, tempo, time signature, and track names. Running status
and variable-length quantities are handled; unknown events are skipped.
SMPTE time division is rejected.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field


class MidiFormatError(ValueError):
    """Raised when bytes cannot be parsed as a supported SMF."""


@dataclass
class MidiNote:
    pitch: int
    onset_tick: int
    duration_ticks: int
    velocity: int = 80
    channel: int = 0
    track: int = 0


@dataclass
class MidiSong:
    ticks_per_beat: int
    notes: list[MidiNote] = field(default_factory=list)
    # (tick, numerator, denominator)
    time_signatures: list[tuple[int, int, int]] = field(default_factory=list)
    # (tick, microseconds per quarter note)
    tempos: list[tuple[int, int]] = field(default_factory=list)
    track_names: list[str] = field(default_factory=list)


def _read_vlq(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    while True:
        if pos >= len(data):
            raise MidiFormatError("truncated variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos


def _write_vlq(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative delta time")
    chunks = [value & 0x7F]
    value >>= 7
    while value:
        chunks.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(chunks))


# Data-byte counts for channel messages, keyed by the high status nibble.
_CHANNEL_DATA_BYTES = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


def _parse_track(data: bytes, track_index: int, song: MidiSong) -> str:
    """Parse one MTrk payload, appending notes/meta into song. Returns track name."""
    pos = 0
    tick = 0
    running_status: int | None = None
    track_name = ""
    # FIFO of onsets per (channel, pitch) so overlapping same-pitch notes pair up.
    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}

    while pos < len(data):
        delta, pos = _read_vlq(data, pos)
        tick += delta
        if pos >= len(data):
            raise MidiFormatError("truncated event")
        status = data[pos]
        if status & 0x80:
            pos += 1
            if status < 0xF0:
                running_status = status
        else:
            if running_status is None:
                raise MidiFormatError("data byte without running status")
            status = running_status

        if status == 0xFF:  # meta
            if pos >= len(data):
                raise MidiFormatError("truncated meta event")
            meta_type = data[pos]
            pos += 1
            length, pos = _read_vlq(data, pos)
            payload = data[pos:pos + length]
            if len(payload) < length:
                raise MidiFormatError("truncated meta payload")
            pos += length
            if meta_type == 0x03 and not track_name:
                track_name = payload.decode("latin-1").strip()
            elif meta_type == 0x51 and length == 3:
                song.tempos.append((tick, int.from_bytes(payload, "big")))
            elif meta_type == 0x58 and length >= 2:
                song.time_signatures.append((tick, payload[0], 1 << payload[1]))
            elif meta_type == 0x2F:
                break
        elif status in (0xF0, 0xF7):  # sysex
            length, pos = _read_vlq(data, pos)
            pos += length
        else:
            kind = status >> 4
            nbytes = _CHANNEL_DATA_BYTES.get(kind)
            if nbytes is None:
                raise MidiFormatError(f"unsupported status byte 0x{status:02x}")
            if pos + nbytes > len(data):
                raise MidiFormatError("truncated channel event")
            d = data[pos:pos + nbytes]
            pos += nbytes
            channel = status & 0x0F
            if kind == 0x9 and d[1] > 0:  # note on
                open_notes.setdefault((channel, d[0]), []).append((tick, d[1]))
            elif kind == 0x8 or (kind == 0x9 and d[1] == 0):  # note off
                stack = open_notes.get((channel, d[0]))
                if stack:
                    onset, velocity = stack.pop(0)
                    song.notes.append(MidiNote(
                        pitch=d[0], onset_tick=onset,
                        duration_ticks=max(1, tick - onset),
                        velocity=velocity, channel=channel, track=track_index))
    # Unterminated notes are dropped silently; well-formed files never hit this.
    return track_name


def parse_midi(data: bytes) -> MidiSong:
    """Parse SMF bytes into a MidiSong with absolute-tick note events."""
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiFormatError("missing MThd header")
    header_len, fmt, ntracks, division = struct.unpack(">IHHH", data[4:14])
    if header_len < 6:
        raise MidiFormatError("bad MThd length")
    if fmt not in (0, 1):
        raise MidiFormatError(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise MidiFormatError("SMPTE time division not supported")
    if division == 0:
        raise MidiFormatError("zero ticks per beat")

    song = MidiSong(ticks_per_beat=division)
    pos = 8 + header_len
    track_index = 0
    while track_index < ntracks and pos < len(data):
        if data[pos:pos + 4] != b"MTrk":
            raise MidiFormatError("missing MTrk chunk")
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        payload = data[pos + 8:pos + 8 + length]
        if len(payload) < length:
            raise MidiFormatError("truncated track chunk")
        name = _parse_track(payload, track_index, song)
        song.track_names.append(name)
        pos += 8 + length
        track_index += 1
    if track_index < ntracks:
        raise MidiFormatError("fewer tracks than header declares")

    song.notes.sort(key=lambda n: (n.onset_tick, n.pitch, n.track))
    song.time_signatures.sort(key=lambda ts: ts[0])
    song.tempos.sort(key=lambda t: t[0])
    return song


def write_midi(notes: list[MidiNote], ticks_per_beat: int = 480,
               tempo_bpm: float = 120.0, numerator: int = 4,
               denominator: int = 4, track_name: str = "") -> bytes:
    """Serialize notes into a format-0 SMF at a fixed tempo and meter."""
    events: list[tuple[int, int, bytes]] = []  # (tick, sort order, payload)
    usec_per_beat = round(60_000_000 / tempo_bpm)
    events.append((0, 0, b"\xff\x51\x03" + usec_per_beat.to_bytes(3, "big")))
    denom_pow = max(0, denominator.bit_length() - 1)
    events.append((0, 0, bytes([0xFF, 0x58, 0x04, numerator, denom_pow, 24, 8])))
    if track_name:
        name = track_name.encode("latin-1")
        events.append((0, 0, b"\xff\x03" + _write_vlq(len(name)) + name))
    for note in notes:
        if not 0 <= note.pitch <= 127:
            raise ValueError(f"pitch {note.pitch} out of MIDI range")
        ch = note.channel & 0x0F
        vel = min(127, max(1, note.velocity))
        off_tick = note.onset_tick + note.duration_ticks
        # Note-offs sort before note-ons at the same tick so back-to-back
        # repeats of a pitch do not collapse into one held note.
        events.append((note.onset_tick, 2, bytes([0x90 | ch, note.pitch, vel])))
        events.append((off_tick, 1, bytes([0x80 | ch, note.pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1]))

    body = bytearray()
    last_tick = 0
    for tick, _, payload in events:
        body += _write_vlq(tick - last_tick)
        body += payload
        last_tick = tick
    body += _write_vlq(0) + b"\xff\x2f\x00"

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ticks_per_beat)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
