"""Standard MIDI File (format 0/1) parsing and writing.

Only the content needed for onset-based drum modeling is kept: note onsets
with velocity, the tempo map and time signatures.  Note durations are
discarded (note-on with velocity 0 counts as a note-off, per the MIDI
convention).  The reader honors running status; the writer always emits
explicit status bytes.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

from .errors import MalformedHeader, TruncatedChunk, UnsupportedFormat

logger = logging.getLogger(__name__)

DEFAULT_TEMPO_USPQ = 500_000  # 120 BPM, the MIDI default when no tempo event exists

_META_TEMPO = 0x51
_META_TIME_SIGNATURE = 0x58
_META_END_OF_TRACK = 0x2F


@dataclass(frozen=True, slots=True)
class NoteEvent:
    """A drum hit: onset tick, pitch, onset velocity and channel."""

    tick: int
    pitch: int
    velocity: int
    channel: int = 9

    def __post_init__(self) -> None:
        if self.tick < 0:
            raise ValueError(f"negative tick {self.tick}")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside 0-127")
        if not 0 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 0-127")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel {self.channel} outside 0-15")


@dataclass(slots=True)
class MidiSequence:
    """Parsed SMF content: resolution, tempo map, time signatures and note onsets.

    tempo_events are (tick, microseconds per quarter note) pairs sorted by
    tick; time_signature_events are (tick, numerator, denominator).
    """

    ppq: int
    tempo_events: list[tuple[int, int]] = field(default_factory=lambda: [(0, DEFAULT_TEMPO_USPQ)])
    time_signature_events: list[tuple[int, int, int]] = field(default_factory=list)
    notes: list[NoteEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.ppq <= 0:
            raise ValueError(f"ppq must be positive, got {self.ppq}")
        if not self.tempo_events:
            self.tempo_events = [(0, DEFAULT_TEMPO_USPQ)]
        self.tempo_events = sorted(self.tempo_events, key=lambda e: e[0])

    @property
    def initial_bpm(self) -> float:
        return 60e6 / self.tempo_events[0][1]


class _Reader:
    """Cursor over a byte buffer with big-endian and VLQ reads."""

    __slots__ = ("data", "pos", "end")

    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else min(end, len(data))

    def remaining(self) -> int:
        return self.end - self.pos

    def bytes(self, n: int) -> bytes:
        if self.remaining() < n:
            raise TruncatedChunk(f"needed {n} bytes at offset {self.pos}, have {self.remaining()}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.bytes(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.bytes(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.bytes(4))[0]

    def vlq(self) -> int:
        value = 0
        for _ in range(4):
            b = self.u8()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise TruncatedChunk("variable-length quantity longer than 4 bytes")


def _encode_vlq(value: int) -> bytes:
    if value < 0 or value > 0x0FFFFFFF:
        raise ValueError(f"delta time {value} outside VLQ range")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


# Data byte count for channel messages, keyed by high nibble of the status.
_CHANNEL_DATA_BYTES = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


def parse_smf(data: bytes) -> MidiSequence:
    """Parse SMF bytes into a MidiSequence of note onsets.

    Raises MalformedHeader, UnsupportedFormat (format 2 or SMPTE division)
    or TruncatedChunk.  Unpaired note-ons are reported and dropped; unmatched
    note-offs are ignored.
    """
    reader = _Reader(data)
    if reader.remaining() < 8 or reader.bytes(4) != b"MThd":
        raise MalformedHeader("missing MThd chunk")
    header_len = reader.u32()
    if header_len < 6 or reader.remaining() < header_len:
        raise MalformedHeader(f"bad header length {header_len}")
    header = _Reader(data, reader.pos, reader.pos + header_len)
    fmt = header.u16()
    ntrks = header.u16()
    division = header.u16()
    reader.bytes(header_len)  # consume, including any extra header bytes
    if fmt == 2:
        raise UnsupportedFormat("SMF format 2 is not supported")
    if fmt not in (0, 1):
        raise UnsupportedFormat(f"unknown SMF format {fmt}")
    if division & 0x8000:
        raise UnsupportedFormat("SMPTE time division is not supported")
    if division == 0:
        raise MalformedHeader("time division of 0 ticks per quarter")

    notes: list[NoteEvent] = []
    tempo_events: list[tuple[int, int]] = []
    time_signature_events: list[tuple[int, int, int]] = []
    unpaired = 0
    tracks_read = 0

    while tracks_read < ntrks and reader.remaining() > 0:
        if reader.remaining() < 8:
            raise TruncatedChunk("trailing bytes too short for a chunk header")
        chunk_type = reader.bytes(4)
        chunk_len = reader.u32()
        if reader.remaining() < chunk_len:
            raise TruncatedChunk(
                f"chunk {chunk_type!r} declares {chunk_len} bytes, only {reader.remaining()} left"
            )
        if chunk_type != b"MTrk":
            reader.bytes(chunk_len)  # unknown chunks are skipped per the SMF spec
            continue
        track = _Reader(data, reader.pos, reader.pos + chunk_len)
        reader.bytes(chunk_len)
        unpaired += _parse_track(track, notes, tempo_events, time_signature_events)
        tracks_read += 1

    if tracks_read < ntrks:
        raise TruncatedChunk(f"header declared {ntrks} tracks, found {tracks_read}")
    if unpaired:
        logger.warning("dropped %d unpaired note-on(s)", unpaired)

    notes.sort(key=lambda n: (n.tick, n.channel, n.pitch, n.velocity))
    tempo_events.sort(key=lambda e: e[0])
    time_signature_events.sort(key=lambda e: e[0])
    if not tempo_events:
        tempo_events = [(0, DEFAULT_TEMPO_USPQ)]
    return MidiSequence(
        ppq=division,
        tempo_events=tempo_events,
        time_signature_events=time_signature_events,
        notes=notes,
    )


def _parse_track(
    track: _Reader,
    notes: list[NoteEvent],
    tempo_events: list[tuple[int, int]],
    time_signature_events: list[tuple[int, int, int]],
) -> int:
    """Walk one MTrk chunk; returns the number of unpaired note-ons dropped."""
    tick = 0
    running_status: int | None = None
    # FIFO of (onset tick, velocity) per sounding (channel, pitch)
    active: dict[tuple[int, int], list[tuple[int, int]]] = {}

    while track.remaining() > 0:
        tick += track.vlq()
        status = track.u8()
        if status < 0x80:
            if running_status is None:
                raise TruncatedChunk("data byte with no running status")
            track.pos -= 1
            status = running_status

        if status == 0xFF:
            running_status = None  # meta events cancel running status
            meta_type = track.u8()
            length = track.vlq()
            payload = track.bytes(length)
            if meta_type == _META_TEMPO and length == 3:
                uspq = int.from_bytes(payload, "big")
                tempo_events.append((tick, uspq))
            elif meta_type == _META_TIME_SIGNATURE and length >= 2:
                time_signature_events.append((tick, payload[0], 1 << payload[1]))
            elif meta_type == _META_END_OF_TRACK:
                break
            continue
        if status in (0xF0, 0xF7):
            running_status = None
            track.bytes(track.vlq())  # SysEx skipped
            continue
        if status >= 0xF0:
            raise TruncatedChunk(f"unexpected system message 0x{status:02X} in track")

        running_status = status
        kind = status >> 4
        channel = status & 0x0F
        payload = track.bytes(_CHANNEL_DATA_BYTES[kind])
        if any(b & 0x80 for b in payload):
            raise TruncatedChunk(f"data byte >= 0x80 in message 0x{status:02X}")
        if kind == 0x9 and payload[1] > 0:  # note-on
            active.setdefault((channel, payload[0]), []).append((tick, payload[1]))
        elif kind == 0x8 or (kind == 0x9 and payload[1] == 0):  # note-off
            queue = active.get((channel, payload[0]))
            if queue:
                onset, velocity = queue.pop(0)
                notes.append(NoteEvent(tick=onset, pitch=payload[0], velocity=velocity, channel=channel))
            # note-off with no sounding note is ignored

    dropped = sum(len(q) for q in active.values())
    return dropped


def write_smf(seq: MidiSequence, note_duration_ticks: int | None = None) -> bytes:
    """Serialize a MidiSequence as a single-track format 0 SMF.

    parse_smf(write_smf(seq)) reproduces notes, tempo_events and ppq exactly.
    Each onset is paired with a note-off note_duration_ticks later (default:
    one 16th note); durations are synthetic since only onsets are modeled.
    """
    if note_duration_ticks is None:
        note_duration_ticks = max(1, seq.ppq // 4)

    # (tick, order, data): order keeps metas first and note-offs ahead of
    # note-ons at the same tick so back-to-back same-pitch notes re-pair.
    events: list[tuple[int, int, tuple[int, ...], bytes]] = []
    for tick, uspq in seq.tempo_events:
        events.append((tick, 0, (uspq,), bytes([0xFF, _META_TEMPO, 3]) + uspq.to_bytes(3, "big")))
    for tick, numerator, denominator in seq.time_signature_events:
        dd = max(0, denominator.bit_length() - 1)
        if 1 << dd != denominator:
            raise ValueError(f"time signature denominator {denominator} is not a power of two")
        events.append((tick, 1, (numerator, denominator), bytes([0xFF, _META_TIME_SIGNATURE, 4, numerator, dd, 24, 8])))
    for note in sorted(seq.notes, key=lambda n: (n.tick, n.channel, n.pitch, n.velocity)):
        on = bytes([0x90 | note.channel, note.pitch, note.velocity])
        off = bytes([0x80 | note.channel, note.pitch, 0])
        events.append((note.tick, 3, (note.channel, note.pitch, note.velocity), on))
        events.append((note.tick + note_duration_ticks, 2, (note.channel, note.pitch), off))
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    body = bytearray()
    cursor = 0
    for tick, _, _, payload in events:
        body += _encode_vlq(tick - cursor)
        body += payload
        cursor = tick
    body += _encode_vlq(0) + bytes([0xFF, _META_END_OF_TRACK, 0])

    out = bytearray()
    out += b"MThd" + struct.pack(">IHHH", 6, 0, 1, seq.ppq)
    out += b"MTrk" + struct.pack(">I", len(body)) + body
    return bytes(out)


def tick_to_seconds(seq: MidiSequence, tick: int) -> float:
    """Absolute time of a tick via piecewise accumulation over the tempo map.

    Ticks before the first tempo event use the 500000 us/quarter default.
    Monotonically non-decreasing in tick.
    """
    if tick < 0:
        raise ValueError(f"negative tick {tick}")
    seconds = 0.0
    prev_tick = 0
    uspq = DEFAULT_TEMPO_USPQ
    for event_tick, event_uspq in seq.tempo_events:
        if event_tick >= tick:
            break
        seconds += (max(event_tick, prev_tick) - prev_tick) / seq.ppq * uspq * 1e-6
        prev_tick = max(event_tick, prev_tick)
        uspq = event_uspq
    seconds += (tick - prev_tick) / seq.ppq * uspq * 1e-6
    return seconds
