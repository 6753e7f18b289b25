"""Groove grid representation: 9 drum categories on a 16th-note grid.

A performance window is three T x 9 matrices: binary hits H, velocities V
in [0, 1] and timing offsets O in [-0.5, 0.5) expressed as fractions of a
16th note (positive = late, negative = early).  Wherever H is 0, V and O
are 0.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .midi_io import MidiSequence, NoteEvent, tick_to_seconds

NUM_CATEGORIES = 9
STEPS_PER_BAR = 16  # 16th notes in one 4/4 measure

CATEGORY_NAMES = (
    "bass",
    "snare",
    "closed_hihat",
    "open_hihat",
    "high_floor_tom",
    "low_mid_tom",
    "high_tom",
    "crash",
    "ride",
)

# Canonical output pitch per category (General-MIDI drum notes).
CANONICAL_PITCHES = (36, 38, 42, 46, 43, 47, 50, 49, 51)

# Roland TD-11 / GM input pitches collapsed onto the 9 canonical categories.
PITCH_TO_CATEGORY = {
    36: 0,  # kick
    38: 1,  # snare head
    40: 1,  # snare rim
    37: 1,  # snare cross-stick
    48: 6,  # tom 1
    50: 6,  # tom 1 rim
    45: 5,  # tom 2
    47: 5,  # tom 2 rim
    43: 4,  # tom 3 head
    58: 4,  # tom 3 rim
    46: 3,  # open hi-hat bow
    26: 3,  # open hi-hat edge
    42: 2,  # closed hi-hat bow
    22: 2,  # closed hi-hat edge
    44: 2,  # hi-hat pedal
    49: 7,  # crash 1 bow
    55: 7,  # crash 1 edge
    57: 7,  # crash 2 bow
    52: 7,  # crash 2 edge
    51: 8,  # ride bow
    59: 8,  # ride edge
    53: 8,  # ride bell
}

HIHAT_CATEGORIES = (2, 3)

# Largest double below 0.5; offsets live in the half-open range [-0.5, 0.5).
MAX_OFFSET = math.nextafter(0.5, 0.0)

_CORPUS_MAGIC = b"GRVC"
_CORPUS_VERSION = 1


def map_pitch(pitch: int) -> int | None:
    """Category index for an input pitch, or None when unmapped."""
    if not 0 <= pitch <= 127:
        raise ValueError(f"pitch {pitch} outside 0-127")
    return PITCH_TO_CATEGORY.get(pitch)


def velocity_to_unit(velocity: int) -> float:
    """MIDI velocity 0-127 to the unit interval."""
    if not 0 <= velocity <= 127:
        raise ValueError(f"velocity {velocity} outside 0-127")
    return velocity / 127.0


def unit_to_velocity(value: float) -> int:
    """Unit-interval velocity back to the nearest MIDI integer."""
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"unit velocity {value} outside [0, 1]")
    return round(value * 127)


@dataclass(frozen=True, slots=True)
class TimedNote:
    """A mapped drum hit in absolute seconds, before gridding."""

    onset_seconds: float
    category: int
    velocity_unit: float
    source_pitch: int | None = None  # kept for deterministic collision ties


@dataclass(slots=True)
class GrooveTensor:
    """Hits / velocities / offsets on a T x 9 grid at a fixed tempo."""

    hits: np.ndarray
    velocities: np.ndarray
    offsets: np.ndarray
    tempo_bpm: float

    def __post_init__(self) -> None:
        self.hits = np.ascontiguousarray(self.hits, dtype=np.float64)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=np.float64)
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.float64)
        self.validate()

    @property
    def timesteps(self) -> int:
        return self.hits.shape[0]

    @property
    def num_instruments(self) -> int:
        return self.hits.shape[1]

    def hit_count(self) -> int:
        return int(self.hits.sum())

    def copy(self) -> "GrooveTensor":
        return GrooveTensor(
            hits=self.hits.copy(),
            velocities=self.velocities.copy(),
            offsets=self.offsets.copy(),
            tempo_bpm=self.tempo_bpm,
        )

    def validate(self) -> None:
        if self.hits.ndim != 2 or self.hits.shape[1] != NUM_CATEGORIES:
            raise ValueError(f"expected shape (T, {NUM_CATEGORIES}), got {self.hits.shape}")
        if self.hits.shape[0] % STEPS_PER_BAR != 0:
            raise ValueError(f"T={self.hits.shape[0]} is not whole 4/4 measures")
        if self.velocities.shape != self.hits.shape or self.offsets.shape != self.hits.shape:
            raise ValueError("hits, velocities and offsets must share one shape")
        if self.tempo_bpm <= 0:
            raise ValueError(f"tempo {self.tempo_bpm} must be positive")
        if not np.isin(self.hits, (0.0, 1.0)).all():
            raise ValueError("hits must be binary")
        if self.velocities.min(initial=0.0) < 0.0 or self.velocities.max(initial=0.0) > 1.0:
            raise ValueError("velocities outside [0, 1]")
        if self.offsets.min(initial=0.0) < -0.5 or self.offsets.max(initial=0.0) >= 0.5:
            raise ValueError("offsets outside [-0.5, 0.5)")
        silent = self.hits == 0.0
        if self.velocities[silent].any() or self.offsets[silent].any():
            raise ValueError("velocities/offsets must be 0 where hits are 0")

    @classmethod
    def empty(cls, timesteps: int, tempo_bpm: float) -> "GrooveTensor":
        shape = (timesteps, NUM_CATEGORIES)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape), tempo_bpm)


@dataclass(slots=True)
class QuantizeCounters:
    """Drop counters accumulated across quantize/window calls."""

    out_of_window: int = 0


def step_seconds(tempo_bpm: float) -> float:
    """Duration of one 16th note at the given tempo."""
    return 60.0 / (tempo_bpm * 4.0)


def _grid_position(onset_seconds: float, step: float) -> tuple[int, float]:
    """Nearest step index and the signed fractional offset in [-0.5, 0.5).

    An onset exactly halfway rounds up to the next step with offset -0.5.
    Float rounding in x + 0.5 can leave the offset a few ulp outside the
    half-open range; the guards snap those boundary cases back.
    """
    x = onset_seconds / step
    t = math.floor(x + 0.5)
    offset = x - t
    if offset >= 0.5:
        t += 1
        offset = x - t
    if offset < -0.5:
        offset = -0.5
    return t, offset


def _assign_to_grid(
    notes: list[TimedNote], tempo_bpm: float
) -> dict[tuple[int, int], tuple[float, float, float, int]]:
    """Resolve grid-cell collisions; returns (t, category) -> (vel, offset, onset, pitch).

    The loudest hit wins a cell; velocity ties keep the earlier onset, then
    the lower source pitch.
    """
    step = step_seconds(tempo_bpm)
    cells: dict[tuple[int, int], tuple[float, float, float, int]] = {}
    for note in notes:
        if not 0 <= note.category < NUM_CATEGORIES:
            raise ValueError(f"category {note.category} outside 0-{NUM_CATEGORIES - 1}")
        t, offset = _grid_position(note.onset_seconds, step)
        key = (t, note.category)
        pitch = note.source_pitch if note.source_pitch is not None else 128
        candidate = (note.velocity_unit, offset, note.onset_seconds, pitch)
        held = cells.get(key)
        if held is None or _louder(candidate, held):
            cells[key] = candidate
    return cells


def _louder(a: tuple[float, float, float, int], b: tuple[float, float, float, int]) -> bool:
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[2] != b[2]:
        return a[2] < b[2]
    return a[3] < b[3]


def quantize(
    notes: list[TimedNote],
    tempo_bpm: float,
    timesteps: int = 32,
    counters: QuantizeCounters | None = None,
) -> GrooveTensor:
    """Snap timed notes onto the 16th-note grid of one window.

    Notes rounding to a step outside [0, timesteps) are dropped and counted
    (a note at the right edge belongs to the next window).
    """
    hits = np.zeros((timesteps, NUM_CATEGORIES))
    velocities = np.zeros_like(hits)
    offsets = np.zeros_like(hits)
    for (t, category), (vel, offset, _, _) in _assign_to_grid(notes, tempo_bpm).items():
        if 0 <= t < timesteps:
            hits[t, category] = 1.0
            velocities[t, category] = vel
            offsets[t, category] = offset
        elif counters is not None:
            counters.out_of_window += 1
    return GrooveTensor(hits, velocities, offsets, tempo_bpm)


def windows(
    notes: list[TimedNote],
    tempo_bpm: float,
    bars: int = 2,
    hop_bars: int = 1,
    drop_empty: bool = True,
) -> list[GrooveTensor]:
    """Slice a performance into fixed-length windows on a shared grid.

    Windows are bars*16 steps long and advance by hop_bars measures; a
    performance shorter than one window is padded with silence.  Windows
    containing no hits are discarded unless drop_empty is False.
    """
    if bars < 1 or hop_bars < 1:
        raise ValueError("bars and hop_bars must be >= 1")
    if not notes:
        return []
    cells = _assign_to_grid(notes, tempo_bpm)
    last_step = max(t for t, _ in cells)
    n_bars = max(last_step // STEPS_PER_BAR + 1, bars)
    total_steps = n_bars * STEPS_PER_BAR

    hits = np.zeros((total_steps, NUM_CATEGORIES))
    velocities = np.zeros_like(hits)
    offsets = np.zeros_like(hits)
    for (t, category), (vel, offset, _, _) in cells.items():
        if 0 <= t < total_steps:
            hits[t, category] = 1.0
            velocities[t, category] = vel
            offsets[t, category] = offset

    span = bars * STEPS_PER_BAR
    out: list[GrooveTensor] = []
    for start_bar in range(0, n_bars - bars + 1, hop_bars):
        lo = start_bar * STEPS_PER_BAR
        window = GrooveTensor(
            hits[lo : lo + span].copy(),
            velocities[lo : lo + span].copy(),
            offsets[lo : lo + span].copy(),
            tempo_bpm,
        )
        if window.hit_count() > 0 or not drop_empty:
            out.append(window)
    return out


def to_midi(groove: GrooveTensor, ppq: int = 480) -> MidiSequence:
    """Render a groove back to a MidiSequence at its own tempo.

    Onsets are placed at (t + offset) 16th notes, rounded to the tick grid
    but never outside the half-open tick range of their step, so that
    re-quantizing reproduces the same hits.  Negative absolute times (a
    leading early hit) clamp to tick 0; velocities round to MIDI 1-127.
    """
    if ppq % 4 != 0 or ppq < 4:
        raise ValueError(f"ppq must be a positive multiple of 4, got {ppq}")
    ticks_per_step = ppq // 4
    half = ticks_per_step // 2
    notes = []
    t_idx, m_idx = np.nonzero(groove.hits)
    for t, m in zip(t_idx.tolist(), m_idx.tolist()):
        tick = round((t + groove.offsets[t, m]) * ticks_per_step)
        tick = min(max(tick, t * ticks_per_step - half), t * ticks_per_step + half - 1)
        tick = max(tick, 0)
        velocity = max(1, unit_to_velocity(groove.velocities[t, m]))
        notes.append(NoteEvent(tick=tick, pitch=CANONICAL_PITCHES[m], velocity=velocity, channel=9))
    notes.sort(key=lambda n: (n.tick, n.channel, n.pitch, n.velocity))
    return MidiSequence(
        ppq=ppq,
        tempo_events=[(0, round(60e6 / groove.tempo_bpm))],
        time_signature_events=[(0, 4, 4)],
        notes=notes,
    )


def timed_notes_from_midi(seq: MidiSequence) -> tuple[list[TimedNote], int]:
    """Map a MidiSequence to category-level timed notes.

    Returns (notes, unmapped_count); pitches outside the category table are
    dropped and counted.
    """
    notes: list[TimedNote] = []
    unmapped = 0
    for event in seq.notes:
        category = map_pitch(event.pitch)
        if category is None:
            unmapped += 1
            continue
        notes.append(
            TimedNote(
                onset_seconds=tick_to_seconds(seq, event.tick),
                category=category,
                velocity_unit=velocity_to_unit(event.velocity),
                source_pitch=event.pitch,
            )
        )
    return notes, unmapped


# --- corpus persistence -----------------------------------------------------
#
# Flat little-endian layout: magic "GRVC", version byte, u32 window count,
# then per window: tempo f32, T u16, M u16, H as bit-packed rows (LSB-first,
# ceil(M/8) bytes per row), V then O as T*M f32 values in row-major order.


def save_corpus(grooves: list[GrooveTensor], path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(_CORPUS_MAGIC)
        fh.write(bytes([_CORPUS_VERSION]))
        fh.write(struct.pack("<I", len(grooves)))
        for g in grooves:
            t, m = g.hits.shape
            fh.write(struct.pack("<fHH", g.tempo_bpm, t, m))
            packed = np.packbits(g.hits.astype(np.uint8), axis=1, bitorder="little")
            fh.write(packed.tobytes())
            fh.write(_to_f32(g.velocities, 0.0, np.float32(1.0)).tobytes())
            fh.write(_to_f32(g.offsets, -0.5, _F32_MAX_OFFSET).tobytes())


# largest float32 below 0.5 (casting the float64 bound would round onto 0.5)
_F32_MAX_OFFSET = np.nextafter(np.float32(0.5), np.float32(-1.0))


def _to_f32(arr: np.ndarray, lo: float, hi: np.float32) -> np.ndarray:
    # float32 rounding may push values past the half-open bound; clip after cast
    return np.clip(arr.astype("<f4"), np.float32(lo), hi)


def load_corpus(path: str) -> list[GrooveTensor]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _CORPUS_MAGIC:
        raise DataError(f"{path}: not a corpus file (bad magic)")
    if data[4] != _CORPUS_VERSION:
        raise DataError(f"{path}: unsupported corpus version {data[4]}")
    (count,) = struct.unpack_from("<I", data, 5)
    pos = 9
    grooves: list[GrooveTensor] = []
    for _ in range(count):
        try:
            tempo, t, m = struct.unpack_from("<fHH", data, pos)
            pos += 8
            row_bytes = (m + 7) // 8
            packed = np.frombuffer(data, dtype=np.uint8, count=t * row_bytes, offset=pos)
            pos += t * row_bytes
            hits = np.unpackbits(packed.reshape(t, row_bytes), axis=1, count=m, bitorder="little")
            velocities = np.frombuffer(data, dtype="<f4", count=t * m, offset=pos).reshape(t, m)
            pos += 4 * t * m
            offsets = np.frombuffer(data, dtype="<f4", count=t * m, offset=pos).reshape(t, m)
            pos += 4 * t * m
        except (struct.error, ValueError) as exc:
            raise DataError(f"{path}: truncated corpus file") from exc
        grooves.append(GrooveTensor(hits.astype(np.float64), velocities, offsets, float(tempo)))
    return grooves
