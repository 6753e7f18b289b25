"""Deterministic forward compressions whose inversions define the tasks.

to_score strips groove (humanization target), remove_voice drops one drum's
rows (infilling target), flatten_to_taps collapses everything to a single
timing-only track (tap-to-drum target).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .midi_io import MidiSequence, tick_to_seconds
from .representation import (
    HIHAT_CATEGORIES,
    NUM_CATEGORIES,
    STEPS_PER_BAR,
    GrooveTensor,
    _grid_position,
    step_seconds,
)


@dataclass(slots=True)
class TapTensor:
    """Single-track rhythm: binary taps and their timing offsets per step."""

    taps: np.ndarray
    tap_offsets: np.ndarray

    def __post_init__(self) -> None:
        self.taps = np.ascontiguousarray(self.taps, dtype=np.float64).reshape(-1)
        self.tap_offsets = np.ascontiguousarray(self.tap_offsets, dtype=np.float64).reshape(-1)
        if self.taps.shape != self.tap_offsets.shape:
            raise ValueError("taps and tap_offsets must share one shape")
        if not np.isin(self.taps, (0.0, 1.0)).all():
            raise ValueError("taps must be binary")
        if self.tap_offsets[self.taps == 0.0].any():
            raise ValueError("tap_offsets must be 0 where taps are 0")

    @property
    def timesteps(self) -> int:
        return self.taps.shape[0]

    def tap_count(self) -> int:
        return int(self.taps.sum())


def to_score(groove: GrooveTensor) -> GrooveTensor:
    """Strip velocities and offsets, keeping hits only (a bare drum score)."""
    return GrooveTensor(
        hits=groove.hits.copy(),
        velocities=np.zeros_like(groove.velocities),
        offsets=np.zeros_like(groove.offsets),
        tempo_bpm=groove.tempo_bpm,
    )


def normalize_categories(category: int | Iterable[int] | None) -> tuple[int, ...]:
    """Resolve a category selector; None means both hi-hat categories."""
    if category is None:
        return HIHAT_CATEGORIES
    if isinstance(category, int):
        category = (category,)
    out = tuple(sorted(set(int(c) for c in category)))
    for c in out:
        if not 0 <= c < NUM_CATEGORIES:
            raise ValueError(f"category {c} outside 0-{NUM_CATEGORIES - 1}")
    return out


def remove_voice(
    groove: GrooveTensor, category: int | Iterable[int] | None = None
) -> tuple[GrooveTensor, GrooveTensor]:
    """Zero one drum's rows; returns (input with the voice removed, full target)."""
    selected = normalize_categories(category)
    hits = groove.hits.copy()
    velocities = groove.velocities.copy()
    offsets = groove.offsets.copy()
    for c in selected:
        hits[:, c] = 0.0
        velocities[:, c] = 0.0
        offsets[:, c] = 0.0
    stripped = GrooveTensor(hits, velocities, offsets, groove.tempo_bpm)
    return stripped, groove.copy()


def flatten_to_taps(groove: GrooveTensor) -> TapTensor:
    """Collapse all voices to one track; each occupied step becomes a tap.

    The tap offset is the offset of the loudest hit at that step; velocities
    are discarded.
    """
    taps = (groove.hits.sum(axis=1) > 0).astype(np.float64)
    loudest = np.where(groove.hits > 0, groove.velocities, -1.0).argmax(axis=1)
    tap_offsets = groove.offsets[np.arange(groove.timesteps), loudest] * taps
    return TapTensor(taps=taps, tap_offsets=tap_offsets)


def taps_from_midi(seq: MidiSequence, timesteps: int = 32, tempo_bpm: float | None = None) -> TapTensor:
    """Read a tap rhythm from any MIDI file: every pitch counts as a tap.

    Onsets are snapped to the 16th-note grid like drum hits; colliding taps
    keep the loudest, then the earliest.
    """
    if timesteps % STEPS_PER_BAR != 0:
        raise ValueError(f"timesteps={timesteps} is not whole 4/4 measures")
    if tempo_bpm is None:
        tempo_bpm = seq.initial_bpm
    step = step_seconds(tempo_bpm)
    taps = np.zeros(timesteps)
    tap_offsets = np.zeros(timesteps)
    best: dict[int, tuple[int, float]] = {}
    for event in seq.notes:
        onset = tick_to_seconds(seq, event.tick)
        t, offset = _grid_position(onset, step)
        if not 0 <= t < timesteps:
            continue
        held = best.get(t)
        if held is None or (event.velocity, -onset) > (held[0], -held[1]):
            best[t] = (event.velocity, onset)
            taps[t] = 1.0
            tap_offsets[t] = offset
    return TapTensor(taps=taps, tap_offsets=tap_offsets)
