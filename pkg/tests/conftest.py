"""Shared random generators for the test suite."""

import numpy as np
import pytest

from groovekit.midi_io import MidiSequence, NoteEvent
from groovekit.representation import NUM_CATEGORIES, GrooveTensor

PPQ_CHOICES = (96, 120, 192, 240, 384, 480, 960)


def random_midi_sequence(rng: np.random.Generator, max_notes: int = 80) -> MidiSequence:
    """A valid MidiSequence in canonical form (sorted notes, tempo at tick 0)."""
    ppq = int(rng.choice(PPQ_CHOICES))
    tempo_ticks = [0] + sorted(rng.integers(1, 4000, size=int(rng.integers(0, 3))).tolist())
    tempo_events = [(t, int(rng.integers(200_000, 1_200_000))) for t in sorted(set(tempo_ticks))]
    ts_events = [(0, int(rng.choice([2, 3, 4, 6])), int(rng.choice([2, 4, 8])))]
    notes = [
        NoteEvent(
            tick=int(rng.integers(0, 4000)),
            pitch=int(rng.integers(0, 128)),
            velocity=int(rng.integers(1, 128)),
            channel=int(rng.integers(0, 16)),
        )
        for _ in range(int(rng.integers(0, max_notes)))
    ]
    notes.sort(key=lambda n: (n.tick, n.channel, n.pitch, n.velocity))
    return MidiSequence(
        ppq=ppq, tempo_events=tempo_events, time_signature_events=ts_events, notes=notes
    )


def random_groove(
    rng: np.random.Generator,
    timesteps: int = 32,
    tempo_bpm: float | None = None,
    density: float = 0.3,
    grid_offsets: int | None = None,
    min_velocity: float = 1.0 / 254.0,
) -> GrooveTensor:
    """Random valid groove window.

    grid_offsets=N restricts offsets to multiples of 1/N (the renderable
    tick grid); row 0 offsets stay non-negative so nothing clamps at time 0.
    """
    if tempo_bpm is None:
        tempo_bpm = float(rng.uniform(60, 200))
    shape = (timesteps, NUM_CATEGORIES)
    hits = (rng.random(shape) < density).astype(np.float64)
    velocities = rng.uniform(min_velocity, 1.0, size=shape) * hits
    if grid_offsets is None:
        offsets = rng.uniform(-0.49, 0.49, size=shape)
    else:
        # stay one tick off the exact -0.5 boundary: a midpoint onset is a
        # knife-edge where float noise in the seconds conversion may flip steps
        half = grid_offsets // 2
        offsets = rng.integers(-half + 1, half, size=shape) / grid_offsets
    offsets = offsets * hits
    offsets[0] = np.abs(offsets[0])
    return GrooveTensor(hits, velocities * hits, offsets * hits, tempo_bpm)


def random_grid_groove(rng: np.random.Generator, timesteps: int = 32, ppq: int = 480) -> GrooveTensor:
    """Groove whose offsets and velocities are exactly renderable at `ppq`."""
    g = random_groove(rng, timesteps, grid_offsets=ppq // 4)
    velocities = np.round(g.velocities * 127) / 127.0
    velocities[(g.hits > 0) & (velocities == 0.0)] = 1.0 / 127.0
    return GrooveTensor(g.hits, velocities * g.hits, g.offsets, g.tempo_bpm)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
