"""Forward compression tests: score extraction, voice removal, tap flattening."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_groove
from groovekit.midi_io import MidiSequence, NoteEvent
from groovekit.representation import HIHAT_CATEGORIES, GrooveTensor
from groovekit.transforms import (
    TapTensor,
    flatten_to_taps,
    remove_voice,
    taps_from_midi,
    to_score,
)


class TestToScore:
    def test_hits_preserved_everything_else_zero(self, rng):
        g = random_groove(rng)
        score = to_score(g)
        np.testing.assert_array_equal(score.hits, g.hits)
        assert not score.velocities.any()
        assert not score.offsets.any()

    def test_fixed_point_on_already_scored(self, rng):
        g = to_score(random_groove(rng))
        again = to_score(g)
        np.testing.assert_array_equal(again.hits, g.hits)
        np.testing.assert_array_equal(again.velocities, g.velocities)

    @given(st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_idempotent(self, seed):
        g = random_groove(np.random.default_rng(seed))
        once = to_score(g)
        twice = to_score(once)
        np.testing.assert_array_equal(once.hits, twice.hits)
        np.testing.assert_array_equal(once.velocities, twice.velocities)
        np.testing.assert_array_equal(once.offsets, twice.offsets)


class TestRemoveVoice:
    def test_default_removes_both_hihats(self, rng):
        g = random_groove(rng, density=0.8)
        stripped, target = remove_voice(g)
        for c in HIHAT_CATEGORIES:
            assert not stripped.hits[:, c].any()
        np.testing.assert_array_equal(target.hits, g.hits)

    def test_no_hihat_input_unchanged(self, rng):
        g = random_groove(rng)
        for c in HIHAT_CATEGORIES:
            g.hits[:, c] = 0.0
            g.velocities[:, c] = 0.0
            g.offsets[:, c] = 0.0
        stripped, _ = remove_voice(g)
        np.testing.assert_array_equal(stripped.hits, g.hits)
        np.testing.assert_array_equal(stripped.velocities, g.velocities)

    def test_only_hihat_input_becomes_empty(self):
        g = GrooveTensor.empty(16, 120.0)
        g.hits[::2, 2] = 1.0
        g.velocities[::2, 2] = 0.7
        stripped, _ = remove_voice(g)
        assert stripped.hit_count() == 0

    def test_single_category_removal(self, rng):
        g = random_groove(rng, density=0.9)
        stripped, _ = remove_voice(g, 0)
        assert not stripped.hits[:, 0].any()
        np.testing.assert_array_equal(stripped.hits[:, 1:], g.hits[:, 1:])

    @given(st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_hit_count_identity(self, seed):
        g = random_groove(np.random.default_rng(seed), density=0.5)
        stripped, target = remove_voice(g)
        removed = sum(int(g.hits[:, c].sum()) for c in HIHAT_CATEGORIES)
        assert stripped.hit_count() == target.hit_count() - removed

    def test_idempotent_on_removed_input(self, rng):
        g = random_groove(rng, density=0.7)
        stripped, _ = remove_voice(g)
        again, _ = remove_voice(stripped)
        np.testing.assert_array_equal(again.hits, stripped.hits)


class TestFlattenToTaps:
    def test_singleton(self):
        g = GrooveTensor.empty(16, 120.0)
        g.hits[3, 1] = 1.0
        g.velocities[3, 1] = 0.8
        g.offsets[3, 1] = 0.1
        taps = flatten_to_taps(g)
        assert taps.taps[3] == 1.0
        assert taps.tap_offsets[3] == pytest.approx(0.1)
        assert taps.tap_count() == 1

    def test_loudest_hit_wins_the_offset(self):
        g = GrooveTensor.empty(16, 120.0)
        g.hits[5, 0] = 1.0  # kick, louder, early
        g.velocities[5, 0] = 0.9
        g.offsets[5, 0] = -0.05
        g.hits[5, 2] = 1.0  # hat, quieter, late
        g.velocities[5, 2] = 0.4
        g.offsets[5, 2] = 0.2
        taps = flatten_to_taps(g)
        assert taps.tap_offsets[5] == pytest.approx(-0.05)

    def test_empty_groove(self):
        taps = flatten_to_taps(GrooveTensor.empty(32, 120.0))
        assert taps.tap_count() == 0
        assert not taps.tap_offsets.any()

    @given(st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_tap_count_equals_occupied_timesteps(self, seed):
        g = random_groove(np.random.default_rng(seed), density=0.5)
        taps = flatten_to_taps(g)
        assert taps.tap_count() == int((g.hits.sum(axis=1) > 0).sum())


class TestTapsFromMidi:
    def test_any_pitch_counts(self):
        seq = MidiSequence(
            ppq=480,
            tempo_events=[(0, 500000)],
            notes=[
                NoteEvent(tick=0, pitch=60, velocity=100, channel=0),  # not a drum pitch
                NoteEvent(tick=240, pitch=72, velocity=90, channel=0),
            ],
        )
        taps = taps_from_midi(seq, timesteps=16)
        assert taps.taps[0] == 1.0
        assert taps.taps[2] == 1.0
        assert taps.tap_count() == 2

    def test_collision_keeps_loudest(self):
        seq = MidiSequence(
            ppq=480,
            tempo_events=[(0, 500000)],
            notes=[
                NoteEvent(tick=118, pitch=60, velocity=40, channel=0),
                NoteEvent(tick=125, pitch=62, velocity=100, channel=0),
            ],
        )
        taps = taps_from_midi(seq, timesteps=16)
        assert taps.tap_count() == 1
        assert taps.tap_offsets[1] == pytest.approx((125 - 120) / 120)

    def test_validation(self):
        with pytest.raises(ValueError):
            TapTensor(taps=np.array([0.0, 2.0]), tap_offsets=np.zeros(2))
        with pytest.raises(ValueError):
            TapTensor(taps=np.zeros(4), tap_offsets=np.array([0.0, 0.1, 0.0, 0.0]))
