"""Grid representation tests: mapping, quantization, rendering, corpus IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_grid_groove, random_groove
from groovekit.errors import DataError
from groovekit.midi_io import NoteEvent, parse_smf, write_smf
from groovekit.representation import (
    CANONICAL_PITCHES,
    PITCH_TO_CATEGORY,
    GrooveTensor,
    QuantizeCounters,
    TimedNote,
    load_corpus,
    map_pitch,
    quantize,
    save_corpus,
    timed_notes_from_midi,
    to_midi,
    unit_to_velocity,
    velocity_to_unit,
    windows,
)

SNARE = 1
CLOSED_HIHAT = 2


class TestPitchMap:
    def test_snare_rim_maps_to_snare(self):
        assert CANONICAL_PITCHES[map_pitch(40)] == 38

    def test_hihat_pedal_maps_to_closed_hihat(self):
        assert CANONICAL_PITCHES[map_pitch(44)] == 42

    def test_unmapped_pitch(self):
        assert map_pitch(60) is None

    def test_all_22_table_pitches_map(self):
        assert len(PITCH_TO_CATEGORY) == 22
        expected_canonical = {
            36: 36, 38: 38, 40: 38, 37: 38,
            48: 50, 50: 50, 45: 47, 47: 47, 43: 43, 58: 43,
            46: 46, 26: 46, 42: 42, 22: 42, 44: 42,
            49: 49, 55: 49, 57: 49, 52: 49,
            51: 51, 59: 51, 53: 51,
        }
        for pitch, canonical in expected_canonical.items():
            assert CANONICAL_PITCHES[map_pitch(pitch)] == canonical

    def test_out_of_range_pitch_rejected(self):
        with pytest.raises(ValueError):
            map_pitch(128)


class TestVelocityConversion:
    def test_full_scale(self):
        assert velocity_to_unit(127) == 1.0
        assert velocity_to_unit(0) == 0.0

    def test_midpoint_and_inverse(self):
        unit = velocity_to_unit(64)
        assert unit == pytest.approx(0.5039370078740157)
        assert unit_to_velocity(unit) == 64

    def test_inverse_on_all_values(self):
        for v in range(128):
            assert unit_to_velocity(velocity_to_unit(v)) == v


class TestQuantize:
    def test_offset_arithmetic_at_120_bpm(self):
        # 16th = 0.125 s; 0.130 s is 0.04 steps past step 1
        g = quantize([TimedNote(0.130, SNARE, 0.8)], 120.0, 32)
        assert g.hits[1, SNARE] == 1.0
        assert g.offsets[1, SNARE] == pytest.approx(0.04)

    def test_note_exactly_on_grid(self):
        g = quantize([TimedNote(0.250, SNARE, 0.8)], 120.0, 32)
        assert g.hits[2, SNARE] == 1.0
        assert g.offsets[2, SNARE] == 0.0

    def test_collision_keeps_loudest(self):
        notes = [TimedNote(0.5, SNARE, 0.5), TimedNote(0.51, SNARE, 0.9)]
        g = quantize(notes, 120.0, 32)
        assert g.hits[4, SNARE] == 1.0
        assert g.velocities[4, SNARE] == 0.9
        assert g.hit_count() == 1

    def test_velocity_tie_keeps_earlier_onset(self):
        notes = [TimedNote(0.51, SNARE, 0.7), TimedNote(0.49, SNARE, 0.7)]
        g = quantize(notes, 120.0, 32)
        assert g.offsets[4, SNARE] == pytest.approx((0.49 - 0.5) / 0.125)

    def test_full_tie_keeps_lower_source_pitch(self):
        notes = [
            TimedNote(0.5, SNARE, 0.7, source_pitch=40),
            TimedNote(0.5, SNARE, 0.7, source_pitch=37),
        ]
        g = quantize(notes, 120.0, 32)
        # same cell, same velocity, same onset: the pitch-37 note wins (equal values anyway)
        assert g.velocities[4, SNARE] == 0.7

    def test_halfway_onset_rounds_up_with_negative_offset(self):
        # exactly halfway between steps 0 and 1
        g = quantize([TimedNote(0.0625, SNARE, 0.8)], 120.0, 32)
        assert g.hits[1, SNARE] == 1.0
        assert g.offsets[1, SNARE] == -0.5

    def test_out_of_window_notes_counted(self):
        counters = QuantizeCounters()
        g = quantize([TimedNote(10.0, SNARE, 0.8)], 120.0, 32, counters=counters)
        assert g.hit_count() == 0
        assert counters.out_of_window == 1

    @given(st.integers(0, 10**6))
    @settings(max_examples=60, deadline=None)
    def test_masking_and_range_invariants(self, seed):
        g = random_groove(np.random.default_rng(seed))
        silent = g.hits == 0
        assert not g.velocities[silent].any()
        assert not g.offsets[silent].any()
        assert (g.offsets >= -0.5).all() and (g.offsets < 0.5).all()
        assert (g.velocities >= 0).all() and (g.velocities <= 1).all()


class TestToMidi:
    def test_single_hit_identity_placement(self):
        g = GrooveTensor.empty(32, 120.0)
        g.hits[0, 0] = 1.0
        g.velocities[0, 0] = 1.0
        seq = to_midi(g)
        assert seq.notes == [NoteEvent(tick=0, pitch=36, velocity=127, channel=9)]
        assert seq.tempo_events == [(0, 500000)]

    def test_leading_early_hit_clamps_to_zero(self):
        g = GrooveTensor.empty(32, 120.0)
        g.hits[0, 0] = 1.0
        g.velocities[0, 0] = 0.5
        g.offsets[0, 0] = -0.2
        seq = to_midi(g)
        assert seq.notes[0].tick == 0  # clamped in MIDI, tensor keeps -0.2
        assert g.offsets[0, 0] == -0.2

    def test_grid_aligned_round_trip_is_exact(self, rng):
        for _ in range(40):
            g = random_grid_groove(rng)
            seq = parse_smf(write_smf(to_midi(g)))
            notes, unmapped = timed_notes_from_midi(seq)
            assert unmapped == 0
            back = quantize(notes, seq.initial_bpm, g.timesteps)
            np.testing.assert_array_equal(back.hits, g.hits)
            np.testing.assert_allclose(back.offsets, g.offsets, atol=1e-9)
            np.testing.assert_allclose(back.velocities, g.velocities, atol=1e-12)

    def test_continuous_round_trip_within_tick_resolution(self, rng):
        # free offsets can only survive to half-tick accuracy (1/240 step at ppq 480)
        for _ in range(40):
            g = random_groove(rng)
            seq = to_midi(g)
            notes, _ = timed_notes_from_midi(seq)
            back = quantize(notes, seq.initial_bpm, g.timesteps)
            np.testing.assert_array_equal(back.hits, g.hits)
            np.testing.assert_allclose(back.offsets, g.offsets, atol=1.0 / 240 + 1e-9)
            np.testing.assert_allclose(back.velocities, g.velocities, atol=1.0 / 254 + 1e-12)


class TestWindows:
    def _notes_spanning(self, n_measures: int, tempo: float = 120.0):
        # one snare per measure, on the downbeat
        measure = 16 * 60.0 / (tempo * 4)
        return [TimedNote(i * measure, SNARE, 0.8) for i in range(n_measures)]

    def test_four_measures_three_windows(self):
        out = windows(self._notes_spanning(4), 120.0, bars=2, hop_bars=1)
        assert len(out) == 3

    def test_empty_performance(self):
        assert windows([], 120.0) == []

    def test_hop_two_bars(self):
        out = windows(self._notes_spanning(8), 120.0, bars=2, hop_bars=2)
        assert len(out) == 4

    def test_short_performance_padded_to_one_window(self):
        out = windows(self._notes_spanning(1), 120.0, bars=2, hop_bars=1)
        assert len(out) == 1
        assert out[0].timesteps == 32

    def test_empty_windows_discarded(self):
        # hits only in measures 0 and 3: the middle 2-bar window (1-2) is silent
        measure = 2.0
        notes = [TimedNote(0.0, SNARE, 0.8), TimedNote(3 * measure, SNARE, 0.8)]
        out = windows(notes, 120.0, bars=1, hop_bars=1)
        assert len(out) == 2

    def test_boundary_note_joins_next_window(self):
        # halfway through the last step of measure 1 rounds up to measure 2's downbeat
        step = 0.125
        notes = [TimedNote(0.0, SNARE, 0.8), TimedNote(16 * step - step / 2, SNARE, 0.9)]
        out = windows(notes, 120.0, bars=1, hop_bars=1)
        assert len(out) == 2
        assert out[1].hits[0, SNARE] == 1.0
        assert out[1].offsets[0, SNARE] == -0.5

    def test_windows_agree_with_per_window_quantize(self, rng):
        tempo = 120.0
        notes = [
            TimedNote(float(rng.uniform(0, 8 * 2.0 - 0.2)), int(rng.integers(0, 9)), float(rng.uniform(0.1, 1)))
            for _ in range(200)
        ]
        whole = windows(notes, tempo, bars=2, hop_bars=2, drop_empty=False)
        measure = 16 * 0.125
        for w, g in enumerate(whole):
            start = w * 2 * measure
            local = [
                TimedNote(n.onset_seconds - start, n.category, n.velocity_unit)
                for n in notes
                if start - 0.0626 <= n.onset_seconds < start + 2 * measure + 0.0624
            ]
            direct = quantize(local, tempo, 32)
            np.testing.assert_array_equal(direct.hits, g.hits)
            np.testing.assert_allclose(direct.offsets, g.offsets, atol=1e-9)


class TestCorpusIO:
    def test_round_trip(self, rng, tmp_path):
        corpus = [random_groove(rng) for _ in range(7)]
        path = str(tmp_path / "corpus.grv")
        save_corpus(corpus, path)
        back = load_corpus(path)
        assert len(back) == len(corpus)
        for a, b in zip(corpus, back):
            np.testing.assert_array_equal(a.hits, b.hits)
            np.testing.assert_allclose(a.velocities, b.velocities, atol=1e-6)
            np.testing.assert_allclose(a.offsets, b.offsets, atol=1e-6)
            assert a.tempo_bpm == pytest.approx(b.tempo_bpm, rel=1e-6)

    def test_save_is_deterministic(self, rng, tmp_path):
        corpus = [random_groove(rng) for _ in range(3)]
        p1, p2 = str(tmp_path / "a.grv"), str(tmp_path / "b.grv")
        save_corpus(corpus, p1)
        save_corpus(corpus, p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_offsets_near_upper_bound_survive(self, tmp_path):
        g = GrooveTensor.empty(16, 120.0)
        g.hits[0, 0] = 1.0
        g.velocities[0, 0] = 0.9
        g.offsets[0, 0] = np.nextafter(0.5, 0.0)  # float32 would round this to 0.5
        path = str(tmp_path / "edge.grv")
        save_corpus([g], path)
        back = load_corpus(path)[0]
        assert back.offsets[0, 0] < 0.5

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.grv"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DataError):
            load_corpus(str(path))

    def test_truncated_file(self, rng, tmp_path):
        corpus = [random_groove(rng)]
        path = str(tmp_path / "trunc.grv")
        save_corpus(corpus, path)
        data = open(path, "rb").read()
        open(path, "wb").write(data[: len(data) // 2])
        with pytest.raises(DataError):
            load_corpus(path)
