"""SMF parser/writer tests, including hand-crafted byte-level cases."""

import numpy as np
import pytest

from conftest import random_midi_sequence
from groovekit.errors import MalformedHeader, TruncatedChunk, UnsupportedFormat
from groovekit.midi_io import (
    DEFAULT_TEMPO_USPQ,
    MidiSequence,
    NoteEvent,
    parse_smf,
    tick_to_seconds,
    write_smf,
)

# Minimal format-0 file, assembled by hand: header (ppq=96), one track with
# tempo 500000, note-on pitch 36 vel 100 at tick 0, note-off at tick 96.
MINIMAL_SMF = bytes.fromhex(
    "4d546864"  # 'MThd'
    "00000006"  # header length 6
    "0000"      # format 0
    "0001"      # one track
    "0060"      # 96 ticks per quarter
    "4d54726b"  # 'MTrk'
    "00000013"  # track length 19
    "00ff510307a120"  # delta 0, tempo meta: 0x07a120 = 500000
    "00992464"  # delta 0, note-on ch9 pitch 0x24=36 vel 0x64=100
    "60892400"  # delta 0x60=96, note-off ch9 pitch 36
    "00ff2f00"  # delta 0, end of track
)


class TestParse:
    def test_minimal_hand_crafted_file(self):
        seq = parse_smf(MINIMAL_SMF)
        assert seq.ppq == 96
        assert seq.tempo_events == [(0, 500000)]
        assert seq.notes == [NoteEvent(tick=0, pitch=36, velocity=100, channel=9)]

    def test_missing_tempo_defaults_to_120_bpm(self):
        data = bytes.fromhex(
            "4d546864000000060000000100604d54726b0000000c"
            "0099246460892400"  # the note pair, no tempo meta
            "00ff2f00"
        )
        seq = parse_smf(data)
        assert seq.tempo_events == [(0, DEFAULT_TEMPO_USPQ)]
        assert seq.initial_bpm == pytest.approx(120.0)

    def test_bad_magic_is_malformed_header(self):
        with pytest.raises(MalformedHeader):
            parse_smf(b"RIFF" + MINIMAL_SMF[4:])

    def test_short_input_is_malformed_header(self):
        with pytest.raises(MalformedHeader):
            parse_smf(b"MTh")

    def test_format_2_rejected(self):
        data = bytearray(MINIMAL_SMF)
        data[9] = 2  # format field
        with pytest.raises(UnsupportedFormat):
            parse_smf(bytes(data))

    def test_smpte_division_rejected(self):
        data = bytearray(MINIMAL_SMF)
        data[12] = 0xE7  # negative SMPTE frame rate
        with pytest.raises(UnsupportedFormat):
            parse_smf(bytes(data))

    def test_truncated_track_chunk(self):
        with pytest.raises(TruncatedChunk):
            parse_smf(MINIMAL_SMF[:-6])

    def test_declared_track_missing(self):
        data = bytearray(MINIMAL_SMF)
        data[11] = 2  # claims two tracks, file has one
        with pytest.raises(TruncatedChunk):
            parse_smf(bytes(data))

    def test_running_status_unreleased_notes_drop(self):
        # two note-ons (the second via running status), no note-offs at all
        track = bytes.fromhex("00992464" "002650" "00ff2f00")
        data = (
            bytes.fromhex("4d54686400000006000000010060")
            + b"MTrk"
            + len(track).to_bytes(4, "big")
            + track
        )
        seq = parse_smf(data)
        assert seq.notes == []  # unpaired note-ons are dropped

    def test_running_status_with_note_offs(self):
        track = bytes.fromhex(
            "00992464"  # delta 0, note-on ch9 pitch 36 vel 100
            "002650"    # delta 0, running-status note-on pitch 38 vel 80
            "10892400"  # delta 16, note-off pitch 36
            "002600"    # delta 0, running-status note-off pitch 38
            "00ff2f00"
        )
        data = (
            bytes.fromhex("4d54686400000006000000010060")
            + b"MTrk"
            + len(track).to_bytes(4, "big")
            + track
        )
        seq = parse_smf(data)
        assert [(n.tick, n.pitch, n.velocity) for n in seq.notes] == [(0, 36, 100), (0, 38, 80)]

    def test_note_on_velocity_zero_is_note_off(self):
        track = bytes.fromhex("00992464" "60992400" "00ff2f00")
        data = (
            bytes.fromhex("4d54686400000006000000010060")
            + b"MTrk"
            + len(track).to_bytes(4, "big")
            + track
        )
        seq = parse_smf(data)
        assert seq.notes == [NoteEvent(tick=0, pitch=36, velocity=100, channel=9)]

    def test_unpaired_note_on_dropped_and_reported(self, caplog):
        track = bytes.fromhex("00992464" "00ff2f00")  # note-on, never released
        data = (
            bytes.fromhex("4d54686400000006000000010060")
            + b"MTrk"
            + len(track).to_bytes(4, "big")
            + track
        )
        with caplog.at_level("WARNING"):
            seq = parse_smf(data)
        assert seq.notes == []
        assert "unpaired" in caplog.text

    def test_unknown_chunk_skipped(self):
        extra = b"XFIH" + (4).to_bytes(4, "big") + b"\x00\x00\x00\x00"
        data = MINIMAL_SMF[:14] + extra + MINIMAL_SMF[14:]
        seq = parse_smf(data)
        assert len(seq.notes) == 1


class TestWrite:
    def test_minimal_round_trip(self):
        seq = parse_smf(MINIMAL_SMF)
        again = parse_smf(write_smf(seq))
        assert again.notes == seq.notes
        assert again.tempo_events == seq.tempo_events
        assert again.ppq == seq.ppq

    def test_empty_note_list_is_valid_smf(self):
        seq = MidiSequence(ppq=480, time_signature_events=[(0, 4, 4)])
        again = parse_smf(write_smf(seq))
        assert again.notes == []
        assert again.tempo_events == [(0, DEFAULT_TEMPO_USPQ)]
        assert again.time_signature_events == [(0, 4, 4)]

    def test_random_sequences_round_trip(self, rng):
        for _ in range(60):
            seq = random_midi_sequence(rng)
            again = parse_smf(write_smf(seq))
            assert again.notes == seq.notes
            assert again.tempo_events == seq.tempo_events
            assert again.ppq == seq.ppq
            assert again.time_signature_events == seq.time_signature_events

    def test_overlapping_same_pitch_notes_survive(self):
        notes = [
            NoteEvent(tick=0, pitch=36, velocity=10, channel=9),
            NoteEvent(tick=10, pitch=36, velocity=20, channel=9),
            NoteEvent(tick=20, pitch=36, velocity=30, channel=9),
        ]
        seq = MidiSequence(ppq=480, notes=notes)
        again = parse_smf(write_smf(seq))
        assert again.notes == notes

    def test_non_power_of_two_denominator_rejected(self):
        seq = MidiSequence(ppq=480, time_signature_events=[(0, 4, 6)])
        with pytest.raises(ValueError):
            write_smf(seq)


class TestTickToSeconds:
    def test_one_quarter_at_120_bpm(self):
        seq = MidiSequence(ppq=480, tempo_events=[(0, 500000)])
        assert tick_to_seconds(seq, 480) == pytest.approx(0.5)

    def test_tick_zero(self):
        seq = MidiSequence(ppq=480, tempo_events=[(0, 500000)])
        assert tick_to_seconds(seq, 0) == 0.0

    def test_two_segment_map(self):
        # 480 ticks at 500000 us/quarter = 0.5 s, then 480 ticks at 250000 = 0.25 s
        seq = MidiSequence(ppq=480, tempo_events=[(0, 500000), (480, 250000)])
        assert tick_to_seconds(seq, 960) == pytest.approx(0.75)

    def test_ticks_before_first_tempo_use_default(self):
        seq = MidiSequence(ppq=480, tempo_events=[(480, 250000)])
        assert tick_to_seconds(seq, 480) == pytest.approx(0.5)
        assert tick_to_seconds(seq, 960) == pytest.approx(0.75)

    def test_monotonic_in_tick(self, rng):
        seq = random_midi_sequence(rng)
        ticks = np.sort(rng.integers(0, 8000, size=50))
        seconds = [tick_to_seconds(seq, int(t)) for t in ticks]
        assert all(b >= a for a, b in zip(seconds, seconds[1:]))

    def test_negative_tick_rejected(self):
        seq = MidiSequence(ppq=480)
        with pytest.raises(ValueError):
            tick_to_seconds(seq, -1)
