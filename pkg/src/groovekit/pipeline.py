"""Corpus construction: walk MIDI files, filter, window, and track provenance.

Only 4/4 files are ingested.  Every window carries a manifest row (source
file, window index, split, drummer, genre, tempo); splits follow the
dataset's metadata sheet when one is provided, otherwise a stable per-file
hash assigns 80/10/10 train/validation/test.  Files are never split across
partitions because neighboring windows overlap.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, GrooveKitError
from .midi_io import parse_smf
from .representation import (
    STEPS_PER_BAR,
    GrooveTensor,
    timed_notes_from_midi,
    windows,
)

logger = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")


@dataclass(slots=True)
class ManifestRow:
    source: str
    window_index: int
    split: str
    drummer: str = ""
    genre: str = ""
    tempo_bpm: float = 120.0
    extra: dict[str, str] = field(default_factory=dict)


@dataclass(slots=True)
class IngestStats:
    files_seen: int = 0
    files_ingested: int = 0
    files_failed: list[tuple[str, str]] = field(default_factory=list)
    files_wrong_meter: int = 0
    notes_unmapped: int = 0
    windows_kept: int = 0

    def summary(self) -> str:
        return (
            f"files: {self.files_ingested}/{self.files_seen} ingested, "
            f"{self.files_wrong_meter} non-4/4, {len(self.files_failed)} failed; "
            f"notes dropped (unmapped): {self.notes_unmapped}; "
            f"windows kept: {self.windows_kept}"
        )


def hash_split(relative_path: str) -> str:
    """Stable 80/10/10 split from the file path."""
    digest = hashlib.sha256(relative_path.encode("utf-8")).digest()
    bucket = digest[0] % 10
    if bucket < 8:
        return "train"
    return "validation" if bucket == 8 else "test"


def load_metadata(path: str) -> dict[str, dict[str, str]]:
    """Dataset metadata sheet keyed by MIDI filename; unknown columns pass through."""
    table: dict[str, dict[str, str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = row.get("midi_filename") or row.get("filename") or ""
            if key:
                table[key] = row
                table.setdefault(Path(key).name, row)
    return table


def _metadata_for(relative_path: str, metadata: dict[str, dict[str, str]] | None) -> dict[str, str]:
    if not metadata:
        return {}
    return metadata.get(relative_path) or metadata.get(Path(relative_path).name) or {}


def _is_four_four(seq_time_signatures: list[tuple[int, int, int]]) -> bool:
    # no time-signature event means 4/4 by MIDI convention
    return all(num == 4 and den == 4 for _, num, den in seq_time_signatures)


def ingest_directory(
    directory: str,
    metadata_path: str | None = None,
    bars: int = 2,
    hop_bars: int = 1,
) -> tuple[list[GrooveTensor], list[ManifestRow], IngestStats]:
    """Parse every SMF under `directory` into windows plus manifest rows.

    Per-file parse failures are logged and skipped; an empty result is the
    caller's error to raise.  Output ordering is deterministic: files sorted
    by relative path, then window index.
    """
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"{directory} is not a directory")
    metadata = load_metadata(metadata_path) if metadata_path else None
    paths = sorted(
        p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in (".mid", ".midi")
    )
    stats = IngestStats(files_seen=len(paths))
    grooves: list[GrooveTensor] = []
    rows: list[ManifestRow] = []
    for path in paths:
        rel = path.relative_to(root).as_posix()
        try:
            seq = parse_smf(path.read_bytes())
        except GrooveKitError as exc:
            stats.files_failed.append((rel, f"{type(exc).__name__}: {exc}"))
            logger.warning("skipping %s: %s", rel, exc)
            continue
        if not _is_four_four(seq.time_signature_events):
            stats.files_wrong_meter += 1
            continue
        if len({uspq for _, uspq in seq.tempo_events}) > 1:
            logger.warning("%s: multiple tempi; using the first for the grid", rel)
        notes, unmapped = timed_notes_from_midi(seq)
        stats.notes_unmapped += unmapped
        meta = _metadata_for(rel, metadata)
        split = meta.get("split") or hash_split(rel)
        if split not in SPLITS:
            split = hash_split(rel)
        known = {"split", "drummer", "style", "genre", "midi_filename", "filename", "bpm"}
        extra = {k: v for k, v in meta.items() if k not in known}
        for index, window in enumerate(windows(notes, seq.initial_bpm, bars=bars, hop_bars=hop_bars)):
            grooves.append(window)
            rows.append(
                ManifestRow(
                    source=rel,
                    window_index=index,
                    split=split,
                    drummer=meta.get("drummer", ""),
                    genre=meta.get("style", meta.get("genre", "")),
                    tempo_bpm=window.tempo_bpm,
                    extra=extra,
                )
            )
        stats.files_ingested += 1
    stats.windows_kept = len(grooves)
    return grooves, rows, stats


_MANIFEST_FIELDS = ("source", "window_index", "split", "drummer", "genre", "tempo_bpm")


def save_manifest(rows: list[ManifestRow], path: str) -> None:
    extra_fields = sorted({k for row in rows for k in row.extra})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(_MANIFEST_FIELDS) + extra_fields)
        for row in rows:
            record = [
                row.source,
                row.window_index,
                row.split,
                row.drummer,
                row.genre,
                f"{row.tempo_bpm:.6f}",
            ]
            record += [row.extra.get(k, "") for k in extra_fields]
            writer.writerow(record)


def load_manifest(path: str) -> list[ManifestRow]:
    rows: list[ManifestRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            try:
                rows.append(
                    ManifestRow(
                        source=record.pop("source"),
                        window_index=int(record.pop("window_index")),
                        split=record.pop("split"),
                        drummer=record.pop("drummer", ""),
                        genre=record.pop("genre", ""),
                        tempo_bpm=float(record.pop("tempo_bpm", 120.0)),
                        extra={k: v for k, v in record.items() if v},
                    )
                )
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}: bad manifest row: {exc}") from exc
    return rows


def split_indices(rows: list[ManifestRow], split: str) -> list[int]:
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    return [i for i, row in enumerate(rows) if row.split == split]


def corpus_fingerprint(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def synthetic_corpus(
    num_windows: int,
    timesteps: int = 32,
    tempo_bpm: float = 120.0,
    seed: int = 0,
    onbeat_offset: float = 0.04,
    offbeat_offset: float = -0.08,
    accent_velocity: float = 0.9,
    weak_velocity: float = 0.5,
    jitter: float = 0.0,
) -> list[GrooveTensor]:
    """Random scores performed with a fixed position-dependent groove rule.

    Even (eighth-note) steps land late by onbeat_offset and are accented;
    odd steps land early by offbeat_offset.  Optional Gaussian jitter makes
    the rule noisy while keeping its sign structure.
    """
    if timesteps % STEPS_PER_BAR != 0:
        raise ValueError(f"timesteps={timesteps} is not whole 4/4 measures")
    rng = np.random.default_rng(seed)
    corpus: list[GrooveTensor] = []
    while len(corpus) < num_windows:
        hits = np.zeros((timesteps, 9))
        hits[::4, 0] = rng.random(timesteps // 4) < 0.9  # kick on quarters
        hits[2::4, 1] = rng.random(timesteps // 4) < 0.7  # snare on off-quarters
        hits[:, 2] = rng.random(timesteps) < 0.6  # steady hats
        hits[:, 7] = rng.random(timesteps) < 0.03  # sparse crash
        if hits.sum() == 0:
            continue
        steps = np.arange(timesteps)
        base_offset = np.where(steps % 2 == 0, onbeat_offset, offbeat_offset)
        base_velocity = np.where(steps % 4 == 0, accent_velocity, weak_velocity)
        offsets = np.repeat(base_offset[:, None], 9, axis=1)
        velocities = np.repeat(base_velocity[:, None], 9, axis=1)
        if jitter > 0:
            offsets = offsets + rng.normal(0.0, jitter, size=offsets.shape)
            velocities = velocities + rng.normal(0.0, jitter, size=velocities.shape)
        offsets = np.clip(offsets, -0.4, 0.4) * hits
        velocities = np.clip(velocities, 0.05, 1.0) * hits
        corpus.append(GrooveTensor(hits, velocities, offsets, tempo_bpm))
    return corpus
