"""Evaluation metrics: timing MAE/MSE, group-wise KL divergences, bootstrap CIs.

Timing errors are scored per note over the cells both prediction and truth
occupy.  Distribution metrics aggregate all notes into four groups by 16th
position within the quarter note (timestep mod 4), fit a Gaussian per group
and average the closed-form KL across groups.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStd, EmptyIntersection, InsufficientGroup
from .representation import GrooveTensor

STD_TOLERANCE = 1e-6
NUM_POSITION_GROUPS = 4


@dataclass(frozen=True, slots=True)
class MetricValue:
    value: float
    ci_low: float
    ci_high: float
    n: int

    def as_dict(self) -> dict:
        return {"value": self.value, "ci_low": self.ci_low, "ci_high": self.ci_high, "n": self.n}


@dataclass(frozen=True, slots=True)
class MetricsReport:
    """Point estimates with 95% bootstrap confidence intervals."""

    mae_ms: MetricValue
    mse_16th: MetricValue
    timing_kl: MetricValue | None
    velocity_kl: MetricValue | None
    note_count: int
    kl_direction: str = "pred_vs_truth"

    def as_dict(self) -> dict:
        out = {
            "mae_ms": self.mae_ms.as_dict(),
            "mse_16th": self.mse_16th.as_dict(),
            "note_count": self.note_count,
            "kl_direction": self.kl_direction,
        }
        out["timing_kl"] = self.timing_kl.as_dict() if self.timing_kl else None
        out["velocity_kl"] = self.velocity_kl.as_dict() if self.velocity_kl else None
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _ms_per_step(tempo_bpm: float) -> float:
    return 60000.0 / (tempo_bpm * 4.0)


def per_note_timing_errors(pred: GrooveTensor, truth: GrooveTensor) -> tuple[np.ndarray, np.ndarray]:
    """(absolute errors in ms, squared errors in 16th units) over shared hits."""
    mask = (pred.hits > 0) & (truth.hits > 0)
    if not mask.any():
        raise EmptyIntersection("prediction and truth share no hits")
    delta = pred.offsets[mask] - truth.offsets[mask]
    return np.abs(delta) * _ms_per_step(truth.tempo_bpm), delta * delta


def timing_mae_ms(pred: GrooveTensor, truth: GrooveTensor) -> float:
    """Mean absolute timing error in milliseconds over shared hits."""
    abs_ms, _ = per_note_timing_errors(pred, truth)
    return float(abs_ms.mean())


def timing_mse_16th(pred: GrooveTensor, truth: GrooveTensor) -> float:
    """Mean squared timing error in 16th-note units (tempo-independent)."""
    _, sq = per_note_timing_errors(pred, truth)
    return float(sq.mean())


def gaussian_kl(mu1: float, sigma1: float, mu2: float, sigma2: float) -> float:
    """KL(N(mu1, sigma1^2) || N(mu2, sigma2^2)), closed form."""
    if sigma1 <= STD_TOLERANCE or sigma2 <= STD_TOLERANCE:
        raise DegenerateStd(f"sigma below tolerance: {sigma1}, {sigma2}")
    return float(
        np.log(sigma2 / sigma1) + (sigma1**2 + (mu1 - mu2) ** 2) / (2.0 * sigma2**2) - 0.5
    )


def _notes_by_group(grooves: list[GrooveTensor], which: str) -> list[np.ndarray]:
    """Per-group value arrays for all hits, grouped by timestep mod 4."""
    if which not in ("offsets", "velocities"):
        raise ValueError(f"unknown field {which!r}")
    groups: list[list[np.ndarray]] = [[] for _ in range(NUM_POSITION_GROUPS)]
    for g in grooves:
        values = getattr(g, which)
        for position in range(NUM_POSITION_GROUPS):
            rows = np.arange(position, g.timesteps, NUM_POSITION_GROUPS)
            mask = g.hits[rows] > 0
            groups[position].append(values[rows][mask])
    return [np.concatenate(parts) if parts else np.array([]) for parts in groups]


def _group_params(values: np.ndarray) -> tuple[float, float]:
    if values.size < 2:
        raise InsufficientGroup(f"group has {values.size} notes, need >= 2")
    return float(values.mean()), float(values.std(ddof=1))


def distribution_kl(
    pred: list[GrooveTensor],
    truth: list[GrooveTensor],
    which: str,
    direction: str = "pred_vs_truth",
) -> float:
    """Average per-group Gaussian KL between predicted and true note values.

    direction "pred_vs_truth" scores KL(pred || truth); "truth_vs_pred"
    swaps the arguments.
    """
    pred_groups = _notes_by_group(pred, which)
    truth_groups = _notes_by_group(truth, which)
    kls = []
    for pred_values, truth_values in zip(pred_groups, truth_groups):
        mu_p, sd_p = _group_params(pred_values)
        mu_t, sd_t = _group_params(truth_values)
        if direction == "pred_vs_truth":
            kls.append(gaussian_kl(mu_p, sd_p, mu_t, sd_t))
        elif direction == "truth_vs_pred":
            kls.append(gaussian_kl(mu_t, sd_t, mu_p, sd_p))
        else:
            raise ValueError(f"unknown direction {direction!r}")
    return float(np.mean(kls))


def bootstrap_ci(
    values: np.ndarray, num_resamples: int = 1000, seed: int = 0, statistic=np.mean
) -> tuple[float, float]:
    """Percentile bootstrap 95% interval of a statistic, deterministic per seed."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ValueError("need at least 2 values to bootstrap")
    rng = np.random.default_rng(seed)
    stats = np.empty(num_resamples)
    for b in range(num_resamples):
        sample = values[rng.integers(0, values.size, size=values.size)]
        stats[b] = statistic(sample)
    return float(np.percentile(stats, 2.5)), float(np.percentile(stats, 97.5))


def _bootstrap_group_kl(
    pred_groups: list[np.ndarray],
    truth_groups: list[np.ndarray],
    direction: str,
    num_resamples: int,
    seed: int,
) -> tuple[float, float]:
    """Bootstrap the averaged group KL by resampling each side's notes."""
    rng = np.random.default_rng(seed)
    stats = np.empty(num_resamples)
    for b in range(num_resamples):
        kls = []
        for pred_values, truth_values in zip(pred_groups, truth_groups):
            p = pred_values[rng.integers(0, pred_values.size, size=pred_values.size)]
            t = truth_values[rng.integers(0, truth_values.size, size=truth_values.size)]
            mu_p, sd_p = float(p.mean()), float(p.std(ddof=1))
            mu_t, sd_t = float(t.mean()), float(t.std(ddof=1))
            if min(sd_p, sd_t) <= STD_TOLERANCE:  # degenerate resample; skip group
                continue
            if direction == "pred_vs_truth":
                kls.append(gaussian_kl(mu_p, sd_p, mu_t, sd_t))
            else:
                kls.append(gaussian_kl(mu_t, sd_t, mu_p, sd_p))
        stats[b] = float(np.mean(kls)) if kls else np.nan
    stats = stats[np.isfinite(stats)]
    return float(np.percentile(stats, 2.5)), float(np.percentile(stats, 97.5))


def evaluate_pairs(
    pred: list[GrooveTensor],
    truth: list[GrooveTensor],
    num_resamples: int = 1000,
    seed: int = 0,
    direction: str = "pred_vs_truth",
    with_kl: bool = True,
) -> MetricsReport:
    """Score a prediction set against its ground truth windows.

    Timing errors pool per-note over all window pairs; KL metrics compare
    the pooled note distributions.  with_kl=False skips them (the quantized
    baseline has degenerate, zero-variance predictions).
    """
    if len(pred) != len(truth):
        raise ValueError(f"{len(pred)} predictions vs {len(truth)} truths")
    abs_parts, sq_parts = [], []
    for p, t in zip(pred, truth):
        abs_ms, sq = per_note_timing_errors(p, t)
        abs_parts.append(abs_ms)
        sq_parts.append(sq)
    abs_ms = np.concatenate(abs_parts)
    sq = np.concatenate(sq_parts)
    mae_ci = bootstrap_ci(abs_ms, num_resamples, seed)
    mse_ci = bootstrap_ci(sq, num_resamples, seed + 1)
    mae = MetricValue(float(abs_ms.mean()), *mae_ci, abs_ms.size)
    mse = MetricValue(float(sq.mean()), *mse_ci, sq.size)

    timing_kl = velocity_kl = None
    if with_kl:
        for which, slot_seed in (("offsets", seed + 2), ("velocities", seed + 3)):
            pred_groups = _notes_by_group(pred, which)
            truth_groups = _notes_by_group(truth, which)
            point = distribution_kl(pred, truth, which, direction)
            ci = _bootstrap_group_kl(pred_groups, truth_groups, direction, num_resamples, slot_seed)
            n = int(sum(g.size for g in pred_groups))
            if which == "offsets":
                timing_kl = MetricValue(point, *ci, n)
            else:
                velocity_kl = MetricValue(point, *ci, n)

    return MetricsReport(
        mae_ms=mae,
        mse_16th=mse,
        timing_kl=timing_kl,
        velocity_kl=velocity_kl,
        note_count=int(abs_ms.size),
        kl_direction=direction,
    )


@dataclass(frozen=True, slots=True)
class BeatStats:
    """Offset statistics split into on-beat (even step) and off-beat notes."""

    onbeat_mean: float
    offbeat_mean: float
    onbeat_count: int
    offbeat_count: int
    onbeat_histogram: tuple[np.ndarray, np.ndarray]
    offbeat_histogram: tuple[np.ndarray, np.ndarray]


def onbeat_offbeat_stats(corpus: list[GrooveTensor], bins: int = 40) -> BeatStats:
    """Mean offsets and histograms for eighth-note (even) vs off-grid steps."""
    if not corpus:
        raise ValueError("empty corpus")
    on_values, off_values = [], []
    for g in corpus:
        even = np.arange(0, g.timesteps, 2)
        odd = np.arange(1, g.timesteps, 2)
        on_values.append(g.offsets[even][g.hits[even] > 0])
        off_values.append(g.offsets[odd][g.hits[odd] > 0])
    on = np.concatenate(on_values)
    off = np.concatenate(off_values)
    edges = np.linspace(-0.5, 0.5, bins + 1)
    return BeatStats(
        onbeat_mean=float(on.mean()) if on.size else 0.0,
        offbeat_mean=float(off.mean()) if off.size else 0.0,
        onbeat_count=int(on.size),
        offbeat_count=int(off.size),
        onbeat_histogram=np.histogram(on, bins=edges),
        offbeat_histogram=np.histogram(off, bins=edges),
    )


@dataclass(frozen=True, slots=True)
class PositionGroupStats:
    """Per 16th-position group (timestep mod 4): offset and velocity moments."""

    offset_mean: tuple[float, ...]
    offset_std: tuple[float, ...]
    velocity_mean: tuple[float, ...]
    velocity_std: tuple[float, ...]
    counts: tuple[int, ...]


def position_group_stats(corpus: list[GrooveTensor]) -> PositionGroupStats:
    off_groups = _notes_by_group(corpus, "offsets")
    vel_groups = _notes_by_group(corpus, "velocities")
    off_params = [_group_params(g) for g in off_groups]
    vel_params = [_group_params(g) for g in vel_groups]
    return PositionGroupStats(
        offset_mean=tuple(p[0] for p in off_params),
        offset_std=tuple(p[1] for p in off_params),
        velocity_mean=tuple(p[0] for p in vel_params),
        velocity_std=tuple(p[1] for p in vel_params),
        counts=tuple(g.size for g in off_groups),
    )
