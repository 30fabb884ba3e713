"""Analytic spaces, binned diversity, class proportions and algorithm comparison."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from . import vae as vae_mod
from .analysis import PatternClass
from .cppn import render_pattern
from .rng import torch_generator
from .stats import welch_t

log = logging.getLogger(__name__)

LATENT_RANGE = (-5.0, 5.0)
BEHAVIOR_STAT_RANGES = {
    "mass": (0.0, 1.0),
    "volume": (0.0, 1.0),
    "density": (0.0, 1.0),
    "asymmetry": (-1.0, 1.0),
    "centeredness": (0.0, 1.0),
}
PARAMETER_RANGES = {
    "R": (1.0, 20.0),
    "T": (2.0, 10.0),
    "mu": (0.0, 1.0),
    "sigma": (0.0, 0.3),
    "beta1": (0.0, 1.0),
    "beta2": (0.0, 1.0),
    "beta3": (0.0, 1.0),
}
DEFAULT_BINS = 5
VALIDATION_RATIO = 5000 / 42500


@dataclass(frozen=True)
class AnalyticSpace:
    names: tuple[str, ...]
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        if not (len(self.names) == len(self.low) == len(self.high)):
            raise ValueError("names and ranges differ in length")
        if np.any(np.asarray(self.low) >= np.asarray(self.high)):
            raise ValueError("every dimension needs min < max")

    @property
    def dim(self) -> int:
        return len(self.names)

    @classmethod
    def from_ranges(cls, ranges: dict[str, tuple[float, float]]) -> "AnalyticSpace":
        return cls(tuple(ranges), np.array([r[0] for r in ranges.values()], dtype=np.float64),
                   np.array([r[1] for r in ranges.values()], dtype=np.float64))

    @classmethod
    def behavior(cls, latent_dim: int = 8) -> "AnalyticSpace":
        ranges = dict(BEHAVIOR_STAT_RANGES)
        ranges.update({f"z{i + 1}": LATENT_RANGE for i in range(latent_dim)})
        return cls.from_ranges(ranges)

    @classmethod
    def parameter(cls, latent_dim: int = 8) -> "AnalyticSpace":
        ranges = dict(PARAMETER_RANGES)
        ranges.update({f"z{i + 1}": LATENT_RANGE for i in range(latent_dim)})
        return cls.from_ranges(ranges)


def bin_indices(points, space: AnalyticSpace, bins_inside: int = DEFAULT_BINS) -> np.ndarray:
    """Per-dimension bin of every point.

    Inside bins are numbered ``1..bins_inside`` over half-open intervals,
    with the upper bound itself in the last one; 0 and ``bins_inside + 1``
    collect values below and above the range.
    """
    if bins_inside < 1:
        raise ValueError("bins_inside must be >= 1")
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.zeros((0, space.dim), dtype=np.int64)
    pts = pts.reshape(-1, pts.shape[-1]) if pts.ndim > 1 else pts.reshape(1, -1)
    if pts.shape[1] != space.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, space has {space.dim}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    rel = (pts - space.low) / (space.high - space.low)
    idx = np.clip(np.floor(rel * bins_inside).astype(np.int64), 0, bins_inside - 1) + 1
    idx[pts < space.low] = 0
    idx[pts > space.high] = bins_inside + 1
    return idx


def diversity(points, space: AnalyticSpace, bins_inside: int = DEFAULT_BINS) -> int:
    """Number of distinct occupied bins."""
    idx = bin_indices(points, space, bins_inside)
    if len(idx) == 0:
        return 0
    return int(len(np.unique(idx, axis=0)))


def diversity_curve(points, classes, space: AnalyticSpace, bins_inside: int = DEFAULT_BINS,
                    class_filter: PatternClass | None = None) -> np.ndarray:
    """Cumulative diversity after each iteration, optionally counting one class only."""
    idx = bin_indices(points, space, bins_inside)
    seen: set[tuple] = set()
    curve = np.zeros(len(idx), dtype=np.int64)
    for i, (row, cls) in enumerate(zip(idx, classes)):
        if class_filter is None or PatternClass(cls) == class_filter:
            seen.add(tuple(row))
        curve[i] = len(seen)
    return curve


def class_proportions(classes) -> dict[PatternClass, float]:
    classes = [PatternClass(c) for c in classes]
    if not classes:
        raise ValueError("no records")
    n = len(classes)
    return {c: sum(1 for x in classes if x == c) / n for c in PatternClass}


@dataclass
class RunArrays:
    """What the evaluation needs from one exploration run."""

    label: str
    seed: int
    classes: list[PatternClass]
    features: np.ndarray   # (n, 5)
    dynamics: np.ndarray   # (n, 7)
    finals: np.ndarray     # (n, L, L)
    initials: np.ndarray   # (n, L, L)

    @classmethod
    def from_exploration(cls, label: str, result) -> "RunArrays":
        h = result.history
        return cls(label, result.seed, [r.cls for r in h],
                   np.stack([r.features.as_vector() for r in h]),
                   np.stack([r.params.dynamics.as_vector() for r in h]),
                   np.stack([r.final for r in h]),
                   np.stack([render_pattern(r.params.genome, result.config.grid) for r in h]))

    @classmethod
    def from_stored(cls, label: str, run, grid: int) -> "RunArrays":
        genomes = run.genomes()
        recs = run.records
        return cls(label, recs[0].seed if recs else 0, [r.cls for r in recs],
                   np.stack([r.features.as_vector() for r in recs]),
                   np.stack([r.dynamics.as_vector() for r in recs]),
                   run.finals(),
                   np.stack([render_pattern(genomes[r.index], grid) for r in recs]))


def _split_pool(patterns: np.ndarray, rng: np.random.Generator, val_ratio: float = VALIDATION_RATIO):
    order = rng.permutation(len(patterns))
    n_val = max(1, int(round(val_ratio * len(patterns)))) if len(patterns) > 1 else 0
    return patterns[order[n_val:]], patterns[order[:n_val]]


def pool_patterns(runs: list[RunArrays], attr: str, pool_size: int | None,
                  rng: np.random.Generator, classes=None) -> np.ndarray:
    """Pool patterns of every run, subsampled to ``pool_size`` if given.

    All classes are pooled unless ``classes`` names the ones to keep.
    """
    keep = None if classes is None else {PatternClass(c) for c in classes}
    parts = [getattr(r, attr)[[keep is None or c in keep for c in r.classes]] for r in runs]
    pool = np.concatenate(parts) if parts else np.zeros((0,))
    if len(pool) == 0:
        raise ValueError("empty pattern pool")
    if pool_size is not None and pool_size < len(pool):
        pool = pool[np.sort(rng.choice(len(pool), size=pool_size, replace=False))]
    return pool.astype(np.float32)


def train_analytic_vae(patterns: np.ndarray, epochs: int, rng: np.random.Generator,
                       latent_dim: int = 8) -> tuple[vae_mod.BetaVAE, list[vae_mod.EpochLog]]:
    """Train one evaluation VAE with a 7.5:1 train/validation split, keeping the best-validation state."""
    patterns = np.asarray(patterns, dtype=np.float32)
    if len(patterns) == 0:
        raise ValueError("empty pattern pool")
    config = vae_mod.VaeConfig(input_size=patterns.shape[-1], latent_dim=latent_dim)
    train, val = _split_pool(patterns, rng)
    model = vae_mod.build_model(config, torch_generator(rng))
    logs = vae_mod.fit(model, train, val, epochs, rng, keep_best=True)
    model.eval()
    return model, logs


def train_analytic_vaes(runs: list[RunArrays], epochs: int, rng: np.random.Generator,
                        pool_size: int | None = None, latent_dim: int = 8, classes=None):
    """Behavior VAE on final patterns and parameter VAE on initial states of all runs."""
    finals = pool_patterns(runs, "finals", pool_size, rng, classes)
    initials = pool_patterns(runs, "initials", pool_size, rng, classes)
    behavior, _ = train_analytic_vae(finals, epochs, rng, latent_dim)
    parameter, _ = train_analytic_vae(initials, epochs, rng, latent_dim)
    return behavior, parameter


@dataclass
class ScoredRun:
    run: RunArrays
    behavior: np.ndarray    # (n, 5 + d)
    parameter: np.ndarray   # (n, 7 + d)


def score_run(run: RunArrays, behavior_vae, parameter_vae) -> ScoredRun:
    zb = vae_mod.encode_mean(behavior_vae, run.finals)
    zp = vae_mod.encode_mean(parameter_vae, run.initials)
    return ScoredRun(run, np.hstack([run.features, zb]), np.hstack([run.dynamics, zp]))


def bin_sensitivity(groups: dict[str, list[np.ndarray]], space: AnalyticSpace,
                    bin_counts=(3, 5, 7)) -> dict[int, dict[str, float]]:
    """Mean final diversity per algorithm for each bins-inside count."""
    return {b: {label: float(np.mean([diversity(p, space, b) for p in pts])) for label, pts in groups.items()}
            for b in bin_counts}


def ranking(scores: dict[str, float]) -> list[str]:
    """Algorithm labels ordered from highest to lowest score (ties by label)."""
    return sorted(scores, key=lambda k: (-scores[k], k))


def significance_matrix(groups: dict[str, list[float]]) -> list[tuple[str, str, float, float]]:
    """Welch's t-test between every pair of algorithms; degenerate pairs get NaN."""
    rows = []
    for a, b in itertools.combinations(sorted(groups), 2):
        try:
            t, p, _ = welch_t(groups[a], groups[b])
        except ValueError:
            t, p = float("nan"), float("nan")
        rows.append((a, b, t, p))
    return rows

