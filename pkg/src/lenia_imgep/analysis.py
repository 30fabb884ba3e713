"""Statistical measures of Lenia patterns and the dead/animal/non-animal classifier."""
from __future__ import annotations

import enum
from dataclasses import astuple, dataclass

import numpy as np
from scipy import ndimage

from .components import label_components
from .lenia import DynamicsParams, Rollout

VOLUME_EPSILON = 1e-4
ACTIVE_THRESHOLD = 0.1
ANIMAL_MASS_FRACTION = 0.8

FEATURE_NAMES = ("mass", "volume", "density", "asymmetry", "centeredness")


class UndefinedCenterError(ValueError):
    pass


class PatternClass(str, enum.Enum):
    DEAD = "dead"
    ANIMAL = "animal"
    NON_ANIMAL = "non-animal"


@dataclass(frozen=True)
class StatFeatures:
    mass: float
    volume: float
    density: float
    asymmetry: float
    centeredness: float

    def as_vector(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


def midpoint(L: int) -> float:
    return (L - 1) / 2.0


def activation_center(pattern: np.ndarray) -> tuple[float, float]:
    """Raw-moment center ``(x, y) = (M10 / M00, M01 / M00)``; x indexes columns."""
    a = np.asarray(pattern, dtype=np.float64)
    m00 = a.sum()
    if not m00 > 0:
        raise UndefinedCenterError("pattern has no activity")
    H, W = a.shape
    x = (a.sum(axis=0) @ np.arange(W)) / m00
    y = (a.sum(axis=1) @ np.arange(H)) / m00
    return float(x), float(y)


def recenter_shift(center: tuple[float, float], L: int) -> tuple[int, int]:
    """Integer ``(dy, dx)`` roll that moves ``center`` onto the grid midpoint."""
    mid = midpoint(L)
    # round half up: half-to-even would make the shift depend on the absolute position
    return int(np.floor(mid - center[1] + 0.5)), int(np.floor(mid - center[0] + 0.5))


def recenter(pattern: np.ndarray, center: tuple[float, float]) -> np.ndarray:
    return np.roll(pattern, recenter_shift(center, pattern.shape[0]), axis=(0, 1))


class CenterTracker:
    """Follows the activity center through a rollout, recentering after each step.

    Feeding ``A^t`` in order maintains the cumulative shift so that the
    centered copy stays around the grid midpoint even when the pattern wraps
    over a border. After the last update, ``centered`` holds ``A_C^t`` and
    ``movement`` the center displacement ``(m_x, m_y)`` from the previous step.
    """

    def __init__(self, L: int):
        self.L = L
        self.shift = (0, 0)
        self.movement = (0.0, 0.0)
        self.centered: np.ndarray | None = None
        self._last_center: tuple[float, float] | None = None

    def update(self, pattern: np.ndarray) -> None:
        shifted = np.roll(pattern, self.shift, axis=(0, 1))
        try:
            cx, cy = activation_center(shifted)
        except UndefinedCenterError:
            self.movement = (0.0, 0.0)
            self.centered = shifted
            self._last_center = None
            return
        if self._last_center is None:
            self.movement = (0.0, 0.0)
        else:
            self.movement = (cx - self._last_center[0], cy - self._last_center[1])
        dy, dx = recenter_shift((cx, cy), self.L)
        self.shift = ((self.shift[0] + dy) % self.L, (self.shift[1] + dx) % self.L)
        self.centered = np.roll(shifted, (dy, dx), axis=(0, 1))
        self._last_center = (cx + dx, cy + dy)


def _distance_weights(L: int) -> np.ndarray:
    mid = midpoint(L)
    idx = np.arange(L) - mid
    d = np.sqrt(idx[:, None] ** 2 + idx[None, :] ** 2)
    dmax = d.max()
    if dmax == 0:
        return np.ones_like(d)
    return (1.0 - d / dmax) ** 2


def features_from_centered(centered: np.ndarray, movement: tuple[float, float],
                           epsilon: float = VOLUME_EPSILON) -> StatFeatures:
    """The five measures given the final centered pattern and its last movement."""
    a = np.asarray(centered, dtype=np.float64)
    L = a.shape[0]
    n = a.size
    total = a.sum()
    mass = total / n
    volume = np.count_nonzero(a > epsilon) / n
    if not total > 0:
        return StatFeatures(0.0, float(volume), 0.0, 0.0, 0.0)
    density = mass / volume if volume > 0 else 0.0

    mx, my = movement
    if mx == 0.0 and my == 0.0:
        asymmetry = 0.0
    else:
        mid = midpoint(L)
        rel = np.arange(L) - mid
        # y grows downward: facing along the movement, positive cross lies on the right
        cross = mx * rel[:, None] - my * rel[None, :]
        right = a[cross > 0].sum()
        left = a[cross < 0].sum()
        asymmetry = (right - left) / total

    if np.all(a == a.flat[0]):
        centeredness = 0.0
    else:
        centeredness = float((_distance_weights(L) * a).sum() / total)

    return StatFeatures(float(mass), float(volume), float(density), float(asymmetry), centeredness)


def stat_features(rollout: Rollout, epsilon: float = VOLUME_EPSILON) -> StatFeatures:
    if rollout.M < 2:
        raise ValueError("stat_features needs a rollout with at least two steps")
    tracker = CenterTracker(rollout.final.shape[0])
    for state in rollout.steps:
        tracker.update(state)
    return features_from_centered(tracker.centered, tracker.movement, epsilon)


def is_dead(pattern: np.ndarray) -> bool:
    a = np.asarray(pattern)
    return bool(np.all((a == 0) | (a == 1)))


def border_band(L: int, R: int) -> tuple[slice, slice]:
    """Index ranges of the cells within distance R of the low and high border."""
    return slice(0, min(R + 1, L)), slice(max(L - 1 - R, 0), L)


def infinite_components(torus_labels: np.ndarray, finite_labels: np.ndarray, R: int) -> set[int]:
    """Toroidal labels of components that loop around the torus.

    A loop is detected when one finite-grid component holds cells near both
    borders of an opposite pair (north-south or east-west).
    """
    L = torus_labels.shape[0]
    low, high = border_band(L, R)
    looping = set()
    for axis in (0, 1):
        lo = finite_labels[low, :] if axis == 0 else finite_labels[:, low]
        hi = finite_labels[high, :] if axis == 0 else finite_labels[:, high]
        spanning = (set(np.unique(lo)) & set(np.unique(hi))) - {0}
        for f in spanning:
            looping.update(np.unique(torus_labels[finite_labels == f]).tolist())
    looping.discard(0)
    return looping


def has_animal(pattern: np.ndarray, R: int) -> bool:
    """Whether a finite connected component carries at least 80% of the activity."""
    a = np.asarray(pattern, dtype=np.float64)
    total = a.sum()
    active = a >= ACTIVE_THRESHOLD
    if not total > 0 or not active.any():
        return False
    tor, nt = label_components(active, R, periodic=True)
    fin, _ = label_components(active, R, periodic=False)
    looping = infinite_components(tor, fin, R)
    masses = ndimage.sum(a, tor, index=np.arange(1, nt + 1))
    for label, m in zip(range(1, nt + 1), np.atleast_1d(masses)):
        if label not in looping and m >= ANIMAL_MASS_FRACTION * total:
            return True
    return False


def classify_final(last: np.ndarray, previous: np.ndarray, R: int) -> PatternClass:
    """Classify from the last two states ``A^M`` and ``A^{M-1}``."""
    if not np.all(np.isfinite(last)) or is_dead(last):
        return PatternClass.DEAD
    if has_animal(last, R) and has_animal(previous, R):
        return PatternClass.ANIMAL
    return PatternClass.NON_ANIMAL


def classify(rollout: Rollout, params: DynamicsParams) -> PatternClass:
    if rollout.M < 2:
        raise ValueError("classify needs a rollout with at least two steps")
    return classify_final(rollout.steps[-1], rollout.steps[-2], params.R)
