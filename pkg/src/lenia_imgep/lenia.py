"""Lenia continuous cellular automaton on a square toroidal grid.

Cell states are kept as ``float32`` arrays of shape ``(L, L)`` indexed
``[y, x]``. Convolutions accumulate in ``float64``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

KERNEL_ALPHA = 4.0
KERNEL_RINGS = 3
SPECTRAL_MIN_SIZE = 64


class InvalidParameterError(ValueError):
    """A simulation parameter is outside its admissible domain."""


@dataclass(frozen=True)
class DynamicsParams:
    """Settings of the Lenia update rule.

    ``R`` is the kernel radius in cells, ``T`` the time resolution, ``mu`` and
    ``sigma`` shape the growth mapping and ``beta`` holds the peak height of
    each of the three kernel rings.
    """

    R: int
    T: int
    mu: float
    sigma: float
    beta: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if len(self.beta) != KERNEL_RINGS:
            raise InvalidParameterError(f"beta must have {KERNEL_RINGS} entries")
        if self.R < 1:
            raise InvalidParameterError(f"R must be >= 1, got {self.R}")
        if self.T < 1:
            raise InvalidParameterError(f"T must be >= 1, got {self.T}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.R, self.T, self.mu, self.sigma, *self.beta], dtype=np.float64)


@dataclass
class Rollout:
    steps: list[np.ndarray] = field(default_factory=list)

    @property
    def M(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> np.ndarray:
        return self.steps[-1]


def as_pattern(cells) -> np.ndarray:
    """Validate and convert ``cells`` into a float32 square pattern."""
    a = np.asarray(cells, dtype=np.float32)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"pattern must be a square 2D grid, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or a.min(initial=0.0) < 0.0 or a.max(initial=0.0) > 1.0:
        raise ValueError("pattern values must be finite and within [0, 1]")
    return a


def growth_mapping(u, mu: float, sigma: float):
    """Exponential growth mapping ``2 exp(-(u - mu)^2 / (2 sigma^2)) - 1``."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    u = np.asarray(u, dtype=np.float64)
    out = 2.0 * np.exp(-((u - mu) ** 2) / (2.0 * sigma * sigma)) - 1.0
    return float(out) if out.ndim == 0 else out


def kernel_core(r, alpha: float = KERNEL_ALPHA):
    """Exponential kernel core ``exp(alpha - alpha / (4 r (1 - r)))`` on (0, 1), zero elsewhere."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    inside = (r > 0.0) & (r < 1.0)
    ri = r[inside]
    out[inside] = np.exp(alpha - alpha / (4.0 * ri * (1.0 - ri)))
    return float(out) if out.ndim == 0 else out


def kernel_shell(r, beta, alpha: float = KERNEL_ALPHA):
    """Concentric-ring shell: ring ``floor(B r)`` scaled by its beta, zero for r >= 1."""
    beta = np.asarray(beta, dtype=np.float64)
    rings = len(beta)
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    inside = (r >= 0.0) & (r < 1.0)
    br = rings * r[inside]
    idx = np.minimum(np.floor(br).astype(int), rings - 1)
    out[inside] = beta[idx] * kernel_core(np.mod(br, 1.0), alpha)
    return float(out) if out.ndim == 0 else out


def torus_distance(L: int) -> np.ndarray:
    """Euclidean distance of every cell to the origin cell ``(0, 0)`` on an L x L torus."""
    idx = np.arange(L)
    d1 = np.minimum(idx, L - idx).astype(np.float64)
    return np.sqrt(d1[:, None] ** 2 + d1[None, :] ** 2)


def build_kernel(params: DynamicsParams, L: int) -> np.ndarray:
    """Normalized Lenia kernel with its origin at cell ``[0, 0]`` of an L x L torus.

    An all-zero ``beta`` yields an all-zero kernel (nothing to normalize).
    """
    if params.R < 1:
        raise InvalidParameterError(f"R must be >= 1, got {params.R}")
    if params.R >= L / 2:
        raise InvalidParameterError(f"kernel radius R={params.R} self-overlaps on a {L}x{L} torus")
    k = kernel_shell(torus_distance(L) / params.R, params.beta)
    total = k.sum()
    if total > 0:
        k = k / total
    return k


def convolve_direct(state: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Toroidal convolution by direct summation over the kernel's support."""
    a = np.asarray(state, dtype=np.float64)
    if a.shape != kernel.shape:
        raise ValueError(f"state shape {a.shape} != kernel shape {kernel.shape}")
    ys, xs = np.nonzero(kernel)
    if len(ys) == 0:
        return np.zeros_like(a)
    L = a.shape[0]
    r = int(max(np.minimum(ys, L - ys).max(), np.minimum(xs, L - xs).max()))
    offsets = np.arange(-r, r + 1)
    window = kernel[np.ix_(offsets % L, offsets % L)].copy()
    if 2 * r == L:
        # offsets -r and +r are the same torus cell; keep it once
        window[-1, :] = 0.0
        window[:, -1] = 0.0
    return signal.convolve2d(a, window, mode="same", boundary="wrap")


def convolve_spectral(state: np.ndarray, kernel: np.ndarray, kernel_fft: np.ndarray | None = None) -> np.ndarray:
    """Toroidal convolution through real FFTs."""
    a = np.asarray(state, dtype=np.float64)
    if a.shape != kernel.shape:
        raise ValueError(f"state shape {a.shape} != kernel shape {kernel.shape}")
    if kernel_fft is None:
        kernel_fft = np.fft.rfft2(kernel)
    return np.fft.irfft2(np.fft.rfft2(a) * kernel_fft, s=a.shape)


class Lenia:
    """A Lenia system for fixed dynamics on a fixed grid size.

    The kernel (and its spectrum, for grids of at least ``SPECTRAL_MIN_SIZE``
    cells per side) is computed once and reused by every step.
    """

    def __init__(self, params: DynamicsParams, L: int, method: str | None = None):
        if not params.sigma > 0:
            raise InvalidParameterError(f"sigma must be > 0, got {params.sigma}")
        self.params = params
        self.L = L
        self.kernel = build_kernel(params, L)
        self.method = method or ("spectral" if L >= SPECTRAL_MIN_SIZE else "direct")
        if self.method not in ("spectral", "direct"):
            raise ValueError(f"unknown convolution method {self.method!r}")
        self._kernel_fft = np.fft.rfft2(self.kernel) if self.method == "spectral" else None

    def potential(self, state: np.ndarray) -> np.ndarray:
        if self.method == "spectral":
            return convolve_spectral(state, self.kernel, self._kernel_fft)
        return convolve_direct(state, self.kernel)

    def step(self, state: np.ndarray) -> np.ndarray:
        if state.shape != (self.L, self.L):
            raise ValueError(f"state shape {state.shape} does not match grid size {self.L}")
        p = self.params
        growth = growth_mapping(self.potential(state), p.mu, p.sigma)
        nxt = state.astype(np.float64) + growth / p.T
        return np.clip(nxt, 0.0, 1.0).astype(np.float32)

    def run(self, initial: np.ndarray, M: int):
        """Yield ``A^1 .. A^M`` starting with ``initial`` itself."""
        if M < 2:
            raise ValueError(f"rollout needs M >= 2 steps, got {M}")
        state = np.asarray(initial, dtype=np.float32)
        yield state
        for _ in range(M - 1):
            state = self.step(state)
            yield state


def step(state: np.ndarray, params: DynamicsParams, kernel: np.ndarray, method: str | None = None) -> np.ndarray:
    """One Lenia update ``clip(A + G(K * A) / T, 0, 1)`` with a precomputed kernel."""
    state = np.asarray(state, dtype=np.float32)
    if state.shape != kernel.shape:
        raise ValueError(f"state shape {state.shape} != kernel shape {kernel.shape}")
    if method is None:
        method = "spectral" if state.shape[0] >= SPECTRAL_MIN_SIZE else "direct"
    u = convolve_spectral(state, kernel) if method == "spectral" else convolve_direct(state, kernel)
    nxt = state.astype(np.float64) + growth_mapping(u, params.mu, params.sigma) / params.T
    return np.clip(nxt, 0.0, 1.0).astype(np.float32)


def rollout(initial: np.ndarray, params: DynamicsParams, M: int = 200, method: str | None = None) -> Rollout:
    initial = as_pattern(initial)
    sim = Lenia(params, initial.shape[0], method=method)
    return Rollout(steps=list(sim.run(initial, M)))
