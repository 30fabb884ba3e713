"""The goal exploration loop: random bootstrap, then goal sampling, nearest-neighbor selection and mutation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import rng as rngs
from . import vae as vae_mod
from .analysis import CenterTracker, PatternClass, StatFeatures, classify_final, features_from_centered
from .cppn import CppnGenome, MutationConfig, mutate_genome, render_pattern, sample_genome
from .goalspaces import (
    GoalSpace,
    HandDefinedGoalSpace,
    OnlineGoalSpace,
    PretrainedGoalSpace,
    RandomGoalSpace,
    TrainingPeriod,
    generate_pgl_dataset,
    pgl_pretrain,
)
from .lenia import DynamicsParams, Lenia

log = logging.getLogger(__name__)

VARIANTS = ("random", "hgs", "rgs", "pgl", "ogl")


@dataclass(frozen=True)
class ParamSpec:
    low: float
    high: float
    integer: bool
    sigma: float


DEFAULT_SPECS = {
    "R": ParamSpec(2, 20, True, 0.5),
    "T": ParamSpec(1, 20, True, 0.5),
    "mu": ParamSpec(0.0, 1.0, False, 0.05),
    "sigma": ParamSpec(0.001, 0.3, False, 0.01),
    "beta": ParamSpec(0.0, 1.0, False, 0.05),
}


def param_specs(r_max: int | None = None) -> dict[str, ParamSpec]:
    """Parameter ranges, optionally with a smaller upper bound on R for small grids."""
    specs = dict(DEFAULT_SPECS)
    if r_max is not None:
        low = specs["R"].low
        if r_max < low:
            raise ValueError(f"r_max must be >= {low}, got {r_max}")
        specs["R"] = ParamSpec(low, r_max, True, specs["R"].sigma)
    return specs


def default_r_max(L: int) -> int:
    """Largest kernel radius allowed on an L x L grid, capped at the usual 20."""
    return int(min(DEFAULT_SPECS["R"].high, int(np.ceil(L / 2)) - 1))


@dataclass(frozen=True)
class SystemParams:
    genome: CppnGenome
    dynamics: DynamicsParams


def _clip_round(value: float, spec: ParamSpec) -> float:
    v = float(np.clip(value, spec.low, spec.high))
    return float(np.round(v)) if spec.integer else v


def sample_dynamics(rng: np.random.Generator, specs=DEFAULT_SPECS) -> DynamicsParams:
    vals = {name: _clip_round(rng.uniform(specs[name].low, specs[name].high), specs[name])
            for name in ("R", "T", "mu", "sigma")}
    b = specs["beta"]
    beta = tuple(float(x) for x in rng.uniform(b.low, b.high, size=3))
    return DynamicsParams(int(vals["R"]), int(vals["T"]), vals["mu"], vals["sigma"], beta)


def perturb_dynamics(d: DynamicsParams, noise: np.ndarray, specs=DEFAULT_SPECS) -> DynamicsParams:
    """Add ``noise`` (R, T, mu, sigma, beta1..3) to ``d``, clip each value to its range and round integers."""
    noise = np.asarray(noise, dtype=np.float64)
    R = _clip_round(d.R + noise[0], specs["R"])
    T = _clip_round(d.T + noise[1], specs["T"])
    mu = _clip_round(d.mu + noise[2], specs["mu"])
    sigma = _clip_round(d.sigma + noise[3], specs["sigma"])
    beta = tuple(_clip_round(b + n, specs["beta"]) for b, n in zip(d.beta, noise[4:7]))
    return DynamicsParams(int(R), int(T), mu, sigma, beta)


def mutation_sigmas(specs=DEFAULT_SPECS) -> np.ndarray:
    return np.array([specs["R"].sigma, specs["T"].sigma, specs["mu"].sigma, specs["sigma"].sigma]
                    + [specs["beta"].sigma] * 3)


def sample_random_params(rng: np.random.Generator, specs=DEFAULT_SPECS,
                         cppn: MutationConfig = MutationConfig()) -> SystemParams:
    genome = sample_genome(cppn, rng)
    return SystemParams(genome, sample_dynamics(rng, specs))


def mutate_params(params: SystemParams, rng: np.random.Generator, specs=DEFAULT_SPECS,
                  cppn: MutationConfig = MutationConfig()) -> SystemParams:
    genome = mutate_genome(params.genome, cppn, rng)
    noise = rng.normal(0.0, mutation_sigmas(specs))
    return SystemParams(genome, perturb_dynamics(params.dynamics, noise, specs))


def select_source(goal: np.ndarray, reached: np.ndarray) -> int:
    """Position of the reached goal nearest to ``goal``; the lowest position wins ties."""
    reached = np.asarray(reached, dtype=np.float64)
    if reached.size == 0:
        raise ValueError("cannot select source parameters from an empty history")
    d2 = ((reached - np.asarray(goal, dtype=np.float64)) ** 2).sum(axis=1)
    return int(np.argmin(d2))


@dataclass
class Outcome:
    initial: np.ndarray
    final: np.ndarray
    features: StatFeatures
    cls: PatternClass
    movement: tuple[float, float]


def run_experiment(params: SystemParams, L: int, M: int, passes: int = 2) -> Outcome:
    """Render the initial state, simulate M steps and summarize the final pattern.

    Only the last two states are kept; the activity center is tracked over
    the whole rollout.
    """
    initial = render_pattern(params.genome, L, passes)
    sim = Lenia(params.dynamics, L)
    tracker = CenterTracker(L)
    previous = last = initial
    for state in sim.run(initial, M):
        previous, last = last, state
        tracker.update(state)
    if not np.all(np.isfinite(last)):
        last = np.zeros_like(last)
        return Outcome(initial, last, StatFeatures(0.0, 0.0, 0.0, 0.0, 0.0), PatternClass.DEAD, (0.0, 0.0))
    features = features_from_centered(tracker.centered, tracker.movement)
    cls = classify_final(last, previous, params.dynamics.R)
    return Outcome(initial, last, features, cls, tracker.movement)


@dataclass
class RunRecord:
    index: int
    parent: int | None
    params: SystemParams
    goal: np.ndarray | None
    reached: np.ndarray | None
    final: np.ndarray
    features: StatFeatures
    cls: PatternClass
    movement: tuple[float, float]
    seed: int


@dataclass
class ExperimentConfig:
    """Settings of one exploration run (one variant, one seed)."""

    variant: str = "random"
    n: int = 100
    n_init: int = 20
    grid: int = 64
    steps: int = 100
    r_max: int | None = None
    latent_dim: int = 8
    beta: float = 5.0
    goal_range: float = 3.0
    train_every: int = 100
    train_epochs: int = 40
    min_train: int = vae_mod.BATCH_SIZE
    dataset: str | None = None
    dataset_size: int = 200
    pretrain_epochs: int = 100

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 <= self.n_init <= self.n:
            raise ValueError("n_init must lie in [0, n]")
        if self.variant != "random" and self.n_init < 1:
            # goal sampling and source selection need a non-empty history
            raise ValueError("goal-directed variants need n_init >= 1")
        if self.grid < 8:
            raise ValueError("grid must be >= 8")
        if self.steps < 2:
            raise ValueError("steps must be >= 2")
        if self.r_max is not None and not 2 <= self.r_max < self.grid / 2:
            raise ValueError(f"r_max must lie in [2, grid/2), got {self.r_max}")
        if self.r_max is None and default_r_max(self.grid) < 2:
            raise ValueError("grid too small for any kernel radius")
        if self.variant in ("rgs", "pgl", "ogl") and self.grid % 16:
            raise ValueError("learned goal spaces need a grid size that is a multiple of 16")
        for name in ("latent_dim", "train_every", "train_epochs", "min_train", "dataset_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pretrain_epochs < 0:
            raise ValueError("pretrain_epochs must be >= 0")
        if not self.goal_range > 0 or not self.beta > 0:
            raise ValueError("goal_range and beta must be > 0")

    @property
    def specs(self) -> dict[str, ParamSpec]:
        return param_specs(self.r_max if self.r_max is not None else default_r_max(self.grid))

    @property
    def vae_config(self) -> vae_mod.VaeConfig:
        return vae_mod.VaeConfig(input_size=self.grid, latent_dim=self.latent_dim, beta=self.beta)


def load_dataset_dir(path) -> np.ndarray:
    from .patterns_io import load_pattern

    files = sorted(Path(path).glob("*.lpat"))
    if not files:
        raise ValueError(f"no .lpat patterns found in {path}")
    return np.stack([load_pattern(f) for f in files])


def build_goal_space(config: ExperimentConfig, seed: int) -> GoalSpace | None:
    rng = rngs.stream(seed, rngs.GOALSPACE_INIT)
    if config.variant == "random":
        return None
    if config.variant == "hgs":
        return HandDefinedGoalSpace()
    if config.variant == "rgs":
        return RandomGoalSpace.create(config.vae_config, rng)
    if config.variant == "ogl":
        return OnlineGoalSpace.create(config.vae_config, rng, goal_range=config.goal_range,
                                      period=config.train_every, epochs=config.train_epochs,
                                      min_train=config.min_train)
    if config.dataset:
        patterns = load_dataset_dir(config.dataset)
    else:
        specs = config.specs
        patterns, _ = generate_pgl_dataset(config.dataset_size, config.grid, config.steps,
                                           rngs.stream(seed, rngs.DATASET),
                                           lambda r: sample_random_params(r, specs))
    model, _, _ = pgl_pretrain(patterns, config.vae_config, config.pretrain_epochs, rng)
    return PretrainedGoalSpace(model, config.goal_range)


@dataclass
class Exploration:
    config: ExperimentConfig
    seed: int
    history: list[RunRecord] = field(default_factory=list)
    goal_space: GoalSpace | None = None
    periods: list[TrainingPeriod] = field(default_factory=list)

    def reached_matrix(self) -> np.ndarray:
        return np.stack([r.reached for r in self.history])


def reencode_history(goal_space: GoalSpace, history: list[RunRecord]) -> None:
    if not history:
        return
    encoded = goal_space.encode_many(history)
    for record, g in zip(history, encoded):
        record.reached = g


def explore(config: ExperimentConfig, seed: int,
            on_record: Callable[[RunRecord], None] | None = None,
            on_training: Callable[[TrainingPeriod, GoalSpace], None] | None = None) -> Exploration:
    """Run ``config.n`` iterations reproducibly from ``seed``.

    Iteration ``i`` draws everything from its own stream, so the sequence of
    sampled parameters does not depend on logging or on training draws.
    """
    specs = config.specs
    goal_space = build_goal_space(config, seed)
    result = Exploration(config, seed, goal_space=goal_space)
    reached: list[np.ndarray] = []
    for i in range(1, config.n + 1):
        rng = rngs.stream(seed, rngs.ITERATION, i)
        goal = parent = None
        if goal_space is None or i <= config.n_init:
            params = sample_random_params(rng, specs)
        else:
            goal = goal_space.sample(rng, np.stack(reached))
            parent = select_source(goal, np.stack(reached)) + 1
            params = mutate_params(result.history[parent - 1].params, rng, specs)
        outcome = run_experiment(params, config.grid, config.steps)
        g = goal_space.encode(outcome) if goal_space is not None else None
        record = RunRecord(i, parent, params, goal, g, outcome.final, outcome.features,
                           outcome.cls, outcome.movement, seed)
        result.history.append(record)
        if goal_space is not None:
            reached.append(g)
            goal_space.observe(record, i)
        if isinstance(goal_space, OnlineGoalSpace) and i % config.train_every == 0:
            period = goal_space.update(i, rngs.stream(seed, rngs.TRAINING, i))
            if period is not None:
                reencode_history(goal_space, result.history)
                reached = [r.reached for r in result.history]
                result.periods.append(period)
                if on_training:
                    on_training(period, goal_space)
        if on_record:
            on_record(record)
    return result
