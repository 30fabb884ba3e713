"""Goal spaces: hand-defined (HGS), random (RGS), pretrained (PGL) and online-learned (OGL).

An encoder maps an outcome (anything with ``final`` pattern and ``features``
attributes) to a goal vector; the sampler draws target goals for the
exploration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import vae as vae_mod
from .analysis import FEATURE_NAMES, PatternClass
from .cppn import MutationConfig, render_pattern, sample_genome
from .rng import torch_generator

log = logging.getLogger(__name__)

HGS_RANGES = {
    "mass": (0.0, 1.0),
    "volume": (0.0, 1.0),
    "density": (0.0, 1.0),
    "asymmetry": (-1.0, 1.0),
    "centeredness": (0.0, 1.0),
}


class GoalSpace:
    variant = ""
    dim = 0

    def encode(self, outcome) -> np.ndarray:
        return self.encode_many([outcome])[0]

    def encode_many(self, outcomes) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, reached: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def observe(self, record, iteration: int) -> None:
        """Hook called after each history append."""


class HandDefinedGoalSpace(GoalSpace):
    variant = "hgs"
    dim = len(FEATURE_NAMES)

    def __init__(self, ranges: dict[str, tuple[float, float]] = HGS_RANGES):
        self.low = np.array([ranges[n][0] for n in FEATURE_NAMES])
        self.high = np.array([ranges[n][1] for n in FEATURE_NAMES])
        if np.any(self.low >= self.high):
            raise ValueError("every goal range needs min < max")

    def encode_many(self, outcomes) -> np.ndarray:
        return np.array([o.features.as_vector() for o in outcomes]).reshape(-1, self.dim)

    def sample(self, rng, reached=None) -> np.ndarray:
        return rng.uniform(self.low, self.high)


class _VaeGoalSpace(GoalSpace):
    def __init__(self, model: vae_mod.BetaVAE):
        self.model = model
        self.dim = model.config.latent_dim

    def encode_many(self, outcomes) -> np.ndarray:
        outcomes = list(outcomes)
        if not outcomes:
            return np.zeros((0, self.dim))
        return vae_mod.encode_mean(self.model, np.stack([o.final for o in outcomes]))


class RandomGoalSpace(_VaeGoalSpace):
    """Encoder with frozen Xavier-initialized weights; goals drawn inside the reached envelope."""

    variant = "rgs"

    @classmethod
    def create(cls, config: vae_mod.VaeConfig, rng: np.random.Generator) -> "RandomGoalSpace":
        return cls(vae_mod.build_model(config, torch_generator(rng), scheme="xavier"))

    def sample(self, rng, reached) -> np.ndarray:
        reached = np.asarray(reached, dtype=np.float64)
        if reached.size == 0:
            raise ValueError("random goal space needs at least one reached goal to sample from")
        return rng.uniform(reached.min(axis=0), reached.max(axis=0))


class PretrainedGoalSpace(_VaeGoalSpace):
    variant = "pgl"

    def __init__(self, model, goal_range: float = 3.0):
        super().__init__(model)
        self.goal_range = goal_range

    def sample(self, rng, reached=None) -> np.ndarray:
        return rng.uniform(-self.goal_range, self.goal_range, size=self.dim)


def importance_weights(added_at: np.ndarray, iteration: int, period: int) -> np.ndarray:
    """Sampling weights giving half the probability mass to the last ``period`` iterations.

    Falls back to uniform weights when no or only recent patterns exist.
    """
    added_at = np.asarray(added_at)
    n_total = len(added_at)
    recent = added_at > iteration - period
    n_recent = int(recent.sum())
    if n_recent == 0 or n_recent == n_total:
        return np.full(n_total, 1.0 / n_total)
    return np.where(recent, 0.5 / n_recent, 0.5 / (n_total - n_recent))


@dataclass
class TrainingPeriod:
    iteration: int
    n_train: int
    n_val: int
    epochs: list[vae_mod.EpochLog]

    @property
    def mean_train_loss(self) -> float:
        return float(np.mean([e.train_loss for e in self.epochs])) if self.epochs else float("nan")


class OnlineGoalSpace(_VaeGoalSpace):
    """VAE goal space retrained every ``period`` iterations on the collected non-dead patterns.

    Every tenth collected pattern goes to a validation set that is only
    monitored. The optimizer state persists across training periods.
    """

    variant = "ogl"

    def __init__(self, model, goal_range: float = 3.0, period: int = 100, epochs: int = 40,
                 min_train: int = vae_mod.BATCH_SIZE, val_every: int = 10):
        super().__init__(model)
        self.goal_range = goal_range
        self.period = period
        self.epochs = epochs
        self.min_train = min_train
        self.val_every = val_every
        self.optimizer = vae_mod.make_optimizer(model)
        self._train: list[np.ndarray] = []
        self._train_added: list[int] = []
        self._val: list[np.ndarray] = []
        self._collected = 0
        self.periods: list[TrainingPeriod] = []

    @classmethod
    def create(cls, config: vae_mod.VaeConfig, rng: np.random.Generator, **kwargs) -> "OnlineGoalSpace":
        return cls(vae_mod.build_model(config, torch_generator(rng)), **kwargs)

    def sample(self, rng, reached=None) -> np.ndarray:
        return rng.uniform(-self.goal_range, self.goal_range, size=self.dim)

    def observe(self, record, iteration: int) -> None:
        if record.cls == PatternClass.DEAD:
            return
        self._collected += 1
        if self._collected % self.val_every == 0:
            self._val.append(record.final)
        else:
            self._train.append(record.final)
            self._train_added.append(iteration)

    @property
    def n_train(self) -> int:
        return len(self._train)

    def update(self, iteration: int, rng: np.random.Generator) -> TrainingPeriod | None:
        """Train for ``epochs`` epochs with recency importance sampling.

        Returns ``None`` (and trains nothing) while fewer than ``min_train``
        training patterns exist.
        """
        if self.n_train < self.min_train:
            log.info("iteration %d: %d training patterns, skipping VAE training", iteration, self.n_train)
            return None
        train = np.stack(self._train)
        val = np.stack(self._val) if self._val else np.zeros((0, *train.shape[1:]), dtype=np.float32)
        weights = importance_weights(np.array(self._train_added), iteration, self.period)
        generator = torch_generator(rng)
        epochs = []
        for epoch in range(1, self.epochs + 1):
            tl = vae_mod.train_epoch(self.model, self.optimizer, train, rng, generator, weights=weights)
            vl = vae_mod.evaluate_loss(self.model, val) if len(val) else float("nan")
            epochs.append(vae_mod.EpochLog(epoch, tl, vl))
        self.model.eval()
        period = TrainingPeriod(iteration, len(train), len(val), epochs)
        self.periods.append(period)
        return period


def split_dataset(patterns: np.ndarray, rng: np.random.Generator,
                  fractions=(0.75, 0.10, 0.15)) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffle and split into train/validation/test parts."""
    n = len(patterns)
    if n == 0:
        raise ValueError("empty dataset")
    order = rng.permutation(n)
    n_train = max(1, int(round(fractions[0] * n)))
    n_val = int(round(fractions[1] * n))
    parts = order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]
    return tuple(patterns[p] for p in parts)


def pgl_pretrain(patterns: np.ndarray, config: vae_mod.VaeConfig, epochs: int, rng: np.random.Generator):
    """Pretrain a VAE on a fixed dataset and keep the best-validation checkpoint.

    Returns ``(model, epoch_logs, (train, val, test))``.
    """
    patterns = np.asarray(patterns, dtype=np.float32)
    train, val, test = split_dataset(patterns, rng)
    model = vae_mod.build_model(config, torch_generator(rng))
    logs = vae_mod.fit(model, train, val, epochs, rng, keep_best=True)
    model.eval()
    return model, logs, (train, val, test)


def generate_pgl_dataset(n: int, L: int, M: int, rng: np.random.Generator, param_sampler,
                         max_attempts: int | None = None, cppn_config: MutationConfig = MutationConfig()):
    """Desk-scale pretraining set: half raw CPPN renders, half animal final patterns.

    Animals come from rejection sampling random parameters; if
    ``max_attempts`` rollouts yield too few, the dataset is returned short of
    animals. Returns ``(patterns, n_animals)``.
    """
    from .explorer import run_experiment

    n_animals_target = n // 2
    n_cppn = n - n_animals_target
    renders = [render_pattern(sample_genome(cppn_config, rng), L, cppn_config.passes) for _ in range(n_cppn)]
    animals = []
    attempts = 0
    max_attempts = max_attempts if max_attempts is not None else 50 * max(n_animals_target, 1)
    while len(animals) < n_animals_target and attempts < max_attempts:
        attempts += 1
        outcome = run_experiment(param_sampler(rng), L, M)
        if outcome.cls == PatternClass.ANIMAL:
            animals.append(outcome.final)
    if len(animals) < n_animals_target:
        log.warning("found %d of %d animal patterns after %d rollouts", len(animals), n_animals_target, attempts)
    patterns = np.stack(renders + animals).astype(np.float32)
    return patterns, len(animals)
