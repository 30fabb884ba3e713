"""On-disk run directories.

Layout of one run::

    config.ini                 experiment settings and seed
    genomes.jsonl              one CPPN genome per record
    patterns/final_000001.lpat final pattern of every record
    checkpoints/ogl_iter_000100.lvae
    ogl_training.csv           per-epoch losses of each training period
    manifest.csv               one row per record, written last

The manifest is written atomically and only after everything else, so its
presence marks a completed run.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import FEATURE_NAMES, PatternClass, StatFeatures
from .cppn import CppnGenome
from .explorer import Exploration, RunRecord, SystemParams
from .goalspaces import TrainingPeriod
from .lenia import DynamicsParams
from .patterns_io import load_pattern, save_pattern
from .vae import save_checkpoint

MANIFEST = "manifest.csv"
GENOMES = "genomes.jsonl"
TRAINING_LOG = "ogl_training.csv"
PATTERN_DIR = "patterns"
CHECKPOINT_DIR = "checkpoints"

MANIFEST_COLUMNS = (["index", "parent", "class", *FEATURE_NAMES, "move_x", "move_y",
                     "R", "T", "mu", "sigma", "beta1", "beta2", "beta3", "goal", "reached", "pattern", "seed"])


def pattern_name(index: int) -> str:
    return f"{PATTERN_DIR}/final_{index:06d}.lpat"


def checkpoint_name(iteration: int) -> str:
    return f"{CHECKPOINT_DIR}/ogl_iter_{iteration:06d}.lvae"


def _vec(v) -> str:
    return "" if v is None else " ".join(repr(float(x)) for x in v)


def _parse_vec(text: str) -> np.ndarray | None:
    return None if text == "" else np.array([float(x) for x in text.split()])


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def is_complete(run_dir) -> bool:
    return (Path(run_dir) / MANIFEST).is_file()


def manifest_text(history: list[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for r in history:
        d = r.params.dynamics
        w.writerow([r.index, "" if r.parent is None else r.parent, r.cls.value,
                    *(repr(float(x)) for x in r.features.as_vector()),
                    repr(float(r.movement[0])), repr(float(r.movement[1])),
                    d.R, d.T, repr(d.mu), repr(d.sigma), *(repr(b) for b in d.beta),
                    _vec(r.goal), _vec(r.reached), pattern_name(r.index), r.seed])
    return buf.getvalue()


class RunWriter:
    """Streams records of one run to disk; ``finish`` writes the manifest."""

    def __init__(self, run_dir, config_text: str):
        self.dir = Path(run_dir)
        (self.dir / PATTERN_DIR).mkdir(parents=True, exist_ok=True)
        (self.dir / MANIFEST).unlink(missing_ok=True)
        atomic_write_text(self.dir / "config.ini", config_text)
        self._genomes = open(self.dir / GENOMES, "w")
        self._training_rows: list[list] = []

    def record(self, r: RunRecord) -> None:
        save_pattern(self.dir / pattern_name(r.index), r.final)
        self._genomes.write(json.dumps({"index": r.index, "genome": r.params.genome.to_dict()},
                                       sort_keys=True) + "\n")

    def training(self, period: TrainingPeriod, goal_space) -> None:
        (self.dir / CHECKPOINT_DIR).mkdir(exist_ok=True)
        save_checkpoint(self.dir / checkpoint_name(period.iteration), goal_space.model)
        for e in period.epochs:
            self._training_rows.append([period.iteration, period.n_train, period.n_val, e.epoch,
                                        repr(e.train_loss), repr(e.val_loss)])

    def finish(self, result: Exploration) -> None:
        self._genomes.close()
        if self._training_rows:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["iteration", "n_train", "n_val", "epoch", "train_loss", "val_loss"])
            w.writerows(self._training_rows)
            atomic_write_text(self.dir / TRAINING_LOG, buf.getvalue())
        # reached goals are final only now, after the last re-encoding
        atomic_write_text(self.dir / MANIFEST, manifest_text(result.history))

    def close(self) -> None:
        if not self._genomes.closed:
            self._genomes.close()


@dataclass
class StoredRecord:
    index: int
    parent: int | None
    cls: PatternClass
    features: StatFeatures
    movement: tuple[float, float]
    dynamics: DynamicsParams
    goal: np.ndarray | None
    reached: np.ndarray | None
    pattern: str
    seed: int


class StoredRun:
    """Read access to a completed run directory."""

    def __init__(self, run_dir):
        self.dir = Path(run_dir)
        if not is_complete(self.dir):
            raise FileNotFoundError(f"{self.dir} has no {MANIFEST}; the run is incomplete")
        with open(self.dir / MANIFEST, newline="") as f:
            rows = list(csv.DictReader(f))
        self.records = [self._parse(row) for row in rows]
        self._genomes: dict[int, CppnGenome] | None = None

    @staticmethod
    def _parse(row: dict) -> StoredRecord:
        feats = StatFeatures(*(float(row[n]) for n in FEATURE_NAMES))
        dyn = DynamicsParams(int(row["R"]), int(row["T"]), float(row["mu"]), float(row["sigma"]),
                             (float(row["beta1"]), float(row["beta2"]), float(row["beta3"])))
        return StoredRecord(int(row["index"]), int(row["parent"]) if row["parent"] else None,
                            PatternClass(row["class"]), feats,
                            (float(row["move_x"]), float(row["move_y"])), dyn,
                            _parse_vec(row["goal"]), _parse_vec(row["reached"]), row["pattern"],
                            int(row["seed"]))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def config_text(self) -> str:
        return (self.dir / "config.ini").read_text()

    def final(self, index: int) -> np.ndarray:
        return load_pattern(self.dir / self.records[index - 1].pattern)

    def finals(self) -> np.ndarray:
        return np.stack([load_pattern(self.dir / r.pattern) for r in self.records])

    def genomes(self) -> dict[int, CppnGenome]:
        if self._genomes is None:
            out = {}
            with open(self.dir / GENOMES) as f:
                for line in f:
                    item = json.loads(line)
                    out[item["index"]] = CppnGenome.from_dict(item["genome"])
            self._genomes = out
        return self._genomes

    def params(self, index: int) -> SystemParams:
        return SystemParams(self.genomes()[index], self.records[index - 1].dynamics)

    def training_log(self) -> list[dict]:
        path = self.dir / TRAINING_LOG
        if not path.is_file():
            return []
        with open(path, newline="") as f:
            return [{k: float(v) if k.endswith("loss") else int(v) for k, v in row.items()}
                    for row in csv.DictReader(f)]

    def checkpoints(self) -> list[Path]:
        return sorted((self.dir / CHECKPOINT_DIR).glob("ogl_iter_*.lvae"))
