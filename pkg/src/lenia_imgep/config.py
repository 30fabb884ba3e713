"""Campaign configuration files.

A campaign file is INI-style::

    [campaign]
    output = runs
    parallel = 2

    [evaluation]
    bins = 5
    vae_epochs = 20

    [experiment:hgs]
    variant = hgs
    seeds = 1 2 3
    n = 500
    n_init = 100

Unknown sections and keys are errors; every diagnostic names the line it
refers to.
"""
from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import PatternClass
from .explorer import ExperimentConfig

EXPERIMENT_PREFIX = "experiment:"


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class EvaluationConfig:
    bins: int = 5
    bin_counts: tuple[int, ...] = (3, 5, 7)
    vae_epochs: int = 20
    pool_size: int | None = None
    seed: int = 0
    gallery_size: int = 16
    pool_classes: tuple[str, ...] = ("dead", "animal", "non-animal")


@dataclass(frozen=True)
class Experiment:
    name: str
    config: ExperimentConfig
    seeds: tuple[int, ...]


@dataclass
class CampaignConfig:
    output: str = "runs"
    parallel: int = 1
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    experiments: list[Experiment] = field(default_factory=list)

    def jobs(self) -> list[tuple[Experiment, int]]:
        return [(e, s) for e in self.experiments for s in e.seeds]

    def run_dir(self, experiment: Experiment, seed: int, root: str | Path | None = None) -> Path:
        return Path(root or self.output) / experiment.name / f"seed_{seed}"

    def with_seeds(self, seeds: tuple[int, ...]) -> "CampaignConfig":
        exps = [dataclasses.replace(e, seeds=tuple(seeds)) for e in self.experiments]
        return dataclasses.replace(self, experiments=exps)


_EXPERIMENT_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_OPTIONAL_INT = {"r_max"}
_OPTIONAL_STR = {"dataset"}
_FLOAT = {"beta", "goal_range"}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key = value`` per section, and of each section header (key '')."""
    lines: dict[tuple[str, str], int] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            lines[(section, "")] = no
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), no)
    return lines


def _int(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"{what} must be an integer, got {value!r}") from None


def _int_list(value: str, what: str) -> tuple[int, ...]:
    parts = value.replace(",", " ").split()
    if not parts:
        raise ValueError(f"{what} must list at least one integer")
    return tuple(_int(p, what) for p in parts)


def _experiment(name: str, items: dict[str, str], line_of, source: str) -> Experiment:
    kwargs = {}
    seeds = None
    for key, value in items.items():
        line = line_of(key)
        try:
            if key == "seeds":
                seeds = _int_list(value, "seeds")
                continue
            if key not in _EXPERIMENT_FIELDS:
                raise ConfigError(f"unknown key {key!r} in [experiment:{name}]", line, source)
            if key == "variant":
                kwargs[key] = value.strip().lower()
            elif key in _OPTIONAL_STR:
                kwargs[key] = value.strip() or None
            elif key in _OPTIONAL_INT:
                kwargs[key] = _int(value, key) if value.strip() else None
            elif key in _FLOAT:
                kwargs[key] = float(value)
            else:
                kwargs[key] = _int(value, key)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), line, source) from None
    header = line_of("")
    if seeds is None:
        raise ConfigError(f"[experiment:{name}] needs a 'seeds' key", header, source)
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds in [experiment:{name}]: {' '.join(map(str, seeds))}",
                          line_of("seeds"), source)
    try:
        cfg = ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[experiment:{name}] {exc}", header, source) from None
    return Experiment(name, cfg, seeds)


def parse_config(text: str, source: str = "<config>") -> CampaignConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(exc.message if hasattr(exc, "message") else str(exc),
                          getattr(exc, "lineno", None), source) from None
    lines = _key_lines(text)

    def anchored(section):
        return lambda key: lines.get((section, key), lines.get((section, "")))

    def fail(message, line):
        raise ConfigError(message, line, source)

    def parse_int(value, key, line_of, parse=_int):
        try:
            return parse(value, key)
        except ValueError as exc:
            fail(str(exc), line_of(key))

    out = CampaignConfig()
    eval_kwargs = {}
    experiments = []
    for section in parser.sections():
        line_of = anchored(section)
        items = dict(parser.items(section))
        try:
            if section == "campaign":
                for key, value in items.items():
                    if key == "output":
                        out.output = value.strip()
                    elif key == "parallel":
                        out.parallel = parse_int(value, key, line_of)
                        if out.parallel < 1:
                            fail("parallel must be >= 1", line_of(key))
                    else:
                        fail(f"unknown key {key!r} in [campaign]", line_of(key))
            elif section == "evaluation":
                for key, value in items.items():
                    if key in ("bins", "vae_epochs", "seed", "gallery_size"):
                        eval_kwargs[key] = parse_int(value, key, line_of)
                    elif key == "pool_size":
                        eval_kwargs[key] = parse_int(value, key, line_of) if value.strip() else None
                    elif key == "bin_counts":
                        eval_kwargs[key] = parse_int(value, key, line_of, _int_list)
                    elif key == "pool_classes":
                        names = tuple(value.replace(",", " ").split())
                        valid = {c.value for c in PatternClass}
                        if not names or not set(names) <= valid:
                            fail(f"pool_classes must list classes out of {sorted(valid)}", line_of(key))
                        eval_kwargs[key] = names
                    else:
                        fail(f"unknown key {key!r} in [evaluation]", line_of(key))
            elif section.startswith(EXPERIMENT_PREFIX):
                name = section[len(EXPERIMENT_PREFIX):].strip()
                if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
                    fail(f"invalid experiment name {name!r}", line_of(""))
                experiments.append(_experiment(name, items, line_of, source))
            else:
                fail(f"unknown section [{section}]", line_of(""))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), line_of(""), source) from None
    ev = EvaluationConfig(**eval_kwargs)
    if ev.bins < 1 or any(b < 1 for b in ev.bin_counts):
        fail("bin counts must be >= 1", lines.get(("evaluation", "bins")))
    if ev.vae_epochs < 1 or ev.gallery_size < 0 or (ev.pool_size is not None and ev.pool_size < 2):
        fail("invalid evaluation settings", lines.get(("evaluation", "")))
    out.evaluation = ev
    out.experiments = experiments
    return out


def load_config(path) -> CampaignConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def experiment_text(experiment: Experiment, seeds: tuple[int, ...] | None = None) -> str:
    lines = [f"[{EXPERIMENT_PREFIX}{experiment.name}]",
             f"seeds = {_fmt(tuple(seeds if seeds is not None else experiment.seeds))}"]
    for f in dataclasses.fields(ExperimentConfig):
        lines.append(f"{f.name} = {_fmt(getattr(experiment.config, f.name))}")
    return "\n".join(lines) + "\n"


def serialize_config(config: CampaignConfig) -> str:
    parts = ["[campaign]", f"output = {config.output}", f"parallel = {config.parallel}", "", "[evaluation]"]
    for f in dataclasses.fields(EvaluationConfig):
        parts.append(f"{f.name} = {_fmt(getattr(config.evaluation, f.name))}")
    text = "\n".join(parts) + "\n"
    for e in config.experiments:
        text += "\n" + experiment_text(e)
    return text
