"""Compositional pattern producing networks (CPPNs) for Lenia initial states.

A genome has four fixed inputs (bias, x, y, d), one output node (key 0) and
any number of hidden nodes (keys >= 1). Connections may be recurrent,
including self connections. Node keys of the inputs are negative, following
the neat-python convention.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

INPUT_KEYS = (-1, -2, -3, -4)  # bias, x, y, d
OUTPUT_KEY = 0
ACTIVATIONS = ("gauss", "sigm")


def activation_gauss(x):
    return 2.0 * np.exp(-((2.5 * np.asarray(x, dtype=np.float64)) ** 2)) - 1.0


def activation_sigm(x):
    # 2 / (1 + exp(-5x)) - 1 == tanh(2.5 x), without overflow for large |x|
    return np.tanh(2.5 * np.asarray(x, dtype=np.float64))


_ACTIVATION_FUNCS = {"gauss": activation_gauss, "sigm": activation_sigm}


@dataclass(frozen=True)
class MutationConfig:
    initial_hidden: int = 4
    connection_prob: float = 0.6
    weight_init_mean: float = 0.0
    weight_init_std: float = 0.4
    weight_min: float = -3.0
    weight_max: float = 3.0
    node_add_prob: float = 0.02
    node_delete_prob: float = 0.02
    conn_add_prob: float = 0.05
    conn_delete_prob: float = 0.01
    activation_mutate_rate: float = 0.1
    weight_mutate_rate: float = 0.05
    weight_replace_rate: float = 0.06
    weight_mutate_power: float = 1.0
    enabled_mutate_rate: float = 0.02
    passes: int = 2

    def __post_init__(self):
        for name in ("connection_prob", "node_add_prob", "node_delete_prob", "conn_add_prob",
                     "conn_delete_prob", "activation_mutate_rate", "weight_mutate_rate",
                     "weight_replace_rate", "enabled_mutate_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.weight_mutate_rate + self.weight_replace_rate > 1.0:
            raise ValueError("weight mutate and replace rates must sum to at most 1")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")

    @classmethod
    def frozen(cls) -> "MutationConfig":
        """A configuration under which mutation is the identity."""
        return cls(node_add_prob=0.0, node_delete_prob=0.0, conn_add_prob=0.0, conn_delete_prob=0.0,
                   activation_mutate_rate=0.0, weight_mutate_rate=0.0, weight_replace_rate=0.0,
                   enabled_mutate_rate=0.0)


@dataclass
class ConnectionGene:
    src: int
    dst: int
    weight: float
    enabled: bool = True


@dataclass
class CppnGenome:
    nodes: dict[int, str] = field(default_factory=dict)
    connections: dict[tuple[int, int], ConnectionGene] = field(default_factory=dict)

    @property
    def hidden_keys(self) -> list[int]:
        return sorted(k for k in self.nodes if k != OUTPUT_KEY)

    def copy(self) -> "CppnGenome":
        return CppnGenome(dict(self.nodes), {k: replace(c) for k, c in self.connections.items()})

    def validate(self) -> None:
        if OUTPUT_KEY not in self.nodes:
            raise ValueError("genome has no output node")
        for key, act in self.nodes.items():
            if key < 0:
                raise ValueError(f"node key {key} collides with an input key")
            if act not in _ACTIVATION_FUNCS:
                raise ValueError(f"node {key} has unknown activation {act!r}")
        for (src, dst), c in self.connections.items():
            if (c.src, c.dst) != (src, dst):
                raise ValueError(f"connection keyed {(src, dst)} stores {(c.src, c.dst)}")
            if src not in self.nodes and src not in INPUT_KEYS:
                raise ValueError(f"connection {src}->{dst} has dangling source")
            if dst not in self.nodes:
                raise ValueError(f"connection {src}->{dst} has dangling target")

    def to_dict(self) -> dict:
        return {
            "nodes": [[k, self.nodes[k]] for k in sorted(self.nodes)],
            "connections": [[c.src, c.dst, c.weight, c.enabled]
                            for _, c in sorted(self.connections.items())],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CppnGenome":
        g = cls(
            nodes={int(k): str(a) for k, a in data["nodes"]},
            connections={(int(s), int(d)): ConnectionGene(int(s), int(d), float(w), bool(e))
                         for s, d, w, e in data["connections"]},
        )
        g.validate()
        return g

    def to_json(self) -> str:
        # json writes floats with repr(), so weights round-trip exactly
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "CppnGenome":
        return cls.from_dict(json.loads(text))


def _init_weight(cfg: MutationConfig, rng: np.random.Generator) -> float:
    w = rng.normal(cfg.weight_init_mean, cfg.weight_init_std)
    return float(np.clip(w, cfg.weight_min, cfg.weight_max))


def potential_connections(hidden: list[int]) -> list[tuple[int, int]]:
    """Connections considered by the initial partial connectivity."""
    pairs = [(i, h) for i in INPUT_KEYS for h in hidden]
    pairs += [(h, OUTPUT_KEY) for h in hidden]
    pairs += [(i, OUTPUT_KEY) for i in INPUT_KEYS]
    pairs += [(n, n) for n in [*hidden, OUTPUT_KEY]]
    return pairs


def sample_genome(cfg: MutationConfig, rng: np.random.Generator) -> CppnGenome:
    hidden = list(range(1, cfg.initial_hidden + 1))
    nodes = {k: ACTIVATIONS[rng.integers(len(ACTIVATIONS))] for k in [OUTPUT_KEY, *hidden]}
    connections = {}
    for src, dst in potential_connections(hidden):
        if rng.random() < cfg.connection_prob:
            connections[(src, dst)] = ConnectionGene(src, dst, _init_weight(cfg, rng))
    return CppnGenome(nodes, connections)


def _sorted_connection_keys(g: CppnGenome) -> list[tuple[int, int]]:
    return sorted(g.connections)


def mutate_genome(g: CppnGenome, cfg: MutationConfig, rng: np.random.Generator) -> CppnGenome:
    """Return a mutated copy of ``g``; the input genome is left untouched.

    Structural mutations run first (add node, delete node, add connection,
    delete connection), then per-connection weight and enable mutations, then
    per-node activation mutations.
    """
    g = g.copy()

    if rng.random() < cfg.node_add_prob and g.connections:
        keys = _sorted_connection_keys(g)
        old = g.connections[keys[rng.integers(len(keys))]]
        old.enabled = False
        new_key = max(g.nodes) + 1
        g.nodes[new_key] = ACTIVATIONS[rng.integers(len(ACTIVATIONS))]
        g.connections[(old.src, new_key)] = ConnectionGene(old.src, new_key, 1.0)
        g.connections[(new_key, old.dst)] = ConnectionGene(new_key, old.dst, old.weight)

    if rng.random() < cfg.node_delete_prob:
        hidden = g.hidden_keys
        if hidden:
            victim = hidden[rng.integers(len(hidden))]
            del g.nodes[victim]
            g.connections = {k: c for k, c in g.connections.items() if victim not in k}

    if rng.random() < cfg.conn_add_prob:
        targets = sorted(g.nodes)
        sources = [*INPUT_KEYS, *targets]
        dst = targets[rng.integers(len(targets))]
        src = sources[rng.integers(len(sources))]
        if (src, dst) not in g.connections:
            g.connections[(src, dst)] = ConnectionGene(src, dst, _init_weight(cfg, rng))

    if rng.random() < cfg.conn_delete_prob and g.connections:
        keys = _sorted_connection_keys(g)
        del g.connections[keys[rng.integers(len(keys))]]

    for key in _sorted_connection_keys(g):
        c = g.connections[key]
        r = rng.random()
        if r < cfg.weight_mutate_rate:
            c.weight = float(np.clip(c.weight + rng.normal(0.0, cfg.weight_mutate_power),
                                     cfg.weight_min, cfg.weight_max))
        elif r < cfg.weight_mutate_rate + cfg.weight_replace_rate:
            c.weight = _init_weight(cfg, rng)
        if rng.random() < cfg.enabled_mutate_rate:
            c.enabled = not c.enabled

    for key in sorted(g.nodes):
        if rng.random() < cfg.activation_mutate_rate:
            g.nodes[key] = ACTIVATIONS[rng.integers(len(ACTIVATIONS))]

    return g


def grid_inputs(L: int) -> dict[int, np.ndarray]:
    """Per-cell network inputs: bias 1, x and y in [-2, 2], distance to center."""
    # integer arithmetic keeps the coordinates exactly antisymmetric about the center
    c = (2.0 * np.arange(L) - (L - 1)) * (2.0 / (L - 1)) if L > 1 else np.zeros(1)
    y, x = np.meshgrid(c, c, indexing="ij")
    return {-1: np.ones_like(x), -2: x, -3: y, -4: np.sqrt(x * x + y * y)}


def activate(g: CppnGenome, inputs: dict[int, np.ndarray], passes: int = 2) -> np.ndarray:
    """Synchronous recurrent evaluation; node states start at 0."""
    shape = inputs[-1].shape
    incoming: dict[int, list[ConnectionGene]] = {k: [] for k in g.nodes}
    for key in _sorted_connection_keys(g):
        c = g.connections[key]
        if c.enabled:
            incoming[c.dst].append(c)
    values = {k: np.zeros(shape) for k in g.nodes}
    values.update(inputs)
    for _ in range(passes):
        new = {}
        for k in sorted(g.nodes):
            s = np.zeros(shape)
            for c in incoming[k]:
                s += c.weight * values[c.src]
            new[k] = _ACTIVATION_FUNCS[g.nodes[k]](s)
        values.update(new)
    return values[OUTPUT_KEY]


def render_pattern(g: CppnGenome, L: int, passes: int = 2) -> np.ndarray:
    p = np.clip(activate(g, grid_inputs(L), passes), -1.0, 1.0)
    return (1.0 - np.abs(p)).astype(np.float32)
