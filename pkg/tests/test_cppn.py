import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lenia_imgep.cppn import (
    INPUT_KEYS,
    OUTPUT_KEY,
    ConnectionGene,
    CppnGenome,
    MutationConfig,
    activation_gauss,
    activation_sigm,
    activate,
    grid_inputs,
    mutate_genome,
    potential_connections,
    render_pattern,
    sample_genome,
)

CFG = MutationConfig()


def test_activations_closed_form():
    assert activation_gauss(0.0) == 1.0
    assert activation_sigm(0.0) == 0.0
    assert activation_gauss(50.0) == pytest.approx(-1.0)
    assert activation_gauss(-50.0) == pytest.approx(-1.0)
    assert activation_sigm(50.0) == pytest.approx(1.0)
    x = np.linspace(-3, 3, 61)
    np.testing.assert_allclose(activation_sigm(x), 2 / (1 + np.exp(-5 * x)) - 1, atol=1e-14)
    np.testing.assert_allclose(activation_gauss(x), 2 * np.exp(-(2.5 * x) ** 2) - 1, atol=1e-15)


@given(st.floats(-1e6, 1e6))
def test_activations_bounded(x):
    assert -1 <= activation_gauss(x) <= 1
    assert -1 <= activation_sigm(x) <= 1


def test_config_validation():
    with pytest.raises(ValueError):
        MutationConfig(node_add_prob=1.5)
    with pytest.raises(ValueError):
        MutationConfig(weight_mutate_rate=0.6, weight_replace_rate=0.6)
    with pytest.raises(ValueError):
        MutationConfig(passes=0)


def test_sample_genome_structure_and_determinism():
    g1 = sample_genome(CFG, np.random.default_rng(3))
    g2 = sample_genome(CFG, np.random.default_rng(3))
    assert g1 == g2
    assert sorted(g1.nodes) == [0, 1, 2, 3, 4]
    assert set(g1.nodes.values()) <= {"gauss", "sigm"}
    g1.validate()


def test_sample_genome_connection_density_and_weights():
    rng = np.random.default_rng(0)
    n_possible = len(potential_connections([1, 2, 3, 4]))
    present, weights = 0, []
    for _ in range(1000):
        g = sample_genome(CFG, rng)
        present += len(g.connections)
        weights += [c.weight for c in g.connections.values()]
    assert abs(present / (1000 * n_possible) - 0.6) < 0.05
    weights = np.array(weights)
    assert weights.min() >= -3 and weights.max() <= 3
    assert abs(weights.std() - 0.4) < 0.02


def test_frozen_mutation_is_identity():
    rng = np.random.default_rng(1)
    g = sample_genome(CFG, rng)
    m = mutate_genome(g, MutationConfig.frozen(), rng)
    assert m == g
    assert m is not g


def test_mutation_leaves_input_untouched_and_stays_valid():
    rng = np.random.default_rng(2)
    g = sample_genome(CFG, rng)
    snapshot = g.to_json()
    for _ in range(300):
        g2 = mutate_genome(g, CFG, rng)
        g2.validate()
        assert all(-3 <= c.weight <= 3 for c in g2.connections.values())
        assert OUTPUT_KEY in g2.nodes
        g = g2 if rng.random() < 0.5 else g
    assert sample_genome(CFG, np.random.default_rng(2)).to_json() == snapshot


def test_node_add_rate():
    rng = np.random.default_rng(4)
    g = sample_genome(CFG, rng)
    while not g.connections:
        g = sample_genome(CFG, rng)
    cfg = MutationConfig(node_delete_prob=0.0)
    added = sum(len(mutate_genome(g, cfg, rng).nodes) > len(g.nodes) for _ in range(1000))
    assert abs(added / 1000 - 0.02) <= 0.01


def test_heavy_weight_mutation_clips():
    cfg = MutationConfig(weight_mutate_rate=1.0, weight_replace_rate=0.0, weight_mutate_power=100.0)
    g = CppnGenome({0: "gauss"}, {(-1, 0): ConnectionGene(-1, 0, 2.9)})
    ws = [mutate_genome(g, cfg, np.random.default_rng(seed)).connections[(-1, 0)].weight for seed in range(20)]
    assert all(-3 <= w <= 3 for w in ws)
    assert {-3.0, 3.0} <= set(ws)


def test_serialization_round_trip_is_lossless():
    rng = np.random.default_rng(5)
    for _ in range(20):
        g = sample_genome(CFG, rng)
        for _ in range(10):
            g = mutate_genome(g, CFG, rng)
        assert CppnGenome.from_json(g.to_json()) == g
        assert CppnGenome.from_dict(g.to_dict()).to_json() == g.to_json()


def test_invalid_genomes_rejected():
    with pytest.raises(ValueError):
        CppnGenome({1: "gauss"}, {}).validate()
    with pytest.raises(ValueError):
        CppnGenome({0: "relu"}, {}).validate()
    with pytest.raises(ValueError):
        CppnGenome({0: "gauss"}, {(7, 0): ConnectionGene(7, 0, 1.0)}).validate()


def test_grid_inputs_ranges():
    inp = grid_inputs(32)
    assert inp[-2].min() == -2 and inp[-2].max() == 2
    assert inp[-3].min() == -2 and inp[-3].max() == 2
    np.testing.assert_array_equal(inp[-2], -inp[-2][:, ::-1])
    np.testing.assert_allclose(inp[-4], np.hypot(inp[-2], inp[-3]))
    assert set(inp) == set(INPUT_KEYS)


def test_render_extremes():
    silent = CppnGenome({0: "sigm"}, {})
    np.testing.assert_array_equal(render_pattern(silent, 16), 1.0)
    saturated = CppnGenome({0: "sigm"}, {(-1, 0): ConnectionGene(-1, 0, 3.0)})
    # sigm(3) = tanh(7.5) is 1 to within 1e-6
    assert render_pattern(saturated, 16).max() < 1e-6
    empty_gauss = CppnGenome({0: "gauss"}, {})
    # gauss(0) = 1, so the output saturates and activity is 0
    np.testing.assert_array_equal(render_pattern(empty_gauss, 16), 0.0)


def test_radial_genome_is_symmetric():
    g = CppnGenome({0: "gauss"}, {(-4, 0): ConnectionGene(-4, 0, 1.3)})
    p = render_pattern(g, 33)
    np.testing.assert_allclose(p, np.rot90(p), atol=1e-6)
    np.testing.assert_allclose(p, p.T, atol=1e-6)


def test_recurrent_two_pass_semantics():
    # self loop on the output: pass 1 sees state 0, pass 2 sees the pass-1 value
    g = CppnGenome({0: "sigm"}, {(-1, 0): ConnectionGene(-1, 0, 0.2), (0, 0): ConnectionGene(0, 0, 0.5)})
    inp = grid_inputs(4)
    first = activation_sigm(0.2)
    second = activation_sigm(0.2 + 0.5 * first)
    np.testing.assert_allclose(activate(g, inp, passes=1), first)
    np.testing.assert_allclose(activate(g, inp, passes=2), second)


@given(st.integers(0, 2**32 - 1), st.sampled_from([8, 17, 32]))
def test_render_is_valid_pattern(seed, L):
    rng = np.random.default_rng(seed)
    g = sample_genome(CFG, rng)
    for _ in range(int(rng.integers(0, 5))):
        g = mutate_genome(g, CFG, rng)
    p = render_pattern(g, L)
    assert p.shape == (L, L) and p.dtype == np.float32
    assert p.min() >= 0 and p.max() <= 1
    np.testing.assert_array_equal(p, render_pattern(g, L))


@given(st.integers(0, 2**32 - 1))
def test_xy_free_genomes_are_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    g = sample_genome(CFG, rng)
    g.connections = {k: c for k, c in g.connections.items() if c.src not in (-2, -3)}
    p = render_pattern(g, 24)
    np.testing.assert_allclose(p, np.rot90(p), atol=1e-6)
