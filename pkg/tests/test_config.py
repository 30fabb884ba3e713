import pytest

from lenia_imgep.config import (
    CampaignConfig,
    ConfigError,
    EvaluationConfig,
    load_config,
    parse_config,
    serialize_config,
)
from lenia_imgep.explorer import ExperimentConfig

GOOD = """\
[campaign]
output = out
parallel = 2

[evaluation]
bins = 7
bin_counts = 3 5 7
vae_epochs = 3

[experiment:hgs]
variant = hgs
seeds = 1 2 3
n = 50
n_init = 10
grid = 32

[experiment:base]
variant = random
seeds = 4
n = 20
n_init = 0
"""


def test_parse_good():
    c = parse_config(GOOD)
    assert c.output == "out" and c.parallel == 2
    assert c.evaluation == EvaluationConfig(bins=7, bin_counts=(3, 5, 7), vae_epochs=3)
    hgs, base = c.experiments
    assert hgs.name == "hgs" and hgs.seeds == (1, 2, 3)
    assert hgs.config == ExperimentConfig(variant="hgs", n=50, n_init=10, grid=32)
    assert base.config.variant == "random" and base.seeds == (4,)
    assert [(e.name, s) for e, s in c.jobs()] == [("hgs", 1), ("hgs", 2), ("hgs", 3), ("base", 4)]
    assert str(c.run_dir(hgs, 2, "root")) == "root/hgs/seed_2"


def test_roundtrip():
    c = parse_config(GOOD)
    again = parse_config(serialize_config(c))
    assert again == c
    assert serialize_config(again) == serialize_config(c)


def test_with_seeds():
    c = parse_config(GOOD).with_seeds((9,))
    assert all(e.seeds == (9,) for e in c.experiments)


@pytest.mark.parametrize("text, line, fragment", [
    ("[experiment:a]\nseeds = 1 1\n", 2, "duplicate seeds"),
    ("[experiment:a]\nseeds = 1\nbogus = 3\n", 3, "unknown key"),
    ("[campaign]\n\nspeed = 3\n", 3, "unknown key"),
    ("[evaluation]\nbins = x\n", 2, "integer"),
    ("[nonsense]\n", 1, "unknown section"),
    ("\n[experiment:a]\nn = 3\n", 2, "seeds"),
    ("[experiment:a]\nseeds = 1\nvariant = hgs\nn_init = 0\n", 1, "n_init"),
    ("[experiment:a b]\nseeds = 1\n", 1, "invalid experiment name"),
    ("[campaign]\nparallel = 0\n", 2, "parallel"),
])
def test_errors_carry_lines(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "c.ini")
    assert info.value.line == line
    assert fragment in str(info.value)
    assert str(info.value).startswith(f"c.ini:{line}:")


def test_syntax_error_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("[campaign]\noutput = a\noutput = b\n")
    with pytest.raises(ConfigError):
        parse_config("no section\n")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.ini")
    p = tmp_path / "c.ini"
    p.write_text(GOOD)
    assert load_config(p) == parse_config(GOOD, str(p))


def test_defaults():
    c = parse_config("")
    assert c == CampaignConfig()


def test_pool_classes():
    c = parse_config("[evaluation]\npool_classes = animal, non-animal\n")
    assert c.evaluation.pool_classes == ("animal", "non-animal")
    assert parse_config(serialize_config(c)) == c
    with pytest.raises(ConfigError) as info:
        parse_config("[evaluation]\n\npool_classes = alive\n")
    assert info.value.line == 3


def test_inline_comments():
    c = parse_config("[evaluation]\nbins = 3   # inside bins\n[experiment:a]\nseeds = 1 2 ; two\n")
    assert c.evaluation.bins == 3 and c.experiments[0].seeds == (1, 2)
