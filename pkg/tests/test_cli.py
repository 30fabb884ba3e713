import csv
import subprocess
import sys

import pytest

from lenia_imgep.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main

CAMPAIGN = """\
[campaign]
output = unused
parallel = 1

[evaluation]
vae_epochs = 1
bin_counts = 3 5
gallery_size = 2

[experiment:rand]
variant = random
seeds = 1 2
n = 6
n_init = 0
grid = 32
steps = 8

[experiment:ogl]
variant = ogl
seeds = 1
n = 10
n_init = 4
grid = 32
steps = 8
train_every = 5
train_epochs = 1
min_train = 2
"""


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    root = tmp_path_factory.mktemp("camp")
    cfg = root / "c.ini"
    cfg.write_text(CAMPAIGN)
    out = root / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    return cfg, out


def _read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_run_layout(campaign):
    _, out = campaign
    assert (out / "campaign.ini").is_file()
    for d in ("rand/seed_1", "rand/seed_2", "ogl/seed_1"):
        assert (out / d / "manifest.csv").is_file()
    assert len(_read(out / "ogl/seed_1/manifest.csv")) == 10
    assert (out / "ogl/seed_1/ogl_training.csv").is_file()


def test_rerun_skips_and_keeps_bytes(campaign, capsys):
    cfg, out = campaign
    before = (out / "ogl/seed_1/manifest.csv").read_bytes()
    assert main(["run", "--out", str(out), "--quiet"]) == EXIT_OK
    assert "skipped" in capsys.readouterr().err
    assert (out / "ogl/seed_1/manifest.csv").read_bytes() == before


def test_evaluate_and_frozen_models(campaign):
    _, out = campaign
    assert main(["evaluate", "--out", str(out)]) == EXIT_OK
    ev = out / "evaluation"
    for name in ("diversity_curves.csv", "proportions.csv", "diversity.csv", "significance.csv",
                 "latents.csv", "bin_sensitivity.csv", "behavior.lvae", "parameter.lvae"):
        assert (ev / name).is_file(), name
    div = _read(ev / "diversity.csv")
    assert {(r["experiment"], r["seed"]) for r in div} == {("rand", "1"), ("rand", "2"), ("ogl", "1")}
    first = (ev / "diversity.csv").read_bytes()
    assert main(["evaluate", "--out", str(out)]) == EXIT_OK
    assert (ev / "diversity.csv").read_bytes() == first
    for row in _read(ev / "proportions.csv"):
        assert abs(sum(float(row[k]) for k in ("dead", "animal", "non-animal")) - 1) < 1e-9
    sens = _read(ev / "bin_sensitivity.csv")
    assert {r["bins"] for r in sens} == {"3", "5"}


def test_gallery(campaign):
    _, out = campaign
    assert main(["gallery", "--out", str(out), "--filter", "dead"]) == EXIT_OK
    page = (out / "gallery" / "index.html").read_text()
    assert "<h2>rand</h2>" in page and "<h3>animal</h3>" not in page
    pngs = list((out / "gallery").rglob("*.png"))
    assert all(p.parent.name == "dead" for p in pngs)


def test_inspect(campaign, capsys):
    _, out = campaign
    assert main(["inspect", str(out / "ogl/seed_1"), "7"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "index: 7" in text and "goal: " in text and "seed: 1" in text
    assert main(["inspect", str(out / "ogl/seed_1"), "11"]) == EXIT_CONFIG


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment:a]\nseeds = 1 1\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["run", "--out", str(tmp_path / "nothing")]) == EXIT_CONFIG
    good = tmp_path / "good.ini"
    good.write_text(CAMPAIGN)
    assert main(["run", "--config", str(good), "--out", str(tmp_path / "o"),
                 "--seed-override", "3", "3"]) == EXIT_CONFIG
    assert main(["inspect", str(tmp_path / "missing"), "1"]) == EXIT_PARTIAL


def test_partial_failure(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(CAMPAIGN.replace("seeds = 1 2", "seeds = 1"))
    out = tmp_path / "out"
    (out / "ogl").mkdir(parents=True)
    (out / "ogl" / "seed_1").write_text("in the way")
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_PARTIAL
    assert (out / "rand/seed_1/manifest.csv").is_file()
    assert main(["evaluate", "--config", str(cfg), "--out", str(out)]) == EXIT_PARTIAL


def test_parallel_matches_sequential(tmp_path, campaign):
    cfg, out = campaign
    par = tmp_path / "par"
    assert main(["run", "--config", str(cfg), "--out", str(par), "--parallel", "2", "--quiet"]) == EXIT_OK
    for d in ("rand/seed_1", "rand/seed_2", "ogl/seed_1"):
        assert (par / d / "manifest.csv").read_bytes() == (out / d / "manifest.csv").read_bytes()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "lenia_imgep.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "evaluate" in r.stdout
