"""Command line entry point: run, evaluate, gallery and inspect."""
from __future__ import annotations

import argparse
import csv
import html
import io
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import rng as rngs
from .analysis import FEATURE_NAMES, PatternClass
from .config import CampaignConfig, ConfigError, Experiment, experiment_text, load_config, serialize_config
from .explorer import explore
from .patterns_io import save_png16
from .store import RunWriter, StoredRun, atomic_write_text, is_complete
from .vae import load_checkpoint, save_checkpoint

log = logging.getLogger("lenia_imgep")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
CAMPAIGN_FILE = "campaign.ini"


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def run_job(experiment: Experiment, seed: int, run_dir: str, quiet: bool = False) -> str:
    """Run one repetition into ``run_dir``; returns a status word."""
    run_dir = Path(run_dir)
    if is_complete(run_dir):
        return "skipped"
    cfg = experiment.config
    writer = RunWriter(run_dir, experiment_text(experiment, (seed,)))
    step = max(1, cfg.n // 10)
    started = time.monotonic()

    def on_record(record):
        writer.record(record)
        if not quiet and (record.index % step == 0 or record.index == cfg.n):
            _progress(f"[{experiment.name} seed={seed}] {record.index}/{cfg.n} "
                      f"({time.monotonic() - started:.0f}s)")

    try:
        result = explore(cfg, seed, on_record=on_record, on_training=writer.training)
        writer.finish(result)
    finally:
        writer.close()
    return "done"


def cmd_run(config: CampaignConfig, root: Path, parallel: int, quiet: bool = False) -> int:
    root.mkdir(parents=True, exist_ok=True)
    atomic_write_text(root / CAMPAIGN_FILE, serialize_config(config))
    jobs = [(e, s, str(config.run_dir(e, s, root))) for e, s in config.jobs()]
    failures = []
    if parallel <= 1 or len(jobs) <= 1:
        for e, s, d in jobs:
            try:
                status = run_job(e, s, d, quiet)
                _progress(f"[{e.name} seed={s}] {status}")
            except Exception as exc:  # keep going with the other repetitions
                log.exception("run %s seed %s failed", e.name, s)
                failures.append((e.name, s, exc))
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = {pool.submit(run_job, e, s, d, quiet): (e.name, s) for e, s, d in jobs}
            for fut in as_completed(futures):
                name, s = futures[fut]
                try:
                    _progress(f"[{name} seed={s}] {fut.result()}")
                except Exception as exc:
                    _progress(f"[{name} seed={s}] failed: {exc}")
                    failures.append((name, s, exc))
    if failures:
        _progress(f"{len(failures)} of {len(jobs)} runs failed")
        return EXIT_PARTIAL
    return EXIT_OK


def completed_runs(config: CampaignConfig, root: Path) -> tuple[list[tuple[Experiment, int, StoredRun]], list[str]]:
    found, missing = [], []
    for e, s in config.jobs():
        d = config.run_dir(e, s, root)
        if is_complete(d):
            found.append((e, s, StoredRun(d)))
        else:
            missing.append(str(d))
    return found, missing


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def _fmt(x) -> str:
    return repr(float(x))


def cmd_evaluate(config: CampaignConfig, root: Path) -> int:
    runs, missing = completed_runs(config, root)
    for d in missing:
        log.warning("skipping incomplete run %s", d)
    if not runs:
        _progress("no completed runs to evaluate")
        return EXIT_PARTIAL
    grids = {e.config.grid for e, _, _ in runs}
    if len(grids) != 1:
        _progress(f"runs use different grid sizes {sorted(grids)}; one analytic VAE cannot score them all")
        return EXIT_CONFIG
    latent = {e.config.latent_dim for e, _, _ in runs}.pop()
    grid = grids.pop()
    econf = config.evaluation
    arrays = [ev.RunArrays.from_stored(e.name, run, grid) for e, _, run in runs]

    out = root / "evaluation"
    out.mkdir(exist_ok=True)
    bpath, ppath = out / "behavior.lvae", out / "parameter.lvae"
    if bpath.is_file() and ppath.is_file():
        behavior, parameter = load_checkpoint(bpath), load_checkpoint(ppath)
        _progress("using frozen evaluation VAEs")
    else:
        _progress(f"training evaluation VAEs on {sum(len(a.finals) for a in arrays)} patterns")
        behavior, parameter = ev.train_analytic_vaes(arrays, econf.vae_epochs,
                                                     rngs.stream(econf.seed, rngs.EVALUATION),
                                                     econf.pool_size, latent, econf.pool_classes)
        save_checkpoint(bpath, behavior)
        save_checkpoint(ppath, parameter)
    bspace = ev.AnalyticSpace.behavior(behavior.config.latent_dim)
    pspace = ev.AnalyticSpace.parameter(parameter.config.latent_dim)
    scored = [ev.score_run(a, behavior, parameter) for a in arrays]

    curve_rows, prop_rows, summary_rows, latent_rows = [], [], [], []
    final_b: dict[str, list[float]] = {}
    final_p: dict[str, list[float]] = {}
    points_b: dict[str, list[np.ndarray]] = {}
    for s in scored:
        r = s.run
        for space_name, space, pts in (("behavior", bspace, s.behavior), ("parameter", pspace, s.parameter)):
            filters = [None, PatternClass.ANIMAL, PatternClass.NON_ANIMAL] if space_name == "behavior" else [None]
            for cf in filters:
                curve = ev.diversity_curve(pts, r.classes, space, econf.bins, cf)
                label = "all" if cf is None else cf.value
                curve_rows += [[r.label, r.seed, space_name, label, i + 1, int(v)] for i, v in enumerate(curve)]
        props = ev.class_proportions(r.classes)
        prop_rows.append([r.label, r.seed, *(_fmt(props[c]) for c in PatternClass)])
        db, dp = ev.diversity(s.behavior, bspace, econf.bins), ev.diversity(s.parameter, pspace, econf.bins)
        summary_rows.append([r.label, r.seed, db, dp])
        final_b.setdefault(r.label, []).append(db)
        final_p.setdefault(r.label, []).append(dp)
        points_b.setdefault(r.label, []).append(s.behavior)
        zb, zp = s.behavior[:, len(FEATURE_NAMES):], s.parameter[:, len(ev.PARAMETER_RANGES):]
        for i, c in enumerate(r.classes):
            latent_rows.append([r.label, r.seed, i + 1, c.value, *map(_fmt, zb[i]), *map(_fmt, zp[i])])

    d = behavior.config.latent_dim
    _write_csv(out / "diversity_curves.csv", ["experiment", "seed", "space", "class", "iteration", "diversity"],
               curve_rows)
    _write_csv(out / "proportions.csv", ["experiment", "seed", *(c.value for c in PatternClass)], prop_rows)
    _write_csv(out / "diversity.csv", ["experiment", "seed", "behavior", "parameter"], summary_rows)
    sig = [["behavior", a, b, _fmt(t), _fmt(p)] for a, b, t, p in ev.significance_matrix(final_b)]
    sig += [["parameter", a, b, _fmt(t), _fmt(p)] for a, b, t, p in ev.significance_matrix(final_p)]
    _write_csv(out / "significance.csv", ["space", "a", "b", "t", "p"], sig)
    _write_csv(out / "latents.csv", ["experiment", "seed", "index", "class",
                                      *(f"behavior_z{i + 1}" for i in range(d)),
                                      *(f"parameter_z{i + 1}" for i in range(parameter.config.latent_dim))],
               latent_rows)
    table = ev.bin_sensitivity(points_b, bspace, econf.bin_counts)
    _write_csv(out / "bin_sensitivity.csv", ["bins", "experiment", "mean_behavior_diversity", "rank"],
               [[b, label, _fmt(v), ev.ranking(row).index(label) + 1]
                for b, row in table.items() for label, v in sorted(row.items())])
    for label in sorted(final_b):
        _progress(f"{label}: behavior diversity {np.mean(final_b[label]):.1f}, "
                  f"parameter diversity {np.mean(final_p[label]):.1f}")
    return EXIT_PARTIAL if missing else EXIT_OK


def cmd_gallery(config: CampaignConfig, root: Path, class_filter: str | None) -> int:
    runs, missing = completed_runs(config, root)
    for d in missing:
        log.warning("skipping incomplete run %s", d)
    classes = [PatternClass(class_filter)] if class_filter else list(PatternClass)
    size = config.evaluation.gallery_size
    out = root / "gallery"
    out.mkdir(parents=True, exist_ok=True)
    doc = ["<!doctype html>", "<html><head><meta charset='utf-8'><title>Pattern gallery</title></head><body>",
           "<h1>Pattern gallery</h1>"]
    rng = rngs.stream(config.evaluation.seed, rngs.GALLERY)
    for exp in config.experiments:
        exp_runs = [(s, run) for e, s, run in runs if e.name == exp.name]
        doc.append(f"<h2>{html.escape(exp.name)}</h2>")
        for cls in classes:
            pool = [(s, r.index, run) for s, run in exp_runs for r in run.records if r.cls == cls]
            doc.append(f"<h3>{cls.value}</h3>")
            if not pool:
                doc.append(f"<p>No {cls.value} patterns in this experiment.</p>")
                continue
            pick = np.sort(rng.choice(len(pool), size=min(size, len(pool)), replace=False))
            section = out / exp.name / cls.value
            section.mkdir(parents=True, exist_ok=True)
            for k in pick:
                s, index, run = pool[k]
                name = f"seed{s}_{index:06d}.png"
                save_png16(section / name, run.final(index))
                doc.append(f"<img src='{exp.name}/{cls.value}/{name}' title='seed {s} record {index}' "
                           f"width='128' height='128'>")
    doc.append("</body></html>")
    atomic_write_text(out / "index.html", "\n".join(doc) + "\n")
    _progress(f"gallery written to {out / 'index.html'}")
    return EXIT_PARTIAL if missing else EXIT_OK


def cmd_inspect(run_dir: Path, index: int) -> int:
    run = StoredRun(run_dir)
    if not 1 <= index <= len(run):
        _progress(f"record {index} out of range 1..{len(run)}")
        return EXIT_CONFIG
    r = run.records[index - 1]
    d = r.dynamics
    g = run.genomes()[index]
    lines = [f"index: {r.index}", f"parent: {r.parent if r.parent is not None else '-'}", f"class: {r.cls.value}",
             *(f"{n}: {v!r}" for n, v in zip(FEATURE_NAMES, r.features.as_vector().tolist())),
             f"movement: {r.movement[0]!r} {r.movement[1]!r}",
             f"R: {d.R}", f"T: {d.T}", f"mu: {d.mu!r}", f"sigma: {d.sigma!r}",
             f"beta: {' '.join(repr(b) for b in d.beta)}",
             f"goal: {' '.join(repr(x) for x in r.goal.tolist()) if r.goal is not None else '-'}",
             f"reached: {' '.join(repr(x) for x in r.reached.tolist()) if r.reached is not None else '-'}",
             f"cppn: {len(g.hidden_keys)} hidden nodes, "
             f"{sum(c.enabled for c in g.connections.values())} enabled connections",
             f"pattern: {run.dir / r.pattern}", f"seed: {r.seed}"]
    print("\n".join(lines))
    return EXIT_OK


def _campaign(args) -> tuple[CampaignConfig, Path]:
    if args.config:
        config = load_config(args.config)
    elif args.out and (Path(args.out) / CAMPAIGN_FILE).is_file():
        config = load_config(Path(args.out) / CAMPAIGN_FILE)
    else:
        raise ConfigError("either --config or an --out directory holding a previous run is required")
    if args.seed_override:
        if len(set(args.seed_override)) != len(args.seed_override):
            raise ConfigError("--seed-override lists duplicate seeds")
        config = config.with_seeds(tuple(args.seed_override))
    root = Path(args.out) if args.out else Path(config.output)
    return config, root


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lenia-imgep", description="Automated discovery of Lenia patterns.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def campaign_args(sp):
        sp.add_argument("--config", help="campaign file")
        sp.add_argument("--out", help="output root (overrides the config's output)")
        sp.add_argument("--seed-override", type=int, nargs="+", metavar="SEED",
                        help="replace every experiment's seeds")

    sp = sub.add_parser("run", help="run every experiment repetition")
    campaign_args(sp)
    sp.add_argument("--parallel", type=int, help="worker processes (overrides the config)")
    sp.add_argument("--quiet", action="store_true", help="no per-iteration progress")
    sp = sub.add_parser("evaluate", help="score completed runs")
    campaign_args(sp)
    sp = sub.add_parser("gallery", help="export final patterns as images")
    campaign_args(sp)
    sp.add_argument("--filter", choices=[c.value for c in PatternClass], help="only one pattern class")
    sp = sub.add_parser("inspect", help="print one record of a run")
    sp.add_argument("run_dir")
    sp.add_argument("index", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "inspect":
            return cmd_inspect(Path(args.run_dir), args.index)
        config, root = _campaign(args)
        if args.command == "run":
            parallel = args.parallel if args.parallel is not None else config.parallel
            if parallel < 1:
                raise ConfigError("--parallel must be >= 1")
            return cmd_run(config, root, parallel, args.quiet)
        if args.command == "evaluate":
            return cmd_evaluate(config, root)
        return cmd_gallery(config, root, args.filter)
    except ConfigError as exc:
        _progress(f"config error: {exc}")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        _progress(str(exc))
        return EXIT_PARTIAL
    except OSError as exc:
        _progress(f"I/O error: {exc}")
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
