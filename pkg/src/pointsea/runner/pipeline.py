"""Search, retrain and ablation runs that write their artifacts to a directory."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from pointsea import pcdata
from pointsea.eassoc import ALL_KINDS, EAKind
from pointsea.searchopt import MetricLog, SearchState, evaluate_genotype, run_search

from . import genotype_file
from .config import ABLATION_ROWS, GREEDY_ROWS, RunConfig

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_splits(cfg: RunConfig, dataset_path=None) -> dict:
    """Splits of the dataset file (read only) or of a freshly generated one."""
    ds = pcdata.load(dataset_path) if dataset_path else pcdata.generate(cfg.dataset)
    cfg.dataset.validate(k=max(cfg.net.k, cfg.eval.k))
    return pcdata.split(ds, cfg.dataset)


def write_manifest(out: Path, cfg: RunConfig, command: list[str]) -> dict:
    artifacts = {p.name: sha256_file(p) for p in sorted(out.iterdir())
                 if p.is_file() and p.name != MANIFEST}
    manifest = {"command": command, "seed": cfg.seed, "config_hash": cfg.config_hash(),
                "config": cfg.canonical(), "artifacts": artifacts}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def search(cfg: RunConfig, out, data: dict, checkpoint_every_epoch: bool = True,
           state: SearchState | None = None) -> genotype_file.GenotypeFile:
    """Run (or resume from ``state``) a search; writes config, checkpoint, metrics and genotype."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.canonical())
    if state is not None and (state.config != cfg.search or state.net_config != cfg.net):
        raise ValueError("checkpoint was written by a different search configuration")
    res = run_search(cfg.search, cfg.net, data, state=state,
                     checkpoint_dir=out if checkpoint_every_epoch else None)
    res.state.save(out / "search.psck")
    res.log.write(out / "metrics.csv")
    gf = genotype_file.GenotypeFile(res.genotype, cfg.seed, cfg.config_hash(), cfg.search.epochs)
    genotype_file.save(gf, out / "genotype.txt")
    return gf


def evaluate(cfg: RunConfig, gf: genotype_file.GenotypeFile, out, data: dict) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.canonical())
    res = evaluate_genotype(gf.genotype, data, cfg.eval, cfg.net)
    res.save(out / "model.psck")
    res.log.write(out / "metrics.csv")
    result = {"test_acc": res.test_acc, "test_loss": res.test_loss, "genotype_hash": gf.config_hash,
              "epochs": cfg.eval.epochs, "cells": cfg.eval.cells, "k": cfg.eval.k}
    (out / "result.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return result


# ablation ---------------------------------------------------------------

ABLATION_COLUMNS = ("model", "e1", "e2", "e3", "e4", "e5", "epsilon_greedy", "subset_size",
                    "seeds", "acc_mean", "acc_std", "acc_per_seed")


def row_config(cfg: RunConfig, row: str, seed: int) -> RunConfig:
    subset = tuple(EAKind.parse(k) for k in ABLATION_ROWS[row])
    greedy = row in GREEDY_ROWS
    net = cfg.net.replace(conv=cfg.net.conv.replace(ea_subset=subset))
    search_cfg = dataclasses.replace(cfg.search, relaxed=not greedy)
    return dataclasses.replace(cfg, seed=seed, net=net, search=search_cfg).resolved()


def _ablation_job(args) -> tuple[str, int, float]:
    cfg, row, seed, out, dataset_path = args
    rc = row_config(cfg, row, seed)
    data = load_splits(rc, dataset_path)
    d = Path(out) / f"{row}-seed{seed}"
    gf = search(rc, d / "search", data, checkpoint_every_epoch=False)
    res = evaluate(rc, gf, d / "eval", data)
    log.info("ablation row %s seed %d: test acc %.4f", row, seed, res["test_acc"])
    return row, seed, res["test_acc"]


def sweep_config(cfg: RunConfig, epsilon: float, seed: int) -> RunConfig:
    rc = row_config(cfg, "G", seed)
    return dataclasses.replace(rc, search=dataclasses.replace(rc.search, epsilon=epsilon))


def _sweep_job(args) -> tuple[float, int, float, float]:
    cfg, epsilon, seed, out, dataset_path = args
    rc = sweep_config(cfg, epsilon, seed)
    data = load_splits(rc, dataset_path)
    d = Path(out) / f"eps{epsilon!r}-seed{seed}"
    gf = search(rc, d / "search", data, checkpoint_every_epoch=False)
    val = [r for r in MetricLog.from_csv((d / "search" / "metrics.csv").read_text()).rows if r["split"] == "val"]
    res = evaluate(rc, gf, d / "eval", data)
    return epsilon, seed, res["test_acc"], float(val[-1]["gap"])


def worker_count() -> int:
    raw = os.environ.get("POINTSEA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"POINTSEA_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def ablation_rows(cfg: RunConfig, accs: dict) -> list[dict]:
    rows = []
    for row in cfg.ablate.rows:
        kinds = {EAKind.parse(k) for k in ABLATION_ROWS[row]}
        vals = [accs[(row, s)] for s in cfg.ablate.seeds]
        r = {"model": row}
        for k in ALL_KINDS:
            r[k.label] = int(k in kinds)
        r.update(epsilon_greedy=int(row in GREEDY_ROWS), subset_size=len(kinds),
                 seeds=" ".join(str(s) for s in cfg.ablate.seeds), acc_mean=float(np.mean(vals)),
                 acc_std=float(np.std(vals)), acc_per_seed=" ".join(repr(float(v)) for v in vals))
        rows.append(r)
    return rows


def ablation_csv(rows: list[dict]) -> str:
    return _table_csv(rows, ABLATION_COLUMNS)


SWEEP_COLUMNS = ("epsilon", "seeds", "acc_mean", "acc_std", "gap_mean", "acc_per_seed", "gap_per_seed")


def sweep_rows(cfg: RunConfig, results: dict) -> list[dict]:
    rows = []
    for eps in cfg.ablate.epsilons:
        accs = [results[(eps, s)][0] for s in cfg.ablate.seeds]
        gaps = [results[(eps, s)][1] for s in cfg.ablate.seeds]
        rows.append({"epsilon": eps, "seeds": " ".join(str(s) for s in cfg.ablate.seeds),
                     "acc_mean": float(np.mean(accs)), "acc_std": float(np.std(accs)),
                     "gap_mean": float(np.mean(gaps)), "acc_per_seed": " ".join(repr(float(a)) for a in accs),
                     "gap_per_seed": " ".join(repr(float(g)) for g in gaps)})
    return rows


def _table_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _run_jobs(fn, jobs) -> list:
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def ablate(cfg: RunConfig, out, dataset_path=None) -> list[dict]:
    """Search and retrain every configured row for every seed; rows share the dataset.

    With ``[ablate] epsilons`` set, the full-EA greedy row is also repeated at
    each epsilon and summarised in epsilon_sweep.csv.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, row, seed, str(out), dataset_path) for row in cfg.ablate.rows for seed in cfg.ablate.seeds]
    results = _run_jobs(_ablation_job, jobs)
    accs = {(row, seed): acc for row, seed, acc in results}
    rows = ablation_rows(cfg, accs)
    (out / "ablation.csv").write_text(ablation_csv(rows))
    if cfg.ablate.epsilons:
        jobs = [(cfg, e, seed, str(out), dataset_path) for e in cfg.ablate.epsilons for seed in cfg.ablate.seeds]
        swept = {(e, s): (acc, gap) for e, s, acc, gap in _run_jobs(_sweep_job, jobs)}
        (out / "epsilon_sweep.csv").write_text(_table_csv(sweep_rows(cfg, swept), SWEEP_COLUMNS))
    return rows
