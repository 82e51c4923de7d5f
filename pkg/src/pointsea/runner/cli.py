"""``pointsea`` command line."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from pointsea import pcdata
from pointsea.searchopt import SearchState

from . import config as cfgmod
from . import genotype_file, gradsuite, pipeline
from .export import genotype_dots

log = logging.getLogger("pointsea")


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="key = value run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=out_required, help="output directory")


def _arch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float)
    p.add_argument("--ea-subset", help="comma separated, e.g. e1,e3")
    p.add_argument("--cells", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--nodes", type=int)
    p.add_argument("--k", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointsea", description="Convolution search on point clouds.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="dataset files")
    ds_sub = ds.add_subparsers(dest="action", required=True)
    gen = ds_sub.add_parser("gen", help="generate a synthetic dataset file")
    _common(gen)

    s = sub.add_parser("search", help="search a cell and its convolutions")
    _common(s)
    _arch_flags(s)
    s.add_argument("--dataset", help="dataset file (default: generate from the config)")
    s.add_argument("--resume", help="search checkpoint to continue from")

    e = sub.add_parser("eval", help="retrain a genotype from scratch and score it")
    _common(e)
    _arch_flags(e)
    e.add_argument("--genotype", required=True)
    e.add_argument("--dataset")
    e.add_argument("--strict", action="store_true", help="reject a genotype whose config hash differs")

    a = sub.add_parser("ablate", help="EA-subset ablation rows A-G")
    _common(a)
    _arch_flags(a)
    a.add_argument("--dataset")

    x = sub.add_parser("export-dot", help="DOT graphs of a genotype")
    x.add_argument("--genotype", required=True)
    x.add_argument("--out", help="directory for cell.dot and conv_*.dot (default: stdout)")

    g = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    g.add_argument("--seed", type=int, default=0)
    return parser


def run_config(args, stage: str = "search") -> cfgmod.RunConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    over = {k: getattr(args, k, None) for k in ("seed", "epsilon", "ea_subset", "cells", "levels", "nodes", "k")}
    return cfg.with_overrides(stage=stage, **over)


def _command_line(args, keys) -> list[str]:
    """Normalised argv for the manifest; paths are made absolute."""
    argv = [args.command] + ([args.action] if getattr(args, "action", None) else [])
    for key in keys:
        val = getattr(args, key, None)
        if val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        if val is True:
            argv.append(flag)
            continue
        if key in ("config", "dataset", "genotype", "resume"):
            val = str(Path(val).resolve())
        argv += [flag, str(val)]
    return argv


RUN_KEYS = ("config", "seed", "epsilon", "ea_subset", "cells", "levels", "nodes", "k", "dataset",
            "genotype", "resume", "strict")


def cmd_dataset_gen(args) -> int:
    cfg = run_config(args)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, dataset=dataclasses.replace(cfg.dataset, seed=args.seed))
    cfg.dataset.validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pcdata.save(pcdata.generate(cfg.dataset), out / "dataset.psea")
    (out / "config.cfg").write_text(cfg.canonical())
    pipeline.write_manifest(out, cfg, _command_line(args, ("config", "seed")))
    print(out / "dataset.psea")
    return 0


def cmd_search(args) -> int:
    cfg = run_config(args).resolved()
    data = pipeline.load_splits(cfg, args.dataset)
    state = SearchState.load(args.resume) if args.resume else None
    gf = pipeline.search(cfg, args.out, data, state=state)
    pipeline.write_manifest(Path(args.out), cfg, _command_line(args, RUN_KEYS))
    print(genotype_file.dumps(gf), end="")
    return 0


def cmd_eval(args) -> int:
    cfg = run_config(args, stage="eval").resolved()
    expect = cfg.config_hash() if args.strict else None
    gf = genotype_file.load(args.genotype, expect)
    data = pipeline.load_splits(cfg, args.dataset)
    res = pipeline.evaluate(cfg, gf, args.out, data)
    pipeline.write_manifest(Path(args.out), cfg, _command_line(args, RUN_KEYS))
    print(json.dumps(res, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    cfg = run_config(args)
    if cfg.seed is None:
        cfg = dataclasses.replace(cfg, seed=cfg.ablate.seeds[0])
    rows = pipeline.ablate(cfg, args.out, args.dataset)
    pipeline.write_manifest(Path(args.out), cfg, _command_line(args, RUN_KEYS))
    print(pipeline.ablation_csv(rows), end="")
    return 0


def cmd_export_dot(args) -> int:
    gf = genotype_file.load(args.genotype)
    dots = genotype_dots(gf.genotype)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for stem, text in dots.items():
            (out / f"{stem}.dot").write_text(text)
    else:
        sys.stdout.write("".join(dots.values()))
    return 0


def cmd_gradcheck(args) -> int:
    results, elapsed = gradsuite.timed_suite(args.seed)
    print(gradsuite.report(results, elapsed))
    return 0 if all(r.ok for r in results) else 1


def replay(manifest_path, out) -> list[str]:
    """Re-run the command recorded in a manifest into ``out``; names of artifacts whose bytes differ."""
    manifest = json.loads(Path(manifest_path).read_text())
    argv = list(manifest["command"]) + ["--out", str(out)]
    if main(argv) != 0:
        raise RuntimeError(f"replay of {' '.join(argv)} failed")
    fresh = json.loads((Path(out) / pipeline.MANIFEST).read_text())["artifacts"]
    names = sorted(set(fresh) | set(manifest["artifacts"]))
    return [n for n in names if fresh.get(n) != manifest["artifacts"].get(n)]


COMMANDS = {
    "dataset": cmd_dataset_gen,
    "search": cmd_search,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "export-dot": cmd_export_dot,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as e:  # one-line diagnostic, no traceback
        msg = " ".join(str(e).split()) or type(e).__name__
        print(f"pointsea {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
