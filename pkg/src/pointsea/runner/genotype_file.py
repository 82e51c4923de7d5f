"""Human-readable genotype files.

::

    [genotype]
    version = 1

    [provenance]
    seed = 7
    config_hash = <sha256 of the canonical run config>
    epochs = 20

    [cell]
    node2 = 0 conv_a, 1 skip
    node3 = ...

    [conv.a]
    aggregator = max
    levels = 2
    ...
    kinds = e1 e3 e2 ...
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from pointsea.eassoc import EAKind
from pointsea.seaconv import ConvConfig, ConvGenotype
from pointsea.supernet import CONV_OPS, INPUTS, STEPS, CellGenotype

VERSION = 1


class GenotypeFileError(ValueError):
    pass


@dataclass
class GenotypeFile:
    genotype: CellGenotype
    seed: int
    config_hash: str
    epochs: int
    version: int = VERSION


def _conv_section(op: str) -> str:
    return "conv." + op.split("_", 1)[1]


def dumps(gf: GenotypeFile) -> str:
    g = gf.genotype
    lines = ["[genotype]", f"version = {gf.version}", "",
             "[provenance]", f"seed = {gf.seed}", f"config_hash = {gf.config_hash}", f"epochs = {gf.epochs}", "",
             "[cell]"]
    for t, picks in enumerate(g.nodes, start=INPUTS):
        lines.append(f"node{t} = " + ", ".join(f"{s} {op}" for s, op in picks))
    lines.append("")
    for op in sorted(g.convs):
        c = g.convs[op]
        lines += [f"[{_conv_section(op)}]", f"aggregator = {c.aggregator}", f"levels = {c.levels}",
                  f"nodes = {c.nodes}", f"width = {c.width}", f"wiring = {c.wiring}",
                  "kinds = " + " ".join(k.label for k in c.kinds), ""]
    return "\n".join(lines)


def _int(sec, key) -> int:
    try:
        return int(sec[key])
    except KeyError:
        raise GenotypeFileError(f"missing key {key!r} in [{sec.name}]") from None
    except ValueError:
        raise GenotypeFileError(f"[{sec.name}] {key} is not an integer: {sec[key]!r}") from None


def loads(text: str, expect_hash: str | None = None) -> GenotypeFile:
    """Parse and validate; with ``expect_hash`` a differing config hash is rejected."""
    p = configparser.ConfigParser(interpolation=None)
    p.optionxform = str
    try:
        p.read_string(text)
    except configparser.Error as e:
        raise GenotypeFileError(f"corrupt genotype file: {' '.join(str(e).split())}") from None
    for sec in ("genotype", "provenance", "cell"):
        if sec not in p:
            raise GenotypeFileError(f"genotype file lacks a [{sec}] section")
    version = _int(p["genotype"], "version")
    if version != VERSION:
        raise GenotypeFileError(f"unsupported genotype file version {version}")
    prov = p["provenance"]
    seed, epochs = _int(prov, "seed"), _int(prov, "epochs")
    chash = prov.get("config_hash", "").strip()
    if expect_hash is not None and chash != expect_hash:
        raise GenotypeFileError(f"config hash mismatch: file has {chash[:12]}, run config is {expect_hash[:12]}")

    nodes = []
    for t in range(INPUTS, INPUTS + STEPS):
        raw = p["cell"].get(f"node{t}")
        if raw is None:
            raise GenotypeFileError(f"[cell] lacks node{t}")
        picks = []
        for item in raw.split(","):
            parts = item.split()
            if len(parts) != 2 or not parts[0].isdigit():
                raise GenotypeFileError(f"[cell] node{t}: expected 'source op' pairs, got {item.strip()!r}")
            picks.append((int(parts[0]), parts[1]))
        nodes.append(picks)

    convs = {}
    for op in CONV_OPS:
        name = _conv_section(op)
        if name not in p:
            continue
        sec = p[name]
        try:
            kinds = tuple(EAKind.parse(k) for k in sec.get("kinds", "").split())
            conv = ConvGenotype(kinds, sec.get("aggregator", "max"), _int(sec, "levels"), _int(sec, "nodes"),
                                _int(sec, "width"), sec.get("wiring", "full"))
            conv.validate(conv.apply_to(ConvConfig()))
        except GenotypeFileError:
            raise
        except (ValueError, KeyError) as e:
            raise GenotypeFileError(f"[{name}]: {e}") from None
        convs[op] = conv
    geno = CellGenotype(nodes, convs)
    try:
        geno.validate()
    except ValueError as e:
        raise GenotypeFileError(f"invalid cell: {e}") from None
    return GenotypeFile(geno, seed, chash, epochs, version)


def save(gf: GenotypeFile, path) -> None:
    Path(path).write_text(dumps(gf))


def load(path, expect_hash: str | None = None) -> GenotypeFile:
    p = Path(path)
    if not p.is_file():
        raise GenotypeFileError(f"genotype file {p} not found")
    return loads(p.read_text(), expect_hash)
