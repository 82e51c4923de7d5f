"""DOT text for a discretised cell and its convolutions."""
from __future__ import annotations

from pointsea.seaconv import conv_dot
from pointsea.supernet import INPUTS, STEPS, CellGenotype

OUTPUT_NODE = INPUTS + STEPS


def cell_dot(genotype: CellGenotype, name: str = "cell") -> str:
    genotype.validate()
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    lines.append('  n0 [label="c_{k-2}", shape=box];')
    lines.append('  n1 [label="c_{k-1}", shape=box];')
    for t in range(INPUTS, OUTPUT_NODE):
        lines.append(f'  n{t} [label="{t}"];')
    lines.append(f'  n{OUTPUT_NODE} [label="c_{{k}}", shape=box];')
    for t, picks in enumerate(genotype.nodes, start=INPUTS):
        for s, op in picks:
            lines.append(f'  n{s} -> n{t} [label="{op}"];')
    for t in list(range(INPUTS, OUTPUT_NODE)) + [1]:
        lines.append(f"  n{t} -> n{OUTPUT_NODE} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def genotype_dots(genotype: CellGenotype) -> dict[str, str]:
    """File stem -> DOT text for the cell and every conv it carries."""
    out = {"cell": cell_dot(genotype)}
    for op in sorted(genotype.convs):
        out[op] = conv_dot(genotype.convs[op], op)
    return out
