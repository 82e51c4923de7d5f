"""Graphviz text for a discretised convolution DAG."""
from __future__ import annotations

from .conv import ConvConfig, ConvGenotype


def conv_dot(genotype: ConvGenotype, name: str = "conv") -> str:
    cfg = genotype.apply_to(ConvConfig())
    genotype.validate(cfg)
    gname = name.replace(".", "_")
    lines = [f"digraph {gname} {{", "  rankdir=LR;"]
    for lv in range(cfg.levels):
        lines.append(f"  subgraph cluster_l{lv} {{")
        lines.append(f'    label="level {lv + 1}";')
        for t in range(cfg.nodes):
            lines.append(f'    l{lv}_n{t} [label="n{t}"];')
        lines.append(f'    l{lv}_out [label="mlp", shape=box];')
        lines.append("  }")
    for (lv, t, a, b), kind in zip(cfg.position_table(), genotype.kinds):
        lines.append(f'  l{lv}_n{a} -> l{lv}_n{t} [label="{kind.label}", pair="{a},{b}"];')
    for lv in range(cfg.levels):
        for t in range(2, cfg.nodes):
            lines.append(f"  l{lv}_n{t} -> l{lv}_out [style=dashed];")
        if lv + 1 < cfg.levels:
            lines.append(f"  l{lv}_out -> l{lv + 1}_n0 [style=dashed];")
            lines.append(f"  l{lv}_n1 -> l{lv + 1}_n1 [style=dashed];")
    lines.append(f'  agg [label="{genotype.aggregator}", shape=box];')
    lines.append(f"  l{cfg.levels - 1}_out -> agg [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
