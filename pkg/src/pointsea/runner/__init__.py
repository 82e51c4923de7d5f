"""Command line, run configs, genotype files, DOT export and the ablation harness."""
from . import config, genotype_file, gradsuite, pipeline
from .cli import build_parser, main, replay
from .config import AblateConfig, ConfigError, RunConfig
from .export import cell_dot, genotype_dots
from .genotype_file import GenotypeFile, GenotypeFileError

__all__ = [
    "AblateConfig", "ConfigError", "GenotypeFile", "GenotypeFileError", "RunConfig", "build_parser",
    "cell_dot", "config", "genotype_dots", "genotype_file", "gradsuite", "main", "pipeline", "replay",
]
