"""Alternating architecture search, retraining and their persistence."""
from . import checkpoint
from .checkpoint import CheckpointError
from .evaluate import EvalConfig, EvalResult, evaluate_genotype, load_model, save_model, accuracy
from .metrics import COLUMNS, MetricLog
from .optim import SGD, Adam, clip_grad_norm, cosine_lr, frozen, grad_norm
from .search import (
    SearchConfig,
    SearchDiverged,
    SearchResult,
    SearchState,
    alternating_step,
    dataset_loss,
    discretization_gap,
    run_search,
    split_halves,
)

__all__ = [
    "COLUMNS", "SGD", "Adam", "CheckpointError", "EvalConfig", "EvalResult", "MetricLog", "SearchConfig",
    "SearchDiverged", "SearchResult", "SearchState", "alternating_step", "checkpoint",
    "clip_grad_norm", "cosine_lr", "dataset_loss", "discretization_gap", "evaluate_genotype",
    "frozen", "grad_norm", "load_model", "run_search", "save_model", "split_halves", "accuracy",
]
