"""Alternating first-order search of network weights and architecture logits."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

import pointsea.numcore as nc
from pointsea import pcdata
from pointsea.pcdata import PointCloudDataset
from pointsea.supernet import CellGenotype, NetConfig, Network

from . import checkpoint
from .metrics import MetricLog
from .optim import SGD, Adam, clip_grad_norm, cosine_lr, frozen

log = logging.getLogger(__name__)


class SearchDiverged(nc.NumericError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 0.005
    lr_min: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 3e-4
    arch_lr: float = 3e-3
    arch_betas: tuple = (0.5, 0.999)
    arch_weight_decay: float = 1e-3
    epsilon: float = 0.5
    # leading epochs that update only the weights, architecture frozen
    warmup_epochs: int = 0
    # True drops the epsilon-greedy sampling: weight steps see relaxed mixtures
    relaxed: bool = False
    grad_clip: float = 5.0
    augment: bool = True
    seed: int = 0
    first_order: bool = True

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.epochs < 0 or self.batch_size < 1 or self.warmup_epochs < 0:
            raise ValueError("epochs and warmup must be >= 0 and batch size >= 1")
        if min(self.lr, self.arch_lr) < 0 or self.lr_min < 0:
            raise ValueError("learning rates must be non-negative")
        if not self.first_order:
            raise ValueError("only the first-order update is implemented")
        object.__setattr__(self, "arch_betas", tuple(self.arch_betas))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["arch_betas"] = list(self.arch_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        return cls(**d)


def split_halves(train: PointCloudDataset, seed: int) -> tuple[PointCloudDataset, PointCloudDataset]:
    """Stratified 50/50 split into weight-update and architecture-update halves."""
    rng = np.random.default_rng([seed, 0x4A1F])
    w_idx, a_idx = [], []
    for label in np.unique(train.labels):
        idx = rng.permutation(np.flatnonzero(train.labels == label))
        half = (len(idx) + 1) // 2
        w_idx.append(idx[:half])
        a_idx.append(idx[half:])
    return train.subset(np.sort(np.concatenate(w_idx))), train.subset(np.sort(np.concatenate(a_idx)))


def batch_points(ds: PointCloudDataset, idx: np.ndarray, seed: int, epoch: int, augment: bool) -> np.ndarray:
    pts = ds.points[idx]
    return pcdata.augment_batch(pts, ds.ids[idx], seed, epoch) if augment else pts


def dataset_loss(net: Network, ds: PointCloudDataset, batch: int = 32, op_weights=None,
                 ea_weights=None) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over a whole split, no tape."""
    total, correct = 0.0, 0
    for s in range(0, len(ds), batch):
        pts = ds.points[s:s + batch]
        labels = ds.labels[s:s + batch]
        logits = net.forward(pts, op_weights=op_weights, ea_weights=ea_weights)
        total += nc.cross_entropy(logits, labels).item() * len(labels)
        correct += int(np.sum(np.argmax(logits.data, axis=1) == labels))
    return total / len(ds), correct / len(ds)


@dataclass
class SearchState:
    config: SearchConfig
    net_config: NetConfig
    net: Network
    opt_w: SGD
    opt_a: Adam
    rng: np.random.Generator
    epoch: int = 0
    step: int = 0
    log: MetricLog = field(default_factory=MetricLog)

    @classmethod
    def create(cls, config: SearchConfig, net_config: NetConfig) -> "SearchState":
        net = Network(net_config, np.random.default_rng([config.seed, 1]))
        opt_w = SGD(net.weight_params(), config.lr, config.momentum, config.weight_decay)
        opt_a = Adam(net.arch_params(), config.arch_lr, config.arch_betas,
                     weight_decay=config.arch_weight_decay)
        return cls(config, net_config, net, opt_w, opt_a, np.random.default_rng([config.seed, 2]))

    def lr_at(self, epoch: int) -> float:
        c = self.config
        return cosine_lr(epoch, max(c.epochs, 1), c.lr, c.lr_min)

    # persistence
    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, p in enumerate(self.net.weight_params() + self.net.arch_params()):
            out[f"param{i}:{p.name}"] = p.data
        for k, v in self.opt_w.state_arrays().items():
            out[f"sgd.{k}"] = v
        for k, v in self.opt_a.state_arrays().items():
            out[f"adam.{k}"] = v
        for o, bank in self.net.banks.items():
            if bank.sampled is not None:
                out[f"sampled.{o}"] = bank.sampled
        return out

    def metadata(self) -> dict:
        return {
            "kind": "search",
            "search_config": self.config.to_dict(),
            "net_config": self.net_config.to_dict(),
            "epoch": self.epoch,
            "step": self.step,
            "adam_t": self.opt_a.t,
            "rng": self.rng.bit_generator.state,
            "bank_modes": {o: b.mode for o, b in self.net.banks.items()},
            "log": self.log.rows,
        }

    def save(self, path) -> None:
        checkpoint.save(path, self.metadata(), self.arrays())

    @classmethod
    def load(cls, path) -> "SearchState":
        meta, arrays = checkpoint.load(path)
        if meta.get("kind") != "search":
            raise checkpoint.CheckpointError("not a search checkpoint")
        state = cls.create(SearchConfig.from_dict(meta["search_config"]),
                           NetConfig.from_dict(meta["net_config"]))
        params = state.net.weight_params() + state.net.arch_params()
        names = [k for k in arrays if k.startswith("param")]
        if len(names) != len(params):
            raise checkpoint.CheckpointError("checkpoint parameter count does not match its config")
        for p, k in zip(params, names):
            p.data[...] = arrays[k]
        state.opt_w.load_arrays({k[4:]: v for k, v in arrays.items() if k.startswith("sgd.")})
        state.opt_a.load_arrays({k[5:]: v for k, v in arrays.items() if k.startswith("adam.")})
        state.opt_a.t = meta["adam_t"]
        for o, bank in state.net.banks.items():
            bank.sampled = arrays.get(f"sampled.{o}")
            bank.mode = meta["bank_modes"][o]
        state.rng.bit_generator.state = meta["rng"]
        state.epoch = meta["epoch"]
        state.step = meta["step"]
        state.log = MetricLog(list(meta["log"]))
        return state


def _check_finite(value: float, what: str, state: SearchState, dump_dir) -> None:
    if np.isfinite(value):
        return
    where = ""
    if dump_dir is not None:
        path = Path(dump_dir) / f"diverged-step{state.step}.psck"
        state.save(path)
        where = f"; state dumped to {path}"
    raise SearchDiverged(f"{what} became {value} at epoch {state.epoch}, step {state.step}{where}")


def _loss(logits, labels, what: str, state: SearchState, dump_dir) -> nc.Tensor:
    if not np.all(np.isfinite(logits.data)):
        _check_finite(float("nan"), what, state, dump_dir)
    loss = nc.cross_entropy(logits, labels)
    _check_finite(loss.item(), what, state, dump_dir)
    return loss


def alternating_step(state: SearchState, w_points, w_labels, a_points, a_labels, lr: float,
                     dump_dir=None, arch_step: bool = True) -> tuple[float, float]:
    """One weight step on the weight half, then (unless ``arch_step`` is off)
    one architecture step on the held-out half.  Returns the weight-step loss
    and accuracy."""
    cfg = state.config
    net = state.net
    banks = net.banks.values()
    for bank in banks:
        if cfg.relaxed:
            bank.relax()
        else:
            bank.sample(cfg.epsilon, state.rng)

    arch = net.arch_params()
    weights = net.weight_params()
    with frozen(arch):
        with nc.Tape() as tape:
            logits = net.forward(w_points)
            loss = _loss(logits, w_labels, "weight-step loss", state, dump_dir)
            tape.backward(loss)
    clip_grad_norm(weights, cfg.grad_clip)
    state.opt_w.lr = lr
    state.opt_w.step()
    state.opt_w.zero_grad()
    acc = float(np.mean(np.argmax(logits.data, axis=1) == w_labels))
    state.step += 1
    if not arch_step:
        return loss.item(), acc

    with frozen(weights):
        with nc.Tape() as tape:
            a_logits = net.forward(a_points, ea_weights=net.ea_weights("relaxed"))
            a_loss = _loss(a_logits, a_labels, "architecture-step loss", state, dump_dir)
            tape.backward(a_loss)
    state.opt_a.step()
    state.opt_a.zero_grad()
    return loss.item(), acc


def discretization_gap(net: Network, ds: PointCloudDataset, batch: int = 32) -> tuple[float, float, float]:
    """(relaxed loss, relaxed acc, |relaxed loss - discretized loss|) on ``ds``."""
    relaxed_loss, relaxed_acc = dataset_loss(net, ds, batch, ea_weights=net.ea_weights("relaxed"))
    ow, ew = net.masked_weights(net.discretize())
    disc_loss, _ = dataset_loss(net, ds, batch, op_weights=ow, ea_weights=ew)
    return relaxed_loss, relaxed_acc, abs(relaxed_loss - disc_loss)


def run_epoch(state: SearchState, w_half, a_half, val, dump_dir=None) -> None:
    cfg = state.config
    lr = state.lr_at(state.epoch)
    pw = state.rng.permutation(len(w_half))
    pa = state.rng.permutation(len(a_half))
    steps = int(np.ceil(len(w_half) / cfg.batch_size))
    arch_step = state.epoch >= cfg.warmup_epochs
    losses, accs, sizes = [], [], []
    for s in range(steps):
        wi = pw[s * cfg.batch_size:(s + 1) * cfg.batch_size]
        ai = pa[np.arange(s * cfg.batch_size, s * cfg.batch_size + len(wi)) % len(a_half)]
        wp = batch_points(w_half, wi, cfg.seed, state.epoch, cfg.augment)
        ap = batch_points(a_half, ai, cfg.seed, state.epoch, cfg.augment)
        loss, acc = alternating_step(state, wp, w_half.labels[wi], ap, a_half.labels[ai], lr, dump_dir, arch_step)
        losses.append(loss)
        accs.append(acc)
        sizes.append(len(wi))
    eps = 0.0 if cfg.relaxed else cfg.epsilon
    v_loss, v_acc, gap = discretization_gap(state.net, val)
    state.log.add(epoch=state.epoch, split="train", loss=float(np.average(losses, weights=sizes)),
                  acc=float(np.average(accs, weights=sizes)), gap=gap, lr=lr, epsilon=eps)
    state.log.add(epoch=state.epoch, split="val", loss=v_loss, acc=v_acc, gap=gap, lr=lr, epsilon=eps)
    log.info("search epoch %d: train loss %.4f acc %.3f | val loss %.4f acc %.3f gap %.4g",
             state.epoch, state.log.rows[-2]["loss"], state.log.rows[-2]["acc"], v_loss, v_acc, gap)
    state.epoch += 1


@dataclass
class SearchResult:
    state: SearchState
    genotype: CellGenotype

    @property
    def log(self) -> MetricLog:
        return self.state.log


def run_search(config: SearchConfig, net_config: NetConfig, data: dict[str, PointCloudDataset],
               state: SearchState | None = None, checkpoint_dir=None, stop_after: int | None = None,
               on_epoch: Callable[[SearchState], None] | None = None) -> SearchResult:
    """Run (or resume) the search for ``config.epochs`` epochs.

    ``data`` holds ``train`` (split 50/50 into the two halves) and ``val``
    (used for the per-epoch metrics and the discretization gap).
    """
    if state is None:
        state = SearchState.create(config, net_config)
    w_half, a_half = split_halves(data["train"], state.config.seed)
    if len(a_half) == 0:
        raise ValueError("training split too small for a weight/architecture split")
    val = data.get("val")
    if val is None or len(val) == 0:
        val = a_half
    done = 0
    while state.epoch < state.config.epochs:
        if stop_after is not None and done >= stop_after:
            break
        run_epoch(state, w_half, a_half, val, checkpoint_dir)
        done += 1
        if checkpoint_dir is not None:
            state.save(Path(checkpoint_dir) / "search.psck")
        if on_epoch is not None:
            on_epoch(state)
    return SearchResult(state, state.net.discretize())
