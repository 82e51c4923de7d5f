"""Retraining a discretised genotype from scratch and scoring it."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

import pointsea.numcore as nc
from pointsea.pcdata import PointCloudDataset
from pointsea.supernet import CellGenotype, NetConfig, Network

from . import checkpoint
from .metrics import MetricLog
from .optim import Adam, clip_grad_norm, cosine_lr
from .search import batch_points, dataset_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalConfig:
    cells: int = 4
    k: int = 20
    epochs: int = 60
    batch_size: int = 32
    lr: float = 1e-3
    lr_min: float = 1e-5
    weight_decay: float = 1e-4
    grad_clip: float = 5.0
    augment: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalConfig":
        return cls(**d)

    def net_config(self, base: NetConfig) -> NetConfig:
        return base.replace(cells=self.cells, k=self.k)


@dataclass
class EvalResult:
    net: Network
    genotype: CellGenotype
    config: EvalConfig
    net_config: NetConfig
    test_acc: float
    test_loss: float
    log: MetricLog = field(default_factory=MetricLog)

    def save(self, path) -> None:
        save_model(path, self.net, self.genotype, self.config, self.net_config, self.log)


def evaluate_genotype(genotype: CellGenotype, data: dict[str, PointCloudDataset], config: EvalConfig,
                      base: NetConfig) -> EvalResult:
    """Build the discrete network, train it on the full train split and
    report test accuracy of the final weights."""
    genotype.validate()
    net_cfg = config.net_config(base)
    net = Network(net_cfg, np.random.default_rng([config.seed, 11]), genotype)
    params = net.weight_params()
    opt = Adam(params, config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng([config.seed, 12])
    train = data["train"]
    metrics = MetricLog()
    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, max(config.epochs, 1), config.lr, config.lr_min)
        opt.lr = lr
        perm = rng.permutation(len(train))
        losses, accs, sizes = [], [], []
        for s in range(0, len(train), config.batch_size):
            idx = perm[s:s + config.batch_size]
            pts = batch_points(train, idx, config.seed, epoch, config.augment)
            labels = train.labels[idx]
            with nc.Tape() as tape:
                logits = net.forward(pts)
                loss = nc.cross_entropy(logits, labels)
                if not np.isfinite(loss.item()):
                    raise nc.NumericError(f"retraining loss became {loss.item()} at epoch {epoch}")
                tape.backward(loss)
            clip_grad_norm(params, config.grad_clip)
            opt.step()
            opt.zero_grad()
            losses.append(loss.item())
            accs.append(float(np.mean(np.argmax(logits.data, axis=1) == labels)))
            sizes.append(len(idx))
        metrics.add(epoch=epoch, split="train", loss=float(np.average(losses, weights=sizes)),
                    acc=float(np.average(accs, weights=sizes)), gap=0.0, lr=lr, epsilon=0.0)
        if "val" in data and len(data["val"]):
            v_loss, v_acc = dataset_loss(net, data["val"], config.batch_size)
            metrics.add(epoch=epoch, split="val", loss=v_loss, acc=v_acc, gap=0.0, lr=lr, epsilon=0.0)
        log.info("eval epoch %d: %s", epoch, metrics.rows[-1])
    test_loss, test_acc = dataset_loss(net, data["test"], config.batch_size)
    return EvalResult(net, genotype, config, net_cfg, test_acc, test_loss, metrics)


def accuracy(net: Network, ds: PointCloudDataset, batch: int = 32) -> float:
    return dataset_loss(net, ds, batch)[1]


def save_model(path, net: Network, genotype: CellGenotype, config: EvalConfig, net_config: NetConfig,
               metrics: MetricLog | None = None) -> None:
    meta = {
        "kind": "model",
        "genotype": genotype.to_dict(),
        "eval_config": config.to_dict(),
        "net_config": net_config.to_dict(),
        "log": metrics.rows if metrics else [],
    }
    arrays = {f"param{i}:{p.name}": p.data for i, p in enumerate(net.weight_params())}
    checkpoint.save(path, meta, arrays)


def load_model(path) -> tuple[Network, CellGenotype, EvalConfig]:
    meta, arrays = checkpoint.load(path)
    if meta.get("kind") != "model":
        raise checkpoint.CheckpointError("not a model checkpoint")
    genotype = CellGenotype.from_dict(meta["genotype"])
    net_cfg = NetConfig.from_dict(meta["net_config"])
    net = Network(net_cfg, np.random.default_rng(0), genotype)
    params = net.weight_params()
    if len(params) != len(arrays):
        raise checkpoint.CheckpointError("model checkpoint does not match its genotype")
    for p, key in zip(params, arrays):
        p.data[...] = arrays[key]
    return net, genotype, EvalConfig.from_dict(meta["eval_config"])
