"""Mini-batch SGD with momentum and step decay, the replication protocol
and timing measurements."""

from __future__ import annotations

import csv
import json
import math
import statistics
import time
from decimal import Decimal
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dataset as dsmod
from .dataset import AugmentPolicy, LabeledDataset, SplitRatios
from .losses import LossSpec, batch_loss_grad
from .metrics import confusion_matrix, micro_f1, per_class_recall
from .model import Model, ModelArch, backward, count_parameters, forward, init_model, predict

MASK64 = (1 << 64) - 1
N_LATENCY_SAMPLES = 30


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    base_lr: float = 0.001
    momentum: float = 0.9
    lr_step_epochs: int = 7
    lr_factor: float = 0.1
    loss: LossSpec = field(default_factory=LossSpec)
    seed: int = 0
    augment: AugmentPolicy | None = None
    replications: int = 5

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.lr_step_epochs < 1:
            raise ValueError("lr_step_epochs must be positive")
        if not 0.0 < self.lr_factor < 1.0:
            raise ValueError("lr_factor must lie in (0, 1)")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("loss", "augment")}
        d["loss"] = self.loss.to_dict()
        d["augment"] = self.augment.to_dict() if self.augment else None
        return d


@dataclass
class TrainHistory:
    epoch: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_f1: list = field(default_factory=list)
    val_f1: list = field(default_factory=list)

    def __len__(self):
        return len(self.epoch)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "lr", "train_loss", "train_f1", "val_f1"])
            for row in zip(self.epoch, self.lr, self.train_loss, self.train_f1, self.val_f1):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


@dataclass(frozen=True)
class BenchmarkReport:
    model: str
    parameter_count: int
    replication_seeds: tuple
    test_f1: tuple
    train_f1: tuple
    train_time_s: tuple
    inference_ms: tuple
    per_class_recall: tuple
    confusion: tuple
    class_names: tuple
    model_selection: str = "final_epoch"

    @staticmethod
    def _mean_std(values):
        mean = statistics.fmean(values)
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        return mean, std

    @property
    def test_f1_mean(self) -> float:
        return self._mean_std(self.test_f1)[0]

    @property
    def test_f1_std(self) -> float:
        return self._mean_std(self.test_f1)[1]

    def to_dict(self):
        d = {"model": self.model, "parameter_count": self.parameter_count,
             "model_selection": self.model_selection, "class_names": list(self.class_names),
             "replications": len(self.test_f1), "replication_seeds": list(self.replication_seeds)}
        for name in ("train_time_s", "train_f1", "test_f1", "inference_ms"):
            vals = getattr(self, name)
            mean, std = self._mean_std(vals)
            d[name] = {"values": list(vals), "mean": mean, "std": std}
        d["per_class_recall"] = [list(r) for r in self.per_class_recall]
        d["confusion"] = [[list(row) for row in cm] for cm in self.confusion]
        return d

    def table_row(self):
        """Columns in the order of the published benchmark table."""
        def pm(vals, scale=1.0, digits=1):
            mean, std = self._mean_std(vals)
            return f"{mean * scale:.{digits}f} ± {std * scale:.{digits}f}"

        return {
            "model": self.model,
            "parameter_number": str(self.parameter_count),
            "training_time_s": pm(self.train_time_s, digits=3),
            "training_f1": pm(self.train_f1, 100.0),
            "testing_f1": pm(self.test_f1, 100.0),
            "inference_time_ms": pm(self.inference_ms, digits=4),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path) -> None:
        row = self.table_row()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(row))
            w.writerow(list(row.values()))


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """base_lr * lr_factor ** (epoch // lr_step_epochs).

    Evaluated in decimal and rounded once, so 0.001 decays to exactly
    0.0001 rather than 1.0000000000000002e-04.
    """
    k = epoch // cfg.lr_step_epochs
    return float(Decimal(repr(cfg.base_lr)) * Decimal(repr(cfg.lr_factor)) ** k)


def sgd_step(m: Model, grads: dict, velocity: dict | None, lr: float, momentum: float):
    """Heavy-ball momentum: v <- momentum * v + g; theta <- theta - lr * v."""
    new_params, new_vel = {}, {}
    for name, theta in m.params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != {theta.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"{name}: non-finite gradient")
        v = g if velocity is None else momentum * velocity[name] + g
        new_vel[name] = v
        new_params[name] = theta - lr * v
    return Model(m.arch, new_params), new_vel


def zero_velocity(m: Model) -> dict:
    return {k: np.zeros_like(v) for k, v in m.params.items()}


def evaluate_f1(m: Model, ds: LabeledDataset) -> float:
    if len(ds) == 0:
        return 0.0
    cm = confusion_matrix(predict(m, ds.flat_inputs()), ds.labels, ds.n_classes)
    return micro_f1(cm)


def train(train_set: LabeledDataset, val_set: LabeledDataset, arch: ModelArch, cfg: TrainConfig,
          init: Model | None = None):
    """Train from ``init`` (default: seeded init); returns (final model, history)."""
    if len(train_set) == 0:
        raise ValueError("empty training set")
    if train_set.input_dim != arch.input_dim or train_set.n_classes != arch.output_dim:
        raise ValueError(
            f"dataset ({train_set.input_dim} inputs, {train_set.n_classes} classes) does not "
            f"match arch ({arch.input_dim} inputs, {arch.output_dim} classes)")
    if init is not None and init.arch != arch:
        raise ValueError("init model architecture does not match arch")
    model = init_model(arch, cfg.seed) if init is None else init
    history = TrainHistory()
    if cfg.epochs == 0:
        return model, history

    rng = np.random.default_rng([cfg.seed, 1])
    aug_rng = np.random.default_rng([cfg.seed, 2])
    use_aug = cfg.augment is not None and train_set.kind == "raster"
    velocity = zero_velocity(model)
    n = len(train_set)
    x_all = train_set.inputs
    y_all = train_set.labels

    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = x_all[idx]
            if use_aug:
                xb = np.stack([dsmod.augment(dsmod.Sample(x, 0), cfg.augment, aug_rng).input
                               for x in xb])
            xb = xb.reshape(len(idx), -1)
            yb = y_all[idx]
            logits, _ = forward(model, xb)
            loss, g = batch_loss_grad(cfg.loss, logits, yb)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            grads = backward(model, xb, g)
            model, velocity = sgd_step(model, grads, velocity, lr, cfg.momentum)
            loss_sum += loss * len(idx)
        history.epoch.append(epoch)
        history.lr.append(lr)
        history.train_loss.append(loss_sum / n)
        history.train_f1.append(evaluate_f1(model, train_set))
        history.val_f1.append(evaluate_f1(model, val_set))
    return model, history


def replication_seed(master_seed: int, r: int) -> int:
    """SplitMix64 finalizer over master + (r + 1) * golden ratio.

    The finalizer is a bijection on 64-bit words, so distinct replication
    indices always receive distinct seeds.
    """
    z = (master_seed + (r + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def inference_latency_ms(m: Model, ds: LabeledDataset, rng, n_samples: int = N_LATENCY_SAMPLES):
    """Mean single-sample prediction time over randomly chosen samples."""
    if len(ds) == 0:
        return 0.0
    idx = rng.choice(len(ds), size=n_samples, replace=len(ds) < n_samples)
    x = ds.flat_inputs()
    elapsed = 0.0
    for i in idx:
        t0 = time.perf_counter()
        predict(m, x[i])
        elapsed += time.perf_counter() - t0
    return 1000.0 * elapsed / n_samples


def run_benchmark(ds: LabeledDataset, arch: ModelArch, cfg: TrainConfig,
                  ratios: SplitRatios = SplitRatios(), name: str | None = None) -> BenchmarkReport:
    """Repeat split/train/evaluate over ``cfg.replications`` derived seeds.

    Replications are sequential and share nothing but ``ds``; the test-set
    scores come from the final-epoch model.
    """
    seeds, test_f1, train_f1, times, latency, recalls, confusions = ([] for _ in range(7))
    n_params = None
    for r in range(cfg.replications):
        seed_r = replication_seed(cfg.seed, r)
        train_set, val_set, test_set = dsmod.stratified_split(ds, ratios, seed_r)
        run_cfg = replace(cfg, seed=seed_r)
        t0 = time.perf_counter()
        model, hist = train(train_set, val_set, arch, run_cfg)
        times.append(time.perf_counter() - t0)
        cm = confusion_matrix(predict(model, test_set.flat_inputs()), test_set.labels,
                              ds.n_classes, ds.class_names)
        seeds.append(seed_r)
        test_f1.append(micro_f1(cm))
        train_f1.append(hist.train_f1[-1] if len(hist) else evaluate_f1(model, train_set))
        latency.append(inference_latency_ms(model, test_set, np.random.default_rng([seed_r, 3])))
        recalls.append(tuple(float(v) for v in per_class_recall(cm)))
        confusions.append(tuple(tuple(int(v) for v in row) for row in cm.counts))
        n_params = count_parameters(model)
    if name is None:
        name = (f"softmax-regression {arch.input_dim}->{arch.output_dim}" if arch.hidden_dim == 0
                else f"mlp {arch.input_dim}->{arch.hidden_dim}->{arch.output_dim}")
        name += f" [{cfg.loss.kind}]"
    return BenchmarkReport(name, n_params, tuple(seeds), tuple(test_f1), tuple(train_f1),
                           tuple(times), tuple(latency), tuple(recalls), tuple(confusions),
                           ds.class_names)
