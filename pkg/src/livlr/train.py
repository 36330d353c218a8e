"""Training loop, evaluation, and metrics emission.

One optimizer step per batch; epoch order comes from a seeded permutation
indexed by (config seed, epoch), so a (config, dataset) pair fully
determines every metric and checkpoint byte. The batch loss is the mean
of per-sample losses; samples run sequentially on the single tape.
"""
from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from .checkpoint import save_checkpoint
from .config import ModelConfig
from .data import SyntheticDataset
from .errors import NumericError
from .model import Model
from .optim import adamw_step
from .tensor import backward, mul, no_grad

METRIC_COLUMNS = ("epoch", "train_loss", "train_acc", "wall_ms")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    wall_ms: float


@dataclass
class TrainResult:
    metrics: list[EpochMetrics]
    checkpoint_path: str | None
    final_acc: float
    final_loss: float
    model: "Model"


def _first_nonfinite_param(model: Model) -> str | None:
    for name, p in model.store.items():
        if not np.isfinite(p.data).all():
            return name
    for name, p in model.store.items():
        if p.grad is not None and not np.isfinite(p.grad).all():
            return name
    return None


def _check_finite(loss_val: float, model: Model, epoch: int, batch: int):
    if np.isfinite(loss_val):
        return
    culprit = _first_nonfinite_param(model)
    where = f"epoch {epoch}, batch {batch}"
    if culprit is not None:
        raise NumericError(
            f"non-finite loss at {where}; first non-finite parameter: {culprit}"
        )
    raise NumericError(f"non-finite loss at {where}; parameters are finite (loss overflow)")


def train(
    config: ModelConfig,
    dataset: SyntheticDataset,
    out_dir: str | None = None,
    stop_at_acc: float | None = None,
) -> TrainResult:
    """Train a fresh model on the dataset.

    When out_dir is given, writes config.json (canonical, every field
    explicit), metrics.csv (one row per epoch run) and checkpoint.lvlr.
    stop_at_acc, when set, ends training after the first epoch whose train
    accuracy reaches the threshold.
    """
    config.validate()
    dataset.check_config(config)
    model = Model(config)
    samples = dataset.samples()
    n = len(samples)

    writer = None
    csv_file = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
            f.write(config.to_canonical_json())
        csv_file = open(os.path.join(out_dir, "metrics.csv"), "w", newline="", encoding="utf-8")
        writer = csv.writer(csv_file)
        writer.writerow(METRIC_COLUMNS)

    metrics: list[EpochMetrics] = []
    try:
        for epoch in range(config.epochs):
            t0 = time.perf_counter()
            order = np.random.default_rng([config.seed, epoch]).permutation(n)
            epoch_loss, epoch_acc = _run_epoch(model, samples, order, epoch)
            wall_ms = (time.perf_counter() - t0) * 1000.0
            row = EpochMetrics(epoch, epoch_loss, epoch_acc, wall_ms)
            metrics.append(row)
            if writer is not None:
                writer.writerow(
                    [row.epoch, f"{row.train_loss:.10g}", f"{row.train_acc:.10g}", f"{row.wall_ms:.3f}"]
                )
            if stop_at_acc is not None and epoch_acc >= stop_at_acc:
                break
    finally:
        if csv_file is not None:
            csv_file.close()

    ckpt_path = None
    if out_dir is not None:
        ckpt_path = os.path.join(out_dir, "checkpoint.lvlr")
        save_checkpoint(ckpt_path, config, model.store)
    last = metrics[-1]
    return TrainResult(
        metrics=metrics,
        checkpoint_path=ckpt_path,
        final_acc=last.train_acc,
        final_loss=last.train_loss,
        model=model,
    )


def _run_epoch(model: Model, samples, order, epoch) -> tuple[float, float]:
    cfg = model.config
    n = len(samples)
    loss_sum = 0.0
    hits = 0
    for b, start in enumerate(range(0, n, cfg.batch_size)):
        idx = order[start : start + cfg.batch_size]
        model.store.zero_grads()
        batch_loss = None
        try:
            for i in idx:
                s = samples[int(i)]
                loss, scores = model.forward(s)
                if int(np.argmax(scores.data)) == model.target_of(s):
                    hits += 1
                loss_sum += float(loss.data)
                batch_loss = loss if batch_loss is None else batch_loss + loss
        except NumericError as e:
            # a forward pass can detect the blow-up before a loss exists;
            # attach the same diagnostics the loss check would have added
            culprit = _first_nonfinite_param(model)
            detail = (
                f"; first non-finite parameter: {culprit}"
                if culprit is not None
                else "; parameters are finite"
            )
            raise NumericError(f"{e} at epoch {epoch}, batch {b}{detail}") from e
        batch_loss = mul(batch_loss, 1.0 / len(idx))
        _check_finite(float(batch_loss.data), model, epoch, b)
        backward(batch_loss)
        adamw_step(model.store, cfg.lr, cfg.betas, cfg.eps, cfg.weight_decay)
    return loss_sum / n, hits / n


def evaluate(model: Model, dataset: SyntheticDataset) -> dict:
    """Mean loss and accuracy over a dataset, without recording gradients."""
    dataset.check_config(model.config)
    loss_sum = 0.0
    hits = 0
    n = len(dataset)
    with no_grad():
        for i in range(n):
            s = dataset.sample(i)
            loss, scores = model.forward(s)
            loss_sum += float(loss.data)
            if int(np.argmax(scores.data)) == model.target_of(s):
                hits += 1
    return {"n": n, "loss": loss_sum / n, "accuracy": hits / n}
