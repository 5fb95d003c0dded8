"""Training loop: phased learning-rate schedule, per-epoch patch sampling,
loss logging, and checkpointing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cube import HsiCube
from .errors import InputError, TrainingError
from .network import Network
from .optim import TrainConfig, apply_l2, euclidean_loss, nadam_step, save_checkpoint
from .sampling import sample_patches

log = logging.getLogger(__name__)

LOG_EVERY = 10  # loss-log cadence in steps


@dataclass
class TrainResult:
    steps: int
    epochs: int
    history: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    initial_loss: float = float("nan")
    final_loss: float = float("nan")


def _eval_loss(net: Network, inputs: np.ndarray, targets: np.ndarray,
               batch_size: int = 8) -> float:
    total, count = 0.0, 0
    for i in range(0, inputs.shape[0], batch_size):
        pred = net.predict(inputs[i : i + batch_size])
        t = targets[i : i + batch_size]
        total += float(np.sum((pred.astype(np.float64) - t) ** 2))
        count += t.size
    return total / count


def train_on_patches(
    net: Network,
    inputs: np.ndarray,
    targets: np.ndarray,
    steps: int,
    lr: float,
    cfg: TrainConfig,
    rng: np.random.Generator,
    start_step: int = 0,
) -> TrainResult:
    """Optimize on a fixed patch tensor for a given number of steps.

    Batches cycle through a per-epoch shuffle; inference-mode loss on the full
    set is recorded before and after.
    """
    n = inputs.shape[0]
    result = TrainResult(steps=steps, epochs=0)
    result.initial_loss = _eval_loss(net, inputs, targets)
    order = rng.permutation(n)
    pos = 0
    t = start_step
    for _ in range(steps):
        if pos + cfg.batch_size > n:
            order = rng.permutation(n)
            pos = 0
        take = order[pos : pos + cfg.batch_size] if n > cfg.batch_size else slice(None)
        pos += cfg.batch_size
        xb, yb = inputs[take], targets[take]
        t += 1
        net.store.zero_grads()
        pred = net.forward(xb, training=True, rng=rng)
        loss, grad = euclidean_loss(pred, yb)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {t}")
        net.backward(grad)
        apply_l2(net.store, cfg.l2_coeff)
        nadam_step(net.store, lr, cfg.beta1, cfg.beta2, cfg.epsilon, t)
        if t % LOG_EVERY == 0 or t == start_step + steps:
            result.history.append({"step": t, "epoch": 0, "lr": lr, "loss": loss})
    result.final_loss = _eval_loss(net, inputs, targets)
    return result


def train(
    net: Network,
    dataset: list[tuple[str, np.ndarray, HsiCube]],
    cfg: TrainConfig,
    out_dir: Path | None = None,
) -> TrainResult:
    """Full training run over (image_id, input image, target cube) triples.

    Each epoch samples cfg.patches_per_image fresh patches per image with an
    rng derived from (seed, epoch, image index), so runs are deterministic
    regardless of iteration order or worker count. Checkpoints are written at
    every schedule phase end; on a non-finite loss the run aborts, retaining
    the last epoch-start snapshot as checkpoint_last_good.
    """
    cfg.validate()
    if not dataset:
        raise InputError("training dataset is empty")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    spec_hash = net.spec.spec_hash()
    ckpt_extra = {"spec_config": net.spec.to_config_text()}
    result = TrainResult(steps=0, epochs=0)
    dropout_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.rng_seed, 0xD0]).generate_state(4)
    )
    order_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.rng_seed, 0x5F]).generate_state(4)
    )

    t = 0
    epoch_global = 0
    snapshot = None
    try:
        for phase_idx, (n_epochs, lr) in enumerate(cfg.lr_schedule):
            for _ in range(n_epochs):
                epoch_global += 1
                snapshot = {p.name: p.value.copy() for p in net.store.params()}
                batches_x, batches_y = _sample_epoch(dataset, cfg, epoch_global, order_rng)
                for xb, yb in zip(batches_x, batches_y):
                    t += 1
                    net.store.zero_grads()
                    pred = net.forward(xb, training=True, rng=dropout_rng)
                    loss, grad = euclidean_loss(pred, yb)
                    if not np.isfinite(loss):
                        raise TrainingError(f"non-finite loss at step {t}")
                    net.backward(grad)
                    apply_l2(net.store, cfg.l2_coeff)
                    nadam_step(net.store, lr, cfg.beta1, cfg.beta2, cfg.epsilon, t)
                    last_row = {"step": t, "epoch": epoch_global, "lr": lr, "loss": loss}
                    if t % LOG_EVERY == 0:
                        result.history.append(last_row)
            if out_dir is not None:
                path = out_dir / f"checkpoint_epoch{epoch_global}.ckpt"
                save_checkpoint(path, net.store, spec_hash, t, extra=ckpt_extra)
                result.checkpoints.append(path)
    except TrainingError:
        if out_dir is not None and snapshot is not None:
            for p in net.store.params():
                p.value = snapshot[p.name]
            path = out_dir / "checkpoint_last_good.ckpt"
            save_checkpoint(path, net.store, spec_hash, t, extra=ckpt_extra)
            result.checkpoints.append(path)
            log.error("training aborted; last good checkpoint saved to %s", path)
        raise

    result.steps = t
    result.epochs = epoch_global
    if t and (not result.history or result.history[-1]["step"] != t):
        result.history.append(last_row)  # the final step is always logged
    if out_dir is not None:
        path = out_dir / "checkpoint_final.ckpt"
        save_checkpoint(path, net.store, spec_hash, t, extra=ckpt_extra)
        result.checkpoints.append(path)
    return result


def _sample_epoch(dataset, cfg: TrainConfig, epoch: int, order_rng: np.random.Generator):
    """Fresh patches for one epoch, shuffled and cut into batches."""
    sets = []
    for img_idx, (image_id, input_img, target_cube) in enumerate(dataset):
        rng = np.random.default_rng(
            np.random.SeedSequence([cfg.rng_seed, epoch, img_idx]).generate_state(4)
        )
        sets.append(
            sample_patches(input_img, target_cube, cfg.patches_per_image, rng,
                           augment_patches=cfg.augment, source_id=image_id)
        )
    inputs = np.concatenate([s.inputs for s in sets])
    targets = np.concatenate([s.targets for s in sets])
    order = order_rng.permutation(inputs.shape[0])
    inputs, targets = inputs[order], targets[order]
    nb = inputs.shape[0] // cfg.batch_size
    if nb == 0:
        return [inputs], [targets]
    xb = [inputs[i * cfg.batch_size : (i + 1) * cfg.batch_size] for i in range(nb)]
    yb = [targets[i * cfg.batch_size : (i + 1) * cfg.batch_size] for i in range(nb)]
    return xb, yb


def write_loss_log(path, history: list[dict]) -> None:
    lines = ["step,epoch,lr,loss"]
    for row in history:
        lines.append(f"{row['step']},{row['epoch']},{row['lr']:.9g},{row['loss']:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")
