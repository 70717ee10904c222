"""SGD training loop with polynomial learning-rate decay.

The schedule is ``lr = lr_base * (1 - n_iter / m_total) ** 0.9``. The
optimizer is plain SGD with momentum and L2 weight decay folded into the
gradient. Patch batches are sampled online with a per-step derived RNG, so
a fixed seed reproduces the whole run and checkpoints resume bit-exactly.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
import torch

from .data import PatchBatch, extract_patches
from .errors import ConfigError, NumericsError
from .losses import LossConfig, denoise_loss
from .model import build, save_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    """Optimization protocol knobs; defaults follow the CT training recipe."""

    lr_base: float = 0.01
    lr_power: float = 0.9
    weight_decay: float = 1e-4
    momentum: float = 0.9
    epochs: int = 3000
    batch_size: int = 16
    patch_size: int = 64
    lambda_sobel: float = 0.1
    seed: int = 0
    steps_per_epoch: int = 0  # 0 derives it from dataset size / batch size
    checkpoint_every: int = 0  # steps between extra checkpoints; 0 = final only

    def validate(self):
        for name in ("lr_base", "lr_power"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("weight_decay", "momentum", "lambda_sobel"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("batch_size", "patch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        for name in ("epochs", "steps_per_epoch", "checkpoint_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        return self


def poly_lr(lr_base, n_iter, m_total, power=0.9):
    """Polynomial decay: ``lr_base * (1 - n_iter / m_total) ** power``."""
    if m_total <= 0:
        raise ValueError(f"m_total must be positive, got {m_total}")
    if n_iter < 0 or n_iter > m_total:
        raise ValueError(f"n_iter {n_iter} out of range [0, {m_total}]")
    return lr_base * (1.0 - n_iter / m_total) ** power


class SGD:
    """SGD with momentum; weight decay is added to the gradient as L2.

    Update: ``g <- grad + wd * p``; ``buf <- momentum * buf + g``;
    ``p <- p - lr * buf``.
    """

    def __init__(self, params, momentum=0.9, weight_decay=0.0):
        self.params = list(params)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.buffers = [torch.zeros_like(p) for p in self.params]

    @torch.no_grad()
    def step(self, lr):
        for p, buf in zip(self.params, self.buffers):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g.add(p, alpha=self.weight_decay)
            buf.mul_(self.momentum).add_(g)
            p.add_(buf, alpha=-lr)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_dict(self):
        return {
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "buffers": [b.clone() for b in self.buffers],
        }

    def load_state_dict(self, state):
        if len(state["buffers"]) != len(self.buffers):
            raise ValueError(
                f"optimizer state holds {len(state['buffers'])} buffers for "
                f"{len(self.buffers)} parameters"
            )
        self.momentum = float(state["momentum"])
        self.weight_decay = float(state["weight_decay"])
        for buf, saved in zip(self.buffers, state["buffers"]):
            buf.copy_(saved)


LOG_HEADER = ("step", "lr", "mae", "sobel", "total")


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    steps: int
    initial_loss: float
    final_loss: float


def _sample_batch(dataset, batch_size, patch_size, rng):
    """One training batch from volume pairs (online patches) or a fixed patch set."""
    if isinstance(dataset, PatchBatch):
        count = dataset.low.shape[0]
        if batch_size >= count:
            idx = np.arange(count)
        else:
            idx = rng.choice(count, size=batch_size, replace=False)
        return dataset.low[idx], dataset.full[idx]
    pair = dataset[int(rng.integers(0, len(dataset)))]
    batch = extract_patches(pair, size=patch_size, count=batch_size, rng=rng)
    return batch.low, batch.full


def dataset_slices(dataset):
    if isinstance(dataset, PatchBatch):
        return dataset.low.shape[0]
    return sum(pair.num_slices for pair in dataset)


def train(model_config, train_config, dataset, out_dir, total_steps=None,
          device="cpu", log_name="train_log.csv", checkpoint_name="checkpoint.pt"):
    """Run the training protocol and write a checkpoint plus a CSV step log.

    ``dataset`` is a list of VolumePair (patches sampled online per step)
    or a fixed PatchBatch. ``total_steps`` overrides the epoch-derived
    iteration budget; the learning-rate schedule always spans the run.
    """
    train_config.validate()
    if (isinstance(dataset, PatchBatch) and dataset.low.shape[0] == 0) or (
        not isinstance(dataset, PatchBatch) and len(dataset) == 0
    ):
        raise ValueError("training dataset is empty")

    os.makedirs(out_dir, exist_ok=True)
    model = build(model_config).to(device)
    optimizer = SGD(model.parameters(), momentum=train_config.momentum,
                    weight_decay=train_config.weight_decay)
    loss_config = LossConfig(lambda_sobel=train_config.lambda_sobel)

    steps_per_epoch = train_config.steps_per_epoch or max(
        1, dataset_slices(dataset) // train_config.batch_size
    )
    m_total = total_steps if total_steps is not None else train_config.epochs * steps_per_epoch

    log_path = os.path.join(out_dir, log_name)
    checkpoint_path = os.path.join(out_dir, checkpoint_name)
    initial_loss = float("nan")
    final_loss = float("nan")

    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        model.train()
        for step in range(m_total):
            rng = np.random.default_rng((train_config.seed, step))
            low, full = _sample_batch(dataset, train_config.batch_size,
                                      train_config.patch_size, rng)
            xb = torch.from_numpy(low).to(device)
            yb = torch.from_numpy(full).to(device)

            terms = denoise_loss(model(xb), yb, loss_config)
            if not torch.isfinite(terms.total):
                raise NumericsError(
                    f"non-finite loss at step {step}: mae={terms.mae.item()}, "
                    f"sobel={terms.sobel.item()}"
                )
            optimizer.zero_grad()
            terms.total.backward()
            lr = poly_lr(train_config.lr_base, step, m_total, train_config.lr_power)
            optimizer.step(lr)

            total = terms.total.item()
            writer.writerow([step, repr(lr), terms.mae.item(), terms.sobel.item(), total])
            if step == 0:
                initial_loss = total
            final_loss = total

            if train_config.checkpoint_every and (step + 1) % train_config.checkpoint_every == 0:
                save_checkpoint(
                    os.path.join(out_dir, f"checkpoint_step{step + 1:06d}.pt"),
                    model, model_config, step=step + 1,
                    optimizer_state=optimizer.state_dict(),
                )

    save_checkpoint(checkpoint_path, model, model_config, step=m_total,
                    optimizer_state=optimizer.state_dict())
    return TrainResult(
        checkpoint_path=checkpoint_path,
        log_path=log_path,
        steps=m_total,
        initial_loss=initial_loss,
        final_loss=final_loss,
    )
