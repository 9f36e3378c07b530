"""KL-divergence training objective and the mini-batch training loops."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from respkit.errors import ContractError
from respkit.features import Spectrogram
from respkit.models import EmbeddingProvider, NetworkHandle, build_mlp_head

PROB_CLAMP = 1e-8  # predicted probabilities are clamped before the log


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 100
    lambda_reg: float = 0.0001
    learning_rate: float = 1e-4
    seed: int = 0
    optimizer: str = "Adam"
    average_kl: bool = True  # batch-mean the KL term (sum if False)

    def __post_init__(self):
        if self.optimizer != "Adam":
            raise ContractError(f"unsupported optimizer {self.optimizer!r}")


@dataclass
class TrainHistory:
    """Per-epoch loss bookkeeping; loss == kl + reg each epoch."""

    epochs: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)
    reg: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def append(self, epoch, loss, kl, reg, seconds):
        self.epochs.append(epoch)
        self.loss.append(loss)
        self.kl.append(kl)
        self.reg.append(reg)
        self.seconds.append(seconds)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", "kl", "reg", "seconds"])
            for row in zip(self.epochs, self.loss, self.kl, self.reg, self.seconds):
                writer.writerow(row)


def kl_loss(y, y_hat, theta_sq_norm=0.0, lambda_reg=0.0, average=False):
    """KL divergence between target and predicted rows plus an L2 penalty.

    sum_n sum_c y[n,c] * log(y[n,c] / y_hat[n,c]) + (lambda/2) * ||theta||^2,
    with 0 * log(0/q) taken as 0 and y_hat clamped at 1e-8. With
    `average=True` the KL term is divided by the batch size (the penalty
    is not). Works on torch tensors (differentiable) or numpy arrays.
    """
    if theta_sq_norm is None or (
        not torch.is_tensor(theta_sq_norm) and theta_sq_norm < 0
    ):
        raise ContractError("theta_sq_norm must be nonnegative")
    if torch.is_tensor(y) or torch.is_tensor(y_hat):
        y = torch.as_tensor(y, dtype=torch.float64) if not torch.is_tensor(y) else y
        y_hat = (
            torch.as_tensor(y_hat, dtype=y.dtype)
            if not torch.is_tensor(y_hat)
            else y_hat
        )
        if y.shape != y_hat.shape:
            raise ContractError("y and y_hat must have the same shape")
        # The clamp fixes the loss VALUE; the gradient follows the
        # unclamped log so saturated predictions keep a useful gradient
        # (d/dlogit of y*log(softmax) stays y*(1 - y_hat)).
        log_value = torch.log(torch.clamp(y_hat, min=PROB_CLAMP)).detach()
        log_grad = torch.log(torch.clamp(y_hat, min=1e-300))
        log_yhat = log_grad + (log_value - log_grad.detach())
        terms = torch.where(
            y > 0, y * (torch.log(torch.clamp(y, min=PROB_CLAMP)) - log_yhat),
            torch.zeros((), dtype=y.dtype),
        )
        kl = terms.sum()
        if average:
            kl = kl / y.shape[0]
        return kl + (lambda_reg / 2.0) * theta_sq_norm
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ContractError("y and y_hat must have the same shape")
    clamped = np.maximum(y_hat, PROB_CLAMP)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(y > 0, y * (np.log(np.maximum(y, PROB_CLAMP)) - np.log(clamped)), 0.0)
    kl = float(terms.sum())
    if average:
        kl /= y.shape[0]
    return kl + (lambda_reg / 2.0) * float(theta_sq_norm)


def weight_sq_norm(module: torch.nn.Module) -> torch.Tensor:
    """Sum of squared trainable parameters, excluding normalization layers."""
    total = torch.zeros((), dtype=torch.float64)
    for m in module.modules():
        if isinstance(m, (torch.nn.BatchNorm1d, torch.nn.BatchNorm2d,
                          torch.nn.LayerNorm, torch.nn.GroupNorm)):
            continue
        for p in m.parameters(recurse=False):
            if p.requires_grad:
                total = total + (p.double() ** 2).sum()
    return total


def _as_arrays(train_set):
    xs, ys = [], []
    for x, y in train_set:
        xs.append(x.values if isinstance(x, Spectrogram) else np.asarray(x))
        ys.append(np.asarray(y, dtype=np.float64))
    return np.stack(xs).astype(np.float32), np.stack(ys)


def train_model(
    net: NetworkHandle,
    train_set,
    cfg: TrainConfig,
    augmenters=None,
    max_steps: int | None = None,
    target_kl: float | None = None,
) -> tuple[NetworkHandle, TrainHistory]:
    """Mini-batch Adam training on the KL + L2 objective.

    `augmenters` is an optional callable (x_batch, y_batch, rng) -> (x, y)
    applied per batch. Deterministic given cfg.seed and single-worker data
    order. `max_steps` / `target_kl` allow bounded sanity runs; both are
    off by default.
    """
    if len(train_set) == 0:
        raise ContractError("training set must be nonempty")
    x_all, y_all = _as_arrays(train_set)
    history = TrainHistory()
    if cfg.epochs == 0:
        return net, history

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    module = net.module
    opt = torch.optim.Adam(module.parameters(), lr=cfg.learning_rate)
    n = len(x_all)
    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.time()
        module.train()
        perm = rng.permutation(n)
        kl_vals, reg_vals = [], []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            if augmenters is not None:
                xb, yb = augmenters(xb, yb, rng)
            x_t = net._to_tensor(xb)
            y_t = torch.as_tensor(yb, dtype=torch.float64)
            probs = module(x_t).double()
            kl = kl_loss(y_t, probs, average=cfg.average_kl)
            reg = (cfg.lambda_reg / 2.0) * weight_sq_norm(module)
            loss = kl + reg
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} batch {start // cfg.batch_size}: "
                    f"kl={float(kl)}, reg={float(reg)}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            kl_vals.append(float(kl.detach()))
            reg_vals.append(float(reg.detach()))
            step += 1
            if max_steps is not None and step >= max_steps:
                break
        mean_kl = float(np.mean(kl_vals))
        mean_reg = float(np.mean(reg_vals))
        history.append(epoch, mean_kl + mean_reg, mean_kl, mean_reg, time.time() - t0)
        if max_steps is not None and step >= max_steps:
            break
        if target_kl is not None and mean_kl < target_kl:
            break
    return net, history


def train_mlp_on_embeddings(
    provider: EmbeddingProvider, train_set, cfg: TrainConfig
) -> tuple[NetworkHandle, TrainHistory]:
    """Embed every training spectrogram once, then train the MLP head."""
    if len(train_set) == 0:
        raise ContractError("training set must be nonempty")
    specs = [x for x, _ in train_set]
    labels = [y for _, y in train_set]
    vectors = embed_in_batches(provider, specs)
    torch.manual_seed(cfg.seed)  # head init is part of the reproducible run
    head = build_mlp_head(provider.dim)
    return train_model(head, list(zip(vectors, labels)), cfg)


def embed_in_batches(provider, specs, batch_size: int = 64) -> np.ndarray:
    out = [
        provider.embed(specs[i : i + batch_size])
        for i in range(0, len(specs), batch_size)
    ]
    vectors = np.concatenate(out, axis=0)
    if vectors.shape[1] != provider.dim:
        raise ContractError(
            f"provider produced width {vectors.shape[1]}, declared dim {provider.dim}"
        )
    return vectors


def predict_in_batches(net: NetworkHandle, inputs, batch_size: int = 32) -> np.ndarray:
    arrs = [
        x.values if isinstance(x, Spectrogram) else np.asarray(x) for x in inputs
    ]
    x = np.stack(arrs).astype(np.float32)
    return np.concatenate(
        [net.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    )
