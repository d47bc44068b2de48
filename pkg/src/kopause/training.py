"""Composite loss, learning-rate schedule, training loop and checkpoints."""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from kopause.config import Config, TrainConfig
from kopause.data import Batch, collate
from kopause.decoder import DecodeOutput
from kopause.encoder import length_mask
from kopause.errors import CheckpointError, NumericError, ShapeError
from kopause.model import PauseTTS
from kopause.text import SymbolTable

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def lr_schedule(iteration: int, schedule: Sequence[tuple[int, float]] = TrainConfig().lr_schedule) -> float:
    """Piecewise-constant rate; the last entry holds forever."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    lr = schedule[0][1]
    for start, value in schedule:
        if iteration >= start:
            lr = value
    return lr


@dataclass
class LossBreakdown:
    mel_pre: torch.Tensor
    mel_post: torch.Tensor
    gate: torch.Tensor
    tpgst: torch.Tensor
    total: torch.Tensor  # float64
    lambda_tpgst: float

    def detached(self) -> "LossBreakdown":
        return LossBreakdown(
            self.mel_pre.detach(), self.mel_post.detach(), self.gate.detach(), self.tpgst.detach(),
            self.total.detach(), self.lambda_tpgst,
        )

    def to_dict(self) -> dict:
        return {
            "mel_pre": self.mel_pre.item(),
            "mel_post": self.mel_post.item(),
            "gate": self.gate.item(),
            "tpgst": self.tpgst.item(),
            "total": self.total.item(),
            "lambda": self.lambda_tpgst,
        }


def gate_targets(mel_lengths: torch.Tensor, n_frames: int, dtype=torch.float32) -> torch.Tensor:
    """1 on the last valid frame of each item, 0 elsewhere."""
    g = torch.zeros(len(mel_lengths), n_frames, dtype=dtype)
    g[torch.arange(len(mel_lengths)), mel_lengths - 1] = 1.0
    return g


def _finite(x: torch.Tensor, name: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise NumericError(f"{name} loss")
    return x


def compute_loss(
    decode: DecodeOutput,
    target_mel: torch.Tensor,
    target_gates: torch.Tensor,
    tae: torch.Tensor,
    tpae: torch.Tensor,
    lambda_tpgst: float = 0.3,
    mel_lengths: torch.Tensor | None = None,
    gate_loss: str = "bce",
    gate_pos_weight: float = 1.0,
) -> LossBreakdown:
    """mel MSE before and after the post-net, gate loss, and L1 between TAE and TPAE.

    The TAE is detached here, so the TP-GST term sends no gradient into the
    reference path.
    """
    B, T_out, n = decode.mel_pre.shape
    if target_mel.shape[0] != B or target_mel.shape[2] != n or target_mel.shape[1] > T_out:
        raise ShapeError(f"target mel {tuple(target_mel.shape)} vs decoder output {tuple(decode.mel_pre.shape)}")
    if tae.shape != tpae.shape:
        raise ShapeError(f"TAE {tuple(tae.shape)} vs TPAE {tuple(tpae.shape)}")
    T = target_mel.shape[1]
    if mel_lengths is None:
        mel_lengths = torch.full((B,), T, dtype=torch.long)
    mask = length_mask(mel_lengths, T).to(decode.mel_pre.dtype)
    n_valid = mask.sum()

    def mse(pred):
        return (((pred[:, :T] - target_mel) ** 2).mean(-1) * mask).sum() / n_valid

    mel_pre = _finite(mse(decode.mel_pre), "mel_pre")
    mel_post = _finite(mse(decode.mel_post), "mel_post")
    logits = decode.gate_logits[:, :T]
    if target_gates.shape != logits.shape:
        raise ShapeError(f"gate targets {tuple(target_gates.shape)} vs logits {tuple(logits.shape)}")
    if gate_loss == "bce":
        pw = torch.tensor(gate_pos_weight, dtype=logits.dtype)
        per = F.binary_cross_entropy_with_logits(logits, target_gates.to(logits.dtype), pos_weight=pw, reduction="none")
    else:
        per = (torch.sigmoid(logits) - target_gates.to(logits.dtype)) ** 2
    gate = _finite((per * mask).sum() / n_valid, "gate")
    tpgst = _finite((tae.detach() - tpae).abs().mean(), "tpgst")
    total = mel_pre.double() + mel_post.double() + gate.double() + lambda_tpgst * tpgst.double()
    return LossBreakdown(mel_pre, mel_post, gate, tpgst, total, lambda_tpgst)


def batch_loss(model: PauseTTS, batch: Batch, train_cfg: TrainConfig, generator=None, lambda_tpgst=None):
    out = model(batch.ids, batch.id_lengths, batch.mels, batch.mel_lengths, generator)
    gates = gate_targets(batch.mel_lengths, batch.mels.shape[1], batch.mels.dtype)
    lam = train_cfg.lambda_tpgst if lambda_tpgst is None else lambda_tpgst
    loss = compute_loss(
        out.decode, batch.mels, gates, out.tae, out.tpae, lam, batch.mel_lengths,
        train_cfg.gate_loss, train_cfg.gate_pos_weight,
    )
    return loss, out


def step_generator(seed: int, iteration: int) -> torch.Generator:
    """Per-iteration generator for dropout and attention noise, so resumed runs replay exactly."""
    return torch.Generator().manual_seed((seed * 1_000_003 + iteration) % (2**63))


@dataclass
class StepResult:
    iteration: int
    lr: float
    loss: LossBreakdown
    grad_norm: float
    skipped: bool

    def to_record(self) -> dict:
        return {"iteration": self.iteration, "lr": self.lr, **self.loss.to_dict(),
                "grad_norm": self.grad_norm, "skipped": self.skipped}


class Trainer:
    """Single-writer training loop over cached (ids, mel) utterances."""

    def __init__(
        self,
        config: Config,
        table: SymbolTable,
        items: Sequence[tuple[Sequence[int], np.ndarray]],
        model: PauseTTS | None = None,
        dtype: torch.dtype = torch.float32,
        lambda_tpgst: float | None = None,
    ):
        self.config = config
        self.table = table
        self.items = list(items)
        self.dtype = dtype
        tc = config.train
        self.lambda_tpgst = tc.lambda_tpgst if lambda_tpgst is None else lambda_tpgst
        if model is None:
            torch.manual_seed(tc.seed)
            model = PauseTTS(config, len(table))
        self.model = model.to(dtype)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(), lr=lr_schedule(0, tc.lr_schedule), betas=tc.betas,
            eps=tc.eps, weight_decay=tc.weight_decay,
        )
        self.iteration = 0

    def batch_indices(self, iteration: int) -> list[int]:
        n, bs = len(self.items), min(self.config.train.batch_size, len(self.items))
        per_epoch = math.ceil(n / bs)
        epoch, j = divmod(iteration, per_epoch)
        order = np.random.default_rng([self.config.train.seed, epoch]).permutation(n)
        return sorted(order[j * bs : (j + 1) * bs].tolist())

    def make_batch(self, indices: Sequence[int]) -> Batch:
        return collate([self.items[i] for i in indices], self.dtype)

    def train_step(self, batch: Batch, iteration: int | None = None) -> StepResult:
        iteration = self.iteration if iteration is None else iteration
        tc = self.config.train
        lr = lr_schedule(iteration, tc.lr_schedule)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.model.train()
        loss, _ = batch_loss(self.model, batch, tc, step_generator(tc.seed, iteration), self.lambda_tpgst)
        self.optimizer.zero_grad(set_to_none=True)
        loss.total.backward()
        norm = float(torch.nn.utils.clip_grad_norm_(self.model.parameters(), tc.grad_clip))
        skipped = not math.isfinite(norm)
        if skipped:
            log.warning("iteration %d: non-finite gradient norm, step skipped", iteration)
            self.optimizer.zero_grad(set_to_none=True)
        else:
            self.optimizer.step()
        return StepResult(iteration, lr, loss.detached(), norm, skipped)

    def run(
        self,
        iterations: int,
        log_file=None,
        checkpoint_dir: str | Path | None = None,
        checkpoint_interval: int | None = None,
        callback: Callable[[StepResult], None] | None = None,
    ) -> list[StepResult]:
        """Train until ``self.iteration == iterations``; returns the step results of this call."""
        interval = checkpoint_interval or self.config.train.checkpoint_interval
        results = []
        while self.iteration < iterations:
            res = self.train_step(self.make_batch(self.batch_indices(self.iteration)))
            self.iteration += 1
            results.append(res)
            if log_file is not None:
                log_file.write(json.dumps(res.to_record()) + "\n")
                log_file.flush()
            if callback is not None:
                callback(res)
            if checkpoint_dir is not None and (self.iteration % interval == 0 or self.iteration == iterations):
                save_checkpoint(Path(checkpoint_dir) / f"checkpoint_{self.iteration:08d}.pt", self)
        return results


# --- checkpoints -----------------------------------------------------------


@dataclass
class Checkpoint:
    iteration: int
    model_state: dict
    optimizer_state: dict | None
    config: Config
    table: SymbolTable
    rng_state: torch.Tensor | None
    dtype: str = "float32"

    def build_model(self) -> PauseTTS:
        model = PauseTTS(self.config, len(self.table)).to(getattr(torch, self.dtype))
        model.load_state_dict(self.model_state)
        return model


def save_checkpoint(path: str | Path, trainer: Trainer) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "iteration": trainer.iteration,
        "model_state": trainer.model.state_dict(),
        "optimizer_state": trainer.optimizer.state_dict(),
        "config": trainer.config.to_dict(),
        "symbols": list(trainer.table.symbols),
        "rng_state": torch.get_rng_state(),
        "dtype": str(trainer.dtype).removeprefix("torch."),
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | Path, table: SymbolTable | None = None) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_VERSION:
        found = payload.get("format_version") if isinstance(payload, dict) else None
        raise CheckpointError(f"{path}: unsupported checkpoint format version {found!r}")
    ck_table = SymbolTable(payload["symbols"])
    if table is not None and table != ck_table:
        raise CheckpointError(f"{path}: symbol table differs from the one supplied")
    return Checkpoint(
        iteration=payload["iteration"],
        model_state=payload["model_state"],
        optimizer_state=payload["optimizer_state"],
        config=Config.from_dict(payload["config"]),
        table=ck_table,
        rng_state=payload["rng_state"],
        dtype=payload.get("dtype", "float32"),
    )


def latest_checkpoint(directory: str | Path) -> Path | None:
    found = sorted(Path(directory).glob("checkpoint_*.pt"))
    return found[-1] if found else None


def resume_trainer(ck: Checkpoint, items) -> Trainer:
    trainer = Trainer(ck.config, ck.table, items, model=ck.build_model(), dtype=getattr(torch, ck.dtype))
    if ck.optimizer_state is not None:
        trainer.optimizer.load_state_dict(ck.optimizer_state)
    if ck.rng_state is not None:
        torch.set_rng_state(ck.rng_state)
    trainer.iteration = ck.iteration
    return trainer
