"""Text encoder: symbol embedding, CBHL, and the text-predicted acoustic embedding head."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from kopause.config import EncoderConfig
from kopause.errors import NumericError, ShapeError


def length_mask(lengths: torch.Tensor, max_len: int | None = None) -> torch.Tensor:
    """Boolean (B, T) mask, True on valid positions."""
    max_len = int(lengths.max()) if max_len is None else max_len
    return torch.arange(max_len, device=lengths.device)[None, :] < lengths[:, None]


def check_finite(x: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise NumericError(where)
    return x


@dataclass
class TextMemory:
    sequence: torch.Tensor  # (B, T, M), zero beyond lengths
    lengths: torch.Tensor  # (B,) long

    @property
    def mask(self) -> torch.Tensor:
        return length_mask(self.lengths, self.sequence.shape[1])


class SymbolEmbedding(nn.Embedding):
    def __init__(self, n_symbols: int, dim: int):
        super().__init__(n_symbols, dim, padding_idx=0)
        nn.init.normal_(self.weight, 0.0, 0.3)
        with torch.no_grad():
            self.weight[0].zero_()

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.num_embeddings):
            raise IndexError(f"symbol ids must lie in [0, {self.num_embeddings})")
        return super().forward(ids)


class Highway(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.H = nn.Linear(dim, dim)
        self.T = nn.Linear(dim, dim)
        nn.init.constant_(self.T.bias, -1.0)

    def forward(self, x):
        t = torch.sigmoid(self.T(x))
        return F.relu(self.H(x)) * t + x * (1.0 - t)


def _masked(x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    # x: (B, C, T), mask: (B, T)
    return x * mask[:, None, :].to(x.dtype)


class CBHL(nn.Module):
    """Conv bank (widths 1..K) -> max-pool -> residual projections -> highways -> BiLSTM.

    Padded positions are zeroed between stages so a batch item gives the same
    result whatever the padding length.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        d = cfg.embedding_dim
        self.bank = nn.ModuleList(nn.Conv1d(d, cfg.bank_channels, k) for k in range(1, cfg.bank_widths + 1))
        w = cfg.projection_width
        self.proj1 = nn.Conv1d(cfg.bank_widths * cfg.bank_channels, cfg.projection_channels, w, padding=w // 2)
        self.proj2 = nn.Conv1d(cfg.projection_channels, d, w, padding=w // 2)
        self.highways = nn.ModuleList(Highway(d) for _ in range(cfg.highway_layers))
        self.rnn = nn.LSTM(d, cfg.rnn_units, batch_first=True, bidirectional=True)

    def forward(self, embedded: torch.Tensor, lengths: torch.Tensor) -> TextMemory:
        check_finite(embedded, "cbhl.input")
        B, T, _ = embedded.shape
        mask = length_mask(lengths, T)
        x = _masked(embedded.transpose(1, 2), mask)
        outs = []
        for conv in self.bank:
            k = conv.kernel_size[0]
            outs.append(F.relu(conv(F.pad(x, ((k - 1) // 2, k // 2)))))
        y = _masked(torch.cat(outs, dim=1), mask)
        check_finite(y, "cbhl.bank")
        # width-2 stride-1 pool; right pad of 0 is neutral after ReLU
        y = F.max_pool1d(F.pad(y, (0, 1)), kernel_size=2, stride=1)
        y = _masked(F.relu(self.proj1(_masked(y, mask))), mask)
        y = self.proj2(y) + x
        y = y.transpose(1, 2)
        for hw in self.highways:
            y = hw(y)
        check_finite(y, "cbhl.highway")
        packed = pack_padded_sequence(y, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, _ = self.rnn(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=T)
        return TextMemory(check_finite(out, "cbhl.rnn"), lengths)


class TPAEHead(nn.Module):
    """Conv -> time-aggregating GRU (final valid state) -> K fully-connected layers -> tanh."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        w = cfg.tpae_conv_width
        self.conv = nn.Conv1d(cfg.memory_dim, cfg.tpae_conv_channels, w, padding=w // 2)
        self.rnn = nn.GRU(cfg.tpae_conv_channels, cfg.tpae_rnn_units, batch_first=True)
        layers = []
        width = cfg.tpae_rnn_units
        for _ in range(cfg.tpae_fc_layers - 1):
            layers += [nn.Linear(width, width), nn.ReLU()]
        layers.append(nn.Linear(width, cfg.acoustic_dim))
        self.fc = nn.Sequential(*layers)

    def forward(self, memory: TextMemory) -> torch.Tensor:
        if int(memory.lengths.min()) < 1:
            raise ShapeError("cannot predict an acoustic embedding from an empty sequence")
        mask = memory.mask
        x = _masked(F.relu(self.conv(_masked(memory.sequence.transpose(1, 2), mask))), mask)
        packed = pack_padded_sequence(x.transpose(1, 2), memory.lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, h = self.rnn(packed)
        return torch.tanh(self.fc(h[-1]))


def condition_memory(memory: TextMemory, embedding: torch.Tensor) -> TextMemory:
    """Append the acoustic embedding to every valid memory row; padded rows stay zero."""
    seq = memory.sequence
    if embedding.dim() == 1:
        embedding = embedding.expand(seq.shape[0], -1)
    if embedding.shape[0] != seq.shape[0]:
        raise ShapeError(f"embedding batch {embedding.shape[0]} != memory batch {seq.shape[0]}")
    check_finite(embedding, "acoustic embedding")
    tiled = embedding[:, None, :].expand(-1, seq.shape[1], -1) * memory.mask[..., None].to(seq.dtype)
    return TextMemory(torch.cat([seq, tiled], dim=-1), memory.lengths)
