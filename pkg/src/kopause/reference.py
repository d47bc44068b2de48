"""Reference encoder and style-token attention producing the target acoustic embedding (TAE)."""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from kopause.config import ReferenceConfig
from kopause.encoder import check_finite


def _halve(n):
    # output length of a 3-wide, stride-2, pad-1 conv
    return (n + 1) // 2


def reduced_length(n: int | torch.Tensor, layers: int = 6):
    for _ in range(layers):
        n = _halve(n)
    return n


class ReferenceEncoder(nn.Module):
    """Six stride-2 3x3 convs over the mel image, then a GRU; returns the final valid state."""

    def __init__(self, cfg: ReferenceConfig, n_mels: int = 80):
        super().__init__()
        self.cfg = cfg
        chans = (1,) + tuple(cfg.conv_channels)
        self.convs = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1) for i in range(len(cfg.conv_channels))
        )
        self.out_bands = reduced_length(n_mels, len(cfg.conv_channels))
        self.rnn = nn.GRU(chans[-1] * self.out_bands, cfg.rnn_units, batch_first=True)

    def forward(self, mels: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        """mels: (B, T, n_mels) -> (B, rnn_units)."""
        check_finite(mels, "reference.input")
        B, T, _ = mels.shape
        if lengths is None:
            lengths = torch.full((B,), T, dtype=torch.long)
        if T < self.cfg.min_frames:
            mels = F.pad(mels, (0, 0, 0, self.cfg.min_frames - T))
        x = mels.unsqueeze(1)
        for conv in self.convs:
            x = F.relu(conv(x))
        # (B, C, T', bands') -> (B, T', C * bands')
        x = x.permute(0, 2, 1, 3).flatten(2)
        steps = reduced_length(torch.clamp(lengths, min=self.cfg.min_frames), len(self.convs))
        packed = pack_padded_sequence(x, steps.cpu(), batch_first=True, enforce_sorted=False)
        _, h = self.rnn(packed)
        return h[-1]


class StyleTokenLayer(nn.Module):
    """Multi-head attention of a reference summary over tanh-bounded style tokens.

    Values are the tanh(token) slices themselves, so every output component is a
    convex combination of numbers in (-1, 1).
    """

    def __init__(self, cfg: ReferenceConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.head_dim = cfg.acoustic_dim // cfg.n_heads
        self.tokens = nn.Parameter(torch.randn(cfg.n_tokens, cfg.acoustic_dim) * 0.5)
        self.query = nn.Linear(cfg.rnn_units, cfg.acoustic_dim, bias=False)
        self.key = nn.Linear(cfg.acoustic_dim, cfg.acoustic_dim, bias=False)

    def forward(self, summary: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (TAE of shape (B, D), attention weights of shape (B, heads, n_tokens))."""
        B = summary.shape[0]
        values = torch.tanh(self.tokens)  # (N, D)
        N = values.shape[0]
        q = self.query(summary).view(B, self.n_heads, 1, self.head_dim)
        k = self.key(values).view(N, self.n_heads, self.head_dim).transpose(0, 1)  # (H, N, d)
        scores = (q @ k.transpose(1, 2).unsqueeze(0)).squeeze(2) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)  # (B, H, N)
        v = values.view(N, self.n_heads, self.head_dim).transpose(0, 1)  # (H, N, d)
        out = torch.einsum("bhn,hnd->bhd", weights, v).reshape(B, -1)
        return out, weights


class TPGSTReference(nn.Module):
    def __init__(self, cfg: ReferenceConfig, n_mels: int = 80):
        super().__init__()
        self.encoder = ReferenceEncoder(cfg, n_mels)
        self.tokens = StyleTokenLayer(cfg)

    def forward(self, mels: torch.Tensor, lengths: torch.Tensor | None = None) -> torch.Tensor:
        tae, _ = self.tokens(self.encoder(mels, lengths))
        return tae
