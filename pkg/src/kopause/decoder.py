"""Autoregressive mel decoder with stepwise monotonic attention, pre-net, post-net and stop gate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from kopause.config import DecoderConfig
from kopause.encoder import TextMemory, check_finite, length_mask
from kopause.errors import ShapeError

SOFT = "soft-train"
HARD = "hard-infer"


def sma_transition(alpha_prev: torch.Tensor, p_move: torch.Tensor) -> torch.Tensor:
    """alpha_i = alpha_i * (1 - p_i) + alpha_{i-1} * p_{i-1}.

    Mass is conserved as long as ``p_move`` is zero at the last valid position.
    """
    moved = alpha_prev * p_move
    return alpha_prev - moved + F.pad(moved[:, :-1], (1, 0))


def initial_alignment(batch: int, length: int, dtype=torch.float32, device=None) -> torch.Tensor:
    alpha = torch.zeros(batch, length, dtype=dtype, device=device)
    alpha[:, 0] = 1.0
    return alpha


def movable_mask(lengths: torch.Tensor, max_len: int) -> torch.Tensor:
    """True where the alignment may still advance (every valid position but the last)."""
    return length_mask(lengths - 1, max_len)


def sma_step(
    energy: torch.Tensor,
    alpha_prev: torch.Tensor,
    movable: torch.Tensor,
    mode: str = SOFT,
    noise_scale: float = 0.0,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Advance the alignment one decoder step.

    ``energy`` holds per-position move energies. In soft mode Gaussian noise is
    added before the sigmoid; in hard mode the move probability is thresholded
    at 0.5 so a one-hot alignment stays one-hot.
    """
    if mode == SOFT:
        if noise_scale > 0:
            energy = energy + noise_scale * torch.randn(
                energy.shape, generator=generator, dtype=energy.dtype, device=energy.device
            )
        p = torch.sigmoid(energy)
    elif mode == HARD:
        p = (energy > 0).to(alpha_prev.dtype)
    else:
        raise ValueError(f"unknown attention mode {mode!r}")
    return sma_transition(alpha_prev, p * movable.to(p.dtype))


class StepwiseMonotonicAttention(nn.Module):
    """Additive move energy ``v . tanh(W q + V h_i) + r`` feeding :func:`sma_step`."""

    def __init__(self, query_dim: int, memory_dim: int, attention_dim: int, bias_init: float = -1.5):
        super().__init__()
        self.query_layer = nn.Linear(query_dim, attention_dim, bias=False)
        self.memory_layer = nn.Linear(memory_dim, attention_dim, bias=True)
        self.v = nn.Linear(attention_dim, 1, bias=False)
        self.r = nn.Parameter(torch.tensor(float(bias_init)))

    def process_memory(self, memory: torch.Tensor) -> torch.Tensor:
        return self.memory_layer(memory)

    def energy(self, query: torch.Tensor, processed_memory: torch.Tensor) -> torch.Tensor:
        e = self.v(torch.tanh(self.query_layer(query)[:, None, :] + processed_memory)).squeeze(-1)
        return e + self.r


class Prenet(nn.Module):
    """Linear+ReLU layers with dropout that stays on at inference."""

    def __init__(self, in_dim: int, sizes: tuple[int, ...], dropout: float = 0.5):
        super().__init__()
        dims = (in_dim,) + tuple(sizes)
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims, dims[1:]))
        self.dropout = dropout

    def forward(self, x: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
        for layer in self.layers:
            x = F.relu(layer(x))
            if self.dropout > 0:
                keep = 1.0 - self.dropout
                mask = torch.rand(x.shape, generator=generator, dtype=x.dtype, device=x.device) < keep
                x = x * mask.to(x.dtype) / keep
        return x


class Postnet(nn.Module):
    """Conv stack predicting a residual; tanh on all but the last layer."""

    def __init__(self, n_mels: int, channels: int = 512, layers: int = 5, width: int = 5):
        super().__init__()
        dims = [n_mels] + [channels] * (layers - 1) + [n_mels]
        self.convs = nn.ModuleList(nn.Conv1d(a, b, width, padding=width // 2) for a, b in zip(dims, dims[1:]))

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        """(B, T, n_mels) -> residual of the same shape."""
        x = mel.transpose(1, 2)
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = torch.tanh(x)
        return x.transpose(1, 2)


@dataclass
class DecodeOutput:
    mel_pre: torch.Tensor  # (B, T_mel, n_mels)
    mel_post: torch.Tensor
    gate_logits: torch.Tensor  # (B, T_mel)
    alignments: torch.Tensor  # (B, T_mel, T_text)
    stop_reason: str | None = None

    @property
    def n_frames(self) -> int:
        return self.mel_pre.shape[1]


class Decoder(nn.Module):
    def __init__(self, cfg: DecoderConfig, memory_dim: int, n_mels: int = 80):
        super().__init__()
        self.cfg = cfg
        self.n_mels = n_mels
        r = cfg.reduction_factor
        self.prenet = Prenet(n_mels * r, cfg.prenet_sizes, cfg.prenet_dropout)
        pre_out = cfg.prenet_sizes[-1]
        self.attention_rnn = nn.LSTMCell(pre_out + memory_dim, cfg.attention_rnn_units)
        self.attention = StepwiseMonotonicAttention(
            cfg.attention_rnn_units, memory_dim, cfg.attention_dim, cfg.sma_bias_init
        )
        self.decoder_rnn = nn.LSTMCell(cfg.attention_rnn_units + memory_dim, cfg.decoder_rnn_units)
        self.frame_proj = nn.Linear(cfg.decoder_rnn_units + memory_dim, n_mels * r)
        self.gate_proj = nn.Linear(cfg.decoder_rnn_units + memory_dim, r)
        self.postnet = Postnet(n_mels, cfg.postnet_channels, cfg.postnet_layers, cfg.postnet_width)

    def _init_state(self, memory: TextMemory):
        seq = memory.sequence
        B, T, M = seq.shape
        z = lambda n: seq.new_zeros(B, n)  # noqa: E731
        return {
            "att": (z(self.cfg.attention_rnn_units), z(self.cfg.attention_rnn_units)),
            "dec": (z(self.cfg.decoder_rnn_units), z(self.cfg.decoder_rnn_units)),
            "alpha": initial_alignment(B, T, seq.dtype, seq.device),
            "context": seq.new_zeros(B, M),
            "processed": self.attention.process_memory(seq),
            "movable": movable_mask(memory.lengths, T),
        }

    def _step(self, prev_frames, state, memory: TextMemory, mode: str, generator):
        pre = self.prenet(prev_frames, generator)
        att_h, att_c = self.attention_rnn(torch.cat([pre, state["context"]], -1), state["att"])
        energy = self.attention.energy(att_h, state["processed"])
        noise = self.cfg.sma_noise if mode == SOFT else 0.0
        alpha = sma_step(energy, state["alpha"], state["movable"], mode, noise, generator)
        context = torch.bmm(alpha[:, None, :], memory.sequence).squeeze(1)
        dec_h, dec_c = self.decoder_rnn(torch.cat([att_h, context], -1), state["dec"])
        out = torch.cat([dec_h, context], -1)
        state.update(att=(att_h, att_c), dec=(dec_h, dec_c), alpha=alpha, context=context)
        return self.frame_proj(out), self.gate_proj(out), alpha

    def _finish(self, frames, gates, alphas, stop_reason=None) -> DecodeOutput:
        B = frames[0].shape[0]
        r = self.cfg.reduction_factor
        mel_pre = torch.stack(frames, 1).view(B, -1, self.n_mels)
        gate = torch.stack(gates, 1).reshape(B, -1)
        align = torch.stack(alphas, 1).repeat_interleave(r, dim=1)
        mel_post = mel_pre + self.postnet(mel_pre)
        check_finite(mel_post, "decoder.postnet")
        return DecodeOutput(mel_pre, mel_post, gate, align, stop_reason)

    def teacher_forced(
        self, memory: TextMemory, target: torch.Tensor, generator: torch.Generator | None = None, mode: str = SOFT
    ) -> DecodeOutput:
        """Decode against ground-truth frames; output length is the target length rounded up to r."""
        B, T, n = target.shape
        if n != self.n_mels or B != memory.sequence.shape[0]:
            raise ShapeError(f"target of shape {tuple(target.shape)} does not match memory/decoder")
        r = self.cfg.reduction_factor
        if T < r:
            raise ShapeError(f"need at least {r} target frames")
        steps = math.ceil(T / r)
        target = F.pad(target, (0, 0, 0, steps * r - T))
        inputs = target.reshape(B, steps, n * r)
        inputs = torch.cat([inputs.new_zeros(B, 1, n * r), inputs[:, :-1]], 1)
        state = self._init_state(memory)
        frames, gates, alphas = [], [], []
        for t in range(steps):
            f, g, a = self._step(inputs[:, t], state, memory, mode, generator)
            frames.append(f)
            gates.append(g)
            alphas.append(a)
        return self._finish(frames, gates, alphas)

    @torch.no_grad()
    def free_running(
        self, memory: TextMemory, generator: torch.Generator | None = None, max_frames: int | None = None
    ) -> DecodeOutput:
        """Feed back own predictions in hard attention mode until the gate fires or the cap is hit."""
        if memory.sequence.shape[1] == 0:
            raise ShapeError("empty memory")
        r = self.cfg.reduction_factor
        max_frames = max_frames or self.cfg.max_decoder_steps
        max_steps = max(1, math.ceil(max_frames / r))
        B = memory.sequence.shape[0]
        prev = memory.sequence.new_zeros(B, self.n_mels * r)
        state = self._init_state(memory)
        frames, gates, alphas = [], [], []
        reason = "max_steps"
        for _ in range(max_steps):
            f, g, a = self._step(prev, state, memory, HARD, generator)
            frames.append(f)
            gates.append(g)
            alphas.append(a)
            prev = f
            if bool((torch.sigmoid(g) > self.cfg.gate_threshold).any(dim=1).all()):
                reason = "gate"
                break
        out = self._finish(frames, gates, alphas, reason)
        if reason == "gate" and r > 1:
            # drop the frames of the final step that come after the gate first fired
            fired = torch.sigmoid(out.gate_logits) > self.cfg.gate_threshold
            first = fired.float().argmax(dim=1)
            keep = int(first.max()) + 1
            mel_pre = out.mel_pre[:, :keep]
            out = DecodeOutput(
                mel_pre, mel_pre + self.postnet(mel_pre), out.gate_logits[:, :keep], out.alignments[:, :keep], reason
            )
        return out
