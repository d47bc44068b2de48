"""Full acoustic model: text encoder + TPAE head, TP-GST reference path, SMA decoder."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from kopause.config import Config
from kopause.decoder import SOFT, Decoder, DecodeOutput
from kopause.encoder import CBHL, SymbolEmbedding, TextMemory, TPAEHead, condition_memory
from kopause.errors import ConfigError
from kopause.reference import TPGSTReference


@dataclass
class ModelOutput:
    decode: DecodeOutput
    tae: torch.Tensor
    tpae: torch.Tensor
    memory: TextMemory


class PauseTTS(nn.Module):
    """Training conditions the decoder on the TAE; inference uses the predicted TPAE."""

    def __init__(self, config: Config, n_symbols: int):
        super().__init__()
        enc, ref = config.encoder, config.reference
        if enc.acoustic_dim != ref.acoustic_dim:
            raise ConfigError("encoder and reference acoustic_dim must match")
        self.config = config
        n_mels = config.mel.n_mels
        self.embedding = SymbolEmbedding(n_symbols, enc.embedding_dim)
        self.cbhl = CBHL(enc)
        self.tpae_head = TPAEHead(enc)
        self.reference = TPGSTReference(ref, n_mels)
        self.decoder = Decoder(config.decoder, enc.memory_dim + enc.acoustic_dim, n_mels)

    def encode(self, ids: torch.Tensor, lengths: torch.Tensor) -> TextMemory:
        return self.cbhl(self.embedding(ids), lengths)

    def forward(
        self,
        ids: torch.Tensor,
        id_lengths: torch.Tensor,
        mels: torch.Tensor,
        mel_lengths: torch.Tensor,
        generator: torch.Generator | None = None,
        mode: str = SOFT,
    ) -> ModelOutput:
        memory = self.encode(ids, id_lengths)
        tpae = self.tpae_head(memory)
        tae = self.reference(mels, mel_lengths)
        decode = self.decoder.teacher_forced(condition_memory(memory, tae), mels, generator, mode)
        return ModelOutput(decode, tae, tpae, memory)

    @torch.no_grad()
    def infer(self, ids: torch.Tensor, generator: torch.Generator | None = None, max_frames: int | None = None):
        """Synthesize from a single id sequence of shape (T,) or (1, T)."""
        if ids.dim() == 1:
            ids = ids[None]
        lengths = torch.tensor([ids.shape[1]])
        memory = self.encode(ids, lengths)
        tpae = self.tpae_head(memory)
        out = self.decoder.free_running(condition_memory(memory, tpae), generator, max_frames)
        return out, tpae
