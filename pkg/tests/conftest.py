import numpy as np
import pytest
import torch

from kopause.audio import MelConfig
from kopause.config import Config, DecoderConfig, EncoderConfig, ReferenceConfig, TrainConfig
from kopause.data import attach_parses, load_cache, load_metadata, load_parses, preprocess_corpus
from kopause.fixtures import write_corpus
from kopause.text import SymbolTable

torch.set_num_threads(1)


def tiny_config(n_mels: int = 80, **train) -> Config:
    """Small but structurally complete model for unit tests."""
    return Config(
        mel=MelConfig(n_mels=n_mels),
        encoder=EncoderConfig(
            embedding_dim=16, bank_widths=3, bank_channels=8, projection_channels=16, highway_layers=2,
            rnn_units=8, tpae_conv_channels=8, tpae_rnn_units=8, acoustic_dim=8,
        ),
        reference=ReferenceConfig(conv_channels=(2, 2, 4, 4, 4, 4), rnn_units=8, n_tokens=3, n_heads=2, acoustic_dim=8),
        decoder=DecoderConfig(
            prenet_sizes=(16, 16), attention_rnn_units=16, attention_dim=8, decoder_rnn_units=16,
            postnet_channels=8, max_decoder_steps=40,
        ),
        train=TrainConfig(batch_size=4, seed=7, **train),
    )


def micro_config() -> Config:
    """Under 1k parameters end to end, for finite-difference checks."""
    return Config(
        mel=MelConfig(n_mels=4, fmax=8000.0),
        encoder=EncoderConfig(
            embedding_dim=4, bank_widths=2, bank_channels=2, projection_channels=4, projection_width=1,
            highway_layers=1, rnn_units=2, tpae_conv_width=1, tpae_conv_channels=2, tpae_rnn_units=2, acoustic_dim=4,
        ),
        reference=ReferenceConfig(conv_channels=(1, 1, 1, 1, 1, 1), rnn_units=2, n_tokens=2, n_heads=2, acoustic_dim=4),
        decoder=DecoderConfig(
            prenet_sizes=(4,), attention_rnn_units=2, attention_dim=2, decoder_rnn_units=2,
            postnet_layers=5, postnet_channels=2, postnet_width=3, sma_noise=2.0, prenet_dropout=0.5,
        ),
        train=TrainConfig(batch_size=2, seed=3),
    )


MICRO_SYMBOLS = ["<pad>", "<eos>", " ", "|", "ᄀ", "ᅡ"]


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """The 8-utterance synthetic corpus, preprocessed once per session."""
    root = tmp_path_factory.mktemp("corpus")
    meta = write_corpus(root / "raw")
    records = load_metadata(meta)
    attach_parses(records, load_parses(root / "raw" / "parses.txt"))
    report = preprocess_corpus(records, root / "data", MelConfig(), SymbolTable.default())
    index, cached = load_cache(root / "data")
    return {
        "root": root,
        "metadata": meta,
        "parses": root / "raw" / "parses.txt",
        "data": root / "data",
        "report": report,
        "items": [(r.ids, r.mel) for r in cached],
        "texts": [r.text for r in cached],
    }


def random_items(n, rng, n_symbols=20, n_mels=80, text=(3, 9), frames=(8, 20)):
    items = []
    for _ in range(n):
        t = int(rng.integers(*text))
        ids = list(rng.integers(4, n_symbols, size=t)) + [1]
        mel = rng.normal(-4, 1, size=(int(rng.integers(*frames)), n_mels))
        items.append((ids, mel))
    return items


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
