import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_config
from gradcheck import analytic_gradients, fd_gradients, max_relative_error
from kopause.config import EncoderConfig
from kopause.encoder import CBHL, SymbolEmbedding, TextMemory, TPAEHead, condition_memory, length_mask
from kopause.errors import ShapeError
from kopause.text import SymbolTable, decompose_hangul, encode_symbols

DEFAULT = EncoderConfig()
TINY = tiny_config().encoder


def test_embedding_shape_padding_and_lookup():
    torch.manual_seed(0)
    emb = SymbolEmbedding(150, DEFAULT.embedding_dim)
    ids = torch.tensor([[5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 5, 1]])
    out = emb(ids)
    assert out.shape == (1, 12, 256)
    assert torch.equal(out[0, 0], out[0, 10])
    assert torch.count_nonzero(emb(torch.zeros(2, 7, dtype=torch.long))) == 0


def test_embedding_out_of_range():
    emb = SymbolEmbedding(10, 4)
    with pytest.raises(IndexError):
        emb(torch.tensor([[3, 10]]))


def test_cbhl_default_dims():
    torch.manual_seed(0)
    cbhl = CBHL(DEFAULT)
    assert len(cbhl.bank) == 16
    assert [c.kernel_size[0] for c in cbhl.bank] == list(range(1, 17))
    mem = cbhl(torch.randn(1, 12, 256), torch.tensor([12]))
    assert mem.sequence.shape == (1, 12, 256)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.integers(1, 15))
def test_cbhl_length_preserved(k, t):
    torch.manual_seed(0)
    cfg = EncoderConfig(embedding_dim=8, bank_widths=k, bank_channels=4, projection_channels=8, highway_layers=1, rnn_units=4)
    mem = CBHL(cfg)(torch.randn(2, t, 8), torch.tensor([t, max(1, t // 2)]))
    assert mem.sequence.shape == (2, t, 8)


def test_cbhl_masked_rows_zero_and_padding_invariant():
    torch.manual_seed(0)
    cbhl = CBHL(TINY)
    x = torch.randn(2, 10, TINY.embedding_dim)
    x[1, 6:] = 0
    mem = cbhl(x, torch.tensor([10, 6]))
    assert torch.count_nonzero(mem.sequence[1, 6:]) == 0
    alone = cbhl(x[1:, :6], torch.tensor([6]))
    torch.testing.assert_close(mem.sequence[1, :6], alone.sequence[0], atol=1e-6, rtol=0)


def test_pipe_changes_memory():
    torch.manual_seed(0)
    table = SymbolTable.default()
    emb, cbhl = SymbolEmbedding(len(table), TINY.embedding_dim), CBHL(TINY)
    with_pipe = torch.tensor([encode_symbols(decompose_hangul("아버지가| 방에"), table)])
    without = torch.tensor([encode_symbols(decompose_hangul("아버지가 방에"), table)])
    a = cbhl(emb(with_pipe), torch.tensor([with_pipe.shape[1]])).sequence
    b = cbhl(emb(without), torch.tensor([without.shape[1]])).sequence
    assert a.shape[1] == b.shape[1] + 1
    assert not torch.allclose(a[0, :9], b[0, :9])


def _memory(lengths, dim, seed=0, pad_to=None):
    g = torch.Generator().manual_seed(seed)
    T = pad_to or max(lengths)
    seq = torch.randn(len(lengths), T, dim, generator=g)
    mask = length_mask(torch.tensor(lengths), T)
    return TextMemory(seq * mask[..., None], torch.tensor(lengths))


@pytest.mark.parametrize("length", [3, 12, 300])
def test_tpae_fixed_dim_and_range(length):
    torch.manual_seed(0)
    head = TPAEHead(DEFAULT)
    out = head(_memory([length], DEFAULT.memory_dim))
    assert out.shape == (1, 256)
    assert bool((out.abs() < 1).all())


def test_tpae_padding_invariance():
    torch.manual_seed(0)
    head = TPAEHead(DEFAULT)
    base = _memory([12], DEFAULT.memory_dim)
    padded = TextMemory(torch.nn.functional.pad(base.sequence, (0, 0, 0, 40)), base.lengths)
    torch.testing.assert_close(head(padded), head(base), atol=1e-6, rtol=0)


def test_tpae_zero_length():
    head = TPAEHead(TINY)
    with pytest.raises(ShapeError):
        head(TextMemory(torch.zeros(1, 3, TINY.memory_dim), torch.tensor([0])))


def test_tpae_single_fc_layer_by_default():
    head = TPAEHead(DEFAULT)
    assert sum(isinstance(m, torch.nn.Linear) for m in head.fc) == 1


def test_tpae_gradient_matches_finite_differences():
    torch.manual_seed(0)
    cfg = EncoderConfig(rnn_units=3, tpae_conv_channels=3, tpae_rnn_units=3, acoustic_dim=4)
    head = TPAEHead(cfg).double()
    mem = _memory([5, 3], cfg.memory_dim)
    mem = TextMemory(mem.sequence.double(), mem.lengths)
    w = torch.randn(2, 4, dtype=torch.float64)
    loss_fn = lambda: (head(mem) * w).sum()  # noqa: E731
    params = list(head.parameters())
    err = max_relative_error(analytic_gradients(loss_fn, params), fd_gradients(loss_fn, params))
    assert err < 1e-3


def test_condition_memory():
    mem = _memory([12], 256)
    e = torch.randn(1, 256)
    out = condition_memory(mem, e)
    assert out.sequence.shape == (1, 12, 512)
    zero = condition_memory(mem, torch.zeros(1, 256))
    assert torch.equal(zero.sequence[..., :256], mem.sequence)
    assert torch.count_nonzero(zero.sequence[..., 256:]) == 0
    e2 = e + 1.0
    diff = condition_memory(mem, e2).sequence - out.sequence
    assert torch.count_nonzero(diff[..., :256]) == 0
    torch.testing.assert_close(diff[0, :, 256:], torch.ones(12, 256))


def test_condition_memory_keeps_padding_zero():
    mem = _memory([4, 2], 6, pad_to=5)
    out = condition_memory(mem, torch.ones(2, 3))
    assert torch.count_nonzero(out.sequence[1, 2:]) == 0


def test_condition_memory_batch_mismatch():
    with pytest.raises(ShapeError):
        condition_memory(_memory([4, 2], 6), torch.ones(3, 3))


def test_non_finite_raises_with_layer_name():
    cbhl = CBHL(TINY)
    x = torch.randn(1, 4, TINY.embedding_dim)
    x[0, 1, 0] = float("nan")
    with pytest.raises(FloatingPointError, match="cbhl"):
        cbhl(x, torch.tensor([4]))
