import pytest
import torch

from conftest import tiny_config
from kopause.config import ReferenceConfig
from kopause.reference import ReferenceEncoder, StyleTokenLayer, TPGSTReference, reduced_length

DEFAULT = ReferenceConfig()


@pytest.mark.parametrize("n,expected", [(256, 4), (80, 2), (64, 1), (1, 1), (65, 2)])
def test_reduced_length(n, expected):
    assert reduced_length(n) == expected


def test_conv_output_dims():
    torch.manual_seed(0)
    enc = ReferenceEncoder(DEFAULT, 80)
    x = torch.randn(1, 1, 256, 80)
    for conv in enc.convs:
        x = conv(x)
    assert x.shape == (1, 128, 4, 2)
    assert enc.out_bands == 2
    assert not any(isinstance(m, torch.nn.BatchNorm2d) for m in enc.modules())


def test_summary_shape():
    torch.manual_seed(0)
    enc = ReferenceEncoder(DEFAULT, 80)
    assert enc(torch.randn(2, 256, 80)).shape == (2, 128)


def test_short_reference_is_padded():
    torch.manual_seed(0)
    enc = ReferenceEncoder(DEFAULT, 80)
    out = enc(torch.randn(1, 10, 80))
    assert out.shape == (1, 128)
    assert torch.isfinite(out).all()


def test_padding_frames_do_not_change_summary():
    torch.manual_seed(0)
    cfg = tiny_config().reference
    enc = ReferenceEncoder(cfg, 80)
    x = torch.randn(1, 128, 80)
    padded = torch.cat([x, torch.zeros(1, 64, 80)], 1)
    torch.testing.assert_close(enc(padded, torch.tensor([128])), enc(x), atol=1e-6, rtol=0)


def test_token_weights_sum_to_one():
    torch.manual_seed(0)
    layer = StyleTokenLayer(DEFAULT)
    tae, w = layer(torch.randn(3, 128))
    assert tae.shape == (3, 256)
    assert w.shape == (3, 4, 10)
    torch.testing.assert_close(w.sum(-1), torch.ones(3, 4))


def test_single_token_returns_tanh_of_token():
    torch.manual_seed(0)
    layer = StyleTokenLayer(ReferenceConfig(n_tokens=1))
    tae, _ = layer(torch.randn(2, 128))
    torch.testing.assert_close(tae, torch.tanh(layer.tokens).expand(2, -1))


def test_tae_bounded():
    torch.manual_seed(0)
    layer = StyleTokenLayer(DEFAULT)
    with torch.no_grad():
        layer.tokens.mul_(100)
    tae, _ = layer(torch.randn(4, 128) * 50)
    assert bool((tae.abs() <= 1).all())


def test_reference_deterministic():
    torch.manual_seed(0)
    ref = TPGSTReference(tiny_config().reference, 80).eval()
    x = torch.randn(2, 70, 80)
    assert torch.equal(ref(x), ref(x))
