"""Encoder contracts: masking, determinism, attention simplex, gradients."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from conftest import model_grad_check, rel_err
from stlg.encoders import (
    AttendedVideo,
    CoAttention,
    EncodedSequence,
    FusionSelfAttention,
    ProjectionPool,
    SentenceEncoder,
    VideoEncoder,
    masked_mean,
    masked_softmax,
)

torch.manual_seed(0)


def prefix_mask(lengths, max_len):
    return torch.arange(max_len)[None, :] < torch.tensor(lengths)[:, None]


def rand_inputs(B=2, T=7, D=5, lengths=(7, 4), seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(B, T, D, generator=g, dtype=dtype)
    return x, prefix_mask(list(lengths), T)


# ---------------------------------------------------------------------------
# sequence encoders


@pytest.mark.parametrize("arch", ["rnn", "conv"])
def test_encoder_shapes_and_masking(arch):
    enc = VideoEncoder(5, hidden_dim=8, arch=arch)
    x, mask = rand_inputs()
    out = enc(x, mask)
    assert out.features.shape == (2, 7, 8)
    assert torch.equal(out.mask, mask)
    # padded rows are exactly zero
    assert out.features[1, 4:].abs().max().item() == 0.0


@pytest.mark.parametrize("arch", ["rnn", "conv"])
def test_encoder_all_padding_gives_zero_rows(arch):
    enc = VideoEncoder(4, hidden_dim=6, arch=arch)
    x = torch.randn(1, 5, 4)
    mask = torch.zeros(1, 5, dtype=torch.bool)
    out = enc(x, mask)
    assert out.features.abs().max().item() == 0.0


def test_encoder_deterministic():
    enc = VideoEncoder(5, hidden_dim=8, arch="rnn")
    x, mask = rand_inputs()
    a = enc(x, mask).features
    b = enc(x, mask).features
    assert torch.equal(a, b)


def test_encoder_rejects_wrong_dim():
    enc = VideoEncoder(5, hidden_dim=8)
    x, mask = rand_inputs(D=4)
    with pytest.raises(ValueError, match="expected"):
        enc(x, mask)


def test_encoder_padding_does_not_leak_into_valid_rows():
    # same valid prefix, different junk in the padded region
    enc = VideoEncoder(3, hidden_dim=8, arch="rnn")
    mask = prefix_mask([3], 6)
    x1 = torch.randn(1, 6, 3)
    x2 = x1.clone()
    x2[0, 3:] = 99.0
    o1, o2 = enc(x1, mask).features, enc(x2, mask).features
    assert torch.allclose(o1, o2, atol=1e-6)


@pytest.mark.parametrize("arch", ["rnn", "conv", "mean"])
def test_sentence_encoder_shapes(arch):
    enc = SentenceEncoder(4, hidden_dim=8, arch=arch)
    x, mask = rand_inputs(D=4)
    out = enc(x, mask)
    assert out.features.shape == (2, 7, 8)
    assert out.features[1, 4:].abs().max().item() == 0.0


def test_encoders_finite_over_many_seeds():
    enc_v = VideoEncoder(4, hidden_dim=8, arch="rnn")
    enc_s = SentenceEncoder(3, hidden_dim=8, arch="rnn")
    for seed in range(100):
        g = torch.Generator().manual_seed(seed)
        x = torch.randn(1, 6, 4, generator=g) * 10
        s = torch.randn(1, 5, 3, generator=g) * 10
        assert torch.isfinite(enc_v(x, torch.ones(1, 6, dtype=torch.bool)).features).all()
        assert torch.isfinite(enc_s(s, torch.ones(1, 5, dtype=torch.bool)).features).all()


@pytest.mark.parametrize("arch", ["rnn", "conv"])
def test_encoder_parameter_gradients_match_fd(arch):
    torch.manual_seed(1)
    enc = VideoEncoder(3, hidden_dim=6, arch=arch).double()
    x, mask = rand_inputs(B=1, T=5, D=3, lengths=(4,), dtype=torch.float64)
    coeff = torch.randn(1, 5, 6, dtype=torch.float64)

    def loss_fn():
        return (enc(x, mask).features * coeff).sum()

    model_grad_check(enc, loss_fn, tol=1e-4)


# ---------------------------------------------------------------------------
# helpers


def test_masked_softmax_simplex_and_zeros():
    scores = torch.randn(3, 6)
    mask = prefix_mask([6, 3, 1], 6)
    p = masked_softmax(scores, mask)
    assert torch.allclose(p.sum(-1), torch.ones(3), atol=1e-6)
    assert (p[~mask] == 0).all()
    assert p[2, 0].item() == pytest.approx(1.0)


def test_masked_softmax_rejects_empty_rows():
    with pytest.raises(ValueError):
        masked_softmax(torch.randn(2, 4), torch.zeros(2, 4, dtype=torch.bool))


def test_masked_mean_matches_manual():
    x, mask = rand_inputs()
    out = masked_mean(x, mask)
    manual = x[1, :4].mean(0)
    assert torch.allclose(out[1], manual, atol=1e-6)


# ---------------------------------------------------------------------------
# co-attention


def make_coattn(hidden=8, rounds=2, seed=0):
    torch.manual_seed(seed)
    return CoAttention(hidden, rounds=rounds)


def encode_pair(seed=0, B=2, T=7, N=5, hidden=8, video_lengths=(7, 4), sent_lengths=(5, 3)):
    g = torch.Generator().manual_seed(seed)
    hv = torch.randn(B, T, hidden, generator=g)
    hs = torch.randn(B, N, hidden, generator=g)
    vm, sm = prefix_mask(list(video_lengths), T), prefix_mask(list(sent_lengths), N)
    return EncodedSequence(hv * vm.unsqueeze(-1), vm), EncodedSequence(hs * sm.unsqueeze(-1), sm)


def test_coattention_simplex():
    video, sentence = encode_pair()
    out = make_coattn()(video, sentence)
    assert isinstance(out, AttendedVideo)
    assert torch.allclose(out.attention.sum(-1), torch.ones(2), atol=1e-6)
    assert (out.attention >= 0).all()
    assert (out.attention[~video.mask] == 0).all()
    assert out.features.shape == video.features.shape


def test_coattention_single_valid_step():
    video, sentence = encode_pair(video_lengths=(1, 1))
    out = make_coattn()(video, sentence)
    assert torch.allclose(out.attention[:, 0], torch.ones(2), atol=1e-7)


def test_coattention_rejects_fully_masked():
    video, sentence = encode_pair()
    dead = EncodedSequence(video.features, torch.zeros_like(video.mask))
    with pytest.raises(ValueError):
        make_coattn()(dead, sentence)


def test_coattention_word_order_invariance_with_mean_encoder():
    # with the mean-pooling sentence encoder, permuting words must not move a
    torch.manual_seed(3)
    sent_enc = SentenceEncoder(4, hidden_dim=8, arch="mean").double()
    attn = CoAttention(8, rounds=2).double()
    g = torch.Generator().manual_seed(4)
    words = torch.randn(1, 6, 4, generator=g, dtype=torch.float64)
    video = EncodedSequence(
        torch.randn(1, 7, 8, generator=g, dtype=torch.float64),
        torch.ones(1, 7, dtype=torch.bool),
    )
    smask = torch.ones(1, 6, dtype=torch.bool)
    base = attn(video, sent_enc(words, smask)).attention
    perm = attn(video, sent_enc(words[:, [3, 1, 5, 0, 2, 4]], smask)).attention
    assert (base - perm).abs().max().item() < 1e-6


def test_coattention_parameter_gradients_match_fd():
    torch.manual_seed(5)
    attn = CoAttention(6, rounds=2).double()
    g = torch.Generator().manual_seed(6)
    video = EncodedSequence(
        torch.randn(1, 5, 6, generator=g, dtype=torch.float64),
        prefix_mask([4], 5),
    )
    sentence = EncodedSequence(
        torch.randn(1, 4, 6, generator=g, dtype=torch.float64),
        prefix_mask([3], 4),
    )
    coeff = torch.randn(1, 5, 6, dtype=torch.float64)

    def loss_fn():
        out = attn(video, sentence)
        return (out.features * coeff).sum() + (out.attention**2).sum()

    model_grad_check(attn, loss_fn, tol=1e-4)


# ---------------------------------------------------------------------------
# fusion + self-attention


def test_fusion_shape_and_mask():
    torch.manual_seed(7)
    fuse = FusionSelfAttention(8)
    video, sentence = encode_pair()
    out = fuse(video, sentence)
    assert out.shape == (2, 7, 8)
    assert out[1, 4:].abs().max().item() == 0.0


def test_fusion_ignores_masked_keys():
    # junk on padded timesteps must not change valid outputs
    torch.manual_seed(8)
    fuse = FusionSelfAttention(8)
    video, sentence = encode_pair(video_lengths=(4, 4))
    noisy = video.features.clone()
    noisy[:, 4:] = 7.0
    out_clean = fuse(video, sentence)
    out_noisy = fuse(EncodedSequence(noisy, video.mask), sentence)
    assert torch.allclose(out_clean[:, :4], out_noisy[:, :4], atol=1e-6)


def test_fusion_deterministic():
    torch.manual_seed(9)
    fuse = FusionSelfAttention(8)
    video, sentence = encode_pair()
    assert torch.equal(fuse(video, sentence), fuse(video, sentence))


def test_fusion_parameter_gradients_match_fd():
    torch.manual_seed(10)
    fuse = FusionSelfAttention(6).double()
    g = torch.Generator().manual_seed(11)
    video = EncodedSequence(
        torch.randn(1, 5, 6, generator=g, dtype=torch.float64), prefix_mask([4], 5)
    )
    sentence = EncodedSequence(
        torch.randn(1, 3, 6, generator=g, dtype=torch.float64), prefix_mask([3], 3)
    )
    coeff = torch.randn(1, 5, 6, dtype=torch.float64)
    model_grad_check(fuse, lambda: (fuse(video, sentence) * coeff).sum(), tol=1e-4)


# ---------------------------------------------------------------------------
# pooled embeddings


def test_pool_unit_norm_and_uniform_default():
    torch.manual_seed(12)
    pool = ProjectionPool(8)
    x, mask = rand_inputs(D=8)
    z = pool(x, mask)
    assert torch.allclose(z.norm(dim=-1), torch.ones(2), atol=1e-6)
    uniform = mask.float() / mask.sum(-1, keepdim=True)
    assert torch.allclose(z, pool(x, mask, weights=uniform), atol=1e-6)


def test_pool_constant_sequence():
    torch.manual_seed(13)
    pool = ProjectionPool(4)
    row = torch.randn(4)
    x = row.expand(1, 6, 4).clone()
    mask = prefix_mask([6], 6)
    z = pool(x, mask)
    import torch.nn.functional as F

    expect = F.normalize(pool.proj(row).unsqueeze(0), dim=-1)
    assert torch.allclose(z, expect, atol=1e-6)


def test_pool_rejects_all_masked_or_zero_weights():
    pool = ProjectionPool(4)
    x = torch.randn(1, 5, 4)
    with pytest.raises(ValueError):
        pool(x, torch.zeros(1, 5, dtype=torch.bool))
    mask = prefix_mask([3], 5)
    with pytest.raises(ValueError):
        pool(x, mask, weights=torch.zeros(1, 5))
