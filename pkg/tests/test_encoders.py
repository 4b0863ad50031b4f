import numpy as np
import pytest

from semclip import autodiff as ad
from semclip.autodiff import Tensor, finite_difference_check
from semclip.encoders import (
    ImageEncoderParams, encode_image, encode_text, encode_texts, image_forward, init_encoders,
    text_forward, tokenize,
)
from semclip.errors import ContractError, VocabularyError
from semclip.scene import RELATIONS, N_FEATURES, Scene, Vocabulary

VOCAB = Vocabulary()
SCENE = Scene("blue", "square", "left_of", "red", "triangle")


def test_tokenize():
    ids = tokenize("a blue square left of a red triangle", VOCAB)
    assert ids == [VOCAB[w] for w in "a blue square left of a red triangle".split()] + [VOCAB.eos_index]
    assert tokenize("", VOCAB) == [VOCAB.eos_index]
    with pytest.raises(VocabularyError, match="purple"):
        tokenize("a purple square", VOCAB)


def test_init_shapes_and_determinism():
    t1, i1 = init_encoders(42, d=64, d_tok=32)
    t2, i2 = init_encoders(42, d=64, d_tok=32)
    assert t1.token_embedding.shape == (len(VOCAB), 32)
    assert t1.text_w1.shape == (32, 64) and t1.text_w2.shape == (64, 64)
    assert i1.image_w.shape == (N_FEATURES, 64)
    for a, b in zip(t1.named().values(), t2.named().values()):
        assert a.data.tobytes() == b.data.tobytes()
    assert i1.image_w.tobytes() == i2.image_w.tobytes()
    t0, _ = init_encoders(0)
    t3, _ = init_encoders(1)
    assert not np.array_equal(t0.text_w1.data, t3.text_w1.data)


def test_encode_text_unit_norm_and_pooling_symmetry():
    text, _ = init_encoders(3)
    a = encode_text(tokenize("a blue square left of a red triangle", VOCAB), text).data
    b = encode_text(tokenize("a red triangle left of a blue square", VOCAB), text).data
    assert abs(np.linalg.norm(a) - 1) < 1e-6
    # toy-model limitation: mean pooling ignores word order
    np.testing.assert_allclose(a, b, atol=1e-12)
    with pytest.raises(ContractError):
        encode_text([], text)


def test_encode_text_batch_matches_single():
    text, _ = init_encoders(5)
    seqs = [tokenize(c, VOCAB) for c in ("a red circle above a green square", "this is a photo of left")]
    batch = encode_texts(seqs, text).data
    for row, s in zip(batch, seqs):
        np.testing.assert_allclose(row, encode_text(s, text).data, atol=1e-14)


def test_text_encoder_gradients(rng):
    text, _ = init_encoders(9, d=8, d_tok=4, d_hidden=6)
    seqs = [tokenize(c, VOCAB) for c in ("a blue square not left of a red triangle", "a red circle above a green square")]
    idx = np.array([s + [0] * (10 - len(s)) for s in seqs])
    lengths = np.array([len(s) for s in seqs])
    w = Tensor(rng.standard_normal((2, 8)))
    for name in ("token_embedding", "text_w1", "text_b1", "text_w2", "text_b2"):
        def f(x, name=name):
            setattr(text, name, x)
            return ad.sum(ad.mul(text_forward(idx, lengths, text), w))
        x0 = getattr(text, name).data.copy()
        assert finite_difference_check(f, x0) < 1e-4, name
        setattr(text, name, Tensor(x0, requires_grad=True))


def test_image_encoder_gradient(rng):
    feats = Tensor(np.stack([SCENE.features()]))
    w = Tensor(rng.standard_normal((1, 6)))
    err = finite_difference_check(lambda m: ad.sum(ad.mul(image_forward(feats, m), w)),
                                  rng.standard_normal((N_FEATURES, 6)))
    assert err < 1e-4


def test_encode_image_frozen_and_deterministic():
    _, image = init_encoders(1)
    a, b = encode_image(SCENE, image), encode_image(SCENE, image)
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1) < 1e-6


def test_relation_changes_image_embedding():
    _, image = init_encoders(42)
    embs = {r: encode_image(Scene("blue", "square", r, "red", "triangle"), image) for r in RELATIONS}
    for r1 in RELATIONS:
        for r2 in RELATIONS:
            if r1 != r2:
                assert embs[r1] @ embs[r2] < 1 - 1e-6


def test_image_noise_needs_rng():
    _, image = init_encoders(1)
    noisy = ImageEncoderParams(image.image_w, sigma=0.3)
    with pytest.raises(ContractError):
        encode_image(SCENE, noisy)
    e = encode_image(SCENE, noisy, np.random.default_rng(0))
    assert abs(np.linalg.norm(e) - 1) < 1e-6


def test_text_encoder_stable_under_perturbation():
    text, _ = init_encoders(2)
    seqs = [tokenize("a blue square not left of a red triangle", VOCAB)]
    rng = np.random.default_rng(0)
    base = {k: v.data.copy() for k, v in text.named().items()}
    for _ in range(1000):
        for k, v in text.named().items():
            v.data = base[k] + 0.1 * rng.standard_normal(base[k].shape)
        assert np.all(np.isfinite(encode_texts(seqs, text).data))
