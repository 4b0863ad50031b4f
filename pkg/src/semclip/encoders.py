"""Toy text and image encoders producing unit-norm embeddings.

Text: mean-pooled token embeddings -> affine -> tanh -> affine -> l2-normalize.
Mean pooling makes the encoder blind to word order; captions with the same
token multiset embed identically.

Image: a frozen random linear map of the scene's one-hot features, optionally
with additive Gaussian noise, then l2-normalized.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError
from .scene import N_FEATURES, Scene, Vocabulary


TEXT_PARAM_NAMES = ("token_embedding", "text_w1", "text_b1", "text_w2", "text_b2")


def tokenize(caption: str, vocab: Vocabulary) -> list[int]:
    return [vocab[tok] for tok in caption.split()] + [vocab.eos_index]


def pad_batch(seqs) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    idx = np.zeros((len(seqs), int(lengths.max()) if len(seqs) else 0), dtype=np.int64)
    for i, s in enumerate(seqs):
        idx[i, :len(s)] = s
    return idx, lengths


@dataclass
class TextEncoderParams:
    token_embedding: Tensor
    text_w1: Tensor
    text_b1: Tensor
    text_w2: Tensor
    text_b2: Tensor

    def named(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in TEXT_PARAM_NAMES}

    @property
    def d(self) -> int:
        return self.text_w2.shape[1]

    @property
    def d_tok(self) -> int:
        return self.token_embedding.shape[1]


@dataclass
class ImageEncoderParams:
    image_w: np.ndarray
    sigma: float = 0.0
    frozen: bool = field(default=True, init=False)

    @property
    def d(self) -> int:
        return self.image_w.shape[1]


def init_encoders(seed: int, d: int = 64, d_tok: int = 32, n_vocab: int | None = None,
                  d_hidden: int | None = None, sigma: float = 0.0, dtype=np.float64):
    """Deterministic scaled-normal init (std 1/sqrt(fan_in)), zero biases."""
    if d <= 0 or d_tok <= 0:
        raise ContractError("d and d_tok must be positive")
    n_vocab = n_vocab or len(Vocabulary())
    d_hidden = d_hidden or d
    text_ss, image_ss = np.random.SeedSequence([seed, 0xE1]).spawn(2)
    rng = np.random.default_rng(text_ss)

    def normal(shape, fan_in):
        return Tensor(rng.standard_normal(shape) / np.sqrt(fan_in), requires_grad=True, dtype=dtype)

    text = TextEncoderParams(
        token_embedding=normal((n_vocab, d_tok), d_tok),
        text_w1=normal((d_tok, d_hidden), d_tok),
        text_b1=Tensor(np.zeros(d_hidden), requires_grad=True, dtype=dtype),
        text_w2=normal((d_hidden, d), d_hidden),
        text_b2=Tensor(np.zeros(d), requires_grad=True, dtype=dtype),
    )
    img_rng = np.random.default_rng(image_ss)
    image = ImageEncoderParams(img_rng.standard_normal((N_FEATURES, d)) / np.sqrt(N_FEATURES), sigma)
    return text, image


def text_forward(idx: np.ndarray, lengths: np.ndarray, params: TextEncoderParams) -> Tensor:
    """Batched encoder: padded index rows -> unit rows (B x d)."""
    pooled = ad.embedding_bag_mean(params.token_embedding, idx, lengths)
    hidden = ad.tanh(ad.add(ad.matmul(pooled, params.text_w1), params.text_b1))
    return ad.l2_normalize(ad.add(ad.matmul(hidden, params.text_w2), params.text_b2))


def encode_texts(seqs, params: TextEncoderParams) -> Tensor:
    if any(len(s) == 0 for s in seqs):
        raise ContractError("encode_text needs a non-empty index sequence")
    idx, lengths = pad_batch(seqs)
    return text_forward(idx, lengths, params)


def encode_text(indices, params: TextEncoderParams) -> Tensor:
    """Single caption -> unit vector of length d."""
    if len(indices) == 0:
        raise ContractError("encode_text needs a non-empty index sequence")
    return ad.reshape(encode_texts([list(indices)], params), (params.d,))


def image_forward(features: Tensor, image_w: Tensor, noise: np.ndarray | None = None) -> Tensor:
    """Differentiable image map; used for gradient checks even though it stays frozen."""
    z = ad.matmul(features, image_w)
    if noise is not None:
        z = ad.add(z, Tensor(noise))
    return ad.l2_normalize(z)


def encode_images(scenes, params: ImageEncoderParams, rng: np.random.Generator | None = None) -> np.ndarray:
    feats = np.stack([s.features() for s in scenes])
    noise = None
    if params.sigma > 0:
        if rng is None:
            raise ContractError("image noise sigma > 0 needs an rng")
        noise = params.sigma * rng.standard_normal((len(scenes), params.d))
    return image_forward(Tensor(feats), Tensor(params.image_w), noise).data


def encode_image(scene: Scene, params: ImageEncoderParams, rng: np.random.Generator | None = None) -> np.ndarray:
    return encode_images([scene], params, rng)[0]
