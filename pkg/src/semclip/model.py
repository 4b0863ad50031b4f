"""Model bundle (encoders + projection bank + temperature) and checkpoint files.

Checkpoint byte layout, all integers little-endian::

    0       8 bytes   magic b"SEMCLIP\\0"
    8       uint32    format version (1)
    12      uint32    header length H
    16      H bytes   UTF-8 JSON header, sorted keys: d, d_tok, d_hidden, n_vocab,
                      vocab_hash, seed, sigma, tau_max, bank {n, normalize,
                      learnable, seed}, arrays (names in file order)
    16+H    arrays, in the fixed order of ARRAY_ORDER, each:
              uint16 name length L, L bytes ASCII name,
              uint8 ndim, ndim x uint32 dims,
              prod(dims) x float32 values (C order)
    end-4   uint32    CRC-32 of every preceding byte
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .encoders import ImageEncoderParams, TextEncoderParams, init_encoders
from .errors import DataError, IncompatibleCheckpointError
from .losses import TAU_INIT, TAU_MAX, Temperature
from .projection import ProjectionBank, init_projection_bank
from .scene import Vocabulary

MAGIC = b"SEMCLIP\0"
FORMAT_VERSION = 1
ARRAY_ORDER = ("token_embedding", "text_w1", "text_b1", "text_w2", "text_b2",
               "image_w", "log_temperature", "projection_V")


@dataclass
class Model:
    text: TextEncoderParams
    image: ImageEncoderParams
    bank: ProjectionBank
    temperature: Temperature
    vocab: Vocabulary
    seed: int

    def trainable(self) -> dict[str, Tensor]:
        params = dict(self.text.named())
        params["log_temperature"] = self.temperature.theta
        if self.bank.learnable:
            params["projection_V"] = self.bank.V
        return params

    def arrays(self) -> dict[str, np.ndarray]:
        out = {name: t.data for name, t in self.text.named().items()}
        out["image_w"] = self.image.image_w
        out["log_temperature"] = self.temperature.theta.data
        out["projection_V"] = self.bank.V.data
        return out

    def round_to_fp32(self):
        """Snap every array to its float32 value, i.e. what a checkpoint stores."""
        for t in (*self.text.named().values(), self.temperature.theta, self.bank.V):
            t.data = t.data.astype(np.float32).astype(np.float64)
        self.image.image_w = self.image.image_w.astype(np.float32).astype(np.float64)


def build_model(seed: int, d: int = 64, d_tok: int = 32, d_hidden: int | None = None,
                n_proj: int = 2, normalize: bool = False, learnable: bool = False,
                sigma: float = 0.0, tau_init: float = TAU_INIT, tau_max: float = TAU_MAX,
                vocab: Vocabulary | None = None) -> Model:
    vocab = vocab or Vocabulary()
    text, image = init_encoders(seed, d=d, d_tok=d_tok, n_vocab=len(vocab), d_hidden=d_hidden, sigma=sigma)
    bank = init_projection_bank(d, n_proj, seed, normalize=normalize, learnable=learnable)
    return Model(text, image, bank, Temperature(tau_init, tau_max), vocab, seed)


def save_checkpoint(model: Model, path) -> None:
    arrays = model.arrays()
    header = {
        "d": model.text.d,
        "d_tok": model.text.d_tok,
        "d_hidden": model.text.text_w1.shape[1],
        "n_vocab": len(model.vocab),
        "vocab_hash": model.vocab.hash,
        "seed": model.seed,
        "sigma": model.image.sigma,
        "tau_max": model.temperature.tau_max,
        "bank": {"n": model.bank.n, "normalize": model.bank.normalize,
                 "learnable": model.bank.learnable, "seed": model.bank.seed},
        "arrays": list(ARRAY_ORDER),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    buf = bytearray(MAGIC)
    buf += struct.pack("<II", FORMAT_VERSION, len(hbytes))
    buf += hbytes
    for name in ARRAY_ORDER:
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        buf += struct.pack("<H", len(name)) + name.encode("ascii")
        buf += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    buf += struct.pack("<I", zlib.crc32(buf))
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.off, self.path = data, 0, path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data) - 4:
            raise DataError(f"{self.path}: truncated while reading {what} at byte offset {self.off}")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path, vocab: Vocabulary | None = None) -> Model:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 20 or data[:8] != MAGIC:
        raise DataError(f"{path}: bad magic at byte offset 0")
    stored = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored:
        raise DataError(f"{path}: checksum mismatch (checksum stored at byte offset {len(data) - 4})")
    r = _Reader(data, path)
    r.off = 8
    version, hlen = r.unpack("<II", "format version")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version} at byte offset 8")
    header = json.loads(r.take(hlen, "header"))
    arrays = {}
    for expected in ARRAY_ORDER:
        at = r.off
        (nlen,) = r.unpack("<H", "array name length")
        name = r.take(nlen, "array name").decode("ascii", "replace")
        if name != expected:
            raise DataError(f"{path}: expected array {expected!r}, found {name!r} at byte offset {at}")
        (ndim,) = r.unpack("<B", f"{name} ndim")
        shape = r.unpack(f"<{ndim}I", f"{name} shape")
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(r.take(4 * count, f"{name} values"), dtype="<f4") \
            .reshape(shape).astype(np.float64)
    if r.off != len(data) - 4:
        raise DataError(f"{path}: unexpected trailing bytes at byte offset {r.off}")

    vocab = vocab or Vocabulary()
    if header["vocab_hash"] != vocab.hash:
        raise IncompatibleCheckpointError(
            f"{path}: vocabulary hash {header['vocab_hash']} does not match {vocab.hash}")
    b = header["bank"]

    def param(name):
        return Tensor(arrays[name].copy(), requires_grad=True)

    text = TextEncoderParams(*(param(n) for n in ARRAY_ORDER[:5]))
    image = ImageEncoderParams(arrays["image_w"], header["sigma"])
    bank = init_projection_bank(header["d"], b["n"], b["seed"], b["normalize"], b["learnable"])
    bank.V = Tensor(arrays["projection_V"], requires_grad=b["learnable"])
    temperature = Temperature(tau_max=header["tau_max"])
    temperature.theta = Tensor(arrays["log_temperature"].reshape(1), requires_grad=True)
    return Model(text, image, bank, temperature, vocab, header["seed"])
