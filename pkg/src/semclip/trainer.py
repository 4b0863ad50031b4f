"""AdamW training loop with warmup + cosine schedule, accumulation and clipping."""
from __future__ import annotations

import copy
import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .encoders import encode_images, pad_batch, text_forward, tokenize
from .errors import ContractError, NumericError
from .losses import TAU_INIT, TAU_MAX, VARIANTS, LossWeights, total_loss
from .model import Model, build_model, save_checkpoint
from .projection import reorthonormalize

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "lr", "total", "contrastive", "paraphrase", "negation", "tau")
NO_DECAY = ("text_b1", "text_b2", "log_temperature", "projection_V")


@dataclass
class TrainConfig:
    epochs: int = 200
    peak_lr: float = 5e-5
    warmup_steps: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.2
    accumulation_steps: int = 2
    clip_max_norm: float = 1.0
    batch_size: int = 64
    seed: int = 42
    variant: str = "semclip"
    n_proj: int = 2
    normalize: bool = False
    learnable: bool = False
    d: int = 64
    d_tok: int = 32
    d_hidden: int = 64
    sigma: float = 0.5
    tau_init: float = TAU_INIT
    tau_max: float = TAU_MAX

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")
        if min(self.peak_lr, self.batch_size, self.epochs, self.clip_max_norm) <= 0:
            raise ContractError("rates, epochs and batch size must be positive")
        if self.accumulation_steps < 1 or self.warmup_steps < 0:
            raise ContractError("accumulation_steps must be >= 1 and warmup_steps >= 0")

    @property
    def weights(self) -> LossWeights:
        return VARIANTS[self.variant]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def lr_schedule(step: int, config: TrainConfig, total_steps: int) -> float:
    """Linear warmup to the peak, then half-cosine down to 0 at ``total_steps``."""
    if step < 0:
        raise ContractError("step must be non-negative")
    step = min(step, total_steps)
    peak, warm = config.peak_lr, config.warmup_steps
    if step < warm:
        return peak * step / warm
    if total_steps <= warm:
        return peak
    progress = (step - warm) / (total_steps - warm)
    return peak * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adamw_step(params: dict, grads: dict, state: OptimizerState, lr: float, config: TrainConfig,
               no_decay=NO_DECAY) -> None:
    """In-place AdamW update (decoupled weight decay) of the arrays in ``params``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r} at optimizer step {state.step + 1}")
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        update = m_hat / (np.sqrt(v_hat) + config.eps)
        if name not in no_decay:
            update = update + config.weight_decay * p
        p -= lr * update


def clip_gradients(grads: dict, max_norm: float) -> tuple[dict, float]:
    """Scale all gradients jointly so their global l2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        factor = max_norm / norm
        return {k: g * factor for k, g in grads.items()}, norm
    return grads, norm


# --------------------------------------------------------------------------
# data tensors
# --------------------------------------------------------------------------

@dataclass
class Batchable:
    """Pre-tokenized captions and frozen image embeddings for one split."""
    scenes: list
    images: np.ndarray
    orig: tuple
    para: tuple
    neg: tuple

    def __len__(self):
        return len(self.scenes)


def prepare(records, model: Model, rng: np.random.Generator | None = None) -> Batchable:
    scenes = [s for s, _ in records]
    triples = [t for _, t in records]

    def padded(texts):
        return pad_batch([tokenize(x, model.vocab) for x in texts])

    images = encode_images(scenes, model.image, rng)
    return Batchable(scenes, images,
                     padded([t.original for t in triples]),
                     padded([t.paraphrase for t in triples]),
                     padded([t.negation for t in triples]))


def _stack(parts, sel):
    width = max(p[0].shape[1] for p in parts)
    idx = np.concatenate([np.pad(p[0][sel], ((0, 0), (0, width - p[0].shape[1]))) for p in parts])
    return idx, np.concatenate([p[1][sel] for p in parts])


def batch_loss(data: Batchable, sel: np.ndarray, model: Model, weights: LossWeights):
    idx, lengths = _stack((data.orig, data.para, data.neg), sel)
    texts = text_forward(idx, lengths, model.text)
    b = len(sel)
    return total_loss(ad.Tensor(data.images[sel]), ad.rows(texts, 0, b), ad.rows(texts, b, 2 * b),
                      ad.rows(texts, 2 * b, 3 * b), weights, model.bank, model.temperature.theta)


# --------------------------------------------------------------------------
# loop
# --------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: Model
    log_rows: list
    total_steps: int
    resampled_columns: int = 0

    def log_csv(self) -> str:
        return format_log(self.log_rows)


def format_log(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in rows:
        w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])
    return buf.getvalue()


def micro_batches(n: int, config: TrainConfig) -> int:
    return math.ceil(n / config.batch_size)


def count_steps(n: int, config: TrainConfig) -> int:
    return math.ceil(config.epochs * micro_batches(n, config) / config.accumulation_steps)


def train(config: TrainConfig, train_records, out_dir=None, model: Model | None = None,
          on_step=None) -> TrainResult:
    """Train on ``train_records`` (list of (Scene, CaptionTriple)).

    With ``out_dir`` set, writes ``checkpoint.bin`` and ``loss_log.csv`` there.
    A NaN/Inf loss aborts with :class:`NumericError` after the last-good
    (end of previous epoch) checkpoint has been written. ``on_step(step, model)``
    is called after every optimizer update.
    """
    if not train_records:
        raise ContractError("empty training set")
    if any(not t.validated for _, t in train_records):
        raise ContractError("training set contains unvalidated triples")
    model = model or build_model(config.seed, d=config.d, d_tok=config.d_tok, d_hidden=config.d_hidden,
                                 n_proj=config.n_proj, normalize=config.normalize,
                                 learnable=config.learnable, sigma=config.sigma,
                                 tau_init=config.tau_init, tau_max=config.tau_max)
    data_ss, noise_ss = np.random.SeedSequence([config.seed, 0xDA7A]).spawn(2)
    shuffle_rng = np.random.default_rng(data_ss)
    data = prepare(train_records, model, np.random.default_rng(noise_ss))
    weights = config.weights
    n = len(data)
    total_steps = count_steps(n, config)
    params = model.trainable()
    state = OptimizerState()
    rows, pending = [], []
    resampled = 0
    out = Path(out_dir) if out_dir is not None else None
    snapshot = None

    def apply_update():
        nonlocal resampled
        k = len(pending)
        grads = {name: p.grad / k for name, p in params.items()}
        grads, _ = clip_gradients(grads, config.clip_max_norm)
        lr = lr_schedule(state.step + 1, config, total_steps)
        adamw_step({name: p.data for name, p in params.items()}, grads, state, lr, config)
        model.temperature.clamp()
        if model.bank.learnable:
            resampled += len(reorthonormalize(model.bank))
        for p in params.values():
            p.zero_grad()
        mean = np.mean([[r.total, r.contrastive, r.paraphrase, r.negation, r.tau] for r in pending], axis=0)
        rows.append((state.step, lr, *mean))
        pending.clear()
        if on_step is not None:
            on_step(state.step, model)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            sel = order[start:start + config.batch_size]
            loss, report = batch_loss(data, sel, model, weights)
            if not math.isfinite(report.total):
                if out is not None and snapshot is not None:
                    save_checkpoint(snapshot, out / "checkpoint.bin")
                raise NumericError(f"non-finite loss at epoch {epoch}, optimizer step {state.step}")
            ad.backward(loss)
            pending.append(report)
            if len(pending) == config.accumulation_steps:
                apply_update()
        if out is not None:
            snapshot = copy.deepcopy(model)
    if pending:
        apply_update()

    model.round_to_fp32()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, out / "checkpoint.bin")
        (out / "loss_log.csv").write_text(format_log(rows))
    return TrainResult(model, rows, total_steps, resampled)
