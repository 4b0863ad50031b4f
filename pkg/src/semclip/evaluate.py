"""Retrieval, original-over-negation, composite and zero-shot metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .encoders import encode_images, encode_texts, tokenize
from .errors import ContractError
from .model import Model
from .scene import RELATIONS

ZERO_SHOT_CLASSES = ("left", "right", "above", "below")
ZERO_SHOT_TEMPLATE = "this is a photo of {}"
ZERO_SHOT_NEGATED = "this is not a photo of {}"
ZERO_SHOT_TASK = "relation"


def accuracy(pred, labels) -> float:
    pred, labels = np.asarray(pred), np.asarray(labels)
    return 100.0 * float(np.mean(pred == labels))


def top1_retrieval_accuracy(text_queries, image_gallery, matched_index) -> float:
    """Percent of queries whose matched gallery image has the highest cosine.

    Ties go to the lowest gallery index.
    """
    q = np.atleast_2d(np.asarray(text_queries, dtype=np.float64))
    g = np.atleast_2d(np.asarray(image_gallery, dtype=np.float64))
    if g.shape[0] == 0 or g.size == 0:
        raise ContractError("top-1 retrieval needs a non-empty gallery")
    target = np.asarray(matched_index, dtype=np.int64)
    if np.any(target < 0) or np.any(target >= g.shape[0]):
        raise ContractError("matched index outside the gallery")
    qn = q / np.linalg.norm(q, axis=1, keepdims=True)
    gn = g / np.linalg.norm(g, axis=1, keepdims=True)
    hits = _kernels.top1_hits(np.ascontiguousarray(qn @ gn.T), target)
    return 100.0 * float(hits.mean())


def original_over_negation_accuracy(images, originals, negations) -> float:
    """Percent of samples with cos(i, t) > cos(i, t-); exact ties fail."""
    i, t, tn = (np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in (images, originals, negations))

    def cos(a, b):
        return (a * b).sum(axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))

    return 100.0 * float(np.mean(cos(i, t) > cos(i, tn)))


def rescale_negation(acc_neg: float) -> float:
    """Map chance (50%) to 0 and perfect (100%) to 100, floored at 0."""
    return max(0.0, 2.0 * (acc_neg - 50.0))


def composite_score(acc_orig: float, acc_para: float, acc_neg: float) -> float:
    for name, v in (("acc_orig", acc_orig), ("acc_para", acc_para), ("acc_neg", acc_neg)):
        if not 0.0 <= v <= 100.0:
            raise ContractError(f"{name}={v} outside [0, 100]")
    return (acc_orig + acc_para + rescale_negation(acc_neg)) / 3.0


def negation_delta(standard_acc: float, negated_acc: float) -> float:
    for v in (standard_acc, negated_acc):
        if not 0.0 <= v <= 100.0:
            raise ContractError(f"accuracy {v} outside [0, 100]")
    return standard_acc - negated_acc


def plotted_delta(delta: float) -> float:
    """Negative deltas are drawn as zero; stored values keep their sign."""
    return max(0.0, delta)


def zero_shot_classify(images, labels, class_names, model: Model, negated: bool = False) -> float:
    """Top-1 accuracy of argmax-cosine prompt classification."""
    if len(class_names) < 2:
        raise ContractError("zero-shot classification needs at least two classes")
    template = ZERO_SHOT_NEGATED if negated else ZERO_SHOT_TEMPLATE
    seqs = [tokenize(template.format(c), model.vocab) for c in class_names]
    prompts = encode_texts(seqs, model.text).data
    sims = np.asarray(images) @ prompts.T
    return accuracy(np.argmax(sims, axis=1), labels)


@dataclass
class EvalReport:
    acc_orig: float
    acc_para: float
    acc_neg: float
    acc_neg_rescaled: float
    composite: float
    zero_shot: dict = field(default_factory=dict)
    variant: str = ""
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def gallery(scenes):
    """Unique scenes in first-seen order and each input's index into them."""
    keys = {}
    for s in scenes:
        keys.setdefault(s.key, s)
    order = {k: i for i, k in enumerate(keys)}
    return list(keys.values()), np.array([order[s.key] for s in scenes], dtype=np.int64)


def evaluate_model(model: Model, records, variant: str = "", config: dict | None = None,
                   zero_shot: bool = True, seed: int = 0) -> EvalReport:
    scenes = [s for s, _ in records]
    triples = [t for _, t in records]
    if not scenes:
        raise ContractError("evaluation needs at least one record")
    unique, target = gallery(scenes)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
    images = encode_images(unique, model.image, rng)

    def embed(texts):
        return encode_texts([tokenize(x, model.vocab) for x in texts], model.text).data

    t = embed([x.original for x in triples])
    tp = embed([x.paraphrase for x in triples])
    tn = embed([x.negation for x in triples])
    acc_orig = top1_retrieval_accuracy(t, images, target)
    acc_para = top1_retrieval_accuracy(tp, images, target)
    acc_neg = original_over_negation_accuracy(images[target], t, tn)
    report = EvalReport(acc_orig, acc_para, acc_neg, rescale_negation(acc_neg),
                        composite_score(acc_orig, acc_para, acc_neg), variant=variant,
                        config=dict(config or {}))
    if zero_shot:
        labels = np.array([RELATIONS.index(s.relation) for s in unique])
        std = zero_shot_classify(images, labels, ZERO_SHOT_CLASSES, model)
        neg = zero_shot_classify(images, labels, ZERO_SHOT_CLASSES, model, negated=True)
        report.zero_shot = {ZERO_SHOT_TASK: {"standard_acc": std, "negated_acc": neg,
                                             "delta": negation_delta(std, neg)}}
    return report


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

METRIC_LABELS = (
    ("acc_orig", "Original Caption (Top-1 Acc)"),
    ("acc_para", "Paraphrased Caption (Top-1 Acc)"),
    ("acc_neg", "Original over Negated (Acc)"),
    ("composite", "Composite Score"),
)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x))


def report_csv(reports, dataset: str = "synthetic") -> str:
    """Long format: metric, dataset, variant, value."""
    rows = [(label, dataset, r.variant, _fmt(getattr(r, key)))
            for key, label in METRIC_LABELS for r in reports]
    return _csv(rows, ("metric", "dataset", "variant", "value"))


def zero_shot_csv(reports) -> str:
    rows = []
    for r in reports:
        for task, z in sorted(r.zero_shot.items()):
            rows.append((task, r.variant, _fmt(z["standard_acc"]), _fmt(z["negated_acc"]), _fmt(z["delta"])))
    return _csv(rows, ("task", "variant", "standard_acc", "negated_acc", "delta"))
