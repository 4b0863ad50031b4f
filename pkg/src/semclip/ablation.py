"""Loss-variant x projection-bank grid sweep."""
from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import SemClipError
from .evaluate import ZERO_SHOT_TASK, EvalReport, composite_score, evaluate_model, report_csv, zero_shot_csv
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

VARIANT_ORDER = ("baseline", "paraphrase", "negation", "semclip")
GRID = tuple(
    {"n_proj": n, "learnable": learnable, "normalize": normalize}
    for n, learnable, normalize in itertools.product((1, 2), (True, False), (True, False))
)
SWEEP_COLUMNS = ("variant", "n_proj", "learnable", "normalize", "status", "acc_orig", "acc_para",
                 "acc_neg", "composite", "standard_acc", "negated_acc", "delta")


@dataclass
class SweepRow:
    variant: str
    n_proj: int | None
    learnable: bool | None
    normalize: bool | None
    status: str
    report: EvalReport | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def cell(self) -> str:
        if self.n_proj is None:
            return self.variant
        return f"{self.variant}-n{self.n_proj}-{'learn' if self.learnable else 'fixed'}" \
               f"-{'norm' if self.normalize else 'raw'}"


def plan(variants=VARIANT_ORDER) -> list[tuple[str, dict | None]]:
    """(variant, bank cell) pairs; the baseline never touches the bank so it runs once."""
    out = []
    for v in variants:
        if v == "baseline":
            out.append((v, None))
        else:
            out.extend((v, cell) for cell in GRID)
    return out


def run_cell(base: TrainConfig, variant: str, cell: dict | None, train_records, test_records,
             out_dir=None) -> SweepRow:
    bank = cell or {}
    row = SweepRow(variant, bank.get("n_proj"), bank.get("learnable"), bank.get("normalize"), "ok")
    try:
        config = dataclasses.replace(base, variant=variant, **bank)
        target = Path(out_dir) / row.cell if out_dir is not None else None
        model = train(config, train_records, out_dir=target).model
        row.report = evaluate_model(model, test_records, variant, config.to_dict(), seed=config.seed)
    except (SemClipError, ArithmeticError, ValueError) as exc:
        row.status = f"failed: {type(exc).__name__}: {exc}"
        log.warning("cell %s failed: %s", row.cell, exc)
    return row


def _run_packed(args):
    return run_cell(*args)


def ablation_sweep(base: TrainConfig, train_records, test_records, variants=VARIANT_ORDER,
                   out_dir=None, workers: int = 1) -> list[SweepRow]:
    """Train and evaluate every planned cell. Failures are recorded, not raised.

    Each cell trains from ``base.seed`` in its own process when ``workers > 1``;
    results come back in plan order either way.
    """
    jobs = [(base, v, cell, train_records, test_records, out_dir) for v, cell in plan(variants)]
    if workers <= 1:
        return [run_cell(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_packed, jobs))


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        rep = r.report
        z = rep.zero_shot.get(ZERO_SHOT_TASK, {}) if rep else {}
        w.writerow([r.variant, _fmt(r.n_proj), _fmt(r.learnable), _fmt(r.normalize), r.status,
                    *(_fmt(getattr(rep, k)) if rep else "" for k in ("acc_orig", "acc_para", "acc_neg",
                                                                     "composite")),
                    *(_fmt(z.get(k)) for k in ("standard_acc", "negated_acc", "delta"))])
    return buf.getvalue()


def best_per_variant(rows) -> list[SweepRow]:
    """Highest-composite successful cell of each variant, in variant order.

    The composite is recomputed from the row's own accuracy columns, so the
    summary is internally consistent by construction. Ties keep the earlier cell.
    """
    best = {}
    for r in rows:
        if not r.ok:
            continue
        rep = r.report
        score = composite_score(rep.acc_orig, rep.acc_para, rep.acc_neg)
        if r.variant not in best or score > best[r.variant][0]:
            best[r.variant] = (score, r)
    return [best[v][1] for v in VARIANT_ORDER if v in best]


def summary_csv(rows, dataset: str = "synthetic") -> str:
    return report_csv([r.report for r in best_per_variant(rows)], dataset)


def summary_zero_shot_csv(rows) -> str:
    return zero_shot_csv([r.report for r in best_per_variant(rows)])
