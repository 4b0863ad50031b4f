import dataclasses
import re

import pytest

from semclip.ablation import GRID, SweepRow, ablation_sweep, best_per_variant, plan, run_cell, summary_csv, sweep_csv
from semclip.evaluate import composite_score
from semclip.plotting import delta_chart, delta_data_csv, grouped_bar_svg, read_csv
from semclip.trainer import TrainConfig

FAST = TrainConfig(epochs=2, d=16, d_tok=8, d_hidden=16, batch_size=32)


def test_grid_cardinality():
    assert len(GRID) == 8
    cells = plan()
    assert sum(v == "semclip" for v, _ in cells) == 8
    assert len(cells) == 1 + 3 * 8


def test_baseline_ignores_bank_settings(small_dataset):
    reports = [run_cell(FAST, "baseline", cell, small_dataset.train, small_dataset.test).report
               for cell in (GRID[0], GRID[-1])]
    for key in ("acc_orig", "acc_para", "acc_neg", "composite", "zero_shot"):
        assert getattr(reports[0], key) == getattr(reports[1], key)


def test_sweep_records_failures_and_continues(small_dataset):
    bad = dataclasses.replace(FAST, d=2, n_proj=1)  # cells with n_proj=2 need d > 2
    rows = ablation_sweep(bad, small_dataset.train, small_dataset.test, ["baseline", "negation"])
    assert len(rows) == 9
    assert all(not r.ok for r in rows if r.n_proj == 2)
    assert any(r.ok for r in rows)
    csv_lines = sweep_csv(rows).splitlines()
    assert sum("failed" in line for line in csv_lines) == 4


def test_summary_is_internally_consistent(small_dataset):
    rows = ablation_sweep(FAST, small_dataset.train, small_dataset.test, ["baseline", "semclip"])
    best = best_per_variant(rows)
    assert [r.variant for r in best] == ["baseline", "semclip"]
    for r in best:
        rep = r.report
        assert rep.composite == composite_score(rep.acc_orig, rep.acc_para, rep.acc_neg)
    lines = summary_csv(rows).splitlines()
    assert len(lines) == 1 + 4 * 2


def test_parallel_matches_serial(small_dataset):
    serial = ablation_sweep(FAST, small_dataset.train, small_dataset.test, ["baseline", "negation"])
    parallel = ablation_sweep(FAST, small_dataset.train, small_dataset.test, ["baseline", "negation"], workers=2)
    assert sweep_csv(serial) == sweep_csv(parallel)


ZERO_SHOT_ROWS = [
    {"task": "relation", "variant": "baseline", "delta": "-20.0"},
    {"task": "relation", "variant": "semclip", "delta": "12.5"},
]


def test_delta_clamp_only_in_svg():
    svg = delta_chart(ZERO_SHOT_ROWS)
    heights = re.findall(r'<rect x="[^"]+" y="[^"]+" width="[^"]+" height="([^"]+)" fill="#', svg)
    assert float(heights[0]) == 0.0 and float(heights[1]) > 0
    data = delta_data_csv(ZERO_SHOT_ROWS).splitlines()
    assert data[1] == "relation,baseline,-20.0,0.0"


def test_svg_is_deterministic(tmp_path):
    path = tmp_path / "zero_shot.csv"
    path.write_text("task,variant,standard_acc,negated_acc,delta\nrelation,semclip,50.0,40.0,10.0\n")
    assert delta_chart(read_csv(path)) == delta_chart(read_csv(path))


def test_grouped_bar_rejects_empty():
    with pytest.raises(ValueError):
        grouped_bar_svg([], ["a"], {}, "t")
