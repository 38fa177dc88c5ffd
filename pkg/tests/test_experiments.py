import numpy as np
import pytest

from tppg import CVConfig, make_structure
from tppg.experiments import (Cell, StudyConfig, desk_cells, filter_cells, format_records_csv, format_table_csv,
                              format_table_markdown, full_cells, mean_se, replicate_seed, run_table, setting_model,
                              simulate_cell, study_for_scale, summarize)

TINY = Cell(1, "block", 5, 40)
STUDY = StudyConfig(n_replicates=2, seed=1, M_multiplier=5, burn_in=5.0,
                    cv=CVConfig(K=3, n_lambdas=4, ratio=0.05), n_roc_lambdas=5, roc_ratio=0.05)


def test_cells_and_scales():
    assert len(desk_cells()) == 4 and all(c.p == 30 and c.T == 200 for c in desk_cells())
    assert len(full_cells()) == 16
    cells, study = study_for_scale("desk", 3)
    assert study.n_replicates == 5 and study.seed == 3
    assert study_for_scale("full", 0)[1].n_replicates == 50
    assert filter_cells(cells, [1], ["block"]) == [Cell(1, "block", 30, 200)]
    with pytest.raises(ValueError):
        study_for_scale("huge", 0)


def test_setting_models():
    m1, m2 = setting_model(1, "block", 10), setting_model(2, "chain", 10)
    assert m1.links.kind == "arctan" and m1.kernels.kind == "restricted_linear"
    assert m2.links.kind == "sigmoid" and m2.kernels.kind == "exponential"
    np.testing.assert_array_equal(m2.B, make_structure("chain", 10))


def test_replicate_seeds_are_distinct_and_stable():
    seeds = [replicate_seed(0, r) for r in range(50)]
    assert len(set(seeds)) == 50 and seeds == [replicate_seed(0, r) for r in range(50)]
    assert replicate_seed(1, 0) != replicate_seed(0, 0)


def test_simulate_cell_shapes():
    model, design = simulate_cell(TINY, 5, STUDY)
    assert design.p == 5 and design.horizon == 40 and design.M == 200


def test_error_table_records_and_worker_independence():
    a = run_table("t1", [TINY], STUDY, ("Sparse-Naive", "vanilla-MLE"))
    b = run_table("t1", [TINY], STUDY, ("Sparse-Naive", "vanilla-MLE"), threads=2)
    assert format_records_csv(a, "t1") == format_records_csv(b, "t1")
    assert len(a) == 4 and {r["method"] for r in a} == {"Sparse-Naive", "vanilla-MLE"}
    assert all(r["lambda"] == 0.0 for r in a if r["method"] == "vanilla-MLE")
    assert all(r["rel_l1"] >= 0 and r["rel_fro"] >= 0 for r in a)


def test_auc_table_records():
    recs = run_table("t3", [TINY], STUDY)
    assert len(recs) == 4 and all(0 <= r["auc"] <= 1 for r in recs)


def test_run_table_rejects_unknown_inputs():
    with pytest.raises(ValueError):
        run_table("t9", [TINY], STUDY)
    with pytest.raises(ValueError):
        run_table("t3", [TINY], STUDY, ("vanilla-MLE",))


def test_summary_and_formatting():
    recs = [{"setting": 1, "structure": "block", "p": 30, "T": 200, "replicate": r, "method": "Sparse-Naive",
             "rel_l1": v, "rel_fro": v / 2, "lambda": 0.1} for r, v in enumerate([0.6, 0.8])]
    rows = summarize(recs, "t1")
    assert rows[0]["Sparse-Naive"] == pytest.approx((0.7, 0.1))
    csv = format_table_csv(rows, "t1", ["Sparse-Naive"])
    assert csv == "setting,structure,p,T,Sparse-Naive\n1,Block,30,200,0.700(0.100)\n"
    md = format_table_markdown(rows, "t1", ["Sparse-Naive"])
    assert "| Setting 1 | Block | 30 | 200 | 0.700(0.100) |" in md
    assert mean_se([1.0])[1] != mean_se([1.0])[1]  # a single value has no standard error
