import re
import warnings

import pytest

from arraymcts.bench import (
    CSV_HEADER,
    BenchConfig,
    BenchRecord,
    default_matrix,
    emit_csv,
    emit_fits_csv,
    emit_plot_data,
    fit_line,
    fit_slopes,
    parse_csv,
    run_benchmark,
    slope_ratios,
    verify_equivalence,
)
from arraymcts.mdp import make_bandit_env, make_chain_env
from arraymcts.tree_mcts import search_ref


def synthetic(impl, n, slope, depths=(4, 6, 8, 10), trials=3, intercept=0.002):
    return [BenchRecord(impl, n, d, t, 0, intercept + slope * d) for d in depths for t in range(trials)]


def test_record_cardinality():
    cfg = BenchConfig(impls=("tree",), ns=(100,), depths=(3,), trials=2, steps=2)
    records = run_benchmark(cfg, make_chain_env(5))
    assert len(records) == 4
    assert {(r.trial, r.step) for r in records} == {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert all(r.seconds > 0 and not r.failed for r in records)


def test_overflow_under_fail_marks_record(monkeypatch):
    from arraymcts import bench
    from arraymcts.mdp import make_bug_trap_env

    cfg = BenchConfig(impls=("array",), ns=(400,), depths=(4,), trials=1, steps=3, warmup=False)
    orig = bench._search_config
    # under-estimate the branching cap so the first search overflows
    monkeypatch.setattr(bench, "_search_config",
                        lambda *args: orig(*args).replace(state_branch_caps=2))
    records = run_benchmark(cfg, make_bug_trap_env())
    assert len(records) == 1 and records[0].failed
    good = synthetic("array", 400, 0.01)
    assert fit_slopes(records + good) == fit_slopes(good)


def test_exact_linear_fit():
    (fit,) = fit_slopes(synthetic("array", 5000, 0.01))
    assert fit.slope == pytest.approx(0.01, rel=1e-12)
    assert fit.intercept == pytest.approx(0.002, rel=1e-9)
    assert fit.r_squared == 1.0
    assert fit.points == 4


def test_slope_ratio_reference_values():
    fits = fit_slopes(synthetic("tree", 5000, 0.017) + synthetic("array", 5000, 0.008))
    assert slope_ratios(fits) == {5000: pytest.approx(2.125)}


def test_two_point_fit_is_closed_form():
    slope, intercept, r2 = fit_line([4, 9], [0.3, 1.1])
    assert slope == pytest.approx(0.8 / 5)
    assert intercept == pytest.approx(0.3 - 4 * 0.16)
    assert r2 == 1.0
    with pytest.raises(ValueError):
        fit_line([3, 3], [1, 2])


def test_too_few_depths_warns_and_skips():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fits = fit_slopes(synthetic("tree", 10, 0.1, depths=(4, 6)) + synthetic("array", 10, 0.1))
    assert [f.impl for f in fits] == ["array"]
    assert any("tree" in str(w.message) for w in caught)


def test_csv_round_trip(tmp_path):
    records = synthetic("array_unsorted", 2000, 0.0031) + [BenchRecord("tree", 7, 2, 1, 3, 1e-7)]
    path = emit_csv(records, tmp_path / "r.csv")
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    assert parse_csv(path) == records


def test_empty_csv_is_header_only(tmp_path):
    path = emit_csv([], tmp_path / "empty.csv")
    assert path.read_text() == "impl,n,depth,trial,step,seconds\n"
    assert parse_csv(path) == []


def test_csv_write_error_names_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        emit_csv([], tmp_path / "missing" / "r.csv")


def test_fits_csv(tmp_path):
    path = emit_fits_csv(fit_slopes(synthetic("array", 10, 0.5)), tmp_path / "f.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "impl,n,slope,intercept,r_squared,points" and len(lines) == 2


def test_plot_data_from_csv(tmp_path):
    records = synthetic("tree", 100, 0.02) + synthetic("array", 100, 0.01) + synthetic("array", 500, 0.03)
    csv_path = emit_csv(records, tmp_path / "r.csv")
    emit_plot_data(csv_path, tmp_path / "p.dat", tmp_path / "p.svg")
    svg = (tmp_path / "p.svg").read_text()
    assert svg.count("<polyline") == 3
    dat = (tmp_path / "p.dat").read_text()
    blocks = [b for b in dat.split("\n\n\n") if b.strip()]
    assert len(blocks) == 3
    rows = [ln.split() for ln in blocks[0].splitlines() if not ln.startswith("#")]
    assert [int(r[0]) for r in rows] == [4, 6, 8, 10]
    assert float(rows[0][1]) == pytest.approx(0.002 + 0.01 * 4)


def test_verify_passes_on_matrix():
    envs = {"bandit": make_bandit_env((0.2, 0.5, 0.9)), "chain": make_chain_env(5)}
    report = verify_equivalence(default_matrix(seeds=3, ns=(100,), depths=(1, 4), envs=envs))
    assert report.ok and len(report.results) == 2 * 2 * 3 * 2
    assert all(r.line().startswith("PASS") for r in report.results)


def last_max(items, key):
    best = None
    for item in items:
        if best is None or key(item) >= key(best):
            best = item
    return best


def test_verify_catches_flipped_tie_break():
    envs = {"chain": make_chain_env(5)}
    flipped = {"tree_flipped": lambda root, env, cfg: search_ref(root, env, cfg, argmax=last_max)}
    report = verify_equivalence(default_matrix(seeds=3, ns=(100,), depths=(5,), envs=envs),
                                impls=("tree_flipped",), runners=flipped)
    assert not report.ok
    bad = report.first_failure()
    assert re.search(r"depth \d+", bad.line()) and bad.divergence.field in {"visits", "value", "index",
                                                                            "parent", "slot", "coords",
                                                                            "length"}


def test_verify_empty_matrix_passes_with_warning():
    with pytest.warns(UserWarning, match="empty"):
        report = verify_equivalence([])
    assert report.ok and report.warnings


def test_bench_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(impls=("gpu",))
    with pytest.raises(ValueError):
        BenchConfig(ns=(0,))
