"""Experiment plumbing: sampler, config, ordering checks, small workbench."""

import numpy as np
import pytest
from scipy import stats as sstats

from mcfront.codec_lab import UNCOMPRESSED, BitratePlan
from mcfront.corpus import SyntheticCorpusConfig
from mcfront.errors import DomainError
from mcfront.harness import (
    CHECKS,
    ExperimentConfig,
    Workbench,
    check_allocation,
    check_mixed_training,
    check_single_vs_multi,
    check_sweep,
    mixed_bitrate_sampler,
    run_experiment,
)
from mcfront.model import TrainConfig
from mcfront.reporting import DegradationReport, ReportRow


def _row(cond, metric, deg, clean=None, noisy=None, experiment="sweep"):
    return ReportRow(
        experiment=experiment, condition=cond, absolute_metric=metric,
        rel_degradation=deg, clean=clean, noisy=noisy, seed=0, config_hash="x",
    )


def test_experiment_config_validation():
    with pytest.raises(DomainError):
        ExperimentConfig(experiment="nope")
    cfg = ExperimentConfig()
    assert cfg.budgets == (8, 16, 32, 64, 128)
    assert len(cfg.hash()) == 12


def test_sampler_one_assignment_per_item():
    items = list(range(100))
    out = mixed_bitrate_sampler(items, seed=3)
    assert [i for i, _ in out] == items
    assert all(r in (UNCOMPRESSED, 16, 32, 64, 128) for _, r in out)


def test_sampler_deterministic_and_seed_sensitive():
    items = list(range(50))
    a = mixed_bitrate_sampler(items, seed=1)
    b = mixed_bitrate_sampler(items, seed=1)
    c = mixed_bitrate_sampler(items, seed=2)
    assert a == b
    assert a != c
    with pytest.raises(DomainError):
        mixed_bitrate_sampler(items, rate_set=())


def test_sampler_chi_square_uniform():
    rates = (UNCOMPRESSED, 16, 32, 64, 128)
    out = mixed_bitrate_sampler(range(10_000), rate_set=rates, seed=0)
    counts = [sum(1 for _, r in out if r == rate) for rate in rates]
    chi2, p = sstats.chisquare(counts)
    assert p > 0.01


def test_check_sweep_orderings():
    good = DegradationReport(rows=[
        _row("uncompressed", 10.0, None),
        _row("8", 40.0, 300.0), _row("16", 15.0, 50.0),
        _row("32", 12.0, 20.0), _row("128", 10.5, 5.0),
    ])
    assert check_sweep(good) == []
    bad = DegradationReport(rows=[
        _row("uncompressed", 10.0, None),
        _row("8", 12.0, 20.0), _row("16", 15.0, 50.0),
        _row("32", 12.0, 20.0), _row("128", 10.5, 5.0),
    ])
    problems = check_sweep(bad)
    assert problems  # 8 not worse than 16, and below the 3x margin


def test_check_single_vs_multi():
    rows = [_row("multi@uncompressed", 10.0, None), _row("single@uncompressed", 12.0, None)]
    for x in (8, 16, 32, 64, 128):
        rows.append(_row(f"multi@{x}/ch", 11.0, 10.0))
        rows.append(_row(f"single@{2 * x}", 13.0, 8.3))
    assert check_single_vs_multi(DegradationReport(rows=rows)) == []
    rows[2] = _row("multi@8/ch", 99.0, 890.0)
    problems = check_single_vs_multi(DegradationReport(rows=rows))
    assert len(problems) == 1 and "budget 16" in problems[0]


def test_check_allocation():
    rows = [
        _row("uncompressed", 10.0, None),
        _row("256,8", 14.0, 40.0), _row("256,32", 10.1, 1.0),
        _row("132,132", 10.3, 3.0), _row("144,144", 10.3, 3.0),
    ]
    assert check_allocation(DegradationReport(rows=rows)) == []
    rows[1] = _row("256,8", 10.0, 0.0)  # no longer worse than the equal split
    assert check_allocation(DegradationReport(rows=rows))


def test_check_mixed_training():
    rows = [
        _row("test=U|train=U", 10.0, None),
        _row("test=16|train=U", 12.6, 26.0),
        _row("test=16|train=16", 11.0, 10.0),
        _row("test=16|train=mixed", 10.8, 8.0),
        _row("test=U|train=mixed", 10.3, 3.4),
    ]
    assert check_mixed_training(DegradationReport(rows=rows)) == []
    rows[4] = _row("test=U|train=mixed", 10.0, 0.0)
    assert check_mixed_training(DegradationReport(rows=rows))
    assert set(CHECKS) == {"sweep", "single_vs_multi", "allocation", "mixed_training"}


@pytest.fixture(scope="module")
def tiny_bench():
    cfg = ExperimentConfig(
        seed=0,
        corpus=SyntheticCorpusConfig(num_utterances=10, utterance_seconds=0.3, seed=0),
        train=TrainConfig(epochs=1, seed=0),
    )
    return cfg, Workbench(cfg)


def test_workbench_feature_caching(tiny_bench):
    cfg, bench = tiny_bench
    a = bench.features("train", 0, None)
    b = bench.features("train", 0, None)
    assert a is b
    coded = bench.features("train", 0, BitratePlan.uniform(16, 2))
    assert coded is not a
    assert coded.data.shape == a.data.shape


def test_workbench_dataset_shapes(tiny_bench):
    cfg, bench = tiny_bench
    ds = bench.dataset("train")
    assert len(ds) == len(bench.corpus.train)
    feats, labels = ds[0]
    assert feats.stage == "complex_stft"
    assert feats.data.shape[1] == 2  # two channels


def test_run_experiment_smoke_and_report_shape(tiny_bench):
    cfg, bench = tiny_bench
    report = run_experiment(cfg, bench)  # sweep by default
    conditions = [r.condition for r in report.rows]
    assert conditions[0] == "uncompressed"
    assert conditions[1:] == ["8", "16", "32", "128"]
    assert report.rows[0].rel_degradation is None
    for r in report.rows[1:]:
        assert r.rel_degradation is not None


def test_single_vs_multi_budget_bookkeeping(tiny_bench):
    cfg, bench = tiny_bench
    from mcfront.harness import run_single_vs_multi

    cfg2 = ExperimentConfig(
        experiment="single_vs_multi", seed=0, corpus=cfg.corpus, train=cfg.train,
        budgets=(64,),
    )
    report = run_single_vs_multi(cfg2, bench)
    conditions = [r.condition for r in report.rows]
    assert "multi@64/ch" in conditions
    assert "single@128" in conditions  # x = 64 pairs with single at 128 kbps
