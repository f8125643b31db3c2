"""Acceptance battery: one criterion per test, one PASS/FAIL line each.

The experiment criteria (4-7) share one session-scoped workbench at the
default configuration and train real models; run with ``-s`` to watch the
verdict lines. Stated time limits are asserted alongside the orderings.
"""

import time

import numpy as np
import pytest
from scipy import stats as sps

from mcfront.beamformer import build_bank
from mcfront.codec_lab import BitratePlan, band_energy_ratio, transcode
from mcfront.corpus import SyntheticCorpusConfig, generate_corpus, synthesize_utterance
from mcfront.frontend import FeatureTensor, Frontend, FrontendParams, compute_norm_stats
from mcfront.geometry import (
    default_look_directions,
    diffuse_coherence,
    paper_circular_7,
    select_opposite_pair,
    steering_vector,
)
from mcfront.harness import (
    CHECKS,
    ExperimentConfig,
    Workbench,
    mixed_bitrate_sampler,
    run_allocation,
    run_bitrate_sweep,
    run_mixed_training,
    run_single_vs_multi,
)
from mcfront.model import AcousticModelConfig, TrainConfig, cross_entropy, init_model
from mcfront.reporting import emit_report

from dataclasses import replace


def _verdict(num: int, name: str, problems: list):
    ok = not problems
    print(f"criterion {num} ({name}): {'PASS' if ok else 'FAIL'}")
    assert ok, f"criterion {num} ({name}): " + "; ".join(str(p) for p in problems)


@pytest.fixture(scope="session")
def bench():
    return Workbench(ExperimentConfig(seed=0))


# -- 1: beamformer properties -------------------------------------------------

def test_criterion_1_beamformer_distortionless_and_optimal():
    t0 = time.monotonic()
    problems = []
    geom = paper_circular_7()
    pair = select_opposite_pair(geom)
    dirs = default_look_directions(12)
    bank = build_bank(geom, pair, dirs)
    for k in range(127):
        freq = bank.bin_frequencies[k]
        for j in range(12):
            d = steering_vector(geom, pair, dirs[j], freq)
            err = abs(np.vdot(bank.weights[k, j], d) - 1.0)
            if err >= 1e-9:
                problems.append(f"bin {k} dir {j}: |w^H d - 1| = {err:.2e}")
    rng = np.random.default_rng(0)
    for k in (5, 31, 64, 101, 126):
        freq = bank.bin_frequencies[k]
        gamma = diffuse_coherence(geom, pair, freq) + 0.01 * np.eye(2)
        d = steering_vector(geom, pair, dirs[7], freq)
        w = bank.weights[k, 7]
        ours = np.real(np.vdot(w, gamma @ w))
        for _ in range(100):
            r = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            r = r / np.vdot(d, r)
            if ours > np.real(np.vdot(r, gamma @ r)) + 1e-12:
                problems.append(f"bin {k}: random competitor beats the design")
    elapsed = time.monotonic() - t0
    if elapsed >= 10.0:
        problems.append(f"took {elapsed:.1f}s (limit 10s)")
    _verdict(1, "superdirective distortionless + optimality", problems)


# -- 2: end-to-end gradients --------------------------------------------------

def test_criterion_2_end_to_end_gradient_check():
    t0 = time.monotonic()
    problems = []
    geom = paper_circular_7()
    pair = select_opposite_pair(geom)
    bank = build_bank(geom, pair, default_look_directions(12))
    params = FrontendParams.from_bank(bank=bank)
    rng = np.random.default_rng(0)
    x = FeatureTensor(
        stage="complex_stft", data=rng.standard_normal((6, 2, 127, 2)), frame_rate=100.0
    )
    fe = Frontend(params, compute_norm_stats([x]))
    model = init_model(
        AcousticModelConfig(num_layers=1, cells_per_layer=8, num_classes=40), seed=1
    )
    labels = rng.integers(0, 40, size=2)

    def loss():
        probs = model.forward(fe.forward(x))
        return cross_entropy(probs, labels)[0]

    stacked, fe_cache = fe.forward(x, want_cache=True)
    probs, cache = model.forward(stacked, want_cache=True)
    _, d_logits = cross_entropy(probs, labels)
    m_grads, d_feats = model.backward(d_logits, cache)
    fe_grads, _ = fe.backward(d_feats, fe_cache)

    arrays = {**fe.params.arrays(), **dict(model.param_items())}
    grads = {**fe_grads, **m_grads}
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        g_flat = np.asarray(grads[name]).reshape(-1)
        for idx in rng.choice(flat.size, size=min(20, flat.size), replace=False):
            h = 1e-4 * max(1.0, abs(flat[idx]))
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss()
            flat[idx] = orig - h
            down = loss()
            flat[idx] = orig
            fd = (up - down) / (2 * h)
            if abs(g_flat[idx] - fd) > 1e-3 * max(abs(fd), 1e-3):
                problems.append(
                    f"{name}[{idx}]: analytic {g_flat[idx]:.3e} vs fd {fd:.3e}"
                )
    elapsed = time.monotonic() - t0
    if elapsed >= 60.0:
        problems.append(f"took {elapsed:.1f}s (limit 60s)")
    _verdict(2, "end-to-end finite-difference gradients", problems)


# -- 3: codec bandwidth behaviour ----------------------------------------------

def test_criterion_3_codec_bandwidth():
    problems = []
    cfg = SyntheticCorpusConfig(num_utterances=20, utterance_seconds=0.75, seed=7)
    sel = select_opposite_pair(cfg.geometry)
    for i in range(20):
        utt = synthesize_utterance(cfg, sel, np.random.default_rng([7, i]))
        base = band_energy_ratio(utt.clip, 4500.0)
        low = band_energy_ratio(transcode(utt.clip, BitratePlan.uniform(8, 2)), 4500.0)
        high = band_energy_ratio(transcode(utt.clip, BitratePlan.uniform(128, 2)), 4500.0)
        if not np.all(low < 0.01):
            problems.append(f"utt {i}: 8 kbps keeps {low.max():.3f} above 4.5 kHz")
        if not np.all(np.abs(high - base) < 0.1):
            problems.append(
                f"utt {i}: 128 kbps ratio off by {np.abs(high - base).max():.3f}"
            )
    _verdict(3, "8 kbps narrowbands, 128 kbps transparent", problems)


# -- 4-7: experiment protocols ---------------------------------------------------

def test_criterion_4_bitrate_sweep(bench):
    t0 = time.monotonic()
    cfg = replace(bench.cfg, experiment="sweep")
    report = run_bitrate_sweep(cfg, bench)
    problems = CHECKS["sweep"](report)
    elapsed = time.monotonic() - t0
    if elapsed >= 1800.0:
        problems.append(f"took {elapsed:.0f}s (limit 30 min)")
    print(emit_report(report, "/tmp/acceptance_sweep.csv"))
    _verdict(4, "bitrate sweep orderings", problems)


def test_criterion_5_single_vs_multi(bench):
    cfg = replace(bench.cfg, experiment="single_vs_multi")
    report = run_single_vs_multi(cfg, bench)
    problems = CHECKS["single_vs_multi"](report)
    print(emit_report(report, "/tmp/acceptance_svm.csv"))
    _verdict(5, "multi beats single at equal budget", problems)


def test_criterion_6_allocation(bench):
    cfg = replace(bench.cfg, experiment="allocation")
    report = run_allocation(cfg, bench)
    problems = CHECKS["allocation"](report)
    print(emit_report(report, "/tmp/acceptance_alloc.csv"))
    _verdict(6, "bandwidth allocation crossover", problems)


def test_criterion_7_mixed_training(bench):
    cfg = replace(bench.cfg, experiment="mixed_training")
    report = run_mixed_training(cfg, bench)
    problems = CHECKS["mixed_training"](report)
    print(emit_report(report, "/tmp/acceptance_mixed.csv"))
    _verdict(7, "mixed-bitrate training", problems)


# -- 8: byte-identical re-runs ----------------------------------------------------

def test_criterion_8_deterministic_reports(tmp_path):
    problems = []
    paths = []
    for run in range(2):
        cfg = ExperimentConfig(
            experiment="sweep",
            seed=5,
            corpus=SyntheticCorpusConfig(
                num_utterances=10, utterance_seconds=0.3, seed=5
            ),
            train=TrainConfig(epochs=2, seed=5),
            sweep_rates=(16, 128),
        )
        report = run_bitrate_sweep(cfg, Workbench(cfg))
        path = tmp_path / f"run{run}.csv"
        emit_report(report, path)
        paths.append(path)
    if paths[0].read_bytes() != paths[1].read_bytes():
        problems.append("re-run with identical seeds produced different CSV bytes")
    _verdict(8, "byte-identical CSV on re-run", problems)


# -- 9: mixed-rate sampler --------------------------------------------------------

def test_criterion_9_sampler_uniformity():
    problems = []
    n = 10_000
    rates = ("U", 16, 32, 64, 128)
    pairs = mixed_bitrate_sampler(range(n), rates, seed=11)
    items = [item for item, _ in pairs]
    if items != list(range(n)):
        problems.append("sampler does not assign exactly one rate per utterance")
    counts = [sum(1 for _, r in pairs if r == rate) for rate in rates]
    p = sps.chisquare(counts).pvalue
    if p <= 0.01:
        problems.append(f"chi-square p = {p:.4f} <= 0.01 for counts {counts}")
    _verdict(9, "uniform per-utterance rate sampling", problems)
