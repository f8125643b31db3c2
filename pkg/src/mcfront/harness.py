"""Desk-scale experiment protocols: bitrate sweep, single-vs-multi at equal
total bitrate, bandwidth allocation between channels, and mixed-bitrate
training. WER is replaced by frame error rate throughout; every comparison
with the published tables is an ordering or a sign, never an absolute
value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .beamformer import build_bank
from .codec_lab import UNCOMPRESSED, AudioClip, BitratePlan, snr_label, transcode
from .corpus import Corpus, SyntheticCorpusConfig, generate_corpus
from .errors import DomainError
from .frontend import (
    FeatureTensor,
    Frontend,
    FrontendParams,
    SingleChannelFrontend,
    compute_norm_stats,
    stft,
)
from .geometry import default_look_directions
from .model import (
    AcousticModelConfig,
    TrainConfig,
    frame_error_rate,
    init_model,
    train_ce,
)
from .reporting import (
    DegradationReport,
    ReportRow,
    config_hash,
    relative_degradation,
)

NUM_LOOK_DIRECTIONS = 12
EXPERIMENTS = ("sweep", "single_vs_multi", "allocation", "mixed_training")


@dataclass
class ExperimentConfig:
    experiment: str = "sweep"
    seed: int = 0
    corpus: SyntheticCorpusConfig = field(default_factory=SyntheticCorpusConfig)
    model: AcousticModelConfig = field(default_factory=AcousticModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep_rates: tuple = (8, 16, 32, 128)
    budgets: tuple = (8, 16, 32, 64, 128)  # per-channel rates for the multi model
    fixed_channel_rates: tuple = (8, 16, 32, 64, 128)
    equal_split_rates: tuple = (132, 136, 144, 160, 192)
    mixed_rate_set: tuple = (UNCOMPRESSED, 16, 32, 64, 128)
    mixed_test_rates: tuple = (16, 32, 128, UNCOMPRESSED)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}")

    def hash(self) -> str:
        return config_hash(asdict(self))


def mixed_bitrate_sampler(dataset, rate_set=(UNCOMPRESSED, 16, 32, 64, 128), seed: int = 0):
    """One uniformly drawn rate per item; no item is repeated.

    Returns a list of (item, rate) pairs, same length and order as the
    input.
    """
    rates = tuple(rate_set)
    if not rates:
        raise DomainError("rate set must be nonempty")
    items = list(dataset)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(rates), size=len(items))
    return [(item, rates[p]) for item, p in zip(items, picks)]


class Workbench:
    """Shared corpus, front-end initialization and feature caches for the
    experiment protocols."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.corpus: Corpus = generate_corpus(cfg.corpus)
        geom = cfg.corpus.geometry
        self.bank = build_bank(
            geom, self.corpus.selection, default_look_directions(NUM_LOOK_DIRECTIONS)
        )
        self.base_params = FrontendParams.from_bank(bank=self.bank)
        self._features = {}  # (split, idx, plan desc) -> FeatureTensor
        self._models = {}  # (kind, plan desc) -> trained (model, frontend)
        train_feats = [self.features("train", i, None) for i in range(len(self.corpus.train))]
        self.multi_stats = compute_norm_stats(train_feats)
        mono = [FeatureTensor("complex_stft", t.data[:, :1], t.frame_rate) for t in train_feats]
        self.single_stats = compute_norm_stats(mono)

    # -- features ----------------------------------------------------------
    def split(self, name: str):
        return getattr(self.corpus, name)

    def features(self, split: str, idx: int, plan: BitratePlan | None) -> FeatureTensor:
        key = (split, idx, plan.describe() if plan else "U,U")
        if key not in self._features:
            utt = self.split(split)[idx]
            clip = utt.clip if plan is None else transcode(utt.clip, plan)
            self._features[key] = stft(clip.as_array().astype(float))
        return self._features[key]

    def dataset(self, split: str, plan: BitratePlan | None = None, plans=None):
        """[(stft tensor, stacked-frame labels)] for one split.

        ``plans`` may give a per-utterance plan (mixed-bitrate training).
        """
        utts = self.split(split)
        out = []
        for i, utt in enumerate(utts):
            p = plans[i] if plans is not None else plan
            out.append((self.features(split, i, p), utt.labels))
        return out

    # -- training / evaluation ---------------------------------------------
    def new_multi(self):
        return (
            init_model(self.cfg.model, seed=self.cfg.train.seed),
            Frontend(self.base_params.copy(), self.multi_stats),
        )

    def new_single(self):
        return (
            init_model(self.cfg.model, seed=self.cfg.train.seed),
            SingleChannelFrontend(self.base_params.copy(), self.single_stats),
        )

    def train_multi(self, plan: BitratePlan | None = None, plans=None):
        key = ("multi", plan.describe() if plan else None,
               tuple(p.describe() if p else None for p in plans) if plans else None)
        if key not in self._models:
            model, fe = self.new_multi()
            train_ce(model, fe, self.dataset("train", plan, plans), self.cfg.train)
            self._models[key] = (model, fe)
        return self._models[key]

    def train_single(self, plan: BitratePlan | None = None):
        key = ("single", plan.describe() if plan else None)
        if key not in self._models:
            model, fe = self.new_single()
            train_ce(model, fe, self.dataset("train", plan), self.cfg.train)
            self._models[key] = (model, fe)
        return self._models[key]

    def fer(self, model, fe, split: str, plan: BitratePlan | None = None) -> float:
        return frame_error_rate(model, fe, self.dataset(split, plan))

    def fer_by_condition(self, model, fe, split: str, plan: BitratePlan | None = None):
        """(overall, clean, noisy) FER split by the ground-truth 5 dB rule."""
        utts = self.split(split)
        wrong = {"clean": 0, "noisy": 0}
        total = {"clean": 0, "noisy": 0}
        for i, utt in enumerate(utts):
            label = snr_label(utt.clean, utt.noise)
            stacked = fe.forward(self.features(split, i, plan))
            probs = model.forward(stacked)
            gold = np.asarray(utt.labels)[: probs.shape[0]]
            wrong[label] += int(np.sum(probs.argmax(axis=1) != gold))
            total[label] += len(gold)
        overall = 100.0 * (wrong["clean"] + wrong["noisy"]) / max(1, total["clean"] + total["noisy"])
        clean = 100.0 * wrong["clean"] / total["clean"] if total["clean"] else float("nan")
        noisy = 100.0 * wrong["noisy"] / total["noisy"] if total["noisy"] else float("nan")
        return overall, clean, noisy


def _row(cfg, condition, metric, deg, clean=None, noisy=None):
    return ReportRow(
        experiment=cfg.experiment,
        condition=condition,
        absolute_metric=metric,
        rel_degradation=deg,
        clean=clean,
        noisy=noisy,
        seed=cfg.seed,
        config_hash=cfg.hash(),
    )


def run_bitrate_sweep(cfg: ExperimentConfig, bench: Workbench | None = None) -> DegradationReport:
    """Baseline trained on uncompressed audio, evaluated on the test split
    transcoded at each per-channel rate; degradations vs uncompressed."""
    bench = bench or Workbench(cfg)
    model, fe = bench.train_multi()
    base = bench.fer(model, fe, "test")
    rows = [_row(cfg, "uncompressed", base, None)]
    for rate in cfg.sweep_rates:
        fer = bench.fer(model, fe, "test", BitratePlan.uniform(rate, 2))
        rows.append(_row(cfg, str(rate), fer, relative_degradation(base, fer)))
    return DegradationReport(rows=rows)


def run_single_vs_multi(cfg: ExperimentConfig, bench: Workbench | None = None) -> DegradationReport:
    """Multi-channel model at x kbps/channel vs single-channel at 2x kbps.

    Both models are trained on uncompressed audio; each budget row records
    the FER and the degradation relative to that model's own uncompressed
    baseline.
    """
    bench = bench or Workbench(cfg)
    m_model, m_fe = bench.train_multi()
    s_model, s_fe = bench.train_single()
    m_base = bench.fer(m_model, m_fe, "test")
    s_base = bench.fer(s_model, s_fe, "test")
    rows = [
        _row(cfg, "multi@uncompressed", m_base, None),
        _row(cfg, "single@uncompressed", s_base, None),
    ]
    for x in cfg.budgets:
        fer_m = bench.fer(m_model, m_fe, "test", BitratePlan.uniform(x, 2))
        # single-channel model reads channel 1 only; channel 2 rides along
        fer_s = bench.fer(s_model, s_fe, "test", BitratePlan((2 * x, UNCOMPRESSED)))
        rows.append(_row(cfg, f"multi@{x}/ch", fer_m, relative_degradation(m_base, fer_m)))
        rows.append(_row(cfg, f"single@{2 * x}", fer_s, relative_degradation(s_base, fer_s)))
    return DegradationReport(rows=rows)


def _allocation_plans(cfg: ExperimentConfig):
    plans = [(f"256,{r}", BitratePlan((UNCOMPRESSED, r))) for r in cfg.fixed_channel_rates]
    plans += [(f"{s},{s}", BitratePlan((s, s))) for s in cfg.equal_split_rates]
    return plans


def run_allocation(cfg: ExperimentConfig, bench: Workbench | None = None) -> DegradationReport:
    """Fixed-high-rate-channel plans vs equal splits, with overall / clean /
    noisy breakdowns (5 dB ground-truth SNR rule). The 256 kbps channel is
    carried uncompressed and accounted as 256 kbps."""
    bench = bench or Workbench(cfg)
    model, fe = bench.train_multi()
    b_all, b_clean, b_noisy = bench.fer_by_condition(model, fe, "test")
    rows = [_row(cfg, "uncompressed", b_all, None, None, None)]
    for name, plan in _allocation_plans(cfg):
        f_all, f_clean, f_noisy = bench.fer_by_condition(model, fe, "test", plan)
        rows.append(_row(
            cfg, name, f_all,
            relative_degradation(b_all, f_all),
            relative_degradation(b_clean, f_clean),
            relative_degradation(b_noisy, f_noisy),
        ))
    return DegradationReport(rows=rows)


def run_mixed_training(cfg: ExperimentConfig, bench: Workbench | None = None) -> DegradationReport:
    """Baseline-, matched- and mixed-bitrate-trained models evaluated at
    each test rate; degradations vs the uncompressed-trained model on
    uncompressed test audio."""
    bench = bench or Workbench(cfg)
    base_model, base_fe = bench.train_multi()
    base = bench.fer(base_model, base_fe, "test")

    assignments = mixed_bitrate_sampler(
        range(len(bench.corpus.train)), cfg.mixed_rate_set, seed=cfg.seed + 2
    )
    mixed_plans = [
        None if rate == UNCOMPRESSED else BitratePlan.uniform(rate, 2)
        for _, rate in assignments
    ]
    mixed_model, mixed_fe = bench.train_multi(plans=mixed_plans)

    rows = [_row(cfg, "test=U|train=U", base, None)]
    for rate in cfg.mixed_test_rates:
        plan = None if rate == UNCOMPRESSED else BitratePlan.uniform(rate, 2)
        tag = "U" if rate == UNCOMPRESSED else str(rate)
        fer_b = bench.fer(base_model, base_fe, "test", plan)
        if rate != UNCOMPRESSED:
            rows.append(_row(cfg, f"test={tag}|train=U", fer_b, relative_degradation(base, fer_b)))
            m_model, m_fe = bench.train_multi(plan=plan)
            fer_m = bench.fer(m_model, m_fe, "test", plan)
            rows.append(_row(cfg, f"test={tag}|train={tag}", fer_m, relative_degradation(base, fer_m)))
        fer_x = bench.fer(mixed_model, mixed_fe, "test", plan)
        rows.append(_row(cfg, f"test={tag}|train=mixed", fer_x, relative_degradation(base, fer_x)))
    return DegradationReport(rows=rows)


RUNNERS = {
    "sweep": run_bitrate_sweep,
    "single_vs_multi": run_single_vs_multi,
    "allocation": run_allocation,
    "mixed_training": run_mixed_training,
}


def run_experiment(cfg: ExperimentConfig, bench: Workbench | None = None) -> DegradationReport:
    return RUNNERS[cfg.experiment](cfg, bench)


# -- expected desk-scale orderings (the published tables' analogues) --------

def check_sweep(report: DegradationReport) -> list:
    """Orderings from the published bitrate table; comparisons involving
    conditions absent from the report are skipped."""
    d = {r.condition: r.rel_degradation for r in report.rows if r.rel_degradation is not None}
    problems = []
    order = [str(r) for r in (8, 16, 32, 128) if str(r) in d]
    for hi, lo in zip(order, order[1:]):
        if not d[hi] > d[lo]:
            problems.append(f"deg({hi})={d[hi]:.2f} not > deg({lo})={d[lo]:.2f}")
    if "128" in d and d["128"] < 0:
        problems.append(f"deg(128)={d['128']:.2f} < 0")
    if "8" in d and "16" in d and d["8"] < 3.0 * d["16"]:
        problems.append(f"deg(8)={d['8']:.2f} below 3x deg(16)={d['16']:.2f}")
    return problems


def check_single_vs_multi(report: DegradationReport, budgets=(8, 16, 32, 64, 128)) -> list:
    conditions = {r.condition: r.absolute_metric for r in report.rows}
    problems = []
    for x in budgets:
        if f"multi@{x}/ch" not in conditions:
            continue
        fm = conditions[f"multi@{x}/ch"]
        fs = conditions[f"single@{2 * x}"]
        if not fm <= fs:
            problems.append(f"budget {2 * x}: multi FER {fm:.2f} > single FER {fs:.2f}")
    return problems


def check_allocation(report: DegradationReport) -> list:
    problems = []
    d = {r.condition: r.rel_degradation for r in report.rows if r.rel_degradation is not None}
    if "256,32" in d and "144,144" in d and not d["256,32"] < d["144,144"]:
        problems.append(f"deg(256,32)={d['256,32']:.2f} not < deg(144,144)={d['144,144']:.2f}")
    if "256,8" in d and "132,132" in d and not d["256,8"] > d["132,132"]:
        problems.append(f"deg(256,8)={d['256,8']:.2f} not > deg(132,132)={d['132,132']:.2f}")
    return problems


def check_mixed_training(report: DegradationReport) -> list:
    problems = []
    d = {r.condition: r.rel_degradation for r in report.rows if r.rel_degradation is not None}
    if "test=16|train=16" in d and not d["test=16|train=16"] < d["test=16|train=U"]:
        problems.append("matched-16 does not beat uncompressed training at 16 kbps")
    if "test=16|train=mixed" in d and not d["test=16|train=mixed"] < d["test=16|train=U"]:
        problems.append("mixed model does not beat uncompressed training at 16 kbps")
    if "test=U|train=mixed" in d and not d["test=U|train=mixed"] > 0:
        problems.append("mixed model shows no degradation on uncompressed test")
    return problems


CHECKS = {
    "sweep": check_sweep,
    "single_vs_multi": check_single_vs_multi,
    "allocation": check_allocation,
    "mixed_training": check_mixed_training,
}
