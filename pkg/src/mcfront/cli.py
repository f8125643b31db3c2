"""Command-line entry points.

Subcommands mirror the experiment protocols: ``gen-corpus``, ``train``,
``sweep``, ``single-vs-multi``, ``allocate``, ``mixed-train``,
``transcode-sweep`` and ``report``. Every command takes ``--config`` (a
YAML file overriding the defaults) and ``--seed``, and writes its outputs
under a run directory containing a resolved config snapshot, CSVs and
logs. Experiment commands exit nonzero when a documented ordering check
fails.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from .codec_lab import BitratePlan, band_energy_ratio, transcode, write_wav
from .corpus import SyntheticCorpusConfig
from .errors import DomainError
from .geometry import PRESETS, ArrayGeometry, paper_circular_7
from .harness import CHECKS, ExperimentConfig, Workbench, run_experiment
from .model import AcousticModelConfig, TrainConfig, train_ce
from .reporting import emit_report, format_table, parse_report

_RATE_FIELDS = (
    "sweep_rates",
    "budgets",
    "fixed_channel_rates",
    "equal_split_rates",
    "mixed_rate_set",
    "mixed_test_rates",
)


def _geometry_from(obj) -> ArrayGeometry:
    if obj is None:
        return paper_circular_7()
    if isinstance(obj, str):
        obj = {"preset": obj}
    if not isinstance(obj, dict):
        raise DomainError("geometry must be a preset name or a mapping")
    if "preset" in obj:
        name = obj["preset"]
        if name not in PRESETS:
            raise DomainError(f"unknown geometry preset {name!r}")
        return PRESETS[name](sample_rate=float(obj.get("sample_rate", 16000.0)))
    return ArrayGeometry(
        mic_positions=np.asarray(obj["mic_positions"], dtype=float),
        speed_of_sound=float(obj.get("speed_of_sound", 343.0)),
        sample_rate=float(obj.get("sample_rate", 16000.0)),
    )


def load_experiment_config(path=None, seed=None, experiment="sweep") -> ExperimentConfig:
    """Build an ExperimentConfig from an optional YAML override file.

    ``--seed`` overrides both the experiment seed and the corpus seed so one
    flag pins the whole run.
    """
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise DomainError(f"config file {path} must hold a mapping")
    corpus_data = dict(data.pop("corpus", {}))
    geometry = _geometry_from(corpus_data.pop("geometry", None))
    if "snr_range_db" in corpus_data:
        corpus_data["snr_range_db"] = tuple(corpus_data["snr_range_db"])
    model = AcousticModelConfig(**data.pop("model", {}))
    train = TrainConfig(**data.pop("train", {}))
    kwargs = {}
    for name in _RATE_FIELDS:
        if name in data:
            kwargs[name] = tuple(data.pop(name))
    file_seed = data.pop("seed", 0)
    cfg_seed = file_seed if seed is None else seed
    data.pop("experiment", None)
    if data:
        raise DomainError(f"unknown config keys: {sorted(data)}")
    corpus = SyntheticCorpusConfig(
        geometry=geometry, **{**corpus_data, "seed": corpus_data.get("seed", cfg_seed)}
    )
    if seed is not None:
        corpus = SyntheticCorpusConfig(**{**asdict_shallow(corpus), "seed": seed})
    return ExperimentConfig(
        experiment=experiment, seed=cfg_seed, corpus=corpus, model=model,
        train=train, **kwargs,
    )


def asdict_shallow(corpus: SyntheticCorpusConfig) -> dict:
    return {
        "num_utterances": corpus.num_utterances,
        "utterance_seconds": corpus.utterance_seconds,
        "num_classes": corpus.num_classes,
        "snr_range_db": corpus.snr_range_db,
        "seed": corpus.seed,
        "geometry": corpus.geometry,
        "sensor_noise_db": corpus.sensor_noise_db,
    }


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _snapshot(cfg: ExperimentConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    resolved = _jsonable(asdict(cfg))
    resolved["config_hash"] = cfg.hash()
    (out / "config.yaml").write_text(yaml.safe_dump(resolved, sort_keys=True))


def _run_experiment_cmd(args, experiment: str) -> int:
    cfg = load_experiment_config(args.config, args.seed, experiment)
    out = Path(args.out)
    _snapshot(cfg, out)
    bench = Workbench(cfg)
    report = run_experiment(cfg, bench)
    table = emit_report(report, out / "report.csv")
    print(table, end="")
    problems = CHECKS[experiment](report)
    for p in problems:
        print(f"CHECK FAILED: {p}", file=sys.stderr)
    print(f"report written to {out / 'report.csv'}")
    return 2 if problems else 0


def _cmd_gen_corpus(args) -> int:
    cfg = load_experiment_config(args.config, args.seed)
    out = Path(args.out)
    _snapshot(cfg, out)
    bench = Workbench(cfg)
    rows = []
    for split in ("train", "dev", "test"):
        split_dir = out / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for i, utt in enumerate(bench.split(split)):
            name = f"utt{i:05d}.wav"
            write_wav(split_dir / name, utt.clip)
            rows.append((
                split, name, f"{utt.snr_db!r}", f"{utt.azimuth!r}",
                ";".join(str(int(c)) for c in utt.labels),
            ))
    with open(out / "labels.csv", "w") as fh:
        fh.write("split,file,snr_db,azimuth,labels\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    print(f"{len(rows)} utterances written under {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_experiment_config(args.config, args.seed)
    out = Path(args.out)
    _snapshot(cfg, out)
    bench = Workbench(cfg)
    if args.single:
        model, frontend = bench.new_single()
    else:
        model, frontend = bench.new_multi()
    dataset = bench.dataset("train")
    dev = bench.dataset("dev")
    curve = train_ce(model, frontend, dataset, cfg.train,
                     log_path=out / "train_log.csv", dev=dev)
    model.save(out / "model.npz")
    stats = frontend.stats
    np.savez(out / "frontend.npz", norm_mean=stats.mean,
             norm_variance=stats.variance, **frontend.params.arrays())
    fer = bench.fer(model, frontend, "test")
    print(f"final loss {curve[-1]:.4f}, test FER {fer:.2f}%")
    print(f"checkpoint written to {out / 'model.npz'}")
    return 0


def _cmd_transcode_sweep(args) -> int:
    cfg = load_experiment_config(args.config, args.seed)
    out = Path(args.out)
    _snapshot(cfg, out)
    bench = Workbench(cfg)
    utt = bench.split("test")[args.index]
    rates = [int(r) for r in args.rates.split(",")]
    write_wav(out / "original.wav", utt.clip)
    with open(out / "band_energy.csv", "w") as fh:
        fh.write("rate,channel,ratio_above_cutoff\n")
        base = band_energy_ratio(utt.clip, args.cutoff)
        for ci, r in enumerate(base):
            fh.write(f"uncompressed,{ci},{float(r)!r}\n")
        for rate in rates:
            coded = transcode(utt.clip, BitratePlan.uniform(rate, utt.clip.num_channels))
            write_wav(out / f"rate{rate:03d}.wav", coded)
            for ci, r in enumerate(band_energy_ratio(coded, args.cutoff)):
                fh.write(f"{rate},{ci},{float(r)!r}\n")
    print(f"transcoded audio and band_energy.csv written under {out}")
    return 0


def _cmd_report(args) -> int:
    for path in args.csv:
        report = parse_report(path)
        print(f"== {path}")
        print(format_table(report), end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mcfront",
        description="Multi-channel front-end and OPUS degradation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_out):
        p.add_argument("--config", default=None, help="YAML config override file")
        p.add_argument("--seed", type=int, default=None,
                       help="override experiment and corpus seed")
        p.add_argument("--out", default=default_out, help="run directory")

    p = sub.add_parser("gen-corpus", help="synthesize the corpus to WAV files")
    common(p, "runs/corpus")
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("train", help="train one acoustic model on uncompressed audio")
    common(p, "runs/train")
    p.add_argument("--single", action="store_true",
                   help="train the single-channel baseline instead")
    p.set_defaults(func=_cmd_train)

    for command, experiment in (
        ("sweep", "sweep"),
        ("single-vs-multi", "single_vs_multi"),
        ("allocate", "allocation"),
        ("mixed-train", "mixed_training"),
    ):
        p = sub.add_parser(command, help=f"run the {experiment} experiment")
        common(p, f"runs/{command}")
        p.set_defaults(func=lambda a, e=experiment: _run_experiment_cmd(a, e))

    p = sub.add_parser("transcode-sweep",
                       help="transcode one utterance at several rates and measure bandwidth")
    common(p, "runs/transcode-sweep")
    p.add_argument("--rates", default="8,16,32,64,128", help="comma-separated kbps list")
    p.add_argument("--cutoff", type=float, default=4500.0, help="band cutoff in Hz")
    p.add_argument("--index", type=int, default=0, help="test-split utterance index")
    p.set_defaults(func=_cmd_transcode_sweep)

    p = sub.add_parser("report", help="pretty-print existing report CSVs")
    p.add_argument("csv", nargs="+", help="report CSV files")
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
