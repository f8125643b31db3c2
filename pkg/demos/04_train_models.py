"""Train the multi-channel and single-channel models on a small corpus.

Uses a reduced corpus so the demo finishes in a couple of minutes; the
experiment protocols in demo 05 and the CLI use larger settings. Shows the
loss curves and the frame error rates of both models.
"""

import time

from mcfront.corpus import SyntheticCorpusConfig
from mcfront.harness import ExperimentConfig, Workbench
from mcfront.model import TrainConfig, train_ce

cfg = ExperimentConfig(
    seed=0,
    corpus=SyntheticCorpusConfig(num_utterances=60, utterance_seconds=0.75,
                                 snr_range_db=(-3.0, 8.0), seed=0),
    train=TrainConfig(epochs=10, seed=1),
)
bench = Workbench(cfg)
train_set = bench.dataset("train")
print(f"corpus: {len(bench.corpus.train)} train / {len(bench.corpus.dev)} dev / "
      f"{len(bench.corpus.test)} test utterances")

for name, (model, frontend) in (
    ("multi-channel", bench.new_multi()),
    ("single-channel", bench.new_single()),
):
    t0 = time.time()
    curve = train_ce(model, frontend, train_set, cfg.train)
    fer = bench.fer(model, frontend, "test")
    print(f"\n{name}: {model.num_params()} LSTM parameters")
    print(f"  loss {curve[0]:.3f} -> {curve[-1]:.3f} over {cfg.train.epochs} epochs "
          f"({time.time() - t0:.0f}s)")
    print(f"  test frame error rate: {fer:.1f}% (chance would be 97.5%)")
