"""Measure what constant-bitrate OPUS does to the signal at each rate.

Transcodes one synthetic utterance over the bitrate ladder and reports the
fraction of spectral energy surviving above 4.5 kHz plus the waveform
correlation with the original -- the desk-scale version of a bandwidth
plot.
"""

import numpy as np

from mcfront.codec_lab import (
    BitratePlan,
    band_energy_ratio,
    opus_version,
    transcode,
)
from mcfront.corpus import SyntheticCorpusConfig, synthesize_utterance
from mcfront.geometry import select_opposite_pair

print(f"codec: {opus_version()}")

cfg = SyntheticCorpusConfig(num_utterances=1, utterance_seconds=1.5, seed=1)
sel = select_opposite_pair(cfg.geometry)
utt = synthesize_utterance(cfg, sel, np.random.default_rng([1, 0]))
clip = utt.clip
orig = clip.as_array().astype(float)

print(f"\nrate (kbps)  energy > 4.5 kHz  waveform corr")
base_ratio = band_energy_ratio(clip, 4500.0)[0]
print(f"{'none':>11}  {base_ratio:16.4f}  {1.0:13.3f}")
for rate in (8, 16, 32, 64, 128):
    coded = transcode(clip, BitratePlan.uniform(rate, clip.num_channels))
    ratio = band_energy_ratio(coded, 4500.0)[0]
    a, b = orig[0], coded.as_array().astype(float)[0]
    corr = float(np.dot(a, b) / np.sqrt(np.dot(a, a) * np.dot(b, b)))
    print(f"{rate:11d}  {ratio:16.4f}  {corr:13.3f}")

print("\n8 kbps collapses the signal to narrowband; 128 kbps is nearly "
      "transparent.")
