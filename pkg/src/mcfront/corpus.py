"""Synthetic far-field 2-channel corpus.

Each utterance is a sequence of class-specific narrowband segments (one
class per 30 ms-aligned span): a fundamental tone in 300-3500 Hz, its
octave partial, and narrowband noise around both, so every class leaves
energy below 4 kHz (survives narrowband codecs) and most leave energy
above it (sensitive to bandwidth loss). The target source is emitted as a
plane wave from a random azimuth onto the selected mic pair using exact
fractional delays. The noise is a diffuse competing source of the same
family — the same class spectrum at every mic but with incoherent phase
across mics — plus a floor of spatially uncorrelated sensor noise, scaled
together to a sampled SNR. A single channel therefore sees two
overlapping class spectra, while spatial coherence still identifies the
target. Ground-truth clean/noise references and frame labels ride along
with every utterance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec_lab import AudioClip
from .errors import DomainError
from .geometry import (
    ArrayGeometry,
    LookDirection,
    SubarraySelection,
    paper_circular_7,
    propagation_delays,
    select_opposite_pair,
)

SAMPLE_RATE = 16000
SPAN = 480  # samples per 30 ms label span
PEAK = 0.25 * 32767.0


@dataclass(frozen=True)
class SyntheticCorpusConfig:
    num_utterances: int = 800
    utterance_seconds: float = 0.75
    num_classes: int = 40
    snr_range_db: tuple = (-3.0, 8.0)
    seed: int = 0
    geometry: ArrayGeometry = field(default_factory=paper_circular_7)
    sensor_noise_db: float = 25.0  # white-noise floor below the interferer
    octave_amplitude: float = 0.25  # octave partial level relative to f0
    texture_amplitude: float = 0.5  # narrowband-noise level relative to f0
    # competing-source mix levels (same class family as the target)
    interferer_texture_amplitude: float = 0.5
    interferer_tone_amplitude: float = 1.0
    # per-utterance, per-mic response spread: flat gain and spectral tilt
    # jitter, each drawn U(-x, +x) dB, modelling sensor calibration scatter
    response_spread_db: float = 1.5
    response_tilt_db: float = 1.5
    # per-utterance recording bandwidth: a zero-phase low-pass with cutoff
    # drawn U(lo, hi) Hz, shared by both mics, modelling bandwidth scatter
    # of the capture chain; (Nyquist, Nyquist) disables it
    bandwidth_range_hz: tuple = (8000.0, 8000.0)
    # per-mic smooth random phase response (radians), a low-order ripple
    # modelling phase mismatch between sensors
    response_phase_rad: float = 0.0

    def __post_init__(self):
        if self.num_utterances < 1 or self.num_classes < 1:
            raise DomainError("counts must be positive")
        lo, hi = self.snr_range_db
        if not (-10.0 <= lo <= hi <= 30.0):
            raise DomainError("snr_range_db must lie within [-10, 30] dB")
        if int(self.utterance_seconds * SAMPLE_RATE) < SPAN:
            raise DomainError("utterance shorter than one 30 ms span")
        blo, bhi = self.bandwidth_range_hz
        if not (1000.0 <= blo <= bhi <= SAMPLE_RATE / 2):
            raise DomainError("bandwidth_range_hz must lie within [1000, Nyquist]")


@dataclass
class Utterance:
    clip: AudioClip  # mixed 2-channel audio
    clean: AudioClip  # direct (plane wave) target component
    noise: AudioClip  # interferer + sensor noise component
    labels: np.ndarray  # target class id per 30 ms span
    azimuth: float
    snr_db: float


@dataclass
class Corpus:
    train: list
    dev: list
    test: list
    config: SyntheticCorpusConfig
    selection: SubarraySelection

    def all_utterances(self):
        return [*self.train, *self.dev, *self.test]


def _ramped(signal: np.ndarray, ramp: int = 64) -> np.ndarray:
    n = len(signal)
    if n < 2 * ramp:
        return signal
    win = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
    out = signal.copy()
    out[:ramp] *= win
    out[-ramp:] *= win[::-1]
    return out


def _bandpass_noise(rng, n: int, bands) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    mask = np.zeros_like(freqs, dtype=bool)
    for lo, hi in bands:
        mask |= (freqs >= lo) & (freqs <= hi)
    spec[~mask] = 0.0
    out = np.fft.irfft(spec, n=n)
    rms = np.sqrt(np.mean(out**2))
    return out / rms if rms > 0 else out


def class_frequencies(class_id: int, num_classes: int) -> tuple:
    """(fundamental, octave) tone frequencies of a class."""
    if num_classes > 1:
        f0 = 300.0 + class_id * (3200.0 / (num_classes - 1))
    else:
        f0 = 1000.0
    return f0, 2.0 * f0


def class_waveform(class_id: int, num_samples: int, num_classes: int, rng,
                   octave_amplitude: float = 0.25,
                   texture_amplitude: float = 0.5,
                   tone_amplitude: float = 1.0) -> np.ndarray:
    f0, f1 = class_frequencies(class_id, num_classes)
    t = np.arange(num_samples) / SAMPLE_RATE
    tone = np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
    tone += octave_amplitude * np.sin(2 * np.pi * f1 * t + rng.uniform(0, 2 * np.pi))
    nb = _bandpass_noise(rng, num_samples, [(f0 - 150, f0 + 150), (f1 - 300, f1 + 300)])
    sig = tone_amplitude * tone + texture_amplitude * nb
    sig = _ramped(sig)
    return sig / np.sqrt(np.mean(sig**2))


def fractional_delay(signal: np.ndarray, delay_samples: float) -> np.ndarray:
    """All-pass fractional delay via FFT phase shift (edge-padded)."""
    pad = 16 + int(math.ceil(abs(delay_samples)))
    x = np.concatenate([np.zeros(pad), signal, np.zeros(pad)])
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x))
    spec *= np.exp(-2j * np.pi * freqs * delay_samples)
    y = np.fft.irfft(spec, n=len(x))
    return y[pad : pad + len(signal)]


def _random_labels(cfg: SyntheticCorpusConfig, spans: int, rng) -> np.ndarray:
    labels = np.empty(spans, dtype=int)
    span = 0
    while span < spans:
        seg_spans = min(int(rng.integers(1, 5)), spans - span)
        labels[span : span + seg_spans] = int(rng.integers(cfg.num_classes))
        span += seg_spans
    return labels


def _render_labels(cfg: SyntheticCorpusConfig, labels: np.ndarray, rng,
                   texture_amplitude: float, tone_amplitude: float = 1.0) -> np.ndarray:
    """Waveform for a per-span class sequence; phases drawn from ``rng``."""
    source = np.empty(len(labels) * SPAN)
    span = 0
    while span < len(labels):
        end = span
        while end < len(labels) and labels[end] == labels[span]:
            end += 1
        seg = class_waveform(int(labels[span]), (end - span) * SPAN, cfg.num_classes, rng,
                             cfg.octave_amplitude, texture_amplitude, tone_amplitude)
        source[span * SPAN : end * SPAN] = seg
        span = end
    return source


def _class_sequence(cfg: SyntheticCorpusConfig, spans: int, rng):
    labels = _random_labels(cfg, spans, rng)
    return _render_labels(cfg, labels, rng, cfg.texture_amplitude), labels


def _mic_responses(cfg: SyntheticCorpusConfig, num_channels: int, num_samples: int, rng):
    """Per-channel zero-phase response curves, or None when disabled.

    Each mic gets flat-gain and spectral-tilt jitter; on top, a shared
    low-pass with a per-utterance cutoff models the recording bandwidth.
    """
    lo, hi = cfg.bandwidth_range_hz
    lowpassed = lo < SAMPLE_RATE / 2  # (Nyquist, Nyquist) disables the low-pass
    if (cfg.response_spread_db == 0.0 and cfg.response_tilt_db == 0.0
            and cfg.response_phase_rad == 0.0 and not lowpassed):
        return None
    freqs = np.fft.rfftfreq(num_samples, d=1.0 / SAMPLE_RATE)
    shape = freqs / (SAMPLE_RATE / 2.0) - 0.5
    if lowpassed:
        cutoff = rng.uniform(lo, hi)
        lowpass = 1.0 / np.sqrt(1.0 + (freqs / cutoff) ** 12)
    else:
        lowpass = 1.0
    curves = []
    for _ in range(num_channels):
        gain = rng.uniform(-cfg.response_spread_db, cfg.response_spread_db)
        tilt = rng.uniform(-cfg.response_tilt_db, cfg.response_tilt_db)
        phase = np.zeros_like(shape)
        for k in (1, 2, 3):  # low-order ripple: smooth across the band
            amp = rng.uniform(-cfg.response_phase_rad, cfg.response_phase_rad) / k
            phase += amp * np.cos(np.pi * k * freqs / (SAMPLE_RATE / 2.0)
                                  + rng.uniform(0, 2 * np.pi))
        mag = 10.0 ** ((gain + tilt * shape) / 20.0) * lowpass
        curves.append(mag * np.exp(1j * phase))
    return np.stack(curves)


def _apply_responses(signal: np.ndarray, curves) -> np.ndarray:
    if curves is None:
        return signal
    spec = np.fft.rfft(signal, axis=-1)
    return np.fft.irfft(spec * curves, n=signal.shape[-1], axis=-1)


def _plane_wave(cfg, sel, source, azimuth):
    direction = LookDirection(azimuth=azimuth)
    delays = propagation_delays(cfg.geometry, sel, direction) * cfg.geometry.sample_rate
    return np.stack([fractional_delay(source, d) for d in delays])


def synthesize_utterance(cfg: SyntheticCorpusConfig, sel: SubarraySelection, rng) -> Utterance:
    n = (int(cfg.utterance_seconds * SAMPLE_RATE) // SPAN) * SPAN
    spans = n // SPAN
    source, labels = _class_sequence(cfg, spans, rng)
    azimuth = float(rng.uniform(0.0, 2.0 * np.pi))
    direct = _plane_wave(cfg, sel, source, azimuth)

    # diffuse competing source of the same signal family: identical class
    # spectrum at every mic but incoherent phase across mics, so it masks
    # the target spectrally while spatial coherence still singles the
    # target out
    interferer_labels = _random_labels(cfg, spans, rng)
    interferer = np.stack(
        [_render_labels(cfg, interferer_labels, rng, cfg.interferer_texture_amplitude,
                        cfg.interferer_tone_amplitude)
         for _ in range(direct.shape[0])]
    )
    floor = 10.0 ** (-cfg.sensor_noise_db / 20.0)
    raw_noise = interferer + floor * rng.standard_normal(direct.shape)

    # sensor calibration scatter hits everything arriving at the mic
    curves = _mic_responses(cfg, direct.shape[0], direct.shape[1], rng)
    direct = _apply_responses(direct, curves)
    raw_noise = _apply_responses(raw_noise, curves)

    snr = float(rng.uniform(*cfg.snr_range_db))
    p_sig = float(np.mean(direct**2))
    p_noise = float(np.mean(raw_noise**2))
    noise = raw_noise * math.sqrt(p_sig / (10.0 ** (snr / 10.0)) / p_noise)
    mixed = direct + noise

    gain = PEAK / max(float(np.max(np.abs(mixed))), 1e-12)

    def quantize(x):
        return np.clip(np.round(x * gain), -32768, 32767).astype(np.int16)

    return Utterance(
        clip=AudioClip(channels=list(quantize(mixed)), sample_rate=SAMPLE_RATE),
        clean=AudioClip(channels=list(quantize(direct)), sample_rate=SAMPLE_RATE),
        noise=AudioClip(channels=list(quantize(noise)), sample_rate=SAMPLE_RATE),
        labels=labels,
        azimuth=azimuth,
        snr_db=snr,
    )


def generate_corpus(cfg: SyntheticCorpusConfig) -> Corpus:
    """Deterministic train/dev/test corpus (80/10/10 split)."""
    sel = select_opposite_pair(cfg.geometry)
    utts = []
    for i in range(cfg.num_utterances):
        rng = np.random.default_rng([cfg.seed, i])  # stable per-utterance stream
        utts.append(synthesize_utterance(cfg, sel, rng))
    n = cfg.num_utterances
    n_train = round(0.8 * n)
    n_dev = round(0.1 * n)
    return Corpus(
        train=utts[:n_train],
        dev=utts[n_train : n_train + n_dev],
        test=utts[n_train + n_dev :],
        config=cfg,
        selection=sel,
    )
