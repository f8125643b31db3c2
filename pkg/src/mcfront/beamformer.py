"""Superdirective (MVDR-against-diffuse-noise) beamformer weights and their
packaging as the initialization of the first network layer.

The bank holds the raw complex weights w per (frequency bin, look direction).
The network applies the beamformer as the inner product w^H x, so the block
affine parameters are built from the conjugated weights: a complex entry
a+jb acts on interleaved (re, im) inputs as the 2x2 block [[a, -b], [b, a]].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError
from .geometry import (
    ArrayGeometry,
    LookDirection,
    SubarraySelection,
    diffuse_coherence,
    steering_vector,
)

DEFAULT_LOADING = 1e-2


@dataclass(frozen=True)
class BeamformerBank:
    """Per-bin, per-direction complex weights: shape [bins, dirs, mics]."""

    weights: np.ndarray
    bin_frequencies: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex)
        f = np.asarray(self.bin_frequencies, dtype=float)
        if w.ndim != 3:
            raise DomainError(f"weights must be [bins, dirs, mics], got {w.shape}")
        if f.shape != (w.shape[0],):
            raise DomainError("one bin frequency per weight bin required")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bin_frequencies", f)

    @property
    def num_bins(self) -> int:
        return self.weights.shape[0]

    @property
    def num_directions(self) -> int:
        return self.weights.shape[1]

    @property
    def num_mics(self) -> int:
        return self.weights.shape[2]

    def save(self, path):
        np.savez(path, weights=self.weights, bin_frequencies=self.bin_frequencies)

    @classmethod
    def load(cls, path) -> "BeamformerBank":
        with np.load(path) as data:
            return cls(weights=data["weights"], bin_frequencies=data["bin_frequencies"])


def superdirective_weights(coherence: np.ndarray, steering: np.ndarray, loading: float) -> np.ndarray:
    """MVDR weights against a diffuse noise coherence matrix.

    w = (Gamma + sigma I)^-1 d / (d^H (Gamma + sigma I)^-1 d); satisfies the
    distortionless constraint w^H d = 1.
    """
    gamma = np.asarray(coherence, dtype=complex)
    d = np.asarray(steering, dtype=complex)
    if loading < 0:
        raise DomainError("diagonal loading must be >= 0")
    m = gamma.shape[0]
    if gamma.shape != (m, m) or d.shape != (m,):
        raise DomainError("coherence must be MxM and steering length M")
    reg = gamma + loading * np.eye(m)
    try:
        num = np.linalg.solve(reg, d)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"regularized coherence matrix is singular: {exc}") from exc
    denom = np.vdot(d, num)
    if not np.isfinite(denom) or abs(denom) < 1e-300:
        raise NumericError("degenerate distortionless normalization")
    return num / denom


def build_bank(
    geom: ArrayGeometry,
    sel: SubarraySelection,
    directions: list[LookDirection],
    fft_size: int = 256,
    loading: float = DEFAULT_LOADING,
) -> BeamformerBank:
    """One superdirective weight vector per (FFT bin, look direction).

    Bins run k = 1 .. fft_size/2 - 1 (DC and Nyquist excluded), at
    frequencies k * sample_rate / fft_size.
    """
    if fft_size % 2 != 0 or fft_size < 4:
        raise DomainError("fft_size must be even and >= 4")
    if not directions:
        raise DomainError("need at least one look direction")
    sel.validate_against(geom)
    num_bins = fft_size // 2 - 1
    freqs = np.arange(1, fft_size // 2) * geom.sample_rate / fft_size
    weights = np.empty((num_bins, len(directions), len(sel.mic_indices)), dtype=complex)
    for k, freq in enumerate(freqs):
        gamma = diffuse_coherence(geom, sel, freq)
        for j, direction in enumerate(directions):
            d = steering_vector(geom, sel, direction, freq)
            try:
                weights[k, j] = superdirective_weights(gamma, d, loading)
            except NumericError as exc:
                raise NumericError(f"bin {k + 1} ({freq:.1f} Hz), direction {j}: {exc}") from exc
    return BeamformerBank(weights=weights, bin_frequencies=freqs)


def bank_to_block_affine(bank: BeamformerBank) -> dict:
    """Real block affine parameters implementing y = w^H x per bin.

    Returns ``{"weight": [bins, 2*dirs, 2*mics], "bias": [bins, 2*dirs]}``.
    Each conjugated complex weight a+jb becomes the block [[a, -b], [b, a]]
    mapping interleaved (re, im) inputs to interleaved outputs; the bias
    starts at zero.
    """
    conj = np.conj(bank.weights)  # inner product w^H x uses conj(w)
    bins, dirs, mics = conj.shape
    weight = np.zeros((bins, 2 * dirs, 2 * mics))
    a, b = conj.real, conj.imag
    weight[:, 0::2, 0::2] = a.transpose(0, 1, 2)
    weight[:, 0::2, 1::2] = -b
    weight[:, 1::2, 0::2] = b
    weight[:, 1::2, 1::2] = a
    return {"weight": weight, "bias": np.zeros((bins, 2 * dirs))}


def block_affine_to_bank(params: dict, bin_frequencies: np.ndarray) -> BeamformerBank:
    """Inverse of :func:`bank_to_block_affine` (exact for true blocks)."""
    weight = params["weight"]
    bins, two_d, two_m = weight.shape
    a = weight[:, 0::2, 0::2]
    b = weight[:, 1::2, 0::2]
    return BeamformerBank(weights=np.conj(a + 1j * b), bin_frequencies=bin_frequencies)
