"""Learned feature extraction stack.

Multi-channel path:
    STFT -> mean/var normalize -> per-bin block affine (beamformer init)
    -> power per look direction -> elastic spatial filtering affine
    -> mel filterbank affine -> ReLU -> log -> 3-frame stacking.

Single-channel path (no beamforming / spatial filtering):
    STFT -> normalize -> power of the one channel -> MFB -> ReLU -> log
    -> stacking.

Everything is plain numpy with hand-written reverse-mode gradients so the
whole stack can be trained end-to-end and checked against finite
differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .beamformer import BeamformerBank, bank_to_block_affine
from .errors import DomainError

LOG_FLOOR = 1e-7
NUM_MEL_FILTERS = 64
STACK = 3


@dataclass(frozen=True)
class StftConfig:
    frame_shift: int = 160
    frame_length: int = 160
    fft_size: int = 256
    window: str = "rectangular"  # or "hann"

    def __post_init__(self):
        if self.frame_length > self.fft_size:
            raise DomainError("frame_length must be <= fft_size")
        if self.frame_shift > self.frame_length:
            raise DomainError("frame_shift must be <= frame_length")
        if self.window not in ("rectangular", "hann"):
            raise DomainError(f"unknown window {self.window!r}")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 - 1


@dataclass
class FeatureTensor:
    """Staged feature representation; ``data`` shape depends on ``stage``.

    complex_stft:      [T, channels, bins, 2]  (re/im interleaved)
    directional_power: [T, dirs, bins]
    log_mfb:           [T, 64]
    stacked:           [T // 3, 192]
    """

    stage: str
    data: np.ndarray
    frame_rate: float

    STAGES = ("complex_stft", "directional_power", "log_mfb", "stacked")

    def __post_init__(self):
        if self.stage not in self.STAGES:
            raise DomainError(f"unknown stage {self.stage!r}")
        self.data = np.asarray(self.data, dtype=float)

    def save(self, path):
        """Flat binary dump: magic, stage, frame rate, shape, float64 data."""
        with open(path, "wb") as fh:
            fh.write(b"MCFT")
            stage = self.stage.encode()
            fh.write(struct.pack("<B", len(stage)))
            fh.write(stage)
            fh.write(struct.pack("<d", self.frame_rate))
            fh.write(struct.pack("<B", self.data.ndim))
            fh.write(struct.pack(f"<{self.data.ndim}q", *self.data.shape))
            fh.write(np.ascontiguousarray(self.data, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path) -> "FeatureTensor":
        with open(path, "rb") as fh:
            if fh.read(4) != b"MCFT":
                raise DomainError(f"{path} is not a feature tensor file")
            (n,) = struct.unpack("<B", fh.read(1))
            stage = fh.read(n).decode()
            (frame_rate,) = struct.unpack("<d", fh.read(8))
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}q", fh.read(8 * ndim))
            data = np.frombuffer(fh.read(), dtype=np.float64).reshape(shape)
        return cls(stage=stage, data=data.copy(), frame_rate=frame_rate)


@dataclass(frozen=True)
class NormStats:
    """Per-coordinate mean and variance of the flattened per-frame features."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        var = np.asarray(self.variance, dtype=float).ravel()
        if mean.shape != var.shape:
            raise DomainError("mean and variance must have the same length")
        if np.any(var <= 0):
            raise DomainError("variance entries must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @classmethod
    def identity(cls, dim: int) -> "NormStats":
        return cls(mean=np.zeros(dim), variance=np.ones(dim))


def stft(channels, cfg: StftConfig = StftConfig()) -> FeatureTensor:
    """Per-channel STFT keeping bins 1 .. fft_size/2 - 1.

    Frame t covers samples [t*shift, t*shift + frame_length); no partial
    final frame. Empty or too-short input yields T = 0.
    """
    pcm = np.asarray(channels, dtype=float)
    if pcm.ndim == 1:
        pcm = pcm[None, :]
    if pcm.ndim != 2:
        raise DomainError("channels must be a [C, N] array or list of 1-D arrays")
    if not np.all(np.isfinite(pcm)):
        raise DomainError("samples must be finite")
    num_ch, num_samples = pcm.shape
    if num_samples < cfg.frame_length:
        num_frames = 0
    else:
        num_frames = (num_samples - cfg.frame_length) // cfg.frame_shift + 1
    frame_rate = 16000.0 / cfg.frame_shift if cfg.frame_shift else 0.0
    out = np.zeros((num_frames, num_ch, cfg.num_bins, 2))
    if num_frames:
        idx = np.arange(cfg.frame_length)[None, :] + cfg.frame_shift * np.arange(num_frames)[:, None]
        frames = pcm[:, idx]  # [C, T, L]
        if cfg.window == "hann":
            frames = frames * np.hanning(cfg.frame_length)[None, None, :]
        spec = np.fft.rfft(frames, n=cfg.fft_size, axis=-1)[:, :, 1 : cfg.fft_size // 2]
        out[..., 0] = spec.real.transpose(1, 0, 2)
        out[..., 1] = spec.imag.transpose(1, 0, 2)
    return FeatureTensor(stage="complex_stft", data=out, frame_rate=frame_rate)


def compute_norm_stats(tensors) -> NormStats:
    """Global per-coordinate stats over a corpus of complex_stft tensors."""
    frames = [t.data.reshape(t.data.shape[0], -1) for t in tensors if t.data.shape[0]]
    if not frames:
        raise DomainError("no frames to estimate statistics from")
    flat = np.concatenate(frames, axis=0)
    var = flat.var(axis=0)
    return NormStats(mean=flat.mean(axis=0), variance=np.maximum(var, 1e-12))


def normalize(x: FeatureTensor, stats: NormStats) -> FeatureTensor:
    """(x - mean) / sqrt(variance), per flattened per-frame coordinate."""
    if x.stage != "complex_stft":
        raise DomainError("normalize expects a complex_stft tensor")
    shape = x.data.shape
    dim = int(np.prod(shape[1:])) if len(shape) > 1 else 0
    if stats.mean.shape[0] != dim:
        raise DomainError(f"stats dim {stats.mean.shape[0]} != feature dim {dim}")
    flat = x.data.reshape(shape[0], -1)
    out = (flat - stats.mean) / np.sqrt(stats.variance)
    return FeatureTensor(stage="complex_stft", data=out.reshape(shape), frame_rate=x.frame_rate)


def mel_scale(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=float) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=float) / 2595.0) - 1.0)


def mel_filterbank_matrix(
    num_filters: int = NUM_MEL_FILTERS,
    num_bins: int = 127,
    sample_rate: float = 16000.0,
) -> np.ndarray:
    """Triangular mel filters evaluated at the STFT bin frequencies.

    Centers are equally spaced on the mel scale between 0 Hz and
    sample_rate/2. A filter narrower than the bin spacing falls back to a
    single unit weight at the bin nearest its center so every row stays
    nonzero; more filters than bins is rejected outright.
    """
    if num_filters < 1:
        raise DomainError("num_filters must be >= 1")
    if num_filters > num_bins:
        raise DomainError(
            f"{num_filters} filters cannot all be nonempty on {num_bins} bins"
        )
    fft_size = 2 * (num_bins + 1)
    bin_freqs = np.arange(1, num_bins + 1) * sample_rate / fft_size
    mel_points = np.linspace(0.0, mel_scale(sample_rate / 2.0), num_filters + 2)
    hz_points = mel_to_hz(mel_points)
    weights = np.zeros((num_filters, num_bins))
    for i in range(num_filters):
        left, center, right = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        tri = np.maximum(0.0, np.minimum(rising, falling))
        if not np.any(tri > 0):
            tri = np.zeros(num_bins)
            tri[int(np.argmin(np.abs(bin_freqs - center)))] = 1.0
        weights[i] = tri
    return weights


def uniform_esf_matrix(num_directions: int, num_bins: int) -> np.ndarray:
    """ESF init: per-bin uniform average over directions."""
    w = np.zeros((num_bins, num_directions * num_bins))
    for d in range(num_directions):
        w[np.arange(num_bins), d * num_bins + np.arange(num_bins)] = 1.0 / num_directions
    return w


GROUPS = ("block_affine", "esf", "mfb")


@dataclass
class FrontendParams:
    """Trainable parameters of the multi-channel front-end."""

    block_weight: np.ndarray  # [bins, 2*dirs, 2*mics]
    block_bias: np.ndarray  # [bins, 2*dirs]
    esf_weight: np.ndarray  # [bins, dirs*bins]
    esf_bias: np.ndarray  # [bins]
    mfb_weight: np.ndarray  # [64, bins]
    mfb_bias: np.ndarray  # [64]
    trainable: set = field(default_factory=lambda: set(GROUPS))

    @property
    def num_bins(self) -> int:
        return self.block_weight.shape[0]

    @property
    def num_directions(self) -> int:
        return self.block_weight.shape[1] // 2

    @property
    def num_channels(self) -> int:
        return self.block_weight.shape[2] // 2

    @classmethod
    def from_bank(cls, bank: BeamformerBank, num_mel: int = NUM_MEL_FILTERS, sample_rate: float = 16000.0) -> "FrontendParams":
        block = bank_to_block_affine(bank)
        bins, dirs = bank.num_bins, bank.num_directions
        return cls(
            block_weight=block["weight"],
            block_bias=block["bias"],
            esf_weight=uniform_esf_matrix(dirs, bins),
            esf_bias=np.zeros(bins),
            mfb_weight=mel_filterbank_matrix(num_mel, bins, sample_rate),
            mfb_bias=np.zeros(num_mel),
        )

    def copy(self) -> "FrontendParams":
        return FrontendParams(
            block_weight=self.block_weight.copy(),
            block_bias=self.block_bias.copy(),
            esf_weight=self.esf_weight.copy(),
            esf_bias=self.esf_bias.copy(),
            mfb_weight=self.mfb_weight.copy(),
            mfb_bias=self.mfb_bias.copy(),
            trainable=set(self.trainable),
        )

    def arrays(self) -> dict:
        return {
            "block_weight": self.block_weight,
            "block_bias": self.block_bias,
            "esf_weight": self.esf_weight,
            "esf_bias": self.esf_bias,
            "mfb_weight": self.mfb_weight,
            "mfb_bias": self.mfb_bias,
        }


def group_of(name: str) -> str:
    if name.startswith("block"):
        return "block_affine"
    if name.startswith("esf"):
        return "esf"
    return "mfb"


def block_affine_forward(x: FeatureTensor, params: FrontendParams) -> np.ndarray:
    """Per-bin block affine: [T, C, bins, 2] -> [T, dirs, bins, 2]."""
    if x.stage != "complex_stft":
        raise DomainError("block affine expects a complex_stft tensor")
    t, c, k, _ = x.data.shape
    if k != params.num_bins or c != params.num_channels:
        raise DomainError(
            f"input [{t},{c},{k},2] does not match params "
            f"({params.num_channels} channels, {params.num_bins} bins)"
        )
    xk = x.data.transpose(0, 2, 1, 3).reshape(t, k, 2 * c)  # [T, K, 2C]
    yk = np.einsum("kij,tkj->tki", params.block_weight, xk) + params.block_bias
    return yk.reshape(t, k, params.num_directions, 2).transpose(0, 2, 1, 3)


def power(y: np.ndarray) -> FeatureTensor:
    """re^2 + im^2 per (direction, bin)."""
    if y.ndim != 4 or y.shape[-1] != 2:
        raise DomainError("expected [T, dirs, bins, 2]")
    return FeatureTensor(
        stage="directional_power", data=y[..., 0] ** 2 + y[..., 1] ** 2, frame_rate=100.0
    )


def esf_forward(p: FeatureTensor, params: FrontendParams) -> np.ndarray:
    """Elastic spatial filtering: flattened [dirs x bins] power -> [bins]."""
    if p.stage != "directional_power":
        raise DomainError("ESF expects a directional_power tensor")
    t, d, k = p.data.shape
    if params.esf_weight.shape != (k, d * k):
        raise DomainError(
            f"ESF weight {params.esf_weight.shape} does not match input [{t},{d},{k}]"
        )
    flat = p.data.reshape(t, d * k)
    return flat @ params.esf_weight.T + params.esf_bias


def mfb_log_forward(s: np.ndarray, params: FrontendParams) -> FeatureTensor:
    """log(max(ReLU(W s + b), eps)); always finite."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[1] != params.mfb_weight.shape[1]:
        raise DomainError(f"expected [T, {params.mfb_weight.shape[1]}], got {s.shape}")
    z = s @ params.mfb_weight.T + params.mfb_bias
    out = np.log(np.maximum(np.maximum(z, 0.0), LOG_FLOOR))
    return FeatureTensor(stage="log_mfb", data=out, frame_rate=100.0)


def stack_frames(x: FeatureTensor) -> FeatureTensor:
    """Concatenate non-overlapping triples; trailing remainder dropped."""
    if x.stage != "log_mfb":
        raise DomainError("stacking expects a log_mfb tensor")
    t, d = x.data.shape
    n = t // STACK
    data = x.data[: n * STACK].reshape(n, STACK * d)
    return FeatureTensor(stage="stacked", data=data, frame_rate=100.0 / STACK)


class Frontend:
    """Multi-channel front-end with cached forward and exact backward."""

    def __init__(self, params: FrontendParams, stats: NormStats | None = None):
        self.params = params
        dim = params.num_channels * params.num_bins * 2
        self.stats = stats if stats is not None else NormStats.identity(dim)

    def forward(self, x: FeatureTensor, want_cache: bool = False):
        p = self.params
        xn = normalize(x, self.stats)
        t, c, k, _ = xn.data.shape
        xk = xn.data.transpose(0, 2, 1, 3).reshape(t, k, 2 * c)
        yk = np.einsum("kij,tkj->tki", p.block_weight, xk) + p.block_bias
        y = yk.reshape(t, k, p.num_directions, 2)
        pw = y[..., 0] ** 2 + y[..., 1] ** 2  # [T, K, D]
        pw_flat = pw.transpose(0, 2, 1).reshape(t, -1)  # [T, D*K], direction-major
        s = pw_flat @ p.esf_weight.T + p.esf_bias
        z = s @ p.mfb_weight.T + p.mfb_bias
        logm = np.log(np.maximum(np.maximum(z, 0.0), LOG_FLOOR))
        n = t // STACK
        stacked = FeatureTensor(
            stage="stacked", data=logm[: n * STACK].reshape(n, STACK * logm.shape[1]),
            frame_rate=100.0 / STACK,
        )
        if not want_cache:
            return stacked
        cache = {"xk": xk, "yk": yk, "pw_flat": pw_flat, "s": s, "z": z, "t": t}
        return stacked, cache

    def backward(self, d_stacked: np.ndarray, cache: dict):
        """Gradients of a scalar loss w.r.t. all parameters and the raw input.

        ``d_stacked`` is the upstream gradient on the stacked output. Returns
        ``(grads, d_input)`` where grads keys mirror ``params.arrays()`` and
        ``d_input`` is the gradient on the *unnormalized* complex_stft data.
        """
        p = self.params
        if cache is None:
            raise DomainError("backward requires the cache from forward(want_cache=True)")
        t = cache["t"]
        z, s, pw_flat, yk, xk = cache["z"], cache["s"], cache["pw_flat"], cache["yk"], cache["xk"]
        nm = p.mfb_weight.shape[0]
        n = d_stacked.shape[0]
        d_log = np.zeros((t, nm))
        if n:
            d_log[: n * STACK] = d_stacked.reshape(n * STACK, nm)
        # log(max(relu(z), eps)): d/dz = 1/z for z > eps else 0
        dz = np.where(z > LOG_FLOOR, d_log / np.where(z > LOG_FLOOR, z, 1.0), 0.0)
        g_mfb_w = dz.T @ s
        g_mfb_b = dz.sum(axis=0)
        ds = dz @ p.mfb_weight
        g_esf_w = ds.T @ pw_flat
        g_esf_b = ds.sum(axis=0)
        d_pw_flat = ds @ p.esf_weight  # [T, D*K]
        k, d = p.num_bins, p.num_directions
        d_pw = d_pw_flat.reshape(t, d, k).transpose(0, 2, 1)  # [T, K, D]
        y = yk.reshape(t, k, d, 2)
        dy = 2.0 * y * d_pw[..., None]
        dyk = dy.reshape(t, k, 2 * d)
        g_block_w = np.einsum("tki,tkj->kij", dyk, xk)
        g_block_b = dyk.sum(axis=0)
        dxk = np.einsum("kij,tki->tkj", p.block_weight, dyk)  # [T, K, 2C]
        c = p.num_channels
        d_norm = dxk.reshape(t, k, c, 2).transpose(0, 2, 1, 3)  # [T, C, K, 2]
        scale = (1.0 / np.sqrt(self.stats.variance)).reshape(1, c, k, 2)
        d_input = d_norm * scale
        grads = {
            "block_weight": g_block_w,
            "block_bias": g_block_b,
            "esf_weight": g_esf_w,
            "esf_bias": g_esf_b,
            "mfb_weight": g_mfb_w,
            "mfb_bias": g_mfb_b,
        }
        for name in list(grads):
            if group_of(name) not in p.trainable:
                grads[name] = np.zeros_like(grads[name])
        return grads, d_input


class SingleChannelFrontend:
    """Baseline front-end without beamforming or spatial filtering.

    Feeds the first channel's 127-bin power spectrum through the same
    MFB/ReLU/log/stacking tail.
    """

    def __init__(self, params: FrontendParams, stats: NormStats | None = None):
        self.params = params
        dim = params.num_bins * 2
        self.stats = stats if stats is not None else NormStats.identity(dim)

    def forward(self, x: FeatureTensor, want_cache: bool = False):
        p = self.params
        if x.data.ndim != 4:
            raise DomainError("expected a complex_stft tensor")
        mono = FeatureTensor(stage="complex_stft", data=x.data[:, :1], frame_rate=x.frame_rate)
        xn = normalize(mono, self.stats)
        t = xn.data.shape[0]
        s = xn.data[:, 0, :, 0] ** 2 + xn.data[:, 0, :, 1] ** 2  # [T, K]
        z = s @ p.mfb_weight.T + p.mfb_bias
        logm = np.log(np.maximum(np.maximum(z, 0.0), LOG_FLOOR))
        n = t // STACK
        stacked = FeatureTensor(
            stage="stacked", data=logm[: n * STACK].reshape(n, STACK * logm.shape[1]),
            frame_rate=100.0 / STACK,
        )
        if not want_cache:
            return stacked
        return stacked, {"s": s, "z": z, "t": t}

    def backward(self, d_stacked: np.ndarray, cache: dict):
        p = self.params
        if cache is None:
            raise DomainError("backward requires the cache from forward(want_cache=True)")
        t, s, z = cache["t"], cache["s"], cache["z"]
        nm = p.mfb_weight.shape[0]
        n = d_stacked.shape[0]
        d_log = np.zeros((t, nm))
        if n:
            d_log[: n * STACK] = d_stacked.reshape(n * STACK, nm)
        dz = np.where(z > LOG_FLOOR, d_log / np.where(z > LOG_FLOOR, z, 1.0), 0.0)
        grads = {
            "mfb_weight": dz.T @ s,
            "mfb_bias": dz.sum(axis=0),
        }
        if "mfb" not in p.trainable:
            grads = {k: np.zeros_like(v) for k, v in grads.items()}
        return grads, None


def frontend_backward(frontend, d_stacked: np.ndarray, cache: dict):
    """Functional alias for the cached reverse pass of either front-end."""
    return frontend.backward(d_stacked, cache)
