"""OPUS transcoding lab: per-channel constant-bitrate encode/decode round
trips plus the spectral measurements used to characterize the damage.

libopus is used as a black box through ctypes; each stream owns its own
encoder/decoder pair. Default settings: CBR, 20 ms frames, complexity 10,
VOIP application, 16 kHz in and out. Decoded audio is advanced by the
encoder lookahead and trimmed to the input length so channels stay
time-aligned; beyond the integer lookahead the codec leaves a small
mode-dependent fractional group delay, which is calibrated once per
(sample rate, bitrate) and removed so that channels coded at different
rates stay phase-aligned with each other.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import struct
import wave
from dataclasses import dataclass

import numpy as np

from .errors import CodecError, DomainError
from .frontend import StftConfig, stft

ALLOWED_KBPS = (8, 16, 32, 64, 128, 132, 136, 144, 160, 192, 256)
UNCOMPRESSED = "uncompressed"
UNCOMPRESSED_EQUIVALENT_KBPS = 256  # budget bookkeeping value
FRAME_MS = 20

_OPUS_APPLICATION_VOIP = 2048
_OPUS_SET_BITRATE = 4002
_OPUS_SET_VBR = 4006
_OPUS_SET_COMPLEXITY = 4010
_OPUS_GET_LOOKAHEAD = 4027

_lib = None


def _opus():
    global _lib
    if _lib is None:
        name = ctypes.util.find_library("opus")
        if name is None:
            raise CodecError("libopus shared library not found")
        lib = ctypes.CDLL(name)
        lib.opus_encoder_create.restype = ctypes.c_void_p
        lib.opus_decoder_create.restype = ctypes.c_void_p
        lib.opus_get_version_string.restype = ctypes.c_char_p
        lib.opus_strerror.restype = ctypes.c_char_p
        _lib = lib
    return _lib


def opus_version() -> str:
    return _opus().opus_get_version_string().decode()


def _check(code: int, what: str):
    if code < 0:
        msg = _opus().opus_strerror(code).decode()
        raise CodecError(f"{what}: {msg} ({code})")


class OpusStream:
    """One mono encoder/decoder pair; not shareable across threads."""

    def __init__(self, sample_rate: int, bitrate_kbps: int, vbr: bool = False):
        lib = _opus()
        err = ctypes.c_int()
        self._enc = lib.opus_encoder_create(
            int(sample_rate), 1, _OPUS_APPLICATION_VOIP, ctypes.byref(err)
        )
        _check(err.value, "opus_encoder_create")
        self._dec = lib.opus_decoder_create(int(sample_rate), 1, ctypes.byref(err))
        _check(err.value, "opus_decoder_create")
        enc = ctypes.c_void_p(self._enc)
        _check(lib.opus_encoder_ctl(enc, _OPUS_SET_BITRATE, ctypes.c_int(bitrate_kbps * 1000)),
               "set bitrate")
        _check(lib.opus_encoder_ctl(enc, _OPUS_SET_VBR, ctypes.c_int(1 if vbr else 0)),
               "set vbr")
        _check(lib.opus_encoder_ctl(enc, _OPUS_SET_COMPLEXITY, ctypes.c_int(10)),
               "set complexity")
        look = ctypes.c_int()
        _check(lib.opus_encoder_ctl(enc, _OPUS_GET_LOOKAHEAD, ctypes.byref(look)),
               "get lookahead")
        self.lookahead = look.value
        self.bitrate_kbps = int(bitrate_kbps)
        self.sample_rate = int(sample_rate)
        self.frame_samples = self.sample_rate * FRAME_MS // 1000
        self._lib = lib

    def __del__(self):
        lib = getattr(self, "_lib", None)
        if lib is not None:
            if getattr(self, "_enc", None):
                lib.opus_encoder_destroy(ctypes.c_void_p(self._enc))
            if getattr(self, "_dec", None):
                lib.opus_decoder_destroy(ctypes.c_void_p(self._dec))

    def encode_packets(self, pcm: np.ndarray) -> list:
        """Encode int16 mono PCM (zero-padded to whole frames) to packets."""
        pcm = np.ascontiguousarray(pcm, dtype=np.int16)
        frame = self.frame_samples
        pad = (-len(pcm)) % frame
        if pad:
            pcm = np.concatenate([pcm, np.zeros(pad, dtype=np.int16)])
        buf = ctypes.create_string_buffer(4000)
        packets = []
        for start in range(0, len(pcm), frame):
            seg = pcm[start : start + frame]
            n = self._lib.opus_encode(
                ctypes.c_void_p(self._enc),
                seg.ctypes.data_as(ctypes.POINTER(ctypes.c_int16)),
                frame, buf, len(buf),
            )
            _check(n, "opus_encode")
            packets.append(buf.raw[:n])
        return packets

    def decode_packets(self, packets) -> np.ndarray:
        frame = self.frame_samples
        out = np.zeros(frame * len(packets), dtype=np.int16)
        scratch = np.zeros(frame, dtype=np.int16)
        for pi, pkt in enumerate(packets):
            n = self._lib.opus_decode(
                ctypes.c_void_p(self._dec), pkt, len(pkt),
                scratch.ctypes.data_as(ctypes.POINTER(ctypes.c_int16)),
                frame, 0,
            )
            _check(n, "opus_decode")
            out[pi * frame : pi * frame + n] = scratch[:n]
        return out

    def round_trip(self, pcm: np.ndarray, compensate_residual: bool = True) -> np.ndarray:
        """Encode + decode, compensating the codec delay; keeps length."""
        n = len(pcm)
        decoded = self.decode_packets(self.encode_packets(pcm))
        aligned = decoded[self.lookahead : self.lookahead + n]
        if len(aligned) < n:
            aligned = np.concatenate([aligned, np.zeros(n - len(aligned), dtype=np.int16)])
        if compensate_residual:
            shift = residual_delay(self.sample_rate, self.bitrate_kbps)
            if shift:
                advanced = _fractional_advance(aligned.astype(float), shift)
                aligned = np.clip(np.round(advanced), -32768, 32767).astype(np.int16)
        return aligned


def _fractional_advance(signal: np.ndarray, samples: float) -> np.ndarray:
    """Shift a signal ``samples`` earlier via an FFT phase ramp."""
    pad = 16 + int(np.ceil(abs(samples)))
    x = np.concatenate([np.zeros(pad), signal, np.zeros(pad)])
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x))
    spec *= np.exp(2j * np.pi * freqs * samples)
    y = np.fft.irfft(spec, n=len(x))
    return y[pad : pad + len(signal)]


_RESIDUAL_DELAY_CACHE = {}


def residual_delay(sample_rate: int, bitrate_kbps: int) -> float:
    """Calibrated fractional group delay (samples) left after the integer
    lookahead for one (sample rate, bitrate) pair.

    Measured once on a deterministic band-limited noise burst by fitting
    the phase slope of the decoded/original cross-spectrum over the band
    every mode preserves (200 Hz - 3 kHz). Cached per process.
    """
    key = (int(sample_rate), int(bitrate_kbps))
    if key not in _RESIDUAL_DELAY_CACHE:
        rng = np.random.default_rng(0x0FF5E7)
        n = sample_rate  # one second of calibration noise
        spec = np.fft.rfft(rng.standard_normal(n))
        freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
        spec[(freqs < 200.0) | (freqs > 3000.0)] = 0.0
        cal = np.fft.irfft(spec, n=n)
        cal = (0.5 * 32767.0 * cal / np.max(np.abs(cal))).astype(np.int16)
        stream = OpusStream(sample_rate, bitrate_kbps)
        dec = stream.round_trip(cal, compensate_residual=False).astype(float)
        a = np.fft.rfft(cal.astype(float))
        b = np.fft.rfft(dec)
        cross = b * np.conj(a)
        norm = np.fft.rfftfreq(n)
        band = (freqs > 200.0) & (freqs < 3000.0) & (np.abs(cross) > 0.01 * np.abs(cross).max())
        phase = np.unwrap(np.angle(cross[band]))
        slope = np.polyfit(2.0 * np.pi * norm[band], phase, 1, w=np.abs(cross[band]))[0]
        # a positive value means the decode still lags the input; clamp to
        # the sub-sample regime this compensates for
        _RESIDUAL_DELAY_CACHE[key] = float(np.clip(-slope, -1.0, 1.0))
    return _RESIDUAL_DELAY_CACHE[key]


@dataclass(frozen=True)
class BitratePlan:
    """Per-channel rate assignment: 'uncompressed' or a kbps value."""

    per_channel: tuple

    def __post_init__(self):
        entries = []
        for e in self.per_channel:
            if isinstance(e, str):
                if e.lower() != UNCOMPRESSED:
                    raise DomainError(f"unknown plan entry {e!r}")
                entries.append(UNCOMPRESSED)
            else:
                kbps = int(e)
                if kbps not in ALLOWED_KBPS:
                    raise DomainError(f"unsupported bitrate {kbps} kbps (allowed: {ALLOWED_KBPS})")
                entries.append(kbps)
        if not entries:
            raise DomainError("plan must cover at least one channel")
        object.__setattr__(self, "per_channel", tuple(entries))

    @classmethod
    def parse(cls, text: str) -> "BitratePlan":
        """Parse e.g. '256,8' or 'uncompressed,32'."""
        parts = [p.strip() for p in text.split(",") if p.strip()]
        entries = [p if p.lower() == UNCOMPRESSED else int(p) for p in parts]
        return cls(per_channel=tuple(entries))

    @classmethod
    def uniform(cls, rate, channels: int) -> "BitratePlan":
        return cls(per_channel=(rate,) * channels)

    def total_kbps(self) -> int:
        return sum(
            UNCOMPRESSED_EQUIVALENT_KBPS if e == UNCOMPRESSED else e
            for e in self.per_channel
        )

    def describe(self) -> str:
        return ",".join("U" if e == UNCOMPRESSED else str(e) for e in self.per_channel)


@dataclass
class AudioClip:
    """Equal-length 16-bit PCM channels at one sample rate."""

    channels: list
    sample_rate: int = 16000

    def __post_init__(self):
        chans = [np.ascontiguousarray(c, dtype=np.int16) for c in self.channels]
        if not chans:
            raise DomainError("clip needs at least one channel")
        lengths = {len(c) for c in chans}
        if len(lengths) != 1:
            raise DomainError(f"channel lengths differ: {sorted(lengths)}")
        self.channels = chans

    @property
    def num_channels(self) -> int:
        return len(self.channels)

    @property
    def num_samples(self) -> int:
        return len(self.channels[0])

    def as_array(self) -> np.ndarray:
        return np.stack(self.channels)


def transcode(clip: AudioClip, plan: BitratePlan, vbr: bool = False) -> AudioClip:
    """Independently transcode each channel at its planned bitrate.

    Uncompressed channels pass through bit-exact; coded channels keep their
    length and time alignment (codec delay compensated).
    """
    if len(plan.per_channel) != clip.num_channels:
        raise DomainError(
            f"plan covers {len(plan.per_channel)} channels, clip has {clip.num_channels}"
        )
    out = []
    for ci, (pcm, rate) in enumerate(zip(clip.channels, plan.per_channel)):
        if rate == UNCOMPRESSED:
            out.append(pcm.copy())
            continue
        try:
            stream = OpusStream(clip.sample_rate, rate, vbr=vbr)
            out.append(stream.round_trip(pcm))
        except CodecError as exc:
            raise CodecError(f"channel {ci} at {rate} kbps: {exc}") from exc
    return AudioClip(channels=out, sample_rate=clip.sample_rate)


def band_energy_ratio(clip: AudioClip, cutoff: float, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Per-channel fraction of STFT power above ``cutoff`` Hz; 0 if silent."""
    if cutoff >= clip.sample_rate / 2:
        raise DomainError("cutoff must be below Nyquist")
    spec = stft(clip.as_array().astype(float), cfg)
    pw = spec.data[..., 0] ** 2 + spec.data[..., 1] ** 2  # [T, C, K]
    freqs = np.arange(1, cfg.num_bins + 1) * clip.sample_rate / cfg.fft_size
    total = pw.sum(axis=(0, 2))
    high = pw[:, :, freqs > cutoff].sum(axis=(0, 2))
    out = np.zeros(clip.num_channels)
    nz = total > 0
    out[nz] = high[nz] / total[nz]
    return out


def snr_db(clean_ref: AudioClip, noise_ref: AudioClip) -> float:
    """10 log10(P_signal / P_noise); +inf when the noise is silent."""
    s = clean_ref.as_array().astype(float)
    n = noise_ref.as_array().astype(float)
    if s.shape != n.shape:
        raise DomainError("clean and noise references must have equal shapes")
    ps = float(np.mean(s * s))
    pn = float(np.mean(n * n))
    if pn == 0.0:
        return float("inf")
    return 10.0 * np.log10(max(ps, 1e-300) / pn)


def snr_label(clean_ref: AudioClip, noise_ref: AudioClip, threshold_db: float = 5.0) -> str:
    """'clean' when SNR >= threshold (zero noise counts as clean)."""
    return "clean" if snr_db(clean_ref, noise_ref) >= threshold_db else "noisy"


# -- file I/O --------------------------------------------------------------

def write_wav(path, clip: AudioClip):
    data = clip.as_array().T.reshape(-1)  # interleave channels
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(clip.num_channels)
        fh.setsampwidth(2)
        fh.setframerate(clip.sample_rate)
        fh.writeframes(data.astype("<i2").tobytes())


def read_wav(path) -> AudioClip:
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise DomainError("only 16-bit PCM WAV is supported")
        nch = fh.getnchannels()
        data = np.frombuffer(fh.readframes(fh.getnframes()), dtype="<i2")
        rate = fh.getframerate()
    frames = data.reshape(-1, nch)
    return AudioClip(channels=[frames[:, c].copy() for c in range(nch)], sample_rate=rate)


def write_packets(path, packets):
    """Length-prefixed raw OPUS packets (inspection dump; not Ogg Opus)."""
    with open(path, "wb") as fh:
        fh.write(b"MCOP")
        for pkt in packets:
            fh.write(struct.pack("<I", len(pkt)))
            fh.write(pkt)


def read_packets(path) -> list:
    packets = []
    with open(path, "rb") as fh:
        if fh.read(4) != b"MCOP":
            raise DomainError(f"{path} is not a packet dump")
        while True:
            head = fh.read(4)
            if not head:
                break
            (n,) = struct.unpack("<I", head)
            packets.append(fh.read(n))
    return packets
