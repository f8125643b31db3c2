"""Microphone array geometry, far-field steering vectors and the diffuse
noise coherence matrix.

Conventions:
    - positions are cartesian, in meters; the array may live anywhere in
      space, delays are referenced to the centroid of all microphones so a
      global translation never changes a steering vector.
    - a look direction is the unit vector pointing *at* the source
      (azimuth measured counter-clockwise from +x in the xy-plane).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import DomainError

SPEED_OF_SOUND = 343.0  # m/s at ~20 degC


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions plus the acoustic constants they are used with."""

    mic_positions: np.ndarray  # [M, 3] meters
    speed_of_sound: float = SPEED_OF_SOUND
    sample_rate: float = 16000.0

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise DomainError(f"mic_positions must be [M, 3], got {pos.shape}")
        if pos.shape[0] < 2:
            raise DomainError("need at least 2 microphones")
        if not np.all(np.isfinite(pos)):
            raise DomainError("mic positions must be finite")
        if self.speed_of_sound <= 0 or self.sample_rate <= 0:
            raise DomainError("speed_of_sound and sample_rate must be positive")
        object.__setattr__(self, "mic_positions", pos)

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.mic_positions.mean(axis=0)


@dataclass(frozen=True)
class LookDirection:
    """Source direction: azimuth in [0, 2pi), elevation in [-pi/2, pi/2]."""

    azimuth: float
    elevation: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.azimuth < 2.0 * math.pi):
            raise DomainError(f"azimuth {self.azimuth} outside [0, 2pi)")
        if not (-math.pi / 2 <= self.elevation <= math.pi / 2):
            raise DomainError(f"elevation {self.elevation} outside [-pi/2, pi/2]")

    @property
    def unit_vector(self) -> np.ndarray:
        """Unit vector pointing from the array toward the source."""
        ce = math.cos(self.elevation)
        return np.array([
            math.cos(self.azimuth) * ce,
            math.sin(self.azimuth) * ce,
            math.sin(self.elevation),
        ])


@dataclass(frozen=True)
class SubarraySelection:
    """Ordered subset of microphone indices."""

    mic_indices: tuple = field(default_factory=tuple)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.mic_indices)
        if len(set(idx)) != len(idx):
            raise DomainError(f"duplicate mic indices: {idx}")
        object.__setattr__(self, "mic_indices", idx)

    def validate_against(self, geom: ArrayGeometry):
        for i in self.mic_indices:
            if not (0 <= i < geom.num_mics):
                raise DomainError(f"mic index {i} out of range for {geom.num_mics} mics")

    def positions(self, geom: ArrayGeometry) -> np.ndarray:
        self.validate_against(geom)
        return geom.mic_positions[list(self.mic_indices)]


def paper_circular_7(sample_rate: float = 16000.0) -> ArrayGeometry:
    """Six equispaced mics on a 72 mm diameter circle plus one center mic."""
    radius = 0.072 / 2.0
    angles = 2.0 * np.pi * np.arange(6) / 6.0
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(6)], axis=1)
    pos = np.vstack([ring, np.zeros((1, 3))])
    return ArrayGeometry(mic_positions=pos, sample_rate=sample_rate)


PRESETS = {"paper-circular-7": paper_circular_7}


def load_geometry(path) -> ArrayGeometry:
    """Load an ArrayGeometry from a YAML file.

    Expected keys: ``mic_positions`` (list of [x, y, z] in meters), and
    optionally ``speed_of_sound`` and ``sample_rate``. Alternatively a single
    key ``preset`` naming a built-in geometry.
    """
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise DomainError(f"geometry file {path} must hold a mapping")
    if "preset" in cfg:
        name = cfg["preset"]
        if name not in PRESETS:
            raise DomainError(f"unknown geometry preset {name!r}")
        return PRESETS[name](sample_rate=float(cfg.get("sample_rate", 16000.0)))
    return ArrayGeometry(
        mic_positions=np.asarray(cfg["mic_positions"], dtype=float),
        speed_of_sound=float(cfg.get("speed_of_sound", SPEED_OF_SOUND)),
        sample_rate=float(cfg.get("sample_rate", 16000.0)),
    )


def propagation_delays(geom: ArrayGeometry, sel: SubarraySelection, direction: LookDirection) -> np.ndarray:
    """Plane-wave arrival delay (seconds) of each selected mic.

    Referenced to the centroid of the full array; a mic displaced toward the
    source has a negative delay (the wavefront reaches it first).
    """
    pos = sel.positions(geom) - geom.centroid
    u = direction.unit_vector
    return -(pos @ u) / geom.speed_of_sound


def steering_vector(
    geom: ArrayGeometry,
    sel: SubarraySelection,
    direction: LookDirection,
    freq: float,
) -> np.ndarray:
    """Far-field steering vector at one frequency.

    Entry m is exp(-j 2 pi f tau_m) for the plane-wave delay tau_m, i.e. the
    relative phase a source from ``direction`` produces on the selected mics.
    """
    if not (0.0 <= freq <= geom.sample_rate / 2.0):
        raise DomainError(f"freq {freq} outside [0, {geom.sample_rate / 2}]")
    tau = propagation_delays(geom, sel, direction)
    return np.exp(-2j * np.pi * freq * tau)


def diffuse_coherence(geom: ArrayGeometry, sel: SubarraySelection, freq: float) -> np.ndarray:
    """Spherically isotropic noise coherence: Gamma_ij = sinc(2 pi f d_ij / c).

    sinc here is sin(x)/x with sinc(0) = 1; the matrix is real, symmetric and
    has a unit diagonal.
    """
    if not (0.0 <= freq <= geom.sample_rate / 2.0):
        raise DomainError(f"freq {freq} outside [0, {geom.sample_rate / 2}]")
    pos = sel.positions(geom)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    # np.sinc(x) = sin(pi x)/(pi x), so sin(2 pi f d / c)/(2 pi f d / c)
    # is np.sinc(2 f d / c).
    return np.sinc(2.0 * freq * dist / geom.speed_of_sound)


def default_look_directions(count: int) -> list[LookDirection]:
    """``count`` azimuths equally spaced on [0, 2pi), elevation 0."""
    if count < 1:
        raise DomainError("count must be >= 1")
    return [LookDirection(azimuth=2.0 * math.pi * i / count) for i in range(count)]


def select_opposite_pair(geom: ArrayGeometry) -> SubarraySelection:
    """The two mics with maximal pairwise distance (lowest-index tie-break)."""
    if geom.num_mics < 2:
        raise DomainError("need at least 2 microphones")
    pos = geom.mic_positions
    best = None
    best_dist = -1.0
    for i in range(geom.num_mics):
        for j in range(i + 1, geom.num_mics):
            d = float(np.linalg.norm(pos[i] - pos[j]))
            if d > best_dist + 1e-12:
                best, best_dist = (i, j), d
    return SubarraySelection(mic_indices=best)
