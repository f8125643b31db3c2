"""Geometry oracles: delays, steering phases, diffuse coherence."""

import math

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from mcfront.errors import DomainError
from mcfront.geometry import (
    ArrayGeometry,
    LookDirection,
    SubarraySelection,
    default_look_directions,
    diffuse_coherence,
    load_geometry,
    paper_circular_7,
    propagation_delays,
    select_opposite_pair,
    steering_vector,
)


@pytest.fixture
def geom():
    return paper_circular_7()


@pytest.fixture
def pair(geom):
    return select_opposite_pair(geom)


def test_paper_array_has_seven_mics_on_72mm_circle(geom):
    assert geom.num_mics == 7
    radii = np.linalg.norm(geom.mic_positions[:6, :2], axis=1)
    np.testing.assert_allclose(radii, 0.036, atol=1e-12)
    np.testing.assert_allclose(geom.mic_positions[6], 0.0, atol=1e-12)


def test_opposite_pair_is_diametral(geom, pair):
    assert pair.mic_indices == (0, 3)
    p = pair.positions(geom)
    assert np.linalg.norm(p[0] - p[1]) == pytest.approx(0.072)


def test_steering_phase_matches_hand_computation(geom, pair):
    # Source on the +x axis: mics 0 and 3 sit at x = +-0.036, so the
    # end-to-end travel-time difference is 0.072 / c and the relative phase
    # at 1 kHz is 2 pi * 1000 * 0.072 / 343.
    d = steering_vector(geom, pair, LookDirection(azimuth=0.0), 1000.0)
    np.testing.assert_allclose(np.abs(d), 1.0, atol=1e-12)
    expected = 2.0 * math.pi * 1000.0 * 0.072 / 343.0
    # mic 0 sits toward the source, so its phase leads mic 3's by exactly
    # the end-to-end travel-time phase
    assert np.angle(d[0] / d[1]) == pytest.approx(expected, abs=1e-9)


def test_delays_translation_invariant(geom, pair):
    direction = LookDirection(azimuth=1.0)
    base = propagation_delays(geom, pair, direction)
    shifted = ArrayGeometry(mic_positions=geom.mic_positions + np.array([3.0, -2.0, 0.5]))
    moved = propagation_delays(shifted, pair, direction)
    np.testing.assert_allclose(base, moved, atol=1e-15)


def test_broadside_source_has_zero_delay_difference(geom, pair):
    # Mics 0 and 3 lie on the x axis; a source from +y is equidistant.
    tau = propagation_delays(geom, pair, LookDirection(azimuth=math.pi / 2))
    assert tau[0] == pytest.approx(tau[1], abs=1e-15)


def test_diffuse_coherence_value_oracle(geom, pair):
    # Gamma_01 = sinc(2 pi f d / c) at f = 1 kHz, d = 0.072 m:
    # x = 2 pi * 1000 * 0.072 / 343 = 1.31947..., sin(x)/x computed directly.
    x = 2.0 * math.pi * 1000.0 * 0.072 / 343.0
    expected = math.sin(x) / x
    gamma = diffuse_coherence(geom, pair, 1000.0)
    assert gamma[0, 1] == pytest.approx(expected, abs=1e-12)
    np.testing.assert_allclose(np.diag(gamma), 1.0, atol=1e-12)
    np.testing.assert_allclose(gamma, gamma.T, atol=1e-15)


def test_coherence_at_zero_frequency_is_all_ones(geom, pair):
    np.testing.assert_allclose(diffuse_coherence(geom, pair, 0.0), 1.0, atol=1e-15)


def test_look_direction_validation():
    with pytest.raises(DomainError):
        LookDirection(azimuth=-0.1)
    with pytest.raises(DomainError):
        LookDirection(azimuth=2.0 * math.pi)
    with pytest.raises(DomainError):
        LookDirection(azimuth=1.0, elevation=2.0)


def test_unit_vector_points_at_source():
    up = LookDirection(azimuth=0.0, elevation=math.pi / 2)
    np.testing.assert_allclose(up.unit_vector, [0.0, 0.0, 1.0], atol=1e-12)
    east = LookDirection(azimuth=0.0)
    np.testing.assert_allclose(east.unit_vector, [1.0, 0.0, 0.0], atol=1e-12)


def test_geometry_validation():
    with pytest.raises(DomainError):
        ArrayGeometry(mic_positions=np.zeros((1, 3)))
    with pytest.raises(DomainError):
        ArrayGeometry(mic_positions=np.zeros((3, 2)))
    with pytest.raises(DomainError):
        ArrayGeometry(mic_positions=np.full((2, 3), np.nan))


def test_subarray_validation(geom):
    with pytest.raises(DomainError):
        SubarraySelection(mic_indices=(0, 0))
    sel = SubarraySelection(mic_indices=(0, 99))
    with pytest.raises(DomainError):
        sel.validate_against(geom)


def test_steering_frequency_range(geom, pair):
    with pytest.raises(DomainError):
        steering_vector(geom, pair, LookDirection(azimuth=0.0), 9000.0)
    with pytest.raises(DomainError):
        diffuse_coherence(geom, pair, -1.0)


def test_default_look_directions_spacing():
    dirs = default_look_directions(12)
    az = [d.azimuth for d in dirs]
    assert az[0] == 0.0
    np.testing.assert_allclose(np.diff(az), 2.0 * math.pi / 12.0, atol=1e-12)
    with pytest.raises(DomainError):
        default_look_directions(0)


def test_load_geometry_roundtrip(tmp_path, geom):
    path = tmp_path / "geom.yaml"
    path.write_text(yaml.safe_dump({
        "mic_positions": geom.mic_positions.tolist(),
        "speed_of_sound": 343.0,
        "sample_rate": 16000.0,
    }))
    loaded = load_geometry(path)
    np.testing.assert_allclose(loaded.mic_positions, geom.mic_positions)

    preset = tmp_path / "preset.yaml"
    preset.write_text(yaml.safe_dump({"preset": "paper-circular-7"}))
    assert load_geometry(preset).num_mics == 7
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"preset": "nope"}))
    with pytest.raises(DomainError):
        load_geometry(bad)


@settings(deadline=None, max_examples=25)
@given(
    az=st.floats(min_value=0.0, max_value=2.0 * math.pi, exclude_max=True),
    freq=st.floats(min_value=0.0, max_value=8000.0),
)
def test_steering_entries_unit_modulus(az, freq):
    geom = paper_circular_7()
    sel = select_opposite_pair(geom)
    d = steering_vector(geom, sel, LookDirection(azimuth=az), freq)
    np.testing.assert_allclose(np.abs(d), 1.0, atol=1e-12)


@settings(deadline=None, max_examples=25)
@given(freq=st.floats(min_value=0.0, max_value=8000.0))
def test_coherence_entries_bounded(freq):
    geom = paper_circular_7()
    sel = SubarraySelection(mic_indices=(0, 2, 4))
    gamma = diffuse_coherence(geom, sel, freq)
    assert np.all(np.abs(gamma) <= 1.0 + 1e-12)
