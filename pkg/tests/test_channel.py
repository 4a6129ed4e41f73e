import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airlink.channel import (SPEED_OF_LIGHT, Scatterer, ScattererScene, Tap, TapSet, apply_channel,
                             broadening_sweep, doppler_shift, impulse_response, mainlobe_broadening,
                             scene_to_taps, two_tap_broadening)
from airlink.errors import ConfigurationError, GeometryError, TruncationError
from airlink.sigcore import ComplexSignal

FS = 40e6


def _conv_oracle(x, lags, gains):
    h = np.zeros(max(lags) + 1, dtype=complex)
    for lag, g in zip(lags, gains):
        h[lag] += g
    return np.convolve(x, h)


class TestScene:
    def test_collinear_scatterer(self):
        taps = scene_to_taps(ScattererScene((0, 0), (100, 0), (Scatterer((50, 0), 0.5),)))
        assert taps.delays[0] == pytest.approx(100 / SPEED_OF_LIGHT)
        assert taps.delays[1] == pytest.approx(taps.delays[0])
        assert taps.delays[0] == pytest.approx(333.6e-9, abs=0.05e-9)

    def test_offset_scatterer_delay(self):
        taps = scene_to_taps(ScattererScene((0, 0), (100, 0), (Scatterer((50, 50), 1.0),)))
        path = 2 * math.hypot(50, 50)
        assert path == pytest.approx(141.42, abs=0.01)
        assert taps.delays[1] == pytest.approx(path / SPEED_OF_LIGHT, rel=1e-12)
        assert taps.delays[1] == pytest.approx(471.7e-9, rel=1e-3)

    def test_scatterer_gain(self):
        fc = 2.4e9
        taps = scene_to_taps(ScattererScene((0, 0), (100, 0), (Scatterer((50, 50), 0.8j),), carrier_freq=fc))
        path = 2 * math.hypot(50, 50)
        expected = 0.8j * (100 / path) * np.exp(-2j * np.pi * path / SPEED_OF_LIGHT * fc)
        assert taps.gains[1] == pytest.approx(expected, rel=1e-9)
        assert taps.gains[0] == 1.0

    def test_los_doppler(self):
        scene = ScattererScene((0, 0), (1000, 0), rx_velocity=125 / 3.6, carrier_freq=2.4e9)
        fd = scene_to_taps(scene).dopplers[0]
        assert fd == pytest.approx(277.8, rel=1e-3)
        assert fd == pytest.approx(doppler_shift(125 / 3.6, 2.4e9))

    def test_perpendicular_arrival_has_no_doppler(self):
        scene = ScattererScene((0, 0), (100, 0), (Scatterer((100, 50), 1.0),), los_blocked=True, rx_velocity=30.0)
        assert scene_to_taps(scene).dopplers[0] == pytest.approx(0.0, abs=1e-9)

    def test_coincident_scatterer(self):
        with pytest.raises(GeometryError):
            scene_to_taps(ScattererScene((0, 0), (10, 0), (Scatterer((10, 0), 0.5),)))

    def test_coincident_tx_rx(self):
        with pytest.raises(GeometryError):
            ScattererScene((1, 1), (1, 1))

    def test_reflectivity_bound(self):
        with pytest.raises(GeometryError):
            ScattererScene((0, 0), (1, 0), (Scatterer((0, 5), 1.5),))

    def test_blocked_and_empty(self):
        with pytest.raises(GeometryError):
            scene_to_taps(ScattererScene((0, 0), (1, 0), los_blocked=True))

    @settings(max_examples=60, deadline=None)
    @given(x=st.floats(1, 99), y1=st.floats(0, 100), dy=st.floats(0.01, 100))
    def test_moving_off_axis_increases_delay(self, x, y1, dy):
        def delay(y):
            return scene_to_taps(ScattererScene((0, 0), (100, 0), (Scatterer((x, y), 1.0),),
                                                los_blocked=True)).delays[0]
        assert delay(y1 + dy) > delay(y1)


class TestTapSet:
    def test_sorted(self):
        ts = TapSet((Tap(2e-6, 1), Tap(0.0, 1)))
        assert list(ts.delays) == [0.0, 2e-6]

    def test_empty(self):
        with pytest.raises(GeometryError):
            TapSet(())

    def test_normalized_energy_checked(self):
        with pytest.raises(ConfigurationError):
            TapSet((Tap(0, 2.0),), normalized=True)
        assert TapSet((Tap(0, 2.0), Tap(1e-6, 1j))).normalize().energy == pytest.approx(1.0, abs=1e-12)


class TestApplyChannel:
    def test_identity(self, rng):
        x = ComplexSignal(rng.standard_normal(64) + 1j * rng.standard_normal(64), FS)
        np.testing.assert_array_equal(apply_channel(x, TapSet((Tap(0.0, 1.0),))).samples, x.samples)

    def test_impulse_probe(self):
        x = ComplexSignal(np.r_[1.0, np.zeros(9)], 1e6)
        y = apply_channel(x, TapSet((Tap(0.0, 1.0), Tap(4e-6, 0.5)))).samples
        assert y.size == 14
        assert y[0] == 1 and y[4] == 0.5
        assert np.count_nonzero(y) == 2

    def test_convolution_oracle(self, rng):
        fs = 1e6
        x = rng.standard_normal(500) + 1j * rng.standard_normal(500)
        lags, gains = [0, 3, 11], [0.9, -0.4 + 0.2j, 0.1j]
        taps = TapSet.from_arrays(np.array(lags) / fs, gains)
        y = apply_channel(ComplexSignal(x, fs), taps).samples
        np.testing.assert_allclose(y, _conv_oracle(x, lags, gains), atol=1e-10)

    def test_linearity(self, rng):
        fs = 1e6
        taps = TapSet.from_arrays([0, 2e-6, 7e-6], [1, 0.3j, -0.2])
        x = rng.standard_normal(128) + 0j
        z = rng.standard_normal(128) * 1j
        a, b = 2 - 1j, 0.5
        lhs = apply_channel(ComplexSignal(a * x + b * z, fs), taps).samples
        rhs = a * apply_channel(ComplexSignal(x, fs), taps).samples + b * apply_channel(ComplexSignal(z, fs), taps).samples
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_energy_preserved(self, rng):
        fs = 1e6
        taps = TapSet.from_arrays([0, 1e-6, 5e-6], [1, 0.5j, -0.3]).normalize()
        x = (rng.standard_normal(200_000) + 1j * rng.standard_normal(200_000)) / math.sqrt(2)
        y = apply_channel(ComplexSignal(x, fs), taps).samples
        assert np.mean(np.abs(y) ** 2) == pytest.approx(np.mean(np.abs(x) ** 2), rel=0.02)

    def test_doppler_keeps_magnitude(self):
        fs = 1e6
        x = ComplexSignal(np.ones(1000), fs)
        y = apply_channel(x, TapSet((Tap(0.0, 0.7, 1234.0),))).samples
        np.testing.assert_allclose(np.abs(y), 0.7, atol=1e-12)
        np.testing.assert_allclose(y, 0.7 * np.exp(2j * np.pi * 1234.0 * np.arange(1000) / fs), atol=1e-12)


class TestImpulseResponse:
    @pytest.mark.parametrize("bw,null", [(5e6, 200e-9), (10e6, 100e-9)])
    def test_ideal_nulls(self, bw, null):
        a = impulse_response(TapSet((Tap(0.0, 1.0),)), bw, FS if bw == 5e6 else 80e6, 1e-6)
        assert a.null_left == pytest.approx(-null, abs=1 / a.fs)
        assert a.null_right == pytest.approx(null, abs=1 / a.fs)
        assert a.mainlobe_width == pytest.approx(2 * null, abs=1 / a.fs)

    def test_flat_fr_single_tap(self):
        a = impulse_response(TapSet((Tap(0.0, 1.0),)), 5e6, FS, 1e-6)
        np.testing.assert_allclose(np.abs(a.fr), 1.0, atol=1e-6)

    def test_delayed_tap_is_phase_ramp(self):
        # a zero-gain reference tap pins the time origin
        taps = TapSet((Tap(0.0, 0.0), Tap(150e-9, 1.0)))
        a = impulse_response(taps, 5e6, FS, 1e-6)
        np.testing.assert_allclose(np.abs(a.fr), 1.0, atol=1e-6)
        np.testing.assert_allclose(a.fr, np.exp(-2j * np.pi * a.freqs * 150e-9), atol=1e-12)

    def test_two_taps_widen_mainlobe(self):
        a = impulse_response(TapSet((Tap(0.0, 1.0), Tap(40e-9, 1.0))), 5e6, FS, 1e-6)
        assert a.mainlobe_width > 400e-9

    def test_span_too_short(self):
        with pytest.raises(TruncationError):
            impulse_response(TapSet((Tap(0.0, 1.0), Tap(2e-6, 1.0))), 5e6, FS, 1e-6)

    def test_undersampled_analysis(self):
        with pytest.raises(ConfigurationError):
            impulse_response(TapSet((Tap(0.0, 1.0),)), 5e6, 10e6, 1e-6)

    def test_broadening_identical_is_zero(self):
        a = impulse_response(TapSet((Tap(0.0, 1.0),)), 5e6, FS, 1e-6)
        assert mainlobe_broadening(a, a) == 0.0

    def test_broadening_definition(self):
        base = impulse_response(TapSet((Tap(0.0, 1.0),)), 5e6, FS, 1e-6)
        pert = impulse_response(TapSet((Tap(0.0, 1.0), Tap(91.217297e-9, 1.0))), 5e6, FS, 1e-6)
        expected = 100 * (pert.mainlobe_width - base.mainlobe_width) / base.mainlobe_width
        assert mainlobe_broadening(base, pert) == pytest.approx(expected)
        assert pert.mainlobe_width == pytest.approx(423.6e-9, abs=0.1e-9)

    def test_broadening_monotone(self):
        pct = broadening_sweep(np.linspace(5e-9, 100e-9, 20), 5e6, FS)
        assert np.all(np.diff(pct) > 0)

    def test_broadening_frozen_values(self):
        # measured once on the reference implementation; guards regressions
        assert two_tap_broadening(40e-9, 5e6, FS) == pytest.approx(1.0234211, abs=1e-5)
        assert two_tap_broadening(100e-9, 5e6, FS) == pytest.approx(7.2872018, abs=1e-5)
