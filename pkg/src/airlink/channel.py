"""Geometry-driven multipath channel.

A :class:`ScattererScene` (2-D positions, one transmitter, one receiver and
a handful of point scatterers) is turned into a :class:`TapSet`, which can
then be applied to a baseband signal as a tapped delay line or analysed as
a band-limited impulse/frequency response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import GeometryError, SizeError, TruncationError, ConfigurationError
from .sigcore import ComplexSignal

__all__ = [
    "SPEED_OF_LIGHT",
    "Scatterer",
    "ScattererScene",
    "Tap",
    "TapSet",
    "IrAnalysis",
    "scene_to_taps",
    "apply_channel",
    "impulse_response",
    "mainlobe_broadening",
    "doppler_shift",
    "two_tap_broadening",
    "broadening_sweep",
]

SPEED_OF_LIGHT = 2.99792458e8

# truncated-sinc half length in lobes, and null threshold relative to the peak
SINC_LOBES = 16
NULL_THRESHOLD_DB = -20.0


def doppler_shift(speed: float, carrier_freq: float, cos_angle: float = 1.0) -> float:
    """Doppler shift in Hz for a receiver closing at ``speed`` m/s."""
    return speed * carrier_freq / SPEED_OF_LIGHT * cos_angle


@dataclass(frozen=True)
class Scatterer:
    pos: tuple[float, float]
    reflectivity: complex = 1.0


@dataclass(frozen=True)
class ScattererScene:
    """Transmitter, receiver and point scatterers in a plane.

    ``rx_velocity`` is the receiver speed along the LOS axis, positive when
    closing on the transmitter. ``path_loss_exponent`` applies to the ratio
    of LOS length to scattered path length.
    """

    tx_pos: tuple[float, float]
    rx_pos: tuple[float, float]
    scatterers: tuple[Scatterer, ...] = ()
    los_blocked: bool = False
    rx_velocity: float = 0.0
    carrier_freq: float = 2.4e9
    path_loss_exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        if np.allclose(self.tx_pos, self.rx_pos, rtol=0, atol=1e-12):
            raise GeometryError("transmitter and receiver positions coincide")
        for s in self.scatterers:
            if abs(s.reflectivity) > 1.0 + 1e-12:
                raise GeometryError(f"scatterer at {s.pos} has |reflectivity| > 1")


@dataclass(frozen=True)
class Tap:
    delay: float
    gain: complex
    doppler: float = 0.0


@dataclass(frozen=True)
class TapSet:
    """Multipath taps kept sorted by delay."""

    taps: tuple[Tap, ...]
    normalized: bool = False

    def __post_init__(self):
        taps = tuple(sorted(self.taps, key=lambda t: t.delay))
        if not taps:
            raise GeometryError("a TapSet needs at least one tap")
        if taps[0].delay < 0:
            raise ConfigurationError("tap delays must be non-negative")
        object.__setattr__(self, "taps", taps)
        if self.normalized:
            energy = float(np.sum(np.abs(self.gains) ** 2))
            if abs(energy - 1.0) > 1e-9:
                raise ConfigurationError(f"normalized TapSet has energy {energy}, expected 1")

    @classmethod
    def from_arrays(cls, delays: Sequence[float], gains: Sequence[complex],
                    dopplers: Sequence[float] | None = None) -> "TapSet":
        if dopplers is None:
            dopplers = [0.0] * len(delays)
        if not len(delays) == len(gains) == len(dopplers):
            raise SizeError("delays, gains and dopplers must have equal length")
        return cls(tuple(Tap(float(d), complex(g), float(f)) for d, g, f in zip(delays, gains, dopplers)))

    def __len__(self):
        return len(self.taps)

    @property
    def delays(self) -> np.ndarray:
        return np.array([t.delay for t in self.taps])

    @property
    def gains(self) -> np.ndarray:
        return np.array([t.gain for t in self.taps], dtype=complex)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([t.doppler for t in self.taps])

    @property
    def max_delay(self) -> float:
        return self.taps[-1].delay

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))

    def normalize(self) -> "TapSet":
        scale = 1.0 / math.sqrt(self.energy)
        return TapSet(tuple(replace(t, gain=t.gain * scale) for t in self.taps), normalized=True)

    def relative(self) -> "TapSet":
        """Same taps with delays measured from the first arrival."""
        t0 = self.taps[0].delay
        return TapSet(tuple(replace(t, delay=t.delay - t0) for t in self.taps), self.normalized)

    def without_doppler(self) -> "TapSet":
        return TapSet(tuple(replace(t, doppler=0.0) for t in self.taps), self.normalized)

    def sample_delays(self, sample_rate: float) -> np.ndarray:
        """Delays rounded to the nearest whole sample."""
        return np.rint(self.delays * sample_rate).astype(int)


def scene_to_taps(scene: ScattererScene) -> TapSet:
    """Trace the LOS path and one single-bounce path per scatterer."""
    tx = np.asarray(scene.tx_pos, dtype=float)
    rx = np.asarray(scene.rx_pos, dtype=float)
    los_vec = tx - rx
    los_len = float(np.linalg.norm(los_vec))
    # receiver moves along the LOS axis, towards the transmitter when positive
    velocity = scene.rx_velocity * los_vec / los_len
    fc = scene.carrier_freq

    def arrival_doppler(source: np.ndarray) -> float:
        towards = source - rx
        cos_angle = float(velocity @ towards) / (np.linalg.norm(towards) * (abs(scene.rx_velocity) or 1.0))
        return float(doppler_shift(abs(scene.rx_velocity), fc, cos_angle))

    taps = []
    if not scene.los_blocked:
        taps.append(Tap(los_len / SPEED_OF_LIGHT, 1.0 + 0j, arrival_doppler(tx)))
    for s in scene.scatterers:
        pos = np.asarray(s.pos, dtype=float)
        d1 = float(np.linalg.norm(pos - tx))
        d2 = float(np.linalg.norm(rx - pos))
        if d1 < 1e-9 or d2 < 1e-9:
            raise GeometryError(f"scatterer at {s.pos} coincides with the transmitter or receiver")
        path = d1 + d2
        delay = path / SPEED_OF_LIGHT
        gain = (complex(s.reflectivity) * (los_len / path) ** scene.path_loss_exponent
                * np.exp(-2j * np.pi * delay * fc))
        taps.append(Tap(delay, complex(gain), arrival_doppler(pos)))
    if not taps:
        raise GeometryError("LOS is blocked and the scene has no scatterers")
    return TapSet(tuple(taps))


def apply_channel(signal: ComplexSignal, taps: TapSet) -> ComplexSignal:
    """Tapped-delay-line filtering with per-tap Doppler rotation.

    Tap delays are rounded to the nearest sample. The output is longer than
    the input by the largest delay in samples. Tap ``k`` contributes
    ``gain_k * exp(j*2*pi*doppler_k*t) * x(t - delay_k)`` with ``t`` measured
    on the output time axis.
    """
    x = signal.samples
    fs = signal.sample_rate
    lags = taps.sample_delays(fs)
    n_out = x.size + int(lags.max())
    out = np.zeros(n_out, dtype=complex)
    t = np.arange(n_out) / fs
    for lag, tap in zip(lags, taps.taps):
        seg = tap.gain * x
        if tap.doppler:
            seg = seg * np.exp(2j * np.pi * tap.doppler * t[lag:lag + x.size])
        out[lag:lag + x.size] += seg
    return signal.with_samples(out)


@dataclass(frozen=True)
class IrAnalysis:
    """Band-limited view of a tap set.

    ``ir`` is sampled on ``times`` (seconds, absolute), ``fr`` on ``freqs``
    (Hz, baseband, referenced to the first arrival).
    """

    ir: ComplexSignal
    times: np.ndarray = field(repr=False)
    freqs: np.ndarray = field(repr=False)
    fr: np.ndarray = field(repr=False)
    bandwidth: float
    peak_time: float
    null_left: float
    null_right: float

    @property
    def mainlobe_width(self) -> float:
        return self.null_right - self.null_left

    @property
    def fs(self) -> float:
        return self.ir.sample_rate


def _band_limited(taps: TapSet, bandwidth: float):
    delays, gains = taps.delays, taps.gains
    half = SINC_LOBES / bandwidth

    def h(t):
        t = np.asarray(t, dtype=float)
        dt = t[..., None] - delays
        kernel = np.where(np.abs(dt) <= half, np.sinc(bandwidth * dt), 0.0)
        return kernel @ gains

    return h


def _refine_null(h, t_lo: float, t_hi: float) -> float:
    res = minimize_scalar(lambda t: float(np.abs(h(t)) ** 2), bounds=(t_lo, t_hi),
                          method="bounded", options={"xatol": 1e-15})
    return float(res.x)


def impulse_response(taps: TapSet, bandwidth: float, fs: float, span: float,
                     n_freq: int = 201) -> IrAnalysis:
    """Band-limited impulse and frequency response of a tap set.

    Each tap is rendered as a ``sinc`` of the given two-sided bandwidth,
    truncated to +/-16 lobes. The time grid starts 16 lobes before the first
    arrival, passes through it exactly, and runs ``span`` seconds plus 16
    lobes past it. Main-lobe nulls are the first local minima of ``|ir|``
    lying 20 dB below the peak on each side, refined off-grid on the
    continuous response. The frequency response is the Fourier transform of
    the un-truncated band-limited response over the band, i.e. the tap
    train's transfer function, referenced to the first arrival.
    """
    if fs < 4 * bandwidth:
        raise ConfigurationError(f"analysis rate {fs} Hz is below 4x the bandwidth {bandwidth} Hz")
    t0 = taps.taps[0].delay
    excess = taps.max_delay - t0
    if span < excess:
        raise TruncationError(f"span {span:g} s is shorter than the {excess:g} s delay spread")
    lobe = 1.0 / bandwidth
    n_pre = math.ceil(SINC_LOBES * lobe * fs)
    n_post = math.ceil((span + SINC_LOBES * lobe) * fs)
    times = t0 + np.arange(-n_pre, n_post + 1) / fs
    h = _band_limited(taps, bandwidth)
    ir = h(times)

    mag = np.abs(ir)
    peak = int(np.argmax(mag))
    floor = mag[peak] * 10 ** (NULL_THRESHOLD_DB / 20)

    def first_null(step):
        i = peak + step
        while 0 < i < mag.size - 1:
            if mag[i] < floor and mag[i] <= mag[i - 1] and mag[i] <= mag[i + 1]:
                return _refine_null(h, times[i - 1], times[i + 1])
            i += step
        raise TruncationError("no main-lobe null found inside the analysis window")

    null_left, null_right = first_null(-1), first_null(+1)

    freqs = np.linspace(-bandwidth / 2, bandwidth / 2, n_freq)
    rel = taps.delays - t0
    fr = np.exp(-2j * np.pi * np.outer(freqs, rel)) @ taps.gains
    return IrAnalysis(
        ir=ComplexSignal(ir, fs),
        times=times,
        freqs=freqs,
        fr=fr,
        bandwidth=bandwidth,
        peak_time=float(times[peak]),
        null_left=null_left,
        null_right=null_right,
    )


def mainlobe_broadening(base: IrAnalysis, perturbed: IrAnalysis) -> float:
    """Percentage growth of the main-lobe width from ``base`` to ``perturbed``."""
    if base.bandwidth != perturbed.bandwidth or base.fs != perturbed.fs:
        raise ConfigurationError("analyses must share bandwidth and sample rate")
    return 100.0 * (perturbed.mainlobe_width - base.mainlobe_width) / base.mainlobe_width


def two_tap_broadening(separation: float, bandwidth: float, fs: float,
                       second_gain: complex = 1.0) -> float:
    """Broadening of a LOS tap when a second tap appears ``separation`` s later."""
    base = impulse_response(TapSet((Tap(0.0, 1.0),)), bandwidth, fs, span=max(separation, 1 / bandwidth))
    pert = impulse_response(TapSet((Tap(0.0, 1.0), Tap(separation, second_gain))), bandwidth, fs,
                            span=max(separation, 1 / bandwidth))
    return mainlobe_broadening(base, pert)


def broadening_sweep(separations: Iterable[float], bandwidth: float, fs: float,
                     second_gain: complex = 1.0) -> np.ndarray:
    return np.array([two_tap_broadening(s, bandwidth, fs, second_gain) for s in separations])
