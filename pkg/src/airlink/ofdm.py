"""Cyclic-prefix OFDM modem with one-tap equalization.

Subcarriers are addressed by signed index ``k`` in ``[-n_fft/2, n_fft/2)``;
the DFT is unitary so symbol energy is preserved through the transform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, SizeError
from .sigcore import ComplexSignal, alphabet as _alphabet, evm_db, slice_symbols

__all__ = [
    "OfdmParams",
    "ChannelEstimate",
    "ofdm_preset",
    "ofdm_modulate",
    "ofdm_demodulate",
    "estimate_channel_ls",
    "estimate_channel_lms",
    "track_channel_lms",
    "one_tap_equalize",
    "apply_doppler_offset",
    "taps_frequency_response",
    "evm_excluding_erasures",
    "carrier_phase_ramp",
    "ERASURE_FLOOR",
]

ERASURE_FLOOR = 1e-6


@dataclass(frozen=True)
class OfdmParams:
    n_fft: int
    cp_len: int
    used_carriers: tuple[int, ...]
    sample_rate: float

    def __post_init__(self):
        n = self.n_fft
        if n < 2 or n & (n - 1):
            raise ConfigurationError(f"n_fft must be a power of two, got {n}")
        if not 0 <= self.cp_len < n:
            raise ConfigurationError(f"cp_len must lie in [0, {n}), got {self.cp_len}")
        if not self.sample_rate > 0:
            raise ConfigurationError("sample_rate must be positive")
        used = tuple(int(k) for k in self.used_carriers)
        if not used:
            raise ConfigurationError("no used carriers")
        if len(set(used)) != len(used):
            raise ConfigurationError("duplicate carrier indices")
        bad = [k for k in used if k == 0 or not -n // 2 <= k < n // 2]
        if bad:
            raise ConfigurationError(f"carriers {bad} are DC or outside [-{n // 2}, {n // 2})")
        object.__setattr__(self, "used_carriers", used)

    @property
    def n_used(self) -> int:
        return len(self.used_carriers)

    @property
    def symbol_len(self) -> int:
        return self.n_fft + self.cp_len

    @property
    def carrier_spacing(self) -> float:
        return self.sample_rate / self.n_fft

    @property
    def cp_duration(self) -> float:
        return self.cp_len / self.sample_rate

    @property
    def bins(self) -> np.ndarray:
        """FFT bin of every used carrier."""
        return np.asarray(self.used_carriers) % self.n_fft


@lru_cache(maxsize=None)
def _preset_table() -> dict:
    text = resources.files("airlink").joinpath("presets/ofdm_params.json").read_text()
    return json.loads(text)


def ofdm_preset(name: str) -> OfdmParams:
    """Parameter set ``wifi`` or ``wimax`` from the bundled preset table."""
    table = _preset_table()
    if name not in table:
        raise ConfigurationError(f"unknown OFDM preset {name!r}; known: {sorted(table)}")
    p = table[name]
    half = p["used_half_width"]
    used = tuple(range(-half, 0)) + tuple(range(1, half + 1))
    return OfdmParams(p["n_fft"], p["cp_len"], used, p["sample_rate"])


@dataclass(frozen=True)
class ChannelEstimate:
    h: np.ndarray = field(repr=False)
    source: str = "known"


def ofdm_modulate(symbols, params: OfdmParams) -> ComplexSignal:
    """Map symbols onto carriers, inverse-transform and prepend the CP."""
    s = np.asarray(symbols, dtype=complex).ravel()
    if s.size % params.n_used:
        raise SizeError(f"{s.size} symbols do not fill whole OFDM symbols of {params.n_used} carriers")
    grid = np.zeros((s.size // params.n_used, params.n_fft), dtype=complex)
    grid[:, params.bins] = s.reshape(-1, params.n_used)
    body = np.fft.ifft(grid, axis=1, norm="ortho")
    with_cp = np.concatenate([body[:, params.n_fft - params.cp_len:], body], axis=1)
    return ComplexSignal(with_cp.ravel(), params.sample_rate)


def ofdm_demodulate(signal, params: OfdmParams, timing_offset: int = 0,
                    n_symbols: int | None = None) -> np.ndarray:
    """Strip the CP, transform and pick the used carriers.

    The FFT window of OFDM symbol ``m`` starts ``timing_offset`` samples
    before the end of its CP. Returns an array of shape
    ``(n_symbols, n_used)``.
    """
    x = signal.samples if isinstance(signal, ComplexSignal) else np.asarray(signal, dtype=complex).ravel()
    L = params.symbol_len
    if not 0 <= timing_offset <= params.cp_len:
        raise ConfigurationError(f"timing offset must lie in [0, {params.cp_len}]")
    if n_symbols is None:
        n_symbols = x.size // L
    if n_symbols < 1 or (n_symbols - 1) * L + L - timing_offset > x.size:
        raise SizeError(f"signal of {x.size} samples is shorter than {max(n_symbols, 1)} OFDM symbols")
    start = np.arange(n_symbols) * L + params.cp_len - timing_offset
    idx = start[:, None] + np.arange(params.n_fft)
    spec = np.fft.fft(x[idx], axis=1, norm="ortho")
    return spec[:, params.bins]


def estimate_channel_ls(rx_preamble, known_preamble, params: OfdmParams) -> ChannelEstimate:
    rx = np.asarray(rx_preamble, dtype=complex).reshape(-1)
    known = np.asarray(known_preamble, dtype=complex).reshape(-1)
    if rx.size != params.n_used or known.size != params.n_used:
        raise SizeError(f"preamble must cover the {params.n_used} used carriers")
    if np.any(np.abs(known) == 0):
        raise SizeError("known preamble is zero on some used carrier")
    return ChannelEstimate(rx / known, "least-squares-preamble")


def estimate_channel_lms(rx_carriers, reference, params: OfdmParams, mu: float,
                         initial=None, history: bool = False):
    """Independent scalar LMS loop per carrier over training symbols.

    ``h <- h + mu * conj(ref) * (rx - h * ref)`` for each OFDM symbol in
    turn. With ``history=True`` also returns the per-symbol estimates,
    shape ``(n_symbols, n_used)``.
    """
    rx = np.atleast_2d(np.asarray(rx_carriers, dtype=complex))
    ref = np.atleast_2d(np.asarray(reference, dtype=complex))
    if rx.shape != ref.shape or rx.shape[1] != params.n_used:
        raise SizeError("received and reference carriers must both be (n_symbols, n_used)")
    if mu < 0:
        raise ConfigurationError("step size must be non-negative")
    h = np.zeros(params.n_used, dtype=complex) if initial is None else np.array(initial, dtype=complex)
    trail = []
    for r, s in zip(rx, ref):
        h = h + mu * np.conj(s) * (r - h * s)
        trail.append(h)
    est = ChannelEstimate(h, "lms")
    if history:
        return est, np.array(trail)
    return est


def track_channel_lms(rx_carriers, estimate: ChannelEstimate, alpha, mu: float):
    """Decision-directed per-carrier LMS tracking over data symbols.

    Each symbol is equalized with the running estimate, sliced, and the
    slice is used as the reference for the next update. Returns the
    equalized symbols and the final estimate.
    """
    alpha = _alphabet(alpha) if isinstance(alpha, str) else alpha
    rx = np.atleast_2d(np.asarray(rx_carriers, dtype=complex))
    h = np.array(estimate.h, dtype=complex)
    out = np.empty_like(rx)
    for m, r in enumerate(rx):
        safe = np.where(np.abs(h) < ERASURE_FLOOR, 1.0, h)
        eq = r / safe
        out[m] = eq
        dec = alpha.points[slice_symbols(eq, alpha)]
        h = h + mu * np.conj(dec) * (r - h * dec)
    return out, ChannelEstimate(h, "lms")


def one_tap_equalize(rx_carriers, est: ChannelEstimate) -> tuple[np.ndarray, np.ndarray]:
    """Divide each carrier by its channel gain.

    Returns ``(symbols, erased)``; carriers whose ``|h|`` is below the
    erasure floor are flagged and come out as zero.
    """
    rx = np.asarray(rx_carriers, dtype=complex)
    h = np.asarray(est.h, dtype=complex)
    erased = np.abs(h) < ERASURE_FLOOR
    safe = np.where(erased, 1.0, h)
    out = rx / safe
    out = np.where(erased, 0.0, out)
    return out, np.broadcast_to(erased, out.shape)


def apply_doppler_offset(signal: ComplexSignal, doppler_hz: float) -> ComplexSignal:
    if doppler_hz == 0:
        return signal
    t = signal.time_axis()
    return signal.with_samples(signal.samples * np.exp(2j * np.pi * doppler_hz * t))


def taps_frequency_response(lags: Sequence[int], gains: Sequence[complex], params: OfdmParams,
                            timing_offset: int = 0) -> ChannelEstimate:
    """Per-carrier gain of a sample-spaced tap vector (the CP-flat channel)."""
    k = np.asarray(params.used_carriers)
    # an early FFT window makes every path look later by the same amount
    lags = np.asarray(lags) + timing_offset
    h = np.exp(-2j * np.pi * np.outer(k, lags) / params.n_fft) @ np.asarray(gains, dtype=complex)
    return ChannelEstimate(h, "known")


def evm_excluding_erasures(ref, eq, erased) -> float:
    ref = np.asarray(ref)
    keep = ~np.asarray(erased, dtype=bool)
    return evm_db(ref[keep], np.asarray(eq)[keep])


def carrier_phase_ramp(params: OfdmParams, delay: int) -> np.ndarray:
    """``exp(-j 2 pi k d / N)`` over the used carriers."""
    k = np.asarray(params.used_carriers)
    return np.exp(-2j * np.pi * k * delay / params.n_fft)

