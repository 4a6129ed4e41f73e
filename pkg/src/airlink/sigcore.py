"""Signal containers, symbol mapping, PN sequences, noise and quality metrics.

Everything here is a pure function of its inputs. Random draws always come
from an explicit ``numpy.random.Generator`` passed by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateStateError, SizeError

__all__ = [
    "ComplexSignal",
    "SymbolAlphabet",
    "PnSequence",
    "PRIMITIVE_POLYNOMIALS",
    "alphabet",
    "modulate",
    "demodulate",
    "slice_symbols",
    "pn_generate",
    "awgn",
    "add_awgn",
    "ber",
    "evm_db",
    "power_spectrum",
    "EVM_FLOOR_DB",
]

EVM_FLOOR_DB = -120.0


@dataclass(frozen=True)
class ComplexSignal:
    """Uniformly sampled complex baseband sequence."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        arr = np.array(self.samples, dtype=complex).ravel()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def power(self) -> float:
        if self.samples.size == 0:
            return 0.0
        return float(np.mean(np.abs(self.samples) ** 2))

    def time_axis(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples) -> "ComplexSignal":
        return ComplexSignal(samples, self.sample_rate)


# ---------------------------------------------------------------------------
# Symbol alphabets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolAlphabet:
    """Gray-coded constellation with unit average energy.

    ``points[i]`` carries the bit tuple ``bit_map[i]``; point index ``i`` is
    also the integer value of those bits (MSB first).
    """

    name: str
    points: np.ndarray
    bit_map: tuple = field(repr=False)

    @property
    def bits_per_symbol(self) -> int:
        return len(self.bit_map[0]) if self.bit_map else 0

    @property
    def order(self) -> int:
        return len(self.points)


# Gray level tables per axis: bit 0 maps to the positive side, matching BPSK.
_GRAY_AXIS_2 = {(0, 0): 3.0, (0, 1): 1.0, (1, 1): -1.0, (1, 0): -3.0}


def _build_alphabet(name: str) -> SymbolAlphabet:
    name = name.upper()
    if name == "BPSK":
        bit_map = ((0,), (1,))
        points = np.array([1.0 + 0j, -1.0 + 0j])
    elif name == "QPSK":
        bit_map = ((0, 0), (0, 1), (1, 0), (1, 1))
        points = np.array([(1 - 2 * b0) + 1j * (1 - 2 * b1) for b0, b1 in bit_map]) / math.sqrt(2)
    elif name == "QAM16":
        bit_map = tuple(tuple((i >> s) & 1 for s in (3, 2, 1, 0)) for i in range(16))
        points = np.array(
            [_GRAY_AXIS_2[b[0], b[1]] + 1j * _GRAY_AXIS_2[b[2], b[3]] for b in bit_map]
        ) / math.sqrt(10)
    else:
        raise ConfigurationError(f"unknown alphabet {name!r}; expected BPSK, QPSK or QAM16")
    points.flags.writeable = False
    return SymbolAlphabet(name, points, bit_map)


@lru_cache(maxsize=None)
def alphabet(name: str) -> SymbolAlphabet:
    """Return the named alphabet (``BPSK``, ``QPSK`` or ``QAM16``)."""
    return _build_alphabet(name)


def _as_alphabet(alpha) -> SymbolAlphabet:
    return alphabet(alpha) if isinstance(alpha, str) else alpha


def modulate(bits, alpha) -> np.ndarray:
    """Map a bit sequence to constellation symbols."""
    alpha = _as_alphabet(alpha)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = alpha.bits_per_symbol
    if bits.size % k:
        raise SizeError(f"{bits.size} bits is not a multiple of {k} bits per {alpha.name} symbol")
    weights = 1 << np.arange(k - 1, -1, -1)
    index = bits.reshape(-1, k) @ weights
    return alpha.points[index]


def slice_symbols(symbols, alpha) -> np.ndarray:
    """Nearest-point index per symbol; ties go to the lowest index."""
    alpha = _as_alphabet(alpha)
    if alpha.order == 0:
        raise ConfigurationError("cannot slice against an empty alphabet")
    symbols = np.asarray(symbols, dtype=complex).ravel()
    dist = np.abs(symbols[:, None] - alpha.points[None, :]) ** 2
    return np.argmin(dist, axis=1)


def demodulate(symbols, alpha) -> np.ndarray:
    """Hard-decision demapping by minimum Euclidean distance."""
    alpha = _as_alphabet(alpha)
    if alpha.order == 0:
        raise ConfigurationError("cannot demodulate against an empty alphabet")
    idx = slice_symbols(symbols, alpha)
    table = np.array(alpha.bit_map, dtype=np.int8)
    return table[idx].ravel()


# ---------------------------------------------------------------------------
# PN sequences
# ---------------------------------------------------------------------------

# Characteristic polynomials as integers, bit i = coefficient of x^i.
PRIMITIVE_POLYNOMIALS = {
    2: 0b111,               # x^2 + x + 1
    3: 0b1011,              # x^3 + x + 1
    4: 0b10011,             # x^4 + x + 1
    5: 0b100101,            # x^5 + x^2 + 1
    6: 0b1000011,           # x^6 + x + 1
    7: 0b10001001,          # x^7 + x^3 + 1
    8: 0b100011101,         # x^8 + x^4 + x^3 + x^2 + 1
    9: 0b1000010001,        # x^9 + x^4 + 1
    10: 0b10000001001,      # x^10 + x^3 + 1
    11: 0b100000000101,     # x^11 + x^2 + 1
}


@dataclass(frozen=True)
class PnSequence:
    chips: np.ndarray
    degree: int
    polynomial: int

    @property
    def period(self) -> int:
        return self.chips.size


def pn_generate(degree: int, polynomial: int | None = None, seed: int = 1) -> PnSequence:
    """One period of a Fibonacci LFSR sequence mapped to +/-1 chips.

    ``polynomial`` is the characteristic polynomial with bit ``i`` holding
    the coefficient of ``x**i`` (bit ``degree`` and bit 0 must be set).
    The register holds ``a[k] .. a[k+degree-1]`` in bits ``0 .. degree-1``;
    each step outputs ``a[k]`` and shifts in the parity of the tapped bits.
    Output bit 0 becomes chip +1 and bit 1 becomes chip -1.
    """
    if degree < 2:
        raise ConfigurationError("LFSR degree must be at least 2")
    if polynomial is None:
        try:
            polynomial = PRIMITIVE_POLYNOMIALS[degree]
        except KeyError:
            raise ConfigurationError(f"no default primitive polynomial for degree {degree}") from None
    if polynomial >> degree != 1 or not polynomial & 1:
        raise ConfigurationError(
            f"polynomial {polynomial:#b} is not a degree-{degree} polynomial with nonzero constant term"
        )
    mask = (1 << degree) - 1
    state = seed & mask
    if state == 0:
        raise DegenerateStateError("LFSR seed must be a nonzero register state")
    taps = polynomial & mask
    start = state
    out = []
    for _ in range(mask):
        out.append(state & 1)
        fb = bin(state & taps).count("1") & 1
        state = (state >> 1) | (fb << (degree - 1))
        if state == start:
            break
    chips = 1 - 2 * np.array(out, dtype=np.int8)
    chips.flags.writeable = False
    return PnSequence(chips, degree, polynomial)


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

def awgn(samples, snr_db: float | None, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise at ``snr_db`` below measured power.

    ``snr_db`` of ``None`` or ``+inf`` returns an unchanged copy.
    """
    x = np.asarray(samples, dtype=complex)
    if snr_db is None or (math.isinf(snr_db) and snr_db > 0):
        return x.copy()
    if x.size == 0:
        raise SizeError("cannot measure the power of an empty signal")
    p_sig = float(np.mean(np.abs(x) ** 2))
    p_noise = p_sig * 10.0 ** (-snr_db / 10.0)
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + noise * math.sqrt(p_noise / 2.0)


def add_awgn(signal: ComplexSignal, snr_db: float | None, rng: np.random.Generator) -> ComplexSignal:
    return signal.with_samples(awgn(signal.samples, snr_db, rng))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def ber(tx_bits, rx_bits) -> float:
    tx = np.asarray(tx_bits).ravel()
    rx = np.asarray(rx_bits).ravel()
    if tx.size != rx.size:
        raise SizeError(f"bit streams differ in length ({tx.size} vs {rx.size})")
    if tx.size == 0:
        return 0.0
    return float(np.count_nonzero(tx != rx)) / tx.size


def evm_db(ref_symbols, rx_symbols) -> float:
    """Error-vector magnitude in dB, floored at ``EVM_FLOOR_DB``."""
    ref = np.asarray(ref_symbols, dtype=complex).ravel()
    rx = np.asarray(rx_symbols, dtype=complex).ravel()
    if ref.size != rx.size:
        raise SizeError(f"symbol streams differ in length ({ref.size} vs {rx.size})")
    err = np.mean(np.abs(rx - ref) ** 2)
    sig = np.mean(np.abs(ref) ** 2)
    if err == 0.0:
        return EVM_FLOOR_DB
    return max(EVM_FLOOR_DB, 10.0 * math.log10(err / sig))


def power_spectrum(signal: ComplexSignal | Sequence[complex], n_bins: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Averaged Hann-windowed periodogram.

    Returns ``(freqs, power)`` with ``n_bins`` bins ordered from negative to
    positive frequency. ``freqs`` is in Hz for a ComplexSignal and in
    cycles/sample otherwise. Power is normalized so that white noise of
    variance ``s2`` averages to ``s2`` per bin.
    """
    if isinstance(signal, ComplexSignal):
        x, fs = signal.samples, signal.sample_rate
    else:
        x, fs = np.asarray(signal, dtype=complex).ravel(), 1.0
    if x.size < n_bins:
        raise SizeError(f"need at least {n_bins} samples, got {x.size}")
    n_seg = x.size // n_bins
    segs = x[: n_seg * n_bins].reshape(n_seg, n_bins)
    win = np.hanning(n_bins)
    spec = np.fft.fft(segs * win, axis=1)
    power = np.mean(np.abs(spec) ** 2, axis=0) / np.sum(win**2)
    freqs = np.fft.fftfreq(n_bins, d=1.0 / fs)
    return np.fft.fftshift(freqs), np.fft.fftshift(power)
