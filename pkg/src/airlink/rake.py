"""DSSS transmit chain and RAKE receiver.

Signals are handled at one sample per chip; path delays are whole chips.
A symbol ``i`` is spread with chips ``i*SF .. i*SF+SF-1`` of the PN
sequence taken cyclically, so ``spreading_factor`` may be smaller than,
equal to, or a divisor of the code period.

The receive side follows the classic structure: a path searcher slides a
correlator over the delay window and keeps the strongest peaks, one finger
correlator is aligned on each peak, and the finger outputs are merged by
maximal-ratio combining.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ConfigurationError, LockError, RangeError, SizeError
from .sigcore import ComplexSignal, PnSequence

__all__ = [
    "SpreadingCode",
    "PathPeak",
    "FingerReport",
    "CombinedReport",
    "RakeConfig",
    "RakeResult",
    "spread",
    "correlation_profile",
    "path_search",
    "finger_despread",
    "mmse_finger",
    "combine",
    "rake_receive",
    "estimate_snr",
    "pilot_symbols",
]


@dataclass(frozen=True)
class SpreadingCode:
    code: PnSequence
    chip_rate: float = 3.84e6
    spreading_factor: int = 16

    def __post_init__(self):
        if self.spreading_factor < 1:
            raise ConfigurationError("spreading factor must be at least 1")
        if self.spreading_factor > self.code.period:
            raise ConfigurationError(
                f"spreading factor {self.spreading_factor} exceeds code period {self.code.period}"
            )

    @property
    def chip_period(self) -> float:
        return 1.0 / self.chip_rate

    def segments(self, n_symbols: int, first: int = 0) -> np.ndarray:
        """Chip segments for symbols ``first .. first+n_symbols-1``, shape (n, SF)."""
        return self.segments_for(np.arange(first, first + n_symbols))

    def segments_for(self, indices) -> np.ndarray:
        sf = self.spreading_factor
        pos = (np.asarray(indices)[:, None] * sf + np.arange(sf)) % self.code.period
        return self.code.chips[pos].astype(float)


@dataclass(frozen=True)
class PathPeak:
    delay: int
    strength: float
    above_threshold: bool = True
    value: complex | None = None   # coherent correlation when a pilot was supplied
    fractional_offset: float = 0.0


@dataclass(frozen=True)
class FingerReport:
    finger_id: int
    delay: int
    magnitude_db: float
    symbols: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CombinedReport:
    total_magnitude_db: float
    combined_snr_db: float
    finger_snr_db: tuple[float, ...]
    weights: tuple[complex, ...]


def pilot_symbols(n: int) -> np.ndarray:
    """Known pilot symbols prepended to every DSSS frame."""
    return np.ones(n, dtype=complex)


def spread(symbols, code: SpreadingCode) -> ComplexSignal:
    symbols = np.asarray(symbols, dtype=complex).ravel()
    chips = symbols[:, None] * code.segments(symbols.size)
    return ComplexSignal(chips.ravel(), code.chip_rate)


def _samples(rx) -> np.ndarray:
    return rx.samples if isinstance(rx, ComplexSignal) else np.asarray(rx, dtype=complex).ravel()


def _despread(x: np.ndarray, code: SpreadingCode, delay: int, n_symbols: int) -> np.ndarray:
    sf = code.spreading_factor
    block = x[delay:delay + n_symbols * sf].reshape(n_symbols, sf)
    return np.mean(block * code.segments(n_symbols), axis=1)


def correlation_profile(rx, code: SpreadingCode, max_delay: int, pilot=None,
                        n_symbols: int | None = None):
    """Sliding correlation over delays ``0 .. max_delay``.

    With a ``pilot`` the per-symbol correlations are de-rotated by the
    known symbols and averaged coherently; the returned ``values`` are then
    complex path gain estimates. Without one, the strength is the RMS of
    the per-symbol correlations and ``values`` is ``None``.

    Returns ``(strength, values, n_symbols)``.
    """
    x = _samples(rx)
    sf = code.spreading_factor
    if n_symbols is None:
        n_symbols = (x.size - max_delay) // sf if pilot is None else len(pilot)
    if n_symbols < 1 or x.size < n_symbols * sf + max_delay:
        raise SizeError(f"received buffer of {x.size} chips is shorter than one symbol plus {max_delay} chips")
    z = np.stack([_despread(x, code, d, n_symbols) for d in range(max_delay + 1)])
    if pilot is not None:
        p = np.asarray(pilot, dtype=complex)[:n_symbols]
        values = np.mean(z * np.conj(p) / np.abs(p) ** 2, axis=1)
        return np.abs(values), values, n_symbols
    return np.sqrt(np.mean(np.abs(z) ** 2, axis=1)), None, n_symbols


def _local_maxima(strength: np.ndarray) -> np.ndarray:
    left = np.concatenate(([True], strength[1:] >= strength[:-1]))
    right = np.concatenate((strength[:-1] >= strength[1:], [True]))
    return np.flatnonzero(left & right)


def path_search(rx, code: SpreadingCode, max_delay: int, threshold_factor: float = 0.5,
                max_peaks: int = 4, pilot=None, floor_factor: float = 4.0,
                n_symbols: int | None = None) -> list[PathPeak]:
    """Locate the strongest multipath delays.

    A local maximum is kept when it exceeds ``threshold_factor`` times the
    strongest peak and an absolute floor of ``floor_factor`` noise standard
    deviations of the correlator output. The noise level is estimated from
    the median of the profile, which is dominated by delays holding no path.
    At most ``max_peaks`` peaks are returned, strongest first, ties broken
    by the smaller delay. An empty list means no lock.
    """
    strength, values, n = correlation_profile(rx, code, max_delay, pilot, n_symbols)
    med = float(np.median(strength))
    if values is not None:
        # |complex gaussian| is Rayleigh: median = sigma * sqrt(ln 2)
        floor = floor_factor * med / math.sqrt(math.log(2.0))
    else:
        # mean power over n symbols is Gamma(n, 1/n) in units of the noise
        # power; use its exact quantile at the Gaussian floor_factor-sigma tail
        tail = stats.norm.sf(floor_factor)
        floor = med * math.sqrt(stats.gamma.isf(tail, n) / stats.gamma.median(n))
    cand = _local_maxima(strength)
    rel = threshold_factor * strength.max()
    keep = [int(d) for d in cand if strength[d] >= rel and strength[d] > floor]
    keep.sort(key=lambda d: (-strength[d], d))
    return [
        PathPeak(d, float(strength[d]), True, None if values is None else complex(values[d]))
        for d in keep[:max_peaks]
    ]


def _magnitude_db(symbols: np.ndarray) -> float:
    m = float(np.mean(np.abs(symbols)))
    return 20.0 * math.log10(m) if m > 0 else -math.inf


def finger_despread(rx, code: SpreadingCode, delay: int, n_symbols: int | None = None,
                    finger_id: int = 1) -> FingerReport:
    """Delay-equalize ``rx`` by ``delay`` chips and correlate per symbol."""
    x = _samples(rx)
    sf = code.spreading_factor
    if delay < 0 or delay >= x.size:
        raise RangeError(f"finger delay {delay} outside buffer of {x.size} chips")
    if n_symbols is None:
        n_symbols = (x.size - delay) // sf
    if n_symbols < 1 or delay + n_symbols * sf > x.size:
        raise RangeError(f"finger delay {delay} leaves fewer than {max(n_symbols, 1)} symbols in the buffer")
    z = _despread(x, code, delay, n_symbols)
    return FingerReport(finger_id, int(delay), _magnitude_db(z), z)


def _path_signature(code: SpreadingCode, path_offset: int, gain: complex, symbol: np.ndarray) -> np.ndarray:
    """Chips of ``symbol`` seen through one path inside a finger window.

    ``path_offset`` is the path delay relative to the window start (chips,
    may be negative). Returns an array of shape ``(len(symbol), SF)``.
    """
    sf = code.spreading_factor
    out = np.zeros((symbol.size, sf), dtype=complex)
    idx = np.arange(sf) - path_offset
    valid = (idx >= 0) & (idx < sf)
    if valid.any():
        out[:, valid] = gain * code.segments_for(symbol)[:, idx[valid]]
    return out


def mmse_finger(rx, code: SpreadingCode, delay: int, noise_var: float,
                paths: Sequence[tuple[int, complex]] | None = None,
                n_symbols: int | None = None, finger_id: int = 1,
                own_gain: complex | None = None) -> FingerReport:
    """Finger whose correlator is the per-symbol Wiener kernel.

    The chip-level model inside the finger window holds every symbol that
    overlaps it through each of ``paths`` (``(delay, gain)`` pairs, chips),
    plus white noise of variance ``noise_var``. The kernel for symbol ``i``
    is ``R_i^-1 v_i`` with ``v_i`` the symbol's composite signature,
    rescaled so its response to that composite signature equals the own
    path's gain; the output is therefore directly comparable to
    :func:`finger_despread`. With only the finger's own path in the model
    the kernel reduces to the code segment.
    """
    if not noise_var > 0:
        raise ConfigurationError("noise_var must be positive")
    x = _samples(rx)
    sf = code.spreading_factor
    if paths is None:
        paths = [(delay, 1.0 if own_gain is None else own_gain)]
    paths = [(int(d), complex(g)) for d, g in paths]
    if own_gain is None:
        own = [g for d, g in paths if d == delay]
        own_gain = own[0] if own else 1.0
    if delay < 0 or delay >= x.size:
        raise RangeError(f"finger delay {delay} outside buffer of {x.size} chips")
    if n_symbols is None:
        n_symbols = (x.size - delay) // sf
    if n_symbols < 1 or delay + n_symbols * sf > x.size:
        raise RangeError(f"finger delay {delay} leaves too few symbols in the buffer")

    windows = x[delay:delay + n_symbols * sf].reshape(n_symbols, sf)
    sym = np.arange(n_symbols)
    span = max(abs(d - delay) for d, _ in paths) // sf + 1
    desired = np.zeros((n_symbols, sf), dtype=complex)
    cov = np.zeros((n_symbols, sf, sf), dtype=complex)
    for shift in range(-span, span + 1):
        v = np.zeros((n_symbols, sf), dtype=complex)
        for d, g in paths:
            v += _path_signature(code, d - delay + shift * sf, g, sym + shift)
        cov += v[:, :, None] * np.conj(v[:, None, :])
        if shift == 0:
            desired = v
    cov += noise_var * np.eye(sf)
    trace = np.real(np.trace(cov, axis1=1, axis2=2))
    cov += (1e-6 * trace / sf)[:, None, None] * np.eye(sf)
    w = np.linalg.solve(cov, desired[:, :, None])[:, :, 0]
    response = np.sum(np.conj(w) * desired, axis=1)
    w = w * np.conj(own_gain / response)[:, None]
    z = np.sum(np.conj(w) * windows, axis=1)
    return FingerReport(finger_id, int(delay), _magnitude_db(z), z)


def estimate_snr(symbols, reference=None) -> float:
    """Linear SNR of soft symbols.

    With a ``reference`` the complex gain is fitted by least squares and
    the residual taken as noise. Without one the second/fourth-moment
    estimator for constant-modulus signals is used.
    """
    y = np.asarray(symbols, dtype=complex).ravel()
    if reference is not None:
        r = np.asarray(reference, dtype=complex).ravel()
        if r.size != y.size:
            raise SizeError("reference and symbols differ in length")
        a = np.vdot(r, y) / np.vdot(r, r)
        noise = np.mean(np.abs(y - a * r) ** 2)
        sig = abs(a) ** 2 * np.mean(np.abs(r) ** 2)
    else:
        m2 = np.mean(np.abs(y) ** 2)
        m4 = np.mean(np.abs(y) ** 4)
        sig = math.sqrt(max(2 * m2**2 - m4, 0.0))
        noise = m2 - sig
    if noise <= 0:
        return math.inf
    return float(sig / noise)


def _db(x: float) -> float:
    if x == math.inf:
        return math.inf
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def combine(fingers: Sequence[FingerReport], channel_gains: Sequence[complex],
            reference=None) -> tuple[np.ndarray, CombinedReport]:
    """Maximal-ratio combining of finger outputs.

    Each finger is weighted by ``conj(g_k) / sum |g|^2`` so the combined
    output is an unbiased estimate of the transmitted symbol. The report's
    ``total_magnitude_db`` is the plain sum of the per-finger dB figures;
    ``combined_snr_db`` is the measured SNR of the combined symbols.
    """
    if not fingers:
        raise ConfigurationError("combining needs at least one finger")
    gains = np.asarray(channel_gains, dtype=complex)
    if gains.size != len(fingers):
        raise SizeError(f"{len(fingers)} fingers but {gains.size} channel gains")
    n = min(f.symbols.size for f in fingers)
    stack = np.stack([f.symbols[:n] for f in fingers])
    weights = np.conj(gains) / np.sum(np.abs(gains) ** 2)
    out = weights @ stack
    ref = None if reference is None else np.asarray(reference, dtype=complex)[:n]
    finger_snr = tuple(
        _db(estimate_snr(f.symbols[:n], None if ref is None else g * ref)) for f, g in zip(fingers, gains)
    )
    report = CombinedReport(
        total_magnitude_db=float(sum(f.magnitude_db for f in fingers)),
        combined_snr_db=_db(estimate_snr(out, ref)),
        finger_snr_db=finger_snr,
        weights=tuple(complex(w) for w in weights),
    )
    return out, report


@dataclass(frozen=True)
class RakeConfig:
    n_fingers: int = 4
    max_delay: int = 32
    threshold_factor: float = 0.5
    floor_factor: float = 4.0
    n_pilot: int = 64
    finger_kind: str = "conventional"   # or "mmse"
    genie_gains: tuple[complex, ...] | None = None
    genie_delays: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_fingers < 1:
            raise ConfigurationError("need at least one finger")
        if self.n_pilot < 1:
            raise ConfigurationError("need at least one pilot symbol for gain estimation")
        if self.finger_kind not in ("conventional", "mmse"):
            raise ConfigurationError(f"unknown finger kind {self.finger_kind!r}")


@dataclass(frozen=True)
class RakeResult:
    symbols: np.ndarray          # combined data symbols, pilots stripped
    peaks: list
    fingers: list
    gains: np.ndarray
    report: CombinedReport


def rake_receive(rx, code: SpreadingCode, config: RakeConfig = RakeConfig(),
                 n_symbols: int | None = None, reference=None) -> RakeResult:
    """Search, despread and combine one pilot-led DSSS frame.

    The frame carries ``config.n_pilot`` pilot symbols followed by data;
    ``n_symbols`` counts both. ``reference`` (data symbols only) is used
    solely to measure the combined SNR.
    """
    x = _samples(rx)
    sf = code.spreading_factor
    if n_symbols is None:
        n_symbols = (x.size - config.max_delay) // sf
    pilot = pilot_symbols(config.n_pilot)

    if config.genie_delays is not None:
        delays = list(config.genie_delays)[: config.n_fingers]
        peaks = [PathPeak(d, math.nan) for d in delays]
    else:
        peaks = path_search(x, code, config.max_delay, config.threshold_factor, config.n_fingers,
                            pilot=pilot, floor_factor=config.floor_factor)
        if not peaks:
            raise LockError("path searcher found no path above the detection floor")
        delays = [p.delay for p in peaks]

    convs = [finger_despread(x, code, d, n_symbols, i + 1) for i, d in enumerate(delays)]
    if config.genie_gains is not None:
        gains = np.asarray(config.genie_gains, dtype=complex)[: len(delays)]
    else:
        gains = np.array([np.mean(f.symbols[: config.n_pilot] * np.conj(pilot)) for f in convs])

    if config.finger_kind == "mmse":
        noise_var = max(float(np.mean(np.abs(x) ** 2)) - float(np.sum(np.abs(gains) ** 2)),
                        1e-3 * float(np.sum(np.abs(gains) ** 2)))
        paths = list(zip(delays, gains))
        fingers = [mmse_finger(x, code, d, noise_var, paths, n_symbols, i + 1, own_gain=g)
                   for i, (d, g) in enumerate(paths)]
    else:
        fingers = convs

    ref_full = None
    if reference is not None:
        ref_full = np.concatenate([pilot, np.asarray(reference, dtype=complex)])
    combined, report = combine(fingers, gains, ref_full)
    return RakeResult(combined[config.n_pilot:], peaks, fingers, gains, report)
