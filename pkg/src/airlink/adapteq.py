"""Adaptive transversal equalizer driven by complex LMS.

The filter output is ``y = w^H x`` where ``x[0]`` is the newest received
sample and ``x[L-1]`` the oldest. The update is the stochastic gradient
step ``w <- w + mu * x * conj(e)`` with ``e = d - y``, whose fixed point is
the Wiener solution ``R^-1 p`` with ``R = E[x x^H]`` and ``p = E[x conj(d)]``.

An equalizer with decision delay ``D`` estimates symbol ``s[k]`` from the
window ending at received sample ``k + D``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError, SizeError
from .sigcore import ComplexSignal, SymbolAlphabet, alphabet

__all__ = [
    "TRAINING",
    "DECISION_DIRECTED",
    "EqualizerState",
    "EqualizerOutput",
    "new_state",
    "lms_step",
    "train",
    "equalize_dd",
    "wiener_solution",
    "smoothed_mse",
    "detect_divergence",
    "stability_bound",
]

log = logging.getLogger(__name__)

TRAINING = "training"
DECISION_DIRECTED = "decision_directed"

# smoothing window and blow-up factor for the divergence detector
SMOOTH_WINDOW = 100
DIVERGENCE_FACTOR = 10.0
MSE_FLOOR = 1e-10
# beyond this squared error the recursion is abandoned as unstable
_BLOWUP = 1e100


@dataclass
class EqualizerState:
    """Tap vector and adaptation bookkeeping.

    Mutable: :func:`lms_step` updates it in place so long runs stay cheap.
    """

    taps: np.ndarray
    mu: float
    mode: str = TRAINING
    reference_delay: int = 0
    mse_history: list = field(default_factory=list, repr=False)
    diverged: bool = False

    def __post_init__(self):
        self.taps = np.array(self.taps, dtype=complex).ravel()
        if self.taps.size < 1:
            raise ConfigurationError("equalizer needs at least one tap")
        if not 0 <= self.reference_delay < self.taps.size:
            raise ConfigurationError(f"decision delay {self.reference_delay} outside [0, {self.taps.size})")
        if self.mu < 0:
            raise ConfigurationError("step size must be non-negative")
        if self.mode not in (TRAINING, DECISION_DIRECTED):
            raise ConfigurationError(f"unknown mode {self.mode!r}")

    @property
    def n_taps(self) -> int:
        return self.taps.size

    def copy(self) -> "EqualizerState":
        return EqualizerState(self.taps.copy(), self.mu, self.mode, self.reference_delay,
                              list(self.mse_history), self.diverged)


def new_state(n_taps: int = 11, mu: float = 0.01, delay: int | None = None) -> EqualizerState:
    """Centre-spike initialization: the identity channel is a fixed point."""
    if delay is None:
        delay = n_taps // 2
    taps = np.zeros(n_taps, dtype=complex)
    if not 0 <= delay < n_taps:
        raise ConfigurationError(f"decision delay {delay} outside [0, {n_taps})")
    taps[delay] = 1.0
    return EqualizerState(taps, mu, TRAINING, delay)


def stability_bound(n_taps: int, input_power: float) -> float:
    """Conservative LMS step-size limit ``2 / (L * P_in)``."""
    return 2.0 / (n_taps * input_power)


def lms_step(state: EqualizerState, window, desired: complex):
    """One filter-and-update step.

    Returns ``(output, error, state)``; ``state`` is updated in place and
    its ``mse_history`` grows by one entry.
    """
    x = np.asarray(window, dtype=complex)
    if x.size != state.taps.size:
        raise SizeError(f"window of {x.size} samples for {state.taps.size} taps")
    if not (np.all(np.isfinite(x)) and np.isfinite(desired)):
        raise NumericalError("non-finite sample entered the equalizer")
    y = np.vdot(state.taps, x)
    e = desired - y
    if state.mu:
        state.taps += state.mu * x * np.conj(e)
    state.mse_history.append(float(abs(e) ** 2))
    return y, e, state


def _windows(rx: np.ndarray, n_taps: int, ends: np.ndarray) -> np.ndarray:
    """Rows ``[x[n], x[n-1], ..., x[n-L+1]]`` for each ``n`` in ``ends``, zero padded."""
    padded = np.concatenate([np.zeros(n_taps - 1, dtype=complex), rx, np.zeros(n_taps, dtype=complex)])
    idx = ends[:, None] + (n_taps - 1) - np.arange(n_taps)
    return padded[idx]


def smoothed_mse(history, window: int = SMOOTH_WINDOW) -> np.ndarray:
    h = np.asarray(history, dtype=float)
    if h.size == 0:
        return h
    w = min(window, h.size)
    c = np.cumsum(np.insert(h, 0, 0.0))
    return (c[w:] - c[:-w]) / w


def detect_divergence(history, window: int = SMOOTH_WINDOW, factor: float = DIVERGENCE_FACTOR) -> bool:
    """True once the smoothed MSE climbs above ``factor`` times its best value so far."""
    h = np.asarray(history, dtype=float)
    if h.size and not np.all(np.isfinite(h)):
        return True
    s = smoothed_mse(h, window)
    if s.size < 2:
        return False
    # absolute floor keeps round-off jitter near zero MSE from tripping the test
    best = np.maximum(np.minimum.accumulate(s), MSE_FLOOR)
    return bool(np.any(s > factor * best))


@dataclass(frozen=True)
class EqualizerOutput:
    soft: np.ndarray      # filter outputs, one per estimated symbol
    decisions: np.ndarray  # sliced constellation points (training: the known symbols)
    state: EqualizerState


def _run(rx: np.ndarray, state: EqualizerState, first: int, n: int, desired_fn) -> tuple[np.ndarray, np.ndarray]:
    ends = np.arange(first, first + n) + state.reference_delay
    wins = _windows(rx, state.n_taps, ends)
    soft = np.empty(n, dtype=complex)
    dec = np.empty(n, dtype=complex)
    for i, x in enumerate(wins):
        y = np.vdot(state.taps, x)
        d = desired_fn(i, y)
        soft[i], dec[i] = y, d
        if state.diverged:
            # frozen after blow-up; keep emitting outputs
            continue
        lms_step(state, x, d)
        last = state.mse_history[-1]
        if not math.isfinite(last) or last > _BLOWUP or not np.all(np.isfinite(state.taps)):
            state.diverged = True
            log.warning("LMS recursion blew up after %d steps (mu=%g)", len(state.mse_history), state.mu)
    return soft, dec


def train(rx, training_symbols, n_taps: int = 11, mu: float = 0.01, delay: int | None = None,
          state: EqualizerState | None = None, headroom: int = 10, first: int = 0) -> EqualizerOutput:
    """Training mode: adapt against known symbols.

    ``training_symbols[k]`` is the desired output for the window ending at
    received sample ``first + k + delay``; pass a trained ``state`` and a
    later ``first`` to continue a run. After the run the state's
    ``diverged`` flag reports whether the smoothed MSE blew up.
    """
    x = rx.samples if isinstance(rx, ComplexSignal) else np.asarray(rx, dtype=complex).ravel()
    train_syms = np.asarray(training_symbols, dtype=complex).ravel()
    if state is None:
        state = new_state(n_taps, mu, delay)
    state.mode = TRAINING
    fresh = not state.mse_history
    if train_syms.size < (state.n_taps if fresh else 1):
        raise SizeError(f"{train_syms.size} training symbols is fewer than the {state.n_taps} taps")
    if fresh and train_syms.size < headroom * state.n_taps:
        log.warning("training length %d is below %d x taps; convergence may be incomplete",
                    train_syms.size, headroom)
    soft, dec = _run(x, state, first, train_syms.size, lambda i, y: train_syms[i])
    state.diverged = state.diverged or detect_divergence(state.mse_history)
    return EqualizerOutput(soft, dec, state)


def equalize_dd(rx, state: EqualizerState, alpha: SymbolAlphabet | str, first: int = 0,
                n_symbols: int | None = None) -> EqualizerOutput:
    """Decision-directed mode: adapt against the equalizer's own slices.

    Estimates symbols ``first .. first+n_symbols-1``. Wrong slices feed
    wrong errors back; this shows up in ``mse_history`` and the
    ``diverged`` flag rather than as an exception.
    """
    x = rx.samples if isinstance(rx, ComplexSignal) else np.asarray(rx, dtype=complex).ravel()
    alpha = alphabet(alpha) if isinstance(alpha, str) else alpha
    if n_symbols is None:
        n_symbols = x.size - state.reference_delay - first
    state.mode = DECISION_DIRECTED
    pts = alpha.points
    start = len(state.mse_history)

    def slicer(i, y):
        return pts[int(np.argmin(np.abs(y - pts) ** 2))]

    soft, dec = _run(x, state, first, n_symbols, slicer)
    state.diverged = state.diverged or detect_divergence(state.mse_history[start:])
    return EqualizerOutput(soft, dec, state)


def wiener_solution(rx, desired, n_taps: int, delay: int) -> tuple[np.ndarray, float]:
    """Sample Wiener filter ``R^-1 p`` and its MMSE, by direct linear solve.

    Uses the same windowing convention as :func:`train`, so the result is
    the fixed point LMS converges to on the same data.
    """
    x = rx.samples if isinstance(rx, ComplexSignal) else np.asarray(rx, dtype=complex).ravel()
    d = np.asarray(desired, dtype=complex).ravel()
    wins = _windows(x, n_taps, np.arange(d.size) + delay)
    R = wins.T @ np.conj(wins) / d.size
    p = wins.T @ np.conj(d) / d.size
    w = np.linalg.solve(R, p)
    mmse = float(np.real(np.mean(np.abs(d) ** 2) - np.vdot(p, w)))
    return w, mmse
