"""End-to-end link chains, one function per SNR point.

Every point function is pure in ``(config, taps, index, snr_db)``: its
random stream is seeded from :func:`point_seed`, so points can run in any
order or concurrently and still produce identical numbers.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
from scipy.optimize import brentq

from .. import adapteq, ofdm, rake
from ..channel import (ScattererScene, Scatterer, Tap, TapSet, apply_channel, broadening_sweep,
                       impulse_response, mainlobe_broadening, scene_to_taps, two_tap_broadening)
from ..sigcore import (ComplexSignal, alphabet, awgn, ber, demodulate, evm_db, modulate,
                       pn_generate, power_spectrum)
from .config import ScenarioConfig


def point_seed(seed: int, index: int) -> int:
    """Per-point sub-seed: ``seed XOR hash(index)``, 64 bits."""
    h = int.from_bytes(hashlib.sha256(f"airlink-point:{index}".encode()).digest()[:8], "big")
    return (seed ^ h) & (2**64 - 1)


def _rng(config: ScenarioConfig, index: int) -> np.random.Generator:
    return np.random.default_rng(point_seed(config.seed, index))


def _db(x: float) -> float:
    if x <= 0:
        return -math.inf
    return math.inf if math.isinf(x) else 10.0 * math.log10(x)


def _random_symbols(rng, n: int, alpha):
    bits = rng.integers(0, 2, n * alpha.bits_per_symbol, dtype=np.int8)
    return bits, modulate(bits, alpha)


def _fit_evm(ref, rx) -> float:
    """EVM after a single least-squares complex gain, i.e. before any equalization."""
    ref = np.asarray(ref, dtype=complex)
    rx = np.asarray(rx, dtype=complex)
    a = np.vdot(ref, rx) / np.vdot(ref, ref)
    if a == 0:
        return 0.0
    return evm_db(ref, rx / a)


def analysis_defaults(config: ScenarioConfig) -> tuple[float, float]:
    """Bandwidth and analysis rate for the IR/FR dump of a run."""
    if config.analysis is not None:
        return config.analysis.bandwidth, config.analysis.fs
    if config.system == "wcdma_rake":
        return 5e6, 40e6
    if config.system == "wifi_adapteq":
        bw = config.equalizer.sample_rate
        return bw, 8 * bw
    bw = ofdm_params(config).sample_rate
    return bw, 8 * bw


def channel_analysis(config: ScenarioConfig, taps: TapSet):
    bw, fs = analysis_defaults(config)
    span = max(taps.max_delay, config.analysis.span_s if config.analysis else 1e-6)
    return impulse_response(taps, bw, fs, span)


# ---------------------------------------------------------------------------
# WCDMA-like: DSSS + RAKE
# ---------------------------------------------------------------------------

def spreading_code(config: ScenarioConfig) -> rake.SpreadingCode:
    r = config.rake
    return rake.SpreadingCode(pn_generate(r.code_degree, seed=r.code_seed), r.chip_rate, r.spreading_factor)


def _rake_config(config: ScenarioConfig, n_fingers: int) -> rake.RakeConfig:
    r = config.rake
    return rake.RakeConfig(n_fingers=n_fingers, max_delay=r.max_delay_chips, threshold_factor=r.threshold_factor,
                           floor_factor=r.floor_factor, n_pilot=r.n_pilot, finger_kind=r.finger_kind)


def wcdma_frame(config: ScenarioConfig, taps: TapSet, rng, snr_db, amplitude: float = 1.0):
    """Transmit one pilot-led frame through the channel; returns (bits, data, rx)."""
    r = config.rake
    code = spreading_code(config)
    alpha = alphabet(config.modulation)
    bits, data = _random_symbols(rng, r.n_data_symbols, alpha)
    frame = np.concatenate([rake.pilot_symbols(r.n_pilot), data]) * amplitude
    tx = rake.spread(frame, code)
    rx = apply_channel(tx, taps)
    rx = ofdm.apply_doppler_offset(rx, config.doppler.shift_hz if config.doppler.enabled else 0.0)
    # snr_db is per symbol; noise is injected per chip
    chip_snr = None if snr_db is None else snr_db - 10 * math.log10(r.spreading_factor)
    rx = rx.with_samples(awgn(rx.samples, chip_snr, rng))
    return bits, data, rx


def wcdma_point(config: ScenarioConfig, taps: TapSet, index: int, snr_db) -> dict:
    r = config.rake
    code = spreading_code(config)
    alpha = alphabet(config.modulation)
    bits, data, rx = wcdma_frame(config, taps, _rng(config, index), snr_db)
    n_sym = r.n_pilot + r.n_data_symbols
    out = {"snr_db": snr_db}
    for label, nf in (("", r.n_fingers), ("_single", 1)):
        res = rake.rake_receive(rx, code, _rake_config(config, nf), n_symbols=n_sym, reference=data)
        out["ber" + label] = ber(bits, demodulate(res.symbols, alpha))
        out["evm_db" + label] = evm_db(data, res.symbols)
        out["eff_snr_db" + label] = res.report.combined_snr_db
        if not label:
            out["n_fingers"] = len(res.fingers)
            out["finger_delays"] = [f.delay for f in res.fingers]
            out["total_magnitude_db"] = res.report.total_magnitude_db
    return out


def table1_rows(config: ScenarioConfig, taps: TapSet) -> list[dict]:
    """Finger magnitudes per transmit level, first SNR point of the grid."""
    r = config.rake
    code = spreading_code(config)
    n_sym = r.n_pilot + r.n_data_symbols
    rows = []
    for i, tx_db in enumerate(r.tx_magnitudes_db):
        rng = np.random.default_rng(point_seed(config.seed, 10_000 + i))
        _, data, rx = wcdma_frame(config, taps, rng, config.snr_db[0], 10 ** (tx_db / 20))
        res = rake.rake_receive(rx, code, _rake_config(config, r.n_fingers), n_symbols=n_sym)
        fingers = [f.magnitude_db for f in res.fingers]
        rows.append({"tx_mag_db": tx_db, "fingers_db": fingers, "total_db": res.report.total_magnitude_db})
    return rows


# ---------------------------------------------------------------------------
# WiFi-like: single-carrier adaptive LMS equalizer
# ---------------------------------------------------------------------------

def wifi_point(config: ScenarioConfig, taps: TapSet, index: int, snr_db, keep_traces: bool = False) -> dict:
    eq = config.equalizer
    alpha = alphabet(config.modulation)
    rng = _rng(config, index)
    bits, syms = _random_symbols(rng, eq.n_train + eq.n_data, alpha)
    tx = ComplexSignal(syms, eq.sample_rate)
    rx = apply_channel(tx, taps)
    rx = ofdm.apply_doppler_offset(rx, config.doppler.shift_hz if config.doppler.enabled else 0.0)
    rx = rx.with_samples(awgn(rx.samples, snr_db, rng))

    trained = adapteq.train(rx, syms[: eq.n_train], eq.n_taps, eq.mu, eq.delay)
    mse_train = list(trained.state.mse_history)
    dd = adapteq.equalize_dd(rx, trained.state, alpha, first=eq.n_train, n_symbols=eq.n_data)

    data = syms[eq.n_train:]
    data_bits = bits[eq.n_train * alpha.bits_per_symbol:]
    main = int(taps.sample_delays(eq.sample_rate)[np.argmax(np.abs(taps.gains))])
    raw = rx.samples[eq.n_train + main: eq.n_train + main + eq.n_data]
    evm_after = evm_db(data, dd.soft)
    out = {
        "snr_db": snr_db,
        "ber": ber(data_bits, demodulate(dd.soft, alpha)),
        "evm_before_db": _fit_evm(data, raw),
        "evm_after_db": evm_after,
        "eff_snr_db": -evm_after,
        "diverged": bool(dd.state.diverged),
        "final_mse_db": _db(float(np.mean(mse_train[-100:]))),
    }
    if keep_traces:
        out["_traces"] = {
            "mse": dd.state.mse_history,
            "taps": dd.state.taps,
            "before": raw,
            "after": dd.soft,
        }
    return out


# ---------------------------------------------------------------------------
# WiMax-like: CP-OFDM with one-tap equalization
# ---------------------------------------------------------------------------

def ofdm_params(config: ScenarioConfig) -> ofdm.OfdmParams:
    o = config.ofdm
    base = ofdm.ofdm_preset(o.preset) if o.preset else None
    n_fft = o.n_fft or base.n_fft
    cp = o.cp_len if o.cp_len is not None else base.cp_len
    fs = o.sample_rate or base.sample_rate
    if o.used_half_width is not None:
        used = tuple(range(-o.used_half_width, 0)) + tuple(range(1, o.used_half_width + 1))
    elif base is not None and base.n_fft == n_fft:
        used = base.used_carriers
    else:
        half = n_fft * 100 // 256
        used = tuple(range(-half, 0)) + tuple(range(1, half + 1))
    return ofdm.OfdmParams(n_fft, cp, used, fs)


def preamble(params: ofdm.OfdmParams) -> np.ndarray:
    """Known BPSK preamble taken from an m-sequence."""
    chips = pn_generate(11).chips
    return chips[np.arange(params.n_used) % chips.size].astype(complex)


def _wimax_run(config, taps, params, rng, snr_db):
    o = config.ofdm
    alpha = alphabet(config.modulation)
    n_used = params.n_used
    pre = preamble(params)
    _, train_syms = _random_symbols(rng, o.n_train * n_used, alpha)
    bits, data = _random_symbols(rng, o.n_symbols * n_used, alpha)
    frame = np.concatenate([pre, train_syms, data])
    tx = ofdm.ofdm_modulate(frame, params)
    rx = apply_channel(tx, taps)
    rx = ofdm.apply_doppler_offset(rx, config.doppler.shift_hz if config.doppler.enabled else 0.0)
    rx = rx.with_samples(awgn(rx.samples, snr_db, rng))
    n_total = 1 + o.n_train + o.n_symbols
    carriers = ofdm.ofdm_demodulate(rx, params, o.timing_offset, n_total)

    ref_train = np.vstack([pre[None, :], train_syms.reshape(o.n_train, n_used)])
    if o.estimator == "ls":
        est = ofdm.estimate_channel_ls(carriers[0], pre, params)
    elif o.estimator == "lms":
        est = ofdm.estimate_channel_lms(carriers[: 1 + o.n_train], ref_train, params, o.mu)
    else:
        est = ofdm.taps_frequency_response(taps.sample_delays(params.sample_rate), taps.gains, params,
                                           o.timing_offset)
    rx_data = carriers[1 + o.n_train:]
    if o.track:
        eq, _ = ofdm.track_channel_lms(rx_data, est, alpha, o.track_mu)
        erased = np.zeros(eq.shape, dtype=bool)
    else:
        eq, erased = ofdm.one_tap_equalize(rx_data, est)
    data2 = data.reshape(o.n_symbols, n_used)
    return {
        "bits": bits,
        "data": data2,
        "raw": rx_data,
        "eq": eq,
        "erased": erased,
        "rx": rx,
    }


def wimax_point(config: ScenarioConfig, taps: TapSet, index: int, snr_db, keep_traces: bool = False) -> dict:
    params = ofdm_params(config)
    alpha = alphabet(config.modulation)
    run = _wimax_run(config, taps, params, _rng(config, index), snr_db)
    evm_after = ofdm.evm_excluding_erasures(run["data"], run["eq"], run["erased"])
    out = {
        "snr_db": snr_db,
        "ber": ber(run["bits"], demodulate(run["eq"].ravel(), alpha)),
        "evm_before_db": _fit_evm(run["data"].ravel(), run["raw"].ravel()),
        "evm_after_db": evm_after,
        "eff_snr_db": -evm_after,
        "erased_carriers": int(np.count_nonzero(run["erased"][0])) if run["erased"].size else 0,
    }
    if config.doppler.enabled:
        # paired reference: same seed, same draws, channel frozen
        still = config.model_copy(update={"doppler": config.doppler.model_copy(update={"enabled": False})})
        ref = _wimax_run(still, taps.without_doppler(), params, _rng(config, index), snr_db)
        out["evm_after_no_doppler_db"] = ofdm.evm_excluding_erasures(ref["data"], ref["eq"], ref["erased"])
        out["ber_no_doppler"] = ber(ref["bits"], demodulate(ref["eq"].ravel(), alpha))
    if keep_traces:
        freqs, psd = power_spectrum(run["rx"], min(params.n_fft, len(run["rx"])))
        out["_traces"] = {"before": run["raw"], "after": run["eq"], "freqs": freqs, "psd": psd}
    return out


# ---------------------------------------------------------------------------
# Channel analysis: IR width, broadening and scatterer sweeps
# ---------------------------------------------------------------------------

def broadening_rows(bandwidth: float, fs: float, separations_ns) -> list[dict]:
    ns = [float(s) for s in separations_ns]
    pct = broadening_sweep(np.asarray(ns) * 1e-9, bandwidth, fs)
    return [{"separation_ns": s, "broadening_pct": float(p)} for s, p in zip(ns, pct)]


def separation_for_broadening(target_pct: float, bandwidth: float, fs: float) -> float:
    """Equal-gain tap separation (s) whose broadening equals ``target_pct``."""
    hi = 0.5 / bandwidth
    f = lambda s: two_tap_broadening(s, bandwidth, fs) - target_pct  # noqa: E731
    return brentq(f, 1e-12, hi, xtol=1e-15)


def scatterer_sweep_rows(config: ScenarioConfig, offsets_m) -> list[dict]:
    """Move the first scatterer perpendicular to the LOS axis and trace its tap."""
    scene = config.scene.build()
    if not scene.scatterers:
        return []
    first = scene.scatterers[0]
    rows = []
    for off in offsets_m:
        moved = Scatterer((first.pos[0], float(off)), first.reflectivity)
        sc = ScattererScene(scene.tx_pos, scene.rx_pos, (moved,), scene.los_blocked, scene.rx_velocity,
                            scene.carrier_freq, scene.path_loss_exponent)
        taps = scene_to_taps(sc)
        los = math.dist(scene.tx_pos, scene.rx_pos)
        tap = taps.taps[-1] if not scene.los_blocked else taps.taps[0]
        rows.append({
            "offset_m": float(off),
            "excess_delay_s": tap.delay - los / 2.99792458e8,
            "gain_db": 20 * math.log10(abs(tap.gain)) if tap.gain else -math.inf,
            "doppler_hz": tap.doppler,
        })
    return rows


def base_analysis(config: ScenarioConfig, taps: TapSet):
    """IR of the configured channel and of a lone tap, for broadening."""
    bw, fs = analysis_defaults(config)
    span = max(taps.max_delay, config.analysis.span_s)
    ir = impulse_response(taps, bw, fs, span)
    ideal = impulse_response(TapSet((Tap(0.0, 1.0),)), bw, fs, span)
    return ir, ideal, mainlobe_broadening(ideal, ir)
