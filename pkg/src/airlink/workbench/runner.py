"""Scenario execution and report writing."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import AirlinkError, ValidationError
from . import chains
from .config import ScenarioConfig, config_hash, dump_config

log = logging.getLogger(__name__)

OUT_ENV = "AIRLINK_OUT"


class RunFailure(AirlinkError):
    """A run stopped part way; ``manifest`` holds what was written."""

    def __init__(self, message, manifest):
        super().__init__(message)
        self.manifest = manifest


@dataclass
class RunReport:
    config_hash: str
    seed: int
    out_dir: Path
    files: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "files": list(self.files),
            "metrics": _jsonable(self.metrics),
            "versions": self.versions,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _mag_db(v) -> float:
    m = abs(v)
    return 20 * math.log10(m) if m > 1e-10 else -200.0


class _Writer:
    """Writes CSV/JSON files into a run directory and records the manifest."""

    def __init__(self, out_dir: Path, report: RunReport):
        self.out_dir = out_dir
        self.report = report

    def csv(self, name: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        (self.out_dir / name).write_text(buf.getvalue())
        self.report.files.append(name)

    def text(self, name: str, text: str) -> None:
        (self.out_dir / name).write_text(text)
        self.report.files.append(name)


def default_out_dir(config: ScenarioConfig) -> Path:
    if config.output_dir:
        return Path(config.output_dir)
    return Path(os.environ.get(OUT_ENV, "airlink_out")) / config.name


def _snr_key(s):
    return math.inf if s is None else s


def _map_points(fn, config, taps, workers: int):
    jobs = list(enumerate(config.snr_db))
    ref = max(range(len(jobs)), key=lambda i: _snr_key(jobs[i][1]))
    call = lambda j: fn(config, taps, j[0], j[1], keep_traces=(j[0] == ref))  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(call, jobs))
    else:
        results = [call(j) for j in jobs]
    traces = results[ref].pop("_traces", None)
    for r in results:
        r.pop("_traces", None)
    return results, traces


def _write_ir(w: _Writer, analysis) -> dict:
    w.csv("ir.csv", ["time_s", "re", "im", "mag_db"],
          ([t, v.real, v.imag, _mag_db(v)] for t, v in zip(analysis.times, analysis.ir.samples)))
    w.csv("fr.csv", ["freq_hz", "re", "im", "mag_db"],
          ([f, v.real, v.imag, _mag_db(v)] for f, v in zip(analysis.freqs, analysis.fr)))
    return {"mainlobe_width_s": analysis.mainlobe_width, "null_left_s": analysis.null_left,
            "null_right_s": analysis.null_right}


def _constellation(w: _Writer, name: str, symbols) -> None:
    s = np.atleast_2d(np.asarray(symbols))
    w.csv(name, ["symbol_index", "carrier", "re", "im"],
          ([m, k, v.real, v.imag] for m, row in enumerate(s) for k, v in enumerate(row)))


def _run_wcdma(config, taps, w, workers):
    metrics = {}
    if config.rake.tx_magnitudes_db:
        rows = chains.table1_rows(config, taps)
        n = config.rake.n_fingers
        w.csv("fingers.csv", ["tx_mag_db"] + [f"fing{i + 1}_db" for i in range(n)] + ["total_db"],
              ([r["tx_mag_db"]] + r["fingers_db"] + [None] * (n - len(r["fingers_db"])) + [r["total_db"]]
               for r in rows))
        metrics["table1"] = rows
    results, _ = _map_points(lambda c, t, i, s, keep_traces: chains.wcdma_point(c, t, i, s), config, taps, workers)
    cols = ["snr_db", "ber", "evm_db", "eff_snr_db", "ber_single", "evm_db_single", "eff_snr_db_single",
            "n_fingers", "total_magnitude_db"]
    w.csv("ber.csv", cols, ([r[c] for c in cols] for r in results))
    metrics["points"] = results
    return metrics


def _run_wifi(config, taps, w, workers):
    results, tr = _map_points(chains.wifi_point, config, taps, workers)
    cols = ["snr_db", "ber", "evm_before_db", "evm_after_db", "eff_snr_db", "diverged", "final_mse_db"]
    w.csv("ber.csv", cols, ([r[c] for c in cols] for r in results))
    w.csv("mse.csv", ["step", "mse"], enumerate(tr["mse"]))
    w.csv("taps.csv", ["index", "re", "im"], ([i, v.real, v.imag] for i, v in enumerate(tr["taps"])))
    _constellation(w, "constellation_before.csv", np.asarray(tr["before"])[:, None])
    _constellation(w, "constellation_after.csv", np.asarray(tr["after"])[:, None])
    return {"points": results}


def _run_wimax(config, taps, w, workers):
    results, tr = _map_points(chains.wimax_point, config, taps, workers)
    cols = ["snr_db", "ber", "evm_before_db", "evm_after_db", "eff_snr_db", "erased_carriers"]
    if config.doppler.enabled:
        cols += ["evm_after_no_doppler_db", "ber_no_doppler"]
    w.csv("ber.csv", cols, ([r[c] for c in cols] for r in results))
    _constellation(w, "constellation_before.csv", tr["before"])
    _constellation(w, "constellation_after.csv", tr["after"])
    w.csv("spectrum.csv", ["freq_hz", "power_db"],
          ([f, 10 * math.log10(p) if p > 0 else -200.0] for f, p in zip(tr["freqs"], tr["psd"])))
    return {"points": results}


def _run_analysis(config, taps, w):
    a = config.analysis
    ir, ideal, pct = chains.base_analysis(config, taps)
    metrics = _write_ir(w, ir)
    metrics["ideal_mainlobe_width_s"] = ideal.mainlobe_width
    metrics["broadening_pct"] = pct
    if a.separations_ns:
        rows = chains.broadening_rows(a.bandwidth, a.fs, a.separations_ns)
        w.csv("broadening.csv", ["separation_ns", "broadening_pct"],
              ([r["separation_ns"], r["broadening_pct"]] for r in rows))
        metrics["sweep"] = rows
    if a.target_broadening_pct is not None:
        sep = chains.separation_for_broadening(a.target_broadening_pct, a.bandwidth, a.fs)
        metrics["separation_for_target_ns"] = sep * 1e9
    if a.offsets_m and config.scene is not None:
        rows = chains.scatterer_sweep_rows(config, a.offsets_m)
        w.csv("scatterer_sweep.csv", ["offset_m", "excess_delay_s", "gain_db", "doppler_hz"],
              ([r["offset_m"], r["excess_delay_s"], r["gain_db"], r["doppler_hz"]] for r in rows))
        metrics["scatterer_sweep"] = rows
    return metrics


def run_scenario(config: ScenarioConfig, out_dir=None, workers: int = 1) -> RunReport:
    """Execute a scenario and write its CSV files plus ``manifest.json``.

    Output depends only on ``(config, seed)``; ``workers`` changes the
    schedule, never the bytes.
    """
    out = Path(out_dir) if out_dir is not None else default_out_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(config_hash(config), config.seed, out,
                       versions={"airlink": __version__, "numpy": np.__version__})
    w = _Writer(out, report)
    w.text("config.json", dump_config(config))
    try:
        taps = config.tapset()
        w.csv("taps_channel.csv", ["delay_s", "re", "im", "doppler_hz"],
              ([t.delay, t.gain.real, t.gain.imag, t.doppler] for t in taps.taps))
        if config.system == "channel_analysis":
            report.metrics.update(_run_analysis(config, taps, w))
        else:
            report.metrics.update(_write_ir(w, chains.channel_analysis(config, taps)))
            runner = {"wcdma_rake": _run_wcdma, "wifi_adapteq": _run_wifi, "wimax_ofdm": _run_wimax}
            report.metrics.update(runner[config.system](config, taps, w, workers))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, AirlinkError) as exc:
        if isinstance(exc, ValidationError):
            raise
        manifest = report.manifest()
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        raise RunFailure(str(exc), manifest) from exc
    (out / "manifest.json").write_text(json.dumps(report.manifest(), indent=2, sort_keys=True) + "\n")
    return report


def compare_systems(configs: list[ScenarioConfig], out_dir=None, workers: int = 1) -> dict:
    """Run several systems over one channel and tabulate BER/EVM/effective SNR."""
    if not configs:
        raise ValidationError(["compare needs at least one config"])
    first = configs[0]
    problems = []
    for c in configs[1:]:
        if c.channel_key() != first.channel_key():
            problems.append(f"{c.name}: channel differs from {first.name}")
        if c.seed != first.seed:
            problems.append(f"{c.name}: seed {c.seed} differs from {first.seed}")
        if c.snr_db != first.snr_db:
            problems.append(f"{c.name}: SNR grid differs from {first.name}")
        if c.normalize_taps != first.normalize_taps or c.doppler != first.doppler:
            problems.append(f"{c.name}: channel normalization or Doppler settings differ from {first.name}")
    if problems:
        raise ValidationError(problems)

    root = Path(out_dir) if out_dir is not None else Path(os.environ.get(OUT_ENV, "airlink_out")) / "compare"
    root.mkdir(parents=True, exist_ok=True)
    rows, summary = [], {}
    for c in configs:
        rep = run_scenario(c, root / c.name, workers)
        pts = rep.metrics.get("points", [])
        for p in pts:
            evm = p.get("evm_after_db", p.get("evm_db"))
            rows.append([c.system, p["snr_db"], p["ber"], evm, p["eff_snr_db"]])
        entry = {"eff_snr_db": [p["eff_snr_db"] for p in pts], "ber": [p["ber"] for p in pts]}
        if c.system == "wcdma_rake":
            entry["eff_snr_db_single_finger"] = [p["eff_snr_db_single"] for p in pts]
        summary[c.name] = {"system": c.system, **entry}

    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["system", "snr_db", "ber", "evm_db", "eff_snr_db"])
    for r in rows:
        wr.writerow([r[0]] + [_fmt(v) for v in r[1:]])
    (root / "comparison.csv").write_text(buf.getvalue())
    result = {"seed": first.seed, "snr_db": first.snr_db, "systems": _jsonable(summary),
              "files": ["comparison.csv"] + [f"{c.name}/manifest.json" for c in configs]}
    (root / "comparison.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    result["rows"] = rows
    result["out_dir"] = str(root)
    return result
