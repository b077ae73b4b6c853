"""CSV readers and writers for the command-line tool.

All files are UTF-8, comma separated, with one header row. Metadata lives in
``# key=value`` comment lines before the header. Floats are written with
``repr`` so that reading them back is exact.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .estimation import GainMeasurement
from .noise_analysis import AllanPoint, PsdPoint, TimeSeries
from .opo_model import Quadrature, SpectrumTrace
from .physics import db_from_ratio, ratio_from_db

GAIN_HEADER = ["pump_power_w", "gain", "power_frac_err"]
SPECTRUM_HEADER = ["frequency_hz", "variance_db_rel_shot"]
SWEEP_HEADER = ["pump_power_w", "variance_db_rel_shot"]
SERIES_HEADER = ["value"]
ALLAN_HEADER = ["tau_s", "oadev", "num_terms"]
PSD_HEADER = ["frequency_hz", "psd_per_hz"]


class CsvFormatError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def _render(meta: dict, header, rows: Iterable) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v if isinstance(v, str) else fmt(v)}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_text(path, text: str):
    Path(path).write_text(text, encoding="utf-8", newline="")


def parse_table(text: str, header, source: str = "<input>"):
    """Return ``(metadata, rows)`` with rows as float tuples; errors carry line numbers."""
    meta = {}
    rows = []
    seen_header = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        cells = next(csv.reader([stripped]))
        cells = [c.strip() for c in cells]
        if not seen_header:
            if cells != list(header):
                raise CsvFormatError(f"{source}:{lineno}: expected header {','.join(header)!r}, got {stripped!r}")
            seen_header = True
            continue
        if len(cells) != len(header):
            raise CsvFormatError(f"{source}:{lineno}: expected {len(header)} columns, got {len(cells)}")
        try:
            values = tuple(float(c) for c in cells)
        except ValueError:
            raise CsvFormatError(f"{source}:{lineno}: non-numeric value in {stripped!r}") from None
        if not all(math.isfinite(v) for v in values):
            raise CsvFormatError(f"{source}:{lineno}: non-finite value in {stripped!r}")
        rows.append((lineno, values))
    if not seen_header:
        raise CsvFormatError(f"{source}: missing header row {','.join(header)!r}")
    return meta, rows


def _read(path):
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8"), str(path)
    except OSError as exc:
        raise CsvFormatError(f"{path}: cannot read ({exc.strerror})") from None


def sniff_header(path) -> list[str]:
    """First non-comment row of a CSV file, split into cells."""
    text, _ = _read(path)
    for line in text.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            return [c.strip() for c in stripped.split(",")]
    return []


def _meta_float(meta, key, source, default=None):
    if key not in meta:
        if default is not None:
            return default
        raise CsvFormatError(f"{source}: missing '# {key}=' metadata line")
    try:
        return float(meta[key])
    except ValueError:
        raise CsvFormatError(f"{source}: metadata {key}={meta[key]!r} is not a number") from None


# gain ----------------------------------------------------------------------


def render_gain(data) -> str:
    return _render({}, GAIN_HEADER, ((d.pump_power, d.gain, d.power_fractional_uncertainty) for d in data))


def read_gain(path) -> list[GainMeasurement]:
    text, src = _read(path)
    _, rows = parse_table(text, GAIN_HEADER, src)
    out = []
    for lineno, (p, g, u) in rows:
        try:
            out.append(GainMeasurement(p, g, u))
        except ValueError as exc:
            raise CsvFormatError(f"{src}:{lineno}: {exc}") from None
    if not out:
        raise CsvFormatError(f"{src}: no data rows")
    return out


# spectra -------------------------------------------------------------------

_TRACE_META_KEYS = ("rbw_hz", "vbw_hz", "averages", "electronic_noise_rel_shot", "electronic_noise_corrected")


def render_spectrum(trace: SpectrumTrace) -> str:
    meta = {"pump_power_w": trace.pump_power, "quadrature": trace.quadrature.value}
    for k in _TRACE_META_KEYS:
        if k in trace.metadata:
            meta[k] = trace.metadata[k]
    return _render(meta, SPECTRUM_HEADER, zip(trace.frequencies, trace.variances_db))


def read_spectrum(path) -> SpectrumTrace:
    text, src = _read(path)
    meta, rows = parse_table(text, SPECTRUM_HEADER, src)
    if not rows:
        raise CsvFormatError(f"{src}: no data rows")
    pump = _meta_float(meta, "pump_power_w", src)
    try:
        quad = Quadrature.parse(meta.get("quadrature", ""))
    except ValueError:
        raise CsvFormatError(f"{src}: missing or invalid '# quadrature=' metadata line") from None
    f = np.array([r[1][0] for r in rows])
    bad = np.flatnonzero(np.diff(f) <= 0)
    if bad.size:
        raise CsvFormatError(f"{src}:{rows[bad[0] + 1][0]}: frequencies must be strictly increasing")
    v = ratio_from_db(np.array([r[1][1] for r in rows]))
    extra = {k: _meta_float(meta, k, src) for k in _TRACE_META_KEYS if k in meta}
    return SpectrumTrace(pump_power=pump, quadrature=quad, frequencies=f, variances=np.atleast_1d(v), metadata=extra)


def render_sweep(points, quadrature, sideband_frequency) -> str:
    meta = {"quadrature": Quadrature.parse(quadrature).value, "frequency_hz": sideband_frequency}
    return _render(meta, SWEEP_HEADER, ((p, db_from_ratio(v)) for p, v in points))


def read_sweep(path):
    """Return ``(points, quadrature, frequency_or_None)``; points are (W, linear)."""
    text, src = _read(path)
    meta, rows = parse_table(text, SWEEP_HEADER, src)
    if not rows:
        raise CsvFormatError(f"{src}: no data rows")
    quad = Quadrature.parse(meta["quadrature"]) if "quadrature" in meta else None
    freq = _meta_float(meta, "frequency_hz", src) if "frequency_hz" in meta else None
    pts = []
    for lineno, (p, vdb) in rows:
        if p < 0:
            raise CsvFormatError(f"{src}:{lineno}: negative pump power")
        pts.append((p, ratio_from_db(vdb)))
    return pts, quad, freq


# time series ---------------------------------------------------------------


def render_series(series: TimeSeries) -> str:
    return _render({"sample_rate_hz": series.sample_rate}, SERIES_HEADER, ((v,) for v in series.samples))


def read_series(path) -> TimeSeries:
    text, src = _read(path)
    meta, rows = parse_table(text, SERIES_HEADER, src)
    rate = _meta_float(meta, "sample_rate_hz", src)
    try:
        return TimeSeries(rate, np.array([r[1][0] for r in rows]))
    except ValueError as exc:
        raise CsvFormatError(f"{src}: {exc}") from None


def render_allan(points: list[AllanPoint]) -> str:
    return _render({}, ALLAN_HEADER, points)


def read_allan(path) -> list[AllanPoint]:
    text, src = _read(path)
    _, rows = parse_table(text, ALLAN_HEADER, src)
    return [AllanPoint(t, a, int(n)) for _, (t, a, n) in rows]


def render_psd(points: list[PsdPoint]) -> str:
    return _render({}, PSD_HEADER, points)


def read_psd(path) -> list[PsdPoint]:
    text, src = _read(path)
    _, rows = parse_table(text, PSD_HEADER, src)
    return [PsdPoint(f, d) for _, (f, d) in rows]
