"""Command-line front end.

Exit status: 0 on success, 1 on bad data or failed validation, 2 on usage
errors. Every file written with ``--out`` is accompanied by a
``<out>.manifest.json`` run manifest.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import files
from .estimation import (
    DEFAULT_EXCLUSION_BANDS,
    ExclusionBand,
    FitError,
    correct_electronic_noise,
    correct_trace,
    fit_gain,
    fit_power_sweep,
    fit_spectra,
)
from .noise_analysis import normalize_fractional, oadev, welch_psd
from .opo_model import OpoModelParams, Quadrature, quadrature_variance, spectrum
from .physics import (
    REFERENCE_GEOMETRY_775,
    REFERENCE_GEOMETRY_1550,
    CavityGeometry,
    DomainError,
    characterize,
    db_from_ratio,
    parse_si,
    ratio_from_db,
)
from .simulator import (
    NOISELESS_ANALYZER,
    REFERENCE_ANALYZER,
    SpectrumAnalyzerConfig,
    Spur,
    gen_gain_data,
    gen_polarization_noise,
    gen_power_sweep,
    gen_spectrum_trace,
)


class DataError(Exception):
    """Input data or configuration rejected; maps to exit status 1."""


def _quantity(unit):
    def parse(text):
        try:
            return parse_si(text, unit)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    parse.__name__ = f"quantity[{unit or '-'}]"
    return parse


WATTS, HERTZ, RAD, METERS, SECONDS = (_quantity(u) for u in ("W", "Hz", "rad", "m", "s"))


def _db_value(text):
    try:
        return parse_si(text, "dB")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _band(text):
    try:
        return ExclusionBand.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _spur(text):
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError("spur must look like FREQ:HEIGHT_DB[:WIDTH]")
    try:
        f = parse_si(parts[0], "Hz")
        h = float(parts[1])
        w = parse_si(parts[2], "Hz") if len(parts) == 3 else 1e6
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return Spur(f, h, w)


def _power_list(text):
    """``'0.5mW:4.5mW:0.25mW'`` (start:stop:step, inclusive) or a comma list."""
    try:
        if ":" in text:
            start, stop, step = (parse_si(t, "W") for t in text.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(n)]
        return [parse_si(t, "W") for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# --------------------------------------------------------------------------
# output helpers


class Output:
    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.inputs: list[str] = []
        self.quiet = getattr(args, "quiet", False)

    def note(self, msg: str):
        if not self.quiet:
            print(msg, file=sys.stderr)

    def emit(self, text: str, path=None):
        path = path if path is not None else getattr(self.args, "out", None)
        if path is None:
            sys.stdout.write(text)
            return
        files.write_text(path, text)
        self.manifest([str(path)])

    def manifest(self, outputs: list[str]):
        config = {
            k: _jsonable(v)
            for k, v in sorted(vars(self.args).items())
            if k not in ("func", "quiet") and not k.startswith("out")
        }
        digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()
        manifest = {
            "command": self.command,
            "config_digest": f"sha256:{digest}",
            "seed": getattr(self.args, "seed", None),
            "input_files": self.inputs,
            "output_files": outputs,
            "tool_version": __version__,
        }
        for out in outputs:
            files.write_text(f"{out}.manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if dataclasses.is_dataclass(v):
        return {k: _jsonable(x) for k, x in dataclasses.asdict(v).items()}
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    return str(v)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _records_json(header, rows) -> str:
    return _dump_json([dict(zip(header, (_jsonable(x) for x in row))) for row in rows])


def _params(args) -> OpoModelParams:
    return OpoModelParams(
        threshold_power=args.pthr,
        fwhm_bandwidth=args.kappa,
        total_efficiency=args.eta,
        phase_noise_rms=args.phi,
    )


def _grid(args):
    if args.freq is not None:
        return np.array(args.freq, dtype=float)
    if args.npoints < 1 or args.fmax < args.fmin or args.fmin <= 0:
        raise DataError("frequency grid needs 0 < fmin <= fmax and npoints >= 1")
    return np.linspace(args.fmin, args.fmax, args.npoints)


# --------------------------------------------------------------------------
# commands


def cmd_cavity(args, out: Output):
    if args.geometry:
        out.inputs.append(str(args.geometry))
        try:
            spec = json.loads(Path(args.geometry).read_text(encoding="utf-8"))
            geometry = CavityGeometry(**spec)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"{args.geometry}: invalid geometry file ({exc})") from None
    else:
        geometry = {"ref-1550": REFERENCE_GEOMETRY_1550, "ref-775": REFERENCE_GEOMETRY_775}[args.preset]
    ch = characterize(geometry)
    out.emit(_dump_json(dataclasses.asdict(ch)))


def cmd_model_eval(args, out: Output):
    params = _params(args)
    grid = _grid(args)
    quads = [Quadrature.SQUEEZED, Quadrature.ANTISQUEEZED] if args.quadrature == "both" else [Quadrature.parse(args.quadrature)]
    if len(grid) == 1 and args.out is None and not args.csv and not args.json:
        for q in quads:
            v = quadrature_variance(params, args.power, grid[0], q)
            label = "squeezed" if q is Quadrature.SQUEEZED else "antisqueezed"
            print(f"{label}: {db_from_ratio(v):+.2f} dB ({v:.6g} linear)")
        return
    header = ["frequency_hz"] + [f"{q.value}_db" for q in quads]
    cols = [grid] + [spectrum(params, args.power, grid, q).variances_db for q in quads]
    rows = list(zip(*cols))
    if args.json:
        out.emit(_records_json(header, rows))
    else:
        out.emit(files._render({"pump_power_w": args.power}, header, rows))


def cmd_fit_gain(args, out: Output):
    out.inputs.append(str(args.inp))
    data = files.read_gain(args.inp)
    res = fit_gain(data, initial_threshold=args.initial_pthr)
    _emit_fit(res, out)


def cmd_fit_sweep(args, out: Output):
    sq, asq = [], []
    freq = args.freq
    for path, expect in ((args.squeezed, Quadrature.SQUEEZED), (args.antisqueezed, Quadrature.ANTISQUEEZED)):
        if path is None:
            continue
        out.inputs.append(str(path))
        pts, quad, f_meta = files.read_sweep(path)
        if quad is not None and quad is not expect:
            raise DataError(f"{path}: file declares quadrature {quad.value}, expected {expect.value}")
        freq = freq if freq is not None else f_meta
        (sq if expect is Quadrature.SQUEEZED else asq).extend(pts)
    if not sq and not asq:
        raise DataError("give --squeezed and/or --antisqueezed data")
    if freq is None:
        raise DataError("sideband frequency unknown: pass --freq or a '# frequency_hz=' header")
    res = fit_power_sweep(sq, asq, freq, args.kappa, threshold=args.pthr, fit_threshold=args.free_pthr or args.pthr is None)
    _emit_fit(res, out)


def cmd_fit_spectra(args, out: Output):
    traces = []
    for path in args.inp:
        out.inputs.append(str(path))
        traces.append(files.read_spectrum(path))
    bands = [] if args.no_default_bands else list(DEFAULT_EXCLUSION_BANDS)
    bands += args.exclude or []
    res = fit_spectra(
        traces,
        bands,
        threshold=args.pthr,
        fit_threshold=args.free_pthr,
        per_trace_phase=args.per_trace_phi,
        initial_fwhm=args.kappa_guess,
    )
    _emit_fit(res, out)


def _emit_fit(res, out: Output):
    for w in res.warnings:
        out.note(f"warning: {w}")
    out.emit(_dump_json(res.as_dict()))


def cmd_sim_gain(args, out: Output):
    data = gen_gain_data(args.pthr, args.powers, args.error, args.seed)
    out.emit(files.render_gain(data))


def _analyzer(args) -> SpectrumAnalyzerConfig:
    base = {"reference": REFERENCE_ANALYZER, "noiseless": NOISELESS_ANALYZER}[args.analyzer]
    changes = {}
    if args.rbw is not None:
        changes["rbw"] = args.rbw
    if args.vbw is not None:
        changes["vbw"] = args.vbw
    if args.averages is not None:
        changes["trace_averages"] = args.averages
    if args.floor_db is not None:
        changes["electronic_noise_rel_shot"] = ratio_from_db(args.floor_db)
    if args.no_spurs:
        changes["spurs"] = ()
    if args.spur:
        changes["spurs"] = tuple(changes.get("spurs", base.spurs)) + tuple(args.spur)
    return dataclasses.replace(base, **changes)


def cmd_sim_spectrum(args, out: Output):
    trace = gen_spectrum_trace(_params(args), args.power, _grid(args), args.quadrature, _analyzer(args), args.seed)
    out.emit(files.render_spectrum(trace))


def cmd_sim_sweep(args, out: Output):
    sq, asq = gen_power_sweep(_params(args), args.powers, args.freq_single, _analyzer(args), args.seed, args.error)
    out.emit(files.render_sweep(sq, Quadrature.SQUEEZED, args.freq_single), args.out_squeezed)
    out.emit(files.render_sweep(asq, Quadrature.ANTISQUEEZED, args.freq_single), args.out_antisqueezed)


def cmd_sim_polnoise(args, out: Output):
    series = gen_polarization_noise(args.duration, args.rate, args.white, args.step, args.seed)
    out.emit(files.render_series(series))


def _load_series(args, out: Output):
    out.inputs.append(str(args.inp))
    series = files.read_series(args.inp)
    return series if args.raw else normalize_fractional(series)


def cmd_adev(args, out: Output):
    series = _load_series(args, out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        points = oadev(series, args.taus)
    for w in caught:
        out.note(f"warning: {w.message}")
    if args.json:
        out.emit(_records_json(files.ALLAN_HEADER, points))
    else:
        out.emit(files.render_allan(points))


def cmd_psd(args, out: Output):
    series = _load_series(args, out)
    points = welch_psd(series, args.segment, args.overlap, args.window)
    if args.json:
        out.emit(_records_json(files.PSD_HEADER, points))
    else:
        out.emit(files.render_psd(points))


def cmd_correct_noise(args, out: Output):
    out.inputs.append(str(args.inp))
    floor = ratio_from_db(args.floor_db)
    if files.sniff_header(args.inp) == files.SWEEP_HEADER:
        pts, quad, freq = files.read_sweep(args.inp)
        if quad is None or freq is None:
            raise DataError(f"{args.inp}: sweep file needs '# quadrature=' and '# frequency_hz=' lines")
        corrected = [(p, correct_electronic_noise(v, floor)) for p, v in pts]
        out.emit(files.render_sweep(corrected, quad, freq))
        return
    trace = files.read_spectrum(args.inp)
    out.emit(files.render_spectrum(correct_trace(trace, floor)))


# --------------------------------------------------------------------------
# parser


def _add_model_flags(p, power_required=True):
    p.add_argument("--pthr", type=WATTS, required=True, help="threshold power, e.g. 5.12mW")
    p.add_argument("--kappa", type=HERTZ, required=True, help="cavity FWHM, e.g. 66MHz")
    p.add_argument("--eta", type=float, required=True, help="total detection efficiency")
    p.add_argument("--phi", type=RAD, default=0.0, help="RMS phase noise, e.g. 19mrad")
    if power_required:
        p.add_argument("--power", type=WATTS, required=True, help="pump power")


def _add_grid_flags(p):
    p.add_argument("--freq", type=HERTZ, action="append", help="sideband frequency (repeatable)")
    p.add_argument("--fmin", type=HERTZ, default=1e6)
    p.add_argument("--fmax", type=HERTZ, default=120e6)
    p.add_argument("--npoints", type=int, default=1191)


def _add_analyzer_flags(p):
    p.add_argument("--analyzer", choices=["reference", "noiseless"], default="reference")
    p.add_argument("--rbw", type=HERTZ)
    p.add_argument("--vbw", type=HERTZ)
    p.add_argument("--averages", type=float)
    p.add_argument("--floor-db", type=_db_value, help="electronic noise relative to shot noise, dB")
    p.add_argument("--spur", type=_spur, action="append", help="FREQ:HEIGHT_DB[:WIDTH], repeatable")
    p.add_argument("--no-spurs", action="store_true")


def _add_format_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--csv", action="store_true", help="CSV output (default)")
    g.add_argument("--json", action="store_true", help="JSON output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opo-squeeze",
        description="Model, simulate and fit a below-threshold squeezed-light OPO; analyze power stability.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--quiet", action="store_true", help="suppress diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cavity", help="FSR, finesse, linewidth and escape efficiency")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--geometry", type=Path, help="JSON file with CavityGeometry fields")
    g.add_argument("--preset", choices=["ref-1550", "ref-775"])
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_cavity)

    model = sub.add_parser("model", help="evaluate the squeezing model").add_subparsers(dest="action", required=True)
    p = model.add_parser("eval", help="variance spectrum or single-point values")
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--quadrature", default="both", choices=["both", "squeezed", "antisqueezed"])
    p.add_argument("--out", type=Path)
    _add_format_flags(p)
    p.set_defaults(func=cmd_model_eval)

    fit = sub.add_parser("fit", help="parameter estimation").add_subparsers(dest="action", required=True)
    p = fit.add_parser("gain", help="threshold from gain data")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--initial-pthr", type=WATTS)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_fit_gain)

    p = fit.add_parser("sweep", help="efficiency and phase noise from a pump-power sweep")
    p.add_argument("--squeezed", type=Path)
    p.add_argument("--antisqueezed", type=Path)
    p.add_argument("--freq", type=HERTZ, help="sideband frequency (else read from file header)")
    p.add_argument("--kappa", type=HERTZ, required=True)
    p.add_argument("--pthr", type=WATTS, help="fixed threshold; omit to fit it")
    p.add_argument("--free-pthr", action="store_true", help="fit the threshold, starting from --pthr")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_fit_sweep)

    p = fit.add_parser("spectra", help="joint fit of noise spectra")
    p.add_argument("--in", dest="inp", type=Path, action="append", required=True)
    p.add_argument("--exclude", type=_band, action="append", help="LOW:HIGH in Hz, repeatable")
    p.add_argument("--no-default-bands", action="store_true", help="drop the 40/80/100 MHz bands")
    p.add_argument("--pthr", type=WATTS, default=5.12e-3)
    p.add_argument("--free-pthr", action="store_true")
    p.add_argument("--per-trace-phi", action="store_true")
    p.add_argument("--kappa-guess", type=HERTZ)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_fit_spectra)

    sim = sub.add_parser("sim", help="seeded synthetic data").add_subparsers(dest="action", required=True)
    p = sim.add_parser("gain")
    p.add_argument("--pthr", type=WATTS, default=5.12e-3)
    p.add_argument("--powers", type=_power_list, default=_power_list("0.5mW:4.5mW:0.25mW"))
    p.add_argument("--error", type=float, default=0.05, help="fractional power error")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sim_gain)

    p = sim.add_parser("spectrum")
    _add_model_flags(p)
    _add_grid_flags(p)
    _add_analyzer_flags(p)
    p.add_argument("--quadrature", default="squeezed", choices=["squeezed", "antisqueezed"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sim_spectrum)

    p = sim.add_parser("sweep")
    _add_model_flags(p, power_required=False)
    _add_analyzer_flags(p)
    p.add_argument("--powers", type=_power_list, default=_power_list("0mW:4mW:0.25mW"))
    p.add_argument("--freq", dest="freq_single", type=HERTZ, default=5e6)
    p.add_argument("--error", type=float, default=0.0, help="fractional power error")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-squeezed", type=Path, required=True)
    p.add_argument("--out-antisqueezed", type=Path, required=True)
    p.set_defaults(func=cmd_sim_sweep)

    p = sim.add_parser("polnoise")
    p.add_argument("--duration", type=SECONDS, default=20000.0)
    p.add_argument("--rate", type=HERTZ, default=1.0)
    p.add_argument("--white", type=float, default=1e-3)
    p.add_argument("--step", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sim_polnoise)

    for name, func, helptext in (("adev", cmd_adev, "overlapped Allan deviation"), ("psd", cmd_psd, "Welch PSD")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--in", dest="inp", type=Path, required=True)
        p.add_argument("--raw", action="store_true", help="skip normalization to fractional deviation")
        if name == "adev":
            p.add_argument("--taus", type=_int_list, help="comma-separated averaging factors")
        else:
            p.add_argument("--segment", type=int)
            p.add_argument("--overlap", type=float, default=0.5)
            p.add_argument("--window", choices=["hann", "rectangular"], default="hann")
        p.add_argument("--out", type=Path)
        _add_format_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("correct-noise", help="remove the electronic noise floor from a trace")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--floor-db", type=_db_value, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_correct_noise)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    command = " ".join(x for x in (args.command, getattr(args, "action", None)) if x)
    out = Output(args, command)
    try:
        args.func(args, out)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error
        sys.stdout = open(os.devnull, "w")
        return 0
    except (DataError, DomainError, FitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
