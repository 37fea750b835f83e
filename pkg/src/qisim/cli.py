"""Command-line front end: figure data as CSV/JSON, images as PGM, design calculators.

Every subcommand accepts ``--config FILE`` (JSON), ``--out DIR`` and
``--format csv|json``. Values resolve as flag > config file > figure preset >
built-in default. Without an output directory (flag or ``QISIM_OUTPUT_DIR``)
tabular data goes to stdout.

Exit codes: 0 ok, 1 usage error, 2 numeric-domain error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__, design, io, model, sim, validation
from .design import UNBOUNDED, BracketSchedule, SearchRangeError
from .model import CisConfig, QisConfig
from .specfun import DomainError, NoCrossingError

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_VALIDATION = 0, 1, 2, 3
OUTPUT_ENV = "QISIM_OUTPUT_DIR"

DEFAULT_Q = 0.5
DEFAULT_SIGMA_QIS = 0.19
DEFAULT_SIGMA_CIS = 2.0


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument converters (shared by flags and config-file values)
# ---------------------------------------------------------------------------

def _num(text, what: str = "value") -> float:
    try:
        x = float(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"{what}: not a number: {text!r}")
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"{what}: must be finite, got {text!r}")
    return x


def _split(text) -> list:
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [s for s in str(text).split(",") if s.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty sweep list")
    return items


def nonneg(text) -> float:
    x = _num(text)
    if x < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text!r}")
    return x


def positive(text) -> float:
    x = _num(text)
    if x <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text!r}")
    return x


def count(text) -> int:
    try:
        n = int(str(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text!r}")
    return n


def seed_value(text) -> int:
    try:
        s = int(str(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed is not an integer: {text!r}")
    if not 0 <= s < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return s


def sigma_list(text) -> list[float]:
    return [nonneg(s) for s in _split(text)]


def positive_list(text) -> list[float]:
    return [positive(s) for s in _split(text)]


def count_list(text) -> list[int]:
    return [count(s) for s in _split(text)]


def tau_list(text) -> list:
    """Bracket scales as decimals or exact ``p/q`` fractions."""
    out = []
    for s in _split(text):
        try:
            t = Fraction(str(s).strip())
        except (ValueError, ZeroDivisionError):
            raise argparse.ArgumentTypeError(f"bad bracket scale {s!r}")
        if t <= 0:
            raise argparse.ArgumentTypeError(f"bracket scales must be > 0, got {s!r}")
        out.append(t)
    return out


def log_range(text) -> tuple[float, float, int]:
    """``lo:hi:count`` for a log-spaced exposure sweep."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected lo:hi:count, got {text!r}")
    lo, hi, n = positive(parts[0]), positive(parts[1]), count(parts[2])
    if hi < lo or (n == 1 and hi != lo) or (n > 1 and hi == lo):
        raise argparse.ArgumentTypeError(f"bad range {text!r}: need lo < hi and count >= 2")
    return lo, hi, n


def int_log_range(text) -> list[int]:
    """``lo:hi[:count]`` -> sorted unique integers, log spaced (200 points if no count)."""
    parts = str(text).split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected lo:hi[:count], got {text!r}")
    lo, hi = count(parts[0]), count(parts[1])
    if hi < lo:
        raise argparse.ArgumentTypeError(f"bad range {text!r}: lo > hi")
    if len(parts) == 2:
        n = 200
    else:
        n = count(parts[2])
    vals = np.unique(np.round(np.logspace(math.log10(lo), math.log10(hi), n)).astype(np.int64))
    return [int(v) for v in vals]


def q_value(text) -> float:
    return positive(text)


def adc_bits(text) -> int:
    b = count(text)
    if b > 32:
        raise argparse.ArgumentTypeError("ADC bit depth must be <= 32")
    return b


def fraction_value(text) -> float:
    x = _num(text)
    if abs(x) >= 0.5:
        raise argparse.ArgumentTypeError("omega perturbation must be below 0.5 in magnitude")
    return x


# ---------------------------------------------------------------------------
# parser construction with a registry of resolvable options
# ---------------------------------------------------------------------------

@dataclass
class _Opt:
    convert: Callable
    default: Any
    flag: bool = False
    choices: Optional[tuple] = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


_REGISTRY: dict[str, dict[str, _Opt]] = {}


def _add(sub: argparse.ArgumentParser, cmd: str, flag: str, convert=None, default=None,
         help: str = "", switch: bool = False, choices=None) -> None:
    dest = flag.lstrip("-").replace("-", "_")
    _REGISTRY.setdefault(cmd, {})[dest] = _Opt(convert, default, switch, choices)
    if switch:
        sub.add_argument(flag, dest=dest, action="store_const", const=True, default=None, help=help)
    else:
        sub.add_argument(flag, dest=dest, type=convert, default=None, choices=choices, help=help)


def _common(sub: argparse.ArgumentParser, cmd: str) -> None:
    sub.add_argument("--config", type=Path, help="JSON file of option values")
    sub.add_argument("--out", type=Path, help=f"output directory (default: ${OUTPUT_ENV}, else stdout)")
    _add(sub, cmd, "--format", str, "csv", "output format", choices=("csv", "json"))


def build_parser() -> _Parser:
    _REGISTRY.clear()
    p = _Parser(prog="qisim", description="One-bit quanta image sensor analysis and simulation.")
    p.add_argument("--version", action="version", version=f"qisim {__version__}")
    subs = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    s = subs.add_parser("snr-curve", help="SNR versus exposure for QIS and/or CIS")
    _common(s, "snr-curve")
    _add(s, "snr-curve", "--figure", int, None, "preset: 4, 5 or 6", choices=(4, 5, 6))
    _add(s, "snr-curve", "--sensor", str, "qis", "sensor type", choices=("qis", "cis", "both"))
    _add(s, "snr-curve", "--n", count_list, [256], "comma list of frame counts")
    _add(s, "snr-curve", "--sigma", sigma_list, None, "comma list of read noise (QIS; CIS with --sensor cis)")
    _add(s, "snr-curve", "--cis-sigma", sigma_list, [DEFAULT_SIGMA_CIS], "CIS read noise when --sensor both")
    _add(s, "snr-curve", "--q", q_value, DEFAULT_Q, "comparator threshold")
    _add(s, "snr-curve", "--fwc", positive_list, [4096.0], "CIS full-well capacity")
    _add(s, "snr-curve", "--adc-bits", adc_bits, None, "CIS ADC depth (informational)")
    _add(s, "snr-curve", "--theta-log", log_range, (1e-4, 1e4, 400), "exposure sweep lo:hi:count")
    _add(s, "snr-curve", "--approx", switch=True, help="use the small-read-noise closed form")

    s = subs.add_parser("snr-vs-n", help="SNR versus frame count at fixed exposures")
    _common(s, "snr-vs-n")
    _add(s, "snr-vs-n", "--theta", positive_list, [2.0, 10.0, 50.0], "comma list of exposures")
    _add(s, "snr-vs-n", "--sigma", nonneg, DEFAULT_SIGMA_QIS, "read noise")
    _add(s, "snr-vs-n", "--q", q_value, DEFAULT_Q, "comparator threshold")
    _add(s, "snr-vs-n", "--n-range", int_log_range, None, "frame counts lo:hi[:count]")
    _add(s, "snr-vs-n", "--approx", switch=True, help="use the small-read-noise closed form")

    s = subs.add_parser("optimal", help="optimal exposure and frame count")
    _common(s, "optimal")
    _add(s, "optimal", "--table1", switch=True, help="frame constants over the standard read-noise set")
    _add(s, "optimal", "--theta", positive_list, None, "exposures for the optimal frame count")
    _add(s, "optimal", "--n", count_list, None, "frame counts for the optimal exposure")
    _add(s, "optimal", "--sigma", sigma_list, [DEFAULT_SIGMA_QIS], "comma list of read noise")

    s = subs.add_parser("dr", help="dynamic range of QIS or CIS")
    _common(s, "dr")
    _add(s, "dr", "--n", count_list, [1000], "frame counts")
    _add(s, "dr", "--sweep-n", int_log_range, None, "frame-count sweep lo:hi[:count], QIS vs CIS with FWC=N")
    _add(s, "dr", "--sigma", nonneg, None, "read noise (CIS read noise with --cis)")
    _add(s, "dr", "--cis", switch=True, help="CIS dynamic range")
    _add(s, "dr", "--fwc", positive, 5000.0, "CIS full-well capacity")
    _add(s, "dr", "--cis-sigma", nonneg, DEFAULT_SIGMA_CIS, "CIS read noise in sweeps")

    s = subs.add_parser("bracket", help="exposure bracketing SNR and dynamic range")
    _common(s, "bracket")
    _add(s, "bracket", "--taus", tau_list, [Fraction(4), Fraction(1), Fraction(1, 4),
                                             Fraction(1, 16), Fraction(1, 64)],
         "bracket scales, decimals or p/q")
    _add(s, "bracket", "--n", count, 1000, "frames per bracket")
    _add(s, "bracket", "--sigma", nonneg, DEFAULT_SIGMA_QIS, "QIS read noise")
    _add(s, "bracket", "--cis-sigma", positive, DEFAULT_SIGMA_CIS, "CIS read noise of the comparison")
    _add(s, "bracket", "--shift", positive, 1.0,
         "exposure scale applied to the single-capture comparison curves")
    _add(s, "bracket", "--theta-log", log_range, (1e-3, 1e7, 500), "exposure sweep lo:hi:count")

    s = subs.add_parser("simulate", help="Monte Carlo capture and reconstruction")
    _common(s, "simulate")
    _add(s, "simulate", "--figure", int, None, "preset: 1, 2, 7 or 8", choices=(1, 2, 7, 8))
    _add(s, "simulate", "--image", Path, None, "PGM exposure image (else a synthetic scene)")
    _add(s, "simulate", "--size", count, 128, "synthetic scene side in pixels")
    _add(s, "simulate", "--theta-max", positive, 16.0, "exposure of the brightest gray level")
    _add(s, "simulate", "--sensor", str, "qis", "sensor", choices=("qis", "cis"))
    _add(s, "simulate", "--n", count_list, [64], "frame counts (a sweep if several)")
    _add(s, "simulate", "--sigma", sigma_list, None, "read noise (several values run a sweep)")
    _add(s, "simulate", "--q", q_value, DEFAULT_Q, "comparator threshold")
    _add(s, "simulate", "--fwc", positive, 4000.0, "CIS full-well capacity")
    _add(s, "simulate", "--adc-bits", adc_bits, None, "CIS ADC depth")
    _add(s, "simulate", "--no-divide", switch=True, help="each frame sees the full exposure")
    _add(s, "simulate", "--seed", seed_value, 0, "RNG seed")
    _add(s, "simulate", "--threads", count, None, "worker threads")

    s = subs.add_parser("validate", help="run the acceptance suite")
    _common(s, "validate")
    _add(s, "validate", "--quick", switch=True, help="reduced trial counts")
    _add(s, "validate", "--perturb-omega", fraction_value, 0.0, "subtract this from every omega")
    _add(s, "validate", "--only", count_list, None, "comma list of check numbers")
    return p


# presets fill options the user did not set
PRESETS = {
    ("snr-curve", 4): dict(sensor="qis", n=[256], sigma=[0.0, 0.1, 0.2]),
    ("snr-curve", 5): dict(sensor="both", n=[1, 16, 256, 4096], sigma=[0.1], fwc=[4096.0]),
    ("snr-curve", 6): dict(sensor="both", n=[1, 16, 256, 4096], sigma=[0.19], fwc=[4096.0]),
    ("simulate", 1): dict(sensor="qis", n=[64], sigma=[0.0], theta_max=5.0),
    ("simulate", 2): dict(sensor="cis", n=[1], sigma=[2.0, 0.15, 0.0], theta_max=5.0,
                          fwc=1e9),
    ("simulate", 7): dict(sensor="qis", n=[16], sigma=[0.19], theta_max=16.0, fwc=4000.0,
                          adc_bits=8),
    ("simulate", 8): dict(sensor="qis", n=list(validation.FIG8_FRAMES),
                          sigma=[validation.FIG8_SIGMA], theta_max=validation.FIG8_THETA_MAX),
}


def _load_config(path: Optional[Path], cmd: str) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    sections = {c.replace("-", "_"): c for c in _REGISTRY}
    known = set().union(*(_REGISTRY[c] for c in _REGISTRY))
    out = {}
    for key, value in data.items():
        k = key.replace("-", "_")
        if k in sections:  # per-subcommand section
            if not isinstance(value, dict):
                raise UsageError(f"config section {key!r} must be an object")
            if sections[k] == cmd:
                section = {kk.replace("-", "_"): vv for kk, vv in value.items()}
                for kk in section:
                    if kk not in _REGISTRY[cmd]:
                        raise UsageError(f"config: {cmd} has no option {kk!r}")
                out.update(section)
        elif k not in known:
            raise UsageError(f"config: unknown option {key!r}")
        elif k in _REGISTRY[cmd]:
            out.setdefault(k, value)
    return out


def _resolve(args: argparse.Namespace, cmd: str) -> argparse.Namespace:
    cfg = _load_config(args.config, cmd)
    opts = _REGISTRY[cmd]
    figure = getattr(args, "figure", None)
    if figure is None and "figure" in cfg:
        figure = opts["figure"].convert(cfg["figure"])
    preset = PRESETS.get((cmd, figure), {})
    for dest, opt in opts.items():
        if getattr(args, dest) is not None:
            continue
        if dest in cfg:
            raw = cfg[dest]
            if opt.flag:
                if not isinstance(raw, bool):
                    raise UsageError(f"config: {dest} must be true or false")
                value = raw
            else:
                try:
                    if isinstance(raw, list) and opt.convert in (sigma_list, positive_list,
                                                                  count_list, tau_list):
                        value = opt.convert(",".join(str(v) for v in raw))
                    else:
                        value = opt.convert(raw)
                except argparse.ArgumentTypeError as exc:
                    raise UsageError(f"config: {dest}: {exc}")
            if opt.choices is not None and value not in opt.choices:
                raise UsageError(f"config: {dest} must be one of {list(opt.choices)}")
        elif dest in preset:
            value = preset[dest]
        else:
            value = opt.default
        setattr(args, dest, value)
    if hasattr(args, "figure"):
        args.figure = figure
    return args


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class Result:
    name: str
    tables: dict[str, Table] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)
    exit_code: int = EXIT_OK


def _json_value(v):
    if v is UNBOUNDED:
        return "unbounded"
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def _csv_value(v):
    if v is None:
        return ""
    if v is UNBOUNDED:
        return "unbounded"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _provenance(argv: list[str], seed) -> dict:
    return {"tool": "qisim", "version": __version__, "argv": list(argv), "seed": seed}


def _csv_text(table: Table, prov: dict, summary: dict) -> str:
    buf = _io.StringIO()
    buf.write(f"# qisim {prov['version']}\n")
    buf.write(f"# argv: {' '.join(prov['argv'])}\n")
    buf.write(f"# seed: {prov['seed'] if prov['seed'] is not None else 'none'}\n")
    for k, v in summary.items():
        buf.write(f"# {k}: {json.dumps(_json_value(v))}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_csv_value(v) for v in row])
    return buf.getvalue()


def _output_dir(args) -> Optional[Path]:
    if args.out is not None:
        return args.out
    env = os.environ.get(OUTPUT_ENV)
    return Path(env) if env else None


def emit(result: Result, args, argv: list[str], seed=None, stdout=None) -> None:
    stdout = stdout or sys.stdout
    prov = _provenance(argv, seed)
    out = _output_dir(args)
    if args.format == "json":
        doc = {"provenance": prov, "summary": _json_value(result.summary),
               "tables": {k: {"columns": t.columns, "rows": _json_value(t.rows)}
                          for k, t in result.tables.items()}}
        if result.files:
            doc["files"] = [str(f) for f in result.files]
        text = json.dumps(doc, indent=1, allow_nan=False) + "\n"
        if out is None:
            stdout.write(text)
            return
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{result.name}.json"
        path.write_text(text)
        result.files.append(path)
    else:
        if out is None:
            for i, table in enumerate(result.tables.values()):
                if i:
                    stdout.write("\n")
                stdout.write(_csv_text(table, prov, result.summary if i == 0 else {}))
            if not result.tables:
                for k, v in result.summary.items():
                    stdout.write(f"{k}: {json.dumps(_json_value(v))}\n")
            return
        out.mkdir(parents=True, exist_ok=True)
        for key, table in result.tables.items():
            name = result.name if key == "main" else f"{result.name}_{key}"
            path = out / f"{name}.csv"
            path.write_text(_csv_text(table, prov, result.summary))
            result.files.append(path)
    for k, v in result.summary.items():
        stdout.write(f"{k}: {json.dumps(_json_value(v))}\n")
    for f in result.files:
        stdout.write(f"wrote {f}\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _db(x: float) -> float:
    return model.to_db(x) if x > 0 else -math.inf


def _thetas(sweep) -> np.ndarray:
    lo, hi, n = sweep
    return np.logspace(math.log10(lo), math.log10(hi), n)


def cmd_snr_curve(args) -> Result:
    thetas = _thetas(args.theta_log)
    sigmas = args.sigma
    res = Result("snr_curve")
    t = Table(["sensor", "sigma", "n_frames", "fwc", "theta", "snr", "snr_db"])
    if args.sensor in ("qis", "both"):
        if args.approx and args.q != 0.5:
            raise UsageError("--approx needs --q 0.5")
        if args.approx and any(s > model.APPROX_SIGMA_LIMIT for s in sigmas or []):
            raise UsageError(f"--approx is limited to sigma <= {model.APPROX_SIGMA_LIMIT}")
        for sigma in sigmas if sigmas is not None else [DEFAULT_SIGMA_QIS]:
            for n in args.n:
                cfg = QisConfig.make(n, sigma, args.q)
                curve = model.snr_curve(model.ExposureGrid(thetas), cfg, approx=bool(args.approx))
                for th, s in zip(thetas, curve.snr_values):
                    t.rows.append(["qis", sigma, n, None, th, s, _db(s)])
    if args.sensor in ("cis", "both"):
        cis_sigmas = args.cis_sigma
        if args.sensor == "cis" and sigmas is not None:
            cis_sigmas = sigmas
        for sigma in cis_sigmas:
            for fwc in args.fwc:
                cfg = CisConfig(sigma, fwc, args.adc_bits)
                curve = model.snr_curve(model.ExposureGrid(thetas), cfg)
                for th, s in zip(thetas, curve.snr_values):
                    t.rows.append(["cis", sigma, None, fwc, th, s, _db(s)])
    res.tables["main"] = t
    res.summary = {"series": len(t.rows) // len(thetas), "points_per_series": len(thetas),
                   "snr_model": "closed form" if args.approx else "series"}
    return res


def cmd_snr_vs_n(args) -> Result:
    n_values = args.n_range
    if n_values is None:
        n_values = int_log_range("1:100000:400")
    fn = model.snr_qis_approx if args.approx else model.snr_qis
    if args.approx and args.q != 0.5:
        raise UsageError("--approx needs --q 0.5")
    res = Result("snr_vs_n")
    curve = Table(["theta", "n_frames", "snr", "snr_db"])
    peaks = Table(["theta", "sigma", "sweep_peak_n", "sweep_peak_snr_db", "predicted_n",
                   "relative_gap", "check"])
    for theta in args.theta:
        snrs = [fn(theta, QisConfig.make(n, args.sigma, args.q)) for n in n_values]
        for n, s in zip(n_values, snrs):
            curve.rows.append([theta, n, s, _db(s)])
        i = int(np.argmax(snrs))
        predicted = design.optimal_frames(theta, args.sigma)
        if predicted is UNBOUNDED:
            ok = i == len(n_values) - 1 or snrs[-1] >= max(snrs) * (1 - 1e-12)
            peaks.rows.append([theta, args.sigma, n_values[i], _db(snrs[i]), UNBOUNDED, None,
                               "monotone" if ok else "not monotone"])
            continue
        gap = n_values[i] / predicted - 1.0
        # the sweep grid is coarse, so agreement means the nearest grid points bracket N*
        lo_n = n_values[max(i - 1, 0)]
        hi_n = n_values[min(i + 1, len(n_values) - 1)]
        if predicted > n_values[-1] or predicted < n_values[0]:
            check = "outside sweep"
        else:
            check = "ok" if lo_n <= predicted <= hi_n else "mismatch"
        peaks.rows.append([theta, args.sigma, n_values[i], _db(snrs[i]), predicted, gap, check])
    res.tables["main"] = curve
    res.tables["peaks"] = peaks
    res.summary = {"sigma": args.sigma, "checks": [r[-1] for r in peaks.rows]}
    return res


TABLE1_SIGMAS = (0.0, 0.1, 0.15, 0.2, 0.25, 0.3)


def cmd_optimal(args) -> Result:
    res = Result("optimal")
    show_table = args.table1 or (args.theta is None and args.n is None)
    if show_table:
        t = Table(["sigma", "delta", "omega", "frame_constant"])
        for s in TABLE1_SIGMAS:
            t.rows.append([s, model.read_noise_delta(s), model.omega_of_sigma(s),
                           design.frame_constant(s)])
        res.tables["main" if not res.tables else "table1"] = t
    if args.theta is not None:
        t = Table(["theta", "sigma", "n_star", "n_floor", "n_ceil", "best_n", "snr_best_db"])
        for sigma in args.sigma:
            for theta in args.theta:
                n_star = design.optimal_frames(theta, sigma)
                if n_star is UNBOUNDED:
                    t.rows.append([theta, sigma, UNBOUNDED, None, None, None, None])
                    continue
                fc = design.frame_choice(theta, sigma)
                t.rows.append([theta, sigma, n_star, fc.n_floor, fc.n_ceil, fc.best,
                               _db(max(fc.snr_floor, fc.snr_ceil))])
        res.tables["main" if not res.tables else "frames"] = t
        if len(t.rows) == 1:
            res.summary["n_star"] = t.rows[0][2]
            res.summary["n_star_rounded"] = (t.rows[0][2] if t.rows[0][2] is UNBOUNDED
                                             else round(t.rows[0][2]))
    if args.n is not None:
        t = Table(["n_frames", "sigma", "theta_star", "theta_star_per_frame", "snr_peak_db"])
        for sigma in args.sigma:
            if sigma > model.APPROX_SIGMA_LIMIT:
                raise UsageError(f"optimal exposure needs sigma <= {model.APPROX_SIGMA_LIMIT}")
            for n in args.n:
                th = design.optimal_exposure(n, sigma)
                s = model.snr_qis_approx(th, QisConfig.make(n, sigma))
                t.rows.append([n, sigma, th, th / n, _db(s)])
        res.tables["main" if not res.tables else "exposure"] = t
    return res


def cmd_dr(args) -> Result:
    res = Result("dr")
    if args.cis:
        sigma = args.sigma if args.sigma is not None else DEFAULT_SIGMA_CIS
        if sigma <= 0:
            raise UsageError("CIS dynamic range needs --sigma > 0")
        if args.fwc <= sigma:
            raise UsageError(f"--fwc {args.fwc} must exceed the read noise {sigma}")
        r = design.dynamic_range_cis(CisConfig(sigma, args.fwc))
        res.tables["main"] = Table(["sensor", "sigma", "fwc", "theta_minus", "theta_minus_exact",
                                    "theta_plus", "dr_db"],
                                   [["cis", sigma, args.fwc, r.theta_minus, r.theta_minus_exact,
                                     r.theta_plus, r.dr_db]])
        res.summary = {"dr_db": r.dr_db}
        return res
    sigma = args.sigma if args.sigma is not None else DEFAULT_SIGMA_QIS
    if args.sweep_n is not None:
        t = Table(["n_frames", "qis_theta_minus", "qis_theta_plus", "qis_dr_db", "cis_fwc",
                   "cis_dr_db"])
        for n in args.sweep_n:
            try:
                r = design.dynamic_range_qis(n, sigma)
                q_row = [r.theta_minus, r.theta_plus, r.dr_db]
            except NoCrossingError:
                q_row = [None, None, None]
            cis_db = (design.dynamic_range_cis(CisConfig(args.cis_sigma, float(n))).dr_db
                      if args.cis_sigma > 0 and n > args.cis_sigma else None)
            t.rows.append([n] + q_row + [float(n), cis_db])
        res.tables["main"] = t
        res.summary = {"sigma": sigma, "cis_sigma": args.cis_sigma, "points": len(t.rows)}
        return res
    t = Table(["sensor", "sigma", "n_frames", "theta_minus", "theta_plus", "dr_db"])
    for n in args.n:
        r = design.dynamic_range_qis(n, sigma)
        t.rows.append(["qis", sigma, n, r.theta_minus, r.theta_plus, r.dr_db])
    res.tables["main"] = t
    if len(t.rows) == 1:
        res.summary = {"dr_db": t.rows[0][-1]}
    return res


def cmd_bracket(args) -> Result:
    if args.sigma > model.APPROX_SIGMA_LIMIT:
        raise UsageError(f"bracket analysis needs sigma <= {model.APPROX_SIGMA_LIMIT}")
    sched = BracketSchedule(tuple(args.taus), args.n)
    k = len(sched.taus)
    rep = design.dynamic_range_bracket(sched, args.sigma)
    kn = design.dynamic_range_qis(k * args.n, args.sigma)
    cis = design.dynamic_range_cis(CisConfig(args.cis_sigma, float(k * args.n)))
    total_tau = float(sum(sched.taus))

    thetas = _thetas(args.theta_log)
    cfg = QisConfig.make(args.n, args.sigma)
    cfg_kn = QisConfig.make(k * args.n, args.sigma)
    cis_cfg = CisConfig(args.cis_sigma, float(k * args.n))
    names = [f"bracket_tau_{str(t).replace('/', '_')}_db" for t in sched.taus]
    curves = Table(["theta"] + names + ["envelope_db", "qis_kn_db", "cis_1_db"])
    env = design.bracket_envelope(thetas, sched, args.sigma)
    for th, e in zip(thetas, env):
        per = [_db(design.bracket_snr(th, tau, cfg)) for tau in sched.taus]
        exposure = args.shift * total_tau * th
        curves.rows.append([th] + per + [_db(e), _db(model.snr_qis_approx(exposure, cfg_kn)),
                                         _db(model.snr_cis(exposure, cis_cfg))])
    summary = {
        "taus": [str(t) for t in sched.taus],
        "frames_per_bracket": args.n,
        "sigma": args.sigma,
        "sensor_term_db": rep.sensor_term_db,
        "bracket_term_db": rep.bracket_term_db,
        "dr_db": rep.dr_db,
        "theta_minus": rep.theta_minus,
        "theta_plus": rep.theta_plus,
        "qis_kn_dr_db": kn.dr_db,
        "cis_1_dr_db": cis.dr_db,
        "linear_gain_over_cis_1": 10.0 ** ((rep.dr_db - cis.dr_db) / 20.0),
        "comparison_shift": args.shift,
    }
    try:
        lo, hi = design.envelope_crossings(sched, args.sigma)
        summary["envelope_theta_minus"] = lo
        summary["envelope_theta_plus"] = hi
        summary["envelope_dr_db"] = 20.0 * math.log10(hi / lo)
    except (NoCrossingError, SearchRangeError) as exc:
        summary["envelope_note"] = str(exc)
    res = Result("bracket", {"main": curves}, summary)
    return res


def _recon_pgm(values: np.ndarray, theta_max: float) -> np.ndarray:
    scaled = np.clip(values / theta_max, 0.0, 1.0) * 255.0
    return np.round(scaled).astype(np.uint8)


def cmd_simulate(args) -> Result:
    out = _output_dir(args) or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    if args.image is not None:
        scene = sim.ExposureMap.from_pgm(args.image, args.theta_max)
    else:
        scene = sim.ExposureMap.test_pattern(args.size, args.size, args.theta_max)
    sigmas = args.sigma if args.sigma is not None else (
        [DEFAULT_SIGMA_QIS] if args.sensor == "qis" else [DEFAULT_SIGMA_CIS])
    tag = f"fig{args.figure}" if args.figure else "sim"
    res = Result(f"simulate_{tag}")
    io.write_pgm(out / f"{tag}_truth.pgm", _recon_pgm(scene.thetas, args.theta_max))
    res.files.append(out / f"{tag}_truth.pgm")
    t = Table(["sensor", "sigma", "n_frames", "mse", "psnr_db", "mse_all", "psnr_all_db",
               "saturated_fraction"])

    if args.sensor == "cis":
        for sigma in sigmas:
            cfg = CisConfig(sigma, args.fwc, args.adc_bits)
            img = sim.capture_cis(scene, cfg, args.seed, num_threads=args.threads)
            est = sim.EstimateMap(img, img >= args.fwc)
            m = sim.image_metrics(scene, est)
            stem = f"{tag}_cis_sigma{sigma:g}"
            io.write_pgm(out / f"{stem}.pgm", _recon_pgm(img, args.theta_max))
            io.write_qmap(out / f"{stem}.qmap", img)
            res.files += [out / f"{stem}.pgm", out / f"{stem}.qmap"]
            t.rows.append(["cis", sigma, 1, m["mse"], m["psnr"], m["mse_all"], m["psnr_all"],
                           m["saturated_fraction"]])
    else:
        for sigma in sigmas:
            for n in args.n:
                cfg = QisConfig.make(n, sigma, args.q)
                stack = sim.capture_qis(scene, cfg, args.seed, divide_exposure=not args.no_divide,
                                        num_threads=args.threads)
                est = sim.reconstruct_mle(stack)
                m = sim.image_metrics(scene, est)
                stem = f"{tag}_qis_sigma{sigma:g}_n{n}"
                stack.save(out / f"{stem}.qbf")
                io.write_pgm(out / f"{stem}_frame0.pgm", stack.frame(0).astype(np.uint8) * 255)
                io.write_pgm(out / f"{stem}.pgm", _recon_pgm(est.theta_hats, args.theta_max))
                io.write_qmap(out / f"{stem}.qmap", est.theta_hats)
                res.files += [out / f"{stem}.qbf", out / f"{stem}_frame0.pgm",
                              out / f"{stem}.pgm", out / f"{stem}.qmap"]
                t.rows.append(["qis", sigma, n, m["mse"], m["psnr"], m["mse_all"], m["psnr_all"],
                               m["saturated_fraction"]])
        if args.figure == 7:
            cfg = CisConfig(DEFAULT_SIGMA_CIS, args.fwc, args.adc_bits)
            img = sim.capture_cis(scene, cfg, args.seed, num_threads=args.threads)
            m = sim.image_metrics(scene, sim.EstimateMap(img, img >= args.fwc))
            stem = f"{tag}_cis_sigma{DEFAULT_SIGMA_CIS:g}"
            io.write_pgm(out / f"{stem}.pgm", _recon_pgm(img, args.theta_max))
            io.write_qmap(out / f"{stem}.qmap", img)
            res.files += [out / f"{stem}.pgm", out / f"{stem}.qmap"]
            t.rows.append(["cis", DEFAULT_SIGMA_CIS, 1, m["mse"], m["psnr"], m["mse_all"],
                           m["psnr_all"], m["saturated_fraction"]])
    res.tables["main"] = t
    res.summary = {"width": scene.width, "height": scene.height, "theta_max": args.theta_max,
                   "scene": str(args.image) if args.image else "synthetic"}
    if len(t.rows) > 1 and args.sensor == "qis" and len(sigmas) == 1 and len(args.n) > 1:
        best = max(t.rows[:len(args.n)], key=lambda r: r[6])
        res.summary["best_n_by_psnr_all"] = best[2]
    # metrics always land next to the images
    metrics_path = out / f"{res.name}_metrics.json"
    metrics_path.write_text(json.dumps({"columns": t.columns, "rows": _json_value(t.rows)},
                                       indent=1) + "\n")
    res.files.append(metrics_path)
    args.out = out
    return res


def cmd_validate(args) -> Result:
    results = validation.run_all(quick=bool(args.quick), only=args.only,
                                 omega_eps=args.perturb_omega)
    # keep piped CSV/JSON clean when the data itself goes to stdout
    stream = sys.stdout if _output_dir(args) is not None else sys.stderr
    for r in results:
        print(r.line(), file=stream)
    t = Table(["number", "name", "passed", "measured", "expected", "tolerance", "seconds"],
              [[r.number, r.name, r.passed, r.measured, r.expected, r.tolerance, r.seconds]
               for r in results])
    failed = [r.number for r in results if not r.passed]
    res = Result("validate", {"main": t},
                 {"passed": len(results) - len(failed), "failed": failed,
                  "quick": bool(args.quick), "perturb_omega": args.perturb_omega})
    res.exit_code = EXIT_VALIDATION if failed else EXIT_OK
    return res


COMMANDS = {
    "snr-curve": cmd_snr_curve,
    "snr-vs-n": cmd_snr_vs_n,
    "optimal": cmd_optimal,
    "dr": cmd_dr,
    "bracket": cmd_bracket,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        args = _resolve(args, args.command)
        result = COMMANDS[args.command](args)
        emit(result, args, ["qisim"] + argv, getattr(args, "seed", None))
        return result.exit_code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.FormatError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, NoCrossingError, SearchRangeError, sim.SaturationError,
            OverflowError, ZeroDivisionError) as exc:
        print(f"numeric domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
