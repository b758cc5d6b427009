"""Command-line front end.

A run is described by a flat configuration document, either JSON or
``key = value`` lines (``#`` starts a comment, lists are comma
separated). Any key can be overridden from the environment as
``MULTIPULSE_<KEY>``, and ``--out``/``--format``/``--threads`` override
both. Example::

    command = decay
    model = exponential
    tau_c = 0.02
    tau_s = 0.005, 0.1, 0.5
    t_min = 0
    t_max = 1
    t_step = 0.01

Commands
--------
spectrum      ``J(omega)`` on a frequency grid, with its local maxima.
decay         ``ln I(t)`` for one or more pulse intervals (or an irregular train).
sweep         fitted intensity decay time against the pulse interval.
oracle-check  closed coefficient series against the toggling-sign integral.
asymptote     ``S(t)/t`` against the long-time rate ``J(0)/2``.

Exit status is 0 on success, 2 for an invalid configuration and 3 for a
numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, fields
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .analysis import find_peaks, sweep_tau_s, verify_asymptote
from .cumulant import MODES, CumulantEngine
from .errors import ConfigError, DomainError, FitError, QuadratureError
from .models import (
    CaldeiraLeggettDensity,
    ExponentialCorrelation,
    GaussianCouplingDensity,
    LinearBosonModel,
    QuadraticBosonModel,
    SpectrumGrid,
    ThermalConfig,
)
from .pulsecontrol import (
    IrregularTrain,
    PulseTrain,
    filter_oracle,
    intensity_curve,
    oracle_curve,
)
from .quadrature import QuadratureConfig

ENV_PREFIX = "MULTIPULSE_"
COMMANDS = ("spectrum", "decay", "sweep", "oracle-check", "asymptote")
MODELS = ("exponential", "quadratic", "linear")
FORMATS = ("csv", "json")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


@dataclass(frozen=True)
class RunConfig:
    """Validated run description. Unused keys stay ``None``."""

    command: str
    model: str
    units: Optional[str] = None
    # exponential correlation
    delta: Optional[float] = None
    tau_c: Optional[float] = None
    # boson baths
    beta_p: Optional[float] = None
    gamma_p: Optional[float] = None
    s_q: Optional[float] = None
    alpha: Optional[float] = None
    n: Optional[int] = None
    omega_c: Optional[float] = None
    # pulse train
    n_pulses: Optional[int] = None
    tau_s: Optional[Tuple[float, ...]] = None
    pulse_times: Optional[Tuple[float, ...]] = None
    # grids
    t_min: Optional[float] = None
    t_max: Optional[float] = None
    t_step: Optional[float] = None
    omega_min: Optional[float] = None
    omega_max: Optional[float] = None
    omega_step: Optional[float] = None
    tau_s_min: Optional[float] = None
    tau_s_max: Optional[float] = None
    tau_s_step: Optional[float] = None
    fit_start: Optional[float] = None
    fit_end: Optional[float] = None
    t_checkpoints: Optional[Tuple[float, ...]] = None
    # numerics
    cumulant_mode: Optional[str] = None
    panel_count: Optional[int] = None
    refinement_levels: Optional[int] = None
    rel_tol: Optional[float] = None
    freq_cutoff: Optional[float] = None
    # output
    out: Optional[str] = None
    format: str = "csv"
    threads: Optional[int] = None

    def __post_init__(self):
        _validate(self)

    def to_dict(self) -> dict:
        """Set keys only, lists as JSON arrays."""
        d = {}
        for k, v in asdict(self).items():
            if v is None:
                continue
            d[k] = list(v) if isinstance(v, tuple) else v
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_keyvalue(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, list):
                v = ", ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def echo(self) -> List[str]:
        """One ``key=value`` line per set key, for output headers."""
        return [f"{k}={json.dumps(v)}" for k, v in self.to_dict().items()]


_KIND = {}
for _f in fields(RunConfig):
    _t = str(_f.type)
    _KIND[_f.name] = "list" if "Tuple" in _t else "int" if "int" in _t else "float" if "float" in _t else "str"

REQUIRED = ("command", "model")

_MODEL_KEYS = {
    "exponential": ("tau_c",),
    "quadratic": ("gamma_p", "s_q"),
    "linear": ("alpha",),
}
_COMMAND_KEYS = {
    "spectrum": ("omega_min", "omega_max", "omega_step"),
    "decay": ("t_min", "t_max", "t_step"),
    "sweep": ("tau_s_min", "tau_s_max", "tau_s_step", "fit_start", "fit_end"),
    "oracle-check": ("n_pulses", "tau_s", "t_min", "t_max", "t_step"),
    "asymptote": ("t_checkpoints",),
}


def _missing(cfg: RunConfig, keys) -> List[str]:
    return [k for k in keys if getattr(cfg, k) is None]


def _positive(cfg, *keys):
    for k in keys:
        v = getattr(cfg, k)
        if v is None:
            continue
        vals = v if isinstance(v, tuple) else (v,)
        if not all(x > 0 and math.isfinite(x) for x in vals):
            raise ConfigError(f"{k}: must be positive, got {v}")


def _validate(cfg: RunConfig):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command: expected one of {COMMANDS}, got {cfg.command!r}")
    if cfg.model not in MODELS:
        raise ConfigError(f"model: expected one of {MODELS}, got {cfg.model!r}")
    if cfg.format not in FORMATS:
        raise ConfigError(f"format: expected one of {FORMATS}, got {cfg.format!r}")
    default_units = "T2" if cfg.model == "exponential" else "omega_p"
    if cfg.units is not None and cfg.units not in ("T2", "omega_p"):
        raise ConfigError(f"units: expected 'T2' or 'omega_p', got {cfg.units!r}")
    if cfg.model != "exponential" and (cfg.units or default_units) != "omega_p":
        raise ConfigError("units: boson models are normalized to omega_p")
    if cfg.model == "exponential" and cfg.units == "omega_p" and cfg.delta is None:
        raise ConfigError("delta: required for the exponential model outside T2 units")

    missing = _missing(cfg, _MODEL_KEYS[cfg.model] + _COMMAND_KEYS[cfg.command])
    if cfg.command == "decay" and cfg.tau_s is None and cfg.pulse_times is None:
        missing.append("tau_s")
    if missing:
        raise ConfigError(f"missing required key(s) for {cfg.command}/{cfg.model}: {', '.join(missing)}")

    _positive(cfg, "delta", "tau_c", "beta_p", "gamma_p", "s_q", "alpha", "omega_c",
              "tau_s", "pulse_times", "t_step", "omega_step", "tau_s_min", "tau_s_max",
              "tau_s_step", "t_checkpoints", "rel_tol", "freq_cutoff")
    if cfg.n is not None and cfg.n < 1:
        raise ConfigError(f"n: must be >= 1, got {cfg.n}")
    if cfg.n_pulses is not None and cfg.n_pulses < 0:
        raise ConfigError(f"n_pulses: must be >= 0, got {cfg.n_pulses}")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError(f"threads: must be >= 1, got {cfg.threads}")
    if cfg.tau_s is not None and cfg.pulse_times is not None:
        raise ConfigError("pulse_times: cannot be combined with tau_s")
    if cfg.pulse_times is not None:
        try:
            IrregularTrain(cfg.pulse_times)
        except ValueError as exc:
            raise ConfigError(f"pulse_times: {exc}") from None
    if cfg.command == "oracle-check" and len(cfg.tau_s) != 1:
        raise ConfigError("tau_s: oracle-check takes a single value")
    if cfg.cumulant_mode is not None and cfg.cumulant_mode not in MODES:
        raise ConfigError(f"cumulant_mode: expected one of {MODES}, got {cfg.cumulant_mode!r}")
    for prefix in ("t", "omega", "tau_s"):
        lo, hi = getattr(cfg, f"{prefix}_min"), getattr(cfg, f"{prefix}_max")
        if lo is not None and hi is not None and hi < lo:
            raise ConfigError(f"{prefix}_max: must be >= {prefix}_min")
    if cfg.t_min is not None and cfg.t_min < 0:
        raise ConfigError(f"t_min: must be >= 0, got {cfg.t_min}")
    if cfg.fit_start is not None and cfg.fit_end is not None and not 0 <= cfg.fit_start < cfg.fit_end:
        raise ConfigError("fit_end: need 0 <= fit_start < fit_end")
    try:
        _quad(cfg)
        _model(cfg)
    except (ValueError, DomainError) as exc:
        raise ConfigError(f"invalid parameters: {exc}") from None


# -- parsing -------------------------------------------------------------------


def _coerce(key: str, value):
    if key not in _KIND:
        raise ConfigError(f"{key}: unknown key")
    kind = _KIND[key]
    try:
        if kind == "list":
            if isinstance(value, str):
                items = [s for s in value.replace(",", " ").split()]
            elif isinstance(value, (list, tuple)):
                items = list(value)
            else:
                items = [value]
            if not items:
                raise ValueError("empty list")
            return tuple(_number(x, float) for x in items)
        if kind == "int":
            return _number(value, int)
        if kind == "float":
            return _number(value, float)
        if not isinstance(value, str):
            raise ValueError(f"expected a string, got {type(value).__name__}")
        return value.strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _number(x, kind):
    if isinstance(x, bool):
        raise ValueError(f"expected {kind.__name__}, got bool")
    if isinstance(x, str):
        x = x.strip()
        if kind is int:
            return int(x)
        return float(x)
    if kind is int:
        if isinstance(x, float) or not isinstance(x, int):
            raise ValueError(f"expected int, got {x!r}")
        return x
    if not isinstance(x, (int, float)):
        raise ValueError(f"expected a number, got {type(x).__name__}")
    return float(x)


def _read_pairs(text: str) -> dict:
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("JSON config must be an object")
        return doc
    doc = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in doc:
            raise ConfigError(f"{key}: given twice")
        doc[key] = value
    return doc


def build_config(pairs: dict) -> RunConfig:
    """RunConfig from raw key/value pairs (strings or JSON values)."""
    values = {k: _coerce(k, v) for k, v in pairs.items()}
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return RunConfig(**values)


def parse_config(text: str) -> RunConfig:
    """Strict parse of a JSON object or ``key = value`` document.

    Raises
    ------
    ConfigError
        On unknown keys, type mismatches, missing or invalid values. The
        message starts with the offending key.
    """
    return build_config(_read_pairs(text))


def env_overrides(environ=None) -> dict:
    """Config keys set as ``MULTIPULSE_<KEY>`` in the environment."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            out[name[len(ENV_PREFIX):].lower()] = value
    return out


# -- model construction ----------------------------------------------------------


def _quad(cfg: RunConfig) -> QuadratureConfig:
    base = QuadratureConfig()
    return QuadratureConfig(
        panel_count=cfg.panel_count if cfg.panel_count is not None else base.panel_count,
        refinement_levels=(
            cfg.refinement_levels if cfg.refinement_levels is not None else base.refinement_levels
        ),
        rel_tol=cfg.rel_tol if cfg.rel_tol is not None else base.rel_tol,
        freq_cutoff=cfg.freq_cutoff,
        order=base.order,
    )


def _model(cfg: RunConfig):
    beta = cfg.beta_p if cfg.beta_p is not None else 1.0
    if cfg.model == "exponential":
        if cfg.delta is None:
            return ExponentialCorrelation.from_t2(cfg.tau_c)
        return ExponentialCorrelation(cfg.delta, cfg.tau_c)
    if cfg.model == "quadratic":
        coupling = GaussianCouplingDensity.from_sq(cfg.s_q, cfg.gamma_p)
        return QuadraticBosonModel(coupling, ThermalConfig(beta), _quad(cfg))
    density = CaldeiraLeggettDensity(
        cfg.alpha, cfg.n if cfg.n is not None else 1, cfg.omega_c if cfg.omega_c is not None else 1.0
    )
    return LinearBosonModel(density, ThermalConfig(beta))


def _engine(cfg: RunConfig, model) -> CumulantEngine:
    quad = _quad(cfg)
    if cfg.cumulant_mode:
        try:
            return CumulantEngine(cfg.cumulant_mode, model, quad)
        except ValueError as exc:
            raise ConfigError(f"cumulant_mode: {exc}") from None
    return CumulantEngine.for_model(model, quad)


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive grid ``lo, lo + step, ..., hi`` without drift."""
    n = int(math.floor((hi - lo) / step * (1 + 1e-12) + 1e-9)) + 1
    return lo + step * np.arange(n)


def _time_scale(model) -> float:
    if isinstance(model, ExponentialCorrelation):
        return model.tau_c
    return math.pi / model.freq_support


# -- commands --------------------------------------------------------------------


@dataclass
class Table:
    columns: List[str]
    rows: List[list]
    summary: str
    scalars: dict


def _cmd_spectrum(cfg: RunConfig) -> Table:
    model = _model(cfg)
    omegas = _grid(cfg.omega_min, cfg.omega_max, cfg.omega_step)
    values = np.asarray(model.spectrum(omegas), dtype=float)
    if not np.all(np.isfinite(values)):
        raise QuadratureError("non-finite spectrum values")
    peaks = find_peaks(SpectrumGrid(omegas, values)) if omegas.size >= 3 else []
    j0 = float(model.spectrum(0.0))
    rows = [[w, v] for w, v in zip(omegas, values)]
    peak_txt = ", ".join(f"{p:.4g}" for p in peaks) or "none"
    return Table(
        ["omega", "J"],
        rows,
        f"spectrum: {len(rows)} rows, J(0) = {j0:.6g}, peaks at {peak_txt}",
        {"J0": j0, "peaks": peaks},
    )


def _irregular_curve(times, model, t_grid, quad):
    pulses = np.asarray(times)
    out = []
    for t in t_grid:
        seen = pulses[pulses < t]
        out.append(filter_oracle(t, seen, model.correlation, quad, _time_scale(model)) if t > 0 else 0.0)
    return np.asarray(out)


def _cmd_decay(cfg: RunConfig) -> Table:
    model = _model(cfg)
    t_grid = _grid(cfg.t_min, cfg.t_max, cfg.t_step)
    rows = []
    if cfg.pulse_times is not None:
        if not hasattr(model, "correlation"):
            raise ConfigError("pulse_times: irregular trains need a model with a correlation function")
        ln_i = _irregular_curve(cfg.pulse_times, model, t_grid, _quad(cfg))
        rows = [[t, y, math.exp(y)] for t, y in zip(t_grid, ln_i)]
        final = {"irregular": float(ln_i[-1])}
        columns = ["t", "ln_I", "I"]
    else:
        engine = _engine(cfg, model)
        final = {}
        for tau_s in cfg.tau_s:
            applied = int(math.floor(cfg.t_max / tau_s * (1 + 1e-14)))
            n = applied if cfg.n_pulses is None else min(cfg.n_pulses, applied)
            curve = intensity_curve(PulseTrain(n, tau_s), engine, t_grid)
            rows.extend([tau_s, t, y, i] for t, y, i in curve.rows())
            final[tau_s] = float(curve.log_intensity[-1])
        columns = ["tau_s", "t", "ln_I", "I"]
    end = ", ".join(f"{k if isinstance(k, str) else f'tau_s={k:g}'}: {v:.6g}" for k, v in final.items())
    return Table(
        columns,
        rows,
        f"decay: {len(rows)} rows, ln I(t={t_grid[-1]:g}) {end}",
        {"final_log_intensity": {str(k): v for k, v in final.items()}},
    )


def _cmd_sweep(cfg: RunConfig) -> Table:
    model = _model(cfg)
    engine = _engine(cfg, model)
    grid = _grid(cfg.tau_s_min, cfg.tau_s_max, cfg.tau_s_step)
    result = sweep_tau_s(grid, engine, (cfg.fit_start, cfg.fit_end), model=model, workers=cfg.threads)
    rows = [[r.tau_s, r.tau_i, r.t2e_formula, r.residual, r.n_pulses, r.error] for r in result.rows]
    finite = [r for r in result.rows if math.isfinite(r.tau_i)]
    if finite:
        best = max(finite, key=lambda r: r.tau_i)
        key = f"max finite tau_I = {best.tau_i:.6g} at tau_s = {best.tau_s:g}"
    else:
        key = "no finite tau_I"
    return Table(
        ["tau_s", "tau_I", "t2e_formula", "residual", "n_pulses", "error"],
        rows,
        f"sweep: {len(rows)} rows, {key}",
        {"tau_i": [r.tau_i for r in result.rows]},
    )


def _cmd_oracle(cfg: RunConfig) -> Table:
    model = _model(cfg)
    if not hasattr(model, "correlation"):
        raise ConfigError("model: oracle-check needs a model with a correlation function")
    engine = _engine(cfg, model)
    tau_s = cfg.tau_s[0]
    train = PulseTrain(cfg.n_pulses, tau_s)
    t_grid = _grid(cfg.t_min, cfg.t_max, cfg.t_step)
    t_grid = t_grid[t_grid > train.end * (1 + 1e-12)]
    if t_grid.size == 0:
        raise ConfigError("t_max: the time grid must extend past the last pulse")
    series = intensity_curve(train, engine, t_grid).log_intensity
    oracle = oracle_curve(train, model.correlation, t_grid, _quad(cfg), _time_scale(model)).log_intensity
    rel = np.abs(series - oracle) / np.maximum(np.abs(oracle), 1e-300)
    rows = [list(r) for r in zip(t_grid, series, oracle, rel)]
    worst = float(np.max(rel))
    return Table(
        ["t", "ln_I", "ln_I_oracle", "rel_diff"],
        rows,
        f"oracle-check: {len(rows)} rows, N = {cfg.n_pulses}, max relative discrepancy = {worst:.3g}",
        {"max_rel_diff": worst},
    )


def _cmd_asymptote(cfg: RunConfig) -> Table:
    model = _model(cfg)
    engine = _engine(cfg, model)
    report = verify_asymptote(engine, cfg.t_checkpoints)
    s = report.s_over_t * report.times
    rows = [[t, si, r, d] for t, si, r, d in zip(report.times, s, report.s_over_t, report.rel_deviation)]
    return Table(
        ["t", "S", "S_over_t", "rel_deviation"],
        rows,
        f"asymptote: {len(rows)} rows, J(0)/2 = {report.rate:.6g}, "
        f"deviation {'shrinks' if report.passed else 'does not shrink'}",
        {"rate": report.rate, "passed": report.passed},
    )


_DISPATCH = {
    "spectrum": _cmd_spectrum,
    "decay": _cmd_decay,
    "sweep": _cmd_sweep,
    "oracle-check": _cmd_oracle,
    "asymptote": _cmd_asymptote,
}


# -- output ----------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        v = float(f"{float(v):.12g}")
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    return v


def render(table: Table, cfg: RunConfig) -> str:
    """Table as CSV (``#`` config echo, header, rows) or JSON."""
    if cfg.format == "json":
        doc = {
            "config": cfg.to_dict(),
            "columns": table.columns,
            "rows": _json_value(table.rows),
            "summary": _json_value(table.scalars),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    for line in cfg.echo():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path: str, text: str):
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute ``cfg``; write the table and print a one-line summary.

    Returns the exit status.
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        table = _DISPATCH[cfg.command](cfg)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    except QuadratureError as exc:
        print(f"numerical failure: {exc}; diagnostics: {exc.diagnostics()}", file=stderr)
        return EXIT_NUMERIC
    except (FitError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    text = render(table, cfg)
    if cfg.out:
        try:
            write_atomic(cfg.out, text)
        except OSError as exc:
            print(f"error: cannot write {cfg.out}: {exc}", file=stderr)
            return EXIT_CONFIG
        print(table.summary, file=stdout)
    else:
        stdout.write(text)
        print(table.summary, file=stderr)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None, environ=None) -> int:
    parser = argparse.ArgumentParser(
        prog="multipulse",
        description="Coherence decay of a two-level system under pi-pulse trains.",
        epilog=f"Any config key can be overridden as {ENV_PREFIX}<KEY> in the environment.",
    )
    parser.add_argument("--config", required=True, help="config file (JSON or key = value), '-' for stdin")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--format", choices=FORMATS, help="output format")
    parser.add_argument("--threads", type=int, help="worker threads for sweeps")
    args = parser.parse_args(argv)

    try:
        if args.config == "-":
            text = sys.stdin.read()
        else:
            with open(args.config) as fh:
                text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        pairs = _read_pairs(text)
        pairs.update(env_overrides(environ))
        for key in ("out", "format", "threads"):
            value = getattr(args, key)
            if value is not None:
                pairs[key] = value
        cfg = build_config(pairs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
