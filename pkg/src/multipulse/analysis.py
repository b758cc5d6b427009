"""Decay-time extraction, pulse-interval sweeps, spectral peaks, asymptotics."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, FitError, QuadratureError
from .models import ExponentialCorrelation, SpectrumGrid
from .pulsecontrol import DecayCurve, PulseTrain, intensity_curve, stroboscopic_curve

__all__ = [
    "AsymptoteReport",
    "DecayCurve",
    "DecayFit",
    "SweepResult",
    "SweepRow",
    "effective_t2_formula",
    "find_peaks",
    "fit_decay",
    "fit_decay_time",
    "sweep_tau_s",
    "verify_asymptote",
]


#: Smallest change of ln I across a fit window that counts as decay.
NOISE_FLOOR = 1e-9


class DecayFit(NamedTuple):
    tau: float
    slope: float
    intercept: float
    residual: float
    n_samples: int


def fit_decay(curve: DecayCurve, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """Least-squares line through ``ln I`` on ``window``.

    The decay time of the intensity is ``-1/slope``; ``residual`` is the
    RMS deviation from the line.

    Raises
    ------
    FitError
        With fewer than two samples, or if the slope is not negative.
    """
    if window is not None:
        curve = curve.window(*window)
    t, y = curve.times, curve.log_intensity
    if t.size < 2:
        raise FitError(f"need at least 2 samples in the fit window, got {t.size}")
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * t + intercept)
    rms = float(np.sqrt(np.mean(resid**2)))
    # Changes of ln I below this are quadrature noise, not decay.
    floor = NOISE_FLOOR * max(1.0, float(np.max(np.abs(y))))
    if not slope < 0 or abs(slope) * (t[-1] - t[0]) <= floor:
        raise FitError(f"no decay on the fit window (slope {slope:.3g})")
    return DecayFit(-1.0 / slope, float(slope), float(intercept), rms, int(t.size))


def fit_decay_time(curve: DecayCurve, window: Optional[Tuple[float, float]] = None) -> float:
    """Intensity decay time ``tau_I = -1/slope`` of ``ln I`` on ``window``."""
    return fit_decay(curve, window).tau


def effective_t2_formula(n_pulses, tau_s: float, model: ExponentialCorrelation) -> float:
    """``T2 / (1 + (1/N - 2) tau_c/tau_s)`` for ``tau_s >> tau_c``.

    ``n_pulses`` may be ``math.inf``.
    """
    inv_n = 0.0 if math.isinf(n_pulses) else 1.0 / n_pulses
    denom = 1.0 + (inv_n - 2.0) * model.tau_c / tau_s
    if denom <= 0:
        raise DomainError(
            f"effective T2 formula invalid for tau_c/tau_s = {model.tau_c / tau_s:.3g}"
        )
    return model.t2 / denom


@dataclass
class SweepRow:
    tau_s: float
    tau_i: float
    t2e_formula: float
    residual: float
    n_pulses: int
    error: str = ""


@dataclass
class SweepResult:
    """One fitted intensity decay time per pulse interval."""

    rows: List[SweepRow]
    window: Tuple[float, float]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        taus = [r.tau_s for r in self.rows]
        if any(b <= a for a, b in zip(taus[:-1], taus[1:])):
            raise ValueError("sweep rows must have strictly increasing tau_s")

    @property
    def tau_s(self) -> np.ndarray:
        return np.array([r.tau_s for r in self.rows])

    @property
    def tau_i(self) -> np.ndarray:
        return np.array([r.tau_i for r in self.rows])

    @property
    def ok(self) -> np.ndarray:
        return np.array([not r.error for r in self.rows])

    def at(self, tau_s: float, rel: float = 1e-9) -> SweepRow:
        for r in self.rows:
            if math.isclose(r.tau_s, tau_s, rel_tol=rel):
                return r
        raise KeyError(tau_s)

    def to_csv(self, comments: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in comments:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau_s", "tau_I", "t2e_formula", "residual", "n_pulses", "error"])
        for r in self.rows:
            w.writerow(
                [f"{r.tau_s:.12g}", f"{r.tau_i:.12g}", f"{r.t2e_formula:.12g}",
                 f"{r.residual:.12g}", r.n_pulses, r.error]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        rows = [{k: clean(v) for k, v in asdict(r).items()} for r in self.rows]
        return json.dumps(
            {"window": list(self.window), "meta": self.meta, "rows": rows}, indent=2, sort_keys=True
        )


def _sweep_row(tau_s, engine, window, model, dense_samples):
    lo, hi = window
    n = int(math.ceil(hi / tau_s * (1 - 1e-12)))
    train = PulseTrain(n, tau_s)
    t2e = math.nan
    if isinstance(model, ExponentialCorrelation):
        try:
            t2e = effective_t2_formula(n, tau_s, model)
        except DomainError:
            pass
    try:
        first = int(math.ceil(lo / tau_s * (1 - 1e-12)))
        if n - first + 1 >= 2:
            # Pulse-applied times only: no between-pulse recovery in the fit.
            curve = stroboscopic_curve(train, engine, first=first)
        else:
            curve = intensity_curve(train, engine, np.linspace(lo, hi, dense_samples))
        fit = fit_decay(curve, (lo, hi * (1 + 1e-12)))
        return SweepRow(tau_s, fit.tau, t2e, fit.residual, n)
    except FitError as exc:
        # No resolvable decay: the decay time is unbounded.
        return SweepRow(tau_s, math.inf, t2e, math.nan, n, error=f"FitError: {exc}")
    except QuadratureError as exc:
        return SweepRow(tau_s, math.nan, t2e, math.nan, n, error=f"QuadratureError: {exc}")


def sweep_tau_s(
    tau_s_grid: Sequence[float],
    engine: Callable,
    window: Tuple[float, float],
    model=None,
    workers: Optional[int] = None,
    dense_samples: int = 64,
) -> SweepResult:
    """Fit the intensity decay time for each pulse interval.

    Each row uses ``N = ceil(window_end / tau_s)`` pulses and fits ``ln I``
    at the pulse-applied times inside ``window``. Rows are independent and
    run on ``workers`` threads; the result is ordered by ``tau_s``. Fit and
    quadrature failures are recorded on the row instead of raised; a row
    without resolvable decay reports ``tau_i = inf``.
    """
    grid = [float(x) for x in tau_s_grid]
    if any(b <= a for a, b in zip(grid[:-1], grid[1:])):
        raise ValueError("tau_s grid must be strictly increasing")
    if any(x <= 0 for x in grid):
        raise ValueError("tau_s values must be positive")
    # Warm the engine at the largest argument so worker threads share its cache.
    engine(np.array([window[1]]))

    def job(ts):
        return _sweep_row(ts, engine, window, model, dense_samples)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, grid))
    else:
        rows = [job(ts) for ts in grid]
    return SweepResult(rows, (float(window[0]), float(window[1])))


def find_peaks(grid: SpectrumGrid) -> List[float]:
    """Local maxima of a sampled spectrum, refined by a parabola through
    each maximum and its two neighbours."""
    w, v = grid.omegas, grid.values
    if w.size < 3:
        raise ValueError("need at least 3 samples to locate peaks")
    peaks = []
    for i in range(1, w.size - 1):
        if v[i] > v[i - 1] and v[i] >= v[i + 1]:
            x0, x1, x2 = w[i - 1 : i + 2]
            y0, y1, y2 = v[i - 1 : i + 2]
            d01 = (y1 - y0) / (x1 - x0)
            d12 = (y2 - y1) / (x2 - x1)
            curv = (d12 - d01) / (x2 - x0)
            if curv < 0:
                # vertex of the interpolating parabola (Newton form)
                peaks.append(float((x0 + x1) / 2 - d01 / (2 * curv)))
            else:
                peaks.append(float(x1))
    return peaks


@dataclass
class AsymptoteReport:
    """``S(t)/t`` against the long-time rate ``J(0)/2`` at checkpoints."""

    times: np.ndarray
    s_over_t: np.ndarray
    rate: float
    rel_deviation: np.ndarray
    passed: bool

    def rows(self):
        return list(zip(self.times, self.s_over_t, self.rel_deviation))


def verify_asymptote(engine, t_checkpoints: Sequence[float], rate: Optional[float] = None) -> AsymptoteReport:
    """Check ``S(t) ~ (J(0)/2) t``.

    Passes when the relative deviation of ``S(t)/t`` from ``J(0)/2``
    shrinks across the checkpoints. For ``J(0) = 0`` the deviation is
    reported as ``S(t)/t`` itself and must decrease towards zero.
    """
    t = np.asarray(sorted(float(x) for x in t_checkpoints))
    if np.any(t <= 0):
        raise ValueError("checkpoints must be positive")
    if rate is None:
        rate = engine.rate().rate
    s_over_t = np.asarray(engine(t), dtype=float) / t
    if rate > 0:
        dev = np.abs(s_over_t - rate) / rate
    else:
        dev = np.abs(s_over_t)
    passed = bool(np.all(np.diff(dev) < 0)) if t.size > 1 else True
    return AsymptoteReport(t, s_over_t, float(rate), dev, passed)
