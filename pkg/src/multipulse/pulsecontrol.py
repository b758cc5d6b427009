"""Coherence of a two-level system under a train of ideal pi pulses.

After the initial pi/2 pulse at ``t = 0`` and pi pulses at
``tau_s, 2 tau_s, ..., N tau_s`` the intensity is

    ln I(t) = -2 * sum_i c_i S(x_i),

where the integer-weighted arguments ``x_i`` are ``k tau_s``,
``t - k tau_s`` and ``t`` (see :func:`coefficients`). The same
quantity follows from the toggling sign ``f(t') = +-1``, flipped at each
pulse, as ``-2 int_0^t dt1 int_0^t1 dt2 f(t1) f(t2) Re C(t1 - t2)``;
:func:`filter_oracle` evaluates that double integral directly and serves
as an independent check, and as the evaluator for irregular trains.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, QuadratureError
from .models import ExponentialCorrelation
from .quadrature import QuadratureConfig, gauss_legendre

FIXED = "fixed"  # k * tau_s
RELATIVE = "relative"  # t - k * tau_s
OBSERVATION = "observation"  # t


@dataclass(frozen=True)
class PulseTrain:
    """Regular train: ``n_pulses`` pi pulses spaced by ``tau_s``."""

    n_pulses: int
    tau_s: float = 0.0

    def __post_init__(self):
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 0:
            raise ValueError(f"n_pulses must be a non-negative integer, got {self.n_pulses}")
        if self.n_pulses > 0 and not self.tau_s > 0:
            raise ValueError(f"tau_s must be positive when pulses are applied, got {self.tau_s}")

    @property
    def pulse_times(self) -> np.ndarray:
        return self.tau_s * np.arange(1, self.n_pulses + 1)

    @property
    def end(self) -> float:
        return self.n_pulses * self.tau_s

    def applied_before(self, t: float) -> int:
        """Number of pulses applied at or before ``t``."""
        if self.n_pulses == 0:
            return 0
        k = math.floor(t / self.tau_s * (1 + 1e-14))
        return min(self.n_pulses, max(0, k))


@dataclass(frozen=True)
class IrregularTrain:
    """Arbitrary strictly increasing positive pulse times."""

    pulse_times: Tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(x) for x in self.pulse_times)
        if any(x <= 0 for x in times):
            raise ValueError("pulse times must be positive")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("pulse times must be strictly increasing")
        object.__setattr__(self, "pulse_times", times)

    @classmethod
    def from_regular(cls, train: PulseTrain) -> "IrregularTrain":
        return cls(tuple(train.pulse_times))


@dataclass(frozen=True, order=True)
class TimeArg:
    """Argument of ``S``: ``k tau_s`` (fixed), ``t - k tau_s`` (relative) or ``t``."""

    kind: str
    k: int = 0

    def __call__(self, t, tau_s):
        if self.kind == FIXED:
            return self.k * tau_s
        if self.kind == RELATIVE:
            return t - self.k * tau_s
        return t

    def __str__(self):
        if self.kind == FIXED:
            return "S(tau_s)" if self.k == 1 else f"S({self.k}tau_s)"
        if self.kind == RELATIVE:
            return "S(t-tau_s)" if self.k == 1 else f"S(t-{self.k}tau_s)"
        return "S(t)"


@dataclass(frozen=True)
class CoefficientSeries:
    """Integer weights of ``S`` in the exponent: ``ln I = -2 sum c S(x)``."""

    n_pulses: int
    terms: Tuple[Tuple[TimeArg, int], ...]

    def as_dict(self) -> Dict[TimeArg, int]:
        return dict(self.terms)

    def arguments(self, t, tau_s):
        """Time arguments (array) and integer weights for given ``t``, ``tau_s``."""
        args = np.array([arg(t, tau_s) for arg, _ in self.terms], dtype=float)
        weights = np.array([c for _, c in self.terms], dtype=float)
        return args, weights

    def evaluate(self, s: Callable, t: float, tau_s: float) -> float:
        """``sum c_i s(x_i)``."""
        args, weights = self.arguments(t, tau_s)
        # Round-off can push t - N tau_s a hair below zero at t = N tau_s.
        args = np.where(np.abs(args) <= 1e-12 * max(abs(t), 1.0), 0.0, args)
        return float(np.dot(weights, s(args)))

    def __str__(self):
        return " ".join(f"{c:+d}{arg}" for arg, c in self.terms)


_KIND_ORDER = {FIXED: 0, RELATIVE: 1, OBSERVATION: 2}


def _normalize(acc) -> Tuple[Tuple[TimeArg, int], ...]:
    terms = [(a, c) for a, c in acc.items() if c != 0]
    return tuple(sorted(terms, key=lambda ac: (_KIND_ORDER[ac[0].kind], ac[0].k)))


def coefficients(n_pulses: int) -> CoefficientSeries:
    """Coefficient series of the multipulse exponent for ``N`` pulses.

    For ``N >= 1``::

        (-1)^N   sum_n (-1)^n (4n - 2) S((N - n + 1) tau_s)
        (-1)^(N-1) sum_n 2 (-1)^(n+1) S(t - n tau_s)
        (-1)^N   S(t)

    and ``{S(t): 1}`` for free decay.

    >>> str(coefficients(1))
    '+2S(tau_s) +2S(t-tau_s) -1S(t)'
    """
    n_pulses = int(n_pulses)
    if n_pulses < 0:
        raise ValueError("n_pulses must be >= 0")
    N = n_pulses
    acc = defaultdict(int)
    sign_n = -1 if N % 2 else 1
    for n in range(1, N + 1):
        acc[TimeArg(FIXED, N - n + 1)] += sign_n * (-1) ** n * (4 * n - 2)
        acc[TimeArg(RELATIVE, n)] += -sign_n * 2 * (-1) ** (n + 1)
    acc[TimeArg(OBSERVATION)] += sign_n
    return CoefficientSeries(N, _normalize(acc))


def diagram_coefficients(n_pulses: int) -> CoefficientSeries:
    """Same series generated from the time points ``0, tau_s, ..., N tau_s, t``.

    Each inter-pulse segment contributes ``S(length)``; each ordered pair
    of segments contributes its signed overlap, which is a second
    difference of ``S`` over the four segment endpoints. Used to
    cross-check :func:`coefficients` and to build truncated trains.
    """
    N = int(n_pulses)
    if N < 0:
        raise ValueError("n_pulses must be >= 0")
    # Endpoint index i <= N means i * tau_s; N + 1 means t.
    obs = N + 1

    def arg(a, b):  # S(t_b - t_a) for a < b
        if b == obs:
            return TimeArg(OBSERVATION) if a == 0 else TimeArg(RELATIVE, a)
        return TimeArg(FIXED, b - a)

    acc = defaultdict(int)

    def add(a, b, c):
        if a != b:
            acc[arg(a, b)] += c

    for i in range(N + 1):
        add(i, i + 1, 1)
        for j in range(i + 1, N + 1):
            sign = (-1) ** (i + j)
            add(i, j + 1, sign)
            add(i, j, -sign)
            add(i + 1, j + 1, -sign)
            add(i + 1, j, sign)
    return CoefficientSeries(N, _normalize(acc))


def log_intensity(t: float, train: PulseTrain, engine: Callable) -> float:
    """``ln I(t)`` for observation at or after the last pulse.

    Raises
    ------
    DomainError
        If ``t`` precedes the last pulse.
    """
    if t < 0:
        raise DomainError("observation time must be >= 0")
    if train.n_pulses and t < train.end * (1 - 1e-12):
        raise DomainError(
            f"observation time {t} precedes the last pulse at {train.end}"
        )
    return -2.0 * coefficients(train.n_pulses).evaluate(engine, t, train.tau_s)


@dataclass
class DecayCurve:
    """Samples of ``ln I`` on a time grid."""

    times: np.ndarray
    log_intensity: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.log_intensity = np.asarray(self.log_intensity, dtype=float)
        if self.times.shape != self.log_intensity.shape:
            raise ValueError("times and log_intensity must have equal length")
        if self.log_intensity.size and self.log_intensity[0] > 1e-12:
            raise ValueError("log intensity must start at or below zero")

    @property
    def intensity(self) -> np.ndarray:
        return np.exp(self.log_intensity)

    def window(self, lo: float, hi: float) -> "DecayCurve":
        keep = (self.times >= lo) & (self.times <= hi)
        return DecayCurve(self.times[keep], self.log_intensity[keep], self.label)

    def rows(self):
        return zip(self.times, self.log_intensity, self.intensity)

    def to_csv(self, comments: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in comments:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "ln_I", "I"])
        for row in self.rows():
            w.writerow([f"{v:.12g}" for v in row])
        return buf.getvalue()


def _curve_terms(t, train):
    """Arguments and weights for every sample, with the pulses seen so far."""
    series = {}
    args, weights, owner = [], [], []
    for i, ti in enumerate(t):
        k = train.applied_before(ti)
        if k not in series:
            series[k] = coefficients(k)
        a, w = series[k].arguments(ti, train.tau_s)
        args.append(a)
        weights.append(w)
        owner.append(np.full(a.size, i))
    args = np.concatenate(args)
    args = np.where(np.abs(args) <= 1e-12 * max(float(np.max(t)), 1.0), 0.0, args)
    return args, np.concatenate(weights), np.concatenate(owner)


def intensity_curve(train: PulseTrain, engine: Callable, t_grid: Iterable[float]) -> DecayCurve:
    """``ln I`` along ``t_grid``, including samples between pulses.

    A sample at ``t`` sees only the ``k = floor(t/tau_s)`` pulses already
    applied, so it is the post-train value of the truncated train of ``k``
    pulses. All ``S`` arguments are evaluated in one vectorized call.
    """
    t = np.asarray(list(t_grid), dtype=float)
    if t.size == 0:
        return DecayCurve(t, t)
    if np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be sorted")
    if t[0] < 0:
        raise DomainError("observation times must be >= 0")
    args, weights, owner = _curve_terms(t, train)
    s = np.asarray(engine(args), dtype=float)
    exponent = np.bincount(owner, weights=weights * s, minlength=t.size)
    return DecayCurve(t, -2.0 * exponent)


def stroboscopic_curve(train: PulseTrain, engine: Callable, first: int = 0) -> DecayCurve:
    """``ln I`` at the pulse-applied times ``k tau_s``, ``k = first..N``.

    At ``t = k tau_s`` every argument is a multiple of ``tau_s``, so one
    evaluation of ``S`` on ``0..N tau_s`` serves the whole curve.
    """
    N = train.n_pulses
    if N == 0:
        raise ValueError("a stroboscopic curve needs at least one pulse")
    s_grid = np.asarray(engine(train.tau_s * np.arange(N + 1)), dtype=float)
    s_grid[0] = 0.0
    ks = np.arange(first, N + 1)
    out = np.empty(ks.size)
    for i, k in enumerate(ks):
        n = np.arange(1, k + 1)
        alt = np.where(n % 2, -1.0, 1.0)  # (-1)^n
        sk = -1.0 if k % 2 else 1.0  # (-1)^k
        fixed = sk * np.dot(alt * (4 * n - 2), s_grid[k - n + 1])
        relative = sk * np.dot(alt * 2.0, s_grid[k - n])
        out[i] = -2.0 * (fixed + relative + sk * s_grid[k])
    return DecayCurve(ks * train.tau_s, out)


# -- filter-function oracle ------------------------------------------------------


def _segments(t, pulse_times):
    edges = np.concatenate([[0.0], np.asarray(pulse_times, dtype=float), [t]])
    signs = (-1.0) ** np.arange(edges.size - 1)
    return edges, signs


def _toggling_integral(edges, signs, correlation, panel_width, order):
    """``int_0^t dt1 int_0^t1 dt2 f(t1) f(t2) Re C(t1 - t2)``.

    The segments are cut into panels no wider than ``panel_width``. Pairs
    of distinct panels use a tensor Gauss rule; each panel's own triangle
    ``t2 < t1`` uses collapsed coordinates so that a kink of ``C`` at zero
    lag never falls inside a cell.
    """
    x, w = gauss_legendre(order)
    lo, width, sign = [], [], []
    for a, b, s in zip(edges[:-1], edges[1:], signs):
        if b <= a:
            continue
        m = max(1, int(math.ceil((b - a) / panel_width)))
        cuts = np.linspace(a, b, m + 1)
        lo.extend(cuts[:-1])
        width.extend(np.diff(cuts))
        sign.extend([s] * m)
    lo = np.asarray(lo)
    width = np.asarray(width)
    sign = np.asarray(sign)
    P = lo.size
    if P == 0:
        return 0.0

    nodes = (lo[:, None] + width[:, None] * x).ravel()
    wts = ((width[:, None] * w) * sign[:, None]).ravel()
    panel_of = np.repeat(np.arange(P), x.size)

    total = 0.0
    # Off-diagonal panel pairs (p > q): t1 - t2 >= 0 throughout.
    block = 4096
    for i in range(0, nodes.size, block):
        t1 = nodes[i : i + block, None]
        lag = t1 - nodes[None, :]
        mask = panel_of[i : i + block, None] > panel_of[None, :]
        vals = np.where(mask, np.real(correlation(np.where(mask, lag, 0.0))), 0.0)
        total += wts[i : i + block] @ vals @ wts

    # Diagonal triangles: t1 = a + L u, t2 = a + L u v, Jacobian L^2 u.
    U, V = np.meshgrid(x, x, indexing="ij")
    WW = np.outer(w, w)
    lag_unit = (U * (1.0 - V)).ravel()
    jac = (WW * U).ravel()
    for L in np.unique(width):
        count = np.sum(width == L)
        tri = np.sum(jac * np.real(correlation(L * lag_unit))) * L * L
        total += count * tri  # sign^2 = 1
    return float(total)


def filter_oracle(
    t: float,
    pulse_times,
    correlation: Callable,
    quad: Optional[QuadratureConfig] = None,
    time_scale: float = 1.0,
) -> float:
    """``ln I(t)`` from the toggling-sign double integral of ``Re C``.

    Parameters
    ----------
    t : float
        Observation time; all pulses must precede it.
    pulse_times : IrregularTrain, PulseTrain or sequence of float
    correlation : callable
        Vectorized ``C(lag)``; only its real part is used.
    time_scale : float
        Shortest time scale of ``C``; panels start at this width and are
        halved until the result settles to ``quad.rel_tol``.
    """
    quad = quad or QuadratureConfig()
    if isinstance(pulse_times, PulseTrain):
        times = pulse_times.pulse_times
    elif isinstance(pulse_times, IrregularTrain):
        times = np.asarray(pulse_times.pulse_times)
    else:
        times = np.asarray(IrregularTrain(tuple(pulse_times)).pulse_times)
    if len(times) and not times[-1] < t:
        raise DomainError("all pulses must precede the observation time")
    if t <= 0:
        return 0.0
    edges, signs = _segments(t, times)
    width = min(time_scale, t / quad.panel_count * 8)
    estimates = []
    prev = None
    for _ in range(quad.refinement_levels + 1):
        val = _toggling_integral(edges, signs, correlation, width, quad.order)
        estimates.append(-2.0 * val)
        if prev is not None and abs(val - prev) <= quad.rel_tol * abs(val) + 1e-15 * t * t:
            return -2.0 * val
        prev = val
        width /= 2
    raise QuadratureError(
        "filter oracle not converged",
        estimates=estimates,
        rel_change=abs(estimates[-1] - estimates[-2]) / max(abs(estimates[-1]), 1e-300),
    )


def oracle_curve(train: PulseTrain, correlation: Callable, t_grid, quad=None, time_scale=1.0):
    """:func:`filter_oracle` along a grid, with the pulses seen so far."""
    t = np.asarray(list(t_grid), dtype=float)
    out = np.empty_like(t)
    for i, ti in enumerate(t):
        k = train.applied_before(ti)
        times = train.pulse_times[:k]
        if k and times[-1] >= ti:
            times = times[:-1]
        out[i] = filter_oracle(ti, times, correlation, quad, time_scale) if ti > 0 else 0.0
    return DecayCurve(t, out)


# -- closed form for the exponential correlation ---------------------------------


def log_intensity_closed_exp(t_n: float, train: PulseTrain, model: ExponentialCorrelation) -> float:
    """Closed form of ``ln I`` at ``t_N = N tau_s`` for even ``N``.

    ``-(2/T2) {t_N + (1 + e^{-t_N/tau_c} - 2N) tau_c
    + (-2 e^{(tau_s - t_N)/tau_c} + 2 e^{-t_N/tau_c} + 4N) tau_c q
    - 4 (e^{tau_s/tau_c} + e^{-t_N/tau_c}) tau_c q^2}`` with
    ``q = 1/(1 + e^{tau_s/tau_c})``; written so that no exponential
    overflows for ``tau_s >> tau_c``.
    """
    N = train.n_pulses
    if N % 2:
        raise DomainError("the closed form holds for an even number of pulses")
    if not math.isclose(t_n, N * train.tau_s, rel_tol=1e-12, abs_tol=1e-300):
        raise DomainError("the closed form is evaluated at t_N = N tau_s")
    tc = model.tau_c
    rate = 2.0 / model.t2 if np.isfinite(model.t2) else 0.0
    a = train.tau_s / tc if N else 0.0
    q = math.exp(-np.logaddexp(0.0, a))  # 1/(1 + e^a)
    decay = math.exp(-t_n / tc)
    shifted = math.exp(a - t_n / tc) if N else decay
    brace = (
        t_n
        + (1.0 + decay - 2 * N) * tc
        + (-2.0 * shifted + 2.0 * decay + 4 * N) * tc * q
        - 4.0 * (q * (1.0 - q) + decay * q * q) * tc
    )
    return -rate * brace
