"""Second cumulant ``S(t)`` of the dephasing phase.

``S(t)`` is the double time integral of ``Re C`` over ``0 < t2 < t1 < t``.
It is non-negative for a non-negative spectrum, and the coherence under
a pulse train is ``ln I = -2 * sum_i c_i S(x_i)``.

Four routes are provided:

``s_exponential``
    closed form for the exponential correlation;
``s_from_spectrum``
    ``int dw/2pi J(w) (1 - cos wt)/w**2`` by quadrature;
``s_from_correlation``
    ``int_0^t (t - u) Re C(u) du`` (the double integral collapsed using
    stationarity);
``s_linear_boson``
    ``int_0^inf I(w) (2n + 1)(1 - cos wt)/w**2`` for Caldeira-Leggett baths.

:class:`CumulantEngine` wraps one of them behind a vectorized callable.
"""
from __future__ import annotations

import math
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DomainError, QuadratureError
from .models import (
    CaldeiraLeggettDensity,
    ExponentialCorrelation,
    LinearBosonModel,
    QuadraticBosonModel,
    ThermalConfig,
    emission_weight,
)
from .quadrature import QuadratureConfig, composite_rule, integrate, subdivide

__all__ = [
    "CumulantEngine",
    "DephasingRate",
    "QuadratureConfig",
    "asymptotic_rate",
    "s_exponential",
    "s_from_correlation",
    "s_from_spectrum",
    "s_linear_boson",
]

MODES = (
    "analytic-exponential",
    "spectral-quadrature",
    "time-domain-double-integral",
    "linear-boson",
)

_CHUNK = 1 << 22


def _check_times(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(~np.isfinite(t)):
        raise DomainError("S(t) is defined for finite t >= 0")
    return t


def _scalar(out):
    return out[()] if np.ndim(out) == 0 else out


def _fidc_kernel(omega, t):
    """``(1 - cos wt)/w**2`` written as ``t**2/2 sinc**2`` (no 0/0)."""
    return 0.5 * t * t * np.sinc(omega * t / (2.0 * np.pi)) ** 2


def s_exponential(t, model: ExponentialCorrelation):
    """``delta**2 tau_c (t - tau_c (1 - exp(-t/tau_c)))``."""
    t = _check_times(t)
    x = t / model.tau_c
    small = x < 1e-3
    xs = np.where(small, x, 0.0)
    series = xs**2 / 2 - xs**3 / 6 + xs**4 / 24 - xs**5 / 120
    out = np.where(small, series, x + np.expm1(-np.where(small, 1.0, x)))
    return _scalar(model.delta**2 * model.tau_c**2 * out)


class _SpectralRule:
    """Frequency nodes with ``J`` folded into the weights.

    ``S(x) = sum_j W_j (1 - cos w_j x)/w_j**2 + tail``, where the rule
    resolves the kernel's oscillation for every ``x <= t_res``. Beyond
    ``|w| > cutoff`` only the non-oscillating ``J/w**2`` part is kept
    (the oscillating remainder is bounded by ``J(cutoff)/(cutoff**2 t)``).
    """

    def __init__(self, spectrum, cutoff, t_res, quad, breakpoints=(0.0,)):
        self.cutoff = float(cutoff)
        self.t_res = float(t_res)
        n = max(quad.panel_count, int(math.ceil(2 * self.cutoff * self.t_res / math.pi)))
        bps = tuple(breakpoints)
        last = None
        estimates = []
        for _ in range(quad.refinement_levels + 1):
            nodes, weights = composite_rule(subdivide(-self.cutoff, self.cutoff, n, bps), quad.order)
            w = weights * np.asarray(spectrum(nodes), dtype=float) / (2 * np.pi)
            probe = float(np.sum(w * _fidc_kernel(nodes, self.t_res)))
            estimates.append(probe)
            if last is not None and abs(probe - last) <= quad.rel_tol * abs(probe):
                break
            last = probe
            n *= 2
        else:
            raise QuadratureError(
                f"spectral cumulant rule not converged at t={self.t_res}",
                estimates=estimates,
                rel_change=abs(estimates[-1] - estimates[-2]) / max(abs(estimates[-1]), 1e-300),
            )
        self.nodes = nodes
        self.weights = w
        # u = cutoff/|w| maps the tail onto (0, 1].
        u, uw = composite_rule(np.linspace(0.0, 1.0, quad.panel_count + 1), quad.order)
        wt = self.cutoff / u
        tail_density = (np.asarray(spectrum(wt), float) + np.asarray(spectrum(-wt), float)) / self.cutoff
        self.tail = float(np.sum(uw * tail_density)) / (2 * np.pi)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty_like(flat)
        step = max(1, _CHUNK // max(1, self.nodes.size))
        for i in range(0, flat.size, step):
            xi = flat[i : i + step, None]
            out[i : i + step] = _fidc_kernel(self.nodes, xi) @ self.weights
        out += np.where(flat > 0, self.tail, 0.0)
        return out.reshape(x.shape)


def _bucket(t_max):
    # Power-of-two resolution buckets so one rule serves many calls.
    return 2.0 ** max(0, math.ceil(math.log2(max(t_max, 1.0))))


def s_from_spectrum(
    t,
    spectrum: Callable,
    quad: Optional[QuadratureConfig] = None,
    cutoff: Optional[float] = None,
    breakpoints=(0.0,),
):
    """``S(t) = int dw/2pi J(w) (1 - cos wt)/w**2``.

    ``spectrum`` must be vectorized. The frequency range ``[-cutoff,
    cutoff]`` is integrated with panels that resolve ``cos(wt)``; the
    removable point ``w = 0`` is handled by writing the kernel as
    ``t**2/2 sinc**2(wt/2)``.
    """
    quad = quad or QuadratureConfig()
    t = _check_times(t)
    cutoff = cutoff or quad.freq_cutoff
    if cutoff is None:
        raise ValueError("a frequency cutoff is required (argument or quad.freq_cutoff)")
    t_max = float(np.max(t, initial=0.0))
    rule = _SpectralRule(spectrum, cutoff, max(t_max, 1e-12), quad, breakpoints)
    return _scalar(rule(t))


def s_from_correlation(
    t,
    correlation: Callable,
    quad: Optional[QuadratureConfig] = None,
    time_scale: float = 1.0,
):
    """``S(t) = int_0^t (t - u) Re C(u) du``.

    ``time_scale`` is the shortest time scale of ``C`` (correlation time
    or half period); panels are kept no wider than it.
    """
    quad = quad or QuadratureConfig()
    t = _check_times(t)
    flat = t.ravel()
    out = np.empty_like(flat)
    for i, ti in enumerate(flat):
        if ti == 0:
            out[i] = 0.0
            continue

        def f(u, ti=ti):
            return (ti - u) * np.real(correlation(u))

        scale = abs(ti) * max(1.0, ti * ti)
        out[i] = integrate(
            f, 0.0, ti, quad, min_panels=int(math.ceil(ti / time_scale)),
            atol=1e-15 * scale,
        )
    return _scalar(out.reshape(t.shape))


def s_linear_boson(
    t,
    d: CaldeiraLeggettDensity,
    thermal: ThermalConfig,
    quad: Optional[QuadratureConfig] = None,
    cutoff_factor: float = 60.0,
):
    """``S(t) = int_0^inf I(w)(2n(w) + 1)(1 - cos wt)/w**2 dw``.

    ``I(w)(2n+1) = alpha w**(n-1) exp(-w/omega_c) [w(n+1) + w n]``, which
    stays finite at ``w = 0``. The range is cut at
    ``cutoff_factor * omega_c``.
    """
    quad = quad or QuadratureConfig()
    t = _check_times(t)
    wmax = cutoff_factor * d.omega_c
    beta = thermal.beta_p
    flat = t.ravel()
    out = np.empty_like(flat)
    for i, ti in enumerate(flat):
        if ti == 0 or d.alpha == 0:
            out[i] = 0.0
            continue

        def f(w, ti=ti):
            weight = emission_weight(w, beta) + emission_weight(-w, beta)
            return d.alpha * w ** (d.n - 1) * np.exp(-w / d.omega_c) * weight * _fidc_kernel(w, ti)

        out[i] = integrate(f, 0.0, wmax, quad, min_panels=int(math.ceil(wmax * ti / 2.0)))
    return _scalar(out.reshape(t.shape))


class DephasingRate(NamedTuple):
    """Long-time rate ``J(0)/2`` of ``S(t)`` and ``T2 = 2/J(0)``."""

    rate: float
    t2: float


def asymptotic_rate(spectrum) -> DephasingRate:
    """Rate of the linear growth ``S(t) ~ J(0) t / 2``.

    ``spectrum`` is a callable ``J`` or the value ``J(0)`` itself.
    """
    j0 = float(spectrum(0.0)) if callable(spectrum) else float(spectrum)
    if not np.isfinite(j0):
        raise DomainError("J(0) must be finite")
    rate = j0 / 2.0
    return DephasingRate(rate=rate, t2=np.inf if rate == 0 else 1.0 / rate)


class CumulantEngine:
    """Vectorized ``S(t)`` for one reservoir model.

    Parameters
    ----------
    mode : str
        One of ``"analytic-exponential"``, ``"spectral-quadrature"``,
        ``"time-domain-double-integral"`` or ``"linear-boson"``.
    model
        :class:`ExponentialCorrelation`, :class:`QuadraticBosonModel` or
        :class:`LinearBosonModel`.
    quad : QuadratureConfig, optional

    Examples
    --------
    >>> eng = CumulantEngine("analytic-exponential", ExponentialCorrelation(1.0, 1.0))
    >>> float(eng(1.0))  # doctest: +ELLIPSIS
    0.3678794...
    """

    _compatible = {
        "analytic-exponential": (ExponentialCorrelation,),
        "spectral-quadrature": (ExponentialCorrelation, QuadraticBosonModel, LinearBosonModel),
        "time-domain-double-integral": (ExponentialCorrelation, QuadraticBosonModel),
        "linear-boson": (LinearBosonModel,),
    }

    def __init__(self, mode: str, model, quad: Optional[QuadratureConfig] = None):
        if mode not in MODES:
            raise ValueError(f"unknown cumulant mode {mode!r}; expected one of {MODES}")
        if not isinstance(model, self._compatible[mode]):
            raise ValueError(f"mode {mode!r} cannot evaluate a {type(model).__name__}")
        self.mode = mode
        self.model = model
        self.quad = quad or QuadratureConfig()
        self._rules = {}

    @classmethod
    def for_model(cls, model, quad=None):
        """Default engine: closed form when one exists, else spectral."""
        if isinstance(model, ExponentialCorrelation):
            return cls("analytic-exponential", model, quad)
        if isinstance(model, LinearBosonModel):
            return cls("linear-boson", model, quad)
        return cls("spectral-quadrature", model, quad)

    def __repr__(self):
        return f"CumulantEngine(mode={self.mode!r}, model={self.model!r})"

    # frequency range used by the spectral route
    def _cutoff(self):
        if self.quad.freq_cutoff is not None:
            return self.quad.freq_cutoff
        m = self.model
        if isinstance(m, ExponentialCorrelation):
            return 1000.0 / m.tau_c
        if isinstance(m, QuadraticBosonModel):
            return m.freq_support
        return 60.0 * m.density.omega_c

    def _rule(self, t_max):
        key = _bucket(t_max)
        rule = self._rules.get(key)
        if rule is None:
            rule = _SpectralRule(self.model.spectrum, self._cutoff(), key, self.quad)
            self._rules[key] = rule
        return rule

    def __call__(self, t):
        t = _check_times(t)
        m = self.model
        if self.mode == "analytic-exponential":
            return s_exponential(t, m)
        if self.mode == "spectral-quadrature":
            if t.size == 0:
                return t.copy()
            return _scalar(self._rule(float(np.max(t)))(t))
        if self.mode == "time-domain-double-integral":
            scale = m.tau_c if isinstance(m, ExponentialCorrelation) else math.pi / m.freq_support
            return s_from_correlation(t, m.correlation, self.quad, time_scale=scale)
        return s_linear_boson(t, m.density, m.thermal, self.quad)

    def spectrum_at_zero(self) -> float:
        return float(self.model.spectrum(0.0))

    def rate(self) -> DephasingRate:
        return asymptotic_rate(self.spectrum_at_zero())
