"""Reservoir models: correlation functions, coupling densities, power spectra.

Three reservoirs are provided:

* an exponentially decaying correlation ``C(t) = delta**2 exp(-|t|/tau_c)``
  with its Lorentzian spectrum,
* a boson bath coupled quadratically to the spin through a Gaussian
  coupling density (two-boson emission/absorption and the mixed
  absorption-emission process that produces zero-frequency weight),
* the linear Caldeira-Leggett bath ``I(w) = alpha w**n exp(-w/omega_c)``.

Boson quantities are dimensionless: frequencies in units of the mean
boson frequency ``omega_p``, times in units of ``1/omega_p`` and
``beta_p = hbar omega_p / k_B T``. The exponential model is usually run
in units of its own dephasing time ``T2 = 1/(delta**2 tau_c)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .errors import DomainError
from .quadrature import QuadratureConfig, integrate_batch

SQRT_PI = np.sqrt(np.pi)

#: Number of Gaussian widths above ``omega_p`` kept in coupling integrals.
TAIL_WIDTHS = 8.0

_OMEGA_CHUNK = 256


class CorrelationModel(Protocol):
    """Anything exposing a stationary correlation and/or its power spectrum."""

    def correlation(self, t): ...

    def spectrum(self, omega): ...


@dataclass(frozen=True)
class ThermalConfig:
    """Bath temperature as ``beta_p = hbar omega_p / k_B T``.

    ``units`` records which normalization the surrounding computation uses:
    ``"omega_p"`` (boson models) or ``"T2"`` (exponential model).
    """

    beta_p: float = 1.0
    units: str = "omega_p"

    def __post_init__(self):
        if not self.beta_p > 0:
            raise ValueError(f"beta_p must be positive, got {self.beta_p}")
        if self.units not in ("omega_p", "T2"):
            raise ValueError(f"unknown units convention {self.units!r}")


@dataclass(frozen=True)
class ExponentialCorrelation:
    """``C(t) = delta**2 exp(-|t|/tau_c)``."""

    delta: float
    tau_c: float

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not self.tau_c > 0:
            raise ValueError(f"tau_c must be > 0, got {self.tau_c}")

    @classmethod
    def from_t2(cls, tau_c: float, t2: float = 1.0) -> "ExponentialCorrelation":
        """Build the model with a prescribed dephasing time ``T2``."""
        return cls(delta=float(np.sqrt(1.0 / (t2 * tau_c))), tau_c=tau_c)

    @property
    def t2(self) -> float:
        rate = self.delta**2 * self.tau_c
        return np.inf if rate == 0 else 1.0 / rate

    def correlation(self, t):
        return exp_correlation(t, self)

    def spectrum(self, omega):
        return exp_spectrum(omega, self)


@dataclass(frozen=True)
class GaussianCouplingDensity:
    """Gaussian coupling density of mean ``omega_p`` and width ``gamma_p``.

    ``s`` sets the overall scale; the quadratic coupling strength is
    ``S_Q = s**2``.
    """

    s: float
    gamma_p: float
    omega_p: float = 1.0

    def __post_init__(self):
        if not self.s >= 0:
            raise ValueError(f"s must be >= 0, got {self.s}")
        if not self.omega_p > 0:
            raise ValueError(f"omega_p must be > 0, got {self.omega_p}")
        if not self.gamma_p > 0:
            raise ValueError(f"gamma_p must be > 0, got {self.gamma_p}")

    @classmethod
    def from_sq(cls, sq: float, gamma_p: float, omega_p: float = 1.0):
        return cls(s=float(np.sqrt(sq)), gamma_p=gamma_p, omega_p=omega_p)

    @property
    def sq(self) -> float:
        return self.s**2

    def support_max(self, widths: float = TAIL_WIDTHS) -> float:
        return self.omega_p + widths * self.gamma_p


@dataclass(frozen=True)
class CaldeiraLeggettDensity:
    """``I(w) = alpha w**n exp(-w/omega_c)`` for ``w >= 0``."""

    alpha: float
    n: int = 1
    omega_c: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not self.omega_c > 0:
            raise ValueError(f"omega_c must be > 0, got {self.omega_c}")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.alpha * omega**self.n * np.exp(-omega / self.omega_c)


@dataclass(frozen=True)
class SpectrumGrid:
    """Power spectrum samples on a strictly increasing frequency grid."""

    omegas: np.ndarray
    values: np.ndarray
    eps_num: float = field(default=1e-10, compare=False)

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if omegas.ndim != 1 or omegas.shape != values.shape:
            raise ValueError("omegas and values must be 1-d arrays of equal length")
        if np.any(np.diff(omegas) <= 0):
            raise ValueError("omegas must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        floor = -self.eps_num * max(1.0, float(np.max(np.abs(values), initial=0.0)))
        if np.any(values < floor):
            raise ValueError("spectrum has negative values beyond quadrature noise")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "values", values)


# -- thermal factors ---------------------------------------------------------


def bose_occupation(omega, thermal: ThermalConfig):
    """Bose-Einstein occupation ``1/(exp(beta omega) - 1)``.

    Negative frequencies are allowed and satisfy ``n(-w) = -(n(w) + 1)``.

    Raises
    ------
    DomainError
        If any frequency is exactly zero.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega == 0):
        raise DomainError("Bose occupation has a pole at omega = 0")
    out = 1.0 / np.expm1(thermal.beta_p * omega)
    return out[()] if out.ndim == 0 else out


def emission_weight(x, beta: float):
    """``x (n(x) + 1)``, finite everywhere with value ``1/beta`` at 0.

    Since ``-x n(-x) = x (n(x) + 1)``, every thermal factor of the boson
    spectra reduces to this function evaluated at ``+x`` or ``-x``.
    """
    x = np.asarray(x, dtype=float)
    bx = beta * x
    safe = np.where(bx == 0, 1.0, bx)
    with np.errstate(over="ignore"):
        out = np.where(bx == 0, 1.0, safe / -np.expm1(-safe)) / beta
    return out[()] if out.ndim == 0 else out


# -- exponential model --------------------------------------------------------


def exp_correlation(t, model: ExponentialCorrelation):
    t = np.asarray(t, dtype=float)
    out = model.delta**2 * np.exp(-np.abs(t) / model.tau_c)
    return out[()] if out.ndim == 0 else out


def exp_spectrum(omega, model: ExponentialCorrelation):
    """Lorentzian ``2 delta**2 tau_c / (1 + omega**2 tau_c**2)``."""
    omega = np.asarray(omega, dtype=float)
    out = 2.0 * model.delta**2 * model.tau_c / (1.0 + (omega * model.tau_c) ** 2)
    return out[()] if out.ndim == 0 else out


# -- quadratic spin-boson model -------------------------------------------------


def gaussian_density(e, g: GaussianCouplingDensity):
    """Gaussian coupling density, evaluated as written for any real ``e``."""
    e = np.asarray(e, dtype=float)
    out = g.s / (SQRT_PI * g.gamma_p) * np.exp(-(((e - g.omega_p) / g.gamma_p) ** 2))
    return out[()] if out.ndim == 0 else out


def _coupling(e, g):
    # Boson frequencies are non-negative: the density has no weight below 0.
    return np.where(e >= 0, gaussian_density(e, g), 0.0)


def _quadratic_integrand(e, omega, g, beta):
    w = omega
    he = _coupling(e, g)
    two_emission = emission_weight(e, beta) * emission_weight(w - e, beta) * _coupling(w - e, g)
    mixed = 2.0 * emission_weight(e, beta) * emission_weight(w - e, beta) * _coupling(e - w, g)
    two_absorption = emission_weight(-e, beta) * emission_weight(w + e, beta) * _coupling(-w - e, g)
    return he * (two_emission + mixed + two_absorption)


def quadratic_spectrum(
    omega,
    g: GaussianCouplingDensity,
    thermal: ThermalConfig,
    quad: Optional[QuadratureConfig] = None,
    tail_widths: float = TAIL_WIDTHS,
):
    """Power spectrum of the quadratically coupled boson bath.

    Single integral over the boson frequency ``e`` of three processes:
    two-boson emission, simultaneous absorption and emission (weight 2),
    and two-boson absorption. The integrand changes branch at
    ``e = |omega|``, which is used as a panel edge.

    Raises
    ------
    QuadratureError
        If panel doubling does not settle to ``quad.rel_tol``.
    """
    if tail_widths < 8:
        raise ValueError("coupling integrals must cover at least omega_p + 8 gamma_p")
    quad = quad or QuadratureConfig()
    omega = np.asarray(omega, dtype=float)
    flat = np.atleast_1d(omega).ravel()
    if g.s == 0:
        out = np.zeros_like(flat)
    else:
        emax = g.support_max(tail_widths)
        beta = thermal.beta_p
        out = np.empty_like(flat)
        for i in range(0, flat.size, _OMEGA_CHUNK):
            w = flat[i : i + _OMEGA_CHUNK]
            mid = np.minimum(np.abs(w), emax)

            def f(e, w=w):
                return _quadratic_integrand(e, w[:, None], g, beta)

            # Two batched pieces keep the branch change on a panel edge.
            lower = integrate_batch(f, np.zeros_like(w), mid, quad)
            upper = integrate_batch(f, mid, np.full_like(w, emax), quad)
            out[i : i + _OMEGA_CHUNK] = 2.0 * np.pi * (lower + upper)
    out = out.reshape(omega.shape)
    return out[()] if out.ndim == 0 else out


def _field_amplitude(t, g, thermal, quad, tail_widths):
    """``K(t) = int_0^emax de h(e) [e (n+1) e^{-iet} + e n e^{iet}]``."""
    t = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
    emax = g.support_max(tail_widths)
    beta = thermal.beta_p
    # At least ~4 panels per oscillation period of the fastest phase.
    panels = max(quad.panel_count, int(np.ceil(emax * np.max(np.abs(t), initial=0.0) / 1.5)))

    out = np.empty(t.shape, dtype=complex)
    chunk = max(1, _OMEGA_CHUNK * 64 // (panels * quad.order))
    for i in range(0, t.size, chunk):
        ti = t[i : i + chunk, None]

        def f(e, ti=ti):
            h = _coupling(e, g)
            phase = np.exp(-1j * e * ti)
            return h * (emission_weight(e, beta) * phase + emission_weight(-e, beta) * np.conj(phase))

        zeros = np.zeros(ti.shape[0])
        out[i : i + chunk] = integrate_batch(f, zeros, zeros + emax, quad, panels=panels)
    return out


def quadratic_correlation(
    t,
    g: GaussianCouplingDensity,
    thermal: ThermalConfig,
    quad: Optional[QuadratureConfig] = None,
    tail_widths: float = TAIL_WIDTHS,
):
    """Complex correlation ``<B(t)B(0)>`` of the quadratic bath.

    The double integral over ``(e, e')`` of the three processes factorizes
    because the coupling weight is ``h(e) h(e')``: it equals ``K(t)**2``
    with ``K`` the single-boson amplitude integral.
    """
    quad = quad or QuadratureConfig()
    t_arr = np.asarray(t, dtype=float)
    if g.s == 0:
        out = np.zeros(t_arr.shape, dtype=complex)
    else:
        out = (_field_amplitude(t_arr, g, thermal, quad, tail_widths) ** 2).reshape(t_arr.shape)
    return out[()] if out.ndim == 0 else out


# -- linear (Caldeira-Leggett) model --------------------------------------------


def linear_spectrum(omega, d: CaldeiraLeggettDensity, thermal: ThermalConfig):
    """Power spectrum of the linearly coupled bath.

    Uses ``I(w)(n(w)+1)`` for ``w > 0`` and ``I(-w) n(-w)`` for ``w < 0``;
    both equal ``alpha |w|**(n-1) exp(-|w|/omega_c) w (n(w)+1)``, whose
    ``w -> 0`` limit is ``alpha/beta`` for ``n = 1`` and 0 otherwise.
    """
    omega = np.asarray(omega, dtype=float)
    a = np.abs(omega)
    out = (
        2.0
        * np.pi
        * d.alpha
        * a ** (d.n - 1)
        * np.exp(-a / d.omega_c)
        * emission_weight(omega, thermal.beta_p)
    )
    return out[()] if out.ndim == 0 else out


# -- model bundles ----------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticBosonModel:
    """Quadratic coupling density together with its bath temperature."""

    coupling: GaussianCouplingDensity
    thermal: ThermalConfig = ThermalConfig()
    quad: QuadratureConfig = QuadratureConfig()

    def correlation(self, t):
        return quadratic_correlation(t, self.coupling, self.thermal, self.quad)

    def spectrum(self, omega):
        return quadratic_spectrum(omega, self.coupling, self.thermal, self.quad)

    @property
    def freq_support(self) -> float:
        return 2.0 * self.coupling.support_max()


@dataclass(frozen=True)
class LinearBosonModel:
    """Caldeira-Leggett density together with its bath temperature."""

    density: CaldeiraLeggettDensity
    thermal: ThermalConfig = ThermalConfig()

    def spectrum(self, omega):
        return linear_spectrum(omega, self.density, self.thermal)
