"""Composite Gauss-Legendre quadrature with panel-doubling refinement.

Every integral in the package goes through the helpers here. A result is
accepted once doubling the panel count changes it by less than
``rel_tol``; otherwise :class:`~multipulse.errors.QuadratureError` is
raised carrying the sequence of estimates.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import QuadratureError


@dataclass(frozen=True)
class QuadratureConfig:
    """Quadrature settings shared by the spectral and time-domain routines.

    Parameters
    ----------
    panel_count : int
        Number of panels on the coarsest level.
    refinement_levels : int
        Maximum number of panel doublings before giving up.
    rel_tol : float
        Accepted relative change between two successive levels.
    freq_cutoff : float, optional
        Upper frequency bound for spectral integrals with unbounded
        support. ``None`` lets the caller choose from the model scale.
    order : int
        Gauss-Legendre nodes per panel.
    """

    panel_count: int = 32
    refinement_levels: int = 5
    rel_tol: float = 1e-10
    freq_cutoff: Optional[float] = None
    order: int = 10

    def __post_init__(self):
        if int(self.panel_count) != self.panel_count or self.panel_count < 8:
            raise ValueError(f"panel_count must be an integer >= 8, got {self.panel_count}")
        if not (0.0 < self.rel_tol <= 1e-2):
            raise ValueError(f"rel_tol must lie in (0, 1e-2], got {self.rel_tol}")
        if self.refinement_levels < 1:
            raise ValueError("refinement_levels must be >= 1")
        if self.order < 2:
            raise ValueError("order must be >= 2")
        if self.freq_cutoff is not None and not self.freq_cutoff > 0:
            raise ValueError("freq_cutoff must be positive")


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def composite_rule(edges, order: int):
    """Composite rule over consecutive panels given by ``edges``.

    ``edges`` may carry leading batch axes; panels run along the last axis.
    Returns ``(nodes, weights)`` with the panel and node axes flattened.
    """
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    lo = edges[..., :-1, None]
    width = np.diff(edges, axis=-1)[..., None]
    nodes = lo + width * x
    weights = width * w
    shape = edges.shape[:-1] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def subdivide(a: float, b: float, n: int, breakpoints: Sequence[float] = ()):
    """Edges of ``~n`` panels on [a, b], with every breakpoint an edge."""
    cuts = sorted({float(p) for p in breakpoints if a < p < b})
    knots = [a, *cuts, b]
    total = b - a
    edges = [a]
    for lo, hi in zip(knots[:-1], knots[1:]):
        m = max(1, int(np.ceil(n * (hi - lo) / total)))
        edges.extend(np.linspace(lo, hi, m + 1)[1:])
    return np.asarray(edges)


def integrate(
    f: Callable,
    a: float,
    b: float,
    quad: QuadratureConfig,
    breakpoints: Sequence[float] = (),
    atol: float = 0.0,
    min_panels: int = 0,
):
    """Integrate a vectorized ``f`` over [a, b] with panel doubling."""
    if b == a:
        return 0.0
    n = max(quad.panel_count, int(min_panels))
    estimates = []
    prev = None
    for _ in range(quad.refinement_levels + 1):
        nodes, weights = composite_rule(subdivide(a, b, n, breakpoints), quad.order)
        val = np.sum(weights * f(nodes))
        estimates.append(val)
        if prev is not None:
            change = abs(val - prev)
            if change <= quad.rel_tol * abs(val) + atol:
                return val
        prev = val
        n *= 2
    rel = abs(estimates[-1] - estimates[-2]) / max(abs(estimates[-1]), 1e-300)
    raise QuadratureError(
        f"integral on [{a}, {b}] not converged to rel_tol={quad.rel_tol}",
        estimates=[complex(e) if np.iscomplexobj(e) else float(e) for e in estimates],
        rel_change=rel,
    )


def integrate_batch(
    f: Callable,
    a,
    b,
    quad: QuadratureConfig,
    panels: Optional[int] = None,
):
    """Integrate over a batch of intervals ``[a[i], b[i]]`` at once.

    ``f`` receives nodes of shape ``(M, K)`` and returns an array of the
    same shape. Convergence is judged on the whole batch: the largest
    change must stay below ``rel_tol`` times the largest magnitude.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n = panels or quad.panel_count
    estimates = []
    prev = None
    for _ in range(quad.refinement_levels + 1):
        t = np.linspace(0.0, 1.0, n + 1)
        edges = a[:, None] + (b - a)[:, None] * t
        nodes, weights = composite_rule(edges, quad.order)
        val = np.sum(weights * f(nodes), axis=-1)
        estimates.append(val)
        if prev is not None:
            scale = np.max(np.abs(val))
            change = np.max(np.abs(val - prev))
            if change <= quad.rel_tol * scale:
                return val
        prev = val
        n *= 2
    scale = max(np.max(np.abs(estimates[-1])), 1e-300)
    rel = float(np.max(np.abs(estimates[-1] - estimates[-2])) / scale)
    raise QuadratureError(
        f"batched integral not converged to rel_tol={quad.rel_tol}",
        estimates=[float(np.max(np.abs(e))) for e in estimates],
        rel_change=rel,
    )
