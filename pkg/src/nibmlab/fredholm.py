"""Fredholm determinants of multi-time kernels by block Nystrom discretisation.

``det(I - K)`` on ``(+)_j L^2(a_j, b_j)`` is approximated by
``det(I - W^{1/2} K W^{1/2})`` with Gauss-Legendre nodes per interval.
Semi-infinite intervals use ``u = a + L s/(1-s)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import ConvergenceError, NibmError
from .kernels_limit import heat_kernel

DEFAULT_Q = 64


@dataclass(frozen=True)
class FredholmProblem:
    """Gap-probability problem ``P(no point of time tau_j in (a_j, b_j) for all j)``.

    ``source`` is ``"airy"`` (extended Airy kernel, Airy-function convention),
    ``"airy-contour"`` (the double-contour convention, thresholds shifted by
    ``-tau^2``) or any callable ``kernel(tau_i, tau_j, U, V) -> matrix``.
    """

    taus: tuple
    a: tuple
    b: tuple | None = None
    source: object = "airy"
    q: int = DEFAULT_Q
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "a", tuple(float(t) for t in self.a))
        b = self.b if self.b is not None else (math.inf,) * len(self.a)
        object.__setattr__(self, "b", tuple(float(t) for t in b))
        m = len(self.taus)
        if m < 1 or len(self.a) != m or len(self.b) != m:
            raise ValueError("taus, a and b must have the same positive length")
        if any(t2 <= t1 for t1, t2 in zip(self.taus, self.taus[1:])):
            raise ValueError("times must be strictly increasing")
        if any(not lo < hi for lo, hi in zip(self.a, self.b)):
            raise ValueError("need a_j < b_j")
        if self.q < 8:
            raise ValueError("quadrature order q must be at least 8")

    @property
    def m(self) -> int:
        return len(self.taus)

    def with_q(self, q: int) -> "FredholmProblem":
        return FredholmProblem(self.taus, self.a, self.b, self.source, q, self.scale)


# ---------------------------------------------------------------------------
# nodes


@lru_cache(maxsize=16)
def _leg(q):
    return np.polynomial.legendre.leggauss(q)


def interval_nodes(a: float, b: float, q: int, scale: float = 1.0):
    """Gauss-Legendre nodes/weights on ``(a, b)``; ``b = inf`` uses ``a + L s/(1-s)``."""
    x, w = _leg(q)
    if math.isinf(b):
        s = 0.5 * (x + 1.0)
        ws = 0.5 * w
        u = a + scale * s / (1.0 - s)
        return u, ws * scale / (1.0 - s) ** 2
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


# ---------------------------------------------------------------------------
# extended Airy kernel on node sets (Airy-function convention)


def _airy_pair(x):
    ai, aip, _, _ = special.airy(x)
    return ai, aip


def airy_static_matrix(U, V) -> np.ndarray:
    """``(Ai(u)Ai'(v) - Ai'(u)Ai(v)) / (u - v)`` with the diagonal limit."""
    U, V = np.asarray(U, float), np.asarray(V, float)
    au, apu = _airy_pair(U)
    av, apv = _airy_pair(V)
    D = U[:, None] - V[None, :]
    num = au[:, None] * apv[None, :] - apu[:, None] * av[None, :]
    same = np.abs(D) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(same, 0.0, num / np.where(same, 1.0, D))
    if np.any(same):
        diag = apu ** 2 - U * au ** 2
        ii, jj = np.nonzero(same)
        K[ii, jj] = diag[ii]
    return K


@lru_cache(maxsize=32)
def _r_rule(lo_key: float, rate: float, order: int = 20):
    """Composite Gauss-Legendre rule for the ``r``-integral.

    ``rate <= 0.5``: ``r in [0, R]`` where ``Ai(x)^2 ~ exp(-4/3 x^1.5)`` beats
    ``exp(rate r)`` by ``e^-70``.  Larger rates: ``r in [-70/rate, 0]``.
    """
    if rate > 0.5:
        lo_r, hi_r = -70.0 / rate, 0.0
    else:
        R = max(0.0, 1.0 - lo_key)
        while -(4.0 / 3.0) * max(lo_key + R, 0.0) ** 1.5 + max(rate, 0.0) * R > -70.0 \
                or lo_key + R < 2.0:
            R += 0.5
        lo_r, hi_r = 0.0, R
    panels = max(40, int(math.ceil(hi_r - lo_r)))
    x, w = _leg(order)
    edges = np.linspace(lo_r, hi_r, panels + 1)
    rs = (0.5 * np.diff(edges)[:, None] * x[None, :] + 0.5 * (edges[1:] + edges[:-1])[:, None])
    ws = 0.5 * np.diff(edges)[:, None] * w[None, :]
    return rs.ravel(), ws.ravel()


def airy_extended_matrix(tau1: float, tau2: float, U, V) -> np.ndarray:
    """Extended Airy kernel ``K~_{tau1,tau2}(u, v)`` on ``U x V``.

    Equal times use the closed form.  Otherwise the ``r``-integral is a
    composite Gauss-Legendre matrix product: over ``(0, inf)`` for
    ``tau2 > tau1``; for ``tau2 < tau1`` either minus the integral over
    ``(-inf, 0)`` (large gaps) or the ``(0, inf)`` part minus the full-line
    Gaussian (small gaps, where the negative half-line decays too slowly).
    """
    U, V = np.asarray(U, float), np.asarray(V, float)
    if tau1 == tau2:
        return airy_static_matrix(U, V)
    d = tau1 - tau2  # weight e^{r d}
    lo = math.floor(min(U.min(), V.min()))
    rs, ws = _r_rule(float(lo), float(d))
    AU = special.airy(U[:, None] + rs[None, :])[0]
    AV = special.airy(V[:, None] + rs[None, :])[0]
    K = (AU * (ws * np.exp(rs * d))[None, :]) @ AV.T
    if d > 0.5:
        return -K
    if d > 0:
        D = U[:, None] - V[None, :]
        S = U[:, None] + V[None, :]
        K -= heat_kernel(D, 2.0 * d) * np.exp(-0.5 * d * S + d ** 3 / 12.0)
    return K


def airy_contour_matrix(tau1: float, tau2: float, U, V) -> np.ndarray:
    """Contour-convention extended Airy kernel via the conjugation identity."""
    U, V = np.asarray(U, float), np.asarray(V, float)
    Ut, Vt = U + tau1 ** 2, V + tau2 ** 2
    g = -tau1 * Ut[:, None] + tau2 * Vt[None, :] + (tau1 ** 3 - tau2 ** 3) / 3.0
    K = airy_extended_matrix(tau1, tau2, Ut, Vt)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(-g) * K
    # far nodes: the Airy factor underflows before the conjugation overflows
    return np.where(K == 0.0, 0.0, out)


def _resolve(source) -> Callable:
    if callable(source):
        return source
    if source == "airy":
        return airy_extended_matrix
    if source == "airy-contour":
        return airy_contour_matrix
    raise ValueError(f"unknown kernel source {source!r}")


# ---------------------------------------------------------------------------
# determinants


def nystrom_matrix(p: FredholmProblem) -> np.ndarray:
    """``I - W^{1/2} K W^{1/2}`` as a dense (m q) x (m q) matrix."""
    kern = _resolve(p.source)
    nodes = [interval_nodes(a, b, p.q, p.scale) for a, b in zip(p.a, p.b)]
    m, q = p.m, p.q
    M = np.empty((m * q, m * q))
    for i in range(m):
        ui, wi = nodes[i]
        for j in range(m):
            uj, wj = nodes[j]
            blk = np.asarray(kern(p.taus[i], p.taus[j], ui, uj), float)
            M[i * q:(i + 1) * q, j * q:(j + 1) * q] = (
                np.sqrt(wi)[:, None] * blk * np.sqrt(wj)[None, :])
    if not np.all(np.isfinite(M)):
        raise NibmError("non-finite entries in the Nystrom matrix")
    return np.eye(m * q) - M


def fredholm_det(p: FredholmProblem) -> float:
    """Block Nystrom value of ``det(I - K)``."""
    return float(np.linalg.det(nystrom_matrix(p)))


@dataclass
class FredholmReport:
    value: float
    q: int
    self_convergence_delta: float

    def to_dict(self):
        return dict(value=self.value, q=self.q, self_convergence_delta=self.self_convergence_delta)


def fredholm_report(p: FredholmProblem, tol: float | None = None) -> FredholmReport:
    """Value at ``q`` together with the change when ``q`` is doubled."""
    v = fredholm_det(p)
    v2 = fredholm_det(p.with_q(2 * p.q))
    delta = abs(v2 - v)
    if tol is not None and delta > tol:
        raise ConvergenceError(f"Nystrom self-convergence {delta:.2e} above {tol:.1e}",
                               residual=delta)
    return FredholmReport(v, p.q, delta)


def tw2_cdf(a: float, q: int = DEFAULT_Q) -> float:
    """Tracy-Widom (beta = 2) distribution function."""
    if not -10.0 <= a <= 10.0:
        raise ValueError("tw2_cdf is supported on [-10, 10]")
    return airy2_fdd([0.0], [a], q=q)


def airy2_fdd(taus: Sequence[float], thresholds: Sequence[float], q: int = DEFAULT_Q,
              convention: str = "standard") -> float:
    """``P(A(tau_1) <= a_1, ..., A(tau_m) <= a_m)`` for the Airy_2 process.

    ``convention="contour"`` uses the double-contour kernel of the local limit
    theorem, whose top path is ``A(tau) - tau^2``.
    """
    if len(taus) > 4:
        raise ValueError("airy2_fdd is meant for m <= 4")
    src = {"standard": "airy", "contour": "airy-contour"}[convention]
    return fredholm_det(FredholmProblem(tuple(taus), tuple(thresholds), source=src, q=q))


def tw2_moments(q: int = DEFAULT_Q, lo: float = -10.0, hi: float = 6.0, nodes: int = 80):
    """Mean and variance of TW2 from its CDF: ``E X = int_0^inf (1-F) - int_-inf^0 F``."""
    x, w = _leg(nodes)
    neg = 0.5 * (-lo) * x + 0.5 * lo
    pos = 0.5 * hi * x + 0.5 * hi
    Fn = np.array([tw2_cdf(a, q) for a in neg])
    Fp = np.array([tw2_cdf(a, q) for a in pos])
    mean = 0.5 * hi * np.dot(w, 1 - Fp) - 0.5 * (-lo) * np.dot(w, Fn)
    ex2 = 0.5 * hi * np.dot(w, 2 * pos * (1 - Fp)) - 0.5 * (-lo) * np.dot(w, 2 * neg * Fn)
    return float(mean), float(ex2 - mean ** 2)


# ---------------------------------------------------------------------------
# finite n


@dataclass
class FiniteSource:
    """Rescaled finite-n kernel as a Fredholm kernel source."""

    mn: object
    frame: object
    n: int
    policy: str = "auto"

    def __call__(self, tau1, tau2, U, V):
        from .kernels_finite import rescaled_kernel_grid
        return rescaled_kernel_grid(self.mn, self.frame, self.n, tau1, tau2, U, V, self.policy)


def finite_gap_probability(mn, frame, n: int, taus, a_low, a_high=None, eps: float = 0.05,
                           q: int = 32, policy: str = "auto") -> float:
    """Finite-n probability of no particle in the rescaled windows ``(a_j, c n^eps]``.

    Default upper ends are ``c n^eps``, the mesoscopic cutoff ``n^{eps - 2/3}``.
    """
    if a_high is None:
        a_high = [frame.c * n ** eps] * len(taus)
    a_low = [min(a, h - 1e-9) for a, h in zip(a_low, a_high)]
    p = FredholmProblem(tuple(taus), tuple(a_low), tuple(a_high), FiniteSource(mn, frame, n,
                                                                               policy), q)
    return fredholm_det(p)
