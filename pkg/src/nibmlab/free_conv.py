"""Free convolution with the semicircle via Biane's subordination maps.

For ``t > 0`` the evolved density is parametrised by

    y_t(x)   = inf{y > 0 : int dmu(s)/((x-s)^2 + y^2) <= 1/t}
    Phi_t(x) = H_t(x + i y_t(x)),   H_t(z) = z + t G(z)
    psi_t(Phi_t(x)) = y_t(x) / (pi t)

This module also finds critical times, classifies the Airy/Pearcey regime at a
designated zero ``x*`` of the initial density and provides the scaling frames
``t_n(tau), x_n(tau)`` around ``(t_cr, x*(t_cr))``.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import (ConsistencyError, DivergentIntegralError, OutOfRangeError,
                     RegimeError)
from .measures import DensitySpec, EmpiricalMeasure, Measure, stieltjes, stieltjes_derivs

AIRY_RIGHT = "AiryRight"
AIRY_LEFT = "AiryLeft"
PEARCEY = "Pearcey"


def _support(measure: Measure) -> tuple[float, float]:
    if isinstance(measure, EmpiricalMeasure):
        return float(measure.atoms[0]), float(measure.atoms[-1])
    return measure.a, measure.b


def _density_quad(f, spec: DensitySpec, x: float):
    pts = [x]
    if spec.x_star is not None:
        pts.append(spec.x_star)
    pts = [p for p in pts if spec.a < p < spec.b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(f, spec.a, spec.b, points=pts, epsabs=1e-16, epsrel=1e-13,
                              limit=400)[0]


def cauchy_integrals(measure: Measure, x: float, y: float, both: bool = True):
    """``(int dmu/((x-s)^2+y^2), int (x-s) dmu/((x-s)^2+y^2))`` for ``y > 0``."""
    if isinstance(measure, EmpiricalMeasure):
        d = x - measure.atoms
        q = d * d + y * y
        return math.fsum(1.0 / q) / measure.n, math.fsum(d / q) / measure.n
    pdf = measure.pdf
    I = _density_quad(lambda s: pdf(s) / ((x - s) ** 2 + y * y), measure, x)
    if not both:
        return I, math.nan
    J = _density_quad(lambda s: pdf(s) * (x - s) / ((x - s) ** 2 + y * y), measure, x)
    return I, J


def _complex_quad(f, spec: DensitySpec, x: float) -> complex:
    re = _density_quad(lambda s: f(s).real, spec, x)
    im = _density_quad(lambda s: f(s).imag, spec, x)
    return complex(re, im)


def subordination(measure: Measure, t: float, w: complex) -> tuple[complex, complex]:
    """``(H_t(w), H_t'(w))`` for ``Im w > 0``.

    For densities with a designated zero ``x*`` the value is assembled as
    ``x*(t) + (1 + t G1) d + t d^2 T(w)`` with ``d = w - x*`` and
    ``T(w) = int psi(s) / ((w - s)(x* - s)^2) ds``, which keeps full relative
    accuracy when ``w`` is close to ``x*``.
    """
    if isinstance(measure, EmpiricalMeasure):
        r = 1.0 / (w - measure.atoms)
        G = complex(np.sum(r)) / measure.n
        dG = -complex(np.sum(r * r)) / measure.n
        return w + t * G, 1.0 + t * dG
    xs = measure.x_star
    pdf = measure.pdf
    if xs is None or measure.kappa is None or measure.kappa <= 2:
        G = _complex_quad(lambda s: pdf(s) / (w - s), measure, w.real)
        dG = -_complex_quad(lambda s: pdf(s) / (w - s) ** 2, measure, w.real)
        return w + t * G, 1.0 + t * dG
    G0, G1 = _centre_derivs(measure)
    d = w - xs
    T = _complex_quad(lambda s: pdf(s) / ((w - s) * (xs - s) ** 2), measure, w.real)
    dT = -_complex_quad(lambda s: pdf(s) / ((w - s) ** 2 * (xs - s) ** 2), measure, w.real)
    H = xs + t * G0 + (1.0 + t * G1) * d + t * d * d * T
    dH = (1.0 + t * G1) + t * (2.0 * d * T + d * d * dT)
    return H, dH


@functools.lru_cache(maxsize=64)
def _centre_derivs_cached(key, measure):
    g = stieltjes_derivs(measure, measure.x_star, orders=1)
    return g.G0, g.G1


def _centre_derivs(measure: DensitySpec):
    return _centre_derivs_cached(id(measure), measure)


def inverse_square_moment(measure: Measure, x: float) -> float:
    """``int dmu(s)/(x-s)^2``; ``inf`` when the integral diverges."""
    if isinstance(measure, EmpiricalMeasure):
        d = x - measure.atoms
        if np.any(d == 0):
            return math.inf
        return math.fsum(d ** -2.0) / measure.n
    try:
        return -stieltjes_derivs(measure, x, orders=1).G1
    except DivergentIntegralError:
        return math.inf


def biane_y(measure: Measure, t: float, x: float) -> float:
    """Height ``y_t(x)`` of the subordination curve above ``x``."""
    if t <= 0:
        raise ValueError("t must be positive")
    if inverse_square_moment(measure, x) <= 1.0 / t:
        return 0.0
    lo_, hi_ = _support(measure)
    hi = 2.0 * math.sqrt(t) + (hi_ - lo_)  # int dmu/(.+y^2) <= 1/y^2 < 1/t beyond sqrt(t)

    def f(y):
        return t * cauchy_integrals(measure, x, y, both=False)[0] - 1.0

    lo = 0.5 * hi
    floor = 1e-15 * hi
    while f(lo) <= 0.0:
        hi = lo
        lo *= 0.5
        if lo < floor:
            return 0.0  # below resolution: psi(x) is numerically zero
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def evolve_point(measure: Measure, t: float, x: float, y: float | None = None) -> float:
    """``Phi_t(x) = H_t(x + i y_t(x))``; real to within ``1e-10``."""
    if y is None:
        y = biane_y(measure, t, x)
    if y > 0.0:
        I, J = cauchy_integrals(measure, x, y)
        resid = y * (1.0 - t * I)
        if abs(resid) > 1e-8:
            raise ConsistencyError(f"Im H_t = {resid:.3e} at x={x}")
        return x + t * J
    return x + t * stieltjes(measure, x).real


def critical_time(measure: Measure, x: float) -> float:
    """``(int dmu/(x-s)^2)^{-1}``, or 0 when the integral diverges."""
    m = inverse_square_moment(measure, x)
    return 0.0 if math.isinf(m) else 1.0 / m


# ---------------------------------------------------------------------------
# grids and inversion


@dataclass
class BianeState:
    """Monotone table of ``(x, y_t(x), Phi_t(x))`` on an interval.

    Built once; afterwards it is only read.
    """

    measure: Measure
    t: float
    xs: np.ndarray
    ys: np.ndarray
    phis: np.ndarray

    @classmethod
    def build(cls, measure: Measure, t: float, lo: float | None = None, hi: float | None = None,
              n_grid: int | None = None, refine_at: float | None = None,
              min_spacing: float = 1e-6) -> "BianeState":
        if n_grid is None:
            n_grid = 257 if isinstance(measure, EmpiricalMeasure) else 97
        a, b = _support(measure)
        pad = math.sqrt(t) + 0.5
        lo = a - pad if lo is None else lo
        hi = b + pad if hi is None else hi
        xs = list(np.linspace(lo, hi, n_grid))
        centres = [refine_at] if refine_at is not None else []
        if isinstance(measure, DensitySpec) and measure.x_star is not None:
            centres.append(measure.x_star)
        for c in centres:
            h = (hi - lo) / (n_grid - 1)
            while h > min_spacing:
                h *= 0.5
                xs.extend([c - h, c + h])
            xs.append(c)
        xs = np.unique(np.clip(np.asarray(xs), lo, hi))
        ys = np.array([biane_y(measure, t, x) for x in xs])
        phis = np.array([evolve_point(measure, t, x, y) for x, y in zip(xs, ys)])
        if np.any(np.diff(phis) < -1e-12 * (1.0 + np.abs(phis[1:]))):
            raise ConsistencyError("Phi_t is not increasing on the grid")
        phis = np.maximum.accumulate(phis)
        return cls(measure, t, xs, ys, phis)

    def _bracket(self, xi: float) -> int:
        if not self.phis[0] <= xi <= self.phis[-1]:
            raise OutOfRangeError(f"xi={xi} outside [{self.phis[0]:.6g}, {self.phis[-1]:.6g}]")
        return max(1, int(np.searchsorted(self.phis, xi)))

    def inverse(self, xi: float) -> float:
        """``Phi_t^{-1}(xi)`` by grid bracketing and local bisection."""
        i = self._bracket(xi)
        if self.phis[i] == xi:
            return float(self.xs[i])
        lo, hi = self.xs[i - 1], self.xs[i]
        return optimize.brentq(lambda x: evolve_point(self.measure, self.t, x) - xi, lo, hi,
                               xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)

    def inverse_point(self, xi: float, maxiter: int = 60) -> complex:
        """Point ``w = x + i y_t(x)`` on the curve with ``H_t(w) = xi``.

        Newton on the analytic map ``H_t`` started from the grid; falls back to
        bisection when the iterate leaves the upper half plane.
        """
        i = self._bracket(xi)
        p0, p1 = self.phis[i - 1], self.phis[i]
        lam = 0.5 if p1 == p0 else (xi - p0) / (p1 - p0)
        x0 = self.xs[i - 1] + lam * (self.xs[i] - self.xs[i - 1])
        y0 = self.ys[i - 1] + lam * (self.ys[i] - self.ys[i - 1])
        if y0 > 0 and self.ys[i - 1] > 0 and self.ys[i] > 0:
            w = curve_point(self.measure, self.t, xi, complex(x0, y0), maxiter)
            if w is not None:
                return w
        x = self.inverse(xi)
        return complex(x, biane_y(self.measure, self.t, x))

    def density(self, xi: float) -> float:
        return max(self.inverse_point(xi).imag, 0.0) / (math.pi * self.t)

    def mass(self) -> float:
        """Trapezoid mass of ``psi_t`` on the pushforward grid."""
        return float(np.trapezoid(self.ys / (math.pi * self.t), self.phis))

    def cdf_table(self):
        """``(xi, F(xi))``: cumulative trapezoid of ``psi_t`` on the pushforward grid."""
        dens = self.ys / (math.pi * self.t)
        F = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(self.phis))])
        return self.phis.copy(), F


def curve_point(measure: Measure, t: float, xi: float, w0: complex,
                maxiter: int = 60) -> complex | None:
    """Newton for ``H_t(w) = xi`` in the upper half plane; ``None`` on failure.

    ``Im H_t(w) = 0`` with ``Im w > 0`` forces ``Im w = y_t(Re w)``, so any root
    found here lies on the subordination curve.
    """
    w = complex(w0)
    best, best_res = None, math.inf
    for _ in range(maxiter):
        H, dH = subordination(measure, t, w)
        res = abs(H - xi)
        if res < best_res:
            best, best_res = w, res
        elif res > 4.0 * best_res and best_res < 1e-13 * (1.0 + abs(xi)):
            break  # stagnating at roundoff
        step = (H - xi) / dH
        while (w - step).imag <= 0 and abs(step) > 0:
            step *= 0.5
        w -= step
        if abs(step) <= 1e-14 * abs(w.imag) + 1e-17 * abs(w):
            H, _ = subordination(measure, t, w)
            if abs(H - xi) <= best_res:
                best, best_res = w, abs(H - xi)
            break
    if best is not None and best.imag > 0 and best_res < 1e-11 * (1.0 + abs(xi)):
        return best
    return None


def _measure_key(measure):
    if isinstance(measure, EmpiricalMeasure):
        return ("emp", measure.atoms.tobytes())
    return ("den", id(measure))


_STATE_CACHE: dict = {}


def biane_state(measure: Measure, t: float) -> BianeState:
    key = (_measure_key(measure), float(t))
    st = _STATE_CACHE.get(key)
    if st is None or st.measure is not measure and not isinstance(measure, EmpiricalMeasure):
        st = BianeState.build(measure, t)
        if len(_STATE_CACHE) > 64:
            _STATE_CACHE.clear()
        _STATE_CACHE[key] = st
    return st


def density_at(measure: Measure, t: float, xi: float, state: BianeState | None = None) -> float:
    """Evolved density ``psi_t(xi)``."""
    if t <= 0:
        raise ValueError("t must be positive")
    state = state or biane_state(measure, t)
    return state.density(xi)


# ---------------------------------------------------------------------------
# critical frame


@dataclass(frozen=True)
class CriticalFrame:
    x_star: float
    t_cr: float
    G: tuple
    regime: str
    c: float
    kappa: float
    eps: float

    @property
    def G0(self):
        return self.G[0]

    @property
    def is_airy(self) -> bool:
        return self.regime in (AIRY_RIGHT, AIRY_LEFT)

    @property
    def orientation(self) -> float:
        """+1 when the one-sided gap opens to the right of the critical path."""
        return -1.0 if self.regime == AIRY_LEFT else 1.0

    @property
    def space_exponent(self) -> float:
        return 2.0 / 3.0 if self.is_airy else 0.75

    @property
    def x_cr(self) -> float:
        return self.x_star + self.t_cr * self.G[0]

    def to_dict(self) -> dict:
        return {"x_star": self.x_star, "t_cr": self.t_cr, "x_star_t_cr": self.x_cr,
                "G0": self.G[0], "G1": self.G[1], "G2": self.G[2], "G3": self.G[3],
                "regime": self.regime, "c2_or_c3": self.c, "kappa": self.kappa, "eps": self.eps}


def default_eps(kappa: float, regime: str) -> float:
    """Half of the admissible upper bound on the analysis exponent."""
    if regime == PEARCEY:
        bound = 1.0 / 24.0 if math.isinf(kappa) else min((kappa - 3) / (8 * (kappa + 1)), 1 / 24)
    else:
        bound = 1.0 / 15.0 if math.isinf(kappa) else min((kappa - 2) / (6 * (kappa + 1)), 1 / 15)
    return 0.5 * bound


def classify(measure: Measure, x_star: float | None = None, tol_classify: float | None = None,
             kappa: float | None = None, eps: float | None = None) -> CriticalFrame:
    """Critical data at ``x_star`` and the Airy/Pearcey regime tag."""
    if x_star is None:
        x_star = getattr(measure, "x_star", None)
        if x_star is None:
            raise ValueError("x_star required")
    if kappa is None:
        kappa = getattr(measure, "kappa", None)
        if kappa is None:
            kappa = math.inf  # discrete measure: empty neighbourhood of x*
    if kappa <= 2:
        raise RegimeError(f"need kappa > 2 (kappa={kappa})")
    G = stieltjes_derivs(measure, x_star, orders=3 if kappa > 3 else 2)
    t_cr = -1.0 / G.G1
    G3 = G.G3
    if tol_classify is None:
        tol_classify = 1e-9 * max(1.0, abs(G3) ** (2.0 / 3.0) if not math.isnan(G3) else 1.0)
    if abs(G.G2) > tol_classify:
        regime = AIRY_RIGHT if G.G2 > 0 else AIRY_LEFT
        c = 2.0 ** (1.0 / 3.0) / (abs(G.G2) ** (1.0 / 3.0) * t_cr)
    else:
        if kappa <= 3:
            raise RegimeError("indeterminate regime: G2 vanishes but kappa <= 3")
        if not G3 < 0:
            raise RegimeError(f"Pearcey branch needs G3 < 0 (G3={G3})")
        regime = PEARCEY
        c = (6.0 / -G3) ** 0.25 / t_cr
    if eps is None:
        eps = default_eps(kappa, regime)
    return CriticalFrame(x_star=float(x_star), t_cr=t_cr, G=G.as_tuple(), regime=regime, c=c,
                         kappa=kappa, eps=eps)


def critical_path(frame: CriticalFrame, t: float) -> tuple[float, bool]:
    """``x*(t) = x* + t G0`` and whether the value is only the linearisation (``t > t_cr``)."""
    return frame.x_star + t * frame.G0, t > frame.t_cr


def frame_maps(frame: CriticalFrame, n: int, tau: float) -> tuple[float, float]:
    """``(t_n(tau), x_n(tau))`` in the frame's regime."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if frame.is_airy:
        t_n = frame.t_cr + 2.0 * tau / (frame.c ** 2 * n ** (1.0 / 3.0))
    else:
        t_n = frame.t_cr + tau / (frame.c ** 2 * math.sqrt(n))
    if t_n <= 0:
        raise OutOfRangeError(f"t_n(tau={tau}) = {t_n} <= 0 for n={n}")
    return t_n, frame.x_star + t_n * frame.G0


def time_offset(frame: CriticalFrame, n: int, tau1: float, tau2: float) -> float:
    """``t_n(tau1) - t_n(tau2)`` computed without subtracting nearby times."""
    if frame.is_airy:
        return 2.0 * (tau1 - tau2) / (frame.c ** 2 * n ** (1.0 / 3.0))
    return (tau1 - tau2) / (frame.c ** 2 * math.sqrt(n))


# ---------------------------------------------------------------------------
# local behaviour at the critical time


@dataclass(frozen=True)
class LocalFit:
    alpha: float
    prefactor: float
    sides: dict = field(default_factory=dict)
    offsets: tuple = ()
    values: tuple = ()


def local_exponent(measure: Measure, frame: CriticalFrame, k_min: int = 12, k_max: int = 28,
                   t: float | None = None, centre: float | None = None) -> LocalFit:
    """Fit ``psi_t(x) ~ C |x - x*(t)|^alpha`` on dyadic offsets ``2^-k``.

    Airy regime: only the square-root (bulk) side.  Pearcey: both sides.
    ``t`` defaults to ``t_cr``.
    """
    t = frame.t_cr if t is None else t
    centre = frame.x_star + t * frame.G0 if centre is None else centre
    if frame.regime == PEARCEY:
        sides = (-1.0, 1.0)
    else:
        sides = (-frame.orientation,)
    offs = 2.0 ** -np.arange(k_min, k_max + 1)
    logs, vals, per_side = [], [], {}
    for sgn in sides:
        ls, vs = [], []
        for d in offs:
            w = curve_point(measure, t, centre + sgn * d, frame.x_star + _local_guess(frame, t, sgn * d))
            if w is None:
                raise ConsistencyError(f"no curve point at offset {sgn * d:.3e}")
            ls.append(math.log(d))
            vs.append(math.log(w.imag / (math.pi * t)))
        slope, icpt = np.polyfit(ls, vs, 1)
        resid = np.asarray(vs) - (slope * np.asarray(ls) + icpt)
        per_side["left" if sgn < 0 else "right"] = (float(slope), float(math.exp(icpt)))
        logs += ls
        vals += vs
    slope, icpt = np.polyfit(logs, vals, 1)
    resid = np.asarray(vals) - (slope * np.asarray(logs) + icpt)
    if np.max(np.abs(resid)) > 0.05:
        warnings.warn(f"local power-law fit residual {np.max(np.abs(resid)):.3f}")
    return LocalFit(alpha=float(slope), prefactor=float(math.exp(icpt)), sides=per_side,
                    offsets=tuple(offs), values=tuple(np.exp(vals)))


def _local_guess(frame: CriticalFrame, t: float, delta: float) -> complex:
    """Upper-half-plane root of the leading local term of ``H_t - x*(t) = delta``."""
    G1, G2, G3 = frame.G[1], frame.G[2], frame.G[3]
    lin = 1.0 + t * G1
    if frame.regime == PEARCEY:
        coeffs = [t * G3 / 6.0, 0.0, lin, -delta]
    else:
        coeffs = [t * G2 / 2.0, lin, -delta]
    roots = [r for r in np.roots(coeffs) if r.imag > 0]
    if not roots:
        return complex(0.0, abs(delta) ** 0.5)
    return complex(max(roots, key=lambda r: r.imag))


def local_prefactor(frame: CriticalFrame) -> float:
    """Leading coefficient of ``psi_{t_cr}`` at the critical point.

    Airy (bulk side): ``sqrt(2) / (pi t^{3/2} |G2|^{1/2})``.
    Pearcey: ``sqrt(3) (6/|G3|)^{1/3} / (2 pi t^{4/3})``, from the local cubic
    ``H_t(z) - x*(t) ~ (t G3 / 6)(z - x*)^3``.
    """
    t = frame.t_cr
    G2, G3 = frame.G[2], frame.G[3]
    if frame.is_airy:
        return math.sqrt(2.0) / (math.pi * t ** 1.5 * abs(G2) ** 0.5)
    return math.sqrt(3.0) * (6.0 / abs(G3)) ** (1.0 / 3.0) / (2.0 * math.pi * t ** (4.0 / 3.0))
