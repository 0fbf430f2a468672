"""Limiting densities, empirical measures and their Stieltjes transforms.

Two measure types are used throughout the package:

* :class:`DensitySpec` -- an absolutely continuous probability measure on a
  bounded interval, optionally with an interior zero ``psi(x) ~ c|x - x*|^kappa``;
* :class:`EmpiricalMeasure` -- ``(1/n) sum_j delta_{x_j}`` with simple atoms.

Every function that accepts "a measure" takes either of them.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .errors import CollisionError, DivergentIntegralError, OutOfRangeError, PoleError

QUAD_LIMIT = 400
COLLISION_RTOL = 1e-14


@dataclass(frozen=True)
class DensitySpec:
    """Probability density on ``[a, b]``.

    ``regular`` (when known) is the smooth factor ``psi(s) / |s - x_star|**kappa``;
    it lets the singular Stieltjes integrals at ``x_star`` go through QUADPACK's
    algebraic-weight rule instead of brute-force subdivision.
    """

    a: float
    b: float
    pdf: Callable[[float], float]
    kind: str = "custom"
    x_star: float | None = None
    kappa: float | None = None
    norm: float = 1.0
    cdf_closed: Callable[[float], float] | None = None
    ppf_closed: Callable[[float], float] | None = None
    regular: Callable[[float], float] | None = None
    params: dict = field(default_factory=dict, compare=False)

    # -- constructors -------------------------------------------------------
    @classmethod
    def power(cls, kappa: float, a: float = -1.0, b: float = 1.0, x_star: float | None = None,
              kind: str | None = None) -> "DensitySpec":
        """``psi(x) = C |x - x_star|^kappa`` normalised on ``[a, b]``.

        ``power(4)`` is the symmetric quartic ``(5/2) x^4`` on ``[-1, 1]``;
        ``power(4, x_star=0.2)`` is ``c (x - 0.2)^4`` with ``c = 1/0.5632``.
        """
        if x_star is None:
            x_star = 0.5 * (a + b)
        if not a < x_star < b:
            raise ValueError("x_star must lie strictly inside the support")
        k1 = kappa + 1.0
        left, right = (x_star - a) ** k1, (b - x_star) ** k1
        C = k1 / (left + right)
        F_star = C * left / k1

        def pdf(x):
            x = np.asarray(x, dtype=float)
            out = np.where((x >= a) & (x <= b), C * np.abs(x - x_star) ** kappa, 0.0)
            return out if out.ndim else float(out)

        def cdf(x):
            if x <= a:
                return 0.0
            if x >= b:
                return 1.0
            if x < x_star:
                return C * (left - (x_star - x) ** k1) / k1
            return F_star + C * (x - x_star) ** k1 / k1

        def ppf(p):
            if p <= 0.0:
                return a
            if p >= 1.0:
                return b
            if p < F_star:
                return x_star - (left - p * k1 / C) ** (1.0 / k1)
            if p == F_star:
                return x_star
            return x_star + ((p - F_star) * k1 / C) ** (1.0 / k1)

        if kind is None:
            kind = "power" if math.isclose(x_star, 0.5 * (a + b)) else "shifted_power"
        return cls(a=a, b=b, pdf=pdf, kind=kind, x_star=x_star, kappa=kappa, norm=C,
                   cdf_closed=cdf, ppf_closed=ppf, regular=lambda s: C,
                   params={"kappa": kappa, "support": (a, b), "x_star": x_star})

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> "DensitySpec":
        h = 1.0 / (b - a)
        return cls(a=a, b=b, pdf=lambda x: h if a <= x <= b else 0.0, kind="uniform", norm=h,
                   cdf_closed=lambda x: min(max((x - a) * h, 0.0), 1.0),
                   ppf_closed=lambda p: a + min(max(p, 0.0), 1.0) * (b - a),
                   params={"support": (a, b)})

    @classmethod
    def from_pdf(cls, pdf: Callable[[float], float], a: float, b: float,
                 x_star: float | None = None, kappa: float | None = None,
                 normalize: bool = True, kind: str = "custom") -> "DensitySpec":
        """Wrap an arbitrary non-negative function; normalised numerically."""
        pts = [x_star] if x_star is not None and a < x_star < b else None
        Z = 1.0
        if normalize:
            Z = integrate.quad(pdf, a, b, points=pts, epsabs=0, epsrel=1e-13, limit=QUAD_LIMIT)[0]
        f = (lambda x: pdf(x) / Z) if Z != 1.0 else pdf
        reg = None
        if x_star is not None and kappa is not None:
            reg = lambda s: f(s) / abs(s - x_star) ** kappa
        return cls(a=a, b=b, pdf=f, kind=kind, x_star=x_star, kappa=kappa, norm=1.0 / Z,
                   regular=reg, params={"support": (a, b), "x_star": x_star, "kappa": kappa})

    @classmethod
    def from_table(cls, xs: Sequence[float], values: Sequence[float], x_star: float | None = None,
                   kappa: float | None = None) -> "DensitySpec":
        """Piecewise-linear density through ``(xs, values)``, normalised exactly."""
        xs = np.asarray(xs, dtype=float)
        vals = np.asarray(values, dtype=float)
        if np.any(np.diff(xs) <= 0) or np.any(vals < 0):
            raise ValueError("table needs increasing abscissae and non-negative values")
        Z = np.trapz(vals, xs)
        vals = vals / Z
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(xs))])
        a, b = float(xs[0]), float(xs[-1])

        def pdf(x):
            return float(np.interp(x, xs, vals, left=0.0, right=0.0))

        def cdf(x):
            if x <= a:
                return 0.0
            if x >= b:
                return 1.0
            i = int(np.searchsorted(xs, x, side="right")) - 1
            dx = x - xs[i]
            slope = (vals[i + 1] - vals[i]) / (xs[i + 1] - xs[i])
            return float(cum[i] + vals[i] * dx + 0.5 * slope * dx * dx)

        return cls(a=a, b=b, pdf=pdf, kind="custom-table", x_star=x_star, kappa=kappa,
                   norm=1.0 / Z, cdf_closed=cdf,
                   params={"table": (xs.tolist(), (vals * Z).tolist()), "x_star": x_star,
                           "kappa": kappa})

    def reflected(self) -> "DensitySpec":
        """Mirror image under ``x -> 2 x_star - x`` (or about the support midpoint)."""
        c = self.x_star if self.x_star is not None else 0.5 * (self.a + self.b)
        if self.kind in ("power", "shifted_power"):
            return DensitySpec.power(self.kappa, 2 * c - self.b, 2 * c - self.a, c)
        pdf = self.pdf
        return DensitySpec.from_pdf(lambda x: pdf(2 * c - x), 2 * c - self.b, 2 * c - self.a,
                                    self.x_star, self.kappa, normalize=False)

    # -- evaluation ---------------------------------------------------------
    def cdf(self, x: float) -> float:
        if self.cdf_closed is not None:
            return self.cdf_closed(x)
        if x <= self.a:
            return 0.0
        if x >= self.b:
            return 1.0
        pts = [self.x_star] if self.x_star is not None and self.a < self.x_star < x else None
        return integrate.quad(self.pdf, self.a, x, points=pts, epsabs=1e-15, epsrel=1e-13,
                              limit=QUAD_LIMIT)[0]

    def ppf(self, p: float) -> float:
        """Generalised inverse ``inf{x : F(x) >= p}``.

        Raises ``ValueError`` when ``F`` is flat at level ``p`` (non-unique quantile).
        """
        if self.ppf_closed is not None:
            return self.ppf_closed(p)
        a, b = self.a, self.b
        if p >= 1.0:
            return b
        if p <= 0.0:
            return a
        tol = 1e-13 * (b - a)
        lo = optimize.brentq(lambda x: self.cdf(x) - p, a, b, xtol=tol)
        # width of the level set {F = p}
        probe = 1e-7 * (b - a)
        if self.cdf(min(lo + probe, b)) - p <= 1e-15 and self.cdf(max(lo - probe, a)) - p >= -1e-15:
            raise ValueError(f"CDF is flat at level p={p}; quantile is not unique")
        return lo

    def mass(self) -> float:
        pts = [self.x_star] if self.x_star is not None and self.a < self.x_star < self.b else None
        return integrate.quad(self.pdf, self.a, self.b, points=pts, epsabs=0, epsrel=1e-13,
                              limit=QUAD_LIMIT)[0]

    def validate(self, exponent_tol: float = 0.05) -> dict:
        """Check normalisation and the local vanishing exponent at ``x_star``."""
        report = {"mass": self.mass()}
        report["normalized"] = abs(report["mass"] - 1.0) <= 1e-12
        if self.x_star is not None and self.kappa is not None:
            report["fitted_kappa"] = fit_vanishing_exponent(self)
            report["kappa_ok"] = abs(report["fitted_kappa"] - self.kappa) <= exponent_tol
            report["zero_at_x_star"] = self.pdf(self.x_star) == 0.0
        return report


def fit_vanishing_exponent(spec: DensitySpec, decades: int = 6) -> float:
    """Least-squares slope of ``log psi`` against ``log|x - x*|`` on both sides."""
    xs = spec.x_star
    room = min(xs - spec.a, spec.b - xs)
    h = room * 0.1 * np.logspace(0, -decades, 4 * decades + 1)
    logs, vals = [], []
    for side in (-1.0, 1.0):
        for d in h:
            v = spec.pdf(xs + side * d)
            if v > 0:
                logs.append(math.log(d))
                vals.append(math.log(v))
    return float(np.polyfit(logs, vals, 1)[0])


@dataclass(frozen=True)
class EmpiricalMeasure:
    """``(1/n) sum_j delta_{x_j}``; atoms are stored sorted and must be simple."""

    atoms: np.ndarray

    def __post_init__(self):
        x = np.sort(np.asarray(self.atoms, dtype=float).ravel())
        if x.size == 0:
            raise ValueError("empty measure")
        if not np.all(np.isfinite(x)):
            raise ValueError("atoms must be finite")
        span = max(x[-1] - x[0], 1.0)
        if x.size > 1 and np.min(np.diff(x)) <= COLLISION_RTOL * span:
            raise CollisionError("two atoms closer than the collision tolerance")
        x.setflags(write=False)
        object.__setattr__(self, "atoms", x)

    @property
    def n(self) -> int:
        return int(self.atoms.size)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def cdf(self, x: float) -> float:
        return np.searchsorted(self.atoms, x, side="right") / self.n

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "position"])
            for i, v in enumerate(self.atoms):
                w.writerow([i, repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalMeasure":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"index", "position"}:
            raise ValueError("expected CSV header 'index,position'")
        return cls(np.array([float(r["position"]) for r in rows]))


Measure = Union[DensitySpec, EmpiricalMeasure]


@dataclass(frozen=True)
class StieltjesDerivatives:
    """``G_j = G^{(j)}(x) = (-1)^j j! int dmu(s) / (x - s)^{j+1}``."""

    x: float
    G0: float
    G1: float
    G2: float
    G3: float

    def as_tuple(self):
        return (self.G0, self.G1, self.G2, self.G3)


# ---------------------------------------------------------------------------
# initial configurations


@dataclass(frozen=True)
class DisplacementRule:
    """How quantiles landing near ``x*`` are pushed away.

    Any atom with ``|x - x*| < m h`` (``h = n^{-1/(kappa+1)}``) is moved outward
    by ``shift * h``.  An atom sitting exactly on ``x*`` moves towards the side
    with more room (right on ties).
    """

    m: float = 0.5
    shift: float = 0.6


def quantile_init(spec: DensitySpec, n: int, rule: DisplacementRule | None = None,
                  placement: str = "right") -> EmpiricalMeasure:
    """Atoms at the ``j/n`` quantiles (``placement="right"``) or at the
    ``(j - 1/2)/n`` quantiles (``placement="midpoint"``), ``j = 1..n``."""
    if n < 2:
        raise ValueError("need n >= 2")
    if placement == "right":
        probs = np.arange(1, n + 1) / n
    elif placement == "midpoint":
        probs = (np.arange(1, n + 1) - 0.5) / n
    else:
        raise ValueError(f"unknown placement {placement!r}")
    x = np.array([spec.ppf(p) for p in probs])
    if np.any(np.diff(x) <= 0):
        raise ValueError("quantiles not strictly increasing (flat CDF region)")
    if spec.x_star is not None and spec.kappa is not None:
        rule = rule or DisplacementRule()
        x = _displace(x, spec.x_star, spec.kappa, rule)
    return EmpiricalMeasure(x)


def _displace(x: np.ndarray, x_star: float, kappa: float, rule: DisplacementRule) -> np.ndarray:
    n = x.size
    h = n ** (-1.0 / (kappa + 1.0))
    x = x.copy()
    bad = np.flatnonzero(np.abs(x - x_star) < rule.m * h)
    for j in bad:
        d = x[j] - x_star
        if d == 0.0:
            room_left = x_star - x[j - 1] if j > 0 else np.inf
            room_right = x[j + 1] - x_star if j < n - 1 else np.inf
            sign = 1.0 if room_right >= room_left else -1.0
        else:
            sign = math.copysign(1.0, d)
        x[j] = x[j] + sign * rule.shift * h
    if np.any(np.diff(x) <= 0):
        raise CollisionError(
            f"displacement {rule.shift}*n^(-1/(kappa+1)) breaks the ordering at n={n}; "
            "use a smaller shift or the midpoint placement")
    return x


def cdf_distance(mn: EmpiricalMeasure, other: Measure) -> float:
    """Exact ``sup_x |F_n(x) - F(x)|``.

    For a continuous ``F`` the supremum sits at a left or right limit of an atom.
    """
    n = mn.n
    if isinstance(other, EmpiricalMeasure):
        pts = np.union1d(mn.atoms, other.atoms)
        diffs = [abs(mn.cdf(p) - other.cdf(p)) for p in pts]
        return float(max(diffs))
    F = np.array([other.cdf(v) for v in mn.atoms])
    j = np.arange(1, n + 1)
    return float(max(np.max(np.abs(j / n - F)), np.max(np.abs((j - 1) / n - F))))


def assumption2_constant(mn: EmpiricalMeasure, spec: DensitySpec) -> float:
    """``M = n sup|F_n - F|``; acceptance thresholds are left to the caller."""
    return mn.n * cdf_distance(mn, spec)


def gap_check(mn: EmpiricalMeasure, x_star: float, kappa: float, m: float) -> bool:
    """True iff no atom lies in ``[x* - m n^{-1/(kappa+1)}, x* + m n^{-1/(kappa+1)}]``."""
    if m <= 0:
        raise ValueError("m must be positive")
    r = m * mn.n ** (-1.0 / (kappa + 1.0))
    return not bool(np.any(np.abs(mn.atoms - x_star) <= r))


# ---------------------------------------------------------------------------
# Stieltjes transforms


def _quad(f, a, b, points=None, **kw):
    """QUADPACK with a tolerance check on the returned error estimate.

    Roundoff warnings are expected for integrals that vanish by symmetry; only
    an error estimate above ``1e-10`` relative (or absolute, near zero) is reported.
    """
    opts = dict(epsabs=1e-15, epsrel=1e-12, limit=QUAD_LIMIT)
    opts.update(kw)
    if points and "weight" not in kw:
        opts["points"] = [p for p in points if a < p < b] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, **opts)[:2]
    if err > 1e-10 * max(abs(val), 1e-2):
        warnings.warn(f"quadrature error estimate {err:.2e} for value {val:.6e}",
                      integrate.IntegrationWarning, stacklevel=2)
    return val


def stieltjes(measure: Measure, z: complex) -> complex:
    """``G(z) = int dmu(s) / (z - s)``.

    For a density and real ``z`` inside the support the principal value is returned.
    """
    z = complex(z)
    if isinstance(measure, EmpiricalMeasure):
        d = z - measure.atoms
        if np.any(d == 0):
            raise PoleError(f"z={z} is an atom")
        return complex(np.mean(1.0 / d))
    spec = measure
    x, y = z.real, z.imag
    pts = [x]
    if spec.x_star is not None:
        pts.append(spec.x_star)
    if y == 0.0:
        if spec.a < x < spec.b:
            pv = _quad(spec.pdf, spec.a, spec.b, weight="cauchy", wvar=x)
            return complex(-pv)
        return complex(_quad(lambda s: spec.pdf(s) / (x - s), spec.a, spec.b, points=pts))
    re = _quad(lambda s: spec.pdf(s) * (x - s) / ((x - s) ** 2 + y * y), spec.a, spec.b, points=pts)
    im = _quad(lambda s: spec.pdf(s) / ((x - s) ** 2 + y * y), spec.a, spec.b, points=pts)
    return complex(re, -y * im)


def _moment(spec: DensitySpec, x: float, j: int) -> float:
    """``int psi(s) / (x - s)^{j+1} ds`` for a density."""
    a, b = spec.a, spec.b
    p = j + 1
    if x < a or x > b:
        return _quad(lambda s: spec.pdf(s) / (x - s) ** p, a, b)
    at_star = spec.x_star is not None and abs(x - spec.x_star) <= 1e-14 * (b - a)
    if not at_star:
        if j == 0:
            return -_quad(spec.pdf, a, b, weight="cauchy", wvar=x)
        raise DivergentIntegralError(
            f"int dmu/(x-s)^{p} diverges at x={x} inside the support away from the critical point")
    kappa = spec.kappa
    if kappa is None or kappa <= j:
        raise DivergentIntegralError(
            f"order j={j} needs kappa > {j} at the critical point (kappa={kappa})")
    xs = spec.x_star
    reg = spec.regular or (lambda s: spec.pdf(s) / abs(s - xs) ** kappa)
    alpha = kappa - p
    # left piece: s < x*, (x* - s)^{-p} psi(s) = (x*-s)^alpha reg(s)
    left = _quad(reg, a, xs, weight="alg", wvar=(0.0, alpha)) if xs > a else 0.0
    right = _quad(reg, xs, b, weight="alg", wvar=(alpha, 0.0)) if b > xs else 0.0
    return left + (-1.0) ** p * right


def stieltjes_derivs(measure: Measure, x: float, orders: int = 3) -> StieltjesDerivatives:
    """``G_0..G_3`` at a real point (orders above ``orders`` are reported as NaN)."""
    x = float(x)
    out = []
    for j in range(4):
        if j > orders:
            out.append(math.nan)
            continue
        if isinstance(measure, EmpiricalMeasure):
            d = x - measure.atoms
            if np.any(d == 0):
                raise PoleError(f"x={x} is an atom")
            mom = float(math.fsum(d ** (-(j + 1))) / measure.n)
        else:
            mom = _moment(measure, x, j)
        out.append((-1) ** j * math.factorial(j) * mom)
    return StieltjesDerivatives(x, *out)


def log_potential(mn: EmpiricalMeasure, z: complex) -> complex:
    """``(1/n) sum_j log(z - x_j)`` with the principal branch in every term."""
    d = complex(z) - mn.atoms.astype(complex)
    if np.any(d == 0):
        raise PoleError(f"z={z} is an atom")
    return complex(np.mean(np.log(d)))


def expansion_residual(mn: EmpiricalMeasure, base: Measure, eps: float, regime: str,
                       x_star: float | None = None, n_radii: int = 12, n_angles: int = 48,
                       radius: float | None = None) -> float:
    """Max over a polar grid of ``|G_{mu_n}(z) - sum_{j<=J} G_j (z-x*)^j / j!|``.

    ``J = 2`` with disk radius ``n^{-1/3+eps}`` (Airy), ``J = 3`` with radius
    ``n^{-1/4+eps}`` (Pearcey).  ``G_j`` are taken from ``base`` at ``x_star``.
    Grid points that hit an atom are skipped with a warning.
    """
    if x_star is None:
        x_star = getattr(base, "x_star", None)
    if x_star is None:
        raise ValueError("x_star required")
    regime = regime.lower()
    if regime.startswith("airy"):
        J, p = 2, -1.0 / 3.0
    elif regime.startswith("pearcey"):
        J, p = 3, -0.25
    else:
        raise ValueError(f"unknown regime {regime!r}")
    G = stieltjes_derivs(base, x_star, orders=J).as_tuple()
    r_max = radius if radius is not None else mn.n ** (p + eps)
    radii = r_max * np.linspace(0.0, 1.0, n_radii + 1)
    angles = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    zs = [complex(x_star)] + [x_star + r * np.exp(1j * th) for r in radii[1:] for th in angles]
    worst = 0.0
    for z in zs:
        if np.any(mn.atoms == z):
            warnings.warn(f"grid point {z} coincides with an atom; skipped")
            continue
        w = z - x_star
        approx = sum(G[j] * w ** j / math.factorial(j) for j in range(J + 1))
        worst = max(worst, abs(stieltjes(mn, z) - approx))
    return worst
