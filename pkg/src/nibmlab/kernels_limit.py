"""Extended Airy and extended Pearcey kernels.

Both kernels are double contour integrals plus a Gaussian heat term for
reversed time order.  The contours are deformed so that the two integration
paths never meet: the Airy contours get separated vertices, and the Pearcey
contour Gamma splits into a right and a left wedge placed on either side of the
imaginary axis.  With disjoint contours the integrand is smooth and a tensor
Gauss-Legendre rule converges geometrically.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, OutOfRangeError

LOG_TAIL = 40.0  # integrand truncated where it has dropped by e^-40 from its vertex value


def heat_kernel(dx, var):
    """Gaussian ``exp(-dx^2 / (2 var)) / sqrt(2 pi var)``; shared by every module."""
    dx = np.asarray(dx, dtype=float)
    return np.exp(-dx * dx / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


def airy_heat(tau1, tau2, u, v):
    """Heat part ``(4 pi d)^{-1/2} exp(-(u-v)^2 / (4 d))``, ``d = tau1 - tau2 > 0``."""
    if tau1 <= tau2:
        return np.zeros(np.broadcast(u, v).shape)[()]
    return heat_kernel(np.subtract(u, v), 2.0 * (tau1 - tau2))


def pearcey_heat(tau1, tau2, u, v):
    """Heat part ``(2 pi d)^{-1/2} exp(-(u-v)^2 / (2 d))``, ``d = tau1 - tau2 > 0``."""
    if tau1 <= tau2:
        return np.zeros(np.broadcast(u, v).shape)[()]
    return heat_kernel(np.subtract(u, v), tau1 - tau2)


# ---------------------------------------------------------------------------
# Airy function


def airy_fn(x, deriv: bool = False):
    """``Ai(x)`` (or ``(Ai, Ai')`` when ``deriv``) for ``|x| <= 50``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < -50.0) or np.any(x > 50.0):
        raise OutOfRangeError("airy_fn is limited to |x| <= 50")
    ai, aip, _, _ = special.airy(x)
    if deriv:
        return ai, aip
    return ai


# ---------------------------------------------------------------------------
# contours


@dataclass(frozen=True)
class RayContour:
    """Union of rays ``origin + r e^{i angle}``, ``r in [0, R]``.

    ``signs[k] = +1`` if ray ``k`` is traversed away from its origin.
    """

    origins: tuple
    angles: tuple
    signs: tuple
    R: tuple
    panels: int = 6
    order: int = 24

    def nodes(self):
        """Quadrature nodes ``z`` and complex weights ``dz`` for the whole contour."""
        x, w = np.polynomial.legendre.leggauss(self.order)
        zs, ws = [], []
        for o, a, s, R in zip(self.origins, self.angles, self.signs, self.R):
            e = np.exp(1j * a)
            # panels cluster geometrically towards the vertex
            edges = R * (np.linspace(0.0, 1.0, self.panels + 1) ** 1.5)
            for lo, hi in zip(edges[:-1], edges[1:]):
                r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
                zs.append(o + r * e)
                ws.append(s * e * 0.5 * (hi - lo) * w)
        return np.concatenate(zs), np.concatenate(ws)

    def scaled(self, factor: float = 1.5, refine: int = 1) -> "RayContour":
        return RayContour(self.origins, self.angles, self.signs,
                          tuple(r * factor for r in self.R), self.panels * refine, self.order)


def _ray_length(phase, origin, angle, tail=LOG_TAIL, r_max=60.0):
    """Ray length beyond which ``Re phase`` stays ``tail`` below its maximum on the ray."""
    r = np.linspace(0.0, r_max, 6001)
    re = np.real(phase(origin + r * np.exp(1j * angle)))
    last = np.flatnonzero(re >= re.max() - tail)[-1]
    return max(1.1 * float(r[last]), 1.0)


def _airy_vertices(tau1, tau2, u, v, gap=1.0):
    """Real vertices ``(sigma_zeta, sigma_omega)`` near the saddle points, ``sigma_zeta > sigma_omega``."""
    dz = tau2 * tau2 + v
    sz = tau2 + math.sqrt(dz) if dz > 0 else tau2
    dw = tau1 * tau1 + u
    sw = tau1 - math.sqrt(dw) if dw > 0 else tau1
    if sz - sw < gap:
        mid = 0.5 * (sz + sw)
        sz, sw = mid + 0.5 * gap, mid - 0.5 * gap
    return sz, sw


def _airy_phases(tau1, tau2, u, v):
    A = lambda z: z ** 3 / 3.0 - v * z - tau2 * z * z
    B = lambda w: -w ** 3 / 3.0 + u * w + tau1 * w * w
    return A, B


def airy_contours(tau1, tau2, u, v, panels=6, order=24):
    """Sigma (vertex right, rays +-pi/3) and Gamma (vertex left, rays +-2pi/3)."""
    sz, sw = _airy_vertices(tau1, tau2, u, v)
    A, B = _airy_phases(tau1, tau2, u, v)
    Rz = max(_ray_length(A, sz, math.pi / 3), _ray_length(A, sz, -math.pi / 3))
    Rw = max(_ray_length(B, sw, 2 * math.pi / 3), _ray_length(B, sw, -2 * math.pi / 3))
    # Sigma: from inf e^{-i pi/3} to the vertex, then out to inf e^{i pi/3}
    sigma = RayContour((sz, sz), (math.pi / 3, -math.pi / 3), (1, -1), (Rz, Rz), panels, order)
    gamma = RayContour((sw, sw), (2 * math.pi / 3, -2 * math.pi / 3), (1, -1), (Rw, Rw), panels,
                       order)
    return sigma, gamma


def _double_contour(A_vals, B_vals, zz, wz, ww, wwts):
    """``(2 pi i)^{-2} sum_ij wz_i e^{A_i} ww_j e^{B_j} / (z_i - w_j)`` for batches.

    ``A_vals``: (P, Nz) phases, ``B_vals``: (P, Nw); returns length-P array.
    Exponents are shifted by their maxima before exponentiation.
    """
    sa = np.max(A_vals.real, axis=1, keepdims=True)
    sb = np.max(B_vals.real, axis=1, keepdims=True)
    a = np.exp(A_vals - sa) * wz
    b = np.exp(B_vals - sb) * wwts
    C = 1.0 / (zz[:, None] - ww[None, :])
    val = np.einsum("pi,ij,pj->p", a, C, b)
    return val * np.exp(sa[:, 0] + sb[:, 0]) / (2j * np.pi) ** 2


def _airy_contour_part(tau1, tau2, u, v, panels=6, order=24, scale=1.0):
    sigma, gamma = airy_contours(tau1, tau2, u, v, panels, order)
    if scale != 1.0:
        sigma, gamma = sigma.scaled(scale), gamma.scaled(scale)
    zz, wz = sigma.nodes()
    ww, wwt = gamma.nodes()
    A, B = _airy_phases(tau1, tau2, u, v)
    return _double_contour(A(zz)[None, :], B(ww)[None, :], zz, wz, ww, wwt)[0]


def airy_kernel(tau1: float, tau2: float, u: float, v: float, check: bool = False,
                panels: int = 6, order: int = 24) -> float:
    """Extended Airy kernel by double-contour quadrature.

    With ``check`` the value is recomputed with refined panels and 1.5x longer
    rays; a difference above 1e-10 raises ``ConvergenceError``.
    """
    val = _airy_contour_part(tau1, tau2, u, v, panels, order)
    if check:
        ref = _airy_contour_part(tau1, tau2, u, v, 2 * panels, order, scale=1.5)
        if abs(ref - val) > 1e-10 * max(1.0, abs(ref)):
            raise ConvergenceError("Airy contour quadrature not converged", residual=abs(ref - val))
    if abs(val.imag) > 1e-8 * max(1.0, abs(val.real)):
        warnings.warn(f"Airy kernel imaginary residue {val.imag:.2e}")
    out = val.real
    if tau1 > tau2:
        out -= float(airy_heat(tau1, tau2, u, v))
    return out


def airy_kernel_grid(tau1, tau2, us, vs, panels=6, order=24) -> np.ndarray:
    """``airy_kernel`` on the outer grid ``us x vs`` (rows: u)."""
    us = np.atleast_1d(np.asarray(us, float))
    vs = np.atleast_1d(np.asarray(vs, float))
    out = np.empty((us.size, vs.size))
    for i, u in enumerate(us):
        for j, v in enumerate(vs):
            out[i, j] = airy_kernel(tau1, tau2, u, v, panels=panels, order=order)
    return out


# ---------------------------------------------------------------------------
# Airy-function representation


def _ai_product_integral(u, v, rate, lo, hi):
    f = lambda r: math.exp(rate * r) * special.airy(u + r)[0] * special.airy(v + r)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, lo, hi, epsabs=1e-15, epsrel=1e-13, limit=400)
    return val


def _upper_cutoff(u, v, rate):
    # Ai(x)^2 ~ exp(-4/3 x^1.5): stop once the product is far below 1e-20
    m = min(u, v)
    r = max(0.0, 1.0 - m)
    while (-(2.0 / 3.0) * ((u + r) ** 1.5 + (v + r) ** 1.5) + rate * r) > -55.0 or u + r < 1.0:
        r += 0.5
    return r


def airy_kernel_rep2(tau1: float, tau2: float, u: float, v: float) -> float:
    """Extended Airy kernel in the ``int e^{-r(tau2-tau1)} Ai(u+r) Ai(v+r) dr`` convention.

    For ``tau2 < tau1`` the integral over ``(-inf, 0)`` is replaced by
    ``int_0^inf`` minus the full-line value, which is a closed-form Gaussian.
    """
    d = tau1 - tau2
    rate = d  # e^{-r(tau2 - tau1)} = e^{r d}
    hi = _upper_cutoff(u, v, rate)
    head = _ai_product_integral(u, v, rate, 0.0, hi)
    if tau2 >= tau1:
        return head
    # int_R e^{rd} Ai(u+r) Ai(v+r) dr
    full = float(heat_kernel(u - v, 2.0 * d)) * math.exp(-0.5 * d * (u + v) + d ** 3 / 12.0)
    return head - full


def airy_conjugate(tau1: float, tau2: float, u: float, v: float, kernel=airy_kernel) -> float:
    """Map the contour convention onto the rep2 convention.

    ``exp(-tau1 u + tau2 v + (tau1^3 - tau2^3)/3) K(tau1, tau2, u - tau1^2, v - tau2^2)``.
    """
    g = -tau1 * u + tau2 * v + (tau1 ** 3 - tau2 ** 3) / 3.0
    return math.exp(g) * kernel(tau1, tau2, u - tau1 ** 2, v - tau2 ** 2)


def airy_kernel_via_rep2(tau1: float, tau2: float, u: float, v: float) -> float:
    """Contour-convention kernel computed from the Airy-function form."""
    g = -tau1 * (u + tau1 ** 2) + tau2 * (v + tau2 ** 2) + (tau1 ** 3 - tau2 ** 3) / 3.0
    return math.exp(-g) * airy_kernel_rep2(tau1, tau2, u + tau1 ** 2, v + tau2 ** 2)


def airy_diagonal(u: float) -> float:
    """Single-time ``K(u, u) = Ai'(u)^2 - u Ai(u)^2``."""
    ai, aip = airy_fn(u, deriv=True)
    return float(aip * aip - u * ai * ai)


def airy_kernel_static(u: float, v: float) -> float:
    """Single-time Airy kernel in closed form."""
    if u == v:
        return airy_diagonal(u)
    au, apu = airy_fn(u, deriv=True)
    av, apv = airy_fn(v, deriv=True)
    return float((au * apv - apu * av) / (u - v))


# ---------------------------------------------------------------------------
# Pearcey


def _pearcey_phases(tau1, tau2, u, v):
    A = lambda z: -z ** 4 / 4.0 - tau2 * z * z / 2.0 - v * z
    B = lambda w: w ** 4 / 4.0 + tau1 * w * w / 2.0 + u * w
    return A, B


def pearcey_contours(tau1, tau2, u, v, delta=1.0, panels=6, order=24):
    """zeta on the imaginary axis; Gamma as a right wedge (vertex +delta, rays
    +-pi/4) and a left wedge (vertex -delta, rays +-3pi/4)."""
    A, B = _pearcey_phases(tau1, tau2, u, v)
    Rz = max(_ray_length(A, 0.0, math.pi / 2), _ray_length(A, 0.0, -math.pi / 2))
    zeta = RayContour((0.0, 0.0), (math.pi / 2, -math.pi / 2), (1, -1), (Rz, Rz), panels, order)
    angs = (math.pi / 4, -math.pi / 4, 3 * math.pi / 4, -3 * math.pi / 4)
    origs = (delta, delta, -delta, -delta)
    # from inf e^{i pi/4} in, out to inf e^{-i pi/4}; from the vertex out to
    # inf e^{3 i pi/4}, and in from inf e^{-3 i pi/4}
    signs = (-1, 1, 1, -1)
    Rw = tuple(_ray_length(B, o, a) for o, a in zip(origs, angs))
    gamma = RayContour(origs, angs, signs, Rw, panels, order)
    return zeta, gamma


def _pearcey_contour_part(tau1, tau2, u, v, delta=1.0, panels=6, order=24, scale=1.0):
    zeta, gamma = pearcey_contours(tau1, tau2, u, v, delta, panels, order)
    if scale != 1.0:
        zeta, gamma = zeta.scaled(scale), gamma.scaled(scale)
    zz, wz = zeta.nodes()
    ww, wwt = gamma.nodes()
    A, B = _pearcey_phases(tau1, tau2, u, v)
    return _double_contour(A(zz)[None, :], B(ww)[None, :], zz, wz, ww, wwt)[0]


def pearcey_kernel_complex(tau1, tau2, u, v, delta=1.0, panels=6, order=24, scale=1.0) -> complex:
    """Raw complex double-contour value (heat term not included)."""
    return _pearcey_contour_part(tau1, tau2, u, v, delta, panels, order, scale)


def pearcey_kernel(tau1: float, tau2: float, u: float, v: float, check: bool = False,
                   delta: float = 1.0, panels: int = 6, order: int = 24) -> float:
    """Extended Pearcey kernel."""
    val = _pearcey_contour_part(tau1, tau2, u, v, delta, panels, order)
    if check:
        ref = _pearcey_contour_part(tau1, tau2, u, v, delta, 2 * panels, order, scale=1.5)
        if abs(ref - val) > 1e-10 * max(1.0, abs(ref)):
            raise ConvergenceError("Pearcey contour quadrature not converged",
                                   residual=abs(ref - val))
    if abs(val.imag) > 1e-8 * max(1.0, abs(val.real)):
        warnings.warn(f"Pearcey kernel imaginary residue {val.imag:.2e}")
    out = val.real
    if tau1 > tau2:
        out -= float(pearcey_heat(tau1, tau2, u, v))
    return out


def limit_kernel(regime: str, tau1: float, tau2: float, u: float, v: float) -> float:
    if regime.lower().startswith("airy"):
        return airy_kernel(tau1, tau2, u, v)
    if regime.lower().startswith("pearcey"):
        return pearcey_kernel(tau1, tau2, u, v)
    raise ValueError(f"unknown regime {regime!r}")
