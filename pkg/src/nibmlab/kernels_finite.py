"""Finite-n space-time correlation kernel of NIBM.

With ``P(z) = prod_k (z - x_k)`` the kernel is

    K(x, y) = n / ((2 pi i)^2 sqrt(s t)) int dz int dw
              P(z) e^{n(z-y)^2/(2t)} e^{-n(w-x)^2/(2s)} / (P(w) (z - w))
              - 1(s > t) sqrt(n / (2 pi (s-t))) e^{-n (x-y)^2 / (2(s-t))}

The w-integral is a finite residue sum over the atoms.  Rotating the z-line
to ``y + i sqrt(2t/n) xi`` turns each remaining z-integral into a Gaussian
moment of the polynomial ``P(z)/(z - x_j)``:

    K_main = sqrt(2 n / s) / (2 pi) * sum_j e^{-n(x_j-x)^2/(2s)} / P'(x_j) * I_j(y)
    I_j(y) = int e^{-xi^2} Re[P(z)/(z - x_j)] dxi,   z = y + i h xi,  h = sqrt(2t/n)

The residue sum cancels heavily near criticality (about 0.77 bits per
particle), so three precision policies are offered:

``double``        Gauss-Hermite in float64, cancellation detector.
``compensated``   same terms, exactly rounded summation and an error bound.
``extended``      ball arithmetic (python-flint) with adaptive working precision.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .errors import CollisionError, ConvergenceError, PoleError, PrecisionError
from .free_conv import CriticalFrame, biane_y, evolve_point, frame_maps, time_offset
from .kernels_limit import heat_kernel
from .measures import EmpiricalMeasure

POLICIES = ("double", "compensated", "extended", "auto")
DETECT_RATIO = 1e-10
TARGET_BITS = 60


# ---------------------------------------------------------------------------
# residue data


@dataclass(frozen=True)
class ResidueTable:
    """``L_j = sum_{k != j} log|x_j - x_k|`` and ``s_j = prod_{k != j} sign(x_j - x_k)``."""

    atoms: np.ndarray
    L: np.ndarray
    sign: np.ndarray

    @classmethod
    def build(cls, mn: EmpiricalMeasure) -> "ResidueTable":
        x = mn.atoms
        n = x.size
        L = np.empty(n)
        sgn = np.empty(n)
        for j in range(n):
            d = np.delete(x[j] - x, j)
            if np.any(d == 0):
                raise CollisionError("repeated atoms: residues are not simple")
            L[j] = math.fsum(np.log(np.abs(d)))
            sgn[j] = -1.0 if np.count_nonzero(d < 0) % 2 else 1.0
        return cls(x, L, sgn)

    @property
    def n(self) -> int:
        return self.atoms.size


_TABLES: dict = {}


def residue_table(mn: EmpiricalMeasure) -> ResidueTable:
    key = mn.atoms.tobytes()
    tab = _TABLES.get(key)
    if tab is None:
        if len(_TABLES) > 32:
            _TABLES.clear()
        tab = _TABLES[key] = ResidueTable.build(mn)
    return tab


# ---------------------------------------------------------------------------
# queries


@dataclass(frozen=True)
class KernelQuery:
    """Space-time point pair ``(s, x), (t, y)``.

    In rescaled mode ``frame, n, tau1, tau2, u, v`` are set and the absolute
    coordinates are derived from them.
    """

    s: float
    t: float
    x: float
    y: float
    policy: str = "double"
    frame: CriticalFrame | None = None
    n: int | None = None
    tau1: float | None = None
    tau2: float | None = None
    u: float | None = None
    v: float | None = None

    def __post_init__(self):
        if self.s <= 0 or self.t <= 0:
            raise ValueError("times must be positive")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown precision policy {self.policy!r}")
        if self.frame is not None:
            ref = KernelQuery.rescaled(self.frame, self.n, self.tau1, self.tau2, self.u, self.v)
            if (ref.s, ref.t, ref.x, ref.y) != (self.s, self.t, self.x, self.y):
                raise ValueError("rescaled query inconsistent with its frame")

    @classmethod
    def rescaled(cls, frame: CriticalFrame, n: int, tau1: float, tau2: float, u: float,
                 v: float, policy: str = "double") -> "KernelQuery":
        scale = space_scale(frame, n)
        s, xc = frame_maps(frame, n, tau1)
        t, yc = frame_maps(frame, n, tau2)
        o = frame.orientation
        obj = cls.__new__(cls)
        for k, val in dict(s=s, t=t, x=xc + o * u / scale, y=yc + o * v / scale,
                           policy=policy, frame=frame, n=n, tau1=tau1, tau2=tau2, u=u,
                           v=v).items():
            object.__setattr__(obj, k, val)
        return obj


def space_scale(frame: CriticalFrame, n: int) -> float:
    """``c n^p`` with ``p = 2/3`` (Airy) or ``3/4`` (Pearcey)."""
    return frame.c * n ** frame.space_exponent


def gauge(frame: CriticalFrame, n: int, s: float, x: float) -> float:
    """``f_n(s, x) = -n G0 x + n G0^2 s / 2``."""
    G0 = frame.G0
    return -n * G0 * x + 0.5 * n * G0 * G0 * s


# ---------------------------------------------------------------------------
# double / compensated evaluation


@lru_cache(maxsize=64)
def _hermgauss(m: int):
    return np.polynomial.hermite.hermgauss(m)


def _y_side_double(atoms, t, ys, n, log_shift_y=None):
    """Gauss-Hermite terms ``w_m Re[P(z_m)/(z_m - x_j)]`` for each y.

    Returns (terms, logscale) with terms shaped (len(ys), n, M) so that the
    true terms are ``terms * exp(logscale[b])``.
    """
    M = (n + 1) // 2 + 1
    xi, w = _hermgauss(M)
    h = math.sqrt(2.0 * t / n)
    out, scales = [], []
    for k, y in enumerate(ys):
        z = y + 1j * h * xi  # (M,)
        diff = z[:, None] - atoms[None, :]  # (M, n)
        zero = diff == 0
        lz = np.log(np.where(zero, 1.0, diff))
        # log of prod_{k != j}; a vanishing factor k0 kills every column but k0
        logQ = lz.sum(axis=1)[:, None] - lz
        nz = zero.sum(axis=1)[:, None] - zero
        logQ = np.where(nz > 0, -np.inf, logQ)
        if log_shift_y is not None:
            logQ = logQ + log_shift_y[k]
        sc = float(np.max(logQ.real[np.isfinite(logQ.real)]))
        T = (w[:, None] * np.exp(logQ - sc).real).T  # (n, M)
        out.append(T)
        scales.append(sc)
    return np.array(out), np.array(scales)


def _x_side_double(tab: ResidueTable, s, xs, n, log_shift_x=None):
    """``log|A_j(x)|`` and sign for each x; ``A_j = e^{-n(x_j-x)^2/(2s)} / P'(x_j)``."""
    lx = -n * (tab.atoms[None, :] - np.asarray(xs)[:, None]) ** 2 / (2.0 * s) - tab.L[None, :]
    if log_shift_x is not None:
        lx = lx + np.asarray(log_shift_x)[:, None]
    return lx, np.broadcast_to(tab.sign, lx.shape)


def _prefactor(n, s):
    return math.sqrt(2.0 * n / s) / (2.0 * math.pi)


def _main_double(mn, s, t, xs, ys, policy, fx=None, fy=None):
    tab = residue_table(mn)
    n = tab.n
    Ty, sy = _y_side_double(tab.atoms, t, ys, n, fy)
    lx, sgn = _x_side_double(tab, s, xs, n, fx)
    out = np.empty((len(xs), len(ys)))
    ratio = np.empty_like(out)
    pref = _prefactor(n, s)
    for a in range(len(xs)):
        sx = float(np.max(lx[a]))
        Ax = sgn[a] * np.exp(lx[a] - sx)  # (n,)
        for b in range(len(ys)):
            terms = Ax[:, None] * Ty[b]  # (n, M)
            if policy == "compensated":
                val = math.fsum(terms.ravel())
                bound = (n + 4) * np.finfo(float).eps * float(np.sum(np.abs(terms)))
            else:
                val = float(np.sum(terms @ np.ones(terms.shape[1])))
                bound = float(np.max(np.abs(terms)))
            big = float(np.max(np.abs(terms)))
            scale = math.exp(sx + sy[b]) * pref
            out[a, b] = val * scale
            ratio[a, b] = abs(val) / big if big > 0 else 1.0
            if policy == "double" and abs(val) < DETECT_RATIO * big:
                raise PrecisionError(
                    f"cancellation {big / max(abs(val), 1e-300):.1e} at x={xs[a]}, y={ys[b]}; "
                    "use policy 'extended'")
            if policy == "compensated" and bound > 1e-8 * abs(val):
                raise PrecisionError(
                    f"compensated sum error bound {bound / max(abs(val), 1e-300):.1e} (relative); "
                    "use policy 'extended'")
    return out, ratio


# ---------------------------------------------------------------------------
# extended evaluation (ball arithmetic)


def _flint():
    import flint
    return flint


class _ArbCache:
    def __init__(self):
        self.store = {}

    def get(self, key, make):
        v = self.store.get(key)
        if v is None:
            if len(self.store) > 16:
                self.store.clear()
            v = self.store[key] = make()
        return v


_ARB = _ArbCache()


def _arb_atoms_dprime(atoms: np.ndarray, prec: int):
    """Atoms as arb and ``1 / P'(x_j)`` by direct products."""
    flint = _flint()
    arb = flint.arb

    def make():
        xa = [arb(float(v)) for v in atoms]
        inv = []
        for j, xj in enumerate(xa):
            p = arb(1)
            for k, xk in enumerate(xa):
                if k != j:
                    p *= xj - xk
            inv.append(1 / p)
        return xa, inv

    return _ARB.get(("dprime", atoms.tobytes(), prec), make)


def _gauss_moments(n, t, prec):
    """``mu_k = int e^{-xi^2} (i h xi)^k dxi`` for ``k < n`` (real; odd ones vanish)."""
    arb = _flint().arb

    def make():
        h2 = arb(2) * arb(float(t)) / n
        mus = []
        g = arb.pi().sqrt()  # Gamma(1/2)
        p = arb(1)
        for k in range(n):
            if k % 2:
                mus.append(arb(0))
            else:
                j = k // 2
                mus.append(p * g)
                g = g * (arb(2 * j + 1) / 2)  # Gamma(j + 3/2)
                p = -p * h2
        return mus

    return _ARB.get(("mom", n, float(t), prec), make)


def _I_poly_values(xa, y, n, t, prec):
    """``I_j(y)`` for all j via the Gaussian functional applied to ``P(y+e)/(e - a_j)``.

    With ``P(y + e) = sum_k p_k e^k`` and moments ``mu_i``, the value is the
    polynomial ``c(a) = sum_d a^d sum_i mu_i p_{i+d+1}`` at ``a = x_j - y``.
    """
    flint = _flint()
    arb, arb_poly = flint.arb, flint.arb_poly
    ya = arb(float(y))
    shifted = [xk - ya for xk in xa]
    p = arb_poly.from_roots(shifted).coeffs()  # length n+1
    mus = _gauss_moments(n, t, prec)
    # c_d = sum_i mu_i p_{i+d+1}: correlation via one polynomial product
    prev = arb_poly(list(reversed(p)))
    prod = (arb_poly(mus) * prev).coeffs()
    prod += [arb(0)] * (2 * n + 2 - len(prod))
    c = [prod[n - 1 - d] for d in range(n)]
    return arb_poly(c).evaluate(shifted)


def _main_extended(mn, s, t, xs, ys, fx=None, fy=None, prec0=None, max_prec=1 << 14):
    flint = _flint()
    arb, arb_mat = flint.arb, flint.arb_mat
    atoms = mn.atoms
    n = atoms.size
    prec = prec0 or (96 + 2 * n)
    old = flint.ctx.prec
    try:
        while True:
            flint.ctx.prec = prec
            xa, inv = _arb_atoms_dprime(atoms, prec)
            A = arb_mat(len(xs), n)
            for a, x in enumerate(xs):
                xv = arb(float(x))
                shift = arb(float(fx[a])) if fx is not None else arb(0)
                for j in range(n):
                    d = xa[j] - xv
                    A[a, j] = (-(n * d * d) / (2 * arb(float(s))) - shift).exp() * inv[j]
            B = arb_mat(n, len(ys))
            for b, y in enumerate(ys):
                vals = _I_poly_values(xa, y, n, t, prec)
                e = arb(float(fy[b])).exp() if fy is not None else arb(1)
                for j in range(n):
                    B[j, b] = vals[j] * e
            K = A * B
            pref = (arb(2 * n) / arb(float(s))).sqrt() / (2 * arb.pi())
            out = np.empty((len(xs), len(ys)))
            ok = True
            for a in range(len(xs)):
                for b in range(len(ys)):
                    v = K[a, b] * pref
                    if v.rel_accuracy_bits() < TARGET_BITS and not _negligible(v):
                        ok = False
                    out[a, b] = float(v.mid())
            if ok:
                return out, prec
            if prec >= max_prec:
                raise ConvergenceError(f"extended precision did not reach {TARGET_BITS} bits "
                                       f"at {prec} bits")
            prec *= 2
    finally:
        flint.ctx.prec = old


def _negligible(v) -> bool:
    # entries whose whole ball is below 1e-30 in absolute value count as zero
    return float(abs(v).upper()) < 1e-30


# ---------------------------------------------------------------------------
# public evaluators


def kernel_block(mn: EmpiricalMeasure, s: float, t: float, xs, ys, policy: str = "double",
                 fx=None, fy=None, heat=True, diag: dict | None = None) -> np.ndarray:
    """``K_{n,s,t}(x_a, y_b)`` on the outer grid ``xs x ys``.

    ``fx``/``fy`` are optional log-domain factors ``exp(-fx_a)`` and ``exp(fy_b)``
    folded into the residue and Gaussian sides before summation.  If ``diag``
    is a dict it receives ``max_cancellation_bits``: the largest
    ``log2(max term / |sum|)`` of the double-precision residue sums.
    """
    xs = np.atleast_1d(np.asarray(xs, float))
    ys = np.atleast_1d(np.asarray(ys, float))
    if policy not in POLICIES:
        raise ValueError(f"unknown precision policy {policy!r}")
    fx_ = None if fx is None else -np.asarray(fx, float)
    fy_ = None if fy is None else np.asarray(fy, float)
    if diag is not None:
        _, ratio = _main_double(mn, s, t, xs, ys, "probe", fx_, fy_)
        diag["max_cancellation_bits"] = float(np.max(-np.log2(np.maximum(ratio, 1e-300))))
    if policy == "extended":
        out, _ = _main_extended(mn, s, t, xs, ys, None if fx is None else np.asarray(fx, float),
                                fy_)
    elif policy == "auto":
        try:
            out, _ = _main_double(mn, s, t, xs, ys, "double", fx_, fy_)
        except PrecisionError:
            out, _ = _main_extended(mn, s, t, xs, ys,
                                    None if fx is None else np.asarray(fx, float), fy_)
    else:
        out, _ = _main_double(mn, s, t, xs, ys, policy, fx_, fy_)
    if heat and s > t:
        n = mn.n
        dx = xs[:, None] - ys[None, :]
        hk = heat_kernel(dx, (s - t) / n)
        if fx is not None or fy is not None:
            g = (0.0 if fy is None else fy_[None, :]) - (0.0 if fx is None else
                                                          np.asarray(fx, float)[:, None])
            hk = hk * np.exp(g)
        out = out - hk
    return out


def kernel_exact(mn: EmpiricalMeasure, q: KernelQuery) -> float:
    """``K_{n,s,t}(x, y)`` by residues and exact Gaussian quadrature."""
    if np.any(mn.atoms == q.y):
        warnings.warn("y coincides with an atom; the Gaussian side has a node near a zero")
    return float(kernel_block(mn, q.s, q.t, [q.x], [q.y], q.policy)[0, 0])


def rescaled_heat(frame: CriticalFrame, n: int, tau1: float, tau2: float, u: float,
                  v: float) -> float:
    """Rescaled, gauge-conjugated heat term of the finite-n kernel.

    Written in displacement coordinates: with ``D = s - t`` and
    ``w = x - y - D G0`` the conjugated exponent is exactly ``-n w^2 / (2D)``.
    """
    if tau1 <= tau2:
        return 0.0
    scale = space_scale(frame, n)
    D = time_offset(frame, n, tau1, tau2)
    w = frame.orientation * (u - v) / scale
    return float(heat_kernel(w, D / n)) / scale


def rescaled_kernel_grid(mn: EmpiricalMeasure, frame: CriticalFrame, n: int, tau1: float,
                         tau2: float, us, vs, policy: str = "extended",
                         diag: dict | None = None) -> np.ndarray:
    """``(1/(c n^p)) K~`` on ``us x vs`` with the gauge folded into the exponents."""
    us = np.atleast_1d(np.asarray(us, float))
    vs = np.atleast_1d(np.asarray(vs, float))
    if n != mn.n:
        raise ValueError("n must equal the number of atoms")
    scale = space_scale(frame, n)
    s, xc = frame_maps(frame, n, tau1)
    t, yc = frame_maps(frame, n, tau2)
    o = frame.orientation
    xs = xc + o * us / scale
    ys = yc + o * vs / scale
    fx = np.array([gauge(frame, n, s, x) for x in xs])
    fy = np.array([gauge(frame, n, t, y) for y in ys])
    main = kernel_block(mn, s, t, xs, ys, policy, fx=fx, fy=fy, heat=False,
                        diag=diag) / scale
    if tau1 > tau2:
        main = main - np.array([[rescaled_heat(frame, n, tau1, tau2, u, v) for v in vs]
                                for u in us])
    return main


def rescaled_kernel(mn: EmpiricalMeasure, frame: CriticalFrame, n: int, tau1: float,
                    tau2: float, u: float, v: float, policy: str = "extended") -> float:
    return float(rescaled_kernel_grid(mn, frame, n, tau1, tau2, [u], [v], policy)[0, 0])


# ---------------------------------------------------------------------------
# validation quadrature


@dataclass(frozen=True)
class ContourSpec:
    """Rectangles around atom groups plus a vertical z-line.

    ``panels`` Gauss-Legendre panels of ``order`` nodes per rectangle side.
    """

    x0: float | None = None
    clearance: float | None = None
    height: float = 0.5
    panels: int = 8
    order: int = 20
    tol: float = 1e-11
    max_doublings: int = 5


def _choose_line(atoms, y, clearance=None):
    xs = np.sort(atoms)
    if y < xs[0] or y > xs[-1]:
        gaps_left = xs[0] - y if y < xs[0] else y - xs[-1]
        c = clearance or min(0.25, 0.5 * gaps_left) if gaps_left > 1e-3 else None
        if c:
            return y, c
    i = int(np.searchsorted(xs, y))
    cands = []
    for k in range(1, xs.size):
        lo, hi = xs[k - 1], xs[k]
        x0 = min(max(y, lo + 0.25 * (hi - lo)), hi - 0.25 * (hi - lo))
        cands.append((abs(x0 - y), x0, 0.25 * (hi - lo)))
    # outside positions as fallback
    span = xs[-1] - xs[0] + 1.0
    cands.append((abs(xs[0] - 0.5 - y), xs[0] - 0.5, 0.25))
    cands.append((abs(xs[-1] + 0.5 - y), xs[-1] + 0.5, 0.25))
    _, x0, c = min(cands)
    if clearance:
        c = min(c, clearance)
    return x0, c


def _rect_nodes(lo, hi, height, panels, order):
    """Counter-clockwise rectangle ``[lo, hi] x [-height, height]``."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    corners = [complex(lo, -height), complex(hi, -height), complex(hi, height),
               complex(lo, height), complex(lo, -height)]
    zs, ws = [], []
    for a, b in zip(corners[:-1], corners[1:]):
        for p in range(panels):
            pa = a + (b - a) * p / panels
            pb = a + (b - a) * (p + 1) / panels
            zs.append(0.5 * (pb - pa) * xg + 0.5 * (pb + pa))
            ws.append(0.5 * (pb - pa) * wg)
    return np.concatenate(zs), np.concatenate(ws)


def _line_nodes(x0, t, n, atoms, y, panels, order):
    # |P(z)| e^{-n eta^2 / (2t)} along z = x0 + i eta; truncate where negligible
    eta = np.linspace(0, 50 * math.sqrt(t / n) + 10, 20001)
    z = x0 + 1j * eta
    lg = np.sum(np.log(np.abs(z[:, None] - atoms[None, :])), axis=1) - n * eta ** 2 / (2 * t)
    E = eta[np.flatnonzero(lg > lg.max() - 45.0)[-1]] * 1.1 + 1e-3
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-E, E, 2 * panels + 1)
    zs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        e = 0.5 * (b - a) * xg + 0.5 * (b + a)
        zs.append(x0 + 1j * e)
        ws.append(1j * 0.5 * (b - a) * wg)
    return np.concatenate(zs), np.concatenate(ws)


def _quad_once(mn, s, t, x, y, spec: ContourSpec, panels):
    atoms = mn.atoms
    n = atoms.size
    x0, c = (spec.x0, spec.clearance) if spec.x0 is not None else _choose_line(atoms, y,
                                                                             spec.clearance)
    if np.any(np.abs(atoms - x0) < 1e-12):
        raise PoleError("z-line passes through an atom")
    left, right = atoms[atoms < x0], atoms[atoms > x0]
    wz, ww = [], []
    for grp, side in ((left, -1), (right, 1)):
        if grp.size == 0:
            continue
        lo = grp[0] - c
        hi = grp[-1] + c
        if side < 0:
            hi = min(hi, x0 - 0.5 * c)
        else:
            lo = max(lo, x0 + 0.5 * c)
        z, w = _rect_nodes(lo, hi, spec.height, panels, spec.order)
        wz.append(z)
        ww.append(w)
    W, WW = np.concatenate(wz), np.concatenate(ww)
    Z, ZW = _line_nodes(x0, t, n, atoms, y, panels, spec.order)
    logF = n * (Z - y) ** 2 / (2 * t) + np.sum(np.log(Z[:, None] - atoms[None, :]), axis=1)
    logG = -n * (W - x) ** 2 / (2 * s) - np.sum(np.log(W[:, None] - atoms[None, :]), axis=1)
    sf, sg = np.max(logF.real), np.max(logG.real)
    f = np.exp(logF - sf) * ZW
    g = np.exp(logG - sg) * WW
    val = f @ (1.0 / (Z[:, None] - W[None, :])) @ g
    val *= np.exp(sf + sg) * n / ((2j * math.pi) ** 2 * math.sqrt(s * t))
    return val


def kernel_quadrature(mn: EmpiricalMeasure, q: KernelQuery,
                      contour: ContourSpec | None = None) -> float:
    """Direct 2-D Gauss-Legendre evaluation of the contour formula (n <= 64).

    Independent of the residue evaluator; used to cross-validate it.
    """
    spec = contour or ContourSpec()
    if mn.n > 64:
        raise ValueError("kernel_quadrature is a validation tool for n <= 64")
    panels = spec.panels
    prev = _quad_once(mn, q.s, q.t, q.x, q.y, spec, panels)
    for _ in range(spec.max_doublings):
        panels *= 2
        cur = _quad_once(mn, q.s, q.t, q.x, q.y, spec, panels)
        if abs(cur - prev) <= spec.tol * max(abs(cur), 1e-300):
            break
        prev = cur
    else:
        raise ConvergenceError("contour quadrature did not converge", residual=abs(cur - prev))
    val = cur.real
    if q.s > q.t:
        val -= float(heat_kernel(q.x - q.y, (q.s - q.t) / mn.n))
    return val


# ---------------------------------------------------------------------------
# saddle points


def saddle_points(mn: EmpiricalMeasure, t: float, target: float) -> complex:
    """Point ``z = x + i y_t(x)`` on the discrete Biane graph with ``H_t(z) = target``."""
    lo = mn.atoms[0] - 2.0 * math.sqrt(t) - 1.0
    hi = mn.atoms[-1] + 2.0 * math.sqrt(t) + 1.0
    f = lambda x: evolve_point(mn, t, x) - target
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        from .errors import OutOfRangeError
        raise OutOfRangeError(f"target {target} outside [{flo + target:.4g}, {fhi + target:.4g}]")
    x = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=300)
    return complex(x, biane_y(mn, t, x))


def subordination_discrete(mn: EmpiricalMeasure, t: float, z: complex) -> complex:
    """``H_{t, mu_n}(z) = z + t G_{mu_n}(z)``."""
    return z + t * complex(np.mean(1.0 / (z - mn.atoms)))
