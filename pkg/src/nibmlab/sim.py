"""Monte-Carlo NIBM: exact sampling through Hermitian Brownian motion, an
Euler scheme for the eigenvalue SDE, and the edge statistics near a critical
point.

Random streams: replica ``r`` uses ``Philox`` keyed by the ``r``-th child of
``SeedSequence(seed)``.  Philox is counter based, so streams are independent
of how replicas are distributed over workers.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from .errors import ConvergenceError, NibmError
from .free_conv import CriticalFrame, frame_maps
from .measures import EmpiricalMeasure

TIE_TOL = 1e-12


def replica_rngs(seed: int, replicas: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(replicas)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


@dataclass
class PathEnsemble:
    """Sorted particle positions ``paths[r, k, :]`` at ``times[k]`` for replica ``r``."""

    times: np.ndarray
    paths: np.ndarray
    seed: int
    sampler: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.paths = np.asarray(self.paths, float)
        if self.paths.ndim != 3 or self.paths.shape[1] != self.times.size:
            raise ValueError("paths must have shape (replicas, len(times), n)")

    @property
    def replicas(self) -> int:
        return self.paths.shape[0]

    @property
    def n(self) -> int:
        return self.paths.shape[2]

    def at(self, t: float, rtol: float = 1e-12) -> np.ndarray:
        k = np.flatnonzero(np.isclose(self.times, t, rtol=rtol, atol=0.0))
        if k.size == 0:
            raise NibmError(f"time {t!r} not among the observation times")
        return self.paths[:, k[0], :]

    def save(self, path) -> Path:
        """Binary ``.npy`` dump plus a JSON header with times, seed and diagnostics."""
        path = Path(path)
        np.save(path.with_suffix(".npy"), self.paths, allow_pickle=False)
        head = dict(times=[float(t) for t in self.times], seed=self.seed, sampler=self.sampler,
                    diagnostics=self.diagnostics)
        path.with_suffix(".header.json").write_text(json.dumps(head, indent=1, sort_keys=True))
        return path.with_suffix(".npy")

    @classmethod
    def load(cls, path) -> "PathEnsemble":
        path = Path(path)
        head = json.loads(path.with_suffix(".header.json").read_text())
        paths = np.load(path.with_suffix(".npy"), allow_pickle=False)
        return cls(np.array(head["times"]), paths, head["seed"], head["sampler"],
                   head.get("diagnostics", {}))


def _initial(init) -> np.ndarray:
    if isinstance(init, EmpiricalMeasure):
        return np.asarray(init.atoms, float)
    return np.sort(np.asarray(init, float))


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, float)
    if times.ndim != 1 or times.size == 0 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be positive and strictly increasing")
    return times


def _hermitian_increment(rng, n, dt):
    # diagonal N(0, dt); off-diagonal real and imaginary parts N(0, dt/2)
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    H = (g + g.conj().T) * math.sqrt(dt) / 2.0
    return H


def _matrix_replica(x0, times, rng):
    n = x0.size
    M = np.diag(math.sqrt(n) * x0).astype(complex)
    out = np.empty((times.size, n))
    prev = 0.0
    for k, t in enumerate(times):
        M = M + _hermitian_increment(rng, n, t - prev)
        prev = t
        out[k] = np.linalg.eigvalsh(M) / math.sqrt(n)
    return out


def _run(fn, items, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def sample_matrix(init, times, replicas: int, seed: int, workers: int = 1) -> PathEnsemble:
    """Exact multi-time sample: eigenvalues of ``(diag(sqrt(n) x0) + H(t)) / sqrt(n)``."""
    x0 = _initial(init)
    times = _check_times(times)
    rngs = replica_rngs(seed, replicas)

    def one(r):
        try:
            return _matrix_replica(x0, times, rngs[r])
        except np.linalg.LinAlgError as exc:
            raise NibmError(f"eigensolver failed in replica {r} (seed {seed})") from exc

    paths = np.array(_run(one, range(replicas), workers))
    ties = int(np.sum(np.diff(paths, axis=2) < TIE_TOL))
    return PathEnsemble(times, paths, seed, "matrix-exact", dict(ties=ties))


def euler_sde(init, times, dt: float, replicas: int, seed: int, noise: bool = True,
              max_collision_rate: float = 0.01, check_dt: bool = True) -> PathEnsemble:
    """Euler-Maruyama for ``dX_j = dB_j/sqrt(n) + (1/n) sum_{k!=j} dt/(X_j - X_k)``.

    Ordering is restored by sorting after each step; every step that needed it
    counts as a collision event.
    """
    x0 = _initial(init)
    times = _check_times(times)
    n = x0.size
    if check_dt and n > 1:
        guard = 1e-4 * float(np.min(np.diff(x0))) ** 2
        if dt > guard:
            raise ValueError(f"dt={dt:g} above the collision guard {guard:.3g}")
    rngs = replica_rngs(seed, replicas)
    X = np.tile(x0, (replicas, 1))
    out = np.empty((replicas, times.size, n))
    t, steps, events = 0.0, 0, 0
    sq = math.sqrt(1.0 / n)
    for k, target in enumerate(times):
        while t < target - 1e-15:
            h = min(dt, target - t)
            D = X[:, :, None] - X[:, None, :]
            np.einsum("rii->ri", D)[...] = np.inf
            drift = np.sum(1.0 / D, axis=2) / n
            X = X + drift * h
            if noise:
                Z = np.array([g.standard_normal(n) for g in rngs])
                X = X + sq * math.sqrt(h) * Z
            bad = np.any(np.diff(X, axis=1) <= 0, axis=1)
            if np.any(bad):
                events += int(bad.sum())
                X = np.sort(X, axis=1)
            t += h
            steps += 1
        out[:, k] = X
    rate = events / max(steps * replicas, 1)
    if rate > max_collision_rate:
        raise ConvergenceError(f"collision rate {rate:.2%} per step; reduce dt", residual=rate)
    return PathEnsemble(times, out, seed, "euler", dict(steps=steps, collisions=events,
                                                         collision_rate=rate))


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class MCEstimate:
    """Binomial proportion with a Clopper-Pearson interval."""

    value: float
    successes: int
    trials: int
    ci_low: float
    ci_high: float
    level: float = 0.95

    @classmethod
    def from_counts(cls, k: int, m: int, level: float = 0.95) -> "MCEstimate":
        ci = stats.binomtest(int(k), int(m)).proportion_ci(confidence_level=level)
        return cls(k / m, int(k), int(m), float(ci.low), float(ci.high), level)

    def to_dict(self):
        return dict(value=self.value, successes=self.successes, trials=self.trials,
                    ci=[self.ci_low, self.ci_high], level=self.level)


def frame_times(frame: CriticalFrame, n: int, taus) -> np.ndarray:
    return np.array([frame_maps(frame, n, tau)[0] for tau in taus])


def _oriented(ens: PathEnsemble, frame: CriticalFrame, n: int, tau: float):
    """Particles at ``t_n(tau)`` as signed offsets ``o (X - x_n(tau))``."""
    t, xc = frame_maps(frame, n, tau)
    if ens.n != n:
        raise ValueError("ensemble size differs from n")
    try:
        X = ens.at(t)
    except NibmError as exc:
        raise NibmError(f"ensemble has no observation at t_n({tau}) = {t!r}") from exc
    return frame.orientation * (X - xc)


def meso_gap_frequency(ens: PathEnsemble, frame: CriticalFrame, n: int, eps: float,
                       eps_prime: float, taus) -> MCEstimate:
    """Fraction of replicas with no particle in ``[x_n + n^{eps'-2/3}, x_n + n^{eps-2/3}]``
    at every ``t_n(tau_j)`` (mirrored for a left-facing edge)."""
    if not 0 < eps_prime <= eps:
        raise ValueError("need 0 < eps' <= eps")
    lo, hi = n ** (eps_prime - 2 / 3), n ** (eps - 2 / 3)
    ok = np.ones(ens.replicas, bool)
    for tau in taus:
        Y = _oriented(ens, frame, n, tau)
        inside = (Y >= lo) & (Y <= hi) if hi > lo else np.zeros_like(Y, bool)
        ok &= ~np.any(inside, axis=1)
    return MCEstimate.from_counts(int(ok.sum()), ens.replicas)


@dataclass
class XiSample:
    values: np.ndarray
    flagged: int


def xi_statistic(ens: PathEnsemble, frame: CriticalFrame, n: int, eps: float,
                 tau: float) -> XiSample:
    """``c n^{2/3} (xi(tau) - x_n(tau))`` with ``xi`` the largest particle below
    ``x_n(tau) + n^{eps-2/3}``; replicas without such a particle give NaN."""
    Y = _oriented(ens, frame, n, tau)
    cut = n ** (eps - 2 / 3)
    masked = np.where(Y <= cut, Y, -np.inf)
    top = masked.max(axis=1)
    flagged = int(np.sum(~np.isfinite(top)))
    vals = np.where(np.isfinite(top), frame.c * n ** (2 / 3) * top, np.nan)
    return XiSample(vals, flagged)


def empirical_cdf(samples, thresholds, level: float = 0.95) -> list[MCEstimate]:
    """``P(X <= a)`` (or joint ``P(X_j <= a_j)`` for 2-D samples) with CIs."""
    S = np.asarray(samples, float)
    out = []
    for a in thresholds:
        if S.ndim == 1:
            hit = S <= a
        else:
            hit = np.all(S <= np.asarray(a)[None, :], axis=1)
        valid = ~np.any(np.isnan(S.reshape(S.shape[0], -1)), axis=1)
        out.append(MCEstimate.from_counts(int(np.sum(hit & valid)), int(valid.sum()), level))
    return out


def ks_to_cdf(samples, cdf) -> float:
    """Kolmogorov-Smirnov distance between pooled samples and a continuous CDF."""
    x = np.sort(np.asarray(samples, float).ravel())
    F = np.array([cdf(v) for v in x])
    m = x.size
    return float(max(np.max(np.arange(1, m + 1) / m - F), np.max(F - np.arange(m) / m)))


def energy_test(x, y, permutations: int = 200, seed: int = 0) -> float:
    """Permutation p-value of the two-sample energy statistic."""
    x = np.asarray(x, float).reshape(len(x), -1)
    y = np.asarray(y, float).reshape(len(y), -1)
    Z = np.vstack([x, y])
    D = cdist(Z, Z)
    m = len(x)

    def stat(idx):
        a, b = idx[:m], idx[m:]
        return 2 * D[np.ix_(a, b)].mean() - D[np.ix_(a, a)].mean() - D[np.ix_(b, b)].mean()

    base = np.arange(len(Z))
    obs = stat(base)
    rng = np.random.default_rng(seed)
    hits = sum(stat(rng.permutation(base)) >= obs for _ in range(permutations))
    return (hits + 1) / (permutations + 1)
