import math

import numpy as np
import pytest
from scipy import integrate

from nibmlab import free_conv as fc
from nibmlab import kernels_finite as kf
from nibmlab import kernels_limit as kl
from nibmlab.errors import CollisionError, PrecisionError
from nibmlab.measures import DensitySpec, EmpiricalMeasure, quantile_init

ONE = EmpiricalMeasure(np.array([0.0]))


def _transition(x0, x1, t, n):
    """Non-intersecting transition density between ordered configurations."""
    x0, x1 = np.asarray(x0, float), np.asarray(x1, float)
    vd = lambda a: np.prod([a[j] - a[i] for i in range(a.size) for j in range(i + 1, a.size)])
    M = np.exp(-n * (x0[:, None] - x1[None, :]) ** 2 / (2 * t))
    return (n / (2 * math.pi * t)) ** (n / 2) * vd(x1) / vd(x0) * np.linalg.det(M)


def test_single_atom_closed_form():
    for t, x, y in [(1.0, 0.0, 0.0), (0.5, 0.3, -0.2), (2.0, 1.0, 1.0)]:
        ref = math.exp(-x * x / (2 * t)) / math.sqrt(2 * math.pi * t)
        for pol in ("double", "compensated", "extended"):
            q = kf.KernelQuery(t, t, x, y, policy=pol)
            assert kf.kernel_exact(ONE, q) == pytest.approx(ref, rel=1e-13)
    assert kf.kernel_exact(ONE, kf.KernelQuery(1, 1, 0, 0)) == pytest.approx(0.398942, abs=1e-6)
    assert kf.kernel_quadrature(ONE, kf.KernelQuery(1, 1, 0.4, 0.1)) == pytest.approx(
        math.exp(-0.08) / math.sqrt(2 * math.pi), rel=1e-12)


def test_residue_table():
    atoms = np.array([-0.7, -0.1, 0.35, 0.9])
    tab = kf.ResidueTable.build(EmpiricalMeasure(atoms))
    for j in range(4):
        d = np.delete(atoms[j] - atoms, j)
        assert tab.L[j] == pytest.approx(np.sum(np.log(np.abs(d))), abs=1e-13)
        assert tab.sign[j] == np.prod(np.sign(d))
    with pytest.raises(CollisionError):
        kf.ResidueTable.build(EmpiricalMeasure(np.array([0.0, 0.0])))


def test_reflection_symmetry():
    mn = EmpiricalMeasure(np.array([-0.8, -0.3, 0.3, 0.8]))
    xs = np.linspace(0.05, 1.5, 10)
    a = np.diag(kf.kernel_block(mn, 0.4, 0.4, xs, xs))
    b = np.diag(kf.kernel_block(mn, 0.4, 0.4, -xs, -xs))
    assert np.max(np.abs(a - b)) <= 1e-12


@pytest.mark.parametrize("n", [2, 4, 8])
def test_intensity_integrates_to_n(n):
    mn = EmpiricalMeasure(np.linspace(-1, 1, n))
    f = lambda x: kf.kernel_exact(mn, kf.KernelQuery(0.3, 0.3, x, x))
    val, _ = integrate.quad(f, -4, 4, limit=200, epsabs=1e-10)
    assert val == pytest.approx(n, abs=1e-6)


def test_oracle_equivalence_random():
    rng = np.random.default_rng(11)
    for _ in range(8):
        n = int(rng.integers(1, 13))
        mn = EmpiricalMeasure(np.sort(rng.uniform(-1, 1, n)))
        s, t = rng.uniform(0.2, 1.0, 2)
        x, y = rng.uniform(-1, 1, 2)
        q = kf.KernelQuery(s, t, x, y, policy="extended")
        a = kf.kernel_exact(mn, q)
        b = kf.kernel_quadrature(mn, q)
        assert abs(a - b) <= 1e-8 * abs(b)


def test_heat_term_shared():
    mn = EmpiricalMeasure(np.array([-0.4, 0.5]))
    q = kf.KernelQuery(0.9, 0.5, 0.1, 0.2)
    assert kf.kernel_exact(mn, q) == pytest.approx(kf.kernel_quadrature(mn, q), rel=1e-9)
    noheat = kf.kernel_block(mn, 0.9, 0.5, [0.1], [0.2], heat=False)[0, 0]
    assert kf.kernel_exact(mn, q) - noheat == pytest.approx(
        -float(kl.heat_kernel(-0.1, 0.4 / 2)), rel=1e-12)


def test_policies_agree_and_detector():
    mn = EmpiricalMeasure(np.linspace(-1, 1, 10))
    q = dict(s=0.5, t=0.6, x=0.2, y=-0.1)
    vals = [kf.kernel_exact(mn, kf.KernelQuery(**q, policy=p)) for p in kf.POLICIES]
    assert max(vals) - min(vals) <= 1e-11 * abs(vals[2])
    spec = DensitySpec.power(4, x_star=0.2)
    frame = fc.classify(spec)
    big = quantile_init(spec, 200)
    with pytest.raises(PrecisionError):
        kf.rescaled_kernel(big, frame, 200, 0, 0, 0, 0, policy="double")


def test_positivity():
    mn = EmpiricalMeasure(np.array([-0.9, -0.2, 0.1, 0.6, 1.0]))
    xs = np.linspace(-3, 3, 61)
    d = np.diag(kf.kernel_block(mn, 0.2, 0.2, xs, xs))
    assert np.all(d >= -1e-12)


def test_gauge_invariance_of_determinants():
    spec = DensitySpec.power(4, x_star=0.2)
    frame = fc.classify(spec)
    n = 40
    mn = quantile_init(spec, n)
    us = np.array([-1.0, 0.3, 1.7])
    Kt = kf.rescaled_kernel_grid(mn, frame, n, 0.2, 0.2, us, us)
    scale = kf.space_scale(frame, n)
    s, xc = fc.frame_maps(frame, n, 0.2)
    xs = xc + us / scale
    K = kf.kernel_block(mn, s, s, xs, xs, "extended") / scale
    for idx in ([0, 1], [1, 2], [0, 1, 2]):
        a = np.linalg.det(Kt[np.ix_(idx, idx)])
        b = np.linalg.det(K[np.ix_(idx, idx)])
        assert a == pytest.approx(b, rel=1e-10)


def test_two_particle_density():
    x0 = np.array([-0.3, 0.4])
    mn = EmpiricalMeasure(x0)
    t = 0.5
    for x, y in [(-0.2, 0.5), (0.1, 0.3), (-1.0, 0.0)]:
        K = kf.kernel_block(mn, t, t, [x, y], [x, y])
        ref = _transition(x0, sorted((x, y)), t, 2)
        assert np.linalg.det(K) == pytest.approx(ref, rel=1e-9)


def test_two_time_density_brute_force():
    x0 = np.array([-0.3, 0.4])
    mn = EmpiricalMeasure(x0)
    t1, t2 = 0.3, 0.55
    x, y = 0.1, -0.2

    def integrand(b, a):
        return _transition(x0, sorted((x, a)), t1, 2) * _transition(
            sorted((x, a)), sorted((y, b)), t2 - t1, 2)

    ref, _ = integrate.dblquad(integrand, -6, 6, -6, 6, epsabs=1e-11, epsrel=1e-10)
    K = np.array([[kf.kernel_block(mn, t1, t1, [x], [x])[0, 0],
                   kf.kernel_block(mn, t1, t2, [x], [y])[0, 0]],
                  [kf.kernel_block(mn, t2, t1, [y], [x])[0, 0],
                   kf.kernel_block(mn, t2, t2, [y], [y])[0, 0]]])
    assert np.linalg.det(K) == pytest.approx(ref, abs=1e-6)


def test_rescaled_query_consistency():
    frame = fc.classify(DensitySpec.power(4))
    q = kf.KernelQuery.rescaled(frame, 100, 0.5, -0.2, 1.0, -1.0)
    s, xc = fc.frame_maps(frame, 100, 0.5)
    assert q.s == s and q.x == pytest.approx(xc + 1.0 / (frame.c * 100 ** 0.75), rel=1e-15)
    with pytest.raises(ValueError):
        kf.KernelQuery(s, q.t, q.x + 1e-3, q.y, frame=frame, n=100, tau1=0.5, tau2=-0.2,
                       u=1.0, v=-1.0)


@pytest.mark.parametrize("regime", ["airy", "pearcey"])
def test_rescaled_heat_identity(regime):
    spec = DensitySpec.power(4, x_star=0.2) if regime == "airy" else DensitySpec.power(4)
    frame = fc.classify(spec)
    heat = kl.airy_heat if regime == "airy" else kl.pearcey_heat
    rng = np.random.default_rng(7)
    for n in (50, 1000):
        for _ in range(5):
            t2, d = rng.uniform(-1, 1), rng.uniform(0.05, 2)
            u, v = rng.uniform(-3, 3, 2)
            a = kf.rescaled_heat(frame, n, t2 + d, t2, u, v)
            b = float(heat(t2 + d, t2, u, v))
            expo = (u - v) ** 2 / (4 * d if regime == "airy" else 2 * d)
            assert abs(a - b) <= 1e-14 * abs(b) * max(1.0, expo)


def test_saddle_two_atoms():
    a, t = 0.4, 0.5
    z = kf.saddle_points(EmpiricalMeasure(np.array([-a, a])), t, 0.0)
    assert z.real == pytest.approx(0.0, abs=1e-12)
    assert z.imag == pytest.approx(math.sqrt(t - a * a), abs=1e-12)


def test_saddle_distance_bound():
    # |z_n - x*| = O(n^{-1/3 + eps}); the sequence itself oscillates with the atom positions
    spec = DensitySpec.power(4, x_star=0.2)
    frame = fc.classify(spec)
    for n in (50, 100, 200, 400, 800):
        mn = quantile_init(spec, n)
        t, x = fc.frame_maps(frame, n, 0.0)
        z = kf.saddle_points(mn, t, x)
        assert abs(kf.subordination_discrete(mn, t, z) - x) <= 1e-9
        assert z.imag >= 0
        assert abs(z - frame.x_star) * n ** (1 / 3 - 1 / 30) <= 1.5


def test_saddle_symmetric_imaginary():
    mn = EmpiricalMeasure(np.array([-0.9, -0.5, 0.5, 0.9]))
    z = kf.saddle_points(mn, 0.8, 0.0)
    assert abs(z.real) <= 1e-12 and z.imag > 0


def test_y_on_atom_is_finite():
    mn = EmpiricalMeasure(np.array([-0.5, 0.0, 0.5]))
    with pytest.warns(UserWarning):
        a = kf.kernel_exact(mn, kf.KernelQuery(0.4, 0.4, 0.1, 0.0))
    b = kf.kernel_exact(mn, kf.KernelQuery(0.4, 0.4, 0.1, 0.0, policy="extended"))
    assert a == pytest.approx(b, rel=1e-12)
