import math

import numpy as np
import pytest

from nibmlab import free_conv as fc
from nibmlab.errors import OutOfRangeError, RegimeError
from nibmlab.measures import DensitySpec, EmpiricalMeasure

DELTA0 = EmpiricalMeasure(np.array([0.0]))


@pytest.fixture(scope="module")
def quartic():
    return DensitySpec.power(4)


@pytest.fixture(scope="module")
def shifted():
    return DensitySpec.power(4, x_star=0.2)


def test_biane_y_examples(quartic):
    assert fc.biane_y(DELTA0, 1.0, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert fc.biane_y(DELTA0, 1.0, 0.5) == pytest.approx(math.sqrt(0.75), abs=1e-12)
    assert fc.biane_y(quartic, 0.3, 0.0) == 0.0


def test_biane_y_two_atoms():
    a, t = 0.5, 1.0
    assert fc.biane_y(EmpiricalMeasure(np.array([-a, a])), t, 0.0) == pytest.approx(
        math.sqrt(t - a * a), abs=1e-12)


def test_evolve_point_examples(quartic):
    assert fc.evolve_point(DELTA0, 1.0, 0.0) == pytest.approx(0.0, abs=1e-14)
    assert fc.evolve_point(DELTA0, 1.0, 0.5) == pytest.approx(1.0, abs=1e-12)
    for t in (0.1, 0.4, 0.6):
        assert fc.evolve_point(quartic, t, 0.0) == pytest.approx(0.0, abs=1e-13)


def test_semicircle_oracle():
    st = fc.BianeState.build(DELTA0, 1.0)
    xs = np.linspace(-2, 2, 200)
    err = max(abs(st.density(x) - math.sqrt(max(4 - x * x, 0)) / (2 * math.pi)) for x in xs)
    assert err <= 1e-8
    assert fc.density_at(DELTA0, 1.0, 0.0) == pytest.approx(1 / math.pi, abs=1e-12)
    assert fc.density_at(DELTA0, 1.0, 2.0) == 0.0


def test_semicircle_other_time():
    t = 0.37
    for x in (-1.0, 0.3, 1.1):
        ref = math.sqrt(4 * t - x * x) / (2 * math.pi * t)
        assert fc.density_at(DELTA0, t, x) == pytest.approx(ref, abs=1e-10)


def test_out_of_range():
    st = fc.BianeState.build(DELTA0, 1.0, lo=-1.0, hi=1.0)
    with pytest.raises(OutOfRangeError):
        st.density(5.0)


def test_grid_invariants(quartic):
    st = fc.BianeState.build(quartic, 0.45, n_grid=41)
    assert np.all(st.ys >= 0)
    assert np.all(np.diff(st.phis) >= 0)
    for x, y in zip(st.xs[::5], st.ys[::5]):
        if y > 0:
            I, _ = fc.cauchy_integrals(quartic, x, y)
            assert abs(I - 1 / 0.45) <= 1e-10 / 0.45


def test_mass_conservation():
    st = fc.BianeState.build(DELTA0, 0.8, n_grid=4001)
    assert st.mass() == pytest.approx(1.0, abs=1e-5)
    st2 = fc.BianeState.build(EmpiricalMeasure(np.array([-0.6, -0.1, 0.3, 0.9])), 0.5,
                              n_grid=4001)
    assert st2.mass() == pytest.approx(1.0, abs=1e-5)


def test_zero_persists_until_critical(quartic):
    t_cr = fc.critical_time(quartic, 0.0)
    for frac in (0.2, 0.5, 0.8, 0.95, 1.0):
        t = frac * t_cr
        assert fc.biane_y(quartic, t, 0.0) == 0.0
    st = fc.BianeState.build(quartic, 1.1 * t_cr, n_grid=41)
    assert st.density(0.0) > 0


def test_critical_times(quartic, shifted):
    assert fc.critical_time(quartic, 0.0) == pytest.approx(0.6, abs=1e-12)
    assert fc.critical_time(shifted, 0.2) == pytest.approx(0.754286, abs=1e-6)
    a = 0.3
    assert fc.critical_time(EmpiricalMeasure(np.array([-a, a])), 0.0) == pytest.approx(a * a)
    assert fc.critical_time(quartic, 0.5) == 0.0


def test_classify(quartic, shifted):
    fp = fc.classify(quartic)
    assert fp.regime == fc.PEARCEY
    assert fp.c == pytest.approx((6 / 30) ** 0.25 / 0.6, rel=1e-10)
    fa = fc.classify(shifted)
    assert fa.regime == fc.AIRY_RIGHT
    assert fa.c == pytest.approx(1.485848, rel=1e-4)
    assert fa.t_cr == pytest.approx(-1 / fa.G[1], rel=1e-12)
    fl = fc.classify(shifted.reflected())
    assert fl.regime == fc.AIRY_LEFT
    assert fl.c == pytest.approx(fa.c, rel=1e-10)


def test_classify_errors():
    with pytest.raises(RegimeError, match="indeterminate"):
        fc.classify(DensitySpec.power(3))


def test_critical_path(shifted, quartic):
    fa = fc.classify(shifted)
    x, lin = fc.critical_path(fa, fa.t_cr)
    assert x == pytest.approx(0.2 + 0.416 * 3 / 2.24, abs=1e-12) and not lin
    assert x == pytest.approx(0.7571, abs=5e-5)
    assert fc.critical_path(fa, 0.0)[0] == 0.2
    assert fc.critical_path(fa, 2 * fa.t_cr)[1]
    assert fc.critical_path(fc.classify(quartic), 0.3)[0] == 0.0


def test_frame_maps(quartic, shifted):
    fp, fa = fc.classify(quartic), fc.classify(shifted)
    assert fc.frame_maps(fp, 100, 0.0) == (fp.t_cr, fp.x_star + fp.t_cr * fp.G0)
    assert fc.frame_maps(fp, 100, 1.0)[0] == pytest.approx(0.6 + 1 / (fp.c ** 2 * 10), rel=1e-14)
    assert fc.frame_maps(fa, 1000, -2.0)[0] == pytest.approx(fa.t_cr - 4 / (fa.c ** 2 * 10),
                                                           rel=1e-14)
    for tau in (-1.0, -0.3, 0.0):
        t, x = fc.frame_maps(fa, 500, tau)
        assert x == fc.critical_path(fa, t)[0]
    with pytest.raises(OutOfRangeError):
        fc.frame_maps(fa, 1, -10.0)


def test_local_exponent_semicircle_edge():
    # semicircle edge 2 sqrt(t) as an Airy-like square-root oracle
    t = 1.0
    st = fc.BianeState.build(DELTA0, t)
    offs = 2.0 ** -np.arange(10, 24)
    vals = [st.density(2.0 - d) for d in offs]
    slope = np.polyfit(np.log(offs), np.log(vals), 1)[0]
    assert slope == pytest.approx(0.5, abs=0.01)


def test_local_exponent_pearcey(quartic):
    f = fc.classify(quartic)
    fit = fc.local_exponent(quartic, f)
    assert fit.alpha == pytest.approx(1 / 3, abs=0.05)
    assert fit.prefactor == pytest.approx(fc.local_prefactor(f), rel=0.05)
