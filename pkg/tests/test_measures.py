import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nibmlab.errors import CollisionError, DivergentIntegralError, PoleError
from nibmlab.measures import (DensitySpec, DisplacementRule, EmpiricalMeasure, cdf_distance,
                              expansion_residual, gap_check, log_potential, quantile_init,
                              stieltjes, stieltjes_derivs)


@pytest.fixture(scope="module")
def quartic():
    return DensitySpec.power(4)


@pytest.fixture(scope="module")
def shifted():
    return DensitySpec.power(4, x_star=0.2)


def semicircle(r=2.0):
    return DensitySpec.from_pdf(lambda x: 2 * math.sqrt(max(r * r - x * x, 0.0)) / (math.pi * r * r),
                                -r, r)


def test_uniform_quantiles():
    mn = quantile_init(DensitySpec.uniform(0, 1), 4)
    np.testing.assert_allclose(mn.atoms, [0.25, 0.5, 0.75, 1.0], atol=1e-14)


def test_quartic_quantile_closed_form(quartic):
    mn = quantile_init(quartic, 5)
    assert mn.atoms[3] == pytest.approx(0.6 ** 0.2, abs=1e-12)


def test_quartic_even_n_displaced(quartic):
    n = 100
    mn = quantile_init(quartic, n)
    h = n ** -0.2
    assert np.min(np.abs(mn.atoms)) >= 0.5 * h
    assert gap_check(mn, 0.0, 4, 0.5)


def test_large_shift_breaks_ordering(quartic):
    with pytest.raises(CollisionError):
        quantile_init(quartic, 100, DisplacementRule(m=2.0, shift=2.0))


def test_midpoint_placement_symmetric(quartic):
    mn = quantile_init(quartic, 50, placement="midpoint")
    np.testing.assert_allclose(mn.atoms, -mn.atoms[::-1], atol=1e-12)
    assert gap_check(mn, 0.0, 4, 0.5)


def test_cdf_distance_examples():
    u = DensitySpec.uniform(0, 1)
    assert cdf_distance(quantile_init(u, 10), u) == pytest.approx(0.1, abs=1e-14)
    assert cdf_distance(EmpiricalMeasure(np.array([0.0])), u) == pytest.approx(1.0)
    mn = quantile_init(u, 7)
    assert cdf_distance(mn, mn) == 0.0


def test_cdf_distance_displaced_bound(quartic):
    n = 100
    assert cdf_distance(quantile_init(quartic, n), quartic) <= 2.0 / n


def test_gap_check_examples():
    assert gap_check(EmpiricalMeasure(np.array([-1.0, 1.0])), 0.0, 4, 1.0)
    assert not gap_check(EmpiricalMeasure(np.array([-1.0, 0.0, 1.0])), 0.0, 4, 1e-3)


def test_collision_rejected():
    with pytest.raises(CollisionError):
        EmpiricalMeasure(np.array([0.0, 1e-17, 1.0]))


def test_csv_roundtrip(tmp_path):
    mn = EmpiricalMeasure(np.array([-0.3, 0.1, 0.7]))
    p = tmp_path / "atoms.csv"
    mn.to_csv(p)
    assert p.read_text().splitlines()[0] == "index,position"
    np.testing.assert_array_equal(EmpiricalMeasure.from_csv(p).atoms, mn.atoms)


def test_stieltjes_examples(quartic):
    assert stieltjes(EmpiricalMeasure(np.array([0.0])), 1j) == pytest.approx(-1j)
    assert stieltjes(semicircle(), 2j) == pytest.approx(1j * (1 - math.sqrt(2)), abs=1e-10)
    assert abs(stieltjes(quartic, 0.0)) < 1e-12
    with pytest.raises(PoleError):
        stieltjes(EmpiricalMeasure(np.array([0.0, 1.0])), 1.0)


def test_derivs_quartic(quartic):
    g = stieltjes_derivs(quartic, 0.0)
    assert g.G0 == pytest.approx(0.0, abs=1e-12)
    assert g.G1 == pytest.approx(-5 / 3, rel=1e-12)
    assert g.G2 == pytest.approx(0.0, abs=1e-10)
    assert g.G3 == pytest.approx(-30.0, rel=1e-10)


def test_derivs_shifted(shifted):
    c = 1 / 0.5632
    g = stieltjes_derivs(shifted, 0.2)
    assert g.G0 == pytest.approx(0.416 * c, rel=1e-10)
    assert g.G2 == pytest.approx(0.8 * c, rel=1e-10)


def test_derivs_against_brute_force(shifted):
    # away from x* the plain integrals are smooth
    x = 1.5
    g = stieltjes_derivs(shifted, x)
    from scipy.integrate import quad
    for j, gj in enumerate(g.as_tuple()):
        ref = (-1) ** j * math.factorial(j) * quad(lambda s: shifted.pdf(s) / (x - s) ** (j + 1),
                                                   -1, 1, epsrel=1e-13)[0]
        assert gj == pytest.approx(ref, rel=1e-10)


def test_derivs_two_atoms():
    a = 0.7
    g = stieltjes_derivs(EmpiricalMeasure(np.array([-a, a])), 0.0)
    assert g.G0 == 0.0
    assert g.G1 == pytest.approx(-1 / a ** 2)


def test_derivs_divergent():
    spec = DensitySpec.power(2.5)
    with pytest.raises(DivergentIntegralError, match="kappa"):
        stieltjes_derivs(spec, 0.0, orders=3)


def test_log_potential_examples():
    assert log_potential(EmpiricalMeasure(np.array([0.0])), math.e) == pytest.approx(1.0)
    z = 2j
    ref = 0.5 * (math.log(math.sqrt(5)) + 1j * math.atan2(2, 1)
                 + math.log(math.sqrt(5)) + 1j * math.atan2(2, -1))
    assert log_potential(EmpiricalMeasure(np.array([-1.0, 1.0])), z) == pytest.approx(ref)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2 ** 31), st.floats(-2, 2), st.floats(0.05, 2))
def test_log_potential_product(n, seed, re, im):
    atoms = np.sort(np.random.default_rng(seed).uniform(-1, 1, n))
    mn = EmpiricalMeasure(atoms)
    z = complex(re, im)
    prod = np.prod(z - atoms)
    assert abs(np.exp(n * log_potential(mn, z)) - prod) <= 1e-12 * abs(prod)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(1e-3, 3))
def test_herglotz(re, im):
    z = complex(re, im)
    assert stieltjes(DensitySpec.power(4, x_star=0.2), z).imag < 0
    assert stieltjes(EmpiricalMeasure(np.array([-0.5, 0.1, 0.9])), z).imag < 0


def test_derivs_discretisation_rate(shifted):
    # O(1/n) agreement away from x*: error ratio between n and 2n is close to 2
    x = 1.3
    ref = stieltjes_derivs(shifted, x).G1
    e1 = abs(stieltjes_derivs(quantile_init(shifted, 200), x).G1 - ref)
    e2 = abs(stieltjes_derivs(quantile_init(shifted, 400), x).G1 - ref)
    assert 1.6 < e1 / e2 < 2.5


def test_validate(quartic, shifted):
    for spec in (quartic, shifted):
        rep = spec.validate()
        assert rep["normalized"] and rep["kappa_ok"] and rep["zero_at_x_star"]


def test_expansion_residual_taylor_oracle():
    # single atom far from x*: remainder of the geometric series of 1/(z - x1)
    x1, xs, r = 3.0, 0.0, 0.4
    mn = EmpiricalMeasure(np.array([x1]))
    res = expansion_residual(mn, mn, 0.0, "airy", x_star=xs, radius=r)
    # on |w| = r the remainder is w^3 / ((xs - x1)^3 (w + xs - x1)); max at w = +r
    q = xs - x1
    oracle = max(abs(w ** 3 / (q ** 3 * (w + q)))
                 for w in r * np.exp(1j * np.linspace(0, 2 * np.pi, 48, endpoint=False)))
    assert res == pytest.approx(oracle, rel=1e-10)


def test_expansion_residual_at_centre(quartic):
    mn = quantile_init(quartic, 50, placement="midpoint")
    res = expansion_residual(mn, quartic, 0.01, "pearcey", radius=0.0, n_radii=1, n_angles=1)
    g0 = stieltjes_derivs(quartic, 0.0).G0
    assert res == pytest.approx(abs(stieltjes(mn, 0.0) - g0), abs=1e-15)
