import math

import numpy as np
import pytest

from nibmlab import free_conv as fc
from nibmlab import sim
from nibmlab.errors import NibmError
from nibmlab.measures import DensitySpec, EmpiricalMeasure, quantile_init


def _se_var(samples):
    m = samples.size
    return samples.var() * math.sqrt(2.0 / (m - 1))


def test_single_particle_is_brownian():
    t = 0.7
    ens = sim.sample_matrix(EmpiricalMeasure(np.array([0.0])), [t], 10000, seed=1)
    x = ens.paths[:, 0, 0]
    assert abs(x.var() - t) <= 3 * _se_var(x)
    eu = sim.euler_sde(EmpiricalMeasure(np.array([0.0])), [t], 0.05, 10000, seed=2)
    y = eu.paths[:, 0, 0]
    assert abs(y.var() - t) <= 3 * _se_var(y)


def test_free_convolution_profile():
    spec = DensitySpec.power(4)
    t = 0.3
    ens = sim.sample_matrix(quantile_init(spec, 100), [t], 20, seed=3)
    xs, F = fc.BianeState.build(spec, t, n_grid=401).cdf_table()
    cdf = lambda v: float(np.interp(v, xs, F / F[-1]))
    assert sim.ks_to_cdf(ens.paths[:, 0, :], cdf) <= 0.02


def test_semicircle_from_narrow_start():
    init = np.linspace(-1e-6, 1e-6, 200)
    ens = sim.sample_matrix(init, [1.0], 500, seed=4)
    cdf = lambda x: 0.5 + (x * math.sqrt(max(4 - x * x, 0)) / 4 + math.asin(
        max(min(x / 2, 1), -1))) / math.pi
    assert sim.ks_to_cdf(ens.paths[:, 0, :], cdf) <= 0.02


def test_euler_matches_matrix_sampler():
    init = np.array([-0.5, 0.5])
    a = sim.sample_matrix(init, [0.1], 2000, seed=5).paths[:, 0, :]
    b = sim.euler_sde(init, [0.1], 1e-4, 2000, seed=6).paths[:, 0, :]
    assert sim.energy_test(a, b, permutations=99) > 0.05


def test_deterministic_repulsion():
    init = np.array([-0.5, 0.5])
    ts = [0.05, 0.1, 0.2]
    ens = sim.euler_sde(init, ts, 1e-5, 1, seed=0, noise=False)
    gaps = np.diff(ens.paths[0], axis=1)[:, 0]
    assert np.max(np.abs(gaps - np.sqrt(1.0 + 2 * np.array(ts)))) <= 1e-4


def test_dt_guard():
    with pytest.raises(ValueError):
        sim.euler_sde(np.array([-0.5, 0.5]), [0.1], 1e-3, 4, seed=0)


def test_non_intersection_and_determinism(tmp_path):
    init = np.linspace(-1, 1, 12)
    e1 = sim.sample_matrix(init, [0.1, 0.2, 0.4], 8, seed=9)
    e2 = sim.sample_matrix(init, [0.1, 0.2, 0.4], 8, seed=9, workers=3)
    assert np.array_equal(e1.paths, e2.paths)
    assert np.all(np.diff(e1.paths, axis=2) > 0)
    p1 = e1.save(tmp_path / "a")
    p2 = e2.save(tmp_path / "b")
    assert p1.read_bytes() == p2.read_bytes()
    back = sim.PathEnsemble.load(tmp_path / "a")
    assert np.array_equal(back.paths, e1.paths) and back.seed == 9


def test_gap_frequency_and_xi():
    spec = DensitySpec.power(4, x_star=0.2)
    frame = fc.classify(spec)
    n = 60
    ens = sim.sample_matrix(quantile_init(spec, n), sim.frame_times(frame, n, [0.0]), 40, seed=8)
    assert sim.meso_gap_frequency(ens, frame, n, 0.05, 0.05, [0.0]).value == 1.0
    est = sim.meso_gap_frequency(ens, frame, n, 0.05, 0.02, [0.0])
    assert est.ci_low <= est.value <= est.ci_high
    lo = sim.xi_statistic(ens, frame, n, 0.02, 0.0).values
    hi = sim.xi_statistic(ens, frame, n, 0.2, 0.0).values
    assert np.all(hi >= lo)
    with pytest.raises(NibmError):
        sim.meso_gap_frequency(ens, frame, n, 0.05, 0.02, [1.0])


def test_empirical_cdf_joint():
    S = np.array([[0.0, 1.0], [2.0, -1.0], [-1.0, -1.0]])
    e = sim.empirical_cdf(S, [(0.5, 0.5)])[0]
    assert e.successes == 1 and e.trials == 3
