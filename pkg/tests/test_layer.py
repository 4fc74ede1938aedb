import numpy as np
import pytest

from vortsel import layer
from vortsel.grid import PolarField, Stretch, make_radial_grid
from vortsel.stepper import time_grid

T = 1.0


@pytest.fixture(scope="module")
def lgrid():
    return layer.layer_grid(T, 0.5, n=256)


@pytest.fixture(scope="module")
def times():
    return layer.layer_times(T, rel=1e-2)


def _bump(g, n_modes=3, phase=1 + 0.5j):
    r = g.r
    d = np.zeros((n_modes, g.n), complex)
    d[1] = r ** 3 * np.exp(-r ** 2) * phase
    d[:, -1] = 0
    return PolarField(g, 3, d)


def _psi(g):
    r = g.r
    p = np.zeros((3, g.n), complex)
    p[0] = np.exp(-r ** 2) * (1 - r ** 2)
    p[1] = r ** 3 * np.exp(-(r - 0.5) ** 2 / 0.5)
    p[2] = r ** 6 * np.exp(-r ** 2)
    p[:, -1] = 0
    return PolarField(g, 3, p)


def test_heat_mode_matches_closed_form():
    g = make_radial_grid(20.0, 1024, Stretch("sinh", 0.2))
    d = np.zeros((2, g.n), complex)
    d[1] = layer.heat_mode_exact(g, 3, 0.5, 0.0)
    run = layer.evolve_linearized(None, PolarField(g, 3, d), 1.0, times=time_grid(0.0, 1.0, 0.005))
    exact = layer.heat_mode_exact(g, 3, 0.5, 1.0)
    assert np.max(abs(run.states[-1][1] - exact)) / np.max(abs(exact)) < 1e-4


def test_zero_datum_stays_zero(sampler, lgrid, times):
    v0 = _bump(lgrid) * 0.0
    run = layer.evolve_linearized(sampler, v0, T, times)
    assert np.all(run.states == 0)
    nl = layer.evolve_perturbed_ns(sampler, 0.3, v0, None, T, times)
    assert np.all(nl.states == 0)


def test_layer_map_adjoint_pairing(sampler, lgrid, times, rng):
    lm = layer.LayerMap(sampler, lgrid, 3, 2, 0.5, T, times=times, modes=[1])
    worst = 0.0
    for _ in range(20):
        a = np.zeros((2, lgrid.n), complex)
        b = np.zeros((2, lgrid.n), complex)
        a[1] = rng.normal(size=lgrid.n) + 1j * rng.normal(size=lgrid.n)
        b[1] = rng.normal(size=lgrid.n) + 1j * rng.normal(size=lgrid.n)
        a[:, -1] = b[:, -1] = 0
        x = lm.inner(lm.forward(a), b)
        y = lm.inner(a, lm.adjoint(b))
        worst = max(worst, abs(x - y) / (lm.norm(lm.forward(a)) * lm.norm(b)))
    assert worst < 1e-8


def test_run_invariants(sampler, lgrid, times):
    v0 = _bump(lgrid)
    run = layer.evolve_perturbed_ns(sampler, 0.1, v0, None, T, times, keep_every=10)
    assert layer.symmetry_leak(run, 3) == 0.0
    assert layer.incompressibility_residual(run.final) < 1e-3
    assert layer.energy_inequality_violation(run, sampler) < 1e-2


def test_controllability_hits_reachable_target(sampler, lgrid, times):
    lm = layer.LayerMap(sampler, lgrid, 3, 3, 0.5, T, times=times)
    target = _bump(lgrid).with_data(lm.forward(_bump(lgrid).data))
    res = layer.solve_controllability(lm, target, delta=1e-2)
    assert res.converged and res.residual <= 1e-2
    resid = [h[1] for h in res.history]
    assert resid[-1] < resid[0]


def test_controllability_zero_target(sampler, lgrid, times):
    lm = layer.LayerMap(sampler, lgrid, 3, 2, 0.5, T, times=times, modes=[1])
    res = layer.solve_controllability(lm, _bump(lgrid, 2) * 0.0)
    assert res.converged and res.residual == 0.0


def test_regularization_sweep_trades_norm_for_fit(sampler, lgrid, times):
    lm = layer.LayerMap(sampler, lgrid, 3, 2, 0.5, T, times=times, modes=[1])
    target = _bump(lgrid, 2).with_data(lm.forward(_bump(lgrid, 2).data))
    sweep = layer.regularization_sweep(lm, target, mus=(1e-1, 1e-2, 1e-3), max_iters=60)
    resid = [s[1] for s in sweep]
    norms = [s[2] for s in sweep]
    assert all(np.diff(resid) < 0)
    assert all(np.diff(norms) > 0)


def test_target_on_wrong_grid_rejected(sampler, lgrid, times):
    lm = layer.LayerMap(sampler, lgrid, 3, 2, 0.5, T, times=times, modes=[1])
    other = _bump(layer.layer_grid(T, 0.5, n=128), 2)
    with pytest.raises(layer.LayerError):
        layer.solve_controllability(lm, other)


def test_smallness_gate(lgrid, times):
    v0 = _bump(lgrid)
    with pytest.raises(layer.LayerError):
        layer.evolve_perturbed_ns(None, 1e3, v0, None, T, times)


def test_gap_scales_quadratically_and_linearly(lgrid, times):
    sc = layer.gap_exponents(None, _bump(lgrid), _psi(lgrid), T, eps=(1e-1, 5e-2, 2.5e-2),
                             scales=(1e-1, 5e-2, 2.5e-2), times=times)
    assert sc.eps_exponent == pytest.approx(2.0, abs=0.05)
    assert sc.psi_exponent == pytest.approx(1.0, abs=0.05)
