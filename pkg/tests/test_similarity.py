import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortsel import spectral
from vortsel import similarity as sim
from vortsel.grid import PolarField, ScaleParams, field_norm
from vortsel.vortex import build_vortex

TAU0 = 4.0


@pytest.fixture(scope="module")
def ctx(profile, sampler):
    g = sim.similarity_grid(256, 6.0)
    spec = spectral.find_unstable_eigenvalue(spectral.similarity_operator(profile, 3, g))
    return sim.SimilarityContext(profile, g, spec, sampler, n_modes=3)


def test_unperturbed_run_stays_on_background(ctx):
    run = sim.evolve_ss_navier_stokes(ctx, ctx.mode_field(0.0, TAU0), TAU0, TAU0 + 0.1, h=5e-3)
    assert np.all(run.states == 0)


def test_small_perturbation_tracks_eigenmode(ctx):
    run = sim.evolve_ss_navier_stokes(ctx, ctx.mode_field(1e-6, TAU0), TAU0, TAU0 + 0.2, h=1e-3)
    err, reached = sim.linear_tracking_error(run)
    assert reached == pytest.approx(TAU0 + 0.2)
    assert err < 1e-3


def test_perturbation_grows_at_a(ctx):
    run = sim.evolve_ss_navier_stokes(ctx, ctx.mode_field(1e-6, TAU0), TAU0, TAU0 + 0.2, h=1e-3)
    sep = np.array([r[1] for r in sim.ledger(run)])
    slope = np.polyfit(run.taus, np.log(sep), 1)[0]
    assert slope == pytest.approx(ctx.spec.a, rel=1e-2)


def test_decomposition_adds_up(ctx):
    run = sim.evolve_ss_navier_stokes(ctx, ctx.mode_field(1e-3, TAU0), TAU0, TAU0 + 0.1, h=2e-3)
    d = sim.decompose_solution(run, len(run.taus) - 1)
    assert np.allclose(d.lin.data + d.per.data, run.states[-1])


def test_direct_uper_converges_second_order(ctx):
    gaps = []
    for h in (4e-3, 2e-3):
        run = sim.evolve_ss_navier_stokes(ctx, ctx.mode_field(1e-2, TAU0), TAU0, TAU0 + 0.2, h=h, keep_every=1)
        direct = sim.evolve_uper_direct(run)
        per = sim.decompose_solution(run, len(run.taus) - 1).per.data
        gaps.append(np.max(abs(direct[-1] - per)) / np.max(abs(per)))
    assert gaps[1] < 1e-2
    assert gaps[0] / gaps[1] > 3.0


def test_bootstrap_bound_holds_with_fitted_constant(ctx):
    run = sim.evolve_ss_navier_stokes(ctx, ctx.mode_field(1e-3, TAU0), TAU0, TAU0 + 0.2, h=2e-3)
    rep = sim.monitor_bootstrap(run, window_start=0.05)
    assert rep.first_violation is None
    assert rep.M == 0.0
    assert rep.tau_max == pytest.approx(sim.tau_max(ctx.spec.a, 2.0 * rep.eps))
    assert len(rep.probes) == len(run.taus)


def test_tau_max():
    assert sim.tau_max(2.0, np.exp(-6.0)) == pytest.approx(3.0)
    with pytest.raises(sim.SimilarityError):
        sim.tau_max(-1.0, 0.1)
    with pytest.raises(sim.SimilarityError):
        sim.tau_max(1.0, 0.0)


def test_evolve_guards(ctx):
    phi = ctx.mode_field(1e-3, TAU0)
    with pytest.raises(sim.SimilarityError):
        sim.evolve_ss_navier_stokes(ctx, phi, TAU0, TAU0)
    other = sim.similarity_grid(128, 6.0)
    with pytest.raises(sim.SimilarityError):
        sim.SimilarityContext(ctx.profile, other, ctx.spec, None)


def test_weight_profile():
    r = np.array([0.0, 0.5, 1.0, 3.0])
    assert np.allclose(sim.weight(r), [0.0, 0.5, 1.0, 1.0])


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.01, 100.0))
def test_weighted_probe_is_homogeneous(c):
    g = sim.similarity_grid(128, 6.0)
    r = g.r
    d = np.zeros((3, g.n), complex)
    d[1] = r ** 3 * np.exp(-r ** 2)
    d[2] = 0.3j * r ** 6 * np.exp(-r ** 2)
    f = PolarField(g, 3, d, "vorticity", "similarity", 0.0, 0.5)
    a, b = sim.weighted_probe(f), sim.weighted_probe(f * c)
    assert b["weighted_l2"] == pytest.approx(c * a["weighted_l2"], rel=1e-9)
    assert b["weighted_lp"] == pytest.approx(c * a["weighted_lp"], rel=1e-9)


def test_hardy_probe(ctx, rng):
    f = sim.random_perturbation(ctx, 1.0, rng, TAU0)
    h = sim.hardy_probe(f)
    assert h.covered
    assert np.isfinite(h.ratio) and h.ratio > 0
    assert h.x_norm == pytest.approx(1.0)


def test_hardy_probe_flags_m0_one():
    p = build_vortex({"family": "gaussian", "amplitude": 1.0}, 0.5)
    g = sim.similarity_grid(128, 6.0)
    d = np.zeros((2, g.n), complex)
    d[1] = g.r * np.exp(-g.r ** 2)
    h = sim.hardy_probe(PolarField(g, 1, d, "vorticity", "similarity", 0.0, p.alpha))
    assert not h.covered


def test_random_perturbation(ctx):
    a = sim.random_perturbation(ctx, 1e-3, np.random.default_rng(7), TAU0)
    b = sim.random_perturbation(ctx, 1e-3, np.random.default_rng(7), TAU0)
    assert np.array_equal(a.data, b.data)
    assert field_norm(a, "X", ScaleParams(0.5)) == pytest.approx(1e-3, rel=1e-10)
    assert a.m0 == 3 and np.all(a.data[0] == 0)
