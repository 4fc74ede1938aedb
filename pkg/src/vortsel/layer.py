"""The unit-viscosity initial layer around the modified background.

Forward linear and nonlinear perturbation runs, the exact discrete adjoint,
and controllability by regularized least squares.  All fields are vorticity
PolarFields in the physical frame; velocities follow from Biot-Savart, so
they are divergence-free by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    NumericalFailure,
    PolarField,
    RadialGrid,
    ScaleParams,
    Stretch,
    _mode_factors,
    biot_savart_mode,
    divergence_mode,
    field_norm,
    from_similarity,
    l2_norm,
    make_radial_grid,
    velocity_of,
)
from .heat import BackgroundSampler
from .spectral import fit_slope
from .stepper import Coefs, ModePropagator, PerturbationStepper, still_background, time_grid

log = logging.getLogger(__name__)


class LayerError(ValueError):
    pass


def layer_grid(horizon: float, alpha: float, support: float = 1.65, n: int = 512, core: float = 0.05) -> RadialGrid:
    """Physical grid reaching well past the vortex at the horizon, and past the heat scale."""
    reach = max(support * horizon ** (1.0 / alpha), np.sqrt(horizon), 1.0)
    return make_radial_grid(8.0 * reach, n, Stretch("sinh", core))


def layer_times(horizon: float, rel: float = 5e-3, h_max: float = 0.05) -> np.ndarray:
    """Steps proportional to t: the background turns at a rate ~ 1/t."""
    return time_grid(0.0, horizon, h_max, rel)


def physical_background(sampler: BackgroundSampler | None, grid: RadialGrid):
    """Unit-viscosity background on the nodes of ``grid`` at physical time t."""
    if sampler is None:
        return still_background(grid)

    def at(t: float) -> Coefs:
        s = sampler.physical(grid.r, t)
        return Coefs(s["Omega"], s["dW"], 1.0, 0.0)

    return at


@dataclass
class LayerRun:
    grid: RadialGrid
    m0: int
    times: np.ndarray
    states: np.ndarray
    alpha: float = 0.5
    meta: dict = field(default_factory=dict)

    def field(self, i: int = -1) -> PolarField:
        return PolarField(self.grid, self.m0, self.states[i], "vorticity", "physical", float(self.times[i]), self.alpha)

    @property
    def final(self) -> PolarField:
        return self.field(-1)


def _check_datum(v0: PolarField, grid: RadialGrid) -> None:
    if v0.kind != "vorticity":
        raise LayerError("pass vorticity fields")
    if v0.grid.key != grid.key:
        raise LayerError("datum is not on the layer grid")


def evolve_linearized(sampler: BackgroundSampler | None, v0: PolarField, horizon: float,
                      times: np.ndarray | None = None, keep_every: int = 1) -> LayerRun:
    """d_t v + P(u~.grad v + v.grad u~) = Delta v, from v0 over [0, horizon]."""
    grid = v0.grid
    times = layer_times(horizon) if times is None else np.asarray(times, float)
    st = PerturbationStepper(grid, v0.m0, v0.n_modes, v0.alpha, physical_background(sampler, grid), nonlinear=False)
    ts, ws = st.run(v0.data, times, keep=lambda i, t: i % keep_every == 0)
    return LayerRun(grid, v0.m0, ts, ws, v0.alpha, {"kind": "linear"})


def evolve_perturbed_ns(sampler: BackgroundSampler | None, eps: float, v0: PolarField, psi0: PolarField | None,
                        horizon: float, times: np.ndarray | None = None, keep_every: int = 1,
                        gate: float = 1.0) -> LayerRun:
    """Full perturbation u - u~ with datum eps v0 + psi0 (quadratic term included)."""
    data = eps * v0.data
    if psi0 is not None:
        _check_datum(psi0, v0.grid)
        data = data + psi0.data
    size = l2_norm(v0.with_data(data))
    if size > gate:
        raise LayerError(f"datum of size {size:.3g} above the smallness gate {gate}")
    grid = v0.grid
    times = layer_times(horizon) if times is None else np.asarray(times, float)
    st = PerturbationStepper(grid, v0.m0, v0.n_modes, v0.alpha, physical_background(sampler, grid), nonlinear=True)
    ts, ws = st.run(data, times, keep=lambda i, t: i % keep_every == 0)
    return LayerRun(grid, v0.m0, ts, ws, v0.alpha, {"kind": "nonlinear", "eps": eps})


def incompressibility_residual(f: PolarField) -> float:
    """max over modes of |div u_m| / |u_m| on the interior nodes."""
    g = f.grid
    worst = 0.0
    for k, m in enumerate(f.wavenumbers):
        ur, ut = biot_savart_mode(f.data[k], int(m), g)
        scale = np.sqrt(np.sum(g.weights * (abs(ur) ** 2 + abs(ut) ** 2)))
        if scale == 0:
            continue
        div = divergence_mode(ur, ut, int(m), g)[:-2]
        worst = max(worst, float(np.sqrt(np.sum(g.weights[:-2] * abs(div) ** 2)) * g.r_max / scale))
    return worst


def symmetry_leak(run: LayerRun, m0: int) -> float:
    """Fraction of enstrophy outside m0 Z; zero by construction of the storage."""
    wn = run.m0 * np.arange(run.states.shape[1])
    off = wn % m0 != 0
    tot = np.sum(np.abs(run.states) ** 2)
    return float(np.sum(np.abs(run.states[:, off]) ** 2) / tot) if tot else 0.0


def energy_inequality_violation(run: LayerRun, sampler: BackgroundSampler | None) -> float:
    """Largest per-step excess of d/dt ||v||^2 over 2 ||grad u~||_inf ||v||^2 - 2 ||grad v||^2, relative."""
    g = run.grid
    worst = -np.inf
    energy, dissip, grad_bg = [], [], []
    for i, t in enumerate(run.times):
        f = run.field(i)
        energy.append(l2_norm(velocity_of(f)) ** 2)
        dissip.append(l2_norm(f) ** 2)
        if sampler is None or t <= 0:
            grad_bg.append(0.0)
        else:
            s = sampler.physical(g.r, t)
            # grad of a swirl flow is [[0, -Omega], [W - Omega, 0]] in the polar frame
            grad_bg.append(float(np.max(np.maximum(np.abs(s["Omega"]), np.abs(s["W"] - s["Omega"])))))
    e, d, gb = map(np.asarray, (energy, dissip, grad_bg))
    for i in range(1, len(e)):
        h = run.times[i] - run.times[i - 1]
        lhs = (e[i] - e[i - 1]) / h
        # endpoint bound rather than trapezoid: dissipation falls steeply on the first steps
        rhs = 2 * max(gb[i] * e[i], gb[i - 1] * e[i - 1]) - 2 * min(d[i], d[i - 1])
        worst = max(worst, (lhs - rhs) / max(e[i - 1], 1e-300))
    return float(worst)


# ---------------------------------------------------------------------------
# adjoint and controllability


class LayerMap:
    """The linear map v0 -> v(T) per mode, with its weighted adjoint."""

    def __init__(self, sampler: BackgroundSampler | None, grid: RadialGrid, m0: int, n_modes: int, alpha: float,
                 horizon: float, times: np.ndarray | None = None, modes: list[int] | None = None):
        self.grid, self.m0, self.n_modes, self.alpha = grid, m0, n_modes, alpha
        self.times = layer_times(horizon) if times is None else np.asarray(times, float)
        bg = physical_background(sampler, grid)
        self._bg_cache: dict[float, Coefs] = {}

        def cached(t):
            hit = self._bg_cache.get(t)
            if hit is None:
                hit = self._bg_cache[t] = bg(t)
            return hit

        keep = range(n_modes) if modes is None else modes
        self.props = {k: ModePropagator(grid, k * m0, alpha, cached, self.times) for k in keep}
        self._bg_cache.clear()
        self.fac = _mode_factors(n_modes)

    def forward(self, data: np.ndarray) -> np.ndarray:
        out = np.zeros_like(data, dtype=complex)
        n = self.grid.n - 1
        for k, p in self.props.items():
            out[k, :n] = p.forward(data[k, :n])
        return out

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        """Adjoint for the full L^2 pairing (mode factors cancel mode by mode)."""
        out = np.zeros_like(data, dtype=complex)
        n = self.grid.n - 1
        for k, p in self.props.items():
            out[k, :n] = p.adjoint(data[k, :n])
        return out

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Real L^2 pairing of two real fields given by their nonnegative modes."""
        w = self.grid.weights
        return float(np.sum(self.fac * np.real(np.sum(a * np.conj(b) * w, axis=1))))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))


def evolve_adjoint(sampler: BackgroundSampler | None, w0: PolarField, horizon: float,
                   times: np.ndarray | None = None) -> PolarField:
    """Discrete adjoint of the linearized layer map applied to w0 (returns the time-0 field)."""
    lm = LayerMap(sampler, w0.grid, w0.m0, w0.n_modes, w0.alpha, horizon, times)
    return w0.with_data(lm.adjoint(w0.data), time=0.0)


CONTROL_COLUMNS = ["iteration", "residual", "v0_norm", "regularization"]


@dataclass
class ControlResult:
    v0: PolarField
    residual: float
    converged: bool
    history: list[list] = field(default_factory=list)


def solve_controllability(layer_map: LayerMap, target: PolarField, delta: float = 1e-2, max_iters: int = 200,
                          tikhonov: float = 1e-8) -> ControlResult:
    """min ||S v0 - phi||^2 + mu ||v0||^2 by conjugate gradients on the normal equations (CGLS).

    Norms are vorticity L^2; ``residual`` is ||S v0 - phi|| / ||phi||.
    """
    if target.grid.key != layer_map.grid.key:
        raise LayerError("target is not on the layer grid")
    phi = np.array(target.data, complex)
    phi_norm = layer_map.norm(phi)
    mu = float(tikhonov)
    x = np.zeros_like(phi)
    hist: list[list] = [[0, 1.0 if phi_norm else 0.0, 0.0, mu]]
    if phi_norm == 0:
        return ControlResult(target.with_data(x, time=0.0), 0.0, True, hist)
    res = phi.copy()
    s = layer_map.adjoint(res)
    p = s.copy()
    gam = layer_map.inner(s, s)
    rel = 1.0
    for it in range(1, max_iters + 1):
        q = layer_map.forward(p)
        den = layer_map.inner(q, q) + mu * layer_map.inner(p, p)
        if den <= 0:
            break
        step = gam / den
        x = x + step * p
        res = res - step * q
        s = layer_map.adjoint(res) - mu * x
        gam_new = layer_map.inner(s, s)
        rel = layer_map.norm(res) / phi_norm
        hist.append([it, rel, layer_map.norm(x), mu])
        if rel <= delta:
            break
        p = s + (gam_new / gam) * p
        gam = gam_new
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("controllability iteration diverged")
    return ControlResult(target.with_data(x, time=0.0), rel, rel <= delta, hist)


def regularization_sweep(layer_map: LayerMap, target: PolarField, mus=(1e-1, 1e-2, 1e-3, 1e-4),
                         max_iters: int = 200) -> list[tuple[float, float, float]]:
    """(mu, residual, ||v0||) along decreasing regularization."""
    out = []
    for mu in mus:
        r = solve_controllability(layer_map, target, delta=0.0, max_iters=max_iters, tikhonov=mu)
        out.append((float(mu), r.residual, layer_map.norm(r.v0.data)))
    return out


def pulled_back_mode(spec, horizon: float, grid: RadialGrid, n_modes: int) -> PolarField:
    """T^{-1} T^lambda eta(r / T^{1/alpha}) e^{i m theta} + conj, the physical vorticity at t = T."""
    tau0 = float(np.log(horizon))
    f = spec.eigen_field(np.exp(spec.lam * tau0), n_modes)
    f = f.with_data(f.data, time=tau0)
    return from_similarity(f, onto=grid)


# ---------------------------------------------------------------------------
# closeness report


@dataclass
class ClosenessReport:
    times: np.ndarray
    gaps: np.ndarray
    sup_gap: float
    eps: float
    psi0_norm: float


def closeness(nonlinear: LayerRun, linear: LayerRun, eps: float, psi0: PolarField | None,
              params: ScaleParams) -> ClosenessReport:
    """sup_t ||u - eps v|| in the H^{2+s} proxy over the stored snapshots."""
    if not np.allclose(nonlinear.times, linear.times):
        raise LayerError("runs must share their snapshots")
    gaps = []
    for i in range(len(nonlinear.times)):
        diff = nonlinear.field(i).with_data(nonlinear.states[i] - eps * linear.states[i])
        gaps.append(field_norm(diff, "H2s", params))
    gaps = np.array(gaps)
    pn = field_norm(psi0, "H2s", params) if psi0 is not None else 0.0
    return ClosenessReport(nonlinear.times, gaps, float(gaps.max()), float(eps), float(pn))


@dataclass
class GapScaling:
    eps: np.ndarray
    eps_gaps: np.ndarray
    eps_exponent: float
    psi_norms: np.ndarray
    psi_gaps: np.ndarray
    psi_exponent: float


def gap_exponents(sampler: BackgroundSampler | None, v0: PolarField, psi0: PolarField, horizon: float,
                  eps=(1e-1, 5e-2, 2.5e-2, 1.25e-2), scales=(1e-1, 5e-2, 2.5e-2, 1.25e-2),
                  times: np.ndarray | None = None, keep_every: int = 10,
                  params: ScaleParams | None = None) -> GapScaling:
    """Fitted exponents of sup_t ||u - eps v|| in eps (psi0 = 0) and in ||psi0|| (eps = 0)."""
    params = params or ScaleParams(v0.alpha)
    times = layer_times(horizon) if times is None else times
    lin = evolve_linearized(sampler, v0, horizon, times, keep_every)
    eps = np.asarray(eps, float)
    eg = np.array([closeness(evolve_perturbed_ns(sampler, e, v0, None, horizon, times, keep_every), lin, e, None,
                             params).sup_gap for e in eps])
    norms, pg = [], []
    for c in scales:
        psi = psi0 * c
        rep = closeness(evolve_perturbed_ns(sampler, 0.0, v0, psi, horizon, times, keep_every), lin, 0.0, psi, params)
        norms.append(rep.psi0_norm)
        pg.append(rep.sup_gap)
    norms, pg = np.array(norms), np.array(pg)
    return GapScaling(eps, eg, fit_slope(np.log(eps), np.log(eg)), norms, pg, fit_slope(np.log(norms), np.log(pg)))


def heat_mode_exact(grid: RadialGrid, m: int, a: float, t: float) -> np.ndarray:
    """Heat flow of r^m e^{-r^2/(4a)} e^{i m theta}: (a/(a+t))^{m+1} r^m e^{-r^2/(4(a+t))}."""
    r = grid.r
    return (a / (a + t)) ** (m + 1) * r ** m * np.exp(-r * r / (4 * (a + t)))
