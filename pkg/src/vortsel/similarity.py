"""Perturbations of the modified background in similarity variables.

The state is the vorticity difference w = Omega - Omega~ on the nonnegative
modes of an m0-symmetric field.  Omega~ comes from the heat trajectory, so
the unperturbed solution is w = 0 exactly.  The linear part is the same
discrete operator as the spectral module's L_ss, plus viscosity e^{-gamma tau}
Delta and the drift of Omega~ away from the vortex; a co-rotating frame
at the eigenmode's pattern speed keeps the time error small.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    GridError,
    PolarField,
    RadialGrid,
    ScaleParams,
    Stretch,
    field_norm,
    gradient_of_vorticity,
    l2_norm,
    lp_norm,
    make_radial_grid,
    to_physical,
    velocity_of,
)
from .heat import BackgroundSampler
from .spectral import SpectrumResult, fit_slope, spectral_project
from .stepper import Coefs, ModeBlocks, PerturbationStepper, time_grid
from .vortex import VortexProfile

log = logging.getLogger(__name__)


class SimilarityError(ValueError):
    pass


def similarity_grid(n: int = 512, r_max: float = 8.0, core: float = 0.05) -> RadialGrid:
    return make_radial_grid(r_max, n, Stretch("sinh", core))


@dataclass
class SimilarityContext:
    profile: VortexProfile
    grid: RadialGrid
    spec: SpectrumResult
    sampler: BackgroundSampler | None
    n_modes: int = 9
    params: ScaleParams | None = None

    def __post_init__(self):
        if self.spec.grid.key != self.grid.key:
            raise SimilarityError("eigenfunction lives on another grid")
        if self.params is None:
            self.params = ScaleParams(self.profile.alpha)

    @property
    def m0(self) -> int:
        return abs(self.spec.m)

    @property
    def alpha(self) -> float:
        return self.profile.alpha

    @property
    def gamma(self) -> float:
        return 2.0 / self.alpha - 1.0

    def background(self, tau: float) -> Coefs:
        if self.sampler is None:
            s = self.profile.on(self.grid)
            return Coefs(s["Omega"], s["dW"], float(np.exp(-self.gamma * tau)), 1.0)
        s = self.sampler.similarity(self.grid.r, tau)
        return Coefs(s["Omega"], s["dW"], float(np.exp(-self.gamma * tau)), 1.0)

    def vortex_coefs(self) -> Coefs:
        s = self.profile.on(self.grid)
        return Coefs(s["Omega"], s["dW"], 0.0, 1.0)

    def field(self, data: np.ndarray, tau: float) -> PolarField:
        return PolarField(self.grid, self.m0, data, "vorticity", "similarity", float(tau), self.alpha)

    def mode_field(self, z: complex, tau: float) -> PolarField:
        data = np.zeros((self.n_modes, self.grid.n), complex)
        data[1] = z * self.spec.eta
        return self.field(data, tau)


LEDGER_COLUMNS = ["tau", "sep_X", "lin_X", "per_X", "re_z", "im_z", "viscous_norm"]


@dataclass
class SimilarityRun:
    ctx: SimilarityContext
    tau0: float
    taus: np.ndarray
    states: np.ndarray
    z0: complex
    meta: dict = field(default_factory=dict)

    def field(self, i: int) -> PolarField:
        return self.ctx.field(self.states[i], self.taus[i])

    def linear(self, tau: float) -> PolarField:
        return self.ctx.mode_field(self.z0 * np.exp(self.ctx.spec.lam * (tau - self.tau0)), tau)


def evolve_ss_navier_stokes(ctx: SimilarityContext, phi: PolarField, tau0: float, tau_end: float,
                            h: float = 1e-3, rate: float | None = None, stop_sep: float | None = None,
                            keep_every: int = 10, nonlinear: bool = True) -> SimilarityRun:
    """Evolve U = U~ + (perturbation) from U~(tau0) + phi.

    ``stop_sep`` ends the run once ||U - U~||_X reaches it; ``rate``
    defaults to the eigenmode's pattern speed -b/m0.
    """
    if phi.kind != "vorticity" or phi.grid.key != ctx.grid.key:
        raise SimilarityError("phi must be a vorticity field on the context grid")
    if phi.m0 != ctx.m0 or phi.n_modes != ctx.n_modes:
        raise SimilarityError("phi does not match the context symmetry")
    if not tau_end > tau0:
        raise SimilarityError("need tau_end > tau0")
    rate = -ctx.spec.b / ctx.m0 if rate is None else float(rate)
    st = PerturbationStepper(ctx.grid, ctx.m0, ctx.n_modes, ctx.alpha, ctx.background, rate=rate,
                             nonlinear=nonlinear)
    times = time_grid(tau0, tau_end, h)
    monitor = None
    if stop_sep is not None:
        def monitor(s, w):
            return field_norm(ctx.field(w, s), "X", ctx.params) >= stop_sep

    w0 = phi.data.copy()
    ts, ws = _run_rotating(st, w0, times, keep_every, monitor)
    z0 = spectral_project(phi, ctx.spec).z
    return SimilarityRun(ctx, tau0, ts, ws, z0, {"h": h, "rate": rate})


def _run_rotating(st: PerturbationStepper, w0, times, keep_every, monitor):
    """PerturbationStepper.run, with the monitor thinned to every kept step."""
    def keep(i, t):
        return i % keep_every == 0

    def mon(s, w):
        return monitor(s, w) if monitor is not None else False

    counter = {"i": 0}

    def thinned(s, w):
        counter["i"] += 1
        return counter["i"] % keep_every == 0 and mon(s, w)

    return st.run(w0, times, keep=keep, monitor=thinned if monitor is not None else None)


def evolve_uper_direct(run: SimilarityRun, h: float | None = None) -> np.ndarray:
    """Evolve U^per by its own equation and return it at the run's kept times.

    d U^per = A(tau) U^per + (A(tau) - lambda) U^lin + Q(U^lin + U^per), with A
    the full linearization around U~ and viscosity.  Agreement with the
    difference U - U~ - U^lin checks the decomposition.
    """
    ctx = run.ctx
    h = run.meta["h"] if h is None else h
    rate = run.meta["rate"]
    lam = ctx.spec.lam
    block = ModeBlocks(ctx.grid, ctx.m0, ctx.alpha)
    n = ctx.grid.n - 1
    helper = PerturbationStepper(ctx.grid, ctx.m0, ctx.n_modes, ctx.alpha, ctx.background, rate=rate)

    def extra(s, x):
        wl = np.zeros_like(x)
        wl[1] = run.z0 * np.exp(lam * (s - run.tau0)) * ctx.spec.eta
        mismatch = block.explicit(wl[1, :n], ctx.background(s), 0.0) - lam * wl[1, :n]
        wl = helper.to_rotating(wl, s - run.tau0)
        out = helper.quadratic(wl + x)
        out[1, :n] += mismatch * np.exp(1j * ctx.m0 * rate * (s - run.tau0))
        return out

    st = PerturbationStepper(ctx.grid, ctx.m0, ctx.n_modes, ctx.alpha, ctx.background, rate=rate,
                             nonlinear=False, extra=extra)
    w0 = run.states[0] - run.linear(run.taus[0]).data
    times = time_grid(run.tau0, float(run.taus[-1]), h)
    keep_set = set(np.round(run.taus, 12))
    ts, ws = st.run(w0, times, keep=lambda i, t: round(t, 12) in keep_set)
    idx = [int(np.argmin(abs(ts - t))) for t in run.taus]
    return ws[idx]


@dataclass
class Decomposition:
    tau: float
    z: complex
    lin: PolarField
    per: PolarField
    norms: dict[str, float]


def decompose_solution(run: SimilarityRun, i: int) -> Decomposition:
    """U - U~ = U^lin + U^per with U^lin in closed form; X norms of the pieces."""
    ctx = run.ctx
    if ctx.spec.eta_adj is None:
        raise SimilarityError("spectral data lacks the adjoint eigenfunction")
    tau = float(run.taus[i])
    full = run.field(i)
    lin = run.linear(tau)
    per = full.with_data(full.data - lin.data)
    z = spectral_project(full, ctx.spec).z
    p = ctx.params
    norms = {"sep": field_norm(full, "X", p), "lin": field_norm(lin, "X", p), "per": field_norm(per, "X", p)}
    return Decomposition(tau, z, lin, per, norms)


def viscous_norm(f: PolarField, tau: float, alpha: float) -> float:
    """||e^{-gamma tau} Delta U||_2 = e^{-gamma tau} ||grad Omega||_2."""
    gamma = 2.0 / alpha - 1.0
    return float(np.exp(-gamma * tau) * l2_norm(gradient_of_vorticity(f)))


def ledger(run: SimilarityRun) -> list[list[float]]:
    rows = []
    for i, tau in enumerate(run.taus):
        d = decompose_solution(run, i)
        rows.append([float(tau), d.norms["sep"], d.norms["lin"], d.norms["per"], d.z.real, d.z.imag,
                     viscous_norm(run.field(i), tau, run.ctx.alpha)])
    return rows


def linear_tracking_error(run: SimilarityRun, until_sep: float = 1e-2) -> tuple[float, float]:
    """max |z(tau) / (z0 e^{lambda (tau - tau0)}) - 1| while ||U - U~||_X < until_sep, and the tau reached."""
    ctx = run.ctx
    worst, reached = 0.0, run.tau0
    for i, tau in enumerate(run.taus):
        f = run.field(i)
        if field_norm(f, "X", ctx.params) >= until_sep:
            break
        z = spectral_project(f, ctx.spec).z
        pred = run.z0 * np.exp(ctx.spec.lam * (tau - run.tau0))
        worst = max(worst, abs(z / pred - 1))
        reached = float(tau)
    return worst, reached


# ---------------------------------------------------------------------------
# bootstrap monitor


def tau_max(a: float, size: float) -> float:
    """(1/a) log(1/(C (eps + M))) given size = C (eps + M)."""
    if not (a > 0 and size > 0):
        raise SimilarityError("need a > 0 and a positive size")
    return float(np.log(1.0 / size) / a)


@dataclass
class BootstrapReport:
    eps: float
    M: float
    c: float
    C_fit: float
    tau_max: float
    growth_exponent: float
    first_violation: float | None
    per_norms: np.ndarray
    taus: np.ndarray
    probes: list[dict]


def monitor_bootstrap(run: SimilarityRun, c: float = 2.0, window_start: float = 1.0) -> BootstrapReport:
    """Check ||U^per||_X <= (c eps + C M) e^{a tau} along the run.

    eps and M are e^{-a tau0} ||P Phi||_X and e^{-a tau0} ||Phi - P Phi||_X.
    C is fitted as the smallest constant that makes the bound hold; the
    growth exponent is fitted on [tau0 + window_start, min(tau_max, end)].
    """
    ctx = run.ctx
    a = ctx.spec.a
    phi = run.field(0)
    proj = spectral_project(phi, ctx.spec)
    p = ctx.params
    eps = float(np.exp(-a * run.tau0) * field_norm(proj.projected, "X", p))
    big_m = float(np.exp(-a * run.tau0) * field_norm(proj.remainder, "X", p))
    per, probes = [], []
    for i, tau in enumerate(run.taus):
        d = decompose_solution(run, i)
        per.append(d.norms["per"])
        probes.append({"tau": float(tau), **weighted_probe(d.per, p.sigma)})
    per = np.array(per)
    scaled = per * np.exp(-a * run.taus)
    if big_m > 0:
        c_fit = float(max(0.0, np.max((scaled - c * eps) / big_m)))
    else:
        c_fit = 0.0
    bound = (c * eps + c_fit * big_m) * np.exp(a * run.taus)
    size = max(c, c_fit) * (eps + big_m)
    t_max = tau_max(a, size) if size > 0 else np.inf
    viol = np.nonzero(per > bound * (1 + 1e-12))[0]
    sel = (run.taus >= run.tau0 + window_start) & (run.taus <= min(t_max, run.taus[-1])) & (per > 0)
    slope = fit_slope(run.taus[sel], np.log(per[sel])) if sel.sum() > 2 else float("nan")
    return BootstrapReport(eps, big_m, c, c_fit, t_max, slope, float(run.taus[viol[0]]) if viol.size else None,
                           per, run.taus.copy(), probes)


# ---------------------------------------------------------------------------
# probes


def weight(r: np.ndarray) -> np.ndarray:
    """w(r) = r on [0, 1] and 1 beyond."""
    r = np.asarray(r, float)
    return np.where(r <= 1.0, r, 1.0)


def weighted_probe(f: PolarField, sigma: float = 0.5) -> dict[str, float]:
    """L^2 and L^{2+sigma} norms of (w/r) d_theta Omega."""
    data = f.data * (1j * f.wavenumbers[:, None]) * (weight(f.grid.r) / f.grid.r)[None, :]
    g = f.with_data(data)
    return {"weighted_l2": l2_norm(g), "weighted_lp": lp_norm(g, 2.0 + sigma)}


@dataclass
class HardyResult:
    ratio: float
    x_norm: float
    constant: float
    covered: bool


def hardy_probe(f: PolarField, params: ScaleParams | None = None, n_theta: int | None = None) -> HardyResult:
    """sup |U(x)| / min(|x|, 1), and its size relative to ||U||_X.

    The bound needs U(0) = 0, which m0 >= 2 symmetry supplies; ``covered``
    is False otherwise and the ratio is reported without that guarantee.
    """
    params = params or ScaleParams(f.alpha)
    u = velocity_of(f)
    n_theta = n_theta or max(16, 4 * f.n_modes)
    vals = to_physical(u.data, n_theta)
    mag = np.sqrt(vals[0] ** 2 + vals[1] ** 2)
    ratio = float(np.max(mag / np.minimum(f.grid.r, 1.0)[None, :]))
    xn = field_norm(f, "X", params)
    covered = f.m0 >= 2
    return HardyResult(ratio, xn, ratio / xn if xn else 0.0, bool(covered))


def random_perturbation(ctx: SimilarityContext, size: float, rng: np.random.Generator, tau: float,
                        width: float = 0.6, modes: int = 3) -> PolarField:
    """Smooth random m0-symmetric vorticity with X-norm ``size``, supported inside the vortex."""
    r = ctx.grid.r
    data = np.zeros((ctx.n_modes, ctx.grid.n), complex)
    env = np.exp(-((r - 1.0) / width) ** 2) * r ** ctx.m0 / (1 + r ** ctx.m0)
    for k in range(1, min(modes + 1, ctx.n_modes)):
        c = rng.normal(size=4) + 1j * rng.normal(size=4)
        poly = np.polynomial.polynomial.polyval(r, c)
        data[k] = env * poly * r ** (k * ctx.m0 - ctx.m0)
    data[:, -1] = 0.0
    f = ctx.field(data, tau)
    nrm = field_norm(f, "X", ctx.params)
    if nrm == 0:
        raise GridError("degenerate random field")
    return f.with_data(data * (size / nrm))
