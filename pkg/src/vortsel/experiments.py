"""End-to-end experiments: threshold scans over (nu, eps), the phase
subsequence, the Golovkin force construction, and report emission.

A scan row runs the whole pipeline for one viscosity.  The datum is built
at unit viscosity by controllability, the initial layer carries it to
T = e^{tau0}, the similarity equations carry it to the observation time
tau_obs = -(1/gamma) log nu (physical time 1 for viscosity nu), and the
separation from the vortex is recorded there.
"""

from __future__ import annotations

import configparser
import logging
import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io as vio
from .grid import (
    NumericalFailure,
    PolarField,
    ScaleParams,
    field_norm,
    from_similarity,
    laplacian_matrix,
    l2_norm,
    lp_norm,
    radial_drift_matrix,
    solve_poisson_mode,
    to_similarity,
    velocity_of,
    viscosity_rescale,
)
from .heat import VortexSampler, evolve_modified_background
from .layer import (
    LayerMap,
    evolve_perturbed_ns,
    layer_grid,
    layer_times,
    pulled_back_mode,
    solve_controllability,
)
from .similarity import (
    SimilarityContext,
    evolve_ss_navier_stokes,
    similarity_grid,
    tau_max,
)
from .spectral import (
    SpectrumResult,
    critical_exponent,
    find_unstable_eigenvalue,
    fit_slope,
    similarity_operator,
    spectral_project,
)
from .stepper import advect
from .vortex import VortexProfile, build_vortex, similarity_force, smoothstep

log = logging.getLogger(__name__)

WORKERS_ENV = "VORTSEL_WORKERS"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    alpha: float = 0.5
    family: str = "two_level"
    amplitude: float = 50.0
    n: int = 512
    r_max: float = 8.0
    core: float = 0.05
    m0_min: int = 2
    m0_max: int = 6
    tau0: float = 3.0
    layer: bool = True
    layer_n: int = 512
    layer_rel: float = 1e-2
    control_delta: float = 1e-2
    control_iters: int = 200
    nu_max: float = 1e-6
    nu_min: float = 1e-9
    nu_per_decade: int = 4
    c0: float = 0.25
    eps_offset: float = 0.0
    sub_offset: float = 0.2
    c1: float = 0.0
    n_modes: int = 9
    h: float = 2e-3
    threshold: float = 0.1
    q: float = 3.0
    background: str = "heat"
    heat_dtau: float = 0.01
    phase_k_min: int = 0
    phase_k_max: int = 0
    phase_k_step: int = 1
    seed: int = 0
    out_dir: str = "runs"
    tau_end: float = 5.0
    phi_amp: float = 1e-3
    golovkin_nus: str = "1e-12,1e-10,1e-8"
    golovkin_ps: str = "2,3"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not (0 < self.nu_min < self.nu_max):
            raise ConfigError("need 0 < nu_min < nu_max")
        if self.eps_offset < 0 or self.sub_offset < 0:
            raise ConfigError("eps law exponent offsets must be >= 0")
        if self.background not in ("heat", "vortex"):
            raise ConfigError("background is 'heat' or 'vortex'")
        if self.n_modes < 2:
            raise ConfigError("need at least two angular modes")

    @property
    def gamma(self) -> float:
        return 2.0 / self.alpha - 1.0

    @property
    def nu_grid(self) -> np.ndarray:
        """Strictly decreasing, nu_per_decade points per decade, both ends included."""
        lo, hi = math.log10(self.nu_min), math.log10(self.nu_max)
        count = max(2, int(round((hi - lo) * self.nu_per_decade)) + 1)
        return np.logspace(hi, lo, count)

    def tau_obs(self, nu: float) -> float:
        return -math.log(nu) / self.gamma

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        return cls().with_overrides(values)

    def with_overrides(self, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(self)}
        base = asdict(self)
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            base[name] = _coerce(known[name].type, raw)
        return ExperimentConfig(**base)

    def items(self) -> list[tuple[str, str]]:
        return [(k, vio._fmt(v)) for k, v in asdict(self).items()]


def _coerce(kind, raw):
    if not isinstance(raw, str):
        return raw
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """INI file (section [experiment]) plus key=value overrides."""
    values: dict = {}
    if path is not None:
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ConfigError(f"cannot read config {path}")
        if cp.has_section("experiment"):
            values.update(cp["experiment"])
    values.update(overrides or {})
    return ExperimentConfig.from_mapping(values)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer") from exc


# ---------------------------------------------------------------------------
# shared, read-only state


@dataclass
class Workspace:
    config: ExperimentConfig
    profile: VortexProfile
    spec: SpectrumResult
    sampler: object
    kappa_c: float
    v0: PolarField | None = None
    control: dict = field(default_factory=dict)
    modes: list = field(default_factory=list)

    @property
    def m0(self) -> int:
        return abs(self.spec.m)


def pick_mode(profile: VortexProfile, grid, m_range) -> tuple[SpectrumResult, list]:
    """Most unstable similarity eigenpair over m in ``m_range``."""
    best, table = None, []
    for m in m_range:
        res = find_unstable_eigenvalue(similarity_operator(profile, m, grid), threshold=-np.inf)
        table.append((int(m), res.lam, res.residual))
        if best is None or res.a > best.a:
            best = res
    if best is None or not best.a > 0:
        raise NumericalFailure("no unstable mode in the requested range")
    return best, table


def prepare(cfg: ExperimentConfig, spec: SpectrumResult | None = None, sampler=None) -> Workspace:
    profile = build_vortex({"family": cfg.family, "amplitude": cfg.amplitude}, cfg.alpha)
    grid = similarity_grid(cfg.n, cfg.r_max, cfg.core)
    table = []
    if spec is None:
        spec, table = pick_mode(profile, grid, range(cfg.m0_min, cfg.m0_max + 1))
    if sampler is None:
        if cfg.background == "heat":
            t_end = math.exp(cfg.tau_obs(cfg.nu_min) + 0.25)
            sampler = evolve_modified_background(similarity_force(profile), t_end=t_end, dtau=cfg.heat_dtau,
                                                 stride=5).sampler()
        else:
            sampler = VortexSampler(profile)
    kappa = critical_exponent(spec, ScaleParams(cfg.alpha))
    ws = Workspace(cfg, profile, spec, sampler, kappa, modes=table)
    if cfg.layer:
        build_layer_datum(ws)
    return ws


def build_layer_datum(ws: Workspace) -> None:
    """v0 with S v0 ~ pulled-back eigenmode at T = e^{tau0}, at unit viscosity."""
    cfg = ws.config
    if cfg.background != "heat":
        raise ConfigError("the initial layer needs the heat background (the vortex is singular at t = 0)")
    horizon = math.exp(cfg.tau0)
    g = layer_grid(horizon, cfg.alpha, support=ws.profile.support, n=cfg.layer_n)
    times = layer_times(horizon, rel=cfg.layer_rel)
    lm = LayerMap(ws.sampler, g, ws.m0, 2, cfg.alpha, horizon, times=times, modes=[1])
    target = pulled_back_mode(ws.spec, horizon, g, 2)
    res = solve_controllability(lm, target, delta=cfg.control_delta, max_iters=cfg.control_iters)
    data = np.zeros((cfg.n_modes, g.n), complex)
    data[1] = res.v0.data[1]
    ws.v0 = PolarField(g, ws.m0, data, "vorticity", "physical", 0.0, cfg.alpha)
    ws.control = {"residual": res.residual, "converged": res.converged, "iterations": len(res.history) - 1,
                  "history": res.history, "times": times}


# ---------------------------------------------------------------------------
# one viscosity


THRESHOLD_COLUMNS = ["nu", "law", "eps", "tau_obs", "separation", "separation_phys", "sep_w1q", "growth",
                     "tau_max", "tau_star", "phase_re", "phase_im", "status", "checkpoint"]


def eps_law(ws: Workspace, nu: float, law: str) -> float:
    cfg = ws.config
    if law == "critical":
        return cfg.c0 * nu ** (ws.kappa_c + cfg.eps_offset)
    if law == "subcritical":
        return nu ** (ws.kappa_c + cfg.sub_offset)
    raise ConfigError(f"unknown eps law {law!r}")


def initial_perturbation(ws: Workspace, eps: float, nu: float, ctx: SimilarityContext) -> PolarField:
    """Phi at tau0: the layer output in similarity variables, or eps e^{lambda tau0} eta directly."""
    cfg = ws.config
    tau0 = cfg.tau0
    if not cfg.layer:
        return ctx.mode_field(eps * np.exp(ws.spec.lam * tau0), tau0)
    psi0 = None
    if cfg.c1 > 0:
        rng = np.random.default_rng([cfg.seed, int(round(-1e3 * math.log10(nu)))])
        d = np.zeros_like(ws.v0.data)
        r = ws.v0.grid.r
        d[1] = (rng.normal() + 1j * rng.normal()) * r ** ws.m0 * np.exp(-r * r)
        d[:, -1] = 0
        f = ws.v0.with_data(d)
        psi0 = f.with_data(d * (cfg.c1 * nu ** ws.kappa_c / l2_norm(velocity_of(f))))
    horizon = math.exp(tau0)
    run = evolve_perturbed_ns(ws.sampler, eps, ws.v0, psi0, horizon, times=ws.control["times"],
                              keep_every=10 ** 9)
    phi = to_similarity(run.final, onto=ctx.grid)
    data = phi.data.copy()
    data[:, -1] = 0.0
    return ctx.field(data, tau0)


def _radial_offset(ws: Workspace, ctx: SimilarityContext, tau: float) -> np.ndarray:
    r = ctx.grid.r
    d = ws.sampler.similarity(r, tau)["W"] - ws.profile.vorticity(r)
    d[-1] = 0.0
    return d


def _crossing(taus: np.ndarray, vals: np.ndarray, level: float) -> float:
    above = np.nonzero(vals >= level)[0]
    if not above.size or above[0] == 0:
        return float("nan")
    i = above[0]
    y0, y1 = math.log(vals[i - 1]), math.log(vals[i])
    return float(taus[i - 1] + (math.log(level) - y0) * (taus[i] - taus[i - 1]) / (y1 - y0))


def run_single(ws: Workspace, nu: float, law: str, tag: str = "", ckpt_dir: str | Path | None = None) -> list:
    cfg = ws.config
    eps = eps_law(ws, nu, law)
    tau_obs = cfg.tau_obs(nu)
    row = {"nu": nu, "law": law, "eps": eps, "tau_obs": tau_obs, "status": "ok", "checkpoint": ""}
    try:
        if tau_obs <= cfg.tau0 + 1:
            raise ConfigError(f"observation time {tau_obs:.3g} too close to tau0")
        ctx = SimilarityContext(ws.profile, similarity_grid(cfg.n, cfg.r_max, cfg.core), ws.spec, ws.sampler,
                                cfg.n_modes)
        phi = initial_perturbation(ws, eps, nu, ctx)
        run = evolve_ss_navier_stokes(ctx, phi, cfg.tau0, tau_obs, h=cfg.h, keep_every=10)
        pert = np.array([l2_norm(velocity_of(run.field(i))) for i in range(len(run.taus))])
        sep = []
        for i, tau in enumerate(run.taus):
            d = run.states[i].copy()
            d[0] += _radial_offset(ws, ctx, tau)
            sep.append(l2_norm(velocity_of(ctx.field(d, tau))))
        sep = np.array(sep)
        final = run.states[-1].copy()
        final[0] += _radial_offset(ws, ctx, run.taus[-1])
        last = ctx.field(final, run.taus[-1])
        params = ScaleParams(cfg.alpha, nu)
        phys = viscosity_rescale(from_similarity(last), params, "from-unit-viscosity")
        u_phys = velocity_of(phys)
        proj = spectral_project(phi, ws.spec)
        a = ws.spec.a
        eb = math.exp(-a * cfg.tau0) * field_norm(proj.projected, "X", ctx.params)
        em = math.exp(-a * cfg.tau0) * field_norm(proj.remainder, "X", ctx.params)
        t_star = _crossing(run.taus, sep, cfg.threshold)
        end = t_star if np.isfinite(t_star) else run.taus[-1]
        win = (run.taus >= cfg.tau0 + 1) & (run.taus <= end) & (pert > 0)
        growth = fit_slope(run.taus[win], np.log(pert[win])) if win.sum() > 2 else float("nan")
        phase = np.exp(-1j * ws.spec.b * tau_obs)
        row.update(separation=float(sep[-1]), separation_phys=l2_norm(u_phys),
                   sep_w1q=lp_norm(u_phys, cfg.q) + lp_norm(phys, cfg.q), growth=growth,
                   tau_max=tau_max(a, 2.0 * (eb + em)), tau_star=t_star,
                   phase_re=float(phase.real), phase_im=float(phase.imag))
        if ckpt_dir is not None:
            name = f"{law}_{tag or f'{nu:.6e}'}.vshk"
            vio.save_field(last, Path(ckpt_dir) / name)
            row["checkpoint"] = name
    except (NumericalFailure, ConfigError, ValueError, FloatingPointError) as exc:
        log.warning("nu=%.3e %s failed: %s", nu, law, exc)
        row["status"] = f"failed: {exc}"
    nan = float("nan")
    return [row.get(c, nan) for c in THRESHOLD_COLUMNS]


# ---------------------------------------------------------------------------
# phase subsequence and the scan


def select_phase_subsequence(b: float, gamma: float, k_range, nu_grid=None) -> np.ndarray:
    """nu_k = exp(-2 pi k gamma / |b|), so that T_nu^{ib} = 1; the input grid when b = 0."""
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    if b == 0:
        return np.asarray(nu_grid if nu_grid is not None else [], float)
    ks = np.asarray(list(k_range), float)
    return np.exp(-2.0 * np.pi * ks * gamma / abs(b))


def phase_k_range(b: float, gamma: float, nu_min: float, nu_max: float) -> range:
    step = 2.0 * np.pi * gamma / abs(b)
    return range(int(math.ceil(-math.log(nu_max) / step)), int(math.floor(-math.log(nu_min) / step)) + 1)


@dataclass
class Report:
    name: str
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)


@dataclass
class ThresholdReport(Report):
    @property
    def subcritical(self) -> list[list]:
        return [r for r in self.rows if r[1] == "subcritical"]

    @property
    def critical(self) -> list[list]:
        return [r for r in self.rows if r[1] == "critical"]


_WS: Workspace | None = None


def _job(args):
    nu, law, tag, ckpt = args
    return run_single(_WS, nu, law, tag, ckpt)


def _set_ws(ws):
    global _WS
    _WS = ws


def run_threshold_scan(cfg: ExperimentConfig, ws: Workspace | None = None, laws=("subcritical", "critical"),
                       ckpt_dir: str | Path | None = None, workers: int | None = None) -> ThresholdReport:
    ws = ws or prepare(cfg)
    jobs = []
    if "subcritical" in laws:
        jobs += [(float(nu), "subcritical", f"{i:03d}", ckpt_dir) for i, nu in enumerate(cfg.nu_grid)]
    if "critical" in laws:
        if cfg.phase_k_max > 0:
            ks = range(cfg.phase_k_min, cfg.phase_k_max + 1, cfg.phase_k_step)
        else:
            ks = phase_k_range(ws.spec.b, cfg.gamma, cfg.nu_min, cfg.nu_max)[::cfg.phase_k_step]
        nus = select_phase_subsequence(ws.spec.b, cfg.gamma, ks, cfg.nu_grid)
        jobs += [(float(nu), "critical", f"k{k:03d}", ckpt_dir) for k, nu in zip(ks, nus)]
    workers = workers or worker_count()
    _set_ws(ws)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork"), initializer=_set_ws,
                                 initargs=(ws,)) as pool:
            rows = list(pool.map(_job, jobs))
    else:
        rows = [_job(j) for j in jobs]
    rep = ThresholdReport("threshold", list(THRESHOLD_COLUMNS), rows)
    rep.summary = scan_summary(rep, ws)
    rep.series = scan_series(rep)
    return rep


def scan_summary(rep: ThresholdReport, ws: Workspace) -> dict:
    out = {"a": ws.spec.a, "b": ws.spec.b, "m0": ws.m0, "kappa_c": ws.kappa_c}
    sub = [r for r in rep.subcritical if r[12] == "ok"]
    sub.sort(key=lambda r: -r[0])
    seps = [r[4] for r in sub]
    out["subcritical_monotone"] = bool(len(seps) >= 2 and all(b < a for a, b in zip(seps, seps[1:])))
    crit = [r[4] for r in rep.critical if r[12] == "ok"]
    if crit:
        mid = 0.5 * (max(crit) + min(crit))
        out["critical_plateau"] = mid
        out["critical_spread"] = (max(crit) - min(crit)) / (2 * mid) if mid else float("nan")
    pts = [(math.log(r[2]), r[9]) for r in rep.rows if r[12] == "ok" and np.isfinite(r[9])]
    if len(pts) >= 3:
        x, y = np.array(pts).T
        slope = fit_slope(x, y)
        out["tstar_slope"] = slope
        out["tstar_expected"] = -1.0 / ws.spec.a
        out["tstar_rel_err"] = abs(slope * ws.spec.a + 1.0)
    if ws.control:
        out["control_residual"] = ws.control["residual"]
        out["control_iterations"] = ws.control["iterations"]
    return out


def scan_series(rep: ThresholdReport) -> dict:
    s = {}
    for law in ("subcritical", "critical"):
        rows = [r for r in rep.rows if r[1] == law and r[12] == "ok"]
        if rows:
            s[f"separation_{law}"] = ([r[0] for r in rows], [r[4] for r in rows])
    pts = [(math.log(r[2]), r[9]) for r in rep.rows if r[12] == "ok" and np.isfinite(r[9])]
    if pts:
        s["tstar"] = ([p[0] for p in pts], [p[1] for p in pts])
    return s


# ---------------------------------------------------------------------------
# Golovkin forces
#
# Everything is in similarity variables at tau = log t, where a force curl
# g(x, t) is t^{-2} G(x / t^{1/alpha}, tau).  With u~^nu = phi(tau - log T_nu) u_bar:
#   G~   = phi' W + phi G_bar - nu e^{-gamma tau} phi Delta W
#   G_pm = G~ + U_lin.grad W_lin +- [(phi - 1)(U_bar.grad W_lin + U_lin.grad W) - nu e^{-gamma tau} Delta W_lin]
#   G_E  = G_bar + U_lin.grad W_lin


def cutoff_phi(s, k: int = 0):
    """0 on (-inf, -1], 1 on [1, inf), smooth and monotone."""
    return smoothstep((np.asarray(s, float) + 1.0) / 2.0, k) / 2.0 ** k


class GolovkinSetup:
    """Fields of the construction on the eigenfunction's similarity grid.

    Background terms use the exact profile samples; the linear solution
    uses the same drift and Poisson stencils as the spectral operator, so
    the Euler residual measures the construction, not stencil mismatch.
    """

    def __init__(self, profile: VortexProfile, spec: SpectrumResult, growth: float | None = None,
                 amplitude: float = 1.0, n_modes: int = 3):
        self.profile, self.spec = profile, spec
        self.grid = spec.grid
        self.m0 = abs(spec.m)
        self.k1 = n_modes
        self.alpha = profile.alpha
        self.gamma = 2.0 / self.alpha - 1.0
        self.lam = spec.lam if growth is None else complex(growth, spec.b)
        self.amplitude = float(amplitude)
        self.n_theta = max(8, 3 * n_modes + 1)
        r = self.grid.r
        self.bar = self._radial(profile.vorticity(r))
        self.drift_bar = self._radial(r * profile.vorticity(r, 1) / self.alpha)
        self.g_bar = self._radial(similarity_force(profile).g(r))
        self.lap_bar = self._lap(self.bar)
        self.spin = profile.omega(r)
        self.dw = profile.vorticity(r, 1)

    def _radial(self, v):
        d = np.zeros((self.k1, self.grid.n), complex)
        d[0] = v
        d[:, -1] = 0.0
        return d

    def _lap(self, d):
        out = np.zeros_like(d)
        for k in range(self.k1):
            out[k] = laplacian_matrix(self.grid, k * self.m0) @ d[k]
        out[:, -1] = 0.0
        return out

    def _drift(self, d):
        out = np.zeros_like(d)
        for k in range(self.k1):
            out[k] = radial_drift_matrix(self.grid, k * self.m0) @ d[k] / self.alpha
        out[:, -1] = 0.0
        return out

    def cross(self, d):
        """U_bar.grad w + u(w).grad W_bar for vorticity modes d."""
        out = np.zeros_like(d)
        r = self.grid.r
        for k in range(1, self.k1):
            m = k * self.m0
            psi = solve_poisson_mode(d[k], m, self.grid)
            out[k] = 1j * m * self.spin * d[k] - 1j * m / r * psi * self.dw
        out[:, -1] = 0.0
        return out

    def quad(self, d):
        return advect(self.grid, self.m0, d, d, self.n_theta)

    def lin(self, tau: float) -> np.ndarray:
        d = np.zeros((self.k1, self.grid.n), complex)
        d[1] = self.amplitude * np.exp(self.lam * tau) * self.spec.eta
        return d

    def forces(self, tau: float, nu: float) -> dict:
        s = tau - math.log(nu) / self.gamma
        ph, dph = float(cutoff_phi(s)), float(cutoff_phi(s, 1))
        visc = nu * math.exp(-self.gamma * tau)
        lin = self.lin(tau)
        quad = self.quad(lin)
        g_tilde = dph * self.bar + ph * self.g_bar - visc * ph * self.lap_bar
        cross = (ph - 1.0) * self.cross(lin) - visc * self._lap(lin)
        return {"g_tilde": g_tilde, "g_plus": g_tilde + quad + cross, "g_minus": g_tilde + quad - cross,
                "g_E": self.g_bar + quad, "phi": ph, "dphi": dph}

    def field(self, d, tau: float = 0.0) -> PolarField:
        return PolarField(self.grid, self.m0, d, "vorticity", "similarity", tau, self.alpha)

    def _advection(self, scale_bar: float, lin: np.ndarray, sign: int) -> np.ndarray:
        # U.grad W for W = c W_bar + s W_lin; the radial self-term vanishes
        return scale_bar * sign * self.cross(lin) + self.quad(lin)

    def euler_residual(self, tau: float, sign: int, flipped_sign: bool = False) -> float:
        """||d_tau W - (W + (r/a) W' - U.grad W + G_E)|| / ||d_tau W_lin|| for W = W_bar +- W_lin."""
        lin = self.lin(tau)
        quad = self.quad(lin)
        g_e = self.g_bar - quad if flipped_sign else self.g_bar + quad
        rhs = (self.bar + self.drift_bar) + sign * (lin + self._drift(lin)) - self._advection(1.0, lin, sign) + g_e
        res = sign * self.lam * lin - rhs
        res[:, -1] = 0.0
        scale = l2_norm(self.field(self.lam * lin))
        return l2_norm(self.field(res)) / scale if scale else l2_norm(self.field(res))

    def ns_residual(self, tau: float, nu: float, sign: int) -> float:
        """Residual of W = phi W_bar +- W_lin in the nu-equation forced by G_pm, relative to d_tau W."""
        f = self.forces(tau, nu)
        lin = self.lin(tau)
        ph = f["phi"]
        dw = f["dphi"] * self.bar + sign * self.lam * lin
        visc = nu * math.exp(-self.gamma * tau)
        g = f["g_plus"] if sign > 0 else f["g_minus"]
        rhs = (ph * (self.bar + self.drift_bar) + sign * (lin + self._drift(lin))
               - self._advection(ph, lin, sign) + visc * (ph * self.lap_bar + sign * self._lap(lin)) + g)
        res = dw - rhs
        res[:, -1] = 0.0
        return l2_norm(self.field(res)) / max(l2_norm(self.field(dw)), 1e-300)

    def w1p(self, d, tau: float, p: float) -> float:
        """t-scaled ||f||_p + ||curl f||_p for the solenoidal force with curl t^{-2} G."""
        f = self.field(d, tau)
        c_g = (-2.0 + 2.0 / (self.alpha * p)) * tau
        c_u = (-2.0 + 1.0 / self.alpha + 2.0 / (self.alpha * p)) * tau
        return math.exp(c_g) * lp_norm(f, p) + math.exp(c_u) * lp_norm(velocity_of(f), p)


def _gl_panels(a: float, b: float, width: float, order: int = 8):
    n = max(1, int(math.ceil((b - a) / width)))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n + 1)
    nodes = np.concatenate([0.5 * (e1 - e0) * x + 0.5 * (e0 + e1) for e0, e1 in zip(edges[:-1], edges[1:])])
    wts = np.concatenate([0.5 * (e1 - e0) * w for e0, e1 in zip(edges[:-1], edges[1:])])
    return nodes, wts


def force_distance(setup: GolovkinSetup, nu: float, p: float, sign: int, width: float = 0.25,
                   tail_decay: float = 20.0) -> float:
    """||f^nu_pm - f^E||_{L^1_t W^{1,p}} over t in (0, 1), W^{1,p} by the solenoidal proxy."""
    if not p < 2.0 / setup.alpha:
        raise ConfigError("force convergence is claimed only for p < 2/alpha")
    kappa = -1.0 + 2.0 / (setup.alpha * p)
    log_t_nu = math.log(nu) / setup.gamma
    lo = log_t_nu - 1.0 - min(tail_decay / kappa, 40.0)
    key = "g_plus" if sign > 0 else "g_minus"
    total = 0.0
    for a, b in ((lo, log_t_nu - 1.0), (log_t_nu - 1.0, min(log_t_nu + 1.0, 0.0)), (log_t_nu + 1.0, 0.0)):
        if b <= a:
            continue
        nodes, wts = _gl_panels(a, b, width)
        for tau, w in zip(nodes, wts):
            f = setup.forces(float(tau), nu)
            total += w * math.exp(tau) * setup.w1p(f[key] - f["g_E"], float(tau), p)
    # below lo the difference is -G_bar up to e^{a tau} terms; integrate that part exactly
    gb = setup.field(setup.g_bar)
    k_u = kappa + 1.0 / setup.alpha
    total += lp_norm(gb, p) * math.exp(kappa * lo) / kappa + lp_norm(velocity_of(gb), p) * math.exp(k_u * lo) / k_u
    return float(total)


GOLOVKIN_COLUMNS = ["nu", "p", "sign", "distance"]


def golovkin_forces(profile: VortexProfile, spec: SpectrumResult, nus, ps=(2.0, 3.0), growth: float | None = None,
                    amplitude: float = 1.0, taus=(-1.0, 0.0)) -> Report:
    """Residual report for u^E_pm and u^nu_pm, and the force-convergence table with fitted exponents."""
    st = GolovkinSetup(profile, spec, growth, amplitude)
    summary = {"lambda_re": st.lam.real, "lambda_im": st.lam.imag}
    for sign, tag in ((1, "plus"), (-1, "minus")):
        summary[f"euler_residual_{tag}"] = max(st.euler_residual(t, sign) for t in taus)
        summary[f"euler_residual_flipped_sign_{tag}"] = max(st.euler_residual(t, sign, True) for t in taus)
        summary[f"ns_residual_{tag}"] = max(st.ns_residual(t, nu, sign) for t in taus for nu in nus)
    rows, series = [], {}
    for p in ps:
        for sign, tag in ((1, "plus"), (-1, "minus")):
            d = [force_distance(st, float(nu), float(p), sign) for nu in nus]
            rows += [[float(nu), float(p), tag, v] for nu, v in zip(nus, d)]
            summary[f"exponent_p{p:g}_{tag}"] = fit_slope(np.log(nus), np.log(d))
            series[f"distance_p{p:g}_{tag}"] = (list(map(float, nus)), d)
    return Report("golovkin", list(GOLOVKIN_COLUMNS), rows, summary, series)


# ---------------------------------------------------------------------------
# report emission

PLOT_COLUMNS = ["series", "x", "y"]


def emit_report(report: Report, fmt: str, out_dir: str | Path, figures: bool = False) -> list[Path]:
    """Write ``<name>.csv`` (+ ``<name>_summary.csv``) or ``<name>_plot.csv`` (+ PNGs)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    paths = []
    if fmt == "csv":
        paths.append(vio.write_csv(out / f"{report.name}.csv", report.columns, report.rows))
        if report.summary:
            paths.append(vio.write_csv(out / f"{report.name}_summary.csv", ["key", "value"],
                                       sorted(report.summary.items())))
    elif fmt == "plot-data":
        rows = [[name, x, y] for name in sorted(report.series) for x, y in zip(*report.series[name])]
        paths.append(vio.write_csv(out / f"{report.name}_plot.csv", PLOT_COLUMNS, rows))
        if figures:
            paths += render_figures(report, out)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    return paths


def read_plot_data(path: str | Path) -> dict[str, tuple[list, list]]:
    cols, rows = vio.read_csv(path)
    if cols != PLOT_COLUMNS:
        raise ValueError(f"{path} is not a plot-data file")
    out: dict[str, tuple[list, list]] = {}
    for name, x, y in rows:
        xs, ys = out.setdefault(str(name), ([], []))
        xs.append(float(x))
        ys.append(float(y))
    return out


def render_figures(report: Report, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for name in sorted(report.series):
        x, y = report.series[name]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(x, y, "o-")
        if min(x) > 0:
            ax.set_xscale("log")
        if min(y) > 0:
            ax.set_yscale("log")
        ax.set_title(name)
        fig.tight_layout()
        path = out_dir / f"{report.name}_{name}.png"
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        paths.append(path)
    return paths
