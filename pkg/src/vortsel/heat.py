"""The modified background: the radial forced heat flow with zero datum.

The physical problem is d_t w = Delta w + g, w(0) = 0, with g the curl of
the self-similar force.  It is solved in similarity variables for the
difference D = Omega~ - W, which obeys

    d_tau D = D + (r/alpha) d_r D + e^{-gamma tau} Delta D + e^{-gamma tau} Delta W

with D = -W at the start time t_1 (the heat solution is dropped there; its
size is O(t_1^{2/alpha - 1}) in L^2).  A Hankel-transform evaluation of the
Duhamel integral gives the same difference independently.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.special import j0, j1

from .grid import (
    RadialGrid,
    Stretch,
    deriv_matrix,
    laplacian_matrix,
    make_radial_grid,
    radial_drift_matrix,
    swirl_from_vorticity,
)
from .spectral import fit_slope
from .vortex import SimilarityForce, VortexProfile

log = logging.getLogger(__name__)


class HeatError(ValueError):
    """Invalid request to the background routines."""


def _lap_w(profile: VortexProfile, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, float)
    return profile.vorticity(r, 2) + profile.vorticity(r, 1) / r


def _grad_lap_w(profile: VortexProfile, r: np.ndarray) -> np.ndarray:
    """d_r Delta W = W''' + W''/r - W'/r^2."""
    r = np.asarray(r, float)
    return profile.vorticity(r, 3) + profile.vorticity(r, 2) / r - profile.vorticity(r, 1) / r ** 2


# ---------------------------------------------------------------------------
# trajectory


@dataclass(eq=False)
class BackgroundTrajectory:
    """D = Omega~ - W at stored similarity times, on one radial grid."""

    profile: VortexProfile
    grid: RadialGrid
    taus: np.ndarray
    diff: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def alpha(self) -> float:
        return self.profile.alpha

    @property
    def gamma(self) -> float:
        return 2.0 / self.alpha - 1.0

    @property
    def times(self) -> np.ndarray:
        return np.exp(self.taus)

    def vorticity(self, i: int) -> np.ndarray:
        """Omega~ at stored index i (similarity frame)."""
        return self.profile.vorticity(self.grid.r) + self.diff[i]

    def swirl_difference(self, i: int) -> np.ndarray:
        return swirl_from_vorticity(self.diff[i], self.grid)

    def sampler(self) -> "BackgroundSampler":
        return BackgroundSampler(self)


class BackgroundSampler:
    """Angular velocity, vorticity and W' of the background at any tau and radii.

    Values come from the analytic vortex plus the stored difference:
    monotone cubic in r at each level, four-point Lagrange in tau.
    """

    def __init__(self, traj: BackgroundTrajectory, cache_size: int = 64):
        self.traj = traj
        g = traj.grid
        self._d1 = deriv_matrix(g, 1, 1, "even")
        self._xs = np.concatenate([[0.0], g.r])
        self._cache: dict[int, PchipInterpolator] = {}
        self._cache_size = cache_size

    def _level(self, i: int) -> PchipInterpolator:
        hit = self._cache.get(i)
        if hit is None:
            g = self.traj.grid
            d = self.traj.diff[i]
            spin = swirl_from_vorticity(d, g) / g.r
            rows = np.array([np.concatenate([[d[0]], d]),
                             np.concatenate([[spin[0]], spin]),
                             np.concatenate([[0.0], self._d1 @ d])])
            hit = PchipInterpolator(self._xs, rows, axis=1)
            if len(self._cache) >= self._cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[i] = hit
        return hit

    def _difference(self, r: np.ndarray, tau: float) -> np.ndarray:
        taus = self.traj.taus
        inside = r <= self._xs[-1]
        if tau >= taus[-1]:
            idx, wts = [len(taus) - 1], [1.0]
        else:
            j = int(np.searchsorted(taus, tau, side="right")) - 1
            start = max(0, min(j - 1, len(taus) - 4))
            idx = list(range(start, min(len(taus), start + 4)))
            nodes = taus[idx]
            wts = [np.prod([(tau - nodes[q]) / (nodes[p] - nodes[q]) for q in range(len(idx)) if q != p])
                   for p in range(len(idx))]
        out = np.zeros((3, r.size))
        for i, w in zip(idx, wts):
            out[:, inside] += w * self._level(i)(r[inside])
        return out

    def similarity(self, r: np.ndarray, tau: float) -> dict[str, np.ndarray]:
        """Background in similarity variables on radii ``r`` at ``tau`` (zero before the start)."""
        r = np.asarray(r, float)
        p = self.traj.profile
        if tau < self.traj.taus[0]:
            zero = np.zeros_like(r)
            return {"Omega": zero, "W": zero, "dW": zero}
        d = self._difference(r, tau)
        return {"Omega": p.omega(r) + d[1], "W": p.vorticity(r) + d[0], "dW": p.vorticity(r, 1) + d[2]}

    def physical(self, r: np.ndarray, t: float) -> dict[str, np.ndarray]:
        """omega~(r, t) = t^{-1} Omega~(r / t^{1/alpha}, log t), likewise Omega and W'."""
        r = np.asarray(r, float)
        if not t > 0:
            return {k: np.zeros_like(r) for k in ("Omega", "W", "dW")}
        ell = t ** (1.0 / self.traj.alpha)
        s = self.similarity(r / ell, float(np.log(t)))
        return {"Omega": s["Omega"] / t, "W": s["W"] / t, "dW": s["dW"] / (t * ell)}


class VortexSampler:
    """The exact self-similar vortex with the BackgroundSampler interface (no heat correction)."""

    def __init__(self, profile: VortexProfile):
        self.profile = profile

    def similarity(self, r: np.ndarray, tau: float) -> dict[str, np.ndarray]:
        r = np.asarray(r, float)
        p = self.profile
        return {"Omega": p.omega(r), "W": p.vorticity(r), "dW": p.vorticity(r, 1)}

    def physical(self, r: np.ndarray, t: float) -> dict[str, np.ndarray]:
        r = np.asarray(r, float)
        if not t > 0:
            return {k: np.zeros_like(r) for k in ("Omega", "W", "dW")}
        ell = t ** (1.0 / self.profile.alpha)
        s = self.similarity(r / ell, float(np.log(t)))
        return {"Omega": s["Omega"] / t, "W": s["W"] / t, "dW": s["dW"] / (t * ell)}


def default_heat_grid(profile: VortexProfile, t_start: float, n: int | None = None,
                      core: float = 1e-5) -> RadialGrid:
    """Geometric grid wide enough for the heat scale sqrt(t_1) / t_1^{1/alpha}."""
    spread = t_start ** (0.5 - 1.0 / profile.alpha)
    support = profile.support if np.isfinite(profile.support) else 10.0
    r_max = max(10.0 * support, 10.0 * spread)
    if n is None:
        n = max(6000, int(500 * np.log10(r_max / core)))
    return make_radial_grid(r_max, n, Stretch("sinh", core))


def default_start(alpha: float) -> float:
    """Start time where the dropped heat solution is below 1e-12 relative."""
    return 10.0 ** (-12.0 / (2.0 / alpha - 1.0))


def evolve_modified_background(force: SimilarityForce, t_end: float = 1.0, dtau: float = 0.01,
                               t_start: float | None = None, grid: RadialGrid | None = None,
                               stride: int = 1) -> BackgroundTrajectory:
    """BDF2 in tau for D, from D = -W at t_start to t_end.

    Early on e^{-gamma tau} Delta is extremely stiff, so the scheme must be
    L-stable; Crank-Nicolson leaves the sharp start ringing.  One
    backward-Euler step starts the recursion.  Everything is implicit and
    the source is exact, so there is no stability limit; steps above 0.1
    are rejected for accuracy.
    """
    profile = force.profile
    alpha = profile.alpha
    gamma = 2.0 / alpha - 1.0
    if not t_end > 0:
        raise HeatError("t_end must be positive")
    if not (0 < dtau <= 0.1):
        raise HeatError(f"dtau={dtau} rejected; use a step in (0, 0.1], e.g. 0.01")
    if t_start is None:
        t_start = min(default_start(alpha), 0.1 * t_end)
    if not 0 < t_start < t_end:
        raise HeatError("need 0 < t_start < t_end")
    grid = grid or default_heat_grid(profile, t_start)
    n = grid.n
    r = grid.r
    lap = laplacian_matrix(grid, 0).tolil()
    lap[n - 1, :] = 0.0
    lap = lap.tocsr()
    drift = (sp.eye(n) + radial_drift_matrix(grid, 0) / alpha).tolil()
    drift[n - 1, :] = 0.0
    drift = drift.tocsr()
    src = _lap_w(profile, r)
    src[-1] = 0.0
    pin = sp.csr_matrix(([1.0], ([n - 1], [n - 1])), shape=(n, n))
    eye = sp.eye(n, format="csr")

    def solve(c0, tau, rhs):
        mat = (c0 * eye - h * (drift + np.exp(-gamma * tau) * lap)).tolil()
        mat[n - 1, :] = 0.0
        rhs = rhs + h * np.exp(-gamma * tau) * src
        rhs[-1] = 0.0
        return spla.spsolve((mat + pin).tocsc(), rhs)

    tau0, tau1 = float(np.log(t_start)), float(np.log(t_end))
    n_steps = max(1, int(np.ceil((tau1 - tau0) / dtau)))
    h = (tau1 - tau0) / n_steps
    d = -profile.vorticity(r)
    d[-1] = 0.0
    if not np.any(d):
        d = np.zeros(n)
    taus, store = [tau0], [d.copy()]
    prev = None
    for k in range(n_steps):
        tn = tau0 + (k + 1) * h
        if prev is None:
            new = solve(1.0, tn, d)
        else:
            new = solve(1.5, tn, 2.0 * d - 0.5 * prev)
        if not np.all(np.isfinite(new)):
            raise HeatError(f"non-finite background at tau={tn:.3f}")
        prev, d = d, new
        if (k + 1) % stride == 0 or k == n_steps - 1:
            taus.append(tn)
            store.append(d.copy())
    return BackgroundTrajectory(profile, grid, np.array(taus), np.array(store),
                                {"dtau": h, "t_start": t_start, "t_end": t_end})


# ---------------------------------------------------------------------------
# norms and rates


def zeta_exponent(alpha: float, p: float) -> float:
    """zeta(alpha, p) = -3/2 + 1/alpha - 2/(alpha p) + 1/p + alpha (5p - 2)/(6p + 2 alpha p - 4)."""
    if not (0 < alpha < 2) or not p >= 1:
        raise HeatError("need alpha in (0, 2) and p >= 1")
    den = 6 * p + 2 * alpha * p - 4
    if den <= 0:
        raise HeatError("non-positive denominator in zeta")
    return -1.5 + 1 / alpha - 2 / (alpha * p) + 1 / p + alpha * (5 * p - 2) / den


def optimal_beta(alpha: float, p: float) -> float:
    return alpha * (5 * p - 2) / (2 * (3 * p + alpha * p - 2))


def radial_lp(values: np.ndarray, grid: RadialGrid, p: float) -> float:
    """L^p norm over the plane of a radial function."""
    return float((2 * np.pi * grid.integrate(np.abs(values) ** p)) ** (1.0 / p))


def energy_and_enstrophy(traj: BackgroundTrajectory, i: int) -> tuple[float, float]:
    """(||U~||_2, ||Omega~||_2) in similarity variables at stored index i."""
    g = traj.grid
    w = traj.vorticity(i)
    v = swirl_from_vorticity(w, g)
    return radial_lp(v, g, 2), radial_lp(w, g, 2)


@dataclass
class NormLedger:
    taus: np.ndarray
    rows: dict[str, np.ndarray]
    slopes: dict[str, float]


def profile_difference_norms(traj: BackgroundTrajectory, ps=(2.0,), window: tuple[float, float] | None = None,
                             injected: np.ndarray | None = None) -> NormLedger:
    """||U~ - U||_2, ||grad D||_p and ||r d_r grad D||_p along the trajectory.

    ``window`` selects the tau range for the slope fits and must span at
    least 2.  ``injected`` replaces D (used to check the zero case).
    """
    taus = traj.taus
    lo, hi = window if window is not None else (max(taus[0], 1.0), taus[-1])
    if hi - lo < 2:
        raise HeatError("fit window must span at least 2 in tau")
    g = traj.grid
    d1 = deriv_matrix(g, 1, 1, "even")
    d2 = deriv_matrix(g, 2, 1, "even")
    sel = np.nonzero((taus >= lo - 1e-12) & (taus <= hi + 1e-12))[0]
    rows: dict[str, list] = {"velocity": []}
    for p in ps:
        rows[f"grad_p{p:g}"] = []
        rows[f"rgrad_p{p:g}"] = []
    for i in sel:
        d = traj.diff[i] if injected is None else injected
        rows["velocity"].append(radial_lp(swirl_from_vorticity(d, g), g, 2))
        dd = d1 @ d
        rdd = g.r * (d2 @ d)
        for p in ps:
            rows[f"grad_p{p:g}"].append(radial_lp(dd[:-1], _trim(g), p))
            rows[f"rgrad_p{p:g}"].append(radial_lp(rdd[:-1], _trim(g), p))
    out = {k: np.array(v) for k, v in rows.items()}
    slopes = {}
    for k, v in out.items():
        good = v > 0
        slopes[k] = fit_slope(taus[sel][good], np.log(v[good])) if good.sum() > 1 else float("nan")
    return NormLedger(taus[sel], out, slopes)


def _trim(g: RadialGrid) -> RadialGrid:
    return RadialGrid(g.r_max, g.n - 1, g.stretch, g.x[:-1], g.r[:-1], g.drdx[:-1], g.d2rdx[:-1], g.weights[:-1])


@dataclass
class PowerLaw:
    times: np.ndarray
    energy: np.ndarray
    critical: np.ndarray
    energy_exponent: float
    critical_exponent: float


def background_power_laws(traj: BackgroundTrajectory, t_window=(0.1, 1.0)) -> PowerLaw:
    """Fitted t-exponents of ||u~(t)||_2 and ||omega~(t)||_{L^{2/alpha}}."""
    a = traj.alpha
    gamma = traj.gamma
    ts = traj.times
    sel = np.nonzero((ts >= t_window[0] * (1 - 1e-9)) & (ts <= t_window[1] * (1 + 1e-9)))[0]
    if sel.size < 3:
        raise HeatError("trajectory does not cover the fit window")
    energy, crit = [], []
    for i in sel:
        u2, _ = energy_and_enstrophy(traj, i)
        energy.append(ts[i] ** gamma * u2)
        # the L^{2/alpha} norm of the vorticity is frame invariant
        crit.append(radial_lp(traj.vorticity(i), traj.grid, 2.0 / a))
    lt = np.log(ts[sel])
    energy, crit = np.array(energy), np.array(crit)
    return PowerLaw(ts[sel], energy, crit, fit_slope(lt, np.log(energy)), fit_slope(lt, np.log(crit)))


def energy_identity_residual(traj: BackgroundTrajectory, force: SimilarityForce, t_window=(0.1, 1.0)) -> float:
    """Accumulated mismatch in d/dt ||u||^2 = -2 ||omega||^2 + 2 <f, u>, relative to the energy change."""
    g = traj.grid
    a = traj.alpha
    gamma = traj.gamma
    ts = traj.times
    sel = np.nonzero((ts >= t_window[0]) & (ts <= t_window[1]))[0]
    e, rhs = [], []
    fth = force.f_theta(g.r)
    for i in sel:
        w = traj.vorticity(i)
        v = swirl_from_vorticity(w, g)
        t = ts[i]
        e.append(t ** (2 * gamma) * 2 * np.pi * g.integrate(v * v))
        ens = t ** (2.0 / a - 2.0) * 2 * np.pi * g.integrate(w * w)
        work = t ** (4.0 / a - 3.0) * 2 * np.pi * g.integrate(fth * v)
        rhs.append(-2 * ens + 2 * work)
    e, rhs, tt = np.array(e), np.array(rhs), ts[sel]
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (rhs[1:] + rhs[:-1]) * np.diff(tt))])
    change = e - e[0]
    return float(np.max(np.abs(change - integral)) / max(np.max(np.abs(change)), 1e-300))


# ---------------------------------------------------------------------------
# Hankel-transform route


def _panel_nodes(a: float, b: float, n_panels: int, order: int = 16, log: bool = False):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.geomspace(a, b, n_panels + 1) if log else np.linspace(a, b, n_panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w[None, :]
    return nodes.ravel(), weights.ravel()


class HankelSource:
    """Hankel transforms for the self-similar source Delta omega-bar(s).

    With H[f](k) = int f(r) J0(k r) r dr, the difference d = omega~ - omega-bar has

        H[d](k, t) = -alpha int u W^(u) exp(-k^2 (t - (u/k)^alpha)) du

    over u = k s^{1/alpha}; freezing the kernel replaces t - s by t.
    """

    def __init__(self, profile: VortexProfile, u_max: float = 1200.0, n_u: int = 120001):
        self.profile = profile
        self.alpha = profile.alpha
        support = profile.support if np.isfinite(profile.support) else 12.0
        rho, wr = _panel_nodes(0.0, support, max(64, int(support * 80)), 16)
        wv = profile.vorticity(rho)
        u = np.linspace(0.0, u_max, n_u)
        what = np.empty_like(u)
        for s in range(0, u.size, 2000):
            blk = u[s:s + 2000]
            what[s:s + 2000] = (j0(np.outer(blk, rho)) * (wv * rho * wr)).sum(axis=1)
        self.u_max = u_max
        self._spline = CubicSpline(u, u * what)

    def u_w_hat(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, float)
        out = np.zeros_like(u)
        inside = u <= self.u_max
        out[inside] = self._spline(u[inside])
        return out

    def duhamel_hat(self, k: np.ndarray, t: float, s_lo: float, s_hi: float, frozen: bool = False,
                    panels: int = 48) -> np.ndarray:
        """H of int_{s_lo}^{s_hi} e^{(t - s) Delta} Delta omega-bar(s) ds (kernel e^{t Delta} if frozen)."""
        a = self.alpha
        k = np.asarray(k, float)
        out = np.zeros_like(k)
        if s_hi <= s_lo:
            return out
        for i, kk in enumerate(k):
            if kk <= 0:
                continue
            u_lo = kk * s_lo ** (1.0 / a)
            u_hi = min(kk * s_hi ** (1.0 / a), self.u_max)
            if u_hi <= u_lo:
                continue
            lo = max(u_lo, 1e-12 * u_hi)
            nodes, w = _panel_nodes(lo, u_hi, panels, 16, log=lo > 0)
            s = (nodes / kk) ** a
            damp = np.exp(-kk * kk * t) if frozen else np.exp(-kk * kk * (t - s))
            out[i] = -a * np.sum(w * self.u_w_hat(nodes) * damp)
        return out

    @staticmethod
    def k_nodes(t: float, alpha: float, r_out: float, k_max: float | None = None, u_max: float = 1200.0):
        """Gauss panels in k; beyond k_max both the heat factor and W^(k l) are negligible."""
        ell = t ** (1.0 / alpha)
        if k_max is None:
            k_max = max(np.sqrt(200.0 / t), u_max / ell)
        width = min(np.pi / max(r_out, 1e-9), k_max / 64)
        return _panel_nodes(0.0, k_max, int(np.ceil(k_max / width)), 8)

    @staticmethod
    def inverse(hat: np.ndarray, k: np.ndarray, wk: np.ndarray, r: np.ndarray, gradient: bool = False) -> np.ndarray:
        r = np.asarray(r, float)
        out = np.empty_like(r)
        for s in range(0, r.size, 256):
            rr = r[s:s + 256]
            if gradient:
                out[s:s + 256] = -(j1(np.outer(rr, k)) * (hat * k * k * wk)).sum(axis=1)
            else:
                out[s:s + 256] = (j0(np.outer(rr, k)) * (hat * k * wk)).sum(axis=1)
        return out


def hankel_difference(source: HankelSource, t: float, r: np.ndarray, gradient: bool = True) -> np.ndarray:
    """d_r (omega~ - omega-bar)(r, t) (or the value) by the Hankel route."""
    k, wk = HankelSource.k_nodes(t, source.alpha, float(np.max(r)), u_max=source.u_max)
    hat = source.duhamel_hat(k, t, 0.0, t)
    return HankelSource.inverse(hat, k, wk, r, gradient)


@dataclass
class DuhamelSplit:
    t: float
    beta: float
    r: np.ndarray
    terms: np.ndarray
    total: np.ndarray
    norms: np.ndarray
    total_norm: float


def duhamel_split_diagnostic(profile: VortexProfile, t: float, beta: float | None = None, p: float = 2.0,
                             r: np.ndarray | None = None, source: HankelSource | None = None) -> DuhamelSplit:
    """The four pieces of grad d = int_0^t e^{(t-s)Delta} grad Delta omega-bar ds.

    I:   int_0^1 (e^{(t-s)Delta} - e^{t Delta}) ...
    II:  int_{t^beta}^t e^{(t-s)Delta} ...
    III: int_1^{t^beta} (e^{(t-s)Delta} - e^{t Delta}) ...
    IV:  e^{t Delta} int_0^{t^beta} ...
    """
    if t < 4:
        raise HeatError("the split needs t >= 4")
    a = profile.alpha
    beta = optimal_beta(a, p) if beta is None else float(beta)
    tb = t ** beta
    if tb > t / 2:
        raise HeatError("t^beta must not exceed t/2")
    source = source or HankelSource(profile)
    ell = t ** (1.0 / a)
    if r is None:
        r = np.geomspace(1e-3, 1.0, 400) * (3 * ell + 6 * np.sqrt(t))
    k, wk = HankelSource.k_nodes(t, a, float(np.max(r)), u_max=source.u_max)
    dh = source.duhamel_hat
    hats = [
        dh(k, t, 0.0, 1.0) - dh(k, t, 0.0, 1.0, frozen=True),
        dh(k, t, tb, t),
        dh(k, t, 1.0, tb) - dh(k, t, 1.0, tb, frozen=True),
        dh(k, t, 0.0, tb, frozen=True),
    ]
    terms = np.array([HankelSource.inverse(h, k, wk, r, gradient=True) for h in hats])
    total = terms.sum(axis=0)
    g = _radial_weights(r)
    norms = np.array([(2 * np.pi * np.sum(g * np.abs(x) ** p)) ** (1 / p) for x in terms])
    total_norm = float((2 * np.pi * np.sum(g * np.abs(total) ** p)) ** (1 / p))
    return DuhamelSplit(t, beta, r, terms, total, norms, total_norm)


def _radial_weights(r: np.ndarray) -> np.ndarray:
    """Trapezoid weights for int f r dr on arbitrary increasing nodes starting near 0."""
    r = np.asarray(r, float)
    edges = np.concatenate([[0.0], 0.5 * (r[1:] + r[:-1]), [r[-1]]])
    return np.diff(edges) * r


def cancellation_integral(profile: VortexProfile, x: np.ndarray, s_max: float | None = None,
                          order: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """int_0^{s_max} s^2 d_r Delta W(s |x|) ds and the matching int of |integrand|.

    With s_max = None the integral runs over the whole support; the exact
    value is then 0 since y^2 d_r Delta W integrates to -2 [y W'] = 0.
    """
    x = np.abs(np.asarray(x, float))
    if np.any(x <= 0):
        raise HeatError("sample points must be nonzero")
    support = profile.support if np.isfinite(profile.support) else 12.0
    if support == 0:
        return np.zeros_like(x), np.zeros_like(x)
    shape = profile.shape
    breaks = getattr(shape, "breaks", None)
    if breaks is None:
        breaks = np.linspace(0.0, support, 65)
    breaks = np.asarray(breaks, float)
    breaks = breaks[breaks <= support + 1e-12]
    vals, scale = np.zeros_like(x), np.zeros_like(x)
    for i, xi in enumerate(x):
        y_max = support if s_max is None else min(support, s_max * xi)
        edges = np.unique(np.clip(np.concatenate([breaks, [y_max]]), 0.0, y_max))
        tot = mag = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            nodes, w = _panel_nodes(lo, hi, 8, order)
            f = nodes ** 2 * _grad_lap_w(profile, nodes)
            tot += np.sum(w * f)
            mag += np.sum(w * np.abs(f))
        vals[i] = tot / xi ** 3
        scale[i] = mag / xi ** 3
    return vals, scale


def truncated_cancellation_norm(profile: VortexProfile, cutoff: float, p: float = 2.0, n_x: int = 400) -> float:
    """L^p norm over x of int_0^cutoff s^2 d_r Delta W(s x) ds."""
    support = profile.support if np.isfinite(profile.support) else 12.0
    x = np.geomspace(1e-4, 1.0, n_x) * support / cutoff
    v, _ = cancellation_integral(profile, x, s_max=cutoff)
    return float((2 * np.pi * np.sum(_radial_weights(x) * np.abs(v) ** p)) ** (1 / p))


LEDGER_COLUMNS = ["tau", "norm_kind", "p", "value", "fitted_slope"]


def ledger_rows(led: NormLedger) -> list[list]:
    rows = []
    for key, vals in led.rows.items():
        p = float(key.split("_p")[1]) if "_p" in key else 2.0
        kind = key.split("_p")[0]
        for tau, v in zip(led.taus, vals):
            rows.append([float(tau), kind, p, float(v), led.slopes[key]])
    return rows
