"""Linearized operators around a vortex, their unstable eigenpairs and projections.

Mode operators act on the radial coefficient of e^{i m theta} at the interior
nodes r_1..r_{N-1}; the value at R_max is pinned to zero.  In vorticity form

    L w = -i m Omega w + (i m W'/r) Delta_m^{-1} w + (kappa/alpha)(2 + r d_r) w + shift w

and the self-similar operator is kappa = 1, shift = -gamma.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    GridError,
    NumericalFailure,
    PolarField,
    RadialGrid,
    ScaleParams,
    deriv_matrix,
    laplacian_matrix,
    mode_parity,
    radial_drift_matrix,
    solve_poisson_mode,
)
from .vortex import VortexProfile

log = logging.getLogger(__name__)

DENSE_LIMIT = 512
REAL_TOL = 1e-8


class SpectralError(ValueError):
    """Invalid request to the spectral routines."""


@dataclass(frozen=True, eq=False)
class ModeOperator:
    profile: VortexProfile
    grid: RadialGrid
    m: int
    kappa: float = 0.0
    shift: float = 0.0
    formulation: str = "vorticity"

    @property
    def alpha(self) -> float:
        return self.profile.alpha

    @property
    def size(self) -> int:
        return self.grid.n - 1

    @cached_property
    def _samples(self) -> dict:
        return self.profile.on(self.grid)

    @cached_property
    def _parts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(M, K, D): advection, compact part, drift, as dense matrices."""
        if self.formulation == "vorticity":
            return _vorticity_parts(self)
        if self.formulation == "velocity":
            return _velocity_parts(self)
        raise SpectralError(f"unknown formulation {self.formulation!r}")

    @property
    def advection(self) -> np.ndarray:
        return self._parts[0]

    @property
    def compact(self) -> np.ndarray:
        return self._parts[1]

    @property
    def drift(self) -> np.ndarray:
        return self._parts[2]

    @cached_property
    def matrix(self) -> np.ndarray:
        mat = self.advection + self.compact + self.drift
        return mat + self.shift * np.eye(mat.shape[0])

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    @cached_property
    def solenoidal_matrix(self) -> np.ndarray:
        """Velocity form restricted to divergence-free fields: curl o L o Biot-Savart.

        The full velocity matrix also acts on gradients, where it has
        spurious eigenvalues; this reduction is what the spectrum means.
        """
        if self.formulation != "velocity":
            raise SpectralError("only the velocity form needs the reduction")
        n, m, g = self.size, self.m, self.grid
        r = g.r[:n]
        lap = laplacian_matrix(g, m).toarray()[:n, :n]
        psi = np.linalg.inv(lap)
        dpsi = deriv_matrix(g, 1, *mode_parity(m)).toarray()[:n, :n]
        to_u = np.vstack([(-1j * m / r)[:, None] * psi, dpsi @ psi])
        d_flux = deriv_matrix(g, 1, mode_parity(m)[0], "zero").toarray()[:n, :n]
        curl = np.hstack([np.diag(-1j * m / r), d_flux * r[None, :] / r[:, None]])
        return curl @ self.matrix @ to_u

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights of the inner product on the unknowns."""
        q = 2 * np.pi * self.grid.weights[: self.size]
        return np.concatenate([q, q]) if self.formulation == "velocity" else q

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(np.sum(self.weights * a * np.conj(b)))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(a) ** 2)))

    @cached_property
    def adjoint_matrix(self) -> np.ndarray:
        """Adjoint in the weighted inner product, Q^{-1} L^H Q."""
        q = self.weights
        return (self.matrix.conj().T * q[None, :]) / q[:, None]

    @cached_property
    def _augmented(self) -> tuple[sp.csc_matrix, sp.csc_matrix]:
        """Sparse pencil (A, B) with A x = lambda B x, x = (w, psi)."""
        if self.formulation != "vorticity":
            raise SpectralError("sparse pencil exists only in vorticity form")
        n, s = self.size, self._samples
        r = self.grid.r[:n]
        drift = (self.kappa / self.alpha) * (2 * sp.eye(n) + radial_drift_matrix(self.grid, self.m)[:n, :n])
        top_left = sp.diags(-1j * self.m * s["Omega"][:n] + self.shift) + drift
        top_right = sp.diags(1j * self.m * s["dW"][:n] / r)
        lap = laplacian_matrix(self.grid, self.m)[:n, :n]
        a = sp.bmat([[top_left, top_right], [-sp.eye(n), lap]]).tocsc()
        b = sp.bmat([[sp.eye(n), None], [None, sp.csr_matrix((n, n))]]).tocsc()
        return a, b

    def resolvent_solver(self, lam: complex):
        """Callable f -> (lam - L)^{-1} f."""
        n = self.size
        if self.formulation == "vorticity":
            a, b = self._augmented
            lu = spla.splu((lam * b - a).tocsc())

            def solve(f):
                rhs = np.concatenate([np.asarray(f, complex), np.zeros(n, complex)])
                return lu.solve(rhs)[:n]

            return solve
        lu_d = sla.lu_factor(lam * np.eye(self.matrix.shape[0]) - self.matrix)
        return lambda f: sla.lu_solve(lu_d, np.asarray(f, complex))


def _vorticity_parts(op: ModeOperator):
    n, s, m = op.size, op._samples, op.m
    r = op.grid.r[:n]
    if m == 0:
        compact = np.zeros((n, n), complex)
    else:
        lap = laplacian_matrix(op.grid, m).toarray()[:n, :n]
        compact = (1j * m * s["dW"][:n] / r)[:, None] * np.linalg.inv(lap)
    adv = np.diag(-1j * m * s["Omega"][:n])
    drift = (op.kappa / op.alpha) * (2 * np.eye(n) + radial_drift_matrix(op.grid, m).toarray()[:n, :n])
    return adv, compact, drift


def _velocity_blocks(grid: RadialGrid, m: int):
    """Dense divergence, pressure solve and gradient on interior nodes."""
    n = grid.n - 1
    r = grid.r[:n]
    p_par, p_org = mode_parity(m)
    d_scalar = deriv_matrix(grid, 1, p_par, p_org).toarray()[:n, :n]
    d_flux = deriv_matrix(grid, 1, p_par, "zero").toarray()[:n, :n]
    div = np.hstack([d_flux * r[None, :] / r[:, None], np.diag(1j * m / r)])
    lap = laplacian_matrix(grid, m).toarray()[:n, :n]
    solve_p = np.linalg.inv(lap)
    grad = np.vstack([d_scalar, np.diag(1j * m / r)])
    return div, solve_p, grad


def _velocity_parts(op: ModeOperator):
    n, s, m = op.size, op._samples, op.m
    om, dom, w = s["Omega"][:n], s["dOmega"][:n], s["W"][:n]
    r = op.grid.r[:n]
    z = np.zeros((n, n))
    adv = -np.block([[np.diag(1j * m * om), z], [np.diag(-r * dom), np.diag(1j * m * om)]])
    div, solve_p, grad = _velocity_blocks(op.grid, m)
    # N = u.grad(ubar) + ubar.grad(u) without pressure; Delta p = -div N
    big_n = np.block([[np.diag(1j * m * om), np.diag(-2 * om)], [np.diag(w), np.diag(1j * m * om)]])
    pressure = -solve_p @ div @ big_n
    b_part = np.block([[z, np.diag(-2 * om)], [np.diag(2 * (om + r * dom)), z]]) + grad @ pressure
    compact = -b_part
    d = radial_drift_matrix(op.grid, m + 1).toarray()[:n, :n]
    one = np.eye(n)
    drift = (op.kappa / op.alpha) * np.block([[one + d, z], [z, one + d]])
    return adv, compact, drift


def assemble_mode_operator(profile: VortexProfile, m: int, kappa: float, grid: RadialGrid,
                           formulation: str = "vorticity", shift: float = 0.0) -> ModeOperator:
    """Mode-m linearization with drift (kappa/alpha)(c + r d_r), c = 2 or 1."""
    if int(m) == 0:
        raise SpectralError("m must be nonzero")
    if kappa < 0:
        raise SpectralError("kappa must be nonnegative")
    op = ModeOperator(profile, grid, int(m), float(kappa), float(shift), formulation)
    mat = op.matrix
    if not np.all(np.isfinite(mat)):
        raise NumericalFailure(f"operator assembly produced non-finite entries (N={grid.n}, R={grid.r_max})")
    return op


def similarity_operator(profile: VortexProfile, m: int, grid: RadialGrid, formulation: str = "vorticity") -> ModeOperator:
    """L_ss = L^(1) - gamma, the linearization in similarity variables."""
    gamma = 2.0 / profile.alpha - 1.0
    return assemble_mode_operator(profile, m, 1.0, grid, formulation, shift=-gamma)


# ---------------------------------------------------------------------------
# eigenpairs


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Eigenpair of a vorticity-form mode operator.

    ``eta`` and ``eta_adj`` are length-N vorticity coefficients (zero at
    R_max); ``eta`` is scaled so that its velocity has unit L^2 norm as the
    complex field eta(r) e^{i m theta}.
    """

    lam: complex
    eta: np.ndarray
    eta_adj: np.ndarray
    residual: float
    m: int
    kappa: float
    shift: float
    grid: RadialGrid
    alpha: float
    meta: dict = field(default_factory=dict)

    @property
    def a(self) -> float:
        return float(self.lam.real)

    @property
    def b(self) -> float:
        return float(self.lam.imag)

    @property
    def meets_target(self) -> bool:
        return self.a >= 4.0 / self.alpha

    @property
    def near_real(self) -> bool:
        """|b| below tolerance: a real double eigenvalue and a near-collision look alike here."""
        return abs(self.b) < REAL_TOL * (1.0 + abs(self.lam))

    @property
    def pairing(self) -> complex:
        q = 2 * np.pi * self.grid.weights
        return complex(np.sum(q * self.eta * np.conj(self.eta_adj)))

    def conjugate(self) -> "SpectrumResult":
        """Eigen-data of the mode -m operator."""
        return SpectrumResult(np.conj(self.lam), np.conj(self.eta), np.conj(self.eta_adj), self.residual,
                              -self.m, self.kappa, self.shift, self.grid, self.alpha, dict(self.meta))

    def eigen_field(self, z: complex = 1.0, n_modes: int = 2) -> PolarField:
        """Real field z eta e^{i m theta} + conjugate, as a PolarField with m0 = m."""
        data = np.zeros((n_modes, self.grid.n), complex)
        data[1] = z * self.eta
        return PolarField(self.grid, abs(self.m), data, "vorticity", "similarity", 0.0, self.alpha)


def _velocity_norm(w: np.ndarray, m: int, grid: RadialGrid) -> float:
    psi = solve_poisson_mode(w, m, grid)
    ur = -1j * m / grid.r * psi
    ut = deriv_matrix(grid, 1, *mode_parity(m)) @ psi
    return float(np.sqrt(2 * np.pi * grid.integrate(np.abs(ur) ** 2 + np.abs(ut) ** 2)))


def _normalize(op: ModeOperator, vec: np.ndarray) -> np.ndarray:
    full = np.zeros(op.grid.n, complex)
    full[: op.size] = vec
    k = int(np.argmax(np.abs(full)))
    full *= np.abs(full[k]) / full[k]
    return full / _velocity_norm(full, op.m, op.grid)


def _pair(op: ModeOperator, lam: complex, vec: np.ndarray, method: str) -> SpectrumResult:
    eta = _normalize(op, vec)
    n = op.size
    res = op.norm(op.apply(eta[:n]) - lam * eta[:n]) / op.norm(eta[:n])
    adj_vals, adj_vecs = _adjoint_eig(op, lam)
    eta_adj = np.zeros(op.grid.n, complex)
    eta_adj[:n] = adj_vecs
    pairing = op.inner(eta[:n], eta_adj[:n])
    if abs(pairing) < 1e-12 * op.norm(eta[:n]) * op.norm(eta_adj[:n]):
        raise NumericalFailure("eigenvalue is not simple: <eta, eta*> vanishes")
    out = SpectrumResult(complex(lam), eta, eta_adj, float(res), op.m, op.kappa, op.shift, op.grid,
                         op.alpha, {"method": method, "adjoint_lambda": adj_vals})
    if out.near_real:
        log.warning("m=%d: eigenvalue %s is numerically real; simple vs double is not decided", op.m, lam)
    return out


def _adjoint_eig(op: ModeOperator, lam: complex):
    """Eigenvector of L* for conj(lam), by inverse iteration on the dense adjoint."""
    adj = op.adjoint_matrix
    target = np.conj(lam)
    n = adj.shape[0]
    lu = sla.lu_factor(adj - (target + 1e-10 * (1 + abs(target))) * np.eye(n))
    v = np.ones(n, complex)
    for _ in range(6):
        v = sla.lu_solve(lu, v)
        v /= np.linalg.norm(v)
    mu = np.vdot(v, adj @ v)
    return complex(mu), v


def dense_spectrum(op: ModeOperator) -> np.ndarray:
    return np.linalg.eigvals(op.matrix)


def find_unstable_eigenvalue(op: ModeOperator, method: str = "auto", threshold: float = 0.0,
                             n_eigs: int = 30, sigma: complex | None = None) -> SpectrumResult | None:
    """Eigenpair with the largest real part above ``threshold``, or None.

    ``method`` is ``dense``, ``shift-invert`` or ``auto`` (dense up to
    N = 512).  Shift-invert runs twice: once at 0.5/|m| to locate the
    rightmost eigenvalue among the nearest ``n_eigs``, then re-centred on it.
    """
    if op.formulation != "vorticity":
        raise SpectralError("eigenpairs are computed in vorticity form")
    if method == "auto":
        method = "dense" if op.grid.n <= DENSE_LIMIT else "shift-invert"
    if method == "dense":
        vals, vecs = np.linalg.eig(op.matrix)
        k = int(np.argmax(vals.real))
        if not vals[k].real > threshold:
            return None
        return _pair(op, vals[k], vecs[:, k], "dense")
    if method != "shift-invert":
        raise SpectralError(f"unknown method {method!r}")
    n = op.size
    centre = complex(0.5 / abs(op.m) + op.shift) if sigma is None else complex(sigma)
    history = []
    lam = None
    for stage in range(2):
        solve = op.resolvent_solver(centre)
        # (L - s)^{-1} = -(s - L)^{-1}
        lin = spla.LinearOperator((n, n), matvec=lambda x: -solve(x), dtype=complex)
        k = min(n_eigs if stage == 0 else 4, n - 2)
        try:
            mu, vecs = spla.eigs(lin, k=k, which="LM", tol=1e-13, v0=np.ones(n, complex))
        except spla.ArpackNoConvergence as exc:
            raise NumericalFailure(f"Arnoldi did not converge; history {history}") from exc
        vals = centre + 1.0 / mu
        i = int(np.argmax(vals.real)) if stage == 0 else int(np.argmin(np.abs(vals - lam)))
        lam, vec = vals[i], vecs[:, i]
        history.append((stage, complex(centre), complex(lam)))
        centre = lam + 1e-3 * (1 + abs(lam))
    log.debug("shift-invert history %s", history)
    if not lam.real > threshold:
        return None
    return _pair(op, lam, vec, "shift-invert")


def eigenvalue_scan(profile: VortexProfile, grid: RadialGrid, modes, kappa: float = 1.0,
                    similarity: bool = True) -> list[tuple[int, complex, float]]:
    """(m, rightmost eigenvalue, residual) for each m in ``modes``."""
    out = []
    for m in modes:
        op = (similarity_operator(profile, m, grid) if similarity
              else assemble_mode_operator(profile, m, kappa, grid))
        res = find_unstable_eigenvalue(op, threshold=-np.inf)
        out.append((int(m), res.lam, res.residual))
    return out


# ---------------------------------------------------------------------------
# resolvent, projection, semigroup


@dataclass
class ResolventResult:
    value: np.ndarray
    residual: float
    ill_conditioned: bool


def resolvent_apply(op: ModeOperator, lam: complex, f: np.ndarray, known: complex | None = None) -> ResolventResult:
    """u with (lam - L) u = f on interior unknowns."""
    f = np.asarray(f, complex)
    near = known is not None and abs(lam - known) <= 10 * np.finfo(float).eps * (1 + abs(known))
    u = op.resolvent_solver(lam)(f)
    res = op.norm(lam * u - op.apply(u) - f) / max(op.norm(f), 1e-300)
    return ResolventResult(u, float(res), bool(near or not np.all(np.isfinite(u))))


def resolvent_norm(op: ModeOperator, lam: complex) -> float:
    """Operator norm of (lam - L)^{-1} in the weighted L^2 norm."""
    q = np.sqrt(op.weights)
    mat = (q[:, None] * (lam * np.eye(op.matrix.shape[0]) - op.matrix)) / q[None, :]
    return float(1.0 / np.linalg.svd(mat, compute_uv=False)[-1])


@dataclass
class Projection:
    z: complex
    projected: PolarField
    remainder: PolarField


def projection_coefficient(coef: np.ndarray, spec: SpectrumResult) -> complex:
    q = 2 * np.pi * spec.grid.weights
    pairing = spec.pairing
    if spec.eta_adj is None or pairing == 0:
        raise SpectralError("projection needs an adjoint eigenfunction")
    return complex(np.sum(q * np.asarray(coef) * np.conj(spec.eta_adj)) / pairing)


def spectral_project(field_: PolarField, spec: SpectrumResult) -> Projection:
    """z = <F_m, eta*>/<eta, eta*>, P F = z eta + conj, remainder F - P F."""
    if spec.eta_adj is None:
        raise SpectralError("missing adjoint eigenfunction")
    if field_.kind != "vorticity":
        raise SpectralError("project vorticity fields")
    if field_.m0 != 0 and abs(spec.m) % field_.m0:
        raise SpectralError("eigenmode is not in the field's symmetry class")
    k = abs(spec.m) // field_.m0
    data = np.zeros_like(field_.data)
    z = 0j
    if k < field_.n_modes:
        coef = field_.data[k] if spec.m > 0 else np.conj(field_.data[k])
        z = projection_coefficient(coef, spec)
        data[k] = z * spec.eta if spec.m > 0 else np.conj(z * spec.eta)
    proj = field_.with_data(data)
    return Projection(z, proj, field_.with_data(field_.data - data))


def spectral_projector_matrix(op: ModeOperator, spec: SpectrumResult) -> np.ndarray:
    """Rank-one P_lambda on interior unknowns."""
    n = op.size
    eta, adj = spec.eta[:n], spec.eta_adj[:n]
    return np.outer(eta, np.conj(adj) * op.weights) / op.inner(eta, adj)


def contour_projector(op: ModeOperator, lam: complex, radius: float, n_points: int = 64) -> np.ndarray:
    """(2 pi i)^{-1} contour integral of the resolvent around lam, trapezoid rule."""
    size = op.matrix.shape[0]
    acc = np.zeros((size, size), complex)
    for th in 2 * np.pi * (np.arange(n_points) + 0.5) / n_points:
        zeta = lam + radius * np.exp(1j * th)
        res = np.linalg.solve(zeta * np.eye(size) - op.matrix, np.eye(size))
        acc += res * radius * np.exp(1j * th) / n_points
    return acc


def propagate(op: ModeOperator, x0: np.ndarray, taus: np.ndarray) -> np.ndarray:
    """e^{tau L} x0 for increasing ``taus`` (first entry may be 0)."""
    taus = np.asarray(taus, float)
    out = np.empty((taus.size, x0.size), complex)
    step = None
    prev, x = 0.0, np.asarray(x0, complex)
    steps = np.diff(np.concatenate([[0.0], taus]))
    uniform = np.allclose(steps[1:], steps[1]) if steps.size > 1 else True
    for i, dt in enumerate(steps):
        if dt == 0:
            out[i] = x
            continue
        if step is None or not uniform or not np.isclose(dt, prev):
            step = sla.expm(dt * op.matrix)
            prev = dt
        x = step @ x
        out[i] = x
    return out


@dataclass
class GrowthReport:
    a: float
    max_excess: float
    slopes: list[float]
    remainder_slopes: list[float]
    bounded: bool


def fit_slope(t: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of y against t."""
    return float(np.polyfit(np.asarray(t, float), np.asarray(y, float), 1)[0])


def semigroup_growth_check(op: ModeOperator, spec: SpectrumResult, tau_h: float = 6.0, samples: int = 8,
                           window: tuple[float, float] = (2.0, 6.0), slack: float = 0.02,
                           rng: np.random.Generator | None = None, n_tau: int = 41) -> GrowthReport:
    """Growth of e^{tau L} on random smooth data, and of its complement channel."""
    rng = rng or np.random.default_rng(0)
    n = op.size
    r = op.grid.r[:n]
    taus = np.linspace(0.0, tau_h, n_tau)
    sel = (taus >= window[0]) & (taus <= window[1])
    proj = spectral_projector_matrix(op, spec)
    comp = np.eye(n) - proj
    a = spec.a
    slopes, rem, excess = [], [], []
    for _ in range(samples):
        c = rng.normal(size=(3, 2))
        x0 = sum((c[k, 0] + 1j * c[k, 1]) * r ** abs(op.m) * np.exp(-((r - 0.6 - 0.5 * k) / 0.4) ** 2) for k in range(3))
        traj = propagate(op, x0, taus)
        lg = np.log([op.norm(v) for v in traj])
        slopes.append(fit_slope(taus[sel], lg[sel]))
        excess.append(float(np.max(lg - a * taus - lg[0])))
        rtraj = propagate(op, comp @ x0, taus)
        rlg = np.log([max(op.norm(v), 1e-300) for v in rtraj])
        rem.append(fit_slope(taus[sel], rlg[sel]))
    bounded = max(slopes) <= a + slack
    return GrowthReport(a, max(excess), slopes, rem, bounded)


def critical_exponent(spec: SpectrumResult | float, params: ScaleParams) -> float:
    """kappa_c = a / gamma."""
    a = spec if isinstance(spec, (int, float)) else spec.a
    if not a > 0:
        raise SpectralError("critical exponent needs a > 0")
    return float(a) / params.gamma


# ---------------------------------------------------------------------------
# finite-dimensional perturbation check


@dataclass
class ContinuityReport:
    eps: np.ndarray
    lam: np.ndarray
    oracle: np.ndarray
    max_lambda_error: float
    max_vector_error: float
    max_normalization_error: float
    modulus: float
    iterations: list[int]


def _simple_eigenpair(mat: np.ndarray, lam0: complex | None):
    vals, right = np.linalg.eig(mat)
    k = int(np.argmax(vals.real)) if lam0 is None else int(np.argmin(np.abs(vals - lam0)))
    lam = vals[k]
    others = np.delete(vals, k)
    if others.size and np.min(np.abs(others - lam)) < 1e-8 * (1 + abs(lam)):
        raise SpectralError("lambda_0 is not simple")
    lvals, left = np.linalg.eig(mat.conj().T)
    j = int(np.argmin(np.abs(lvals - np.conj(lam))))
    phi = right[:, k] / np.linalg.norm(right[:, k])
    return lam, phi, left[:, j]


def perturbation_continuity_check(M: np.ndarray, K: np.ndarray, A: np.ndarray, eps_grid,
                                  lam0: complex | None = None, tol: float = 1e-13,
                                  max_iter: int = 200) -> ContinuityReport:
    """Follow (lambda_eps, phi_eps) solving (I - R(lam, M + eps A) K) phi = 0, <P phi, phi0> = 1.

    The iteration is the chord scheme x <- x - J0^{-1} F(x, eps) with J0 the
    linearization at (phi0, lam0, 0), continued along ``eps_grid``.
    Each point is compared with a dense eigendecomposition of M + K + eps A.
    """
    M, K, A = (np.asarray(x, complex) for x in (M, K, A))
    n = M.shape[0]
    if n > 64:
        raise SpectralError("matrices larger than 64 are out of scope")
    lam_0, phi0, left = _simple_eigenpair(M + K, lam0)
    ell = np.conj(left) / (np.conj(left) @ phi0)  # ell(phi) = <P phi, phi0>, |phi0| = 1
    eye = np.eye(n)

    def residual(phi, lam, eps):
        r = phi - np.linalg.solve(lam * eye - M - eps * A, K @ phi)
        return np.concatenate([r, [ell @ phi - 1.0]])

    res0 = np.linalg.solve(lam_0 * eye - M, eye)
    jac = np.zeros((n + 1, n + 1), complex)
    jac[:n, :n] = eye - res0 @ K
    jac[:n, n] = res0 @ phi0
    jac[n, :n] = ell
    jlu = sla.lu_factor(jac)
    phi, lam = phi0.copy(), complex(lam_0)
    lams, oracle, iters = [], [], []
    verr = nerr = 0.0
    for eps in eps_grid:
        for it in range(max_iter):
            f = residual(phi, lam, eps)
            if np.linalg.norm(f) < tol:
                break
            dx = sla.lu_solve(jlu, f)
            phi, lam = phi - dx[:n], lam - dx[n]
        else:
            raise NumericalFailure(f"chord iteration stalled at eps={eps}")
        iters.append(it)
        vals, vecs = np.linalg.eig(M + K + eps * A)
        k = int(np.argmin(np.abs(vals - lam)))
        v = vecs[:, k] / (ell @ vecs[:, k])
        lams.append(lam)
        oracle.append(vals[k])
        verr = max(verr, float(np.linalg.norm(v - phi)))
        nerr = max(nerr, abs(ell @ phi - 1.0))
    lams, oracle = np.array(lams), np.array(oracle)
    eps_arr = np.asarray(eps_grid, float)
    jumps = np.abs(np.diff(lams)) / np.maximum(np.diff(eps_arr), 1e-300) if lams.size > 1 else np.zeros(1)
    return ContinuityReport(eps_arr, lams, oracle, float(np.max(np.abs(lams - oracle))), verr, float(nerr),
                            float(np.max(jumps)), iters)


def random_continuity_family(n: int = 8, rank: int = 2, rng: np.random.Generator | None = None):
    """Anti-Hermitian M, rank-``rank`` K and diagonal A."""
    rng = rng or np.random.default_rng(0)
    h = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    M = 0.5 * (h - h.conj().T)
    u = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    v = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    K = u @ v.conj().T
    A = np.diag(rng.normal(size=n) - 2.0)
    return M, K, A


# ---------------------------------------------------------------------------
# reports


def compact_part_bound(op: ModeOperator, samples: int = 100, rng: np.random.Generator | None = None) -> float:
    """max ||K u|| / ||u|| over random smooth unknowns (velocity form: divergence-free)."""
    rng = rng or np.random.default_rng(1)
    n = op.size
    r = op.grid.r[:n]
    best = 0.0
    for _ in range(samples):
        c = rng.normal(size=(4, 2))
        w = sum((c[k, 0] + 1j * c[k, 1]) * np.exp(-((r - 0.3 - 0.7 * k) / 0.5) ** 2) * r ** min(abs(op.m), 2)
                for k in range(4))
        if op.formulation == "velocity":
            full = np.zeros(op.grid.n, complex)
            full[:n] = w
            psi = solve_poisson_mode(full, op.m, op.grid)
            ur = -1j * op.m / op.grid.r * psi
            ut = deriv_matrix(op.grid, 1, *mode_parity(op.m)) @ psi
            x = np.concatenate([ur[:n], ut[:n]])
        else:
            x = w
        best = max(best, op.norm(op.compact @ x) / op.norm(x))
    return best


def anti_hermitian_residual(op: ModeOperator, samples: int = 10, rng: np.random.Generator | None = None) -> float:
    """max |Re <M x, x>| / ||x||^2 over random x."""
    rng = rng or np.random.default_rng(2)
    size = op.advection.shape[0]
    worst = 0.0
    for _ in range(samples):
        x = rng.normal(size=size) + 1j * rng.normal(size=size)
        worst = max(worst, abs(op.inner(op.advection @ x, x).real) / op.norm(x) ** 2)
    return worst


SPECTRUM_COLUMNS = ["m", "kappa", "re_lambda", "im_lambda", "residual", "a_ge_4_over_alpha"]


def spectrum_rows(results: list[SpectrumResult]) -> list[list]:
    return [[r.m, r.kappa, r.a, r.b, r.residual, int(r.meets_target)] for r in results]


def check_grid(grid: RadialGrid, profile: VortexProfile) -> None:
    if grid.r_max < 2 * profile.support:
        raise GridError("R_max should be at least twice the vortex support")
