"""Radial grids, angular-mode fields and the per-mode Biot-Savart law.

Every radial operator is a fourth-order finite difference in a computational
coordinate x in (0, 1], with r = r(x) an odd map so that the reflection
r -> -r is the ghost-node rule at the origin.  A coefficient f_m(r) of
e^{i m theta} extends to negative r with parity (-1)^m.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import PchipInterpolator

Kind = Literal["vorticity", "velocity"]
Frame = Literal["physical", "similarity"]


class GridError(ValueError):
    """Invalid grid or field arguments."""


class NumericalFailure(RuntimeError):
    """A linear solve or iteration failed."""


@dataclass(frozen=True)
class Stretch:
    """Node clustering. ``kind`` is ``uniform``, ``sinh`` or ``tan``.

    ``sinh`` gives geometric spacing beyond ``scale`` (spacing proportional
    to r), ``tan`` an algebraic tail with near-uniform spacing inside
    ``scale``.
    """

    kind: str = "sinh"
    scale: float = 0.05

    def mapping(self, r_max: float):
        c = float(self.scale)
        if self.kind == "uniform":
            return (lambda x: r_max * x, lambda x: r_max + 0.0 * x, lambda x: 0.0 * x)
        if self.kind == "sinh":
            b = np.arcsinh(r_max / c)
            return (
                lambda x: c * np.sinh(b * x),
                lambda x: c * b * np.cosh(b * x),
                lambda x: c * b * b * np.sinh(b * x),
            )
        if self.kind == "tan":
            th = np.arctan(r_max / c)
            return (
                lambda x: c * np.tan(th * x),
                lambda x: c * th / np.cos(th * x) ** 2,
                lambda x: 2 * c * th * th * np.tan(th * x) / np.cos(th * x) ** 2,
            )
        raise GridError(f"unknown stretch kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes r_1 < ... < r_N = R_max with weights for the measure r dr."""

    r_max: float
    n: int
    stretch: Stretch
    x: np.ndarray
    r: np.ndarray
    drdx: np.ndarray
    d2rdx: np.ndarray
    weights: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def scaled(self, factor: float) -> "RadialGrid":
        """The same computational grid with every length multiplied by ``factor``."""
        f = float(factor)
        if not f > 0:
            raise GridError("scale factor must be positive")
        st = Stretch(self.stretch.kind, self.stretch.scale * f)
        return RadialGrid(
            r_max=self.r_max * f,
            n=self.n,
            stretch=st,
            x=self.x,
            r=self.r * f,
            drdx=self.drdx * f,
            d2rdx=self.d2rdx * f,
            weights=self.weights * f * f,
        )

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Quadrature of ``values`` against r dr along the last axis."""
        return np.asarray(values) @ self.weights

    @cached_property
    def key(self) -> tuple:
        return (self.r_max, self.n, self.stretch.kind, self.stretch.scale)


def make_radial_grid(r_max: float, n: int, stretch: Stretch | str | None = None) -> RadialGrid:
    """Build a vertex-centred grid x_j = j/N, j = 1..N, r_j = r(x_j)."""
    if not (np.isfinite(r_max) and r_max > 0):
        raise GridError("R_max must be positive")
    if int(n) < 16:
        raise GridError("need N >= 16")
    n = int(n)
    if stretch is None:
        stretch = Stretch()
    elif isinstance(stretch, str):
        stretch = Stretch(stretch)
    rf, df, d2f = stretch.mapping(float(r_max))
    x = np.arange(1, n + 1) / n
    r = rf(x)
    r[-1] = r_max
    dr = df(x)
    w = r * dr / n
    w[-1] *= 0.5
    if not (np.all(np.diff(r) > 0) and r[0] > 0 and np.all(w > 0)):
        raise GridError("degenerate grid")
    return RadialGrid(float(r_max), n, stretch, x, r, dr, d2f(x), w)


# ---------------------------------------------------------------------------
# radial operators
#
# Fourth-order stencils in x.  Rows near the origin read ghost values
# f_{-k} = p f_k (p = +-1 the parity) and f_0, which is 0 or an even
# extrapolation; rows at R_max use one-sided stencils.

_OP_CACHE: dict = {}


def _cache(grid: RadialGrid, name: str, build):
    k = (grid.key, name)
    op = _OP_CACHE.get(k)
    if op is None:
        if len(_OP_CACHE) > 1024:
            _OP_CACHE.clear()
        op = build()
        _OP_CACHE[k] = op
    return op


def fd_weights(offsets, order: int) -> np.ndarray:
    """Weights w with sum_k w_k f(z + o_k) ~ f^(order)(z) for unit spacing."""
    o = np.asarray(offsets, float)
    n = o.size
    vander = np.vander(o, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(vander, rhs)


_CENTER = (fd_weights([-2, -1, 0, 1, 2], 1), fd_weights([-2, -1, 0, 1, 2], 2))
_EDGE1 = (fd_weights([-3, -2, -1, 0, 1], 1), fd_weights([-3, -2, -1, 0, 1], 2))
_EDGE0 = (fd_weights([-4, -3, -2, -1, 0], 1), fd_weights([-4, -3, -2, -1, 0], 2))


def mode_parity(m: int) -> tuple[int, str]:
    """(parity, origin rule) of a mode-m scalar coefficient."""
    return (1 if m % 2 == 0 else -1), ("even" if m == 0 else "zero")


def _extension(grid: RadialGrid, parity: int, origin: str) -> sp.csr_matrix:
    n = grid.n
    rows, cols, vals = [], [], []
    rows += [0, 1]
    cols += [1, 0]
    vals += [float(parity), float(parity)]
    if origin == "even":
        s = grid.r[:3] ** 2
        w = np.array([np.prod([-s[k] / (s[i] - s[k]) for k in range(3) if k != i]) for i in range(3)])
        rows += [2, 2, 2]
        cols += [0, 1, 2]
        vals += list(w)
    rows += list(range(3, n + 3))
    cols += list(range(n))
    vals += [1.0] * n
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 3, n))


def _x_derivative(grid: RadialGrid, order: int) -> sp.csr_matrix:
    n, h = grid.n, grid.h
    rows, cols, vals = [], [], []
    for j in range(n):
        # ext index k holds node k - 2; row j is node j + 1
        if j <= n - 3:
            w, base = _CENTER[order - 1], j + 1
        elif j == n - 2:
            w, base = _EDGE1[order - 1], j
        else:
            w, base = _EDGE0[order - 1], j - 1
        rows += [j] * 5
        cols += list(range(base, base + 5))
        vals += list(w / h ** order)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 3))


def deriv_matrix(grid: RadialGrid, order: int = 1, parity: int = 1, origin: str = "zero") -> sp.csr_matrix:
    """d/dr or d^2/dr^2 acting on node values of a function of the given parity."""

    def build():
        ext = _extension(grid, parity, origin)
        d1 = sp.diags(1.0 / grid.drdx) @ (_x_derivative(grid, 1) @ ext)
        if order == 1:
            return d1.tocsr()
        d2x = _x_derivative(grid, 2) @ ext
        return (sp.diags(1.0 / grid.drdx ** 2) @ d2x - sp.diags(grid.d2rdx / grid.drdx ** 2) @ d1).tocsr()

    return _cache(grid, f"d{order}:{parity}:{origin}", build)


_UPWIND = fd_weights([-1, 0, 1, 2], 1)


def radial_drift_matrix(grid: RadialGrid, m: int) -> sp.csr_matrix:
    """Third-order upwind r d/dr for transport towards the origin.

    The stencil leans on larger radii, where the characteristics of
    r d/dr come from; the last two rows fall back to second order.
    """

    def build():
        n, h = grid.n, grid.h
        rows, cols, vals = [], [], []
        for j in range(n):
            node = j + 1
            if node <= n - 2:
                idx, w = range(node - 1, node + 3), _UPWIND
            elif node == n - 1:
                idx, w = range(node - 1, node + 2), np.array([-0.5, 0.0, 0.5])
            else:
                idx, w = range(node - 2, node + 1), np.array([0.5, -2.0, 1.5])
            rows += [j] * len(w)
            cols += [i + 2 for i in idx]
            vals += list(np.asarray(w) / h)
        dx = sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 3)) @ _extension(grid, *mode_parity(m))
        return (sp.diags(grid.r / grid.drdx) @ dx).tocsr()

    return _cache(grid, f"drift:{abs(int(m))}", build)


def laplacian_matrix(grid: RadialGrid, m: int) -> sp.csr_matrix:
    """Delta_m = d_rr + r^{-1} d_r - m^2 r^{-2}; the row at R_max is zero."""
    m = abs(int(m))

    def build():
        p, o = mode_parity(m)
        lap = deriv_matrix(grid, 2, p, o) + sp.diags(1.0 / grid.r) @ deriv_matrix(grid, 1, p, o)
        lap = lap - sp.diags(m * m / grid.r ** 2)
        lap = lap.tolil()
        lap[grid.n - 1, :] = 0.0
        return lap.tocsr()

    return _cache(grid, f"lap:{m}", build)


def _dirichlet_lap(grid: RadialGrid, m: int):
    m = abs(int(m))

    def build():
        mat = laplacian_matrix(grid, m).tolil()
        mat[grid.n - 1, grid.n - 1] = 1.0
        return spla.splu(mat.tocsc())

    return _cache(grid, f"lapLU:{m}", build)


def _lu_apply(lu, b: np.ndarray, trans: str = "N") -> np.ndarray:
    b = np.asarray(b, complex)
    if b.ndim == 1:
        return lu.solve(b.real.copy(), trans=trans) + 1j * lu.solve(b.imag.copy(), trans=trans)
    return (lu.solve(b.real.T.copy(), trans=trans) + 1j * lu.solve(b.imag.T.copy(), trans=trans)).T


def solve_poisson_mode(rhs: np.ndarray, m: int, grid: RadialGrid) -> np.ndarray:
    """psi with Delta_m psi = rhs, psi ~ r^|m| at 0 and psi(R_max) = 0."""
    b = np.array(rhs, dtype=complex)
    b[..., -1] = 0.0
    out = _lu_apply(_dirichlet_lap(grid, m), b)
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("singular Poisson solve")
    return out


def solve_poisson_mode_adjoint(rhs: np.ndarray, m: int, grid: RadialGrid) -> np.ndarray:
    """Plain transpose of the linear map :func:`solve_poisson_mode`."""
    out = _lu_apply(_dirichlet_lap(grid, m), rhs, trans="T")
    out[..., -1] = 0.0
    return out


def ddr(f: np.ndarray, m: int, grid: RadialGrid) -> np.ndarray:
    """Radial derivative of a mode-m scalar coefficient."""
    d = deriv_matrix(grid, 1, *mode_parity(m))
    f = np.asarray(f)
    return (d @ f.T).T if f.ndim > 1 else d @ f


def swirl_from_vorticity(omega0: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """V(r) = r^{-1} int_0^r w s ds for the radial mode."""
    w = np.asarray(omega0)
    # r V solves (rV)' = r w with (rV)(0) = 0; integrate the cubic
    # interpolant of g = r w r'(x) in x, which vanishes at the origin
    g = w * grid.r * grid.drdx
    h = grid.h
    ge = np.concatenate([[-g[0]], [0.0], g])
    # cell integrals over [x_{j-1}, x_j] from the 4-point cubic
    c = np.array([-1.0, 13.0, 13.0, -1.0]) / 24.0
    cells = np.empty(grid.n)
    gp = np.concatenate([ge, [4 * g[-1] - 6 * g[-2] + 4 * g[-3] - g[-4]]])
    for j in range(grid.n):
        cells[j] = h * (c @ gp[j:j + 4])
    cum = np.cumsum(cells)
    return cum / grid.r


def biot_savart_mode(omega_m: np.ndarray, m: int, grid: RadialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Velocity pair (u^r_m, u^theta_m) of the vorticity coefficient omega_m."""
    w = np.asarray(omega_m)
    if m == 0:
        return np.zeros_like(w, dtype=complex), swirl_from_vorticity(w.real, grid).astype(complex)
    psi = solve_poisson_mode(w, m, grid)
    return -1j * m / grid.r * psi, ddr(psi, m, grid)


def stream_function_mode(omega_m: np.ndarray, m: int, grid: RadialGrid) -> np.ndarray:
    if m == 0:
        raise GridError("radial mode uses the swirl quadrature")
    return solve_poisson_mode(omega_m, m, grid)


def curl_mode(ur: np.ndarray, ut: np.ndarray, m: int, grid: RadialGrid) -> np.ndarray:
    """omega_m = -(im/r) u^r + r^{-1} d_r (r u^theta)."""
    d = deriv_matrix(grid, 1, mode_parity(m)[0], "zero")
    return -1j * m / grid.r * np.asarray(ur) + (d @ (grid.r * np.asarray(ut))) / grid.r


def divergence_mode(ur: np.ndarray, ut: np.ndarray, m: int, grid: RadialGrid) -> np.ndarray:
    """(d_r + 1/r) u^r + (im/r) u^theta."""
    d = deriv_matrix(grid, 1, mode_parity(m)[0], "zero")
    return (d @ (grid.r * np.asarray(ur))) / grid.r + 1j * m / grid.r * np.asarray(ut)


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class PolarField:
    """Coefficients of e^{i m theta} for m = 0, m0, ..., K m0.

    ``data`` has shape (K+1, N) for vorticity and (2, K+1, N) for velocity
    (components u^r, u^theta).  Negative wavenumbers are implied by reality.
    """

    grid: RadialGrid
    m0: int
    data: np.ndarray
    kind: Kind = "vorticity"
    frame: Frame = "physical"
    time: float = 0.0
    alpha: float = 0.5
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if self.kind == "velocity" and (d.ndim != 3 or d.shape[0] != 2):
            raise GridError("velocity data must have shape (2, K+1, N)")
        if self.kind == "vorticity" and d.ndim != 2:
            raise GridError("vorticity data must have shape (K+1, N)")
        if d.shape[-1] != self.grid.n:
            raise GridError("data does not match grid")
        d = d.copy()
        d[..., 0, :] = d[..., 0, :].real
        object.__setattr__(self, "data", d)

    @property
    def n_modes(self) -> int:
        return self.data.shape[-2]

    @property
    def m_max(self) -> int:
        return self.m0 * (self.n_modes - 1)

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.m0 * np.arange(self.n_modes)

    def coefficient(self, m: int) -> np.ndarray:
        """Coefficient at any m in m0 Z (conjugate for negative m)."""
        if m % self.m0:
            return np.zeros(self.data.shape[:-2] + (self.grid.n,), complex)
        k = abs(m) // self.m0
        if k >= self.n_modes:
            return np.zeros(self.data.shape[:-2] + (self.grid.n,), complex)
        c = self.data[..., k, :]
        return np.conj(c) if m < 0 else c.copy()

    def with_data(self, data: np.ndarray, **kw) -> "PolarField":
        return replace(self, data=data, **kw)

    def __add__(self, other: "PolarField") -> "PolarField":
        _check_compatible(self, other)
        return self.with_data(self.data + other.data)

    def __sub__(self, other: "PolarField") -> "PolarField":
        _check_compatible(self, other)
        return self.with_data(self.data - other.data)

    def __mul__(self, c: float) -> "PolarField":
        return self.with_data(self.data * float(c))

    __rmul__ = __mul__


def _check_compatible(a: PolarField, b: PolarField) -> None:
    if a.kind != b.kind or a.grid.key != b.grid.key or a.data.shape != b.data.shape or a.m0 != b.m0:
        raise GridError("incompatible fields")


def zeros(grid: RadialGrid, m0: int, n_modes: int, kind: Kind = "vorticity", **kw) -> PolarField:
    shape = (n_modes, grid.n) if kind == "vorticity" else (2, n_modes, grid.n)
    return PolarField(grid, m0, np.zeros(shape, complex), kind, **kw)


def velocity_of(f: PolarField) -> PolarField:
    if f.kind == "velocity":
        return f
    out = np.zeros((2,) + f.data.shape, complex)
    for k, m in enumerate(f.wavenumbers):
        out[0, k], out[1, k] = biot_savart_mode(f.data[k], int(m), f.grid)
    return f.with_data(out, kind="velocity")


def vorticity_of(f: PolarField) -> PolarField:
    if f.kind == "vorticity":
        return f
    out = np.zeros(f.data.shape[1:], complex)
    for k, m in enumerate(f.wavenumbers):
        out[k] = curl_mode(f.data[0, k], f.data[1, k], int(m), f.grid)
    return f.with_data(out, kind="vorticity")


def to_physical(coeffs: np.ndarray, n_theta: int) -> np.ndarray:
    """Real samples on n_theta equispaced points of the reduced angle m0*theta.

    ``coeffs`` has shape (..., K+1, N); the result has shape (..., n_theta, N).
    """
    c = np.asarray(coeffs)
    k1 = c.shape[-2]
    if n_theta < 2 * k1 - 1:
        raise GridError("too few angular points")
    spec = np.zeros(c.shape[:-2] + (n_theta // 2 + 1, c.shape[-1]), complex)
    spec[..., :k1, :] = c
    return np.fft.irfft(spec, n=n_theta, axis=-2) * n_theta


def from_physical(values: np.ndarray, n_modes: int) -> np.ndarray:
    v = np.asarray(values)
    n_theta = v.shape[-2]
    spec = np.fft.rfft(v, axis=-2) / n_theta
    out = np.zeros(v.shape[:-2] + (n_modes, v.shape[-1]), complex)
    k = min(n_modes, spec.shape[-2])
    out[..., :k, :] = spec[..., :k, :]
    return out


def default_n_theta(n_modes: int) -> int:
    return max(8, 4 * n_modes)


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScaleParams:
    alpha: float
    nu: float = 1.0
    s: float = 0.5
    sigma: float = 0.5

    def __post_init__(self):
        if not (0 < self.alpha < 2):
            raise GridError("alpha must lie in (0, 2)")
        if not self.nu > 0:
            raise GridError("nu must be positive")

    @property
    def gamma(self) -> float:
        return 2.0 / self.alpha - 1.0

    @property
    def L(self) -> float:
        return self.nu ** (1.0 / (2.0 - self.alpha))

    @property
    def T(self) -> float:
        return self.L ** self.alpha

    @property
    def U(self) -> float:
        return self.L / self.T


def _mode_factors(n_modes: int) -> np.ndarray:
    c = np.full(n_modes, 2.0)
    c[0] = 1.0
    return 2 * np.pi * c


def l2_norm(f: PolarField) -> float:
    """L^2 norm over the plane via Parseval in theta."""
    a = np.abs(f.data) ** 2
    if f.kind == "velocity":
        a = a.sum(axis=0)
    return float(np.sqrt(_mode_factors(f.n_modes) @ (a @ f.grid.weights)))


def lp_norm(f: PolarField, p: float, n_theta: int | None = None) -> float:
    """L^p norm by collocation on a (theta, r) grid."""
    if p == 2:
        return l2_norm(f)
    n_theta = n_theta or default_n_theta(f.n_modes)
    vals = to_physical(f.data, n_theta)
    if f.kind == "velocity":
        mag = np.sqrt(vals[0] ** 2 + vals[1] ** 2)
    else:
        mag = np.abs(vals)
    if np.isinf(p):
        return float(mag.max())
    dth = 2 * np.pi / (n_theta * f.m0)
    tot = f.m0 * dth * (mag ** p).sum(axis=0) @ f.grid.weights
    return float(tot ** (1.0 / p))


def gradient_of_vorticity(f: PolarField) -> PolarField:
    """(d_r Omega, r^{-1} d_theta Omega) stored as a velocity-type field."""
    w = vorticity_of(f)
    out = np.zeros((2,) + w.data.shape, complex)
    for k, m in enumerate(w.wavenumbers):
        out[0, k] = ddr(w.data[k], int(m), w.grid)
        out[1, k] = 1j * m / w.grid.r * w.data[k]
    out[..., -1] = out[..., -2]
    return w.with_data(out, kind="velocity")


def _frac_power(grid: RadialGrid, m: int, power: float, shift: float) -> np.ndarray:
    """Dense (shift - Delta_m)^power, symmetric in the weighted inner product."""

    def build():
        n = grid.n
        lap = laplacian_matrix(grid, m).toarray()[: n - 1, : n - 1]
        q = np.sqrt(grid.weights[: n - 1])
        sym = (q[:, None] * lap) / q[None, :]
        sym = 0.5 * (sym + sym.T)
        ev, vec = np.linalg.eigh(-sym)
        return ev, vec, q

    ev, vec, q = _cache(grid, f"eig:{m}", build)
    lam = np.maximum(ev, 0.0) + shift
    mat = (vec * lam ** power) @ vec.T
    return mat, q


def sobolev_vorticity_norm(f: PolarField, power: float, shift: float = 0.0) -> float:
    """|| (shift - Delta)^{power/2} omega ||_{L^2} computed mode by mode."""
    w = vorticity_of(f)
    fac = _mode_factors(w.n_modes)
    tot = 0.0
    for k, m in enumerate(w.wavenumbers):
        mat, q = _frac_power(w.grid, int(m), 0.5 * power, shift)
        y = mat @ (q * w.data[k, : w.grid.n - 1])
        tot += fac[k] * float(np.sum(np.abs(y) ** 2))
    return float(np.sqrt(tot))


def field_norm(f: PolarField, which: str, params: ScaleParams | None = None, p: float = 2.0) -> float:
    """Norms used throughout: ``L2``, ``Lp``, ``critical``, ``X``, ``Y``, ``H2s``.

    ``critical`` is the L^{2/alpha} norm of the vorticity; ``X`` is
    ||U||_2 + ||Omega||_2 + ||grad Omega||_2 + ||grad Omega||_{2+sigma};
    ``Y`` is the viscosity-weighted L_nu^{alpha+s} |u|_{H^{2+s}} + L_nu^{alpha-2} ||u||_2;
    ``H2s`` is the inhomogeneous proxy (||u||_2^2 + ||(1-Delta)^{(1+s)/2} omega||^2)^{1/2}.
    """
    params = params or ScaleParams(alpha=f.alpha)
    if which == "L2":
        return l2_norm(f)
    if which == "Lp":
        return lp_norm(f, p)
    if which == "critical":
        return lp_norm(vorticity_of(f), 2.0 / params.alpha)
    if which == "X":
        u, w, g = velocity_of(f), vorticity_of(f), gradient_of_vorticity(f)
        return l2_norm(u) + l2_norm(w) + l2_norm(g) + lp_norm(g, 2.0 + params.sigma)
    if which == "Y":
        u = velocity_of(f)
        hom = sobolev_vorticity_norm(f, 1.0 + params.s)
        return params.L ** (params.alpha + params.s) * hom + params.L ** (params.alpha - 2) * l2_norm(u)
    if which == "H2s":
        u = velocity_of(f)
        return float(np.hypot(l2_norm(u), sobolev_vorticity_norm(f, 1.0 + params.s, shift=1.0)))
    raise GridError(f"unknown norm {which!r}")


# ---------------------------------------------------------------------------
# frame transforms


def _resample(data: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    out = np.zeros(data.shape[:-1] + (dst.size,), complex)
    flat = data.reshape(-1, data.shape[-1])
    res = out.reshape(-1, dst.size)
    xs = np.concatenate([[0.0], src])
    inside = dst <= src[-1]
    for i, row in enumerate(flat):
        for part, unit in ((row.real, 1.0), (row.imag, 1j)):
            if not np.any(part):
                continue
            ys = np.concatenate([[part[0]], part])
            res[i, inside] += unit * PchipInterpolator(xs, ys)(dst[inside])
    return out


def resample_field(f: PolarField, grid: RadialGrid) -> PolarField:
    """Monotone cubic resampling onto ``grid`` (zero beyond the source R_max)."""
    data = _resample(f.data, f.grid.r, grid.r)
    return PolarField(grid, f.m0, data, f.kind, f.frame, f.time, f.alpha, dict(f.meta))


def _scale_field(f: PolarField, length: float, amp_u: float, amp_w: float, onto: RadialGrid | None):
    g = f.grid.scaled(length)
    amp = amp_u if f.kind == "velocity" else amp_w
    out = PolarField(g, f.m0, f.data * amp, f.kind, f.frame, f.time, f.alpha, dict(f.meta))
    return resample_field(out, onto) if onto is not None else out


def to_similarity(f: PolarField, onto: RadialGrid | None = None) -> PolarField:
    """u(x,t) = t^{1/a-1} U(x/t^{1/a}, log t) and omega = Omega/t, solved for U, Omega."""
    if f.frame != "physical":
        raise GridError("field is not in the physical frame")
    t = f.time
    if not t > 0:
        raise GridError("t must be positive")
    a = f.alpha
    g = _scale_field(f, t ** (-1.0 / a), t ** (1.0 - 1.0 / a), t, onto)
    return replace(g, frame="similarity", time=float(np.log(t)))


def from_similarity(f: PolarField, onto: RadialGrid | None = None) -> PolarField:
    if f.frame != "similarity":
        raise GridError("field is not in the similarity frame")
    t = float(np.exp(f.time))
    a = f.alpha
    g = _scale_field(f, t ** (1.0 / a), t ** (1.0 / a - 1.0), 1.0 / t, onto)
    return replace(g, frame="physical", time=t)


def viscosity_rescale(f: PolarField, params: ScaleParams, direction: str, onto: RadialGrid | None = None) -> PolarField:
    """u^nu(x,t) = U_nu u(x/L_nu, t/T_nu).

    ``from-unit-viscosity`` maps a unit-viscosity field u to u^nu,
    ``to-unit-viscosity`` is the inverse.  Vorticity scales by U_nu/L_nu.
    """
    L, T, U = params.L, params.T, params.U
    log = list(f.meta.get("rescales", []))
    if direction == "from-unit-viscosity":
        out = _scale_field(f, L, U, U / L, onto)
        time = f.time * T if f.frame == "physical" else f.time
        log.append(("from-unit-viscosity", params.nu))
    elif direction == "to-unit-viscosity":
        out = _scale_field(f, 1.0 / L, 1.0 / U, L / U, onto)
        time = f.time / T if f.frame == "physical" else f.time
        log.append(("to-unit-viscosity", params.nu))
    else:
        raise GridError(f"unknown direction {direction!r}")
    return replace(out, time=time, meta={**f.meta, "rescales": log})
