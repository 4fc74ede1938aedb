"""Implicit-explicit time stepping for vorticity perturbations of a radial flow.

A perturbation w of the background (angular velocity Omega_b, vorticity
slope W_b') obeys, mode by mode,

    d_s w_m = c (2/alpha + (1/alpha) r d_r - gamma) w_m + nu(s) Delta_m w_m
              - i m (Omega_b - rate) w_m + (i m W_b'/r) psi_m - [u.grad w]_m,

with Delta_m psi_m = w_m, c = 0 in physical variables and c = 1 in
similarity variables.  The linear part is Crank-Nicolson on the coupled
(w, psi) system; the quadratic term is Heun (explicit trapezoid), evaluated
pseudo-spectrally in theta with the 3/2 rule.  Unknowns live on the interior
nodes; w and psi vanish at R_max.  ``rate`` is a co-rotating frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    NumericalFailure,
    RadialGrid,
    ddr,
    from_physical,
    laplacian_matrix,
    radial_drift_matrix,
    solve_poisson_mode,
    swirl_from_vorticity,
    to_physical,
)


@dataclass(frozen=True)
class Coefs:
    """Background data at one instant, sampled on the grid nodes."""

    spin: np.ndarray
    dw: np.ndarray
    visc: float
    drift: float = 0.0


BackgroundFn = Callable[[float], Coefs]


def still_background(grid: RadialGrid, visc: float = 1.0, drift: float = 0.0) -> BackgroundFn:
    """No background flow; pure diffusion (and drift)."""
    z = np.zeros(grid.n)
    c = Coefs(z, z, visc, drift)
    return lambda s: c


def time_grid(s0: float, s1: float, h_max: float, rel: float | None = None) -> np.ndarray:
    """Steps of at most h_max, and of at most rel * s once s is positive (geometric)."""
    if not s1 > s0:
        raise ValueError("need s1 > s0")
    pts = [s0]
    s = s0
    while s < s1 - 1e-14 * max(1.0, abs(s1)):
        h = h_max if rel is None or s <= 0 else min(h_max, max(rel * s, 1e-3 * h_max))
        s = min(s + h, s1)
        pts.append(s)
    return np.array(pts)


def _advect_parts(grid: RadialGrid, m0: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    parts = np.zeros((4,) + a.shape, complex)
    for k in range(a.shape[0]):
        m = k * m0
        if m == 0:
            parts[1, 0] = swirl_from_vorticity(a[0].real, grid)
            parts[2, 0] = ddr(b[0].real, 0, grid)
        else:
            psi = solve_poisson_mode(a[k], m, grid)
            parts[0, k] = -1j * m / grid.r * psi
            parts[1, k] = ddr(psi, m, grid)
            parts[2, k] = ddr(b[k], m, grid)
            parts[3, k] = 1j * m / grid.r * b[k]
    return parts


def advect(grid: RadialGrid, m0: int, a: np.ndarray, b: np.ndarray, n_theta: int) -> np.ndarray:
    """Modes of u(a).grad b for vorticity modes a, b (shape (K+1, N)), dealiased in theta.

    The last column is zeroed; modes beyond K are dropped.
    """
    parts = _advect_parts(grid, m0, np.asarray(a, complex), np.asarray(b, complex))
    phys = to_physical(parts, n_theta)
    out = from_physical(phys[0] * phys[2] + phys[1] * phys[3], a.shape[0])
    out[0] = out[0].real
    out[:, -1] = 0.0
    return out


class ModeBlocks:
    """Interior sparse blocks for one wavenumber."""

    def __init__(self, grid: RadialGrid, m: int, alpha: float):
        n = grid.n - 1
        self.grid, self.m, self.n, self.alpha = grid, int(m), n, alpha
        self.r = grid.r[:n]
        self.lap = laplacian_matrix(grid, m)[:n, :n].tocsc()
        gamma = 2.0 / alpha - 1.0
        drift = radial_drift_matrix(grid, m)[:n, :n] / alpha
        self.drift = (drift + (2.0 / alpha - gamma) * sp.eye(n)).tocsr()
        self.eye = sp.eye(n, format="csr")
        self._lap_lu = spla.splu(self.lap.astype(complex)) if m else None

    def local(self, c: Coefs, rate: float) -> sp.csr_matrix:
        a = c.visc * self.lap - sp.diags(1j * self.m * (c.spin[: self.n] - rate))
        if c.drift:
            a = a + c.drift * self.drift
        return a.tocsr()

    def coupling(self, c: Coefs) -> np.ndarray:
        return 1j * self.m * c.dw[: self.n] / self.r

    def psi(self, w: np.ndarray) -> np.ndarray:
        return self._lap_lu.solve(np.ascontiguousarray(w, complex)) if self.m else np.zeros_like(w)

    def psi_adjoint(self, y: np.ndarray) -> np.ndarray:
        return self._lap_lu.solve(np.ascontiguousarray(y, complex), trans="H")

    def explicit(self, w: np.ndarray, c: Coefs, rate: float) -> np.ndarray:
        out = self.local(c, rate) @ w
        if self.m:
            out = out + self.coupling(c) * self.psi(w)
        return out

    def implicit_lu(self, c: Coefs, rate: float, h: float):
        """LU of (I - h/2 L) on (w, psi) (or on w alone for m = 0)."""
        a = self.eye - 0.5 * h * self.local(c, rate)
        if self.m == 0:
            return spla.splu(a.tocsc())
        top_right = sp.diags(-0.5 * h * self.coupling(c))
        big = sp.bmat([[a, top_right], [-self.eye, self.lap]]).tocsc()
        return spla.splu(big)

    def solve(self, lu, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, complex)
        if self.m == 0:
            return lu.solve(rhs)
        return lu.solve(np.concatenate([rhs, np.zeros(self.n, complex)]))[: self.n]

    def solve_adjoint(self, lu, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, complex)
        if self.m == 0:
            return lu.solve(y, trans="H")
        return lu.solve(np.concatenate([y, np.zeros(self.n, complex)]), trans="H")[: self.n]


class PerturbationStepper:
    """Evolve w (shape (K+1, N), modes k*m0) with optional quadratic term.

    ``extra(s, w)`` adds an explicit term, in the rotating frame, treated
    like the quadratic one.
    """

    def __init__(self, grid: RadialGrid, m0: int, n_modes: int, alpha: float, background: BackgroundFn,
                 rate: float = 0.0, nonlinear: bool = True, n_theta: int | None = None,
                 extra: Callable[[float, np.ndarray], np.ndarray] | None = None):
        self.grid, self.m0, self.n_modes, self.alpha = grid, int(m0), int(n_modes), alpha
        self.extra = extra
        self.background = background
        self.rate = float(rate)
        self.nonlinear = nonlinear
        self.blocks = [ModeBlocks(grid, k * m0, alpha) for k in range(n_modes)]
        self.n_theta = n_theta or max(8, 3 * n_modes + 1)
        self.n = grid.n - 1

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.m0 * np.arange(self.n_modes)

    def quadratic(self, w: np.ndarray) -> np.ndarray:
        """-(u.grad w) projected on the retained modes (full N columns)."""
        return -advect(self.grid, self.m0, w, w, self.n_theta)

    def _explicit(self, s: float, w: np.ndarray) -> np.ndarray:
        out = self.quadratic(w) if self.nonlinear else np.zeros_like(w)
        if self.extra is not None:
            out = out + self.extra(s, w)
        return out

    def _linear_rhs(self, w: np.ndarray, c: Coefs, h: float) -> list[np.ndarray]:
        n = self.n
        return [w[k, :n] + 0.5 * h * b.explicit(w[k, :n], c, self.rate) for k, b in enumerate(self.blocks)]

    def step(self, w: np.ndarray, s0: float, s1: float) -> np.ndarray:
        h = s1 - s0
        c0, c1 = self.background(s0), self.background(s1)
        n = self.n
        base = self._linear_rhs(w, c0, h)
        lus = [b.implicit_lu(c1, self.rate, h) for b in self.blocks]
        out = np.zeros_like(w)
        if not self.nonlinear and self.extra is None:
            for k, b in enumerate(self.blocks):
                out[k, :n] = b.solve(lus[k], base[k])
            return out
        q0 = self._explicit(s0, w)
        pred = np.zeros_like(w)
        for k, b in enumerate(self.blocks):
            pred[k, :n] = b.solve(lus[k], base[k] + h * q0[k, :n])
        q1 = self._explicit(s1, pred)
        for k, b in enumerate(self.blocks):
            out[k, :n] = b.solve(lus[k], base[k] + 0.5 * h * (q0[k, :n] + q1[k, :n]))
        out[0] = out[0].real
        return out

    def run(self, w0: np.ndarray, times: np.ndarray, keep: Callable[[int, float], bool] | None = None,
            monitor: Callable[[float, np.ndarray], bool] | None = None, blowup: float = 1e6):
        """Integrate over ``times``; returns (kept times, kept states) in the lab frame.

        ``monitor(s, w)`` returning True stops the run early.  The run fails
        once max |w| exceeds ``blowup`` times max(1, max |w0|); tiny data may
        grow by many orders of magnitude legitimately.
        """
        w = np.array(w0, complex)
        w[:, -1] = 0.0
        scale = max(float(np.max(np.abs(w))), 1.0)
        kept_t, kept = [times[0]], [w.copy()]
        for i in range(1, len(times)):
            w = self.step(w, times[i - 1], times[i])
            if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > blowup * scale:
                raise NumericalFailure(f"perturbation diverged at s={times[i]:.4g}")
            lab = self.to_lab(w, times[i] - times[0])
            if keep is None or keep(i, times[i]) or i == len(times) - 1:
                kept_t.append(times[i])
                kept.append(lab)
            if monitor is not None and monitor(times[i], lab):
                if kept_t[-1] != times[i]:
                    kept_t.append(times[i])
                    kept.append(lab)
                break
        return np.array(kept_t), np.array(kept)

    def to_lab(self, w: np.ndarray, elapsed: float) -> np.ndarray:
        if not self.rate:
            return w.copy()
        return w * np.exp(-1j * self.wavenumbers * self.rate * elapsed)[:, None]

    def to_rotating(self, w: np.ndarray, elapsed: float) -> np.ndarray:
        if not self.rate:
            return w.copy()
        return w * np.exp(1j * self.wavenumbers * self.rate * elapsed)[:, None]


class ModePropagator:
    """Linear single-mode map over a fixed time grid, with its exact adjoint.

    The adjoint is taken in the weighted inner product sum q a conj(b),
    q the radial quadrature weights, so <S x, y> = <x, S* y> to rounding.
    Factorizations are cached for repeated forward/adjoint sweeps.
    """

    def __init__(self, grid: RadialGrid, m: int, alpha: float, background: BackgroundFn, times: np.ndarray):
        self.block = ModeBlocks(grid, m, alpha)
        self.times = np.asarray(times, float)
        self.q = grid.weights[: grid.n - 1]
        self._coefs = [background(s) for s in self.times]
        self._lus = [self.block.implicit_lu(self._coefs[i + 1], 0.0, self.times[i + 1] - self.times[i])
                     for i in range(len(self.times) - 1)]

    @property
    def n(self) -> int:
        return self.block.n

    def forward(self, x: np.ndarray, keep_all: bool = False):
        b = self.block
        x = np.asarray(x, complex)
        path = [x]
        for i, lu in enumerate(self._lus):
            h = self.times[i + 1] - self.times[i]
            x = b.solve(lu, x + 0.5 * h * b.explicit(x, self._coefs[i], 0.0))
            if keep_all:
                path.append(x)
        return np.array(path) if keep_all else x

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """Q^{-1} S^H Q y."""
        b = self.block
        z = self.q * np.asarray(y, complex)
        for i in range(len(self._lus) - 1, -1, -1):
            h = self.times[i + 1] - self.times[i]
            c = self._coefs[i]
            g = b.solve_adjoint(self._lus[i], z)
            out = g + 0.5 * h * (b.local(c, 0.0).conj().T @ g)
            if b.m:
                out = out + 0.5 * h * b.psi_adjoint(np.conj(b.coupling(c)) * g)
            z = out
        return z / self.q

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(np.sum(self.q * a * np.conj(b)))
