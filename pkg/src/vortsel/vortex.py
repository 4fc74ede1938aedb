"""Radial vortex profiles, cutoffs and the self-similar force.

A profile is described by its angular velocity Omega(r); swirl V = r Omega
and vorticity W = r Omega' + 2 Omega follow.  Shapes expose exact
derivatives of Omega up to fourth order, which is what the truncation and
the force need.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb, factorial
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial

from .grid import GridError, RadialGrid

# C^4 smoothstep on [0, 1]
_STEP = Polynomial([0, 0, 0, 0, 0, 126, -420, 540, -315, 70])


class ProfileError(ValueError):
    pass


def smoothstep(u: np.ndarray, k: int = 0) -> np.ndarray:
    """k-th derivative of the C^4 step, 0 below 0 and 1 above 1."""
    u = np.asarray(u, float)
    inside = (u > 0) & (u < 1)
    out = np.zeros_like(u)
    # clip: polynomial rounding overshoots 1 just below u = 1
    out[inside] = _STEP.deriv(k)(u[inside]) if k else np.clip(_STEP(u[inside]), 0.0, 1.0)
    if k == 0:
        out[u >= 1] = 1.0
    return out


def cutoff(s: np.ndarray, k: int = 0) -> np.ndarray:
    """chi(s) = 1 on [0,1], 0 on [2, inf), C^4; k-th derivative in s."""
    v = smoothstep(np.asarray(s, float) - 1.0, k)
    return (1.0 - v) if k == 0 else -v


class Shape:
    """Base class: ``omega(r, k)`` is the k-th derivative of Omega."""

    support: float = np.inf
    descriptor: dict = {}

    def omega(self, r: np.ndarray, k: int = 0) -> np.ndarray:
        raise NotImplementedError

    def vorticity(self, r: np.ndarray, k: int = 0) -> np.ndarray:
        """k-th derivative of W = r Omega' + 2 Omega, k <= 3."""
        r = np.asarray(r, float)
        return r * self.omega(r, k + 1) + (k + 2) * self.omega(r, k)


class ZeroShape(Shape):
    support = 0.0
    descriptor = {"family": "zero"}

    def omega(self, r, k=0):
        return np.zeros_like(np.asarray(r, float))


class PiecewisePolyShape(Shape):
    """W piecewise polynomial on breakpoints; Omega integrated exactly.

    On each segment Omega = (C + Q(r)) / r^2 with Q' = r W.  The first
    segment starts at 0, where C = 0 and the quotient is a polynomial.
    """

    def __init__(self, breaks: list[float], pieces: list[Polynomial], descriptor: dict):
        # pieces carry their own domain [b_i, b_{i+1}] to avoid cancellation
        self.breaks = np.asarray(breaks, float)
        self.descriptor = descriptor
        self.w_pieces = pieces
        if pieces[0].degree() > 0:
            raise ProfileError("the core piece must be constant")
        self.core_level = float(pieces[0].coef[0])
        self.q_pieces = []
        acc = 0.0
        for i, p in enumerate(pieces):
            rid = Polynomial.identity(domain=p.domain, window=p.window)
            q = (rid * p).integ(lbnd=self.breaks[i])
            self.q_pieces.append((acc, q))
            acc += q(self.breaks[i + 1])
        self.circulation = 2 * np.pi * acc
        nz = [i for i, p in enumerate(pieces) if np.any(np.abs(p.coef) > 0)]
        self.support = float(self.breaks[nz[-1] + 1]) if nz else 0.0
        self.tail = acc

    def _segment(self, r):
        return np.clip(np.searchsorted(self.breaks, r, side="right") - 1, 0, len(self.w_pieces))

    def omega(self, r, k=0):
        r = np.asarray(r, float)
        seg = self._segment(r)
        out = np.zeros_like(r)
        for i in range(len(self.w_pieces) + 1):
            sel = seg == i
            if not np.any(sel):
                continue
            rs = r[sel]
            if i == 0:
                out[sel] = 0.5 * self.core_level if k == 0 else 0.0
                continue
            if i == len(self.w_pieces):
                c, q = self.tail, Polynomial([0.0])
            else:
                c, q = self.q_pieces[i]
            num = q + c
            tot = np.zeros_like(rs)
            for j in range(k + 1):
                nj = num.deriv(j)(rs) if j else num(rs)
                n = k - j
                tot += comb(k, j) * nj * (-1) ** n * factorial(n + 1) * rs ** (-2.0 - n)
            out[sel] = tot
        return out


class GaussianShape(Shape):
    """W = sum_k A_k exp(-r^2 / s_k^2)."""

    def __init__(self, amps: list[float], widths: list[float], descriptor: dict):
        self.amps = np.asarray(amps, float)
        self.widths = np.asarray(widths, float)
        self.descriptor = descriptor
        self.circulation = float(np.pi * np.sum(self.amps * self.widths ** 2))
        self._series_r = 0.5 * float(self.widths.min())
        # Omega = sum_n c_n r^{2n} near the origin
        coeffs = np.zeros(2 * 40 + 1)
        for a, s in zip(self.amps, self.widths):
            for n in range(40):
                coeffs[2 * n] += a * (-1) ** n / (s ** (2 * n) * factorial(n) * (2 * n + 2))
        self._series = Polynomial(coeffs)

    def _w(self, r, k):
        out = np.zeros_like(r)
        for a, s in zip(self.amps, self.widths):
            x = r / s
            # derivatives of exp(-x^2) via Hermite polynomials
            h = np.polynomial.hermite.Hermite.basis(k)(x)
            out += a * (-1) ** k * h * np.exp(-x * x) / s ** k
        return out

    def omega(self, r, k=0):
        r = np.asarray(r, float)
        out = np.empty_like(r)
        near = r < self._series_r
        out[near] = self._series.deriv(k)(r[near]) if k else self._series(r[near])
        rf = r[~near]
        # closed form for Omega, then W = r Omega' + 2 Omega recursively
        om = np.zeros_like(rf)
        for a, s in zip(self.amps, self.widths):
            om += a * s * s * (-np.expm1(-(rf / s) ** 2)) / (2 * rf * rf)
        ders = [om]
        for j in range(1, k + 1):
            ders.append((self._w(rf, j - 1) - (j + 1) * ders[j - 1]) / rf)
        out[~near] = ders[k]
        return out


class TruncatedShape(Shape):
    """Omega(r) chi(r / R)."""

    def __init__(self, base: Shape, radius: float):
        self.base = base
        self.radius = float(radius)
        self.support = min(base.support, 2 * self.radius)
        self.descriptor = {**base.descriptor, "truncation_radius": self.radius}

    def omega(self, r, k=0):
        r = np.asarray(r, float)
        s = r / self.radius
        tot = np.zeros_like(r)
        for j in range(k + 1):
            tot += comb(k, j) * self.base.omega(r, j) * cutoff(s, k - j) / self.radius ** (k - j)
        return tot


class ScaledShape(Shape):
    def __init__(self, base: Shape, amplitude: float):
        self.base = base
        self.amplitude = float(amplitude)
        self.support = base.support
        self.descriptor = {**base.descriptor, "amplitude": self.amplitude}

    def omega(self, r, k=0):
        return self.amplitude * self.base.omega(r, k)


# ---------------------------------------------------------------------------


def two_level_shape(r1: float = 1.0, r2: float = 1.5, width: float = 0.3,
                    inner: float = 1.0, outer: float | None = None) -> PiecewisePolyShape:
    """Smoothed two-level vorticity: ``inner`` for r < r1, ``outer`` on (r1, r2).

    Each jump is a C^4 ramp of the given width centred at the nominal radius.
    ``outer=None`` picks the level that makes the total circulation vanish.
    """
    if not (0 < width and r1 - width / 2 > 0 and r1 + width / 2 < r2 - width / 2):
        raise ProfileError("ramps must be disjoint and away from the origin")
    a0, a1 = r1 - width / 2, r1 + width / 2
    b0, b1 = r2 - width / 2, r2 + width / 2
    breaks = [0.0, a0, a1, b0, b1, b1 + 1.0]

    def local(coef, i):
        return Polynomial(np.atleast_1d(coef), domain=[breaks[i], breaks[i + 1]], window=[0.0, 1.0])

    def pieces(lv_in, lv_out):
        return [
            local(lv_in, 0),
            local((lv_in + (lv_out - lv_in) * _STEP).coef, 1),
            local(lv_out, 2),
            local((lv_out - lv_out * _STEP).coef, 3),
            local(0.0, 4),
        ]

    if outer is None:
        core = PiecewisePolyShape(breaks, pieces(inner, 0.0), {})
        ring = PiecewisePolyShape(breaks, pieces(0.0, 1.0), {})
        outer = -core.tail / ring.tail
    desc = {"family": "two_level", "r1": r1, "r2": r2, "width": width, "inner": inner, "outer": float(outer)}
    return PiecewisePolyShape(breaks, pieces(inner, float(outer)), desc)


def gaussian_shape(amps=(1.0, -0.5), widths=(1.0, 1.4142135623730951)) -> GaussianShape:
    return GaussianShape(list(amps), list(widths), {"family": "gaussian", "amps": list(amps), "widths": list(widths)})


@dataclass(frozen=True, eq=False)
class VortexProfile:
    """alpha plus a shape; sample with :meth:`on`."""

    alpha: float
    shape: Shape
    meta: dict = field(default_factory=dict)

    @property
    def support(self) -> float:
        return self.shape.support

    def omega(self, r, k=0):
        return self.shape.omega(r, k)

    def swirl(self, r):
        r = np.asarray(r, float)
        return r * self.shape.omega(r)

    def vorticity(self, r, k=0):
        return self.shape.vorticity(r, k)

    def on(self, grid: RadialGrid) -> dict[str, np.ndarray]:
        r = grid.r
        return {"r": r, "Omega": self.omega(r), "V": self.swirl(r), "W": self.vorticity(r),
                "dW": self.vorticity(r, 1), "dOmega": self.omega(r, 1)}

    def with_alpha(self, alpha: float) -> "VortexProfile":
        """Same shape under another scaling exponent; the heat study allows alpha in (0, 2)."""
        if not (0 < alpha < 2):
            raise ProfileError("alpha must lie in (0, 2)")
        return VortexProfile(float(alpha), self.shape, dict(self.meta))

    def decay_bound(self, r_max: float = 1e3, n: int = 4000) -> float:
        r = np.geomspace(1e-3, r_max, n)
        val = r ** 2 * np.abs(self.omega(r)) + r ** 3 * np.abs(self.omega(r, 1)) + r ** 4 * np.abs(self.omega(r, 2))
        return float(np.max(val))


def build_vortex(family: dict | str, alpha: float) -> VortexProfile:
    """Profile from a descriptor such as ``{"family": "two_level", "amplitude": 40}``."""
    if not (0 < alpha < 1):
        raise ProfileError("alpha must lie in (0, 1)")
    desc = {"family": family} if isinstance(family, str) else dict(family)
    fam = desc.pop("family", "two_level")
    amp = float(desc.pop("amplitude", 1.0))
    if not np.isfinite(amp):
        raise ProfileError("non-finite amplitude")
    if fam == "zero":
        shape: Shape = ZeroShape()
    elif fam == "two_level":
        shape = two_level_shape(**desc)
    elif fam == "gaussian":
        shape = gaussian_shape(**desc)
    else:
        raise ProfileError(f"unknown family {fam!r}")
    if amp != 1.0:
        shape = ScaledShape(shape, amp)
    prof = VortexProfile(alpha, shape, {"family": fam, "amplitude": amp, **desc})
    bound = prof.decay_bound()
    if not np.isfinite(bound) or bound > 1e12:
        raise ProfileError(f"decay condition fails (sup = {bound:.3g})")
    if abs(prof.omega(np.array([1e-6]), 1)[0]) > 1e-6 * max(1.0, abs(amp)):
        raise ProfileError("Omega'(0) must vanish")
    return prof


def truncate_vortex(profile: VortexProfile, radius: float, grid: RadialGrid | None = None) -> VortexProfile:
    """Omega(r) chi(r/R) x^perp; identity when R exceeds the support."""
    if grid is not None and radius < np.min(np.diff(np.concatenate([[0.0], grid.r]))):
        raise GridError("truncation radius below one grid cell")
    if not radius > 0:
        raise GridError("truncation radius must be positive")
    if radius >= profile.support:
        return profile
    return VortexProfile(profile.alpha, TruncatedShape(profile.shape, radius), {**profile.meta, "R": radius})


@dataclass(frozen=True, eq=False)
class SimilarityForce:
    """F = F_theta(r) e_theta and its curl G."""

    alpha: float
    profile: VortexProfile

    def f_theta(self, r):
        r = np.asarray(r, float)
        a = self.alpha
        v = self.profile.swirl(r)
        dv = self.profile.omega(r) + r * self.profile.omega(r, 1)
        return (1.0 / a - 1.0) * v - r / a * dv

    def g(self, r, k: int = 0):
        """k-th radial derivative of G = -(W + (r/alpha) W')."""
        r = np.asarray(r, float)
        a = self.alpha
        p = self.profile
        return -((1.0 + k / a) * p.vorticity(r, k) + r / a * p.vorticity(r, k + 1))

    def physical_g(self, r, t: float):
        """g(x, t) = t^{-2} G(x / t^{1/alpha})."""
        return t ** -2.0 * self.g(np.asarray(r) / t ** (1.0 / self.alpha))

    def physical_f(self, r, t: float):
        return t ** (1.0 / self.alpha - 2.0) * self.f_theta(np.asarray(r) / t ** (1.0 / self.alpha))


def similarity_force(profile: VortexProfile) -> SimilarityForce:
    return SimilarityForce(profile.alpha, profile)


def write_profile_csv(profile: VortexProfile, grid: RadialGrid, path: str | Path) -> Path:
    """CSV (r, Omega, V, W) preceded by '#'-prefixed JSON header lines."""
    path = Path(path)
    s = profile.on(grid)
    header = {"alpha": profile.alpha, **profile.meta}
    lines = ["# " + json.dumps(header, sort_keys=True), "r,Omega,V,W"]
    for row in zip(s["r"], s["Omega"], s["V"], s["W"]):
        lines.append(",".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_profile_csv(path: str | Path) -> tuple[dict, np.ndarray]:
    text = Path(path).read_text().splitlines()
    header = json.loads(text[0][2:])
    data = np.loadtxt(text[2:], delimiter=",", ndmin=2)
    return header, data
