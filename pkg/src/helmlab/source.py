"""Concentrating sources S_h(x) = h^((1-n-d)/2) int_Gamma A(z) S((x - z)/h) dsigma(z).

Fourier convention: S_hat(xi) = int exp(-i x.xi) S(x) dx.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .geometry import Submanifold, composite_gauss_legendre, second_fundamental_norm
from .grid import GridField, GridSpec

__all__ = [
    "Profile",
    "GaussianProfile",
    "BumpProfile",
    "Amplitude",
    "smoothstep_cutoff",
    "truncate_amplitude",
    "assemble_source",
    "weighted_norm",
    "source_norm_scaling",
    "ScalingFit",
    "decay_integral",
    "local_decay_check",
]


# ---------------------------------------------------------------------------
# profiles

class Profile:
    """Schwartz profile S on R^n with its Fourier transform."""

    n: int
    name = "profile"
    # |S(y)| <= 1e-16 * max|S| once |y| exceeds this
    radius: float = np.inf

    def value(self, y) -> np.ndarray:
        raise NotImplementedError

    def fourier(self, xi) -> np.ndarray:
        raise NotImplementedError

    def axis_factors(self):
        """Per-axis 1-d factors when S(y) = prod_i f_i(y_i), else None."""
        return None


@dataclass
class GaussianProfile(Profile):
    """S(y) = exp(-|y|^2 / 2), S_hat(xi) = (2 pi)^(n/2) exp(-|xi|^2 / 2)."""

    n: int = 2
    name = "gaussian"

    def __post_init__(self):
        self.radius = math.sqrt(2 * math.log(1e16))

    def value(self, y):
        return np.exp(-0.5 * np.sum(np.asarray(y, dtype=float) ** 2, axis=-1))

    def fourier(self, xi):
        s = np.sum(np.asarray(xi, dtype=float) ** 2, axis=-1)
        return (2 * np.pi) ** (self.n / 2) * np.exp(-0.5 * s)

    def axis_factors(self):
        return [lambda t: np.exp(-0.5 * t**2)] * self.n


@dataclass
class BumpProfile(Profile):
    """Compactly supported radial bump exp(1 - 1/(1 - |y|^2/a^2)) on |y| < a.

    Its Fourier transform is the radial Hankel transform, evaluated by adaptive
    quadrature (no closed form exists).
    """

    n: int = 2
    a: float = 3.0
    name = "bump"

    def __post_init__(self):
        self.radius = float(self.a)

    def _f(self, r):
        s = np.clip(1 - (np.asarray(r) / self.a) ** 2, 0.0, None)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(s > 0, np.exp(1 - 1 / np.where(s > 0, s, 1.0)), 0.0)

    def value(self, y):
        return self._f(np.linalg.norm(np.asarray(y, dtype=float), axis=-1))

    def fourier(self, xi):
        k = np.linalg.norm(np.asarray(xi, dtype=float), axis=-1)
        nu = self.n / 2 - 1
        out = np.empty(k.shape)
        for idx, kk in np.ndenumerate(k):
            if kk == 0:
                val = integrate.quad(lambda r: self._f(r) * r ** (self.n - 1), 0, self.a, limit=200)[0]
                out[idx] = val * 2 * np.pi ** (self.n / 2) / special.gamma(self.n / 2)
            else:
                val = integrate.quad(lambda r: self._f(r) * special.jv(nu, kk * r) * r ** (self.n / 2),
                                     0, self.a, limit=400)[0]
                out[idx] = (2 * np.pi) ** (self.n / 2) * kk ** (-nu) * val
        return out


# ---------------------------------------------------------------------------
# amplitudes

def smoothstep_cutoff(s):
    """C^2 radial cutoff: 1 on [0, 1], 0 on [2, inf), quintic smoothstep in between."""
    s = np.asarray(s, dtype=float)
    t = np.clip(s - 1.0, 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t**2)


@dataclass
class Amplitude:
    """Amplitude A on Gamma, given as a function of the ambient point z (evaluated through the chart)."""

    func: Callable[[np.ndarray], np.ndarray]
    delta: float = 1.0
    name: str = "A"
    # (R, Theta) when this amplitude is a truncation A(z) Theta(|z|/R)
    truncation: tuple | None = None
    base: "Amplitude | None" = None
    support_radius: float = np.inf

    def __post_init__(self):
        if self.delta <= 0.5:
            raise ValueError("amplitude decay weight delta must exceed 1/2")

    def __call__(self, z):
        return self.value(z)

    def value(self, z):
        return np.asarray(self.func(np.asarray(z, dtype=float)), dtype=float) * np.ones(np.shape(z)[:-1])

    def on_chart(self, gamma: Submanifold, u):
        return self.value(gamma.z(u))

    def chart_gradient_norm(self, gamma: Submanifold, u, step: float = 1e-6) -> np.ndarray:
        """|d_z A| along Gamma, from chart differences and the induced metric."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if gamma.d == 0:
            return np.zeros(u.shape[0])
        g = np.zeros(u.shape)
        for i in range(gamma.d):
            e = np.zeros(gamma.d)
            e[i] = step
            g[:, i] = (self.on_chart(gamma, u + e) - self.on_chart(gamma, u - e)) / (2 * step)
        J = gamma.jac(u)
        G = np.swapaxes(J, -1, -2) @ J
        return np.sqrt(np.maximum(np.einsum("mi,mi->m", g, np.linalg.solve(G, g[..., None])[..., 0]), 0))

    @classmethod
    def constant(cls, c: float = 1.0, delta: float = 1.0) -> "Amplitude":
        return cls(lambda z: np.full(np.shape(z)[:-1], float(c)), delta, name=f"constant({c:g})")

    @classmethod
    def gaussian(cls, width: float, center=None, delta: float = 1.0, amplitude: float = 1.0) -> "Amplitude":
        """amplitude * exp(-|z - center|^2 / (2 width^2))."""
        c0 = None if center is None else np.asarray(center, dtype=float)

        def f(z):
            zc = z if c0 is None else z - c0
            return amplitude * np.exp(-0.5 * np.sum(zc**2, axis=-1) / width**2)

        return cls(f, delta, name=f"gaussian(width={width:g})")


def truncate_amplitude(A: Amplitude, R: float, Theta: Callable | None = None) -> Amplitude:
    """A_R(z) = A(z) Theta(|z| / R); equals A on |z| <= R and vanishes for |z| >= 2R."""
    if R <= 0:
        raise ValueError("truncation radius must be positive")
    Theta = Theta or smoothstep_cutoff

    def f(z):
        return A.value(z) * Theta(np.linalg.norm(z, axis=-1) / R)

    return Amplitude(f, A.delta, name=f"{A.name}_R{R:g}", truncation=(R, Theta), base=A,
                     support_radius=min(2 * R, A.support_radius))


# ---------------------------------------------------------------------------
# assembly

def _chart_nodes(gamma: Submanifold, h: float, nodes_per_h: int, A: Amplitude):
    """Composite Gauss-Legendre nodes with panels no longer than h in physical length."""
    lo, hi = gamma.lower.copy(), gamma.upper.copy()
    # clip unbounded chart boxes to the amplitude's support when it is known
    probe = np.stack(np.meshgrid(*[np.linspace(a, b, 65) for a, b in zip(lo, hi)], indexing="ij"),
                     axis=-1).reshape(-1, gamma.d)
    J = gamma.jac(probe)
    speed = np.linalg.norm(J, axis=-2).max(axis=0)
    rules = []
    for i in range(gamma.d):
        panels = max(1, int(math.ceil((hi[i] - lo[i]) * speed[i] / h)))
        rules.append(composite_gauss_legendre(lo[i], hi[i], panels, nodes_per_h))
    U = np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), axis=-1).reshape(-1, gamma.d)
    W = np.ones(1)
    for r in rules:
        W = np.multiply.outer(W, r[1])
    return U, W.reshape(-1)


def _splat(grid: GridSpec, centers: np.ndarray, coeffs: np.ndarray, S: Profile, h: float,
           chunk: int = 256) -> np.ndarray:
    """sum_j coeffs[j] * S((x - centers[j]) / h) on the grid, each term restricted to |x - z_j| <= radius*h."""
    n = grid.ndim
    out = np.zeros(int(np.prod(grid.shape)))
    origin = np.asarray(grid.origin)
    spacing = np.asarray(grid.spacing)
    shape = np.asarray(grid.shape)
    rad = S.radius * h
    half = np.ceil(rad / spacing).astype(int)
    offsets = [np.arange(-m, m + 1) for m in half]
    factors = S.axis_factors()
    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(n)])
    for s0 in range(0, centers.shape[0], chunk):
        zc = centers[s0:s0 + chunk]
        cc = coeffs[s0:s0 + chunk]
        base = np.rint((zc - origin) / spacing).astype(int)
        idx = [base[:, i, None] + offsets[i][None] for i in range(n)]  # (M, P_i)
        valid = [(ix >= 0) & (ix < shape[i]) for i, ix in enumerate(idx)]
        coords = [origin[i] + idx[i] * spacing[i] for i in range(n)]
        if factors is not None:
            vals = cc.reshape((-1,) + (1,) * n).astype(float)
            for i in range(n):
                f = factors[i]((coords[i] - zc[:, i, None]) / h) * valid[i]
                vals = vals * f.reshape((f.shape[0],) + (1,) * i + (f.shape[1],) + (1,) * (n - 1 - i))
        else:
            mesh = np.stack(np.broadcast_arrays(*[
                ((coords[i] - zc[:, i, None]) / h).reshape((zc.shape[0],) + (1,) * i + (-1,) + (1,) * (n - 1 - i))
                for i in range(n)]), axis=-1)
            mask = np.ones(mesh.shape[:-1], dtype=bool)
            for i in range(n):
                mask &= valid[i].reshape((zc.shape[0],) + (1,) * i + (-1,) + (1,) * (n - 1 - i))
            vals = cc.reshape((-1,) + (1,) * n) * S.value(mesh) * mask
        flat = np.zeros(vals.shape, dtype=np.int64)
        for i in range(n):
            ix = np.clip(idx[i], 0, shape[i] - 1) * strides[i]
            flat = flat + ix.reshape((ix.shape[0],) + (1,) * i + (-1,) + (1,) * (n - 1 - i))
        out += np.bincount(flat.ravel(), weights=vals.ravel(), minlength=out.size)
    return out.reshape(grid.shape)


def assemble_source(gamma: Submanifold, A: Amplitude, S: Profile, h: float, grid: GridSpec,
                    nodes_per_h: int = 8) -> GridField:
    """Sample S_h on the grid; exact for a point, chart quadrature otherwise."""
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    grid.check_resolves(h)
    n, d = gamma.n, gamma.d
    if grid.ndim != n:
        raise ValueError("grid dimension does not match the ambient dimension of Gamma")
    scale = h ** ((1 - n - d) / 2)
    if d == 0:
        z0 = gamma.z(np.zeros((1, 0)))[0]
        a0 = float(A.value(z0[None])[0])
        data = scale * a0 * S.value((grid.coords() - z0) / h)
        return GridField(grid, data.astype(complex), h, {"kind": "source", "d": 0})
    U, W = _chart_nodes(gamma, h, nodes_per_h, A)
    Z = gamma.z(U)
    coeff = W * gamma.area_element(U) * A.value(Z)
    keep = np.abs(coeff) > 1e-300
    data = scale * _splat(grid, Z[keep], coeff[keep], S, h)
    return GridField(grid, data.astype(complex), h, {"kind": "source", "d": d, "nodes": int(keep.sum())})


# ---------------------------------------------------------------------------
# norms and validators

def weighted_norm(field: GridField, delta: float = 0.0) -> float:
    """(int <x>^(2 delta) |u|^2 dx)^(1/2) by the grid rectangle rule."""
    if delta == 0:
        return field.norm()
    x = field.grid.coords()
    w = (1 + np.sum(x**2, axis=-1)) ** delta
    return float(np.sqrt(np.sum(w * np.abs(field.data) ** 2) * field.grid.cell_volume))


@dataclass
class ScalingFit:
    exponent: float | None
    h: np.ndarray
    norms: np.ndarray
    note: str = ""


def source_norm_scaling(make_source: Callable[[float], GridField], h_list, delta: float = 1.0) -> ScalingFit:
    """Least-squares slope of log ||S_h||_{L^{2,delta}} against log h."""
    h = np.asarray(h_list, dtype=float)
    if h.size < 4:
        raise ValueError("need at least four h values")
    ratios = h[1:] / h[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("h values must form a geometric sequence")
    norms = np.array([weighted_norm(make_source(float(hh)), delta) for hh in h])
    if np.all(norms == 0):
        return ScalingFit(None, h, norms, "identically zero source; fit skipped")
    slope = np.polyfit(np.log(h), np.log(norms), 1)[0]
    return ScalingFit(float(slope), h, norms)


def decay_integral(gamma: Submanifold, A: Amplitude, panels: int = 64, order: int = 8) -> float:
    """int_Gamma <z>^delta (|A| + |dA| + |A| ||II||) dsigma over the chart box."""
    if gamma.d == 0:
        z = gamma.z(np.zeros((1, 0)))
        return float(np.sqrt(1 + np.sum(z**2)) ** A.delta * abs(A.value(z)[0]))
    rules = [composite_gauss_legendre(lo, hi, panels, order) for lo, hi in zip(gamma.lower, gamma.upper)]
    U = np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), axis=-1).reshape(-1, gamma.d)
    W = np.ones(1)
    for r in rules:
        W = np.multiply.outer(W, r[1])
    W = W.reshape(-1)
    Z = gamma.z(U)
    a = np.abs(A.value(Z))
    da = A.chart_gradient_norm(gamma, U)
    if gamma.kind == "affine":
        II = np.zeros(U.shape[0])
    else:
        II = np.array([second_fundamental_norm(gamma, u) for u in U])
    weight = (1 + np.sum(Z**2, -1)) ** (A.delta / 2)
    return float(np.sum(W * gamma.area_element(U) * weight * (a + da + a * II)))


def local_decay_check(gamma: Submanifold, A: Amplitude, samples: int = 20, seed: int = 0,
                      order: int = 16) -> dict:
    """Fit c in: local integral over B(x, r) of the decay integrand <= c r^d (report-only)."""
    rng = np.random.default_rng(seed)
    if gamma.d == 0:
        return {"c": decay_integral(gamma, A), "samples": 1}
    ratios = []
    for _ in range(samples):
        u0 = rng.uniform(gamma.lower, gamma.upper)
        x = gamma.z(u0[None])[0]
        r = rng.uniform(0.05, 1.0)
        rules = [composite_gauss_legendre(lo, hi, 32, order) for lo, hi in zip(gamma.lower, gamma.upper)]
        U = np.stack(np.meshgrid(*[q[0] for q in rules], indexing="ij"), axis=-1).reshape(-1, gamma.d)
        W = np.ones(1)
        for q in rules:
            W = np.multiply.outer(W, q[1])
        W = W.reshape(-1)
        Z = gamma.z(U)
        inside = np.linalg.norm(Z - x, axis=-1) <= r
        a = np.abs(A.value(Z[inside]))
        da = A.chart_gradient_norm(gamma, U[inside])
        val = np.sum(W[inside] * gamma.area_element(U[inside]) * (1 + np.sum(Z[inside] ** 2, -1)) ** (A.delta / 2)
                     * (a + da))
        ratios.append(val / r**gamma.d)
    return {"c": float(max(ratios)), "samples": samples}
