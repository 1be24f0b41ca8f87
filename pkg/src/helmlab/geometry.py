"""Source submanifolds: charts, tangent/normal splitting, second fundamental form,
and quadrature on the energy-shell normal bundle.

Points of a manifold are always addressed through chart coordinates ``u``;
no chart inversion is attempted.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.stats import norm as normal_dist
from scipy.stats import qmc

__all__ = [
    "DegenerateChartError",
    "EmptyFiberError",
    "Submanifold",
    "NormalEnergyPoint",
    "BundleSample",
    "QuadratureBudget",
    "point",
    "affine",
    "sphere",
    "general_chart",
    "tangent_projection",
    "second_fundamental_form",
    "second_fundamental_norm",
    "sample_energy_normal_bundle",
    "check_nonincoming",
    "NonIncomingReport",
    "composite_gauss_legendre",
    "sphere_rule",
    "sphere_area",
]


class DegenerateChartError(ValueError):
    pass


class EmptyFiberError(ValueError):
    pass


@dataclass
class Submanifold:
    """Chart-parametrised submanifold z(u), u in the box [lower, upper] of R^d."""

    n: int
    d: int
    chart: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    kind: str = "general-chart"
    jacobian: Callable | None = None
    hessian: Callable | None = None
    fd_step: float = 1e-5
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.d <= self.n - 1:
            raise ValueError(f"manifold dimension {self.d} not in [0, {self.n - 1}]")
        self.lower = np.asarray(self.lower, dtype=float).reshape(self.d)
        self.upper = np.asarray(self.upper, dtype=float).reshape(self.d)

    def z(self, u) -> np.ndarray:
        return np.asarray(self.chart(np.asarray(u, dtype=float)), dtype=float)

    def jac(self, u) -> np.ndarray:
        """dz/du with shape (..., n, d)."""
        u = np.asarray(u, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(u), dtype=float)
        out = np.zeros(u.shape[:-1] + (self.n, self.d))
        for i in range(self.d):
            step = self.fd_step * np.maximum(1.0, np.abs(u[..., i]))
            e = np.zeros(self.d)
            e[i] = 1.0
            du = step[..., None] * e
            out[..., :, i] = (self.z(u + du) - self.z(u - du)) / (2 * step[..., None])
        return out

    def hess(self, u) -> np.ndarray:
        """d^2 z / du_i du_j with shape (..., n, d, d)."""
        u = np.asarray(u, dtype=float)
        if self.hessian is not None:
            return np.asarray(self.hessian(u), dtype=float)
        # second differences need a larger step than first ones
        step = 1e-4
        out = np.zeros(u.shape[:-1] + (self.n, self.d, self.d))
        z0 = self.z(u)
        for i in range(self.d):
            ei = np.zeros(self.d)
            ei[i] = step
            out[..., :, i, i] = (self.z(u + ei) - 2 * z0 + self.z(u - ei)) / step**2
            for j in range(i + 1, self.d):
                ej = np.zeros(self.d)
                ej[j] = step
                v = (self.z(u + ei + ej) - self.z(u + ei - ej)
                     - self.z(u - ei + ej) + self.z(u - ei - ej)) / (4 * step**2)
                out[..., :, i, j] = v
                out[..., :, j, i] = v
        return out

    def area_element(self, u) -> np.ndarray:
        if self.d == 0:
            return np.ones(np.shape(u)[:-1])
        J = self.jac(u)
        return np.sqrt(np.linalg.det(np.swapaxes(J, -1, -2) @ J))


def point(x0) -> Submanifold:
    x0 = np.asarray(x0, dtype=float)
    n = x0.size

    def chart(u):
        return np.broadcast_to(x0, np.shape(u)[:-1] + (n,)).copy()

    return Submanifold(n, 0, chart, np.zeros(0), np.zeros(0), kind="point",
                       jacobian=lambda u: np.zeros(np.shape(u)[:-1] + (n, 0)),
                       hessian=lambda u: np.zeros(np.shape(u)[:-1] + (n, 0, 0)),
                       params={"x0": x0.tolist()})


def affine(origin, directions, lower, upper) -> Submanifold:
    """Flat piece z(u) = origin + sum u_i directions[i] (directions need not be orthonormal)."""
    origin = np.asarray(origin, dtype=float)
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    n, d = origin.size, D.shape[0]

    def chart(u):
        return origin + np.asarray(u) @ D

    def jac(u):
        return np.broadcast_to(D.T, np.shape(u)[:-1] + (n, d)).copy()

    def hess(u):
        return np.zeros(np.shape(u)[:-1] + (n, d, d))

    return Submanifold(n, d, chart, lower, upper, kind="affine", jacobian=jac, hessian=hess,
                       params={"origin": origin.tolist(), "directions": D.tolist()})


def sphere(center, radius: float, n: int | None = None) -> Submanifold:
    """Round sphere of dimension n-1 (circle for n = 2) in angular coordinates."""
    center = np.asarray(center, dtype=float)
    n = center.size if n is None else n
    R = float(radius)
    if n == 2:
        def chart(u):
            t = np.asarray(u)[..., 0]
            return center + R * np.stack([np.cos(t), np.sin(t)], axis=-1)

        def jac(u):
            t = np.asarray(u)[..., 0]
            return (R * np.stack([-np.sin(t), np.cos(t)], axis=-1))[..., None]

        def hess(u):
            t = np.asarray(u)[..., 0]
            return (-R * np.stack([np.cos(t), np.sin(t)], axis=-1))[..., None, None]

        return Submanifold(2, 1, chart, [0.0], [2 * np.pi], kind="sphere-like",
                           jacobian=jac, hessian=hess, params={"center": center.tolist(), "radius": R})
    if n == 3:
        def chart(u):
            u = np.asarray(u)
            th, ph = u[..., 0], u[..., 1]
            return center + R * np.stack(
                [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)

        def jac(u):
            u = np.asarray(u)
            th, ph = u[..., 0], u[..., 1]
            dth = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=-1)
            dph = np.stack([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.zeros_like(th)], axis=-1)
            return R * np.stack([dth, dph], axis=-1)

        def hess(u):
            u = np.asarray(u)
            th, ph = u[..., 0], u[..., 1]
            z0 = np.zeros_like(th)
            tt = -np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
            tp = np.stack([-np.cos(th) * np.sin(ph), np.cos(th) * np.cos(ph), z0], axis=-1)
            pp = np.stack([-np.sin(th) * np.cos(ph), -np.sin(th) * np.sin(ph), z0], axis=-1)
            H = np.stack([np.stack([tt, tp], axis=-1), np.stack([tp, pp], axis=-1)], axis=-1)
            return R * H

        return Submanifold(3, 2, chart, [0.0, 0.0], [np.pi, 2 * np.pi], kind="sphere-like",
                           jacobian=jac, hessian=hess, params={"center": center.tolist(), "radius": R})
    raise ValueError("built-in spheres exist for n = 2 and n = 3")


def general_chart(chart, n: int, d: int, lower, upper, jacobian=None, hessian=None) -> Submanifold:
    return Submanifold(n, d, chart, lower, upper, kind="general-chart", jacobian=jacobian, hessian=hessian)


# ---------------------------------------------------------------------------
# tangent / normal algebra

def _tangent_projector(J: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthogonal projector onto span of the columns of J, shape (..., n, n)."""
    n, d = J.shape[-2], J.shape[-1]
    if d == 0:
        return np.zeros(J.shape[:-2] + (n, n))
    s = np.linalg.svd(J, compute_uv=False)
    if np.any(s[..., -1] <= rank_tol * np.maximum(s[..., 0], 1e-300)):
        raise DegenerateChartError("chart Jacobian is rank deficient")
    G = np.swapaxes(J, -1, -2) @ J
    return J @ np.linalg.solve(G, np.swapaxes(J, -1, -2))


def tangent_projection(gamma: Submanifold, u, xi):
    """Split xi into its T_z(Gamma) and N_z(Gamma) components at z = z(u)."""
    xi = np.asarray(xi, dtype=float)
    PT = _tangent_projector(gamma.jac(u))
    xi_T = np.einsum("...ij,...j->...i", PT, xi)
    return xi_T, xi - xi_T


def second_fundamental_form(gamma: Submanifold, u, X, Y, tol: float = 1e-8) -> np.ndarray:
    """II_z(X, Y): normal part of the ambient derivative of Y along X (X, Y tangent)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    u = np.asarray(u, dtype=float)
    if gamma.d == 0:
        if np.any(X) or np.any(Y):
            raise ValueError("a point has no nonzero tangent vectors")
        return np.zeros(gamma.n)
    J = gamma.jac(u)
    PT = _tangent_projector(J)
    for V, name in ((X, "X"), (Y, "Y")):
        resid = V - PT @ V
        if np.linalg.norm(resid) > tol * max(1.0, np.linalg.norm(V)):
            raise ValueError(f"{name} is not tangent to the manifold at this point")
    a = np.linalg.lstsq(J, X, rcond=None)[0]
    b = np.linalg.lstsq(J, Y, rcond=None)[0]
    H = gamma.hess(u)
    D = np.einsum("kij,i,j->k", H, a, b)
    return D - PT @ D


def second_fundamental_norm(gamma: Submanifold, u, samples: int = 181) -> float:
    """||II_z|| = sup over unit tangent X of |II(X, X)| (polarization is exact in Hilbert space)."""
    if gamma.d == 0:
        return 0.0
    u = np.asarray(u, dtype=float)
    J = gamma.jac(u)
    Q, _ = np.linalg.qr(J)
    if gamma.d == 1:
        dirs = [Q[:, 0]]
    else:
        rule, _ = sphere_rule(gamma.d - 1, samples)
        dirs = rule @ Q.T
    return max(float(np.linalg.norm(second_fundamental_form(gamma, u, v, v))) for v in dirs)


# ---------------------------------------------------------------------------
# quadrature rules

@dataclass
class QuadratureBudget:
    """Chart panels per axis, Gauss-Legendre order per panel and fiber-sphere resolution."""

    panels: int | tuple = 8
    order: int = 8
    fiber: int = 64
    seed: int = 0

    def scaled(self, factor: float) -> "QuadratureBudget":
        pan = self.panels
        if isinstance(pan, tuple):
            pan = tuple(max(1, int(round(p * factor))) for p in pan)
        else:
            pan = max(1, int(round(pan * factor)))
        return QuadratureBudget(pan, self.order, max(2, int(round(self.fiber * factor))), self.seed)


def composite_gauss_legendre(lo: float, hi: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), np.broadcast_to(weights, nodes.shape).ravel().copy()


def chart_rule(gamma: Submanifold, budget: QuadratureBudget):
    """Tensor composite Gauss-Legendre nodes (M, d) and weights (M,) on the chart box."""
    if gamma.d == 0:
        return np.zeros((1, 0)), np.ones(1)
    pan = budget.panels if isinstance(budget.panels, tuple) else (budget.panels,) * gamma.d
    rules = [composite_gauss_legendre(lo, hi, p, budget.order)
             for lo, hi, p in zip(gamma.lower, gamma.upper, pan)]
    U = np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), axis=-1).reshape(-1, gamma.d)
    W = np.ones(1)
    for r in rules:
        W = np.multiply.outer(W, r[1])
    return U, W.reshape(-1)


def sphere_area(k: int) -> float:
    """Surface area of the unit sphere S^k in R^(k+1)."""
    return 2 * math.pi ** ((k + 1) / 2) / gamma_fn((k + 1) / 2)


def sphere_rule(k: int, m: int, seed: int = 0):
    """Points (M, k+1) and weights on the unit sphere S^k."""
    if k == 0:
        return np.array([[1.0], [-1.0]]), np.ones(2)
    if k == 1:
        t = 2 * np.pi * np.arange(m) / m
        return np.stack([np.cos(t), np.sin(t)], axis=-1), np.full(m, 2 * np.pi / m)
    if k == 2:
        c, wc = np.polynomial.legendre.leggauss(m)
        mp = 2 * m
        ph = 2 * np.pi * np.arange(mp) / mp
        C, P = np.meshgrid(c, ph, indexing="ij")
        s = np.sqrt(1 - C**2)
        pts = np.stack([s * np.cos(P), s * np.sin(P), C], axis=-1).reshape(-1, 3)
        w = np.multiply.outer(wc, np.full(mp, 2 * np.pi / mp)).reshape(-1)
        return pts, w
    sob = qmc.Sobol(d=k + 1, scramble=True, seed=seed)
    m2 = 1 << int(math.ceil(math.log2(max(m, 2))))
    g = normal_dist.ppf(np.clip(sob.random(m2), 1e-12, 1 - 1e-12))
    pts = g / np.linalg.norm(g, axis=-1, keepdims=True)
    return pts, np.full(m2, sphere_area(k) / m2)


# ---------------------------------------------------------------------------
# energy-shell normal bundle

@dataclass
class NormalEnergyPoint:
    z: np.ndarray
    xi: np.ndarray
    weight: float
    u: np.ndarray | None = None


@dataclass
class BundleSample:
    """Struct-of-arrays quadrature of N_E(Gamma) with its canonical measure."""

    u: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    weight: np.ndarray
    E0: float

    def __len__(self):
        return self.weight.size

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weight))

    def points(self) -> list[NormalEnergyPoint]:
        return [NormalEnergyPoint(self.z[i], self.xi[i], float(self.weight[i]), self.u[i])
                for i in range(len(self))]

    def subset(self, mask) -> "BundleSample":
        return BundleSample(self.u[mask], self.z[mask], self.xi[mask], self.weight[mask], self.E0)

    def write_csv(self, path) -> None:
        d, n = self.u.shape[1], self.z.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"u{i}" for i in range(d)] + [f"z{i}" for i in range(n)]
                       + [f"xi{i}" for i in range(n)] + ["weight"])
            for i in range(len(self)):
                w.writerow([repr(float(v)) for v in (*self.u[i], *self.z[i], *self.xi[i], self.weight[i])])


def _normal_frame(J: np.ndarray, choice=None):
    """Smooth orthonormal frame (..., n, n-d) of the normal space.

    Fixed ambient axes ``choice`` are projected on the normal space and
    orthonormalised symmetrically, so the frame depends smoothly on J.
    """
    n, d = J.shape[-2], J.shape[-1]
    k = n - d
    PN = np.eye(n) - _tangent_projector(J) if d else np.broadcast_to(np.eye(n), J.shape[:-2] + (n, n))
    combos = list(itertools.combinations(range(n), k))
    if choice is None:
        dets = np.stack([np.linalg.det(np.swapaxes(PN[..., :, list(c)], -1, -2) @ PN[..., :, list(c)])
                         for c in combos], axis=-1)
        choice = np.argmax(dets, axis=-1)
    M = np.empty(J.shape[:-2] + (n, k))
    for ci, c in enumerate(combos):
        mask = choice == ci
        M[mask] = PN[mask][..., :, list(c)]
    G = np.swapaxes(M, -1, -2) @ M
    vals, vecs = np.linalg.eigh(G)
    inv_sqrt = vecs @ (vecs * (1 / np.sqrt(vals))[..., None, :]).swapaxes(-1, -2)
    return M @ inv_sqrt, choice


def _tangent_basis_of_sphere(omega: np.ndarray) -> np.ndarray:
    """Orthonormal basis (M, k+1, k) of omega^perp for unit vectors omega (M, k+1)."""
    M, kp1 = omega.shape
    if kp1 == 1:
        return np.zeros((M, 1, 0))
    out = np.empty((M, kp1, kp1 - 1))
    for i in range(M):
        q, _ = np.linalg.qr(np.column_stack([omega[i], np.eye(kp1)]))
        out[i] = q[:, 1:kp1]
    return out


def sample_energy_normal_bundle(gamma: Submanifold, V1, E0: float,
                                budget: QuadratureBudget | None = None,
                                seed: int | None = None) -> BundleSample:
    """Quadrature nodes and weights for the canonical measure on N_E(Gamma).

    The weight of a node is (chart weight) x (unit-sphere weight) x the Gram
    volume element of the bundle metric in local coordinates (chart coordinates
    plus geodesic normal coordinates on the fiber sphere).
    """
    budget = budget or QuadratureBudget()
    seed = budget.seed if seed is None else seed
    n, d = gamma.n, gamma.d
    k = n - d - 1
    U, Wc = chart_rule(gamma, budget)
    Z = gamma.z(U)
    r2 = E0 - np.asarray(V1(Z), dtype=float)
    if np.any(r2 <= 0):
        bad = Z[np.argmin(r2)]
        raise EmptyFiberError(f"E0 - V1(z) <= 0 at z = {bad}; the energy fiber is empty")
    omega, Wf = sphere_rule(k, budget.fiber, seed)
    nu, nf = U.shape[0], omega.shape[0]
    Uall = np.repeat(U, nf, axis=0)
    Oall = np.tile(omega, (nu, 1))
    weight0 = np.repeat(Wc, nf) * np.tile(Wf, nu)

    J = gamma.jac(Uall)
    frame, choice = _normal_frame(J)

    def lift(u):
        z = gamma.z(u)
        r = np.sqrt(E0 - np.asarray(V1(z), dtype=float))
        F, _ = _normal_frame(gamma.jac(u), choice)
        return z, r, F

    z0, r0, F0 = lift(Uall)
    xi0 = r0[:, None] * np.einsum("mij,mj->mi", F0, Oall)

    tangents = []
    for i in range(d):
        step = gamma.fd_step * np.maximum(1.0, np.abs(Uall[:, i]))
        du = np.zeros_like(Uall)
        du[:, i] = step
        zp, rp, Fp = lift(Uall + du)
        zm, rm, Fm = lift(Uall - du)
        xp = rp[:, None] * np.einsum("mij,mj->mi", Fp, Oall)
        xm = rm[:, None] * np.einsum("mij,mj->mi", Fm, Oall)
        tangents.append(((zp - zm) / (2 * step[:, None]), (xp - xm) / (2 * step[:, None])))
    T = _tangent_basis_of_sphere(Oall)
    for j in range(k):
        tangents.append((np.zeros_like(z0), r0[:, None] * np.einsum("mij,mj->mi", F0, T[:, :, j])))

    # projector onto (T_z Gamma + R xi)^perp
    PT = _tangent_projector(J) if d else np.zeros((Uall.shape[0], n, n))
    xhat = xi0 / np.linalg.norm(xi0, axis=-1, keepdims=True)
    Pperp = np.eye(n) - PT - xhat[:, :, None] * xhat[:, None, :]
    m = len(tangents)
    if m == 0:
        vol = np.ones(Uall.shape[0])
    else:
        G = np.empty((Uall.shape[0], m, m))
        proj = [np.einsum("mij,mj->mi", Pperp, t[1]) for t in tangents]
        for a in range(m):
            for b in range(a, m):
                g = np.sum(tangents[a][0] * tangents[b][0], -1) + np.sum(proj[a] * proj[b], -1)
                G[:, a, b] = g
                G[:, b, a] = g
        vol = np.sqrt(np.maximum(np.linalg.det(G), 0.0))
    return BundleSample(Uall, z0, xi0, weight0 * vol, E0)


def check_bundle_invariants(sample: BundleSample, gamma: Submanifold, V1, tol: float = 1e-10) -> bool:
    """Normality and energy constraints for every node, relative tolerance ``tol``."""
    xiT, _ = tangent_projection(gamma, sample.u, sample.xi)
    scale = np.linalg.norm(sample.xi, axis=-1)
    normal_ok = np.all(np.linalg.norm(xiT, axis=-1) <= tol * np.maximum(scale, 1.0))
    p = np.sum(sample.xi**2, -1) + np.asarray(V1(sample.z))
    shell_ok = np.all(np.abs(p - sample.E0) <= tol * max(abs(sample.E0), 1.0))
    return bool(normal_ok and shell_ok)


# ---------------------------------------------------------------------------
# non-incoming hypothesis

@dataclass
class NonIncomingReport:
    passed: bool
    R1: float
    sigma1: float
    n_checked: int
    witnesses: list = field(default_factory=list)

    def summary(self) -> str:
        if self.passed:
            return f"non-incoming: pass ({self.n_checked} normal directions checked, R1={self.R1}, sigma1={self.sigma1})"
        z, xi = self.witnesses[0]
        return (f"non-incoming: FAIL, {len(self.witnesses)} witnesses; e.g. z={np.round(z, 6).tolist()} "
                f"xi={np.round(xi, 6).tolist()}")


def check_nonincoming(gamma: Submanifold, R1: float, sigma1: float,
                      budget: QuadratureBudget | None = None, max_witnesses: int = 20) -> NonIncomingReport:
    """Look for sampled (z, xi) in N(Gamma) with |z| >= R1 and <z, xi> <= -sigma1 |z||xi|."""
    budget = budget or QuadratureBudget()
    U, _ = chart_rule(gamma, budget)
    if gamma.d:
        # include the chart box corners: unbounded pieces are worst at the far end
        corners = np.array(list(itertools.product(*zip(gamma.lower, gamma.upper))))
        U = np.vstack([U, corners])
    Z = gamma.z(U)
    k = gamma.n - gamma.d - 1
    omega, _ = sphere_rule(k, max(budget.fiber, 8), budget.seed)
    frame, _ = _normal_frame(gamma.jac(U))
    xi = np.einsum("uij,mj->umi", frame, omega)
    zn = np.linalg.norm(Z, axis=-1)
    dot = np.einsum("ui,umi->um", Z, xi)
    bad = (zn[:, None] >= R1) & (dot <= -sigma1 * zn[:, None] * 1.0 + 1e-14)
    wit = [(Z[i], xi[i, j]) for i, j in zip(*np.nonzero(bad))][:max_witnesses]
    return NonIncomingReport(not bool(np.any(bad)), R1, sigma1, int(dot.size), wit)
