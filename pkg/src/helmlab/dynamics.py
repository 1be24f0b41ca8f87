"""Hamiltonian flow of p(x, xi) = |xi|^2 + V1(x) with damping D(t) = int_0^t V2(X(s)) ds.

The integrator is kick-drift-kick leapfrog (dx/dt = 2 xi, dxi/dt = -grad V1),
composed into Yoshida's fourth-order triple jump. D is carried as an extra
momentum-like component updated in the kicks, so on the base leapfrog it is
exactly the trapezoid rule on the step grid and inherits the composition order.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StiffnessError",
    "Potential",
    "ZeroPotential",
    "ConstantPotential",
    "GaussianPotential",
    "PlummerPotential",
    "SumPotential",
    "HarmonicPotential",
    "PotentialPair",
    "make_potential",
    "Trajectory",
    "BatchFlow",
    "flow",
    "zone_membership",
    "hp_derivative",
    "EscapeGeometry",
    "escape_geometry",
    "escape_monitor",
    "check_damping_hypothesis",
    "DampingReport",
    "fit_decay",
]


class StiffnessError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# potentials

class Potential:
    name = "potential"
    is_zero = False

    def __call__(self, x):
        return self.value(x)

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        # central differences; only used for potentials without closed forms
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape)
        step = 1e-6
        for i in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[i] = step
            g[..., i] = (self.value(x + e) - self.value(x - e)) / (2 * step)
        return g

    @property
    def analytic_gradient(self) -> bool:
        return type(self).grad is not Potential.grad

    def radius(self, tol: float = 1e-14) -> float:
        """Radius beyond which the potential and its gradient fall below ``tol`` (inf if never)."""
        return np.inf


@dataclass
class ZeroPotential(Potential):
    name = "zero"
    is_zero = True

    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad(self, x):
        return np.zeros(np.shape(x))

    def radius(self, tol=1e-14):
        return 0.0


@dataclass
class ConstantPotential(Potential):
    c: float = 0.0
    name = "constant"

    def value(self, x):
        return np.full(np.shape(x)[:-1], float(self.c))

    def grad(self, x):
        return np.zeros(np.shape(x))

    @property
    def is_zero(self):
        return self.c == 0.0


@dataclass
class GaussianPotential(Potential):
    """amplitude * exp(-|x - center|^2 / width^2)."""

    amplitude: float = 1.0
    width: float = 1.0
    center: tuple = (0.0, 0.0)
    name = "gaussian_bump"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, dtype=float)
        return self.amplitude * np.exp(-np.sum((x - c) ** 2, axis=-1) / self.width**2)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, dtype=float)
        return (-2 * (x - c) / self.width**2) * self.value(x)[..., None]

    def radius(self, tol=1e-14):
        if self.amplitude == 0:
            return 0.0
        # |V| and |grad V| both below tol past this distance from the center
        r = self.width * np.sqrt(np.log(max(abs(self.amplitude) * (1 + 2 / self.width) / tol, 1.0)) + 1.0)
        return float(np.linalg.norm(self.center) + r)


@dataclass
class PlummerPotential(Potential):
    """amplitude * (1 + |x|^2 / scale^2)^(-rho / 2): long-range decay like <x>^-rho."""

    amplitude: float = 1.0
    scale: float = 1.0
    rho: float = 1.0
    name = "plummer"

    def value(self, x):
        s = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1) / self.scale**2
        return self.amplitude * (1 + s) ** (-self.rho / 2)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x**2, axis=-1) / self.scale**2
        f = -self.amplitude * self.rho * (1 + s) ** (-self.rho / 2 - 1) / self.scale**2
        return x * f[..., None]


@dataclass
class HarmonicPotential(Potential):
    """omega^2 |x|^2 (non-decaying; only for tests of trapped dynamics)."""

    omega: float = 1.0
    name = "harmonic"

    def value(self, x):
        return self.omega**2 * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)

    def grad(self, x):
        return 2 * self.omega**2 * np.asarray(x, dtype=float)


@dataclass
class SumPotential(Potential):
    parts: list = field(default_factory=list)
    name = "sum"

    def value(self, x):
        out = np.zeros(np.shape(x)[:-1])
        for p in self.parts:
            out = out + p.value(x)
        return out

    def grad(self, x):
        out = np.zeros(np.shape(x))
        for p in self.parts:
            out = out + p.grad(x)
        return out

    @property
    def is_zero(self):
        return all(p.is_zero for p in self.parts)

    def radius(self, tol=1e-14):
        return max((p.radius(tol) for p in self.parts), default=0.0)


def make_potential(kind: str, **params) -> Potential:
    """Registry lookup: zero, constant, gaussian_bump, plummer, harmonic."""
    kind = kind.strip().lower()
    if kind == "zero":
        return ZeroPotential()
    if kind == "constant":
        return ConstantPotential(float(params.get("value", params.get("c", 0.0))))
    if kind in ("gaussian_bump", "gaussian"):
        center = params.get("center", (0.0, 0.0))
        return GaussianPotential(float(params.get("amplitude", 1.0)), float(params.get("width", 1.0)),
                                 tuple(float(c) for c in center))
    if kind == "plummer":
        return PlummerPotential(float(params.get("amplitude", 1.0)), float(params.get("scale", 1.0)),
                                float(params.get("rho", 1.0)))
    if kind == "harmonic":
        return HarmonicPotential(float(params.get("omega", 1.0)))
    raise KeyError(f"unknown potential kind {kind!r}")


@dataclass
class PotentialPair:
    """Real potential V1, absorption V2 (both real-valued) and the nominal decay exponent rho."""

    V1: Potential = field(default_factory=ZeroPotential)
    V2: Potential = field(default_factory=ZeroPotential)
    rho: float = 1.0

    def p(self, x, xi):
        return np.sum(np.asarray(xi) ** 2, axis=-1) + self.V1.value(x)


def fit_decay(pot: Potential, weight_power: float, n: int, rmax: float = 20.0, samples: int = 400,
              seed: int = 0) -> float:
    """Smallest C with |V(x)| <= C <x>^-weight_power on a random validation set (report-only)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-rmax, rmax, size=(samples, n))
    jx = np.sqrt(1 + np.sum(x**2, -1))
    return float(np.max(np.abs(pot.value(x)) * jx**weight_power))


# ---------------------------------------------------------------------------
# flow

# Yoshida triple-jump coefficients
_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = -(2.0 ** (1.0 / 3.0)) * _W1
_YOSHIDA = (_W1, _W0, _W1)


@dataclass
class Trajectory:
    times: np.ndarray
    X: np.ndarray
    Xi: np.ndarray
    D: np.ndarray
    terminal_status: str = "running"
    escape_time: float | None = None
    meta: dict = field(default_factory=dict)

    def energy(self, pots: PotentialPair) -> np.ndarray:
        return pots.p(self.X, self.Xi)

    def write_csv(self, path) -> None:
        n = self.X.shape[-1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"X{i}" for i in range(n)] + [f"Xi{i}" for i in range(n)] + ["D"])
            for k in range(self.times.size):
                w.writerow([repr(float(v)) for v in (self.times[k], *self.X[k], *self.Xi[k], self.D[k])])


class BatchFlow:
    """Fixed-step fourth-order flow of a batch of phase points (arrays (B, n))."""

    def __init__(self, x, xi, pots: PotentialPair, dt: float, order: int = 4):
        self.x = np.array(x, dtype=float)
        self.xi = np.array(xi, dtype=float)
        self.D = np.zeros(self.x.shape[:-1])
        self.t = 0.0
        self.pots = pots
        self.dt = float(dt)
        self.order = order
        self._free = pots.V1.is_zero and pots.V2.is_zero

    def _leapfrog(self, x, xi, D, tau):
        V1, V2 = self.pots.V1, self.pots.V2
        half = 0.5 * tau
        xi = xi - half * V1.grad(x)
        D = D + half * V2.value(x)
        x = x + 2 * tau * xi
        xi = xi - half * V1.grad(x)
        D = D + half * V2.value(x)
        return x, xi, D

    def advance(self, x, xi, D, tau):
        if self._free:
            return x + 2 * tau * xi, xi, D
        if self.order == 2:
            return self._leapfrog(x, xi, D, tau)
        for c in _YOSHIDA:
            x, xi, D = self._leapfrog(x, xi, D, c * tau)
        return x, xi, D

    def step(self, mask=None) -> None:
        """Advance by dt (only the rows selected by ``mask`` when given)."""
        if mask is None:
            self.x, self.xi, self.D = self.advance(self.x, self.xi, self.D, self.dt)
        else:
            x, xi, D = self.advance(self.x[mask], self.xi[mask], self.D[mask], self.dt)
            self.x[mask], self.xi[mask], self.D[mask] = x, xi, D
        self.t += self.dt


def _integrate(x0, xi0, pots, t_end, nsteps, order=4, store=False):
    fl = BatchFlow(x0, xi0, pots, t_end / nsteps if nsteps else 0.0, order)
    if not store:
        for _ in range(nsteps):
            fl.step()
        return fl.x, fl.xi, fl.D
    Xs, Xis, Ds = [fl.x.copy()], [fl.xi.copy()], [fl.D.copy()]
    for _ in range(nsteps):
        fl.step()
        Xs.append(fl.x.copy())
        Xis.append(fl.xi.copy())
        Ds.append(fl.D.copy())
    return np.array(Xs), np.array(Xis), np.array(Ds)


def choose_steps(x0, xi0, pots: PotentialPair, t_end: float, tol: float = 1e-8,
                 energy_tol: float = 1e-9, dt_max: float = 0.05, max_halvings: int = 22) -> int:
    """Number of steps on [0, |t_end|] meeting ``tol`` (Richardson) and ``energy_tol`` (drift).

    Raises StiffnessError when halving stops helping before the budget runs out.
    """
    T = abs(t_end)
    if T == 0:
        return 0
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    xi0 = np.atleast_2d(np.asarray(xi0, dtype=float))
    if pots.V1.is_zero and pots.V2.is_zero:
        return 1
    m = max(1, int(np.ceil(T / dt_max)))
    sgn = np.sign(t_end)
    p0 = pots.p(x0, xi0)
    xa, xia, Da = _integrate(x0, xi0, pots, sgn * T, m)
    for _ in range(max_halvings):
        xb, xib, Db = _integrate(x0, xi0, pots, sgn * T, 2 * m)
        err = max(np.max(np.abs(xb - xa)), np.max(np.abs(xib - xia)), np.max(np.abs(Db - Da))) / 15.0
        drift = np.max(np.abs(pots.p(xb, xib) - p0))
        if err <= tol and drift <= energy_tol:
            return 2 * m
        m *= 2
        xa, xia, Da = xb, xib, Db
    raise StiffnessError(f"step size underflow: dt = {T / m:.3g} still misses tol = {tol:g}")


def flow(x0, xi0, t_end: float, pots: PotentialPair | None = None, tol: float = 1e-8,
         energy_tol: float = 1e-9, dt_max: float = 0.05, nsteps: int | None = None) -> Trajectory:
    """Trajectory of one phase point on [0, t_end] (negative t_end runs backwards in time)."""
    pots = pots or PotentialPair()
    x0 = np.asarray(x0, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    if t_end == 0:
        return Trajectory(np.zeros(1), x0[None].copy(), xi0[None].copy(), np.zeros(1))
    if pots.V1.is_zero:
        # free flight in closed form; only the damping needs quadrature
        m = nsteps or max(1, int(np.ceil(abs(t_end) / dt_max)))
        t = np.linspace(0, t_end, m + 1)
        X = x0 + 2 * t[:, None] * xi0
        Xi = np.broadcast_to(xi0, X.shape).copy()
        D = np.zeros(m + 1)
        if not pots.V2.is_zero:
            v = pots.V2.value(X)
            D[1:] = np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))
        return Trajectory(t, X, Xi, D)
    m = nsteps or choose_steps(x0[None], xi0[None], pots, t_end, tol, energy_tol, dt_max)
    X, Xi, D = _integrate(x0[None], xi0[None], pots, t_end, m, store=True)
    t = np.linspace(0, t_end, m + 1)
    return Trajectory(t, X[:, 0], Xi[:, 0], D[:, 0])


# ---------------------------------------------------------------------------
# zones, escape, brackets

def zone_membership(x, xi, R: float, nu: float, sigma: float, sign: int | str = "+"):
    """Membership in Z_+(R, nu, sigma) (sign "+") or Z_-(R, nu, sigma) (sign "-")."""
    if not -1.0 <= sigma <= 1.0:
        raise ValueError("sigma must lie in [-1, 1]")
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    nx = np.linalg.norm(x, axis=-1)
    nxi = np.linalg.norm(xi, axis=-1)
    dot = np.sum(x * xi, axis=-1)
    plus = sign in ("+", 1, "plus", "out")
    angular = dot >= sigma * nx * nxi if plus else dot <= sigma * nx * nxi
    return (nx >= R) & (nxi >= nu) & angular


def hp_derivative(q, x, xi, pots: PotentialPair | None = None):
    """H_p q = 2 xi . grad_x q - grad V1(x) . grad_xi q."""
    pots = pots or PotentialPair()
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return 2 * np.sum(xi * q.grad_x(x, xi), axis=-1) - np.sum(pots.V1.grad(x) * q.grad_xi(x, xi), axis=-1)


@dataclass
class EscapeGeometry:
    """Outgoing-zone parameters used for ray truncation certificates."""

    R_escape: float
    sigma3: float
    c0: float
    E1: float
    E2: float

    def certified(self, x, xi, pots: PotentialPair) -> np.ndarray:
        """States past which |X(t)| is nondecreasing for all later times.

        Entry in Z_+(R, 0, -sigma3) with energy in [E1, E2] is required, and in
        addition a nonnegative radial velocity: the zone admits slightly incoming
        directions along which |X| first decreases.
        """
        p = pots.p(x, xi)
        in_zone = zone_membership(x, xi, self.R_escape, 0.0, -self.sigma3, "+")
        outward = np.sum(np.asarray(x) * np.asarray(xi), axis=-1) >= 0
        return in_zone & outward & (p >= self.E1) & (p <= self.E2)


def escape_geometry(pots: PotentialPair, E1: float, E2: float, sigma1: float, n: int,
                    rmax: float = 50.0, samples: int = 4000, margin: float = 1.25,
                    floor: float = 1.0, seed: int = 0) -> EscapeGeometry:
    """Escape radius from the proxy |V1| + |x||grad V1| <= (E1/3)(1 - sigma3^2), sigma3 = (1+sigma1)/2."""
    sigma3 = 0.5 * (1 + sigma1)
    bound = E1 / 3 * (1 - sigma3**2)
    V1 = pots.V1
    if V1.is_zero or isinstance(V1, ConstantPotential) and abs(V1.c) <= bound:
        R = floor
    else:
        rng = np.random.default_rng(seed)
        radii = np.linspace(0.0, rmax, 501)
        dirs = rng.normal(size=(samples // len(radii) + 8, n))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        x = radii[:, None, None] * dirs[None]
        lhs = np.abs(V1.value(x)) + np.linalg.norm(x, axis=-1) * np.linalg.norm(V1.grad(x), axis=-1)
        bad = np.max(lhs, axis=1) > bound
        if bad[-1]:
            raise ValueError("potential does not satisfy the escape proxy within the validation radius")
        last_bad = np.nonzero(bad)[0]
        R = max(floor, margin * (radii[last_bad[-1] + 1] if last_bad.size else 0.0))
    c0 = float(np.sqrt(E1 * (1 - sigma3) / 2))
    return EscapeGeometry(float(R), sigma3, c0, E1, E2)


def escape_monitor(traj: Trajectory, geom: EscapeGeometry, pots: PotentialPair) -> Trajectory:
    """Set terminal status and escape time from the stored samples; assert monotone |X| after escape."""
    cert = geom.certified(traj.X, traj.Xi, pots)
    if np.any(cert):
        k = int(np.argmax(cert))
        r = np.linalg.norm(traj.X[k:], axis=-1)
        if np.any(np.diff(r) < -1e-12 * np.maximum(r[1:], 1)):
            raise AssertionError("|X| decreased after an escape certificate was issued")
        traj.terminal_status = "escaped-outgoing"
        traj.escape_time = float(traj.times[k])
    else:
        traj.terminal_status = "horizon-reached"
    return traj


@dataclass
class DampingReport:
    passed: bool
    n_samples: int
    n_trapped: int
    min_best_integral: float | None
    heuristic: str = "heuristic (finite horizon): only trajectories not certified outgoing by T_max are examined"

    def summary(self) -> str:
        if self.n_trapped == 0:
            return f"damping on trapped set: pass (no trapped sample among {self.n_samples}; {self.heuristic})"
        verdict = "pass" if self.passed else "FAIL"
        return (f"damping on trapped set: {verdict} ({self.n_trapped}/{self.n_samples} trapped, "
                f"min max_T int V2 = {self.min_best_integral:.4g}; {self.heuristic})")


def check_damping_hypothesis(E0: float, T_max: float, pots: PotentialPair, geom: EscapeGeometry,
                             n: int, samples: int = 400, box: float = 3.0, dt: float = 0.02,
                             seed: int = 0) -> DampingReport:
    """Heuristic check that int_0^T V2 > 0 for some T <= T_max on non-escaping energy-E0 samples."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-box, box, size=(4 * samples, n))
    r2 = E0 - pots.V1.value(x)
    x = x[r2 > 0][:samples]
    r = np.sqrt(r2[r2 > 0][:samples])
    w = rng.normal(size=(x.shape[0], n))
    xi = r[:, None] * w / np.linalg.norm(w, axis=-1, keepdims=True)
    fl = BatchFlow(x, xi, pots, dt)
    escaped = np.zeros(x.shape[0], dtype=bool)
    best = np.full(x.shape[0], -np.inf)
    for _ in range(int(np.ceil(T_max / dt))):
        fl.step()
        best = np.maximum(best, fl.D)
        escaped |= geom.certified(fl.x, fl.xi, pots)
    trapped = ~escaped
    if not np.any(trapped):
        return DampingReport(True, x.shape[0], 0, None)
    m = float(np.min(best[trapped]))
    return DampingReport(m > 0, x.shape[0], int(trapped.sum()), m)
