"""Finite-time Helmholtz solutions from the damped Schrodinger semigroup.

    u_h^T = (i/h) int_0^inf eta_T(t) exp(i t E_h / h) U_h(t) S_h dt,
    U_h(t) = exp(-i t H_h / h),  H_h = -h^2 Laplacian + V1 - i h V2.

U_h is applied by Strang splitting on the periodic grid; outgoing waves are
absorbed by a sponge that is added to V2 near the box faces.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .dynamics import PotentialPair
from .grid import GridField, GridSpec
from .quantization import wigner_pairing

__all__ = [
    "StabilityError",
    "ContaminationError",
    "DivergenceWarning",
    "EnergyTrack",
    "CutoffFunction",
    "Sponge",
    "Propagator",
    "propagate_step",
    "partial_solution",
    "PartialSolution",
    "solve_observables",
    "default_dt",
]


class StabilityError(ValueError):
    pass


class ContaminationError(ValueError):
    pass


class DivergenceWarning(RuntimeWarning):
    pass


@dataclass
class EnergyTrack:
    """E_h = E0 + h * Etilde with the energy window J = [E1, E2]."""

    E0: float
    Etilde: complex = 1j
    h: float = 1.0
    E1: float | None = None
    E2: float | None = None

    def __post_init__(self):
        if self.E0 <= 0:
            raise ValueError("E0 must be positive")
        if self.E1 is None:
            self.E1 = 0.8 * self.E0
        if self.E2 is None:
            self.E2 = 1.2 * self.E0
        if complex(self.Etilde).imag < 0:
            raise ValueError("Im Etilde must be nonnegative")

    @property
    def Eh(self) -> complex:
        return self.E0 + self.h * complex(self.Etilde)

    def window_sides(self, sigma1: float) -> tuple[float, float]:
        """(((1 + sigma1)/2)^2 E2, E1): the window is admissible iff the first is smaller."""
        return ((1 + sigma1) / 2) ** 2 * self.E2, self.E1

    def check(self, sigma1: float) -> None:
        if not self.E1 <= self.E0 <= self.E2:
            raise ValueError(f"E0 = {self.E0} outside the window [{self.E1}, {self.E2}]")
        if not self.E1 <= self.Eh.real <= self.E2:
            raise ValueError(f"Re E_h = {self.Eh.real} outside the window [{self.E1}, {self.E2}]")
        lhs, rhs = self.window_sides(sigma1)
        if not lhs < rhs:
            raise ValueError(f"window check fails: ((1+s1)/2)^2 E2 = {lhs:.6g} >= E1 = {rhs:.6g}")


def _smooth_transition(s):
    """C-infinity step: 1 for s <= 0, 0 for s >= 1, strictly decreasing in between."""
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < 1)
    sc = np.where(inside, s, 0.5)
    a = np.exp(-1 / sc)
    b = np.exp(-1 / (1 - sc))
    return np.where(s <= 0, 1.0, np.where(s >= 1, 0.0, b / (a + b)))


@dataclass
class CutoffFunction:
    """eta_T(t) = eta((t - T) / tau0): 1 up to T, 0 from T + tau0 on, smooth and non-increasing."""

    T: float
    tau0: float = 1.0

    def __post_init__(self):
        if self.T < 0 or not 0 < self.tau0 <= 1:
            raise ValueError("need T >= 0 and tau0 in (0, 1]")

    def __call__(self, t):
        return _smooth_transition((np.asarray(t, dtype=float) - self.T) / self.tau0)

    @property
    def end(self) -> float:
        return self.T + self.tau0


@dataclass
class Sponge:
    """Absorbing layer sigma(x) >= 0 added to V2 in the outer ``fraction`` of each box axis.

    The ramp is quartic in the depth into the layer; ``strength`` is set so a
    ray of speed ``speed`` crossing the layer once is attenuated by ``attenuation``.
    """

    fraction: float = 0.15
    attenuation: float = 1e-10
    power: int = 4
    strength: float | None = None

    def widths(self, grid: GridSpec) -> np.ndarray:
        return self.fraction * grid.lengths

    def interior(self, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(grid.origin)
        hi = lo + grid.lengths
        w = self.widths(grid)
        return lo + w, hi - w

    def sigma_max(self, grid: GridSpec, speed: float) -> float:
        if self.strength is not None:
            return self.strength
        # int_0^w sigma_max (s/w)^p ds / speed = sigma_max w / ((p + 1) speed)
        w = float(np.min(self.widths(grid)))
        return -math.log(self.attenuation) * (self.power + 1) * speed / w

    def profile(self, grid: GridSpec, speed: float) -> np.ndarray:
        if self.fraction <= 0:
            return np.zeros(grid.shape)
        smax = self.sigma_max(grid, speed)
        lo, hi = self.interior(grid)
        w = self.widths(grid)
        out = np.zeros(grid.shape)
        for ax, coord in enumerate(grid.axes()):
            depth = np.maximum(lo[ax] - coord, 0) + np.maximum(coord - hi[ax], 0)
            s = np.clip(depth / w[ax], 0, 1) ** self.power
            shape = [1] * grid.ndim
            shape[ax] = -1
            out = out + smax * s.reshape(shape)
        return out


def default_dt(h: float, E2: float) -> float:
    return h / (4 * E2)


class Propagator:
    """Strang step exp(-i dt V/2h) exp(-i dt h |k|^2) exp(-i dt V/2h) with V = V1 - i h V2."""

    def __init__(self, grid: GridSpec, h: float, pots: PotentialPair | None, dt: float,
                 absorber: np.ndarray | None = None, E2: float | None = None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        grid.check_resolves(h)
        pots = pots or PotentialPair()
        x = grid.coords()
        V1 = pots.V1.value(x)
        V2 = pots.V2.value(x)
        if absorber is not None:
            V2 = V2 + absorber
        # the kinetic factor is exact; the phase that must stay small is the one
        # accumulated per step on the energy window and by the potential
        if E2 is not None and E2 * dt / h > math.pi / 4:
            raise StabilityError(f"phase per step E2*dt/h = {E2 * dt / h:.3g} exceeds pi/4")
        vmax = float(np.max(np.abs(V1))) if V1.size else 0.0
        if vmax * dt / h > math.pi / 4:
            raise StabilityError(f"potential phase per step {vmax * dt / h:.3g} exceeds pi/4")
        self.grid, self.h, self.dt = grid, h, dt
        self.half = np.exp(-0.5j * dt * V1 / h - 0.5 * dt * V2)
        k2 = np.zeros(grid.shape)
        for ax, k in enumerate(grid.wavenumbers()):
            shape = [1] * grid.ndim
            shape[ax] = -1
            k2 = k2 + (k**2).reshape(shape)
        self.kinetic = np.exp(-1j * dt * h * k2)

    def step(self, data: np.ndarray) -> np.ndarray:
        """One step, overwriting ``data`` when possible."""
        data *= self.half
        spec = sfft.fftn(data, overwrite_x=True)
        spec *= self.kinetic
        data = sfft.ifftn(spec, overwrite_x=True)
        data *= self.half
        return data


def propagate_step(u: GridField, dt: float, pots: PotentialPair | None = None, h: float | None = None,
                   absorber: np.ndarray | None = None) -> GridField:
    h = u.h if h is None else h
    prop = Propagator(u.grid, h, pots, dt, absorber)
    return u.copy(prop.step(u.data.copy()))


@dataclass
class PartialSolution:
    field: GridField
    times: np.ndarray
    integrand_norms: np.ndarray
    eta: CutoffFunction
    dt: float
    meta: dict = field(default_factory=dict)


def partial_solution(Sh: GridField, track: EnergyTrack, eta: CutoffFunction, dt: float | None = None,
                     pots: PotentialPair | None = None, sponge: Sponge | None = None,
                     speed: float | None = None, check_edges: bool = True,
                     tail_tol: float = 1e-6) -> PartialSolution:
    """u_h^T by composite Simpson quadrature over the time steps.

    ``sponge=None`` runs on the bare periodic torus.
    """
    h = Sh.h
    pots = pots or PotentialPair()
    if complex(track.Etilde).imag <= 0 and not np.isfinite(eta.end):
        raise ValueError("need Im Etilde > 0 or a finite cutoff")
    dt = default_dt(h, track.E2) if dt is None else dt
    absorber = None
    if sponge is not None:
        speed = 2 * math.sqrt(track.E2) if speed is None else speed
        absorber = sponge.profile(Sh.grid, speed)
    prop = Propagator(Sh.grid, h, pots, dt, absorber, track.E2)
    m = int(math.ceil(eta.end / dt))
    m += m % 2
    t = dt * np.arange(m + 1)
    simpson = np.ones(m + 1)
    simpson[1:-1:2] = 4
    simpson[2:-1:2] = 2
    simpson *= dt / 3
    Eh = track.Eh
    etas = eta(t)
    norms = np.zeros(m + 1)
    acc = np.zeros(Sh.grid.shape, dtype=complex)
    u = Sh.data.astype(complex, copy=True)
    cell = Sh.grid.cell_volume
    for j in range(m + 1):
        if j:
            u = prop.step(u)
        phase = np.exp(1j * t[j] * Eh / h)
        norms[j] = abs(phase) * math.sqrt(float(np.vdot(u, u).real) * cell)
        c = simpson[j] * etas[j] * phase
        if c != 0:
            acc += c * u
    acc *= 1j / h
    peak = norms.max()
    if peak > 0 and etas[-1] * norms[-1] > tail_tol * peak:
        warnings.warn("integrand has not decayed at the last retained node", DivergenceWarning)
    k_T = int(np.searchsorted(t, eta.T))
    if peak > 0 and k_T > 0 and norms[min(k_T, m)] >= norms[:k_T + 1].max() * (1 - 1e-12) \
            and complex(track.Etilde).imag <= 0 and sponge is None:
        warnings.warn("integrand is not decaying before the cutoff; limiting absorption insufficient",
                      DivergenceWarning)
    out = GridField(Sh.grid, acc, h, {"kind": "partial_solution", "T": eta.T, "tau0": eta.tau0,
                                      "dt": dt, "steps": m})
    if check_edges:
        out.check_edge_decay()
    return PartialSolution(out, t, norms, eta, dt)


def solve_observables(u: GridField, q_list, sponge: Sponge | None = None) -> list[complex]:
    """<Op_h^w(q) u, u> for each symbol; supports must avoid the absorbing layer."""
    out = []
    for q in q_list:
        if sponge is not None and not getattr(q, "is_zero", False):
            lo, hi = sponge.interior(u.grid)
            if q.x_box is None:
                raise ContaminationError(f"symbol {q.name} has unbounded x-support")
            qlo, qhi = q.x_box
            if np.any(qlo <= lo) or np.any(qhi >= hi):
                raise ContaminationError(f"symbol {q.name} x-support overlaps the absorbing layer")
        out.append(wigner_pairing(q, u, u.h))
    return out
