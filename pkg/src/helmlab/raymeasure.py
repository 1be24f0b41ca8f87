"""The limit measure by damped ray transport from the energy-shell normal bundle.

    int q dmu = int_0^inf int_{N_E Gamma} kappa(z, xi) q(phi^t(z, xi))
                exp(-2 t Im Etilde - 2 int_0^t V2(X(s)) ds) dsigma dt,
    kappa(z, xi) = pi (2 pi)^(d - n) |A(z)|^2 |xi|^-1 |S_hat(xi)|^2.

Rays are advanced in lockstep batches; each ray's time integral is composite
Simpson on the step grid and stops once the ray is certified outgoing beyond
every observable's x-support (its remaining contribution is then exactly 0)
or once its damping weight is negligible.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .dynamics import BatchFlow, EscapeGeometry, PotentialPair, hp_derivative
from .geometry import BundleSample, QuadratureBudget, Submanifold, sample_energy_normal_bundle
from .source import Amplitude, Profile
from .symbols import Symbol

__all__ = [
    "SingularityError",
    "InconclusiveRayError",
    "AssumptionViolation",
    "kappa",
    "RayBudget",
    "RaySetup",
    "RayDiagnostics",
    "MeasureEvaluation",
    "transport",
    "evaluate_measure",
    "liouville_residual",
    "LiouvilleResidual",
    "truncation_compare",
    "TruncationResult",
]


class SingularityError(ValueError):
    pass


class InconclusiveRayError(RuntimeError):
    pass


class AssumptionViolation(RuntimeError):
    pass


def kappa(z, xi, A: Amplitude, S: Profile, d: int, n: int) -> np.ndarray:
    """pi (2 pi)^(d-n) |A(z)|^2 |xi|^-1 |S_hat(xi)|^2."""
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi, axis=-1)
    if np.any(r == 0):
        raise SingularityError("kappa is singular at xi = 0")
    a = A.value(np.asarray(z, dtype=float))
    return math.pi * (2 * math.pi) ** (d - n) * np.abs(a) ** 2 / r * np.abs(S.fourier(xi)) ** 2


@dataclass
class RayBudget:
    bundle: QuadratureBudget = field(default_factory=QuadratureBudget)
    dt: float = 0.01
    horizon: float = 60.0
    batch: int = 4096
    weight_tol: float = 1e-13
    energy_tol: float = 1e-8

    def coarser(self) -> "RayBudget":
        """Half the bundle resolution and twice the time step (for error estimates)."""
        return replace(self, bundle=self.bundle.scaled(0.5), dt=2 * self.dt)

    def scaled(self, factor: float) -> "RayBudget":
        return replace(self, bundle=self.bundle.scaled(factor), dt=self.dt / max(factor, 1e-12))


@dataclass
class RaySetup:
    """Everything the ray side needs from a scenario."""

    gamma: Submanifold
    A: Amplitude
    S: Profile
    pots: PotentialPair
    E0: float
    Etilde: complex
    geom: EscapeGeometry

    @property
    def n(self) -> int:
        return self.gamma.n

    def with_amplitude(self, A: Amplitude) -> "RaySetup":
        return replace(self, A=A)


@dataclass
class RayDiagnostics:
    z: np.ndarray
    xi: np.ndarray
    weight: np.ndarray
    kappa: np.ndarray
    escape_time: np.ndarray
    damping_at_escape: np.ndarray
    status: np.ndarray
    min_radius: np.ndarray
    contributions: np.ndarray  # (n_rays, n_q), already multiplied by weight * kappa
    max_energy_error: float
    # (n_rays, n_q): last sampled time at which each observable was nonzero on the ray
    last_support_time: np.ndarray | None = None

    def write_csv(self, path, q_names) -> None:
        n = self.z.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"z{i}" for i in range(n)] + [f"xi{i}" for i in range(n)]
                       + ["weight", "kappa", "escape_time", "damping_at_escape", "status"]
                       + [f"contrib_{q}" for q in q_names])
            for i in range(self.z.shape[0]):
                row = [*self.z[i], *self.xi[i], self.weight[i], self.kappa[i], self.escape_time[i],
                       self.damping_at_escape[i]]
                w.writerow([repr(float(v)) for v in row] + [self.status[i]]
                           + [repr(float(v)) for v in self.contributions[i]])


@dataclass
class MeasureEvaluation:
    q_name: str
    value: float
    error_estimate: float
    n_rays: int
    n_inconclusive: int = 0
    upper: float | None = None
    budget: RayBudget | None = None

    @property
    def interval(self) -> tuple[float, float]:
        return self.value, self.value if self.upper is None else self.upper


_STATUS = np.array(["running", "escaped-outgoing", "damped-out", "horizon-reached"])


def transport(qs: list[Symbol], setup: RaySetup, budget: RayBudget, mode: str = "measure",
              sample: BundleSample | None = None):
    """Per-ray time integrals for a list of symbols.

    mode "measure": int q(phi^t) w(t) dt.
    mode "liouville": int (-H_p q + 2 Im Et q + 2 V2 q)(phi^t) w(t) dt (equals q(w0) per ray).
    mode "terms": int (|H_p q| + |2 Im Et q + 2 V2 q|)(phi^t) w(t) dt, the size of what cancels above.
    Returns (per-ray integrals (N, Q), tail bounds (N, Q), diagnostics).
    """
    pots = setup.pots
    if sample is None:
        sample = sample_energy_normal_bundle(setup.gamma, pots.V1, setup.E0, budget.bundle)
    N, Qn = len(sample), len(qs)
    im = complex(setup.Etilde).imag
    if im <= 0 and pots.V2.is_zero and any(not q.compact for q in qs):
        raise ValueError("no damping and a non-compact symbol: the ray integrals need not converge")
    kap = kappa(sample.z, sample.xi, setup.A, setup.S, setup.gamma.d, setup.n)
    radii = [q.x_support_radius() for q in qs if not q.is_zero]
    r_supp = max(radii) if radii else 0.0
    sup_q = np.array([q.sup_abs() if q.is_separable or "sup_abs" in q.meta else np.inf for q in qs])
    integrals = np.zeros((N, Qn))
    tails = np.zeros((N, Qn))
    esc_t = np.full(N, np.nan)
    esc_D = np.full(N, np.nan)
    status = np.zeros(N, dtype=int)
    rmin = np.full(N, np.inf)
    t_last = np.zeros((N, Qn))
    energy_err = 0.0
    dt = budget.dt
    nmax = int(math.ceil(budget.horizon / dt))
    nmax += nmax % 2
    for b0 in range(0, N, budget.batch):
        sl = slice(b0, min(N, b0 + budget.batch))
        if not np.any(kap[sl] != 0):
            status[sl] = 1
            continue
        fl = BatchFlow(sample.z[sl], sample.xi[sl], pots, dt)
        p0 = pots.p(fl.x, fl.xi)
        B = fl.x.shape[0]
        active = kap[sl] != 0
        status[sl][~active] = 1
        acc = np.zeros((B, Qn))
        last = np.zeros((B, Qn))
        certified = np.zeros(B, dtype=bool)
        st = np.zeros(B, dtype=int)
        rm = np.linalg.norm(fl.x, axis=-1)
        e_t = np.full(B, np.nan)
        e_D = np.full(B, np.nan)
        tl = np.zeros((B, Qn))
        for j in range(nmax + 1):
            if j:
                fl.step(active)
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            x, xi, D = fl.x[idx], fl.xi[idx], fl.D[idx]
            t = j * dt
            w = np.exp(-2 * t * im - 2 * D)
            f = np.empty((idx.size, Qn))
            for k, q in enumerate(qs):
                if q.is_zero:
                    f[:, k] = 0.0
                    continue
                qv = q.value(x, xi)
                if mode == "liouville":
                    qv = -hp_derivative(q, x, xi, pots) + 2 * im * qv + 2 * pots.V2.value(x) * qv
                elif mode == "terms":
                    qv = np.abs(hp_derivative(q, x, xi, pots)) + np.abs((2 * im + 2 * pots.V2.value(x)) * qv)
                f[:, k] = qv * w
            c = 1.0 if j == 0 else (4.0 if j % 2 else 2.0)
            acc[idx] += c * f
            tl[idx] = np.where(f != 0, t, tl[idx])
            last[idx] = f
            rm[idx] = np.minimum(rm[idx], np.linalg.norm(x, axis=-1))
            energy_err = max(energy_err, float(np.max(np.abs(pots.p(x, xi) - p0[idx]))))
            new_cert = setup.geom.certified(x, xi, pots) & ~certified[idx]
            if np.any(new_cert):
                ii = idx[new_cert]
                certified[ii] = True
                e_t[ii] = t
                e_D[ii] = D[new_cert]
            if j % 2 == 0 and j > 0:
                # stop at even nodes so every ray's Simpson sum closes properly
                r = np.linalg.norm(x, axis=-1)
                done_esc = certified[idx] & (r > r_supp)
                done_damp = w <= budget.weight_tol
                stop = done_esc | done_damp
                if np.any(stop):
                    ii = idx[stop]
                    acc[ii] -= last[ii]  # final node carries weight 1, not 2
                    st[ii] = np.where(done_esc[stop], 1, 2)
                    tails[ii] = np.where(done_esc[stop, None], 0.0,
                                         sup_q[None, :] * w[stop, None] / max(2 * im, 1e-300))
                    active[ii] = False
        # rays still running at the horizon
        left = np.nonzero(active)[0]
        if left.size:
            acc[left] -= last[left]
            st[left] = 3
            t = nmax * dt
            w = np.exp(-2 * t * im - 2 * fl.D[left])
            tails[left] = sup_q[None, :] * w[:, None] / (2 * im) if im > 0 else np.inf
        integrals[sl] = acc * dt / 3
        status[sl] = np.where(kap[sl] != 0, st, 1)
        esc_t[sl] = e_t
        esc_D[sl] = e_D
        rmin[sl] = rm
        t_last[sl] = tl
    scale = (sample.weight * kap)[:, None]
    diag = RayDiagnostics(sample.z, sample.xi, sample.weight, kap, esc_t, esc_D, _STATUS[status], rmin,
                          integrals * scale, energy_err, t_last)
    return integrals, tails, diag


def _reduce(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum in fixed index order with compensated (math.fsum) accumulation."""
    return np.array([math.fsum(weights * values[:, k]) for k in range(values.shape[1])])


def evaluate_measure(q, setup: RaySetup, budget: RayBudget | None = None, estimate_error: bool = True,
                     strict: bool = False, return_diagnostics: bool = False):
    """int q dmu for one symbol or a list of symbols."""
    budget = budget or RayBudget()
    qs = q if isinstance(q, (list, tuple)) else [q]
    for s in qs:
        if not s.compact and complex(setup.Etilde).imag <= 0:
            raise ValueError(f"{s.name}: compactly supported symbol required without Im Etilde > 0")
    if all(s.is_zero for s in qs):
        out = [MeasureEvaluation(s.name, 0.0, 0.0, 0, budget=budget) for s in qs]
        return (out, None) if return_diagnostics else (out if isinstance(q, (list, tuple)) else out[0])
    integrals, tails, diag = transport(qs, setup, budget)
    wk = diag.weight * diag.kappa
    values = _reduce(integrals, wk)
    upper = values + _reduce(tails, wk)
    inconc = diag.status == "horizon-reached"
    if strict and np.any(inconc):
        raise InconclusiveRayError(f"{int(inconc.sum())} rays reached the horizon without escaping")
    errs = np.zeros(len(qs))
    if estimate_error:
        coarse, ctails, cdiag = transport(qs, setup, budget.coarser())
        cvals = _reduce(coarse, cdiag.weight * cdiag.kappa)
        errs = np.abs(values - cvals)
    out = [MeasureEvaluation(s.name, float(values[k]), float(errs[k]), len(diag.weight), int(inconc.sum()),
                             float(upper[k]) if upper[k] != values[k] else None, budget)
           for k, s in enumerate(qs)]
    if return_diagnostics:
        return out, diag
    return out if isinstance(q, (list, tuple)) else out[0]


class LiouvilleResidual(NamedTuple):
    lhs: float
    rhs: float
    residual: float
    # int (|H_p q| + |2 Im Et q + 2 V2 q|) dmu: the magnitude of the terms that cancel in lhs
    term_scale: float


def liouville_residual(q, setup: RaySetup, budget: RayBudget | None = None):
    """(LHS, RHS, residual, term_scale) of the transport identity, both sides from the same rays.

    LHS = int (-H_p q + 2 Im Et q + 2 V2 q) dmu, RHS = int_{N_E Gamma} q kappa dsigma.
    """
    budget = budget or RayBudget()
    qs = q if isinstance(q, (list, tuple)) else [q]
    sample = sample_energy_normal_bundle(setup.gamma, setup.pots.V1, setup.E0, budget.bundle)
    integrals, tails, diag = transport(qs, setup, budget, mode="liouville", sample=sample)
    if np.any(diag.status == "horizon-reached"):
        raise InconclusiveRayError("some rays never left supp q within the horizon")
    wk = diag.weight * diag.kappa
    lhs = _reduce(integrals, wk)
    terms, _, _ = transport(qs, setup, budget, mode="terms", sample=sample)
    scale = _reduce(terms, wk)
    q0 = np.stack([s.value(sample.z, sample.xi) for s in qs], axis=-1)
    rhs = _reduce(q0, wk)
    res = [LiouvilleResidual(float(lhs[k]), float(rhs[k]), float(lhs[k] - rhs[k]), float(scale[k]))
           for k in range(len(qs))]
    return res if isinstance(q, (list, tuple)) else res[0]


@dataclass
class TruncationResult:
    value_R0: float
    value_R: float
    difference: float
    tolerance: float
    certified: bool
    uncertified_rays: int


def truncation_compare(q: Symbol, setup: RaySetup, R: float, R0: float, budget: RayBudget | None = None,
                       Theta=None) -> TruncationResult:
    """int q dmu with A_{R0} and with A_R; rays launched from |z| > R0 must never enter B_x(r)."""
    from .source import truncate_amplitude

    budget = budget or RayBudget()
    if R < R0:
        raise ValueError("need R >= R0")
    if q.is_zero:
        return TruncationResult(0.0, 0.0, 0.0, 0.0, True, 0)
    r = q.x_support_radius()
    if not np.isfinite(r):
        raise ValueError("q must have bounded x-support")
    sample = sample_energy_normal_bundle(setup.gamma, setup.pots.V1, setup.E0, budget.bundle)
    vals = []
    diags = []
    for rad in (R0, R):
        s = setup.with_amplitude(truncate_amplitude(setup.A, rad, Theta))
        integ, tails, diag = transport([q], s, budget, sample=sample)
        vals.append(_reduce(integ, diag.weight * diag.kappa)[0])
        diags.append(diag)
    # certificates for rays launched outside B(R0)
    far = np.linalg.norm(sample.z, axis=-1) > R0
    d = diags[1]
    live = far & (d.kappa != 0)
    bad = live & ~((d.min_radius > r) & (d.status == "escaped-outgoing"))
    if np.any(bad):
        raise AssumptionViolation(f"{int(bad.sum())} rays from |z| > R0 enter B_x({r:.3g}) or lack a certificate")
    coarse = budget.coarser()
    s = setup.with_amplitude(truncate_amplitude(setup.A, R0, Theta))
    integ, _, cd = transport([q], s, coarse)
    tol = abs(vals[0] - _reduce(integ, cd.weight * cd.kappa)[0]) + 1e-14 * max(abs(vals[0]), 1e-300)
    return TruncationResult(float(vals[0]), float(vals[1]), float(vals[1] - vals[0]), float(tol), True, 0)
