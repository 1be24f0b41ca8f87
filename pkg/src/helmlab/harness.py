"""Pipelines: hypothesis validation, ray predictions, wave runs, h-sweeps and reports.

Every pipeline writes plain CSV/text into a run directory; reports are built
from those files only, so they can be regenerated offline.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import check_damping_hypothesis, fit_decay
from .geometry import chart_rule, check_nonincoming
from .raymeasure import MeasureEvaluation, RayDiagnostics, evaluate_measure
from .scenarios import Scenario
from .source import ScalingFit, assemble_source, decay_integral, local_decay_check, source_norm_scaling
from .symbols import Symbol
from .wavesolver import CutoffFunction, EnergyTrack, PartialSolution, Sponge, partial_solution, solve_observables

__all__ = [
    "Check",
    "ValidationReport",
    "validate",
    "RayRun",
    "run_rays",
    "auto_T",
    "source_scaling",
    "wave_solution",
    "wave_values",
    "run_wave",
    "ConvergenceRow",
    "ConvergenceRun",
    "run_convergence",
    "emit_report",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# validation

@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    report_only: bool = False

    def line(self) -> str:
        tag = "PASS" if self.passed else ("WARN" if self.report_only else "FAIL")
        return f"[{tag}] {self.name}: {self.detail}"


@dataclass
class ValidationReport:
    scenario: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed or c.report_only for c in self.checks)

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def text(self) -> str:
        head = f"validation of {self.scenario}: {'pass' if self.passed else 'FAIL'}\n"
        return head + "".join(c.line() + "\n" for c in self.checks)


def _guard(name, fn, report_only=False) -> Check:
    try:
        return fn()
    except (ValueError, RuntimeError) as exc:
        return Check(name, False, str(exc), report_only)


def validate(scn: Scenario) -> ValidationReport:
    """Pass/fail per standing hypothesis, with offending samples where there are any."""
    rep = ValidationReport(scn.name)

    def window():
        track = EnergyTrack(scn.E0, scn.Etilde, min(scn.h_list), scn.E1, scn.E2)
        lhs, rhs = track.window_sides(scn.sigma1)
        try:
            for h in scn.h_list:
                EnergyTrack(scn.E0, scn.Etilde, h, scn.E1, scn.E2).check(scn.sigma1)
        except ValueError as exc:
            return Check("energy-window", False, f"{exc} (sides {lhs:.6g} vs {rhs:.6g})")
        return Check("energy-window", True, f"((1+s1)/2)^2 E2 = {lhs:.6g} < E1 = {rhs:.6g}; "
                     f"E0 and Re E_h in [{scn.E1:g}, {scn.E2:g}]")

    def nonincoming():
        r = check_nonincoming(scn.gamma, scn.R1, scn.sigma1, scn.ray_budget.bundle)
        return Check("non-incoming", r.passed, r.summary().split(": ", 1)[1])

    def potential_decay():
        c1 = fit_decay(scn.pots.V1, scn.pots.rho, scn.n, seed=scn.seed)
        c2 = fit_decay(scn.pots.V2, 1 + scn.pots.rho, scn.n, seed=scn.seed)
        far = np.array([[60.0] + [0.0] * (scn.n - 1)])
        tail = abs(float(scn.pots.V1.value(far)[0])) * (1 + 3600) ** (scn.pots.rho / 2)
        ok = bool(np.isfinite(c1) and np.isfinite(c2)) and tail <= 2 * c1 + 1e-12
        return Check("potential-decay", ok,
                     f"fitted C = {c1:.4g} for V1 (rho={scn.pots.rho:g}), {c2:.4g} for V2; "
                     f"<x>^rho |V1| at |x|=60: {tail:.3g}", report_only=True)

    def amplitude_decay():
        if scn.A.delta <= 0.5:
            return Check("amplitude-decay", False, f"delta = {scn.A.delta} must exceed 1/2")
        total = decay_integral(scn.gamma, scn.A)
        loc = local_decay_check(scn.gamma, scn.A, seed=scn.seed)
        ok = bool(np.isfinite(total)) and np.isfinite(loc["c"])
        return Check("amplitude-decay", ok, f"weighted integral {total:.6g}, local constant {loc['c']:.4g}")

    def damping():
        prm = scn.damping
        rep_ = check_damping_hypothesis(scn.E0, prm.get("T_max", 20.0), scn.pots, scn.geom, scn.n,
                                        samples=int(prm.get("samples", 200)), box=prm.get("box", 3.0),
                                        seed=scn.seed)
        if rep_.n_trapped == 0:
            detail = f"all {rep_.n_samples} samples certified outgoing"
        else:
            detail = (f"{rep_.n_trapped}/{rep_.n_samples} samples not escaped; "
                      f"min best damping integral {rep_.min_best_integral:.4g}")
        return Check("damping-on-trapped-set", rep_.passed, detail + " (heuristic, finite horizon)")

    def propagating():
        U, _ = chart_rule(scn.gamma, scn.ray_budget.bundle)
        z = scn.gamma.z(U)
        gap = scn.E0 - scn.pots.V1.value(z)
        i = int(np.argmin(gap))
        ok = bool(gap[i] > 0)
        return Check("propagating-on-source", ok, f"min E0 - V1 on Gamma = {gap[i]:.6g} at z = "
                     f"{np.round(z[i], 6).tolist()}")

    def absorption():
        ok = complex(scn.Etilde).imag >= 0
        return Check("absorbing-energy", ok, f"Etilde = {complex(scn.Etilde)}")

    rep.checks.append(_guard("energy-window", window))
    rep.checks.append(_guard("non-incoming", nonincoming))
    rep.checks.append(_guard("potential-decay", potential_decay, True))
    rep.checks.append(_guard("amplitude-decay", amplitude_decay))
    rep.checks.append(_guard("damping-on-trapped-set", damping))
    rep.checks.append(_guard("propagating-on-source", propagating))
    rep.checks.append(_guard("absorbing-energy", absorption))
    return rep


# ---------------------------------------------------------------------------
# rays

@dataclass
class RayRun:
    evaluations: list[MeasureEvaluation]
    diagnostics: RayDiagnostics | None
    seconds: float

    def value(self, name: str) -> float:
        for e in self.evaluations:
            if e.q_name == name:
                return e.value
        raise KeyError(name)

    def by_name(self) -> dict[str, MeasureEvaluation]:
        return {e.q_name: e for e in self.evaluations}


def _fmt(v: float) -> str:
    return repr(float(v))


def run_rays(scn: Scenario, out: Path | None = None, qs: list[Symbol] | None = None) -> RayRun:
    qs = scn.observables if qs is None else qs
    t0 = time.perf_counter()
    evals, diag = [], None
    if qs:
        evals, diag = evaluate_measure(list(qs), scn.ray_setup(), scn.ray_budget, return_diagnostics=True)
    run = RayRun(evals, diag, time.perf_counter() - t0)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "measures.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q_id", "value", "error_estimate"])
            for e in evals:
                w.writerow([e.q_name, _fmt(e.value), _fmt(e.error_estimate)])
        if diag is not None:
            diag.write_csv(out / "rays.csv", [q.name for q in qs])
    return run


def auto_T(scn: Scenario, rays: RayRun | None) -> float:
    """Cutoff time: the configured T, or a margin times the last time a ray meets supp q.

    Only observables the wave side actually pairs are taken into account.
    """
    if scn.T is not None:
        return scn.T
    last = None if rays is None or rays.diagnostics is None else rays.diagnostics.last_support_time
    if last is None:
        return 1.0
    names = [e.q_name for e in rays.evaluations]
    cols = [k for k, nm in enumerate(names) if nm in {q.name for q in scn.observables}
            and wave_skip_reason(scn, scn.observable(nm)) is None]
    sel = last[:, cols]
    if sel.size == 0 or not np.any(sel > 0):
        return 1.0
    return float(scn.T_margin * np.max(sel))


def source_scaling(scn: Scenario, h_list=None) -> ScalingFit:
    """Fitted exponent of the weighted source norm against h on the scenario box."""
    hs = h_list or scn.h_list
    return source_norm_scaling(lambda h: assemble_source(scn.gamma, scn.A, scn.S, h, scn.grid(h)), hs, scn.A.delta)


# ---------------------------------------------------------------------------
# waves

def wave_solution(scn: Scenario, h: float, T: float, A=None, check_edges: bool = True) -> PartialSolution:
    grid = scn.grid(h)
    Sh = assemble_source(scn.gamma, A or scn.A, scn.S, h, grid)
    track = EnergyTrack(scn.E0, scn.Etilde, h, scn.E1, scn.E2)
    vmax = float(np.max(np.abs(scn.pots.V1.value(grid.coords()))))
    # the potential phase per step must obey the same bound as the energy phase
    dt = h / (4 * max(scn.E2, vmax))
    speed = max(2 * math.sqrt(scn.E2 + vmax), scn.profile_speed())
    return partial_solution(Sh, track, CutoffFunction(T, scn.tau0), dt=dt, pots=scn.pots,
                            sponge=Sponge(scn.sponge_fraction), speed=speed, check_edges=check_edges)


def wave_skip_reason(scn: Scenario, q: Symbol) -> str | None:
    if q.is_zero:
        return None
    if not q.is_separable:
        return "non-separable symbol (grid pairing would need the full Wigner transform)"
    if q.x_box is None or not np.all(np.isfinite(q.x_box[0])):
        return "unbounded x-support"
    sp = Sponge(scn.sponge_fraction)
    lo, hi = sp.interior(scn.grid(max(scn.h_list)))
    if np.any(q.x_box[0] <= lo) or np.any(q.x_box[1] >= hi):
        return "x-support overlaps the absorbing layer"
    return None


def wave_values(scn: Scenario, u, qs: list[Symbol]) -> dict[str, complex | None]:
    out: dict[str, complex | None] = {}
    live = [q for q in qs if wave_skip_reason(scn, q) is None]
    vals = solve_observables(u, live, Sponge(scn.sponge_fraction))
    for q, v in zip(live, vals):
        out[q.name] = complex(v)
    for q in qs:
        out.setdefault(q.name, None)
    return out


def run_wave(scn: Scenario, out: Path | None = None, T: float | None = None, rays: RayRun | None = None,
             h_list: list[float] | None = None) -> dict[float, dict[str, complex | None]]:
    """Wave pairings for every h; ``T`` defaults to :func:`auto_T` from a ray run."""
    if T is None:
        if scn.T is None and rays is None:
            rays = run_rays(scn)
        T = auto_T(scn, rays)
    table: dict[float, dict[str, complex | None]] = {}
    for h in h_list or scn.h_list:
        t0 = time.perf_counter()
        ps = wave_solution(scn, h, T)
        table[h] = wave_values(scn, ps.field, scn.observables)
        log.info("wave h=%g grid=%s T=%.3f steps=%d in %.1fs", h, ps.field.grid.shape, T,
                 ps.meta.get("steps", len(ps.times) - 1), time.perf_counter() - t0)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "wave.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q_id", "h", "re", "im"])
            for h, vals in table.items():
                for name, v in vals.items():
                    if v is None:
                        w.writerow([name, _fmt(h), "skipped", "skipped"])
                    else:
                        w.writerow([name, _fmt(h), _fmt(v.real), _fmt(v.imag)])
    return table


# ---------------------------------------------------------------------------
# convergence

@dataclass
class ConvergenceRow:
    q_id: str
    h: float
    wave_value: complex | None
    ray_value: float
    abs_diff: float | None
    rel_diff: float | None


@dataclass
class ConvergenceRun:
    scenario: str
    T: float
    rows: list[ConvergenceRow]
    rays: RayRun
    monotone: dict[str, bool]
    assertions: list[Check]

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def series(self, q_id: str) -> list[ConvergenceRow]:
        return [r for r in self.rows if r.q_id == q_id]


def _is_decreasing(v) -> bool:
    v = [x for x in v if x is not None]
    return len(v) >= 2 and all(b < a for a, b in zip(v, v[1:]))


def _assertions(scn: Scenario, run_rows, rays: RayRun, kinds: dict[str, str]) -> list[Check]:
    acc = scn.acceptance
    out: list[Check] = []
    hmin = min(scn.h_list)
    by = {}
    for r in run_rows:
        by.setdefault(r.q_id, []).append(r)
    for name, rows in by.items():
        if kinds[name] == "zero":
            ok = all(r.wave_value in (None, 0) and r.ray_value == 0 for r in rows)
            out.append(Check(f"zero-rows[{name}]", ok, "all zero" if ok else "nonzero entry"))
    tol = acc.get("main_tol")
    for name, rows in by.items():
        if kinds[name] != "shell_bump" or any(r.rel_diff is None for r in rows):
            continue
        rel = [r.rel_diff for r in rows]
        mono = _is_decreasing(rel)
        out.append(Check(f"main-limit-trend[{name}]", mono,
                         "rel_diff " + ", ".join(f"{x:.3g}" for x in rel)))
        if tol is not None:
            last = rows[-1].rel_diff
            out.append(Check(f"main-limit-final[{name}]", last <= tol, f"rel_diff {last:.3g} at h={hmin:g} "
                             f"(tol {tol:g})"))
    shells = [r for r in run_rows if kinds[r.q_id] == "shell_bump" and r.h == hmin and r.wave_value is not None]
    peak = max((abs(r.wave_value) for r in shells), default=None)
    for name, rows in by.items():
        if kinds[name] == "incoming_bump":
            ray = rows[0].ray_value
            out.append(Check(f"incoming-ray-zero[{name}]", ray == 0.0, f"ray value {ray!r}"))
            itol = acc.get("incoming_tol")
            if itol is not None and peak and rows[-1].wave_value is not None:
                frac = abs(rows[-1].wave_value) / peak
                out.append(Check(f"incoming-wave-small[{name}]", frac <= itol,
                                 f"|wave| / peak on-shell = {frac:.3g} at h={hmin:g} (tol {itol:g})"))
        if kinds[name] == "offshell_bump" and all(r.wave_value is not None for r in rows):
            mags = [abs(r.wave_value) for r in rows]
            out.append(Check(f"offshell-wave-decreasing[{name}]", _is_decreasing(mags),
                             "|wave| " + ", ".join(f"{x:.3g}" for x in mags)))
            on = [abs(e.value) for e in rays.evaluations if kinds[e.q_name] == "shell_bump"]
            if on:
                ratio = abs(rows[0].ray_value) / max(on)
                out.append(Check(f"offshell-ray-small[{name}]", ratio <= 1e-6, f"ray / on-shell = {ratio:.3g}"))
    return out


def run_convergence(scn: Scenario, out: Path | None = None, rays: RayRun | None = None) -> ConvergenceRun:
    """Wave pairings against the h-independent ray prediction, one row per (q, h)."""
    rays = rays or run_rays(scn, out)
    T = auto_T(scn, rays)
    waves = run_wave(scn, out, T=T)
    ray_by = rays.by_name()
    kinds = {q.name: q.meta.get("registry_kind", "unknown") for q in scn.observables}
    rows = []
    for q in scn.observables:
        ray = ray_by[q.name].value
        for h in scn.h_list:
            w = waves[h][q.name]
            if w is None:
                rows.append(ConvergenceRow(q.name, h, None, ray, None, None))
                continue
            ad = abs(w - ray)
            rd = ad / abs(ray) if ray != 0 else (0.0 if ad == 0 else math.inf)
            rows.append(ConvergenceRow(q.name, h, w, ray, ad, rd))
    # the prediction is h-independent: every row carries the very same object
    assert all(r.ray_value is ray_by[r.q_id].value for r in rows)
    monotone = {}
    for q in scn.observables:
        diffs = [r.abs_diff for r in rows if r.q_id == q.name]
        monotone[q.name] = _is_decreasing(diffs) if all(d is not None for d in diffs) else False
    run = ConvergenceRun(scn.name, T, rows, rays, monotone, _assertions(scn, rows, rays, kinds))
    if out is not None:
        out = Path(out)
        with open(out / "convergence.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q_id", "h", "wave_value", "ray_value", "abs_diff", "rel_diff"])
            for r in rows:
                wv = "skipped" if r.wave_value is None else f"{r.wave_value.real!r}{r.wave_value.imag:+.17g}j"
                w.writerow([r.q_id, _fmt(r.h), wv, _fmt(r.ray_value),
                            "" if r.abs_diff is None else _fmt(r.abs_diff),
                            "" if r.rel_diff is None else _fmt(r.rel_diff)])
        write_assertions(out, run.assertions)
    return run


def write_assertions(out: Path, checks: list[Check], append: bool = False) -> None:
    path = Path(out) / "assertions.csv"
    new = not (append and path.exists())
    with open(path, "w" if new else "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["assertion", "status", "detail"])
        for c in checks:
            w.writerow([c.name, "pass" if c.passed else "fail", c.detail])


# ---------------------------------------------------------------------------
# report

_PLOT_SCRIPT = '''"""Plot |wave - ray| / |ray| against h for each observable of this run."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

run = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
series = {}
with open(run / "convergence.csv") as fh:
    for row in csv.DictReader(fh):
        if row["rel_diff"] in ("", "inf"):
            continue
        series.setdefault(row["q_id"], []).append((float(row["h"]), float(row["rel_diff"])))
fig, ax = plt.subplots()
for name, pts in sorted(series.items()):
    pts.sort()
    ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=name)
ax.set_xlabel("h")
ax.set_ylabel("relative difference wave vs rays")
ax.legend()
fig.savefig(run / "convergence.png", dpi=150)
'''


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_report(rundir) -> str:
    """Deterministic text summary of a run directory; also writes report.txt and plot_convergence.py."""
    rundir = Path(rundir)
    if not rundir.is_dir():
        raise FileNotFoundError(f"run directory {rundir} does not exist")
    known = ["validation.txt", "measures.csv", "wave.csv", "convergence.csv", "assertions.csv"]
    present = [k for k in known if (rundir / k).exists()]
    if not present:
        raise FileNotFoundError(f"no run artifacts in {rundir}")
    # contents only, so that identical runs in different directories give identical reports
    lines = []
    cfg = rundir / "config.txt"
    if cfg.exists():
        for ln in cfg.read_text().splitlines():
            if ln.startswith("name ="):
                lines.append("scenario: " + ln.split("=", 1)[1].strip())
    lines.append(f"artifacts: {', '.join(present)}")
    lines.append("")
    if "validation.txt" in present:
        lines.append("== hypotheses")
        lines.extend((rundir / "validation.txt").read_text().rstrip("\n").splitlines())
        lines.append("")
    if "measures.csv" in present:
        lines.append("== ray predictions (q_id, value, error_estimate)")
        for r in _read_csv(rundir / "measures.csv"):
            lines.append(f"{r['q_id']:>16s}  {float(r['value']): .10e}  {float(r['error_estimate']):.3e}")
        lines.append("")
    if "convergence.csv" in present:
        lines.append("== wave vs rays (q_id, h, |wave|, ray, rel_diff)")
        for r in _read_csv(rundir / "convergence.csv"):
            if r["wave_value"] == "skipped":
                lines.append(f"{r['q_id']:>16s}  h={float(r['h']):<10.6g} wave skipped")
                continue
            w = abs(complex(r["wave_value"]))
            rd = r["rel_diff"]
            lines.append(f"{r['q_id']:>16s}  h={float(r['h']):<10.6g} {w: .6e}  {float(r['ray_value']): .6e}  "
                         f"{'-' if rd == '' else format(float(rd), '.4g')}")
        lines.append("")
    elif "wave.csv" in present:
        lines.append("== wave pairings (q_id, h, re, im)")
        for r in _read_csv(rundir / "wave.csv"):
            lines.append(f"{r['q_id']:>16s}  h={float(r['h']):<10.6g} {r['re']}  {r['im']}")
        lines.append("")
    lines.append("== acceptance")
    if "assertions.csv" in present:
        rows = _read_csv(rundir / "assertions.csv")
        if not rows:
            lines.append("no assertions executed")
        for r in rows:
            lines.append(f"[{r['status'].upper()}] {r['assertion']}: {r['detail']}")
        n_fail = sum(r["status"] != "pass" for r in rows)
        lines.append(f"{len(rows) - n_fail} passed, {n_fail} failed")
    else:
        lines.append("no assertions executed")
    text = "\n".join(lines) + "\n"
    (rundir / "report.txt").write_text(text)
    (rundir / "plot_convergence.py").write_text(_PLOT_SCRIPT)
    return text
