"""Scenario descriptions: everything both sides of a comparison need, built from a flat config."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from .config import Config, ConfigError, parse_config
from .dynamics import EscapeGeometry, PotentialPair, SumPotential, escape_geometry, make_potential
from .grid import GridSpec
from .observables import build_observable
from .raymeasure import RayBudget, RaySetup
from .source import Amplitude, BumpProfile, GaussianProfile, Profile
from .symbols import Symbol

__all__ = ["Scenario", "load_scenario", "BUILTIN", "builtin_config"]


BUILTIN: dict[str, str] = {}

BUILTIN["free_point"] = """\
name = free_point
dim = 2
manifold.kind = point
manifold.point = 0, 0
amplitude.kind = constant
amplitude.value = 1
amplitude.delta = 1
profile.kind = gaussian
potential.V1.kind = zero
potential.V2.kind = zero
potential.rho = 1
energy.E0 = 1
energy.Etilde_re = 0
energy.Etilde_im = 1
energy.E1 = 0.8
energy.E2 = 1.2
incoming.sigma1 = 0.5
incoming.R1 = 1
wave.h_list = 0.125, 0.0625, 0.03125, 0.015625
wave.box_lower = -4, -4
wave.box_upper = 4, 4
wave.sponge_fraction = 0.15
wave.tau0 = 0.5
wave.T = auto
wave.T_margin = 1.5
rays.panels = 1
rays.order = 1
rays.fiber = 512
rays.dt = 0.01
rays.horizon = 60
observables = shell_a, shell_b, shell_c, incoming, offshell, radial, zero
observable.shell_a.kind = shell_bump
observable.shell_a.center = 1.0, 0.0
observable.shell_a.width = 0.15
observable.shell_a.xi_width = 0.1
observable.shell_b.kind = shell_bump
observable.shell_b.center = 0.0, -0.7
observable.shell_b.width = 0.15
observable.shell_b.xi_width = 0.1
observable.shell_c.kind = shell_bump
observable.shell_c.center = -0.8, 0.8
observable.shell_c.width = 0.15
observable.shell_c.xi_width = 0.1
observable.incoming.kind = incoming_bump
observable.incoming.center = 1.5, 0.0
observable.incoming.width = 0.1
observable.incoming.xi_width = 0.05
observable.incoming.R = 0.8
observable.incoming.sigma = 0.3
observable.offshell.kind = offshell_bump
observable.offshell.center = 0.8, 0.6
observable.offshell.width = 0.15
observable.offshell.xi_width = 0.08
observable.offshell.gap = 0.6
observable.radial.kind = radial_bump
observable.radial.center = 0.6, 0.8
observable.radial.width = 0.15
observable.radial.xi_center = 0.6, 0.8
observable.radial.xi_width = 0.15
observable.zero.kind = zero
acceptance.main_tol = 0.15
acceptance.incoming_tol = 0.01
seed = 0
"""

BUILTIN["affine_line"] = """\
name = affine_line
dim = 2
manifold.kind = affine
manifold.origin = 0, 0
manifold.direction = 1, 0
manifold.lower = -7
manifold.upper = 7
amplitude.kind = gaussian
amplitude.width = 1.0
amplitude.delta = 1
profile.kind = gaussian
potential.V1.kind = constant
potential.V1.value = 0.1
potential.V2.kind = zero
potential.rho = 1
energy.E0 = 1
energy.Etilde_re = 0
energy.Etilde_im = 1
energy.E1 = 0.8
energy.E2 = 1.2
incoming.sigma1 = 0.1
incoming.R1 = 1
wave.h_list = 0.125, 0.0625, 0.03125, 0.015625
wave.box_lower = -7, -2
wave.box_upper = 7, 2
wave.sponge_fraction = 0.15
wave.tau0 = 0.5
wave.T = auto
wave.T_margin = 1.5
rays.panels = 56
rays.order = 8
rays.fiber = 2
rays.dt = 0.01
rays.horizon = 60
observables = near, side, zero
observable.near.kind = shell_bump
observable.near.center = 0.0, 0.3
observable.near.width = 0.06
observable.near.xi_width = 0.1
observable.side.kind = shell_bump
observable.side.center = 1.0, 0.5
observable.side.width = 0.1
observable.side.xi_width = 0.1
observable.zero.kind = zero
truncation.R0 = 1.6
truncation.R = 3.2
truncation.observable = near
acceptance.truncation_tol = 0.02
seed = 0
"""

BUILTIN["gaussian_bump"] = """\
name = gaussian_bump
dim = 2
manifold.kind = point
manifold.point = 0, 0
amplitude.kind = constant
amplitude.value = 1
amplitude.delta = 1
profile.kind = gaussian
potential.V1.kind = gaussian_bump
potential.V1.amplitude = 0.4
potential.V1.width = 0.8
potential.V1.center = 0.6, 0.4
potential.V2.kind = zero
potential.rho = 2
energy.E0 = 1
energy.Etilde_re = 0
energy.Etilde_im = 1
energy.E1 = 0.8
energy.E2 = 1.2
incoming.sigma1 = 0.5
incoming.R1 = 1
wave.h_list = 0.125, 0.0625
wave.box_lower = -4, -4
wave.box_upper = 4, 4
wave.sponge_fraction = 0.15
wave.tau0 = 0.5
wave.T = auto
wave.T_margin = 1.5
rays.panels = 1
rays.order = 1
rays.fiber = 512
rays.dt = 0.01
rays.horizon = 60
observables = shell_a, shell_b, incoming, offshell, radial, zero, one
observable.shell_a.kind = shell_bump
observable.shell_a.center = 1.2, 0.2
observable.shell_a.width = 0.15
observable.shell_a.xi_width = 0.1
observable.shell_b.kind = shell_bump
observable.shell_b.center = -0.5, 0.9
observable.shell_b.width = 0.15
observable.shell_b.xi_width = 0.1
observable.incoming.kind = incoming_bump
observable.incoming.center = -2.0, 0.0
observable.incoming.width = 0.1
observable.incoming.xi_width = 0.05
observable.incoming.R = 1.2
observable.incoming.sigma = 0.3
observable.offshell.kind = offshell_bump
observable.offshell.center = 0.8, 0.6
observable.offshell.width = 0.15
observable.offshell.xi_width = 0.08
observable.offshell.gap = 0.6
observable.radial.kind = radial_bump
observable.radial.center = 1.0, 1.0
observable.radial.width = 0.2
observable.radial.xi_center = 0.7, 0.7
observable.radial.xi_width = 0.2
observable.zero.kind = zero
observable.one.kind = one
seed = 0
"""

BUILTIN["damped"] = BUILTIN["gaussian_bump"].replace("name = gaussian_bump", "name = damped").replace(
    "potential.V2.kind = zero\n",
    "potential.V2.kind = gaussian_bump\npotential.V2.amplitude = 0.5\n"
    "potential.V2.width = 1.0\npotential.V2.center = 1.0, 0.0\n")

BUILTIN["signchanging_v2"] = """\
name = signchanging_v2
dim = 2
manifold.kind = point
manifold.point = 0, 0
amplitude.kind = constant
amplitude.value = 1
amplitude.delta = 1
profile.kind = gaussian
potential.V1.kind = gaussian_bump
potential.V1.amplitude = -10
potential.V1.width = 1.0
potential.V1.center = 0, 0
potential.V2.kind = sum
potential.V2.parts = core, sink
potential.V2.core.kind = gaussian_bump
potential.V2.core.amplitude = 0.5
potential.V2.core.width = 2.0
potential.V2.core.center = 0, 0
potential.V2.sink.kind = gaussian_bump
potential.V2.sink.amplitude = -0.3
potential.V2.sink.width = 0.7
potential.V2.sink.center = 3.5, 0
potential.rho = 2
energy.E0 = 1
energy.Etilde_re = 0
energy.Etilde_im = 1
energy.E1 = 0.8
energy.E2 = 1.2
incoming.sigma1 = 0.5
incoming.R1 = 1
wave.h_list = 0.125, 0.0625
wave.box_lower = -5, -5
wave.box_upper = 5, 5
wave.sponge_fraction = 0.15
wave.tau0 = 0.5
wave.T = auto
wave.T_margin = 1.5
rays.panels = 1
rays.order = 1
rays.fiber = 256
rays.dt = 0.005
rays.horizon = 60
damping.T_max = 20
damping.samples = 400
damping.box = 2.5
observables = shell_a, radial, zero
observable.shell_a.kind = shell_bump
observable.shell_a.center = 2.0, 0.0
observable.shell_a.width = 0.15
observable.shell_a.xi_width = 0.1
observable.radial.kind = radial_bump
observable.radial.center = 0.0, 2.0
observable.radial.width = 0.2
observable.radial.xi_center = 0.0, 1.0
observable.radial.xi_width = 0.2
observable.zero.kind = zero
seed = 0
"""


def builtin_config(name: str) -> Config:
    if name not in BUILTIN:
        raise KeyError(f"unknown built-in scenario {name!r}; known: {', '.join(sorted(BUILTIN))}")
    cfg = parse_config(BUILTIN[name])
    cfg.source = f"builtin:{name}"
    return cfg


def _potential(cfg: Config, prefix: str, n: int):
    sec = cfg.section(prefix)
    kind = sec.get("kind", "zero")
    if kind == "sum":
        parts = []
        for part in cfg.list(prefix + ".parts"):
            parts.append(_potential(cfg, f"{prefix}.{part}", n))
        return SumPotential(parts)
    params = {}
    for k, v in sec.items():
        if "." in k or k == "kind":
            continue
        if k == "center":
            params[k] = tuple(cfg.vector(f"{prefix}.center"))
        else:
            params[k] = cfg.float(f"{prefix}.{k}")
    try:
        return make_potential(kind, **params)
    except KeyError as exc:
        raise ConfigError(str(exc), cfg.lines.get(prefix + ".kind"), prefix + ".kind") from None


def _manifold(cfg: Config, n: int) -> geo.Submanifold:
    kind = cfg.str("manifold.kind")
    if kind == "point":
        return geo.point(cfg.vector("manifold.point", np.zeros(n)))
    if kind == "affine":
        dirs = cfg.vector("manifold.direction").reshape(-1, n)
        return geo.affine(cfg.vector("manifold.origin", np.zeros(n)), dirs,
                          cfg.vector("manifold.lower"), cfg.vector("manifold.upper"))
    if kind in ("sphere", "circle"):
        return geo.sphere(cfg.vector("manifold.center", np.zeros(n)), cfg.float("manifold.radius"), n)
    raise ConfigError(f"unknown manifold kind {kind!r}", cfg.lines.get("manifold.kind"), "manifold.kind")


def _amplitude(cfg: Config) -> Amplitude:
    kind = cfg.str("amplitude.kind", "constant")
    delta = cfg.float("amplitude.delta", 1.0)
    if kind == "constant":
        return Amplitude.constant(cfg.float("amplitude.value", 1.0), delta)
    if kind == "gaussian":
        center = cfg.vector("amplitude.center") if "amplitude.center" in cfg else None
        return Amplitude.gaussian(cfg.float("amplitude.width"), center, delta, cfg.float("amplitude.value", 1.0))
    raise ConfigError(f"unknown amplitude kind {kind!r}", cfg.lines.get("amplitude.kind"), "amplitude.kind")


def _profile(cfg: Config, n: int) -> Profile:
    kind = cfg.str("profile.kind", "gaussian")
    if kind == "gaussian":
        return GaussianProfile(n)
    if kind == "bump":
        return BumpProfile(n, cfg.float("profile.radius", 3.0))
    raise ConfigError(f"unknown profile kind {kind!r}", cfg.lines.get("profile.kind"), "profile.kind")


@dataclass
class Scenario:
    name: str
    n: int
    gamma: geo.Submanifold
    A: Amplitude
    S: Profile
    pots: PotentialPair
    E0: float
    Etilde: complex
    E1: float
    E2: float
    sigma1: float
    R1: float
    h_list: list[float]
    box_lower: np.ndarray
    box_upper: np.ndarray
    sponge_fraction: float
    tau0: float
    T: float | None
    T_margin: float
    ray_budget: RayBudget
    observables: list[Symbol]
    config: Config
    seed: int = 0
    truncation: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    damping: dict = field(default_factory=dict)
    _geom: EscapeGeometry | None = None

    @property
    def geom(self) -> EscapeGeometry:
        if self._geom is None:
            self._geom = escape_geometry(self.pots, self.E1, self.E2, self.sigma1, self.n, seed=self.seed)
        return self._geom

    def ray_setup(self, A: Amplitude | None = None) -> RaySetup:
        return RaySetup(self.gamma, A or self.A, self.S, self.pots, self.E0, self.Etilde, self.geom)

    def grid(self, h: float) -> GridSpec:
        return GridSpec.box(self.box_lower, self.box_upper, h / 4)

    def observable(self, name: str) -> Symbol:
        for q in self.observables:
            if q.name == name:
                return q
        raise KeyError(name)

    def profile_speed(self, rel: float = 1e-8) -> float:
        """Group speed 2|xi| at the radius past which |S_hat| < rel * max (sponge design speed)."""
        if isinstance(self.S, GaussianProfile):
            return 2 * math.sqrt(2 * math.log(1 / rel))
        k = np.linspace(0, 40, 801)
        vals = np.abs(self.S.fourier(np.stack([k, np.zeros_like(k)] + [np.zeros_like(k)] * (self.n - 2),
                                              axis=-1)))
        big = np.nonzero(vals > rel * vals.max())[0]
        return 2 * float(k[big[-1]])


def load_scenario(spec, overrides: dict | None = None, budget_scale: float = 1.0, seed: int | None = None) -> Scenario:
    """Build a scenario from a config path, a Config, or a built-in name."""
    if isinstance(spec, Config):
        cfg = spec
    elif isinstance(spec, (str, Path)) and Path(spec).is_file():
        cfg = parse_config(path=spec)
    elif isinstance(spec, str):
        cfg = builtin_config(spec.removeprefix("builtin:"))
    else:
        raise ConfigError(f"cannot load scenario from {spec!r}")
    for k, v in (overrides or {}).items():
        cfg.set(k, v)
    n = cfg.int("dim", 2)
    pots = PotentialPair(_potential(cfg, "potential.V1", n), _potential(cfg, "potential.V2", n),
                         cfg.float("potential.rho", 1.0))
    E0 = cfg.float("energy.E0")
    Et = complex(cfg.float("energy.Etilde_re", 0.0), cfg.float("energy.Etilde_im", 1.0))
    the_seed = cfg.int("seed", 0) if seed is None else int(seed)
    budget = RayBudget(geo.QuadratureBudget(cfg.int("rays.panels", 8), cfg.int("rays.order", 8),
                                            cfg.int("rays.fiber", 64), the_seed),
                       dt=cfg.float("rays.dt", 0.01), horizon=cfg.float("rays.horizon", 60.0))
    if budget_scale != 1.0:
        budget = budget.scaled(budget_scale)
    obs = []
    for name in cfg.list("observables", []):
        sec = cfg.section(f"observable.{name}")
        if "kind" not in sec:
            raise ConfigError("observable has no kind", key=f"observable.{name}.kind")
        params = {}
        for k, v in sec.items():
            if k == "kind":
                continue
            params[k] = cfg.vector(f"observable.{name}.{k}") if "," in v else v
        try:
            obs.append(build_observable(sec["kind"], params, n, E0, pots.V1, name))
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc), cfg.lines.get(f"observable.{name}.kind"), f"observable.{name}") from None
    T_raw = cfg.str("wave.T", "auto")
    trunc = {k: (float(v) if k != "observable" else v) for k, v in cfg.section("truncation").items()}
    acc = {k: float(v) for k, v in cfg.section("acceptance").items()}
    damping = {k: float(v) for k, v in cfg.section("damping").items()}
    return Scenario(
        name=cfg.str("name", "scenario"), n=n, gamma=_manifold(cfg, n), A=_amplitude(cfg), S=_profile(cfg, n),
        pots=pots, E0=E0, Etilde=Et, E1=cfg.float("energy.E1", 0.8 * E0), E2=cfg.float("energy.E2", 1.2 * E0),
        sigma1=cfg.float("incoming.sigma1", 0.5), R1=cfg.float("incoming.R1", 1.0),
        h_list=[float(h) for h in cfg.vector("wave.h_list", [0.125, 0.0625])],
        box_lower=cfg.vector("wave.box_lower", -4 * np.ones(n)), box_upper=cfg.vector("wave.box_upper", 4 * np.ones(n)),
        sponge_fraction=cfg.float("wave.sponge_fraction", 0.15), tau0=cfg.float("wave.tau0", 0.5),
        T=None if T_raw == "auto" else float(T_raw), T_margin=cfg.float("wave.T_margin", 1.5),
        ray_budget=budget, observables=obs, config=cfg, seed=the_seed, truncation=trunc, acceptance=acc,
        damping=damping)
