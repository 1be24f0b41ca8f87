"""Registry of test observables q(x, xi), all with closed-form gradients.

Kinds: radial_bump, shell_bump, incoming_bump, offshell_bump, zero, one.
Shell-type bumps localise near a level of p(x, xi) = |xi|^2 + V1(x); they stay
separable (and cheap to pair on a grid) when V1 is constant.
"""
from __future__ import annotations

import itertools

import numpy as np

from .dynamics import ConstantPotential, Potential, zone_membership
from .symbols import DEFAULT_CUT, Constant, GaussianBump, ShellBump, Symbol

__all__ = ["build_observable", "level_bump", "support_in_zone", "KINDS"]

KINDS = ("radial_bump", "shell_bump", "incoming_bump", "offshell_bump", "zero", "one")


def _vec(v, n):
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.size == 1 and n > 1:
        a = np.full(n, float(a[0]))
    if a.size != n:
        raise ValueError(f"expected {n} components, got {a.size}")
    return a


def level_bump(xfactor: GaussianBump, V1: Potential, level: float, width: float, n: int,
               name: str, cut: float = DEFAULT_CUT) -> Symbol:
    """a(x) psi(p(x, xi) - level) with psi a truncated Gaussian of width ``width``."""
    if isinstance(V1, ConstantPotential) or V1.is_zero:
        c = float(V1.value(np.zeros((1, n)))[0])
        return Symbol.product(xfactor, ShellBump(level - c, width, cut), n, name=name)
    shell = ShellBump(0.0, width, cut)

    def psi(s):
        return shell._psi(s)

    def dpsi(s):
        return -s / width**2 * shell._psi(s)

    def func(x, xi):
        s = np.sum(xi**2, -1) + V1.value(x) - level
        return xfactor.value(x) * psi(s)

    def gx(x, xi):
        s = np.sum(xi**2, -1) + V1.value(x) - level
        return xfactor.grad(x) * psi(s)[..., None] + (xfactor.value(x) * dpsi(s))[..., None] * V1.grad(x)

    def gxi(x, xi):
        s = np.sum(xi**2, -1) + V1.value(x) - level
        return (xfactor.value(x) * dpsi(s))[..., None] * 2 * xi

    xlo, xhi = xfactor.support(n)
    corners = np.array(list(itertools.product(*zip(xlo, xhi))))
    lattice = np.stack(np.meshgrid(*[np.linspace(a, b, 41) for a, b in zip(xlo, xhi)], indexing="ij"),
                       axis=-1).reshape(-1, n)
    vmin = float(np.min(V1.value(np.vstack([corners, lattice]))))
    r = np.sqrt(max(level + cut * width - vmin, 0.0)) * 1.05
    return Symbol(n=n, func=func, grad_x_func=gx, grad_xi_func=gxi, x_box=(xlo, xhi),
                  xi_box=(-np.full(n, r), np.full(n, r)), kind="compactly-supported", name=name,
                  meta={"sup_abs": 1.0})


def support_in_zone(q: Symbol, R: float, sigma: float, sign: str = "-", samples: int = 9) -> bool:
    """Sampled check that the (x, xi) support box of q lies in Z_sign(R, 0, sigma)."""
    n = q.n
    xs = [np.linspace(a, b, samples) for a, b in zip(*q.x_box)]
    ks = [np.linspace(a, b, samples) for a, b in zip(*q.xi_box)]
    X = np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1).reshape(-1, n)
    K = np.stack(np.meshgrid(*ks, indexing="ij"), axis=-1).reshape(-1, n)
    ok = zone_membership(X[:, None, :], K[None, :, :], R, 0.0, sigma, sign)
    return bool(np.all(ok))


def build_observable(kind: str, params: dict, n: int, E0: float, V1: Potential, name: str | None = None) -> Symbol:
    """Build a registry observable; ``params`` values may be strings from a config file."""
    q = _build(kind.strip().lower(), params, n, E0, V1, name)
    q.meta["registry_kind"] = kind.strip().lower()
    return q


def _build(kind, params, n, E0, V1, name):
    name = name or kind
    get = params.get
    if kind == "zero":
        q = Symbol.zero(n)
        q.name = name
        return q
    if kind == "one":
        q = Symbol.one(n)
        q.name = name
        return q
    center = _vec(get("center", 0.0), n)
    width = float(get("width", 0.2))
    cut = float(get("cut", DEFAULT_CUT))
    xf = GaussianBump(center, width, cut)
    if kind == "radial_bump":
        xiw = float(get("xi_width", 1.0))
        xic = _vec(get("xi_center", 0.0), n)
        return Symbol.product(xf, GaussianBump(xic, xiw, cut), n, name=name)
    if kind == "shell_bump":
        return level_bump(xf, V1, E0, float(get("xi_width", 0.1)), n, name, cut)
    if kind == "offshell_bump":
        w = float(get("xi_width", 0.08))
        gap = float(get("gap", 0.6))
        if gap <= cut * w:
            raise ValueError(f"{name}: gap {gap} must exceed cut*xi_width = {cut * w} to stay off the shell")
        return level_bump(xf, V1, E0 + gap, w, n, name, cut)
    if kind == "incoming_bump":
        r = np.linalg.norm(center)
        if r == 0:
            raise ValueError(f"{name}: incoming bump needs a nonzero center")
        c1 = float(V1.value(center[None])[0])
        speed = float(get("xi_norm", np.sqrt(max(E0 - c1, 1e-12))))
        xi_c = -speed * center / r
        xiw = float(get("xi_width", 0.05))
        q = Symbol.product(xf, GaussianBump(xi_c, xiw, cut), n, name=name)
        R = float(get("R", 0.0))
        sigma = float(get("sigma", 0.3))
        if not support_in_zone(q, R, -sigma, "-"):
            raise ValueError(f"{name}: support is not inside the incoming zone Z_-({R}, 0, {-sigma})")
        q.meta.update({"zone_R": R, "zone_sigma": sigma})
        return q
    raise KeyError(f"unknown observable kind {kind!r}; known: {', '.join(KINDS)}")
