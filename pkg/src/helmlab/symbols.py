"""Phase-space symbols q(x, xi) with closed-form gradients.

Most observables used here are finite sums of products ``a(x) b(xi)``; keeping
that structure explicit lets the grid pairing avoid the full Wigner transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Box = tuple[np.ndarray, np.ndarray]

# exp(-cut**2 / 2) for the default cut is ~1.5e-8; the truncation is what makes
# the bumps compactly supported for the ray-side certificates.
DEFAULT_CUT = 6.0


class Factor:
    """One-variable factor (in x or in xi) of a separable symbol."""

    name = "factor"

    def value(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support(self, n: int) -> Box | None:
        """Bounding box of the support, or None when unbounded."""
        return None

    def axis_factors(self, n: int) -> list[Callable] | None:
        """Per-axis 1-d functions whose product is this factor, when it splits that way."""
        return None

    @property
    def is_constant(self) -> bool:
        return False

    def smooth(self) -> "Factor":
        """Factor used for spectral expansions; differs from this one by at most
        the truncation level (the jump at a cut would otherwise produce a slowly
        decaying spectrum)."""
        return self


@dataclass
class Constant(Factor):
    c: float = 1.0
    name = "constant"

    def value(self, y):
        return np.full(np.shape(y)[:-1], self.c, dtype=float)

    def grad(self, y):
        return np.zeros(np.shape(y), dtype=float)

    def axis_factors(self, n):
        fs = [lambda t: np.ones_like(t, dtype=float)] * n
        c = self.c
        return [lambda t, c=c: np.full_like(t, c, dtype=float)] + fs[1:]

    @property
    def is_constant(self):
        return True


@dataclass
class Coordinate(Factor):
    """The linear function y -> y[axis]."""

    axis: int = 0
    name = "coordinate"

    def value(self, y):
        return np.asarray(y, dtype=float)[..., self.axis]

    def grad(self, y):
        g = np.zeros(np.shape(y), dtype=float)
        g[..., self.axis] = 1.0
        return g

    def axis_factors(self, n):
        fs = [lambda t: np.ones_like(t, dtype=float) for _ in range(n)]
        fs[self.axis] = lambda t: np.asarray(t, dtype=float)
        return fs


@dataclass
class GaussianBump(Factor):
    """exp(-|y - c|^2 / (2 w^2)), set to zero outside the box |y_i - c_i| <= cut * w."""

    center: Sequence[float]
    width: float
    cut: float = DEFAULT_CUT
    name = "gaussian_bump"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.width <= 0:
            raise ValueError("bump width must be positive")

    def _inside(self, y):
        return np.all(np.abs(y - self.center) <= self.cut * self.width, axis=-1)

    def value(self, y):
        y = np.asarray(y, dtype=float)
        r2 = np.sum((y - self.center) ** 2, axis=-1)
        return np.where(self._inside(y), np.exp(-0.5 * r2 / self.width**2), 0.0)

    def grad(self, y):
        y = np.asarray(y, dtype=float)
        return -(y - self.center) / self.width**2 * self.value(y)[..., None]

    def support(self, n):
        r = self.cut * self.width
        return self.center - r, self.center + r

    def smooth(self):
        return GaussianBump(self.center, self.width, np.inf)

    def axis_factors(self, n):
        w, cut = self.width, self.cut

        def make(c):
            def f(t):
                t = np.asarray(t, dtype=float)
                return np.where(np.abs(t - c) <= cut * w, np.exp(-0.5 * (t - c) ** 2 / w**2), 0.0)
            return f

        return [make(c) for c in self.center]


@dataclass
class ShellBump(Factor):
    """psi(|xi|^2) with psi a truncated Gaussian of width ``width`` around ``level``.

    Used in xi to localise near (or away from) an energy shell |xi|^2 = level.
    """

    level: float
    width: float
    cut: float = DEFAULT_CUT
    name = "shell_bump"

    def _psi(self, s):
        d = s - self.level
        return np.where(np.abs(d) <= self.cut * self.width, np.exp(-0.5 * d**2 / self.width**2), 0.0)

    def value(self, y):
        return self._psi(np.sum(np.asarray(y, dtype=float) ** 2, axis=-1))

    def grad(self, y):
        y = np.asarray(y, dtype=float)
        s = np.sum(y**2, axis=-1)
        dpsi = -(s - self.level) / self.width**2 * self._psi(s)
        return 2 * y * dpsi[..., None]

    def support(self, n):
        top = self.level + self.cut * self.width
        r = np.sqrt(max(top, 0.0))
        return -np.full(n, r), np.full(n, r)

    @property
    def radial_range(self) -> tuple[float, float]:
        lo = max(self.level - self.cut * self.width, 0.0)
        return np.sqrt(lo), np.sqrt(max(self.level + self.cut * self.width, 0.0))


@dataclass
class Term:
    coeff: float
    xfactor: Factor
    xifactor: Factor


@dataclass
class Symbol:
    """A symbol q(x, xi).

    Either built from separable ``terms`` (preferred) or from plain callables.
    ``kind`` is a tag among compactly-supported | bounded-with-derivatives | weighted.
    """

    n: int
    terms: list[Term] | None = None
    func: Callable | None = None
    grad_x_func: Callable | None = None
    grad_xi_func: Callable | None = None
    x_box: Box | None = None
    xi_box: Box | None = None
    kind: str = "bounded-with-derivatives"
    name: str = "q"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.terms is None and self.func is None:
            raise ValueError("a symbol needs terms or a function")
        if self.terms is not None and self.x_box is None:
            self.x_box = _union_box([t.xfactor.support(self.n) for t in self.terms])
        if self.terms is not None and self.xi_box is None:
            self.xi_box = _union_box([t.xifactor.support(self.n) for t in self.terms])
        if self.x_box is not None and self.xi_box is not None and self.kind == "bounded-with-derivatives":
            self.kind = "compactly-supported"

    # construction helpers
    @classmethod
    def product(cls, xfactor: Factor, xifactor: Factor, n: int, coeff: float = 1.0, **kw) -> "Symbol":
        return cls(n=n, terms=[Term(coeff, xfactor, xifactor)], **kw)

    @classmethod
    def zero(cls, n: int) -> "Symbol":
        return cls(n=n, terms=[], x_box=(np.zeros(n), np.zeros(n)),
                   xi_box=(np.zeros(n), np.zeros(n)), kind="compactly-supported", name="zero")

    @classmethod
    def one(cls, n: int) -> "Symbol":
        return cls.product(Constant(1.0), Constant(1.0), n, name="one")

    @property
    def is_separable(self) -> bool:
        return self.terms is not None

    @property
    def is_zero(self) -> bool:
        return self.terms is not None and len(self.terms) == 0

    @property
    def compact(self) -> bool:
        return self.x_box is not None and self.xi_box is not None

    def __call__(self, x, xi):
        return self.value(x, xi)

    def value(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if self.terms is None:
            return self.func(x, xi)
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        out = np.zeros(shape)
        for t in self.terms:
            out = out + t.coeff * t.xfactor.value(x) * t.xifactor.value(xi)
        return out

    def grad_x(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if self.terms is None:
            if self.grad_x_func is None:
                return _fd_grad(lambda y: self.func(y, xi), x)
            return self.grad_x_func(x, xi)
        shape = np.broadcast_shapes(x.shape, xi.shape)
        out = np.zeros(shape)
        for t in self.terms:
            out = out + t.coeff * t.xfactor.grad(x) * t.xifactor.value(xi)[..., None]
        return out

    def grad_xi(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if self.terms is None:
            if self.grad_xi_func is None:
                return _fd_grad(lambda y: self.func(x, y), xi)
            return self.grad_xi_func(x, xi)
        shape = np.broadcast_shapes(x.shape, xi.shape)
        out = np.zeros(shape)
        for t in self.terms:
            out = out + t.coeff * t.xfactor.value(x)[..., None] * t.xifactor.grad(xi)
        return out

    def sup_abs(self, samples: int = 0) -> float:
        """Upper bound on |q| for separable symbols built from bounded factors."""
        if self.terms is None:
            if "sup_abs" in self.meta:
                return float(self.meta["sup_abs"])
            raise ValueError("sup bound only available for separable symbols")
        total = 0.0
        for t in self.terms:
            fx = abs(t.xfactor.c) if isinstance(t.xfactor, Constant) else 1.0
            fxi = abs(t.xifactor.c) if isinstance(t.xifactor, Constant) else 1.0
            if isinstance(t.xfactor, Coordinate) or isinstance(t.xifactor, Coordinate):
                return np.inf
            total += abs(t.coeff) * fx * fxi
        return total

    def x_support_radius(self) -> float:
        """sup |x| over the x support box (inf when unbounded)."""
        if self.x_box is None:
            return np.inf
        lo, hi = self.x_box
        corner = np.maximum(np.abs(lo), np.abs(hi))
        return float(np.linalg.norm(corner))


def _union_box(boxes):
    if any(b is None for b in boxes):
        return None
    if not boxes:
        return None
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    return lo, hi


def _fd_grad(f, y, step: float = 1e-6):
    y = np.asarray(y, dtype=float)
    g = np.zeros(y.shape)
    for i in range(y.shape[-1]):
        e = np.zeros(y.shape[-1])
        e[i] = step
        g[..., i] = (f(y + e) - f(y - e)) / (2 * step)
    return g
