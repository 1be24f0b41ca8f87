"""Discrete Weyl / standard quantization and the pairing <Op_h^w(q) u, u> on grids.

The discrete Weyl operator used throughout is the midpoint-kernel operator on
the grid torus

    (Op u)_j = sum_l K_jl u_l,
    K_jl = N^-n sum_k exp(i k (x_j - x_l)) q((x_j + x_l) / 2, h k),

with k running over the FFT wavenumbers and (x_j + x_l) / 2 taken with the
unwrapped node coordinates.  Its quadratic form is the integral of q against
the discrete Wigner function; both routes below evaluate exactly that form.
"""
from __future__ import annotations

import csv
import itertools

import numpy as np

from .grid import GridField, GridSpec, ResolutionError
from .symbols import Symbol

__all__ = [
    "ResolutionError",
    "UnsupportedSymbolError",
    "wigner_function",
    "wigner_pairing",
    "weyl_apply",
    "standard_apply",
    "write_wigner_slice",
]

# l1 mass of discarded x-modes relative to the total
_MODE_REL_TOL = 1e-13
_GENERAL_PAIR_LIMIT = 2.0e7


class UnsupportedSymbolError(ValueError):
    pass


def _check_field(u: GridField, h: float, edge_tol: float | None) -> None:
    u.grid.check_resolves(h)
    if edge_tol is not None:
        u.check_edge_decay(edge_tol)


def _midpoint_axis(grid: GridSpec, ax: int) -> np.ndarray:
    # s = j + l runs over 0 .. 2N - 1 (the last node is never reached but keeps the period)
    m = grid.shape[ax]
    return grid.origin[ax] + 0.5 * grid.spacing[ax] * np.arange(2 * m)


def wigner_function(u: GridField, h: float):
    """Discrete Wigner function of ``u``.

    Returns ``(mid_axes, xi_axes, W)`` where ``W[s, kappa]`` is indexed by the
    midpoint multi-index ``s = j + l`` (2N - 1 values per axis) and the FFT
    wavenumber index; ``sum(q(mid_s, xi_kappa) W) * cell_volume`` is the pairing.
    """
    g = u.grid
    n = g.ndim
    npairs = np.prod(g.shape) ** 2
    if npairs > _GENERAL_PAIR_LIMIT:
        raise UnsupportedSymbolError(
            f"general Wigner transform needs {npairs:.2e} pairs; use a separable symbol on grids this large")
    shape = g.shape
    c = u.data
    # C[s, d mod N] accumulated over all index pairs (j, l) with s = j + l, d = j - l.
    idx = [np.arange(m) for m in shape]
    W = np.zeros(tuple(2 * m - 1 for m in shape) + tuple(shape), dtype=complex)
    jj = np.meshgrid(*idx, indexing="ij")
    flat_j = [a.ravel() for a in jj]
    uj = c.ravel()
    for lflat, ul in enumerate(c.ravel()):
        l = np.unravel_index(lflat, shape)
        s = tuple(fj + li for fj, li in zip(flat_j, l))
        d = tuple((fj - li) % m for fj, li, m in zip(flat_j, l, shape))
        np.add.at(W, s + d, np.conj(uj) * ul)
    axes = tuple(range(n, 2 * n))
    W = np.fft.ifftn(W, axes=axes).real
    mids = [_midpoint_axis(g, ax)[: 2 * m - 1] for ax, m in enumerate(shape)]
    xis = [h * k for k in g.wavenumbers()]
    return mids, xis, W


def _pairing_general(q: Symbol, u: GridField, h: float) -> complex:
    mids, xis, W = wigner_function(u, h)
    n = u.grid.ndim
    X = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)
    K = np.stack(np.meshgrid(*xis, indexing="ij"), axis=-1)
    Xb = X.reshape(X.shape[:-1] + (1,) * n + (n,))
    Kb = K.reshape((1,) * n + K.shape)
    vals = q.value(Xb, Kb)
    return complex(np.sum(vals * W) * u.grid.cell_volume)


def _x_modes(factor, grid: GridSpec):
    """Fourier modes of the x factor sampled on the midpoint lattice.

    Returns (p, ahat) with p integer mode vectors (M, n) and matching weights,
    such that a(mid_s) = sum_p ahat_p exp(i pi p.s / N).
    """
    n = grid.ndim
    factor = factor.smooth()
    axf = factor.axis_factors(n)
    if axf is not None:
        per_axis = []
        for ax, f in enumerate(axf):
            alpha = f(_midpoint_axis(grid, ax))
            ah = np.fft.fft(alpha) / alpha.size
            p = np.round(np.fft.fftfreq(alpha.size) * alpha.size).astype(int)
            per_axis.append((p, ah))
        scale = np.prod([np.max(np.abs(ah)) for _, ah in per_axis])
        if scale == 0:
            return np.zeros((0, n), dtype=int), np.zeros(0, dtype=complex)
        keep = []
        for p, ah in per_axis:
            m = np.abs(ah) > 1e-17 * np.max(np.abs(ah))
            keep.append((p[m], ah[m]))
        P = np.stack(np.meshgrid(*[k[0] for k in keep], indexing="ij"), axis=-1).reshape(-1, n)
        A = np.ones(1, dtype=complex)
        for _, ah in keep:
            A = np.multiply.outer(A, ah)
        A = A.reshape(-1)
    else:
        mids = [_midpoint_axis(grid, ax) for ax in range(n)]
        X = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)
        alpha = factor.value(X)
        ah = np.fft.fftn(alpha) / alpha.size
        pp = [np.round(np.fft.fftfreq(2 * m) * 2 * m).astype(int) for m in grid.shape]
        P = np.stack(np.meshgrid(*pp, indexing="ij"), axis=-1).reshape(-1, n)
        A = ah.reshape(-1)
    if A.size == 0:
        return P, A
    # drop the smallest modes while their total l1 mass stays below the tolerance
    mag = np.abs(A)
    order = np.argsort(mag)
    tail = np.cumsum(mag[order])
    drop = order[tail <= _MODE_REL_TOL * tail[-1]]
    keep = np.ones(A.size, dtype=bool)
    keep[drop] = False
    return P[keep], A[keep]


def _parity_spectra(u: GridField):
    """FFTs of u modulated by exp(i pi sigma.l / N) for every parity pattern sigma."""
    g = u.grid
    out = {}
    for sigma in itertools.product((0, 1), repeat=g.ndim):
        v = u.data
        for ax, sg in enumerate(sigma):
            if sg:
                m = g.shape[ax]
                ph = np.exp(1j * np.pi * np.arange(m) / m)
                v = v * ph.reshape((1,) * ax + (m,) + (1,) * (g.ndim - ax - 1))
        out[sigma] = np.fft.fftn(v)
    return out


def _pairing_separable_term(a, b, u: GridField, h: float, spectra) -> complex:
    g = u.grid
    n = g.ndim
    N = np.prod(g.shape)
    if b.is_constant:
        X = g.coords()
        return complex(b.c * np.sum(a.value(X) * np.abs(u.data) ** 2) * g.cell_volume)
    Kgrid = h * g.wavenumber_grid()
    bvals = b.value(Kgrid)
    if a.is_constant:
        return complex(a.c * np.sum(bvals * np.abs(spectra[(0,) * n]) ** 2) * g.cell_volume / N)
    support = np.nonzero(bvals)
    if support[0].size == 0:
        return 0j
    bk = bvals[support]
    kidx = [s.astype(np.int64) for s in support]
    P, A = _x_modes(a, g)
    if A.size == 0:
        return 0j
    flat_spectra = {k: v.ravel() for k, v in spectra.items()}
    strides = np.cumprod((1,) + tuple(g.shape[::-1]))[:-1][::-1]
    # per-axis flat offsets of k - floor(p/2) and k + ceil(p/2), cached by p component
    cache = [dict() for _ in range(n)]

    def offsets(ax, pa):
        hit = cache[ax].get(pa)
        if hit is None:
            m = g.shape[ax]
            i1 = (kidx[ax] - (pa // 2)) % m
            i2 = (kidx[ax] + (pa + 1) // 2) % m
            hit = (i1 * strides[ax], i2 * strides[ax])
            cache[ax][pa] = hit
        return hit

    total = 0j
    for p, ap in zip(P, A):
        sigma = tuple(int(x) for x in (p % 2))
        lo, hi = offsets(0, int(p[0]))
        for ax in range(1, n):
            o1, o2 = offsets(ax, int(p[ax]))
            lo = lo + o1
            hi = hi + o2
        spec = flat_spectra[sigma]
        total += ap * np.dot(bk * spec[lo], np.conj(spec[hi]))
    return complex(total * g.cell_volume / N)


def wigner_pairing(q: Symbol, u: GridField, h: float | None = None, *,
                   edge_tol: float | None = 1e-8, method: str = "auto") -> complex:
    """<Op_h^w(q) u, u> for the discrete Weyl operator.

    ``method`` is ``"separable"`` (mode expansion of the x factors; any grid size),
    ``"wigner"`` (full discrete Wigner transform; small grids only) or ``"auto"``.
    """
    h = u.h if h is None else h
    _check_field(u, h, edge_tol)
    if q.is_zero:
        return 0j
    if method == "auto":
        method = "separable" if q.is_separable else "wigner"
    if method == "wigner":
        return _pairing_general(q, u, h)
    if not q.is_separable:
        raise UnsupportedSymbolError(f"symbol {q.name!r} has no separable expansion")
    spectra = _parity_spectra(u)
    return sum((t.coeff * _pairing_separable_term(t.xfactor, t.xifactor, u, h, spectra)
                for t in q.terms), 0j)


def _fourier_multiplier(b, u: GridField, h: float) -> np.ndarray:
    Kgrid = h * u.grid.wavenumber_grid()
    return np.fft.ifftn(b.value(Kgrid) * np.fft.fftn(u.data))


def _weyl_term(a, b, u: GridField, h: float) -> np.ndarray:
    g = u.grid
    if b.is_constant:
        return b.c * a.value(g.coords()) * u.data
    if a.is_constant:
        return a.c * _fourier_multiplier(b, u, h)
    P, A = _x_modes(a, g)
    Kgrid = h * g.wavenumber_grid()
    bvals = b.value(Kgrid)
    out = np.zeros(g.shape, dtype=complex)
    phases = []
    for ax, m in enumerate(g.shape):
        phases.append(np.arange(m) / m)
    for p, ap in zip(P, A):
        ph = np.ones(g.shape, dtype=complex)
        for ax, m in enumerate(g.shape):
            e = np.exp(1j * np.pi * p[ax] * phases[ax])
            ph = ph * e.reshape((1,) * ax + (m,) + (1,) * (g.ndim - ax - 1))
        out += ap * ph * np.fft.ifftn(bvals * np.fft.fftn(ph * u.data))
    return out


def _dense_weyl_kernel(q: Symbol, grid: GridSpec, h: float) -> np.ndarray:
    n = grid.ndim
    shape = grid.shape
    Ntot = int(np.prod(shape))
    if Ntot > 1024:
        raise UnsupportedSymbolError("dense Weyl kernel limited to 1024 grid nodes")
    K = np.stack(np.meshgrid(*[h * k for k in grid.wavenumbers()], indexing="ij"), axis=-1)
    mids = [_midpoint_axis(grid, ax) for ax in range(n)]
    idx = np.stack(np.meshgrid(*[np.arange(m) for m in shape], indexing="ij"), axis=-1).reshape(-1, n)
    kernel = np.zeros((Ntot, Ntot), dtype=complex)
    cache = {}
    for a in range(Ntot):
        for b in range(Ntot):
            s = tuple(idx[a] + idx[b])
            if s not in cache:
                xm = np.array([mids[ax][s[ax]] for ax in range(n)])
                cache[s] = np.fft.ifftn(q.value(xm, K))
            d = tuple((idx[a] - idx[b]) % np.array(shape))
            kernel[a, b] = cache[s][d]
    return kernel


def weyl_apply(q: Symbol, u: GridField, h: float | None = None, *,
               edge_tol: float | None = None) -> GridField:
    """Op_h^w(q) u on the grid torus."""
    h = u.h if h is None else h
    _check_field(u, h, edge_tol)
    if q.is_separable:
        out = np.zeros(u.grid.shape, dtype=complex)
        for t in q.terms:
            out += t.coeff * _weyl_term(t.xfactor, t.xifactor, u, h)
        return u.copy(out)
    kernel = _dense_weyl_kernel(q, u.grid, h)
    return u.copy((kernel @ u.data.ravel()).reshape(u.grid.shape))


def standard_apply(q: Symbol, u: GridField, h: float | None = None) -> GridField:
    """Kohn-Nirenberg quantization Op_h(q) u = sum a(x) b(hD) u over the separable expansion."""
    h = u.h if h is None else h
    u.grid.check_resolves(h)
    if not q.is_separable:
        raise UnsupportedSymbolError(
            f"standard quantization of {q.name!r} needs a declared separable expansion")
    X = u.grid.coords()
    out = np.zeros(u.grid.shape, dtype=complex)
    for t in q.terms:
        bu = u.data * t.xifactor.c if t.xifactor.is_constant else _fourier_multiplier(t.xifactor, u, h)
        out += t.coeff * t.xfactor.value(X) * bu
    return u.copy(out)


def write_wigner_slice(u: GridField, h: float, path, x_box=None, xi_box=None) -> int:
    """Write the discrete Wigner density over a rectangle as CSV; returns the row count."""
    mids, xis, W = wigner_function(u, h)
    g = u.grid
    n = g.ndim
    dxi = [h * 2 * np.pi / L for L in g.lengths]
    cell = g.cell_volume / (np.prod([0.5 * d for d in g.spacing]) * np.prod(dxi))
    X = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, n)
    K = np.stack(np.meshgrid(*xis, indexing="ij"), axis=-1).reshape(-1, n)
    dens = W.reshape(X.shape[0], K.shape[0]) * cell
    xm = np.ones(X.shape[0], dtype=bool)
    km = np.ones(K.shape[0], dtype=bool)
    if x_box is not None:
        xm = np.all((X >= x_box[0]) & (X <= x_box[1]), axis=1)
    if xi_box is not None:
        km = np.all((K >= xi_box[0]) & (K <= xi_box[1]), axis=1)
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(n)] + [f"xi{i}" for i in range(n)] + ["wigner"])
        for i in np.nonzero(xm)[0]:
            for j in np.nonzero(km)[0]:
                w.writerow([*map(repr, X[i]), *map(repr, K[j]), repr(float(dens[i, j]))])
                rows += 1
    return rows
