import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helmlab.grid import GridField, GridSpec, ResolutionError
from helmlab.quantization import (UnsupportedSymbolError, standard_apply, weyl_apply, wigner_function,
                                  wigner_pairing, write_wigner_slice)
from helmlab.symbols import Constant, Coordinate, GaussianBump, ShellBump, Symbol

H1 = 0.5


def grid1():
    g = GridSpec.box([-2.0], [2.0], 0.125)
    assert g.shape == (32,)
    return g


def dense_weyl(q, g, h):
    """Midpoint Weyl kernel K_jl = N^-n sum_k e^{i k.(x_j - x_l)} q((x_j + x_l)/2, h k), built directly."""
    X = g.coords().reshape(-1, g.ndim)
    K = np.stack(np.meshgrid(*g.wavenumbers(), indexing="ij"), -1).reshape(-1, g.ndim)
    N = X.shape[0]
    mid = 0.5 * (X[:, None, :] + X[None, :, :])
    phase = np.exp(1j * np.einsum("jlm,km->jlk", X[:, None, :] - X[None, :, :], K))
    qv = q.value(mid[:, :, None, :], h * K[None, None, :, :])
    return np.sum(phase * qv, axis=-1) / N


def derivative_matrix(g, h):
    N = g.shape[0]
    F = np.fft.fft(np.eye(N), axis=0)
    k = g.wavenumbers()[0]
    return np.linalg.inv(F) @ np.diag(h * k) @ F


def coherent(g, x0, xi0, h, width=1.0):
    X = g.coords()
    return GridField(g, np.exp(-np.sum((X - x0) ** 2, -1) / (2 * width**2 * h) + 1j * (X - x0) @ xi0 / h), h)


def random_field(g, rng, h):
    X = g.coords()
    env = np.exp(-np.sum(X**2, -1) / 0.3)
    return GridField(g, env * (rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)), h)


def test_weyl_of_mixed_symbol_matches_symmetrized_dense_operator(rng):
    g = grid1()
    q = Symbol.product(Coordinate(0), Coordinate(0), 1)
    D = derivative_matrix(g, H1)
    Xm = np.diag(g.axes()[0])
    oracle = 0.5 * (Xm @ D + D @ Xm)
    assert np.max(np.abs(dense_weyl(q, g, H1) - oracle)) <= 1e-10
    u = random_field(g, rng, H1)
    assert np.max(np.abs(weyl_apply(q, u).data - oracle @ u.data)) <= 1e-10 * np.max(np.abs(u.data))


def test_coordinate_and_momentum_symbols(rng):
    g = grid1()
    u = random_field(g, rng, H1)
    x1 = Symbol.product(Coordinate(0), Constant(1.0), 1)
    assert np.allclose(weyl_apply(x1, u).data, g.axes()[0] * u.data, atol=1e-13)
    xi1 = Symbol.product(Constant(1.0), Coordinate(0), 1)
    D = derivative_matrix(g, H1)
    assert np.allclose(weyl_apply(xi1, u).data, D @ u.data, atol=1e-12)


@pytest.mark.parametrize("kind", ["separable", "function"])
def test_weyl_and_pairing_match_dense_oracle(kind, rng):
    g = grid1()
    if kind == "separable":
        q = Symbol.product(GaussianBump([0.3], 0.6, cut=np.inf), ShellBump(1.0, 0.4, cut=np.inf), 1)
    else:
        q = Symbol(n=1, func=lambda x, k: np.cos(x[..., 0] * k[..., 0]) * np.exp(-x[..., 0] ** 2 - k[..., 0] ** 2))
    K = dense_weyl(q, g, H1)
    u = random_field(g, rng, H1)
    ref = np.vdot(u.data, K @ u.data) * g.cell_volume
    assert np.max(np.abs(weyl_apply(q, u).data - K @ u.data)) <= 1e-10 * np.max(np.abs(u.data))
    for method in (["separable", "wigner"] if kind == "separable" else ["wigner"]):
        val = wigner_pairing(q, u, edge_tol=None, method=method)
        assert abs(val - ref) <= 1e-10 * abs(np.vdot(u.data, u.data) * g.cell_volume)


def test_two_dimensional_pairing_paths_agree(rng):
    g = GridSpec.box([-2, -2], [2, 2], 0.25)
    h = 1.0
    q = Symbol.product(GaussianBump([0.2, -0.3], 0.7, cut=np.inf), GaussianBump([0.5, 0.1], 0.8, cut=np.inf), 2)
    u = random_field(g, rng, h)
    K = dense_weyl(q, g, h)
    v = u.data.ravel()
    ref = np.vdot(v, K @ v) * g.cell_volume
    for method in ("separable", "wigner"):
        assert abs(wigner_pairing(q, u, edge_tol=None, method=method) - ref) <= 1e-10 * u.norm() ** 2


def test_mass_identity(rng):
    g = GridSpec.box([-3, -3], [3, 3], 0.05)
    u = coherent(g, np.array([0.2, 0.1]), np.array([0.5, -0.3]), 0.2)
    one = Symbol.one(2)
    assert wigner_pairing(one, u).real == pytest.approx(u.norm() ** 2, rel=1e-8)
    mids, xis, W = wigner_function(random_field(GridSpec.box([-2], [2], 0.125), rng, H1), H1)
    assert np.isrealobj(W) or np.max(np.abs(np.imag(W))) < 1e-12


@given(st.integers(0, 2**31 - 1))
def test_self_adjointness_for_real_symbols(seed):
    rng = np.random.default_rng(seed)
    g = grid1()
    q = Symbol.product(GaussianBump([rng.uniform(-1, 1)], 0.5), ShellBump(rng.uniform(0.2, 1.5), 0.3), 1)
    u, v = random_field(g, rng, H1), random_field(g, rng, H1)
    a = np.vdot(v.data, weyl_apply(q, u).data)
    b = np.conj(np.vdot(u.data, weyl_apply(q, v).data))
    assert abs(a - b) <= 1e-9 * np.linalg.norm(u.data) * np.linalg.norm(v.data)
    assert abs(wigner_pairing(q, u, edge_tol=None).imag) <= 1e-10 * np.vdot(u.data, u.data).real * g.cell_volume


def test_plane_wave_momentum():
    g = GridSpec.box([-6, -6], [6, 6], 0.02)
    h = 0.1
    k = np.array([0.7, -0.4])
    X = g.coords()
    u = GridField(g, np.exp(-np.sum(X**2, -1)) * np.exp(1j * X @ k / h), h)
    xi1 = Symbol.product(Constant(1.0), Coordinate(0), 2)
    assert wigner_pairing(xi1, u).real == pytest.approx(k[0] * u.norm() ** 2, rel=0.02)


def test_coherent_state_pairing_matches_gaussian_closed_form():
    # |u|^2 and its Wigner function are Gaussians of variance h/2 per phase-space axis, so pairing with
    # a product of width-w Gaussians gives (1 + h / (2 w^2))^(-n) times the mass.
    x0, xi0, w = np.array([0.3, -0.2]), np.array([0.6, 0.5]), 0.4
    q = Symbol.product(GaussianBump(x0, w), GaussianBump(xi0, w), 2)
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        L = 7 * np.sqrt(h)
        g = GridSpec.box(x0 - L, x0 + L, h / 4)
        u = coherent(g, x0, xi0, h)
        ratio = wigner_pairing(q, u).real / u.norm() ** 2
        assert ratio == pytest.approx((1 + h / (2 * w**2)) ** -2, rel=1e-6)
        errs.append(1 - ratio)
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_standard_quantization(rng):
    g = grid1()
    u = random_field(g, rng, H1)
    for q in (Symbol.product(GaussianBump([0.1], 0.5), Constant(1.0), 1),
              Symbol.product(Constant(1.0), ShellBump(1.0, 0.5), 1)):
        assert np.allclose(standard_apply(q, u).data, weyl_apply(q, u).data, atol=1e-12)
    q = Symbol.product(Coordinate(0), Coordinate(0), 1)
    D = derivative_matrix(g, H1)
    Xm = np.diag(g.axes()[0])
    assert np.max(np.abs(standard_apply(q, u).data - Xm @ D @ u.data)) <= 1e-10 * np.max(np.abs(u.data))
    # Weyl = standard + (h / 2i) d_x d_xi q for q = x xi, up to the torus wrap
    wide = GridSpec.box([-4.0], [4.0], 0.125)
    c = coherent(wide, np.array([0.0]), np.array([0.5]), H1, width=0.45)
    diff = weyl_apply(q, c).data - standard_apply(q, c).data
    assert np.max(np.abs(diff - H1 / 2j * c.data)) <= 1e-8 * np.max(np.abs(c.data))
    with pytest.raises(UnsupportedSymbolError):
        standard_apply(Symbol(n=1, func=lambda x, k: x[..., 0] * k[..., 0]), u)


def test_unresolved_or_undecayed_fields_are_rejected():
    g = GridSpec.box([-2, -2], [2, 2], 0.1)
    u = GridField(g, np.ones(g.shape, dtype=complex), 0.5)
    with pytest.raises(ResolutionError):
        wigner_pairing(Symbol.one(2), u)
    with pytest.raises(ResolutionError):
        wigner_pairing(Symbol.one(2), u, h=0.2, edge_tol=None)


def test_zero_symbol_pairs_to_zero(rng):
    assert wigner_pairing(Symbol.zero(1), random_field(grid1(), rng, H1), edge_tol=None) == 0


def test_wigner_slice_csv(tmp_path, rng):
    g = grid1()
    n = write_wigner_slice(random_field(g, rng, H1), H1, tmp_path / "w.csv", x_box=(np.array([-0.5]), np.array([0.5])),
                           xi_box=(np.array([-1.0]), np.array([1.0])))
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "x0,xi0,wigner" and len(lines) == n + 1 and n > 0
