import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erf

from helmlab import geometry as geo
from helmlab.grid import GridField, GridSpec, ResolutionError
from helmlab.source import (Amplitude, BumpProfile, GaussianProfile, assemble_source, decay_integral,
                            local_decay_check, smoothstep_cutoff, source_norm_scaling, truncate_amplitude,
                            weighted_norm)


def _dft_fourier(S, L=24.0, m=512):
    """Riemann-sum Fourier transform on a large 2-d box (spectrally accurate for smooth decaying S)."""
    t = (np.arange(m) - m // 2) * (L / m)
    X = np.stack(np.meshgrid(t, t, indexing="ij"), -1)
    vals = S.value(X)
    k = 2 * np.pi * np.fft.fftfreq(m, L / m)
    F = np.fft.fft2(np.fft.ifftshift(vals)) * (L / m) ** 2
    return k, F


@pytest.mark.parametrize("S", [GaussianProfile(2), BumpProfile(2, 3.0)], ids=["gaussian", "bump"])
def test_profile_fourier_matches_dft(S):
    k, F = _dft_fourier(S)
    for i, j in [(0, 0), (3, 1), (10, 5), (20, 0)]:
        xi = np.array([k[i], k[j]])
        ref = F[i, j].real
        assert S.fourier(xi) == pytest.approx(ref, rel=1e-6, abs=1e-12 * abs(F[0, 0]))


def test_point_source_is_exact():
    g = GridSpec.box([-2, -2], [2, 2], 0.02)
    h = 0.1
    x0 = np.array([0.3, -0.1])
    u = assemble_source(geo.point(x0), Amplitude.constant(2.0), GaussianProfile(2), h, g)
    ref = h ** (-0.5) * 2.0 * np.exp(-0.5 * np.sum((g.coords() - x0) ** 2, -1) / h**2)
    assert np.max(np.abs(u.data - ref)) <= 1e-14 * np.max(ref)


def test_zero_amplitude_gives_zero_field():
    g = GridSpec.box([-2, -2], [2, 2], 0.05)
    seg = geo.affine([0, 0], [[1, 0]], [-1], [1])
    assert not np.any(assemble_source(seg, Amplitude.constant(0.0), GaussianProfile(2), 0.25, g).data)


def test_segment_ridge_matches_convolution_oracle():
    g = GridSpec.box([-2, -1], [2, 1], 0.015)
    h, a, b = 0.0625, -1.0, 1.2
    seg = geo.affine([0, 0], [[1, 0]], [a], [b])
    u = assemble_source(seg, Amplitude.constant(1.0), GaussianProfile(2), h, g).data.real
    X = g.coords()
    s2h = np.sqrt(2) * h
    ref = (1 / h) * np.exp(-X[..., 1] ** 2 / (2 * h**2)) * h * np.sqrt(np.pi / 2) * (
        erf((b - X[..., 0]) / s2h) - erf((a - X[..., 0]) / s2h))
    assert np.max(np.abs(u - ref)) <= 1e-6 * np.max(ref)


def test_resolution_error():
    g = GridSpec.box([-1, -1], [1, 1], 0.1)
    with pytest.raises(ResolutionError):
        assemble_source(geo.point([0, 0]), Amplitude.constant(), GaussianProfile(2), 0.2, g)


def test_source_is_linear_in_amplitude():
    g = GridSpec.box([-2, -2], [2, 2], 0.03)
    circ = geo.sphere([0, 0], 1.0)
    A, B = Amplitude.gaussian(0.5, [1, 0]), Amplitude.constant(0.7)
    AB = Amplitude(lambda z: 2 * A.value(z) - 3 * B.value(z))
    f = [assemble_source(circ, X, GaussianProfile(2), 0.125, g).data for X in (A, B, AB)]
    assert np.max(np.abs(f[2] - (2 * f[0] - 3 * f[1]))) <= 1e-12 * np.max(np.abs(f[2]))


def test_compact_profile_is_local():
    g = GridSpec.box([-2, -2], [2, 2], 0.02)
    h = 0.1
    S = BumpProfile(2, 2.0)
    seg = geo.affine([0, 0], [[1, 0]], [-0.5], [0.5])
    u = assemble_source(seg, Amplitude.constant(), S, h, g).data
    X = g.coords()
    dist = np.hypot(np.maximum(np.abs(X[..., 0]) - 0.5, 0), X[..., 1])
    assert not np.any(u[dist > 2 * h + 1e-12])
    assert np.any(u[dist < 0.1])


def test_truncation_plateau_support_and_bound():
    A = Amplitude.gaussian(2.0)
    AR = truncate_amplitude(A, 1.5)
    z = np.random.default_rng(0).uniform(-5, 5, size=(500, 2))
    r = np.linalg.norm(z, axis=1)
    assert np.array_equal(AR.value(z)[r <= 1.5], A.value(z)[r <= 1.5])
    assert not np.any(AR.value(z)[r >= 3.0])
    assert np.all(np.abs(AR.value(z)) <= np.abs(A.value(z)))
    s = np.linspace(0, 3, 301)
    assert np.all(np.diff(smoothstep_cutoff(s)) <= 0)


def test_truncation_consistency_of_sources():
    g = GridSpec.box([-5, -1], [5, 1], 0.02)
    h, R = 0.1, 1.5
    line = geo.affine([0, 0], [[1, 0]], [-5], [5])
    A = Amplitude.gaussian(1.5)
    S = BumpProfile(2, 2.0)
    full = assemble_source(line, A, S, h, g).data
    trunc = assemble_source(line, truncate_amplitude(A, R), S, h, g).data
    inner = np.linalg.norm(g.coords(), axis=-1) <= R - 2 * h * S.radius
    assert np.max(np.abs((full - trunc)[inner])) <= 1e-14 * np.max(np.abs(full))


def test_weighted_norm_examples():
    g = GridSpec.box([-6, -6], [6, 6], 0.04)
    assert weighted_norm(GridField.zeros(g)) == 0
    u = GridField.from_function(g, lambda x: np.exp(-np.sum(x**2, -1)))
    # int exp(-2|x|^2) = pi / 2
    assert weighted_norm(u, 0.0) == pytest.approx(np.sqrt(np.pi / 2), rel=1e-8)
    # int (1 + |x|^2) exp(-2|x|^2) = pi/2 + pi/4
    assert weighted_norm(u, 1.0) == pytest.approx(np.sqrt(np.pi / 2 + np.pi / 4), rel=1e-8)


@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_weighted_norm_is_homogeneous(c):
    g = GridSpec.box([-3, -3], [3, 3], 0.1)
    u = GridField.from_function(g, lambda x: np.exp(-np.sum(x**2, -1)) * (1 + 1j * x[..., 0]))
    assert weighted_norm(u.copy(c * u.data), 1.0) == pytest.approx(abs(c) * weighted_norm(u, 1.0), rel=1e-12)


HS = [2.0**-k for k in range(3, 7)]


def test_scaling_exponent_point_source():
    fit = source_norm_scaling(lambda h: assemble_source(geo.point([0, 0]), Amplitude.constant(), GaussianProfile(2),
                                                        h, GridSpec.box([-3, -3], [3, 3], h / 4)), HS)
    assert 0.45 <= fit.exponent <= 0.55


def test_scaling_exponent_segment_source():
    line = geo.affine([0, 0], [[1, 0]], [-7], [7])
    A = Amplitude.gaussian(1.0)
    fit = source_norm_scaling(lambda h: assemble_source(line, A, GaussianProfile(2), h,
                                                        GridSpec.box([-7, -2], [7, 2], h / 4)), HS)
    assert 0.45 <= fit.exponent <= 0.55


def test_scaling_preconditions_and_zero_source():
    make = lambda h: assemble_source(geo.point([0, 0]), Amplitude.constant(0.0), GaussianProfile(2), h,
                                     GridSpec.box([-1, -1], [1, 1], h / 4))
    fit = source_norm_scaling(make, HS)
    assert fit.exponent is None and "zero" in fit.note
    with pytest.raises(ValueError):
        source_norm_scaling(make, HS[:3])
    with pytest.raises(ValueError):
        source_norm_scaling(make, [0.5, 0.25, 0.2, 0.1])


def test_amplitude_decay_diagnostics():
    circ = geo.sphere([0, 0], 1.0)
    # constant A on the unit circle: <z>^delta = sqrt(2)^delta, |II| = 1, dA = 0
    val = decay_integral(circ, Amplitude.constant(1.0, 1.0))
    assert val == pytest.approx(2 * np.pi * np.sqrt(2) * 2, rel=1e-6)
    assert decay_integral(geo.point([3, 4]), Amplitude.constant(2.0)) == pytest.approx(2 * np.sqrt(26))
    rep = local_decay_check(geo.affine([0, 0], [[1, 0]], [-5], [5]), Amplitude.gaussian(1.0))
    assert np.isfinite(rep["c"]) and rep["c"] > 0
    with pytest.raises(ValueError):
        Amplitude.constant(1.0, delta=0.5)
