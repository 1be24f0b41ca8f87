import numpy as np
import pytest

from helmlab.grid import GridField, GridSpec, ResolutionError


def test_box_covers_interval_with_even_sizes():
    g = GridSpec.box([-1, -2], [1, 2], 0.1)
    assert g.shape[0] % 2 == 0 and g.shape[1] % 2 == 0
    assert np.all(np.asarray(g.spacing) <= 0.1 + 1e-15)
    assert np.allclose(g.lengths, [2, 4])
    assert np.allclose(g.origin, [-1, -2])


def test_wavenumbers_are_fft_frequencies():
    g = GridSpec.box([0], [2 * np.pi], 2 * np.pi / 16)
    k = g.wavenumbers()[0]
    assert np.allclose(np.sort(k), np.arange(-8, 8))


def test_resolution_check():
    g = GridSpec.box([-1], [1], 0.1)
    g.check_resolves(0.4)
    with pytest.raises(ResolutionError):
        g.check_resolves(0.2)


def test_inner_norm_and_edge_ratio():
    g = GridSpec.box([-6, -6], [6, 6], 0.05)
    u = GridField.from_function(g, lambda x: np.exp(-np.sum(x**2, -1) / 2))
    # int exp(-|x|^2) = pi
    assert u.norm() ** 2 == pytest.approx(np.pi, rel=1e-10)
    assert u.inner(u) == pytest.approx(u.norm() ** 2)
    assert u.edge_ratio() < 1e-7
    wide = GridField.from_function(g, lambda x: np.exp(-np.sum(x**2, -1) / 20))
    with pytest.raises(ResolutionError):
        wide.check_edge_decay(1e-8)


def test_dump_load_roundtrip(tmp_path, rng):
    g = GridSpec.box([-1, 0, 2], [1, 1, 3], 0.25)
    u = GridField(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape), 0.125)
    path = tmp_path / "f.hlgf"
    u.dump(path)
    v = GridField.load(path)
    assert v.h == u.h
    assert np.array_equal(v.data, u.data)
    assert np.array_equal(np.asarray(v.grid.spacing), np.asarray(g.spacing))
    assert np.array_equal(np.asarray(v.grid.origin), np.asarray(g.origin))
    assert v.grid.shape == g.shape


def test_load_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"not a field at all")
    with pytest.raises(ValueError):
        GridField.load(p)
