"""Uniform n-dimensional grids and complex fields living on them.

Binary dump layout (all little-endian)::

    magic     4 bytes  b"HLGF"
    version   uint32   (currently 1)
    n         uint32   number of axes
    dims      n x uint64
    spacing   n x float64
    origin    n x float64   (coordinates of the first grid node)
    h         float64       semiclassical parameter attached to the field
    data      prod(dims) x (float64 re, float64 im), C order
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_MAGIC = b"HLGF"
_VERSION = 1


class ResolutionError(ValueError):
    """Grid too coarse for the semiclassical scale, or field not decayed at the box edge."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: ``shape[i]`` nodes ``origin[i] + j * spacing[i]`` along axis ``i``."""

    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.origin) == len(self.spacing) == len(self.shape)):
            raise ValueError("origin, spacing and shape must have the same length")
        if any(s <= 0 for s in self.spacing) or any(m < 2 for m in self.shape):
            raise ValueError("grid needs positive spacing and at least two nodes per axis")

    @classmethod
    def box(cls, lower, upper, spacing_max: float, even: bool = True) -> "GridSpec":
        """Periodic box ``[lower, upper)`` with spacing not exceeding ``spacing_max``."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        length = upper - lower
        shape = np.ceil(length / spacing_max - 1e-9).astype(int)
        if even:
            shape += shape % 2
        spacing = length / shape
        return cls(tuple(lower), tuple(spacing), tuple(int(m) for m in shape))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.spacing) * np.asarray(self.shape)

    def axes(self) -> list[np.ndarray]:
        return [o + d * np.arange(m) for o, d, m in zip(self.origin, self.spacing, self.shape)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def wavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumbers per axis in FFT order."""
        return [2 * np.pi * np.fft.fftfreq(m, d) for m, d in zip(self.shape, self.spacing)]

    def wavenumber_grid(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.wavenumbers(), indexing="ij"), axis=-1)

    def check_resolves(self, h: float, factor: float = 4.0) -> None:
        worst = max(self.spacing)
        if worst > h / factor * (1 + 1e-9):
            raise ResolutionError(
                f"grid spacing {worst:.4g} exceeds h/{factor:g} = {h / factor:.4g}")


@dataclass
class GridField:
    """Complex samples of a function on a :class:`GridSpec`."""

    grid: GridSpec
    data: np.ndarray
    h: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != self.grid.shape:
            raise ValueError(f"data shape {self.data.shape} does not match grid {self.grid.shape}")

    @classmethod
    def zeros(cls, grid: GridSpec, h: float = 1.0) -> "GridField":
        return cls(grid, np.zeros(grid.shape, dtype=complex), h)

    @classmethod
    def from_function(cls, grid: GridSpec, f, h: float = 1.0) -> "GridField":
        return cls(grid, f(grid.coords()), h)

    def copy(self, data=None) -> "GridField":
        return GridField(self.grid, self.data.copy() if data is None else data, self.h, dict(self.meta))

    def inner(self, other: "GridField") -> complex:
        """Discrete ``<self, other>`` (linear in ``self``)."""
        return complex(np.vdot(other.data, self.data) * self.grid.cell_volume)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.data) ** 2) * self.grid.cell_volume))

    def edge_ratio(self) -> float:
        """max |u| on the box faces divided by max |u| (0 for the zero field)."""
        peak = np.max(np.abs(self.data))
        if peak == 0:
            return 0.0
        edge = 0.0
        for ax in range(self.data.ndim):
            for idx in (0, -1):
                face = np.take(self.data, idx, axis=ax)
                edge = max(edge, float(np.max(np.abs(face))))
        return edge / peak

    def check_edge_decay(self, tol: float = 1e-8) -> None:
        ratio = self.edge_ratio()
        if ratio > tol:
            raise ResolutionError(
                f"field does not decay at the box edge (edge/peak = {ratio:.3g} > {tol:g});"
                " periodic transforms would alias")

    def dump(self, path) -> None:
        g = self.grid
        n = g.ndim
        header = struct.pack("<4sII", _MAGIC, _VERSION, n)
        header += struct.pack(f"<{n}Q", *g.shape)
        header += struct.pack(f"<{n}d", *g.spacing)
        header += struct.pack(f"<{n}d", *g.origin)
        header += struct.pack("<d", self.h)
        payload = np.ascontiguousarray(self.data, dtype="<c16").tobytes()
        Path(path).write_bytes(header + payload)

    @classmethod
    def load(cls, path) -> "GridField":
        raw = Path(path).read_bytes()
        magic, version, n = struct.unpack_from("<4sII", raw, 0)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError(f"{path}: not a GridField dump (magic={magic!r}, version={version})")
        off = 12
        shape = struct.unpack_from(f"<{n}Q", raw, off)
        off += 8 * n
        spacing = struct.unpack_from(f"<{n}d", raw, off)
        off += 8 * n
        origin = struct.unpack_from(f"<{n}d", raw, off)
        off += 8 * n
        (h,) = struct.unpack_from("<d", raw, off)
        off += 8
        data = np.frombuffer(raw, dtype="<c16", offset=off).reshape(shape)
        return cls(GridSpec(tuple(origin), tuple(spacing), tuple(int(m) for m in shape)), data.copy(), h)
