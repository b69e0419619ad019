"""Uniform periodic tensor grids and the wavefunctions that live on them."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DegenerateStateError, DomainError, GridMismatchError

# bound states must be negligible at the box edge
BOUNDARY_TOL = 1e-12

_HEADER = struct.Struct("<qqd")


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-L, L)^dim with ``points`` nodes per axis.

    ``points`` must be a power of two. Arrays on the grid are stored
    flattened in row-major order.
    """

    dim: int
    points: int
    half_extent: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DomainError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.points < 2 or self.points & (self.points - 1):
            raise DomainError(f"points per axis must be a power of two, got {self.points}")
        if not self.half_extent > 0:
            raise DomainError("half_extent must be positive")
        object.__setattr__(self, "half_extent", float(self.half_extent))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / self.points

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_extent + self.spacing * np.arange(self.points)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of ``shape`` per axis."""
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 on the FFT layout, shape ``shape``."""
        k = self.wavenumbers
        out = np.zeros(self.shape)
        for ax in range(self.dim):
            sl = [None] * self.dim
            sl[ax] = slice(None)
            out = out + (k ** 2)[tuple(sl)]
        return out

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Flat boolean mask of the outermost node layer on every axis."""
        m = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            m[tuple(idx)] = True
            idx[ax] = -1
            m[tuple(idx)] = True
        return m.ravel()

    def check_same(self, other: "Grid") -> None:
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex amplitudes on a grid; immutable once built."""

    grid: Grid
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=np.complex128, copy=True).reshape(-1)
        if a.size != self.grid.size:
            raise GridMismatchError(
                f"expected {self.grid.size} amplitudes, got {a.size}")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "WaveFunction":
        return cls(grid, func(*grid.coords))

    @property
    def array(self) -> np.ndarray:
        """Read-only view with the grid's shape."""
        return self.amplitudes.reshape(self.grid.shape)

    def norm(self) -> float:
        return lp_norm(self, 2)

    def _wrap(self, amps) -> "WaveFunction":
        return WaveFunction(self.grid, amps)

    def __add__(self, other):
        self.grid.check_same(other.grid)
        return self._wrap(self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        self.grid.check_same(other.grid)
        return self._wrap(self.amplitudes - other.amplitudes)

    def __mul__(self, scalar):
        return self._wrap(self.amplitudes * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._wrap(self.amplitudes / scalar)

    def __neg__(self):
        return self._wrap(-self.amplitudes)


def inner_product(a: WaveFunction, b: WaveFunction) -> complex:
    """<a, b> = dx^N * sum(a * conj(b)); linear in the first slot."""
    a.grid.check_same(b.grid)
    return complex(a.grid.cell_volume * np.vdot(b.amplitudes, a.amplitudes))


def lp_norm(psi: WaveFunction, p: float = 2.0) -> float:
    if p == np.inf:
        return float(np.max(np.abs(psi.amplitudes)))
    if not p >= 1:
        raise DomainError(f"p must be >= 1 or inf, got {p}")
    a = np.abs(psi.amplitudes)
    if p == 2:
        return float(np.sqrt(psi.grid.cell_volume * np.dot(a, a)))
    return float((psi.grid.cell_volume * np.sum(a ** p)) ** (1.0 / p))


def normalize(psi: WaveFunction) -> WaveFunction:
    scale = float(np.max(np.abs(psi.amplitudes))) if psi.amplitudes.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        raise DegenerateStateError("cannot normalize a zero or non-finite state")
    # pre-scale by the max modulus so tiny or huge inputs do not under/overflow
    a = psi.amplitudes / scale
    n = np.sqrt(psi.grid.cell_volume * np.vdot(a, a).real)
    return WaveFunction(psi.grid, a / n)


def boundary_amplitude(psi: WaveFunction) -> float:
    """Max |psi| over the outermost node layer; compare with BOUNDARY_TOL."""
    return float(np.max(np.abs(psi.amplitudes[psi.grid.boundary_mask])))


def gaussian(grid: Grid, width: float = 1.0, center=None, momentum=None) -> WaveFunction:
    """Normalized Gaussian packet exp(-|x-c|^2 / (2 w^2)) * exp(i k.x)."""
    center = np.zeros(grid.dim) if center is None else np.asarray(center, float)
    momentum = np.zeros(grid.dim) if momentum is None else np.asarray(momentum, float)
    r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.coords, center))
    phase = sum(k * c for c, k in zip(grid.coords, momentum))
    return normalize(WaveFunction(grid, np.exp(-r2 / (2 * width ** 2) + 1j * phase)))


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def save_snapshot(path, psi: WaveFunction) -> None:
    """Binary layout: int64 dim, int64 points, float64 L, then (re, im) float64 pairs."""
    g = psi.grid
    body = np.empty(2 * g.size, dtype="<f8")
    body[0::2] = psi.amplitudes.real
    body[1::2] = psi.amplitudes.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.dim, g.points, g.half_extent))
        fh.write(body.tobytes())


def load_snapshot(path) -> WaveFunction:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    dim, points, half_extent = _HEADER.unpack_from(raw)
    grid = Grid(int(dim), int(points), half_extent)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * grid.size:
        raise ValueError(f"{path}: expected {2 * grid.size} floats, found {body.size}")
    return WaveFunction(grid, body[0::2] + 1j * body[1::2])


def export_csv(path, psi: WaveFunction) -> None:
    """Lossy plotting export: x (or x1..xN), re, im per node."""
    g = psi.grid
    names = ["x"] if g.dim == 1 else [f"x{i + 1}" for i in range(g.dim)]
    cols = [c.ravel() for c in g.coords]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["re", "im"])
        for i in range(g.size):
            z = psi.amplitudes[i]
            w.writerow([f"{c[i]:.10g}" for c in cols] + [f"{z.real:.10g}", f"{z.imag:.10g}"])
