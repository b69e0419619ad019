"""Analytic potential and dipole families, sampling, and H0 = -Laplacian + V.

Units: hbar = 1 and mass 1/2, so the kinetic symbol is |k|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, GridMismatchError, ResamplingError, UnsupportedError
from .grid import Grid, WaveFunction

POTENTIAL_FAMILIES = ("poschl_teller", "gaussian_well", "compact_bump", "tabulated")
DIPOLE_FAMILIES = ("gaussian_dipole", "gaussian_even", "tabulated")

_REQUIRED = {
    "poschl_teller": ("strength",),
    "gaussian_well": ("depth", "width"),
    "compact_bump": ("depth", "radius", "smoothing"),
    "gaussian_dipole": ("amplitude", "width"),
    "gaussian_even": ("amplitude", "width"),
    "tabulated": ("samples",),
}


@dataclass(frozen=True)
class _Spec:
    family: str
    dim: int
    params: dict = field(default_factory=dict)

    _families: ClassVar[tuple] = ()

    def __post_init__(self):
        if self.family not in self._families:
            raise DomainError(f"unknown family {self.family!r}; expected one of {self._families}")
        missing = [k for k in _REQUIRED[self.family] if k not in self.params]
        if missing:
            raise DomainError(f"{self.family}: missing parameter(s) {missing}")
        if self.dim not in (1, 2, 3):
            raise DomainError(f"dim must be 1, 2 or 3, got {self.dim}")
        self._validate()

    def _validate(self):
        pass

    def _center(self):
        c = self.params.get("center")
        return np.zeros(self.dim) if c is None else np.asarray(c, float).reshape(self.dim)

    @classmethod
    def from_dict(cls, d: dict, dim: int):
        d = dict(d)
        family = d.pop("family", None)
        if family is None:
            raise DomainError("spec record needs a 'family' key")
        return cls(family, dim, d)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family}
        for k, v in self.params.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


@dataclass(frozen=True)
class PotentialSpec(_Spec):
    _families: ClassVar[tuple] = POTENTIAL_FAMILIES

    def _validate(self):
        p = self.params
        if self.family == "poschl_teller":
            if self.dim != 1:
                raise DomainError("poschl_teller is defined in 1D only")
            if not p["strength"] > 0:
                raise DomainError("poschl_teller strength must be positive")
        elif self.family == "gaussian_well":
            if not p["depth"] < 0:
                raise DomainError("gaussian_well depth must be negative")
            if not p["width"] > 0:
                raise DomainError("gaussian_well width must be positive")
        elif self.family == "compact_bump":
            if not 0 < p["smoothing"] <= p["radius"]:
                raise DomainError("compact_bump needs 0 < smoothing <= radius")

    def evaluate(self, coords) -> np.ndarray:
        p = self.params
        if self.family == "poschl_teller":
            lam = float(p["strength"])
            x = coords[0] - self._center()[0]
            return -lam * (lam + 1.0) / np.cosh(x) ** 2
        r2 = sum((c - x0) ** 2 for c, x0 in zip(coords, self._center()))
        if self.family == "gaussian_well":
            return float(p["depth"]) * np.exp(-r2 / float(p["width"]) ** 2)
        if self.family == "compact_bump":
            return float(p["depth"]) * _smooth_plateau(
                np.sqrt(r2), float(p["radius"]), float(p["smoothing"]))
        raise UnsupportedError("tabulated potentials are sampled, not evaluated")


@dataclass(frozen=True)
class DipoleSpec(_Spec):
    _families: ClassVar[tuple] = DIPOLE_FAMILIES

    def _validate(self):
        if self.family != "tabulated" and not self.params["width"] > 0:
            raise DomainError(f"{self.family} width must be positive")

    def evaluate(self, coords) -> np.ndarray:
        p = self.params
        c0 = self._center()
        r2 = sum((c - x0) ** 2 for c, x0 in zip(coords, c0))
        env = float(p["amplitude"]) * np.exp(-r2 / float(p["width"]) ** 2)
        if self.family == "gaussian_dipole":
            return (coords[0] - c0[0]) * env
        if self.family == "gaussian_even":
            return env
        raise UnsupportedError("tabulated dipoles are sampled, not evaluated")


def _smooth_plateau(r, radius, smoothing):
    """1 for r <= radius - smoothing, 0 for r >= radius, C-infinity in between."""
    t = np.clip((radius - r) / smoothing, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True, eq=False)
class RealField:
    """Real samples on a grid (sampled V or mu), flat row-major."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if v.size != self.grid.size:
            raise GridMismatchError(f"expected {self.grid.size} samples, got {v.size}")
        if not np.isfinite(v).all():
            raise DomainError("field samples must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def sample(spec: _Spec, grid: Grid) -> RealField:
    if spec.dim != grid.dim:
        raise GridMismatchError(f"spec dim {spec.dim} != grid dim {grid.dim}")
    if spec.family == "tabulated":
        s = np.asarray(spec.params["samples"], dtype=float)
        if s.size != grid.size or (s.ndim > 1 and s.shape != grid.shape):
            raise ResamplingError(
                f"tabulated samples have shape {s.shape}, grid needs {grid.shape}")
        return RealField(grid, s)
    return RealField(grid, spec.evaluate(grid.coords))


def neg_laplacian(grid: Grid, arr: np.ndarray) -> np.ndarray:
    """-Laplacian via the |k|^2 Fourier multiplier; ``arr`` is flat."""
    a = arr.reshape(grid.shape)
    out = sfft.ifftn(grid.k2 * sfft.fftn(a))
    if np.isrealobj(arr):
        out = out.real
    return out.reshape(-1)


def apply_h0(v: RealField, psi: WaveFunction) -> WaveFunction:
    v.grid.check_same(psi.grid)
    a = psi.amplitudes
    return WaveFunction(psi.grid, neg_laplacian(psi.grid, a) + v.values * a)


# ---------------------------------------------------------------------------
# decay assumption tagging
# ---------------------------------------------------------------------------

DECAY_CONDITIONS = {
    1: "(1+|x|)V in L^1",
    2: "|V(x)| <= C(1+|x|)^(-3-eps)",
    3: "V in L^(3/2-eps) and L^(3/2+eps)",
    4: "V^ in L^1 and weighted bound on H^nu",
}

# every shipped analytic family is bounded and decays at least like exp(-c|x|)
_DECAY_KIND = {
    "poschl_teller": "exponential",
    "gaussian_well": "gaussian",
    "compact_bump": "compact",
}


@dataclass
class DecayReport:
    family: str
    dim: int
    decay: str
    conditions: dict[str, str]
    applicable: str
    satisfied: bool | None
    zero_resonance: str = "UNCHECKED"

    def to_dict(self):
        return dict(self.__dict__)


def check_decay_class(spec: PotentialSpec, dim: int | None = None) -> DecayReport:
    """Tag which dimension-indexed decay conditions the family meets.

    Bounded families with exponential, Gaussian or compact decay meet the
    1D, 2D and 3D conditions. The N >= 4 regularity condition and the
    absence of a zero-energy eigenvalue/resonance are reported UNCHECKED.
    """
    dim = spec.dim if dim is None else dim
    if spec.family == "tabulated":
        raise UnsupportedError("decay class is only tagged for analytic families")
    if spec.family == "poschl_teller" and dim != 1:
        raise DomainError("poschl_teller is defined in 1D only")
    conditions = {DECAY_CONDITIONS[n]: "satisfied" for n in (1, 2, 3)}
    conditions[DECAY_CONDITIONS[4]] = "UNCHECKED"
    key = DECAY_CONDITIONS[min(dim, 4)]
    state = conditions[key]
    return DecayReport(
        family=spec.family,
        dim=dim,
        decay=_DECAY_KIND[spec.family],
        conditions=conditions,
        applicable=key,
        satisfied=True if state == "satisfied" else None,
    )
