"""Bound states of H0 = -Laplacian + V, spectral projectors and assumption checks."""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from .errors import DomainError, EmptySpectrumError
from .grid import BOUNDARY_TOL, Grid, WaveFunction, save_snapshot
from .hamiltonian import RealField, neg_laplacian

DEGENERACY_TOL = 1e-10
RESIDUAL_TOL = 1e-8
_SIGN_TIE = 1e-8


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Discrete eigenpairs on a grid plus dipole matrix elements.

    ``phi`` holds one real, L2-normalized eigenfunction per row.
    ``mu_matrix[j, k] = <mu phi_j, phi_k>`` when a dipole was supplied.
    """

    grid: Grid
    eigenvalues: np.ndarray
    phi: np.ndarray = field(repr=False)
    energy_cut: float
    residuals: np.ndarray
    mu_matrix: np.ndarray | None = None

    def __post_init__(self):
        for name in ("eigenvalues", "phi", "residuals"):
            a = np.array(getattr(self, name), copy=True)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if self.mu_matrix is not None:
            m = np.array(self.mu_matrix, copy=True)
            m.flags.writeable = False
            object.__setattr__(self, "mu_matrix", m)

    @property
    def count(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def M(self) -> int:
        """Index of the highest bound state (count - 1)."""
        return self.count - 1

    @property
    def eigenfunctions(self) -> list[WaveFunction]:
        return [WaveFunction(self.grid, row) for row in self.phi]

    @property
    def conj_phi(self) -> np.ndarray:
        return np.ascontiguousarray(self.phi, dtype=np.complex128)

    @property
    def degenerate(self) -> bool:
        ev = np.sort(self.eigenvalues)
        return bool(np.any(np.diff(ev) < DEGENERACY_TOL))

    def boundary_amplitudes(self) -> np.ndarray:
        return np.max(np.abs(self.phi[:, self.grid.boundary_mask]), axis=1)

    def overlaps(self, psi: WaveFunction) -> np.ndarray:
        """<psi, phi_j> for every bound state."""
        self.grid.check_same(psi.grid)
        return self.grid.cell_volume * (self.phi @ psi.amplitudes)

    def with_dipole(self, mu: RealField) -> "SpectralData":
        return SpectralData(self.grid, self.eigenvalues, self.phi, self.energy_cut,
                            self.residuals, dipole_matrix(self.phi, mu))

    def reordered(self, order) -> "SpectralData":
        order = np.asarray(order, dtype=int)
        mm = None if self.mu_matrix is None else self.mu_matrix[np.ix_(order, order)]
        return SpectralData(self.grid, self.eigenvalues[order], self.phi[order],
                            self.energy_cut, self.residuals[order], mm)

    def summary(self) -> dict:
        out = {
            "grid": {"dim": self.grid.dim, "points": self.grid.points,
                     "half_extent": self.grid.half_extent},
            "energy_cut": self.energy_cut,
            "eigenvalues": self.eigenvalues.tolist(),
            "residuals": self.residuals.tolist(),
            "boundary_amplitudes": self.boundary_amplitudes().tolist(),
            "degenerate": self.degenerate,
        }
        if self.mu_matrix is not None:
            out["mu_matrix"] = np.real_if_close(self.mu_matrix).tolist()
        return out


def dipole_matrix(phi: np.ndarray, mu: RealField) -> np.ndarray:
    """Entries <mu phi_j, phi_k>; real symmetric for real eigenfunctions."""
    dv = mu.grid.cell_volume
    return dv * (phi * mu.values) @ phi.conj().T


# ---------------------------------------------------------------------------
# eigensolver
# ---------------------------------------------------------------------------

def _apply_h(v: RealField):
    grid, vv = v.grid, v.values

    def matvec(x):
        x = np.asarray(x).reshape(-1)
        return neg_laplacian(grid, x) + vv * x

    return matvec


def _shift_invert(v: RealField, k: int, tol: float):
    """Lowest k eigenpairs via Lanczos on (H - s)^-1, s below the spectrum.

    Each inverse application is a CG solve preconditioned by the inverse of
    the shifted kinetic symbol, so the operator never needs to be stored.
    """
    grid = v.grid
    n = grid.size
    h = _apply_h(v)
    shift = float(v.values.min()) - 1.0
    pre_symbol = 1.0 / (grid.k2 + max(1.0, float(v.values.mean()) - shift))

    def precond(r):
        return _fourier_multiply(grid, r, pre_symbol)

    a_op = LinearOperator((n, n), matvec=lambda x: h(x) - shift * x, dtype=float)
    m_op = LinearOperator((n, n), matvec=precond, dtype=float)

    def solve(b):
        x, _ = cg(a_op, b, rtol=1e-14, atol=0.0, M=m_op, maxiter=5 * n)
        return x

    inv = LinearOperator((n, n), matvec=solve, dtype=float)
    # fixed pseudo-random start: deterministic, and not parity-symmetric
    v0 = np.random.default_rng(20240601).standard_normal(n)
    theta, vecs = eigsh(inv, k=k, which="LA", tol=tol, v0=v0)
    # Rayleigh-Ritz on the converged subspace to polish residuals
    q, _ = np.linalg.qr(vecs)
    hq = np.column_stack([h(q[:, i]) for i in range(q.shape[1])])
    ev, w = sla.eigh(q.T @ hq)
    return ev, (q @ w).T


def _fourier_multiply(grid: Grid, arr: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    out = sfft.ifftn(symbol * sfft.fftn(arr.reshape(grid.shape))).real
    return out.reshape(-1)


def _dense(v: RealField):
    grid = v.grid
    n = grid.size
    hmat = np.empty((n, n))
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        hmat[:, i] = neg_laplacian(grid, e)
        e[i] = 0.0
    hmat = 0.5 * (hmat + hmat.T) + np.diag(v.values)
    ev, vecs = sla.eigh(hmat)
    return ev, vecs.T


def _fix_sign(row: np.ndarray) -> np.ndarray:
    a = np.abs(row)
    # leftmost node among (near-)maximal moduli, so parity ties resolve reproducibly
    idx = int(np.flatnonzero(a >= a.max() * (1 - _SIGN_TIE))[0])
    return row if row[idx] > 0 else -row


def solve_bound_states(v: RealField, grid: Grid | None = None, energy_cut: float | None = None,
                       mu: RealField | None = None, method: str = "shift_invert",
                       k_start: int = 8, tol: float = 1e-14) -> SpectralData:
    """All eigenpairs of -Laplacian + V strictly below ``energy_cut``.

    The default cut, -spacing^2, treats near-threshold box states of the
    periodic truncation as continuum. Eigenfunctions are normalized in L2
    and sign-fixed so the leftmost largest-modulus node is positive.
    """
    grid = v.grid if grid is None else grid
    grid.check_same(v.grid)
    cut = -grid.spacing ** 2 if energy_cut is None else float(energy_cut)
    if cut > 0:
        raise DomainError(f"energy_cut must be <= 0, got {cut}")
    n = grid.size

    if method == "dense":
        ev, vecs = _dense(v)
    elif method == "shift_invert":
        k = min(k_start, n - 2)
        while True:
            ev, vecs = _shift_invert(v, k, tol)
            if ev.max() >= cut or k >= n - 2:
                break
            k = min(2 * k, n - 2)
    else:
        raise DomainError(f"unknown eigensolver method {method!r}")

    keep = ev < cut
    if not keep.any():
        raise EmptySpectrumError(f"no eigenvalue below energy cut {cut:g}")
    ev = ev[keep]
    order = np.argsort(ev, kind="stable")
    ev = ev[order]
    vecs = vecs[keep][order]
    phi = np.array([_fix_sign(r) for r in vecs]) / np.sqrt(grid.cell_volume)

    h = _apply_h(v)
    res = np.array([np.sqrt(grid.cell_volume) * np.linalg.norm(h(p) - lam * p)
                    for lam, p in zip(ev, phi)])
    if np.any(res > RESIDUAL_TOL):
        warnings.warn(f"eigenpair residuals up to {res.max():.2e} exceed {RESIDUAL_TOL:g}",
                      RuntimeWarning, stacklevel=2)
    sd = SpectralData(grid, ev, phi, cut, res,
                      None if mu is None else dipole_matrix(phi, mu))
    edge = sd.boundary_amplitudes().max()
    if edge > BOUNDARY_TOL:
        warnings.warn(f"bound state amplitude {edge:.1e} at the box edge exceeds "
                      f"{BOUNDARY_TOL:g}; consider a larger half_extent",
                      RuntimeWarning, stacklevel=2)
    return sd


# ---------------------------------------------------------------------------
# projectors
# ---------------------------------------------------------------------------

def project_disc(sd: SpectralData, psi: WaveFunction) -> WaveFunction:
    c = sd.overlaps(psi)
    return WaveFunction(psi.grid, c @ sd.phi)


def project_ac(sd: SpectralData, psi: WaveFunction) -> WaveFunction:
    return psi - project_disc(sd, psi)


# ---------------------------------------------------------------------------
# assumptions
# ---------------------------------------------------------------------------

@dataclass
class AssumptionReport:
    a1_ok: bool
    a1_prime_ok: bool
    a2_ok: bool
    a3_ok: bool
    a4_ok: bool
    worst_gap: float
    worst_coupling: float
    continuum_mass: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for k in ("worst_gap", "worst_coupling"):
            if not np.isfinite(d[k]):
                d[k] = None
        return d


def transition_gap(eigenvalues) -> float:
    """min |(l_j - l_k) - (l_j' - l_k')| over distinct ordered pairs, j != k."""
    lam = np.asarray(eigenvalues, float)
    diffs = [lam[j] - lam[k] for j, k in itertools.permutations(range(lam.size), 2)]
    if len(diffs) < 2:
        return float("inf")
    d = np.sort(np.array(diffs))
    return float(np.min(np.diff(d)))


def weakest_coupling(mu_matrix) -> float:
    m = np.abs(np.asarray(mu_matrix))
    off = m[~np.eye(m.shape[0], dtype=bool)]
    return float(off.min()) if off.size else float("inf")


def check_assumptions(sd: SpectralData, psi0: WaveFunction, target: int = 0, eps: float = 0.1,
                      gap_tol: float = 1e-6, coupling_tol: float = 1e-8) -> AssumptionReport:
    if not 0 <= target <= sd.M:
        raise DomainError(f"target {target} outside 0..{sd.M}")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    if sd.mu_matrix is None:
        raise DomainError("spectral data carries no dipole matrix")
    c = sd.overlaps(psi0)
    pops = np.abs(c) ** 2
    norm2 = psi0.norm() ** 2
    cont = float(np.clip(norm2 - pops.sum(), 0.0, 1.0))
    target_pop = float(pops[target])
    gap = transition_gap(sd.eigenvalues)
    coupling = weakest_coupling(sd.mu_matrix)
    degenerate = sd.degenerate
    return AssumptionReport(
        a1_ok=cont <= 1e-10,
        a1_prime_ok=cont < eps / (1 - eps) * target_pop,
        a2_ok=abs(c[target]) > 1e-8,
        a3_ok=(gap > gap_tol) and not degenerate,
        a4_ok=coupling > coupling_tol,
        worst_gap=gap,
        worst_coupling=coupling,
        continuum_mass=cont,
        degenerate=degenerate,
    )


def save_spectrum(sd: SpectralData, out_dir, extra: dict | None = None) -> Path:
    """Write spectrum.json plus one binary snapshot per eigenfunction."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = sd.summary()
    if extra:
        summary.update(extra)
    names = []
    for j, wf in enumerate(sd.eigenfunctions):
        name = f"phi_{j}.bin"
        save_snapshot(out / name, wf)
        names.append(name)
    summary["eigenfunction_files"] = names
    path = out / "spectrum.json"
    path.write_text(json.dumps(summary, indent=2))
    return path
