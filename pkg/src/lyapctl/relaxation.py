"""Perturbed Hamiltonians H_sigma = H0 + sigma mu, sigma scans and the relaxed loop.

When parity or an accidental degeneracy makes a transition forbidden or
two transition frequencies coincide, adding a small static field sigma mu
can restore both non-degeneracy conditions. The scan below tracks each
bound-state branch across sigma, measures how far the eigenfunctions
drift from the unperturbed ones, and picks the smallest sigma that both
repairs the conditions and stays close enough for the final population
bound to transfer back to the unperturbed target.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .controller import ControllerConfig, FeedbackLaw
from .errors import ConfigError, DomainError, EmptySpectrumError
from .grid import WaveFunction
from .hamiltonian import RealField
from .propagator import PropagatorConfig
from .simulate import Trajectory, simulate
from .spectrum import SpectralData, check_assumptions, solve_bound_states

# a tracked branch must keep at least this overlap with its predecessor
_MIN_TRACK_OVERLAP = 0.5


def build_perturbed(v: RealField, mu: RealField, sigma: float) -> RealField:
    v.grid.check_same(mu.grid)
    return RealField(v.grid, v.values + sigma * mu.values)


def default_sigma_grid(mu: RealField, points: int = 16, lo: float = 1e-3) -> np.ndarray:
    hi = 0.5 / mu.sup_norm()
    if hi <= lo:
        raise DomainError(f"sigma_max = {hi:g} is below the grid start {lo:g}")
    return np.logspace(np.log10(lo), np.log10(hi), points)


def closeness_bound(eps: float, target_overlap: float, M: int) -> float:
    """min(eps/4, eps |c_t|^2 / (2 (M+1)(2-eps) + 2 eps))."""
    p = abs(target_overlap) ** 2
    return min(eps / 4.0, eps * p / (2.0 * (M + 1) * (2.0 - eps) + 2.0 * eps))


def _isolation(eigenvalues: np.ndarray) -> np.ndarray:
    """Distance of each eigenvalue to the rest of the spectrum, threshold 0 included."""
    lam = np.asarray(eigenvalues, float)
    out = np.empty(lam.size)
    for j in range(lam.size):
        others = np.append(np.delete(lam, j), 0.0)
        out[j] = np.min(np.abs(others - lam[j]))
    return out


def track(prev: SpectralData, new: SpectralData) -> tuple[SpectralData, list[int], list[int]]:
    """Reorder and sign-align ``new`` so row j continues branch j of ``prev``.

    Matching maximizes the total |<phi_j(prev), phi_k(new)>|. Returns the
    aligned data, the indices of ``prev`` branches that found no partner
    (lost to the continuum) and the indices of states that are new.
    """
    ov = prev.grid.cell_volume * (prev.phi @ new.phi.T)
    rows, cols = linear_sum_assignment(-np.abs(ov))
    good = np.abs(ov[rows, cols]) >= _MIN_TRACK_OVERLAP
    matched = dict(zip(rows[good].tolist(), cols[good].tolist()))
    lost = [j for j in range(prev.count) if j not in matched]
    if lost:
        return new, lost, []
    order = [matched[j] for j in range(prev.count)]
    fresh = sorted(set(range(new.count)) - set(order), key=lambda k: new.eigenvalues[k])
    order += fresh
    signs = np.ones(new.count)
    for j in range(prev.count):
        if ov[j, matched[j]] < 0:
            signs[j] = -1.0
    phi = new.phi[order] * signs[:, None]
    mm = None
    if new.mu_matrix is not None:
        mm = new.mu_matrix[np.ix_(order, order)] * np.outer(signs, signs)
    aligned = SpectralData(new.grid, new.eigenvalues[order], phi, new.energy_cut,
                           new.residuals[order], mm)
    return aligned, [], list(range(prev.count, new.count))


@dataclass
class SigmaPoint:
    sigma: float
    eigenvalues: list
    count: int
    worst_gap: float
    worst_coupling: float
    a3_ok: bool
    a4_ok: bool
    a1_prime_ok: bool
    drift: float
    drift_step_bound: float
    continuity_ok: bool
    new_states: list

    def to_dict(self):
        d = dict(self.__dict__)
        for k in ("worst_gap", "worst_coupling"):
            if not np.isfinite(d[k]):
                d[k] = None
        return d


@dataclass
class SigmaScanReport:
    sigma_values: np.ndarray
    points: list
    reference: SigmaPoint
    closeness_bound: float
    selected_sigma: float | None
    eps: float
    target: int
    truncated_at: float | None = None
    warnings: list = field(default_factory=list)
    spectra: dict = field(default_factory=dict, repr=False)
    reference_spectrum: SpectralData | None = field(default=None, repr=False)

    @property
    def continuity_ok(self) -> bool:
        return all(p.continuity_ok for p in self.points)

    def selected_spectrum(self) -> SpectralData | None:
        if self.selected_sigma is None:
            return None
        return self.spectra[self.selected_sigma]

    def to_dict(self) -> dict:
        return {
            "sigma_values": [float(s) for s in self.sigma_values],
            "reference": self.reference.to_dict(),
            "points": [p.to_dict() for p in self.points],
            "closeness_bound": self.closeness_bound,
            "selected_sigma": self.selected_sigma,
            "eps": self.eps,
            "target": self.target,
            "truncated_at": self.truncated_at,
            "continuity_ok": self.continuity_ok,
            "warnings": self.warnings,
        }

    def write_eigenvalue_csv(self, path) -> None:
        """One row per sigma: sigma, lambda_0 .. lambda_K (blank when absent)."""
        pts = [self.reference] + self.points
        width = max(p.count for p in pts)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sigma"] + [f"lambda_{j}" for j in range(width)])
            for p in pts:
                vals = [repr(float(x)) for x in p.eigenvalues]
                w.writerow([repr(float(p.sigma))] + vals + [""] * (width - len(vals)))


def _point(sigma, sd, sd0, psi0, eps, target, gap_tol, coupling_tol, drift_step_bound,
           prev_drift, d_sigma, new_states):
    rep = check_assumptions(sd, psi0, target, 0.5 * eps, gap_tol, coupling_tol)
    dv = sd.grid.cell_volume
    n0 = sd0.count
    diff = sd.phi[:n0] - sd0.phi
    drift = float(np.sqrt(dv * np.max(np.sum(diff * diff, axis=1))))
    continuity = prev_drift is None or abs(drift - prev_drift) < 10.0 * drift_step_bound * d_sigma
    return SigmaPoint(float(sigma), sd.eigenvalues.tolist(), sd.count, rep.worst_gap,
                      rep.worst_coupling, rep.a3_ok, rep.a4_ok, rep.a1_prime_ok, drift,
                      drift_step_bound, bool(continuity), new_states)


def scan_sigma(v: RealField, mu: RealField, sigma_grid=None, *, psi0: WaveFunction,
               eps: float = 0.2, target: int = 0, gap_tol: float = 1e-6,
               coupling_tol: float = 1e-8, sd0: SpectralData | None = None,
               energy_cut: float | None = None) -> SigmaScanReport:
    """Solve H_sigma on each grid point, track branches and check the conditions.

    ``drift_step_bound`` is the first-order estimate ||mu||_inf / isolation
    of ||d phi_j / d sigma||, the isolation being the distance of lambda_j
    to the rest of the spectrum including the threshold 0. Adjacent scan
    points must change the drift by less than ten times that bound times
    the sigma step.
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    sigmas = default_sigma_grid(mu) if sigma_grid is None else np.asarray(sigma_grid, float)
    if sigmas.ndim != 1 or sigmas.size == 0:
        raise DomainError("sigma grid must be a nonempty 1D array")
    if not (np.all(sigmas > 0) and np.all(np.diff(sigmas) > 0)):
        raise DomainError("sigma grid must be positive and strictly increasing")
    if sd0 is None:
        sd0 = solve_bound_states(v, mu=mu, energy_cut=energy_cut)
    elif sd0.mu_matrix is None:
        sd0 = sd0.with_dipole(mu)
    if not 0 <= target <= sd0.M:
        raise DomainError(f"target {target} outside 0..{sd0.M}")
    mu_sup = mu.sup_norm()
    bound = closeness_bound(eps, sd0.overlaps(psi0)[target], sd0.M)

    ref = _point(0.0, sd0, sd0, psi0, eps, target, gap_tol, coupling_tol,
                 mu_sup / _isolation(sd0.eigenvalues).min(), None, 0.0, [])
    report = SigmaScanReport(sigmas, [], ref, bound, None, eps, target,
                             reference_spectrum=sd0)
    prev, prev_sigma, prev_drift = sd0, 0.0, 0.0
    prev_step_bound = ref.drift_step_bound
    for s in sigmas:
        vs = build_perturbed(v, mu, s)
        try:
            raw = solve_bound_states(vs, mu=mu, energy_cut=sd0.energy_cut)
        except EmptySpectrumError:
            raw = None
        lost = list(range(prev.count)) if raw is None else []
        if raw is not None:
            sd, lost, fresh = track(prev, raw)
        if lost:
            msg = (f"bound state branch(es) {lost} left the discrete spectrum at "
                   f"sigma={s:g}; scan truncated")
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            report.warnings.append(msg)
            report.truncated_at = float(s)
            break
        if fresh:
            msg = f"new bound state(s) {fresh} appeared at sigma={s:g}"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            report.warnings.append(msg)
        step_bound = mu_sup / _isolation(sd.eigenvalues).min()
        pt = _point(s, sd, sd0, psi0, eps, target, gap_tol, coupling_tol,
                    max(step_bound, prev_step_bound), prev_drift, s - prev_sigma, fresh)
        report.points.append(pt)
        report.spectra[float(s)] = sd
        if report.selected_sigma is None and pt.a3_ok and pt.a4_ok and pt.drift < bound:
            report.selected_sigma = float(s)
        prev, prev_sigma, prev_drift, prev_step_bound = sd, s, pt.drift, step_bound
    return report


def run_relaxed_control(v: RealField, mu: RealField, psi0: WaveFunction, eps: float,
                        report: SigmaScanReport, prop_cfg: PropagatorConfig, horizon: float,
                        gain: float = 1.0, target: int = 0) -> Trajectory:
    """Closed loop with u = -sigma + v toward the H_sigma target.

    The record's populations refer to the unperturbed bound states, so
    success reads directly as target_pop > 1 - eps at the end. The
    Lyapunov column is the eps/2 function of the H_sigma basis.
    """
    if report.selected_sigma is None:
        raise ConfigError("sigma scan selected no sigma; relaxed control not run")
    sd_s = report.selected_spectrum()
    sd0 = report.reference_spectrum
    rep = check_assumptions(sd_s, psi0, target, 0.5 * eps)
    if not rep.a1_prime_ok:
        raise ConfigError("initial state violates the relaxed A1' condition for H_sigma "
                          f"with eps/2 (continuum mass {rep.continuum_mass:.3g})")
    if not rep.a2_ok:
        raise ConfigError("initial state has no overlap with the H_sigma target")
    cfg = ControllerConfig(mode="feed_sigma", eps=eps, gain=gain,
                           sigma=report.selected_sigma, target=target)
    law = FeedbackLaw(cfg, sd_s, mu)
    return simulate(psi0, v, mu, sd0, prop_cfg, horizon, law=law)
