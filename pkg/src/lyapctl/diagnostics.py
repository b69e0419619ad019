"""Lyapunov function, trajectory records and dissipation checks."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DomainError, SamplingError
from .grid import WaveFunction
from .spectrum import SpectralData


def lyapunov_from_overlaps(c: np.ndarray, eps: float, target: int) -> float:
    p = c.real ** 2 + c.imag ** 2
    return float(1.0 - (1.0 - eps) * p.sum() - eps * p[target])


def lyapunov(psi: WaveFunction, sd: SpectralData, eps: float, target: int = 0) -> float:
    """1 - (1-eps) sum_j |<psi, phi_j>|^2 - eps |<psi, phi_target>|^2."""
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    if not 0 <= target <= sd.M:
        raise DomainError(f"target {target} outside 0..{sd.M}")
    return lyapunov_from_overlaps(sd.overlaps(psi), eps, target)


def initial_bound_check(psi0: WaveFunction, sd: SpectralData, eps: float, target: int = 0) -> bool:
    """True iff V_eps(psi0) < eps, which keeps the discrete mass above 1 - eps."""
    return lyapunov(psi0, sd, eps, target) < eps


class TrajectoryRecord:
    """Per-step time series of one trajectory.

    Row k holds the state at t_k and the control u_k applied on
    [t_k, t_k + dt). The last row's ``u`` is the law evaluated at the final
    state (not applied). Control energies are cumulative trapezoid
    integrals of |u|^2 and |u|^r over the logged samples.
    """

    COLUMNS_HEAD = ("t", "lyapunov")
    COLUMNS_TAIL = ("target_pop", "u", "int_u2", "int_u_r", "continuum_mass",
                    "absorbed_mass", "norm")

    def __init__(self, n_states: int, capacity: int, exponent: float = 2.0,
                 target: int = 0, eps: float = 0.1):
        if n_states < 1:
            raise DomainError("record needs at least one bound state")
        self.n_states = n_states
        self.exponent = float(exponent)
        self.target = target
        self.eps = eps
        self.size = 0
        cap = max(1, int(capacity))
        self.t = np.empty(cap)
        self.lyapunov = np.empty(cap)
        self.populations = np.empty((cap, n_states))
        self.target_pop = np.empty(cap)
        self.u = np.empty(cap)
        self.int_u2 = np.empty(cap)
        self.int_u_r = np.empty(cap)
        self.continuum_mass = np.empty(cap)
        self.absorbed_mass = np.empty(cap)
        self.norm = np.empty(cap)
        self.complete = False

    _ARRAYS = ("t", "lyapunov", "populations", "target_pop", "u", "int_u2", "int_u_r",
               "continuum_mass", "absorbed_mass", "norm")

    def _grow(self):
        for name in self._ARRAYS:
            a = getattr(self, name)
            b = np.empty((2 * a.shape[0],) + a.shape[1:])
            b[: a.shape[0]] = a
            setattr(self, name, b)

    def append(self, t, lyap, pops, u, norm_sq, absorbed):
        k = self.size
        if k and not t > self.t[k - 1]:
            raise SamplingError("samples must be appended in increasing time")
        if k == self.t.shape[0]:
            self._grow()
        self.t[k] = t
        self.lyapunov[k] = lyap
        self.populations[k] = pops
        self.target_pop[k] = pops[self.target]
        self.u[k] = u
        self.continuum_mass[k] = max(norm_sq - float(np.sum(pops)), 0.0)
        self.absorbed_mass[k] = absorbed
        self.norm[k] = np.sqrt(norm_sq)
        au = abs(u)
        if k == 0:
            self.int_u2[0] = 0.0
            self.int_u_r[0] = 0.0
        else:
            h = 0.5 * (t - self.t[k - 1])
            ap = abs(self.u[k - 1])
            self.int_u2[k] = self.int_u2[k - 1] + h * (ap * ap + au * au)
            self.int_u_r[k] = self.int_u_r[k - 1] + h * (ap ** self.exponent + au ** self.exponent)
        self.size = k + 1

    def __len__(self):
        return self.size

    def column(self, name):
        if name.startswith("pop_"):
            return self.populations[: self.size, int(name[4:])]
        return getattr(self, name)[: self.size]

    @property
    def columns(self) -> list[str]:
        return (list(self.COLUMNS_HEAD) + [f"pop_{j}" for j in range(self.n_states)]
                + list(self.COLUMNS_TAIL))

    def final(self, name):
        return float(self.column(name)[-1])

    def table(self) -> np.ndarray:
        return np.column_stack([self.column(c) for c in self.columns])

    def write_csv(self, path, every: int = 1) -> None:
        """Columns in the fixed schema order; ``every`` thins rows but keeps the last."""
        rows = np.arange(0, self.size, max(1, int(every)))
        if self.size and rows[-1] != self.size - 1:
            rows = np.append(rows, self.size - 1)
        tab = self.table()[rows]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in tab:
                w.writerow([repr(float(x)) for x in r])

    def save_npz(self, path) -> None:
        data = {name: getattr(self, name)[: self.size] for name in self._ARRAYS}
        np.savez(path, exponent=self.exponent, target=self.target, eps=self.eps,
                 complete=self.complete, **data)

    @classmethod
    def load_npz(cls, path) -> "TrajectoryRecord":
        with np.load(path) as z:
            pops = z["populations"]
            rec = cls(pops.shape[1], max(1, pops.shape[0]), float(z["exponent"]),
                      int(z["target"]), float(z["eps"]))
            for name in cls._ARRAYS:
                getattr(rec, name)[: pops.shape[0]] = z[name]
            rec.size = pops.shape[0]
            rec.complete = bool(z["complete"])
        return rec

    def truncated(self) -> "TrajectoryRecord":
        """Copy holding only the filled rows (used for partial records)."""
        rec = TrajectoryRecord(self.n_states, max(1, self.size), self.exponent,
                               self.target, self.eps)
        for name in self._ARRAYS:
            getattr(rec, name)[: self.size] = getattr(self, name)[: self.size]
        rec.size = self.size
        rec.complete = self.complete
        return rec


def record_sample(record: TrajectoryRecord, psi: WaveFunction, sd: SpectralData, eps: float,
                  t: float, u: float, absorbed_mass: float = 0.0,
                  control_sd: SpectralData | None = None) -> None:
    """Append one row computed from the live state.

    Populations are taken against ``sd``; the Lyapunov value against
    ``control_sd`` when given (the H_sigma basis of the relaxed law).
    """
    c = sd.overlaps(psi)
    pops = c.real ** 2 + c.imag ** 2
    if control_sd is None:
        lyap = lyapunov_from_overlaps(c, eps, record.target)
    else:
        lyap = lyapunov_from_overlaps(control_sd.overlaps(psi), eps, record.target)
    norm_sq = psi.grid.cell_volume * float(np.vdot(psi.amplitudes, psi.amplitudes).real)
    record.append(t, lyap, pops, u, norm_sq, absorbed_mass)


def _uniform_dt(t: np.ndarray, dt: float) -> None:
    if t.size < 2:
        raise SamplingError("need at least two samples")
    steps = np.diff(t)
    if np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, dt) + 1e-12 * np.max(np.abs(t)):
        raise SamplingError(
            f"record is not sampled every step of dt={dt:g} "
            f"(spacing ranges {steps.min():g}..{steps.max():g})")


def verify_dissipation(record: TrajectoryRecord, cfg, dt: float, start: float = 0.0) -> dict:
    """Compare the discrete decay of V_eps with the continuous identity.

    The pointwise residual is max_k |(V_{k+1} - V_k)/dt + kappa |u_k|^r|
    where kappa and r come from ``cfg`` (1/c and 2 for the basic law).
    The energy residual is |int |u|^r - (V(t0) - V(T)) / kappa|, reported
    absolutely and relative to the right side. Rows with t < ``start`` are
    skipped (for instance a resonant pre-pulse).
    """
    t = record.column("t")
    keep = t >= start - 1e-12
    t = t[keep]
    v = record.column("lyapunov")[keep]
    u = record.column("u")[keep]
    if cfg.mode == "feed_sigma":
        # the relaxed law dissipates through v = u + sigma
        u = u + cfg.sigma
    _uniform_dt(t, dt)
    kappa = cfg.dissipation_coefficient
    r = cfg.exponent
    au = np.abs(u) ** r
    pointwise = np.diff(v) / dt + kappa * au[:-1]
    energy = float(np.sum(0.5 * (au[1:] + au[:-1]) * np.diff(t)))
    drop = float(v[0] - v[-1]) / kappa
    resid = abs(energy - drop)
    return {
        "exponent": r,
        "kappa": kappa,
        "dt": dt,
        "max_pointwise_residual": float(np.max(np.abs(pointwise))),
        "energy_integral": energy,
        "lyapunov_drop_scaled": drop,
        "energy_residual": resid,
        "energy_residual_relative": resid / abs(drop) if drop != 0 else (0.0 if resid == 0 else np.inf),
        "max_lyapunov_increase": float(np.max(np.diff(v))) if v.size > 1 else 0.0,
    }


def summary(record: TrajectoryRecord) -> dict:
    if record.size == 0:
        return {"samples": 0}
    return {
        "samples": record.size,
        "t_final": record.final("t"),
        "final_populations": [float(x) for x in record.populations[record.size - 1]],
        "final_target_population": record.final("target_pop"),
        "final_lyapunov": record.final("lyapunov"),
        "max_continuum_plus_absorbed": float(np.max(record.column("continuum_mass")
                                                    + record.column("absorbed_mass"))),
        "int_u2": record.final("int_u2"),
        "int_u_r": record.final("int_u_r"),
        "exponent": record.exponent,
        "complete": record.complete,
    }


def write_json(path, data: dict) -> None:
    Path(path).write_text(json.dumps(data, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
