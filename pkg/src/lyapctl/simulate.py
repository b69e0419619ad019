"""Step a trajectory under feedback, an explicit signal, or a replayed sample array."""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .controller import FeedbackLaw
from .diagnostics import TrajectoryRecord, lyapunov_from_overlaps
from .errors import DomainError, NumericalBlowUpError
from .grid import WaveFunction
from .hamiltonian import RealField
from .propagator import PropagatorConfig, Propagator
from .spectrum import SpectralData


def step_count(horizon: float, dt: float) -> int:
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise DomainError(f"horizon {horizon:g} is not a whole number of steps of {dt:g}")
    return n


class Trajectory:
    """Outcome of :func:`simulate`: the record and the final state."""

    def __init__(self, record: TrajectoryRecord, psi: WaveFunction, propagator: Propagator):
        self.record = record
        self.psi = psi
        self.absorbed_mass = propagator.absorbed_mass
        self.steps = propagator.steps


def simulate(psi0: WaveFunction, v: RealField, mu: RealField, sd: SpectralData,
             prop_cfg: PropagatorConfig, horizon: float, *, law: FeedbackLaw | None = None,
             signal=None, samples=None, switch_time: float = 0.0, eps: float = 0.1,
             target: int = 0, exponent: float = 2.0) -> Trajectory:
    """Run one trajectory and record every step.

    The control on step k is, in order of precedence:
    ``samples[k]`` when a sample array is given (open-loop replay);
    ``signal(t_k + dt/2)`` while t_k < ``switch_time`` or when no law is
    given (explicit signals are sampled at the step midpoint);
    otherwise the feedback ``law`` evaluated on the state at t_k.

    Populations are recorded against ``sd``. The Lyapunov column uses the
    law's own basis and eps when a law is given, else ``sd`` and ``eps``.
    """
    dt = prop_cfg.dt
    n = step_count(horizon, dt)
    if samples is not None:
        samples = np.asarray(samples, dtype=float)
        if samples.size < n:
            raise DomainError(f"replay needs {n} samples, got {samples.size}")
    elif law is None and signal is None:
        raise DomainError("need a feedback law, a signal, or a sample array")
    sd.grid.check_same(psi0.grid)

    prop = Propagator(v, mu, prop_cfg)
    weight = sd.grid.cell_volume
    rep_phi = np.ascontiguousarray(sd.phi, dtype=np.complex128)
    same_basis = law is None or law.sd is sd
    if law is not None:
        lyap_eps, lyap_target = law.cfg.lyapunov_eps, law.cfg.target
        exponent = law.cfg.exponent
    else:
        lyap_eps, lyap_target = eps, target
    rec = TrajectoryRecord(sd.count, n + 1, exponent, target if law is None else law.cfg.target,
                           lyap_eps)

    psi = np.array(psi0.amplitudes, dtype=np.complex128)
    for k in range(n + 1):
        t = k * dt
        if law is not None:
            c_ctl, m_ctl = law.overlaps(psi)
        if same_basis and law is not None:
            c_rep = c_ctl
        else:
            c_rep = weight * (rep_phi @ psi)
        pops = c_rep.real ** 2 + c_rep.imag ** 2
        if law is not None:
            lyap = lyapunov_from_overlaps(c_ctl, lyap_eps, lyap_target)
        else:
            lyap = lyapunov_from_overlaps(c_rep, lyap_eps, lyap_target)

        if samples is not None:
            u = float(samples[k]) if k < samples.size else 0.0
        elif signal is not None and (law is None or t < switch_time):
            u = float(signal(t + 0.5 * dt))
        else:
            u = law(c_ctl, m_ctl)
        if not math.isfinite(u):
            err = NumericalBlowUpError(f"non-finite control at t={t:g}", step=k, t=t)
            err.partial = rec.truncated()
            raise err

        rec.append(t, lyap, pops, u, kernels.norm_sq(psi, weight), prop.absorbed_mass)
        if k == n:
            break
        try:
            psi = prop.advance(psi, u)
        except NumericalBlowUpError as err:
            err.t = t + dt
            err.partial = rec.truncated()
            raise
    rec.complete = True
    return Trajectory(rec, WaveFunction(sd.grid, psi), prop)
