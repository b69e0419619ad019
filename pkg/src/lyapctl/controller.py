"""Lyapunov feedback laws, the resonant pre-pulse, and the alpha selection rule.

Sign convention. With i dpsi/dt = (H0 - u mu) psi and <a, b> linear in
``a``, a direct computation gives dV_eps/dt = 2 u f(psi), where f is the
bracket computed by :func:`feedback_f`. The laws below therefore push
against f with gain 2c:

    feed        u = -2 c f                       dV/dt = -u^2 / c
    feed_alpha  u = -c g |g|^alpha,  g = 2 f     dV/dt = -c^(-1/(1+alpha)) |u|^r
    feed_sigma  u = -sigma + v,  v = -2 c f_sigma  (bracket on H_sigma, eps/2)

with r = (2 + alpha) / (1 + alpha). For alpha = 0 feed_alpha reduces to feed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, EmptySpectrumError
from .grid import WaveFunction
from .hamiltonian import RealField
from .spectrum import SpectralData

MODES = ("feed", "feed_alpha", "feed_sigma")


@dataclass(frozen=True)
class KickSpec:
    source: int
    amplitude: float = 0.1
    duration: float | None = None

    def __post_init__(self):
        if self.duration is not None and not self.duration > 0:
            raise DomainError("kick duration must be positive")


@dataclass(frozen=True)
class ControllerConfig:
    mode: str = "feed"
    eps: float = 0.1
    gain: float = 1.0
    alpha: float = 0.0
    sigma: float = 0.0
    target: int = 0
    kick: KickSpec | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.eps < 1:
            raise DomainError("eps must lie in (0, 1)")
        if not self.gain > 0:
            raise DomainError("gain c must be positive")
        if not self.alpha >= 0:
            raise DomainError("alpha must be >= 0")
        if self.target < 0:
            raise DomainError("target index must be >= 0")

    @property
    def exponent(self) -> float:
        """Integrability exponent r of the control: dV/dt = -kappa |u|^r."""
        if self.mode == "feed_alpha":
            return (2.0 + self.alpha) / (1.0 + self.alpha)
        return 2.0

    @property
    def dissipation_coefficient(self) -> float:
        """kappa in dV/dt = -kappa |u|^r for the law's own Lyapunov function."""
        if self.mode == "feed_alpha":
            return self.gain ** (-1.0 / (1.0 + self.alpha))
        return 1.0 / self.gain

    @property
    def lyapunov_eps(self) -> float:
        return 0.5 * self.eps if self.mode == "feed_sigma" else self.eps

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "eps": self.eps, "gain": self.gain, "alpha": self.alpha,
             "sigma": self.sigma, "target": self.target}
        if self.kick is not None:
            d["kick"] = {"source": self.kick.source, "amplitude": self.kick.amplitude,
                         "duration": self.kick.duration}
        return d


def bracket(c: np.ndarray, m: np.ndarray, eps: float, target: int) -> float:
    """(1-eps) sum_j Im(m_j conj c_j) + eps Im(m_t conj c_t).

    ``c_j = <psi, phi_j>`` and ``m_j = <mu psi, phi_j>``, so that
    m_j conj(c_j) = <mu psi, phi_j><phi_j, psi>.
    """
    z = (m * np.conj(c)).imag
    return float((1.0 - eps) * z.sum() + eps * z[target])


def _overlaps(psi: WaveFunction, sd: SpectralData, mu: RealField):
    sd.grid.check_same(psi.grid)
    dv = psi.grid.cell_volume
    c = dv * (sd.phi @ psi.amplitudes)
    m = dv * (sd.phi @ (mu.values * psi.amplitudes))
    return c, m


def feedback_f(psi: WaveFunction, sd: SpectralData, mu: RealField, eps: float,
               target: int = 0) -> float:
    if sd.count == 0:
        raise EmptySpectrumError("feedback needs at least one bound state")
    if not 0 <= target <= sd.M:
        raise DomainError(f"target {target} outside 0..{sd.M}")
    c, m = _overlaps(psi, sd, mu)
    return bracket(c, m, eps, target)


def _alpha_law(f: float, gain: float, alpha: float) -> float:
    g = 2.0 * f
    return -gain * g * abs(g) ** alpha


def feedback_u(psi, sd, mu, cfg: ControllerConfig) -> float:
    return -2.0 * cfg.gain * feedback_f(psi, sd, mu, cfg.eps, cfg.target)


def feedback_u_alpha(psi, sd, mu, cfg: ControllerConfig) -> float:
    return _alpha_law(feedback_f(psi, sd, mu, cfg.eps, cfg.target), cfg.gain, cfg.alpha)


def feedback_u_sigma(psi, sd_sigma: SpectralData, mu, cfg: ControllerConfig) -> float:
    """-sigma + v with v the eps/2 law on the eigenbasis of H0 + sigma mu."""
    if sd_sigma is None or sd_sigma.count == 0:
        raise EmptySpectrumError("feed_sigma needs the spectral data of H_sigma")
    f = feedback_f(psi, sd_sigma, mu, 0.5 * cfg.eps, cfg.target)
    return -cfg.sigma - 2.0 * cfg.gain * f


def control_value(cfg: ControllerConfig, c: np.ndarray, m: np.ndarray) -> float:
    """Dispatch on ``cfg.mode`` given precomputed overlaps."""
    if cfg.mode == "feed":
        return -2.0 * cfg.gain * bracket(c, m, cfg.eps, cfg.target)
    if cfg.mode == "feed_alpha":
        return _alpha_law(bracket(c, m, cfg.eps, cfg.target), cfg.gain, cfg.alpha)
    return -cfg.sigma - 2.0 * cfg.gain * bracket(c, m, 0.5 * cfg.eps, cfg.target)


class FeedbackLaw:
    """Precomputed conjugate eigenfunction rows for fast per-step evaluation."""

    def __init__(self, cfg: ControllerConfig, sd: SpectralData, mu: RealField):
        sd.grid.check_same(mu.grid)
        if not cfg.target <= sd.M:
            raise DomainError(f"target {cfg.target} outside 0..{sd.M}")
        self.cfg = cfg
        self.sd = sd
        self.weight = sd.grid.cell_volume
        self.conj_phi = np.ascontiguousarray(sd.phi, dtype=np.complex128)
        self.conj_muphi = np.ascontiguousarray(sd.phi * mu.values, dtype=np.complex128)

    def overlaps(self, psi: np.ndarray):
        return kernels.overlaps(psi, self.conj_phi, self.conj_muphi, self.weight)

    def __call__(self, c: np.ndarray, m: np.ndarray) -> float:
        return control_value(self.cfg, c, m)


@dataclass(frozen=True)
class KickSignal:
    """u(t) = A cos(omega t) on [0, duration], zero afterwards."""

    frequency: float
    amplitude: float
    duration: float

    def __call__(self, t: float) -> float:
        if 0.0 <= t <= self.duration:
            return self.amplitude * math.cos(self.frequency * t)
        return 0.0


def resonant_kick_signal(sd: SpectralData, kick: KickSpec, target: int = 0) -> KickSignal:
    k = kick.source
    if not (0 <= k <= sd.M and 0 <= target <= sd.M):
        raise DomainError("kick source and target must index bound states")
    if k == target:
        raise DomainError("kick source equals target: degenerate frequency")
    omega = float(sd.eigenvalues[k] - sd.eigenvalues[target])
    duration = kick.duration
    if duration is None:
        if sd.mu_matrix is None:
            raise DomainError("default kick duration needs the dipole matrix")
        coupling = abs(sd.mu_matrix[k, target])
        if kick.amplitude == 0 or coupling == 0:
            raise DomainError("default kick duration needs nonzero amplitude and coupling")
        duration = math.pi / (abs(kick.amplitude) * coupling)
    return KickSignal(omega, float(kick.amplitude), float(duration))


def alpha_from_dispersion(p: float, dim: int, varpi: float) -> tuple[float, float]:
    """alpha = (p - 2N + varpi (p - N)) / (N - varpi (p - N)).

    Returns ``(alpha, r)`` with r = (2 + alpha) / (1 + alpha), which equals
    p / (p - N) - varpi. Requires p >= 2N, varpi > 0 and a positive
    denominator, i.e. varpi < N / (p - N).
    """
    n = float(dim)
    if not p >= 2 * n:
        raise DomainError(f"p must be >= 2N = {2 * n:g}")
    if not varpi > 0:
        raise DomainError("varpi must be positive")
    denom = n - varpi * (p - n)
    if not denom > 0:
        raise DomainError(f"varpi must be < N/(p-N) = {n / (p - n):g}")
    alpha = (p - 2 * n + varpi * (p - n)) / denom
    return alpha, (2.0 + alpha) / (1.0 + alpha)
