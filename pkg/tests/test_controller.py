import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lyapctl.controller import (ControllerConfig, FeedbackLaw, KickSpec, alpha_from_dispersion,
                                bracket, control_value, feedback_f, feedback_u, feedback_u_alpha,
                                feedback_u_sigma, resonant_kick_signal)
from lyapctl.diagnostics import lyapunov
from lyapctl.errors import DomainError, EmptySpectrumError
from lyapctl.grid import WaveFunction, gaussian
from lyapctl.propagator import PropagatorConfig, step
from lyapctl.spectrum import project_ac

from conftest import random_state


def _superposition(grid, sd, phase=1j):
    return WaveFunction(grid, (sd.phi[0] + phase * sd.phi[1]) / np.sqrt(2))


def test_two_level_bracket_closed_form(pt2):
    # c = (1, i)/sqrt2 and m_j = sum_k mu_jk c_k: the total sum cancels and
    # only the eps-weighted target term survives, f = eps mu01 / 2
    grid, _, mu, sd = pt2
    psi = _superposition(grid, sd)
    mu01 = sd.mu_matrix[0, 1]
    for eps in (0.1, 0.3):
        assert feedback_f(psi, sd, mu, eps) == pytest.approx(eps * mu01 / 2, abs=1e-12)
    cfg = ControllerConfig(eps=0.1, gain=1.0)
    assert feedback_u(psi, sd, mu, cfg) == pytest.approx(-0.1 * mu01, abs=1e-12)


def test_f_vanishes_on_eigenstates_and_real_states(pt2):
    grid, _, mu, sd = pt2
    assert feedback_f(sd.eigenfunctions[0], sd, mu, 0.1) == pytest.approx(0.0, abs=1e-14)
    real = WaveFunction(grid, (sd.phi[0] + sd.phi[1]) / np.sqrt(2))
    assert feedback_f(real, sd, mu, 0.1) == pytest.approx(0.0, abs=1e-14)


def test_gauge_invariance(pt2, rng):
    grid, _, mu, sd = pt2
    psi = random_state(grid, rng)
    f = feedback_f(psi, sd, mu, 0.2)
    rotated = WaveFunction(grid, np.exp(0.83j) * psi.amplitudes)
    assert feedback_f(rotated, sd, mu, 0.2) == pytest.approx(f, abs=1e-14)


def test_derivative_identity(pt2, rng):
    # dV/dt = 2 u f along the controlled flow with u held fixed
    grid, v, mu, sd = pt2
    psi = _superposition(grid, sd, np.exp(0.4j))
    psi = WaveFunction(grid, psi.amplitudes + 0.1 * project_ac(sd, gaussian(grid, 1.0)).amplitudes)
    eps, u, h = 0.1, 0.3, 1e-4
    cfg = PropagatorConfig(dt=h)
    plus = step(psi, v, mu, u, cfg)
    minus = step(psi, v, mu, u, cfg, dt=-h)
    deriv = (lyapunov(plus, sd, eps) - lyapunov(minus, sd, eps)) / (2 * h)
    assert deriv == pytest.approx(2 * u * feedback_f(psi, sd, mu, eps), rel=1e-6)


def test_feed_dissipates(pt2, rng):
    grid, v, mu, sd = pt2
    cfg = ControllerConfig(eps=0.1, gain=2.0)
    psi = random_state(grid, rng)
    u = feedback_u(psi, sd, mu, cfg)
    nxt = step(psi, v, mu, u, PropagatorConfig(dt=1e-4))
    assert lyapunov(nxt, sd, 0.1) < lyapunov(psi, sd, 0.1)


def test_control_bound(pt2, rng):
    grid, _, mu, sd = pt2
    cfg = ControllerConfig(eps=0.3, gain=1.7)
    bound = 2 * cfg.gain * (sd.M + 2) * np.max(np.abs(mu.values))
    for _ in range(20):
        assert abs(feedback_u(random_state(grid, rng), sd, mu, cfg)) <= bound


def test_alpha_zero_is_feed(pt2, rng):
    grid, _, mu, sd = pt2
    psi = random_state(grid, rng)
    a = feedback_u(psi, sd, mu, ControllerConfig(gain=1.3))
    b = feedback_u_alpha(psi, sd, mu, ControllerConfig(mode="feed_alpha", gain=1.3, alpha=0.0))
    assert a == pytest.approx(b, rel=1e-14)


def test_alpha_law_dissipation_rate(pt2):
    # dV/dt = 2 u f = -kappa |u|^r with kappa = c^(-1/(1+alpha))
    grid, _, mu, sd = pt2
    psi = _superposition(grid, sd, np.exp(0.3j))
    cfg = ControllerConfig(mode="feed_alpha", gain=2.5, alpha=1.5)
    f = feedback_f(psi, sd, mu, cfg.eps)
    u = feedback_u_alpha(psi, sd, mu, cfg)
    assert 2 * u * f == pytest.approx(-cfg.dissipation_coefficient * abs(u) ** cfg.exponent,
                                      rel=1e-12)
    assert cfg.exponent == pytest.approx(3.5 / 2.5)


def test_sigma_law(pt2, rng):
    grid, _, mu, sd = pt2
    psi = random_state(grid, rng)
    cfg = ControllerConfig(mode="feed_sigma", eps=0.2, sigma=0.05, gain=1.0)
    u = feedback_u_sigma(psi, sd, mu, cfg)
    assert u == pytest.approx(-0.05 - 2 * feedback_f(psi, sd, mu, 0.1))
    assert cfg.lyapunov_eps == 0.1
    with pytest.raises(EmptySpectrumError):
        feedback_u_sigma(psi, None, mu, cfg)


def test_control_value_dispatch(pt2, rng):
    grid, _, mu, sd = pt2
    psi = random_state(grid, rng)
    for cfg, fn in [(ControllerConfig(gain=0.7), feedback_u),
                    (ControllerConfig(mode="feed_alpha", alpha=0.5), feedback_u_alpha),
                    (ControllerConfig(mode="feed_sigma", sigma=0.1), feedback_u_sigma)]:
        law = FeedbackLaw(cfg, sd, mu)
        c, m = law.overlaps(psi.amplitudes)
        assert law(c, m) == pytest.approx(fn(psi, sd, mu, cfg), rel=1e-12, abs=1e-15)
        assert control_value(cfg, c, m) == law(c, m)


def test_bracket_target_term():
    c = np.array([1.0, 1j]) / np.sqrt(2)
    m = np.array([0.2j, 0.0])
    # only j = 0 contributes, Im(m_0 conj c_0) = 0.2 / sqrt2
    z = 0.2 / np.sqrt(2)
    assert bracket(c, m, 0.5, 0) == pytest.approx(z)
    assert bracket(c, m, 0.5, 1) == pytest.approx(0.5 * z)


@pytest.mark.parametrize("kw", [dict(mode="bang"), dict(eps=0.0), dict(eps=1.0),
                                dict(gain=0.0), dict(alpha=-1.0), dict(target=-1)])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        ControllerConfig(**kw)


def test_target_out_of_range(pt2):
    grid, _, mu, sd = pt2
    with pytest.raises(DomainError):
        feedback_f(sd.eigenfunctions[0], sd, mu, 0.1, target=5)
    with pytest.raises(DomainError):
        FeedbackLaw(ControllerConfig(target=2), sd, mu)


def test_resonant_kick(pt2):
    _, _, _, sd = pt2
    sig = resonant_kick_signal(sd, KickSpec(source=1, amplitude=0.2), target=0)
    assert sig.frequency == pytest.approx(sd.eigenvalues[1] - sd.eigenvalues[0])
    assert sig.duration == pytest.approx(math.pi / (0.2 * abs(sd.mu_matrix[0, 1])))
    assert sig(0.0) == pytest.approx(0.2)
    assert sig(sig.duration + 1) == 0.0
    with pytest.raises(DomainError):
        resonant_kick_signal(sd, KickSpec(source=0), target=0)
    with pytest.raises(DomainError):
        resonant_kick_signal(sd, KickSpec(source=4), target=0)


def test_alpha_from_dispersion_examples():
    alpha, r = alpha_from_dispersion(6.0, 3, 0.5)
    assert alpha == pytest.approx(1.5 / 1.5)
    assert r == pytest.approx(6 / 3 - 0.5)
    for args in [(5.0, 3, 0.5), (6.0, 3, 0.0), (6.0, 3, 1.0)]:
        with pytest.raises(DomainError):
            alpha_from_dispersion(*args)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3), st.floats(0, 10), st.floats(0.01, 0.99))
def test_alpha_identity(dim, extra, frac):
    p = 2 * dim + extra
    varpi = frac * dim / (p - dim)
    alpha, r = alpha_from_dispersion(p, dim, varpi)
    assert alpha >= 0
    assert r == pytest.approx(p / (p - dim) - varpi, rel=1e-9)
    assert r == pytest.approx((2 + alpha) / (1 + alpha), rel=1e-12)
