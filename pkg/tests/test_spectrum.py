import warnings

import numpy as np
import pytest

from lyapctl.errors import DomainError, EmptySpectrumError
from lyapctl.grid import Grid, WaveFunction, gaussian, inner_product, load_snapshot
from lyapctl.hamiltonian import DipoleSpec, PotentialSpec, RealField, sample
from lyapctl.spectrum import (check_assumptions, dipole_matrix, project_ac, project_disc,
                              save_spectrum, solve_bound_states, transition_gap)

from conftest import pt_system


def test_poschl_teller_eigenvalues(pt2):
    _, _, _, sd = pt2
    assert sd.count == 2
    assert np.allclose(sd.eigenvalues, [-4.0, -1.0], atol=1e-4)
    assert np.all(sd.residuals < 1e-8)


@pytest.mark.parametrize("lam", [1, 3])
def test_poschl_teller_other_strengths(lam):
    # -lam(lam+1) sech^2 has bound states at -(lam - n)^2, n < lam
    _, _, _, sd = pt_system(strength=float(lam), half_extent=30.0, points=2048)
    exact = [-float(lam - n) ** 2 for n in range(lam)]
    assert np.allclose(sd.eigenvalues, exact, atol=1e-6)


@pytest.mark.filterwarnings("ignore:bound state amplitude")
def test_shift_invert_matches_dense():
    g = Grid(1, 256, 12.0)
    v = sample(PotentialSpec("gaussian_well", 1, {"depth": -5.0, "width": 1.0}), g)
    a = solve_bound_states(v)
    b = solve_bound_states(v, method="dense")
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-10)
    assert np.allclose(a.phi, b.phi, atol=1e-8)


def test_orthonormal_and_sign_convention(pt2):
    grid, _, _, sd = pt2
    gram = grid.cell_volume * sd.phi @ sd.phi.T
    assert np.allclose(gram, np.eye(sd.count), atol=1e-10)
    for row in sd.phi:
        j = np.argmax(np.abs(row) > (1 - 1e-8) * np.abs(row).max())
        assert row[j] > 0


def test_dipole_matrix_parity(pt2):
    _, _, mu, sd = pt2
    m = sd.mu_matrix
    assert np.allclose(m, m.T, atol=1e-14)
    assert np.allclose(np.diag(m), 0.0, atol=1e-12)
    assert abs(m[0, 1]) > 0.1
    assert np.allclose(dipole_matrix(sd.phi, mu), m)


def test_two_dimensional_well():
    g = Grid(2, 64, 8.0)
    v = sample(PotentialSpec("gaussian_well", 2, {"depth": -10.0, "width": 1.0}), g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sd = solve_bound_states(v)
        dense = solve_bound_states(v, method="dense")
    assert np.allclose(sd.eigenvalues, dense.eigenvalues, atol=1e-9)
    # the first excited level is twofold degenerate by symmetry
    assert sd.degenerate


def test_errors():
    g = Grid(1, 128, 10.0)
    with pytest.raises(EmptySpectrumError):
        solve_bound_states(RealField(g, np.zeros(g.size)))
    v = sample(PotentialSpec("gaussian_well", 1, {"depth": -1.0, "width": 1.0}), g)
    with pytest.raises(DomainError):
        solve_bound_states(v, energy_cut=0.5)


def test_boundary_warning():
    g = Grid(1, 128, 3.0)
    v = sample(PotentialSpec("gaussian_well", 1, {"depth": -1.0, "width": 1.0}), g)
    with pytest.warns(RuntimeWarning, match="box edge"):
        solve_bound_states(v)


def test_projectors(pt2, rng):
    grid, _, _, sd = pt2
    psi = gaussian(grid, 1.5, [0.7])
    d, a = project_disc(sd, psi), project_ac(sd, psi)
    assert np.allclose((d + a).amplitudes, psi.amplitudes)
    assert abs(inner_product(d, a)) < 1e-12
    assert np.allclose(sd.overlaps(a), 0.0, atol=1e-12)
    assert np.allclose(project_disc(sd, d).amplitudes, d.amplitudes, atol=1e-12)


def test_assumption_report(pt2):
    grid, _, _, sd = pt2
    sup = WaveFunction(grid, (sd.phi[0] + 1j * sd.phi[1]) / np.sqrt(2))
    rep = check_assumptions(sd, sup)
    assert rep.a1_ok and rep.a2_ok and rep.a3_ok and rep.a4_ok
    rep = check_assumptions(sd, sd.eigenfunctions[1], target=0)
    assert not rep.a2_ok
    half = WaveFunction(grid, (sd.phi[0] + project_ac(sd, gaussian(grid, 1.0, [3.0])).amplitudes
                               / project_ac(sd, gaussian(grid, 1.0, [3.0])).norm()) / np.sqrt(2))
    rep = check_assumptions(sd, half, eps=0.1)
    assert not rep.a1_ok and not rep.a1_prime_ok
    assert rep.continuum_mass == pytest.approx(0.5, abs=1e-6)
    assert check_assumptions(sd, half, eps=0.6).a1_prime_ok


def test_transition_gap():
    assert transition_gap([-9.0, -4.0, -1.0]) == pytest.approx(2.0)
    assert transition_gap([-3.0, -2.0, -1.0]) == pytest.approx(0.0)
    assert transition_gap([-1.0]) == np.inf


def test_save_spectrum(tmp_path, pt2):
    _, _, _, sd = pt2
    path = save_spectrum(sd, tmp_path)
    assert path.name == "spectrum.json"
    wf = load_snapshot(tmp_path / "phi_1.bin")
    assert np.array_equal(wf.amplitudes.real, sd.phi[1])


def test_even_dipole_breaks_a4():
    grid, _, _, sd = pt_system(dipole="gaussian_even")
    psi = WaveFunction(grid, (sd.phi[0] + sd.phi[1]) / np.sqrt(2))
    assert not check_assumptions(sd, psi).a4_ok


def test_with_dipole(pt2):
    grid, v, mu, sd = pt2
    assert np.allclose(sd.with_dipole(mu).mu_matrix, sd.mu_matrix)
    gd = sample(DipoleSpec("gaussian_even", 1, {"amplitude": 1.0, "width": 2.0}), grid)
    assert abs(sd.with_dipole(gd).mu_matrix[0, 1]) < 1e-12
