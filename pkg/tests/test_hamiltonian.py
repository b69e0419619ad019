import numpy as np
import pytest

from lyapctl.errors import DomainError, GridMismatchError, ResamplingError, UnsupportedError
from lyapctl.grid import Grid, gaussian
from lyapctl.hamiltonian import (DipoleSpec, PotentialSpec, RealField, apply_h0,
                                 check_decay_class, neg_laplacian, sample)


def test_poschl_teller_values():
    g = Grid(1, 64, 5.0)
    v = sample(PotentialSpec("poschl_teller", 1, {"strength": 2.0}), g)
    assert np.allclose(v.values, -6.0 / np.cosh(g.axis) ** 2)
    assert v.values.min() == pytest.approx(-6.0)


def test_potential_validation():
    with pytest.raises(DomainError):
        PotentialSpec("poschl_teller", 2, {"strength": 2.0})
    with pytest.raises(DomainError):
        PotentialSpec("gaussian_well", 1, {"depth": 1.0, "width": 1.0})
    with pytest.raises(DomainError):
        PotentialSpec("compact_bump", 1, {"depth": -1.0, "radius": 1.0, "smoothing": 2.0})
    with pytest.raises(DomainError):
        PotentialSpec("nope", 1, {})
    with pytest.raises(DomainError):
        PotentialSpec("gaussian_well", 1, {"depth": -1.0})


def test_compact_bump_is_compact_and_flat():
    g = Grid(1, 512, 10.0)
    v = sample(PotentialSpec("compact_bump", 1, {"depth": -2.0, "radius": 3.0,
                                                 "smoothing": 1.0}), g).values
    r = np.abs(g.axis)
    assert np.all(v[r >= 3.0] == 0.0)
    assert np.allclose(v[r <= 2.0], -2.0)
    assert np.all(np.diff(v[g.axis >= 0]) >= 0)


def test_dipole_parity():
    g = Grid(1, 128, 8.0)
    odd = sample(DipoleSpec("gaussian_dipole", 1, {"amplitude": 1.0, "width": 2.0}), g).values
    even = sample(DipoleSpec("gaussian_even", 1, {"amplitude": 1.0, "width": 2.0}), g).values
    # node i mirrors node n-i on [-L, L)
    assert np.allclose(odd[1:], -odd[1:][::-1])
    assert np.allclose(even[1:], even[1:][::-1])


def test_sample_dimension_mismatch():
    with pytest.raises(GridMismatchError):
        sample(PotentialSpec("gaussian_well", 2, {"depth": -1.0, "width": 1.0}), Grid(1, 32, 4.0))


def test_tabulated_resolution_mismatch():
    g = Grid(1, 32, 4.0)
    ok = sample(PotentialSpec("tabulated", 1, {"samples": np.zeros(32)}), g)
    assert ok.values.shape == (32,)
    with pytest.raises(ResamplingError):
        sample(PotentialSpec("tabulated", 1, {"samples": np.zeros(64)}), g)


def test_spec_roundtrip():
    spec = PotentialSpec("gaussian_well", 2, {"depth": -3.0, "width": 1.5, "center": [0.1, 0.0]})
    again = PotentialSpec.from_dict(spec.to_dict(), 2)
    assert again == spec


def test_neg_laplacian_gaussian():
    g = Grid(1, 256, 12.0)
    x = g.axis
    f = np.exp(-x ** 2 / 2)
    exact = (1 - x ** 2) * f
    assert np.max(np.abs(neg_laplacian(g, f) - exact)) < 1e-10
    g2 = Grid(2, 64, 10.0)
    r2 = g2.radius.ravel() ** 2
    f2 = np.exp(-r2 / 2)
    assert np.max(np.abs(neg_laplacian(g2, f2) - (2 - r2) * f2)) < 1e-10


def test_apply_h0_on_eigenstate(pt2):
    grid, v, _, sd = pt2
    h = apply_h0(v, sd.eigenfunctions[0])
    assert np.max(np.abs(h.amplitudes - sd.eigenvalues[0] * sd.phi[0])) < 1e-9


def test_real_field_rejects_nonfinite():
    with pytest.raises(DomainError):
        RealField(Grid(1, 4, 1.0), [0.0, np.nan, 0.0, 0.0])


def test_decay_class():
    rep = check_decay_class(PotentialSpec("gaussian_well", 3, {"depth": -1.0, "width": 1.0}))
    assert rep.satisfied is True
    assert rep.zero_resonance == "UNCHECKED"
    assert rep.conditions["V^ in L^1 and weighted bound on H^nu"] == "UNCHECKED"
    with pytest.raises(UnsupportedError):
        check_decay_class(PotentialSpec("tabulated", 1, {"samples": [0.0]}))
    hi = check_decay_class(PotentialSpec("gaussian_well", 3, {"depth": -1.0, "width": 1.0}), dim=5)
    assert hi.satisfied is None


def test_gaussian_helper_normalized():
    assert gaussian(Grid(3, 32, 8.0), 1.2).norm() == pytest.approx(1.0, abs=1e-12)
