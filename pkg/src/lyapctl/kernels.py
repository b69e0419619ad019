"""Hot inner-loop kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from the ``LYAPCTL_BACKEND``
environment variable (``numba`` or ``numpy``). When unset, numba is used if
it imports. Both implementations are always reachable as ``NUMPY`` and
``NUMBA`` (the latter is ``None`` without numba) so tests and the benchmark
can compare them.

All kernels work in place on flat complex128 arrays.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

BACKEND_ENV = "LYAPCTL_BACKEND"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_potential_phase(psi, v, mu, u, dt):
    psi *= np.exp(-1j * dt * (v - u * mu))


def _np_mask(psi, mask, weight):
    a2 = psi.real ** 2 + psi.imag ** 2
    removed = weight * float(np.dot(a2, 1.0 - mask * mask))
    psi *= mask
    return removed


def _np_norm_sq(psi, weight):
    return weight * float(np.vdot(psi, psi).real)


def _np_overlaps(psi, conj_phi, conj_muphi, weight):
    # rows of conj_phi hold conj(phi_j); rows of conj_muphi hold conj(mu*phi_j)
    return weight * (conj_phi @ psi), weight * (conj_muphi @ psi)


def _np_finite(psi):
    return bool(np.isfinite(psi).all())


NUMPY = SimpleNamespace(
    name="numpy",
    potential_phase=_np_potential_phase,
    mask=_np_mask,
    norm_sq=_np_norm_sq,
    overlaps=_np_overlaps,
    finite=_np_finite,
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _build_numba():
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        return None

    @njit(cache=True, fastmath=False)
    def potential_phase(psi, v, mu, u, dt):
        for i in range(psi.shape[0]):
            theta = -dt * (v[i] - u * mu[i])
            c = np.cos(theta)
            s = np.sin(theta)
            z = psi[i]
            psi[i] = complex(z.real * c - z.imag * s, z.real * s + z.imag * c)

    @njit(cache=True)
    def mask(psi, m, weight):
        removed = 0.0
        for i in range(psi.shape[0]):
            z = psi[i]
            a2 = z.real * z.real + z.imag * z.imag
            removed += a2 * (1.0 - m[i] * m[i])
            psi[i] = z * m[i]
        return weight * removed

    @njit(cache=True)
    def norm_sq(psi, weight):
        acc = 0.0
        for i in range(psi.shape[0]):
            z = psi[i]
            acc += z.real * z.real + z.imag * z.imag
        return weight * acc

    @njit(cache=True)
    def _overlaps(psi, conj_phi, conj_muphi, weight):
        m = conj_phi.shape[0]
        c = np.zeros(m, dtype=np.complex128)
        d = np.zeros(m, dtype=np.complex128)
        for j in range(m):
            acc_c = 0j
            acc_d = 0j
            for i in range(psi.shape[0]):
                z = psi[i]
                acc_c += conj_phi[j, i] * z
                acc_d += conj_muphi[j, i] * z
            c[j] = weight * acc_c
            d[j] = weight * acc_d
        return c, d

    def overlaps(psi, conj_phi, conj_muphi, weight):
        if conj_phi.shape[0] == 0:
            return np.zeros(0, complex), np.zeros(0, complex)
        return _overlaps(psi, conj_phi, conj_muphi, weight)

    @njit(cache=True)
    def finite(psi):
        for i in range(psi.shape[0]):
            z = psi[i]
            if not (np.isfinite(z.real) and np.isfinite(z.imag)):
                return False
        return True

    return SimpleNamespace(
        name="numba",
        potential_phase=potential_phase,
        mask=mask,
        norm_sq=norm_sq,
        overlaps=overlaps,
        finite=finite,
    )


NUMBA = _build_numba()


def _select():
    want = os.environ.get(BACKEND_ENV, "").strip().lower()
    if want == "numpy":
        return NUMPY
    if want in ("", "numba"):
        if NUMBA is not None:
            return NUMBA
        if want == "numba":
            raise ImportError(f"{BACKEND_ENV}=numba but numba is not importable")
        return NUMPY
    raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {want!r}")


ACTIVE = _select()
BACKEND = ACTIVE.name

potential_phase = ACTIVE.potential_phase
mask = ACTIVE.mask
norm_sq = ACTIVE.norm_sq
overlaps = ACTIVE.overlaps
finite = ACTIVE.finite
