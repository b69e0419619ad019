"""Compare the numba and numpy kernel backends.

Two measurements:

* each kernel on its own, called on arrays of the sizes used by 1D and 2D
  runs (both backends live in one process);
* closed-loop steps per second on the headline two-level system, run in a
  subprocess per backend since the backend is fixed at import time.

    python3 benchmarks/bench_kernels.py [--steps 2000] [--extended]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from lyapctl import kernels

LOOP = """
import json, time, warnings
import numpy as np
from lyapctl import kernels
from lyapctl.controller import ControllerConfig, FeedbackLaw
from lyapctl.grid import Grid, WaveFunction
from lyapctl.hamiltonian import DipoleSpec, PotentialSpec, sample
from lyapctl.propagator import PropagatorConfig
from lyapctl.simulate import simulate
from lyapctl.spectrum import solve_bound_states

warnings.simplefilter("ignore")
g = Grid(1, 1024, 20.0)
v = sample(PotentialSpec("poschl_teller", 1, {{"strength": 2.0}}), g)
mu = sample(DipoleSpec("gaussian_dipole", 1, {{"amplitude": 1.0, "width": 2.0}}), g)
sd = solve_bound_states(v, mu=mu)
psi = WaveFunction(g, (sd.phi[0] + 1j * sd.phi[1]) / np.sqrt(2))
law = FeedbackLaw(ControllerConfig(), sd, mu)
cfg = PropagatorConfig(dt=0.005, precision="{precision}")
simulate(psi, v, mu, sd, cfg, 0.5, law=law)  # compile and warm caches
t0 = time.perf_counter()
simulate(psi, v, mu, sd, cfg, {steps} * 0.005, law=law)
dt = time.perf_counter() - t0
print(json.dumps({{"backend": kernels.BACKEND, "steps_per_s": {steps} / dt}}))
"""


def kernel_table(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        psi = rng.normal(size=n) + 1j * rng.normal(size=n)
        v, mu = rng.normal(size=n), rng.normal(size=n)
        m = np.exp(-np.abs(v))
        phi = np.ascontiguousarray(rng.normal(size=(3, n)), dtype=complex)
        muphi = phi * mu
        calls = {
            "potential_phase": lambda k: k.potential_phase(psi, v, mu, 0.1, 0.005),
            "mask": lambda k: k.mask(psi.copy(), m, 0.1),
            "norm_sq": lambda k: k.norm_sq(psi, 0.1),
            "overlaps": lambda k: k.overlaps(psi, phi, muphi, 0.1),
            "finite": lambda k: k.finite(psi),
        }
        for name, call in calls.items():
            t = {}
            for k in (kernels.NUMPY, kernels.NUMBA):
                call(k)
                t[k.name] = min(timeit.repeat(lambda: call(k), number=repeat, repeat=5)) / repeat
            rows.append((n, name, t["numpy"], t["numba"]))
    return rows


def loop_rate(backend, steps, precision):
    env = dict(os.environ, **{kernels.BACKEND_ENV: backend})
    code = LOOP.format(steps=steps, precision=precision)
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True).stdout
    return json.loads(out.strip().splitlines()[-1])["steps_per_s"]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--extended", action="store_true", help="also time the long double path")
    args = p.parse_args()
    if kernels.NUMBA is None:
        sys.exit("numba is not importable; nothing to compare")

    print(f"{'size':>8} {'kernel':<16} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    for n, name, a, b in kernel_table([1024, 256 * 256], args.repeat):
        print(f"{n:>8} {name:<16} {1e6 * a:>10.2f} {1e6 * b:>10.2f} {a / b:>8.2f}")

    print()
    print(f"closed loop, 1D n=1024, {args.steps} steps")
    modes = [("double", b) for b in ("numpy", "numba")]
    if args.extended:
        modes.append(("extended", "numba"))
    for precision, backend in modes:
        rate = loop_rate(backend, args.steps, precision)
        print(f"  {backend:<6} {precision:<9} {rate:>10.0f} steps/s")


if __name__ == "__main__":
    main()
