"""Scenario orchestration: build a system from a config tree, run it, write artifacts."""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import kernels
from .controller import ControllerConfig, FeedbackLaw, KickSpec, resonant_kick_signal
from .diagnostics import TrajectoryRecord, initial_bound_check, lyapunov, summary, verify_dissipation, write_json
from .errors import ConfigError, DomainError, EmptySpectrumError, LyapctlError, UnsupportedError
from .grid import Grid, WaveFunction, gaussian, load_snapshot, normalize
from .hamiltonian import DipoleSpec, PotentialSpec, RealField, check_decay_class, sample
from .propagator import AbsorberSpec, PropagatorConfig, dispersion_probe
from .relaxation import build_perturbed, default_sigma_grid, run_relaxed_control, scan_sigma, track
from .simulate import simulate
from .spectrum import SpectralData, check_assumptions, save_spectrum, solve_bound_states

EXIT_OK, EXIT_UNMET, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

SIGNAL_FILE = "signal.csv"


@dataclass
class ExperimentConfig:
    tree: dict
    grid: Grid
    potential: PotentialSpec
    dipole: DipoleSpec
    prop: PropagatorConfig
    horizon: float
    out: Path

    @classmethod
    def from_tree(cls, tree: dict) -> "ExperimentConfig":
        g = tree["grid"]
        grid = _field("grid", lambda: Grid(int(g["dim"]), int(g["points"]), float(g["half_extent"])))
        potential = _field("potential", lambda: PotentialSpec.from_dict(
            _with_samples(tree["potential"], tree), grid.dim))
        dipole = _field("dipole", lambda: DipoleSpec.from_dict(
            _with_samples(tree["dipole"], tree), grid.dim))
        p = tree["propagator"]
        a = p["absorber"]
        absorber = _field("propagator.absorber", lambda: AbsorberSpec(
            a["kind"], float(a["width"]), float(a["strength"])))
        prop = _field("propagator", lambda: PropagatorConfig(
            float(p["dt"]), absorber, precision=p["precision"]))
        horizon = float(tree["run"]["horizon"])
        cfgmod.require(horizon > 0, "run.horizon", "must be positive")
        out = Path(tree["run"]["out"])
        return cls(tree, grid, potential, dipole, prop, horizon, out)

    @property
    def base_dir(self) -> Path:
        return cfgmod.source_dir(self.tree)

    def section(self, name):
        return self.tree[name]


def _field(name, build):
    try:
        return build()
    except (DomainError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _with_samples(spec: dict, tree: dict) -> dict:
    """Load ``path`` (a .npy file) into ``samples`` for tabulated families."""
    d = dict(spec)
    if d.get("family") == "tabulated" and "samples" not in d and d.get("path"):
        d["samples"] = np.load(cfgmod.source_dir(tree) / d.pop("path"))
    return d


def load_experiment(path, overrides=()) -> ExperimentConfig:
    return ExperimentConfig.from_tree(cfgmod.load(path, overrides))


@dataclass
class System:
    grid: Grid
    v: RealField
    mu: RealField
    sd: SpectralData


def build_system(ec: ExperimentConfig) -> System:
    v = _field("potential", lambda: sample(ec.potential, ec.grid))
    mu = _field("dipole", lambda: sample(ec.dipole, ec.grid))
    s = ec.section("spectrum")
    cut = s.get("energy_cut")
    sd = solve_bound_states(v, energy_cut=None if cut is None else float(cut), mu=mu,
                            method=s["method"])
    return System(ec.grid, v, mu, sd)


def _coefficients(raw, count):
    out = np.zeros(count, dtype=complex)
    if len(raw) > count:
        raise ConfigError(f"initial.coefficients: {len(raw)} entries but only {count} bound states")
    for j, c in enumerate(raw):
        if isinstance(c, (list, tuple)):
            if len(c) != 2:
                raise ConfigError("initial.coefficients: entries must be numbers or [re, im] pairs")
            out[j] = complex(float(c[0]), float(c[1]))
        else:
            out[j] = float(c)
    return out


def initial_state(ec: ExperimentConfig, sys_: System) -> WaveFunction:
    ini = ec.section("initial")
    sd, grid = sys_.sd, sys_.grid
    kind = ini["kind"]
    if kind == "eigenstate":
        j = int(ini["index"])
        cfgmod.require(0 <= j <= sd.M, "initial.index", f"must lie in 0..{sd.M}")
        return sd.eigenfunctions[j]
    if kind in ("coefficients", "random"):
        if kind == "random":
            rng = np.random.default_rng(int(ini["seed"]))
            c = rng.normal(size=sd.count) + 1j * rng.normal(size=sd.count)
            c /= np.linalg.norm(c)
        else:
            c = _coefficients(ini["coefficients"], sd.count)
        n = np.linalg.norm(c)
        if n == 0:
            raise ConfigError("initial.coefficients: all zero")
        if abs(n - 1.0) > 1e-6:
            warnings.warn(f"initial coefficients have norm {n:.6g}; normalizing", UserWarning,
                          stacklevel=2)
        return normalize(WaveFunction(grid, (c / n) @ sd.phi))
    if kind == "tabulated":
        cfgmod.require(bool(ini.get("path")), "initial.path", "needed for a tabulated state")
        psi = load_snapshot(ec.base_dir / ini["path"])
        if psi.grid != grid:
            raise ConfigError(f"initial.path: snapshot grid {psi.grid} differs from {grid}")
        return psi
    if kind == "gaussian":
        psi = gaussian(grid, float(ini["width"]), ini.get("center"))
        return psi
    raise ConfigError(f"initial.kind: unknown kind {kind!r}")


def resolve_gain(ec: ExperimentConfig, sd: SpectralData, mu: RealField) -> float:
    g = ec.section("controller")["gain"]
    if g == "auto":
        return min(1.0, 0.05 / ((sd.M + 2) * mu.sup_norm() * ec.prop.dt))
    try:
        g = float(g)
    except (TypeError, ValueError):
        raise ConfigError(f"controller.gain: expected a number or 'auto', got {g!r}") from None
    return g


def controller_config(ec: ExperimentConfig, sd: SpectralData, mu: RealField) -> ControllerConfig:
    c = ec.section("controller")
    kick = None
    if c.get("kick"):
        k = c["kick"]
        kick = _field("controller.kick", lambda: KickSpec(
            int(k["source"]), float(k.get("amplitude", 0.1)),
            None if k.get("duration") is None else float(k["duration"])))
    return _field("controller", lambda: ControllerConfig(
        mode=c["mode"], eps=float(c["eps"]), gain=resolve_gain(ec, sd, mu),
        alpha=float(c["alpha"]), sigma=float(c["sigma"]), target=int(c["target"]), kick=kick))


def sigma_spectrum(sys_: System, sigma: float) -> SpectralData:
    """Bound states of H0 + sigma mu ordered along the unperturbed branches."""
    raw = solve_bound_states(build_perturbed(sys_.v, sys_.mu, sigma), mu=sys_.mu,
                             energy_cut=sys_.sd.energy_cut)
    sd, lost, _ = track(sys_.sd, raw)
    if lost:
        raise DomainError(f"branches {lost} are not bound at sigma={sigma:g}")
    return sd


def _assumption_dict(ec, sys_, psi0, ccfg):
    a = ec.section("assumptions")
    rep = check_assumptions(sys_.sd, psi0, ccfg.target, ccfg.eps,
                            float(a["gap_tol"]), float(a["coupling_tol"]))
    out = rep.to_dict()
    out["initial_lyapunov"] = lyapunov(psi0, sys_.sd, ccfg.eps, ccfg.target)
    out["initial_bound_ok"] = initial_bound_check(psi0, sys_.sd, ccfg.eps, ccfg.target)
    try:
        out["decay_class"] = check_decay_class(ec.potential).to_dict()
    except UnsupportedError as exc:
        out["decay_class"] = {"status": "UNSUPPORTED", "reason": str(exc)}
    return rep, out


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    exit_code: int
    summary: dict
    record: object = None
    out: Path | None = None


def _control_setup(ec, sys_, ccfg):
    sd_ctl = sys_.sd
    if ccfg.mode == "feed_sigma":
        sd_ctl = sigma_spectrum(sys_, ccfg.sigma)
    law = FeedbackLaw(ccfg, sd_ctl, sys_.mu)
    signal, switch = None, 0.0
    if ccfg.kick is not None:
        signal = resonant_kick_signal(sd_ctl, ccfg.kick, ccfg.target)
        switch = signal.duration
    return law, signal, switch


def _simulate(ec, sys_, psi0, ccfg, prop_cfg):
    law, signal, switch = _control_setup(ec, sys_, ccfg)
    tr = simulate(psi0, sys_.v, sys_.mu, sys_.sd, prop_cfg, ec.horizon, law=law,
                  signal=signal, switch_time=switch)
    return tr, switch


def _outcome(rec, eps):
    tp = rec.column("target_pop")
    above = np.nonzero(tp > 1.0 - eps)[0]
    return {
        "threshold": 1.0 - eps,
        "reached": bool(above.size),
        "reached_at": float(rec.column("t")[above[0]]) if above.size else None,
        "final_above": bool(tp[-1] > 1.0 - eps),
    }


def _plot_script(path: Path, n_states: int) -> None:
    pop_cols = " , ".join(f'"trajectory.csv" using 1:{3 + j} with lines title "pop_{j}"'
                          for j in range(n_states))
    u_col = 3 + n_states + 1
    path.write_text(
        "# gnuplot script; run from this directory: gnuplot plot.gp\n"
        'set datafile separator ","\n'
        'set terminal pngcairo size 900,900\n'
        'set output "trajectory.png"\n'
        "set multiplot layout 3,1\n"
        'set xlabel "t"\n'
        'plot "trajectory.csv" using 1:2 with lines title "lyapunov"\n'
        f"plot {pop_cols}\n"
        f'plot "trajectory.csv" using 1:{u_col} with lines title "u"\n'
        "unset multiplot\n")


def _write_trajectory(out: Path, rec, every: int, plot: bool) -> None:
    rec.write_csv(out / "trajectory.csv", every)
    rec.save_npz(out / "trajectory.npz")
    if plot:
        _plot_script(out / "plot.gp", rec.n_states)


def run_closed_loop(ec: ExperimentConfig, out=None) -> RunResult:
    t0 = time.perf_counter()
    out = Path(out) if out is not None else ec.out
    out.mkdir(parents=True, exist_ok=True)
    sys_ = build_system(ec)
    psi0 = initial_state(ec, sys_)
    ccfg = controller_config(ec, sys_.sd, sys_.mu)
    _, assumptions = _assumption_dict(ec, sys_, psi0, ccfg)
    flags = [k for k in ("a1_ok", "a2_ok", "a3_ok", "a4_ok") if not assumptions[k]]
    for k in flags:
        warnings.warn(f"assumption check {k} is false; running anyway", RuntimeWarning,
                      stacklevel=2)
    info = {
        "command": "control",
        "config": cfgmod.echo(ec.tree),
        "backend": kernels.BACKEND,
        "controller": ccfg.to_dict(),
        "gain_resolved": ccfg.gain,
        "gain_bound": ccfg.gain * (sys_.sd.M + 2) * sys_.mu.sup_norm() * ec.prop.dt,
        "spectrum": sys_.sd.summary(),
        "assumptions": assumptions,
        "flags": flags,
    }
    run = ec.section("run")
    try:
        tr, switch = _simulate(ec, sys_, psi0, ccfg, ec.prop)
    except LyapctlError as exc:
        if getattr(exc, "partial", None) is None:
            raise
        _write_trajectory(out, exc.partial, int(run["csv_every"]), False)
        info.update(aborted=True, error=str(exc), step=exc.step, t=exc.t,
                    wall_time=time.perf_counter() - t0, trajectory=summary(exc.partial))
        write_json(out / "summary.json", info)
        return RunResult(EXIT_ABORT, info, exc.partial, out)

    rec = tr.record
    _write_trajectory(out, rec, int(run["csv_every"]), bool(run["plot"]))
    info["trajectory"] = summary(rec)
    info["outcome"] = _outcome(rec, ccfg.eps)
    info["kick_duration"] = switch if ccfg.kick is not None else None
    if ccfg.kick is None or switch < ec.horizon - ec.prop.dt:
        info["dissipation"] = verify_dissipation(rec, ccfg, ec.prop.dt, start=switch)
    info["sensitivity"] = _sensitivity(ec, sys_, psi0, ccfg, rec, run["sensitivity_strengths"])
    info["aborted"] = False
    info["wall_time"] = time.perf_counter() - t0
    write_json(out / "summary.json", info)
    code = EXIT_OK if info["outcome"]["reached"] else EXIT_UNMET
    return RunResult(code, info, rec, out)


def _sensitivity(ec, sys_, psi0, ccfg, rec, strengths):
    if not strengths:
        return []
    a = ec.prop.absorber
    rows = [{"strength": a.strength, "final_target_pop": rec.final("target_pop"),
             "max_absorbed": rec.final("absorbed_mass"),
             "max_lyapunov_increase": float(np.max(np.diff(rec.column("lyapunov"))))}]
    for s in strengths:
        width = a.width if a.kind == "mask" else 0.1
        prop = PropagatorConfig(ec.prop.dt, AbsorberSpec("mask", width, float(s)),
                                precision=ec.prop.precision)
        tr, _ = _simulate(ec, sys_, psi0, ccfg, prop)
        r = tr.record
        rows.append({"strength": float(s), "final_target_pop": r.final("target_pop"),
                     "max_absorbed": r.final("absorbed_mass"),
                     "max_lyapunov_increase": float(np.max(np.diff(r.column("lyapunov")))),
                     "target_pop_difference": r.final("target_pop") - rec.final("target_pop")})
    return rows


# ---------------------------------------------------------------------------
# open-loop signal and replay
# ---------------------------------------------------------------------------

def extract_open_loop_signal(run_dir, out_path=None) -> Path:
    """Write the applied control as (t, u) with 17 significant digits."""
    run_dir = Path(run_dir)
    npz = run_dir / "trajectory.npz"
    if not npz.exists():
        raise ConfigError(f"{run_dir}: no trajectory.npz; not a completed run")
    rec = TrajectoryRecord.load_npz(npz)
    if not rec.complete:
        raise ConfigError(f"{run_dir}: run did not complete; refusing to extract a signal")
    path = Path(out_path) if out_path is not None else run_dir / SIGNAL_FILE
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u"])
        for t, u in zip(rec.column("t"), rec.column("u")):
            w.writerow([f"{t:.17g}", f"{u:.17g}"])
    return path


def read_signal(path):
    t, u = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header != ["t", "u"]:
            raise ConfigError(f"{path}: expected header t,u")
        for i, r in enumerate(rows, start=2):
            try:
                t.append(float(r[0]))
                u.append(float(r[1]))
            except (IndexError, ValueError):
                raise ConfigError(f"{path}:{i}: malformed row {r!r}") from None
    return np.array(t), np.array(u)


def replay(ec: ExperimentConfig, signal_path, out=None, psi0: WaveFunction | None = None) -> RunResult:
    """Apply a stored signal open-loop; compare with the source run if its summary is at hand."""
    t0 = time.perf_counter()
    out = Path(out) if out is not None else ec.out
    out.mkdir(parents=True, exist_ok=True)
    t, u = read_signal(signal_path)
    dt = ec.prop.dt
    n = int(round(ec.horizon / dt))
    if t.size < n + 1 or np.max(np.abs(t[: n + 1] - dt * np.arange(n + 1))) > 1e-9 * max(1.0, ec.horizon):
        raise ConfigError(f"{signal_path}: samples do not cover t = k*{dt:g} up to {ec.horizon:g}")
    sys_ = build_system(ec)
    if psi0 is None:
        psi0 = initial_state(ec, sys_)
    target = int(ec.section("controller")["target"])
    eps = float(ec.section("controller")["eps"])
    tr = simulate(psi0, sys_.v, sys_.mu, sys_.sd, ec.prop, ec.horizon, samples=u[: n + 1],
                  eps=eps, target=target)
    rec = tr.record
    _write_trajectory(out, rec, int(ec.section("run")["csv_every"]), False)
    info = {"command": "replay", "config": cfgmod.echo(ec.tree), "signal": str(signal_path),
            "trajectory": summary(rec), "final_target_pop": rec.final("target_pop")}
    source = Path(signal_path).parent / "summary.json"
    if source.exists():
        ref = json.loads(source.read_text())["trajectory"]["final_target_population"]
        info["source_final_target_pop"] = ref
        info["difference"] = rec.final("target_pop") - ref
    info["wall_time"] = time.perf_counter() - t0
    write_json(out / "summary.json", info)
    return RunResult(EXIT_OK, info, rec, out)


# ---------------------------------------------------------------------------
# other subcommands
# ---------------------------------------------------------------------------

def run_spectrum(ec: ExperimentConfig, out=None) -> RunResult:
    out = Path(out) if out is not None else ec.out
    sys_ = build_system(ec)
    try:
        decay = check_decay_class(ec.potential).to_dict()
    except UnsupportedError as exc:
        decay = {"status": "UNSUPPORTED", "reason": str(exc)}
    path = save_spectrum(sys_.sd, out, {"decay_class": decay})
    info = json.loads(path.read_text())
    return RunResult(EXIT_OK, info, None, out)


def run_check_assumptions(ec: ExperimentConfig, out=None) -> RunResult:
    out = Path(out) if out is not None else ec.out
    out.mkdir(parents=True, exist_ok=True)
    sys_ = build_system(ec)
    psi0 = initial_state(ec, sys_)
    ccfg = controller_config(ec, sys_.sd, sys_.mu)
    rep, info = _assumption_dict(ec, sys_, psi0, ccfg)
    info["eigenvalues"] = sys_.sd.eigenvalues.tolist()
    write_json(out / "assumptions.json", info)
    ok = (rep.a1_ok or rep.a1_prime_ok) and rep.a2_ok and rep.a3_ok and rep.a4_ok
    return RunResult(EXIT_OK if ok else EXIT_UNMET, info, None, out)


def _sigma_grid(ec, mu):
    s = ec.section("sigma_scan")
    if s.get("values") is not None:
        return np.asarray(s["values"], float)
    if s.get("hi") is None:
        return default_sigma_grid(mu, int(s["points"]), float(s["lo"]))
    return np.logspace(math.log10(float(s["lo"])), math.log10(float(s["hi"])), int(s["points"]))


def _scan(ec, sys_, psi0):
    c = ec.section("controller")
    a = ec.section("assumptions")
    grid = _field("sigma_scan", lambda: _sigma_grid(ec, sys_.mu))
    return scan_sigma(sys_.v, sys_.mu, grid, psi0=psi0, eps=float(c["eps"]),
                      target=int(c["target"]), gap_tol=float(a["gap_tol"]),
                      coupling_tol=float(a["coupling_tol"]), sd0=sys_.sd)


def run_sigma_scan(ec: ExperimentConfig, out=None) -> RunResult:
    out = Path(out) if out is not None else ec.out
    out.mkdir(parents=True, exist_ok=True)
    sys_ = build_system(ec)
    psi0 = initial_state(ec, sys_)
    rep = _scan(ec, sys_, psi0)
    info = rep.to_dict()
    write_json(out / "sigma_scan.json", info)
    rep.write_eigenvalue_csv(out / "sigma_eigenvalues.csv")
    return RunResult(EXIT_OK if rep.selected_sigma is not None else EXIT_UNMET, info, rep, out)


def run_relaxed(ec: ExperimentConfig, out=None) -> RunResult:
    t0 = time.perf_counter()
    out = Path(out) if out is not None else ec.out
    out.mkdir(parents=True, exist_ok=True)
    sys_ = build_system(ec)
    psi0 = initial_state(ec, sys_)
    rep = _scan(ec, sys_, psi0)
    write_json(out / "sigma_scan.json", rep.to_dict())
    rep.write_eigenvalue_csv(out / "sigma_eigenvalues.csv")
    c = ec.section("controller")
    eps = float(c["eps"])
    tr = run_relaxed_control(sys_.v, sys_.mu, psi0, eps, rep, ec.prop, ec.horizon,
                             gain=resolve_gain(ec, sys_.sd, sys_.mu), target=int(c["target"]))
    rec = tr.record
    run = ec.section("run")
    _write_trajectory(out, rec, int(run["csv_every"]), bool(run["plot"]))
    sigma = rep.selected_sigma
    tail = rec.column("u")[int(0.9 * rec.size):] + sigma
    info = {
        "command": "relaxed-control",
        "config": cfgmod.echo(ec.tree),
        "selected_sigma": sigma,
        "closeness_bound": rep.closeness_bound,
        "trajectory": summary(rec),
        "outcome": _outcome(rec, eps),
        "late_offset_max": float(np.max(np.abs(tail))),
        "wall_time": time.perf_counter() - t0,
    }
    write_json(out / "summary.json", info)
    return RunResult(EXIT_OK if info["outcome"]["final_above"] else EXIT_UNMET, info, rec, out)


def run_dispersion(ec: ExperimentConfig, out=None) -> RunResult:
    out = Path(out) if out is not None else ec.out
    out.mkdir(parents=True, exist_ok=True)
    d = ec.section("dispersion")
    grid = ec.grid
    if d["free"]:
        v = RealField(grid, np.zeros(grid.size))
        sd = None
    else:
        v = _field("potential", lambda: sample(ec.potential, grid))
        try:
            sd = solve_bound_states(v)
        except EmptySpectrumError:
            sd = None
    ini = ec.section("initial")
    psi0 = gaussian(grid, float(ini["width"]), ini.get("center"))
    if d.get("times") is not None:
        times = np.asarray(d["times"], float)
    else:
        times = np.linspace(float(d["t_start"]), float(d["t_end"]), int(d["count"]))
    fit = _field("dispersion", lambda: dispersion_probe(v, psi0, sd, times, ec.prop))
    info = {"command": "dispersion-probe", "config": cfgmod.echo(ec.tree),
            "bound_states": 0 if sd is None else sd.count, "fit": fit.to_dict()}
    ok = not fit.contaminated
    if d.get("expect_slope") is not None:
        info["expected_slope"] = float(d["expect_slope"])
        ok = ok and abs(fit.slope - float(d["expect_slope"])) <= float(d["tolerance"])
    info["ok"] = ok
    write_json(out / "dispersion.json", info)
    return RunResult(EXIT_OK if ok else EXIT_UNMET, info, fit, out)
