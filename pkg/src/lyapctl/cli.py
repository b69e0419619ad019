"""Command line entry point.

Exit status: 0 success, 1 criterion unmet, 2 configuration error or bad
usage, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiment as ex
from .diagnostics import _json_default
from .errors import ConfigError, DomainError, EmptySpectrumError, NumericalBlowUpError

log = logging.getLogger("lyapctl")

COMMANDS = {
    "spectrum": (ex.run_spectrum, "solve for the bound states and write spectrum.json"),
    "control": (ex.run_closed_loop, "run the closed loop and write trajectory artifacts"),
    "check-assumptions": (ex.run_check_assumptions, "evaluate A1-A4 for the initial state"),
    "sigma-scan": (ex.run_sigma_scan, "scan sigma for the perturbed Hamiltonian"),
    "relaxed-control": (ex.run_relaxed, "sigma scan followed by the relaxed closed loop"),
    "dispersion-probe": (ex.run_dispersion, "fit the sup-norm decay of the free evolution"),
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lyapctl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="TOML experiment file")
        sp.add_argument("--out", help="output directory (default: run.out)")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config value, e.g. controller.eps=0.2")

    for name, (_, help_) in COMMANDS.items():
        common(sub.add_parser(name, help=help_))
    sp = sub.add_parser("extract-signal", help="write the applied control of a run as t,u CSV")
    sp.add_argument("--run", required=True, help="directory of a completed control run")
    sp.add_argument("--out", help="signal file path (default: <run>/signal.csv)")
    sp = sub.add_parser("replay", help="apply a stored signal open-loop")
    common(sp)
    sp.add_argument("--signal", required=True, help="signal CSV from extract-signal")
    return p


def _emit(data) -> None:
    print(json.dumps(data, indent=2, default=_json_default))


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "extract-signal":
            path = ex.extract_open_loop_signal(args.run, args.out)
            _emit({"signal": str(path)})
            return ex.EXIT_OK
        ec = ex.load_experiment(args.config, args.override)
        log.info("running %s from %s", args.command, args.config)
        if args.command == "replay":
            result = ex.replay(ec, args.signal, args.out)
        else:
            result = COMMANDS[args.command][0](ec, args.out)
    except (ConfigError, DomainError, EmptySpectrumError, FileNotFoundError) as exc:
        print(f"lyapctl: configuration error: {exc}", file=sys.stderr)
        return ex.EXIT_CONFIG
    except NumericalBlowUpError as exc:
        print(f"lyapctl: numerical abort: {exc}", file=sys.stderr)
        return ex.EXIT_ABORT
    _emit(_brief(args.command, result.summary))
    return result.exit_code


def _brief(command, info):
    """Stdout keeps the headline numbers; the full record is on disk."""
    if command in ("control", "relaxed-control", "replay"):
        keep = ("outcome", "trajectory", "dissipation", "sensitivity", "selected_sigma",
                "late_offset_max", "final_target_pop", "source_final_target_pop",
                "difference", "aborted", "flags", "wall_time")
        return {k: info[k] for k in keep if k in info}
    return info


if __name__ == "__main__":
    sys.exit(main())
