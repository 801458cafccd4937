"""Command-line entry point.

Exit codes: 0 pass, 1 check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time

from . import config as cfgmod
from .checks import kinematic_checks
from .control import NoCrossing, disturbance_transfer, margins, open_loop_response, write_frequency_csv
from .simulation import SimulationError, run, steady_state_metrics
from .singularity import certify_workspace, scan_type1

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

REQUIREMENT = 1e-4  # rad, residual gate
REPORTED_RESIDUAL = 6e-6  # rad
MAX_LISTED_FAILURES = 20


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _timing(args, t0: float) -> None:
    if not args.deterministic:
        print(f"elapsed: {time.perf_counter() - t0:.2f} s")


def cmd_defaults(args, cfg) -> int:
    text = cfgmod.dumps()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args, cfg) -> int:
    t0 = time.perf_counter()
    results = kinematic_checks(cfg.design, cfg.workspace)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {_verdict(r.passed)}  max err {r.value:.3e} (tol {r.tolerance:.0e})  {r.detail}")
    _timing(args, t0)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_scan(args, cfg) -> int:
    t0 = time.perf_counter()
    n1, n2 = args.grid or cfg.scan.grid
    result = scan_type1(
        cfg.design, cfg.scan.box, n1, n2, workspace=cfg.workspace, workers=cfg.scan.workers
    )
    if args.out:
        result.write_csv(args.out)
    report = certify_workspace(cfg.design, cfg.workspace, step=cfg.scan.certify_step, workers=cfg.scan.workers)
    loci_free = result.loci_cells_in_workspace == 0
    print(f"scan grid: {n1}x{n2}")
    print(f"locus cells in scan box: {int(result.loci.sum())}")
    print(f"locus cells inside W*: {result.loci_cells_in_workspace}")
    dmin = result.min_abs_delta_in_workspace
    print(f"min |delta_i| over W*: {'no grid node inside W*' if math.isnan(dmin) else f'{dmin:.6g}'}")
    print(f"W* singularity-free: {'yes' if loci_free else 'no'}")
    print(f"Kantorovich nodes: {report.n_cells}, max h = {report.max_h:.4g}")
    print(f"Kantorovich all_pass: {'true' if report.all_pass else 'false'}")
    for (c1, c2, c3), why in list(zip(report.failures, report.reasons))[:MAX_LISTED_FAILURES]:
        print(f"  failed at chi = ({math.degrees(c1):.3f}, {math.degrees(c2):.3f}, {math.degrees(c3):.3f}) deg: {why}")
    if len(report.failures) > MAX_LISTED_FAILURES:
        print(f"  ... {len(report.failures) - MAX_LISTED_FAILURES} more")
    _timing(args, t0)
    return EXIT_OK if loci_free and report.all_pass else EXIT_FAIL


def cmd_margins(args, cfg) -> int:
    t0 = time.perf_counter()
    c, tau, Te = cfg.controller, cfg.actuator.tau_m, cfg.Te
    f1 = cfg.disturbance.frequency[0] or 0.1
    w1 = 2 * math.pi * f1
    d1 = abs(disturbance_transfer(c, tau, Te, w1))
    if args.out:
        w = cfg.frequency.omegas()
        write_frequency_csv(args.out, w, open_loop_response(c, tau, Te, w))
    try:
        m = margins(c, tau, Te, band=(cfg.frequency.w_min, cfg.frequency.w_max))
    except NoCrossing as exc:
        print(f"margins undefined: {exc}")
        print(f"|D({w1:.3g} rad/s)| = {20 * math.log10(d1):.2f} dB")
        return EXIT_FAIL
    print(f"GM={m.gain_margin_db:.1f} dB, PM={m.phase_margin_deg:.1f} deg")
    print(f"gain crossover {m.gain_crossover:.6g} rad/s, phase crossover {m.phase_crossover:.6g} rad/s")
    print(f"|D({w1:.3g} rad/s)| = {20 * math.log10(d1):.2f} dB")
    _timing(args, t0)
    stable = m.gain_margin_db > 0 and m.phase_margin_deg > 0
    return EXIT_OK if stable else EXIT_FAIL


def cmd_simulate(args, cfg) -> int:
    t0 = time.perf_counter()
    try:
        sim = cfg.simulation()
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        trace = run(sim)
    except SimulationError as exc:
        print(f"simulation aborted: {exc}")
        return EXIT_FAIL
    if args.out:
        trace.write_csv(args.out)
    m = steady_state_metrics(trace, cfg.t_start)
    print(f"samples: {len(trace.t)}")
    print(f"steady state from t = {cfg.t_start:g} s")
    print(f"max |eps|       = {m.max_abs_residual:.4e} rad")
    print(f"max |eps_Omega| = {m.max_abs_speed_error:.4e} rad/s")
    print(f"max |dtheta|    = {m.max_abs_joint_rate:.4e} rad/s")
    met = m.max_abs_residual < REQUIREMENT
    print(f"requirement |eps| < {REQUIREMENT:g} rad: {_verdict(met)}")
    print(f"reported figure |eps| < {REPORTED_RESIDUAL:g} rad: {_verdict(m.max_abs_residual < REPORTED_RESIDUAL)}")
    _timing(args, t0)
    return EXIT_OK if met else EXIT_FAIL


COMMANDS = {
    "defaults": (cmd_defaults, "print the default configuration file"),
    "check": (cmd_check, "run the kinematic self-checks"),
    "scan": (cmd_scan, "type-1 singularity scan and workspace certification"),
    "margins": (cmd_margins, "stability margins and disturbance attenuation"),
    "simulate": (cmd_simulate, "closed-loop stabilization run"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cospm", description="Coaxial spherical parallel manipulator toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        if name != "defaults":
            sp.add_argument("config", nargs="?", help="INI configuration file (defaults if omitted)")
            sp.add_argument("--deterministic", action="store_true", help="suppress timing lines")
        sp.add_argument("--out", help="output path")
        if name == "scan":
            sp.add_argument("--grid", type=_grid_arg, help="scan resolution N1xN2")
    return parser


def _grid_arg(text: str):
    try:
        return cfgmod.parse_grid(text)
    except cfgmod.ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    path = getattr(args, "config", None)
    try:
        cfg = cfgmod.load(path) if path else cfgmod.RunConfig()
    except cfgmod.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    handler = COMMANDS[args.command][0]
    return handler(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
