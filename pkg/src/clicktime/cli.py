"""
Command line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (including
a click density that leaves more than 1% of its mass outside the time
window), 4 failed invariant or disagreeing delay routes.
"""
import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import plotting
from .checks import povm_invariant_suite
from .config import FORMATS, SCHEMA, load_config
from .delay import compare_delay_routes, packet_click_density
from .exceptions import AccuracyWarning, ConfigError, DomainError, NumericalFailure
from .radial import PotentialSpec, build_phase_table
from .report import ResultTable, atomic_write, render_table, summary_json
from .shell import closed_form_c

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INVARIANT = 4

UNIT_ENERGY = "energy"
UNIT_TIME = "time"
UNIT_MOMENTUM = "1/length"


class CommandFailure(Exception):
    def __init__(self, code, message, outputs=None):
        super().__init__(message)
        self.code = code
        self.outputs = outputs or {}


def _phase_table(cfg, potential=None):
    p = potential or cfg.potential
    return build_phase_table(p, cfg.grid.momenta, cfg.r_max, cfg.dr, cfg.r_match)


def cmd_phase_shifts(cfg, args):
    tab = _phase_table(cfg)
    out = ResultTable("phase_shifts", ["k", "E", "delta_std", "delta_paper", "dDelta_dE"],
                      [UNIT_MOMENTUM, UNIT_ENERGY, "rad", "rad", UNIT_TIME])
    for row in zip(tab.k_grid, tab.energies, tab.delta_std, tab.delta_paper, tab.dDelta_dE):
        out.add(*(float(x) for x in row))
    out.summary = {"potential": cfg.potential.kind, "ell": cfg.potential.ell, "n_points": len(tab.k_grid)}
    return {"phase_shifts": out}, {"phase_shifts": plotting.phase_shift_figure(out)}


def cmd_povm_check(cfg, args):
    seed = cfg.seed if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    shell_c = closed_form_c(cfg.shell, _phase_table(cfg), cfg.grid)
    results = povm_invariant_suite(cfg.grid, rng, cfg.n_effects, cfg.rank, extra_kernels=[shell_c])
    out = ResultTable("povm_check", ["invariant", "deviation", "threshold", "passed"],
                      ["-", "operator norm units", "operator norm units", "-"])
    for r in results:
        out.add(r.name, r.deviation, r.threshold, r.passed)
    out.summary = {"seed": seed, "all_passed": all(r.passed for r in results)}
    outputs = {"povm_check": out}
    figures = {"povm_check": plotting.povm_check_figure(out)}
    if not out.summary["all_passed"]:
        failed = ", ".join(r.name for r in results if not r.passed)
        raise CommandFailure(EXIT_INVARIANT, f"invariants failed: {failed}", (outputs, figures))
    return outputs, figures


def _densities(cfg):
    free = PotentialSpec.free(cfg.potential.ell, cfg.potential.mass)
    t = cfg.times
    res = []
    for p in (free, cfg.potential):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AccuracyWarning)
            res.append(packet_click_density(cfg.packet, cfg.shell, _phase_table(cfg, p), t, cfg.grid))
    return t, res


def cmd_density(cfg, args):
    t, (df, di) = _densities(cfg)
    low = min(df.captured_mass, di.captured_mass)
    if low < 0.99:
        raise CommandFailure(EXIT_NUMERICAL,
                             f"time window captures only {low:.4f} of the click probability "
                             "(need 0.99); widen [time]")
    out = ResultTable("density", ["t", "p_free", "p_int"], [UNIT_TIME, "1/time", "1/time"])
    for row in zip(t, df.p, di.p):
        out.add(*(float(x) for x in row))
    dt = float(t[1] - t[0])
    peaks = [float(t[np.argmax(d.p)]) for d in (df, di)]
    summary = {
        "captured_mass_free": df.captured_mass,
        "captured_mass_int": di.captured_mass,
        "peak_free": peaks[0],
        "peak_int": peaks[1],
        "mean_free": float(np.sum(t * df.p) * dt),
        "mean_int": float(np.sum(t * di.p) * dt),
        "classical_traversal_time": cfg.shell.mass * cfg.shell.R / cfg.packet.k0,
    }
    out.summary = summary
    return {"density": out}, {"density": plotting.density_figure(out, peaks)}


def cmd_delay(cfg, args):
    t = cfg.times
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        rep = compare_delay_routes(cfg.packet, cfg.shell, cfg.potential, cfg.grid, t,
                                   cfg.r_max, cfg.dr, cfg.r_match)
    _, (df, di) = _densities(cfg)
    out = ResultTable("delay", ["quantity", "value"], ["-", "time or ratio"])
    base = rep.routes["density_shift"]
    rows = [
        ("t_mean_free", rep.t_mean_free),
        ("t_mean_int", rep.t_mean_int),
        ("shift_mean", rep.shift_mean),
        ("shift_peak", rep.shift_peak),
        ("wigner_delay_at_k0", rep.wigner_delay_at_k0),
        ("eisenbud_wigner_average", rep.routes["eisenbud_wigner"]),
        ("operator_delay", rep.routes["operator"]),
        ("l1_overlap_residual", rep.l1_overlap_residual),
    ]
    for name in ("eisenbud_wigner", "operator"):
        val = rep.routes[name]
        rows.append((f"ratio_{name}_to_density_shift", val / base if base != 0 else float("nan")))
    for name, value in rows:
        out.add(name, float(value))
    out.summary = {
        "peak_reliable": rep.peak_reliable,
        "routes_agree": rep.routes_agree,
        "agreement": rep.agreement,
        "captured_mass_free": df.captured_mass,
        "captured_mass_int": di.captured_mass,
    }
    outputs = {"delay": out}
    figures = {"delay": plotting.delay_figure(t, df.p, di.p, rep)}
    if min(df.captured_mass, di.captured_mass) < 0.99:
        raise CommandFailure(EXIT_NUMERICAL, "time window captures less than 0.99 of the click probability")
    if not rep.routes_agree:
        raise CommandFailure(EXIT_INVARIANT, "delay routes disagree beyond 5%", (outputs, figures))
    return outputs, figures


COMMANDS = {
    "phase-shifts": cmd_phase_shifts,
    "povm-check": cmd_povm_check,
    "density": cmd_density,
    "delay": cmd_delay,
}


def _write(out_dir, formats, outputs, figures):
    """Render everything first, then move files into place one by one."""
    payloads = {}
    for name, table in outputs.items():
        for fmt in formats:
            payloads[f"{name}.{fmt}"] = render_table(table, fmt)
        if "csv" in formats and table.summary:
            payloads[f"{name}_summary.json"] = summary_json(table.summary)
    for name, fig in figures.items():
        payloads[f"{name}.png"] = plotting.to_png(fig)
    for fname in sorted(payloads):
        atomic_write(out_dir / fname, payloads[fname])
    return sorted(payloads)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clicktime",
        description="Occurrence-time POVMs, click densities and scattering time delays.",
        epilog=SCHEMA + "\nexit codes: 0 ok, 2 config error, 3 numerical failure, 4 invariant failure",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--format", choices=FORMATS, help="table format (overrides output.formats)")
    parser.add_argument("--seed", type=int, help="seed for the randomized invariant suite")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("config error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out) if args.out else cfg.out_dir
    formats = (args.format,) if args.format else cfg.formats

    try:
        outputs, figures = COMMANDS[args.command](cfg, args)
    except CommandFailure as exc:
        if exc.outputs:
            _write(out_dir, formats, *exc.outputs)
        print(f"{args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (NumericalFailure, DomainError, np.linalg.LinAlgError) as exc:
        print(f"{args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for fname in _write(out_dir, formats, outputs, figures):
        print(out_dir / fname)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
