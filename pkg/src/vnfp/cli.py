"""Command-line entry point: ``vnfp <command> [--config FILE] [--out DIR] ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse_config, reference_run_config
from .coupled import PRESETS, SolverError, run_coupled, run_fixed_point
from .fp_radial import DensityState
from .nordstrom import FieldState, FieldTrajectory, field_source, integrate_field
from .output import RunManifest, emit_csv, utc_now, write_manifest, write_rows
from .sde_mc import PathBlowupError, feynman_kac_estimate
from ._quadrature import QuadratureError

log = logging.getLogger("vnfp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4

COMMANDS = ("simulate", "iterate", "ultra-exact", "mc", "verify", "field")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vnfp",
        description="Homogeneous Vlasov-Nordstrom-Fokker-Planck laboratory.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "simulate": "coupled density/field run",
        "iterate": "fixed-point iteration of the coupled system",
        "ultra-exact": "exact ultra-relativistic profiles (default: the five-time dataset)",
        "mc": "Feynman-Kac Monte Carlo point estimate",
        "verify": "run the property suite",
        "field": "field equation with zero or frozen source",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, help="configuration file")
        p.add_argument("--preset", choices=["reference"], help="start from a named preset")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, help="override mc.seed")
        p.add_argument("--threads", type=int, help="override mc.threads")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    if args.config is not None and args.preset is not None:
        raise ConfigError("--config and --preset are mutually exclusive")
    cfg = parse_config(args.config) if args.config is not None else reference_run_config()
    if args.seed is not None:
        cfg = cfg.override("mc", "seed", args.seed)
    if args.threads is not None:
        cfg = cfg.override("mc", "threads", args.threads)
    return cfg


def _cmd_simulate(cfg: RunConfig, out: Path) -> tuple[list[Path], dict]:
    traj = run_coupled(cfg.sim_config())
    files = emit_csv(traj, out)
    last = traj.diagnostics[-1]
    summary = {
        "mass_drift": max(abs(r.mass / traj.mass0 - 1.0) for r in traj.diagnostics),
        "max_energy_residual": max(abs(r.energy_residual) for r in traj.diagnostics),
        "phi_final": last.phi,
        "phidot_final": last.phidot,
        "field_bounds_ok": traj.bounds.ok,
        "t0": traj.bounds.t0,
        "boundary_ratio_max": max(r.boundary_ratio for r in traj.diagnostics),
    }
    return files, summary


def _cmd_iterate(cfg: RunConfig, out: Path):
    it = cfg.values["iterate"]
    res = run_fixed_point(cfg.sim_config(), it["n_iter"], it["horizon"], seed=it["seed_field"])
    rows = [(k + 1, d, e) for k, (d, e) in enumerate(zip(res.phi_diffs, res.f_diffs))]
    path = write_rows(out / "iterate.csv", ("iteration", "phi_diff", "f_diff"), rows)
    if res.stagnated:
        log.warning("fixed-point differences stagnated at %.3e", res.phi_diffs[-1])
    return [path], {"phi_diffs": res.phi_diffs, "f_diffs": res.f_diffs,
                    "monotone": res.monotone, "stagnated": res.stagnated}


def _cmd_ultra(cfg: RunConfig, out: Path):
    from .ultra_exact import exponential_solution, ultra_solution

    u = cfg.values["ultra"]
    profile = PRESETS[cfg.values["initial"]["f_in"]]
    qs = np.linspace(u["q_min"], u["q_max"], u["n_q"])
    rows, worst = [], 0.0
    for t in u["times"]:
        for q in qs:
            val = ultra_solution(profile, t, float(q))
            rows.append((t, q, val))
            if cfg.values["initial"]["f_in"] == "exponential":
                ref = float(exponential_solution(t, q))
                worst = max(worst, abs(val / ref - 1.0))
    path = write_rows(out / "profiles.csv", ("t", "q", "f"), rows)
    summary = {"times": list(u["times"]), "n_q": u["n_q"]}
    if cfg.values["initial"]["f_in"] == "exponential":
        summary["max_rel_error_vs_closed_form"] = worst
    return [path], summary


def _constant_field(cfg: RunConfig, t_end: float) -> FieldTrajectory:
    phi = cfg.values["initial"]["phi_in"]
    dt = min(cfg.values["mc"]["dt"], t_end)
    return FieldTrajectory.prescribed(lambda t: np.full_like(t, phi), t_end, dt)


def _cmd_mc(cfg: RunConfig, out: Path):
    m = cfg.values["mc"]
    profile = PRESETS[cfg.values["initial"]["f_in"]]
    traj = _constant_field(cfg, m["t"])
    est = feynman_kac_estimate(profile, [m["q"], 0.0, 0.0], m["t"], traj, cfg.path_config())
    path = write_rows(
        out / "mc.csv",
        ("t", "q", "mean", "std_error", "n_effective"),
        [(m["t"], m["q"], est.mean, est.std_error, est.n_effective)],
    )
    print(f"f({m['t']}, {m['q']}) = {est.mean:.10g} +/- {est.std_error:.3g} (n={est.n_effective})")
    return [path], {"mean": est.mean, "std_error": est.std_error, "n_effective": est.n_effective}


def _cmd_field(cfg: RunConfig, out: Path):
    sim = cfg.sim_config()
    state = FieldState(0.0, sim.phi_in, sim.psi_in, 0.0)
    if cfg.values["field"]["source"] == "zero":
        def source(_t, _phi):
            return 0.0
    else:
        grid = sim.grid()
        f = DensityState.from_profile(grid, sim.profile)

        def source(_t, phi):
            return field_source(phi, f, grid)

    traj = integrate_field(state, source, sim.t_end, sim.dt)
    path = write_rows(
        out / "field.csv",
        ("t", "phi", "phidot", "tau"),
        zip(traj.t, traj.phi, traj.phidot, traj.tau),
    )
    return [path], {"phi_final": float(traj.phi[-1]), "tau_final": float(traj.tau[-1])}


def _cmd_verify(cfg: RunConfig, out: Path):
    from .verification import run_suite

    results = run_suite(seed=cfg.values["mc"]["seed"] % 2**32)
    for r in results:
        print(r.line())
    path = out / "verify.json"
    path.write_text(json.dumps([r.as_dict() for r in results], indent=2) + "\n")
    return [path], {"passed": all(r.passed for r in results),
                    "failed": [r.name for r in results if not r.passed]}


HANDLERS = {
    "simulate": _cmd_simulate,
    "iterate": _cmd_iterate,
    "ultra-exact": _cmd_ultra,
    "mc": _cmd_mc,
    "verify": _cmd_verify,
    "field": _cmd_field,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out: Path = args.out
    started = utc_now()
    try:
        out.mkdir(parents=True, exist_ok=True)
        files, summary = HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, PathBlowupError, QuadratureError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    manifest = RunManifest(
        config_digest=cfg.digest,
        artifact_version=__version__,
        started_at=started,
        finished_at=utc_now(),
        output_files=[str(p.relative_to(out)) for p in files],
        command=args.command,
        config=cfg.canonical(),
        summary=summary,
    )
    write_manifest(manifest, out)
    log.info("wrote %s", ", ".join(manifest.output_files))
    if args.command == "verify" and not summary["passed"]:
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
