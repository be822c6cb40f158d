"""Command-line entry point: ``fdwave {forward,adjoint,invert,verify,ucp}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .adjoint import Probe, integral_identity_residual, probe_dictionary, solve_adjoint
from .config import ConfigError, RunConfig, config_echo, load_config, parse_expression
from .forward import FluxTrace, NumericalInstabilityError, ProblemSpec, SourceSpec, measure_flux, picard_iterate, solve_general, solve_symmetric
from .fracops import TimeGrid, TimeSeries
from .inverse import add_noise, assemble_forward_map, discrepancy_sweep, lcurve_corner, reconstruct
from .io import OutputSet, fluxtrace_csv, meshfield_csv, read_fluxtrace, rows_to_csv, spacetime_csv
from .mlf import MittagLefflerError
from .spatial import Coefficients, MeshField, SpatialMesh
from .ucp import LaplaceGrid, ucp_correspondence_report
from .verify import SUITES, format_checks, run_suite

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
DEFAULT_OUT = Path("fdwave_out")


@contextmanager
def _phase(outputs: OutputSet, name: str):
    t0 = time.perf_counter()
    yield
    outputs.timings[name] = round(time.perf_counter() - t0, 6)


def build_spec(cfg: RunConfig) -> ProblemSpec:
    """Problem description from a validated config."""
    p = cfg.problem
    mesh = SpatialMesh(p.x_L, p.x_R, p.n_interior)
    grid = TimeGrid(p.T, p.n_steps)
    coeff = Coefficients(a=p.a, B=p.B, c=p.c, a0=p.a0, B_prime=p.B_prime)
    a = MeshField.from_function(mesh, p.init_a) if p.init_a is not None else None
    b = MeshField.from_function(mesh, p.init_b) if p.init_b is not None else None
    source = None
    if p.f is not None:
        source = SourceSpec(MeshField.from_function(mesh, p.f), TimeSeries.from_function(grid, p.g), p.g0, p.g_prime)
    return ProblemSpec(p.alpha, mesh, coeff, grid, a=a, b=b, source=source, sides=p.sides, n_modes=p.n_modes)


def _time_profile(cfg: RunConfig, grid: TimeGrid) -> tuple[TimeSeries, float]:
    p = cfg.problem
    if p.g is None:
        raise ConfigError("problem.source.g and g0 are required for this command")
    return TimeSeries.from_function(grid, p.g), p.g0


def _plot_script(kind: str) -> str:
    return (
        "# plotting helper; needs matplotlib\n"
        "import csv, sys\n"
        "import matplotlib.pyplot as plt\n"
        f"rows = list(csv.DictReader(open(sys.argv[1] if len(sys.argv) > 1 else '{kind}')))\n"
        "keys = list(rows[0])\n"
        "plt.plot([float(r[keys[0]]) for r in rows], [float(r[keys[-1]]) for r in rows], '.')\n"
        "plt.xlabel(keys[0]); plt.ylabel(keys[-1]); plt.show()\n"
    )


def cmd_forward(cfg: RunConfig, outputs: OutputSet) -> int:
    spec = build_spec(cfg)
    task = cfg.task("forward")
    with _phase(outputs, "solve"):
        if task["picard"]:
            rep = picard_iterate(spec)
            u = rep.field
            outputs.add("picard.csv", rows_to_csv(("iteration", "delta"),
                                                  ((k + 1, float(d)) for k, d in enumerate(rep.deltas))))
        elif spec.coeff.is_symmetric(spec.mesh):
            u = solve_symmetric(spec)
        else:
            u = solve_general(spec)
    with _phase(outputs, "write"):
        outputs.add("field.csv", spacetime_csv(u))
        outputs.add("flux.csv", fluxtrace_csv(measure_flux(u, spec.coeff, spec.sides)))
        if cfg.plot_script:
            outputs.add("plot_flux.py", _plot_script("flux.csv"))
    return EXIT_OK


def _probes(cfg: RunConfig, spec: ProblemSpec) -> list[Probe]:
    task = cfg.task("adjoint")
    grid = spec.grid
    sides = tuple(task["sides"] or spec.sides)
    if isinstance(task["probes"], int):
        return probe_dictionary(grid, sides, task["probes"])
    out = []
    for i, pr in enumerate(task["probes"]):
        if "k" in pr:
            out.extend(p for p in probe_dictionary(grid, (pr["side"],), int(pr["k"]))[-1:])
            continue
        if "samples" in pr:
            vals = np.asarray(pr["samples"], dtype=float)
            if vals.shape != (grid.size,):
                raise ConfigError(f"adjoint.probes[{i}].samples needs {grid.size} values")
        else:
            vals = parse_expression(pr["expr"], "t", f"adjoint.probes[{i}].expr")(grid.nodes)
        try:
            out.append(Probe(pr["side"], TimeSeries(grid, vals), label=f"probe{i}"))
        except ValueError as exc:
            raise ConfigError(f"adjoint.probes[{i}]: {exc}") from None
    return out


def cmd_adjoint(cfg: RunConfig, outputs: OutputSet) -> int:
    spec = build_spec(cfg)
    probes = _probes(cfg, spec)
    rows = []
    with _phase(outputs, "adjoint"):
        for k, pr in enumerate(probes):
            v = solve_adjoint(spec, pr)
            outputs.add(f"adjoint_{k:02d}.csv", spacetime_csv(v))
    if spec.source is not None:
        with _phase(outputs, "identity"):
            reps = integral_identity_residual(spec, spec.source.f, spec.source.g, probes, spec.source.g0)
            for k, (pr, r) in enumerate(zip(probes, reps)):
                rows.append((k, pr.label, pr.side, r.bilinear, r.flux_side, r.abs_residual, r.rel_residual))
        outputs.add("bilinear.csv", rows_to_csv(
            ("probe", "label", "side", "bilinear", "flux_pairing", "abs_residual", "rel_residual"), rows))
    return EXIT_OK


def cmd_invert(cfg: RunConfig, outputs: OutputSet) -> int:
    task = cfg.task("invert")
    if not task["data"]:
        raise ConfigError("invert.data (path to a t,side,flux CSV) is required")
    spec = build_spec(cfg)
    g, g0 = _time_profile(cfg, spec.grid)
    path = Path(task["data"])
    path = path if path.is_absolute() else cfg.base_dir / path
    data = read_fluxtrace(path, spec.grid, spec.sides)
    truth = None
    if task["truth"] is not None:
        truth = MeshField.from_function(spec.mesh, parse_expression(task["truth"], "x", "invert.truth"))
    noise_norm = None
    if task["noise_level"] > 0:
        rng = np.random.default_rng(cfg.seed)
        noisy = add_noise(data, task["noise_level"], rng)
        noise_norm = FluxTrace(data.grid, data.sides, noisy.values - data.values).norm()
        data = noisy
    with _phase(outputs, "assemble"):
        matrix_free = task["method"] == "cgls" and not isinstance(task["lambda_reg"], str)
        fmap = assemble_forward_map(spec.with_(source=None), g, g0, dense=not matrix_free)
    sweep = []
    with _phase(outputs, "reconstruct"):
        lam = task["lambda_reg"]
        if lam == "discrepancy":
            chosen, sweep = discrepancy_sweep(fmap, data, task["lambdas"], noise_norm=noise_norm, truth=truth,
                                              tau=task["tau"])
        elif lam == "lcurve":
            sweep = [reconstruct(fmap, data, lv, truth=truth) for lv in task["lambdas"]]
            chosen = lcurve_corner(sweep)
        else:
            chosen = reconstruct(fmap, data, float(lam), method=task["method"], max_iters=task["max_iters"],
                                 truth=truth)
    outputs.add("f_hat.csv", meshfield_csv(chosen.f_hat))
    report = {
        "lambda_reg": chosen.lambda_reg,
        "method": chosen.method,
        "iterations": chosen.iterations,
        "residual": chosen.residual,
        "solution_norm": chosen.solution_norm,
        "rel_error": chosen.rel_error,
        "rank_deficient": chosen.rank_deficient,
        "noise_norm": noise_norm,
        "selection": lam if isinstance(lam, str) else "fixed",
    }
    outputs.add("report.txt", "".join(f"{k} = {'%.17g' % v if isinstance(v, float) else v}\n"
                                      for k, v in report.items()))
    if sweep:
        outputs.add("lambda_sweep.csv", rows_to_csv(
            ("lambda_reg", "residual", "solution_norm", "rel_error"),
            ((r.lambda_reg, r.residual, r.solution_norm, r.rel_error if r.rel_error is not None else "")
             for r in sweep)))
    if chosen.residual_history:
        outputs.add("cgls_history.csv", rows_to_csv(
            ("iteration", "residual", "objective"),
            ((k, r, o) for k, (r, o) in enumerate(zip(chosen.residual_history, chosen.objective_history)))))
    if cfg.plot_script:
        outputs.add("plot_f_hat.py", _plot_script("f_hat.csv"))
    return EXIT_OK


def cmd_ucp(cfg: RunConfig, outputs: OutputSet) -> int:
    task = cfg.task("ucp")
    spec = build_spec(cfg)
    if spec.b is None:
        raise ConfigError("ucp needs problem.initial.b")
    if spec.a is not None or spec.source is not None:
        raise ConfigError("ucp needs zero initial position and no source")
    try:
        laplace = LaplaceGrid(tuple(task["s"]), task["T_long"])
    except ValueError as exc:
        raise ConfigError(f"ucp: {exc}") from None
    with _phase(outputs, "report"):
        rep = ucp_correspondence_report(spec, laplace, n_steps=task["n_steps"],
                                        parabolic_refine=task["parabolic_refine"])
    header = ("s", "route_a", "route_b", "mismatch", "truncation_budget")
    for name in ("resolvent", "parabolic", "flux"):
        rows = [(r.s, r.route_a, r.route_b, r.mismatch, r.truncation_budget) for r in getattr(rep, name)]
        outputs.add(f"ucp_{name}.csv", rows_to_csv(header, rows))
    worst = rep.worst()
    print(f"ucp worst relative mismatch {worst:.3e} (tolerance {task['tolerance']:.1e})")
    if worst >= task["tolerance"]:
        return EXIT_VERIFY
    return EXIT_OK


COMMANDS = {"forward": cmd_forward, "adjoint": cmd_adjoint, "invert": cmd_invert, "ucp": cmd_ucp}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fdwave", description="Fractional diffusion-wave forward and inverse solvers.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("forward", "adjoint", "invert", "ucp", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=name != "verify", help="TOML run configuration")
        sp.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        sp.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
        sp.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            sp.add_argument("suite", nargs="?", default=None,
                            help=f"one of: {', '.join([*SUITES, 'all'])}")
    return ap


def _run_verify(args, cfg: RunConfig | None) -> int:
    suites = [args.suite] if args.suite else (cfg.task("verify")["suites"] if cfg else ["all"])
    bad = [s for s in suites if s not in SUITES and s != "all"]
    if bad:
        print(f"fdwave verify: unknown suite {bad[0]!r}; valid suites: {', '.join([*SUITES, 'all'])}",
              file=sys.stderr)
        return EXIT_CONFIG
    alpha = cfg.problem.alpha if cfg else 1.5
    checks = [c for s in suites for c in run_suite(s, alpha)]
    print(format_checks(checks))
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("fdwave: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is not None and args.seed is not None:
            cfg = RunConfig(**{**cfg.__dict__, "seed": args.seed})
        with threadpool_limits(limits=args.threads):
            if args.command == "verify":
                return _run_verify(args, cfg)
            out_dir = args.out or cfg.out_dir or DEFAULT_OUT
            outputs = OutputSet(Path(out_dir))
            code = COMMANDS[args.command](cfg, outputs)
            if code != EXIT_OK:
                # the report files help diagnose the failure; no manifest is written
                outputs.commit(None)
                return code
            outputs.commit({
                "command": args.command,
                "version": __version__,
                "config_path": str(args.config),
                "config": config_echo(cfg),
            })
            return code
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"fdwave {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalInstabilityError, MittagLefflerError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"fdwave {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
