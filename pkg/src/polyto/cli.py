"""Command-line entry point.

Subcommands: run, sweep, check-grads, render. Exit code 0 when the
optimizer converged (step or KKT tolerance), 2 when it stopped at the
iteration cap, 1 on any error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import export
from .driver import RunConfig, check_gradients, run, sweep
from .errors import ConfigurationError, RunAborted, SolverError


def _load_config(path: str, output_dir: str | None) -> RunConfig:
    cfg = RunConfig.from_json(path)
    if output_dir is not None:
        cfg.output.directory = output_dir
    return cfg


def _parse_values(raw: str):
    out = []
    for token in raw.split(","):
        token = token.strip()
        try:
            out.append(int(token))
        except ValueError:
            try:
                out.append(float(token))
            except ValueError:
                out.append(token)
    return out


def _cmd_run(args) -> int:
    cfg = _load_config(args.config, args.output_dir)
    result = run(cfg)
    last = result.records[-1]
    print(f"terminated: {result.termination} after {result.iterations} iterations")
    print(f"final J={last.J:.6e}  g_v={last.g_v:.3e}  g_l={last.g_l:.3e}")
    if cfg.output.directory:
        print(f"artifacts in {cfg.output.directory}")
    return 0 if result.termination in ("step_tol", "kkt_tol") else 2


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args.output_dir)
    entries = sweep(cfg, args.axis, _parse_values(args.values))
    print(f"{args.axis:>12}  {'final J':>14}  {'g_v':>10}  {'g_l':>10}  iters  termination")
    failed = False
    for en in entries:
        if en.run is None:
            failed = True
            print(f"{en.value!s:>12}  failed: {en.error}")
        else:
            last = en.run.records[-1]
            print(f"{en.value!s:>12}  {last.J:>14.6e}  {last.g_v:>10.3e}  "
                  f"{last.g_l:>10.3e}  {en.run.iterations:>5}  {en.run.termination}")
    return 1 if failed else 0


def _cmd_check_grads(args) -> int:
    cfg = _load_config(args.config, None)
    worst = check_gradients(cfg, seed=args.seed)
    for name, value in worst.items():
        print(f"worst relative FD discrepancy for {name}: {value:.3e}")
    return 0


def _cmd_render(args) -> int:
    run_dir = Path(args.run_dir)
    polys_path = run_dir / "polygons.json"
    if not polys_path.exists():
        raise ConfigurationError(f"{polys_path} not found; is {run_dir} a run directory?")
    polys, lx, ly = export.read_polygons_json(polys_path)
    density = mesh_shape = None
    density_path = run_dir / "density.csv"
    if density_path.exists():
        rho, nelx, nely, _, _ = export.read_density_csv(density_path)
        density, mesh_shape = rho, (nelx, nely)
    export.write_design_svg(polys, lx, ly, args.out, density=density, mesh_shape=mesh_shape)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyto",
        description="Topology optimization with convex-polygon designs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one optimization from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None, help="override output directory")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a one-axis parameter sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", required=True,
                         choices=["vf_star", "K", "S", "l_star", "init"])
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--output-dir", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_check = sub.add_parser("check-grads",
                             help="verify analytic gradients against finite differences")
    p_check.add_argument("config")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.set_defaults(func=_cmd_check_grads)

    p_render = sub.add_parser("render", help="render a finished run directory to SVG")
    p_render.add_argument("run_dir")
    p_render.add_argument("--out", default="design.svg")
    p_render.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, SolverError, RunAborted, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
