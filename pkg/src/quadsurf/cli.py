"""Command line entry point.

    quadsurf {solve-qs|solve-bilap|check|oracle} --config PATH [--out DIR]
             [--format json|csv] [--g-squared]

Exit codes: 0 converged (or a sufficient certificate fires), 1 usage, config
or I/O error, 2 iteration limit, 3 constrained at the hull (or no sufficient
certificate fires), 4 solver failure during the run.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import oracle
from .certificates import (any_sufficient_fires, cert_bilap_sufficient, cert_qs_sufficient,
                           hull_grid, registry, reports_to_csv)
from .config import ConfigError, RunConfig, load_config
from .grid import dump_field
from .pde import SolverError
from .shapeopt import SolveReport, solve_bilap, solve_qs

EXIT = {"converged": 0, "max_iters": 2, "constrained_at_hull": 3, "aborted": 4}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _run_solve(cfg: RunConfig, kind: str, g_squared: bool = False) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.to_json()
    if kind == "bilap":
        resolved["g_squared"] = g_squared
    _dump_json(out / "resolved_config.json", resolved)

    if kind == "qs":
        cert = cert_qs_sufficient(cfg.f, cfg.g)
    else:
        cert = cert_bilap_sufficient(cfg.f, cfg.g, hull_grid(cfg.f.hull, cfg.grid.nx))

    def snapshot(k, trace):
        if k % cfg.snapshot_every == 0:
            trace.to_csv(out / f"boundary_{k:04d}.csv")

    init = cfg.init
    if kind == "qs":
        rep = solve_qs(cfg.f, cfg.g, init, cfg.descent, cfg.grid, snapshot)
    else:
        rep = solve_bilap(cfg.f, cfg.g, init, cfg.descent, cfg.grid, g_squared, snapshot)
    _write_outputs(out, rep, cert.to_json())
    print(f"{kind}: {rep.status} ({rep.stop_reason}) after {rep.iterations} iterations; "
          f"certificate {cert.id} {cert.verdict}", file=sys.stderr)
    return EXIT[rep.status]


def _write_outputs(out: Path, rep: SolveReport, cert: dict) -> None:
    body = rep.to_json()
    body["certificate"] = cert
    _dump_json(out / "report.json", body)
    grid = rep.ls.grid
    dump_field(out / "phi.bin", rep.ls.phi, grid)
    if rep.u is not None:
        dump_field(out / "u.bin", rep.u.values, grid)
    if rep.v is not None:
        dump_field(out / "v.bin", rep.v.values, grid)
    if rep.trace is not None:
        extra = tuple(k for k in ("grad_u", "grad_v", "g", "speed") if k in rep.trace.data)
        rep.trace.to_csv(out / "boundary_final.csv", extra)


def _run_check(cfg: RunConfig, fmt: str, out_dir: Optional[str]) -> int:
    reports = registry(cfg.f, cfg.g, hull_grid(cfg.f.hull, cfg.grid.nx))
    text = reports_to_csv(reports) if fmt == "csv" else json.dumps(
        [r.to_json() for r in reports], indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(out / "resolved_config.json", cfg.to_json())
        (out / ("certificates.csv" if fmt == "csv" else "certificates.json")).write_text(text)
    return 0 if any_sufficient_fires(reports) else 3


def _run_oracle(args) -> int:
    if args.which == "radial-qs":
        R, valid = oracle.radial_qs_radius(args.c, args.a, args.k)
        out = {"R": R, "valid": valid}
        if valid:
            prof = oracle.radial_poisson(args.c, args.a, R)
            out.update(u0=prof.u0, du_R=prof.du_R)
    elif args.which == "radial-bilap":
        u, v = oracle.radial_cascade(args.c, args.a, args.R)
        out = {"R": args.R, "u0": u.u0, "du_R": u.du_R, "dv_R": v.du_R,
               "g_star": abs(u.du_R * v.du_R)}
    else:
        prof = oracle.radial_poisson(args.c, args.a, args.R)
        out = {"R": args.R, "u0": prof.u0, "du_R": prof.du_R, "int_u": prof.integral()}
    print(json.dumps(out, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="quadsurf", description="Level-set solvers and certificates for "
                "quadrature-surface and bi-Laplacian free boundaries.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    for name in ("solve-qs", "solve-bilap", "check"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--out")
        s.add_argument("--format", choices=("json", "csv"), default="json")
        if name == "solve-bilap":
            s.add_argument("--g-squared", action="store_true",
                           help="use int g^2 instead of int g in the functional")
    o = sub.add_parser("oracle")
    osub = o.add_subparsers(dest="which", required=True, parser_class=_Parser)
    q = osub.add_parser("radial-qs")
    for flag in ("--c", "--a", "--k"):
        q.add_argument(flag, type=float, required=True)
    for name in ("radial-bilap", "radial-poisson"):
        b = osub.add_parser(name)
        for flag in ("--c", "--a", "--R"):
            b.add_argument(flag, type=float, required=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "oracle":
            return _run_oracle(args)
        cfg = load_config(args.config, args.out)
        if args.cmd == "check":
            return _run_check(cfg, args.format, args.out)
        return _run_solve(cfg, "qs" if args.cmd == "solve-qs" else "bilap",
                          getattr(args, "g_squared", False))
    except (ConfigError, OSError) as exc:
        print(f"quadsurf: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # oracle argument errors and invalid geometry in the config
        print(f"quadsurf: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"quadsurf: solver failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
