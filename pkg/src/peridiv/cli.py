"""Command-line front end.

Subcommands: scale, value, optimize, sweep, simulate, verify.  Numeric CSV
output uses 12 significant digits with '.' as the decimal separator; primary
outputs are byte-identical across reruns with identical inputs.  Every
artifact carries the hash of a run manifest (version + subcommand + resolved
configuration + model file digest); the full manifest is written as a sidecar
JSON next to file outputs.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 failed
verification.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .errors import (
    BracketNotFound,
    ConfigError,
    ModelFileError,
    NearMultipleRoots,
    NoPositiveRealRoot,
    PeridivError,
    PoleError,
    PreconditionViolated,
    SingularSystem,
    SolverError,
)
from .model import ModelSpec, TimePreference, load_model_file
from .optimizer import solve_optimal, sweep
from .scale import ScaleContext
from .simulate import SimConfig, simulate_value, simulate_value_antithetic
from .valuation import (
    Strategy,
    StrategyValuation,
    generator_residual,
    hjb_residual,
    smoothness_gap,
)

_CONFIG_ERRORS = (ModelFileError, ConfigError, PoleError, ValueError, OSError)
_SOLVER_ERRORS = (
    BracketNotFound,
    SolverError,
    NearMultipleRoots,
    NoPositiveRealRoot,
    SingularSystem,
    PreconditionViolated,
)


def _fmt(v: float) -> str:
    return f"{float(v):.12g}"


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo_s, hi_s, n_s = text.split(":")
        lo, hi, n = float(lo_s), float(hi_s), int(n_s)
    except ValueError:
        raise ConfigError(f"bad grid spec {text!r}, expected lo:hi:n")
    if n < 2 or hi <= lo:
        raise ConfigError(f"bad grid spec {text!r}: need hi > lo and n >= 2")
    return np.linspace(lo, hi, n)


class Manifest:
    def __init__(self, subcommand: str, model_path: str, config: Dict):
        with open(model_path, "rb") as fh:
            model_digest = hashlib.sha256(fh.read()).hexdigest()
        self.payload = {
            "tool": "peridiv",
            "version": __version__,
            "subcommand": subcommand,
            "model_file": model_path,
            "model_file_sha256": model_digest,
            "config": config,
        }
        blob = json.dumps(self.payload, sort_keys=True).encode()
        self.hash = hashlib.sha256(blob).hexdigest()
        self.t0 = time.time()

    def write_sidecar(self, out_path: str, outputs: List[str]) -> None:
        doc = dict(self.payload)
        doc["manifest_hash"] = self.hash
        doc["outputs"] = outputs
        doc["wall_clock_s"] = time.time() - self.t0
        with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


def _emit_csv(
    manifest: Manifest, header: List[str], rows: List[List[str]], out: Optional[str]
) -> None:
    lines = [f"# manifest_hash: {manifest.hash}", ",".join(header)]
    lines += [",".join(r) for r in rows]
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        manifest.write_sidecar(out, [out])
    else:
        sys.stdout.write(text)


def _emit_json(manifest: Manifest, doc: Dict, out: Optional[str]) -> None:
    doc = dict(doc)
    doc["manifest_hash"] = manifest.hash
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        manifest.write_sidecar(out, [out])
    else:
        sys.stdout.write(text)


def _load(path: str) -> Tuple[ModelSpec, TimePreference]:
    return load_model_file(path)


def cmd_scale(args) -> int:
    model, tp = _load(args.model)
    ctx = ScaleContext(model, tp)
    xs = _parse_grid(args.x_grid)
    manifest = Manifest("scale", args.model, {"x_grid": args.x_grid})
    header = ["x", "W_delta", "Z_delta", "Z_gamma_delta", "J", "H"]
    rows = [
        [_fmt(x), _fmt(ctx.W(x)), _fmt(ctx.Z(x)), _fmt(ctx.Z_gamma_delta(x)),
         _fmt(ctx.J(x)), _fmt(ctx.H(x))]
        for x in xs
    ]
    _emit_csv(manifest, header, rows, args.out)
    return 0


def cmd_value(args) -> int:
    model, tp = _load(args.model)
    ctx = ScaleContext(model, tp)
    s = Strategy(args.bu, args.bl, args.kappa)
    sv = StrategyValuation(ctx, s)
    xs = _parse_grid(args.x_grid)
    manifest = Manifest(
        "value", args.model,
        {"bu": args.bu, "bl": args.bl, "kappa": args.kappa, "x_grid": args.x_grid},
    )
    header = ["x", "value", "dvalue", "residual_gen", "residual_hjb"]
    rows = []
    for x in xs:
        x = float(x)
        near_seam = abs(x - s.b_u) <= 1e-6
        gen = "" if (x <= 0 or near_seam) else _fmt(generator_residual(ctx, s, x))
        hjb = "" if x < s.kappa else _fmt(hjb_residual(ctx, s, x))
        rows.append([_fmt(x), _fmt(sv.value(x)), _fmt(sv.derivative(x)), gen, hjb])
    _emit_csv(manifest, header, rows, args.out)
    return 0


def cmd_optimize(args) -> int:
    model, tp = _load(args.model)
    ctx = ScaleContext(model, tp)
    manifest = Manifest("optimize", args.model, {"kappa": args.kappa})
    sol = solve_optimal(ctx, args.kappa)
    doc = {
        "b_star": sol.b_star,
        "b_u_star": sol.b_u_star,
        "b_l_star": sol.b_l_star,
        "kappa": sol.kappa,
        "liquidation": sol.liquidation,
        "residuals": {
            "gamma": sol.diagnostics.gamma_residual,
            "vprime_minus_one": sol.diagnostics.vprime_residual,
            "smoothness_gap": sol.diagnostics.smoothness_gap,
        },
        "iterations": sol.diagnostics.iterations,
    }
    _emit_json(manifest, doc, args.out)
    return 0


def cmd_sweep(args) -> int:
    model, tp = _load(args.model)
    manifest = Manifest(
        "sweep", args.model,
        {"param": args.param, "from": args.from_, "to": args.to,
         "steps": args.steps, "kappa": args.kappa},
    )
    records = sweep(model, tp, args.param, args.from_, args.to, args.steps,
                    args.kappa)
    header = ["param", "value", "b_star", "b_u_star", "b_l_star", "liquidation",
              "status"]
    rows = [
        [r.parameter, _fmt(r.value), _fmt(r.b_star), _fmt(r.b_u_star),
         _fmt(r.b_l_star), "true" if r.liquidation else "false", r.status]
        for r in records
    ]
    _emit_csv(manifest, header, rows, args.out)
    if args.svg:
        from .svgplot import write_line_chart

        ok = [r for r in records if r.status == "ok"]
        write_line_chart(
            args.svg,
            [r.value for r in ok],
            {
                "b_u*": [r.b_u_star for r in ok],
                "b_l*": [r.b_l_star for r in ok],
                "b*": [r.b_star for r in ok],
            },
            title=f"optimal barriers vs {args.param}",
            xlabel=args.param,
            ylabel="barrier level",
        )
    return 0


def cmd_simulate(args) -> int:
    model, tp = _load(args.model)
    s = Strategy(args.bu, args.bl, args.kappa)
    cfg = SimConfig(paths=args.paths, seed=args.seed, dt=args.dt,
                    horizon_T=args.horizon, bridge_correction=not args.no_bridge)
    manifest = Manifest(
        "simulate", args.model,
        {"bu": args.bu, "bl": args.bl, "kappa": args.kappa, "x0": args.x0,
         "paths": args.paths, "seed": args.seed, "dt": args.dt,
         "horizon": args.horizon, "bridge": not args.no_bridge,
         "antithetic": args.antithetic},
    )
    run = simulate_value_antithetic if args.antithetic else simulate_value
    est = run(model, tp, s, args.x0, cfg)
    doc = {
        "mean": est.mean,
        "std_error": est.std_error,
        "ruin_fraction": est.paths_ruined_fraction,
        "truncation_bound": est.truncation_bound,
    }
    _emit_json(manifest, doc, args.out)
    return 0


def cmd_verify(args) -> int:
    model, tp = _load(args.model)
    ctx = ScaleContext(model, tp)
    solved = None
    if args.bu is None and args.bl is None:
        solved = solve_optimal(ctx, args.kappa)
        s = solved.strategy
    elif args.bu is None or args.bl is None:
        raise ConfigError("--bu and --bl must be given together")
    else:
        s = Strategy(args.bu, args.bl, args.kappa)

    checks: List[Tuple[str, bool, str]] = []

    def add(name: str, ok: bool, detail: str) -> None:
        checks.append((name, bool(ok), detail))

    gap = smoothness_gap(ctx, s)
    add("smoothness_gap", abs(gap) <= args.gap_tol, f"|gap| = {abs(gap):.3e}")

    sv = StrategyValuation(ctx, s)
    v0 = float(sv.value(0.0))
    add("value_at_zero", abs(v0) <= 1e-9, f"|V(0)| = {abs(v0):.3e}")

    xs = np.linspace(0.0, 3.0 * s.b_u, 200)
    vals = sv.value(xs)
    add("value_nonnegative", float(vals.min()) >= -1e-9,
        f"min V = {float(vals.min()):.3e}")
    dvals = sv.derivative_vec(xs[1:])
    add("value_nondecreasing", float(dvals.min()) >= -1e-9,
        f"min V' = {float(dvals.min()):.3e}")
    upper = xs[xs >= s.b_u]
    dup = sv.derivative_vec(upper)
    add("derivative_below_one_above_bu", float(dup.max()) < 1.0 + 1e-9,
        f"max V' above b_u = {float(dup.max()):.6f}")

    interior = [x for x in xs if 0 < x < s.b_u and abs(x - s.b_u) > 1e-6]
    gen = max(abs(generator_residual(ctx, s, float(x))) for x in interior)
    add("generator_residual", gen <= args.gen_tol, f"max |res| = {gen:.3e}")
    hjb_xs = [x for x in xs if x >= s.kappa]
    hjb = max(abs(hjb_residual(ctx, s, float(x))) for x in hjb_xs)
    add("hjb_residual", hjb <= args.hjb_tol, f"max |res| = {hjb:.3e}")

    if solved is not None:
        diag = solved.diagnostics
        add("gamma_root_residual", abs(diag.gamma_residual) <= 1e-10,
            f"|Gamma| = {abs(diag.gamma_residual):.3e}")
        if not solved.liquidation:
            add("marginal_value_residual", abs(diag.vprime_residual) <= 1e-8,
                f"|V'(b_l*) - 1| = {abs(diag.vprime_residual):.3e}")
        ordered = (
            -1e-12 <= solved.b_l_star
            and solved.b_l_star <= solved.b_star + 1e-9
            and solved.b_star <= solved.b_u_star + 1e-9
        )
        add("barrier_ordering", ordered,
            f"b_l*={solved.b_l_star:.6f} b*={solved.b_star:.6f} "
            f"b_u*={solved.b_u_star:.6f}")

    width = max(len(n) for n, _, _ in checks)
    for name, ok, detail in checks:
        sys.stdout.write(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}\n")
    failing = [name for name, ok, _ in checks if not ok]
    if failing:
        sys.stdout.write(f"verification failed: {failing[0]}\n")
        return 4
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="peridiv", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    def add_model(sp):
        sp.add_argument("model", help="model specification file")

    sp = sub.add_parser("scale", help="tabulate scale functions as CSV")
    add_model(sp)
    sp.add_argument("--x-grid", default="0:10:101")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_scale)

    sp = sub.add_parser("value", help="value a (b_u, b_l) strategy on a grid")
    add_model(sp)
    sp.add_argument("--bu", type=float, required=True)
    sp.add_argument("--bl", type=float, required=True)
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--x-grid", default="0:3:151")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_value)

    sp = sub.add_parser("optimize", help="solve the optimal barrier pair")
    add_model(sp)
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("sweep", help="parameter sweep of the optimal barriers")
    add_model(sp)
    sp.add_argument("--param", choices=("kappa", "gamma", "delta"), required=True)
    sp.add_argument("--from", dest="from_", type=float, required=True)
    sp.add_argument("--to", type=float, required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--kappa", type=float, default=0.06,
                    help="fixed cost for gamma/delta sweeps")
    sp.add_argument("--out")
    sp.add_argument("--svg", help="optional SVG line chart of the barriers")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="Monte-Carlo estimate of a strategy value")
    add_model(sp)
    sp.add_argument("--bu", type=float, required=True)
    sp.add_argument("--bl", type=float, required=True)
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--x0", type=float, required=True)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=20260810)
    sp.add_argument("--dt", type=float, default=0.1)
    sp.add_argument("--horizon", type=float, default=4000.0)
    sp.add_argument("--no-bridge", action="store_true")
    sp.add_argument("--antithetic", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="run the numerical verification battery")
    add_model(sp)
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--bu", type=float, help="override: verify this b_u")
    sp.add_argument("--bl", type=float, help="override: verify this b_l")
    sp.add_argument("--gap-tol", type=float, default=1e-8)
    sp.add_argument("--gen-tol", type=float, default=1e-6)
    sp.add_argument("--hjb-tol", type=float, default=1e-5)
    sp.set_defaults(func=cmd_verify)

    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except _SOLVER_ERRORS as exc:
        sys.stderr.write(f"solver error: {exc}\n")
        return 3
    except PeridivError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
