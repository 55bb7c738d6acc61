"""Command-line runner: ``levelshape <command> --config run.json [--out DIR]``.

Exit codes: 0 ok, 2 configuration error, 3 solver or tracing error, 4 a verification check failed.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import kernels
from .adjoint import (bspline_basis, check_optimality, conjecture_diagnostic, desired_state_comparison,
                      sign_flags, solve_adjoint)
from .config import ConfigError, RunConfig, load_config
from .curves import (PreconditionError, TraceError, check_admissibility, coarea_check, convergence_suite,
                     dirac_limit_check, hausdorff_distance, trace_level, write_curve)
from .grid import OutOfDomainError, ScalarField, write_field
from .nonsmooth import heaviside_eval
from .optimizer import DEFAULT_SCHEDULE, ControlProblem, initial_guess, optimize
from .state import EmptyShapeError, SolverError, StateProblem, compare_penalized_masked, solve_state

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4
COMMANDS = ("solve-state", "solve-adjoint", "optimize", "trace", "verify", "sweep-eps")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LEVELSHAPE_THREADS", "1")))
    except ValueError:
        return 1


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, obj):
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _num(v) -> str:
    return repr(float(v))


def _state_problem(cfg: RunConfig, g: ScalarField, f: ScalarField, eps=None):
    pen = cfg.section("penalty")
    return StateProblem(cfg.grid, f, g, cfg.beta, eps=eps if eps is not None else pen.get("eps", 1e-2),
                        mode=pen.get("mode", "penalized"), include_eg=pen.get("include_eg", True),
                        tol=pen.get("tol", 1e-10))


def cmd_solve_state(cfg: RunConfig, out: Path):
    f = cfg.field("f", 0.0)
    g = cfg.field("g", -1.0)
    sol = solve_state(_state_problem(cfg, g, f))
    write_field(out / "y.field", sol.y)
    result = sol.report()
    wall = result.pop("wall_time")
    if cfg.has("exact"):
        exact = cfg.field("exact")
        result["max_error"] = float(np.max(np.abs(sol.y.values - exact.values)))
    return {"result": result, "files": ["y.field"]}, {"solve_state": wall}, EXIT_OK


def cmd_solve_adjoint(cfg: RunConfig, out: Path):
    f = cfg.field("f", 0.0)
    g = cfg.field("g", -1.0)
    y_d = cfg.field("y_d", 0.0, f)
    sp = _state_problem(cfg, g, f)
    sol = solve_state(sp)
    pen = cfg.section("penalty")
    mode = "masked" if sp.mode == "masked" else "penalized"
    adj = solve_adjoint(sol.y, g, y_d, cfg.beta, sp.eps, cfg.obs, pen.get("zeta_rule", "plus"), mode)
    write_field(out / "y.field", sol.y)
    write_field(out / "p.field", adj.p)
    state = sol.report()
    wall = state.pop("wall_time")
    w = cfg.grid.weights()
    result = {"state": state, "adjoint_residual": adj.residual_norm, "zeta_rule": adj.rule,
              "adjoint_penalty_energy": float(np.sum(w * heaviside_eval(sp.eps, g.values) * adj.p.values**2))
              if mode == "penalized" else 0.0}
    return {"result": result, "files": ["y.field", "p.field"]}, {"solve_state": wall}, EXIT_OK


def _control_problem(cfg: RunConfig):
    f = cfg.field("f", 0.0)
    y_d = cfg.field("y_d", 0.0, f)
    pen = cfg.section("penalty")
    opt = cfg.section("optimizer")
    anchor = cfg.raw.get("anchor")
    g_sh = None
    if isinstance(anchor, dict):
        g_sh = cfg.resolve(anchor if "file" in anchor else anchor["expr"], "anchor")
    return ControlProblem(
        cfg.grid, f, y_d, cfg.beta, cfg.obs, alpha=pen.get("alpha", 0.0), g_sh=g_sh,
        anchor_weight=1.0 if g_sh is not None else 0.0,
        eps_schedule=tuple(pen.get("eps_schedule", DEFAULT_SCHEDULE)), step0=opt.get("step0", 1.0),
        armijo_c=opt.get("armijo_c", 1e-4), max_iter=opt.get("max_iter", 200), tol=opt.get("tol", 1e-6),
        max_backtrack=opt.get("max_backtrack", 30), max_move=opt.get("max_move", 1.0),
        zeta_rule=pen.get("zeta_rule", "plus"), include_eg=pen.get("include_eg", True))


def cmd_optimize(cfg: RunConfig, out: Path):
    pb = _control_problem(cfg)
    opt = cfg.section("optimizer")
    if "g0" in opt:
        g0 = cfg.resolve(opt["g0"], "optimizer.g0")
    else:
        init = opt.get("init", {})
        g0 = initial_guess(pb.grid, pb.obs, init.get("radius"), init.get("center"), init.get("amplitude", 1.0))
    t0 = time.perf_counter()
    res = optimize(pb, g0)
    t_opt = time.perf_counter() - t0
    write_field(out / "g_opt.field", res.g_opt)
    write_field(out / "y_opt.field", res.y_opt)
    write_field(out / "p_opt.field", res.p_opt)
    with open(out / "iterations.csv", "w") as fh:
        fh.write("stage,iter,eps,objective,vi_residual,step\n")
        for r in res.log:
            fh.write(f"{r['stage']},{r['iter']},{_num(r['eps'])},{_num(r['objective'])},"
                     f"{_num(r['vi_residual'])},{_num(r['step'])}\n")
    basis, _ = bspline_basis(pb.grid, pb.obs, cfg.section("verify").get("basis_per_axis", 8))
    report = check_optimality(res.y_opt, res.p_opt, res.g_opt, pb.g_sh, res.eps_used, pb.alpha, pb.obs, basis,
                              pb.metric, pb.beta, pb.y_d, anchor_weight=pb.anchor_weight)
    write_json(out / "optimality.json", report.to_dict())
    files = ["g_opt.field", "y_opt.field", "p_opt.field", "iterations.csv", "optimality.json"]
    result = {"status": res.status, "iterations": res.iterations, "vi_residual": res.vi_residual,
              "eps_used": res.eps_used, "stages": res.stages, "objective_history": res.objective_history,
              "accepted_steps": res.iterations}
    try:
        fam = trace_level(res.g_opt, 0.0, pb.obs)
        for cv in fam:
            name = f"curves/boundary_{cv.component_id}.csv"
            write_curve(out / name, cv)
            files += [name, name[:-4] + ".json"]
        result["boundary_components"] = len(fam)
        result["boundary_periods"] = fam.periods
        if cfg.has("target_shape"):
            target = trace_level(cfg.field("target_shape"), 0.0, pb.obs)
            result["hausdorff_to_target"] = hausdorff_distance(fam, target)
            result["two_h"] = 2.0 * pb.grid.h
    except (TraceError, PreconditionError, OutOfDomainError) as exc:
        result["boundary_error"] = str(exc)
    return {"result": result, "files": files}, {"optimize": t_opt}, EXIT_OK


def cmd_trace(cfg: RunConfig, out: Path):
    g = cfg.field("g")
    tr = cfg.section("trace")
    c = float(tr.get("level", 0.0))
    kw = {"step_fraction": tr["step_fraction"]} if "step_fraction" in tr else {}
    manifest = {"level": c, "curves": []}
    if c > g.values.max() or c < g.values.min():
        print(f"warning: level {c:g} is outside the range of g; no curves", file=sys.stderr)
    else:
        for cv in trace_level(g, c, cfg.obs, **kw):
            name = f"curves/curve_{cv.component_id}.csv"
            write_curve(out / name, cv)
            manifest["curves"].append({"file": name, "sidecar": name[:-4] + ".json", **cv.sidecar()})
    write_json(out / "manifest.json", manifest)
    return {"result": {"components": len(manifest["curves"])}, "files": ["manifest.json"]}, {}, EXIT_OK


def _phis(cfg):
    srcs = cfg.section("verify").get("phi", ["1"])
    return srcs, [cfg.expr(s, "verify.phi") for s in srcs]


def cmd_verify(cfg: RunConfig, out: Path):
    v = cfg.section("verify")
    checks = v.get("checks", ["admissibility"])
    g = cfg.field("g")
    obs = cfg.obs
    eps_list = v.get("eps_list", [0.1, 0.05, 0.025, 0.0125])
    z = v.get("z", 0.5)
    kw = {"step_fraction": v["step_fraction"]} if "step_fraction" in v else {}
    srcs, phis = _phis(cfg)
    families = v.get("families", [v.get("kappa", "x1")])
    suites = {}

    def suite(src):
        if src not in suites:
            kap = ScalarField.from_function(g.grid, cfg.expr(src, "verify.families"))
            suites[src] = convergence_suite(lambda e: g.with_values(g.values + e * kap.values), g, eps_list, z,
                                            obs, **kw)
        return suites[src]

    summary = {}
    for name in checks:
        table = {"check": name, "asserted": name != "conjecture"}
        if name == "admissibility":
            cert = check_admissibility(g, obs)
            table.update(cert.to_dict())
            ok = cert.admissible
        elif name == "coarea":
            tol = v.get("coarea_tol", 1e-3)
            rows = []
            for eps in ([v["eps"]] if "eps" in v else eps_list):
                for src, phi in zip(srcs, phis):
                    rows.append({"phi": src, **coarea_check(g, eps, phi, obs, **kw)})
            table.update(rows=rows, tolerance=tol)
            ok = all(r["gap"] < tol for r in rows)
        elif name == "dirac":
            kap = ScalarField.from_function(g.grid, cfg.expr(v.get("kappa", "x1"), "verify.kappa"))
            per = []
            for src, phi in zip(srcs, phis):
                rep = dirac_limit_check(lambda e: g.with_values(g.values + e * kap.values), g, phi, eps_list, obs,
                                        **kw)
                per.append({"phi": src, **rep})
            table.update(kappa=v.get("kappa", "x1"), results=per)
            ok = all(r["nonincreasing"] for r in per)
        elif name in ("tubes", "periods", "hausdorff"):
            key = {"tubes": None, "periods": "period_decreasing", "hausdorff": "hausdorff_decreasing"}[name]
            per = [{"family": src, **suite(src)} for src in families]
            table.update(z=z, results=per)
            if key is None:
                ok = all(r["tube_ok"] and r["counts_match"] for r in per)
            else:
                ok = all(r[key] for r in per)
        elif name == "signs":
            case = v.get("case")
            if case is None:
                raise ConfigError("verify.case (f01 or f00) is required for the signs check")
            f = cfg.field("f", 0.0)
            y_d = cfg.field("y_d", 0.0, f)
            eps = v.get("eps", cfg.section("penalty").get("eps", 1e-2))
            include_eg = cfg.section("penalty").get("include_eg", True)
            comp = desired_state_comparison(y_d, f, cfg.beta, g, eps, obs, include_eg)
            adj = solve_adjoint(comp["y"], g, y_d, cfg.beta, eps, obs)
            flags = sign_flags(comp["y"], adj.p, g, y_d, obs, case, y_ref=comp["ydeps"])
            table.update(case=case, eps=eps, data_flags=comp["flags"], flags=flags, max_diff=comp["max_diff"])
            ok = flags["state_ge_yd"] == "holds" and flags["adjoint_sign"] == "holds"
        elif name == "conjecture":
            f = cfg.field("f", 0.0)
            y_d = cfg.field("y_d", 0.0, f)
            rows = []
            for eps in eps_list:
                y = solve_state(_state_problem(cfg, g, f, eps)).y
                p = solve_adjoint(y, g, y_d, cfg.beta, eps, obs).p
                rows.append({"eps": eps, "phi": srcs[0], **conjecture_diagnostic(y, p, g, eps, phis[0], obs, **kw)})
            table.update(rows=rows)
            ok = True
        table["passed"] = bool(ok)
        write_json(out / f"check_{name}.json", table)
        summary[name] = bool(ok)
    code = EXIT_OK if all(summary.values()) else EXIT_CHECK
    return {"result": {"checks": summary}, "files": [f"check_{n}.json" for n in checks]}, {}, code


def cmd_sweep_eps(cfg: RunConfig, out: Path):
    f = cfg.field("f", 0.0)
    g = cfg.field("g")
    y_d = cfg.field("y_d", 0.0, f)
    pen = cfg.section("penalty")
    eps_list = pen.get("eps_schedule", cfg.section("verify").get("eps_list", DEFAULT_SCHEDULE))
    include_eg = pen.get("include_eg", True)
    w = cfg.grid.weights()
    rows = compare_penalized_masked(g, f, cfg.beta, eps_list, include_eg)
    by_eps = {r["eps"]: r for r in rows}

    def adjoint_row(eps):
        y = solve_state(StateProblem(cfg.grid, f, g, cfg.beta, eps=eps, include_eg=include_eg)).y
        p = solve_adjoint(y, g, y_d, cfg.beta, eps, cfg.obs, pen.get("zeta_rule", "plus")).p
        H = heaviside_eval(eps, g.values)
        return {"adjoint_penalty_energy": float(np.sum(w * H * p.values**2)),
                "adjoint_exterior_mass": float(np.sum(w * (g.values > 0) * p.values**2))}

    order = sorted((float(e) for e in eps_list), reverse=True)
    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        extra = list(ex.map(adjoint_row, order))
    table = [{**by_eps[e], **x} for e, x in zip(order, extra)]
    cols = ["eps", "l2_error_inside", "exterior_mass", "penalty_energy", "adjoint_penalty_energy",
            "adjoint_exterior_mass", "iterations"]
    with open(out / "sweep.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in table:
            fh.write(",".join(str(r[c]) if c == "iterations" else _num(r[c]) for c in cols) + "\n")
    return {"result": {"rows": table}, "files": ["sweep.csv"]}, {}, EXIT_OK


HANDLERS = {
    "solve-state": cmd_solve_state,
    "solve-adjoint": cmd_solve_adjoint,
    "optimize": cmd_optimize,
    "trace": cmd_trace,
    "verify": cmd_verify,
    "sweep-eps": cmd_sweep_eps,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="levelshape", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (default: output.dir of the config, else runs/<command>)")
    return ap


def run(command, config_path, out=None):
    """Run one command; returns the exit code."""
    t0 = time.perf_counter()
    try:
        cfg = load_config(config_path)
        if out is not None:
            outdir = Path(out)
        elif "dir" in cfg.section("output"):
            outdir = cfg.path(cfg.section("output")["dir"])
        else:
            outdir = Path("runs") / command
        outdir.mkdir(parents=True, exist_ok=True)
        body, timings, code = HANDLERS[command](cfg, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, EmptyShapeError, TraceError, PreconditionError, OutOfDomainError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    report = {"command": command, "config": cfg.echo(), "exit_code": code, **body}
    write_json(outdir / "report.json", report)
    timings["total"] = time.perf_counter() - t0
    write_json(outdir / "metadata.json", {"wall_time": timings, "backend": kernels.BACKEND,
                                          "timestamp": datetime.now(timezone.utc).isoformat(),
                                          "threads": _threads()})
    if code == EXIT_CHECK:
        failed = [k for k, ok in body["result"]["checks"].items() if not ok]
        print(f"check failure: {', '.join(failed)}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
