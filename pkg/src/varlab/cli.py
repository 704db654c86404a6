"""varlab command line: validated JSON config in, run directory of CSV/JSON artifacts out."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bifurcation as bif
from . import config as C
from . import dsl, fem, hypotheses as hyp, minhunt, parallel
from . import fixedpoint as fp
from .runs import RunDir, jsonable, read_csv, read_vector
from .varprinciple import thresholds

EXIT_OK, EXIT_CONFIG, EXIT_PARSE, EXIT_NONCONVERGED = 0, 2, 3, 4
PHI_COLUMNS = ["rho", "phi_hat", "m_hat", "psi_at_cert", "phi_value_at_cert", "restarts", "flag"]
HUNT_COLUMNS = ["level_index", "rho", "psi", "phi", "energy", "grad_norm", "residual",
                "accepted", "reject_reason"]
BRANCH_COLUMNS = ["lambda", "c1proxy", "ratio", "energy", "residual", "min_value", "iters", "flag"]
CERT_RTOL = 1e-8


class ExprError(Exception):
    """An expression in the config does not parse; maps to exit code 3."""


# -- expression pre-flight ----------------------------------------------------------


def _expressions(cfg):
    """(field path, source, variables) for every expression string in the config."""
    out = []

    def add(path, src, variables=dsl.DEFAULT_VARIABLES):
        if isinstance(src, str):
            out.append((path, src, variables))

    def seqs(prefix, s):
        add(prefix + ".a", s.a, ("k",))
        add(prefix + ".b", s.b, ("k",))

    prob = getattr(cfg, "problem", None)
    if prob is not None:
        for key in ("f", "g", "alpha", "beta", "lambda_coef", "eta"):
            add(f"problem.{key}", getattr(prob, key, None))
    for key in ("f", "g", "alpha", "beta"):
        add(key, getattr(cfg, key, None))
    if isinstance(cfg, C.CheckConfig):
        if cfg.thm7 is not None:
            add("thm7.g", cfg.thm7.g)
        if cfg.g_side is not None:
            add("g_side.g", cfg.g_side.g)
        if cfg.osc is not None:
            seqs("osc.sequences", cfg.osc.sequences)
    if isinstance(cfg, C.Problem3Config):
        seqs("sequences", cfg.sequences)
    return out


def preflight(cfg):
    for path, src, variables in _expressions(cfg):
        try:
            dsl.parse(src, variables=variables)
        except dsl.ParseError as err:
            raise ExprError(f"{path}: {err}") from None


# -- point storage --------------------------------------------------------------------


def save_point(run, name, pair, x):
    if pair.model is not None:
        return run.write_fn(name, pair.fn(x))
    return run.write_vector(name, x)


def load_point(path, pair):
    if pair.model is not None:
        return fem.DiscreteFn.from_csv(path, pair.model.space.bc).coeffs
    return read_vector(path)


def _close(a, b, rtol=CERT_RTOL):
    return bool(abs(a - b) <= rtol * (1.0 + abs(b)))


# -- commands -------------------------------------------------------------------------


def _phi_rows(run, pair, rep, prefix="cert"):
    rows = []
    for i, pt in enumerate(rep.points):
        save_point(run, f"{prefix}_{i:03d}_x.csv", pair, pt.certificate_x)
        save_point(run, f"{prefix}_{i:03d}_infx.csv", pair, pt.certificate_infx)
        rows.append([pt.rho, pt.phi_hat, pt.m_hat, pair.psi(pt.certificate_x),
                     pair.phi(pt.certificate_infx), pt.restarts, pt.flag])
    run.write_csv("phi_curve.csv", PHI_COLUMNS, rows)
    return rows


def cmd_phi_curve(cfg, run, figures=False):
    pair = C.build_pair(cfg.problem)
    grid = C.grid_values(cfg.grid)
    rep = thresholds(pair, grid, cfg.window, cfg.budget, cfg.seed)
    _phi_rows(run, pair, rep)
    run.write_json("thresholds.json", rep.as_json())
    if figures:
        from . import plotting

        plotting.phi_curve(run, rep.grid, rep.phi_hat)
    bad = [pt.rho for pt in rep.points if pt.flag != "ok"]
    report = {"command": cfg.command, "thresholds": rep.as_json(),
              "phi_hat": [pt.phi_hat for pt in rep.points], "nonconverged_rho": bad}
    print(f"phi-curve: {len(rep.points)} levels, min phi_hat {rep.lambda_star_hat:.6g}")
    return report, EXIT_NONCONVERGED if bad else EXIT_OK


def _run_hunt(cfg, run, figures):
    pair = C.build_pair(cfg.problem)
    levels = cfg.ladder.rhos()
    hunt = minhunt.hunt_increasing if cfg.ladder.mode == "increasing" else minhunt.hunt_decreasing
    rep = hunt(pair, cfg.mu, levels, cfg.budget, cfg.seed, cfg.stagnation, cfg.gtol, cfg.res_tol)
    run.write_csv("hunt.csv", HUNT_COLUMNS, rep.rows)
    minima = []
    for j, m in enumerate(rep.accepted):
        save_point(run, f"min_{j:03d}.csv", pair, m.point)
        minima.append({"file": f"min_{j:03d}.csv", "rho": m.rho, "psi": m.psi, "energy": m.energy,
                       "grad_norm": m.grad_norm, "residual": m.residual,
                       "recertified": minhunt.recertify(pair, m, cfg.gtol, cfg.res_tol)})
    if figures:
        from . import plotting

        plotting.hunt(run, rep.rows)
    out = rep.as_json()
    out["minima"] = minima
    # a ladder on which not a single candidate converged is a solver failure
    failed = bool(rep.rows) and all(r["reject_reason"] == "not-converged" for r in rep.rows)
    print(f"hunt: {len(rep.accepted)} accepted over {len(rep.levels)} levels ({rep.stopped})")
    return out, failed


def cmd_hunt(cfg, run, figures=False):
    out, failed = _run_hunt(cfg, run, figures)
    return {"command": cfg.command, "hunt": out}, EXIT_NONCONVERGED if failed else EXIT_OK


def cmd_bifurcate(cfg, run, figures=False):
    model = bif.BranchModel(cfg.alpha, cfg.s, cfg.beta, cfg.q, cfg.f, cfg.g, cfg.N)
    branch = bif.continue_branch(model, C.grid_values(cfg.lambda_grid), cfg.budget)
    rows = []
    for i, pt in enumerate(branch.points):
        rows.append([pt.lam, pt.c1proxy, pt.ratio, pt.energy, pt.residual, pt.min_value,
                     pt.iters, pt.flag])
        run.write_fn(f"u_{i:03d}.csv", pt.u)
    run.write_csv("branch.csv", BRANCH_COLUMNS, rows)
    if figures:
        from . import plotting

        good = branch.converged
        plotting.branch(run, [p.lam for p in good], [p.c1proxy for p in good],
                        [p.ratio for p in good])
    report = {"command": cfg.command, "branch": branch.as_json(),
              "evidence": bif.bifurcation_evidence(branch)["evidence"]}
    print(f"bifurcate: {len(branch.converged)}/{len(branch.points)} converged, flag {branch.flag}")
    return report, EXIT_OK if branch.converged else EXIT_NONCONVERGED


def cmd_fixed_point(cfg, run, figures=False):
    spec = cfg.potential.build()
    report = {"command": cfg.command, "potential": spec.name}
    code = EXIT_OK
    if cfg.rho is not None:
        rep = fp.find_fixed_point(spec, cfg.rho, cfg.budget, cfg.seed)
        run.write_json("fixed_point.json", rep.as_json())
        report["fixed_point"] = rep.as_json()
        if rep.flag == "descent-failed":
            code = EXIT_NONCONVERGED
        where = "none" if rep.point is None else np.array2string(rep.point, precision=10)
        print(f"fixed-point: phi_hat {rep.phi_hat:.6g}, point {where}")
    if cfg.radii is not None:
        scan = fp.thm5_scan(spec, C.grid_values(cfg.radii), cfg.budget, cfg.seed)
        run.write_csv("fp_scan.csv", ["r", "sup_estimate", "ratio"],
                      zip(scan.radii, scan.sup_estimate, scan.ratio))
        report["scan"] = scan.as_json()
        if figures:
            from . import plotting

            plotting.fp_scan(run, scan.radii, scan.ratio)
        print(f"fixed-point scan: straddles={scan.straddles}")
    return report, code


def check_map(cfg) -> dict:
    """Verdicts keyed by condition identifier."""
    out = {}
    if cfg.growth is not None:
        out["thmA.1"] = hyp.check_growth(cfg.f, cfg.growth.a, cfg.growth.q, cfg.growth.n)
    if cfg.ar is not None:
        out["thmA.2"] = hyp.check_ar(cfg.f, cfg.ar.c, cfg.ar.r)
    if cfg.limit_zero:
        out["thmA.3"] = hyp.check_limit_zero(cfg.f)
    if cfg.thm7 is not None:
        t = cfg.thm7
        out.update(hyp.check_thm7(cfg.f, t.g, t.s, t.q, tuple(t.D),
                                  None if t.B is None else tuple(t.B)))
    if cfg.osc is not None:
        s = cfg.osc.sequences
        tag = "thm8" if s.mode == hyp.TO_INF else "thm9"
        out[f"{tag}.osc"] = hyp.check_osc(cfg.f, hyp.SequencePair(s.a, s.b, s.mode),
                                          cfg.osc.p, cfg.osc.K)
    if cfg.g_side is not None:
        tag = "thm8" if cfg.g_side.mode == hyp.TO_INF else "thm9"
        out[f"{tag}.g"] = hyp.check_g_side(cfg.g_side.g, cfg.g_side.p, cfg.g_side.mode)
    return out


def cmd_check(cfg, run, figures=False):
    verdicts = check_map(cfg)
    vmap = {k: v.as_json() for k, v in verdicts.items()}
    if cfg.suggest is not None:
        sp = hyp.suggest_sequences(cfg.f, cfg.suggest.p, cfg.suggest.mode, cfg.suggest.horizon)
        vmap["suggest"] = sp.as_json()
    run.write_json("verdicts.json", vmap)
    print(json.dumps({k: v["status"] for k, v in vmap.items() if "status" in v}, sort_keys=True))
    return {"command": cfg.command, "verdicts": {k: v.label for k, v in verdicts.items()}}, EXIT_OK


def _endpoint(pair, ep, label):
    if ep.point is not None:
        x = np.array(ep.point, dtype=float)
        if x.size != pair.dim:
            raise C.ConfigError(f"{label}.point: expected {pair.dim} coordinates, got {x.size}")
        return x
    if pair.model is None:
        raise C.ConfigError(f"{label}.sine: only available for finite element problems")
    space = pair.model.space
    t = (space.mesh.nodes - space.mesh.a) / (space.mesh.b - space.mesh.a)
    return space.restrict(ep.sine * np.sin(np.pi * t))


def cmd_mountain_pass(cfg, run, figures=False):
    pair = C.build_pair(cfg.problem)
    a = _endpoint(pair, cfg.end_a, "end_a")
    b = _endpoint(pair, cfg.end_b, "end_b")
    res = minhunt.mountain_pass(pair, cfg.mu, a, b, cfg.K, cfg.iterations, tol=cfg.tol,
                                method=cfg.method)
    run.write_csv("mountain_pass.csv", ["index", "energy"], enumerate(res.profile))
    if res.point is not None:
        save_point(run, "saddle.csv", pair, res.point)
    if figures:
        from . import plotting

        plotting.profile(run, res.profile)
    out = {"status": res.status, "energy": res.energy, "grad_norm": res.grad_norm,
           "residual": res.residual, "iterations": res.iterations,
           "endpoint_energy": [pair.energy(a, cfg.mu), pair.energy(b, cfg.mu)],
           "endpoint_grad_norm": [float(np.max(np.abs(pair.energy_grad(x, cfg.mu))))
                                  for x in (a, b)]}
    print(f"mountain-pass: {res.status}, energy {res.energy:.6g}")
    code = EXIT_NONCONVERGED if res.status == "nonconverged" else EXIT_OK
    return {"command": cfg.command, "mountain_pass": out}, code


def cmd_problem1(cfg, run, figures=False):
    grid = C.grid_values(cfg.grid)
    checks = {"thmA.1": hyp.check_growth(cfg.f, cfg.growth.a, cfg.growth.q, cfg.growth.n),
              "thmA.2": hyp.check_ar(cfg.f, cfg.ar.c, cfg.ar.r)}
    report = {"command": cfg.command, "hypotheses": {k: v.label for k, v in checks.items()},
              "label": "upper-bound evidence only: phi_hat over-estimates an infimum"}
    if any(v.status == hyp.FAILS for v in checks.values()):
        report["answer"] = "not-applicable"
        print("problem1: not-applicable (hypothesis check failed)")
        return report, EXIT_OK
    model = fem.EnergyModel.dirichlet(cfg.f, p=cfg.p, n_elements=cfg.N)
    from .pairs import fem_pair

    pair = fem_pair(model, name="dirichlet")
    rep = thresholds(pair, grid, cfg.window, cfg.budget, cfg.seed)
    _phi_rows(run, pair, rep)
    i = int(np.argmin(rep.phi_hat))
    best = rep.points[i]
    q, m = best.recompute(pair)
    below = best.phi_hat < 0.5 - fp.HALF_MARGIN
    report.update({
        "answer": "evidence-below-half" if below else "no-evidence",
        "min_phi_hat": best.phi_hat,
        "argmin_rho": best.rho,
        "certificate": {"x": f"cert_{i:03d}_x.csv", "infx": f"cert_{i:03d}_infx.csv",
                        "m_hat": best.m_hat, "recomputed_quotient": q,
                        "recomputed_m": m, "flag": best.flag},
        "thresholds": rep.as_json(),
    })
    if figures:
        from . import plotting

        plotting.phi_curve(run, rep.grid, rep.phi_hat)
    print(f"problem1: {report['answer']} (min phi_hat {best.phi_hat:.6g} at rho {best.rho:.6g})")
    bad = any(pt.flag != "ok" for pt in rep.points)
    return report, EXIT_NONCONVERGED if bad else EXIT_OK


def cmd_problem3(cfg, run, figures=False):
    s = cfg.sequences
    seqs = hyp.SequencePair(s.a, s.b, s.mode)
    cond = hyp.check_osc(cfg.f, seqs, cfg.p, cfg.K, drop_ratio=True)
    ks, a, b = seqs.values(cfg.K)
    run.write_json("conditions.json", cond.as_json())
    out, failed = _run_hunt(cfg, run, figures)
    report = {
        "command": cfg.command,
        "label": "exploratory: ratio condition dropped, hunt run regardless",
        "conditions": cond.as_json(),
        "ratio_a_over_b": [float(v) for v in a / b],
        "hunt": out,
    }
    return report, EXIT_NONCONVERGED if failed else EXIT_OK


COMMANDS = {
    "phi-curve": cmd_phi_curve,
    "hunt": cmd_hunt,
    "bifurcate": cmd_bifurcate,
    "fixed-point": cmd_fixed_point,
    "check": cmd_check,
    "mountain-pass": cmd_mountain_pass,
    "problem1": cmd_problem1,
    "problem3": cmd_problem3,
}


# -- verify ---------------------------------------------------------------------------


def _verify_phi(cfg, pair, d):
    issues = []
    for i, row in enumerate(read_csv(d / "phi_curve.csv")):
        rho = float(row["rho"])
        x = load_point(d / f"cert_{i:03d}_x.csv", pair)
        xi = load_point(d / f"cert_{i:03d}_infx.csv", pair)
        m_hat = float(row["m_hat"])
        q = (pair.phi(x) - m_hat) / (rho - pair.psi(x))
        if not _close(q, float(row["phi_hat"])):
            issues.append(f"phi_curve row {i}: quotient {q!r} != {row['phi_hat']}")
        if not _close(pair.phi(xi), m_hat):
            issues.append(f"phi_curve row {i}: Phi at infimum point != m_hat")
        if not pair.psi(x) < rho or not pair.psi(xi) <= rho * (1 + 1e-12):
            issues.append(f"phi_curve row {i}: certificate leaves the sublevel set")
    return issues


def _verify_hunt(cfg, pair, d):
    issues = []
    gtol = pair.gtol if cfg.gtol is None else cfg.gtol
    accepted = [r for r in read_csv(d / "hunt.csv") if r["accepted"] == "1"]
    for j, row in enumerate(accepted):
        x = load_point(d / f"min_{j:03d}.csv", pair)
        rho = float(row["rho"])
        if not _close(pair.psi(x), float(row["psi"])):
            issues.append(f"min {j}: Psi does not recompute")
        if not pair.psi(x) < rho:
            issues.append(f"min {j}: Psi not below its level")
        g = float(np.max(np.abs(pair.energy_grad(x, cfg.mu)))) if x.size else 0.0
        if g > gtol:
            issues.append(f"min {j}: gradient {g:.3g} above {gtol:.3g}")
        r = pair.residual(x, cfg.mu)
        if r is not None and r > cfg.res_tol:
            issues.append(f"min {j}: residual {r:.3g} above {cfg.res_tol:.3g}")
    psis = [float(r["psi"]) for r in accepted]
    sign = 1 if cfg.ladder.mode == "increasing" else -1
    if any(sign * (b - a) <= 0 for a, b in zip(psis, psis[1:])):
        issues.append("accepted Psi values are not strictly monotone")
    return issues


def _verify_branch(cfg, d):
    issues = []
    model = bif.BranchModel(cfg.alpha, cfg.s, cfg.beta, cfg.q, cfg.f, cfg.g, cfg.N)
    for i, row in enumerate(read_csv(d / "branch.csv")):
        if row["flag"] != "ok":
            continue
        u = fem.DiscreteFn.from_csv(d / f"u_{i:03d}.csv", fem.DIRICHLET)
        pt = bif.BranchPoint(float(row["lambda"]), u, 0, 0, 0, 0, 0, 0)
        rc = bif.recertify(model, pt)
        if rc["residual"] > bif.RES_TOL:
            issues.append(f"branch row {i}: residual {rc['residual']:.3g}")
        if rc["min_value"] < -bif.SIGN_TOL:
            issues.append(f"branch row {i}: negative nodal value")
        for key in ("c1proxy", "energy"):
            if not _close(rc[key], float(row[key])):
                issues.append(f"branch row {i}: {key} does not recompute")
    return issues


def _verify_fixed_point(cfg, d):
    issues = []
    path = d / "fixed_point.json"
    if path.exists():
        rep = json.loads(path.read_text())
        if rep["fixed_point"] is not None:
            spec = cfg.potential.build()
            if not fp.certify(spec, np.array(rep["fixed_point"]), cfg.rho):
                issues.append("fixed point fails |A(x) - x| <= 1e-6 inside the ball")
    return issues


def _verify_mountain_pass(cfg, pair, d):
    rep = json.loads((d / "report.json").read_text())["mountain_pass"]
    if rep["status"] != "success":
        return []
    x = load_point(d / "saddle.csv", pair)
    r = pair.residual(x, cfg.mu)
    cert = r if r is not None else float(np.max(np.abs(pair.energy_grad(x, cfg.mu))))
    tol = cfg.tol if cfg.tol is not None else (1e-4 if pair.model is not None else 1e-6)
    return [] if cert <= tol else [f"saddle certificate {cert:.3g} above {tol:.3g}"]


def _verify_check(cfg, d):
    stored = json.loads((d / "verdicts.json").read_text())
    fresh = {k: v for k, v in check_map(cfg).items()}
    issues = []
    for k, v in fresh.items():
        if stored.get(k, {}).get("status") != v.label:
            issues.append(f"{k}: verdict does not recompute")
        if v.status == hyp.FAILS and not v.replay():
            issues.append(f"{k}: witness does not replay")
    return issues


def verify(run_dir) -> list:
    d = Path(run_dir)
    try:
        data = json.loads((d / "config.json").read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise C.ConfigError(f"not a run directory: {err}") from None
    cfg = C.validate(data)
    if isinstance(cfg, (C.PhiCurveConfig, C.HuntConfig, C.MountainPassConfig, C.Problem3Config)):
        pair = C.build_pair(cfg.problem)
    if isinstance(cfg, C.PhiCurveConfig):
        return _verify_phi(cfg, pair, d)
    if isinstance(cfg, C.Problem1Config):
        if not (d / "phi_curve.csv").exists():
            return []
        from .pairs import fem_pair

        return _verify_phi(cfg, fem_pair(fem.EnergyModel.dirichlet(cfg.f, p=cfg.p, n_elements=cfg.N)), d)
    if isinstance(cfg, (C.HuntConfig, C.Problem3Config)):
        return _verify_hunt(cfg, pair, d)
    if isinstance(cfg, C.BifurcateConfig):
        return _verify_branch(cfg, d)
    if isinstance(cfg, C.FixedPointConfig):
        return _verify_fixed_point(cfg, d)
    if isinstance(cfg, C.MountainPassConfig):
        return _verify_mountain_pass(cfg, pair, d)
    return _verify_check(cfg, d)


# -- entry point ----------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="varlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="runs", help="base directory for run directories")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for restarts")
        p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p = sub.add_parser("verify", help="recompute certificates stored in a run directory")
    p.add_argument("run_dir")
    p.add_argument("--jobs", type=int, default=1)
    return ap


def _fail(code, msg):
    print(f"error: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    parallel.set_jobs(args.jobs)
    try:
        if args.command == "verify":
            issues = verify(args.run_dir)
            print(json.dumps({"ok": not issues, "issues": issues}, indent=2))
            return EXIT_OK if not issues else EXIT_NONCONVERGED
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise C.ConfigError("seed: must be an unsigned 64-bit integer")
        cfg = C.load(args.config, args.command, args.seed)
        preflight(cfg)
        t0 = time.perf_counter()
        run = RunDir(args.out, cfg)
        try:
            report, code = COMMANDS[args.command](cfg, run, args.figures)
            report["exit_code"] = code
            run.finish(jsonable(report), time.perf_counter() - t0)
        except BaseException:
            run.discard()
            raise
        print(f"run: {run.path}")
        return code
    except ExprError as err:
        return _fail(EXIT_PARSE, str(err))
    except dsl.ParseError as err:
        return _fail(EXIT_PARSE, str(err))
    except dsl.EvalDomainError as err:
        return _fail(EXIT_PARSE, f"expression cannot be evaluated: {err}")
    except C.ConfigError as err:
        return _fail(EXIT_CONFIG, str(err))
    except ValueError as err:
        # library precondition failures (empty or unordered grids, infeasible levels, ...)
        return _fail(EXIT_CONFIG, str(err))


if __name__ == "__main__":
    sys.exit(main())
