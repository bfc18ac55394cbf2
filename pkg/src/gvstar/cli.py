"""Command-line front end: scenario file in, JSON report and CSV out.

Exit codes: 0 all verdicts pass, 1 a verdict fails, 2 scenario or argument
error, 3 numerical-validity failure (non-SPD metric, non-unit T on the grid,
ODE drift, profile blow-up).
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .acm import build_acm, classify
from .chart import ChartBox, Grid
from .exprlang import ExprError, parse
from .forms import gv_star
from .geometry import GeometryError, frenet
from .ode import OdeError, blowup_quadrature, integrate_critical
from .report import csv_text, json_text, write_text_atomic
from .scenario import ScenarioError, bundled_names, dump_scenario, load_scenario, twisted_scenario
from .twisted import TwistedError, recover_profiles, verify_critical
from .variation import (
    KINDS,
    SUITES,
    analytic_first_variation,
    el_residuals,
    first_variation_fd,
    k2_scale,
    random_variation,
)

DEFAULT_GRID = 48
DEFAULT_TOL = {
    "frenet": 1e-8,
    "functional": 1e-2,
    "el-check": 1e-4,
    "vary": 2e-2,
    "ode": 1e-10,
    "twisted": 1e-3,
    "classify": 1e-5,
}
TWISTED_BOX = ChartBox(("x", "y", "s"), (-0.5, -0.5, -1.0), (0.5, 0.5, 1.0))
EXIT_PASS, EXIT_FAIL, EXIT_PARSE, EXIT_NUMERIC = 0, 1, 2, 3


class Outcome:
    """Report document plus an optional CSV body."""

    def __init__(self, command, scenario=None, grid=None, tolerances=None):
        self.doc = {"command": command}
        if scenario is not None:
            self.doc["scenario"] = {"name": scenario.name, "sha256": scenario.digest}
        if grid is not None:
            self.doc["grid"] = grid
        self.doc["tolerances"] = dict(tolerances or {})
        self.doc["results"] = {}
        self.doc["verdicts"] = {}
        self.csv = None

    @property
    def results(self):
        return self.doc["results"]

    def verdict(self, name, ok):
        self.doc["verdicts"][name] = bool(ok)

    @property
    def passed(self) -> bool:
        return all(self.doc["verdicts"].values())

    def finish(self):
        self.doc["pass"] = self.passed
        return self


def _scenario(args):
    sc = load_scenario(args.scenario, normalize_t=getattr(args, "normalize_t", False))
    sc.check_unit(1e-8)
    return sc


def _frame(sc, n):
    return frenet(sc.metric(), sc.reeb(), Grid.make(sc.box, n), k_cut=sc.k_cut, unit_tol=1e-8)


def _region_mask(sc, F):
    return F.grid.box_mask(sc.region)


def _kv_csv(results):
    rows = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k, v in obj.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(obj, (list, tuple)):
            for i, v in enumerate(obj):
                walk(f"{prefix}[{i}]", v)
        else:
            rows.append((prefix, "" if obj is None else obj))

    walk("", results)
    return csv_text(["key", "value"], rows)


# ---------------------------------------------------------------------------
# commands


def cmd_frenet(args):
    sc = _scenario(args)
    tol = args.tol if args.tol is not None else DEFAULT_TOL["frenet"]
    F = _frame(sc, args.grid)
    out = Outcome("frenet", sc, args.grid, {"orthonormality": tol, "k_cut": sc.k_cut})
    m = F.mask
    defects = {}
    if np.any(m):
        pairs = {"NN": (F.N, F.N, 1.0), "BB": (F.B, F.B, 1.0), "TN": (F.T, F.N, 0.0), "TB": (F.T, F.B, 0.0),
                 "NB": (F.N, F.B, 0.0)}
        for name, (a, b, want) in pairs.items():
            defects[name] = float(np.max(np.abs(F.inner(a, b)[m] - want)))
    worst = max(defects.values(), default=0.0)
    out.results.update({
        "coverage": F.coverage,
        "unit_defect_probes": sc.unit_defect(),
        "frame_defects": defects,
        "k_max": float(np.max(F.k)),
        "k_min_on_U": float(np.min(F.k[m])) if np.any(m) else None,
        "tau_sup": float(np.max(np.abs(F.tau[m]))) if np.any(m) else 0.0,
        "H_sup": float(np.max(np.abs(F.H[m]))) if np.any(m) else 0.0,
    })
    out.verdict("frame_orthonormal", worst <= tol)
    pts = F.grid.points().reshape(3, -1)
    cols = {
        sc.coords[0]: pts[0], sc.coords[1]: pts[1], sc.coords[2]: pts[2],
        "in_U": m.ravel().astype(int), "k": F.k.ravel(), "tau": F.tau.ravel(), "H": F.H.ravel(),
        "h_NN": F.h[0, 0].ravel(), "h_NB": F.h[0, 1].ravel(), "h_BN": F.h[1, 0].ravel(), "h_BB": F.h[1, 1].ravel(),
    }
    for name, V in (("T", F.T), ("N", F.N), ("B", F.B)):
        for i in range(3):
            cols[f"{name}{i + 1}"] = V[i].ravel()
    out.csv = csv_text(list(cols), zip(*cols.values()))
    return out


def cmd_functional(args):
    sc = _scenario(args)
    tol = args.tol if args.tol is not None else DEFAULT_TOL["functional"]
    F = _frame(sc, args.grid)
    A = build_acm(F)
    rep = gv_star(A, "both", region=_region_mask(sc, F))
    out = Outcome("functional", sc, args.grid, {"rel_gap": tol, "k_cut": sc.k_cut})
    out.results.update(rep.as_dict())
    out.results["k2_integral"] = k2_scale(F)
    out.verdict("methods_agree", rep.rel_gap is not None and rep.rel_gap <= tol)
    out.verdict("coverage_reliable", rep.reliable)
    pts = F.grid.points().reshape(3, -1)
    out.csv = csv_text(list(sc.coords) + ["in_U", "integrand"], zip(*pts, F.mask.ravel().astype(int), rep.integrand_field.ravel()))
    return out


def cmd_el_check(args):
    sc = _scenario(args)
    tol = args.tol if args.tol is not None else DEFAULT_TOL["el-check"]
    F = _frame(sc, args.grid)
    region = _region_mask(sc, F)
    res = el_residuals(F, args.suite, region=region, el_tol=tol)
    out = Outcome("el-check", sc, args.grid, {"el_tol": tol, "k_cut": sc.k_cut})
    out.results.update(res.as_dict())
    out.results["checked_fields"] = list(SUITES[args.suite])
    out.verdict(f"critical_{args.suite}", res.critical)
    pts = F.grid.points().reshape(3, -1)
    sel = (F.mask & region).ravel()
    names = sorted(res.fields)
    cols = [pts[i][sel] for i in range(3)] + [res.fields[n].ravel()[sel] for n in names]
    out.csv = csv_text(list(sc.coords) + names, zip(*cols))
    return out


def cmd_vary(args):
    sc = _scenario(args)
    rtol = args.tol if args.tol is not None else DEFAULT_TOL["vary"]
    F = _frame(sc, args.grid)
    scale = k2_scale(F)
    abs_tol = 1e-3 * scale
    rng = np.random.default_rng(args.seed)
    out = Outcome("vary", sc, args.grid, {"relative": rtol, "stationarity": abs_tol, "k_cut": sc.k_cut})
    rows = []
    all_ok = True
    for i in range(args.count):
        v = random_variation(args.kind, F.grid, rng)
        fd = first_variation_fd(F, v)
        an = analytic_first_variation(F, v, args.form)
        err = abs(fd.value - an)
        rel = err / abs(an) if an != 0 else float("inf") if err > 0 else 0.0
        ok = fd.consistent and err <= max(rtol * abs(an), abs_tol)
        all_ok &= ok
        rows.append({"index": i, "label": v.label, "fd": fd.value, "analytic": an, "abs_error": err,
                     "rel_error": rel, "sweep_consistent": fd.consistent, "sweep_spread": fd.spread, "pass": ok})
    out.results.update({"kind": args.kind, "form": args.form, "seed": args.seed, "count": args.count,
                        "k2_integral": scale, "rows": rows})
    out.verdict("fd_matches_analytic", all_ok)
    out.csv = csv_text(["index", "fd", "analytic", "abs_error", "rel_error", "sweep_consistent", "pass"],
                       [(r["index"], r["fd"], r["analytic"], r["abs_error"], r["rel_error"],
                         int(r["sweep_consistent"]), int(r["pass"])) for r in rows])
    return out


def cmd_ode(args):
    tol = args.tol if args.tol is not None else DEFAULT_TOL["ode"]
    prof = integrate_critical(args.k0, args.h0, args.smax, args.step, drift_limit=np.inf)
    out = Outcome("ode", tolerances={"C1_relative_drift": tol})
    out.results.update(prof.as_dict())
    out.results["blowup_quadrature"] = blowup_quadrature(args.k0, args.h0, +1)
    out.results["blowup_quadrature_backward"] = blowup_quadrature(args.k0, args.h0, -1)
    inside = [b for b in (prof.blowup_s, prof.blowup_s_backward) if b is not None and abs(b) <= args.smax]
    out.verdict("no_blowup_within_smax", not inside)
    out.verdict("C1_drift", prof.drift <= tol)
    out.csv = prof.to_csv()
    return out


def cmd_twisted(args):
    tol = args.tol if args.tol is not None else DEFAULT_TOL["twisted"]
    sc = None
    if args.recover:
        if args.k0 is None or args.h0 is None:
            raise ScenarioError("twisted --recover needs --k0 and --h0")
        box = load_scenario(args.scenario).box if args.scenario else TWISTED_BOX
        try:
            k0 = parse(args.k0, ("x", "y", "s"))
        except ExprError as exc:
            raise ScenarioError(f"--k0: {exc}") from exc
        spec = recover_profiles(k0, args.h0, box, step=args.step)
        spec.sources.update({"k0": args.k0, "h0": repr(float(args.h0))})
        sc = twisted_scenario(spec, args.name or "twisted-recovered", mode="recover")
        sc._spec = spec
        if args.out:
            write_text_atomic(args.out, dump_scenario(sc))
    else:
        if not args.scenario:
            raise ScenarioError("twisted --build needs a scenario with a [twisted] block")
        sc = _scenario(args)
        if sc.twisted is None:
            raise ScenarioError(f"scenario {sc.name!r} has no [twisted] block")
        spec = sc.twisted_spec()
    region = sc.region if sc.region is not sc.box else spec.box.shrink(0.15)
    rep = verify_critical(spec, n=args.grid, region=region, tol=tol)
    out = Outcome("twisted", sc, args.grid, {"criticality": tol, "class_tol": DEFAULT_TOL["classify"]})
    out.results.update(rep)
    out.verdict("critical", rep["pass"])
    out.verdict("C5plus12_compatible", rep["C5plus12_compatible"])
    return out


def cmd_classify(args):
    sc = _scenario(args)
    tol = args.tol if args.tol is not None else DEFAULT_TOL["classify"]
    F = _frame(sc, args.grid)
    A = build_acm(F)
    rep = classify(A, class_tol=tol, region=_region_mask(sc, F))
    out = Outcome("classify", sc, args.grid, {"class_tol": tol, "k_cut": sc.k_cut})
    out.results.update(rep.as_dict())
    out.results["identities"] = A.identity_residuals()
    out.results["k_sup"] = float(np.max(F.k))
    out.verdict("classified", rep.verdict != "unclassified")
    return out


COMMANDS = {
    "frenet": cmd_frenet,
    "functional": cmd_functional,
    "el-check": cmd_el_check,
    "vary": cmd_vary,
    "ode": cmd_ode,
    "twisted": cmd_twisted,
    "classify": cmd_classify,
}


# ---------------------------------------------------------------------------
# regression over bundled scenarios


def _expect_args(name, key):
    words = key.split()
    argv = [words[0]]
    if words[0] == "el-check":
        argv += [name, "--suite", words[1] if len(words) > 1 else "full"]
    elif words[0] == "vary":
        argv += [name, "--kind", words[1] if len(words) > 1 else "gtop", "--count", "2", "--seed", "0"]
    elif words[0] == "twisted":
        argv += [name, "--build"]
    else:
        argv += [name]
    return argv


def regress(parser, grid):
    rows = []
    ok_all = True
    for name in bundled_names():
        sc = load_scenario(name)
        for key, want in sc.expect.items():
            argv = _expect_args(name, key) + ["--grid", str(grid)]
            code, outcome, error = execute(parser.parse_args(argv))
            if code >= EXIT_PARSE:
                got = f"error {code}: {error}"
            elif key.split()[0] == "classify":
                got = outcome.results["verdict"]
            else:
                got = "pass" if code == EXIT_PASS else "fail"
            match = got == want
            ok_all &= match
            rows.append({"scenario": name, "check": key, "expected": want, "got": got, "match": match})
    out = Outcome("regress", grid=grid)
    out.results["checks"] = rows
    out.verdict("manifests_match", ok_all)
    out.csv = csv_text(["scenario", "check", "expected", "got", "match"],
                       [(r["scenario"], r["check"], r["expected"], r["got"], int(r["match"])) for r in rows])
    return out.finish()


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gvstar", description="Frenet geometry, the gv* functional and its critical points.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--regress", action="store_true", help="run every bundled scenario against its manifest")
    p.add_argument("--list", action="store_true", help="list the bundled scenarios")
    p.add_argument("--grid", dest="regress_grid", type=int, default=DEFAULT_GRID, help="grid for --regress")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, default=DEFAULT_GRID, help="intervals per axis (default 48)")
    common.add_argument("--tol", type=float, default=None, help="override the command's verdict tolerance")
    common.add_argument("--report", help="write the JSON report here (atomically)")
    common.add_argument("--csv", help="write the command's table here (atomically)")
    common.add_argument("--quiet", action="store_true", help="do not print the report")

    sub = p.add_subparsers(dest="command", metavar="command")

    def scen(sp, required=True):
        sp.add_argument("scenario", nargs=None if required else "?", help="scenario file or bundled name")
        sp.add_argument("--normalize-t", action="store_true", help="normalize T instead of rejecting a non-unit field")

    scen(sub.add_parser("frenet", parents=[common], help="Frenet frame and h-tensor fields"))
    scen(sub.add_parser("functional", parents=[common], help="gv* by forms and by the curvature formula, and gv"))
    sp = sub.add_parser("el-check", parents=[common], help="Euler-Lagrange residuals")
    scen(sp)
    sp.add_argument("--suite", choices=sorted(SUITES), default="full")
    sp = sub.add_parser("vary", parents=[common], help="finite-difference vs closed-form first variations")
    scen(sp)
    sp.add_argument("--kind", choices=sorted(KINDS), default="gtop")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--count", type=int, default=3)
    sp.add_argument("--form", choices=("derived", "printed", "direct"), default="derived")
    sp = sub.add_parser("ode", parents=[common], help="integrate the critical (k, H) system")
    sp.add_argument("--k0", type=float, required=True)
    sp.add_argument("--h0", type=float, required=True)
    sp.add_argument("--smax", type=float, default=3.4)
    sp.add_argument("--step", type=float, default=1e-3)
    sp = sub.add_parser("twisted", parents=[common], help="build or recover a double-twisted product and verify criticality")
    scen(sp, required=False)
    mode = sp.add_mutually_exclusive_group(required=True)
    mode.add_argument("--build", action="store_true")
    mode.add_argument("--recover", action="store_true")
    sp.add_argument("--k0", help="initial curvature on the s = 0 leaf, an expression in x, y")
    sp.add_argument("--h0", type=float)
    sp.add_argument("--step", type=float, default=1e-3)
    sp.add_argument("--name", help="scenario name for --out")
    sp.add_argument("--out", help="write the recovered spec as a scenario file")
    scen(sub.add_parser("classify", parents=[common], help="Chinea-Gonzalez class of the structure"))
    return p


def execute(args):
    """(exit code, Outcome or None, error message or None)."""
    try:
        out = COMMANDS[args.command](args).finish()
    except (ScenarioError, ExprError) as exc:
        return EXIT_PARSE, None, str(exc)
    except (GeometryError, OdeError, TwistedError, FloatingPointError) as exc:
        return EXIT_NUMERIC, None, str(exc)
    return (EXIT_PASS if out.passed else EXIT_FAIL), out, None


def _emit(args, out):
    text = json_text(out.doc)
    if args.report:
        write_text_atomic(args.report, text)
    if getattr(args, "csv", None):
        write_text_atomic(args.csv, out.csv if out.csv is not None else _kv_csv(out.results))
    if not getattr(args, "quiet", False):
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list:
        for name in bundled_names():
            print(name)
        return EXIT_PASS
    if args.regress:
        out = regress(parser, args.regress_grid)
        for r in out.results["checks"]:
            print(f"{'ok  ' if r['match'] else 'FAIL'} {r['scenario']:<24} {r['check']:<22} expected {r['expected']:<16} got {r['got']}")
        return EXIT_PASS if out.passed else EXIT_FAIL
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_PARSE
    code, out, error = execute(args)
    if out is None:
        print(f"gvstar: {error}", file=sys.stderr)
        return code
    _emit(args, out)
    return code


if __name__ == "__main__":
    sys.exit(main())

