"""Command line front end.

Subcommands: steady, simulate, stability, verify.  Heavy imports happen
inside the handlers so --threads can pin the BLAS/OpenMP pools before
numpy is loaded.  BSNQ_LOG sets the log level (DEBUG, INFO, ...).
"""

import argparse
import logging
import os
import sys

log = logging.getLogger(__name__)

THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _setup_logging():
    level = os.environ.get("BSNQ_LOG", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _apply_threads(n):
    if n is None:
        return
    if "numpy" in sys.modules:
        log.warning("--threads: numpy already imported, pools may be pinned")
    for var in THREAD_VARS:
        os.environ[var] = str(n)


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def _load(args):
    from .config import load_config, load_config_file

    if args.config:
        return load_config_file(args.config)
    return load_config(None)


def _write_manifest(out, cfg, extra=None):
    import yaml

    from . import __version__
    from .kernels import BACKEND

    doc = {
        "config": cfg,
        "package_version": __version__,
        "kernel_backend": BACKEND,
    }
    if extra:
        doc.update(extra)
    with open(os.path.join(out, "manifest.yaml"), "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)


def _dump_yaml(out, name, doc):
    import yaml

    with open(os.path.join(out, name), "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)


def cmd_steady(args):
    from .config import build_problem
    from .grid import ScalarField
    from .snapshots import write_field
    from .steady import balance_residuals

    cfg = _load(args)
    grid, ss, params, _ = build_problem(cfg)
    out = _ensure_out(args.out)
    write_field(os.path.join(out, "rho_s.f64"), ss.rho_s)
    write_field(os.path.join(out, "p_s.f64"), ss.p_s)
    write_field(os.path.join(out, "psi_potential.f64"), ScalarField(grid, ss.Psi))
    res = balance_residuals(ss)
    doc = {
        "r_geo": res["r_geo"],
        "r_hyd": res["r_hyd"],
        "delta_max": ss.delta_max(),
        "delta_min": ss.delta_min(),
        "beta": params.beta,
        "grid": {"Nx": grid.Nx, "Nz": grid.Nz, "Lx": grid.Lx, "h": grid.h},
    }
    _write_manifest(out, cfg)
    _dump_yaml(out, "steady.yaml", doc)
    print("steady state written to %s" % out)
    print("  balance residuals: r_geo=%.3e  r_hyd=%.3e" % (res["r_geo"], res["r_hyd"]))
    return 0


def _observers(ss, params, mode):
    from .diagnostics import (
        EnergyLedger,
        divergence_observer,
        meridional_norm_observer,
        transported_norm_observer,
        velocity_observer,
    )

    ledger = EnergyLedger(ss, params, mode)
    return [
        velocity_observer,
        divergence_observer,
        transported_norm_observer(),
        meridional_norm_observer(),
        ledger.observe,
    ]


def cmd_simulate(args):
    import numpy as np

    from .config import build_initial_state, build_problem
    from .diagnostics import budget_residual, decay_report
    from .dynamics import run
    from .errors import NanGuard
    from .grid import ScalarField
    from .snapshots import write_field, write_series_csv

    cfg = _load(args)
    if args.seed is not None:
        cfg["ic"]["seed"] = args.seed
    grid, ss, params, step_cfg = build_problem(cfg)
    state = build_initial_state(cfg, grid, ss, params)
    out = _ensure_out(args.out)
    _write_manifest(out, cfg, {"seed": cfg["ic"]["seed"]})

    r = cfg["run"]
    observers = _observers(ss, params, r["mode"])
    try:
        result = run(
            state, ss, params, step_cfg, r["t_end"],
            observers=observers,
            observe_every=int(r["observe_every"]),
            snapshot_every=int(r["snapshot_every"]),
            max_steps=int(r["max_steps"]),
        )
    except NanGuard as exc:
        crash = exc.state
        if crash is not None:
            for name, fld in crash.fields().items():
                write_field(os.path.join(out, "crash_%s.f64" % name), fld)
        print("simulate: %s" % exc, file=sys.stderr)
        print("crash fields dumped to %s" % out, file=sys.stderr)
        return 3

    cols = {"t": result.times}
    cols.update(result.table)
    write_series_csv(os.path.join(out, "series.csv"), cols)
    for name, fld in result.final.fields().items():
        write_field(os.path.join(out, "final_%s.f64" % name), fld)
    if int(r["snapshot_every"]):
        snapdir = _ensure_out(os.path.join(out, "snapshots"))
        for i, st in enumerate(result.states):
            write_field(os.path.join(snapdir, "rho_%06d.f64" % i),
                        ScalarField(grid, st.rho))

    budget = budget_residual(result)
    summary = {
        "steps": int(result.steps),
        "t_final": float(result.final.t),
        "E0": budget["E0"],
        "max_rel_budget_residual": budget["max_rel_residual"],
        "max_rel_budget_residual_closed": budget["max_rel_residual_closed"],
        "u_h1_final": float(result.table["u_h1"][-1]),
        "div_max_final": float(result.table["div_max"][-1]),
    }
    if args.report:
        rep = decay_report(result, ss, params, mode=r["mode"])
        fit = rep.pop("fit")
        rep["fit"] = {
            "gamma": fit.gamma, "beta": fit.beta, "distance2": fit.distance2,
            "c0": fit.c0, "local_opt": bool(fit.local_opt),
            "lambda0_fit": _none_if_nan(fit.lambda0_fit),
            "lhs_dissipation": _none_if_nan(fit.lhs_dissipation),
            "rhs_threshold": _none_if_nan(fit.rhs_threshold),
            "condition_met": bool(fit.condition_met),
        }
        summary["decay"] = _plainify(rep)
    _dump_yaml(out, "summary.yaml", summary)
    print("simulate: %d steps to t=%.6g, ledger in %s" %
          (result.steps, result.final.t, os.path.join(out, "series.csv")))
    print("  budget residual (rel): %.3e" % budget["max_rel_residual"])
    if not np.isfinite(budget["max_rel_residual"]):
        return 3
    return 0


def _none_if_nan(x):
    import math

    return None if (x is None or (isinstance(x, float) and math.isnan(x))) else x


def _plainify(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {k: _plainify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plainify(v) for v in obj]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_plainify(v) for v in obj.tolist()]
    return obj


def cmd_stability(args):
    from .config import build_problem
    from .errors import EigensolverError
    from .stability import classify

    cfg = _load(args)
    grid, ss, params, _ = build_problem(cfg)
    out = _ensure_out(args.out)
    _write_manifest(out, cfg)
    method = cfg["stability"]["method"]
    tol_phi = float(cfg["stability"]["tol_phi"])
    try:
        report = classify(ss, params, method=method, tol_phi=tol_phi)
    except EigensolverError as exc:
        print("stability: %s" % exc, file=sys.stderr)
        return 3
    eig = report.eig
    doc = _plainify({
        "verdict": report.verdict,
        "branch": report.branch,
        "lambda0": _none_if_nan(report.lambda0),
        "s_star": _none_if_nan(report.s_star),
        "delta_max": report.delta_max,
        "delta_min": report.delta_min,
        "coriolis_shear": report.coriolis_shear,
        "alpha_samples": eig.alpha_samples,
        "diagnostics": eig.diagnostics,
    })
    _dump_yaml(out, "stability.yaml", doc)
    if eig.mode_psi is not None:
        from .snapshots import write_field

        write_field(os.path.join(out, "mode_psi.f64"), eig.mode_psi)
    print("stability: verdict=%s branch=%s" % (report.verdict, report.branch))
    if report.lambda0 is not None:
        print("  lambda0 = %.8g" % report.lambda0)
    return 0


def _check(table, name, fn):
    try:
        ok, detail = fn()
    except Exception as exc:  # verification must not crash on bad inputs
        ok, detail = False, "%s: %s" % (type(exc).__name__, exc)
    table.append((name, ok, detail))
    return ok


def cmd_verify(args):
    import numpy as np
    import yaml

    from .grid import build_grid
    from .snapshots import read_field, read_series_csv

    out = args.out
    checks = []

    manifest = {}

    def load_manifest():
        nonlocal manifest
        path = os.path.join(out, "manifest.yaml")
        with open(path, "r", encoding="utf-8") as fh:
            manifest = yaml.safe_load(fh)
        if not isinstance(manifest, dict) or "config" not in manifest:
            return False, "manifest.yaml missing config section"
        return True, "ok"

    _check(checks, "manifest", load_manifest)

    series = {}

    def load_series():
        nonlocal series
        series = read_series_csv(os.path.join(out, "series.csv"))
        if "t" not in series:
            return False, "series.csv has no t column"
        t = series["t"]
        if len(t) < 2 or np.any(np.diff(t) <= 0):
            return False, "times not strictly increasing"
        return True, "%d rows" % len(t)

    have_series = _check(checks, "series", load_series)

    if have_series:
        def finite():
            for k, col in series.items():
                if not np.all(np.isfinite(col)):
                    return False, "column %s has non-finite entries" % k
            return True, "all columns finite"

        _check(checks, "finite", finite)

        def budget():
            need = ("E", "D_visc", "D_bdry", "source")
            if any(k not in series for k in need):
                return True, "no ledger columns, skipped"
            t = series["t"]
            diss = series["D_visc"] + series["D_bdry"]
            integ = np.concatenate(
                [[0.0], np.cumsum(0.5 * (diss[1:] + diss[:-1]) * np.diff(t))]
            )
            src = series["source"]
            integ_s = np.concatenate(
                [[0.0], np.cumsum(0.5 * (src[1:] + src[:-1]) * np.diff(t))]
            )
            resid = series["E"] - series["E"][0] + integ - integ_s
            rel = np.max(np.abs(resid)) / max(abs(series["E"][0]), 1e-300)
            return rel <= args.budget_tol, "closed residual %.3e" % rel

        _check(checks, "budget", budget)

        def divergence():
            if "div_max" not in series:
                return True, "no div_max column, skipped"
            worst = float(np.max(series["div_max"]))
            return worst <= 1e-8, "max %.3e" % worst

        _check(checks, "divergence", divergence)

    def snapshots_ok():
        gcfg = manifest.get("config", {}).get("grid") if manifest else None
        paths = []
        for root, _dirs, files in os.walk(out):
            for f in sorted(files):
                if f.endswith(".f64"):
                    paths.append(os.path.join(root, f))
        if not paths:
            return True, "no field files, skipped"
        grid = None
        if gcfg:
            grid = build_grid(gcfg["Lx"], gcfg["h"], int(gcfg["Nx"]), int(gcfg["Nz"]))
        for p in paths:
            fld = read_field(p, grid=grid)
            if not np.all(np.isfinite(fld.values)):
                return False, "%s has non-finite entries" % os.path.basename(p)
        return True, "%d field files match the manifest grid" % len(paths)

    _check(checks, "snapshots", snapshots_ok)

    width = max(len(n) for n, _, _ in checks)
    failed = 0
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        if not ok:
            failed += 1
        print("%s  %-*s  %s" % (status, width, name, detail))
    print("verify: %d/%d checks passed" % (len(checks) - failed, len(checks)))
    return 1 if failed else 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="bsnq",
        description="Rotating stratified channel laboratory: steady states, "
                    "time stepping, spectral stability, output verification.",
    )
    ap.add_argument("--threads", type=int, default=None,
                    help="pin BLAS/OpenMP thread pools before numpy loads")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", default=None, help="YAML config path")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("steady", help="build and write the steady state")
    common(p)
    p.set_defaults(fn=cmd_steady)

    p = sub.add_parser("simulate", help="time-march and write the run ledger")
    common(p)
    p.add_argument("--seed", type=int, default=None,
                   help="override ic.seed from the config")
    p.add_argument("--report", action="store_true",
                   help="append the decay/fit report to summary.yaml")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("stability", help="variational spectral classification")
    common(p)
    p.set_defaults(fn=cmd_stability)

    p = sub.add_parser("verify", help="check a results directory")
    common(p, needs_config=False)
    p.add_argument("--budget-tol", type=float, default=0.01,
                   help="closed energy-budget residual tolerance")
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)
    _setup_logging()
    from .errors import BsnqError

    try:
        return args.fn(args)
    except BsnqError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
