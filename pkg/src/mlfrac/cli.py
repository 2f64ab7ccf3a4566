"""``mlfrac`` command line.

Exit codes: 0 success, 1 validation/solver failure or threshold breach,
2 unreadable config or manifest, 3 Picard iteration did not converge.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from mlfrac import __version__
from mlfrac.config import TAIL_MASS_WARN, RunConfig, load_config, parse_config, tail_mass
from mlfrac.errors import ConfigError, MLFracError, NoConvergence, ValidationFailure
from mlfrac.fracops import TimeGrid
from mlfrac.grid import StateField, fft_forward, set_threads
from mlfrac.io import read_field, read_json, sha256_file, write_columns, write_csv, write_field, write_json
from mlfrac.linear import Propagator, solve_linear
from mlfrac.mlf import MLParams, ml_eval
from mlfrac.nonlinear import solve_nonlinear
from mlfrac.oracle import l1_ode_march, residual_check
from mlfrac.symbol import (
    corollary_asymptotics_check,
    eig_hermitian_batch,
    gershgorin_segments,
    validate_conditions_A,
    with_validated_radius,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NOCONV = 0, 1, 2, 3
RESIDUAL_STEPS = (64, 128, 256)
ORACLE_STEPS = 256
MANUFACTURED_TOL = 1e-4


def _threads(arg: int | None) -> int:
    if arg is None:
        env = os.environ.get("MLFRAC_THREADS")
        try:
            arg = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"MLFRAC_THREADS must be an integer, got {env!r}")
    return set_threads(arg)


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.out_dir or Path("out") / cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))


# {{{ validate-symbol


def _symbol_report(cfg: RunConfig) -> tuple[dict, bool]:
    rep = validate_conditions_A(cfg.symbol, cfg.grid, raise_on_failure=False)
    out = {"conditions": rep.as_dict()}
    ok = rep.solver_admissible and rep.R0 is not None
    if rep.structural_ok:
        # Gershgorin segments at a few lattice points
        xi = cfg.grid.xi_points
        pick = np.linspace(0, len(xi) - 1, min(8, len(xi))).astype(int)
        A = cfg.symbol.entry_array(xi[pick])
        lam, _ = eig_hermitian_batch(A)
        rows = []
        for p, Ap, lp in zip(pick, A, lam):
            segs = [(c - r, c + r) for c, r in gershgorin_segments(Ap)]
            inside = all(any(a - 1e-9 <= v <= b + 1e-9 for a, b in segs) for v in lp)
            rows.append({"xi": xi[p].tolist(), "eigenvalues": lp.tolist(), "segments": segs, "contained": inside})
        out["gershgorin"] = rows
        if rep.R0 is not None:
            sym = with_validated_radius(cfg.symbol, rep)
            radii = [rep.R0 * 2.0**k for k in range(8)]
            out["asymptotics"] = [
                {"radius": r, "max_rel_deviation": d} for r, d in corollary_asymptotics_check(sym, radii)
            ]
    return out, ok


def cmd_validate_symbol(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    payload, ok = _symbol_report(cfg)
    payload["admissible"] = ok
    write_json(out / "validation.json", payload)
    _emit(args, payload)
    if not ok:
        msgs = payload["conditions"]["messages"] or ["symbol has negative eigenvalues on the lattice"]
        print("validation failed: " + "; ".join(msgs), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# }}}


# {{{ solve


def _field_name(i: int) -> str:
    return f"u_{i:03d}.mlf"


def cmd_solve(args, nonlinear: bool) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    timing: dict[str, float] = {}
    manifest: dict = {
        "tool": "mlfrac",
        "version": __version__,
        "command": "solve-nonlinear" if nonlinear else "solve-linear",
        "problem": cfg.name,
        "config_hash": cfg.config_hash,
        "config_file": "config.toml",
        "config_dir": str(cfg.base.resolve()),
        "beta": cfg.beta,
        "t_out": list(cfg.t_out),
        "fields": [],
        "status": "ok",
        "error": None,
        "warnings": [],
    }
    (out / "config.toml").write_text(cfg.text)

    t0 = time.perf_counter()
    report, admissible = _symbol_report(cfg)
    write_json(out / "validation.json", report)
    manifest["validation_report"] = "validation.json"
    timing["validate_s"] = time.perf_counter() - t0

    code = EXIT_OK
    fields: list[StateField] = []
    Phi = None
    try:
        if not admissible:
            raise ValidationFailure("symbol is not solver-admissible on this lattice", None)
        prop = Propagator(cfg.grid, cfg.symbol, cfg.beta)
        Phi = cfg.initial_field()
        mass = tail_mass(Phi)
        if mass > TAIL_MASS_WARN:
            msg = f"initial data reaches {mass:.2e} on the lattice boundary"
            warnings.warn(msg, stacklevel=1)
            manifest["warnings"].append(msg)
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if nonlinear:
                Phi, rhs = cfg.rhs(prop, Phi)
                picard = None
                try:
                    fields, picard = solve_nonlinear(prop, Phi, rhs, cfg.t_out, cfg.solve_config())
                except NoConvergence as exc:
                    fields, picard = exc.fields or [], exc.report
                    raise
                finally:
                    if picard is not None:
                        write_json(out / "picard.json", picard.as_dict())
                        manifest["picard_report"] = "picard.json"
                if cfg.source["kind"] == "manufactured":
                    exact = cfg.manufactured_exact(prop, Phi)
                    manifest["manufactured_error"] = max(
                        float(np.max(np.abs(u.data - exact(t).data))) for u, t in zip(fields, cfg.t_out)
                    )
            else:
                H = cfg.source_spec(prop, Phi)
                fields = solve_linear(prop, Phi, H, cfg.t_out, cfg.quad_nodes)
        for w in caught:
            manifest["warnings"].append(str(w.message))
        timing["solve_s"] = time.perf_counter() - t0
    except NoConvergence as exc:
        manifest["status"] = "no-convergence"
        manifest["error"] = {"name": type(exc).__name__, "message": str(exc)}
        code = EXIT_NOCONV
    except ConfigError:
        raise
    except (MLFracError, ValueError, OverflowError) as exc:
        manifest["status"] = "error"
        manifest["error"] = {"name": type(exc).__name__, "message": str(exc)}
        code = EXIT_FAIL

    t0 = time.perf_counter()
    if Phi is not None:
        write_field(out / "initial.mlf", Phi, 0.0)
        manifest["initial"] = {"path": "initial.mlf", "sha256": sha256_file(out / "initial.mlf")}
    for i, (t, u) in enumerate(zip(cfg.t_out, fields)):
        path = write_field(out / _field_name(i), u, t)
        entry = {"t": t, "path": path.name, "sha256": sha256_file(path)}
        if args.emit_csv:
            entry["csv"] = write_csv(out / f"u_{i:03d}.csv", u).name
            entry["columns"] = write_columns(out / f"u_{i:03d}.dat", u).name
        manifest["fields"].append(entry)
    manifest["partial"] = len(fields) < len(cfg.t_out)
    timing["write_s"] = time.perf_counter() - t0
    manifest["timing"] = timing
    write_json(out / "manifest.json", manifest)
    _emit(args, manifest)
    if code:
        print(f"{manifest['status']}: {manifest['error']['message']}", file=sys.stderr)
    return code


# }}}


# {{{ verify


def _oracle_fields(cfg: RunConfig, prop: Propagator, Phi: StateField, H, man: dict, fields) -> list[dict]:
    """Compare stored fields with the L1 oracle; the tolerance is the
    oracle's own step-halving difference."""
    g, m = cfg.grid, cfg.m
    F0 = fft_forward(Phi).data.reshape(m, -1).T
    rows = []
    for entry, u in zip(man["fields"], fields):
        t = float(entry["t"])
        got = u.to_frequency().data.reshape(m, -1).T
        if t == 0.0:
            err = float(np.max(np.abs(got - F0)))
            rows.append({"t": t, "error": err, "tolerance": 1e-12 * (1 + np.max(np.abs(F0))), "ok": err <= 1e-12 * (1 + np.max(np.abs(F0)))})
            continue
        sols = []
        for N in (ORACLE_STEPS // 2, ORACLE_STEPS):
            tg = TimeGrid(t, N)
            Hh = None
            if not H.is_zero:
                Hh = np.stack([fft_forward(StateField(g, H.at(float(s), g, m))).data.reshape(m, -1).T for s in tg.t])
            sols.append(l1_ode_march(prop.A, cfg.beta, F0, Hh, tg).samples[-1])
        est = float(np.max(np.abs(sols[1] - sols[0])))
        err = float(np.max(np.abs(got - sols[1])))
        tol = 2.0 * est + 1e-10 * (1.0 + float(np.max(np.abs(sols[1]))))
        rows.append({"t": t, "error": err, "tolerance": tol, "ok": err <= tol})
    return rows


def cmd_verify(args) -> int:
    path = Path(args.manifest or args.config or "")
    man = read_json(path)
    root = path.parent
    try:
        cfg = parse_config((root / man["config_file"]).read_text(), Path(man["config_dir"]))
        entries = list(man["fields"])
        fields = [read_field(root / e["path"])[0] for e in entries]
        Phi = read_field(root / man["initial"]["path"])[0].to_physical()
    except (KeyError, OSError, TypeError) as exc:
        raise ConfigError(f"manifest {path} is incomplete: {exc}") from exc
    if man.get("status") != "ok":
        print(f"run did not complete: {man.get('status')}", file=sys.stderr)
        return EXIT_FAIL

    result: dict = {"manifest": str(path), "checks": {}}
    checks = result["checks"]
    checks["checksums"] = all(
        sha256_file(root / e["path"]) == e["sha256"] for e in entries + [man["initial"]]
    )

    prop = Propagator(cfg.grid, cfg.symbol, cfg.beta)
    nonlinear = man["command"] == "solve-nonlinear"
    threshold = 2.0 - cfg.beta - 0.3
    runs = []
    if nonlinear:
        Phi0, rhs = cfg.rhs(prop, cfg.initial_field())

        def H(t, u):
            return rhs.at(t, cfg.grid, u)

        base = cfg.solve_config()
        for N in RESIDUAL_STEPS:
            tg = TimeGrid(cfg.T, N)
            sc = replace(base, time_steps=N, t_out=tuple(tg.t), lipschitz_samples=0)
            runs.append((tg, solve_nonlinear(prop, Phi0, rhs, tg.t, sc)[0]))
        if cfg.source["kind"] == "manufactured":
            exact = cfg.manufactured_exact(prop, Phi0)
            err = max(float(np.max(np.abs(u.data - exact(e["t"]).data))) for u, e in zip(fields, entries))
            checks["manufactured"] = {"error": err, "tolerance": MANUFACTURED_TOL, "ok": err <= MANUFACTURED_TOL}
        H_res = H
    else:
        H_res = cfg.source_spec(prop, Phi)
        for N in RESIDUAL_STEPS:
            tg = TimeGrid(cfg.T, N)
            runs.append((tg, solve_linear(prop, Phi, H_res, tg.t, cfg.quad_nodes)))
        checks["oracle"] = _oracle_fields(cfg, prop, Phi, H_res, man, fields)

    tg, U = runs[-1]
    rep = residual_check(U, cfg.symbol, cfg.beta, H_res, tg, refinements=runs[:-1])
    scale = max(1.0, max(float(np.max(np.abs(u.data))) for u in U))
    steady = max(rep.final_residuals.values()) <= 1e-9 * scale
    checks["residual"] = {
        "refinement_rate": rep.refinement_rate,
        "threshold": threshold,
        "final_residuals": rep.final_residuals,
        "steady": steady,
        "ok": steady or rep.refinement_rate >= threshold,
    }

    passed = checks["checksums"] and checks["residual"]["ok"]
    if "oracle" in checks:
        passed = passed and all(r["ok"] for r in checks["oracle"])
    if "manufactured" in checks:
        passed = passed and checks["manufactured"]["ok"]
    result["passed"] = passed
    result["residual_report"] = rep.as_dict()
    write_json(root / "verify.json", result)
    np.savetxt(
        root / "residual.csv",
        np.column_stack([rep.times, rep.residual_linf]),
        delimiter=",",
        fmt="%.17g",
        header="t,residual_linf",
        comments="",
    )
    if args.json:
        _emit(args, result)
    else:
        r = checks["residual"]
        print(f"checksums {'ok' if checks['checksums'] else 'MISMATCH'}")
        print(f"residual rate {r['refinement_rate']:.3f} (threshold {threshold:.3f})" + (" steady" if steady else ""))
        for row in checks.get("oracle", []):
            print(f"oracle t={row['t']:g} error {row['error']:.3e} tol {row['tolerance']:.3e} {'ok' if row['ok'] else 'FAIL'}")
        if "manufactured" in checks:
            print(f"manufactured error {checks['manufactured']['error']:.3e}")
        print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_FAIL


# }}}


def cmd_ml_eval(args) -> int:
    params = MLParams(args.rho, args.mu)
    zs = list(args.z) + list(args.z_opt or [])
    if not zs:
        raise ConfigError("ml-eval needs at least one z")
    rows = []
    for z in zs:
        r = ml_eval(params, z)
        rows.append({"z": z, **r.as_dict()})
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        for r in rows:
            print(f"{r['z']:.17g} {r['value']:.17g} {r['regime']} {r['est_abs_error']:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--out", help="output directory (overrides [output].dir)")
    common.add_argument("--threads", type=int, default=None, help="FFT threads, 0 = all cores")
    common.add_argument("--emit-csv", action="store_true", help="also write CSV and gnuplot columns")
    common.add_argument("--json", action="store_true", help="print the result as JSON")

    p = argparse.ArgumentParser(prog="mlfrac", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate-symbol", parents=[common], help="check the matrix symbol")
    sub.add_parser("solve-linear", parents=[common], help="propagator solve")
    sub.add_parser("solve-nonlinear", parents=[common], help="Picard solve")
    v = sub.add_parser("verify", parents=[common], help="check a run manifest")
    v.add_argument("manifest", nargs="?", help="manifest.json of a solve")
    ml = sub.add_parser("ml-eval", parents=[common], help="evaluate E_{rho,mu}(z)")
    ml.add_argument("--rho", type=float, required=True)
    ml.add_argument("--mu", type=float, default=1.0)
    ml.add_argument("--z", type=float, nargs="+", dest="z_opt", help="arguments (alternative to positional)")
    ml.add_argument("z", type=float, nargs="*")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        _threads(args.threads)
        if args.command in ("validate-symbol", "solve-linear", "solve-nonlinear") and not args.config:
            raise ConfigError("--config is required")
        if args.command == "validate-symbol":
            return cmd_validate_symbol(args)
        if args.command == "solve-linear":
            return cmd_solve(args, nonlinear=False)
        if args.command == "solve-nonlinear":
            return cmd_solve(args, nonlinear=True)
        if args.command == "verify":
            if not (args.manifest or args.config):
                raise ConfigError("verify needs a manifest path")
            return cmd_verify(args)
        return cmd_ml_eval(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MLFracError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
