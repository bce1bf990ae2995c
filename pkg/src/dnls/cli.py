"""Command line interface: ``dnls <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, classify as cls, pipeline, storage
from .config import ConfigError, load_config
from .nonlin import (CATALOG_DESCRIPTIONS, NonlinearityError, catalog, catalog_names,
                     load_nonlinearity, nu_polynomial)
from .profile import (ProfileState, closed_form_modulus_single, integrate_profile,
                      s_bounds_check, two_component_profile)
from .spectral import Grid1D, SimulationDiverged, fourier_forward, gaussian


def _common(p: argparse.ArgumentParser, config=True):
    if config:
        p.add_argument("--config", help="experiment config (JSON) or run manifest")
    p.add_argument("--out", help="output directory (default: $DNLS_OUT_ROOT/<name>)")
    p.add_argument("--seed", type=int, default=None, help="seed for sampled checks")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def _samples(p):
    p.add_argument("--xi-samples", type=int, default=64, help="xi sample count")
    p.add_argument("--y-samples", type=int, default=4096, help="unit-sphere sample count")
    p.add_argument("--level", default="b0", choices=cls.LEVELS, help="Hermitian condition")
    p.add_argument("--search-h", action="store_true",
                   help="also try a heuristic diagonal-H log-grid search")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dnls", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"dnls {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="dissipativity class, Hermitian check, lifespan")
    p.add_argument("nonlinearity", nargs="?", help="catalog name or JSON file")
    _common(p)
    _samples(p)

    p = sub.add_parser("lifespan", help="lower bound for eps^2 log T_eps")
    p.add_argument("nonlinearity", nargs="?", help="catalog name or JSON file")
    _common(p)

    p = sub.add_parser("simulate", help="run the full pipeline for one or more configs")
    p.add_argument("--config", action="append", required=True, help="config file (repeatable)")
    p.add_argument("--out", help="run directory (single config) or output root")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("profile", help="limit ODEs against their closed forms, S(tau) bounds")
    p.add_argument("nonlinearity", nargs="?", help="catalog name or JSON file")
    _common(p)
    p.add_argument("--tau-end", type=float, default=20.0)
    p.add_argument("--dtau", type=float, default=1e-3)
    p.add_argument("--records", type=int, default=21, help="tau values written to the CSV")

    p = sub.add_parser("analyze", help="recompute analysis outputs for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("report", help="comparison table across run directories")
    p.add_argument("run_dirs", nargs="*")
    p.add_argument("--out", help="directory for report.csv and report.txt")

    p = sub.add_parser("catalog", help="list built-in nonlinearities")
    p.add_argument("name", nargs="?", help="print the canonical JSON of one entry")
    return ap


def _nonlinearity_and_data(args):
    """Resolve the nonlinearity plus unscaled data and grid from the arguments."""
    cfg = load_config(args.config) if args.config else None
    source = args.nonlinearity or (cfg.nonlinearity if cfg else None)
    if source is None:
        raise ConfigError("give a nonlinearity or --config")
    N = load_nonlinearity(source)
    if cfg is not None:
        grid = cfg.make_grid()
        psi = cfg.profile_data(grid)
        if psi.shape[0] != N.n:
            raise ConfigError(f"config data has {psi.shape[0]} components, nonlinearity has {N.n}")
    else:
        grid = Grid1D()
        psi = np.stack([gaussian(grid.x, shift=(-1.0) ** (j + 1) if N.n > 1 else 0.0)
                        for j in range(N.n)])
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    return N, grid, psi, seed, cfg


def _emit(obj, out_dir, filename):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        Path(out_dir, filename).write_text(text + "\n")
    print(text)


def cmd_classify(args):
    N, grid, psi, seed, _ = _nonlinearity_and_data(args)
    rep = pipeline.classification_report(
        N, psi_hat=fourier_forward(psi[0], grid), xi=grid.xi, level=args.level,
        seed=seed, n_xi=args.xi_samples, n_y=args.y_samples)
    if args.search_h and N.n > 1:
        H, verdict = cls.search_diagonal_h(N, args.level, seed=seed, n_xi=args.xi_samples,
                                           n_y=min(args.y_samples, 512))
        rep["hermitian_search"] = {"H_diagonal": np.real(np.diag(H)).tolist(),
                                   "verdict": verdict.to_json(), "heuristic": True}
    _emit(rep, args.out, "classify.json")
    return 0


def cmd_lifespan(args):
    N, grid, psi, _, _ = _nonlinearity_and_data(args)
    nu = nu_polynomial(N)
    bound = cls.lifespan_bound(nu, grid.xi, fourier_forward(psi[0], grid))
    _emit(bound.to_json(), args.out, "lifespan.json")
    return 0


def cmd_simulate(args):
    if len(args.config) == 1:
        out = args.out
        try:
            cfg = load_config(args.config[0])
        except ConfigError as exc:
            if out is not None:
                Path(out).mkdir(parents=True, exist_ok=True)
                storage.mark_failed(out, f"validation: {exc}")
            raise
        if out is None:
            out = pipeline.default_out_root() / cfg.name
        dirs = [pipeline.run_experiment(args.config[0], out, seed=args.seed, jobs=args.jobs)]
    else:
        dirs = pipeline.run_many(args.config, args.out, seed=args.seed, jobs=args.jobs)
    for d in dirs:
        print(d)
    return 0


def cmd_profile(args):
    N, grid, psi, _, cfg = _nonlinearity_and_data(args)
    out = Path(args.out) if args.out else pipeline.default_out_root() / "profile"
    out.mkdir(parents=True, exist_ok=True)
    xi = grid.xi
    A0 = fourier_forward(psi, grid) * grid.xi_mask
    if cfg is not None:
        A0 = cfg.epsilon * A0
    keep = np.abs(A0).max(axis=0) > 1e-12 * np.abs(A0).max()
    xi, A0 = xi[keep], A0[:, keep]
    taus = np.linspace(0.0, args.tau_end, args.records)
    cols = {"tau": [], "xi": [], "component": [], "modulus2": [], "closed_form": [],
            "abs_error": []}
    xi0 = 0.0
    if N.n == 1:
        nu = nu_polynomial(N)
        verdict = cls.classify_single(nu)
        if verdict.tag == cls.WEAK:
            xi0 = float(verdict.xi0)
        _, rec = integrate_profile(ProfileState(0.0, xi, A0[0]), args.tau_end, args.dtau,
                                   nu=nu, record=taus)
        for tau in taus:
            num = np.abs(rec[float(tau)]) ** 2
            exact = closed_form_modulus_single(xi, A0[0], tau, nu)
            _append(cols, tau, xi, 1, num, exact)
    elif N.n == 2:
        _, rec = integrate_profile(ProfileState(0.0, xi, A0), args.tau_end, args.dtau,
                                   record=taus)
        P0, Q0 = np.abs(A0) ** 2
        for tau in taus:
            num = np.abs(rec[float(tau)]) ** 2
            for j, exact in enumerate(two_component_profile(P0, Q0, tau)):
                _append(cols, tau, xi, j + 1, num[j], exact)
    else:
        raise ConfigError("profile supports single equations and two-component systems")
    storage.write_columns(out / "profile.csv", {k: np.concatenate(v) for k, v in cols.items()})
    theta = fourier_forward(psi[0], grid)
    rep = s_bounds_check(theta, xi0, np.logspace(0, 6, 25), grid.xi)
    storage.write_json(out / "s_bounds.json", {"xi0": xi0, **rep.to_json()})
    err = float(np.max(np.concatenate(cols["abs_error"])))
    print(json.dumps({"out": str(out), "max_abs_error": err,
                      "S_upper_holds": rep.upper_holds, "c_star_empirical": rep.c_star}))
    return 0


def _append(cols, tau, xi, comp, num, exact):
    cols["tau"].append(np.full(xi.size, tau))
    cols["xi"].append(xi)
    cols["component"].append(np.full(xi.size, comp))
    cols["modulus2"].append(num)
    cols["closed_form"].append(exact)
    cols["abs_error"].append(np.abs(num - exact))


def cmd_analyze(args):
    summary = pipeline.analyze_run(args.run_dir, jobs=args.jobs)
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return 0


def cmd_report(args):
    if not args.run_dirs:
        raise ConfigError("report needs at least one run directory")
    rows = pipeline.report_rows(args.run_dirs)
    if args.out:
        pipeline.write_report(rows, args.out)
    sys.stdout.write(pipeline.format_report(rows))
    return 0


def cmd_catalog(args):
    if args.name:
        print(json.dumps(catalog(args.name).to_json(), indent=2))
        return 0
    width = max(map(len, catalog_names()))
    for name in catalog_names():
        print(f"{name.ljust(width)}  {CATALOG_DESCRIPTIONS[name]}")
    return 0


COMMANDS = {
    "classify": cmd_classify, "lifespan": cmd_lifespan, "simulate": cmd_simulate,
    "profile": cmd_profile, "analyze": cmd_analyze, "report": cmd_report,
    "catalog": cmd_catalog,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the validation code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SimulationDiverged as exc:
        print(f"FAILED: numerical divergence: {exc}", file=sys.stderr)
        return pipeline.EXIT_DIVERGED
    except (ConfigError, NonlinearityError, cls.HermitianMatrixError, ValueError,
            FileNotFoundError) as exc:
        print(f"FAILED: invalid input: {exc}", file=sys.stderr)
        return pipeline.EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
