"""Experiment orchestration: classify, simulate, analyze, report."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis, classify as cls, storage
from .config import ConfigError, ExperimentConfig, emit_config, load_config, parse_config
from .nonlin import CubicNonlinearity, NonlinearityError, nu_polynomial
from .spectral import SimulationDiverged, Trajectory, fourier_forward, run

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGED = 0, 2, 3
STRIP_LIMIT = 1e-10

log = logging.getLogger(__name__)


def default_out_root() -> Path:
    return Path(os.environ.get("DNLS_OUT_ROOT", "runs"))


def classification_report(N: CubicNonlinearity, *, psi_hat=None, xi=None, level="b0",
                          seed=0, n_xi=64, n_y=4096) -> dict:
    """``{class, c0, xi0, supImNu, hermitian, lifespan, ...}`` for any nonlinearity.

    The residue polynomial exists only for unit-mass single equations; other
    inputs get ``class: null`` with the reason recorded.
    """
    out = {"class": None, "c0": None, "xi0": None, "supImNu": None,
           "tolerance_based": None, "nu": None, "lifespan": None}
    try:
        nu = nu_polynomial(N)
    except NonlinearityError as exc:
        out["class_note"] = str(exc)
        nu = None
    if nu is not None:
        out.update(cls.classify_single(nu).to_json())
        out["nu"] = nu.to_json()
        if psi_hat is not None:
            out["lifespan"] = cls.lifespan_bound(nu, xi, psi_hat).to_json()
    out["mass_resonance_violations"] = [
        {"component": j, "factors": [list(f) for f in tri], "coeff": c.to_json()}
        for (j, tri), c in cls.check_mass_resonance(N)]
    out["hermitian"] = cls.check_hermitian_condition(
        N, level=level, seed=seed, n_xi=n_xi, n_y=n_y).to_json()
    return out


def _manifest(cfg: ExperimentConfig, N, grid, solver, status: str, extra=None) -> dict:
    conf = cfg.to_json()
    for item in conf["initial_data"]:
        if item["type"] == "file" and cfg.base_dir and not os.path.isabs(item["path"]):
            item["path"] = str(Path(cfg.base_dir, item["path"]).resolve())
    out = {
        "config": conf,
        "nonlinearity": N.to_json(),
        "grid": grid.to_json(),
        "solver": solver.to_json(),
        "seed": cfg.seed,
        "environment": storage.environment_info(),
        "status": status,
    }
    out.update(extra or {})
    return out


def run_experiment(cfg, out_dir=None, *, seed: Optional[int] = None, jobs: int = 1,
                   progress=None) -> Path:
    """Run the full pipeline into ``out_dir`` and return it.

    ``cfg`` is an :class:`ExperimentConfig` or a path to a config or manifest.
    Raises :class:`ConfigError` on invalid input and
    :class:`SimulationDiverged` on blow-up; in both cases anything already
    written stays in place next to a ``FAILED`` marker.
    """
    if not isinstance(cfg, ExperimentConfig):
        cfg = load_config(cfg)
    if seed is not None:
        cfg.seed = int(seed)
    run_dir = Path(out_dir) if out_dir is not None else default_out_root() / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / storage.FAILED).unlink(missing_ok=True)
    try:
        N = cfg.resolve_nonlinearity()
        grid = cfg.make_grid()
        solver = cfg.make_solver()
        if cfg.analysis.epsilon_sweep is not None and N.n != 2:
            raise ConfigError("epsilon_sweep needs a two-component nonlinearity")
        psi = cfg.profile_data(grid)
    except (ConfigError, ValueError, OSError) as exc:
        storage.mark_failed(run_dir, f"validation: {exc}")
        raise ConfigError(str(exc)) from None

    storage.write_json(run_dir / storage.MANIFEST, _manifest(cfg, N, grid, solver, "running"))
    (run_dir / "config.json").write_text(emit_config(cfg) + "\n")

    psi_hat = fourier_forward(psi, grid)
    if cfg.analysis.classify:
        report = classification_report(
            N, psi_hat=psi_hat[0] if cfg.analysis.lifespan else None, xi=grid.xi,
            level=cfg.analysis.hermitian_level, seed=cfg.seed,
            n_xi=cfg.analysis.xi_samples, n_y=cfg.analysis.y_samples)
        storage.write_json(run_dir / "classify.json", report)

    try:
        traj = run(N, cfg.epsilon * psi, grid, solver, progress=progress)
    except SimulationDiverged as exc:
        storage.mark_failed(run_dir, f"divergence: {exc}")
        storage.write_json(run_dir / storage.MANIFEST,
                           _manifest(cfg, N, grid, solver, "diverged", {"diverged_at": exc.t}))
        raise
    storage.write_norms(run_dir / storage.NORMS, traj)
    storage.write_snapshots(run_dir, traj.times, traj.alpha)
    storage.write_columns(run_dir / "steps.csv", {
        "t": traj.step_t, "mass_total": traj.step_mass, "mass_diff": traj.step_mass_diff})
    storage.write_columns(run_dir / "strip.csv", {"t": traj.times, "strip_mass": traj.strip})

    analyze_trajectory(traj, cfg, run_dir, psi=psi, jobs=jobs)
    storage.write_json(run_dir / storage.MANIFEST, _manifest(
        cfg, N, grid, solver, "complete", {"t_switch": None if math.isinf(traj.t_switch)
                                           else traj.t_switch}))
    return run_dir


def load_trajectory(run_dir) -> tuple[Trajectory, ExperimentConfig]:
    run_dir = Path(run_dir)
    manifest_path = run_dir / storage.MANIFEST
    if not manifest_path.exists():
        raise ConfigError(f"{run_dir}: no manifest")
    manifest = storage.read_json(manifest_path)
    cfg = parse_config(manifest["config"])
    N = cfg.resolve_nonlinearity()
    grid = cfg.make_grid()
    solver = cfg.make_solver()
    times, alpha = storage.read_snapshots(run_dir)
    norms = storage.read_csv(run_dir / storage.NORMS)
    l2 = np.stack([norms[f"l2_{j + 1}"] for j in range(N.n)], axis=1)
    linf = np.stack([norms[f"linf_{j + 1}"] for j in range(N.n)], axis=1)
    strip_path = run_dir / "strip.csv"
    strip = (storage.read_csv(strip_path)["strip_mass"] if strip_path.exists()
             else np.zeros(len(times)))
    traj = Trajectory(N=N, grid=grid, config=solver, times=times, alpha=alpha,
                      l2=l2, linf=linf, strip=strip)
    return traj, cfg


def analyze_trajectory(traj: Trajectory, cfg: ExperimentConfig, run_dir, *, psi=None,
                       jobs: int = 1) -> dict:
    """Write ``fit.json``, ``m_estimate.csv``, ``decoupling.csv`` and the sweep report."""
    run_dir = Path(run_dir)
    req = cfg.analysis
    summary: dict = {"final_l2": traj.l2[-1].tolist(), "T": float(traj.times[-1]),
                     "boundary_strip_max": float(traj.strip.max())}
    if summary["boundary_strip_max"] > STRIP_LIMIT:
        log.warning("boundary strip mass %.2e exceeds %.0e: the box is too small",
                    summary["boundary_strip_max"], STRIP_LIMIT)
    if req.fit:
        fits = []
        for kind, series in (("L2", traj.l2), ("Linf", traj.linf)):
            for j in range(traj.n):
                try:
                    f = analysis.fit_log_decay(traj.times, series[:, j], cfg.epsilon,
                                               req.fit_window, norm_kind=kind, component=j + 1)
                    fits.append(f.to_json())
                except ValueError as exc:
                    fits.append({"norm": kind, "component": j + 1, "error": str(exc)})
        summary["fits"] = fits
        storage.write_json(run_dir / "fit.json", {"epsilon": cfg.epsilon, "fits": fits,
                                                 "final_l2": summary["final_l2"]})
    pair = traj.n == 2 and traj.N.masses[0] == traj.N.masses[1]
    if pair and req.m_estimate:
        if psi is None:
            psi = cfg.profile_data(traj.grid)
        try:
            me = analysis.estimate_m(traj)
            pred = analysis.leading_prediction(fourier_forward(psi, traj.grid), cfg.epsilon)
            storage.write_columns(run_dir / "m_estimate.csv", {
                "xi": me.xi, "m_hat_largeT": me.m_hat, "m_hat_anchored": me.m_check,
                "prediction": pred})
            agree, mask = analysis.sign_agreement(me.m_hat, pred)
            summary["m_estimate"] = {
                "sign_agreement": agree, "points": int(mask.sum()),
                "max_tail": float(me.tail.max()), "T": me.T, "t_anchor": me.t_anchor}
        except ValueError as exc:
            summary["m_estimate"] = {"error": str(exc)}
    if pair and req.decoupling:
        ts, metric = analysis.decoupling_series(traj)
        storage.write_columns(run_dir / "decoupling.csv", {"t": ts, "metric": metric})
        summary["decoupling_final"] = float(metric[-1])
    if req.epsilon_sweep is not None:
        if psi is None:
            psi = cfg.profile_data(traj.grid)
        rep = analysis.verify_epsilon_expansion(traj.N, psi, req.epsilon_sweep, traj.grid,
                                                traj.config, jobs=jobs)
        storage.write_json(run_dir / "epsilon_sweep.json", rep.to_json())
        summary["epsilon_sweep"] = rep.to_json()
    storage.write_json(run_dir / "analysis.json", summary)
    return summary


def analyze_run(run_dir, jobs: int = 1) -> dict:
    traj, cfg = load_trajectory(run_dir)
    return analyze_trajectory(traj, cfg, run_dir, jobs=jobs)


def run_many(configs: Sequence, out_root=None, *, seed=None, jobs: int = 1) -> list:
    """Independent runs, in parallel when ``jobs > 1``; one directory per config."""
    cfgs = [c if isinstance(c, ExperimentConfig) else load_config(c) for c in configs]
    root = Path(out_root) if out_root is not None else default_out_root()
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        raise ConfigError("run names must be unique within one invocation")
    dirs = [root / c.name for c in cfgs]
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(run_experiment, c, d, seed=seed) for c, d in zip(cfgs, dirs)]
            return [f.result() for f in futs]
    return [run_experiment(c, d, seed=seed) for c, d in zip(cfgs, dirs)]


# -- report ----------------------------------------------------------------

REPORT_COLUMNS = ("run", "status", "nonlinearity", "class", "epsilon", "p_L2",
                  "final_l2", "decoupling_final")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def report_rows(run_dirs: Sequence) -> list:
    rows = []
    for d in map(Path, run_dirs):
        row = dict.fromkeys(REPORT_COLUMNS)
        row["run"] = str(d)
        if not (d / storage.MANIFEST).exists():
            row["status"] = "incomplete"
            rows.append(row)
            continue
        manifest = storage.read_json(d / storage.MANIFEST)
        conf = manifest.get("config", {})
        row["status"] = manifest.get("status", "unknown")
        if (d / storage.FAILED).exists():
            row["status"] = "failed"
        nl = conf.get("nonlinearity")
        row["nonlinearity"] = nl if isinstance(nl, str) else "inline"
        row["epsilon"] = conf.get("epsilon")
        if (d / "classify.json").exists():
            row["class"] = storage.read_json(d / "classify.json").get("class")
        if (d / "fit.json").exists():
            fit = storage.read_json(d / "fit.json")
            l2fits = [f for f in fit["fits"] if f.get("norm") == "L2" and "p" in f]
            if l2fits:
                row["p_L2"] = l2fits[0]["p"]
            row["final_l2"] = float(np.sqrt(np.sum(np.square(fit["final_l2"]))))
        if (d / "analysis.json").exists():
            row["decoupling_final"] = storage.read_json(d / "analysis.json").get("decoupling_final")
        rows.append(row)
    return rows


def format_report(rows) -> str:
    table = [list(REPORT_COLUMNS)] + [[_fmt(r[c]) for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(REPORT_COLUMNS))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    ordered = [r for r in rows if r["final_l2"] is not None]
    if len(ordered) > 1:
        ordered.sort(key=lambda r: r["final_l2"])
        lines.append("")
        lines.append("final L2 ordering: " + " < ".join(
            f"{r['class'] or r['nonlinearity']}" for r in ordered))
    return "\n".join(lines) + "\n"


def write_report(rows, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if r[k] is None else r[k] for k in REPORT_COLUMNS})
    (out_dir / "report.txt").write_text(format_report(rows))
