"""Experiment orchestration: configs, manifests, CSV artifacts, goldens.

Each verb runs one family of computations from a JSON config; named
experiments provide default configs so standard production runs are
one-liners.  Every run writes a manifest (config echo, version, wall clock,
output digests) before heavy computation starts and finalizes it afterwards.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .geometry import (build_cluster, cluster_preset, constraint_graph,
                       dump_cluster, hexagon_loop, parallelogram_loop,
                       kitaev_preskill_regions, tee_cluster)
from .hilbert import (enumerate_basis, enumerate_maximal_covers, rvb_state,
                      save_basis, save_covers, abs_state, project_to_subspace)
from .model import (HamiltonianSpec, HamiltonianOperator, SweepSchedule,
                    full_rydberg_spec)
from .evolve import evolve_sweep, trajectory_to_csv
from .spectrum import fidelity_susceptibility_scan, scan_to_csv
from .ansatz import AnsatzBuilder, fit_trajectory, fits_to_csv
from . import tnet
from . import entangle

OUTPUT_ROOT_ENV = "RVBPREP_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Schema violation; message enumerates the offending config paths."""


# --- config handling ------------------------------------------------------

def _need(cfg, key, types, path=""):
    where = "%s.%s" % (path, key) if path else key
    if key not in cfg:
        raise ConfigError("missing config key: %s" % where)
    val = cfg[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError("config key %s has type %s, expected %s"
                          % (where, type(val).__name__, types))
    return val


def _grid(cfg, key, path=""):
    """A numeric grid given either as a list or as {min, max, num}."""
    val = _need(cfg, key, (list, dict), path)
    if isinstance(val, list):
        return np.asarray(val, dtype=float)
    lo = _need(val, "min", (int, float), key)
    hi = _need(val, "max", (int, float), key)
    num = _need(val, "num", int, key)
    return np.linspace(lo, hi, num)


def load_config(path):
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config is not valid JSON: %s" % exc)
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    return cfg


def _build_loop(spec):
    kind = spec.get("kind", "diagonal")
    shape = _need(spec, "shape", str, "loop")
    if shape == "hexagon":
        return hexagon_loop(kind, _need(spec, "radius", int, "loop"))
    if shape == "parallelogram":
        return parallelogram_loop(kind, _need(spec, "w", int, "loop"),
                                  _need(spec, "h", int, "loop"))
    raise ConfigError("loop.shape must be hexagon or parallelogram")


def _make_schedule(cfg):
    total = _need(cfg, "total_time", (int, float))
    protocol = cfg.get("protocol", "default")
    delta0 = cfg.get("delta0", -5.0)
    delta1 = cfg.get("delta1", 1.5 if protocol == "default" else 3.5)
    stages = cfg.get("stage_times")
    if stages is not None:
        if len(stages) != 3:
            raise ConfigError("stage_times must have exactly 3 entries")
        if abs(sum(stages) - total) > 1e-9 * max(total, 1.0):
            raise ConfigError(
                "stage_times sum to %.17g but total_time is %.17g"
                % (sum(stages), total))
        return SweepSchedule(total, stages[0], stages[1], stages[2],
                             delta0=delta0, delta1=delta1)
    if protocol == "default":
        return SweepSchedule.default_protocol(total, delta0, delta1)
    if protocol == "two_stage":
        return SweepSchedule.two_stage_protocol(total, delta0, delta1)
    raise ConfigError("protocol must be default or two_stage")


# --- manifests ------------------------------------------------------------

def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Output directory plus the evolving run manifest."""

    def __init__(self, out_dir, experiment, config):
        self.dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.t0 = time.time()
        self.manifest = {
            "experiment": experiment,
            "config": config,
            "version": __version__,
            "status": "running",
            "outputs": {},
        }
        self._write()

    def path(self, name):
        return os.path.join(self.dir, name)

    def _write(self):
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finish(self, output_names):
        self.manifest["outputs"] = {n: _digest(self.path(n))
                                    for n in sorted(output_names)}
        self.manifest["wall_clock_s"] = round(time.time() - self.t0, 3)
        self.manifest["status"] = "done"
        self._write()


# --- shared builders ------------------------------------------------------

def _cluster_from_config(cfg):
    if "cells" in cfg:
        cells = cfg["cells"]
        if len(cells) not in (2, 3):
            raise ConfigError("cells must be [n1, n2] or [n1, n2, shear]")
        return build_cluster(*cells)
    return cluster_preset(_need(cfg, "n_atoms", int))


def _operator(cfg, cluster=None):
    """(cluster, basis, covers, operator) for the configured model."""
    if cluster is None:
        cluster = _cluster_from_config(cfg)
    variant = cfg.get("model", "pxp")
    if variant == "pxp":
        spec = HamiltonianSpec()
    elif variant == "full":
        spec = full_rydberg_spec()
    else:
        raise ConfigError("model must be pxp or full")
    basis = enumerate_basis(constraint_graph(cluster, spec.constraint_radius))
    covers = enumerate_maximal_covers(cluster)
    op = HamiltonianOperator(spec, basis, cluster)
    return cluster, basis, covers, op


def _rvb_in(basis, covers, cluster):
    """RVB state expressed on ``basis`` (any radius >= the blockade one)."""
    from .hilbert import ConstrainedBasis, StateVector
    blockade = enumerate_basis(constraint_graph(cluster, 2.0))
    rvb = rvb_state(covers, blockade)
    if basis.dim == blockade.dim:
        return rvb
    idx = basis.indices_of(blockade.configs)
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[idx] = rvb.amplitudes
    return StateVector(basis, amps)


# --- verbs ----------------------------------------------------------------

def cmd_cluster(cfg, run):
    cluster = _cluster_from_config(cfg)
    r_c = cfg.get("constraint_radius", 2.0)
    basis = enumerate_basis(constraint_graph(cluster, r_c))
    covers = enumerate_maximal_covers(cluster)
    dump_cluster(cluster, run.path("cluster.json"))
    save_basis(run.path("basis.bin"), basis)
    save_covers(run.path("covers.bin"), covers)
    stats = {"n_atoms": cluster.n_atoms, "n_cells": cluster.n_cells,
             "constraint_radius": r_c, "basis_dim": basis.dim,
             "n_covers": covers.count}
    with open(run.path("stats.json"), "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ["cluster.json", "basis.bin", "covers.bin", "stats.json"]


def cmd_gs_scan(cfg, run):
    cluster, basis, covers, op = _operator(cfg)
    rvb = rvb_state(covers, basis) if covers.count else None
    lambdas = _grid(cfg, "lambda")
    scan = fidelity_susceptibility_scan(
        op, lambdas, dlambda=cfg.get("dlambda", 0.0025), rvb=rvb,
        tol=cfg.get("tol", 1e-10))
    scan_to_csv(scan, run.path("gs_scan.csv"))
    return ["gs_scan.csv"]


def cmd_sweep(cfg, run):
    outputs = []
    sizes = cfg.get("sizes", [_need(cfg, "n_atoms", int)])
    times = _grid(cfg, "sweep_times")
    delta1s = _grid(cfg, "delta1_grid") if "delta1_grid" in cfg else [None]
    rows = []
    for n_atoms in sizes:
        sub = dict(cfg)
        sub["n_atoms"] = int(n_atoms)
        cluster, basis, covers, op = _operator(sub)
        rvb = _rvb_in(basis, covers, cluster)
        for delta1 in delta1s:
            for total in times:
                scfg = dict(sub, total_time=float(total))
                if delta1 is not None:
                    scfg["delta1"] = float(delta1)
                schedule = _make_schedule(scfg)
                traj = evolve_sweep(
                    op, schedule, rvb=rvb,
                    dt_max=cfg.get("dt_max", 0.5),
                    local_tol=cfg.get("local_tol", 1e-9),
                    n_samples=cfg.get("n_samples", 200))
                final_ov = abs(np.vdot(rvb.amplitudes,
                                       traj.final_state.amplitudes))
                abs_ov = abs(np.vdot(rvb.amplitudes,
                                     abs_state(traj.final_state).amplitudes))
                rows.append((n_atoms, np.nan if delta1 is None else delta1,
                             total, total / n_atoms, final_ov, abs_ov,
                             traj.n_steps))
                if cfg.get("write_trajectories", False):
                    name = "trajectory_n%d_T%g.csv" % (n_atoms, total)
                    trajectory_to_csv(traj, run.path(name))
                    outputs.append(name)
    with open(run.path("sweep.csv"), "w") as fh:
        fh.write("n_atoms,delta1,total_time,t_over_n,"
                 "final_overlap,abs_overlap,n_steps\n")
        for r in rows:
            fh.write(",".join("%.17g" % x for x in r) + "\n")
    outputs.append("sweep.csv")
    return outputs


def cmd_fit(cfg, run):
    cluster, basis, covers, op = _operator(cfg)
    ratios = _grid(cfg, "delta_over_omega")
    source = cfg.get("source", "groundstate")
    snapshots = []
    if source == "groundstate":
        from .spectrum import groundstate
        v0 = None
        for r in ratios:
            gs = groundstate(op, 1.0, float(r), tol=cfg.get("tol", 1e-10),
                             v0=v0)
            v0 = gs.state.amplitudes
            snapshots.append((float(r), gs.state))
    elif source == "sweep":
        schedule = _make_schedule(cfg)
        checks = [schedule.time_at_detuning_ratio(float(r)) for r in ratios]
        traj = evolve_sweep(op, schedule, dt_max=cfg.get("dt_max", 0.5),
                            local_tol=cfg.get("local_tol", 1e-9),
                            checkpoints=checks)
        for r, t in zip(ratios, checks):
            snapshots.append((float(r), traj.snapshots[t]))
    else:
        raise ConfigError("source must be groundstate or sweep")
    results = fit_trajectory(snapshots, covers, basis,
                             max_evals=cfg.get("max_evals", 2000))
    fits_to_csv(results, run.path("fits.csv"))
    return ["fits.csv"]


def cmd_tn_grid(cfg, run):
    L = cfg.get("circumference", 6)
    projected = cfg.get("projected", True)
    compute_xi = cfg.get("compute_xi", not projected)
    fd_step = cfg.get("fd_step", 1e-3)
    tol = cfg.get("tol", 1e-10)
    z1s = _grid(cfg, "z1")
    z2s = _grid(cfg, "z2")
    loop_z = _build_loop(cfg["loop_z"]) if "loop_z" in cfg else None
    loop_x = _build_loop(cfg["loop_x"]) if "loop_x" in cfg else None
    fd_mode = cfg.get("fd", "local")
    if fd_mode not in ("local", "grid"):
        raise ConfigError("fd must be 'local' or 'grid'")
    records = []
    warm = None
    for i2, z2 in enumerate(z2s):
        # serpentine ordering keeps successive points close for warm starts
        order = list(z1s) if i2 % 2 == 0 else list(z1s)[::-1]
        row = []
        for z1 in order:
            if fd_mode == "grid":
                # density only per point; dn/dz1 from neighbouring columns
                tm = tnet.cylinder_transfer(float(z1), float(z2), L, projected)
                b = tnet.dominant_eigenpair(
                    tm, tol,
                    right0=None if warm is None else warm["right"],
                    left0=None if warm is None else warm["left"],
                    compute_lam1=compute_xi)
                warm = {"right": b.right, "left": b.left}
                rec = {
                    "z1": float(z1), "z2": float(z2),
                    "density": tnet.mean_density(tm, b, tol),
                    "dn_dz1": np.nan,
                    "xi": (tnet.correlation_length(tm, b)
                           if compute_xi else np.nan),
                    "bffm_z_l18": (tnet.bffm(tm, loop_z, b, x_type=False,
                                             tol=tol)
                                   if loop_z is not None else np.nan),
                    "bffm_x_l18": (tnet.bffm(tm, loop_x, b, x_type=True,
                                             tol=tol)
                                   if loop_x is not None and projected
                                   else np.nan),
                }
            else:
                rec, warm = tnet.phase_diagram_point(
                    float(z1), float(z2), L, projected, loop_z, loop_x,
                    fd_step=fd_step, tol=tol, compute_xi=compute_xi,
                    warm=warm)
            row.append(rec)
        row.sort(key=lambda r: r["z1"])
        if fd_mode == "grid":
            grad = np.gradient(np.array([r["density"] for r in row]),
                               np.asarray(z1s, dtype=float))
            for rec, g in zip(row, grad):
                rec["dn_dz1"] = float(g)
        records.extend(row)
    tnet.grid_to_csv(records, run.path("grid.csv"))
    return ["grid.csv"]


def cmd_bffm_scaling(cfg, run):
    """BFFM values over a family of loop perimeters at fixed points."""
    L = cfg.get("circumference", 6)
    tol = cfg.get("tol", 1e-10)
    loops = [(spec, _build_loop(spec)) for spec in _need(cfg, "loops", list)]
    z2 = _need(cfg, "z2", (int, float))
    rows = []
    for z1 in _grid(cfg, "z1"):
        tm = tnet.cylinder_transfer(float(z1), float(z2), L, True)
        b = tnet.dominant_eigenpair(tm, tol, compute_lam1=False)
        for spec, loop in loops:
            bz = tnet.bffm(tm, loop, b, x_type=False, tol=tol)
            bx = tnet.bffm(tm, loop, b, x_type=True, tol=tol)
            rows.append((z1, z2, loop.perimeter, spec["shape"], bz, bx))
    with open(run.path("bffm_scaling.csv"), "w") as fh:
        fh.write("z1,z2,perimeter,shape,bffm_z,bffm_x\n")
        for z1, zz2, p, shape, bz, bx in rows:
            fh.write("%.17g,%.17g,%d,%s,%.17g,%.17g\n"
                     % (z1, zz2, p, shape, bz, bx))
    return ["bffm_scaling.csv"]


def cmd_tee(cfg, run):
    n_atoms = _need(cfg, "n_atoms", int)
    cluster = tee_cluster(n_atoms)
    regions = kitaev_preskill_regions(cluster)
    covers = enumerate_maximal_covers(cluster)
    budget = cfg.get("budget_gib", 4.0)
    outputs = []
    if cfg.get("source", "ansatz") == "ansatz":
        basis = enumerate_basis(constraint_graph(cluster, 2.0))
        builder = AnsatzBuilder(covers, basis)
        labeled = []
        gammas = []
        for pt in _need(cfg, "points", list):
            label = _need(pt, "label", str, "points[]")
            if pt.get("limb") == "vacuum":
                psi = builder.build_vacuum_limb(0.0, pt.get("z2", 0.0))
            else:
                psi = builder.build(pt.get("z1", 0.0), pt.get("z2", 0.0))
            rep = entangle.topological_entropy_report(psi, regions, budget)
            labeled.append((label, rep))
            gammas.append({"label": label, "gamma": rep.gamma,
                           "components": rep.components})
        entangle.reports_to_csv(labeled, run.path("entropies.csv"))
        with open(run.path("gamma.json"), "w") as fh:
            json.dump({"n_atoms": n_atoms, "points": gammas}, fh,
                      indent=2, sort_keys=True)
            fh.write("\n")
        outputs += ["entropies.csv", "gamma.json"]
    else:                       # gamma along a sweep, raw and abs states
        sub = dict(cfg)
        sub["cells"] = [cluster.n1, cluster.n2, cluster.shear]
        _, basis, covers, op = _operator(sub, cluster)
        schedule = _make_schedule(cfg)
        checks = list(_grid(cfg, "checkpoint_times"))
        rvb = _rvb_in(basis, covers, cluster)
        traj = evolve_sweep(op, schedule, rvb=rvb,
                            dt_max=cfg.get("dt_max", 0.5),
                            local_tol=cfg.get("local_tol", 1e-9),
                            checkpoints=checks)
        with open(run.path("gamma_sweep.csv"), "w") as fh:
            fh.write("t,gamma_raw,gamma_abs\n")
            for t in checks:
                psi = traj.snapshots[t]
                g_raw = entangle.topological_entropy(psi, regions, budget)
                g_abs = entangle.topological_entropy(abs_state(psi), regions,
                                                     budget)
                fh.write("%.17g,%.17g,%.17g\n" % (t, g_raw, g_abs))
        outputs.append("gamma_sweep.csv")
    return outputs


# --- goldens --------------------------------------------------------------

def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def verify_goldens(out_dir, golden_dir, tolerances=None):
    """Compare every golden CSV against the run output; returns a report."""
    tolerances = tolerances or {}
    report = {"passed": [], "failed": []}
    names = sorted(n for n in os.listdir(golden_dir) if n.endswith(".csv"))
    if not names:
        raise ConfigError("no golden CSV files in %s" % golden_dir)
    for name in names:
        got_path = os.path.join(out_dir, name)
        if not os.path.exists(got_path):
            report["failed"].append((name, "missing output file"))
            continue
        want_h, want = _read_csv(os.path.join(golden_dir, name))
        got_h, got = _read_csv(got_path)
        if want_h != got_h:
            report["failed"].append((name, "header mismatch"))
            continue
        if len(want) != len(got):
            report["failed"].append(
                (name, "row count %d != %d" % (len(got), len(want))))
            continue
        col_tol = tolerances.get(name, {})
        worst = {}
        for wrow, grow in zip(want, got):
            for col, wv, gv in zip(want_h, wrow, grow):
                try:
                    wf, gf = float(wv), float(gv)
                except ValueError:
                    if wv != gv:
                        worst[col] = np.inf
                    continue
                if np.isnan(wf) and np.isnan(gf):
                    continue
                dev = abs(wf - gf) / (1.0 + abs(wf))
                worst[col] = max(worst.get(col, 0.0), dev)
        bad = {c: d for c, d in worst.items()
               if d > col_tol.get(c, col_tol.get("*", 1e-9))}
        if bad:
            report["failed"].append(
                (name, "column deviations: " + ", ".join(
                    "%s=%.3e" % kv for kv in sorted(bad.items()))))
        else:
            report["passed"].append(name)
    return report


def cmd_verify(cfg, run):
    golden_dir = _need(cfg, "golden_dir", str)
    out_dir = cfg.get("compare_dir", run.dir)
    report = verify_goldens(out_dir, golden_dir, cfg.get("tolerances"))
    with open(run.path("verify_report.json"), "w") as fh:
        json.dump({"passed": report["passed"],
                   "failed": [list(f) for f in report["failed"]]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name in report["passed"]:
        print("PASS %s" % name)
    for name, why in report["failed"]:
        print("FAIL %s: %s" % (name, why))
    if report["failed"]:
        raise ConfigError("%d golden file(s) failed" % len(report["failed"]))
    return ["verify_report.json"]


# --- experiments ----------------------------------------------------------

EXPERIMENT_DEFAULTS = {
    "fig1c_scan": ("gs-scan", {
        "n_atoms": 36,
        "lambda": {"min": 0.3, "max": 1.5, "num": 121},
    }),
    "fig1d_sweep": ("sweep", {
        "sizes": [24, 36],
        "sweep_times": [5, 10, 15, 20, 25, 30, 36, 43, 50, 60, 72, 90,
                        110, 140, 170],
    }),
    "fig2_fit": ("fit", {
        "n_atoms": 36,
        "delta_over_omega": {"min": 0.6, "max": 2.4, "num": 19},
    }),
    "fig3a_density": ("tn-grid", {
        "circumference": 6, "projected": True, "compute_xi": False,
        "fd": "grid",
        "z1": {"min": 0.1, "max": 1.5, "num": 20},
        "z2": {"min": 0.1, "max": 1.5, "num": 20},
    }),
    "fig3b_bffm": ("tn-grid", {
        "circumference": 6, "projected": True, "compute_xi": False,
        "fd": "grid",
        "z1": {"min": 0.05, "max": 1.5, "num": 12},
        "z2": {"min": 0.05, "max": 1.5, "num": 12},
        "loop_z": {"shape": "hexagon", "radius": 2},
        "loop_x": {"shape": "hexagon", "radius": 2},
    }),
    "fig3c_tee": ("tee", {
        "n_atoms": 36,
        "points": [
            {"label": "rvb", "z1": 0.0, "z2": 0.0},
            {"label": "liquid", "z1": 0.3, "z2": 0.3},
            {"label": "trivial", "limb": "vacuum", "z2": 0.3},
        ],
    }),
    "figS1_protocol_opt": ("sweep", {
        "sizes": [24], "protocol": "two_stage",
        "delta1_grid": [1.2, 1.4, 1.6, 1.8, 2.0],
        "sweep_times": [5, 10, 20, 35, 55, 80, 110],
    }),
    "figS3_bffm_scaling": ("bffm-scaling", {
        "circumference": 6, "z2": 0.1, "z1": [0.2, 0.5, 0.8],
        "loops": [{"shape": "hexagon", "radius": 2},
                  {"shape": "parallelogram", "w": 4, "h": 2},
                  {"shape": "parallelogram", "w": 7, "h": 1}],
    }),
    "figS4_fullmodel": ("sweep", {
        "n_atoms": 24, "model": "full", "delta1": 3.5,
        "sweep_times": [5, 10, 20, 35, 55, 80],
    }),
    "figS5_unprojected": ("tn-grid", {
        "circumference": 6, "projected": False, "compute_xi": True,
        "z1": {"min": 0.05, "max": 1.5, "num": 20},
        "z2": {"min": 0.05, "max": 1.5, "num": 20},
    }),
}

VERBS = {
    "cluster": cmd_cluster,
    "sweep": cmd_sweep,
    "gs-scan": cmd_gs_scan,
    "fit": cmd_fit,
    "tn-grid": cmd_tn_grid,
    "bffm-scaling": cmd_bffm_scaling,
    "tee": cmd_tee,
    "verify": cmd_verify,
}


def run_experiment(name, config_path=None, out_dir=None):
    """Run a named experiment; returns the output directory."""
    if name not in EXPERIMENT_DEFAULTS:
        raise ConfigError("unknown experiment %r (have: %s)"
                          % (name, ", ".join(sorted(EXPERIMENT_DEFAULTS))))
    verb, cfg = EXPERIMENT_DEFAULTS[name]
    cfg = dict(cfg)
    if config_path is not None:
        cfg.update(load_config(config_path))
    out_dir = out_dir or os.path.join(
        os.environ.get(OUTPUT_ROOT_ENV, "runs"), name)
    run = Run(out_dir, name, cfg)
    outputs = VERBS[verb](cfg, run)
    run.finish(outputs)
    return out_dir


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rvbprep",
        description="Blockade-constrained RVB preparation experiments")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--experiment",
                       help="named experiment supplying default config")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, default=0,
                       help="worker threads (0 = library default)")
        p.add_argument("--budget-gib", type=float, default=4.0)
    args = parser.parse_args(argv)

    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = {}
        name = args.experiment
        if name is not None:
            verb, cfg = EXPERIMENT_DEFAULTS.get(name, (None, None))
            if cfg is None:
                raise ConfigError("unknown experiment %r" % name)
            if verb != args.verb:
                raise ConfigError(
                    "experiment %s belongs to verb %s" % (name, verb))
            cfg = dict(cfg)
        if args.config:
            cfg.update(load_config(args.config))
        if not cfg and args.verb != "verify":
            raise ConfigError("provide --config and/or --experiment")
        cfg.setdefault("budget_gib", args.budget_gib)
        out_dir = args.out or os.path.join(
            os.environ.get(OUTPUT_ROOT_ENV, "runs"), name or args.verb)
        run = Run(out_dir, name or args.verb, cfg)
        outputs = VERBS[args.verb](cfg, run)
        run.finish(outputs)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:                      # surface module errors
        print("error: %s" % exc, file=sys.stderr)
        return 1
    print("wrote %s" % out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
