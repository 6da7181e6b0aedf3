"""Batch experiment runner.

Experiments are described by flat INI-style config files (diff-able,
hand-editable) with one section per concern; `run` executes exactly one
experiment kind and writes CSV artifacts, field snapshots, and a plain-text
manifest into the output directory. All randomness flows from the single
seed in the config, so a fixed config produces byte-identical CSV output.

    b4nls run <config> [--output DIR]
    b4nls validate <config>
    b4nls describe <experiment>
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .regions import Ball, FullRegion, RegionUnion, Strip
from .spectral import (
    SpectralField,
    basis_field,
    make_damping_profile,
    make_torus,
    normalize_sobolev,
    random_field,
    zero_field,
)
from .dynamics import (
    EvolutionTrace,
    SolverConfig,
    audit_dissipation,
    energy,
    evolve_damped,
    evolve_nonlinear,
    fit_decay_rate,
    mass,
    save_trace,
)
from .hum import ControlProblem, solve_linear_control, solve_nonlinear_control
from .observability import gramian_sweep
from .gcc import torus_gcc_time
from .resonance import counting_sweep
from .bourgain import duhamel_gain_probe, trilinear_constant_probe

EXPERIMENTS = (
    "simulate",
    "stabilize",
    "control-linear",
    "control-nonlinear",
    "observability-sweep",
    "gcc-check",
    "resonance-sweep",
    "bourgain-probe",
)


class ConfigError(ValueError):
    pass


def _get(cfg, section, key, cast, default=None, required=False):
    try:
        raw = cfg.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError):
        if required:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default
    if raw.strip() == "":
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc


def _load_config(path):
    cfg = configparser.ConfigParser()
    read = cfg.read(path)
    if not read:
        raise ConfigError(f"cannot read config {path}")
    return cfg


def _build_spec(cfg):
    d = _get(cfg, "manifold", "d", int, 1)
    N = _get(cfg, "manifold", "N", int, 64)
    beta = _get(cfg, "manifold", "beta", float, 1.0)
    return make_torus(d, N, beta)


def _build_region(cfg, d):
    kind = _get(cfg, "region", "type", str, "strip")
    if kind == "full":
        return FullRegion()
    if kind == "strip":
        lo = _get(cfg, "region", "lo", float, math.pi / 2)
        hi = _get(cfg, "region", "hi", float, 3 * math.pi / 2)
        axis = _get(cfg, "region", "axis", int, 0)
        return Strip(lo, hi, axis)
    if kind == "ball":
        r = _get(cfg, "region", "radius", float, required=True)
        cx = _get(cfg, "region", "center_x", float, math.pi)
        cy = _get(cfg, "region", "center_y", float, math.pi)
        center = (cx,) if d == 1 else (cx, cy)
        return Ball(center, r)
    if kind == "two-strips":
        lo = _get(cfg, "region", "lo", float, 0.0)
        hi = _get(cfg, "region", "hi", float, 1.0)
        return RegionUnion((Strip(lo, hi, 0), Strip(lo, hi, 1)))
    raise ConfigError(f"unknown region type {kind!r}")


def _build_datum(cfg, spec, rng) -> SpectralField:
    kind = _get(cfg, "run", "datum", str, "random")
    norm = _get(cfg, "run", "datum_norm", float, 1.0)
    if kind == "zero":
        return zero_field(spec)
    if kind == "plane-wave":
        mode = _get(cfg, "run", "datum_mode", int, 1)
        amp = _get(cfg, "run", "datum_amplitude", float, 1.0)
        k = mode if spec.d == 1 else (mode,) * spec.d
        return basis_field(spec, k, amp)
    if kind == "random":
        decay = _get(cfg, "run", "datum_decay", float, 4.0)
        band = _get(cfg, "run", "datum_band", int, None)
        u = random_field(spec, rng, decay=decay, band=band)
        return normalize_sobolev(u, 2.0, norm)
    raise ConfigError(f"unknown datum kind {kind!r}")


def _build_solver(cfg) -> SolverConfig:
    return SolverConfig(
        dt=_get(cfg, "solver", "dt", float, 1e-3),
        scheme=_get(cfg, "solver", "scheme", str, "etdrk4"),
        k_nl=_get(cfg, "solver", "k_nl", int, 1),
        record_stride=_get(cfg, "solver", "record_stride", int, 1),
    )


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def _control_trace(spec, times, samples, k_nl) -> EvolutionTrace:
    masses = [mass(spec, c) for c in samples]
    energies = [energy(spec, c, k_nl, include_potential=False) for c in samples]
    return EvolutionTrace(
        spec=spec,
        times=np.asarray(times),
        states=np.asarray(samples),
        masses=np.asarray(masses),
        energies=np.asarray(energies),
        fluxes=np.zeros(len(times)),
        damped=False,
        k_nl=k_nl,
    )


# ---------------------------------------------------------------------------
# experiment bodies: each returns a list of artifact names it wrote
# ---------------------------------------------------------------------------

def _run_simulate(cfg, outdir, rng):
    spec = _build_spec(cfg)
    solver = _build_solver(cfg)
    u0 = _build_datum(cfg, spec, rng)
    T = _get(cfg, "run", "T", float, 1.0)
    trace = evolve_nonlinear(u0, T, solver)
    stride = _get(cfg, "run", "snapshot_stride", int, max(1, trace.n_records // 10))
    save_trace(trace, outdir, snapshot_stride=stride)
    dm = abs(trace.masses[-1] - trace.masses[0]) / max(trace.masses[0], 1e-300)
    de = abs(trace.energies[-1] - trace.energies[0]) / max(abs(trace.energies[0]), 1e-300)
    _write_csv(
        os.path.join(outdir, "summary.csv"),
        ["T", "mass_drift", "energy_drift"],
        [[float(T), float(dm), float(de)]],
    )
    return ["ledger.csv", "summary.csv"]


def _run_stabilize(cfg, outdir, rng):
    spec = _build_spec(cfg)
    solver = _build_solver(cfg)
    u0 = _build_datum(cfg, spec, rng)
    T = _get(cfg, "run", "T", float, 20.0)
    region = _build_region(cfg, spec.d)
    width = _get(cfg, "region", "smoothing_width", float, None)
    profile = make_damping_profile(spec, region, width)
    trace = evolve_damped(u0, profile, T, solver)
    stride = _get(cfg, "run", "snapshot_stride", int, max(1, trace.n_records // 10))
    save_trace(trace, outdir, snapshot_stride=stride)
    aud = audit_dissipation(trace)
    fit = fit_decay_rate(trace.times, trace.energies)
    _write_csv(
        os.path.join(outdir, "decay_summary.csv"),
        ["gamma", "r_squared", "E0", "ET", "audit_lhs", "audit_rhs", "audit_mismatch"],
        [[fit.gamma, fit.r_squared, float(trace.energies[0]), float(trace.energies[-1]),
          aud.lhs, aud.rhs, aud.mismatch]],
    )
    return ["ledger.csv", "decay_summary.csv"]


def _control_problem(cfg, spec, u0, rng):
    region = _build_region(cfg, spec.d)
    width = _get(cfg, "region", "smoothing_width", float, None)
    phi = make_damping_profile(spec, region, width)
    return ControlProblem(
        spec=spec,
        u0=u0,
        T=_get(cfg, "run", "T", float, 1.0),
        phi=phi,
        k_nl=_get(cfg, "solver", "k_nl", int, 1),
        cg_tol=_get(cfg, "control", "cg_tol", float, 1e-9),
        cg_max_iter=_get(cfg, "control", "cg_max_iter", int, 600),
        fixedpoint_tol=_get(cfg, "control", "fixedpoint_tol", float, 1e-8),
        control_band=_get(cfg, "control", "control_band", int, None),
        verify_dt=_get(cfg, "control", "verify_dt", float, 1e-4),
        solve_dt=_get(cfg, "control", "solve_dt", float, 1e-3),
    )


def _run_control_linear(cfg, outdir, rng):
    spec = _build_spec(cfg)
    u0 = _build_datum(cfg, spec, rng)
    prob = _control_problem(cfg, spec, u0, rng)
    cert = solve_linear_control(prob)
    _write_csv(
        os.path.join(outdir, "certificate.csv"),
        ["iteration", "residual", "contraction_ratio"],
        [[int(cert.cg_iterations[0]), cert.terminal_residual, 0.0]],
    )
    ctrace = _control_trace(spec, cert.control_times, cert.control_samples, prob.k_nl)
    save_trace(ctrace, os.path.join(outdir, "control"), snapshot_stride=25)
    _write_csv(
        os.path.join(outdir, "summary.csv"),
        ["terminal_residual", "relative_residual", "integrator_residual", "cg_iterations"],
        [[cert.terminal_residual, cert.relative_residual,
          float(cert.integrator_residual), int(cert.cg_iterations[0])]],
    )
    return ["certificate.csv", "summary.csv", "control/ledger.csv"]


def _run_control_nonlinear(cfg, outdir, rng):
    spec = _build_spec(cfg)
    u0 = _build_datum(cfg, spec, rng)
    prob = _control_problem(cfg, spec, u0, rng)
    cert = solve_nonlinear_control(prob)
    rows = []
    for i, diff in enumerate(cert.fixedpoint_diffs):
        ratio = cert.contraction_ratios[i - 1] if i >= 1 else 0.0
        rows.append([i, float(diff), float(ratio)])
    _write_csv(
        os.path.join(outdir, "certificate.csv"),
        ["iteration", "residual", "contraction_ratio"],
        rows,
    )
    ctrace = _control_trace(spec, cert.control_times, cert.control_samples, prob.k_nl)
    save_trace(ctrace, os.path.join(outdir, "control"), snapshot_stride=25)
    _write_csv(
        os.path.join(outdir, "summary.csv"),
        ["terminal_residual", "relative_residual", "iterations"],
        [[cert.terminal_residual, cert.relative_residual, len(cert.fixedpoint_diffs)]],
    )
    return ["certificate.csv", "summary.csv", "control/ledger.csv"]


def _run_observability(cfg, outdir, rng):
    spec = _build_spec(cfg)
    region = _build_region(cfg, spec.d)
    width = _get(cfg, "region", "smoothing_width", float, None)
    T = _get(cfg, "run", "T", float, 1.0)
    j_raw = _get(cfg, "sweep", "j_values", str, "2,3,4,5,6")
    j_values = [int(x) for x in j_raw.split(",")]
    quad_dt = _get(cfg, "sweep", "quad_dt", float, 1e-3)
    reports = gramian_sweep(spec, region, T, j_values, quad_dt, width)
    _write_csv(
        os.path.join(outdir, "gramian.csv"),
        ["h", "band_dim", "T", "min_eig", "max_eig", "iters"],
        [[r.h, r.band_dim, r.T, r.min_eig, r.max_eig, r.lanczos_iterations]
         for r in reports],
    )
    return ["gramian.csv"]


def _run_gcc(cfg, outdir, rng):
    spec_d = _get(cfg, "manifold", "d", int, 2)
    region = _build_region(cfg, spec_d)
    scan = torus_gcc_time(
        region,
        spec_d,
        t_max=_get(cfg, "gcc", "t_max", float, 50.0),
        starts_per_dim=_get(cfg, "gcc", "starts_per_dim", int, 8),
        farey_max_den=_get(cfg, "gcc", "farey_max_den", int, 6),
        n_angles=_get(cfg, "gcc", "n_angles", int, 32),
        eps_t=_get(cfg, "gcc", "eps_t", float, 1e-4),
    )
    rows = []
    for rec in scan.records:
        rows.append([
            " ".join(repr(float(x)) for x in rec.start),
            " ".join(repr(float(x)) for x in rec.direction),
            repr(float(rec.hit_time)) if rec.hit_time is not None else "miss",
        ])
    _write_csv(os.path.join(outdir, "geodesics.csv"), ["x0", "theta", "hit_time"], rows)
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        if scan.holds_on_sample:
            fh.write(f"gcc holds on the sampled family\nT0 = {scan.t0!r}\n")
        else:
            w = scan.witness
            fh.write(
                "gcc fails: witness geodesic\n"
                f"start = {w.start!r}\ndirection = {w.direction!r}\n"
                f"t_max = {w.t_max!r}\n"
            )
    return ["geodesics.csv", "summary.txt"]


def _run_resonance(cfg, outdir, rng):
    K_max = _get(cfg, "sweep", "K_max", int, 1024)
    p = _get(cfg, "sweep", "beta_p", int, 0)
    q = _get(cfg, "sweep", "beta_q", int, 1)
    sweep = counting_sweep(K_max, p, q)
    _write_csv(
        os.path.join(outdir, "resonance.csv"),
        ["K", "tau_numerator", "tau_denominator", "count"],
        [list(row) for row in sweep.rows],
    )
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        fh.write(f"beta = {p}/{q}\n")
        fh.write(f"dyadic_K = {list(sweep.dyadic_K)!r}\n")
        fh.write(f"max_counts = {list(sweep.max_counts)!r}\n")
        fh.write(f"growth_exponent = {sweep.growth_exponent!r}\n")
    return ["resonance.csv", "summary.txt"]


def _run_bourgain(cfg, outdir, rng):
    spec = _build_spec(cfg)
    b = _get(cfg, "sweep", "b", float, 0.55)
    bp = _get(cfg, "sweep", "b_prime", float, 0.45)
    samples = _get(cfg, "sweep", "samples", int, 20)
    gain = duhamel_gain_probe(b, bp, n_samples=samples, rng=rng)
    s = _get(cfg, "sweep", "s", float, 2.0)
    tri_bp = min(bp, 0.49)
    tri = trilinear_constant_probe(
        spec, s, tri_bp, max(4, samples // 4), rng,
        M_t=_get(cfg, "sweep", "M_t", int, 128),
        space_band=_get(cfg, "sweep", "space_band", int, None),
        time_band=_get(cfg, "sweep", "time_band", int, 8),
    )
    rows = [["gain_T_" + repr(float(T)), r] for T, r in zip(gain.T_values, gain.max_ratios)]
    rows.append(["gain_fitted_exponent", gain.fitted_exponent])
    rows.append(["gain_target_exponent", 1.0 - b - bp])
    rows.append(["trilinear_max_ratio", tri.max_ratio])
    _write_csv(os.path.join(outdir, "probe.csv"), ["name", "value"], rows)
    return ["probe.csv"]


_RUNNERS = {
    "simulate": _run_simulate,
    "stabilize": _run_stabilize,
    "control-linear": _run_control_linear,
    "control-nonlinear": _run_control_nonlinear,
    "observability-sweep": _run_observability,
    "gcc-check": _run_gcc,
    "resonance-sweep": _run_resonance,
    "bourgain-probe": _run_bourgain,
}

_DESCRIPTIONS = {
    "simulate": "free/nonlinear evolution; ledger.csv + snapshots + summary.csv",
    "stabilize": "damped evolution; ledger.csv + decay_summary.csv (fit + dissipation audit)",
    "control-linear": "HUM synthesis for the linear flow; certificate.csv + control trace",
    "control-nonlinear": "local nonlinear control fixed point; certificate.csv + control trace",
    "observability-sweep": "band Gramian minimum eigenvalues over h = 2^-j; gramian.csv",
    "gcc-check": "geodesic first-entry scan; geodesics.csv + summary.txt",
    "resonance-sweep": "dyadic resonance counting; resonance.csv + summary.txt",
    "bourgain-probe": "time-integration gain and cubic bound probes; probe.csv",
}

_KEYS = {
    "simulate": "[manifold] d,N,beta  [solver] dt,scheme,k_nl  [run] T,datum,...",
    "stabilize": "[manifold] + [region] type,lo,hi/...,smoothing_width + [solver] + [run] T",
    "control-linear": "[manifold] + [region] + [run] T,datum_band + [control] cg_tol,control_band,verify_dt",
    "control-nonlinear": "as control-linear plus [control] fixedpoint_tol, datum_norm small",
    "observability-sweep": "[manifold] + [region] + [run] T + [sweep] j_values,quad_dt",
    "gcc-check": "[manifold] d + [region] + [gcc] t_max,eps_t,starts_per_dim,farey_max_den,n_angles",
    "resonance-sweep": "[sweep] K_max,beta_p,beta_q",
    "bourgain-probe": "[manifold] + [sweep] b,b_prime,s,samples,M_t,space_band,time_band",
}


def validate_config(path) -> dict:
    """Parse and construct everything an experiment needs, without running."""
    cfg = _load_config(path)
    kind = _get(cfg, "experiment", "kind", str, required=True)
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {kind!r}; choose from {EXPERIMENTS}")
    seed = _get(cfg, "experiment", "seed", int, 0)
    rng = np.random.default_rng(seed)
    # construct the pieces so precondition violations surface here
    if kind in ("simulate", "stabilize", "control-linear", "control-nonlinear",
                "observability-sweep", "bourgain-probe"):
        spec = _build_spec(cfg)
        if kind in ("simulate", "stabilize", "control-linear", "control-nonlinear"):
            _build_solver(cfg)
            _build_datum(cfg, spec, rng)
        if kind in ("stabilize", "control-linear", "control-nonlinear",
                    "observability-sweep"):
            region = _build_region(cfg, spec.d)
            width = _get(cfg, "region", "smoothing_width", float, None)
            make_damping_profile(spec, region, width)
    if kind == "gcc-check":
        _build_region(cfg, _get(cfg, "manifold", "d", int, 2))
    if kind == "resonance-sweep":
        K_max = _get(cfg, "sweep", "K_max", int, 1024)
        if K_max < 1 or K_max & (K_max - 1) != 0:
            raise ConfigError("K_max must be a power of two")
    return {"kind": kind, "seed": seed}


def run_config(path, output=None) -> str:
    """Validate, run, and write artifacts; returns the output directory."""
    t0 = time.time()
    info = validate_config(path)
    cfg = _load_config(path)
    outdir = output or _get(cfg, "experiment", "output", str, None)
    if outdir is None:
        raise ConfigError("no output directory (set [experiment] output or --output)")
    os.makedirs(outdir, exist_ok=True)
    if not os.access(outdir, os.W_OK):
        raise ConfigError(f"output directory {outdir} is not writable")
    rng = np.random.default_rng(info["seed"])
    artifacts = _RUNNERS[info["kind"]](cfg, outdir, rng)
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    with open(os.path.join(outdir, "manifest.txt"), "w") as fh:
        fh.write(f"experiment: {info['kind']}\n")
        fh.write(f"config: {os.path.abspath(path)}\n")
        fh.write(f"config_sha256: {digest}\n")
        fh.write(f"seed: {info['seed']}\n")
        fh.write(f"b4nls_version: {__version__}\n")
        fh.write(f"numpy_version: {np.__version__}\n")
        fh.write(f"wall_time_s: {time.time() - t0:.3f}\n")
        fh.write("artifacts:\n")
        for a in artifacts:
            fh.write(f"  - {a}\n")
    return outdir


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="b4nls", description="fourth-order NLS spectral laboratory"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--output", default=None)
    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("config")
    p_desc = sub.add_parser("describe", help="describe an experiment kind")
    p_desc.add_argument("experiment", choices=EXPERIMENTS)
    args = parser.parse_args(argv)

    try:
        if args.command == "validate":
            info = validate_config(args.config)
            print(f"ok: {info['kind']} (seed {info['seed']})")
            return 0
        if args.command == "describe":
            print(f"{args.experiment}: {_DESCRIPTIONS[args.experiment]}")
            print(f"keys: {_KEYS[args.experiment]}")
            return 0
        outdir = run_config(args.config, args.output)
        print(f"wrote {outdir}")
        return 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
