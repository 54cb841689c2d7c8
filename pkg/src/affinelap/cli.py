"""Command-line front end: every solver and diagnostic behind one binary.

Usage: affinelap COMMAND --config cfg.json [--out DIR] [--seed N]
                 [--threads N] [--emit-fields] [--verbose]

Commands: energy, j2-check, invariance, poisson, ground-state, penalty,
critical-check, profiles, liminf.

Reports are deterministic: the same (config, seed) pair produces a
byte-identical report.json (timestamps and environment go to meta.json).
All output files are written atomically (write to a temp name, rename).
Exit codes: 0 success, 2 solver non-convergence, 3 config error, 4 I/O
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, backend, fieldio, grids
from .energy import (affine_energy, affine_sobolev_j2, gram_matrix,
                     j2_by_sphere_integral)
from .errors import ConvergenceError, DegenerateGramError
from .grids import AffineMap, DomainMask, GridSpec, ScalarField
from .profiles import brezis_lieb_masses, extract_profiles, normalize_sequence
from .smallalg import random_unimodular
from .solvers import (SolverConfig, critical_bubble_check, ground_state,
                      pde_residual, penalty_ground_state, rescale_to_pde,
                      solve_affine_poisson)

COMMANDS = ("energy", "j2-check", "invariance", "poisson", "ground-state",
            "penalty", "critical-check", "profiles", "liminf")


class ConfigError(ValueError):
    pass


def _sanitize(obj):
    """Plain-python view of report payloads (deterministic json floats)."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):  # before int: bool is an int subclass
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _matrix_rows(m: np.ndarray) -> list[str]:
    return [" ".join(f"{v:.17g}" for v in row) for row in np.asarray(m)]


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_write_rows(path: Path, header, rows) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# config -> objects


def build_grid(cfg: dict) -> GridSpec:
    try:
        dim = int(cfg["N"]) if "N" in cfg else int(cfg["grid"].get("N"))
    except (KeyError, TypeError):
        raise ConfigError("config needs N (dimension)")
    g = cfg.get("grid")
    if g is None:
        raise ConfigError("config needs a grid section")
    shape = g.get("shape")
    if shape is None:
        raise ConfigError("grid needs a shape")
    if "halfwidth" in g:
        return GridSpec.centered(dim, shape, g["halfwidth"])
    spacing = g.get("spacing")
    if spacing is None:
        raise ConfigError("grid needs spacing or halfwidth")
    return GridSpec(dim, shape, spacing, g.get("origin"))


def build_mask(cfg: dict, grid: GridSpec) -> DomainMask:
    m = cfg.get("mask", {"kind": "full"})
    kind = m.get("kind", "full")
    if kind == "full":
        return DomainMask.full(grid)
    if kind == "box":
        return DomainMask.box(grid, m["lo"], m["hi"])
    if kind == "ball":
        center = m.get("center", [0.0] * grid.dim)
        return DomainMask.ball(grid, center, m["radius"])
    if kind == "file":
        f = _read_field_file(m["path"])
        if f.mask is None:
            raise ConfigError(f"field file {m['path']} carries no mask")
        return f.mask
    raise ConfigError(f"unknown mask kind {kind!r}")


def _read_field_file(path) -> ScalarField:
    if not Path(path).exists():
        raise OSError(f"field file not found: {path}")
    return fieldio.read_afld(path)


def build_field(spec: dict, grid: GridSpec, mask: DomainMask | None = None) -> ScalarField:
    kind = spec.get("kind", "gaussian")
    if kind == "file":
        f = _read_field_file(spec["path"])
        if f.grid.shape != grid.shape:
            raise ConfigError("field file grid does not match configured grid")
        return f
    if kind == "const":
        return ScalarField(grid, np.full(grid.shape, float(spec.get("value", 1.0))), mask)
    mesh = grid.meshgrid()
    center = np.asarray(spec.get("center", [0.0] * grid.dim), dtype=float)
    if kind == "gaussian":
        if "quad" in spec:
            q = np.asarray(spec["quad"], dtype=float)
        else:
            sigma = float(spec.get("sigma", 1.0))
            q = np.eye(grid.dim) / sigma**2
        expo = np.zeros(grid.shape)
        for i in range(grid.dim):
            for j in range(grid.dim):
                expo += q[i, j] * (mesh[i] - center[i]) * (mesh[j] - center[j])
        vals = float(spec.get("amplitude", 1.0)) * np.exp(-0.5 * expo)
        return ScalarField(grid, vals, mask)
    if kind == "well":
        sigma = float(spec.get("sigma", 1.0))
        depth = float(spec.get("depth", 0.5))
        r2 = sum((mesh[i] - center[i]) ** 2 for i in range(grid.dim))
        return ScalarField(grid, 1.0 - depth * np.exp(-r2 / (2 * sigma**2)), mask)
    raise ConfigError(f"unknown field kind {kind!r}")


def build_maps(spec, dim: int) -> list[AffineMap]:
    kind = spec.get("kind", "list")
    if kind == "translation":
        step = np.asarray(spec["step"], dtype=float)
        count = int(spec["count"])
        return [AffineMap(np.eye(dim), (k + 1) * step) for k in range(count)]
    if kind == "diagonal":
        count = int(spec["count"])
        out = []
        for k in range(1, count + 1):
            d = np.ones(dim)
            d[0] = float(k)
            d[1:] = (1.0 / k) ** (1.0 / (dim - 1))
            out.append(AffineMap(np.diag(d)))
        return out
    if kind == "list":
        mats = spec.get("matrices")
        if not mats:
            raise ConfigError("map list needs matrices")
        trs = spec.get("translations") or [[0.0] * dim] * len(mats)
        return [AffineMap(np.asarray(m, dtype=float), np.asarray(t, dtype=float))
                for m, t in zip(mats, trs)]
    raise ConfigError(f"unknown maps kind {kind!r}")


def build_solver_config(cfg: dict, seed: int) -> SolverConfig:
    tol = cfg.get("tolerances", {})
    return SolverConfig(
        p=float(cfg.get("p", 3.0)),
        damping=float(cfg.get("damping", 0.5)),
        outer_tol=float(tol.get("outer", 1e-9)),
        residual_tol=float(tol.get("residual", 1e-6)),
        inner_tol=float(tol.get("inner", 1e-11)),
        max_outer=int(cfg.get("max_outer", 200)),
        seed=seed,
        n_starts=int(cfg.get("seeds", cfg.get("n_starts", 5))
                     if not isinstance(cfg.get("seeds"), list)
                     else len(cfg["seeds"])),
        positivity_projection=bool(cfg.get("positivity_projection", True)),
        box_halfwidth=float(cfg.get("box_halfwidth", 4.0)),
        truncation_check=bool(cfg.get("truncation_check", True)),
    )


# ---------------------------------------------------------------------------
# command implementations: return (results dict, trace rows, fields to emit,
# converged flag)


def run_energy(cfg, seed):
    grid = build_grid(cfg)
    mask = build_mask(cfg, grid) if "mask" in cfg else None
    u = build_field(cfg.get("field", {"kind": "gaussian"}), grid, mask)
    a = gram_matrix(u)
    e2 = affine_energy(a)
    j2 = affine_sobolev_j2(a)
    results = {
        "field_id": cfg.get("field_id", "field0"),
        "N": grid.dim,
        "h": max(grid.spacing),
        "E2": e2,
        "J2": j2,
        "grad_norm_sq": a.grad_norm_sq,
        "det_A": a.det,
        "degenerate_flag": a.degenerate,
        "gram_rows": _matrix_rows(a.entries),
    }
    rows = [(results["field_id"], grid.dim, results["h"], e2, j2,
             a.grad_norm_sq, a.det, int(a.degenerate))]
    header = ("field_id", "N", "h", "E2", "J2", "grad_norm_sq", "det_A",
              "degenerate_flag")
    return results, (header, rows), {"field": u}, True


def run_j2_check(cfg, seed):
    grid = build_grid(cfg)
    u = build_field(cfg.get("field", {"kind": "gaussian"}), grid)
    directions = cfg.get("directions")
    closed = affine_sobolev_j2(gram_matrix(u))
    quad = j2_by_sphere_integral(u, directions, seed=seed)
    rel = abs(quad - closed) / closed if closed else math.inf
    results = {"J2_closed_form": closed, "J2_sphere_quadrature": quad,
               "rel_difference": rel, "directions": directions,
               "agrees_1e3": rel <= 1e-3}
    return results, None, {"field": u}, rel <= 1e-3


def run_invariance(cfg, seed):
    dim = int(cfg.get("N", 2))
    n_pairs = int(cfg.get("pairs", 10))
    cond_cap = float(cfg.get("cond_cap", 3.0))
    shapes = cfg.get("shapes", [65, 129, 257])
    halfwidth = float(cfg.get("halfwidth", 1.0))
    rng = np.random.default_rng(seed)
    levels = []
    for shape in shapes:
        grid = GridSpec.centered(dim, shape, halfwidth)
        errs = []
        for k in range(n_pairs):
            u = _seeded_bump(grid, rng)
            t = random_unimodular(rng, dim, cond_cap)
            a_u = gram_matrix(u).entries
            a_ut = gram_matrix(grids.resample(u, AffineMap(t))).entries
            errs.append(float(np.linalg.norm(a_ut - t.T @ a_u @ t)
                              / np.linalg.norm(a_u)))
        levels.append({"shape": shape, "h": max(grid.spacing),
                       "max_err": max(errs), "mean_err": float(np.mean(errs))})
    decreasing = all(levels[i + 1]["max_err"] < levels[i]["max_err"]
                     for i in range(len(levels) - 1))
    results = {"levels": levels, "decreasing": decreasing,
               "final_max_err": levels[-1]["max_err"]}
    rows = [(lv["shape"], lv["h"], lv["max_err"], lv["mean_err"]) for lv in levels]
    return results, (("shape", "h", "max_err", "mean_err"), rows), {}, decreasing


def _seeded_bump(grid, rng):
    mesh = grid.meshgrid()
    lo, hi = grid.bounds()
    half = 0.5 * (hi - lo)
    c = 0.5 * (lo + hi) + (rng.random(grid.dim) - 0.5) * 0.16 * half
    vals = np.zeros(grid.shape)
    for _ in range(2):
        sig = (0.14 + 0.1 * rng.random(grid.dim)) * half
        cc = c + (rng.random(grid.dim) - 0.5) * 0.1 * half
        r2 = sum(((mesh[i] - cc[i]) / sig[i]) ** 2 for i in range(grid.dim))
        vals += (0.5 + rng.random()) * np.exp(-0.5 * r2)
    t = np.ones(grid.shape)
    for i in range(grid.dim):
        s = np.clip((np.abs(mesh[i] - 0.5 * (lo + hi)[i]) / half[i] - 0.4) / 0.1,
                    0.0, 1.0)
        t *= 1.0 - s**3 * (10 - 15 * s + 6 * s * s)
    return ScalarField(grid, vals * t)


def _solver_results(rep, extra=None):
    res = {
        "objective": rep.objective,
        "converged": rep.converged,
        "iterations": rep.iterations,
        "pde_residual": rep.pde_residual,
        "lagrange_multiplier": rep.lagrange_multiplier,
        "gram_rows": _matrix_rows(rep.gram.entries),
        "det_A": rep.gram.det,
        "flags": dict(rep.flags),
        "starts": list(rep.starts),
    }
    if extra:
        res.update(extra)
    return res


def run_poisson(cfg, seed):
    grid = build_grid(cfg)
    mask = build_mask(cfg, grid)
    f = build_field(cfg.get("f", {"kind": "gaussian"}), grid, mask)
    scfg = build_solver_config(cfg, seed)
    rep = solve_affine_poisson(f, mask, scfg)
    results = _solver_results(rep, {"kappa_f": rep.objective})
    rows = [(t["iter"], t["residual"], t["objective"]) for t in rep.trace]
    fields = {"minimizer": rep.minimizer, "data": f}
    return results, (("iter", "residual_norm", "energy"), rows), fields, rep.converged


def run_ground_state(cfg, seed):
    grid = build_grid(cfg)
    mask = build_mask(cfg, grid)
    scfg = build_solver_config(cfg, seed)
    rep = ground_state(scfg.p, mask, scfg)
    w = rescale_to_pde(rep.minimizer, rep.lagrange_multiplier, scfg.p, "dirichlet") \
        if rep.lagrange_multiplier and rep.lagrange_multiplier > 0 else rep.minimizer
    post = pde_residual(w, scfg.p, mask, "dirichlet")
    interior_min = float(rep.minimizer.values[mask.interior].min())
    results = _solver_results(rep, {
        "kappa_p": rep.objective, "p": scfg.p,
        "post_rescale_residual": post,
        "interior_min": interior_min,
        "positive_interior": interior_min > 0.0,
    })
    rows = [(t["iter"], t["residual"], t["objective"]) for t in rep.trace]
    return results, (("iter", "residual_norm", "energy"), rows), \
        {"minimizer": rep.minimizer, "rescaled": w}, rep.converged


def run_penalty(cfg, seed):
    grid = build_grid(cfg)
    v = build_field(cfg.get("V", {"kind": "const", "value": 1.0}), grid)
    scfg = build_solver_config(cfg, seed)
    rep = penalty_ground_state(v, scfg.p, scfg)
    mask = DomainMask.full(grid)
    w = rescale_to_pde(rep.minimizer, rep.lagrange_multiplier, scfg.p, "penalty") \
        if rep.lagrange_multiplier and rep.lagrange_multiplier > 0 else rep.minimizer
    post = pde_residual(w, scfg.p, mask, "penalty", v.values)
    results = _solver_results(rep, {
        "kappa_prime": rep.objective, "p": scfg.p,
        "post_rescale_residual": post,
    })
    rows = [(t["iter"], t["residual"], t["objective"]) for t in rep.trace]
    return results, (("iter", "residual_norm", "energy"), rows), \
        {"minimizer": rep.minimizer, "potential": v}, rep.converged


def run_critical_check(cfg, seed):
    dim = int(cfg.get("N", 3))
    kw = {}
    if "shape" in cfg:
        kw["shape"] = int(cfg["shape"])
    if "halfwidth" in cfg:
        kw["halfwidth"] = float(cfg["halfwidth"])
    if "lam" in cfg:
        kw["lam"] = float(cfg["lam"])
    transforms = None
    if "transforms" in cfg:
        transforms = build_maps({"kind": "list", "matrices": cfg["transforms"]}, dim)
    rep = critical_bubble_check(dim, transforms, **kw)
    results = {
        "quotient_at_identity": rep.quotient_at_identity,
        "max_spread": rep.max_spread,
        "transforms": [
            {"matrix_rows": _matrix_rows(r.matrix),
             "affine_quotient": r.affine_quotient,
             "gradient_quotient": r.gradient_quotient}
            for r in rep.results
        ],
    }
    rows = [(i, r.affine_quotient, r.gradient_quotient)
            for i, r in enumerate(rep.results)]
    return results, (("transform", "affine_quotient", "gradient_quotient"), rows), \
        {}, True


def run_profiles(cfg, seed):
    grid = build_grid(cfg)
    p = float(cfg.get("p", 4.0))
    seq_spec = cfg.get("sequence")
    if not seq_spec:
        raise ConfigError("profiles command needs a sequence section")
    seq = _build_sequence(seq_spec, grid, p)
    items, skipped = normalize_sequence(seq)
    normalized_fields = [it.field for it in items]
    kw = {}
    for key in ("max_profiles", "threshold", "tail", "scale_range", "reference_width"):
        if key in cfg:
            kw[key] = cfg[key]
    res = extract_profiles(normalized_fields, p, **kw)
    account = brezis_lieb_masses(res.items, seq, p)
    results = res.report_dict()
    results.update({
        "skipped_elements": skipped,
        "masses": account.masses,
        "mass_total": account.total,
        "mass_deficit": account.deficit,
        "energy_sum": account.energy_sum,
        "energy_bound": account.energy_bound,
    })
    fields = {f"profile{i}": it.profile for i, it in enumerate(res.items)}
    return results, None, fields, True


def _build_sequence(spec, grid, p):
    kind = spec.get("kind")
    if kind == "files":
        return [_read_field_file(pth) for pth in spec["paths"]]
    if kind == "translating_bump":
        count = int(spec.get("count", 6))
        sigma = float(spec.get("sigma", 0.5))
        step = np.asarray(spec.get("step", [1.0] + [0.0] * (grid.dim - 1)), dtype=float)
        start = np.asarray(spec.get("start", [0.0] * grid.dim), dtype=float)
        mesh = grid.meshgrid()
        out = []
        for k in range(count):
            c = start + k * step
            r2 = sum((mesh[i] - c[i]) ** 2 for i in range(grid.dim))
            u = ScalarField(grid, np.exp(-r2 / (2 * sigma**2)))
            out.append(ScalarField(grid, u.values / grids.lp_norm(u, p)))
        return out
    raise ConfigError(f"unknown sequence kind {kind!r}")


def run_liminf(cfg, seed):
    grid = build_grid(cfg)
    mask = build_mask(cfg, grid)
    maps = build_maps(cfg.get("maps", {}), grid.dim)
    samples = int(cfg.get("samples", 100_000))
    prefixes = cfg.get("prefixes")
    if prefixes is None:
        prefixes = [int(cfg.get("prefix", 1))]
    estimates = []
    for n in prefixes:
        est = grids.liminf_measure_estimate(mask, maps, int(n), samples, seed=seed)
        estimates.append({
            "prefix": est.prefix, "measure": est.measure,
            "std_error": est.std_error, "samples": est.n_samples,
            "window_lo": list(map(float, est.window_lo)),
            "window_hi": list(map(float, est.window_hi)),
            "window_empty": est.window_empty,
        })
    results = {"domain_volume": mask.volume, "estimates": estimates}
    rows = [(e["prefix"], e["measure"], e["std_error"]) for e in estimates]
    return results, (("prefix", "measure", "std_error"), rows), {}, True


RUNNERS = {
    "energy": run_energy,
    "j2-check": run_j2_check,
    "invariance": run_invariance,
    "poisson": run_poisson,
    "ground-state": run_ground_state,
    "penalty": run_penalty,
    "critical-check": run_critical_check,
    "profiles": run_profiles,
    "liminf": run_liminf,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(__doc__)
        return 0
    command = argv[0]
    if command not in COMMANDS:
        print(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}",
              file=sys.stderr)
        return 3
    parser = argparse.ArgumentParser(prog=f"affinelap {command}")
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="out")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--emit-fields", action="store_true")
    parser.add_argument("--verbose", "-v", action="store_true")
    try:
        args = parser.parse_args(argv[1:])
    except SystemExit:
        return 3
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    t0 = time.monotonic()
    try:
        with open(args.config) as f:
            cfg = json.load(f)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3

    solver_failed = False
    error_note = None
    try:
        results, trace, fields, converged = RUNNERS[command](cfg, seed)
    except (ConfigError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, DegenerateGramError) as exc:
        # invalid numerical configuration discovered while building the run
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        results, trace, fields, converged = {"error": str(exc)}, None, {}, False
        solver_failed = True
        error_note = str(exc)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4

    report = {
        "command": command,
        "seed": seed,
        "config": _sanitize(cfg),
        "converged": bool(converged),
        "results": _sanitize(results),
    }
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(out / "report.json",
                           json.dumps(report, sort_keys=True, indent=2) + "\n")
        if trace is not None:
            header, rows = trace
            _atomic_write_rows(out / "trace.csv", header,
                               [[_fmt_cell(c) for c in row] for row in rows])
        if args.emit_fields and fields:
            fdir = out / "fields"
            fdir.mkdir(exist_ok=True)
            for name, fld in fields.items():
                tmp = fdir / f"{name}.afld.tmp-{os.getpid()}"
                fieldio.write_afld(tmp, fld)
                os.replace(tmp, fdir / f"{name}.afld")
        meta = {
            "version": __version__,
            "backend": backend.BACKEND,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
            "wall_time_s": time.monotonic() - t0,
            "threads": args.threads,
            "error": error_note,
        }
        _atomic_write_text(out / "meta.json", json.dumps(meta, sort_keys=True,
                                                         indent=2) + "\n")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    if args.verbose:
        print(json.dumps(report["results"], sort_keys=True, indent=2))
    if solver_failed or not converged:
        return 2
    return 0


def _fmt_cell(c):
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    return c


if __name__ == "__main__":
    sys.exit(main())
