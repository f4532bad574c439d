"""Experiment orchestration and the ``chow-balance`` command line.

Every number in a report comes from the library modules; this layer only
wires configs to calls, persists results and chooses exit codes::

    0  converged / verified
    1  error (including malformed configs)
    2  diverged or failed verification
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .cache import ArrayCache, cached_grid, cached_gram
from .chow_characters import verify_character_identity
from .embedded_variety import integrate_gram
from .moment_maps import Integrator, character_F, character_F_sigma, functional_G, mu0
from .report import SCHEMA, checked, to_jsonable, write_json, write_trace
from .solvers import (CONVERGED, DIVERGED, SolverOptions, solve_optimal_weight,
                      solve_relative_balanced, solve_sigma_balanced, verify_theorem_equivalence)
from .torus_action import (basis_g_T_perp, basis_t, basis_t_tilde, build_torus, extremal_vector,
                           random_block_element, subspace_equal, twisted_t_tilde)

logger = logging.getLogger("chow_balance")

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2
VOLUME_TOL = 1e-3
T_SIGMA_TOL = 1e-6
ORBIT_SAMPLES = 10
# floor for the constancy tolerance where quadrature is exact (point configurations)
ROUNDOFF_FLOOR = 1e-10


def library_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunReport:
    payload: dict
    exit_code: int
    out_dir: Path
    traces: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    @property
    def status(self):
        return self.payload["status"]

    @property
    def results(self):
        return self.payload["results"]


class CachedIntegrator(Integrator):
    """Integrator whose Gram forms go through the on-disk cache."""

    def __init__(self, variety, grid, deterministic, cache, variety_section, grid_section):
        super().__init__(variety, grid, deterministic)
        self.store = cache
        self.sections = (variety_section, grid_section)

    def gram(self, g=None):
        if self.variety.n == 0 or self.store is None:
            return super().gram(g)
        key = None if g is None else np.asarray(g, dtype=complex).tobytes()
        if key not in self._cache:
            gg = np.eye(self.variety.dim, dtype=complex) if g is None else g

            def compute():
                self.evaluations += 1
                return integrate_gram(self.variety, gg, self.grid, self.deterministic)

            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = cached_gram(self.store, *self.sections, gg, self.deterministic, compute)
        return self._cache[key]


class _Context:
    def __init__(self, config: cfgmod.ExperimentConfig, cache: ArrayCache | None):
        self.config = config
        self.cache = cache
        self.variety, self.td = cfgmod.build_variety(config.variety)
        self.start = None if config.start is None else cfgmod.parse_matrix(config.start, "start")
        self.opts = config.solver
        self.integrator = self.make_integrator(config.grid["radial"], config.grid["angular"])

    def make_integrator(self, radial, angular):
        grid = None
        gsec = None
        if self.variety.n > 0:
            remap = float(self.config.grid.get("remap", 1.0))
            if self.cache is not None:
                grid = cached_grid(self.cache, self.variety.n, int(radial), int(angular), remap)
            else:
                grid = cfgmod.build_grid(self.variety.n, int(radial), int(angular), remap)
            gsec = {"radial": int(radial), "angular": int(angular), "remap": remap}
        return CachedIntegrator(self.variety, grid, self.config.deterministic, self.cache,
                                self.config.variety, gsec)

    def stages(self):
        """Integrators for the refinement schedule followed by the main grid."""
        if self.variety.n == 0:
            return [self.integrator]
        return [self.make_integrator(r, a) for r, a in self.opts.refinement] + [self.integrator]

    def quadrature_error(self, g=None):
        it = self.integrator
        return it.error_estimate(lambda i, h: i.gram(h)[0], g)


def _trace_summary(trace, tol):
    return {
        "status": trace.status,
        "iterations": len(trace.records) - 1,
        "final_residual": checked(trace.final_residual, tol, passed=trace.status == CONVERGED),
        "message": trace.message,
    }


def _task_volume(ctx):
    M, mass = ctx.integrator.gram(ctx.start)
    err = ctx.quadrature_error(ctx.start)
    d = ctx.variety.degree
    res = {
        "degree": d,
        "mass": checked(mass, VOLUME_TOL, reference=float(d)),
        "quadrature_error_estimate": err,
        "nodes": 0 if ctx.integrator.grid is None else len(ctx.integrator.grid),
    }
    return res, res["mass"]["passed"], {}


def _task_moment(ctx):
    it = ctx.integrator
    m = mu0(it, ctx.start)
    err = it.error_estimate(lambda i, h: mu0(i, h).value, ctx.start)
    mu_t = extremal_vector(m.value, ctx.td)
    chars = [character_F(it, ctx.start, None, xi, ctx.td) for xi in basis_t(ctx.td).elements]
    res = {
        "mass": m.mass,
        "mu0": m.value,
        "mu0_norm": checked(float(np.linalg.norm(m.value)), max(err, ROUNDOFF_FLOOR), passed=True),
        "mu_T": mu_t,
        "characters_on_t_basis": chars,
        "quadrature_error_estimate": err,
        "relative_residual": float(np.linalg.norm(m.value - mu_t) / m.mass),
    }
    return res, True, {}


def _optimal_weight(ctx, it=None):
    return solve_optimal_weight(it or ctx.integrator, ctx.td, None, ctx.opts, ctx.start)


def _task_optimal_weight(ctx):
    a, sigma, trace = _optimal_weight(ctx)
    res = {"optimal_weight": _trace_summary(trace, ctx.opts.tol), "a_star": a,
           "sigma_star": np.diag(sigma).real}
    if trace.status == DIVERGED:
        res["destabilizing_ray"] = trace.ray
    else:
        res["G_sigma"] = functional_G(ctx.integrator, ctx.start, None, a, ctx.td)
    return res, trace.status == CONVERGED, {"optimal_weight": trace}


def _staged(ctx, solve):
    """Run ``solve(integrator, g0)`` along the refinement schedule, warm-starting."""
    g = ctx.start
    traces = {}
    stages = ctx.stages()
    for i, it in enumerate(stages):
        g, trace = solve(it, g)
        name = "balance" if i == len(stages) - 1 else f"balance_stage{i}"
        traces[name] = trace
        if trace.status == DIVERGED:
            break
    return g, trace, traces


def _task_balance(ctx):
    mode = ctx.config.mode
    opts = ctx.opts
    res = {"mode": mode}
    traces = {}
    if mode == "absolute":
        trivial = build_torus([0] * ctx.variety.dim)
        sigma = np.eye(ctx.variety.dim, dtype=complex)
        g, trace, traces = _staged(ctx, lambda it, g0: solve_sigma_balanced(it, sigma, None, opts, g0, trivial))
    elif mode == "relative":
        g, trace, traces = _staged(ctx, lambda it, g0: solve_relative_balanced(it, ctx.td, None, opts, g0))
    else:
        a, sigma, ow = _optimal_weight(ctx)
        traces["optimal_weight"] = ow
        res["optimal_weight"] = _trace_summary(ow, opts.tol)
        res["a_star"] = a
        if ow.status == DIVERGED:
            res["status"] = DIVERGED
            res["destabilizing_ray"] = ow.ray
            res["message"] = "no optimal weight: torus-destabilized, sigma-balancing skipped"
            return res, False, traces
        res["sigma_star"] = np.diag(sigma).real
        g, trace, more = _staged(ctx, lambda it, g0: solve_sigma_balanced(it, sigma, None, opts, g0, ctx.td))
        traces.update(more)
    res["balance"] = _trace_summary(trace, opts.tol)
    res["status"] = trace.status
    if trace.g is not None:
        res["g_star"] = trace.g
    return res, trace.status == CONVERGED, traces


def _task_verify(ctx):
    target = ctx.config.target
    opts = ctx.opts
    it = ctx.integrator
    if target == "equivalence":
        rep = verify_theorem_equivalence(it, ctx.td, None, opts, ctx.start)
        traces = rep.pop("_traces")
        cross = 10 * opts.tol
        if rep["status"] == "stable":
            rep["sigma_residual_at_relative_solution"] = checked(rep["sigma_residual_at_relative_solution"], cross)
            rep["relative_residual_at_sigma_solution"] = checked(rep["relative_residual_at_sigma_solution"], cross)
            rep["t_sigma_distance"] = checked(rep["t_sigma_distance"], rep.pop("t_sigma_tolerance"))
        return rep, bool(rep["success"]), traces
    if target == "character":
        rep = verify_character_identity(ctx.variety, ctx.td, opts)
        rep["block_weights"] = ctx.td.block_weights
        if "angle_residual" in rep:
            rep["angle_residual"] = checked(rep["angle_residual"], 1e-6)
        return rep, bool(rep["success"]), {}
    if target == "t-sigma":
        a, sigma, ow = _optimal_weight(ctx)
        res = {"optimal_weight": _trace_summary(ow, opts.tol), "a_star": a}
        if ow.status == DIVERGED:
            res["destabilizing_ray"] = ow.ray
            return res, False, {"optimal_weight": ow}
        ok, dist = subspace_equal(twisted_t_tilde(sigma, ctx.td), basis_t_tilde(ctx.td), T_SIGMA_TOL)
        res["sigma_star"] = np.diag(sigma).real
        res["subspace_distance"] = checked(dist, T_SIGMA_TOL)
        return res, bool(ok and ow.status == CONVERGED), {"optimal_weight": ow}
    return _orbit_constancy(ctx)


def _orbit_constancy(ctx):
    it = ctx.integrator
    td = ctx.td
    rng = np.random.default_rng(ctx.config.seed)
    g0 = np.eye(td.dim, dtype=complex) if ctx.start is None else ctx.start
    xis = basis_t(td).elements
    if len(xis) == 0:
        return {"message": "torus has rank zero: no characters to compare"}, True, {}
    a, sigma, ow = _optimal_weight(ctx)
    perp = basis_g_T_perp(td)

    def values(g):
        f = [character_F(it, g, None, xi, td) for xi in xis]
        fs = [character_F_sigma(it, g, None, sigma, xi, td) for xi in xis]
        return np.array(f), np.array(fs)

    base_f, base_fs = values(g0)
    err = it.error_estimate(lambda i, h: [character_F(i, h, None, xi, td) for xi in xis], g0)
    dev, dev_s = 0.0, 0.0
    for _ in range(ORBIT_SAMPLES):
        g = g0 @ random_block_element(td, rng, 0.3, perp).T
        f, fs = values(g)
        dev = max(dev, float(np.abs(f - base_f).max()))
        dev_s = max(dev_s, float(np.abs(fs - base_fs).max()))
        err = max(err, it.error_estimate(lambda i, h: [character_F(i, h, None, xi, td) for xi in xis], g))
    tol = 10 * max(err, ROUNDOFF_FLOOR)
    res = {
        "samples": ORBIT_SAMPLES,
        "seed": ctx.config.seed,
        "F_at_start": base_f,
        "F_max_deviation": checked(dev, tol),
        "quadrature_error_estimate": err,
        "optimal_weight_status": ow.status,
        # reported, not judged: the twisted character is not orbit-constant in general
        "F_sigma_max_deviation": dev_s,
    }
    return res, res["F_max_deviation"]["passed"], {"optimal_weight": ow}


TASK_FUNCS = {
    "volume-check": _task_volume,
    "moment": _task_moment,
    "optimal-weight": _task_optimal_weight,
    "balance": _task_balance,
    "verify": _task_verify,
}


def run(config: cfgmod.ExperimentConfig, out_dir=None) -> RunReport:
    """Validate ``config``, run its task and write all outputs to ``out_dir``."""
    config.validate()
    out = Path(out_dir or config.output or cfgmod.default_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    cache = ArrayCache(out / "cache")
    t0 = time.perf_counter()
    ctx = _Context(config, cache)
    t1 = time.perf_counter()
    results, ok, traces = TASK_FUNCS[config.task](ctx)
    t2 = time.perf_counter()
    files = {name: write_trace(out, name, tr, config.solver.tol) for name, tr in traces.items()}
    if any(tr.status == DIVERGED for tr in traces.values()) and not ok:
        status = DIVERGED
    else:
        status = "passed" if ok else "failed"
    grid = ctx.integrator.grid
    payload = {
        "schema": SCHEMA,
        "version": library_version(),
        "config": config.to_dict(),
        "seed": config.seed,
        "deterministic": config.deterministic,
        "task": config.task,
        "status": status,
        "results": results,
        "quadrature": None if grid is None else {
            "n": grid.n, "radial": grid.radial_nodes, "angular": grid.angular_nodes,
            "remap": grid.remap, "nodes": len(grid)},
        "files": dict(files, timing="timing.json"),
    }
    timing = {"setup_s": t1 - t0, "task_s": t2 - t1, "gram_evaluations": ctx.integrator.evaluations,
              "cache_hits": cache.hits, "cache_misses": cache.misses}
    write_json(out / "report.json", payload)
    write_json(out / "timing.json", timing)
    code = EXIT_OK if ok else EXIT_FAILED
    logger.info("%s: %s (exit %d), report in %s", config.task, status, code, out / "report.json")
    return RunReport(to_jsonable(payload), code, out, traces, timing)


def _parse_grid(text):
    try:
        r, a = text.lower().split("x")
        return int(r), int(a)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 64x64, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="chow-balance",
                                description="Balanced, sigma-balanced and relatively balanced embeddings.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment or variety file")
    common.add_argument("--out", help=f"output directory (default ${cfgmod.OUTPUT_ENV} or ./chow-balance-out)")
    common.add_argument("--grid", type=_parse_grid, help="quadrature nodes per axis as RxA")
    common.add_argument("--tol", type=float, help="solver tolerance")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="fixed-order reductions (default unless the config says otherwise)")
    common.add_argument("--seed", type=int, help="seed for randomized checks")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check-volume", parents=[common], help="total Fubini-Study mass against the degree")
    sub.add_parser("moment", parents=[common], help="integrated moment map at the start point")
    sub.add_parser("optimal-weight", parents=[common], help="minimize G over the positive torus")
    b = sub.add_parser("balance", parents=[common], help="run a balancing solver")
    b.add_argument("--mode", choices=cfgmod.MODES, required=True)
    v = sub.add_parser("verify", parents=[common], help="run a verification")
    v.add_argument("--target", choices=cfgmod.TARGETS, required=True)
    return p


COMMAND_TASKS = {"check-volume": "volume-check", "moment": "moment", "optimal-weight": "optimal-weight",
                 "balance": "balance", "verify": "verify"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = cfgmod.load_config(args.config)
        config.task = COMMAND_TASKS[args.command]
        if args.command == "balance":
            config.mode = args.mode
        if args.command == "verify":
            config.target = args.target
        if args.grid is not None:
            config.grid["radial"], config.grid["angular"] = args.grid
        if args.tol is not None:
            s = config.solver
            config.solver = SolverOptions(s.max_iter, args.tol, s.damping, s.line_search, s.refinement)
        if args.deterministic is not None:
            config.deterministic = True
        if args.seed is not None:
            config.seed = args.seed
        report = run(config, args.out)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{config.task}: {report.status} -> {report.out_dir / 'report.json'}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
