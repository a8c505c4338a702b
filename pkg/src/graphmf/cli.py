"""Config-driven experiment orchestration.

Subcommands: simulate | meanfield | heat | compare | graphstats | cutdist |
concentration | sweep.  Every run writes delimited outputs plus companion
figures and a manifest with the config hash and per-file digests.

Exit codes: 0 success, 2 config error, 3 numerical abort, 4 bound violation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, diagnostics as dg, plots
from .config import (ConfigError, ExperimentConfig, build_generator, build_grid,
                     build_init, build_macro_kernel, build_micro, build_model,
                     numerics)
from .cutmetrics import cut_distance_graph_kernel
from .graphs import b_n, degree_stats, export_edges, renormalize, sample_graph
from .kernels import delta_n, dilution, s_n
from .meanfield import heat_solve, picard_solve, psi0_from_init, uniform_quadrature
from . import rng
from .particles import (BlowUpError, NoiseBath, simulate_coupled_copies,
                        simulate_graph_system, trajectory_to_csv,
                        trajectory_to_npz)
from .quadrature import QuadratureError

THREADS_ENV = "GRAPHMF_THREADS"


class BoundViolation(RuntimeError):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path, columns, rows, config_hash="", units=""):
    with open(path, "w") as fh:
        fh.write(f"# config={config_hash} units={units}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")
    return str(path)


class RunContext:
    def __init__(self, cfg: ExperimentConfig, args):
        self.cfg = cfg
        self.args = args
        self.out = Path(args.out or cfg.get("output.dir", "out"))
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.aborts = []
        self.extra = {}
        self.t0 = time.time()

    @property
    def figures(self) -> bool:
        return not self.args.no_figures

    def seeds(self):
        seeds = self.cfg.int_list("sweep.seeds", [0])
        return [s + self.args.seed_offset for s in seeds]

    def n_values(self):
        ns = self.cfg.int_list("sweep.n")
        if not ns:
            ns = [int(self.cfg.get("positions.n", 16))]
        return ns

    def record(self, path):
        if path:
            self.outputs.append(str(path))
        return path

    def manifest(self, command: str, exit_code: int):
        digests = {}
        for p in sorted(set(self.outputs)):
            rel = os.path.relpath(p, self.out)
            with open(p, "rb") as fh:
                digests[rel] = hashlib.sha256(fh.read()).hexdigest()
        doc = {"command": command,
               "artifact_version": __version__,
               "config_hash": self.cfg.hash(),
               "seeds": self.seeds(),
               "n_values": self.n_values(),
               "wall_clock_s": round(time.time() - self.t0, 3),
               "outputs": digests,
               "aborts": self.aborts,
               "exit_code": exit_code}
        doc.update(self.extra)
        path = self.out / "manifest.json"
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
        return path


def _pipeline_pieces(ctx, n, seed):
    cfg = ctx.cfg
    grid = build_grid(cfg, n, seed=seed)
    gen = build_generator(cfg)
    mk = build_micro(cfg, gen, n)
    dil = dilution(cfg.get("dilution.kind", "uniform"), mk, grid)
    graph = sample_graph(mk, dil, grid, seed)
    return grid, gen, mk, dil, graph


def cmd_simulate(ctx: RunContext) -> int:
    cfg = ctx.cfg
    model = build_model(cfg)
    init = build_init(cfg, model.d)
    num = numerics(cfg)
    n = ctx.n_values()[0]
    omega_std = float(cfg.get("disorder.omega_std", 0.0))
    for seed in ctx.seeds():
        grid, gen, mk, dil, graph = _pipeline_pieces(ctx, n, seed)
        bath = NoiseBath(seed, num["h"])
        disorder = None
        if omega_std > 0.0:
            disorder = omega_std * rng.generator(seed, rng.PROBE, 99) \
                .standard_normal((n, model.d))
        tr = simulate_graph_system(graph, model, init, num["T"], num["h"],
                                   bath, disorder=disorder)
        path = ctx.out / f"trajectory_n{n}_seed{seed}.csv"
        trajectory_to_csv(tr, path, stride=int(cfg.get("output.stride", 1)))
        ctx.record(path)
        if cfg.get("output.binary", False):
            npz = ctx.out / f"trajectory_n{n}_seed{seed}.npz"
            trajectory_to_npz(tr, npz)
            ctx.record(npz)
        if ctx.figures:
            ctx.record(plots.trajectory_figure(
                tr, ctx.out / f"trajectory_n{n}_seed{seed}.png"))
    return 0


def _mean_field(ctx, model, init, num, seed):
    W = build_macro_kernel(ctx.cfg, build_generator(ctx.cfg))
    quad = uniform_quadrature(num["Q"])
    mf = picard_solve(model, W, quad, num["M"], init, num["T"], num["h"],
                      tol=num["tol"], max_iter=num["max_iter"], seed=seed,
                      window=num["window"])
    return W, quad, mf


def cmd_meanfield(ctx: RunContext) -> int:
    cfg = ctx.cfg
    model = build_model(cfg)
    init = build_init(cfg, model.d)
    num = numerics(cfg)
    seed = ctx.seeds()[0]
    W, quad, mf = _mean_field(ctx, model, init, num, seed)
    means = mf.node_means()
    rows = [{"time": mf.times[s], "x": float(np.atleast_1d(quad.positions)[q]),
             "component": c, "value": means[s, q, c]}
            for s in range(len(mf.times))
            for q in range(quad.n) for c in range(model.d)]
    ctx.record(write_csv(ctx.out / "meanfield_means.csv",
                         ["time", "x", "component", "value"], rows,
                         cfg.hash(), "state"))
    summary = {"picard_iterations": mf.picard_iterations,
               "final_gap": mf.final_gap,
               "converged": mf.converged,
               "gap_history": mf.gap_history,
               "moment2": mf.moment(2).tolist(),
               "moment4": mf.moment(4).tolist()}
    spath = ctx.out / "meanfield_summary.json"
    with open(spath, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    ctx.record(spath)
    if cfg.get("output.dump_ensembles", False):
        npz = ctx.out / "meanfield_ensembles.npz"
        np.savez_compressed(npz, ensembles=mf.ensembles, times=mf.times)
        ctx.record(npz)
    if ctx.figures:
        from .meanfield import ProfileField
        pf = ProfileField(quad, mf.h, mf.times, means)
        ctx.record(plots.profile_figure(pf, ctx.out / "meanfield_means.png"))
    if not mf.converged:
        ctx.aborts.append({"stage": "picard", "reason": "no convergence",
                           "final_gap": mf.final_gap})
    return 0


def cmd_heat(ctx: RunContext) -> int:
    cfg = ctx.cfg
    model = build_model(cfg)
    init = build_init(cfg, model.d)
    num = numerics(cfg)
    W = build_macro_kernel(cfg, build_generator(cfg))
    quad = uniform_quadrature(num["Q"])
    psi0, _ = psi0_from_init(init, quad, seed=ctx.seeds()[0])
    pf = heat_solve(model, W, quad, psi0, num["T"], num["h"])
    rows = [{"time": pf.times[s], "x": float(np.atleast_1d(quad.positions)[q]),
             "component": c, "value": pf.values[s, q, c]}
            for s in range(len(pf.times))
            for q in range(quad.n) for c in range(model.d)]
    ctx.record(write_csv(ctx.out / "profile.csv",
                         ["time", "x", "component", "value"], rows,
                         cfg.hash(), "state"))
    if ctx.figures:
        ctx.record(plots.profile_figure(pf, ctx.out / "profile.png"))
    return 0


def cmd_compare(ctx: RunContext) -> int:
    cfg = ctx.cfg
    model = build_model(cfg)
    init = build_init(cfg, model.d)
    num = numerics(cfg)
    n = ctx.n_values()[0]
    seed = ctx.seeds()[0]
    replicas = int(cfg.get("compare.replicas", 20))
    grid, gen, mk, dil, graph = _pipeline_pieces(ctx, n, seed)
    W, quad, mf = _mean_field(ctx, model, init, num, seed)
    psi0, _ = psi0_from_init(init, quad, seed=seed)
    pf = heat_solve(model, W, quad, psi0, num["T"], num["h"])

    bath = NoiseBath(seed, num["h"])
    systems, copies = [], []
    for r in range(replicas):
        systems.append(simulate_graph_system(graph, model, init, num["T"],
                                             num["h"], bath, replica=r))
        copies.append(simulate_coupled_copies(mf, W, grid, model, init,
                                              num["T"], num["h"], bath,
                                              replica=r))
    prop = dg.propagation_error(systems, copies)

    def phi(theta, x):
        return theta[..., 0] * np.cos(2.0 * np.pi * np.asarray(x))

    emp = dg.empirical_measure_error(systems, mf, phi)
    perr = dg.profile_error(systems[0], pf, model.k)
    ident = dg.identification_residual(pf, mf)
    report = dg.DiagnosticsReport()
    report.add("propagation_error", prop.max_error, stderr=float(prop.stderr.max()),
               n=n, seeds=[seed], replicas=replicas)
    report.add("propagation_error_q95", prop.q95, n=n)
    report.add("empirical_measure_error", emp["value"], n=n,
               replicas=replicas)
    report.add("profile_error", perr, n=n, k=model.k)
    report.add("identification_residual", ident["residual"], n=n,
               dictionary=ident["dictionary"])
    report.add("b_n", b_n(graph), n=n)
    report.add("delta_n", delta_n(W, mk, dil, grid), n=n)
    limit = cfg.get("compare.max_propagation")
    if limit is not None:
        report.add("propagation_bound", prop.max_error, bound=float(limit),
                   passed=prop.max_error <= float(limit),
                   inequality="propagation_error <= compare.max_propagation")
    jpath = ctx.out / "compare.json"
    with open(jpath, "w") as fh:
        fh.write(report.to_json())
    ctx.record(jpath)

    gap = np.stack([np.linalg.norm(s.states - c.states, axis=-1) ** 2
                    for s, c in zip(systems, copies)]).mean(axis=(0, 2))
    rows = [{"time": systems[0].times[i], "metric": "mean_sq_coupling_gap",
             "value": gap[i]} for i in range(len(gap))]
    ctx.record(write_csv(ctx.out / "compare_curve.csv",
                         ["time", "metric", "value"], rows, cfg.hash()))
    if ctx.figures:
        ctx.record(plots.curve_figure(systems[0].times,
                                      {"mean sq coupling gap": gap},
                                      ctx.out / "compare_curve.png",
                                      ylabel="coupling gap", logy=True))
    if ctx.args.emit_plot_data:
        ctx.record(write_csv(ctx.out / "compare_plotdata.csv",
                             ["time", "metric", "value"], rows, cfg.hash()))
    if report.failed():
        raise BoundViolation("compare bounds violated")
    return 0


def cmd_graphstats(ctx: RunContext) -> int:
    cfg = ctx.cfg
    rows = []
    first = None
    for n in ctx.n_values():
        for seed in ctx.seeds():
            grid, gen, mk, dil, graph = _pipeline_pieces(ctx, n, seed)
            st = degree_stats(graph)
            rows.append({"n": n, "seed": seed, "min_degree": st.minimum,
                         "max_degree": st.maximum, "mean_degree": st.mean,
                         "b_n": b_n(graph), "edges": graph.edge_count()})
            if first is None:
                first = graph
            if cfg.get("output.edges", False):
                p = ctx.out / f"edges_n{n}_seed{seed}.txt"
                export_edges(graph, p)
                ctx.record(p)
    ctx.record(write_csv(ctx.out / "graphstats.csv",
                         ["n", "seed", "min_degree", "max_degree",
                          "mean_degree", "b_n", "edges"], rows, cfg.hash()))
    if ctx.figures and first is not None:
        ctx.record(plots.degree_figure(first.degrees(),
                                       ctx.out / "degrees.png"))
    return 0


def cmd_cutdist(ctx: RunContext) -> int:
    cfg = ctx.cfg
    mode = ctx.args.mode or cfg.get("cutdist.mode", "auto")
    W = build_macro_kernel(cfg, build_generator(cfg))
    rows = []
    for n in ctx.n_values():
        for seed in ctx.seeds():
            grid, gen, mk, dil, graph = _pipeline_pieces(ctx, n, seed)
            res = cut_distance_graph_kernel(renormalize(graph), W, mode=mode,
                                            seed=seed)
            rows.append({"n": n, "seed": seed, "metric": "cut_distance",
                         "value": res.value, "mode": res.mode})
    ctx.record(write_csv(ctx.out / "cutdist.csv",
                         ["n", "seed", "metric", "value", "mode"], rows,
                         cfg.hash()))
    if ctx.figures:
        ctx.record(plots.sweep_figure(rows, "cut distance",
                                      ctx.out / "cutdist.png"))
    if ctx.args.emit_plot_data:
        ctx.record(write_csv(ctx.out / "cutdist_plotdata.csv",
                             ["n", "seed", "value"], rows, cfg.hash()))
    return 0


def cmd_concentration(ctx: RunContext) -> int:
    cfg = ctx.cfg
    sec = cfg.section("concentration")
    n = int(sec.get("n", 2000))
    kappa = float(sec.get("kappa", 5.0))
    w = float(sec.get("w", 0.2))
    trials = int(sec.get("trials", 10000))
    p = float(sec.get("p", w))
    rep = dg.concentration_check(kappa, w, n, p, 1.0, trials,
                                 seed=ctx.seeds()[0])
    lattice = [dg.entropy_bounds(0.5, 0.25, x, v)
               for x in np.linspace(0.05, 5.0, 10)
               for v in np.linspace(0.05, 5.0, 10)]
    chern = dg.chernoff_check(np.full(256, 1.0), 0.3, 12.0, trials,
                              seed=ctx.seeds()[0])
    doc = {"epsilon_n": rep.epsilon_n, "empirical_tail": rep.empirical_tail,
           "bound": rep.bound, "passed": rep.passed, "trials": rep.trials,
           "entropy_lattice_holds": all(e.holds for e in lattice),
           "chernoff": chern}
    jpath = ctx.out / "concentration.json"
    with open(jpath, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    ctx.record(jpath)
    if ctx.figures:
        ctx.record(plots.concentration_figure(rep, ctx.out / "concentration.png"))
    if not (rep.passed and doc["entropy_lattice_holds"] and chern["passed"]):
        raise BoundViolation("concentration bound violated")
    return 0


def _sweep_task(ctx, metric, n, seed):
    cfg = ctx.cfg
    if metric == "s_n":
        W = build_macro_kernel(cfg, build_generator(cfg))
        return s_n(W, build_grid(cfg, n)), 0.0
    grid, gen, mk, dil, graph = _pipeline_pieces(ctx, n, seed)
    if metric == "b_n":
        return b_n(graph), 0.0
    if metric == "delta_n":
        W = build_macro_kernel(cfg, gen)
        return delta_n(W, mk, dil, grid), 0.0
    if metric == "degree_mean":
        return degree_stats(graph).mean, 0.0
    if metric == "cut_distance":
        W = build_macro_kernel(cfg, gen)
        mode = ctx.args.mode or cfg.get("cutdist.mode", "auto")
        return cut_distance_graph_kernel(renormalize(graph), W, mode=mode,
                                         seed=seed).value, 0.0
    if metric == "propagation_error":
        model = build_model(cfg)
        init = build_init(cfg, model.d)
        num = numerics(cfg)
        W, quad, mf = _mean_field(ctx, model, init, num, seed)
        bath = NoiseBath(seed, num["h"])
        replicas = int(cfg.get("compare.replicas", 20))
        systems = [simulate_graph_system(graph, model, init, num["T"],
                                         num["h"], bath, replica=r)
                   for r in range(replicas)]
        copies = [simulate_coupled_copies(mf, W, grid, model, init, num["T"],
                                          num["h"], bath, replica=r)
                  for r in range(replicas)]
        rep = dg.propagation_error(systems, copies)
        return rep.max_error, float(rep.stderr.max())
    raise ConfigError("sweep.metric", f"unknown metric {metric!r}")


def cmd_sweep(ctx: RunContext) -> int:
    cfg = ctx.cfg
    metric = str(cfg.get("sweep.metric", "b_n"))
    tasks = [(n, seed) for n in ctx.n_values() for seed in ctx.seeds()]
    threads = ctx.args.threads
    results = [None] * len(tasks)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(_sweep_task, ctx, metric, n, s): i
                    for i, (n, s) in enumerate(tasks)}
            for fut, i in futs.items():
                results[i] = fut.result()
    else:
        for i, (n, s) in enumerate(tasks):
            results[i] = _sweep_task(ctx, metric, n, s)
    rows = [{"n": n, "seed": s, "metric": metric, "value": r[0], "stderr": r[1]}
            for (n, s), r in zip(tasks, results)]
    ctx.record(write_csv(ctx.out / "sweep.csv",
                         ["n", "seed", "metric", "value", "stderr"], rows,
                         cfg.hash()))
    if ctx.figures:
        ctx.record(plots.sweep_figure(rows, metric, ctx.out / "sweep.png"))
    if ctx.args.emit_plot_data:
        ctx.record(write_csv(ctx.out / "sweep_plotdata.csv",
                             ["n", "seed", "value"], rows, cfg.hash()))
    return 0


COMMANDS = {"simulate": cmd_simulate, "meanfield": cmd_meanfield,
            "heat": cmd_heat, "compare": cmd_compare,
            "graphstats": cmd_graphstats, "cutdist": cmd_cutdist,
            "concentration": cmd_concentration, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphmf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get(THREADS_ENV, "1")))
        p.add_argument("--seed-offset", type=int, default=0)
        p.add_argument("--emit-plot-data", action="store_true")
        p.add_argument("--mode", choices=["exact", "heuristic"], default=None)
        p.add_argument("--no-figures", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    ctx = RunContext(cfg, args)
    code = 0
    try:
        code = COMMANDS[args.command](ctx)
    except (BlowUpError, QuadratureError) as exc:
        ctx.aborts.append({"stage": args.command, "reason": str(exc)})
        code = 3
    except BoundViolation as exc:
        print(f"bound violation: {exc}", file=sys.stderr)
        code = 4
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    ctx.manifest(args.command, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
