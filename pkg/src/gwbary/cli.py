"""Command-line drivers.

Subcommands: ``gw`` (one pairwise distance), ``barycenter`` /
``interpolate`` (fixpoint iteration plus per-weight outputs), ``classify``
(pairwise distances, surrogate matrices, confusion metrics) and ``match``
(multi-graph matching).  Flags can be preloaded from a JSON config file;
explicit flags win.  Progress is reported as JSON events, one per line.

Exit codes: 0 ok, 2 I/O error, 3 precondition violation, 4 solver
non-convergence (with --strict).
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import barycenter as bary
from . import geometry_embed as geom
from . import gmspace as gms
from . import gw_solver as gw
from . import metrics as met
from .coupling_algebra import save_multicoupling
from .ot_solvers import (NonConvergenceError, OtMethod, OtOptions,
                         save_coupling)

SOLVERS = {
    "bcd-exact": OtMethod.EXACT,
    "bcd-sinkhorn": OtMethod.SINKHORN,
    "proximal": OtMethod.KL_PROX,
}


def _log(args, **event):
    line = json.dumps(event)
    if getattr(args, "log", None):
        with open(args.log, "a") as fh:
            fh.write(line + "\n")
    else:
        print(line, file=sys.stderr)


def _load_input(path, args):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    suffix = path.suffix.lower()
    kind = {
        "dijkstra": gms.GaugeKind.DIJKSTRA,
        "dijkstra-sq": gms.GaugeKind.DIJKSTRA_SQ,
        "adjacency": gms.GaugeKind.CUSTOM,
    }[getattr(args, "gauge", "dijkstra")]
    if suffix == ".json":
        return gms.load_space(path), None
    if suffix in (".off", ".obj"):
        if kind == gms.GaugeKind.CUSTOM:
            raise ValueError("adjacency gauge is not defined for meshes")
        space, faces = gms.load_mesh(path, kind=kind, label=path.stem)
        return space, faces
    return gms.load_edge_list(path, kind=kind, label=path.stem), None


def _gw_options(args):
    inner = OtOptions(method=SOLVERS[args.solver], epsilon=args.epsilon,
                      max_iter=args.inner_max, tol=args.inner_tol)
    return gw.GwOptions(inner=inner, outer_max_iter=args.outer_max,
                        outer_tol=args.outer_tol, seed=args.seed,
                        restarts=args.restarts)


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gw(args):
    out = _outdir(args)
    space_a, _ = _load_input(args.inputs[0], args)
    space_b, _ = _load_input(args.inputs[1], args)
    res = gw.solve_gw(space_a, space_b, _gw_options(args))
    if args.strict and not res.converged:
        raise NonConvergenceError("gw solve did not converge")
    save_coupling(res.plan, out / "gw_plan.tsv")
    _log(args, event="gw", value=res.value, iterations=res.iterations,
         converged=res.converged, support=res.plan.support_size)
    print(f"{res.value:.6f}")
    return 0


def _rho_grid(n_inputs, args):
    if args.rho:
        rho = np.array([float(t) for t in args.rho.split(",")])
        return [rho / rho.sum()]
    if args.rho_grid:
        res = args.rho_grid
        grid = []

        def rec(prefix, remaining, slots):
            if slots == 1:
                if remaining >= 1:
                    grid.append(prefix + [remaining])
                return
            for k in range(1, remaining - slots + 2):
                rec(prefix + [k], remaining - k, slots - 1)

        rec([], res, n_inputs)
        return [np.array(g, dtype=np.float64) / res for g in grid]
    return [np.full(n_inputs, 1.0 / n_inputs)]


def _bary_options(args, n_inputs):
    stop = {"loss-increase": bary.StopRule.LOSS_INCREASE,
            "rel-tol": bary.StopRule.REL_TOL,
            "fixed": bary.StopRule.FIXED_ITERS}[args.stop]
    glue = {"nw": bary.GlueRule.NW_CORNER,
            "maxrule": bary.GlueRule.MAX_RULE}[args.glue]
    return bary.BaryOptions(glue_rule=glue, gw=_gw_options(args),
                            max_outer=max(args.bary_max, args.fixed_iters),
                            stop=stop, rel_tol=args.outer_tol,
                            fixed_iters=args.fixed_iters,
                            keep_history=True)


def cmd_barycenter(args):
    out = _outdir(args)
    loaded = [_load_input(p, args) for p in args.inputs]
    spaces = [s for s, _ in loaded]
    faces = {i: f for i, (_, f) in enumerate(loaded) if f is not None}
    rhos = _rho_grid(len(spaces), args)
    opts = _bary_options(args, len(spaces))
    rho0 = rhos[0] if len(rhos) == 1 else np.full(len(spaces),
                                                  1.0 / len(spaces))
    state = bary.iterate(spaces, rho0, spaces[args.anchor], opts)
    for k, loss in state.loss_history:
        _log(args, event="outer-iteration", iteration=k, loss=loss)
    bary.save_state(state, out, input_paths=list(args.inputs))
    can_mesh = (all(s.coords is not None for s in spaces)
                and args.anchor in faces)
    mesh_faces = None
    if can_mesh:
        mesh_faces = geom.transfer_faces(state, args.anchor,
                                         faces[args.anchor])
    report = {"rho": [], "diam": [], "pca_residual": [], "files": []}
    for rho in rhos:
        tag = "_".join(f"{r:.4g}" for r in rho)
        space_path = out / f"interp_{tag}.json"
        gms.save_space(bary.reweigh(state, rho), space_path)
        report["rho"].append(rho.tolist())
        report["files"].append(space_path.name)
        if can_mesh:
            plot_kind = (gms.GaugeKind.SQ_EUCLID
                         if args.plot_gauge == "sq-euclid"
                         else gms.GaugeKind.ONE_NORM)
            emb = geom.euclid_embed(_plot_state(state), rho=rho,
                                    kind=plot_kind)
            pts3, residual = geom.pca_project(emb.points, target_dim=3)
            gms.write_off(out / f"interp_{tag}.off", pts3, mesh_faces)
            report["diam"].append(emb.diameter)
            report["pca_residual"].append(residual)
            _log(args, event="interpolant", rho=rho.tolist(),
                 diam=emb.diameter, pca_residual=residual)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=1)
    return 0


def _plot_state(state):
    """Strip gauge-kind tags: the plotting embed deliberately swaps a
    geodesic gauge for the coordinate one (display heuristic only)."""
    inputs = tuple(replace(s, kind=None) for s in state.inputs)
    return bary.BarycenterState(inputs=inputs, melting=state.melting,
                                rho=state.rho,
                                loss_history=state.loss_history,
                                plans=state.plans)


def cmd_classify(args):
    out = _outdir(args)
    loaded = [_load_input(p, args) for p in args.inputs]
    spaces = [gms.normalize_diameter(s) for s, _ in loaded]
    labels = [s.label or f"s{i}" for i, s in enumerate(spaces)]
    if args.labels:
        labels = Path(args.labels).read_text().split()
    dist = gw.pairwise_matrix(spaces, _gw_options(args),
                              restart_rounds=args.restart_rounds,
                              threads=args.threads)
    gw.save_matrix_csv(out / "gw.csv", dist, labels)
    _log(args, event="pairwise-done", mean=float(dist.mean()))
    opts = _bary_options(args, len(spaces))
    opts = replace(opts, stop=bary.StopRule.FIXED_ITERS,
                   fixed_iters=args.iters, max_outer=max(args.iters,
                                                         opts.max_outer))
    rho = np.full(len(spaces), 1.0 / len(spaces))
    state = bary.iterate(spaces, rho, spaces[args.anchor], opts)
    summary = {"labels": labels, "iterations": []}
    for k, mu in enumerate(state.melting_history, start=1):
        lgw = bary.lgw_matrix(spaces, mu)
        gw.save_matrix_csv(out / f"lgw_{k}.csv", lgw, labels)
        mre, pcc = met.mre_pcc(dist, lgw)
        summary["iterations"].append({"k": k, "mre": mre, "pcc": pcc})
        _log(args, event="lgw", iteration=k, mre=mre, pcc=pcc)
    classes, confusion = met.nn_confusion(dist, labels,
                                          iterations=args.nn_iters,
                                          seed=args.seed or 0)
    met.save_metrics(out / "metrics.json", confusion=confusion,
                     extra={"classes": [str(c) for c in classes],
                            "lgw": summary["iterations"]})
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return 0


def cmd_match(args):
    out = _outdir(args)
    args.gauge = getattr(args, "gauge", "adjacency")
    spaces = [_load_input(p, args)[0] for p in args.inputs]
    opts = _bary_options(args, len(spaces))
    rho = np.full(len(spaces), 1.0 / len(spaces))
    state = bary.iterate(spaces, rho, spaces[args.anchor], opts)
    for k, loss in state.loss_history:
        _log(args, event="outer-iteration", iteration=k, loss=loss)
    save_multicoupling(state.melting, out / "matching.mcoo.tsv")
    doc = {"support": state.melting.support_size}
    if args.truth:
        table = np.loadtxt(args.truth, dtype=np.int64).reshape(
            -1, len(spaces))
        truth = {}
        for i in range(len(spaces)):
            for j in range(i + 1, len(spaces)):
                t = np.empty(table.shape[0], dtype=np.int64)
                t[table[:, i]] = table[:, j]
                truth[(i, j)] = t
        nc1, nc_all = met.node_correctness(state.melting, truth)
        doc.update(nc1=nc1, nc_all=nc_all)
        _log(args, event="node-correctness", nc1=nc1, nc_all=nc_all)
    met.save_metrics(out / "metrics.json", nc1=doc.get("nc1"),
                     nc_all=doc.get("nc_all"),
                     extra={"support": doc["support"]})
    return 0


def _add_common(p):
    p.add_argument("--solver", choices=sorted(SOLVERS), default="bcd-exact")
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--outer-max", type=int, default=200,
                   help="outer iteration cap of one descent solve")
    p.add_argument("--bary-max", type=int, default=50,
                   help="pass cap of the barycenter fixpoint loop")
    p.add_argument("--outer-tol", type=float, default=1e-9)
    p.add_argument("--inner-max", type=int, default=2000)
    p.add_argument("--inner-tol", type=float, default=1e-9)
    p.add_argument("--restarts", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--anchor", type=int, default=0)
    p.add_argument("--gauge", choices=["dijkstra", "dijkstra-sq",
                                       "adjacency"], default="dijkstra")
    p.add_argument("--out", default="gwbary_out")
    p.add_argument("--log", default=None)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--config", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="gwbary", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gw", help="distance between two spaces")
    p.add_argument("inputs", nargs=2)
    _add_common(p)
    p.set_defaults(func=cmd_gw)

    for name in ("barycenter", "interpolate"):
        p = sub.add_parser(name, help="fixpoint barycenter / interpolation")
        p.add_argument("inputs", nargs="+")
        p.add_argument("--rho", default=None,
                       help="comma-separated barycentric coordinates")
        p.add_argument("--rho-grid", type=int, default=None,
                       help="simplex lattice resolution (interior points)")
        p.add_argument("--glue", choices=["nw", "maxrule"], default="nw")
        p.add_argument("--stop", choices=["loss-increase", "rel-tol",
                                          "fixed"], default="loss-increase")
        p.add_argument("--fixed-iters", type=int, default=3)
        p.add_argument("--plot-gauge", choices=["sq-euclid", "one-norm"],
                       default="sq-euclid")
        _add_common(p)
        p.set_defaults(func=cmd_barycenter)

    p = sub.add_parser("classify", help="pairwise distances + surrogates")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--labels", default=None)
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--restart-rounds", type=int, default=1)
    p.add_argument("--nn-iters", type=int, default=10000)
    p.add_argument("--glue", choices=["nw", "maxrule"], default="nw")
    p.add_argument("--stop", default="fixed")
    p.add_argument("--fixed-iters", type=int, default=5)
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("match", help="multi-graph matching")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--truth", default=None,
                   help="TSV correspondence table, one column per input")
    p.add_argument("--glue", choices=["nw", "maxrule"], default="maxrule")
    p.add_argument("--stop", default="loss-increase")
    p.add_argument("--fixed-iters", type=int, default=3)
    _add_common(p)
    p.set_defaults(func=cmd_match, solver="proximal")
    return parser


def main(argv=None):
    parser = build_parser()
    args, _ = parser.parse_known_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                conf = json.load(fh)
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
        parser.set_defaults(**{k.replace("-", "_"): v
                               for k, v in conf.items()})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
