"""Experiment command line.

Subcommands:

* ``generate``    synthesize a regression dataset, write CSV + provenance JSON
* ``run``         distributed runs; one curve per (graph, m) cell, plus summary
* ``baseline``    the same iteration with all features on a single agent
* ``graph-info``  spectral report for a graph spec
* ``sweep``       like ``run`` over grids, plus an overlay figure

Options can come from a JSON config file (``--config``, keys are the long
option names with underscores) with explicit flags taking precedence.  The
output directory resolves as ``--out-dir`` flag, else the ``FDGLM_OUT``
environment variable, else the config file, else ``./fdglm-out``.

Every run cell emits a curve CSV (columns ``t, work_units, objective,
log10_rel_err, consensus_residual, cum_flops, cum_floats_sent``) and a PNG
rendering of the relative-error curve (suppress with ``--no-plot``);
``--work-normalized`` puts single-agent-equivalent work units on the figure's
x axis instead of rounds.  The invocation's ``summary.json`` records, per
cell, the final log10 relative error, the run-time guarantee bound and its
margin, the spectral constants, step sizes, and work accounting.

All randomness flows from one ``--seed``: the dataset uses it directly and
sweep cell i draws its graph with ``seed + 1 + i``.

Exit codes: 0 success; 2 invalid parameters or other expected failures;
3 divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import graphs as gr
from . import metrics as mt
from . import plots
from .data import Dataset, ProblemConstants, generate_synthetic, load_csv, operator_norm, save_csv
from .errors import DivergenceError, FdglmError
from .losses import lipschitz_report, parse_loss
from .regularizers import parse_reg
from .solver import StepSizes, step_sizes_from_theorem, run as run_engine, baseline_single_agent

_DEFAULTS = {
    "n": 16384,
    "d": 2048,
    "seed": 0,
    "noise": True,
    "loss": "squared",
    "reg": "zero",
    "rounds": 1000,
    "workers": 1,
    "graph": ["complete"],
    "m": [4],
    "checkpoint_every": None,
    "tau": None,
    "sigma": None,
    "no_plot": False,
    "work_normalized": False,
    "count_leader_solve": False,
    "data": None,
    "out": None,
    "out_dir": None,
}


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="fdglm", description=__doc__.split("\n\n")[0])
    sub = top.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="JSON config file; flags override its keys")
    common.add_argument("--out-dir", type=str, help="output directory (default: $FDGLM_OUT or ./fdglm-out)")
    common.add_argument("--seed", type=int, help="master seed (default 0)")

    datacfg = argparse.ArgumentParser(add_help=False)
    datacfg.add_argument("--data", type=str, help="dataset CSV to load (else synthesize)")
    datacfg.add_argument("--n", type=int, help="samples when synthesizing (default 16384)")
    datacfg.add_argument("--d", type=int, help="features when synthesizing (default 2048)")
    datacfg.add_argument("--noise", action=argparse.BooleanOptionalAction, default=None,
                         help="add unit Gaussian noise to synthetic labels (default on)")

    engine = argparse.ArgumentParser(add_help=False)
    engine.add_argument("--loss", type=str, help="squared | absolute | logistic | huber[:kappa]")
    engine.add_argument("--reg", type=str, help="zero | l1:<w> | sql2:<mu>")
    engine.add_argument("--rounds", "-T", type=int, help="synchronous rounds (default 1000)")
    engine.add_argument("--checkpoint-every", type=int, help="history cadence (default ~200 points)")
    engine.add_argument("--tau", type=float, help="manual primal step (requires --sigma)")
    engine.add_argument("--sigma", type=float, help="manual dual step (requires --tau)")
    engine.add_argument("--count-leader-solve", action="store_true", default=None,
                        help="include the lead agent's closed-form dual solve in flop tallies")
    engine.add_argument("--no-plot", action="store_true", default=None, help="skip figure rendering")
    engine.add_argument("--work-normalized", action="store_true", default=None,
                        help="plot against single-agent-equivalent work units")

    g = sub.add_parser("generate", parents=[common, datacfg], help="write a synthetic dataset")
    g.add_argument("--out", type=str, help="CSV path (default derived from shape and seed)")

    r = sub.add_parser("run", parents=[common, datacfg, engine], help="distributed runs")
    r.add_argument("--graph", type=str, nargs="+", help="graph specs, e.g. complete star er:0.5 lattice2d geo:0.3")
    r.add_argument("--m", "-m", type=int, nargs="+", help="agent counts (cells = graphs x m values)")
    r.add_argument("--workers", type=int, help="threads inside the engine (default 1)")
    r.add_argument("--baseline", action="store_true", default=None,
                   help="run the single-agent baseline instead of the distributed engine")

    sub.add_parser("baseline", parents=[common, datacfg, engine], help="single-agent run")

    gi = sub.add_parser("graph-info", parents=[common], help="spectral report for a graph")
    gi.add_argument("--graph", type=str, required=True, help="graph spec")
    gi.add_argument("--m", "-m", type=int, required=True, help="agent count")
    gi.add_argument("--out", type=str, help="also write the report JSON here")

    s = sub.add_parser("sweep", parents=[common, datacfg, engine], help="grid of (graph, m) cells")
    s.add_argument("--graph", type=str, nargs="+", help="graph specs")
    s.add_argument("--m", "-m", type=int, nargs="+", help="agent counts")
    s.add_argument("--workers", type=int, help="threads inside the engine (default 1)")
    return top


class _Options:
    """Flag > config > default resolution for one invocation."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._config = {}
        cfg = self._args.get("config")
        if cfg:
            with open(cfg) as fh:
                loaded = json.load(fh)
            if not isinstance(loaded, dict):
                raise FdglmError(f"config file {cfg} must hold a JSON object")
            self._config = loaded

    def get(self, key):
        flag = self._args.get(key)
        if flag is not None:
            return flag
        if key in self._config:
            return self._config[key]
        return _DEFAULTS.get(key)

    def out_dir(self) -> Path:
        flag = self._args.get("out_dir")
        path = flag or os.environ.get("FDGLM_OUT") or self._config.get("out_dir") or "fdglm-out"
        p = Path(path)
        p.mkdir(parents=True, exist_ok=True)
        return p


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "-", text).strip("-")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _load_dataset(opt: _Options) -> Dataset:
    if opt.get("data"):
        return load_csv(opt.get("data"))
    return generate_synthetic(opt.get("n"), opt.get("d"), opt.get("seed"), noise=opt.get("noise"))


def _manual_steps(opt: _Options) -> StepSizes | None:
    tau, sigma = opt.get("tau"), opt.get("sigma")
    if (tau is None) != (sigma is None):
        raise FdglmError("--tau and --sigma must be given together (or neither)")
    if tau is None:
        return None
    return StepSizes(tau=float(tau), sigma=float(sigma), source="manual")


def _bound_entry(constants: ProblemConstants, model: str, m: int, n: int, T: int,
                 L_star: float, achieved: float):
    try:
        bound = mt.theorem_bound(model, constants, m, n, T, L_star)
    except FdglmError as exc:
        return {"bound_model": model, "theorem_bound": None, "theorem_margin": None,
                "note": str(exc)}
    return {"bound_model": model, "theorem_bound": bound, "theorem_margin": bound - achieved}


def _spectral_dict(sc: gr.SpectralConstants) -> dict:
    return {
        "lambda2": sc.lambda2, "lambda_max": sc.lambda_max, "delta": sc.delta, "D": sc.D,
        "max_degree": sc.max_degree, "diameter": sc.diameter,
    }


def cmd_generate(opt: _Options) -> int:
    ds = generate_synthetic(opt.get("n"), opt.get("d"), opt.get("seed"), noise=opt.get("noise"))
    out = opt.get("out")
    path = Path(out) if out else opt.out_dir() / f"data-n{ds.n}-d{ds.d}-seed{ds.seed}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, path)
    print(f"[fdglm] wrote {path} and {path}.json (n={ds.n}, d={ds.d}, seed={ds.seed})")
    return 0


def _run_cells(opt: _Options, cells, *, overlay: bool) -> int:
    """Shared executor behind run/baseline/sweep: one engine run per cell."""
    ds = _load_dataset(opt)
    loss = parse_loss(opt.get("loss"))
    reg = parse_reg(opt.get("reg"))
    T = int(opt.get("rounds"))
    out_dir = opt.out_dir()
    report = lipschitz_report(loss)
    model = "SqrtLip" if report.cls == "SqrtLip" else "Lip"
    manual = _manual_steps(opt)

    ref = mt.reference_optimum(ds, loss, reg)
    L0 = mt.objective(ds, loss, reg, np.zeros(ds.d))
    chi = operator_norm(ds.X)
    R = max(1.0, 2.0 * float(np.linalg.norm(ref.theta)))

    summary = {
        "command": "sweep" if overlay else ("baseline" if cells[0][0] is None else "run"),
        "dataset": {"n": ds.n, "d": ds.d, "seed": ds.seed, "noise": ds.noise,
                    "path": opt.get("data")},
        "loss": str(loss), "reg": str(reg), "rounds": T,
        "reference": {"value": ref.value, "method": ref.method,
                      "grad_norm": ref.grad_norm, "converged": ref.converged},
        "L0": L0, "R": R, "chi": chi, "rho": report.rho,
        "cells": [],
    }

    stems_seen: dict[str, int] = {}
    series = []
    for i, (gspec, m) in enumerate(cells):
        if gspec is None:  # single-agent baseline cell
            constants = ProblemConstants(R=R, chi=chi, rho=report.rho, delta=math.inf, D=0.0)
            steps = manual or step_sizes_from_theorem(constants, 1, ds.n)
            result = baseline_single_agent(
                ds, loss, reg, steps, T,
                constants=constants, checkpoint_every=opt.get("checkpoint_every"),
                count_leader_solve=opt.get("count_leader_solve"),
            )
            stem, m_eff, ratio, spectral = "curve-baseline", 1, 1.0, None
            label = "baseline"
        else:
            graph = gr.generate_from_spec(gspec, m, seed=opt.get("seed") + 1 + i)
            sc = gr.spectral_constants(graph)
            constants = ProblemConstants(R=R, chi=chi, rho=report.rho, delta=sc.delta, D=sc.D)
            steps = manual or step_sizes_from_theorem(constants, m, ds.n)
            result = run_engine(
                ds, graph, loss, reg, steps, T,
                constants=constants, checkpoint_every=opt.get("checkpoint_every"),
                workers=opt.get("workers"), count_leader_solve=opt.get("count_leader_solve"),
            )
            ratio = mt.cost_model(ds.n, ds.d, m, sc.max_degree).ratio
            stem, m_eff, spectral = f"curve-{_slug(gspec)}-m{m}", m, _spectral_dict(sc)
            label = f"{gspec} m={m}"
        if stem in stems_seen:
            stems_seen[stem] += 1
            stem = f"{stem}-{stems_seen[stem]}"
        else:
            stems_seen[stem] = 1

        csv_path = out_dir / f"{stem}.csv"
        mt.save_curve_csv(csv_path, result, L0, ref.value, work_ratio=ratio)
        curve, _ = mt.relative_error_curve(result.objective_ergodic, L0, ref.value)
        achieved = float(result.objective_ergodic[-1])
        entry = {
            "graph": gspec, "m": m_eff, "spectral": spectral,
            "steps": {"tau": steps.tau, "sigma": steps.sigma, "source": steps.source},
            "final_log10_rel_err": float(curve[-1]),
            "final_objective_ergodic": achieved,
            "final_objective_last": float(result.objective_last[-1]),
            "final_consensus_residual": float(result.consensus_residual[-1]),
            "flops_per_agent": int(result.cum_flops[-1]),
            "floats_sent_total": int(result.cum_floats_sent[-1]),
            "work_ratio": ratio,
            "curve_csv": str(csv_path),
        }
        if steps.source == "theorem":
            entry.update(_bound_entry(constants, model, m_eff, ds.n, T, ref.value, achieved))
        else:
            entry.update({"bound_model": model, "theorem_bound": None, "theorem_margin": None,
                          "note": "manual step sizes: guarantee bound not claimed"})
        x = result.t * ratio if opt.get("work_normalized") else result.t
        xlabel = "single-agent-equivalent work units" if opt.get("work_normalized") else "rounds"
        if not opt.get("no_plot"):
            fig_path = out_dir / f"{stem}.png"
            plots.line_plot(fig_path, [(x, curve, None)], xlabel=xlabel,
                            ylabel="log10 relative error", title=label)
            entry["figure"] = str(fig_path)
        series.append((x, curve, label))
        summary["cells"].append(entry)
        print(f"[fdglm] {stem}: final log10 rel err {curve[-1]:+.3f} "
              f"(objective {achieved:.6g}, T={T})")

    if overlay and not opt.get("no_plot") and len(series) > 1:
        fig_path = out_dir / "curves-overlay.png"
        xlabel = "single-agent-equivalent work units" if opt.get("work_normalized") else "rounds"
        plots.line_plot(fig_path, series, xlabel=xlabel, ylabel="log10 relative error")
        summary["overlay_figure"] = str(fig_path)

    spath = out_dir / "summary.json"
    spath.write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    print(f"[fdglm] summary: {spath}")
    return 0


def cmd_run(opt: _Options) -> int:
    if opt.get("baseline"):
        return _run_cells(opt, [(None, 1)], overlay=False)
    cells = [(gspec, m) for gspec in opt.get("graph") for m in opt.get("m")]
    return _run_cells(opt, cells, overlay=False)


def cmd_baseline(opt: _Options) -> int:
    return _run_cells(opt, [(None, 1)], overlay=False)


def cmd_sweep(opt: _Options) -> int:
    cells = [(gspec, m) for gspec in opt.get("graph") for m in opt.get("m")]
    return _run_cells(opt, cells, overlay=True)


def cmd_graph_info(opt: _Options) -> int:
    gspec, m = opt.get("graph"), opt.get("m")
    graph = gr.generate_from_spec(gspec, m, seed=opt.get("seed"))
    sc = gr.spectral_constants(graph)
    inv = 1.0 / sc.lambda2 if sc.lambda2 > 0 else math.inf
    lower, upper = gr.mohar_lower(sc, m), gr.mckay_upper(sc, m)
    report = {
        "graph": gspec, "m": m, "seed": opt.get("seed"), "retries": graph.retries,
        "edges": len(graph.edges), **_spectral_dict(sc),
        "inv_lambda2": inv,
        "mohar_lower": lower, "mohar_slack": inv - lower,
        "mckay_upper": upper, "mckay_slack": upper - inv,
    }
    text = json.dumps(_jsonable(report), indent=2)
    print(text)
    out = opt.get("out")
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "baseline": cmd_baseline,
    "graph-info": cmd_graph_info,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        opt = _Options(args)
        return _COMMANDS[args.command](opt)
    except DivergenceError as exc:
        print(f"fdglm: divergence: {exc}", file=sys.stderr)
        return 3
    except FdglmError as exc:
        print(f"fdglm: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fdglm: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
