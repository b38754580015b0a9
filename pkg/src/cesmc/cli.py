"""Command-line experiment runner.

Every run writes a manifest (the configuration that determines the output,
plus the package version) and a JSON result into ``--out-dir``. The ``ce``
mode also writes the per-iteration convergence CSV and ``trace`` writes the
visited states. ``--manifest`` replays a previous manifest; the worker count
is deliberately left out of it because it never changes the output.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as ex
from .ce import CEConfig, ce_optimize
from .errors import (CesmcError, InitialSearchFailed, NoHitsError, ParseError,
                     StateSpaceTooLarge)
from .estimators import (EstimateResult, chernoff_sample_size, is_estimate, mc_estimate,
                         variance_reduction_report)
from .formula import Atom, Eventually
from .language import format_property, load_model, parse_property
from .oracle import build_state_space, exact_probability
from .simulate import DEFAULT_MAX_STEPS, TraceBatch, trace_dump

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_PARSE = 2
EXIT_INITIAL = 3
EXIT_NO_HITS = 4
EXIT_ORACLE_CAP = 5

MODES = ("mc", "ce", "is", "exact", "trace")

# configuration keys that determine the output, in manifest order
_CONFIG_KEYS = ("mode", "model", "property", "seed", "n", "epsilon", "delta", "n0", "nj",
                "n_is", "max_iterations", "max_steps", "smoothing", "smoothing_fraction",
                "norm_const", "tol", "window", "stop_on_convergence", "max_restarts",
                "min_hits", "initial_candidates", "lam", "reuse_traces", "method", "state_cap")

log = logging.getLogger("cesmc")


def _fmt(x: float) -> str:
    return "%.17g" % x


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cesmc", description=__doc__.splitlines()[0])
    p.add_argument("mode", nargs="?", choices=MODES)
    p.add_argument("--manifest", help="replay the configuration stored in a manifest file")
    p.add_argument("--model", help="guarded-command model file")
    p.add_argument("--property", help="temporal-logic property")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--n", type=int, help="number of traces (mc, is)")
    p.add_argument("--epsilon", type=float, help="mc: absolute error for the Chernoff bound")
    p.add_argument("--delta", type=float, help="mc: confidence parameter for the Chernoff bound")
    p.add_argument("--n0", type=int, default=1000, help="traces per initial-search candidate")
    p.add_argument("--nj", type=int, default=1000, help="traces per optimisation iteration")
    p.add_argument("--n-is", type=int, help="ce/is: traces for the final estimate")
    p.add_argument("--max-iterations", type=int, default=20)
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    p.add_argument("--smoothing", choices=("halving", "additive", "none"), default="halving")
    p.add_argument("--smoothing-fraction", type=float, default=0.01)
    p.add_argument("--norm-const", type=float, help="sum of the parameters (default: n)")
    p.add_argument("--tol", type=float, default=0.02, help="convergence tolerance")
    p.add_argument("--window", type=int, default=3, help="convergence window")
    p.add_argument("--stop-on-convergence", action="store_true",
                   help="stop optimising once converged instead of running every iteration")
    p.add_argument("--max-restarts", type=int, default=100)
    p.add_argument("--min-hits", type=int, default=1)
    p.add_argument("--initial-candidates", type=int, default=CEConfig.initial_candidates,
                   help="qualifying initial vectors to compare before optimising")
    lam = p.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", help="comma-separated parameter vector")
    lam.add_argument("--lambda-from", help="result JSON of an earlier ce run")
    p.add_argument("--reuse-traces", type=int, default=0,
                   help="ce: pool the traces of the last K iterations into the estimate")
    p.add_argument("--method", choices=("iteration", "linear"), default="iteration",
                   help="exact: solver for until")
    p.add_argument("--state-cap", type=int, default=10**6, help="exact: state-space cap")
    p.add_argument("--export-chain", help="exact: write the transition matrix here")
    p.add_argument("--workers", type=int, help="simulation processes (default $CESMC_WORKERS or 1)")
    p.add_argument("--out-dir", default=".", help="directory for the outputs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _config_from_args(args) -> dict:
    cfg = {k: getattr(args, k) for k in _CONFIG_KEYS}
    if args.lambda_from:
        with open(args.lambda_from, encoding="utf-8") as fh:
            cfg["lam"] = json.load(fh)["lambda"]
    elif args.lam:
        cfg["lam"] = [float(x) for x in args.lam.split(",")]
    if cfg["model"] is not None:
        cfg["model"] = str(cfg["model"])
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["mode"] not in MODES:
        raise ValueError("a mode is required")
    if not cfg["model"]:
        raise ValueError("--model is required")
    if cfg["property"] is None and cfg["mode"] not in ("exact", "trace"):
        raise ValueError("--property is required")
    for key in ("n", "n0", "nj", "n_is", "max_iterations", "max_steps", "window",
                "max_restarts", "min_hits", "initial_candidates", "state_cap"):
        if cfg[key] is not None and cfg[key] < 1:
            raise ValueError(f"{key} must be at least 1")
    if cfg["reuse_traces"] < 0:
        raise ValueError("reuse_traces must be non-negative")


def _ce_config(cfg: dict, workers) -> CEConfig:
    return CEConfig(
        n_per_iteration=cfg["nj"], max_iterations=cfg["max_iterations"],
        smoothing=cfg["smoothing"], smoothing_fraction=cfg["smoothing_fraction"],
        normalisation_constant=cfg["norm_const"], convergence_tol=cfg["tol"],
        convergence_window=cfg["window"], stop_on_convergence=cfg["stop_on_convergence"],
        min_hits=cfg["min_hits"], master_seed=cfg["seed"], n0=cfg["n0"],
        max_restarts=cfg["max_restarts"],
        initial_candidates=cfg["initial_candidates"], max_steps=cfg["max_steps"],
        workers=workers)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _estimate_dict(est: EstimateResult, gamma=None) -> dict:
    d = est.to_dict()
    try:
        d["variance_reduction"] = variance_reduction_report(gamma, est)
    except ValueError:
        d["variance_reduction"] = None
    if d["variance_reduction"] is not None and not np.isfinite(d["variance_reduction"]):
        d["variance_reduction"] = None
    return d


def write_convergence_csv(path: Path, result) -> None:
    n = len(result.lam)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration"] + [f"lambda_{k + 1}" for k in range(n)]
                   + ["hits", "undecided", "gamma_hat", "sample_variance"])
        for it in result.history:
            w.writerow([it.iteration] + [_fmt(x) for x in it.lam]
                       + [it.hits, it.undecided, _fmt(it.gamma_hat), _fmt(it.sample_variance)])


def run(cfg: dict, out_dir: Path, workers=None, export_chain=None) -> dict:
    """Execute one configured experiment and write its artifacts."""
    _validate(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_model(cfg["model"])
    prop = parse_property(cfg["property"], model) if cfg["property"] is not None else None
    manifest = {"version": __version__, "seed": cfg["seed"], "config": cfg}
    _write_json(out_dir / "manifest.json", manifest)
    mode = cfg["mode"]
    result: dict = {"mode": mode, "model": model.name,
                    "property": format_property(prop) if prop is not None else None,
                    "commands": list(model.command_names)}

    if mode == "mc":
        n = cfg["n"]
        if n is None:
            if cfg["epsilon"] is None or cfg["delta"] is None:
                raise ValueError("mc needs --n or both --epsilon and --delta")
            n = chernoff_sample_size(cfg["epsilon"], cfg["delta"])
        est = mc_estimate(model, prop, n, cfg["seed"], cfg["max_steps"], workers)
        result["estimate"] = est.to_dict()

    elif mode in ("ce", "is"):
        res = None
        lam = cfg["lam"]
        if mode == "ce" or lam is None:
            res = ce_optimize(model, prop, _ce_config(cfg, workers),
                              initial=cfg["lam"] if mode == "ce" else None)
            write_convergence_csv(out_dir / "convergence.csv", res)
            lam = res.lam
            result["initial_search"] = None if res.initial is None else {
                "lambda": res.initial.lam.tolist(), "hits": res.initial.hits,
                "restarts": res.initial.restarts, "first_hit": res.initial.first_hit}
            result["converged_at"] = res.converged_at
        lam = np.asarray(lam, dtype=np.float64)
        result["lambda"] = lam.tolist()
        n_is = cfg["n_is"] if cfg["n_is"] is not None else cfg["n"]
        if mode == "is" and n_is is None:
            raise ValueError("is needs --n-is")
        if n_is is not None:
            extra = None
            if res is not None and cfg["reuse_traces"]:
                extra = TraceBatch.concat(res.batches[-cfg["reuse_traces"]:])
            est = is_estimate(model, lam, prop, n_is, cfg["seed"], cfg["max_steps"],
                              workers, extra=extra)
            result["estimate"] = _estimate_dict(est)

    elif mode == "exact":
        chain = build_state_space(model, cfg["state_cap"])
        result["states"] = chain.size
        if export_chain:
            chain.export(export_chain)
        if prop is not None:
            p, resid = exact_probability(chain, prop, method=cfg["method"], return_residual=True)
            result["probability"] = p
            result["residual"] = resid
            result["method"] = cfg["method"]

    elif mode == "trace":
        lam = np.ones(model.n) if cfg["lam"] is None else np.asarray(cfg["lam"], float)
        # without a property, follow the trace until it deadlocks or hits the cap
        never = Eventually(Atom(ex.Binary("<", ex.Num(0), ex.Num(0))))
        watch = prop if prop is not None else never
        summary, rows = trace_dump(model, lam, watch, cfg["seed"], cfg["max_steps"])
        with open(out_dir / "trace.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "command"] + list(model.var_names))
            for step, cmd, state in rows:
                w.writerow([step, cmd] + [state[v] for v in model.var_names])
        result["trace"] = {"steps": summary.steps, "satisfied": bool(summary.z),
                           "undecided": summary.undecided, "deadlock": summary.deadlock,
                           "log_likelihood_ratio": summary.log_l,
                           "counts": summary.counts.tolist()}
    _write_json(out_dir / "result.json", result)
    return result


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.manifest:
            with open(args.manifest, encoding="utf-8") as fh:
                cfg = json.load(fh)["config"]
        else:
            cfg = _config_from_args(args)
        run(cfg, Path(args.out_dir), workers=args.workers, export_chain=args.export_chain)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except InitialSearchFailed as e:
        print(f"initial search failed: {e}", file=sys.stderr)
        for atom, frac in e.diagnostics.items():
            print(f"  F {atom}: {frac:.4g} of untilted traces", file=sys.stderr)
        return EXIT_INITIAL
    except NoHitsError as e:
        print(f"no satisfying traces: {e}", file=sys.stderr)
        return EXIT_NO_HITS
    except StateSpaceTooLarge as e:
        print(f"oracle: {e}", file=sys.stderr)
        return EXIT_ORACLE_CAP
    except (CesmcError, ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
