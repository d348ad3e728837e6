"""Command-line front end: ``abcmc {rejection,mcmc,verify,bench}``.

Exit codes: 0 success, 2 configuration error, 3 sampler failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .bench import (
    DESK_ITERS,
    FULL_ITERS,
    BenchConfig,
    CalibrationRangeError,
    always_hit_model,
    fig1_right,
    fig2_sweep,
    gaussian_grid_model,
    gaussian_model,
    gaussian_proposal,
    marginal_hit_probability,
    rate_per_pseudosample,
)
from .costs import mcmc_costs
from .diagnostics import acceptance_rate, asymptotic_variance, iid_variance
from .exact import asymptotic_variance_exact, build_pm_chain, lazy, theta_function
from .model import ConfigurationError, KernelSpec, RngStream
from .samplers import (
    MAX_ATTEMPTS,
    SamplerError,
    abc_rejection,
    pm_mcmc,
    random_walk_proposal,
)
from .verify import VerifyRow, run_suite

log = logging.getLogger("abcmc")

EXIT_OK, EXIT_CONFIG, EXIT_SAMPLER, EXIT_VERIFY = 0, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "model": {"kind": "gaussian", "y_obs": 2.0, "sigma_y": 1.0},
    "kernel": {"kind": "uniform", "epsilon": 0.25, "sup_bound": 1.0},
    "rejection": {"M": [1], "n_accept": 10_000, "max_attempts": MAX_ATTEMPTS},
    "mcmc": {
        "M": [1, 4],
        "n_iters": DESK_ITERS,
        "proposal": "independence",
        "scale": 1.0,
        "holding_probability": 0.0,
        "init": None,
        "burn_in": 0,
        "delta_var": 0.01,
        "discount": 1.0,
        "functions": ["theta", "theta^2", "constant"],
        "exact_grid_points": 15,
        "exact_laziness": 0.5,
        "max_attempts": MAX_ATTEMPTS,
    },
    "bench": {
        "M_grid": [1, 2, 4, 8, 16, 32, 64],
        "epsilon_grid": [0.5**k for k in range(2, 7)],
        "discount_grid": [1.0, 2.0, 4.0, 8.0, 16.0],
        "target_rate": 0.004,
        "kernel_kind": "uniform",
        "n_iters": DESK_ITERS,
        "fig2_y_obs": [2.0, 4.0, 6.0, 8.0],
        "fig2_sigma_y": [0.01, 0.05, 0.1, 0.5, 1.0, 2.0],
    },
    "verify": {"suite": "all"},
}

FIGURES = ("fig1-left", "fig1-right", "fig2-yobs", "fig2-sigma")

SCHEMAS = {
    "rejection_summary": ["M", "epsilon", "n_accept", "n_proposals", "acc_rate", "stderr",
                          "oracle_acc_rate", "pseudo_sample_count", "seed"],
    "rejection_draws": ["index", "theta"],
    "mcmc_trace": ["t", "theta", "accepted", "held", "T"],
    "mcmc_diagnostics": ["M", "function", "acc_rate", "v_hat", "stderr_of_mean", "v_iid",
                         "pseudo_sample_count", "serial_cost", "parallel_single_chain",
                         "parallel_multi_chain", "seed"],
    "mcmc_exact_costs": ["M", "function", "laziness", "v_exact", "serial_cost",
                         "parallel_single_chain", "parallel_multi_chain", "serial_cost_M1",
                         "cor5_serial_ok", "cor5_parallel_ok"],
    "verify": list(VerifyRow.FIELDS),
    "fig1-left": ["M", "epsilon", "acc_rate", "rate_per_pseudosample", "stderr", "seed"],
    "fig1-right": ["M", "discount", "epsilon", "target_rate", "seed"],
    "fig2-yobs": ["y_obs", "M", "epsilon", "normalized_epsilon", "seed"],
    "fig2-sigma": ["sigma_y", "M", "epsilon", "normalized_epsilon", "seed"],
}


# -- configuration ---------------------------------------------------------

def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigurationError(f"config key {path + key!r} must be a mapping")
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("config document must be a mapping")
    return _merge(DEFAULTS, doc)


def config_digest(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _model(cfg: dict):
    m = cfg["model"]
    if m["kind"] == "gaussian":
        return gaussian_model(float(m["y_obs"]), float(m["sigma_y"]))
    if m["kind"] == "always_hit":
        return always_hit_model(float(m["y_obs"]))
    raise ConfigurationError(f"unknown model kind {m['kind']!r}")


def _kernel(cfg: dict, epsilon: Optional[float] = None) -> KernelSpec:
    k = cfg["kernel"]
    eps = float(k["epsilon"] if epsilon is None else epsilon)
    return KernelSpec(k["kind"], eps, float(k["sup_bound"]))


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


# -- output ----------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_csv(path: Path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class Run:
    """Output directory with config echo and manifest."""

    def __init__(self, command: str, cfg: dict, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.started = datetime.now(timezone.utc).isoformat()
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.yaml", "w") as fh:
            yaml.safe_dump(cfg, fh, sort_keys=True)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config_digest": config_digest(self.cfg),
            "seed": self.cfg["seed"],
            "tool_version": __version__,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- subcommands -----------------------------------------------------------

def cmd_rejection(cfg: dict, run: Run, jobs: int = 1) -> int:
    model = _model(cfg)
    kernel = _kernel(cfg)
    sec = cfg["rejection"]
    seed = int(cfg["seed"])
    rows = []
    for M in sorted(int(m) for m in _as_list(sec["M"])):
        tr = abc_rejection(model, kernel, M, int(sec["n_accept"]), RngStream(seed, M),
                           max_attempts=int(sec["max_attempts"]))
        acc = acceptance_rate(tr)
        oracle = ""
        if cfg["model"]["kind"] == "gaussian" and kernel.kind == "uniform":
            oracle = marginal_hit_probability(float(cfg["model"]["y_obs"]),
                                              float(cfg["model"]["sigma_y"]), kernel.bandwidth)
        rows.append({"M": M, "epsilon": kernel.bandwidth, "n_accept": len(tr.draws),
                     "n_proposals": tr.n_proposals, "acc_rate": acc,
                     "stderr": (acc * (1 - acc) / tr.n_proposals) ** 0.5,
                     "oracle_acc_rate": oracle, "pseudo_sample_count": tr.pseudo_sample_count,
                     "seed": seed})
        write_csv(run.out / f"draws_M{M}.csv", SCHEMAS["rejection_draws"],
                  ({"index": i, "theta": th} for i, th in enumerate(tr.draws[:, 0])))
    write_csv(run.out / "summary.csv", SCHEMAS["rejection_summary"], rows)
    return EXIT_OK


_FUNCTIONS = {
    "theta": lambda th: th,
    "theta^2": lambda th: th**2,
    "constant": lambda th: np.ones_like(th),
}


def _proposal(sec: dict, cfg: dict):
    lam = float(sec["holding_probability"])
    if sec["proposal"] == "independence":
        if cfg["model"]["kind"] in ("gaussian", "always_hit"):
            return gaussian_proposal(lam)
        raise ConfigurationError("independence proposal needs a known model prior")
    if sec["proposal"] == "random_walk":
        return random_walk_proposal(float(sec["scale"]), lam)
    raise ConfigurationError(f"unknown proposal {sec['proposal']!r}")


def cmd_mcmc(cfg: dict, run: Run, jobs: int = 1) -> int:
    model = _model(cfg)
    kernel = _kernel(cfg)
    sec = cfg["mcmc"]
    seed = int(cfg["seed"])
    proposal = _proposal(sec, cfg)
    Ms = sorted({int(m) for m in _as_list(sec["M"])} | {1})
    for name in sec["functions"]:
        if name not in _FUNCTIONS:
            raise ConfigurationError(f"unknown function {name!r}")
    y_obs = float(cfg["model"]["y_obs"])
    sigma = float(cfg["model"].get("sigma_y", 1.0))
    init = sec["init"]
    if init is None:
        init = y_obs / (1 + sigma**2) if cfg["model"]["kind"] == "gaussian" else y_obs
    burn = int(sec["burn_in"])
    n = int(sec["n_iters"])
    if burn < 0 or burn >= n:
        raise ConfigurationError("burn_in must lie in [0, n_iters)")
    delta_var, disc = float(sec["delta_var"]), float(sec["discount"])

    results = {}
    for M in Ms:
        tr = pm_mcmc(model, kernel, proposal, M, n, [float(init)], RngStream(seed, M),
                     max_attempts=int(sec["max_attempts"]))
        theta = tr.draws[burn:, 0]
        est = {f: asymptotic_variance(_FUNCTIONS[f](theta)) for f in sec["functions"]}
        results[M] = (tr, est, theta)
        write_csv(run.out / f"trace_M{M}.csv", SCHEMAS["mcmc_trace"],
                  ({"t": t + 1, "theta": tr.draws[t, 0], "accepted": tr.accepted[t],
                    "held": tr.held[t], "T": tr.weights[t]} for t in range(n)))
    rows = []
    for M in Ms:
        tr, est, theta = results[M]
        for f in sec["functions"]:
            cost = mcmc_costs(est[f].value, results[1][1][f].value, M, delta_var, disc)
            rows.append({"M": M, "function": f, "acc_rate": acceptance_rate(tr),
                         "v_hat": est[f].value, "stderr_of_mean": est[f].standard_error_of_mean,
                         "v_iid": iid_variance(_FUNCTIONS[f](theta)),
                         "pseudo_sample_count": tr.pseudo_sample_count,
                         "serial_cost": cost.serial,
                         "parallel_single_chain": cost.parallel_single_chain,
                         "parallel_multi_chain": cost.parallel_multi_chain, "seed": seed})
    rows.sort(key=lambda r: (r["M"], r["function"]))
    write_csv(run.out / "diagnostics.csv", SCHEMAS["mcmc_diagnostics"], rows)

    if cfg["model"]["kind"] == "gaussian" and kernel.kind == "uniform":
        write_csv(run.out / "exact_costs.csv", SCHEMAS["mcmc_exact_costs"],
                  exact_cost_rows(y_obs, sigma, kernel.bandwidth, Ms, sec))
    return EXIT_OK


def exact_cost_rows(y_obs, sigma, epsilon, Ms, sec) -> List[dict]:
    """Costs from exact variances of lazy chains on the discretised Gaussian model."""
    g = gaussian_grid_model(y_obs, sigma, epsilon, int(sec["exact_grid_points"]))
    lam = float(sec["exact_laziness"])
    delta_var = float(sec["delta_var"])
    rows = []
    v1 = {}
    for M in Ms:
        chain = lazy(build_pm_chain(g, M), lam)
        for f in sec["functions"]:
            v = asymptotic_variance_exact(chain, theta_function(chain, _FUNCTIONS[f](g.theta_grid)))
            if M == 1:
                v1[f] = v
            c = mcmc_costs(v, v1[f], M, delta_var)
            c1 = mcmc_costs(v1[f], v1[f], 1, delta_var)
            tol = 1e-9 * max(1.0, c.serial)
            rows.append({"M": M, "function": f, "laziness": lam, "v_exact": v,
                         "serial_cost": c.serial, "parallel_single_chain": c.parallel_single_chain,
                         "parallel_multi_chain": c.parallel_multi_chain,
                         "serial_cost_M1": c1.serial,
                         "cor5_serial_ok": c1.serial <= 2 * c.serial + tol,
                         "cor5_parallel_ok": c.parallel_multi_chain
                         <= 2 * c.parallel_single_chain + tol})
    rows.sort(key=lambda r: (r["M"], r["function"]))
    return rows


def cmd_verify(cfg: dict, run: Run, jobs: int = 1) -> int:
    suite = cfg["verify"]["suite"]
    try:
        rows = run_suite(suite, jobs=jobs)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    write_csv(run.out / "verify.csv", SCHEMAS["verify"], (r.as_dict() for r in rows))
    failures = sum(r.status == "fail" for r in rows)
    skipped = sum(r.status.startswith("skipped") for r in rows)
    print(f"verify[{suite}]: {len(rows)} rows, {failures} failed, {skipped} skipped")
    return EXIT_VERIFY if failures else EXIT_OK


def bench_config(cfg: dict, **overrides) -> BenchConfig:
    b = cfg["bench"]
    m = cfg["model"]
    if m["kind"] != "gaussian":
        raise ConfigurationError("bench requires the gaussian model")
    kwargs = dict(y_obs=float(m["y_obs"]), sigma_y=float(m["sigma_y"]),
                  M_grid=tuple(b["M_grid"]), n_iters=int(b["n_iters"]),
                  target_rate=float(b["target_rate"]), kernel_kind=b["kernel_kind"],
                  seed=int(cfg["seed"]), epsilon_grid=tuple(b["epsilon_grid"]),
                  discount_grid=tuple(b["discount_grid"]))
    kwargs.update(overrides)
    return BenchConfig(**kwargs)


def cmd_bench(cfg: dict, run: Run, figure: str, jobs: int = 1, svg: bool = True) -> int:
    bc = bench_config(cfg)
    if figure == "fig1-left":
        rows = rate_per_pseudosample(bc, jobs=jobs)
    elif figure == "fig1-right":
        rows = fig1_right(bc, jobs=jobs)
    elif figure == "fig2-yobs":
        rows = fig2_sweep(bc, "y_obs", cfg["bench"]["fig2_y_obs"], jobs=jobs)
    elif figure == "fig2-sigma":
        rows = fig2_sweep(bc, "sigma_y", cfg["bench"]["fig2_sigma_y"], jobs=jobs)
    else:
        raise ConfigurationError(f"unknown figure {figure!r}; choose from {FIGURES}")
    path = run.out / f"{figure}.csv"
    write_csv(path, SCHEMAS[figure], rows)
    if svg:
        from .plots import figure_svg

        figure_svg(figure, path, run.out / f"{figure}.svg")
    return EXIT_OK


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML (or JSON) configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--iters", type=int, help="override iteration counts")
    common.add_argument("--full", action="store_true",
                        help=f"use {FULL_ITERS:,} iterations per chain")
    common.add_argument("--out", metavar="DIR", help="output directory (env ABCMC_OUT wins)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--print-config", action="store_true",
                        help="print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="abcmc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"abcmc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("rejection", parents=[common], help="ABC rejection sampling")
    mc = sub.add_parser("mcmc", parents=[common], help="pseudo-marginal ABC-MCMC")
    mc.add_argument("--burn-in", type=int, help="discard this many initial iterations")
    v = sub.add_parser("verify", parents=[common], help="exact ordering verification")
    v.add_argument("suite", nargs="?", default=None,
                   choices=["ordering", "handicap", "prop4", "altmcmc", "convex", "all"])
    b = sub.add_parser("bench", parents=[common], help="Gaussian benchmark figures")
    b.add_argument("figure", choices=FIGURES)
    b.add_argument("--no-svg", action="store_true", help="write CSV only")
    return p


def resolve_config(args) -> dict:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    iters = FULL_ITERS if args.full else args.iters
    if iters is not None:
        cfg["mcmc"]["n_iters"] = iters
        cfg["bench"]["n_iters"] = iters
    if getattr(args, "burn_in", None) is not None:
        cfg["mcmc"]["burn_in"] = args.burn_in
    if getattr(args, "suite", None):
        cfg["verify"]["suite"] = args.suite
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.print_config:
            yaml.safe_dump(cfg, sys.stdout, sort_keys=True)
            return EXIT_OK
        name = args.command if args.command != "bench" else f"bench-{args.figure}"
        out = Path(os.environ.get("ABCMC_OUT") or args.out or "abcmc-out") / name
        run = Run(args.command, cfg, out)
        if args.command == "rejection":
            code = cmd_rejection(cfg, run, args.jobs)
        elif args.command == "mcmc":
            code = cmd_mcmc(cfg, run, args.jobs)
        elif args.command == "verify":
            code = cmd_verify(cfg, run, args.jobs)
        else:
            code = cmd_bench(cfg, run, args.figure, args.jobs, svg=not args.no_svg)
        run.finish()
        return code
    except ConfigurationError as exc:
        print(f"abcmc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SamplerError, CalibrationRangeError) as exc:
        print(f"abcmc: sampler error: {exc}", file=sys.stderr)
        return EXIT_SAMPLER


if __name__ == "__main__":
    sys.exit(main())
