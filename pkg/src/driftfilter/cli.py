"""Command line interface.

Usage::

    driftfilter <experiment> --config <path-or-name> [--seed S] [--step H]
                [--out DIR] [--check]

Exit codes: 0 success, 2 configuration or output error, 3 numerical
failure, 4 mismatch against the expected values of a configuration
(``--check``).
"""

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (decay_experiment, limit_cycle, monotonicity_report,
                          periodic_construction, periodicity_defect)
from .config import EXPERIMENTS, bundled_configs, load_config
from .errors import ConfigError, NumericError
from .filters import covariance_path, filter_path
from .matops import spectral_norm
from .model import simulate_path
from .portfolio import simulate_wealth, value_report, value_table
from .riccati import solve_are

logger = logging.getLogger("driftfilter")

CSV_VERSION = "v1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4


def fmt(x):
    """Fixed 10-significant-digit rendering used in every output file."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.10g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.10g}")
    return obj


def write_csv(path, name, header, rows):
    """Write a CSV file preceded by a ``# driftfilter <name> v1`` line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# driftfilter {name} {CSV_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _params(cfg, experiment):
    return dict((cfg.params or {}).get(experiment, {}))


def _vec_names(prefix, d):
    return [f"{prefix}{i + 1}" for i in range(d)]


def _mat_names(prefix, d):
    return [f"{prefix}{i + 1}{j + 1}" for i in range(d) for j in range(d)]


# -- experiments -------------------------------------------------------------
# Each returns (metrics, summary rows) after writing its files into ``out``.

def exp_value_table(cfg, out, args):
    p = _params(cfg, "value-table")
    Ns = p.get("Ns", [0, 10, 100, 1000])
    x0 = float(p.get("x0", 1.0))
    spi = int(p.get("steps_per_interval", 50))

    def progress(rep):
        logger.info("N=%d  V_E=%.6f  V_C=%.6f", rep.N, rep.values["E"], rep.values["C"])

    reports = value_table(cfg.model, cfg.Gamma, Ns, x0, spi, rk_step=args.step, callback=progress)
    rows, metrics = [], {}
    for rep in reports:
        rows.append((rep.N, rep.values["E"], rep.values["C"], rep.efficiencies["E"],
                     rep.efficiencies["C"]))
        for H in "EC":
            metrics[f"V_{H}[{rep.N}]"] = rep.values[H]
            metrics[f"rho_{H}[{rep.N}]"] = rep.efficiencies[H]
    first = reports[0]
    metrics.update(V_R=first.values["R"], V_F=first.values["F"], rho_R=first.efficiencies["R"])
    write_csv(out / "value_table.csv", "value-table", ["N", "V_E", "V_C", "rho_E", "rho_C"], rows)
    write_json(out / "value_report.json", {
        "x0": x0, "V_R": first.values["R"], "V_F": first.values["F"],
        "rho_R": first.efficiencies["R"], "reports": [r.to_dict() for r in reports]})
    summary = [("V_R", metrics["V_R"]), ("V_F", metrics["V_F"])]
    summary += [(f"N={r[0]}", f"V_E={fmt(r[1])} V_C={fmt(r[2])} rho_E={r[3]:.4%} rho_C={r[4]:.4%}")
                for r in rows]
    return metrics, summary


def exp_efficiency(cfg, out, args):
    p = _params(cfg, "efficiency")
    regimes = tuple(p.get("regimes", ["R", "E", "C", "F"]))
    if "F" not in regimes:
        regimes = regimes + ("F",)
    x0 = float(p.get("x0", 1.0))
    step = args.step or cfg.grid_step
    rep = value_report(cfg.model, cfg.schedule(), x0, regimes, grid_step=step)
    rows = [(H, rep.values[H], rep.efficiencies[H]) + tuple(rep.integrals[H]) for H in regimes]
    write_csv(out / "efficiency.csv", "efficiency",
              ["regime", "V", "rho", "interest_integral", "moment_integral", "filter_integral"], rows)
    write_json(out / "efficiency.json", rep.to_dict())
    metrics = {f"V_{H}": rep.values[H] for H in regimes}
    metrics.update({f"rho_{H}": rep.efficiencies[H] for H in regimes})
    return metrics, [(H, f"V={fmt(v)} rho={r:.4%}") for H, v, r, *_ in rows]


def exp_decay(cfg, out, args):
    p = _params(cfg, "decay")
    Ns = p.get("Ns", [10, 100, 1000])
    u = float(p.get("u", cfg.model.T))
    ser = decay_experiment(cfg.model, u, Ns, cfg.Gamma, int(p.get("steps_per_interval", 50)),
                           rk_step=args.step)
    write_csv(out / "decay.csv", "decay", ["N", "norm_E", "norm_C"], ser.rows())
    metrics = {f"norm_E[{n}]": e for n, e, _ in ser.rows()}
    metrics.update({f"norm_C[{n}]": c for n, _, c in ser.rows()})
    metrics["strictly_decreasing"] = ser.strictly_decreasing
    metrics["final_over_Sigma0_E"] = ser.norms_E[-1] / ser.reference
    metrics["final_over_Sigma0_C"] = ser.norms_C[-1] / ser.reference
    summary = [(f"N={n}", f"|g_E|={fmt(e)} |g_C|={fmt(c)}") for n, e, c in ser.rows()]
    summary.append(("strictly decreasing", ser.strictly_decreasing))
    return metrics, summary


def exp_simulate(cfg, out, args):
    model, sched = cfg.model, cfg.schedule()
    step = args.step or cfg.grid_step or model.T / 1000
    path = simulate_path(model, sched, step, seed=args.seed)
    d = model.d
    cols, header = [path.grid[:, None], path.mu], ["t"] + _vec_names("mu_", d)
    metrics = {}
    logw = []
    for H in ("R", "E", "C", "F"):
        filt = filter_path(model, sched, path, H)
        cols.append(filt.mu_hat)
        header += _vec_names(f"muhat{H}_", d)
        w = simulate_wealth(model, sched, path, H, 1.0, filt)
        logw.append(np.log(w.X))
        metrics[f"log_terminal_{H}"] = float(w.log_terminal)
    cols.append(np.array(logw).T)
    header += [f"logX_{H}" for H in "RECF"]
    table = np.hstack(cols)
    write_csv(out / "simulate.csv", "simulate", header, table.tolist())
    write_csv(out / "experts.csv", "experts", ["k", "t"] + _vec_names("Z_", d),
              [[k, path.grid[i]] + list(path.Z[k]) for k, i in enumerate(path.date_index)])
    return metrics, [(k, fmt(v)) for k, v in metrics.items()]


def exp_covariance(cfg, out, args):
    p = _params(cfg, "covariance")
    regimes = p.get("regimes", ["R", "E", "C"])
    model, sched = cfg.model, cfg.schedule()
    step = args.step or cfg.grid_step or model.T / 1000
    d = model.d
    metrics, summary = {}, []
    for H in regimes:
        cp = covariance_path(model, sched, H, grid_step=step)
        rows = []
        left = {int(i): k for k, i in enumerate(cp.date_index)}
        for i, t in enumerate(cp.grid):
            if i in left:
                g = cp.left_values[left[i]]
                rows.append([t, "left"] + list(g.ravel()) + [spectral_norm(g), np.trace(g)])
            g = cp.values[i]
            rows.append([t, "right"] + list(g.ravel()) + [spectral_norm(g), np.trace(g)])
        write_csv(out / f"covariance_{H}.csv", "covariance",
                  ["t", "side"] + _mat_names("g", d) + ["norm", "trace"], rows)
        metrics[f"final_norm_{H}"] = spectral_norm(cp.values[-1])
        summary.append((H, f"|g_T|={fmt(metrics[f'final_norm_{H}'])}"))
    return metrics, summary


def _cycle_outputs(out, cyc, name):
    write_csv(out / "cycle_profile.csv", name, ["h", "norm", "trace"], cyc.profile())
    rep = monotonicity_report(cyc)
    return rep


def exp_limit_cycle(cfg, out, args):
    p = _params(cfg, "limit-cycle")
    regime = p.get("regime", "E")
    cyc = limit_cycle(cfg.model, regime, float(p.get("Delta", cfg.Delta)), cfg.Gamma,
                      tol=float(p.get("tol", 1e-11)), samples=int(p.get("samples", 201)),
                      rk_step=args.step)
    rep = _cycle_outputs(out, cyc, "limit-cycle")
    write_json(out / "limit_cycle.json", {
        "regime": regime, "Delta": cyc.Delta, "Gamma": cyc.Gamma, "L": cyc.L, "U": cyc.U,
        "iterations": cyc.iterations, "converged": cyc.converged, "comparable": cyc.comparable,
        "report": rep.to_dict()})
    metrics = {"trace_dip": rep.trace_dip, "norm_dip": rep.norm_dip, "trace_law": rep.trace_law,
               "iterations": cyc.iterations, "trace_L": rep.trace_start, "trace_U": rep.trace_end}
    return metrics, [(k, fmt(v)) for k, v in metrics.items()]


def exp_counterexample(cfg, out, args):
    p = _params(cfg, "counterexample")
    regime = p.get("regime", "E")
    Delta = float(p["Delta"]) if "Delta" in p else cfg.Delta
    rk = args.step or Delta / 200.0
    pc = periodic_construction(cfg.model, regime, Delta, rk_step=rk)
    defect = periodicity_defect(cfg.model, regime, Delta, pc.Gamma, pc.U,
                                int(p.get("periods", 10)), rk_step=rk)
    cyc = limit_cycle(cfg.model, regime, Delta, pc.Gamma, rk_step=rk)
    rep = _cycle_outputs(out, cyc, "counterexample")
    eig = np.linalg.eigvalsh(pc.Gamma)
    write_json(out / "periodic_gamma.json", {
        "regime": regime, "Delta": Delta, "Gamma": pc.Gamma, "Gamma_eigenvalues": eig,
        "L": pc.L, "U": pc.U, "periodicity_defect": defect, "report": rep.to_dict()})
    metrics = {"Gamma": pc.Gamma, "Gamma_eigenvalues": eig, "periodicity_defect": defect,
               "trace_dip": rep.trace_dip, "norm_dip": rep.norm_dip}
    summary = [("Gamma", np.array2string(pc.Gamma, precision=4)),
               ("eigenvalues", np.array2string(eig, precision=4)),
               ("periodicity defect", fmt(defect)), ("trace dip", fmt(rep.trace_dip)),
               ("norm dip", fmt(rep.norm_dip))]
    return metrics, summary


def exp_are(cfg, out, args):
    sol = solve_are(cfg.model)
    write_json(out / "are.json", sol.to_dict())
    metrics = {"residual_norm": sol.residual_norm, "uniqueness_gap": sol.uniqueness_gap,
               "gamma_inf": sol.gamma_inf}
    return metrics, [("residual", fmt(sol.residual_norm)), ("uniqueness gap", fmt(sol.uniqueness_gap)),
                     ("gamma_inf", np.array2string(sol.gamma_inf, precision=6))]


RUNNERS = {
    "simulate": exp_simulate,
    "covariance": exp_covariance,
    "value-table": exp_value_table,
    "efficiency": exp_efficiency,
    "decay": exp_decay,
    "limit-cycle": exp_limit_cycle,
    "counterexample": exp_counterexample,
    "are": exp_are,
}


def check_metrics(metrics, expected):
    """Compare computed metrics with expected values.

    Each expected entry is ``[value, tol]`` (absolute, entrywise for
    arrays, ``tol`` may itself be an array), ``{"max": x}``, ``{"min": x}``
    or a boolean.

    Returns
    -------
    list of str
        One message per mismatch; empty when everything agrees.
    """
    problems = []
    for key, want in expected.items():
        if key not in metrics:
            problems.append(f"{key}: not computed")
            continue
        got = metrics[key]
        if isinstance(want, bool):
            if bool(got) != want:
                problems.append(f"{key}: got {got}, expected {want}")
        elif isinstance(want, dict):
            if "max" in want and not float(got) <= want["max"]:
                problems.append(f"{key}: {fmt(got)} above {want['max']}")
            if "min" in want and not float(got) >= want["min"]:
                problems.append(f"{key}: {fmt(got)} below {want['min']}")
        else:
            value, tol = want
            got_a, val_a = np.asarray(got, dtype=float), np.asarray(value, dtype=float)
            if got_a.shape != val_a.shape:
                problems.append(f"{key}: shape {got_a.shape} vs expected {val_a.shape}")
            elif not np.all(np.abs(got_a - val_a) <= np.asarray(tol, dtype=float)):
                err = float(np.max(np.abs(got_a - val_a)))
                problems.append(f"{key}: got {np.array2string(got_a, precision=6)}, "
                                f"expected {value} +/- {tol} (max error {err:.3g})")
    return problems


def build_parser():
    parser = argparse.ArgumentParser(
        prog="driftfilter",
        description="Drift filtering with returns and expert opinions: covariance analysis, "
                    "asymptotics and log-utility portfolio values.")
    parser.add_argument("experiment", choices=EXPERIMENTS + ("list-configs",))
    parser.add_argument("--config", help="JSON config file or bundled config name")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--step", type=float, default=None,
                        help="grid step (simulate, covariance, efficiency) or Runge-Kutta "
                             "step (value-table, decay, limit-cycle, counterexample)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--check", action="store_true",
                        help="compare results with the config's expected values")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def run(args):
    """Run one experiment; return the process exit status."""
    if args.experiment == "list-configs":
        for name in bundled_configs():
            print(name)
        return EXIT_OK
    if not args.config:
        raise ConfigError("is required", "--config")
    cfg = load_config(args.config)
    if args.seed is None:
        args.seed = cfg.seed
    if args.step is not None and not args.step > 0:
        raise ConfigError("must be positive", "--step")
    out = Path(args.out or cfg.outputs.get("dir") or f"out/{args.experiment}")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc}", "--out") from None
    t0 = time.perf_counter()
    metrics, summary = RUNNERS[args.experiment](cfg, out, args)
    elapsed = time.perf_counter() - t0
    width = max([len(str(k)) for k, _ in summary] + [8])
    print(f"{args.experiment}  config={cfg.source}  out={out}  ({elapsed:.1f}s)")
    for k, v in summary:
        print(f"  {str(k):<{width}}  {fmt(v) if not isinstance(v, str) else v}")
    if args.check:
        expected = (cfg.expected or {}).get(args.experiment, {})
        if not expected:
            print("check: no expected values for this experiment")
            return EXIT_OK
        problems = check_metrics(metrics, expected)
        for msg in problems:
            print(f"MISMATCH {msg}")
        print(f"check: {len(expected) - len(problems)}/{len(expected)} expectations met")
        return EXIT_MISMATCH if problems else EXIT_OK
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
