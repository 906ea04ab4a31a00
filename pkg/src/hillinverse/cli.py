"""Command line front end.

Subcommands::

    hillinverse run [--config FILE] [--KEY VALUE ...]
    hillinverse oracle [--config FILE] [--lambdas 1,10,100] ...
    hillinverse validate-estimator [--config FILE] [--thetas 0.1,0.5,1] ...
    hillinverse compare SUMMARY_A SUMMARY_B

Exit status: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import AdaptiveConfig, RefinementError, run_adaptive
from .bloch import EigenSolverError, QGrid, band_sweep, write_bands_csv
from .config import ConfigError, RunConfig, apply_override, load_config, resolve_initial, resolve_target
from .estimator import ApostConfig, ShiftCollisionError, delta_report
from .fourier import TrigPotential, write_potential
from .objective import TargetBands
from .optim import run_naive, write_convergence_csv
from .oracle import BracketError, comb_first_band_flatness, dirac_dispersion_q0, write_oracle_csv
from .rng import STREAM_VERSION

log = logging.getLogger("hillinverse")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERICAL_ERRORS = (EigenSolverError, ShiftCollisionError, RefinementError, BracketError, ArithmeticError,
                    np.linalg.LinAlgError)


# -- experiment runners ----------------------------------------------------------


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_summary(out: Path, payload: dict) -> None:
    (out / "summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_optimisation(cfg: RunConfig) -> dict:
    """Naive or adaptive recovery run; writes every artifact and returns the summary."""
    out = _out_dir(cfg)
    Vt = resolve_target(cfg)
    grid = QGrid(cfg.Q)
    T = TargetBands.from_potential(Vt, grid, cfg.M, cfg.s_t)
    if isinstance(Vt, TrigPotential):
        write_potential(out / "potential_target.txt", Vt)
    write_bands_csv(out / "bands_target.csv", grid.points, T.samples)

    if cfg.mode == "naive":
        p = cfg.p if cfg.p is not None else (Vt.p if isinstance(Vt, TrigPotential) else cfg.p_t)
        W0 = resolve_initial(cfg, p)
        rec = run_naive(W0, T, cfg.s_naive, p, nu=cfg.nu, method=cfg.method, max_iter=cfg.max_iter,
                        threads=cfg.threads)
    else:
        acfg = AdaptiveConfig(s0=cfg.s0, p0=cfg.p0, eta=cfg.eta, nu=cfg.nu,
                              apost=ApostConfig(cfg.s_ref, cfg.theta, cfg.kappa), method=cfg.method,
                              max_iter=cfg.max_iter, threads=cfg.threads)
        rec = run_adaptive(resolve_initial(cfg, cfg.p0), T, acfg)

    write_potential(out / "potential_final.txt", rec.W)
    # final bands at the target cutoff so they compare directly with bands_target.csv
    final = band_sweep(rec.W, grid, cfg.M, max(cfg.s_t, rec.s))
    write_bands_csv(out / "bands_final.csv", grid.points, final.eps)
    write_convergence_csv(out / "convergence.csv", rec, with_event=cfg.mode == "adaptive")
    summary = {
        "mode": cfg.mode,
        "method": cfg.method,
        "J": rec.J,
        "gnorm": rec.gnorm,
        "N": rec.n_iter,
        "s_N": rec.s,
        "p_N": rec.p,
        "elapsed_s": rec.elapsed,
        "termination": rec.termination,
        "band_misfit_max": float(np.max(np.abs(final.eps - T.samples))),
        "rng_stream_version": STREAM_VERSION,
        "version": __version__,
        "config": cfg.as_dict(),
    }
    _write_summary(out, summary)
    return summary


def run_oracle(cfg: RunConfig) -> list:
    out = _out_dir(cfg)
    grid = QGrid(cfg.Q)
    rows = []
    for lam in cfg.lambdas:
        if lam > 0:
            root = dirac_dispersion_q0(lam)
            omega, eps = root.omega, root.eps
        else:
            omega, eps = 0.0, 0.0  # free operator: bottom of the spectrum at q = 0
        rows.append((lam, omega, eps, comb_first_band_flatness(lam, grid, cfg.s_oracle)))
    write_oracle_csv(out / "oracle.csv", rows)
    return rows


def run_estimator_validation(cfg: RunConfig) -> dict:
    """Compare the bound with the true error ``eps^s - eps^{s_ref}`` for several thetas."""
    out = _out_dir(cfg)
    V = resolve_target(cfg)
    s = cfg.s if cfg.s is not None else 6
    grid = QGrid(cfg.Q)
    kappa = cfg.kappa if cfg.kappa is not None else 0.0
    path = out / "estimator_validation.csv"
    stats = {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "m", "eps_s", "eps_ref", "true_err", "delta", "theta"])
        for theta in cfg.thetas:
            rep = delta_report(V, grid, cfg.M, s, ApostConfig(cfg.s_ref, theta, kappa))
            err = rep.eps_s - rep.eps_ref
            for i, q in enumerate(grid.points):
                for m in range(cfg.M):
                    w.writerow([f"{q:.17g}", m + 1, f"{rep.eps_s[i, m]:.17g}", f"{rep.eps_ref[i, m]:.17g}",
                                f"{err[i, m]:.17g}", f"{rep.delta[i, m]:.17g}", f"{theta:.17g}"])
            ratio = rep.delta[err > 0] / err[err > 0]
            stats[str(theta)] = {
                "certified": bool(np.all(rep.delta >= err)),
                "median_ratio": float(np.median(ratio)) if ratio.size else float("nan"),
            }
    _write_summary(out, {"mode": "estimator-validate", "s": s, "s_ref": cfg.s_ref, "kappa": kappa,
                         "thetas": stats, "config": cfg.as_dict()})
    return stats


def compare(summary_a, summary_b) -> float:
    """Relative wall time ``tau = t_a / t_b`` of two runs."""
    a = json.loads(Path(summary_a).read_text())
    b = json.loads(Path(summary_b).read_text())
    return a["elapsed_s"] / b["elapsed_s"]


# -- argument handling -------------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value configuration file")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f"opt_{f.name}", default=None, metavar=f.name.upper())


def _build_config(args, mode: str | None) -> RunConfig:
    # estimator validation defaults to the two-mode test potential at s = 6
    base = RunConfig(target="estimator-test", s=6) if mode == "estimator-validate" else RunConfig()
    cfg = load_config(args.config, base) if args.config else base
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f"opt_{f.name}")
        if value is not None:
            apply_override(cfg, f.name, value)
    if mode is not None:
        cfg.mode = mode
    return cfg.validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hillinverse", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment selected by 'mode'")
    _add_config_flags(p_run)
    p_or = sub.add_parser("oracle", help="Dirac comb dispersion and flat-band sweep")
    _add_config_flags(p_or)
    p_val = sub.add_parser("validate-estimator", help="check the a posteriori bound against s_ref bands")
    _add_config_flags(p_val)
    p_cmp = sub.add_parser("compare", help="relative CPU time of two runs")
    p_cmp.add_argument("summary_a")
    p_cmp.add_argument("summary_b")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            tau = compare(args.summary_a, args.summary_b)
            print(f"tau={tau:.6g}")
            return EXIT_OK
        mode = {"oracle": "oracle", "validate-estimator": "estimator-validate"}.get(args.command)
        cfg = _build_config(args, mode)
        if cfg.mode in ("naive", "adaptive"):
            summary = run_optimisation(cfg)
            print(json.dumps({k: summary[k] for k in ("J", "gnorm", "N", "s_N", "p_N", "termination")}))
            if summary["termination"] == "line_search_failed":
                log.error("descent stopped: line search failed")
                return EXIT_NUMERIC
        elif cfg.mode == "oracle":
            for lam, omega, eps, flat in run_oracle(cfg):
                print(f"lambda={lam:g} omega={omega:.12f} eps={eps:.12f} flatness={flat:.3e}")
        else:
            for theta, st in run_estimator_validation(cfg).items():
                print(f"theta={theta} certified={st['certified']} median_ratio={st['median_ratio']:.4g}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        if args.command == "compare":
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
