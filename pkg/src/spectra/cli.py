"""Command-line entry point: ``spectra {analyze,density,simulate,shrink,oracle}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import sim
from .config import ExperimentConfig, build_model, load_config, read_vector
from .errors import SpectraError
from .model import DEFAULT_TAU, validate_assumptions
from .outliers import (
    Settings,
    check_nonoverlap,
    classify_spikes,
    outlier_report,
    predict_outliers,
    sticking_bounds,
)
from .report import _json_float
from .shrinkage import oracle_estimate, shrink_spectrum, write_shrink_csv
from .stieltjes import (
    FFunction,
    check_edge_regularity,
    density,
    find_bulk_structure,
    write_density_csv,
)

__all__ = ["main", "build_parser"]

log = logging.getLogger("spectra")

EXIT_OK, EXIT_USAGE, EXIT_ASSUMPTION = 0, 1, 2
DEFAULT_GRID = 2000

Writer = Callable[[Path], None]


def _json_writer(payload: Any) -> Writer:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    return lambda path: path.write_text(text, encoding="utf-8")


def _settings(args: argparse.Namespace, cfg: ExperimentConfig) -> Settings:
    a = cfg.section("analyze")
    pick = lambda flag, key, default: flag if flag is not None else a.get(key, default)  # noqa: E731
    slack = args.slack if args.slack is not None else cfg.section("simulate").get("slack", 3.0)
    return Settings(
        tau=float(pick(args.tau, "tau", DEFAULT_TAU)),
        eps0=float(pick(args.eps0, "eps0", 0.05)),
        eps1=float(pick(args.eps1, "eps1", 0.02)),
        C=float(a.get("C", 2.0)),
        slack=float(slack),
        c0=a.get("c0"),
    )


def _structure_block(B) -> dict[str, Any]:
    return {
        "p": B.p,
        "critical_points": [_json_float(float(x)) for x in B.critical_points],
        "edges": [float(a) for a in B.edges],
        "support": [[float(lo), float(hi)] for lo, hi in B.support],
        "bulk_counts": [int(n) for n in B.bulk_counts],
    }


def _analysis(cfg: ExperimentConfig, st: Settings):
    model = build_model(cfg)
    F = FFunction(model.bulk, model.c_N)
    B = find_bulk_structure(F, model.N)
    assumptions = validate_assumptions(model, st.tau, B)
    regularity = check_edge_regularity(B, F, st.tau)
    asymptotic = bool(cfg.section("analyze").get("asymptotic", False))
    cl = classify_spikes(model, B, st.eps0, st.c0, asymptotic=asymptotic)
    preds = predict_outliers(F, B, cl, model.N, st.C)
    sticking = sticking_bounds(B, cl, model.N, st.eps1)
    return model, F, B, assumptions, regularity, cl, preds, sticking


def cmd_analyze(args: argparse.Namespace, cfg: ExperimentConfig) -> tuple[int, dict[str, Writer]]:
    st = _settings(args, cfg)
    model, F, B, assumptions, regularity, cl, preds, sticking = _analysis(cfg, st)
    nonoverlap = check_nonoverlap(B, cl, {e.spike.base_index for e in cl.outliers()[:1]}, model.N, st.eps0)
    payload = {
        "M": model.M,
        "N": model.N,
        "c_N": model.c_N,
        "r": model.r,
        "settings": {"tau": st.tau, "eps0": st.eps0, "eps1": st.eps1, "C": st.C, "c0": cl.c0},
        "structure": _structure_block(B),
        "assumptions": assumptions.to_dict(),
        "regularity": regularity.to_dict(),
        "nonoverlap": nonoverlap.to_dict(),
        "outliers": outlier_report(preds, sticking),
        "sticking": [s.to_dict() for s in sticking],
    }
    code = EXIT_OK if assumptions.passed and regularity.passed else EXIT_ASSUMPTION
    return code, {"analysis.json": _json_writer(payload)}


def cmd_density(args: argparse.Namespace, cfg: ExperimentConfig) -> tuple[int, dict[str, Writer]]:
    d = cfg.section("density")
    model = build_model(cfg)
    F = FFunction(model.bulk, model.c_N)
    B = find_bulk_structure(F, model.N)
    n = args.grid if args.grid is not None else d.get("grid", DEFAULT_GRID)
    if n < 2:
        raise SpectraError("grid must have at least 2 points")
    lo = float(d.get("lo", 0.0))
    hi = float(d.get("hi", 1.1 * B.a(1)))
    E = np.linspace(lo, hi, int(n))
    rho = density(F, B, E)
    return EXIT_OK, {"density.csv": lambda path: write_density_csv(path, E, rho)}


def _sim_config(args: argparse.Namespace, cfg: ExperimentConfig, model, replicates: int | None = None):
    s = cfg.section("simulate")
    seed = args.seed if args.seed is not None else s.get("seed", 0)
    return sim.SimulationConfig(
        model,
        replicates=replicates if replicates is not None else s.get("replicates", 50),
        seed=seed,
        entry_law=s.get("law", "gaussian"),
        coupled=s.get("coupled", True),
        backend=s.get("backend", "lapack"),
        workers=s.get("workers", 1),
    )


def cmd_simulate(args: argparse.Namespace, cfg: ExperimentConfig) -> tuple[int, dict[str, Writer]]:
    st = _settings(args, cfg)
    model, F, B, assumptions, _, cl, preds, sticking = _analysis(cfg, st)
    config = _sim_config(args, cfg, model)
    result = sim.run(config, B)
    report = sim.verify_theorems(result, F, B, cl, preds, sticking, slack=st.slack, eps1=st.eps1, C=st.C, eps0=st.eps0)
    summary = [
        {k: _json_float(v) if isinstance(v, float) else v for k, v in vars(s).items()}
        for s in sim.summarize_spikes(result, B, cl, preds)
    ]
    payload = {
        "replicates": config.replicates,
        "seed": config.seed,
        "law": config.entry_law,
        "digest": result.digest(),
        "label_mismatch_max": int(result.label_mismatch.max()),
        "assumptions": assumptions.to_dict(),
        "spikes": summary,
        "theorems": report.to_dict(),
    }
    code = EXIT_OK if assumptions.passed else EXIT_ASSUMPTION
    return code, {
        "simulation.json": _json_writer(payload),
        "simulation.csv": lambda path: sim.write_simulation_csv(path, result),
    }


def _sample_eigs(args: argparse.Namespace, cfg: ExperimentConfig, section: str, model) -> np.ndarray:
    path = cfg.section(section).get("eigenvalues")
    if path is not None:
        return read_vector(cfg.resolve(path))
    if section == "shrink":
        raise SpectraError("shrink.eigenvalues is required")
    return sim.run(_sim_config(args, cfg, model, replicates=1)).mu[0]


def cmd_shrink(args: argparse.Namespace, cfg: ExperimentConfig) -> tuple[int, dict[str, Writer]]:
    st = _settings(args, cfg)
    model = build_model(cfg)
    eigs = _sample_eigs(args, cfg, "shrink", model)
    B = find_bulk_structure(FFunction(model.bulk, model.c_N), model.N)
    loss = cfg.section("shrink").get("loss", "Frobenius")
    plan = shrink_spectrum(eigs, model, B, loss, st.C, st.eps0)
    return EXIT_OK, {"shrink.csv": lambda path: write_shrink_csv(path, plan)}


def cmd_oracle(args: argparse.Namespace, cfg: ExperimentConfig) -> tuple[int, dict[str, Writer]]:
    st = _settings(args, cfg)
    model = build_model(cfg)
    eigs = np.sort(_sample_eigs(args, cfg, "oracle", model))[::-1]
    B = find_bulk_structure(FFunction(model.bulk, model.c_N), model.N)
    est = oracle_estimate(eigs, model, B, st.C, st.eps0, cfg.section("oracle").get("eta"))

    def write(path: Path) -> None:
        lines = ["index,mu,method,d_hat"]
        lines += [f"{i},{float(eigs[i])!r},{m},{float(d)!r}" for i, (m, d) in enumerate(zip(est.method, est.d_hat))]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    return EXIT_OK, {"oracle.csv": write}


COMMANDS = {
    "analyze": cmd_analyze,
    "density": cmd_density,
    "simulate": cmd_simulate,
    "shrink": cmd_shrink,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectra",
        description="Spiked sample covariance analysis. Exit codes: 0 success, 1 usage or config error, "
        "2 assumption check failed (report still written). Set SPECTRA_LOG to a level name for logging.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="JSON or TOML experiment file")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    parser.add_argument("--seed", type=int, help="simulation seed, unsigned 64-bit (default: config or 0)")
    parser.add_argument("--grid", type=int, help=f"density grid size (default: config or {DEFAULT_GRID})")
    parser.add_argument("--slack", type=float, help="multiplier on theoretical rates (default: 3)")
    parser.add_argument("--tau", type=float, help=f"assumption tolerance tau (default: {DEFAULT_TAU})")
    parser.add_argument("--eps0", type=float, help="outlier threshold exponent eps0 (default: 0.05)")
    parser.add_argument("--eps1", type=float, help="sticking exponent eps1 (default: 0.02)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("SPECTRA_LOG", "WARNING").upper(), format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = load_config(args.config)
        code, outputs = COMMANDS[args.command](args, cfg)
    except (SpectraError, ValueError, ArithmeticError, IndexError) as exc:
        print(f"spectra {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args.out.mkdir(parents=True, exist_ok=True)
    for name, write in outputs.items():
        write(args.out / name)
        log.info("wrote %s", args.out / name)
    return code


if __name__ == "__main__":
    sys.exit(main())
