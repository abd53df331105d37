"""Command line driver: ``cnsphere solve CONFIG`` or ``cnsphere solve --suite``.

Exit codes: 0 success, 2 config error, 3 solver non-convergence,
4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import assemble_linearized, hj_norm, kernel_check, mtw_check, verify_apriori
from .config import ConfigError, RunConfig, build_scenario, parse_config, scenario_suite
from .equilibrium import ConvergenceError, EquilibriumResult, solve_equilibrium
from .transport import SinkhornError

log = logging.getLogger("cnsphere")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_INTERNAL = 0, 2, 3, 4

DENSITY_COLUMNS = ["node", "x", "y", "z", "weight", "mu", "nu", "u", "T_index", "displacement"]
HISTORY_COLUMNS = ["t", "iteration", "tau", "lambda", "step", "ratio", "residual"]


@dataclass
class ResultBundle:
    config: RunConfig
    status: str
    exit_code: int
    result: EquilibriumResult | None = None
    report: object = None
    operator: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    error: str | None = None
    paths: dict = field(default_factory=dict)
    scenario: object = field(default=None, repr=False)

    @property
    def warnings(self) -> list:
        return list(self.result.warnings) if self.result is not None else []

    def to_dict(self) -> dict:
        out = {
            "config": self.config.to_dict(),
            "status": self.status,
            "exit_code": self.exit_code,
            "error": self.error,
            "timing": self.timing,
            "history": self.history,
            "operator": self.operator,
        }
        r = self.result
        if r is not None:
            out.update({
                "residual": r.residual,
                "iterations": r.iterations,
                "condition": {"satisfied": r.condition_satisfied, "margin": r.condition_margin},
                "warnings": r.warnings,
                "nu": r.nu.density.tolist(),
                "u": r.u.tolist(),
                "map": r.map.assignment.tolist(),
                "displacement": r.map.displacement.tolist(),
                "apriori": self.report.to_dict() if self.report is not None else None,
            })
        return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_density_csv(path, result: EquilibriumResult, scenario) -> None:
    grid = scenario.grid
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DENSITY_COLUMNS)
        for i in range(grid.size):
            p = grid.nodes[i]
            z = p[2] if grid.dim == 2 else None
            w.writerow([_fmt(v) for v in (
                i, p[0], p[1], z, grid.weights[i], scenario.mu.density[i], result.nu.density[i],
                result.u[i], int(result.map.assignment[i]), result.map.displacement[i])])


def write_history_csv(path, history) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for rec in history:
            w.writerow([_fmt(rec.get(k)) for k in HISTORY_COLUMNS])


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def operator_diagnostics(result, scenario) -> dict:
    op = assemble_linearized(result, scenario)
    smin, invertible = kernel_check(op)
    return {
        "hj_norm": hj_norm(op),
        "h_min": float(op.h.min()),
        "h_max": float(op.h.max()),
        "min_singular_value": smin,
        "invertible": invertible,
    }


def run(config: RunConfig, *, out_dir=None, analysis: bool = True) -> ResultBundle:
    """Solve one configuration, run the enabled analyses and write outputs."""
    t0 = time.perf_counter()
    out_dir = out_dir if out_dir is not None else config.output.get("dir")
    try:
        scenario = build_scenario(config)
    except ConfigError as exc:
        return ResultBundle(config, "config-error", EXIT_CONFIG, error=str(exc))
    try:
        result = solve_equilibrium(scenario, analyze=False)
    except (ConvergenceError, SinkhornError) as exc:
        bundle = ResultBundle(config, "non-converged", EXIT_NONCONVERGED, error=str(exc),
                              history=getattr(exc, "history", []), scenario=scenario)
        bundle.timing["solve"] = time.perf_counter() - t0
        _write(bundle, scenario, out_dir)
        return bundle
    except Exception as exc:  # noqa: BLE001 - reported as exit code 4
        log.exception("internal error")
        return ResultBundle(config, "internal-error", EXIT_INTERNAL, error=repr(exc))
    t1 = time.perf_counter()
    bundle = ResultBundle(config, "ok", EXIT_OK, result=result, history=result.history,
                          scenario=scenario)
    bundle.timing["solve"] = t1 - t0
    a = config.analysis
    if analysis and a["apriori"]:
        bundle.report = result.bound_report = verify_apriori(result, scenario)
    if analysis and a["linearized"]:
        try:
            bundle.operator.update(operator_diagnostics(result, scenario))
        except ValueError as exc:
            bundle.operator["error"] = str(exc)
    if analysis and a["mtw"] and scenario.grid.dim == 2:
        bundle.operator["mtw_min"] = mtw_check(scenario.grid, a["mtw_samples"], a["fd_step"],
                                               seed=config.seed)
    bundle.timing["analysis"] = time.perf_counter() - t1
    _write(bundle, scenario, out_dir)
    return bundle


def _write(bundle: ResultBundle, scenario, out_dir) -> None:
    if out_dir is None:
        return
    d = Path(out_dir) / bundle.config.name
    d.mkdir(parents=True, exist_ok=True)
    paths = {"result": d / "result.json", "history": d / "history.csv"}
    if bundle.result is not None:
        paths["density"] = d / "density.csv"
        write_density_csv(paths["density"], bundle.result, scenario)
    write_history_csv(paths["history"], bundle.history)
    paths["result"].write_text(json.dumps(bundle.to_dict(), indent=2, default=_json_default))
    bundle.paths = {k: str(v) for k, v in paths.items()}


def _summary(bundle: ResultBundle) -> str:
    if bundle.result is None:
        return f"{bundle.config.name}: {bundle.status} ({bundle.error})"
    r = bundle.result
    flags = ""
    if bundle.report is not None:
        flags = " bounds=" + ("pass" if bundle.report.all_bounds_ok else "FAIL")
    cond = "" if r.condition_satisfied else " [outside guaranteed regime]"
    return (f"{bundle.config.name}: ok residual={r.residual:.2e} iterations={r.iterations}"
            f"{flags}{cond}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cnsphere", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="solve a configuration or the built-in suite")
    solve.add_argument("config", nargs="?", help="path to a JSON run configuration")
    solve.add_argument("--suite", action="store_true", help="run the built-in scenario suite")
    solve.add_argument("--out", help="output directory (one subdirectory per scenario)")
    solve.add_argument("--seed", type=int, help="override the configured random seed")
    solve.add_argument("--no-analysis", action="store_true", help="skip bound and operator checks")
    solve.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if bool(args.config) == bool(args.suite):
        parser.error("give either a config path or --suite")
    try:
        configs = scenario_suite() if args.suite else [parse_config(args.config)]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        configs = [dataclasses.replace(c, seed=args.seed) for c in configs]

    worst = EXIT_OK
    for cfg in configs:
        bundle = run(cfg, out_dir=args.out, analysis=not args.no_analysis)
        print(_summary(bundle))
        worst = max(worst, bundle.exit_code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
