"""Command-line scenario runner.

Three subcommands::

    wardrop run <scenario.json | preset> [--out DIR] [--trajectory]
                [--step H] [--tol TOL] [--max-time T] [--gap-tol G] [--seed N]
    wardrop compare <scenario.json | preset> --methods hrf,gauss_seidel,qp
    wardrop validate <scenario.json | preset>

Exit codes: 0 solved and certified, 2 solved but the gap certificate failed,
3 the integrator did not converge, 4 input error (bad scenario file, unknown
preset, method not applicable to the cost model).

``run`` writes, atomically, a per-edge flow table (``flows.csv``, full
precision plus integer-rounded display columns), one DOT drawing per
population, a machine-readable ``summary.json``, a copy of the effective
scenario, and optionally the recorded trajectory.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import equilibrium, hrf
from .costs import CostModel, FlowProfile
from .network import NetworkError, PopulationSystem
from .scenario import (
    PRESET_NAMES,
    Scenario,
    ScenarioError,
    load_scenario,
    preset,
    scenario_to_dict,
)

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_UNCERTIFIED = 2
EXIT_NOT_CONVERGED = 3
EXIT_INPUT = 4

METHODS = ("hrf", "gauss_seidel", "qp")


def _atomic_write(path: Path, text: str) -> None:
    """Write-temp-then-rename so readers never observe a partial file."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _load(target: str) -> Scenario:
    if target in PRESET_NAMES:
        return preset(target)
    path = Path(target)
    if not path.exists():
        raise ScenarioError(
            f"{target!r} is neither a preset ({', '.join(PRESET_NAMES)}) "
            "nor an existing scenario file"
        )
    return load_scenario(path)


def _effective_config(scenario: Scenario, args: argparse.Namespace) -> hrf.SolverConfig:
    updates = {}
    if getattr(args, "step", None) is not None:
        updates["step"] = args.step
    if getattr(args, "tol", None) is not None:
        updates["rhs_tol"] = args.tol
    if getattr(args, "max_time", None) is not None:
        updates["max_time"] = args.max_time
    return dataclasses.replace(scenario.solver, **updates) if updates else scenario.solver


def _flows_csv(system: PopulationSystem, profile: FlowProfile) -> str:
    """Full-precision per-edge flows with integer display columns.

    The ``total`` column is the float sum of the population columns; the
    ``*_rounded`` columns round for display, the rounded total rounding the
    exact sum (not summing the rounded parts).
    """
    names = system.names
    header = (
        ["tail", "head"]
        + list(names)
        + ["total"]
        + [f"{n}_rounded" for n in names]
        + ["total_rounded"]
    )
    lines = [",".join(header)]
    matrix = profile.matrix
    totals = profile.edge_totals
    for k, (tail, head) in enumerate(system.network.edges):
        row = [str(tail), str(head)]
        row += [repr(float(matrix[k, r])) for r in range(system.size)]
        row.append(repr(float(totals[k])))
        row += [str(int(round(float(matrix[k, r])))) for r in range(system.size)]
        row.append(str(int(round(float(totals[k])))))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _dot_quote(value) -> str:
    return '"' + str(value).replace('"', '\\"') + '"'


def _population_dot(system: PopulationSystem, profile: FlowProfile, r: int) -> str:
    """One population's flows as a DOT digraph, every used edge labeled."""
    pop = system.populations[r]
    theta = profile.thetas[r]
    lines = [f"digraph {_dot_quote(pop.name)} {{", "  rankdir=LR;"]
    for v in sorted(pop.spec.entrances, key=str):
        lines.append(f"  {_dot_quote(v)} [shape=doublecircle];")
    for v in pop.exit_vertices:
        lines.append(f"  {_dot_quote(v)} [shape=square];")
    for (tail, head), flow in zip(pop.edges, theta):
        lines.append(
            f"  {_dot_quote(tail)} -> {_dot_quote(head)} [label=\"{flow:.2f}\"];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def _trajectory_csv(system: PopulationSystem, report: hrf.SolveReport) -> str:
    header = ["t"]
    for pop in system.populations:
        header += [f"{pop.name}:{tail}->{head}" for tail, head in pop.edges]
    header.append("rhs_norm")
    lines = [",".join(header)]
    for point in report.trajectory:
        row = [repr(float(point.t))]
        for theta in point.thetas:
            row += [repr(float(x)) for x in theta]
        row.append(repr(float(point.rhs_norm)))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _certificate_payload(cert: equilibrium.GapCertificate, names) -> dict:
    return {
        "passed": cert.passed,
        "tolerance": cert.tolerance,
        "max_relative_gap": cert.max_relative_gap,
        "gaps": {n: g for n, g in zip(names, cert.gaps)},
        "relative_gaps": {n: g for n, g in zip(names, cert.relative_gaps)},
        "costs": {n: v for n, v in zip(names, cert.values)},
    }


def _print_flow_table(system: PopulationSystem, profile: FlowProfile) -> None:
    names = system.names
    matrix = profile.matrix
    totals = profile.edge_totals
    headers = ["edge"] + list(names) + ["total"]
    rows = []
    for k, (tail, head) in enumerate(system.network.edges):
        rows.append(
            [f"{tail}->{head}"]
            + [str(int(round(float(matrix[k, r])))) for r in range(system.size)]
            + [str(int(round(float(totals[k]))))]
        )
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    print("  ".join(h.rjust(w) for h, w in zip(headers, widths)))
    for row in rows:
        print("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))


def _run(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    config = _effective_config(scenario, args)
    system = scenario.build_system()
    model = scenario.build_cost()
    start = None
    if args.seed is not None:
        start = equilibrium.random_interior(system, seed=args.seed)

    report = hrf.solve(system, model, config, start=start)
    certificate = None
    certificate_error = None
    try:
        certificate = equilibrium.certify(report.profile, model, tolerance=args.gap_tol)
    except (equilibrium.NegativeCycleError, RuntimeError, NetworkError) as exc:
        certificate_error = str(exc)

    if not report.converged:
        code = EXIT_NOT_CONVERGED
    elif certificate is not None and certificate.passed:
        code = EXIT_OK
    else:
        code = EXIT_UNCERTIFIED

    names = system.names
    total_cost = float(sum(certificate.values)) if certificate else None
    summary = {
        "scenario": scenario.name,
        "cost": {"type": model.name, "params": model.param_record()},
        "populations": {
            pop.name: {
                "edges": pop.n_reduced,
                "entrances": {str(v): r for v, r in pop.spec.entrances.items()},
            }
            for pop in system.populations
        },
        "solver": dataclasses.asdict(config),
        "seed": args.seed,
        "converged": report.converged,
        "iterations": report.iterations,
        "simulated_time": report.simulated_time,
        "rhs_norm": report.rhs_norm,
        "max_conservation_drift": report.max_conservation_drift,
        "lyapunov_violations": report.lyapunov_violations,
        "wall_clock_seconds": report.wall_clock_seconds,
        "certificate": _certificate_payload(certificate, names) if certificate else None,
        "certificate_error": certificate_error,
        "total_cost": total_cost,
        "exit_code": code,
    }

    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        effective = dataclasses.replace(scenario, solver=config)
        _atomic_write(out / "flows.csv", _flows_csv(system, report.profile))
        for r, pop in enumerate(system.populations):
            _atomic_write(
                out / f"population_{pop.name}.dot",
                _population_dot(system, report.profile, r),
            )
        _atomic_write(
            out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n"
        )
        _atomic_write(
            out / "scenario.json",
            json.dumps(scenario_to_dict(effective), indent=2) + "\n",
        )
        if args.trajectory:
            _atomic_write(out / "trajectory.csv", _trajectory_csv(system, report))

    print(
        f"{scenario.name}: {system.size} populations, "
        f"{system.network.n_edges} edges, cost {model.name}"
    )
    verdict = "converged" if report.converged else "did NOT converge"
    print(
        f"{verdict} after {report.iterations} steps "
        f"(t={report.simulated_time:.6g}, {report.wall_clock_seconds:.3f} s wall), "
        f"rhs norm {report.rhs_norm:.3e}"
    )
    print(
        f"conservation drift {report.max_conservation_drift:.3e}, "
        f"divergence upticks {report.lyapunov_violations}"
    )
    if certificate is not None:
        state = "PASS" if certificate.passed else "FAIL"
        print(
            f"certificate: {state} (max relative gap "
            f"{certificate.max_relative_gap:.3e}, tolerance {certificate.tolerance:g})"
        )
        for n, value in zip(names, certificate.values):
            print(f"  {n}: cost {value:.6g}")
        print(f"total cost: {total_cost:.6g}")
    else:
        print(f"certificate: ERROR ({certificate_error})")
    print()
    _print_flow_table(system, report.profile)
    if args.out is not None:
        print(f"\nartifacts written to {args.out}")
    return code


def _totals_by_method(
    method: str,
    scenario: Scenario,
    system: PopulationSystem,
    model: CostModel,
    config: hrf.SolverConfig,
    seed: int | None,
) -> tuple[np.ndarray, float, bool]:
    """Run one method; return (per-edge totals, wall clock, converged)."""
    began = time.perf_counter()
    if method == "hrf":
        start = equilibrium.random_interior(system, seed=seed) if seed is not None else None
        report = hrf.solve(system, model, config, start=start)
        return report.profile.edge_totals, time.perf_counter() - began, report.converged
    if method == "gauss_seidel":
        profile = equilibrium.gauss_seidel_oracle(system, model, config=config)
        return profile.edge_totals, time.perf_counter() - began, True
    totals = equilibrium.potential_qp_oracle(system, model=model)
    return totals, time.perf_counter() - began, True


def _compare(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    methods = []
    for raw in args.methods.split(","):
        name = raw.strip()
        if not name:
            continue
        if name not in METHODS:
            raise ScenarioError(
                f"unknown method {name!r}; choose from {', '.join(METHODS)}"
            )
        if name not in methods:
            methods.append(name)
    if len(methods) < 1:
        raise ScenarioError("no methods requested")
    if "qp" in methods and scenario.cost_type != "linear_sum":
        raise ScenarioError(
            f"method 'qp' applies to the linear_sum cost only; "
            f"this scenario uses {scenario.cost_type!r}"
        )

    config = _effective_config(scenario, args)
    system = scenario.build_system()
    model = scenario.build_cost()

    totals: dict[str, np.ndarray] = {}
    clocks: dict[str, float] = {}
    all_converged = True
    for method in methods:
        try:
            vec, elapsed, converged = _totals_by_method(
                method, scenario, system, model, config, args.seed
            )
        except equilibrium.OscillationError as exc:
            print(f"error: method {method!r}: {exc}", file=sys.stderr)
            return EXIT_NOT_CONVERGED
        totals[method] = vec
        clocks[method] = elapsed
        all_converged = all_converged and converged
        if not converged:
            print(f"warning: method {method!r} did not converge", file=sys.stderr)

    disagreements: dict[str, float] = {}
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            disagreements[f"{a} vs {b}"] = float(
                np.abs(totals[a] - totals[b]).max(initial=0.0)
            )

    print(f"{scenario.name}: cost {scenario.cost_type}, methods {', '.join(methods)}")
    width = max(len(m) for m in methods)
    for method in methods:
        print(f"  {method.ljust(width)}  {clocks[method]:8.3f} s")
    if disagreements:
        print("max per-edge total-flow disagreement:")
        for pair, value in disagreements.items():
            print(f"  {pair}: {value:.6e}")
    else:
        print("single method, nothing to compare")

    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "scenario": scenario.name,
            "methods": methods,
            "wall_clock_seconds": clocks,
            "max_total_disagreement": disagreements,
            "totals": {m: [float(x) for x in v] for m, v in totals.items()},
        }
        _atomic_write(
            out / "comparison.json", json.dumps(payload, indent=2, sort_keys=True) + "\n"
        )
        print(f"comparison written to {args.out}")
    return EXIT_OK if all_converged else EXIT_NOT_CONVERGED


def _validate(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    system = scenario.build_system()
    scenario.build_cost()
    print(f"{scenario.name}: OK")
    print(
        f"  {len(scenario.network.vertices)} vertices, "
        f"{scenario.network.n_edges} edges, "
        f"{len(scenario.network.exits)} exits"
    )
    for pop in system.populations:
        rates = ", ".join(f"{v}:{r:g}" for v, r in pop.spec.entrances.items())
        print(f"  population {pop.name}: {pop.n_reduced} usable edges, enters at {rates}")
    print(f"  cost model: {scenario.cost_type}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wardrop",
        description="Multi-population Wardrop equilibrium solver.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "scenario",
            help=f"scenario JSON file or preset name ({', '.join(PRESET_NAMES)})",
        )
        p.add_argument("--step", type=float, default=None, help="integrator step size")
        p.add_argument("--tol", type=float, default=None, help="drift-norm stopping tolerance")
        p.add_argument("--max-time", type=float, default=None, help="simulated-time budget")
        p.add_argument("--seed", type=int, default=None, help="random interior start")
        p.add_argument("--out", type=Path, default=None, help="artifact directory")

    run = sub.add_parser("run", help="solve a scenario and certify the result")
    add_common(run)
    run.add_argument("--gap-tol", type=float, default=1e-4, help="certificate tolerance")
    run.add_argument(
        "--trajectory", action="store_true", help="also write the recorded trajectory CSV"
    )
    run.set_defaults(func=_run)

    compare = sub.add_parser("compare", help="cross-check independent solution methods")
    add_common(compare)
    compare.add_argument(
        "--methods",
        default="hrf,gauss_seidel",
        help=f"comma-separated subset of {{{','.join(METHODS)}}}",
    )
    compare.set_defaults(func=_compare)

    validate = sub.add_parser("validate", help="parse and cross-check a scenario file")
    validate.add_argument(
        "scenario",
        help=f"scenario JSON file or preset name ({', '.join(PRESET_NAMES)})",
    )
    validate.set_defaults(func=_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, NetworkError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except hrf.StepFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
