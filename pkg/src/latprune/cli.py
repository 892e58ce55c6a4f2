"""Batch command-line front end.

Subcommands: ``synth``, ``check``, ``solve``, ``sweep``,
``compare-latency-models``, ``extract``.  Every run records a manifest of
input hashes and parameters; its hash is stamped into each output file so
reruns on identical inputs are byte-identical.  Wall-clock timings live in a
separate ``timing.json`` sidecar, never in the stamped outputs.

Exit codes: 0 success, 2 infeasible, 3 validation error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import arch as arch_mod
from . import extract as extract_mod
from . import importance as imp_mod
from . import latency as lat_mod
from . import solver as solver_mod
from .arch import MANIFEST_KEY
from .errors import LatPruneError, ParseError, SolveError, ValidationError

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4


@dataclass(frozen=True)
class RunManifest:
    """Input hashes and parameters of one command invocation."""

    command: str
    inputs: dict[str, dict[str, str]]  # name -> {path, sha256}
    params: dict

    def to_obj(self) -> dict:
        return {"command": self.command, "inputs": self.inputs, "params": self.params}

    def hash(self) -> str:
        # Content-addressed: input paths are recorded for humans but do not
        # enter the hash, so identical content reproduces identical outputs
        # from any directory.
        hashed_inputs = {name: entry["sha256"] for name, entry in self.inputs.items()}
        payload = json.dumps(
            {"command": self.command, "inputs": hashed_inputs, "params": self.params},
            sort_keys=True,
        ).encode()
        return hashlib.sha256(payload).hexdigest()


def _read_text(path: str) -> str:
    return Path(path).read_text()


def _sha256(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(command: str, inputs: dict[str, str], params: dict) -> RunManifest:
    hashed = {
        name: {"path": str(path), "sha256": _sha256(path)}
        for name, path in inputs.items()
    }
    return RunManifest(command=command, inputs=hashed, params=params)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_json(path: Path, obj: dict) -> None:
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_problem(args) -> tuple:
    arch = arch_mod.parse_architecture(_read_text(args.arch))
    raw_scores = imp_mod.parse_scores(_read_text(args.scores))
    tables = lat_mod.parse_lut(_read_text(args.lut))
    vectors = imp_mod.build_all_vectors(arch, raw_scores)
    return arch, raw_scores, vectors, tables


def _solution_report(solution, budget: float, manifest_hash: str) -> dict:
    obj: dict = {
        "status": solution.status,
        "budget_ms": budget,
        "importance": solution.importance,
        "latency_ms": solution.latency,
        "bound": solution.bound,
        "gap": (
            max(0.0, solution.bound - solution.importance)
            if solution.bound is not None and solution.importance is not None
            else None
        ),
        "node_count": solution.node_count,
        "message": solution.message,
        MANIFEST_KEY: manifest_hash,
    }
    if solution.assignment is not None:
        obj["assignment"] = {
            "omega": dict(sorted(solution.assignment.omega.items())),
            "kappa": {str(k): v for k, v in sorted(solution.assignment.kappa.items())},
        }
    else:
        obj["assignment"] = None
    return obj


def _assignment_csv(arch, assignment, manifest_hash: str) -> str:
    rows = [f"# manifest: {manifest_hash}", "kind,block_id,dim_id,value"]
    for block in arch.blocks:
        if block.removable:
            rows.append(f"kappa,{block.id},,{assignment.kappa[block.id]}")
        for dim_id in block.dims:
            rows.append(f"omega,{block.id},{dim_id},{assignment.omega[dim_id]}")
    return "\n".join(rows) + "\n"


def _solver_config(args) -> solver_mod.SolverConfig:
    return solver_mod.SolverConfig(
        mode=args.mode,
        time_limit=args.time_limit,
        tolerance=args.tolerance,
        rng_seed=args.seed,
        threads=args.threads,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    params = lat_mod.LatencyModelParams(
        unit_cost=args.unit_cost,
        overhead=args.overhead,
        tile=args.tile,
        spatial=args.spatial,
    )
    manifest = _manifest(
        "synth",
        {"arch": args.arch},
        {
            "seed": args.seed,
            "distribution": args.distribution,
            "unit_cost": params.unit_cost,
            "overhead": params.overhead,
            "tile": params.tile,
            "spatial": params.spatial,
            "noise": args.noise,
        },
    )
    arch = arch_mod.parse_architecture(_read_text(args.arch))
    scores = imp_mod.synth_scores(arch, args.seed, args.distribution)
    tables = lat_mod.synth_lut(arch, params, args.seed, noise=args.noise)
    out = Path(args.out)
    _write(out / "scores.json", imp_mod.serialize_scores(scores, manifest=manifest.hash()))
    _write(out / "lut.json", lat_mod.serialize_lut(tables, manifest=manifest.hash()))
    _write_json(out / "manifest.json", {**manifest.to_obj(), "hash": manifest.hash()})
    print(f"synth: wrote scores.json and lut.json under {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    checks: list[tuple[str, str]] = []

    def record(name: str, fn) -> object:
        try:
            value = fn()
        except LatPruneError as exc:
            checks.append((name, f"FAIL {exc}"))
            return None
        checks.append((name, "OK"))
        return value

    arch = record("architecture", lambda: arch_mod.parse_architecture(_read_text(args.arch)))
    raw_scores = None
    tables = None
    if args.scores:
        raw_scores = record("scores", lambda: imp_mod.parse_scores(_read_text(args.scores)))
    if args.lut:
        tables = record("lut", lambda: lat_mod.parse_lut(_read_text(args.lut)))
    vectors = None
    if arch is not None and raw_scores is not None:
        vectors = record("importance vectors", lambda: imp_mod.build_all_vectors(arch, raw_scores))
    if arch is not None and tables is not None and vectors is not None:
        record(
            "problem shapes",
            lambda: arch_mod.validate_problem_shapes(arch, tables, vectors),
        )

    failed = [c for c in checks if c[1] != "OK"]
    for name, result in checks:
        print(f"{name}: {result}")
    print("OK" if not failed else f"{len(failed)} check(s) failed")
    return EXIT_OK if not failed else EXIT_VALIDATION


def cmd_solve(args) -> int:
    manifest = _manifest(
        "solve",
        {"arch": args.arch, "scores": args.scores, "lut": args.lut},
        {
            "budget_ms": args.budget_ms,
            "mode": args.mode,
            "time_limit": args.time_limit,
            "tolerance": args.tolerance,
            "seed": args.seed,
        },
    )
    arch, raw_scores, vectors, tables = _load_problem(args)
    problem = solver_mod.assemble(arch, vectors, tables, args.budget_ms)
    solution = solver_mod.solve(problem, _solver_config(args))

    out = Path(args.out)
    stamp = manifest.hash()
    _write_json(out / "report.json", _solution_report(solution, args.budget_ms, stamp))
    _write_json(out / "timing.json", {"wall_time_s": solution.wall_time})
    _write_json(out / "manifest.json", {**manifest.to_obj(), "hash": stamp})
    if solution.status == "infeasible":
        print(f"solve: infeasible ({solution.message})")
        return EXIT_INFEASIBLE

    structure = extract_mod.extract_structure(solution, problem, raw_scores)
    text, csv = extract_mod.summarize(structure)
    _write(out / "structure.json", extract_mod.serialize_structure(structure, manifest=stamp))
    _write(out / "summary.csv", f"# manifest: {stamp}\n" + csv)
    _write(out / "summary.txt", text + f"manifest: {stamp}\n")
    _write(out / "assignment.csv", _assignment_csv(arch, solution.assignment, stamp))
    if structure.degenerate:
        print("solve: warning: optimal plan removes every block (degenerate network)")
    print(
        f"solve: {solution.status}, importance {solution.importance}, "
        f"latency {solution.latency} ms (budget {args.budget_ms} ms)"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    budgets = [float(b) for b in args.budgets.split(",") if b.strip()]
    if not budgets:
        raise ValidationError("sweep: --budgets needs at least one value")
    manifest = _manifest(
        "sweep",
        {"arch": args.arch, "scores": args.scores, "lut": args.lut},
        {
            "budgets_ms": budgets,
            "mode": args.mode,
            "time_limit": args.time_limit,
            "tolerance": args.tolerance,
            "seed": args.seed,
        },
    )
    arch, raw_scores, vectors, tables = _load_problem(args)
    stamp = manifest.hash()
    rows = [f"# manifest: {stamp}", "budget_ms,status,importance,latency_ms,gap,node_count"]
    total_wall = 0.0
    for budget in budgets:
        problem = solver_mod.assemble(arch, vectors, tables, budget)
        solution = solver_mod.solve(problem, _solver_config(args))
        total_wall += solution.wall_time
        if solution.status == "infeasible":
            rows.append(f"{budget!r},infeasible,,,,{solution.node_count}")
        else:
            gap = max(0.0, solution.bound - solution.importance)
            rows.append(
                f"{budget!r},{solution.status},{solution.importance!r},"
                f"{solution.latency!r},{gap!r},{solution.node_count}"
            )
    out = Path(args.out)
    _write(out / "sweep.csv", "\n".join(rows) + "\n")
    _write_json(out / "timing.json", {"wall_time_s": total_wall})
    _write_json(out / "manifest.json", {**manifest.to_obj(), "hash": stamp})
    print(f"sweep: wrote {len(budgets)} rows to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_compare_latency_models(args) -> int:
    manifest = _manifest(
        "compare-latency-models",
        {"arch": args.arch, "lut": args.lut, "trajectory": args.trajectory},
        {},
    )
    arch = arch_mod.parse_architecture(_read_text(args.arch))
    tables = lat_mod.parse_lut(_read_text(args.lut))
    traj_obj = json.loads(_read_text(args.trajectory))
    if isinstance(traj_obj, dict):
        extra = set(traj_obj) - {"steps", MANIFEST_KEY}
        if extra:
            raise ParseError(f"trajectory: unknown keys {sorted(extra)}")
        traj_obj = traj_obj.get("steps")
    if not isinstance(traj_obj, list):
        raise ParseError("trajectory: expected a list of {dim_id: option} steps")
    traj = lat_mod.PruneTrajectory(steps=tuple(traj_obj))
    report = lat_mod.replay_trajectory(traj, tables, arch)

    stamp = manifest.hash()
    rows = [f"# manifest: {stamp}", "step,scope,dim_id,true_ms,linear_ms,gap,epsilon,bound"]
    for step in report:
        rows.append(
            f"{step.step},step,,{step.true_ms!r},{step.linear_ms!r},{step.gap!r},,"
        )
        for dim_id, eps, bound in step.layer_errors:
            rows.append(f"{step.step},layer,{dim_id},,,,{eps!r},{bound!r}")
    out = Path(args.out)
    _write(out / "latency_models.csv", "\n".join(rows) + "\n")
    _write_json(out / "manifest.json", {**manifest.to_obj(), "hash": stamp})
    print(f"compare-latency-models: wrote {out / 'latency_models.csv'}")
    return EXIT_OK


def cmd_extract(args) -> int:
    manifest = _manifest(
        "extract",
        {
            "report": args.report,
            "arch": args.arch,
            "scores": args.scores,
            "lut": args.lut,
        },
        {},
    )
    arch, raw_scores, vectors, tables = _load_problem(args)
    report = json.loads(_read_text(args.report))
    if report.get("assignment") is None:
        raise ValidationError("extract: report carries no assignment (infeasible solve?)")
    assignment = imp_mod.Assignment(
        omega={k: int(v) for k, v in report["assignment"]["omega"].items()},
        kappa={int(k): int(v) for k, v in report["assignment"]["kappa"].items()},
    )
    problem = solver_mod.assemble(arch, vectors, tables, report["budget_ms"])
    assignment.validate_for(arch)
    solution = solver_mod.PruningSolution(
        status=report["status"],
        assignment=assignment,
        importance=report["importance"],
        latency=report["latency_ms"],
        bound=report.get("bound"),
        node_count=report.get("node_count", 0),
        wall_time=0.0,
    )
    structure = extract_mod.extract_structure(solution, problem, raw_scores)
    text, csv = extract_mod.summarize(structure)
    out = Path(args.out)
    stamp = manifest.hash()
    _write(out / "structure.json", extract_mod.serialize_structure(structure, manifest=stamp))
    _write(out / "summary.csv", f"# manifest: {stamp}\n" + csv)
    _write(out / "summary.txt", text + f"manifest: {stamp}\n")
    _write_json(out / "manifest.json", {**manifest.to_obj(), "hash": stamp})
    print(f"extract: wrote structure files under {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_problem_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--arch", required=True, help="architecture JSON file")
    parser.add_argument("--scores", required=True, help="raw scores JSON file")
    parser.add_argument("--lut", required=True, help="latency table JSON file")


def _add_solver_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--mode",
        default="branch_and_bound",
        choices=["exhaustive", "branch_and_bound", "heuristic_only"],
    )
    parser.add_argument("--time-limit", type=float, default=60.0, help="seconds")
    parser.add_argument("--tolerance", type=float, default=0.0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latprune",
        description="Budgeted multi-granularity pruning planner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic scores and latency tables")
    p.add_argument("--arch", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distribution", default="uniform01", choices=["uniform01", "exponential"])
    p.add_argument("--unit-cost", type=float, default=1e-6)
    p.add_argument("--overhead", type=float, default=0.01)
    p.add_argument("--tile", type=int, default=32)
    p.add_argument("--spatial", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("check", help="validate inputs without solving")
    p.add_argument("--arch", required=True)
    p.add_argument("--scores")
    p.add_argument("--lut")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("solve", help="solve one budget and extract the plan")
    _add_problem_args(p)
    p.add_argument("--budget-ms", type=float, required=True)
    _add_solver_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("sweep", help="solve a list of budgets for Pareto data")
    _add_problem_args(p)
    p.add_argument("--budgets", required=True, help="comma-separated budgets in ms")
    _add_solver_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser(
        "compare-latency-models",
        help="replay a pruning trajectory under both latency models",
    )
    p.add_argument("--arch", required=True)
    p.add_argument("--lut", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compare_latency_models)

    p = sub.add_parser("extract", help="re-extract a structure from a saved report")
    p.add_argument("--report", required=True)
    _add_problem_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_extract)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ValidationError, SolveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
