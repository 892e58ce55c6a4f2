import json

import numpy as np
import pytest

from latprune import (
    Assignment,
    LatencyTable,
    RawScores,
    TableSet,
    ValidationError,
    build_all_vectors,
    extract_structure,
    solve_branch_and_bound,
    solve_exhaustive,
    summarize,
)
from latprune.extract import serialize_structure
from latprune.solver import PruningSolution, assemble

from conftest import (
    BlockSpec,
    conv_dim,
    make_arch,
    random_problem,
    random_scores,
    random_tables,
    trunk_dim,
)


def scored_problem(budget=100.0, removable=True):
    dims = [trunk_dim("t"), conv_dim("c1", 3)]
    blocks = [BlockSpec(id=1, kind="cnn_chain", dims=("c1",), removable=removable, input_ref="t")]
    arch = make_arch(dims, blocks)
    raw = {
        "t": RawScores(dim_id="t", scores=np.zeros(4)),
        "c1": RawScores(dim_id="c1", scores=np.array([0.2, 0.9, 0.5])),
    }
    vectors = build_all_vectors(arch, raw)
    tables = TableSet()
    tables.add(
        LatencyTable(block_id=1, part="conv_layer", layer=1, axes=("t", "c1"),
                     data=np.array([[1.0, 2.0, 3.0]])),
    )
    return assemble(arch, vectors, tables, budget), raw


class TestExtract:
    def test_keeps_highest_scoring_elements(self):
        problem, raw = scored_problem()
        solution = PruningSolution(
            status="optimal",
            assignment=Assignment(omega={"c1": 2}, kappa={1: 1}),
            importance=1.4,
            latency=2.0,
            bound=1.4,
            node_count=1,
            wall_time=0.0,
        )
        structure = extract_structure(solution, problem, raw)
        dim = structure.blocks[0].dims[0]
        # Scores [0.2, 0.9, 0.5]: top-2 are elements 2 and 3 (1-based).
        assert dim.kept_elements == (2, 3)
        assert dim.kept_count == 2

    def test_removed_block_absent_regardless_of_options(self):
        problem, raw = scored_problem()
        solution = PruningSolution(
            status="optimal",
            assignment=Assignment(omega={"c1": 3}, kappa={1: 0}),
            importance=0.0,
            latency=0.0,
            bound=0.0,
            node_count=1,
            wall_time=0.0,
        )
        structure = extract_structure(solution, problem, raw)
        assert structure.blocks[0].kept is False
        assert structure.blocks[0].dims == ()
        assert structure.degenerate

    def test_infeasible_solution_rejected(self):
        problem, raw = scored_problem()
        solution = PruningSolution(
            status="infeasible", assignment=None, importance=None,
            latency=None, bound=None, node_count=0, wall_time=0.0,
        )
        with pytest.raises(ValidationError, match="infeasible"):
            extract_structure(solution, problem, raw)

    def test_missing_scores_for_retained_dim(self):
        problem, raw = scored_problem()
        del raw["c1"]
        solution = PruningSolution(
            status="optimal",
            assignment=Assignment(omega={"c1": 1}, kappa={1: 1}),
            importance=0.9,
            latency=1.0,
            bound=0.9,
            node_count=1,
            wall_time=0.0,
        )
        with pytest.raises(ValidationError, match="c1"):
            extract_structure(solution, problem, raw)

    @pytest.mark.parametrize("seed", range(10))
    def test_totals_reproduce_solver_values_exactly(self, seed):
        rng = np.random.default_rng(5000 + seed)
        problem, raw = random_problem(rng)
        sol = solve_branch_and_bound(problem)
        if sol.status == "infeasible":
            return
        structure = extract_structure(sol, problem, raw)
        assert structure.importance == sol.importance
        assert structure.latency == sol.latency

    def test_kept_counts_and_lists_are_consistent(self):
        rng = np.random.default_rng(88)
        problem, raw = random_problem(rng)
        sol = solve_exhaustive(problem)
        if sol.status == "infeasible":
            return
        structure = extract_structure(sol, problem, raw)
        from latprune import kept_elements

        for block_out, block in zip(structure.blocks, problem.arch.blocks):
            if not block_out.kept:
                continue
            for dim_out in block_out.dims:
                dim = problem.arch.dims[dim_out.dim_id]
                assert dim_out.kept_count == kept_elements(dim, dim_out.option)
                assert len(dim_out.kept_elements) == dim_out.kept_count
                assert len(set(dim_out.kept_elements)) == dim_out.kept_count
                assert all(1 <= e <= dim.max_elements for e in dim_out.kept_elements)
                assert list(dim_out.kept_elements) == sorted(dim_out.kept_elements)

    def test_importance_matches_sum_of_kept_scores(self):
        rng = np.random.default_rng(89)
        problem, raw = random_problem(rng)
        sol = solve_exhaustive(problem)
        if sol.status == "infeasible":
            return
        structure = extract_structure(sol, problem, raw)
        total = 0.0
        for block_out in structure.blocks:
            for dim_out in block_out.dims:
                scores = raw[dim_out.dim_id].scores
                total += float(sum(scores[e - 1] for e in dim_out.kept_elements))
        assert total == pytest.approx(structure.importance, rel=1e-9, abs=1e-9)


class TestSummarize:
    def _structure(self, kappa):
        dims = [trunk_dim("t")] + [conv_dim(f"c{i}", 2) for i in range(1, 5)]
        blocks = [
            BlockSpec(id=i, kind="cnn_chain", dims=(f"c{i}",), removable=True, input_ref="t")
            for i in range(1, 5)
        ]
        arch = make_arch(dims, blocks)
        rng = np.random.default_rng(0)
        raw = random_scores(arch, rng)
        vectors = build_all_vectors(arch, raw)
        tables = random_tables(arch, rng)
        problem = assemble(arch, vectors, tables, 100.0)
        solution = PruningSolution(
            status="optimal",
            assignment=Assignment(
                omega={f"c{i}": 1 for i in range(1, 5)},
                kappa=dict(kappa),
            ),
            importance=0.0,
            latency=0.0,
            bound=0.0,
            node_count=1,
            wall_time=0.0,
        )
        return extract_structure(solution, problem, raw)

    def test_depth_line_counts_removals(self):
        structure = self._structure({1: 1, 2: 0, 3: 1, 4: 0})
        text, csv = summarize(structure)
        assert "depth 2/4" in text
        assert "block 2 (cnn_chain): removed" in text
        assert csv.count("\n") == 5  # header + 4 block rows

    def test_degenerate_network_flagged(self):
        structure = self._structure({1: 0, 2: 0, 3: 0, 4: 0})
        text, _ = summarize(structure)
        assert "degenerate" in text

    def test_golden_summary(self, tmp_path):
        from pathlib import Path

        golden = Path(__file__).parent / "golden" / "summary_fixed_seed.txt"
        structure = self._structure({1: 1, 2: 0, 3: 1, 4: 0})
        text, csv = summarize(structure)
        payload = text + "---\n" + csv
        if not golden.exists():  # pragma: no cover - first-run bootstrap
            golden.write_text(payload)
        assert payload == golden.read_text()


class TestSerialize:
    def test_structure_json_round_trip_fields(self):
        problem, raw = scored_problem()
        solution = PruningSolution(
            status="optimal",
            assignment=Assignment(omega={"c1": 2}, kappa={1: 1}),
            importance=1.4,
            latency=2.0,
            bound=1.4,
            node_count=1,
            wall_time=0.0,
        )
        structure = extract_structure(solution, problem, raw)
        obj = json.loads(serialize_structure(structure, manifest="abc"))
        assert obj["_manifest"] == "abc"
        assert obj["depth_kept"] == 1
        assert obj["blocks"][0]["dims"][0]["kept_elements"] == [2, 3]
