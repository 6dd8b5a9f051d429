import numpy as np

from dcl0.cli import main
from dcl0.fem import (assemble, build_structured_mesh, export_mesh,
                      read_field, write_field)
from dcl0.problems import default_load, poisson_prototype


def run(*argv):
    return main(list(argv))


class TestPoissonCommand:
    def test_writes_outputs_and_verifies(self, tmp_path):
        csv = tmp_path / "run.csv"
        iters = tmp_path / "iters.csv"
        sol = tmp_path / "sol.txt"
        mult = tmp_path / "mult.txt"
        code = run("poisson", "--n", "8", "--K", "0.25", "--rho", "1e9",
                   "--csv", str(csv), "--iters-csv", str(iters),
                   "--solution-out", str(sol), "--multiplier-out", str(mult),
                   "--verify")
        assert code == 0
        header, row = csv.read_text().strip().splitlines()
        assert header.split(",") == ["n", "K", "rho", "seed", "f", "l0",
                                     "gap", "dc_iters", "ssn_iters",
                                     "selection_mode"]
        values = dict(zip(header.split(","), row.split(",")))
        assert float(values["l0"]) <= 0.25
        assert int(values["n"]) == 8
        assert values["selection_mode"] == "exact"
        field = read_field(sol)
        assert field.size == 81
        mult_field = read_field(mult)
        assert mult_field.size == 81
        iter_lines = iters.read_text().strip().splitlines()
        assert len(iter_lines) - 1 == int(values["dc_iters"])

    def test_deterministic_output(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            csv = tmp_path / f"{name}.csv"
            sol = tmp_path / f"{name}_sol.txt"
            assert run("poisson", "--n", "8", "--csv", str(csv),
                       "--solution-out", str(sol), "--seed", "7") == 0
            outs.append((csv.read_bytes(), sol.read_bytes()))
        assert outs[0] == outs[1]

    def test_vacuous_budget_matches_unconstrained(self, tmp_path):
        csv = tmp_path / "run.csv"
        sol = tmp_path / "sol.txt"
        assert run("poisson", "--n", "8", "--K", "1.0",
                   "--csv", str(csv), "--solution-out", str(sol)) == 0
        row = csv.read_text().strip().splitlines()[1].split(",")
        header = csv.read_text().splitlines()[0].split(",")
        gap = float(dict(zip(header, row))["gap"])
        assert abs(gap) <= 1e-15
        system = assemble(build_structured_mesh(8), default_load)
        problem = poisson_prototype(system)
        expected = problem.unconstrained_minimizer()
        assert np.allclose(read_field(sol), expected, atol=1e-12)

    def test_schedule_column(self, tmp_path):
        csv = tmp_path / "run.csv"
        assert run("poisson", "--n", "8", "--schedule", "0.9",
                   "--csv", str(csv)) == 0
        header, row = csv.read_text().strip().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert values["sched_steps"] == "14"

    def test_mesh_file_input(self, tmp_path):
        mesh_path = tmp_path / "mesh.txt"
        export_mesh(build_structured_mesh(8), mesh_path)
        csv_a = tmp_path / "a.csv"
        csv_b = tmp_path / "b.csv"
        assert run("poisson", "--n", "8", "--csv", str(csv_a)) == 0
        assert run("poisson", "--mesh-file", str(mesh_path), "--n", "8",
                   "--csv", str(csv_b)) == 0
        assert csv_a.read_text() == csv_b.read_text()

    def test_config_file_and_flag_precedence(self, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text("n = 8\nK = 0.5\n# comment\n")
        csv = tmp_path / "run.csv"
        assert run("poisson", "--config", str(config), "--K", "0.25",
                   "--csv", str(csv)) == 0
        header, row = csv.read_text().strip().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert values["n"] == "8"        # from config file
        assert values["K"] == "0.25"     # flag wins

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / "run.conf"
        config.write_text("mystery = 1\n")
        assert run("poisson", "--config", str(config)) == 2

    def test_invalid_budget_exit_code(self, tmp_path):
        assert run("poisson", "--n", "8", "--K", "-0.5") == 2
        assert run("poisson", "--n", "8", "--K", "2.0") == 2

    def test_missing_mesh_file_fails(self, tmp_path):
        assert run("poisson", "--mesh-file", str(tmp_path / "nope.txt")) == 1


class TestSparsaCommand:
    def test_baseline_run(self, tmp_path):
        csv = tmp_path / "sp.csv"
        sol = tmp_path / "sp_sol.txt"
        code = run("sparsa", "--n", "8", "--beta", "4.360",
                   "--csv", str(csv), "--solution-out", str(sol))
        assert code == 0
        header, row = csv.read_text().strip().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert int(values["iters"]) > 0
        assert float(values["l0"]) < 1.0

    def test_zero_beta_unconstrained(self, tmp_path):
        csv = tmp_path / "sp.csv"
        assert run("sparsa", "--n", "8", "--beta", "0",
                   "--csv", str(csv)) == 0
        header, row = csv.read_text().strip().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert int(values["iters"]) == 0

    def test_feeds_dc_warm_start(self, tmp_path):
        sol = tmp_path / "sp_sol.txt"
        assert run("sparsa", "--n", "8", "--beta", "4.360",
                   "--csv", str(tmp_path / "sp.csv"),
                   "--solution-out", str(sol)) == 0
        csv = tmp_path / "warm.csv"
        assert run("poisson", "--n", "8", "--u0-file", str(sol),
                   "--csv", str(csv)) == 0
        header, row = csv.read_text().strip().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert int(values["dc_iters"]) <= 5


class TestControlCommand:
    def test_single_beta(self, tmp_path):
        csv = tmp_path / "ctl.csv"
        assert run("control", "--n", "8", "--K", "0.25",
                   "--csv", str(csv)) == 0
        header, row = csv.read_text().strip().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert float(values["tracking_error"]) > 0.0
        assert int(values["dc_iters"]) <= 8

    def test_beta_sweep_rows(self, tmp_path):
        csv = tmp_path / "ctl.csv"
        assert run("control", "--n", "8", "--K", "0.25",
                   "--betas", "1e-7,1e-9", "--schedule", "0.9",
                   "--csv", str(csv)) == 0
        lines = csv.read_text().strip().splitlines()
        assert len(lines) == 3
        header = lines[0].split(",")
        errs = [float(dict(zip(header, ln.split(",")))["tracking_error"])
                for ln in lines[1:]]
        assert errs[1] < errs[0]

    def test_zero_target_override(self, tmp_path):
        yd = tmp_path / "yd.txt"
        write_field(yd, np.zeros(81))
        csv = tmp_path / "ctl.csv"
        sol = tmp_path / "u.txt"
        assert run("control", "--n", "8", "--y-d-file", str(yd),
                   "--csv", str(csv), "--solution-out", str(sol)) == 0
        assert np.max(np.abs(read_field(sol))) <= 1e-12


class TestSweepCommand:
    def test_rows_ordered_by_rho(self, tmp_path):
        csv = tmp_path / "sweep.csv"
        assert run("sweep", "--n", "8", "--rhos", "1e3,1e6,1e9",
                   "--csv", str(csv)) == 0
        lines = csv.read_text().strip().splitlines()
        assert len(lines) == 4
        header = lines[0].split(",")
        rhos = [float(dict(zip(header, ln.split(",")))["rho"])
                for ln in lines[1:]]
        assert rhos == sorted(rhos) == [1e3, 1e6, 1e9]


class TestVerifyCommand:
    def test_consistent_run_passes(self, tmp_path):
        csv = tmp_path / "run.csv"
        sol = tmp_path / "sol.txt"
        assert run("poisson", "--n", "8", "--csv", str(csv),
                   "--solution-out", str(sol)) == 0
        assert run("verify", "--csv", str(csv), "--solution-out", str(sol),
                   "--n", "8", "--K", "0.25") == 0

    def test_corrupted_field_fails(self, tmp_path):
        csv = tmp_path / "run.csv"
        sol = tmp_path / "sol.txt"
        assert run("poisson", "--n", "8", "--csv", str(csv),
                   "--solution-out", str(sol)) == 0
        values = read_field(sol)
        values[len(values) // 2] += 1.0
        write_field(sol, values)
        assert run("verify", "--csv", str(csv), "--solution-out", str(sol),
                   "--n", "8", "--K", "0.25") == 1

    def test_missing_arguments(self):
        assert run("verify", "--n", "8") == 2
