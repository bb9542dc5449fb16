import csv
import io

import pytest

from abftcg import harness
from abftcg.cli import main
from abftcg.pcg import RUN_COLUMNS
from abftcg.sparse import generate_test_matrix, write_matrix_market


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(argv, tmp_path, name="out.csv"):
    out = tmp_path / name
    rc = main(argv + ["--out", str(out)])
    return rc, read_csv(out)


def test_audit_identity_shift_is_clean(tmp_path):
    rc, rows = run(["spmv-check", "--generate", "identity:8", "--scheme", "shift"], tmp_path)
    assert rc == 0
    assert rows[0] == harness.AUDIT_COLUMNS
    assert len(rows) > 1
    col = rows[0].index("wrong_silent")
    assert all(r[col] == "0" for r in rows[1:])


def test_audit_from_file_sampled(tmp_path):
    path = tmp_path / "lap.mtx"
    write_matrix_market(generate_test_matrix("laplacian2d", 3), path)
    rc, rows = run(["spmv-check", "--matrix", str(path), "--scheme", "multi", "--k", "3",
                    "--correct", "--mode", "sampled", "--count", "200", "--seed", "4"],
                   tmp_path)
    assert rc == 0 and len(rows) == 201


def test_control_run_is_clean(tmp_path):
    rc, rows = run(["spmv-check", "--generate", "diag_dominant:16:1", "--mode", "control"],
                   tmp_path)
    assert rc == 0 and len(rows) == 2
    assert rows[1][rows[0].index("outcome")] == "clean"


def test_output_targets_need_multi(tmp_path):
    with pytest.raises(SystemExit):
        main(["spmv-check", "--generate", "identity:4", "--scheme", "shift", "--targets", "y"])


def test_solve_row_and_trace(tmp_path):
    trace = tmp_path / "trace.csv"
    rc, rows = run(["solve", "--generate", "laplacian2d:6", "--method", "abft-correct",
                    "--alpha", "1/16", "--seed", "3", "--s", "4", "--trace", str(trace)],
                   tmp_path)
    assert rc == 0
    assert rows[0] == ["s", "d", "alpha"] + RUN_COLUMNS
    assert rows[1][:3] == ["4", "1", "0.0625"]
    events = read_csv(trace)
    assert events[0] == ["iter", "event", "time"]
    assert {"checkpoint", "step"} <= {e[1] for e in events[1:]}


def test_solve_is_deterministic(tmp_path):
    argv = ["solve", "--generate", "laplacian2d:6", "--method", "abft-detect", "--alpha", "0.25",
            "--seed", "9"]
    _, a = run(argv, tmp_path, "a.csv")
    _, b = run(argv, tmp_path, "b.csv")
    wall = a[0].index("wall_seconds")
    assert [r[:wall] for r in a] == [r[:wall] for r in b]


def test_solve_with_lambda_and_factor(tmp_path):
    rc, rows = run(["solve", "--generate", "laplacian2d:5", "--method", "online",
                    "--lambda", "1e-4", "--inverse-factor-shift", "1.0", "--seed", "1"],
                   tmp_path)
    assert rc == 0 and rows[1][rows[0].index("converged")] == "1"


def test_model_table(tmp_path):
    rc, rows = run(["model", "--generate", "laplacian2d:8", "--alphas", "1/4,1/64"], tmp_path)
    assert rc == 0
    assert rows[0] == harness.MODEL_COLUMNS
    assert len(rows) == 1 + 3 * 2
    assert {r[0] for r in rows[1:]} == {"online_detection", "abft_detection", "abft_correction"}


def test_sweep_fault_free_ranks_by_verification_cost(tmp_path):
    rc, rows = run(["sweep", "--generate", "laplacian2d:6", "--alphas", "0", "--reps", "1"],
                   tmp_path)
    assert rc == 0 and rows[0] == harness.SWEEP_COLUMNS
    mean = {r[0]: float(r[rows[0].index("mean_wall")]) for r in rows[1:]}
    assert mean["online_detection"] < mean["abft_detection"] < mean["abft_correction"]


def test_sweep_single_rep_replays_exactly(tmp_path):
    argv = ["sweep", "--generate", "laplacian2d:5", "--alphas", "1/8", "--reps", "1",
            "--seed", "2", "--methods", "abft-detect,abft-correct"]
    _, a = run(argv, tmp_path, "a.csv")
    _, b = run(argv + ["--workers", "2"], tmp_path, "b.csv")
    assert a == b


def test_validate_model_tables(tmp_path):
    summary = tmp_path / "summary.csv"
    rc, rows = run(["validate-model", "--generate", "laplacian2d:5", "--method", "abft-detect",
                    "--alpha", "1/16", "--s-range", "1:3", "--reps", "3",
                    "--summary", str(summary)], tmp_path)
    assert rc == 0 and rows[0] == harness.VALIDATE_COLUMNS
    assert [r[2] for r in rows[1:]][:3] == ["1", "2", "3"]
    summ = read_csv(summary)
    assert summ[0] == harness.VALIDATE_SUMMARY_COLUMNS
    assert float(summ[1][-1]) >= 0.0


def test_validate_model_summary_to_stdout(capsys):
    assert main(["validate-model", "--generate", "identity:4", "--s-range", "1,2",
                 "--reps", "1"]) == 0
    text = capsys.readouterr().out
    tables = [list(csv.reader(io.StringIO(t))) for t in text.strip().split("\n\n")]
    assert tables[0][0] == harness.VALIDATE_COLUMNS
    assert tables[1][0] == harness.VALIDATE_SUMMARY_COLUMNS


@pytest.mark.parametrize("bad", [["--alpha", "one/16"], ["--s-range", "0:3"]])
def test_bad_arguments_exit(bad):
    with pytest.raises(SystemExit):
        main(["validate-model", "--generate", "identity:4"] + bad)


def test_bad_generator_spec():
    with pytest.raises(SystemExit):
        main(["solve", "--generate", "laplacian2d"])


def test_version_names_schema(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert f"csv schema {harness.CSV_SCHEMA_VERSION}" in capsys.readouterr().out
