import json
import subprocess
import sys

import numpy as np
import pytest

from fpstream.core import apply_stream_arrays, exact_fp
from fpstream.harness import bench, fit_space_slope, run_estimator, summarize, sweep, trial_seed
from fpstream.streamgen import GeneratorSpec
from fpstream.streamio import read_stream, write_binary_stream, write_text_stream
from fpstream.core import StreamMeta, TURNSTILE


def _cli(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "fpstream.cli", *args],
        capture_output=True, text=True,
    )
    return proc.returncode, proc.stdout, proc.stderr


def test_stream_file_round_trips(tmp_path):
    items = np.array([3, 1, 3, 7], dtype=np.int64)
    deltas = np.array([1, 1, -1, 2], dtype=np.int64)
    meta = StreamMeta(n=8, m=4, mode=TURNSTILE)
    text = tmp_path / "s.txt"
    write_text_stream(text, items, deltas, meta)
    ri, rd, rm = read_stream(text)
    assert np.array_equal(ri, items) and np.array_equal(rd, deltas)
    assert rm.mode == TURNSTILE and rm.n == 8
    binary = tmp_path / "s.bin"
    write_binary_stream(binary, items, deltas, meta)
    bi, bd, bm = read_stream(binary)
    assert np.array_equal(bi, items) and np.array_equal(bd, deltas)
    assert bm.n == 8 and bm.m == 4


def test_trial_seed_counter_hashing():
    a = trial_seed(7, 0)
    b = trial_seed(7, 1)
    assert a != b
    assert trial_seed(7, 0) == a


def test_bench_single_trial_summary_matches_row():
    spec = GeneratorSpec(kind="zipf", n=512, m=10_000, zipf_s=1.4, seed=0)
    results = bench(spec, "tp-insert", 3.0, 0.25, trials=1, master_seed=5)
    assert len(results) == 1
    summary = summarize(results, "tp-insert", spec, 3.0, 0.25)
    assert summary["trials"] == 1
    assert summary["success_rate"] in (0.0, 1.0)
    assert summary["median_rel_err"] == abs(results[0].rel_err)
    assert results[0].success == (abs(results[0].rel_err) <= 0.25)


def test_bench_deterministic_and_parallel_merge():
    spec = GeneratorSpec(kind="zipf", n=512, m=8_000, zipf_s=1.4, seed=0)
    a = bench(spec, "tp-insert", 3.0, 0.25, trials=4, master_seed=9)
    b = bench(spec, "tp-insert", 3.0, 0.25, trials=4, master_seed=9, workers=2)
    assert [r.csv_row() for r in a] == [r.csv_row() for r in b]


def test_run_estimator_contract_refusals():
    items = np.array([1, 2, 3], dtype=np.int64)
    from fpstream.core import ModeError
    with pytest.raises(ModeError):
        run_estimator("ro1pass", items, None, 8, 3.0, 0.25, 0, order="arbitrary")
    with pytest.raises(ModeError):
        run_estimator("tp-insert", items, np.array([1, -1, 1]), 8, 3.0, 0.25, 0)


def test_fit_space_slope_recovers_known_exponent():
    ns = [2**10, 2**12, 2**14, 2**16]
    counters = [int(40 * n**0.5) for n in ns]
    fit = fit_space_slope(ns, counters)
    assert abs(fit["slope"] - 0.5) < 0.01
    with pytest.raises(ValueError):
        fit_space_slope([1024, 2048], [10, 20])


def test_sweep_reports_rows_and_slope():
    out = sweep([2**8, 2**9, 2**10, 2**11], p=3.0, eps=0.3, algorithm="tp-insert",
                master_seed=1)
    assert len(out["rows"]) == 4
    assert out["target"] == pytest.approx(1 - 2 / 3.0)
    assert all(row["counters"] > 0 for row in out["rows"])


def test_cli_generate_estimate_round_trip(tmp_path):
    out = tmp_path / "z.txt"
    code, stdout, _ = _cli("generate", "--kind", "zipf", "--s", "1.4", "--n", "512",
                           "--m", "20000", "--order", "rand", "--seed", "7",
                           "--out", str(out))
    assert code == 0
    info = json.loads(stdout)
    assert info["m"] == 20000 and info["order"] == "random"
    code, stdout, _ = _cli("estimate", str(out), "--algorithm", "oracle", "--p", "3")
    assert code == 0
    est = json.loads(stdout)
    items, deltas, meta = read_stream(out)
    truth = exact_fp(apply_stream_arrays(items, deltas, meta.n), 3.0)
    assert est["estimate"] == pytest.approx(truth)


def test_cli_generate_deterministic_files(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    args = ["generate", "--kind", "zipf", "--s", "1.4", "--n", "256", "--m", "5000",
            "--order", "rand", "--seed", "7"]
    assert _cli(*args, "--out", str(a))[0] == 0
    assert _cli(*args, "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_usage_errors_exit_2(tmp_path):
    code, _, _ = _cli("generate", "--kind", "zipf", "--n", "0", "--m", "10",
                      "--out", str(tmp_path / "x.txt"))
    assert code == 2
    code, _, _ = _cli("generate", "--kind", "uniform", "--n", "64",
                      "--out", str(tmp_path / "y.txt"))  # missing --m
    assert code == 2
    code, _, _ = _cli("bogus-command")
    assert code == 2
    code, _, _ = _cli("sweep", "--n-list", "256,512", "--p", "3")
    assert code == 2


def test_cli_mode_refusal_exit_3(tmp_path):
    out = tmp_path / "arb.txt"
    code, _, _ = _cli("generate", "--kind", "zipf", "--n", "256", "--m", "4000",
                      "--order", "sorted", "--seed", "1", "--out", str(out))
    assert code == 0
    code, _, err = _cli("estimate", str(out), "--algorithm", "ro1pass")
    assert code == 3
    assert "refused" in err
    # turnstile stream against the insertion-only two-pass variant
    turn = tmp_path / "turn.txt"
    code, _, _ = _cli("generate", "--kind", "uniform", "--n", "64", "--m", "2000",
                      "--deletions", "0.1", "--seed", "2", "--out", str(turn))
    assert code == 0
    code, _, _ = _cli("estimate", str(turn), "--algorithm", "tp-insert")
    assert code == 3


def test_cli_bench_byte_identical_reruns(tmp_path):
    args = ["bench", "--kind", "zipf", "--s", "1.4", "--n", "256", "--m", "4000",
            "--algorithm", "tp-insert", "--trials", "3", "--seed", "11"]
    runs = [_cli(*args) for _ in range(3)]
    assert all(code == 0 for code, _, _ in runs)
    assert runs[0][1] == runs[1][1] == runs[2][1]


def test_cli_bench_csv_schema(tmp_path):
    csv_path = tmp_path / "rows.csv"
    code, stdout, _ = _cli("bench", "--kind", "uniform", "--n", "128", "--m", "2000",
                           "--algorithm", "oracle", "--trials", "2", "--seed", "3",
                           "--out", str(csv_path))
    assert code == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "trial,seed,estimate,oracle,rel_err,success,counters,bits"
    assert len(lines) == 3
    summary = json.loads(stdout)
    assert set(summary) >= {"algorithm", "n", "m", "p", "eps", "trials",
                            "success_rate", "median_rel_err", "bits_estimate"}
    assert summary["success_rate"] == 1.0  # oracle matches itself
