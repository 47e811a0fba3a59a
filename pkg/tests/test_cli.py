"""CLI: subcommand plumbing, output formats, exit codes, golden values."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from gpukalc.cli import main
from gpukalc.profiles import load_profile

FIXTURES = Path(__file__).parent / "fixtures"
VECADD = str(FIXTURES / "vecadd.ptx")
NN = str(FIXTURES / "nn_euclid.ptx")
WORKED = str(FIXTURES / "worked_example.ptx")
STUMP = str(FIXTURES / "ensemble_stump.json")


@pytest.fixture()
def runner():
    return CliRunner()


def _predict(runner, *extra):
    return runner.invoke(
        main,
        ["predict", "-p", "k20", "--ptx", VECADD, "-b", "64", "-t", "256", *extra],
    )


# ----------------------------------------------------------------- predict


def test_predict_table(runner):
    result = _predict(runner)
    assert result.exit_code == 0, result.output
    assert "kernel vecadd on Tesla K20" in result.stdout
    assert "time:" in result.stdout
    assert "power" not in result.stdout  # no model given, and still exit 0


def test_predict_json_golden(runner):
    result = _predict(runner, "--format", "json")
    assert result.exit_code == 0, result.output
    doc = json.loads(result.stdout)
    assert doc["profile"] == "tesla_k20"
    row = doc["results"][0]
    assert row["kernel"] == "vecadd"
    assert row["waves"] == 1
    assert row["blocks_per_sm"] == 8
    assert row["gm_latency_cycles"] == pytest.approx(330.01552, rel=1e-12)
    assert row["d_total_cycles"] == pytest.approx(4022.367353605568, rel=1e-12)
    assert row["time_us"] == pytest.approx(5.130570604088735, rel=1e-12)


def test_predict_multiple_launches_zip(runner):
    result = runner.invoke(
        main,
        ["predict", "-p", "k20", "--ptx", VECADD, "-b", "64", "-b", "128",
         "-t", "256", "--format", "json"],
    )
    assert result.exit_code == 0, result.output
    rows = json.loads(result.stdout)["results"]
    assert [r["n_blocks"] for r in rows] == [64, 128]
    assert all(r["threads_per_block"] == 256 for r in rows)


def test_predict_csv_format(runner):
    result = _predict(runner, "--format", "csv")
    assert result.exit_code == 0
    lines = result.stdout.strip().splitlines()
    assert lines[0].startswith("kernel,n_blocks,threads_per_block,waves")
    assert len(lines) == 2
    assert lines[1].startswith("vecadd,64,256,1,")


def test_predict_with_model_adds_power_energy(runner):
    result = _predict(runner, "--model", STUMP, "--format", "json")
    assert result.exit_code == 0, result.output
    row = json.loads(result.stdout)["results"][0]
    # block_size 256 scales to 0.25 <= 0.5 -> 50 - 5 = 45 W
    assert row["power_w"] == 45.0
    assert row["energy_uj"] == pytest.approx(45.0 * row["time_us"])


def test_predict_trace(runner):
    result = runner.invoke(
        main,
        ["predict", "-p", str(FIXTURES / "fixture_profile.json"), "--ptx", WORKED,
         "-b", "13", "-t", "256", "--trace", "--format", "json"],
    )
    assert result.exit_code == 0, result.output
    trace = json.loads(result.stdout)["results"][0]["trace"]
    assert len(trace) == 7
    assert trace[0]["opcode"] == "add.s64"
    assert {t["resource"] for t in trace} == {"SP", "LSU", "WS"}


def test_predict_loops_flag(runner):
    looped = FIXTURES / "looped_cli.ptx"
    looped.write_text(
        ".entry looped() {\n"
        "\tmov.u32 %r1, 0;\n"
        "$L_body:\n"
        "\tadd.s32 %r1, %r1, 1;\n"
        "\tsetp.lt.s32 %p1, %r1, %r2;\n"
        "\t@%p1 bra $L_body;\n"
        "\tret;\n}\n"
    )
    try:
        args = ["predict", "-p", "k20", "--ptx", str(looped), "-b", "13", "-t", "128",
                "--format", "json"]
        missing = runner.invoke(main, args)
        assert missing.exit_code == 1
        assert "iteration count" in missing.stderr
        ok = runner.invoke(main, args + ["--loops", "$L_body=10"])
        assert ok.exit_code == 0, ok.output
    finally:
        looped.unlink()


def test_predict_kernel_selection(runner, tmp_path):
    multi = tmp_path / "multi.ptx"
    multi.write_text(
        ".entry alpha() { add.s32 %r1, %r2, %r3; ret; }\n"
        ".entry beta() { mul.lo.s32 %r1, %r2, %r3; ret; }\n"
    )
    ambiguous = runner.invoke(
        main, ["predict", "-p", "k20", "--ptx", str(multi), "-b", "1", "-t", "32"]
    )
    assert ambiguous.exit_code == 1
    assert "alpha" in ambiguous.stderr and "beta" in ambiguous.stderr
    picked = runner.invoke(
        main,
        ["predict", "-p", "k20", "--ptx", str(multi), "-k", "beta", "-b", "1",
         "-t", "32", "--format", "json"],
    )
    assert picked.exit_code == 0
    assert json.loads(picked.stdout)["results"][0]["kernel"] == "beta"


# --------------------------------------------------------------- exit codes


def test_unknown_profile_is_domain_error(runner):
    result = runner.invoke(
        main, ["predict", "-p", "nope", "--ptx", VECADD, "-b", "1", "-t", "32"]
    )
    assert result.exit_code == 1
    assert "error:" in result.stderr


def test_bad_loops_value_is_usage_error(runner):
    result = _predict(runner, "--loops", "oops")
    assert result.exit_code == 2


def test_mismatched_blocks_tpb_usage_error(runner):
    result = runner.invoke(
        main,
        ["predict", "-p", "k20", "--ptx", VECADD, "-b", "1", "-b", "2", "-b", "3",
         "-t", "32", "-t", "64"],
    )
    assert result.exit_code == 2


def test_zero_blocks_usage_error(runner):
    result = runner.invoke(
        main, ["predict", "-p", "k20", "--ptx", VECADD, "-b", "0", "-t", "32"]
    )
    assert result.exit_code == 2


def test_infeasible_launch_is_domain_error(runner):
    result = runner.invoke(
        main,
        ["predict", "-p", "k20", "--ptx", VECADD, "-b", "1", "-t", "2048",
         "--regs", "64"],
    )
    assert result.exit_code == 1
    assert "does not fit" in result.stderr


# ---------------------------------------------------------------- features


def test_features_csv_stdout(runner):
    result = runner.invoke(
        main,
        ["features", "-p", "k20", "--ptx", NN, "-b", "256", "-t", "256",
         "--regs", "32"],
    )
    assert result.exit_code == 0, result.output
    lines = result.stdout.strip().splitlines()
    assert lines[0].split(",")[0] == "kernel"
    assert len(lines[0].split(",")) == 33
    assert lines[1].startswith("nn_euclid[256x256],")


def test_features_selected_to_file(runner, tmp_path):
    out = tmp_path / "f.csv"
    result = runner.invoke(
        main,
        ["features", "-p", "k20", "--ptx", NN, "-b", "13", "-t", "128",
         "--selected", "-o", str(out)],
    )
    assert result.exit_code == 0, result.output
    header = out.read_text().splitlines()[0]
    assert len(header.split(",")) == 16


# -------------------------------------------------------------- microbench


def test_gen_microbench_stdout(runner):
    result = runner.invoke(main, ["gen-microbench", "--kind", "latency"])
    assert result.exit_code == 0
    assert "clock64()" in result.stdout


def test_gen_microbench_ilp_to_file(runner, tmp_path):
    out = tmp_path / "tp.cu"
    result = runner.invoke(
        main,
        ["gen-microbench", "--kind", "compute_throughput", "--ilp", "3",
         "-o", str(out)],
    )
    assert result.exit_code == 0
    assert "e += f; f += e;" in out.read_text()


# --------------------------------------------------------------------- fit


def test_fit_linear_json(runner, tmp_path):
    csv = tmp_path / "m.csv"
    csv.write_text("x,y\n" + "\n".join(
        f"{x},{2e-5 * x + 1.4489}" for x in (1, 100, 10000, 100000, 1000000)
    ))
    result = runner.invoke(main, ["fit", "--kind", "linear", "--csv", str(csv)])
    assert result.exit_code == 0, result.output
    doc = json.loads(result.stdout)
    assert doc["slope"] == pytest.approx(2e-5)
    assert doc["intercept"] == pytest.approx(1.4489)
    assert doc["r2"] == pytest.approx(1.0)


def test_fit_peakwarps(runner, tmp_path):
    csv = tmp_path / "w.csv"
    csv.write_text("x,y\n1,30\n2,60\n4,100\n8,118\n16,120\n32,119\n")
    result = runner.invoke(main, ["fit", "--kind", "peakwarps", "--csv", str(csv)])
    assert result.exit_code == 0
    assert json.loads(result.stdout)["peakwarps"] == 8


def test_fit_bad_csv_is_domain_error(runner, tmp_path):
    csv = tmp_path / "bad.csv"
    csv.write_text("not,a,header\n1,2,3\n")
    result = runner.invoke(main, ["fit", "--kind", "linear", "--csv", str(csv)])
    assert result.exit_code == 1


# ------------------------------------------------------------------- setup


def test_setup_builds_profile(runner, tmp_path):
    overhead = tmp_path / "overhead.csv"
    overhead.write_text("x,y\n" + "\n".join(
        f"{x},{3e-5 * x + 2.0}" for x in (32, 1024, 65536, 1048576, 16777216)
    ))
    out = tmp_path / "newdev.json"
    result = runner.invoke(
        main,
        ["setup", "--base", "k20", "--output", str(out), "--name", "newdev",
         "--overhead-csv", str(overhead), "--latency", "divf=900",
         "--latency", "tanh=40"],
    )
    assert result.exit_code == 0, result.output
    p = load_profile(out)
    assert p.name == "newdev"
    assert p.overhead.slope == pytest.approx(3e-5)
    assert p.overhead.intercept == pytest.approx(2.0)
    assert p.latency.instructions["divf"] == 900.0
    assert p.latency.instructions["tanh"] == 40.0
    # untouched sections carried over from the base profile
    assert p.nSM == 13


def test_setup_gm_latency_piecewise(runner, tmp_path):
    pts = [64, 512, 1024, 2048, 3328, 4095, 4096, 8192, 16384, 20000,
           24576, 100000, 500000, 700000, 991232, 1500000, 2203648, 3000000]

    def truth(x):
        if x < 4096:
            return 0.02828 * x + 220.0
        if x < 24576:
            return 0.00478 * x + 251.7
        if x < 991232:
            return 0.0001679 * x + 307.8
        return -0.00002529 * x + 501.8

    csv = tmp_path / "lat.csv"
    csv.write_text("x,y\n" + "\n".join(f"{x},{truth(x)}" for x in pts))
    out = tmp_path / "fitted.json"
    result = runner.invoke(
        main,
        ["setup", "--base", "k20", "--output", str(out),
         "--gm-latency-csv", str(csv), "--gm-segments", "4"],
    )
    assert result.exit_code == 0, result.output
    p = load_profile(out)
    assert p.gm_latency_model.breakpoints == (4096.0, 24576.0, 991232.0)


# ------------------------------------------------------------------- misc


def test_list_profiles(runner):
    result = runner.invoke(main, ["list-profiles"])
    assert result.exit_code == 0
    assert result.stdout.split() == [
        "gtx1050", "quadro_k4200", "tesla_k20", "tesla_m60"
    ]


def test_help_runs(runner):
    assert runner.invoke(main, ["--help"]).exit_code == 0
    assert runner.invoke(main, ["predict", "--help"]).exit_code == 0
