"""Profiles: shipped data, schema validation, and empirical model evaluation
against the frozen decimal oracle."""

import json
import logging

import pytest

from gpukalc.errors import ProfileError
from gpukalc.profiles import (
    ExpGrowthModel,
    LinearOverheadModel,
    PiecewiseLinearModel,
    cycles_from_us,
    dump_profile,
    global_mem_latency,
    latency_of,
    launch_overhead_us,
    list_shipped_profiles,
    load_profile,
    mem_throughput,
    profile_from_dict,
    profile_to_dict,
    resolve_profile,
    shipped_profile_dir,
    us_from_cycles,
)
from gpukalc.ptx.classify import default_table
from gpukalc.ptx.parser import parse_instruction
from gpukalc.ptx.types import InstClass, Resource


def _inst(stmt: str):
    return parse_instruction(stmt, 1, table=default_table())


# ------------------------------------------------------------ shipped data


def test_shipped_profile_names():
    assert list_shipped_profiles() == [
        "gtx1050",
        "quadro_k4200",
        "tesla_k20",
        "tesla_m60",
    ]


def test_k20_known_values(k20):
    assert k20.nSM == 13
    assert k20.nu_gpu == 784
    assert k20.resources[Resource.SP] == 192
    table = k20.latency.instructions
    assert table["divf"] == 894.5
    assert table["mov"] == 2
    assert table["shared"] == 47
    assert table["mads"] == 20
    assert k20.latency.gap(Resource.LSU) == 1


@pytest.mark.parametrize(
    "name,n_sm,mhz,fma",
    [
        ("quadro_k4200", 7, 706, 9),  # madf row reused via alias
        ("tesla_m60", 16, 1178, 188),
        ("gtx1050", 5, 1493, 12),
    ],
)
def test_other_profiles_spot_values(name, n_sm, mhz, fma):
    p = resolve_profile(name)
    assert p.nSM == n_sm
    assert p.nu_gpu == mhz
    assert p.latency.instructions["fma"] == fma


def test_aliases_resolve():
    for alias, full in [("k20", "tesla_k20"), ("m60", "tesla_m60"),
                        ("k4200", "quadro_k4200"), ("1050", "gtx1050")]:
        assert resolve_profile(alias).name == full


def test_profile_dir_env_var(tmp_path, monkeypatch, fixture_profile):
    dump_profile(fixture_profile, tmp_path / "custom.json")
    monkeypatch.setenv("GPUKALC_PROFILE_DIR", str(tmp_path))
    assert resolve_profile("custom").name == "fixture"


def test_unknown_profile_lists_shipped():
    with pytest.raises(ProfileError, match="tesla_k20"):
        resolve_profile("does_not_exist")


def test_round_trip_all_shipped():
    for name in list_shipped_profiles():
        p = resolve_profile(name)
        doc = profile_to_dict(p)
        again = profile_to_dict(profile_from_dict(doc))
        assert doc == again


def test_v100_latency_overlay_is_data_only():
    path = shipped_profile_dir() / "tesla_v100_latencies.json"
    doc = json.loads(path.read_text())
    assert doc["kind"] == "latency_overlay"
    assert doc["latencies"]["instructions"]["fma"] == 232
    assert doc["latencies"]["instructions"]["divf"] == 977
    with pytest.raises(ProfileError):
        profile_from_dict(doc)  # not a loadable full profile


# ------------------------------------------------------------- validation


@pytest.fixture()
def base_doc(fixture_profile):
    return profile_to_dict(fixture_profile)


def _expect_error(doc, match):
    with pytest.raises(ProfileError, match=match):
        profile_from_dict(doc)


def test_schema_version_checked(base_doc):
    base_doc["schema_version"] = 99
    _expect_error(base_doc, "schema_version")


def test_missing_resource(base_doc):
    del base_doc["resources"]["LSU"]
    _expect_error(base_doc, "LSU")


def test_nonpositive_resource(base_doc):
    base_doc["resources"]["SP"] = 0
    _expect_error(base_doc, "SP")


def test_missing_shared_latency(base_doc):
    del base_doc["latencies"]["instructions"]["shared"]
    _expect_error(base_doc, "shared")


def test_missing_class_default(base_doc):
    del base_doc["latencies"]["class_defaults"]["Miscellaneous"]
    _expect_error(base_doc, "Miscellaneous")


def test_missing_attribute(base_doc):
    del base_doc["attributes"]["nSM"]
    _expect_error(base_doc, "nSM")


def test_negative_overhead_intercept(base_doc):
    base_doc["penalty_models"]["launch_overhead"]["intercept_us"] = -1
    _expect_error(base_doc, "intercept")


def test_piecewise_breakpoints_must_increase():
    with pytest.raises(ProfileError, match="increasing"):
        PiecewiseLinearModel(breakpoints=(10, 10), segments=((1, 0), (1, 0), (1, 0)))


def test_piecewise_segment_count():
    with pytest.raises(ProfileError, match="segment"):
        PiecewiseLinearModel(breakpoints=(10,), segments=((1, 0),))


def test_exp_model_positivity():
    with pytest.raises(ProfileError):
        ExpGrowthModel(a=-1, b=1, c=1)
    with pytest.raises(ProfileError):
        ExpGrowthModel(a=1, b=1, c=0)


def test_overhead_model_validation():
    with pytest.raises(ProfileError):
        LinearOverheadModel(slope=1e-5, intercept=-0.1)


def test_load_profile_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ProfileError, match="JSON"):
        load_profile(path)


def test_load_profile_missing_file(tmp_path):
    with pytest.raises(ProfileError, match="not found"):
        load_profile(tmp_path / "nope.json")


# ------------------------------------------------- model evaluation oracle


def _assert_close(got, want_str, rel=1e-9):
    want = float(want_str)
    assert got == pytest.approx(want, rel=rel), f"got {got}, oracle {want_str}"


def test_gm_latency_matches_oracle(expected_empirical):
    for name, tables in expected_empirical["profiles"].items():
        p = resolve_profile(name)
        for x, want in tables["gm_latency"]:
            _assert_close(p.gm_latency_model.evaluate(x), want)


def test_overhead_matches_oracle(expected_empirical):
    for name, tables in expected_empirical["profiles"].items():
        p = resolve_profile(name)
        for x, want in tables["overhead_us"]:
            _assert_close(p.overhead.evaluate(x), want)


def test_throughput_matches_oracle(expected_empirical):
    for name, tables in expected_empirical["profiles"].items():
        p = resolve_profile(name)
        for n, want in tables["tp_global"]:
            _assert_close(p.tp_global.evaluate(n), want)
        for n, want in tables["tp_shared"]:
            _assert_close(p.tp_shared.evaluate(n), want)


def test_piecewise_boundary_membership(k20):
    m = k20.gm_latency_model
    # x exactly at a breakpoint belongs to the segment starting there.
    lo, hi = m.segments[0], m.segments[1]
    b = m.breakpoints[0]
    assert m.evaluate(b) == hi[0] * b + hi[1]
    assert m.evaluate(b - 1) == lo[0] * (b - 1) + lo[1]
    # last segment extends past its data range
    last = m.segments[-1]
    x = m.breakpoints[-1] * 10
    assert m.evaluate(x) == last[0] * x + last[1]


def test_gm_latency_helper_uses_grid_stride(k20):
    assert global_mem_latency(k20, 13, 256) == k20.gm_latency_model.evaluate(13 * 256)
    with pytest.raises(ProfileError):
        global_mem_latency(k20, 0, 256)


def test_overhead_helper(k20):
    assert launch_overhead_us(k20, 16, 64) == k20.overhead.evaluate(1024)


def test_throughput_clamps_to_floor(fixture_profile, caplog):
    # shared model has b=1.0, so zero transactions predict zero throughput
    with caplog.at_level(logging.WARNING):
        v = mem_throughput(fixture_profile, "shared", 0)
    assert v == fixture_profile.tp_floor
    assert any("clamped" in r.message for r in caplog.records)


def test_throughput_rejects_bad_inputs(k20):
    with pytest.raises(ProfileError):
        mem_throughput(k20, "global", -1)
    with pytest.raises(ProfileError, match="texture"):
        mem_throughput(k20, "texture", 10)


def test_unit_conversions(k20):
    assert cycles_from_us(k20, 1.0) == 784
    assert us_from_cycles(k20, 784.0) == 1.0
    assert us_from_cycles(k20, cycles_from_us(k20, 12.5)) == pytest.approx(12.5)


# ------------------------------------------------------------- latency_of


def test_latency_kind_selection(k20):
    assert latency_of(k20, _inst("add.f32 %f1, %f2, %f3;")) == 9  # addf
    assert latency_of(k20, _inst("add.s32 %r1, %r2, %r3;")) == 9  # adds
    assert latency_of(k20, _inst("div.rn.f32 %f1, %f2, %f3;")) == 894.5
    assert latency_of(k20, _inst("div.s32 %r1, %r2, %r3;")) == 424


def test_latency_aliases(k20):
    assert latency_of(k20, _inst("cvta.to.global.u64 %rd1, %rd2;")) == 10  # cvt
    assert latency_of(k20, _inst("rsqrt.approx.f32 %f1, %f2;")) == 359  # sqrt
    assert latency_of(k20, _inst("rcp.rn.f32 %f1, %f2;")) == 894.5  # divf
    assert latency_of(k20, _inst("fma.rn.f32 %f1, %f2, %f3, %f4;")) == 10


def test_latency_class_defaults(k20):
    # no measured row for popc: falls back to the Compute default
    assert latency_of(k20, _inst("popc.b32 %r1, %r2;")) == (
        k20.latency.class_defaults[InstClass.COMPUTE]
    )
    assert latency_of(k20, _inst("bar.sync 0;")) == (
        k20.latency.class_defaults[InstClass.MISC]
    )


def test_latency_global_paths(k20, fixture_profile):
    ld = _inst("ld.global.f32 %f1, [%rd1];")
    assert latency_of(k20, ld, gm_latency=318.5) == 318.5
    # fixture profile carries a fixed 'global' row as the fallback
    assert latency_of(fixture_profile, ld) == 315
    doc = profile_to_dict(fixture_profile)
    del doc["latencies"]["instructions"]["global"]
    without = profile_from_dict(doc)
    with pytest.raises(ProfileError, match="global"):
        latency_of(without, ld)


def test_latency_shared_constant(k20):
    assert latency_of(k20, _inst("ld.shared.f32 %f1, [%rd1];")) == 47


def test_latency_unresolvable_without_default(fixture_profile):
    doc = profile_to_dict(fixture_profile)
    p = profile_from_dict(doc)
    # defaults cover every class that reaches the fallback; force the miss
    p.latency.class_defaults.clear()
    with pytest.raises(ProfileError, match="popc"):
        latency_of(p, _inst("popc.b32 %r1, %r2;"))
