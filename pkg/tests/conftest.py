import json
from pathlib import Path

import pytest

from gpukalc import load_profile, parse_ptx, resolve_profile
from gpukalc.profiles import profile_from_dict, profile_to_dict

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_profile():
    return load_profile(FIXTURES / "fixture_profile.json")


@pytest.fixture(scope="session")
def strict_profile(fixture_profile):
    # Same device, no issue gap on any unit.
    doc = profile_to_dict(fixture_profile)
    doc["latencies"]["issue_gap"] = {}
    return profile_from_dict(doc)


@pytest.fixture(scope="session")
def k20():
    return resolve_profile("k20")


@pytest.fixture(scope="session")
def worked_graph():
    text = (FIXTURES / "worked_example.ptx").read_text()
    return parse_ptx(text, "pair_load_add")


@pytest.fixture(scope="session")
def nn_graph():
    text = (FIXTURES / "nn_euclid.ptx").read_text()
    return parse_ptx(text, "nn_euclid")


@pytest.fixture(scope="session")
def vecadd_graph():
    text = (FIXTURES / "vecadd.ptx").read_text()
    return parse_ptx(text, "vecadd")


@pytest.fixture(scope="session")
def expected_empirical():
    return json.loads((DATA / "expected_empirical.json").read_text())
