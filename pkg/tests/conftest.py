import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from envnet.model import ChannelDescriptor, Deployment, NodeDescriptor, Site
from envnet.store import open_store

FIXTURES = Path(__file__).parent / "fixtures"

UTC = timezone.utc


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=UTC)


@pytest.fixture
def store(tmp_path):
    return open_store(tmp_path / "store", create_if_missing=True)


def make_site(site_id="mx", lat=19.5, lon=-105.05, offset=-360):
    return Site(site_id, f"Site {site_id}", lat, lon, offset)


def make_tower(site_id="mx", deployment_id="tw", cadence_s=900):
    tokens = [("par_in", "par_umol_m2_s", "incoming"),
              ("par_refl", "par_umol_m2_s", "reflected"),
              ("pyr_in", "solar_W_m2", "incoming"),
              ("pyr_refl", "solar_W_m2", "reflected")]
    node_id = f"{deployment_id}.mast"
    channels = [ChannelDescriptor(f"{node_id}:{tok}", var, orient, column=tok)
                for tok, var, orient in tokens]
    node = NodeDescriptor(node_id, 0.0, 0.0, 8.0, channels)
    return Deployment(deployment_id, site_id, "tower", cadence_s, [node])


def make_understory(site_id="mx", deployment_id="un", n_nodes=2, cadence_s=900):
    tokens = [("par_under", "par_umol_m2_s", "incoming"),
              ("air_temp", "air_temp_C", "none"),
              ("rel_humidity", "rel_humidity_pct", "none")]
    nodes = []
    for i in range(1, n_nodes + 1):
        node_id = f"{deployment_id}.n{i:02d}"
        channels = [ChannelDescriptor(f"{node_id}:{tok}", var, orient, column=tok)
                    for tok, var, orient in tokens]
        nodes.append(NodeDescriptor(node_id, 10.0 * i, 0.0, 1.0, channels))
    return Deployment(deployment_id, site_id, "understory", cadence_s, nodes)


@pytest.fixture
def populated_store(store):
    """Store with the site/deployments matching the golden fixture files."""
    store.add_site(make_site())
    store.add_deployment(make_tower())
    store.add_deployment(make_understory())
    return store


# -- acceptance summary: one pass/fail line per criterion -----------------------

_acceptance_results = {}


def record_acceptance(name: str, passed: bool) -> None:
    _acceptance_results[name] = passed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.get_closest_marker("acceptance"):
        name = item.get_closest_marker("acceptance").args[0]
        _acceptance_results[name] = report.passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_acceptance_results):
        status = "PASS" if _acceptance_results[name] else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}")


def pytest_configure(config):
    config.addinivalue_line("markers",
                            "acceptance(name): acceptance criterion test")
