import numpy as np
import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(number, description): marks a test as one acceptance criterion",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    terminal = item.config.pluginmanager.get_plugin("terminalreporter")
    if terminal is not None:
        terminal.write_line(
            f"\nACCEPTANCE criterion {marker.args[0]}: {status} - {marker.args[1]}"
        )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def stub_pair():
    from scenefuse.synthetic import stub_backend_pair

    return stub_backend_pair(seed=11)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """3 classes x 6 small images; enough for harness and CLI smoke tests."""
    from scenefuse.synthetic import make_synthetic_dataset

    root = tmp_path_factory.mktemp("tinyset")
    manifest = make_synthetic_dataset(str(root), classes=3, per_class=6,
                                      size=(48, 48), seed=5)
    return root, manifest
