import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    derandomize=True,
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def pytest_addoption(parser):
    parser.addoption(
        "--heavy", action="store_true", default=False,
        help="run the long saturation benchmarks (criterion 5 tier)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--heavy"):
        return
    skip_heavy = pytest.mark.skip(reason="heavy tier: enable with --heavy")
    for item in items:
        if "heavy" in item.keywords:
            item.add_marker(skip_heavy)
