import numpy as np
import pytest

from ideotype.climate import ClimateSet, default_generator_config, generate_climate


@pytest.fixture(scope="session")
def climate20() -> ClimateSet:
    """Four years of the five default sites: N=20, L=180."""
    return generate_climate(default_generator_config(years=4), seed=11)


@pytest.fixture(scope="session")
def climate60() -> ClimateSet:
    return generate_climate(default_generator_config(years=12), seed=3)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
