from functools import lru_cache
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from phiexp import deformed, perturbed_power, power, table_from_csv

DATA = Path(__file__).parent / "data"

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

GENERATOR_NAMES = [
    "power(0.5)",
    "power(0.8)",
    "power(1)",
    "power(1.2)",
    "power(2)",
    "perturbed(1,0.2)",
    "perturbed(0.8,0.3)",
    "table",
]


@lru_cache(maxsize=None)
def generator(name):
    if name == "table":
        return table_from_csv(DATA / "phi_table.csv")
    if name.startswith("power"):
        return power(float(name[6:-1]))
    q, eps = name[len("perturbed(") : -1].split(",")
    return perturbed_power(float(q), float(eps))


@lru_cache(maxsize=None)
def logexp(name):
    return deformed(generator(name))


@pytest.fixture
def table_path():
    return DATA / "phi_table.csv"


# one summary line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
