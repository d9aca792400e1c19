from pathlib import Path

import jax
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import gravjet
from gravjet.jet_algebra import random_jet

settings.register_profile(
    "default", max_examples=15, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

CORPUS = Path(gravjet.__file__).parent / "corpus"


def pytest_configure(config):
    # compiled kernels persist across runs under .pytest_cache; a cold run is slower
    cache = getattr(config, "cache", None)
    if cache is not None:
        jax.config.update("jax_compilation_cache_dir", str(cache.mkdir("jax")))
        jax.config.update("jax_persistent_cache_min_compile_time_secs", 0.5)


@pytest.fixture
def corpus():
    return CORPUS


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def jets(rng):
    return [random_jet(rng) for _ in range(5)]


# one summary line per acceptance criterion; tests are named test_criterion_<n>_<part>

_CRITERIA: dict = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    num, _, part = name[len("test_criterion_"):].partition("_")
    _CRITERIA.setdefault(int(num), []).append((part, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        parts = _CRITERIA[num]
        failed = [p for p, ok in parts if not ok]
        status = "FAIL" if failed else "PASS"
        detail = f" (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"[{status}] criterion {num}: {len(parts) - len(failed)}/{len(parts)} parts{detail}")
