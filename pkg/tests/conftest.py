import numpy as np
import pytest

from hsirecon.hypercube import Hypercube


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_cube(data, wavelengths=None):
    data = np.asarray(data, dtype=np.float64)
    if wavelengths is None:
        wavelengths = 400.0 + 10.0 * np.arange(data.shape[2])
    return Hypercube(data, wavelengths)


def wide_axis(bands=204, lo=400.0, hi=1000.0):
    return np.linspace(lo, hi, bands)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(report, "user_properties", ()))
            if "criterion" in props and (report.when == "call" or outcome == "error"):
                lines.append((props["criterion"], props["title"], outcome, props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for number, title, outcome, detail in sorted(lines):
            status = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"[{status}] {number}. {title}" + (f"  ({detail})" if detail else ""))
