import os

import pytest


def _bitwise_mul(a, b):
    # shift-and-add reference multiplication modulo x^8+x^4+x^3+x^2+1
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        if a & 0x100:
            a ^= 0x11D
        b >>= 1
    return r


@pytest.fixture(scope="session")
def ref_mul():
    return _bitwise_mul


@pytest.fixture(autouse=True)
def _no_env_calibration(monkeypatch):
    monkeypatch.delenv("TETRYS_CALIBRATION", raising=False)
    yield


def pytest_report_header(config):
    return f"tetrys tests, cwd={os.getcwd()}"


_acceptance_lines = []


@pytest.fixture
def report():
    """Print and keep one ``ACCEPTANCE N PASS/FAIL: ...`` line per criterion."""

    def emit(n, ok, detail):
        line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        _acceptance_lines.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
