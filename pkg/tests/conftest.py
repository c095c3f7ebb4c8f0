"""Shared fixtures and the finite-difference gradient checker."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

TESTS_DIR = Path(__file__).parent

sys.path.insert(0, str(TESTS_DIR))

import gatelog  # noqa: E402
from mnistlike import ensure_digit_idx  # noqa: E402

FD_STEP = 1e-5
FD_TOL = 1e-6


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if gatelog.lines:
        terminalreporter.section("acceptance criteria")
        for line in gatelog.lines:
            terminalreporter.write_line(line)


def fd_gradient(f, arr: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. arr, in place."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Normwise relative error, robust to near-zero entries."""
    num = np.linalg.norm((analytic - numeric).ravel())
    den = max(np.linalg.norm(analytic.ravel()) + np.linalg.norm(numeric.ravel()), 1e-12)
    return num / den


def run_cli(args: list[str], timeout: int = 1200) -> subprocess.CompletedProcess:
    """Invoke the command-line tool in a fresh interpreter."""
    return subprocess.run(
        [sys.executable, "-m", "ieanet.cli", *[str(a) for a in args]],
        capture_output=True, text=True, timeout=timeout,
    )


@pytest.fixture(scope="session")
def digit_paths(tmp_path_factory):
    """IDX file paths for the 5000/1000 digit benchmark data."""
    return ensure_digit_idx(tmp_path_factory.mktemp("digits"))
