import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings, strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from ipc_pgo import Pose2  # noqa: E402

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

coords = st.floats(-50, 50, allow_nan=False)
angles = st.floats(-3 * math.pi, 3 * math.pi, allow_nan=False)
poses = st.builds(Pose2, coords, coords, angles)
small = st.floats(-0.49, 0.49)
small_poses = st.builds(Pose2, small, small, small)


def close(a: Pose2, b: Pose2, tol=1e-12) -> bool:
    dt = abs(math.remainder(a.theta - b.theta, 2 * math.pi))
    return abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol and dt <= tol


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one PASS/FAIL/SKIP line per acceptance criterion, collected by test_acceptance
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
