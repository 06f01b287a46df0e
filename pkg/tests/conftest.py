from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from raes.graph import gen_complete
from raes.protocol import RaesParams, RandomTape, run_raes

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}

HAND_DRAWS = [[0, 0, 0, 0], [0, 1, 0, 0], [0, 1, 2, 0], [0, 1, 2, 0]]


@pytest.fixture
def hand():
    """K_4, d=1, c=1, T=4 with the hand-simulated tape; H is the 4-cycle."""
    g = gen_complete(4)
    params = RaesParams(1, Fraction(1), 4)
    tape = RandomTape(np.array(HAND_DRAWS), 3)
    res = run_raes(g, params, tape)
    return g, params, tape, res


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
