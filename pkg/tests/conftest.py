import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rdentropy import make_grid, parse_network  # noqa: E402
from rdentropy.spatial import Fields, coefficient_field, diffusion_constant, mask_full, mask_random  # noqa: E402

SPECIAL = """
S1 <=> 2 S2 @ 1 k1
S2 <=> 2 S3 @ 1 k2
"""

CYCLE_NET = """
S1 -> S2 + S3 @ 1 a1
S2 + S3 -> 2 S2 @ 1 a1
2 S2 -> S1 @ 1 a1
2 S1 <=> 2 S3 @ 1 a2
"""

PAIRS_NET = """
species: S1, S2, S3, S4
S1 <=> S2 + S4 @ 1 a1
2 S1 <=> 2 S3 @ 1 a2
"""


@pytest.fixture
def special():
    return parse_network(SPECIAL)


@pytest.fixture
def cycle_net():
    return parse_network(CYCLE_NET)


@pytest.fixture
def pairs_net():
    return parse_network(PAIRS_NET)


def special_fields(grid, fraction=0.2, seeds=(11, 12), full=False):
    masks = [mask_full(grid) if full else mask_random(grid, fraction, s) for s in seeds]
    return Fields(
        alpha={p: coefficient_field(grid, m, 1.0) for p, m in zip(("k1", "k2"), masks)},
        diffusion=tuple(diffusion_constant(grid, 1.0) for _ in range(3)),
    ), masks


@pytest.fixture
def grid1d():
    return make_grid(1, 50)


def cosine_state(grid, base, amp):
    x = grid.centers[:, 0]
    return np.array([b + a * np.cos(np.pi * x) for b, a in zip(base, amp)])


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
