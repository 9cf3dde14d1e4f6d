from fractions import Fraction as F

import numpy as np
import pytest

from latentgap.core import ObservedSample
from latentgap.dgp import finite_support_distribution


def canonical_atoms_exact():
    """Brute-force list of (prob, x, p, g, eps, y) for the canonical model, in exact arithmetic."""
    atoms = []
    half = F(1, 2)
    p_support = {0: (F(1, 5), F(2, 5)), 1: (F(3, 5), F(4, 5))}
    mu = {0: F(0), 1: F(1)}
    tau = F(2)
    for x in (0, 1):
        for p in p_support[x]:
            for g, pg in ((1, p), (0, 1 - p)):
                for eps in (-1, 1):
                    atoms.append((half * half * pg * half, x, p, g, eps, mu[x] + tau * g + eps))
    return atoms


def exact_moments():
    atoms = canonical_atoms_exact()
    assert sum(a[0] for a in atoms) == 1
    r = {x: sum(w * p for w, xx, p, *_ in atoms if xx == x) / sum(w for w, xx, *_ in atoms if xx == x) for x in (0, 1)}
    m = {x: sum(w * y for w, xx, *_, y in atoms if xx == x) / sum(w for w, xx, *_ in atoms if xx == x) for x in (0, 1)}
    tau = F(2)
    e_zr = sum(w * (2 * p - 1) * (y - m[x]) for w, x, p, g, e, y in atoms)
    v_star = sum(w * (p - r[x]) ** 2 for w, x, p, g, e, y in atoms)
    e_psi_sq = sum(w * ((2 * p - 1) * (y - m[x]) - 2 * tau * (p - r[x]) ** 2) ** 2 for w, x, p, g, e, y in atoms)
    e_abs_z = sum(w * abs(2 * p - 1) for w, x, p, *_ in atoms)
    return {"r": r, "m": m, "e_zr": e_zr, "v_star": v_star, "e_psi_sq": e_psi_sq, "e_abs_z": e_abs_z}


@pytest.fixture(scope="session")
def canonical():
    return finite_support_distribution()


@pytest.fixture(scope="session")
def exact():
    return exact_moments()


@pytest.fixture(scope="session")
def population_sample():
    """A 40-row data set whose empirical law equals the canonical distribution exactly."""
    rows = []
    for w, x, p, g, eps, y in canonical_atoms_exact():
        count = w * 40
        assert count.denominator == 1
        rows.extend([(float(y), float(x), float(p))] * int(count))
    arr = np.array(rows)
    return ObservedSample(y=arr[:, 0], x=arr[:, 1:2], p=arr[:, 2])


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
