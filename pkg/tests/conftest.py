import functools
import warnings

import numpy as np
import pytest

from jacobi_ist.background import ConstantBackground, PeriodicBackground
from jacobi_ist.direct import Coefficients, forward

FREE = ConstantBackground(0.5, 0.0)
P2 = PeriodicBackground((0.5, 0.5), (0.3, -0.3))


def _fixtures():
    return {
        "free": Coefficients.from_sites(FREE, FREE),
        "one": Coefficients.from_sites(FREE, FREE, b_dev={0: 1.0}),
        "one_neg": Coefficients.from_sites(FREE, FREE, b_dev={0: -1.0}),
        "two_site": Coefficients.from_sites(FREE, FREE, a_dev={0: 0.3}, b_dev={0: 0.8, 1: -0.9}),
        "step_nest": Coefficients.from_sites(FREE, ConstantBackground(0.25, 0.0), b_dev={0: -0.6}),
        "step_disj": Coefficients.from_sites(FREE, ConstantBackground(0.5, 3.0), b_dev={0: 0.3}),
        "step_over": Coefficients.from_sites(FREE, ConstantBackground(0.5, 1.0), b_dev={0: 0.3}),
        "step_touch": Coefficients.from_sites(FREE, ConstantBackground(0.5, 2.0), b_dev={0: 0.3}),
        "p2": Coefficients.from_sites(P2, P2, b_dev={0: 0.4, 1: -0.2}),
        "p2_step": Coefficients.from_sites(P2, FREE, b_dev={0: 0.4, 1: -0.2}),
    }


FIXTURES = _fixtures()
STEPLIKE = [k for k, c in FIXTURES.items() if c.steplike]


@functools.lru_cache(maxsize=None)
def scattering(name: str):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return forward(FIXTURES[name])


@pytest.fixture(params=sorted(FIXTURES))
def fixture_name(request):
    return request.param


def random_coefficients(bg_plus, bg_minus, seed, radius=None, amplitude=0.3):
    """Compact perturbation with |deviation| <= amplitude on a window of radius <= 8."""
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, 9)) if radius is None else radius
    sites = range(-r, r + 1)
    b_dev = {n: float(rng.uniform(-amplitude, amplitude)) for n in sites}
    a_dev = {n: float(rng.uniform(-amplitude, amplitude)) * 0.5 for n in sites}
    return Coefficients.from_sites(bg_plus, bg_minus, a_dev, b_dev)


ACCEPTANCE_LINES = []


def report_criterion(number: int, passed: bool, detail: str) -> None:
    """Record and print one acceptance line; the lines are repeated in the terminal summary."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
