import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from persuasion_did.dataset import StaggeredPanel, TwoPeriodPanel

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("stress", deadline=None, max_examples=1000,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def cell_panel(means, n_per_arm=10):
    """Covariate-free panel whose arm means are (E[Y0|D=0], E[Y1|D=0], E[Y0|D=1], E[Y1|D=1])."""
    cols = {"y0": [], "y1": [], "d1": []}
    for d, (m0, m1) in ((0, means[:2]), (1, means[2:])):
        k0, k1 = round(m0 * n_per_arm), round(m1 * n_per_arm)
        cols["y0"] += [1.0] * k0 + [0.0] * (n_per_arm - k0)
        cols["y1"] += [1.0] * k1 + [0.0] * (n_per_arm - k1)
        cols["d1"] += [float(d)] * n_per_arm
    return TwoPeriodPanel(np.array(cols["y0"]), np.array(cols["y1"]), np.array(cols["d1"]))


def random_panel(rng, n, k=0, levels=3):
    """Covariate-free (or discrete-covariate) panel with both arms present."""
    while True:
        p = rng.uniform(0.1, 0.9)
        d = (rng.random(n) < p).astype(float)
        if 2 <= d.sum() <= n - 2:
            break
    a = rng.uniform(0.05, 0.95, size=4)
    y0 = (rng.random(n) < np.where(d == 1, a[2], a[0])).astype(float)
    y1 = (rng.random(n) < np.where(d == 1, a[3], a[1])).astype(float)
    x = rng.integers(0, levels, size=(n, k)).astype(float) if k else None
    return TwoPeriodPanel(y0, y1, d, x)


def random_staggered(rng, n, T, cohorts=None):
    cohorts = list(range(1, T + 1)) if cohorts is None else cohorts
    while True:
        s = rng.choice(cohorts + [np.inf], size=n).astype(float)
        if all(np.sum(s == c) >= 2 for c in cohorts) and np.sum(np.isinf(s)) >= 2:
            break
    y = (rng.random((n, T + 1)) < rng.uniform(0.1, 0.9, size=T + 1)).astype(float)
    return StaggeredPanel(y, s)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


def design_panel(rng, n_range=(20, 501)):
    """Covariate-free panel drawn from a random valid design (no backlash, parallel trends)."""
    from persuasion_did.errors import ValidationError
    from persuasion_did.sim import gen_two_period, single_cell_dgp

    while True:
        joint = rng.dirichlet(np.ones(4))
        joint[2] = 0.0
        joint /= joint.sum()
        pre_c = rng.uniform(0.05, 0.95)
        pre_t = pre_c + rng.uniform(-0.3, 0.3)
        try:
            dgp = single_cell_dgp(joint, pre_treated=pre_t, pre_control=pre_c, p=rng.uniform(0.2, 0.8))
            return gen_two_period(dgp, int(rng.integers(*n_range)), rng)
        except ValidationError:
            continue
