import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from quditspam.model import EpsilonVector, SystemShape, from_epsilon, layout  # noqa: E402

SUPPORTED = [(2, 1), (3, 1), (4, 1), (2, 2), (3, 2)]


def shape_id(dn):
    return f"d{dn[0]}n{dn[1]}"


def eps_from_dict(shape, entries, default=0.0):
    """EpsilonVector from a {label string: value} map; other entries get ``default``."""
    vals = np.full(shape.num_params, default, dtype=float)
    lay = layout(shape)
    for lab, v in entries.items():
        vals[lay.positions[lab]] = v
    return EpsilonVector(shape, vals)


def qutrit_regime_model():
    """Single qutrit with a clean second excited level.

    Preparation errors 1e-2 (level 1) and 1e-4 (level 2); confusion 2e-2
    between levels 0 and 1, 2e-3 for reporting 2 from a lower level and
    2e-2 for reporting a lower level from 2.
    """
    shape = SystemShape(1, 3)
    return from_epsilon(eps_from_dict(shape, {
        "S(1)": 1e-2, "S(2)": 1e-4,
        "M(0,1)": 2e-2, "M(1,0)": 2e-2,
        "M(2,0)": 2e-3, "M(2,1)": 2e-3,
        "M(0,2)": 2e-2, "M(1,2)": 2e-2,
    }))


def two_qutrit_regime_model(seed=0):
    """Two qutrits whose preparation errors involving level 2 are small.

    Qubit-subspace entries are drawn in [5e-3, 1e-2]; preparation entries
    with a 2 digit sit near 1e-4 and confusion out of level-2 states near
    1e-3.  This mirrors the single-qutrit regime on each qudit.
    """
    shape = SystemShape(2, 3)
    rng = np.random.default_rng(seed)
    lay = layout(shape)
    vals = np.empty(shape.num_params)
    for i, lab in enumerate(lay.labels):
        digits = [shape.digits(x) for x in lab[1:]]
        has2 = any(2 in dg for dg in digits)
        if lab[0] == "S":
            vals[i] = rng.uniform(0.5e-4, 1.5e-4) if has2 else rng.uniform(5e-3, 1e-2)
        else:
            src2 = 2 in shape.digits(lab[2])
            vals[i] = (rng.uniform(0.5e-3, 1.5e-3) if src2 else
                       rng.uniform(1e-3, 3e-3) if has2 else rng.uniform(5e-3, 1e-2))
    return from_epsilon(EpsilonVector(shape, vals))


@pytest.fixture(params=SUPPORTED, ids=shape_id)
def shape(request):
    d, n = request.param
    return SystemShape(n, d)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
