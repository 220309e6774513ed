"""Shared hand-entered test systems.

These monomial tables are written out longhand, independently of any
constructors in selftrig.casestudies, so they can serve as oracles for the
packaged case studies as well as inputs for the core-module tests.
"""

import numpy as np

from selftrig.fields import Monomial, PolyField, inject_measurement


def mono(c, x_exps, e_exps=None, w=0):
    n = len(x_exps)
    return Monomial(c, tuple(x_exps), tuple(e_exps or [0] * n), w)


# Two-state loop with cubic damping; controller reads measured state in
# both rows:
#   dx1/dt = -x1^3/2 - x1^2 x2/2 - x1/2 - x2/2
#   dx2/dt = -x1^2 x2 - x2
JET_ROWS = [
    [mono(-0.5, [3, 0]), mono(-0.5, [2, 1]), mono(-0.5, [1, 0]), mono(-0.5, [0, 1])],
    [mono(-1.0, [2, 1]), mono(-1.0, [0, 1])],
]

# Three-state rotational loop; rows 1-2 are actuated (measured state),
# row 3 is the physical coupling x1*x2 (true state):
#   u1 = -x1 x2 - 2 x2 x3 - x1 - x3
#   u2 = 2 x1 x2 x3 + 3 x3^2 - x2
ROT_ROWS = [
    [
        mono(-1.0, [1, 1, 0]),
        mono(-2.0, [0, 1, 1]),
        mono(-1.0, [1, 0, 0]),
        mono(-1.0, [0, 0, 1]),
    ],
    [mono(2.0, [1, 1, 1]), mono(3.0, [0, 0, 2]), mono(-1.0, [0, 1, 0])],
    [mono(1.0, [1, 1, 0])],
]


def jet_field() -> PolyField:
    return PolyField(2, inject_measurement(JET_ROWS))


def rot_field() -> PolyField:
    return PolyField(3, inject_measurement(ROT_ROWS, rows={0, 1}))


def rot_lyapunov_monomials():
    # V = (x1+x3)^2/2 + (x2-x3^2)^2/2 + x3^2
    return (
        mono(0.5, [2, 0, 0]),
        mono(0.5, [0, 2, 0]),
        mono(1.5, [0, 0, 2]),
        mono(1.0, [1, 0, 1]),
        mono(-1.0, [0, 1, 2]),
        mono(0.5, [0, 0, 4]),
    )


def jet_plant_to_internal(x1, x2):
    """Coordinate change used by the two-state loop: (x1, x2) -> (x1, y)."""
    return np.array([x1, 2.0 * (x1**2 + x2) / (x1**2 + 1.0)])
