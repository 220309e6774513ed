"""Adaptive Dormand-Prince 5(4) integration with dense output and guard events.

The pair is fixed (not configurable) so results are reproducible across
machines: classic DP54 coefficients, FSAL, error-per-step control, cubic
Hermite interpolation between accepted nodes, and bisection-based guard
localization.  Guards are scalar functions of the state; the first sign
change is localized to a bracket of width <= 1e-12*max(1, t*) with
|guard| <= guard_tol at the reported time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NumericOverflow, OriginReached, StiffnessFailure

__all__ = [
    "DenseTrajectory",
    "GuardEvent",
    "NoCrossing",
    "integrate",
    "integrate_until_guard",
]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between the 5th- and embedded 4th-order weights
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


def _as_fn(field) -> Callable:
    if callable(field):
        return field
    if hasattr(field, "eval"):
        return field.eval
    raise TypeError("field must be callable or expose .eval")


class DenseTrajectory:
    """Piecewise cubic Hermite interpolant over the accepted step nodes."""

    def __init__(self, ts: np.ndarray, ys: np.ndarray, fs: np.ndarray):
        self.ts = ts
        self.ys = ys
        self.fs = fs
        self.t0 = float(ts[0])
        self.t1 = float(ts[-1])
        self.dim = ys.shape[1]

    def eval(self, t: float) -> np.ndarray:
        t = float(t)
        slack = 1e-12 * max(1.0, abs(t))
        if t < self.t0 - slack or t > self.t1 + slack:
            raise ValueError(f"t={t} outside trajectory range [{self.t0}, {self.t1}]")
        t = min(max(t, self.t0), self.t1)
        k = int(np.searchsorted(self.ts, t, side="right")) - 1
        k = min(max(k, 0), len(self.ts) - 2)
        ta, tb = self.ts[k], self.ts[k + 1]
        h = tb - ta
        if h == 0.0:
            return self.ys[k].copy()
        s = (t - ta) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (
            h00 * self.ys[k]
            + h10 * h * self.fs[k]
            + h01 * self.ys[k + 1]
            + h11 * h * self.fs[k + 1]
        )

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    @property
    def y_end(self) -> np.ndarray:
        return self.ys[-1].copy()

    @property
    def n_steps(self) -> int:
        return len(self.ts) - 1


@dataclass(frozen=True)
class GuardEvent:
    t_star: float
    z_star: np.ndarray
    residual: float
    trajectory: Optional[DenseTrajectory] = None


@dataclass(frozen=True)
class NoCrossing:
    t_end: float
    z_end: np.ndarray
    trajectory: Optional[DenseTrajectory] = None


def _initial_step(fn, t0, y0, f0, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.linalg.norm(y0 / scale) / np.sqrt(y0.size))
    d1 = float(np.linalg.norm(f0 / scale) / np.sqrt(y0.size))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    return min(h0, 0.1 * span)


def _check_finite(arr, t):
    if not np.all(np.isfinite(arr)):
        raise NumericOverflow(f"non-finite derivative or state near t={t}")


class _Stepper:
    """One-step DP54 driver shared by plain and guarded integration."""

    def __init__(self, field, t0, y0, rtol, atol, max_step, escape_norm):
        self.fn = _as_fn(field)
        if not (rtol > 0 and atol > 0):
            raise ValueError("rtol and atol must be positive")
        self.rtol, self.atol = rtol, atol
        self.max_step = max_step
        self.escape_norm = escape_norm
        self.t = float(t0)
        self.y = np.asarray(y0, dtype=float).copy()
        if not np.all(np.isfinite(self.y)):
            raise ValueError("initial state must be finite")
        self.f = np.asarray(self.fn(self.y), dtype=float)
        _check_finite(self.f, self.t)
        self.h = None
        self.nodes_t = [self.t]
        self.nodes_y = [self.y.copy()]
        self.nodes_f = [self.f.copy()]

    def propose_first(self, span):
        self.h = min(
            _initial_step(self.fn, self.t, self.y, self.f, self.rtol, self.atol, span),
            self.max_step,
        )

    def step(self, t_limit):
        """Advance one accepted step, not beyond t_limit. Returns True if a
        step was taken, False if the limit is (effectively) reached."""
        gap = t_limit - self.t
        if gap <= 1e-14 * max(1.0, abs(t_limit)):
            return False
        n = self.y.size
        k = np.empty((7, n))
        k[0] = self.f
        while True:
            h = min(self.h, self.max_step, gap)
            if h < 1e-14 * max(1.0, abs(self.t)):
                raise StiffnessFailure(
                    f"step size underflow at t={self.t} (h={h})"
                )
            for i in range(1, 7):
                yi = self.y + h * (_A[i] @ k[:i])
                _check_finite(yi, self.t)
                k[i] = self.fn(yi)
                _check_finite(k[i], self.t + _C[i] * h)
            y_new = self.y + h * (_B5 @ k)
            err_vec = h * (_E @ k)
            scale = self.atol + self.rtol * np.maximum(np.abs(self.y), np.abs(y_new))
            err = float(np.linalg.norm(err_vec / scale) / np.sqrt(n))
            if err <= 1.0:
                factor = (
                    _MAX_FACTOR
                    if err == 0.0
                    else min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err**-0.2))
                )
                self.h = h * factor
                self.t += h
                self.y = y_new
                self.f = k[6].copy()  # FSAL
                if float(np.linalg.norm(self.y)) > self.escape_norm:
                    raise NumericOverflow(
                        f"state norm exceeded {self.escape_norm} at t={self.t}: "
                        "finite escape"
                    )
                self.nodes_t.append(self.t)
                self.nodes_y.append(self.y.copy())
                self.nodes_f.append(self.f.copy())
                return True
            self.h = h * max(_MIN_FACTOR, _SAFETY * err**-0.2)

    def trajectory(self) -> DenseTrajectory:
        return DenseTrajectory(
            np.array(self.nodes_t),
            np.array(self.nodes_y),
            np.array(self.nodes_f),
        )

    def last_segment(self) -> DenseTrajectory:
        """Interpolant over just the most recent accepted step."""
        return DenseTrajectory(
            np.array(self.nodes_t[-2:]),
            np.array(self.nodes_y[-2:]),
            np.array(self.nodes_f[-2:]),
        )


def integrate(
    field,
    z0,
    t_span,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    max_step: float = np.inf,
    max_steps: int = 2_000_000,
    escape_norm: float = 1e12,
) -> DenseTrajectory:
    """Integrate dz/dt = field(z) over t_span = (t0, t1), t1 > t0."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must have positive length")
    st = _Stepper(field, t0, z0, rtol, atol, max_step, escape_norm)
    st.propose_first(t1 - t0)
    steps = 0
    while st.step(t1):
        steps += 1
        if steps > max_steps:
            raise StiffnessFailure(f"exceeded {max_steps} steps before t={t1}")
    return st.trajectory()


def _guard_value(guard, z, t):
    try:
        g = float(guard(z))
    except ZeroDivisionError:
        raise OriginReached(f"guard singular at t={t}") from None
    if not np.isfinite(g):
        raise OriginReached(f"guard non-finite at t={t}")
    return g


_INTERIOR = np.linspace(0.0, 1.0, 6)[1:-1]  # intra-step guard checkpoints


def integrate_until_guard(
    field,
    z0,
    guard: Callable,
    horizon: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    guard_tol: float = 1e-10,
    max_step: float = np.inf,
    max_steps: int = 2_000_000,
    escape_norm: float = 1e12,
):
    """Run until the first sign change of guard(z), or to the horizon.

    Returns GuardEvent on a crossing, NoCrossing if the horizon is reached
    first (the caller decides whether that is acceptable).
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    z0 = np.asarray(z0, dtype=float)
    g0 = _guard_value(guard, z0, 0.0)
    if g0 == 0.0:
        return GuardEvent(0.0, z0.copy(), 0.0, None)
    sign0 = np.sign(g0)

    st = _Stepper(field, 0.0, z0, rtol, atol, max_step, escape_norm)
    st.propose_first(horizon)
    g_left = g0
    steps = 0
    while st.step(horizon):
        steps += 1
        if steps > max_steps:
            raise StiffnessFailure(f"exceeded {max_steps} steps before a crossing")
        g_right = _guard_value(guard, st.y, st.t)
        seg = st.last_segment()
        t_a, g_a = st.nodes_t[-2], g_left
        hit = None
        if np.sign(g_right) != sign0:
            hit = (st.nodes_t[-1], g_right)
        # walk intra-step checkpoints to catch (or tighten to) the first change
        for s in _INTERIOR:
            tm = st.nodes_t[-2] + s * (st.nodes_t[-1] - st.nodes_t[-2])
            gm = _guard_value(guard, seg.eval(tm), tm)
            if np.sign(gm) != sign0:
                hit = (tm, gm)
                break
            t_a, g_a = tm, gm
        if hit is not None:
            t_star, z_star, resid = _bisect(seg, guard, t_a, g_a, *hit, guard_tol)
            return GuardEvent(t_star, z_star, resid, st.trajectory())
        g_left = g_right
    return NoCrossing(st.t, st.y.copy(), st.trajectory())


def _bisect(seg, guard, ta, ga, tb, gb, guard_tol):
    """Bisect on the dense interpolant until the bracket is tight and the
    residual small; both bounds from the module contract."""
    best = None
    for _ in range(200):
        width_ok = (tb - ta) <= 1e-12 * max(1.0, tb)
        best = (ta, ga) if abs(ga) <= abs(gb) else (tb, gb)
        if width_ok and abs(best[1]) <= guard_tol:
            break
        tm = 0.5 * (ta + tb)
        gm = _guard_value(guard, seg.eval(tm), tm)
        if np.sign(gm) == np.sign(ga) and gm != 0.0:
            ta, ga = tm, gm
        else:
            tb, gb = tm, gm
    t_star, g_star = best
    return t_star, seg.eval(t_star), g_star
