"""Execution scheduling policies for sample-and-hold control loops.

Four interchangeable ways to decide how long the current actuator value may
be held after a controller execution at state ``x_i``:

* :class:`Periodic` -- a fixed period, state-independent.
* :class:`EventOracle` -- the ground truth: integrate the held-measurement
  extension from ``(x_i, 0)`` and report the first instant the
  measurement-error norm reaches ``c`` times the state norm.  This is what
  continuous event monitoring would do, and it is the reference every
  self-triggered law is validated against.
* :class:`SelfTrigHomog` -- scale a reference dwell time from a calibration
  sphere to the sampled state through the scaling degree of the field
  (exact for fields with a scaling symmetry, conservative otherwise).
* :class:`SelfTrigPoly` -- scale a reference dwell time computed for a
  degree-``l`` embedding of a polynomial loop back to ambient states.

All policies clamp their output into ``[tau_min, tau_max]`` so a downstream
simulation can never stall on a zero step or coast forever on an unbounded
one.  A sampled state within ``1e-12`` of the origin short-circuits to
``tau_max``: the loop is at equilibrium within tolerance and any hold time
is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidThreshold
from .fields import ErrorExtendedSystem, StateField
from .homogeneity import DegreeFunction, rho
from .integrate import GuardEvent, integrate_until_guard
from .polyhom import scaled_dwell_time

__all__ = [
    "EventOracle",
    "ORIGIN_TOL",
    "Periodic",
    "SelfTrigHomog",
    "SelfTrigPoly",
    "TriggerPolicy",
    "ValidationReport",
    "next_time",
    "oracle_time",
    "validate_against_oracle",
]

#: Below this state norm the loop is treated as at rest and ``next_time``
#: returns ``tau_max`` instead of evaluating the policy formula.
ORIGIN_TOL = 1e-12


class _CapsMixin:
    """Shared cap validation and clamping for all policy variants."""

    def _check_caps(self) -> None:
        if not (math.isfinite(self.tau_min) and self.tau_min > 0.0):
            raise InvalidThreshold(f"tau_min must be positive, got {self.tau_min}")
        if not (math.isfinite(self.tau_max) and self.tau_max > 0.0):
            raise InvalidThreshold(f"tau_max must be positive, got {self.tau_max}")
        if self.tau_min > self.tau_max:
            raise InvalidThreshold(
                f"tau_min={self.tau_min} exceeds tau_max={self.tau_max}"
            )

    def clamp(self, tau: float) -> float:
        """Clip an emitted hold time into ``[tau_min, tau_max]``."""
        return float(min(max(float(tau), self.tau_min), self.tau_max))


@dataclass(frozen=True)
class Periodic(_CapsMixin):
    """Fixed-period execution: every sample is held for ``period`` seconds."""

    period: float
    tau_min: float = 1e-6
    tau_max: float = 1.0

    def __post_init__(self) -> None:
        self._check_caps()
        if not (math.isfinite(self.period) and self.period > 0.0):
            raise InvalidThreshold(f"period must be positive, got {self.period}")


@dataclass(frozen=True)
class EventOracle(_CapsMixin):
    """Continuous monitoring of the execution rule ``|e| = c |x|``.

    ``next_time`` integrates the held-measurement extension of the supplied
    system from ``(x_i, 0)`` until the rule fires.  If the rule never fires
    before ``horizon``, the emitted time is ``tau_max``.
    """

    c: float
    horizon: float = 5.0
    rtol: float = 1e-9
    atol: float = 1e-12
    tau_min: float = 1e-6
    tau_max: float = 1.0

    def __post_init__(self) -> None:
        self._check_caps()
        if not (math.isfinite(self.c) and self.c > 0.0):
            raise InvalidThreshold(f"trigger ratio c must be positive, got {self.c}")
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise InvalidThreshold(f"horizon must be positive, got {self.horizon}")


@dataclass(frozen=True)
class SelfTrigHomog(_CapsMixin):
    """Dwell time transported along the scaling flow of the field.

    ``tau_star`` is a dwell time valid on the calibration sphere of radius
    ``d_gamma``.  For a sampled state ``x`` the policy projects ``x`` onto
    that sphere along the scaling ray, measures the log-scale distance
    ``s = ln(|x| / d_gamma) / r``, and emits

        ``tau = exp(-rho(xi, r, y, s)) * tau_star``

    where ``y`` is the projected point and ``rho`` accumulates the scaling
    degree ``xi`` along the ray.  ``s`` may be negative (states inside the
    sphere); no clamping of ``s`` is performed, only the emitted time is
    capped.  For a constant degree ``xi == zeta`` this reduces to the
    closed form ``(d_gamma / |x|)**(r * zeta) ... `` via
    ``rho = zeta * s``; in particular ``zeta == 0`` emits ``tau_star``
    for every state.
    """

    tau_star: float
    d_gamma: float
    xi: DegreeFunction = field(default_factory=lambda: DegreeFunction.constant(0.0))
    r: float = 1.0
    tau_min: float = 1e-6
    tau_max: float = 1.0

    def __post_init__(self) -> None:
        self._check_caps()
        if not (math.isfinite(self.tau_star) and self.tau_star > 0.0):
            raise InvalidThreshold(
                f"tau_star must be positive, got {self.tau_star}"
            )
        if not (math.isfinite(self.d_gamma) and self.d_gamma > 0.0):
            raise InvalidThreshold(
                f"d_gamma must be positive, got {self.d_gamma}"
            )
        if not (math.isfinite(self.r) and self.r > 0.0):
            raise InvalidThreshold(f"weight r must be positive, got {self.r}")


@dataclass(frozen=True)
class SelfTrigPoly(_CapsMixin):
    """Dwell time transported by the exact degree-``l`` embedding map.

    ``tau_tilde_star`` is a dwell time valid for the embedded loop at
    reference radius ``r_ref``; the emitted time for an ambient state is
    ``scaled_dwell_time(x, tau_tilde_star, l, r_ref)``, i.e.
    ``lam**(l-1) * tau_tilde_star`` with ``lam = r_ref / sqrt(r_ref**2 +
    |x|**2)``.  At the origin this is exactly ``tau_tilde_star``; the
    emitted time shrinks algebraically with ``|x|``.
    """

    tau_tilde_star: float
    l: int
    r_ref: float = 1.0
    tau_min: float = 1e-6
    tau_max: float = 1.0

    def __post_init__(self) -> None:
        self._check_caps()
        if not (math.isfinite(self.tau_tilde_star) and self.tau_tilde_star > 0.0):
            raise InvalidThreshold(
                f"tau_tilde_star must be positive, got {self.tau_tilde_star}"
            )
        if int(self.l) != self.l or self.l < 2:
            raise InvalidThreshold(f"embedding degree l must be >= 2, got {self.l}")
        if not (math.isfinite(self.r_ref) and self.r_ref > 0.0):
            raise InvalidThreshold(f"r_ref must be positive, got {self.r_ref}")


TriggerPolicy = Union[Periodic, EventOracle, SelfTrigHomog, SelfTrigPoly]


def _as_extended(system) -> ErrorExtendedSystem:
    if isinstance(system, ErrorExtendedSystem):
        return system
    return ErrorExtendedSystem(system)


def oracle_time(
    system,
    x_i,
    c: float,
    horizon: float = 5.0,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> Optional[float]:
    """First time ``|e(t)| = c |x(t)|`` along the held-measurement flow.

    The extension starts at ``(x_i, 0)`` -- the error is reset by the
    execution at ``t = 0`` -- and evolves with the measurement held, so the
    error block is the exact negation of the state block.  Returns the
    crossing time, or ``None`` if the rule does not fire before ``horizon``.
    """
    if not (math.isfinite(c) and c > 0.0):
        raise InvalidThreshold(f"trigger ratio c must be positive, got {c}")
    ext = _as_extended(system)
    x0 = np.asarray(x_i, dtype=float)
    if x0.shape != (ext.n,):
        raise ValueError(f"expected state of dimension {ext.n}, got shape {x0.shape}")
    z0 = np.concatenate([x0, np.zeros(ext.n)])

    n = ext.n

    def guard(z):
        return float(np.linalg.norm(z[n:]) - c * np.linalg.norm(z[:n]))

    out = integrate_until_guard(
        StateField.from_extended(ext), z0, guard, horizon, rtol=rtol, atol=atol
    )
    if isinstance(out, GuardEvent):
        return float(out.t_star)
    return None


def next_time(policy: TriggerPolicy, system, x_i) -> float:
    """Hold time the policy assigns to the state sampled at an execution.

    ``system`` is only consulted by :class:`EventOracle`; the self-triggered
    variants are closed-form in ``x_i`` and ``system`` may be ``None`` for
    them.  The result is always within ``[policy.tau_min, policy.tau_max]``.
    """
    x = np.asarray(x_i, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("sampled state must be finite")

    if isinstance(policy, Periodic):
        return policy.clamp(policy.period)

    norm_x = float(np.linalg.norm(x))
    if norm_x < ORIGIN_TOL:
        # At equilibrium within tolerance: any hold time is safe.
        return float(policy.tau_max)

    if isinstance(policy, EventOracle):
        t = oracle_time(
            system, x, policy.c, policy.horizon, rtol=policy.rtol, atol=policy.atol
        )
        return policy.clamp(t if t is not None else policy.tau_max)

    if isinstance(policy, SelfTrigHomog):
        s = math.log(norm_x / policy.d_gamma) / policy.r
        y = (policy.d_gamma / norm_x) * x
        return policy.clamp(
            math.exp(-rho(policy.xi, policy.r, y, s)) * policy.tau_star
        )

    if isinstance(policy, SelfTrigPoly):
        return policy.clamp(
            scaled_dwell_time(x, policy.tau_tilde_star, policy.l, policy.r_ref)
        )

    raise TypeError(f"unknown trigger policy type: {type(policy).__name__}")


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of checking a policy against the event oracle on a state set.

    ``margins`` are ``oracle - policy`` per state (positive means the policy
    executed early, i.e. safely).  A state whose oracle never fires within
    the horizon contributes an infinite margin and can never be a violation;
    the summary statistics are taken over the finite margins.
    """

    n_states: int
    violations: int
    violation_indices: tuple
    min_margin: float
    mean_margin: float
    max_margin: float
    policy_times: tuple
    oracle_times: tuple

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def summary(self) -> str:
        return (
            f"{self.violations}/{self.n_states} violations; "
            f"margin min={self.min_margin:.6g} "
            f"mean={self.mean_margin:.6g} max={self.max_margin:.6g}"
        )


def validate_against_oracle(
    policy: TriggerPolicy,
    system,
    states: Sequence,
    c: Optional[float] = None,
    horizon: float = 5.0,
    tol: float = 1e-9,
) -> ValidationReport:
    """Compare policy hold times with true event times over many states.

    A violation is a state where the policy holds *longer* than the oracle
    allows: ``policy_time > oracle_time + tol``.  ``c`` defaults to the
    policy's own ratio when the policy is an :class:`EventOracle` and must
    be given explicitly otherwise.
    """
    if c is None:
        if isinstance(policy, EventOracle):
            c = policy.c
        else:
            raise InvalidThreshold(
                "trigger ratio c is required to validate a non-oracle policy"
            )

    policy_times = []
    oracle_times = []
    margins = []
    violation_indices = []
    for i, x in enumerate(states):
        tp = next_time(policy, system, x)
        to = oracle_time(system, x, c, horizon=horizon)
        to_val = math.inf if to is None else float(to)
        policy_times.append(tp)
        oracle_times.append(to_val)
        margins.append(to_val - tp)
        if tp > to_val + tol:
            violation_indices.append(i)

    finite = [m for m in margins if math.isfinite(m)]
    if finite:
        min_m = min(finite)
        mean_m = sum(finite) / len(finite)
        max_m = max(finite)
    else:
        min_m = mean_m = max_m = math.inf
    if any(not math.isfinite(m) for m in margins):
        max_m = math.inf

    return ValidationReport(
        n_states=len(policy_times),
        violations=len(violation_indices),
        violation_indices=tuple(violation_indices),
        min_margin=min_m,
        mean_margin=mean_m,
        max_margin=max_m,
        policy_times=tuple(policy_times),
        oracle_times=tuple(oracle_times),
    )
