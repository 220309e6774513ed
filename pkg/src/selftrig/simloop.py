"""Sample-and-hold closed-loop simulation with resource metrics.

The loop alternates measure / decide / hold: at each execution the
controller reads the state (optionally through additive measurement
noise), computes the input from that frozen measurement, and asks the
trigger policy how long to wait; the plant then evolves with the
measurement held until the next execution.  Between executions the true
state follows the case study's exact held-flow propagator whenever the
dynamics are undisturbed, and a dense Runge-Kutta fallback when an
actuator disturbance pulse is active.

Outputs are a :class:`SimTrace` (execution samples, inter-execution
times, a fixed-rate dense trace with Lyapunov values, the piecewise
constant input, and an event log) and :class:`Metrics` (execution count,
inter-execution statistics, decay measures, and violation counts of the
Lyapunov decrease tests).  :func:`sweep` repeats runs from initial
conditions spread evenly over the operation-region boundary and averages
the metrics per policy.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .casestudies import CaseStudy, case_study, periodic_policy, self_trigger_policy
from .errors import ConfigError, NumericOverflow
from .fields import ErrorExtendedSystem, StateField
from .integrate import integrate
from .triggers import TriggerPolicy, next_time

__all__ = [
    "DisturbancePulse",
    "Metrics",
    "NoiseModel",
    "SimConfig",
    "SimTrace",
    "SweepResult",
    "SweepRow",
    "boundary_states",
    "metrics",
    "run",
    "standard_policies",
    "sweep",
]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Additive measurement noise with power tied to the signal power.

    Each measurement is the true state plus a zero-mean Gaussian vector
    whose expected squared norm equals ``fraction`` times the running mean
    square of the sampled true states seen so far.  ``fraction`` is the
    noise-to-signal power ratio (0.02 reproduces the benchmark setting);
    the generator is seeded, so runs are reproducible.
    """

    enabled: bool = False
    fraction: float = 0.02
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction < 1.0:
            raise ConfigError(
                f"noise fraction must lie in [0, 1), got {self.fraction}"
            )


@dataclass(frozen=True)
class DisturbancePulse:
    """Rectangular additive pulse on the actuated rows of the dynamics.

    Active on ``[onset, onset + duration)``; ``amplitude`` is added to
    every actuated row of the simulation-frame dynamics while active.
    The trigger policy has no knowledge of the pulse -- it reacts only
    through the measurements, which is the point of the experiment.
    """

    enabled: bool = False
    onset: float = 0.7
    amplitude: float = 1.0
    duration: float = 0.3

    def __post_init__(self) -> None:
        if self.onset < 0.0:
            raise ConfigError(f"disturbance onset must be >= 0, got {self.onset}")
        if not self.duration > 0.0:
            raise ConfigError(
                f"disturbance duration must be positive, got {self.duration}"
            )


@dataclass(frozen=True)
class SimConfig:
    """Everything one closed-loop run needs.

    ``system`` is a registered case-study name or a :class:`CaseStudy`;
    ``x0``/``t_end`` default to the case study's values when omitted.
    ``sigma`` records the trigger aggressiveness the policy was built at
    (defaults to the case study's own value) and feeds the Lyapunov bound
    check in :func:`metrics`.  ``dense_points`` sets the fixed output
    rate of the decimated dense trace.
    """

    system: Union[str, CaseStudy]
    policy: TriggerPolicy
    x0: Optional[Tuple[float, ...]] = None
    t_end: Optional[float] = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    disturbance: DisturbancePulse = field(default_factory=DisturbancePulse)
    sigma: Optional[float] = None
    rtol: float = 1e-9
    atol: float = 1e-12
    escape_norm: float = 1e9
    dense_points: int = 2000
    equilibrium_tol: float = 1e-9
    max_executions: int = 2_000_000

    def __post_init__(self) -> None:
        if self.t_end is not None and not self.t_end > 0.0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.dense_points < 2:
            raise ConfigError(
                f"dense_points must be at least 2, got {self.dense_points}"
            )
        if not self.escape_norm > 0.0:
            raise ConfigError(
                f"escape_norm must be positive, got {self.escape_norm}"
            )
        if self.equilibrium_tol < 0.0:
            raise ConfigError(
                f"equilibrium_tol must be >= 0, got {self.equilibrium_tol}"
            )
        if self.max_executions < 1:
            raise ConfigError(
                f"max_executions must be >= 1, got {self.max_executions}"
            )


# ---------------------------------------------------------------------------
# Trace and metrics containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SimTrace:
    """One run's full record.

    ``times``/``states``/``measurements``/``inputs`` are per-execution
    samples; ``taus`` are the realized inter-execution times (differences
    of ``times``); ``planned_taus`` are the policy's outputs, of which
    the last may overhang ``t_end``.  The ``dense_*`` arrays sample the
    exact inter-execution flow at a fixed output rate, carrying along the
    held measurement and input so the error and the Lyapunov rate can be
    reconstructed pointwise.  ``events`` lists notable happenings as
    ``(time, label)`` pairs.
    """

    system: str
    sigma: float
    times: np.ndarray
    states: np.ndarray
    measurements: np.ndarray
    inputs: np.ndarray
    planned_taus: np.ndarray
    dense_times: np.ndarray
    dense_states: np.ndarray
    dense_measurements: np.ndarray
    dense_inputs: np.ndarray
    dense_v: np.ndarray
    events: Tuple[Tuple[float, str], ...]
    diverged: bool
    final_time: float
    final_state: np.ndarray
    config: SimConfig

    @property
    def n_executions(self) -> int:
        return len(self.times)

    @property
    def taus(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class Metrics:
    """Resource and stability summary of one run.

    ``decrease_violations`` counts executions whose sampled Lyapunov
    value failed to drop below the previous sample's;
    ``bound_violations`` counts dense-trace points where the Lyapunov
    rate exceeded the certificate's at-trigger ceiling (plus a relative
    tolerance).  The ceiling is only claimed on the certified operation
    region, so the rate check covers the ``bound_checked`` dense points
    with state norm inside the region radius -- transients that leave
    the region (the rotation loop does, from the benchmark start) are
    outside any certificate claim.  Inter-execution statistics are
    ``nan`` for runs with a single execution.
    """

    executions: int
    tau_min: float
    tau_mean: float
    tau_max: float
    final_norm: float
    v_ratio: float
    decrease_violations: int
    bound_violations: int
    bound_checked: int
    diverged: bool

    @property
    def lyapunov_violations(self) -> int:
        return self.decrease_violations + self.bound_violations


# ---------------------------------------------------------------------------
# Propagation helpers
# ---------------------------------------------------------------------------


def _resolve_case(system: Union[str, CaseStudy]) -> CaseStudy:
    return system if isinstance(system, CaseStudy) else case_study(system)


def _pulse_pieces(
    t0: float, t1: float, dist: DisturbancePulse
) -> Sequence[Tuple[float, float, float]]:
    """Split [t0, t1] at pulse edges into (a, b, amplitude) pieces."""
    if not dist.enabled:
        return [(t0, t1, 0.0)]
    on, off = dist.onset, dist.onset + dist.duration
    edges = sorted({t0, t1} | {e for e in (on, off) if t0 < e < t1})
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        amp = dist.amplitude if on <= mid < off else 0.0
        pieces.append((a, b, amp))
    return pieces


def _propagate_segment(
    case: CaseStudy,
    x: np.ndarray,
    m: np.ndarray,
    t0: float,
    t1: float,
    eval_times: np.ndarray,
    dist: DisturbancePulse,
    push: np.ndarray,
    rtol: float,
    atol: float,
    escape_norm: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Advance one held segment, sampling it at ``eval_times``.

    Undisturbed pieces use the case study's exact propagator; pieces
    overlapping the pulse integrate the held dynamics plus the constant
    push numerically.  Returns the state at ``t1`` and the states at
    ``eval_times`` (which must lie within [t0, t1], sorted).
    """
    out = np.empty((len(eval_times), case.n))
    for a, b, amp in _pulse_pieces(t0, t1, dist):
        lo = np.searchsorted(eval_times, a, side="right" if a > t0 else "left")
        hi = np.searchsorted(eval_times, b, side="right")
        inside = eval_times[lo:hi]
        if amp == 0.0:
            for j, te in enumerate(inside):
                out[lo + j] = case.held_flow(x, m, te - a)
            x = case.held_flow(x, m, b - a)
        else:
            add = amp * push

            def fn(z, _m=m, _add=add):
                return np.asarray(case.closed_form(z, _m - z), float) + _add

            traj = integrate(
                StateField(case.n, fn),
                x,
                (a, b),
                rtol=rtol,
                atol=atol,
                escape_norm=escape_norm,
            )
            for j, te in enumerate(inside):
                out[lo + j] = traj.eval(te)
            x = traj.y_end
    return x, out


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def run(config: SimConfig) -> SimTrace:
    """Simulate one sample-and-hold run under the configured policy.

    The loop samples the state (adding noise when enabled), computes the
    held input and the next execution delay from the measurement, and
    advances the true state exactly between executions.  It stops at
    ``t_end``, at the equilibrium tolerance, or -- marking the trace
    diverged -- when the state norm escapes.
    """
    case = _resolve_case(config.system)
    x0 = np.asarray(
        case.default_x0 if config.x0 is None else config.x0, dtype=float
    )
    if x0.shape != (case.n,):
        raise ConfigError(
            f"x0 must have {case.n} entries for {case.name!r}, got shape {x0.shape}"
        )
    t_end = float(case.default_t_end if config.t_end is None else config.t_end)
    if not t_end > 0.0:
        raise ConfigError(f"t_end must be positive, got {t_end}")
    if np.linalg.norm(x0) > case.region.radius * (1.0 + 1e-9):
        raise ConfigError(
            f"|x0| = {np.linalg.norm(x0):.6g} lies outside the operation "
            f"region of {case.name!r} (radius {case.region.radius})"
        )
    sigma = case.certificate.sigma if config.sigma is None else float(config.sigma)

    err_system = ErrorExtendedSystem(case.closed_loop)
    rng = np.random.default_rng(config.noise.seed)
    push = np.zeros(case.n)
    push[list(case.actuated_rows)] = 1.0
    noise_std_scale = math.sqrt(config.noise.fraction / case.n)

    grid = np.linspace(0.0, t_end, config.dense_points)
    times, states, ms, us, planned = [], [], [], [], []
    chunks_t, chunks_x, chunks_m, chunks_u = [], [], [], []
    events = []
    if config.disturbance.enabled and config.disturbance.onset < t_end:
        events.append((config.disturbance.onset, "disturbance-on"))
        off = config.disturbance.onset + config.disturbance.duration
        if off < t_end:
            events.append((off, "disturbance-off"))

    x = x0.copy()
    t = 0.0
    power_sum = 0.0
    diverged = False

    while True:
        norm_x = float(np.linalg.norm(x))
        if not math.isfinite(norm_x) or norm_x > config.escape_norm:
            diverged = True
            events.append((t, "diverged"))
            break
        if times and norm_x < config.equilibrium_tol:
            events.append((t, "equilibrium-stop"))
            break
        if len(times) >= config.max_executions:
            events.append((t, "max-executions-reached"))
            break

        power_sum += norm_x * norm_x
        if config.noise.enabled and config.noise.fraction > 0.0:
            std = noise_std_scale * math.sqrt(power_sum / (len(times) + 1))
            m = x + rng.normal(0.0, std, size=case.n)
        else:
            m = x.copy()
        u = np.atleast_1d(
            np.asarray(case.feedback(case.from_internal(m)), dtype=float)
        )
        tau = next_time(config.policy, err_system, m)

        times.append(t)
        states.append(x.copy())
        ms.append(m)
        us.append(u)
        planned.append(tau)

        t1 = min(t + tau, t_end)
        lo = 0 if len(times) == 1 else np.searchsorted(grid, t, side="right")
        hi = np.searchsorted(grid, t1, side="right")
        try:
            x, seg = _propagate_segment(
                case,
                x,
                m,
                t,
                t1,
                grid[lo:hi],
                config.disturbance,
                push,
                config.rtol,
                config.atol,
                config.escape_norm,
            )
        except NumericOverflow:
            diverged = True
            events.append((t1, "diverged"))
            t = t1
            break
        chunks_t.append(grid[lo:hi])
        chunks_x.append(seg)
        chunks_m.append(np.broadcast_to(m, seg.shape))
        chunks_u.append(np.broadcast_to(u, (seg.shape[0], len(u))))
        t = t1
        if t >= t_end * (1.0 - 1e-15):
            break

    dense_t = (
        np.concatenate(chunks_t) if chunks_t else np.empty(0)
    )
    dense_x = (
        np.vstack(chunks_x) if chunks_x else np.empty((0, case.n))
    )
    dense_m = (
        np.vstack(chunks_m) if chunks_m else np.empty((0, case.n))
    )
    dense_u = (
        np.vstack(chunks_u) if chunks_u else np.empty((0, case.n_inputs))
    )
    dense_v = np.array([case.v(xd) for xd in dense_x])

    return SimTrace(
        system=case.name,
        sigma=sigma,
        times=np.asarray(times),
        states=np.asarray(states),
        measurements=np.asarray(ms),
        inputs=np.asarray(us),
        planned_taus=np.asarray(planned),
        dense_times=dense_t,
        dense_states=dense_x,
        dense_measurements=dense_m,
        dense_inputs=dense_u,
        dense_v=dense_v,
        events=tuple(events),
        diverged=diverged,
        final_time=t,
        final_state=x.copy(),
        config=config,
    )


def _pulse_at(dist: DisturbancePulse, t: float) -> float:
    if dist.enabled and dist.onset <= t < dist.onset + dist.duration:
        return dist.amplitude
    return 0.0


def metrics(trace: SimTrace) -> Metrics:
    """Summarize a trace: executions, delays, decay, and violations.

    The Lyapunov decrease test has two parts.  Discrete: the sampled V
    must drop strictly between consecutive executions.  Continuous: at
    every dense-trace point inside the certified operation region the
    actual Lyapunov rate (including any active disturbance push) must
    stay below the certificate's at-trigger ceiling
    ``vdot_bound(|x|, c |x|)`` plus a relative slack of
    ``1e-6 * p * |x|^degree``.  Violations are counted, not hidden --
    disturbed or noisy runs may legitimately show some.
    """
    case = case_study(trace.system)
    cert = case.with_sigma(trace.sigma)
    taus = trace.taus
    if taus.size:
        tau_min, tau_mean, tau_max = (
            float(taus.min()),
            float(taus.mean()),
            float(taus.max()),
        )
    else:
        tau_min = tau_mean = tau_max = float("nan")

    v_sampled = np.array([case.v(s) for s in trace.states])
    decrease = int(np.sum(np.diff(v_sampled) >= 0.0)) if v_sampled.size > 1 else 0

    c = cert.c
    push = np.zeros(case.n)
    push[list(case.actuated_rows)] = 1.0
    dist = trace.config.disturbance
    certified_radius = case.region.radius * (1.0 + 1e-9)
    bound_violations = 0
    bound_checked = 0
    for t, xd, md in zip(trace.dense_times, trace.dense_states, trace.dense_measurements):
        norm_x = float(np.linalg.norm(xd))
        if norm_x > certified_radius:
            continue
        bound_checked += 1
        xdot = np.asarray(case.closed_form(xd, md - xd), float)
        amp = _pulse_at(dist, float(t))
        if amp:
            xdot = xdot + amp * push
        vdot = float(np.dot(cert.grad_v(xd), xdot))
        ceiling = cert.vdot_bound(norm_x, c * norm_x) + 1e-6 * cert.p * norm_x**cert.degree
        if vdot > ceiling:
            bound_violations += 1

    v0 = float(v_sampled[0]) if v_sampled.size else 0.0
    v_end = float(case.v(trace.final_state))
    if v0 > 0.0:
        v_ratio = v_end / v0
    else:
        v_ratio = 0.0 if v_end == 0.0 else float("inf")

    return Metrics(
        executions=trace.n_executions,
        tau_min=tau_min,
        tau_mean=tau_mean,
        tau_max=tau_max,
        final_norm=float(np.linalg.norm(trace.final_state)),
        v_ratio=v_ratio,
        decrease_violations=decrease,
        bound_violations=bound_violations,
        bound_checked=bound_checked,
        diverged=trace.diverged,
    )


# ---------------------------------------------------------------------------
# Boundary sweeps
# ---------------------------------------------------------------------------


def boundary_states(
    case: CaseStudy, n_ic: int, radius: Optional[float] = None
) -> np.ndarray:
    """Initial conditions spread evenly on the operation-region boundary.

    Planar systems get equal angles; three-state systems get a spherical
    Fibonacci lattice.  Other dimensions are not supported.
    """
    if n_ic < 1:
        raise ConfigError(f"n_ic must be >= 1, got {n_ic}")
    r = case.region.radius if radius is None else float(radius)
    if case.n == 2:
        angles = 2.0 * math.pi * np.arange(n_ic) / n_ic
        return r * np.column_stack([np.cos(angles), np.sin(angles)])
    if case.n == 3:
        k = np.arange(n_ic)
        z = 1.0 - (2.0 * k + 1.0) / n_ic
        golden = (1.0 + math.sqrt(5.0)) / 2.0
        phi = 2.0 * math.pi * k / golden
        rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        return r * np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    raise ConfigError(
        f"boundary placement is defined for 2- or 3-state systems, "
        f"not n = {case.n}"
    )


@dataclass(frozen=True)
class SweepRow:
    """Per-policy averages over a sweep's initial conditions."""

    label: str
    n_ic: int
    mean_executions: float
    mean_tau_min: float
    mean_tau_mean: float
    mean_tau_max: float
    mean_final_norm: float
    mean_v_ratio: float
    decrease_violations: int
    bound_violations: int
    diverged_runs: int
    per_ic: Tuple[Metrics, ...]


@dataclass(frozen=True)
class SweepResult:
    """Sweep output: one averaged row per policy, same ICs for all."""

    system: str
    t_end: float
    initial_conditions: np.ndarray
    rows: Tuple[SweepRow, ...]

    def row(self, label: str) -> SweepRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(f"no sweep row labeled {label!r}")

    def table(self) -> str:
        header = (
            f"{'policy':<14} {'n_ic':>5} {'mean_exec':>12} {'mean_tau':>12} "
            f"{'final_norm':>12} {'violations':>11} {'diverged':>9}"
        )
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.label:<14} {r.n_ic:>5d} {r.mean_executions:>12.2f} "
                f"{r.mean_tau_mean:>12.6g} {r.mean_final_norm:>12.6g} "
                f"{r.decrease_violations + r.bound_violations:>11d} "
                f"{r.diverged_runs:>9d}"
            )
        return "\n".join(lines)


def standard_policies(
    case: CaseStudy, sigma: Optional[float] = None
) -> Mapping[str, TriggerPolicy]:
    """The benchmark pairing: self-triggered policy vs periodic baseline."""
    return MappingProxyType(
        {
            "self-trig": self_trigger_policy(case, sigma),
            "periodic": periodic_policy(case, sigma),
        }
    )


def _mean(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    finite = arr[np.isfinite(arr)]
    return float(finite.mean()) if finite.size else float("nan")


def sweep(
    system: Union[str, CaseStudy],
    policies: Mapping[str, TriggerPolicy],
    n_ic: int,
    t_end: Optional[float] = None,
    sigma: Optional[float] = None,
    noise: Optional[NoiseModel] = None,
    disturbance: Optional[DisturbancePulse] = None,
    radius: Optional[float] = None,
    jobs: int = 1,
) -> SweepResult:
    """Run every policy from every boundary initial condition and average.

    Runs are independent; with ``jobs > 1`` they execute on a thread
    pool.  Noise seeds are derived per initial condition so repeated
    sweeps are reproducible.
    """
    case = _resolve_case(system)
    ics = boundary_states(case, n_ic, radius)
    horizon = float(case.default_t_end if t_end is None else t_end)
    base_noise = NoiseModel() if noise is None else noise
    base_dist = DisturbancePulse() if disturbance is None else disturbance

    configs = []
    for label, policy in policies.items():
        for i, ic in enumerate(ics):
            configs.append(
                (
                    label,
                    SimConfig(
                        system=case,
                        policy=policy,
                        x0=tuple(ic),
                        t_end=horizon,
                        noise=replace(base_noise, seed=base_noise.seed + i),
                        disturbance=base_dist,
                        sigma=sigma,
                    ),
                )
            )

    def one(item: Tuple[str, SimConfig]) -> Tuple[str, Metrics]:
        label, cfg = item
        return label, metrics(run(cfg))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, configs))
    else:
        results = [one(item) for item in configs]

    rows = []
    for label in policies:
        ms = tuple(m for lab, m in results if lab == label)
        rows.append(
            SweepRow(
                label=label,
                n_ic=n_ic,
                mean_executions=_mean([m.executions for m in ms]),
                mean_tau_min=_mean([m.tau_min for m in ms]),
                mean_tau_mean=_mean([m.tau_mean for m in ms]),
                mean_tau_max=_mean([m.tau_max for m in ms]),
                mean_final_norm=_mean([m.final_norm for m in ms]),
                mean_v_ratio=_mean([m.v_ratio for m in ms]),
                decrease_violations=sum(m.decrease_violations for m in ms),
                bound_violations=sum(m.bound_violations for m in ms),
                diverged_runs=sum(1 for m in ms if m.diverged),
                per_ic=ms,
            )
        )
    return SweepResult(
        system=case.name,
        t_end=horizon,
        initial_conditions=ics,
        rows=tuple(rows),
    )
