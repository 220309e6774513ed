"""Bundled benchmark loops, fully parameterized and addressable by id.

Two sample-and-hold feedback loops ship with the package:

* ``"jet-engine"`` -- a two-state compressor-surge loop.  Analysis runs in
  internal coordinates (x1, y) where the zero-error loop has a scaling
  symmetry with state-dependent degree xi(x1, y) = 2 x1^2 / (x1^2 + 1);
  the certificate is quadratic with dissipation pair (0.74, 0.90) and
  the operation region is the ball of radius 5.4.  Self-trigger times are
  transported along the scaling flow (:class:`~selftrig.triggers.SelfTrigHomog`).
* ``"rigid-body"`` -- a three-state angular-velocity loop with two actuated
  axes.  The loop is polynomial of degree 3 and is handled through the
  degree-3 compactifying embedding; the certificate is quartic and the
  operation region is the ball of radius 15.  Self-trigger times are
  transported by the exact embedding power law
  (:class:`~selftrig.triggers.SelfTrigPoly`).

Each :class:`CaseStudy` carries the plant-coordinate dynamics and feedback
(for trace export and input reconstruction), the error-injected closed loop
as both a monomial field and an independent closed-form evaluator, the
certificate, region objects, exact held-measurement propagators, and a
``reference`` table of externally published target constants used by the
verification suites.  Values this package computes itself (dwell times,
norm maxima) come from :func:`dwell_time_pipeline` /
:func:`embedded_dwell_time_pipeline` and are never stored as literals here,
with one exception: the calibration scale :data:`KAPPA_ROT` (see below).

Extension point: additional systems can be registered by constructing a
:class:`CaseStudy` and adding it to :data:`CASE_BUILDERS`; nothing else in
the package hard-codes the bundled pair.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from functools import lru_cache
from types import MappingProxyType
from typing import Callable, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .fields import (
    Monomial,
    PolyField,
    StabilityCertificate,
    inject_measurement,
    quadratic_form_monomials,
)
from .homogeneity import DegreeFunction
from .linbound import (
    BallRegion,
    LevelSetRegion,
    ScaleSectionRegion,
    TauStar,
    maximize_norms,
    tau_star,
)
from .polyhom import HomogenizedSystem, homogenize, lifted_scale_window
from .triggers import Periodic, SelfTrigHomog, SelfTrigPoly

__all__ = [
    "CASE_IDS",
    "CaseStudy",
    "DwellReport",
    "KAPPA_ROT",
    "ScalingSymmetry",
    "cached_dwell_report",
    "case_study",
    "dwell_time_pipeline",
    "embedded_dwell_time_pipeline",
    "jet_engine",
    "periodic_policy",
    "rigid_body",
    "self_trigger_policy",
    "tube_section_level",
]

# Calibration scale for the rigid-rotation quartic certificate.  The
# published dissipation magnitudes (91446, 147190) fix only the p:q
# proportion -- and hence the trigger ratio c = sigma*sqrt(p/q) -- not a
# valid overall scale: no positive multiple of that pair bounds dV/dt for
# the *error-perturbed* loop over the operation ball (the tests exhibit a
# counterexample state/error pair where dV/dt > 0 inside the trigger
# region).  The scale below is calibrated so the quartic budget is a true
# pointwise bound for the zero-error loop over the whole operation ball:
# it is min over the boundary sphere of -dV/dt(x, 0) / (91446 |x|^4),
# times a 0.999 safety factor (the sphere minimum is interior-dominating;
# binding direction near x ~ (-6.10, 13.52, 2.21)).  Re-verified by the
# test suite on dense ball samples.
KAPPA_ROT = 2.966968321234479e-08


@dataclass(frozen=True)
class ScalingSymmetry:
    """Scaling data of a loop: degree function and dilation weight."""

    xi: DegreeFunction
    r: float = 1.0


@dataclass(frozen=True, eq=False)
class CaseStudy:
    """Immutable bundle describing one benchmark loop.

    ``closed_loop`` (monomial field) and ``closed_form`` (direct evaluator)
    are two independently written representations of the same error-injected
    dynamics; the test suite checks them against each other.  ``held_flow``
    is the exact inter-execution propagator: ``held_flow(x, m, dt)`` is the
    state reached from ``x`` after ``dt`` seconds with the measurement
    ``m`` (state sampled at the last execution, possibly noisy) held in the
    controller.  ``actuated_rows`` lists the rows of the simulation-frame
    dynamics that the actuator drives directly -- an additive input
    disturbance enters exactly there.
    """

    name: str
    n: int
    n_inputs: int
    actuated_rows: Tuple[int, ...]
    closed_loop: PolyField
    closed_form: Callable
    plant: Callable
    feedback: Callable
    to_internal: Callable
    from_internal: Callable
    certificate: StabilityCertificate
    sigmas: Tuple[float, ...]
    region: BallRegion
    scaling: Optional[ScalingSymmetry]
    embedding_degree: Optional[int]
    reference: Mapping
    default_x0: Tuple[float, ...]
    default_t_end: float
    held_flow: Callable

    def with_sigma(self, sigma: float) -> StabilityCertificate:
        """The certificate re-issued at a different trigger aggressiveness."""
        return replace(self.certificate, sigma=float(sigma))

    def v(self, x) -> float:
        return self.certificate.eval_v(x)

    def level_region(self) -> LevelSetRegion:
        """Alternate operation-region reading: the sublevel set of V.

        For the compressor loop this set lies strictly inside the operation
        ball; for the rotation loop the sublevel set is much larger than the
        ball (and is truncated here to the sphere that covers its full x3
        extent -- it stretches to |x2| ~ 2.6e4 along the x2 = x3^2 valley,
        which would shrink the resulting dwell time even further).  Neither
        containment matches the enclosure the reference constants assume;
        the ball remains the default region everywhere and this reading is
        provided for comparison runs only.
        """
        level = float(self.reference["v_level"])
        if self.name == "jet-engine":
            bound = math.sqrt(level / 1.0795) + 0.01  # smallest eigenvalue of P
        else:
            bound = 230.0
        return LevelSetRegion(self.certificate.eval_v, level, self.n, bounding_radius=bound)

    def lifted_region(self, kind: str = "sections"):
        """Scale-windowed search region for the embedded loop (degree-l systems).

        ``"sections"`` (default): per-scale V-sublevel sections
        ``{V(x) <= tube_section_level(w)}`` over the scale window
        ``(0, 1/sqrt(1 + R^2)]`` -- the tube swept by embedding the
        certificate's sublevel sets at every scale.  ``"ball"``: the plain
        lift of the operation ball over the same window.
        """
        if self.embedding_degree is None:
            raise ConfigError(
                f"system {self.name!r} has no embedded form; no lifted region"
            )
        lam_hi = 1.0 / math.sqrt(1.0 + self.region.radius**2)
        if kind == "sections":
            v_fn = self.certificate.eval_v

            def section_at(w: float) -> LevelSetRegion:
                return LevelSetRegion(
                    v_fn, tube_section_level(w), self.n, bounding_radius=3.2
                )

            return ScaleSectionRegion(section_at, lam_hi, 0.0)
        if kind == "ball":
            return lifted_scale_window(BallRegion(self.region.radius, self.n), lam_hi, 0.0)
        raise ConfigError(f"unknown lifted-region kind {kind!r}")

    def embedded(self) -> HomogenizedSystem:
        if self.embedding_degree is None:
            raise ConfigError(f"system {self.name!r} has no embedded form")
        return _embedded_cached(self.name)


def tube_section_level(w: float) -> float:
    """V-level of the embedded tube's section at scale ``w``.

    The tube embeds, at every scale ``w = 1/sqrt(1 + R^2)``, the V-sublevel
    set whose boundary touches the third-axis point of norm R; evaluating V
    at that point gives level(w) = 1.5 (1 - w^2) + 0.5 (1 - w^2)^2.
    """
    u = 1.0 - float(w) ** 2
    return 1.5 * u + 0.5 * u * u


# ---------------------------------------------------------------------------
# Compressor-surge loop ("jet-engine")
# ---------------------------------------------------------------------------


def _mono(coeff, x_exps, e_exps=None, w=0) -> Monomial:
    n = len(x_exps)
    return Monomial(coeff, tuple(x_exps), tuple(e_exps or [0] * n), w)


def _jet_internal_rhs(z: np.ndarray) -> np.ndarray:
    z1, z2 = float(z[0]), float(z[1])
    s = z1 * z1 + 1.0
    return np.array([-0.5 * s * (z1 + z2), -s * z2])


@lru_cache(maxsize=None)
def jet_engine(beta: float = 1.0) -> CaseStudy:
    """Two-state compressor-surge loop in internal coordinates (x1, y).

    The controller measures the full state, so the injected loop is exactly
    the zero-error loop evaluated at the measured state:
    fhat(x, e) = f_cl(x + e).  Between executions the measured state is
    frozen, hence the true flow moves with *constant* velocity f_cl(m) --
    the held propagator is linear in t and exact.

    ``beta`` only enters the plant-coordinate view (pressure dynamics and
    the raw input value); it cancels from the internal closed loop.
    """
    if not beta > 0.0:
        raise ConfigError(f"beta must be positive, got {beta}")
    b2 = beta * beta

    # d x1/dt = -(x1^2+1)(x1 + y)/2 ; d y/dt = -(x1^2+1) y, expanded to
    # monomials with the measured state injected in every row.
    rows = [
        [
            _mono(-0.5, [3, 0]),
            _mono(-0.5, [2, 1]),
            _mono(-0.5, [1, 0]),
            _mono(-0.5, [0, 1]),
        ],
        [_mono(-1.0, [2, 1]), _mono(-1.0, [0, 1])],
    ]
    field = PolyField(2, inject_measurement(rows))

    def closed_form(x, e) -> np.ndarray:
        return _jet_internal_rhs(np.asarray(x, float) + np.asarray(e, float))

    def to_internal(x_plant) -> np.ndarray:
        x1, x2 = float(x_plant[0]), float(x_plant[1])
        return np.array([x1, 2.0 * (x1 * x1 + x2) / (x1 * x1 + 1.0)])

    def from_internal(x_int) -> np.ndarray:
        x1, y = float(x_int[0]), float(x_int[1])
        return np.array([x1, 0.5 * y * (x1 * x1 + 1.0) - x1 * x1])

    def plant(x_plant, u) -> np.ndarray:
        x1, x2 = float(x_plant[0]), float(x_plant[1])
        u0 = float(np.atleast_1d(u)[0])
        return np.array([-x2 - 1.5 * x1 * x1 - 0.5 * x1**3, (x1 - u0) / b2])

    def feedback(x_plant) -> np.ndarray:
        x1 = float(x_plant[0])
        y = float(to_internal(x_plant)[1])
        s = x1 * x1 + 1.0
        return np.array(
            [x1 - 0.5 * b2 * s * (y + x1 * x1 * y + x1 * y * y) + 2.0 * b2 * x1]
        )

    def held_flow(x, m, dt: float) -> np.ndarray:
        return np.asarray(x, float) + float(dt) * _jet_internal_rhs(np.asarray(m, float))

    # Dissipation pair at its meaningful scale: dV/dt <= -0.74|x|^2
    # + 0.90|e|^2 holds pointwise on the operation region (checked by the
    # tests); the reference table also quotes the same pair inflated by
    # 1e8, a scale at which the bound is false by many orders of magnitude.
    # The trigger ratio c = sigma*sqrt(p/q) is scale-invariant either way.
    cert = StabilityCertificate(
        v_monomials=quadratic_form_monomials(
            np.array([[1.46, -0.175], [-0.175, 1.16]])
        ),
        p=0.74,
        q=0.90,
        sigma=0.33,
        degree=2,
        gamma_radius=5.4,
    )

    xi = DegreeFunction.from_callable(
        lambda x: 2.0 * x[0] ** 2 / (x[0] ** 2 + 1.0)
    )

    reference = MappingProxyType(
        {
            "tau_star": 7.63e-3,  # at sigma = 0.33
            "dissipation_pair": (0.74e8, 0.90e8),  # quoted scale; see cert note
            "v_level": 27.04,
            "executions_periodic": MappingProxyType({0.11: 890, 0.22: 506, 0.33: 397}),
            "executions_self": MappingProxyType({0.11: 123, 0.22: 68, 0.33: 53}),
            "h_argmax": (12.5, 0.0),
            "e_argmax": (3.75, 0.0),
            "sweep_count": 50,
            "t_end": 3.0,
        }
    )

    return CaseStudy(
        name="jet-engine",
        n=2,
        n_inputs=1,
        actuated_rows=(1,),
        closed_loop=field,
        closed_form=closed_form,
        plant=plant,
        feedback=feedback,
        to_internal=to_internal,
        from_internal=from_internal,
        certificate=cert,
        sigmas=(0.11, 0.22, 0.33),
        region=BallRegion(5.4, 2),
        scaling=ScalingSymmetry(xi=xi, r=1.0),
        embedding_degree=None,
        reference=reference,
        default_x0=(5.37, 0.34),
        default_t_end=3.0,
        held_flow=held_flow,
    )


# ---------------------------------------------------------------------------
# Rigid-rotation loop ("rigid-body")
# ---------------------------------------------------------------------------


def _rot_feedback(x) -> np.ndarray:
    x1, x2, x3 = float(x[0]), float(x[1]), float(x[2])
    return np.array(
        [
            -x1 * x2 - 2.0 * x2 * x3 - x1 - x3,
            2.0 * x1 * x2 * x3 + 3.0 * x3 * x3 - x2,
        ]
    )


@lru_cache(maxsize=None)
def rigid_body() -> CaseStudy:
    """Three-state rotation loop: two actuated axes, one coupling axis.

    Only the actuated rows see the measurement error (the third row is the
    physical coupling x1*x2 of the true state).  Between executions the
    input is frozen at u = k(m), so x1 and x2 move linearly and x3 has an
    exact cubic-in-t closed form -- the held propagator below.
    """
    rows = [
        [
            _mono(-1.0, [1, 1, 0]),
            _mono(-2.0, [0, 1, 1]),
            _mono(-1.0, [1, 0, 0]),
            _mono(-1.0, [0, 0, 1]),
        ],
        [
            _mono(2.0, [1, 1, 1]),
            _mono(3.0, [0, 0, 2]),
            _mono(-1.0, [0, 1, 0]),
        ],
        [_mono(1.0, [1, 1, 0])],
    ]
    field = PolyField(3, inject_measurement(rows, rows={0, 1}))

    def closed_form(x, e) -> np.ndarray:
        x = np.asarray(x, float)
        u = _rot_feedback(x + np.asarray(e, float))
        return np.array([u[0], u[1], x[0] * x[1]])

    def plant(x, u) -> np.ndarray:
        x = np.asarray(x, float)
        u = np.asarray(u, float)
        return np.array([u[0], u[1], x[0] * x[1]])

    def identity(x) -> np.ndarray:
        return np.asarray(x, dtype=float).copy()

    def held_flow(x, m, dt: float) -> np.ndarray:
        x = np.asarray(x, float)
        t = float(dt)
        u1, u2 = _rot_feedback(m)
        a, b = x[0], x[1]
        return np.array(
            [
                a + u1 * t,
                b + u2 * t,
                x[2]
                + a * b * t
                + (a * u2 + b * u1) * t * t / 2.0
                + u1 * u2 * t**3 / 3.0,
            ]
        )

    # V = (x1+x3)^2/2 + (x2-x3^2)^2/2 + x3^2
    v_monomials = (
        _mono(0.5, [2, 0, 0]),
        _mono(0.5, [0, 2, 0]),
        _mono(1.5, [0, 0, 2]),
        _mono(1.0, [1, 0, 1]),
        _mono(-1.0, [0, 1, 2]),
        _mono(0.5, [0, 0, 4]),
    )
    cert = StabilityCertificate(
        v_monomials=v_monomials,
        p=KAPPA_ROT * 91446.0,
        q=KAPPA_ROT * 147190.0,
        sigma=0.01,
        degree=4,
        gamma_radius=15.0,
    )

    reference = MappingProxyType(
        {
            "tau_star": 4.5e-5,
            "tau_tilde_star": 5.1e-3,
            "dissipation_pair": (91446.0, 147190.0),  # proportions; see KAPPA_ROT
            "v_level": 25650.0,
            "execution_factor": 8.0,
            "noise_power": 0.02,
            "t_end": 5.0,
            "h_argmax": ((1.3, 2.3, -1.4), 0.066, (0.031, 0.007, -0.035)),
            "g_argmax": ((0.7, 2.2, -1.3), 0.066, (0.028, 0.005, -0.047)),
        }
    )

    return CaseStudy(
        name="rigid-body",
        n=3,
        n_inputs=2,
        actuated_rows=(0, 1),
        closed_loop=field,
        closed_form=closed_form,
        plant=plant,
        feedback=_rot_feedback,
        to_internal=identity,
        from_internal=identity,
        certificate=cert,
        sigmas=(0.01,),
        region=BallRegion(15.0, 3),
        scaling=None,
        embedding_degree=3,
        reference=reference,
        default_x0=(12.0, 0.0, 2.0),
        default_t_end=5.0,
        held_flow=held_flow,
    )


CASE_BUILDERS = {
    "jet-engine": jet_engine,
    "rigid-body": rigid_body,
}
CASE_IDS = tuple(CASE_BUILDERS)


def case_study(name: str) -> CaseStudy:
    """Look up a bundled system by id ("jet-engine" or "rigid-body")."""
    key = str(name).strip().lower().replace("_", "-").replace(" ", "-")
    builder = CASE_BUILDERS.get(key)
    if builder is None:
        raise ConfigError(
            f"unknown system id {name!r}; available: {', '.join(CASE_IDS)}"
        )
    return builder()


@lru_cache(maxsize=None)
def _embedded_cached(name: str) -> HomogenizedSystem:
    case = case_study(name)
    return homogenize(case.closed_loop, case.embedding_degree)


# ---------------------------------------------------------------------------
# Dwell-time pipelines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DwellReport:
    """Result of one dwell-time computation, with its intermediates."""

    system: str
    sigma: float
    c: float
    region_label: str
    h_max: float
    g_max: float
    h_arg: tuple
    g_arg: tuple
    tau: TauStar
    elapsed_s: float

    def lines(self):
        def vec(v) -> str:
            return "[" + ", ".join(repr(float(c)) for c in v) + "]"

        hx, he = self.h_arg
        gx, ge = self.g_arg
        return [
            f"system:       {self.system}",
            f"sigma:        {self.sigma!r}   (c = {self.c!r})",
            f"region:       {self.region_label}",
            f"Hmax:         {self.h_max!r}   at x={vec(hx)} e={vec(he)}",
            f"Gmax:         {self.g_max!r}   at x={vec(gx)} e={vec(ge)}",
            f"dwell time:   {self.tau.value!r} s   [{self.tau.method}]",
        ]


def _run_pipeline(
    case: CaseStudy,
    field,
    xi: DegreeFunction,
    sigma: float,
    region,
    region_label: str,
    e_mask=None,
    seed: int = 0,
    count: int = 4096,
) -> DwellReport:
    cert = case.with_sigma(sigma)
    start = time.perf_counter()
    res = maximize_norms(
        field, xi, 1.0, cert, region=region, e_mask=e_mask, count=count, seed=seed
    )
    tau = tau_star(res.h_max, res.g_max, cert.c)
    return DwellReport(
        system=case.name,
        sigma=float(sigma),
        c=cert.c,
        region_label=region_label,
        h_max=res.h_max,
        g_max=res.g_max,
        h_arg=(tuple(res.h_arg[0]), tuple(res.h_arg[1])),
        g_arg=(tuple(res.g_arg[0]), tuple(res.g_arg[1])),
        tau=tau,
        elapsed_s=time.perf_counter() - start,
    )


def dwell_time_pipeline(
    case: CaseStudy,
    sigma: Optional[float] = None,
    region=None,
    region_label: Optional[str] = None,
    seed: int = 0,
    count: int = 4096,
) -> DwellReport:
    """Sphere dwell time for the ambient loop: norm maximization + crossing.

    Maximizes the weighted Jacobian norms of the injected loop over the
    operation region (times the trigger's error cone), then evaluates the
    guaranteed time for the error ratio to climb from 0 to c.  Uses the
    loop's scaling degree when it has one, plain Jacobians otherwise.
    """
    sigma = case.certificate.sigma if sigma is None else float(sigma)
    if region is None:
        region = case.region
        region_label = region_label or f"ball({case.region.radius})"
    region_label = region_label or type(region).__name__
    xi = case.scaling.xi if case.scaling is not None else DegreeFunction.constant(0.0)
    return _run_pipeline(
        case, case.closed_loop, xi, sigma, region, region_label, seed=seed, count=count
    )


def embedded_dwell_time_pipeline(
    case: CaseStudy,
    sigma: Optional[float] = None,
    kind: str = "sections",
    seed: int = 0,
    count: int = 4096,
) -> DwellReport:
    """Reference dwell time for the embedded loop over the lifted region.

    The embedded field is homogeneous of constant degree l-1, so the
    weighted-Jacobian machinery runs with that constant degree; the error
    cone applies to the ambient coordinates only (the scale coordinate is
    exact, never measured).
    """
    if case.embedding_degree is None:
        raise ConfigError(f"system {case.name!r} has no embedded form")
    sigma = case.certificate.sigma if sigma is None else float(sigma)
    hs = case.embedded()
    region = case.lifted_region(kind)
    xi = DegreeFunction.constant(float(case.embedding_degree - 1))
    return _run_pipeline(
        case,
        hs.field,
        xi,
        sigma,
        region,
        f"lifted-{kind}",
        e_mask=list(range(case.n)),
        seed=seed,
        count=count,
    )


# ---------------------------------------------------------------------------
# Default policies
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _cached_report(name: str, sigma: float, kind: str) -> DwellReport:
    case = case_study(name)
    if kind == "ambient":
        return dwell_time_pipeline(case, sigma=sigma)
    return embedded_dwell_time_pipeline(case, sigma=sigma, kind=kind)


def cached_dwell_report(
    case: CaseStudy, sigma: Optional[float] = None, kind: str = "ambient"
) -> DwellReport:
    """Memoized default-configuration pipeline run (deterministic seeding)."""
    sigma = case.certificate.sigma if sigma is None else float(sigma)
    return _cached_report(case.name, sigma, kind)


def self_trigger_policy(case: CaseStudy, sigma: Optional[float] = None):
    """Default self-trigger policy for a bundled system.

    Compressor loop: scaling-flow transport of the pipeline-computed sphere
    dwell time (computed values land within the acceptance tolerance of the
    reference ones, so the computed value is authoritative).  Rotation loop:
    embedding power law with the *reference* dwell time -- its soundness is
    enforced empirically against the event oracle by the validation suite,
    while the pipeline-computed value is reported alongside by the CLI.
    """
    if case.scaling is not None:
        sig = case.certificate.sigma if sigma is None else float(sigma)
        value = cached_dwell_report(case, sig).tau.value
        return SelfTrigHomog(
            tau_star=value,
            d_gamma=case.region.radius,
            xi=case.scaling.xi,
            r=case.scaling.r,
        )
    return SelfTrigPoly(
        tau_tilde_star=float(case.reference["tau_tilde_star"]),
        l=case.embedding_degree,
        r_ref=1.0,
    )


def periodic_policy(case: CaseStudy, sigma: Optional[float] = None) -> Periodic:
    """Stabilizing fixed period: the worst-case self-trigger time.

    For the compressor loop the transported dwell time attains its minimum
    (= the sphere value) on the operation boundary, so the period equals
    the pipeline dwell time for the requested sigma.  For the rotation loop
    the reference sphere dwell time is used, matching the comparison run
    the reference execution counts come from.
    """
    if case.scaling is not None:
        sig = case.certificate.sigma if sigma is None else float(sigma)
        return Periodic(period=cached_dwell_report(case, sig).tau.value)
    return Periodic(period=float(case.reference["tau_star"]))
