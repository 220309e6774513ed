"""Degree-raising embeddings of polynomial sampled-data loops.

A polynomial loop whose rows mix several total degrees has no single
scaling exponent, so trigger times computed at one state say nothing about
other states.  This module restores a scaling law by embedding: an extra
held coordinate ``w`` (constant along every trajectory, measured with the
rest of the state) pads each monomial with the power of ``w`` needed to
bring every term to one exact total degree ``l``.  Restricting to ``w = 1``
reproduces the original loop, so the embedding changes nothing about the
closed-loop behaviour being analysed.

The payoff is the transport law of the uniform scaling flow: for the
embedded loop, inter-execution times measured at ``lam * z`` equal
``lam**-(l-1)`` times the time at ``z``.  One reference dwell time computed
on a sphere of the lifted space therefore yields a state-dependent dwell
time everywhere via :func:`scaled_dwell_time`.  Invariant sets of the
original sampled loop transport to the lifted space two ways: a single-scale
embedded copy via :func:`lift_invariant_set` (exact invariance semantics),
and a scale-windowed cone section via :func:`lifted_scale_window` (a search
region for norm maximization).  :func:`check_phi_related` verifies by dual
integration that the embedding intertwines the held-measurement extended
flows, which is what licenses the time transport in the first place.
"""

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidLambda, NotPolynomial
from .fields import ErrorExtendedSystem, Monomial, PolyField, StateField
from .integrate import integrate
from .linbound import ScaledEmbeddingRegion

__all__ = [
    "HomogenizedSystem",
    "LiftedInvariantSet",
    "check_phi_related",
    "homogenize",
    "lift_invariant_set",
    "lifted_scale_window",
    "max_monomial_degree",
    "scaled_dwell_time",
]


def max_monomial_degree(field) -> int:
    """Largest joint total degree (state + error exponents) of any monomial."""
    comps = getattr(field, "components", None)
    if comps is None:
        raise NotPolynomial(
            "degree-raising needs explicit monomial components; "
            f"{type(field).__name__} provides none"
        )
    degrees = [m.total_degree for comp in comps for m in comp]
    return max(degrees) if degrees else 0


@dataclass
class HomogenizedSystem:
    """A polynomial loop embedded at one exact total degree.

    ``field`` lives on ``n + 1`` states: the plant state followed by the
    held scale coordinate, whose own row is identically zero.  Error
    exponents carry over unchanged (the scale coordinate's measurement
    error is retained as a variable but never enters any row, and it stays
    at zero along executions because the coordinate it measures is
    constant).
    """

    plant: PolyField
    degree: int
    field: PolyField
    _extended: Optional[ErrorExtendedSystem] = dc_field(
        default=None, repr=False, compare=False
    )
    _original: Optional[ErrorExtendedSystem] = dc_field(
        default=None, repr=False, compare=False
    )

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def l(self) -> int:
        """The single total degree every embedded monomial carries."""
        return self.degree

    @property
    def extended(self) -> ErrorExtendedSystem:
        if self._extended is None:
            self._extended = ErrorExtendedSystem(self.field)
        return self._extended

    @property
    def original(self) -> ErrorExtendedSystem:
        """Held-measurement extension of the un-embedded loop."""
        if self._original is None:
            self._original = ErrorExtendedSystem(self.plant)
        return self._original

    def embed(self, x, w: float = 1.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, [float(w)]])

    def embed_extended(self, x, w: float = 1.0) -> np.ndarray:
        """Lifted state paired with a fresh (zero) measurement error."""
        z = self.embed(x, w)
        return np.concatenate([z, np.zeros_like(z)])

    def phi(self, x, e=None) -> np.ndarray:
        """Embed an (x, e) pair of the original extended loop at unit scale.

        The image is (x, 1, e, 0): the scale coordinate enters at 1 and its
        measurement error at 0, so evaluating the lifted extended field on
        the image reproduces the original extended field padded with zero
        rows.
        """
        x = np.asarray(x, dtype=float)
        e = np.zeros_like(x) if e is None else np.asarray(e, dtype=float)
        return np.concatenate([x, [1.0], e, [0.0]])

    def output_ratio(self, zy) -> float:
        """Trigger ratio |e|/|x| of a lifted extended state.

        Only the coordinates inherited from the plant enter: the scale
        coordinate and its (identically zero) error are excluded, so the
        ratio agrees with the original loop's ratio through the embedding.
        """
        zy = np.asarray(zy, dtype=float)
        n = self.n
        nx = float(np.linalg.norm(zy[:n]))
        if nx == 0.0:
            raise ZeroDivisionError("trigger ratio undefined at |x| = 0")
        return float(np.linalg.norm(zy[n + 1 : 2 * n + 1])) / nx

    def scaling_residual(self, z, lam: float, e=None) -> float:
        """Relative defect of eval(lam*z, lam*e) against lam**l * eval(z, e)."""
        z = np.asarray(z, dtype=float)
        e = np.zeros_like(z) if e is None else np.asarray(e, dtype=float)
        lhs = self.field.eval(lam * z, lam * e)
        rhs = lam**self.degree * self.field.eval(z, e)
        return float(
            np.linalg.norm(lhs - rhs) / max(1.0, np.linalg.norm(rhs))
        )

    def flow_projection_residual(
        self, x, t: float, rtol: float = 1e-10, atol: float = 1e-12
    ) -> float:
        """Relative gap between the plant flow and the unit-scale lifted flow."""
        x = np.asarray(x, dtype=float)
        base = integrate(
            StateField.from_closed_loop(self.plant), x, (0.0, t), rtol, atol
        ).y_end
        lifted = integrate(
            StateField.from_closed_loop(self.field),
            self.embed(x),
            (0.0, t),
            rtol,
            atol,
        ).y_end
        gap = np.linalg.norm(lifted[: self.n] - base)
        gap = max(gap, abs(lifted[self.n] - 1.0))
        return float(gap / max(1.0, np.linalg.norm(base)))

    def dwell_time(self, x, tau_ref: float, r_ref: float = 1.0) -> float:
        return scaled_dwell_time(x, tau_ref, self.degree, r_ref)


def homogenize(field, degree: int) -> HomogenizedSystem:
    """Embed a polynomial loop at one exact total degree.

    Every monomial of joint degree ``d`` gains a factor ``w**(degree - d)``
    on the new trailing state coordinate ``w``, and a zero row is appended
    for ``w`` itself.  Raises :class:`NotPolynomial` when the field carries
    no monomial representation, and ``ValueError`` when ``degree`` is below
    the largest degree already present (negative powers would be needed).
    """
    top = max_monomial_degree(field)
    degree = int(degree)
    if degree < 1 or degree < top:
        raise ValueError(
            f"target degree {degree} cannot absorb monomials of degree {top}"
        )
    for comp in field.components:
        for m in comp:
            if m.w_exp:
                raise ValueError(
                    "rows already use the scalar parameter channel; "
                    "embed the original loop instead"
                )
    n = field.n
    rows = []
    for comp in field.components:
        rows.append(
            [
                Monomial(
                    m.coeff,
                    (*m.x_exps, degree - m.total_degree),
                    (*m.e_exps, 0),
                )
                for m in comp
            ]
        )
    rows.append([])
    return HomogenizedSystem(plant=field, degree=degree, field=PolyField(n + 1, rows))


def scaled_dwell_time(x, tau_ref: float, degree: int, r_ref: float = 1.0) -> float:
    """Transport a reference dwell time to the plant state ``x``.

    ``tau_ref`` is an inter-execution time measured on the sphere of radius
    ``r_ref`` in the lifted space.  The state embeds at ``(x, 1)``; pulling
    it onto that sphere scales time by ``lam**(degree - 1)`` with
    ``lam = r_ref / sqrt(1 + |x|**2)``.
    """
    if not tau_ref > 0.0:
        raise ValueError("reference dwell time must be positive")
    if int(degree) < 1:
        raise ValueError("degree must be a positive integer")
    if not r_ref > 0.0:
        raise ValueError("reference radius must be positive")
    x = np.asarray(x, dtype=float)
    lam = r_ref / np.sqrt(1.0 + float(x @ x))
    return float(lam ** (int(degree) - 1) * tau_ref)


def check_phi_related(hs: HomogenizedSystem, z0, t: float,
                      rtol: float = 1e-10, atol: float = 1e-12) -> float:
    """Residual of the unit-scale embedding against both extended flows.

    ``z0`` is a state of the original extended loop, the concatenation
    (x0, e0).  Two independent integrations are compared: the original
    extended flow advanced from ``z0`` and then embedded, versus the lifted
    extended flow advanced from the embedding of ``z0``.  The returned
    residual is the Euclidean gap between the two endpoints, plus the gap
    between the trigger ratios computed on either side of the embedding
    (algebraically zero; included so the check covers the output map too).
    """
    z0 = np.asarray(z0, dtype=float)
    n = hs.n
    if z0.shape != (2 * n,):
        raise ValueError(f"expected extended state of dimension {2 * n}")
    x0, e0 = z0[:n], z0[n:]
    eta_gap = 0.0
    if np.linalg.norm(x0) > 0.0:
        eta_gap = abs(hs.output_ratio(hs.phi(x0, e0)) - hs.original.eta(z0))
    if t == 0.0:
        return float(eta_gap)
    z_end = integrate(
        StateField.from_extended(hs.original), z0, (0.0, float(t)), rtol, atol
    ).y_end
    y_end = integrate(
        StateField.from_extended(hs.extended),
        hs.phi(x0, e0),
        (0.0, float(t)),
        rtol,
        atol,
    ).y_end
    gap = float(np.linalg.norm(hs.phi(z_end[:n], z_end[n:]) - y_end))
    return max(gap, float(eta_gap))


@dataclass(frozen=True)
class LiftedInvariantSet:
    """Single-scale embedded copy of an invariant set of the sampled loop.

    The member points are (lam*x, lam, lam*e, 0) for (x, e) in the base set;
    membership of a lifted point therefore reduces exactly to membership of
    the rescaled (x, e) pair in the base set plus the two structural
    equalities w = lam and e_w = 0 (checked to ``tol``).  ``base`` is a
    margin function on (x, e) pairs: nonnegative inside the set, with
    magnitude meaningful as a distance proxy.  Because the scale coordinate
    is a first integral of the lifted extended flow and that flow commutes
    with uniform scaling, invariance of the base set transports to the lift.
    """

    base: Callable
    lam: float
    tol: float = 1e-9

    def __post_init__(self):
        if not self.lam > 0.0:
            raise InvalidLambda(f"lift scale must be positive, got {self.lam}")

    def embed(self, x, e=None) -> np.ndarray:
        """Lifted image (lam*x, lam, lam*e, 0) of a base pair."""
        x = np.asarray(x, dtype=float)
        e = np.zeros_like(x) if e is None else np.asarray(e, dtype=float)
        return np.concatenate([self.lam * x, [self.lam], self.lam * e, [0.0]])

    def split(self, zy):
        """(x-part, w, e-part, e_w) of a lifted extended state."""
        zy = np.asarray(zy, dtype=float)
        n = (zy.size - 2) // 2
        return zy[:n], float(zy[n]), zy[n + 1 : 2 * n + 1], float(zy[2 * n + 1])

    def margin(self, zy) -> float:
        """Base margin of the rescaled pair; -inf if the structure is broken."""
        x, w, e, e_w = self.split(zy)
        if abs(w - self.lam) > self.tol * max(1.0, self.lam) or abs(e_w) > self.tol:
            return float("-inf")
        return float(self.base(x / self.lam, e / self.lam))

    def contains(self, zy) -> bool:
        return self.margin(zy) >= 0.0


def lift_invariant_set(base: Callable, lam: float) -> LiftedInvariantSet:
    """Embed an invariant set of the sampled loop at one fixed scale.

    ``base`` is the margin function of the set on (x, e) pairs (nonnegative
    inside).  Raises :class:`InvalidLambda` for nonpositive scales.
    """
    return LiftedInvariantSet(base=base, lam=float(lam))


def lifted_scale_window(base, lam_hi: float, lam_lo: float = 0.0):
    """Scale-windowed lift of a state region, for norm maximization.

    Points ``(lam * x, lam)`` for ``x`` in the base region and
    ``lam in (lam_lo, lam_hi]``: the union of the single-scale lifts over
    the window, projected to the (state, scale) coordinates that the
    weighted-Jacobian machinery searches over.
    """
    lam_hi = float(lam_hi)
    lam_lo = float(lam_lo)
    if not (0.0 <= lam_lo < lam_hi):
        raise InvalidLambda(
            f"need 0 <= lam_lo < lam_hi, got ({lam_lo}, {lam_hi}]"
        )
    return ScaledEmbeddingRegion(base, lam_hi, lam_lo=lam_lo)
