"""Closed-loop vector fields with measurement error, and stability certificates.

State convention: the plant state is x (dim n), the measurement error is
e(t) = x(t_i) - x(t) which resets to zero at each controller execution, and
the closed loop is dx/dt = fhat(x, e).  Polynomial fields carry an optional
auxiliary variable w (constant along trajectories) used by the homogenization
machinery; evaluating at w=1 recovers the original field.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidCertificate, NumericOverflow

__all__ = [
    "Monomial",
    "PolyField",
    "GeneralField",
    "ErrorExtendedSystem",
    "StabilityCertificate",
    "StateField",
    "eval_closed_loop",
    "eval_extended",
    "trigger_ratio",
    "eval_lyapunov",
    "eval_vdot_bound",
    "inject_measurement",
    "quadratic_form_monomials",
    "sphere_directions",
]


@dataclass(frozen=True)
class Monomial:
    """coeff * prod(x_k^x_exps[k]) * prod(e_k^e_exps[k]) * w^w_exp."""

    coeff: float
    x_exps: tuple
    e_exps: tuple
    w_exp: int = 0

    def __post_init__(self):
        if len(self.x_exps) != len(self.e_exps):
            raise ValueError("x_exps and e_exps must have equal length")
        for k in (*self.x_exps, *self.e_exps, self.w_exp):
            if not isinstance(k, (int, np.integer)) or k < 0:
                raise ValueError("exponents must be nonnegative integers")

    @property
    def total_degree(self) -> int:
        return sum(self.x_exps) + sum(self.e_exps) + self.w_exp

    def eval(self, x, e, w: float = 1.0) -> float:
        v = self.coeff
        for xi, r in zip(x, self.x_exps):
            if r:
                v *= xi**r
        for ei, s in zip(e, self.e_exps):
            if s:
                v *= ei**s
        if self.w_exp:
            v *= w**self.w_exp
        return v

    def to_dict(self) -> dict:
        return {
            "coeff": self.coeff,
            "x_exps": list(self.x_exps),
            "e_exps": list(self.e_exps),
            "w_exp": self.w_exp,
        }

    @staticmethod
    def from_dict(d: dict) -> "Monomial":
        return Monomial(
            coeff=float(d["coeff"]),
            x_exps=tuple(int(k) for k in d["x_exps"]),
            e_exps=tuple(int(k) for k in d["e_exps"]),
            w_exp=int(d.get("w_exp", 0)),
        )


def _comp_tables(comp: Sequence[Monomial], n: int):
    """Vectorized (coeff, x-exponent, e-exponent, w-exponent) arrays."""
    if not comp:
        return (np.empty(0), np.empty((0, n), int), np.empty((0, n), int), np.empty(0, int))
    C = np.array([m.coeff for m in comp])
    XE = np.array([m.x_exps for m in comp], dtype=int)
    EE = np.array([m.e_exps for m in comp], dtype=int)
    W = np.array([m.w_exp for m in comp], dtype=int)
    return (C, XE, EE, W)


def _table_eval(tbl, x, e, w: float) -> float:
    C, XE, EE, W = tbl
    if C.size == 0:
        return 0.0
    vals = C * np.prod(x[None, :] ** XE, axis=1) * np.prod(e[None, :] ** EE, axis=1)
    if W.any():
        vals = vals * w ** W
    return float(vals.sum())


def _table_eval_many(tbl, X, E, w) -> np.ndarray:
    """Evaluate one component table at a batch of points: X, E are (B, n)."""
    C, XE, EE, W = tbl
    B = X.shape[0]
    if C.size == 0:
        return np.zeros(B)
    vals = C[None, :] * np.prod(X[:, None, :] ** XE[None, :, :], axis=2)
    if EE.any():
        vals = vals * np.prod(E[:, None, :] ** EE[None, :, :], axis=2)
    if W.any():
        vals = vals * np.asarray(w).reshape(-1, 1) ** W[None, :]
    return vals.sum(axis=1)


def _diff_tables(comp: Sequence[Monomial], n: int, which: str):
    """Derivative tables d(component)/d(var_j) for j = 0..n-1."""
    out = []
    for j in range(n):
        mons = []
        for m in comp:
            exps = m.x_exps if which == "x" else m.e_exps
            r = exps[j]
            if r == 0:
                continue
            if which == "x":
                mons.append(
                    Monomial(
                        m.coeff * r,
                        m.x_exps[:j] + (r - 1,) + m.x_exps[j + 1 :],
                        m.e_exps,
                        m.w_exp,
                    )
                )
            else:
                mons.append(
                    Monomial(
                        m.coeff * r,
                        m.x_exps,
                        m.e_exps[:j] + (r - 1,) + m.e_exps[j + 1 :],
                        m.w_exp,
                    )
                )
        out.append(_comp_tables(mons, n))
    return out


def _merge(mons: Sequence[Monomial]) -> tuple:
    """Combine duplicate exponent patterns and drop zero coefficients."""
    acc = {}
    for m in mons:
        key = (m.x_exps, m.e_exps, m.w_exp)
        acc[key] = acc.get(key, 0.0) + m.coeff
    out = [
        Monomial(c, xk, ek, wk)
        for (xk, ek, wk), c in acc.items()
        if c != 0.0
    ]
    out.sort(key=lambda m: (m.total_degree, m.x_exps, m.e_exps, m.w_exp))
    return tuple(out)


class PolyField:
    """Polynomial closed loop: one monomial list per state component.

    l is the maximum total monomial degree across all components; the
    homogenized form of the field multiplies each degree-m monomial by
    w^(l-m), so evaluation at w=1 always reproduces the original field.
    """

    def __init__(self, n: int, components: Sequence[Sequence[Monomial]]):
        if len(components) != n:
            raise ValueError("need one monomial list per component")
        comps = []
        for comp in components:
            for m in comp:
                if len(m.x_exps) != n:
                    raise ValueError("monomial arity does not match dimension")
            comps.append(_merge(comp))
        self.n = n
        self.components = tuple(comps)
        degrees = [m.total_degree for comp in self.components for m in comp]
        self.l = max(degrees) if degrees else 0
        self._tables = tuple(_comp_tables(comp, n) for comp in self.components)
        self._dx_tables = None
        self._de_tables = None

    # -- evaluation ---------------------------------------------------------

    def eval(self, x, e=None, w: float = 1.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = np.zeros(self.n) if e is None else np.asarray(e, dtype=float)
        out = np.empty(self.n)
        with np.errstate(over="ignore", invalid="ignore"):
            for i, tbl in enumerate(self._tables):
                out[i] = _table_eval(tbl, x, e, w)
        if not np.all(np.isfinite(out)):
            raise NumericOverflow(f"polynomial field non-finite at x={x}, e={e}")
        return out

    def _jac(self, x, e, w, which: str) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = np.zeros(self.n) if e is None else np.asarray(e, dtype=float)
        if which == "x":
            if self._dx_tables is None:
                self._dx_tables = [
                    _diff_tables(comp, self.n, "x") for comp in self.components
                ]
            tables = self._dx_tables
        else:
            if self._de_tables is None:
                self._de_tables = [
                    _diff_tables(comp, self.n, "e") for comp in self.components
                ]
            tables = self._de_tables
        J = np.empty((self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                J[i, j] = _table_eval(tables[i][j], x, e, w)
        return J

    def jac_x(self, x, e=None, w: float = 1.0) -> np.ndarray:
        return self._jac(x, e, w, "x")

    def jac_e(self, x, e=None, w: float = 1.0) -> np.ndarray:
        return self._jac(x, e, w, "e")

    def _jac_many(self, X, E, w, which: str) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        E = np.zeros_like(X) if E is None else np.asarray(E, dtype=float)
        self._jac(X[0], E[0], 1.0, which)  # populate the derivative cache
        tables = self._dx_tables if which == "x" else self._de_tables
        J = np.empty((X.shape[0], self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                J[:, i, j] = _table_eval_many(tables[i][j], X, E, w)
        return J

    def jac_x_many(self, X, E=None, w=1.0) -> np.ndarray:
        """Batched jac_x: (B, n, n) for point arrays of shape (B, n)."""
        return self._jac_many(X, E, w, "x")

    def jac_e_many(self, X, E=None, w=1.0) -> np.ndarray:
        return self._jac_many(X, E, w, "e")

    def dw(self, x, e=None, w: float = 1.0) -> np.ndarray:
        """Partial derivative of each component with respect to w."""
        x = np.asarray(x, dtype=float)
        e = np.zeros(self.n) if e is None else np.asarray(e, dtype=float)
        out = np.zeros(self.n)
        for i, comp in enumerate(self.components):
            dmons = [
                Monomial(m.coeff * m.w_exp, m.x_exps, m.e_exps, m.w_exp - 1)
                for m in comp
                if m.w_exp
            ]
            out[i] = _table_eval(_comp_tables(dmons, self.n), x, e, w)
        return out

    @property
    def is_polynomial(self) -> bool:
        return True

    def uses_w(self) -> bool:
        return any(m.w_exp for comp in self.components for m in comp)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "components": [[m.to_dict() for m in comp] for comp in self.components],
        }

    @staticmethod
    def from_dict(d: dict) -> "PolyField":
        return PolyField(
            int(d["n"]),
            [[Monomial.from_dict(m) for m in comp] for comp in d["components"]],
        )


class GeneralField:
    """Closed-form (not necessarily polynomial) closed loop fhat(x, e).

    Jacobians fall back to central finite differences with step
    1e-6 * max(1, |x|) when analytic maps are not supplied.
    """

    is_polynomial = False

    def __init__(
        self,
        n: int,
        fn: Callable,
        jac_x: Optional[Callable] = None,
        jac_e: Optional[Callable] = None,
    ):
        self.n = n
        self._fn = fn
        self._jac_x = jac_x
        self._jac_e = jac_e

    def eval(self, x, e=None, w: float = 1.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = np.zeros(self.n) if e is None else np.asarray(e, dtype=float)
        out = np.asarray(self._fn(x, e), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NumericOverflow(f"field non-finite at x={x}, e={e}")
        return out

    def _fd(self, x, e, which: str) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        h = 1e-6 * max(1.0, float(np.linalg.norm(x)))
        J = np.empty((self.n, self.n))
        for j in range(self.n):
            dp = np.zeros(self.n)
            dp[j] = h
            if which == "x":
                fp, fm = self._fn(x + dp, e), self._fn(x - dp, e)
            else:
                fp, fm = self._fn(x, e + dp), self._fn(x, e - dp)
            J[:, j] = (np.asarray(fp) - np.asarray(fm)) / (2 * h)
        return J

    def jac_x(self, x, e=None, w: float = 1.0) -> np.ndarray:
        e = np.zeros(self.n) if e is None else e
        if self._jac_x is not None:
            return np.asarray(self._jac_x(np.asarray(x, float), np.asarray(e, float)))
        return self._fd(x, e, "x")

    def jac_e(self, x, e=None, w: float = 1.0) -> np.ndarray:
        e = np.zeros(self.n) if e is None else e
        if self._jac_e is not None:
            return np.asarray(self._jac_e(np.asarray(x, float), np.asarray(e, float)))
        return self._fd(x, e, "e")


class ErrorExtendedSystem:
    """2n-dimensional field Z(x, e) = (fhat(x, e), -fhat(x, e)).

    The e-block is the exact negation of the x-block: both are produced from
    one evaluation, so antisymmetry is bitwise.  The output ratio
    eta(z) = |e|/|x| drives the execution rule.
    """

    def __init__(self, base):
        self.base = base
        self.n = base.n

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[: self.n], z[self.n :]

    def eval(self, z) -> np.ndarray:
        x, e = self.split(z)
        f = self.base.eval(x, e)
        return np.concatenate([f, -f])

    def eval_xe(self, x, e) -> np.ndarray:
        return self.base.eval(x, e)

    def eta(self, z) -> float:
        x, e = self.split(z)
        nx = float(np.linalg.norm(x))
        if nx == 0.0:
            raise ZeroDivisionError("eta undefined at |x| = 0")
        return float(np.linalg.norm(e)) / nx

    def as_ode(self) -> Callable:
        return lambda t, z: self.eval(z)


class StateField:
    """A plain vector field over one state vector (no error split).

    Used by the homogeneity and commutation machinery, where x may itself be
    an extended state.  jac falls back to central finite differences.
    """

    def __init__(self, n: int, fn: Callable, jac: Optional[Callable] = None):
        self.n = n
        self.fn = fn
        self._jac = jac

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def jac(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._jac is not None:
            return np.asarray(self._jac(x), dtype=float)
        h = 1e-6 * max(1.0, float(np.linalg.norm(x)))
        J = np.empty((self.n, self.n))
        for j in range(self.n):
            dp = np.zeros(self.n)
            dp[j] = h
            J[:, j] = (self(x + dp) - self(x - dp)) / (2 * h)
        return J

    @staticmethod
    def from_closed_loop(f, freeze_e: bool = True) -> "StateField":
        """State-space view of a closed loop with e frozen at zero."""
        zero = np.zeros(f.n)
        return StateField(
            f.n,
            lambda x: f.eval(x, zero),
            jac=lambda x: f.jac_x(x, zero),
        )

    @staticmethod
    def from_extended(sys: ErrorExtendedSystem) -> "StateField":
        """The 2n-dimensional extended field as a single-state field."""

        def jac(z):
            x, e = sys.split(z)
            jx = sys.base.jac_x(x, e)
            je = sys.base.jac_e(x, e)
            top = np.hstack([jx, je])
            return np.vstack([top, -top])

        return StateField(2 * sys.n, sys.eval, jac=jac)


# ---------------------------------------------------------------------------
# spec operations


def eval_closed_loop(f, x, e) -> np.ndarray:
    """dx/dt = fhat(x, e); raises NumericOverflow outside the finite range."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    if x.shape != e.shape or x.shape != (f.n,):
        raise ValueError(f"expected state and error of dimension {f.n}")
    return f.eval(x, e)


def eval_extended(sys: ErrorExtendedSystem, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (2 * sys.n,):
        raise ValueError(f"expected extended state of dimension {2 * sys.n}")
    return sys.eval(z)


def inject_measurement(components: Sequence[Sequence[Monomial]], rows=None):
    """Substitute x_k -> x_k + e_k in the selected rows of an x-only polynomial.

    rows=None injects every row; a set of row indices injects only those
    (feedback-driven channels), leaving the rest as pure x-monomials.
    Returns new component lists.
    """
    out = []
    for i, comp in enumerate(components):
        if rows is not None and i not in rows:
            out.append(tuple(comp))
            continue
        mons = []
        for m in comp:
            if any(m.e_exps):
                raise ValueError("inject_measurement expects x-only monomials")
            ranges = [range(r + 1) for r in m.x_exps]
            for js in itertools.product(*ranges):
                coeff = m.coeff
                for r, j in zip(m.x_exps, js):
                    coeff *= math.comb(r, j)
                mons.append(
                    Monomial(
                        coeff,
                        tuple(js),
                        tuple(r - j for r, j in zip(m.x_exps, js)),
                        m.w_exp,
                    )
                )
        out.append(_merge(mons))
    return out


def quadratic_form_monomials(P) -> tuple:
    """Monomials of x^T P x for a symmetric matrix P."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    mons = []
    for i in range(n):
        for j in range(i, n):
            c = P[i, i] if i == j else P[i, j] + P[j, i]
            if c == 0.0:
                continue
            xe = [0] * n
            xe[i] += 1
            xe[j] += 1
            mons.append(Monomial(float(c), tuple(xe), (0,) * n, 0))
    return tuple(mons)


def sphere_directions(n: int, count: int) -> np.ndarray:
    """Deterministic unit directions: uniform angles (n=2) or a Fibonacci
    lattice (n=3); golden-ratio low-discrepancy fallback otherwise."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        k = np.arange(count) + 0.5
        phi = np.arccos(1 - 2 * k / count)
        golden = np.pi * (1 + 5**0.5)
        th = golden * k
        return np.stack(
            [np.sin(phi) * np.cos(th), np.sin(phi) * np.sin(th), np.cos(phi)], axis=1
        )
    rng = np.random.default_rng(0)
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass
class StabilityCertificate:
    """Lyapunov polynomial V plus dissipation normal form.

    degree=4: dV/dt <= -p|x|^4 + q|x|^2|e|^2 (both bundled case studies);
    degree=2: dV/dt <= -p|x|^2 + q|e|^2.
    Enforcing |e| <= c|x| with c = sigma*sqrt(p/q) then gives
    dV/dt <= (sigma^2 - 1) p |x|^degree < 0 away from the origin.
    """

    v_monomials: tuple
    p: float
    q: float
    sigma: float
    degree: int = 4
    omega_level: Optional[float] = None
    gamma_radius: Optional[float] = None
    alpha_envelope: Optional[tuple] = None  # optional class-K envelope params
    _n: int = dc_field(init=False, repr=False, default=0)

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise InvalidCertificate("dissipation coefficients must be positive")
        if not (0.0 < self.sigma < 1.0):
            raise InvalidCertificate("sigma must lie in (0, 1)")
        if self.degree not in (2, 4):
            raise InvalidCertificate("degree parameter must be 2 or 4")
        if not self.v_monomials:
            raise InvalidCertificate("V needs at least one monomial")
        self._n = len(self.v_monomials[0].x_exps)
        self._v_table = _comp_tables(self.v_monomials, self._n)
        self._g_tables = _diff_tables(self.v_monomials, self._n, "x")
        if self.omega_level is not None and self.gamma_radius is not None:
            self.check_ball_in_sublevel()

    @property
    def n(self) -> int:
        return self._n

    @property
    def c(self) -> float:
        return self.sigma * math.sqrt(self.p / self.q)

    def eval_v(self, x) -> float:
        x = np.asarray(x, dtype=float)
        zero = np.zeros(self._n)
        return _table_eval(self._v_table, x, zero, 1.0)

    def grad_v(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        zero = np.zeros(self._n)
        return np.array(
            [_table_eval(t, x, zero, 1.0) for t in self._g_tables]
        )

    def vdot_bound(self, norm_x: float, norm_e: float) -> float:
        if self.degree == 4:
            return -self.p * norm_x**4 + self.q * norm_x**2 * norm_e**2
        return -self.p * norm_x**2 + self.q * norm_e**2

    def max_v_on_sphere(self, radius: float, directions: int = 2048) -> float:
        """Dense sphere sampling plus projected-gradient refinement."""
        best = -math.inf
        best_u = None
        for u in sphere_directions(self._n, directions):
            v = self.eval_v(radius * u)
            if v > best:
                best, best_u = v, u
        # local refinement: gradient ascent projected back to the sphere
        u = best_u.copy()
        step = 0.1
        for _ in range(200):
            g = self.grad_v(radius * u) * radius
            g_t = g - np.dot(g, u) * u  # tangential part
            if np.linalg.norm(g_t) < 1e-14:
                break
            cand = u + step * g_t / max(np.linalg.norm(g_t), 1e-300)
            cand /= np.linalg.norm(cand)
            v = self.eval_v(radius * cand)
            if v > best:
                best, u = v, cand
            else:
                step *= 0.5
                if step < 1e-12:
                    break
        return best

    def check_ball_in_sublevel(self):
        if self.gamma_radius is None or self.omega_level is None:
            return
        if not self.gamma_radius > 0:
            raise InvalidCertificate("gamma radius must be positive")
        worst = self.max_v_on_sphere(self.gamma_radius)
        if worst > self.omega_level * (1 + 1e-9):
            raise InvalidCertificate(
                f"ball of radius {self.gamma_radius} leaves the sublevel set: "
                f"max V = {worst} > {self.omega_level}"
            )

    def largest_ball_radius(self, r_hi: Optional[float] = None, tol: float = 1e-6):
        """Bisect for the largest r with max V on the r-sphere <= omega_level."""
        if self.omega_level is None:
            raise InvalidCertificate("certificate has no sublevel value")
        lo = 0.0
        if r_hi is None:
            r_hi = 1.0
            while self.max_v_on_sphere(r_hi, directions=512) <= self.omega_level:
                r_hi *= 2.0
                if r_hi > 1e9:
                    raise InvalidCertificate("sublevel set appears unbounded")
        hi = r_hi
        while hi - lo > tol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if self.max_v_on_sphere(mid, directions=512) <= self.omega_level:
                lo = mid
            else:
                hi = mid
        return lo


def trigger_ratio(cert: StabilityCertificate) -> float:
    """c = sigma * sqrt(p/q); enforcing |e| <= c|x| keeps dV/dt negative."""
    return cert.c


def eval_lyapunov(cert: StabilityCertificate, x) -> float:
    return cert.eval_v(x)


def eval_vdot_bound(cert: StabilityCertificate, norm_x: float, norm_e: float) -> float:
    return cert.vdot_bound(norm_x, norm_e)
