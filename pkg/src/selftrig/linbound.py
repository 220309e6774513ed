"""Linear surrogate bounds for inter-execution time computation.

The closed loop with measurement error is over-approximated on an operating
region by |d/dt f_i| growth rates captured in two weighted Jacobians,

    H_ij = (r_i / (xi(x) + r_i)) * d f_i / d x_j,
    G_ij = (r_i / (xi(x) + r_i)) * d f_i / d e_j,

whose spectral norms are maximized over the region.  The worst-case ratio
y = |e|/|x| then obeys dy/dt <= (1 + y)(Gmax*y + Hmax), and the time for y to
climb from 0 to the trigger ratio c is a sound lower bound on the true
inter-execution time wherever the approximation chain is valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import EmptyRegion, InvalidThreshold, WeightSingularity
from .fields import StabilityCertificate, sphere_directions
from .integrate import integrate_until_guard

__all__ = [
    "WeightedJacobianPair",
    "NormMaximizationResult",
    "TauStar",
    "BallRegion",
    "LevelSetRegion",
    "ScaledEmbeddingRegion",
    "ScaleSectionRegion",
    "weighted_jacobians",
    "maximize_norms",
    "tau_star",
    "riccati_crossing_time",
]


# --------------------------------------------------------------------------
# operating regions


class BallRegion:
    """Euclidean ball |x| <= radius (the guaranteed-invariant inner region)."""

    def __init__(self, radius: float, dim: int):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.dim = int(dim)

    def describe(self) -> str:
        return f"ball(radius={self.radius}, dim={self.dim})"

    def contains(self, x) -> bool:
        return float(np.linalg.norm(x)) <= self.radius * (1 + 1e-12)

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        nx = float(np.linalg.norm(x))
        if nx <= self.radius:
            return x
        return x * (self.radius / nx)

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        # low-discrepancy points in the cube, rejected into the ball
        sob = qmc.Sobol(self.dim, scramble=True, seed=seed)
        pts = []
        batch = 2 ** int(np.ceil(np.log2(max(2 * count, 8))))
        while len(pts) < count:
            raw = (2 * sob.random(batch) - 1.0) * self.radius
            keep = raw[np.linalg.norm(raw, axis=1) <= self.radius]
            pts.extend(keep)
        return np.asarray(pts[:count])


class LevelSetRegion:
    """Sublevel set {x : v(x) <= level} of a positive-definite polynomial."""

    def __init__(self, v_fn: Callable, level: float, dim: int, bounding_radius: float):
        if level <= 0 or bounding_radius <= 0:
            raise ValueError("level and bounding radius must be positive")
        self.v_fn = v_fn
        self.level = float(level)
        self.dim = int(dim)
        self.bounding_radius = float(bounding_radius)

    def describe(self) -> str:
        return f"sublevel(level={self.level}, dim={self.dim})"

    def contains(self, x) -> bool:
        return float(self.v_fn(np.asarray(x, dtype=float))) <= self.level * (1 + 1e-12)

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.contains(x):
            return x
        # shrink toward the origin; v is increasing along rays from 0
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if float(self.v_fn(mid * x)) <= self.level:
                lo = mid
            else:
                hi = mid
        return lo * x

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        sob = qmc.Sobol(self.dim, scramble=True, seed=seed)
        pts = []
        rounds = 0
        batch = 2 ** int(np.ceil(np.log2(max(4 * count, 8))))
        while len(pts) < count:
            raw = (2 * sob.random(batch) - 1.0) * self.bounding_radius
            keep = raw[[float(self.v_fn(p)) <= self.level for p in raw]]
            pts.extend(keep)
            rounds += 1
            if rounds > 64 and not pts:
                raise EmptyRegion(self.describe())
        return np.asarray(pts[:count])


class ScaledEmbeddingRegion:
    """Scaled copies of an embedded base region.

    Points (lam*x, lam) for x in the base region and lam in (lam_lo, lam_hi]:
    the image of {(x, 1)} under the uniform scaling flow, truncated to a
    scale window.  Used for maximization over lifted (state, scale) spaces.
    """

    def __init__(self, base, lam_hi: float, lam_lo: float = 0.0):
        if not (0 <= lam_lo < lam_hi):
            raise ValueError("need 0 <= lam_lo < lam_hi")
        self.base = base
        self.lam_lo = float(lam_lo)
        self.lam_hi = float(lam_hi)
        self.dim = base.dim + 1

    def describe(self) -> str:
        return (
            f"scaled_embedding(base={self.base.describe()}, "
            f"lam in ({self.lam_lo}, {self.lam_hi}])"
        )

    def contains(self, xw) -> bool:
        xw = np.asarray(xw, dtype=float)
        lam = float(xw[-1])
        if not (self.lam_lo < lam <= self.lam_hi * (1 + 1e-12)):
            return False
        return self.base.contains(xw[:-1] / lam)

    def project(self, xw) -> np.ndarray:
        xw = np.asarray(xw, dtype=float)
        lam = float(np.clip(xw[-1], max(self.lam_lo, 1e-12) * (1 + 1e-9), self.lam_hi))
        x = self.base.project(xw[:-1] / lam)
        return np.concatenate([lam * x, [lam]])

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        xs = self.base.sample(count, seed=seed)
        # low-discrepancy scale ladder, biased toward the top where the
        # lifted field is largest
        batch = 2 ** int(np.ceil(np.log2(max(count, 8))))
        u = qmc.Sobol(1, scramble=True, seed=seed + 1).random(batch)[:count].ravel()
        lam = self.lam_lo + (self.lam_hi - self.lam_lo) * u ** 0.5
        lam = np.maximum(lam, self.lam_hi * 1e-6)
        return np.column_stack([xs * lam[:, None], lam])


class ScaleSectionRegion:
    """Scale-indexed sections read directly in ambient coordinates.

    Points (x, w) with w in (lam_lo, lam_hi] and x inside section_at(w): the
    admissible x-section varies with the scale coordinate but x itself is
    *not* rescaled by w (contrast ScaledEmbeddingRegion, whose x-part shrinks
    proportionally to w).  Sections must be star-shaped around the origin,
    and the section at widest_scale (default lam_lo) must contain every other
    section; sampling draws x there and projects the stragglers into their
    own section.
    """

    def __init__(self, section_at: Callable, lam_hi: float, lam_lo: float = 0.0,
                 widest_scale: Optional[float] = None):
        if not (0 <= lam_lo < lam_hi):
            raise ValueError("need 0 <= lam_lo < lam_hi")
        self.section_at = section_at
        self.lam_lo = float(lam_lo)
        self.lam_hi = float(lam_hi)
        self.widest_scale = self.lam_lo if widest_scale is None else float(widest_scale)
        self._widest = section_at(self.widest_scale)
        self.dim = self._widest.dim + 1

    def describe(self) -> str:
        return (
            f"scale_sections(section(w)~{self._widest.describe()}, "
            f"w in ({self.lam_lo}, {self.lam_hi}])"
        )

    def contains(self, xw) -> bool:
        xw = np.asarray(xw, dtype=float)
        lam = float(xw[-1])
        if not (self.lam_lo < lam <= self.lam_hi * (1 + 1e-12)):
            return False
        return self.section_at(lam).contains(xw[:-1])

    def project(self, xw) -> np.ndarray:
        xw = np.asarray(xw, dtype=float)
        lam = float(np.clip(xw[-1], max(self.lam_lo, 1e-12) * (1 + 1e-9), self.lam_hi))
        x = self.section_at(lam).project(xw[:-1])
        return np.concatenate([x, [lam]])

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        xs = np.asarray(self._widest.sample(count, seed=seed), dtype=float).copy()
        batch = 2 ** int(np.ceil(np.log2(max(count, 8))))
        u = qmc.Sobol(1, scramble=True, seed=seed + 1).random(batch)[:count].ravel()
        lam = self.lam_lo + (self.lam_hi - self.lam_lo) * u
        lam = np.maximum(lam, self.lam_hi * 1e-6)
        for i in range(count):
            section = self.section_at(float(lam[i]))
            if not section.contains(xs[i]):
                xs[i] = section.project(xs[i])
        return np.column_stack([xs, lam])


# --------------------------------------------------------------------------
# weighted jacobians


@dataclass(frozen=True)
class WeightedJacobianPair:
    H: np.ndarray
    G: np.ndarray
    at: tuple


def _weights(xi_val: float, r: np.ndarray) -> np.ndarray:
    den = xi_val + r
    if np.any(den == 0.0):
        raise WeightSingularity(f"xi + r vanishes (xi={xi_val}, r={r})")
    return r / den


def weighted_jacobians(field, xi, r, x, e) -> WeightedJacobianPair:
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    r = np.asarray(r, dtype=float) * np.ones(field.n)
    w = _weights(xi.eval(x), r)
    H = w[:, None] * field.jac_x(x, e)
    G = w[:, None] * field.jac_e(x, e)
    return WeightedJacobianPair(H, G, (x.copy(), e.copy()))


def _spec_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2))


def _batch_norms(field, xi, r_arr, X, E):
    """Spectral norms of H and G over a batch of (x, e) rows."""
    X = np.asarray(X, dtype=float)
    E = np.asarray(E, dtype=float)
    if xi.is_constant:
        xi_vals = np.full(len(X), xi.zeta)
    else:
        xi_vals = np.array([xi.eval(x) for x in X])
    den = xi_vals[:, None] + r_arr[None, :]
    if np.any(den == 0.0):
        raise WeightSingularity("xi + r vanishes inside the search region")
    wt = r_arr[None, :] / den
    hs = np.empty(len(X))
    gs = np.empty(len(X))
    for lo in range(0, len(X), 8192):
        sl = slice(lo, lo + 8192)
        if hasattr(field, "jac_x_many"):
            Jx = field.jac_x_many(X[sl], E[sl])
            Je = field.jac_e_many(X[sl], E[sl])
        else:
            Jx = np.stack([field.jac_x(x, e) for x, e in zip(X[sl], E[sl])])
            Je = np.stack([field.jac_e(x, e) for x, e in zip(X[sl], E[sl])])
        W3 = wt[sl][:, :, None]
        hs[sl] = np.linalg.svd(W3 * Jx, compute_uv=False)[:, 0]
        gs[sl] = np.linalg.svd(W3 * Je, compute_uv=False)[:, 0]
    return hs, gs


# --------------------------------------------------------------------------
# norm maximization


@dataclass
class NormMaximizationResult:
    h_max: float
    h_arg: tuple  # (x*, e*)
    g_max: float
    g_arg: tuple
    region: str
    probes: int

    def dominates(self, value: float, which: str = "h") -> bool:
        best = self.h_max if which == "h" else self.g_max
        return best >= value * (1 - 1e-12)


def _error_mask(n: int, e_mask: Optional[Sequence[int]]) -> np.ndarray:
    if e_mask is None:
        return np.ones(n, dtype=bool)
    m = np.zeros(n, dtype=bool)
    m[list(e_mask)] = True
    return m


def maximize_norms(
    field,
    xi,
    r,
    cert: StabilityCertificate,
    region=None,
    e_mask: Optional[Sequence[int]] = None,
    count: int = 4096,
    seed: int = 0,
    ascent_iters: int = 120,
    certify_points: int = 100_000,
) -> NormMaximizationResult:
    """Multistart maximization of |H| and |G| over region x {|e| <= c|x|}.

    Deterministic for fixed seeds.  The reported maximum is the best value
    over every probed point (seeding, ascent iterates, and the a-posteriori
    rejection-sampling cloud), so it dominates all probes by construction;
    the rejection cloud additionally certifies that gradient ascent was not
    stuck more than 0.1% below an easily-found value.
    """
    if region is None:
        if cert.gamma_radius is None:
            raise EmptyRegion("no region given and certificate has no ball radius")
        region = BallRegion(cert.gamma_radius, field.n)
    c = cert.c
    n = field.n
    mask = _error_mask(n, e_mask)
    m_dim = int(mask.sum())

    r_arr = np.asarray(r, dtype=float) * np.ones(n)

    xs = region.sample(count, seed=seed)
    if len(xs) == 0:
        raise EmptyRegion(region.describe())
    dirs = sphere_directions(m_dim, 16 if m_dim <= 2 else 32)

    def e_from(u, x, beta):
        e = np.zeros(n)
        e[mask] = beta * c * np.linalg.norm(x) * u
        return e

    def pair_norms(x, e):
        pair = weighted_jacobians(field, xi, r, x, e)
        return _spec_norm(pair.H), _spec_norm(pair.G)

    def value(which, x, e):
        hv, gv = pair_norms(x, e)
        return hv if which == "h" else gv

    best = {"h": [-np.inf, None, None], "g": [-np.inf, None, None]}

    def consider_batch(X, E):
        hs, gs = _batch_norms(field, xi, r_arr, X, E)
        ih = int(np.argmax(hs))
        ig = int(np.argmax(gs))
        if hs[ih] > best["h"][0]:
            best["h"] = [float(hs[ih]), X[ih].copy(), E[ih].copy()]
        if gs[ig] > best["g"][0]:
            best["g"] = [float(gs[ig]), X[ig].copy(), E[ig].copy()]
        return len(X)

    # seeding: zero error plus every sphere direction at full error radius
    K = len(dirs) + 1
    X_seed = np.repeat(xs, K, axis=0)
    E_seed = np.zeros((len(xs) * K, n))
    radii = c * np.linalg.norm(xs, axis=1)
    for k, u in enumerate(dirs):
        full_u = np.zeros(n)
        full_u[mask] = u
        E_seed[k + 1 :: K] = radii[:, None] * full_u[None, :]
    probes = consider_batch(X_seed, E_seed)

    # projected finite-difference ascent from each incumbent
    for which in ("h", "g"):
        v0, x0, e0 = best[which]
        v1, x1, e1 = _ascend(value, which, x0, e0, v0, region, c, mask, ascent_iters)
        if v1 > best[which][0]:
            best[which] = [v1, x1, e1]

    # rejection-sampling certification cloud (single pass for both norms)
    rng = np.random.default_rng(seed + 17)
    cxs = region.sample(min(certify_points, 20_000), seed=seed + 5)
    reps = max(1, certify_points // len(cxs))
    X_cloud = np.repeat(cxs, reps, axis=0)
    U = rng.standard_normal((len(X_cloud), m_dim))
    U /= np.maximum(np.linalg.norm(U, axis=1, keepdims=True), 1e-300)
    betas = rng.random(len(X_cloud))
    E_cloud = np.zeros((len(X_cloud), n))
    E_cloud[:, mask] = (
        betas[:, None] * c * np.linalg.norm(X_cloud, axis=1, keepdims=True) * U
    )
    hs, gs = _batch_norms(field, xi, r_arr, X_cloud, E_cloud)
    probes += len(X_cloud)
    ih = int(np.argmax(hs))
    ig = int(np.argmax(gs))
    cloud = {
        "h": [float(hs[ih]), X_cloud[ih].copy(), E_cloud[ih].copy()],
        "g": [float(gs[ig]), X_cloud[ig].copy(), E_cloud[ig].copy()],
    }

    for which in ("h", "g"):
        cv, cx, ce = cloud[which]
        if cv > best[which][0] * 1.001:
            # ascent missed a basin; recover from the cloud's point
            v1, x1, e1 = _ascend(
                value, which, cx, ce, cv, region, c, mask, ascent_iters
            )
            if v1 > best[which][0]:
                best[which] = [v1, x1, e1]
        if cv > best[which][0]:
            best[which] = [cv, cx, ce]

    hv, hx, he = best["h"]
    gv, gx, ge = best["g"]
    return NormMaximizationResult(
        h_max=hv,
        h_arg=(hx, he),
        g_max=gv,
        g_arg=(gx, ge),
        region=region.describe(),
        probes=probes,
    )


def _ascend(value, which, x, e, v, region, c, mask, iters):
    x = np.asarray(x, dtype=float).copy()
    e = np.asarray(e, dtype=float).copy()
    step = 0.05 * max(1.0, np.linalg.norm(x))
    n = x.size

    def project(px, pe):
        px = region.project(px)
        pe = pe * mask
        lim = c * np.linalg.norm(px)
        ne = np.linalg.norm(pe)
        if ne > lim:
            pe = pe * (lim / ne) if ne > 0 else pe
        return px, pe

    for _ in range(iters):
        g = np.zeros(2 * n)
        h = 1e-6 * max(1.0, np.linalg.norm(x))
        for j in range(n):
            dx = np.zeros(n)
            dx[j] = h
            g[j] = (value(which, x + dx, e) - value(which, x - dx, e)) / (2 * h)
            if mask[j]:
                g[n + j] = (value(which, x, e + dx) - value(which, x, e - dx)) / (
                    2 * h
                )
        gn = np.linalg.norm(g)
        if gn < 1e-14:
            break
        cx, ce = project(x + step * g[:n] / gn, e + step * g[n:] / gn)
        cv = value(which, cx, ce)
        if cv > v:
            x, e, v = cx, ce, cv
            step *= 1.3
        else:
            step *= 0.5
            if step < 1e-10 * max(1.0, np.linalg.norm(x)):
                break
    return v, x, e


# --------------------------------------------------------------------------
# reach-time bound


@dataclass(frozen=True)
class TauStar:
    value: float
    alpha0: float  # Hmax
    alpha1: float  # Hmax + Gmax
    alpha2: float  # Gmax
    c: float
    method: str = "closed-form"


def tau_star(h_max: float, g_max: float, c: float) -> TauStar:
    """Time for y' = (1+y)(g_max*y + h_max), y(0)=0, to reach y=c.

    Closed form by partial fractions; the quadratic-discriminant form is
    equivalent (the discriminant 4*g*h - (h+g)^2 = -(h-g)^2 is nonpositive,
    so the textbook arctan expression needs complex branches - avoided here).
    """
    if c <= 0:
        raise InvalidThreshold(f"trigger ratio must be positive, got {c}")
    if not (h_max > 0) or g_max < 0:
        raise ValueError("need h_max > 0 and g_max >= 0")
    if math.isclose(h_max, g_max, rel_tol=1e-14):
        value = c / (h_max * (1 + c))
    else:
        value = math.log((1 + c) * h_max / (h_max + g_max * c)) / (h_max - g_max)
    return TauStar(
        value=value,
        alpha0=h_max,
        alpha1=h_max + g_max,
        alpha2=g_max,
        c=c,
    )


def riccati_crossing_time(
    h_max: float, g_max: float, c: float, rtol: float = 1e-12
) -> float:
    """Same reach time by direct integration (cross-check path)."""
    if c <= 0:
        raise InvalidThreshold(f"trigger ratio must be positive, got {c}")
    fn = lambda y: np.array([(1 + y[0]) * (g_max * y[0] + h_max)])
    res = integrate_until_guard(
        fn,
        [0.0],
        lambda y: y[0] - c,
        horizon=10 * tau_star(h_max, g_max, c).value,
        rtol=rtol,
        atol=1e-14,
    )
    return res.t_star
