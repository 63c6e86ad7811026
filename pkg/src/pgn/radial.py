"""
Multivariate PGN approximation for polar Levy measures.

The Levy measure factors as ``lambda(du, dtheta) = lambda(du|theta) nu(dtheta)``
with ``lambda(du|theta) = c(theta) u**(-a(theta)-1) 1{0<u<r0} du``.  Each
direction is matched one-dimensionally, with the truncation radius
``r_tau(theta)`` chosen so that the Gaussian part contributes exactly
``tau**2`` in every direction; the Gaussian component is then
``tau * K**(1/2) Z`` with ``K = int theta theta' nu(dtheta)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from . import _json, levy, matching, rng as rngmod
from .batch import SampleBatch
from .errors import CenteringUnavailable, DomainError, RankDeficient, SchemaError, TauTooLarge

log = logging.getLogger(__name__)

ESSUP_SAFETY = 1.05
GRID_D2 = 4096
GRID_D3 = 8192
GRID_HIGH = 8192
MAX_EVENTS_PER_BLOCK = 1 << 21


# --------------------------------------------------------------------------
# sphere measures

def _angle(theta):
    return np.arctan2(theta[:, 1], theta[:, 0]) % (2 * np.pi)


ANGULAR_DENSITIES: dict[str, Callable] = {
    # densities w.r.t. arc length on [0, 2 pi), scaled so the total mass is ``mass``
    "cosine": lambda phi, mass, amp=0.0, k=1, phase=0.0:
        mass * (1.0 + amp * np.cos(k * (phi - phase))) / (2 * np.pi),
}


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - math.sqrt(5.0)) * np.arange(n)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def halton_sphere(n: int, d: int) -> np.ndarray:
    pts = stats.qmc.Halton(d, scramble=False).random(n + 1)[1:]
    g = special.ndtri(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class SphereMeasure:
    """
    Finite measure on the unit sphere of R^d.

    ``kind`` is ``"uniform"`` (total ``mass``), ``"atoms"`` (``points`` with
    positive ``weights``) or ``"angular"`` (d = 2; catalog density ``name``
    with ``params``, which include ``mass``).
    """

    kind: str
    d: int
    mass: float = 1.0
    points: np.ndarray | None = None
    weights: np.ndarray | None = None
    name: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "atoms":
            pts = np.atleast_2d(np.asarray(self.points, dtype=float))
            w = np.asarray(self.weights, dtype=float).ravel()
            if pts.shape != (len(w), self.d) or not np.all(w > 0):
                raise DomainError("atoms need one positive weight per d-vector")
            if not np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12):
                raise DomainError("atoms must be unit vectors")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "mass", float(w.sum()))
        elif self.kind == "uniform":
            if self.d < 2 or not self.mass > 0:
                raise DomainError("uniform sphere measure needs d >= 2 and mass > 0")
        elif self.kind == "angular":
            if self.d != 2:
                raise DomainError("angular densities are supported for d = 2 only")
            if self.name not in ANGULAR_DENSITIES:
                raise DomainError(f"unknown angular density {self.name!r}")
            object.__setattr__(self, "mass", float(self.params.get("mass", 1.0)))
            phi = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
            if not np.all(self.density(phi) >= 0):
                raise DomainError("angular density must be nonnegative")
        else:
            raise DomainError(f"unknown sphere measure kind {self.kind!r}")

    @classmethod
    def uniform(cls, d, mass=1.0):
        return cls("uniform", d, mass)

    @classmethod
    def atoms(cls, points, weights):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls("atoms", pts.shape[1], points=pts, weights=weights)

    @classmethod
    def angular(cls, name, **params):
        return cls("angular", 2, name=name, params=params)

    def density(self, phi):
        p = dict(self.params)
        p.setdefault("mass", 1.0)
        return ANGULAR_DENSITIES[self.name](np.asarray(phi, dtype=float), **p)

    def grid(self, n: int | None = None):
        """Quadrature nodes and weights (exact for atoms)."""
        if self.kind == "atoms":
            return self.points, self.weights
        if self.d == 2:
            n = n or GRID_D2
            phi = (np.arange(n) + 0.5) * 2 * np.pi / n
            pts = np.column_stack([np.cos(phi), np.sin(phi)])
            w = (np.full(n, self.mass / n) if self.kind == "uniform"
                 else self.density(phi) * 2 * np.pi / n)
            return pts, w
        n = n or (GRID_D3 if self.d == 3 else GRID_HIGH)
        pts = fibonacci_sphere(n) if self.d == 3 else halton_sphere(n, self.d)
        return pts, np.full(n, self.mass / n)

    def sample(self, gen, k: int) -> np.ndarray:
        """``k`` directions from the normalized measure."""
        if self.kind == "atoms":
            idx = gen.choice(len(self.weights), size=k, p=self.weights / self.mass)
            return self.points[idx]
        if self.kind == "uniform":
            g = gen.standard_normal((k, self.d))
            return g / np.linalg.norm(g, axis=1, keepdims=True)
        grid = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        top = ESSUP_SAFETY * float(self.density(grid).max())
        out = np.empty(k)
        filled = 0
        while filled < k:
            m = 2 * (k - filled) + 16
            phi = gen.random(m) * 2 * np.pi
            acc = phi[gen.random(m) * top < self.density(phi)][:k - filled]
            out[filled:filled + len(acc)] = acc
            filled += len(acc)
        return np.column_stack([np.cos(out), np.sin(out)])

    def K(self) -> np.ndarray:
        """``int theta theta' nu(dtheta)``."""
        if self.kind == "uniform":
            return self.mass / self.d * np.eye(self.d)
        if self.kind == "atoms":
            return np.einsum("i,ij,ik->jk", self.weights, self.points, self.points)
        f = self.density
        q = lambda g: integrate.quad(lambda t: g(t) * f(t), 0, 2 * np.pi, limit=200,  # noqa: E731
                                     epsabs=1e-14, epsrel=1e-13)[0]
        cc, ss, cs = q(lambda t: np.cos(t) ** 2), q(lambda t: np.sin(t) ** 2), q(lambda t: np.cos(t) * np.sin(t))
        return np.array([[cc, cs], [cs, ss]])

    def theta_mean(self) -> np.ndarray:
        """``int theta nu(dtheta)``."""
        if self.kind == "atoms":
            return self.weights @ self.points
        if self.kind == "uniform":
            return np.zeros(self.d)
        f = self.density
        return np.array([integrate.quad(lambda t: g(t) * f(t), 0, 2 * np.pi, limit=200,
                                        epsabs=1e-14)[0] for g in (np.cos, np.sin)])

    def is_symmetric(self) -> bool:
        if self.kind == "uniform":
            return True
        if self.kind == "atoms":
            for p, w in zip(self.points, self.weights):
                hit = np.all(np.isclose(self.points, -p, atol=1e-12), axis=1)
                if not np.any(hit) or not np.isclose(self.weights[hit].sum(), w, rtol=1e-12):
                    return False
            return True
        phi = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        return bool(np.allclose(self.density(phi), self.density(phi + np.pi), rtol=1e-12, atol=1e-15))

    def to_dict(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "d": self.d, "mass": self.mass}
        if self.kind == "atoms":
            return {"kind": "atoms", "d": self.d,
                    "atoms": [{"theta": list(map(float, p)), "weight": float(w)}
                              for p, w in zip(self.points, self.weights)]}
        return {"kind": "angular", "d": 2, "name": self.name, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, doc: dict) -> "SphereMeasure":
        if doc["kind"] == "uniform":
            return cls.uniform(doc["d"], doc.get("mass", 1.0))
        if doc["kind"] == "atoms":
            pts = np.array([a["theta"] for a in doc["atoms"]], dtype=float)
            pts /= np.linalg.norm(pts, axis=1, keepdims=True)
            return cls.atoms(pts, [a["weight"] for a in doc["atoms"]])
        return cls.angular(doc["name"], **doc.get("params", {}))


# --------------------------------------------------------------------------
# direction-dependent parameters a(theta), c(theta)

def _unit_axis(axis, d):
    v = np.asarray(axis, dtype=float)
    if v.shape != (d,) or not np.linalg.norm(v) > 0:
        raise DomainError(f"axis must be a nonzero {d}-vector")
    return v / np.linalg.norm(v)


def _constant(theta, value):
    return np.full(len(theta), float(value))


def _two_piece(theta, axis, pos, neg):
    u = _unit_axis(axis, theta.shape[1])
    return np.where(theta @ u >= 0, float(pos), float(neg))


def _band(theta, axis, width, inside, outside):
    u = _unit_axis(axis, theta.shape[1])
    return np.where(np.abs(theta @ u) < width, float(inside), float(outside))


def _cosine(theta, base, amp, k=2, phase=0.0):
    if theta.shape[1] != 2:
        raise DomainError("cosine angular profile is defined for d = 2 only")
    return base + amp * np.cos(k * (_angle(theta) - phase))


ANGULAR_FUNCTIONS: dict[str, Callable] = {
    "constant": _constant,
    "two_piece": _two_piece,
    "band": _band,
    "cosine": _cosine,
}


@dataclass(frozen=True)
class AngularFunction:
    """Catalog function of the direction: ``name`` in :data:`ANGULAR_FUNCTIONS`."""

    name: str
    params: dict

    def __post_init__(self):
        if self.name not in ANGULAR_FUNCTIONS:
            raise DomainError(f"unknown angular function {self.name!r}")

    def __call__(self, theta) -> np.ndarray:
        return ANGULAR_FUNCTIONS[self.name](np.atleast_2d(theta), **self.params)

    @property
    def is_constant(self) -> bool:
        return self.name == "constant"

    def is_even(self, theta) -> bool:
        return bool(np.allclose(self(theta), self(-theta), rtol=1e-13, atol=0))

    def to_dict(self):
        return {"name": self.name, "params": dict(self.params)}

    @classmethod
    def constant(cls, value):
        return cls("constant", {"value": value})


RADIAL_SPEC_SCHEMA = {
    "type": "object",
    "required": ["nu", "a", "c", "r0"],
    "properties": {
        "nu": {"type": "object", "required": ["kind"],
               "properties": {"kind": {"enum": ["uniform", "atoms", "angular"]},
                              "d": {"type": "integer", "minimum": 1}}},
        "a": {"type": "object", "required": ["name", "params"]},
        "c": {"type": "object", "required": ["name", "params"]},
        "r0": {"type": "number", "exclusiveMinimum": 0},
        "symmetric": {"type": "boolean"},
        "direction_independent": {"type": "boolean"},
    },
}


@dataclass(frozen=True, eq=False)
class RadialLevySpec:
    """Polar Levy measure with truncated-stable conditionals, see module doc."""

    nu: SphereMeasure
    a: AngularFunction
    c: AngularFunction
    r0: float = 1.0
    symmetric: bool = False
    direction_independent: bool | None = None

    def __post_init__(self):
        if not self.r0 > 0:
            raise DomainError("r0 must be > 0")
        pts, _ = self.nu.grid()
        av, cv = self.a(pts), self.c(pts)
        if not (np.all(av > 0) and np.all(av < 2)):
            raise DomainError("a(theta) must lie in (0, 2) on the direction grid")
        if not np.all(cv > 0):
            raise DomainError("c(theta) must be > 0 on the direction grid")
        indep = self.a.is_constant and self.c.is_constant
        if self.direction_independent is None:
            object.__setattr__(self, "direction_independent", indep)
        elif self.direction_independent and not indep:
            raise DomainError("direction_independent requires constant a and c")
        if self.symmetric and not (self.nu.is_symmetric() and self.a.is_even(pts) and self.c.is_even(pts)):
            raise DomainError("symmetric spec needs nu(-dtheta) = nu(dtheta) and even a, c")
        _ = self.K()  # spanning check

    @property
    def d(self) -> int:
        return self.nu.d

    def K(self) -> np.ndarray:
        return K_nu(self)

    def conditional(self, theta) -> levy.TruncStable:
        """``lambda(du|theta)`` for a single direction."""
        t = np.atleast_2d(theta)
        return levy.TruncStable(float(self.c(t)[0]), float(self.a(t)[0]), self.r0)

    def to_dict(self) -> dict:
        return {"nu": self.nu.to_dict(), "a": self.a.to_dict(), "c": self.c.to_dict(),
                "r0": self.r0, "symmetric": self.symmetric,
                "direction_independent": self.direction_independent}

    @classmethod
    def from_dict(cls, doc: dict) -> "RadialLevySpec":
        _json.validate(doc, RADIAL_SPEC_SCHEMA, "radial spec")
        try:
            return cls(SphereMeasure.from_dict(doc["nu"]), AngularFunction(**doc["a"]),
                       AngularFunction(**doc["c"]), doc["r0"], doc.get("symmetric", False),
                       doc.get("direction_independent"))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"invalid radial spec: {exc}") from None

    def digest(self) -> str:
        return _json.digest(self.to_dict())


def K_nu(spec_or_nu) -> np.ndarray:
    """Direction second-moment matrix; raises RankDeficient if nu does not span R^d."""
    nu = spec_or_nu.nu if isinstance(spec_or_nu, RadialLevySpec) else spec_or_nu
    K = nu.K()
    lam = np.linalg.eigvalsh(K)
    if lam[0] < 1e-12 * np.trace(K):
        raise RankDeficient(f"K_nu has smallest eigenvalue {lam[0]:.3e}; nu does not span R^{nu.d}")
    return K


def sym_sqrt(M: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    if lam[0] <= 0:
        raise RankDeficient("matrix is not positive definite")
    return (V * np.sqrt(lam)) @ V.T


# --------------------------------------------------------------------------
# J functions

def pi_of_a(a: float) -> float:
    """Gamma exponent of the nine-cumulant symmetric stable match."""
    return matching.stable_p_sym(a)


def _pi_vec(a) -> np.ndarray:
    """Vectorized :func:`pi_of_a` (same cancellation-free root plus a Newton step)."""
    a = np.asarray(a, dtype=float)
    R = (6 - a) ** 2 / ((4 - a) * (8 - a))
    A, B, C = 1 - R, 15 - 11 * R, 56 - 30 * R
    q = -0.5 * (B + np.copysign(np.sqrt(B * B - 4 * A * C), B))
    p = np.where(q / A > 0, q / A, C / q)
    g = (p + 7) * (p + 8) / ((p + 5) * (p + 6))
    dg = ((2 * p + 15) * (p + 5) * (p + 6) - (p + 7) * (p + 8) * (2 * p + 11)) / ((p + 5) * (p + 6)) ** 2
    return p - (g - R) / dg


@dataclass(frozen=True)
class JFunctions:
    """Log-space J functions; ``p`` is the Gamma exponent."""

    a: np.ndarray
    p: np.ndarray
    J0: np.ndarray
    logJ1: np.ndarray
    logJ2: np.ndarray
    J3: np.ndarray
    J4: np.ndarray

    @property
    def J1(self):
        return np.exp(self.logJ1)

    @property
    def J2(self):
        return np.exp(self.logJ2)

    def as_tuple(self):
        return self.J0, self.J1, self.J2, self.J3, self.J4


def j_functions(a, symmetric: bool = True) -> JFunctions:
    """
    J0..J4 for truncated stable conditionals.

    ``s = J1 r``, ``m = c J2 r**(-1-a-p)``, ``int u^2 gamma(du) = c J3 r**(2-a)``,
    ``int_0^r u^2 lambda(du) = c J0 r**(2-a)`` and ``r = J4 (tau^2/c)**(1/(2-a))``.
    The symmetric variant matches orders 2..8 (one-sided even cumulants);
    the asymmetric variant matches orders 2..5.
    """
    a = np.asarray(a, dtype=float)
    if not (np.all(a > 0) and np.all(a < 2)):
        raise DomainError("a must lie in (0, 2)")
    if symmetric:
        p = _pi_vec(a)
        logJ1 = 0.5 * (np.log(4 - a) - np.log(p + 5) - np.log(p + 6) - np.log(6 - a))
        logJ2 = -special.gammaln(p + 5) - np.log(4 - a) - (p + 5) * logJ1
    else:
        p = a * a - 8 * a + 11
        logJ1 = -np.log(4 - a) - np.log(5 - a)
        logJ2 = -np.log(3 - a) - special.gammaln(p + 4) - (p + 4) * logJ1
    J0 = 1.0 / (2 - a)
    J3 = np.exp(special.gammaln(p + 3) + logJ2 + (p + 3) * logJ1)
    J4 = (J0 - J3) ** (-1.0 / (2 - a))
    return JFunctions(a, p, J0, logJ1, logJ2, J3, J4)


# --------------------------------------------------------------------------
# the matched field

@dataclass(frozen=True)
class DirectionParams:
    """Per-direction matched quantities, arrays aligned with ``theta``."""

    theta: np.ndarray
    a: np.ndarray
    c: np.ndarray
    r: np.ndarray
    p: np.ndarray
    s: np.ndarray
    log_m: np.ndarray
    B: np.ndarray
    N: np.ndarray

    @property
    def m(self):
        return np.exp(self.log_m)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Matched radial approximation at Gaussian scale ``tau``."""

    spec: RadialLevySpec
    tau: float
    essup_B: float
    essup_N: float
    K: np.ndarray
    grid_theta: np.ndarray
    grid_weights: np.ndarray

    def at(self, theta) -> DirectionParams:
        return direction_params(self.spec, self.tau, theta)

    def grid_params(self) -> DirectionParams:
        return self.at(self.grid_theta)

    def to_dict(self) -> dict:
        g = self.grid_params()
        return {"spec": self.spec.to_dict(), "tau": self.tau, "essup_B": self.essup_B,
                "essup_N": self.essup_N, "K": self.K.tolist(),
                "r_range": [float(g.r.min()), float(g.r.max())],
                "p_range": [float(g.p.min()), float(g.p.max())]}


def direction_params(spec: RadialLevySpec, tau: float, theta) -> DirectionParams:
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    a, c = spec.a(theta), spec.c(theta)
    J = j_functions(a, spec.symmetric)
    log_r = np.log(J.J4) + (2 * math.log(tau) - np.log(c)) / (2 - a)
    r = np.exp(log_r)
    s = np.exp(J.logJ1 + log_r)
    log_m = np.log(c) + J.logJ2 - (1 + a + J.p) * log_r
    B = c * (r ** (-a) - spec.r0 ** (-a)) / a
    N = np.exp(special.gammaln(J.p + 1) + log_m + (J.p + 1) * np.log(s))
    return DirectionParams(theta, a, c, r, J.p, s, log_m, np.maximum(B, 0.0), N)


def radial_match(spec: RadialLevySpec, tau: float, grid_n: int | None = None) -> RadialField:
    """Calibrate the per-direction radii so the Gaussian part is ``tau^2 K_nu``."""
    if not tau > 0:
        raise DomainError("tau must be > 0")
    pts, w = spec.nu.grid(grid_n)
    g = direction_params(spec, tau, pts)
    rmax = float(g.r.max())
    if not rmax < spec.r0:
        raise TauTooLarge(f"ess sup r_tau = {rmax:.6g} is not below r0 = {spec.r0}")
    return RadialField(spec, tau, ESSUP_SAFETY * float(g.B.max()), ESSUP_SAFETY * float(g.N.max()),
                       K_nu(spec), pts, w)


def calibration_residuals(field: RadialField, n_angles: int = 256) -> np.ndarray:
    """
    Relative residual of ``int_0^r u^2 lambda - int u^2 gamma = tau^2`` per
    direction, both integrals by adaptive quadrature.
    """
    pts = _check_grid(field.spec, n_angles)
    g = field.at(pts)
    out = np.empty(len(pts))
    for i in range(len(pts)):
        lam = levy.quad_moment(levy.TruncStable(g.c[i], g.a[i], field.spec.r0), 2, 0.0, g.r[i])
        gam = _gamma_moment_quad(g.p[i], g.s[i], g.log_m[i], 2)
        out[i] = abs(lam - gam - field.tau ** 2) / field.tau ** 2
    return out


def matching_residuals(field: RadialField, n_angles: int = 64) -> np.ndarray:
    """
    Max relative residual per direction of ``int u^j lambda_tau = 1{j=2} tau^2 +
    int u^j gamma_tau`` over the matched orders (closed-form moments).
    """
    pts = _check_grid(field.spec, n_angles)
    g = field.at(pts)
    orders = (2, 4, 6, 8) if field.spec.symmetric else (2, 3, 4, 5)
    out = np.zeros(len(pts))
    for i in range(len(pts)):
        for j in orders:
            lam = g.c[i] * g.r[i] ** (j - g.a[i]) / (j - g.a[i])
            gam = math.exp(levy.log_gamma_levy_cumulant(g.p[i], g.s[i], g.log_m[i], j))
            rhs = gam + (field.tau ** 2 if j == 2 else 0.0)
            out[i] = max(out[i], abs(lam - rhs) / lam)
    return out


def _check_grid(spec, n):
    if spec.nu.kind == "atoms":
        return spec.nu.points
    if spec.d == 2:
        phi = (np.arange(n) + 0.5) * 2 * np.pi / n
        return np.column_stack([np.cos(phi), np.sin(phi)])
    return fibonacci_sphere(n) if spec.d == 3 else halton_sphere(n, spec.d)


def _gamma_moment_quad(p, s, log_m, j):
    """``int_0^inf m u^(p+j) e^(-u/s) du`` by quadrature in ``v = u/s``."""
    e = p + j
    scale = math.exp(log_m + (e + 1) * math.log(s))
    peak = max(e, 1.0)
    f = lambda v: math.exp(e * math.log(v) - v) if v > 0 else 0.0  # noqa: E731
    pts = [0.0, peak, peak + 40 * math.sqrt(peak) + 40]
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        total += integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-13, limit=200)[0]
    total += integrate.quad(f, pts[-1], np.inf, epsabs=0, epsrel=1e-13, limit=200)[0]
    return scale * total


def sigma_tau(field: RadialField):
    """``(Sigma, A)``: covariance of the small-jump part and its symmetric square root."""
    g = field.grid_params()
    v = field.grid_weights * g.c * g.r ** (2 - g.a) / (2 - g.a)
    S = np.einsum("i,ij,ik->jk", v, g.theta, g.theta)
    if field.spec.direction_independent and field.spec.nu.kind != "atoms":
        S = float(v[0] / field.grid_weights[0]) * field.K
    return S, sym_sqrt(S)


def gamma_covariance(field: RadialField) -> np.ndarray:
    g = field.grid_params()
    v = field.grid_weights * np.exp(special.gammaln(g.p + 3) + g.log_m + (g.p + 3) * np.log(g.s))
    return np.einsum("i,ij,ik->jk", v, g.theta, g.theta)


def delta_covariance(field: RadialField) -> np.ndarray:
    g = field.grid_params()
    r0 = field.spec.r0
    v = field.grid_weights * g.c * (r0 ** (2 - g.a) - g.r ** (2 - g.a)) / (2 - g.a)
    return np.einsum("i,ij,ik->jk", v, g.theta, g.theta)


# --------------------------------------------------------------------------
# centering

def _pieces(spec: RadialLevySpec):
    """
    Partition of the sphere on which ``a`` and ``c`` are constant, as a list
    of (mask_fn, representative theta); None when no such partition is known.
    """
    fa, fc = spec.a, spec.c
    d = spec.d
    if fa.is_constant and fc.is_constant:
        e = np.eye(d)[:1]
        return [(None, e)]
    axes = [f.params["axis"] for f in (fa, fc) if f.name == "two_piece"]
    if all(f.name in ("constant", "two_piece") for f in (fa, fc)) and axes:
        u = _unit_axis(axes[0], d)
        if all(np.allclose(_unit_axis(x, d), u) for x in axes):
            return [(lambda t: t @ u >= 0, u[None, :]), (lambda t: t @ u < 0, -u[None, :])]
    return None


def _halfspace_mean(nu: SphereMeasure, u: np.ndarray, sign: float) -> np.ndarray:
    """``int theta 1{sign <theta,u> >= 0} nu(dtheta)`` for uniform or angular nu."""
    if nu.kind == "atoms":
        keep = nu.points @ u >= 0 if sign > 0 else nu.points @ u < 0
        return (nu.weights[keep, None] * nu.points[keep]).sum(axis=0)
    if nu.kind == "uniform":
        d = nu.d
        e_abs = math.exp(special.gammaln(d / 2) - special.gammaln((d + 1) / 2)) / math.sqrt(math.pi)
        return sign * u * 0.5 * nu.mass * e_abs
    phi0 = math.atan2(u[1], u[0])
    lo, hi = (phi0 - np.pi / 2, phi0 + np.pi / 2) if sign > 0 else (phi0 + np.pi / 2, phi0 + 3 * np.pi / 2)
    f = nu.density
    return np.array([integrate.quad(lambda t: g(t) * f(t % (2 * np.pi)), lo, hi, limit=200,
                                    epsabs=1e-14, epsrel=1e-13)[0] for g in (np.cos, np.sin)])


def _centering(field: RadialField, per_direction) -> np.ndarray:
    """
    ``int theta h(theta) nu(dtheta)`` for a direction-wise mean ``h``
    (``per_direction`` maps DirectionParams to h); closed form only.
    """
    spec = field.spec
    if spec.symmetric:
        return np.zeros(spec.d)
    pieces = _pieces(spec)
    if pieces is None:
        raise CenteringUnavailable("centering has no closed form: spec is neither symmetric "
                                   "nor piecewise direction independent")
    if len(pieces) == 1:
        h = float(per_direction(field.at(pieces[0][1]))[0])
        return h * spec.nu.theta_mean()
    total = np.zeros(spec.d)
    u = pieces[0][1][0]
    for sign, (_, rep) in zip((1.0, -1.0), pieces):
        h = float(per_direction(field.at(rep))[0])
        total += h * _halfspace_mean(spec.nu, u, sign)
    return total


def mu_tilde(field: RadialField) -> np.ndarray:
    """Mean of the uncentred large-jump sum."""
    r0 = field.spec.r0

    def tail_mean(g):
        return np.where(np.isclose(g.a, 1.0, rtol=0, atol=1e-14), g.c * np.log(r0 / g.r),
                        g.c * (g.r ** (1 - g.a) - r0 ** (1 - g.a)) / np.where(g.a == 1, 1, g.a - 1))
    return _centering(field, tail_mean)


def mu_gamma(field: RadialField) -> np.ndarray:
    """Mean of the uncentred Gamma jump sum: ``int theta (p+1) s N nu(dtheta)``."""
    return _centering(field, lambda g: (g.p + 1) * g.s * g.N)


# --------------------------------------------------------------------------
# sampling

class ThinningViolation(DomainError):
    """An acceptance probability exceeded one: the ess sup estimate was too small."""


def _thinned_sum(gen, field: RadialField, k: int, rate_bound: float, rate_of, radius_of) -> np.ndarray:
    """
    Sum over a Poisson process on the sphere with intensity ``rate_of(theta) nu``,
    obtained by thinning a process of intensity ``rate_bound * nu``.
    """
    d = field.spec.d
    out = np.zeros((k, d))
    total_rate = rate_bound * field.spec.nu.mass
    if total_rate == 0:
        return out
    counts = gen.poisson(total_rate, k)
    csum = np.cumsum(counts)
    start = 0
    while start < k:
        base = csum[start - 1] if start else 0
        stop = max(int(np.searchsorted(csum, base + MAX_EVENTS_PER_BLOCK, side="right")), start + 1)
        c = counts[start:stop]
        n_ev = int(c.sum())
        if n_ev:
            theta = field.spec.nu.sample(gen, n_ev)
            g = field.at(theta)
            prob = rate_of(g) / rate_bound
            if np.any(prob > 1):
                raise ThinningViolation(f"thinning acceptance {prob.max():.6f} exceeds 1")
            keep = gen.random(n_ev) < prob
            owner = np.repeat(np.arange(stop - start), c)[keep]
            radius = radius_of(gen, g, keep)
            vec = theta[keep] * radius[:, None]
            for j in range(d):
                out[start:stop, j] = np.bincount(owner, weights=vec[:, j], minlength=stop - start)
        start = stop
    return out


def accepted_directions(gen, field: RadialField, n_candidates: int, which: str = "N") -> np.ndarray:
    """Directions kept by thinning ``n_candidates`` proposals (diagnostic for intensity checks)."""
    bound, rate = (field.essup_N, lambda g: g.N) if which == "N" else (field.essup_B, lambda g: g.B)
    theta = field.spec.nu.sample(gen, n_candidates)
    prob = rate(field.at(theta)) / bound
    if np.any(prob > 1):
        raise ThinningViolation(f"thinning acceptance {prob.max():.6f} exceeds 1")
    return theta[gen.random(n_candidates) < prob]


def draw_delta_tau(gen, field: RadialField, k: int) -> np.ndarray:
    r0 = field.spec.r0

    def radius(gen, g, keep):
        a, r = g.a[keep], g.r[keep]
        ra, r0a = r ** (-a), r0 ** (-a)
        return (ra - gen.random(len(a)) * (ra - r0a)) ** (-1.0 / a)

    return _thinned_sum(gen, field, k, field.essup_B, lambda g: g.B, radius) - mu_tilde(field)


def draw_Y_tau(gen, field: RadialField, k: int) -> np.ndarray:
    def radius(gen, g, keep):
        return gen.gamma(g.p[keep] + 1.0, g.s[keep])

    return _thinned_sum(gen, field, k, field.essup_N, lambda g: g.N, radius) - mu_gamma(field)


def draw_T_tau(gen, field: RadialField, k: int) -> np.ndarray:
    y = draw_Y_tau(gen, field, k)
    z = gen.standard_normal((k, field.spec.d))
    return y + field.tau * z @ sym_sqrt(field.K)


def _batch(fn, field, n, seed, threads, namespace, kind):
    vals = rngmod.run_chunked(lambda gen, k: fn(gen, field, k), n, seed, namespace, threads,
                              width=field.spec.d)
    doc = {"kind": kind, "spec": field.spec.to_dict(), "tau": field.tau}
    return SampleBatch(vals, _json.digest(doc), seed, namespace)


def sample_delta_tau(field, n, seed, threads=None, namespace="mv-delta") -> SampleBatch:
    """Centred large-jump part: thinned sphere Poisson process, tail radii by inverse CDF."""
    return _batch(draw_delta_tau, field, n, seed, threads, namespace, "delta_tau")


def sample_Y_tau(field, n, seed, threads=None, namespace="mv-Y") -> SampleBatch:
    """Centred Gamma part: thinned process, radii ``Gamma(p+1, s)``."""
    return _batch(draw_Y_tau, field, n, seed, threads, namespace, "Y_tau")


def sample_T_tau(field, n, seed, threads=None, namespace="mv-T") -> SampleBatch:
    """``Y_tau + tau K^(1/2) Z``."""
    return _batch(draw_T_tau, field, n, seed, threads, namespace, "T_tau")


def sample_mv_pgn(field, n, seed, threads=None, namespace="mv-pgn") -> SampleBatch:
    """``Delta_tau + T_tau``."""
    return _batch(lambda gen, f, k: draw_delta_tau(gen, f, k) + draw_T_tau(gen, f, k),
                  field, n, seed, threads, namespace, "pgn_tau")
