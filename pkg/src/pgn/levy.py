"""
One-sided Levy measures on (0, inf) with bounded support.

Every family exposes its density, the exponent ``alpha`` of the power-law
singularity at the origin (``lambda(du) ~ u**(-alpha-1) du``) and, when one
exists, a closed form for the power moments

    int_lo^hi u**j lambda(du).

Partial cumulants of the small-jump part ``X_r`` are the moments with
``lo = 0`` and integer ``j >= 2``.  ``quad_moment`` evaluates the same
integrals by adaptive quadrature and is kept independent of the closed forms
so that it can serve as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize, special

from . import _json
from .errors import DomainError, NonIntegrable

QUAD_EPSREL = 1e-12
QUAD_EPSABS = 1e-300
QUAD_LIMIT = 500


class LevyMeasure1D:
    """Base class.  Subclasses are frozen dataclasses."""

    family: str = ""

    @property
    def upper_support(self) -> float:
        raise NotImplementedError

    @property
    def alpha(self) -> float:
        """Singularity exponent at the origin."""
        raise NotImplementedError

    def density(self, u):
        raise NotImplementedError

    def regular_part(self, u):
        """``density(u) * u**(alpha+1)``, bounded near the origin up to logs."""
        u = np.asarray(u, dtype=float)
        return self.density(u) * u ** (self.alpha + 1.0)

    def moment(self, j: float, lo: float, hi: float) -> float | None:
        """Closed form of ``int_lo^hi u**j lambda(du)`` or None."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError

    def digest(self) -> str:
        return _json.digest(self.to_dict())


def _power_integral(e: float, lo: float, hi: float) -> float:
    """int_lo^hi u**(e-1) du."""
    if e == 0.0:
        return math.log(hi / lo)
    if lo == 0.0:
        return hi**e / e
    return (hi**e - lo**e) / e


@dataclass(frozen=True)
class TruncStable(LevyMeasure1D):
    """Density ``c u**(-a-1)`` on ``(0, r0)``."""

    c: float
    a: float
    r0: float
    family = "trunc_stable"

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError("trunc_stable: c must be > 0")
        if not 0 < self.a < 2:
            raise DomainError("trunc_stable: a must lie in (0, 2)")
        if not 0 < self.r0 < math.inf:
            raise DomainError("trunc_stable: r0 must be finite and > 0")

    @property
    def upper_support(self):
        return self.r0

    @property
    def alpha(self):
        return self.a

    def density(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u > 0) & (u < self.r0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(inside, self.c * u ** (-self.a - 1.0), 0.0)

    def moment(self, j, lo, hi):
        return self.c * _power_integral(j - self.a, lo, hi)

    def to_dict(self):
        return {"family": self.family, "c": self.c, "a": self.a, "r0": self.r0}


@dataclass(frozen=True)
class LogSingular(LevyMeasure1D):
    """Density ``c u**-1 ln(1/u)`` on ``(0, 1)``."""

    c: float
    family = "log_singular"

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError("log_singular: c must be > 0")

    @property
    def upper_support(self):
        return 1.0

    @property
    def alpha(self):
        return 0.0

    def density(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u > 0) & (u < 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(inside, self.c * np.log(1.0 / u) / u, 0.0)

    def moment(self, j, lo, hi):
        def anti(u):
            if j == 0:
                return -0.5 * math.log(1.0 / u) ** 2
            if u == 0.0:
                return 0.0
            return u**j * (math.log(1.0 / u) / j + 1.0 / j**2)

        if j == 0 and lo == 0.0:
            return math.inf
        return self.c * (anti(hi) - anti(lo))

    def to_dict(self):
        return {"family": self.family, "c": self.c}


def f_poly(n: int, x):
    """Truncated exponential series ``sum_{i<=n} (-x)**i / i!``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    term = np.ones_like(x)
    for i in range(n + 1):
        out = out + term
        term = term * (-x) / (i + 1)
    return out


@dataclass(frozen=True)
class TiltedStablePoly(LevyMeasure1D):
    """Density ``c u**(-a-1) f_n(u**b)`` on ``(0, r0)``."""

    a: float
    b: float
    n: int
    r0: float
    c: float = 1.0
    family = "tilted_stable_poly"

    def __post_init__(self):
        if not 0 < self.a < 2:
            raise DomainError("tilted_stable_poly: a must lie in (0, 2)")
        if not self.b > 0:
            raise DomainError("tilted_stable_poly: b must be > 0")
        if self.n < 1 or self.n % 2 == 0:
            raise DomainError("tilted_stable_poly: n must be a positive odd integer")
        if not self.r0 > 0 or not self.c > 0:
            raise DomainError("tilted_stable_poly: r0 and c must be > 0")
        if f_poly(self.n, 0.999999 * self.r0**self.b) < 0:
            raise DomainError("tilted_stable_poly: f_n(u**b) turns negative before r0")

    @property
    def upper_support(self):
        return self.r0

    @property
    def alpha(self):
        return self.a

    def density(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u > 0) & (u < self.r0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = self.c * u ** (-self.a - 1.0) * f_poly(self.n, u**self.b)
        return np.where(inside, val, 0.0)

    def moment(self, j, lo, hi):
        total = 0.0
        for i in range(self.n + 1):
            total += (-1) ** i / math.factorial(i) * _power_integral(j - self.a + self.b * i, lo, hi)
        return self.c * total

    def to_dict(self):
        return {"family": self.family, "a": self.a, "b": self.b, "n": self.n,
                "r0": self.r0, "c": self.c}


# Named densities usable from JSON.  Each entry: (callable(u, **params), required params).
CUSTOM_DENSITIES: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "power_law": (lambda u, c, a, R: c * u ** (-a - 1.0), ("c", "a")),
    "tempered_stable": (lambda u, c, a, lam, R: c * u ** (-a - 1.0) * np.exp(-lam * u),
                        ("c", "a", "lam")),
    "beta_cut": (lambda u, c, a, k, R: c * u ** (-a - 1.0) * np.clip(1.0 - u / R, 0.0, None) ** k,
                 ("c", "a", "k")),
    "log_power": (lambda u, c, a, R: c * u ** (-a - 1.0) * np.log(math.e * R / u), ("c", "a")),
}


@dataclass(frozen=True, eq=False)
class Custom(LevyMeasure1D):
    """
    User density on ``(0, upper_support)``.

    Either ``name`` selects an entry of :data:`CUSTOM_DENSITIES` (the only form
    that serializes) or ``density_fn`` is an arbitrary vectorized callable.
    ``singularity_exponent_hint`` is the ``alpha`` with
    ``lambda(du) ~ u**(-alpha-1) du`` near 0; it drives the quadrature
    substitution and must be < 2.
    """

    upper_support_: float
    singularity_exponent_hint: float
    name: str | None = None
    params: dict = field(default_factory=dict)
    density_fn: Callable | None = None
    family = "custom"

    def __post_init__(self):
        if not 0 < self.upper_support_ < math.inf:
            raise DomainError("custom: upper_support must be finite and > 0")
        if self.singularity_exponent_hint >= 2:
            raise DomainError("custom: singularity_exponent_hint must be < 2")
        if self.density_fn is None:
            if self.name not in CUSTOM_DENSITIES:
                raise DomainError(f"custom: unknown density {self.name!r}")
            _, required = CUSTOM_DENSITIES[self.name]
            missing = [k for k in required if k not in self.params]
            if missing:
                raise DomainError(f"custom {self.name}: missing parameters {missing}")
        # u^3 lambda(u) must vanish at 0 for int u^2 lambda(du) to be finite
        g = [float(self.density(self.upper_support_ * 10.0**-k)) * (self.upper_support_ * 10.0**-k) ** 3
             for k in (6, 12)]
        if g[1] > 0 and g[1] >= g[0]:
            raise NonIntegrable("custom: density is too singular at 0 for int u^2 lambda(du)")
        tail = integrate.quad(lambda u: float(self.density(u)), min(1.0, self.upper_support_) / 2,
                              self.upper_support_, limit=QUAD_LIMIT)[0]
        small = quad_moment(self, 2.0, 0.0, min(1.0, self.upper_support_) / 2)
        if not (math.isfinite(tail) and math.isfinite(small)):
            raise NonIntegrable("custom: int (u^2 ^ 1) lambda(du) is not finite")

    @property
    def upper_support(self):
        return self.upper_support_

    @property
    def alpha(self):
        return self.singularity_exponent_hint

    def density(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u > 0) & (u < self.upper_support_)
        safe = np.where(inside, u, 0.5 * self.upper_support_)
        if self.density_fn is not None:
            val = self.density_fn(safe)
        else:
            fn, _ = CUSTOM_DENSITIES[self.name]
            val = fn(safe, R=self.upper_support_, **self.params)
        return np.where(inside, val, 0.0)

    def to_dict(self):
        if self.density_fn is not None:
            raise DomainError("custom measures built from a callable cannot be serialized")
        return {"family": self.family, "name": self.name, "params": dict(self.params),
                "upper_support": self.upper_support_,
                "singularity_exponent_hint": self.singularity_exponent_hint}


# --------------------------------------------------------------------------
# quadrature

def quad_moment(measure: LevyMeasure1D, j: float, lo: float, hi: float) -> float:
    """
    ``int_lo^hi u**j lambda(du)`` by adaptive Gauss-Kronrod quadrature.

    With ``lo == 0`` the substitution ``u = t**(1/(j-alpha))`` removes the
    power-law singularity; otherwise the integral is taken in ``log u``.
    Never uses closed forms.
    """
    if hi <= lo:
        return 0.0
    if lo == 0.0:
        gamma = j - measure.alpha
        if gamma <= 0:
            raise NonIntegrable(f"u^{j} lambda(du) is not integrable at 0 (alpha={measure.alpha})")
        top = hi**gamma

        def f(t):
            return float(measure.regular_part(t ** (1.0 / gamma))) / gamma

        val, err = integrate.quad(f, 0.0, top, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                                  limit=QUAD_LIMIT)
    else:
        def f(v):
            u = math.exp(v)
            return float(measure.density(u)) * u ** (j + 1.0)

        val, err = integrate.quad(f, math.log(lo), math.log(hi), epsabs=QUAD_EPSABS,
                                  epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    if not math.isfinite(val) or (val != 0 and err > 1e-6 * abs(val)):
        raise NonIntegrable(f"quadrature did not converge (value={val}, error={err})")
    return val


def _moment(measure, j, lo, hi):
    val = measure.moment(j, lo, hi)
    if val is None:
        val = quad_moment(measure, j, lo, hi)
    return val


def _check_radius(measure, r):
    if r > measure.upper_support * (1 + 1e-12):
        raise DomainError(f"radius {r} exceeds the support ({measure.upper_support})")


def partial_cumulant(measure: LevyMeasure1D, j: int, r: float) -> float:
    """kappa_{j, X_r} = int_0^r u**j lambda(du) for j >= 2."""
    if j < 2:
        raise DomainError("cumulant order must be >= 2")
    if r < 0:
        raise DomainError("radius must be >= 0")
    _check_radius(measure, r)
    if r == 0:
        return 0.0
    return _moment(measure, j, 0.0, min(r, measure.upper_support))


def tail_mass(measure: LevyMeasure1D, r: float) -> float:
    """lambda([r, upper_support))."""
    if r <= 0:
        raise DomainError("tail radius must be > 0")
    if r >= measure.upper_support:
        return 0.0
    return _moment(measure, 0.0, r, measure.upper_support)


def tail_mean(measure: LevyMeasure1D, r: float) -> float:
    """int_{u >= r} u lambda(du)."""
    if r <= 0:
        raise DomainError("tail radius must be > 0")
    if r >= measure.upper_support:
        return 0.0
    return _moment(measure, 1.0, r, measure.upper_support)


def has_infinite_mass(measure: LevyMeasure1D) -> bool:
    if measure.alpha > 0:
        return True
    if isinstance(measure, LogSingular):
        return True
    top = measure.upper_support
    m1 = quad_moment(measure, 0.0, 1e-10 * top, top)
    m2 = quad_moment(measure, 0.0, 1e-20 * top, top)
    return m2 > m1 * (1 + 1e-6)


def log_gamma_levy_cumulant(p: float, s: float, log_m: float, j: float) -> float:
    """Logarithm of ``Gamma(j+p+1) m s**(j+p+1)``."""
    e = j + p + 1.0
    if e <= 0:
        raise DomainError("gamma_levy_cumulant needs j + p + 1 > 0")
    return special.gammaln(e) + log_m + e * math.log(s)


def gamma_levy_cumulant(p: float, s: float, m: float, j: float) -> float:
    """
    j-th cumulant of the Levy measure ``m u**p exp(-u/s) du`` on (0, inf).

    Evaluated in log space; ``m == 0`` gives 0.
    """
    if j + p + 1.0 <= 0:
        raise DomainError("gamma_levy_cumulant needs j + p + 1 > 0")
    if not s > 0:
        raise DomainError("scale must be > 0")
    if m < 0:
        raise DomainError("intensity must be >= 0")
    if m == 0:
        return 0.0
    return math.exp(log_gamma_levy_cumulant(p, s, math.log(m), j))


@dataclass(frozen=True)
class CumulantVector:
    r: float
    values: dict
    j_max: int

    def __getitem__(self, j):
        return self.values[j]

    def holder_consistent(self) -> bool:
        v = self.values
        ok = True
        for lo, mid, hi in ((2, 3, 4), (2, 4, 6)):
            if hi <= self.j_max:
                ok &= v[mid] ** 2 < v[lo] * v[hi]
        return ok


def cumulant_vector(measure: LevyMeasure1D, r: float, j_max: int = 10) -> CumulantVector:
    if j_max < 2:
        raise DomainError("j_max must be >= 2")
    vals = {j: partial_cumulant(measure, j, r) for j in range(2, j_max + 1)}
    return CumulantVector(r=r, values=vals, j_max=j_max)


# --------------------------------------------------------------------------
# tilted stable decomposition

class TiltedDecomposition(NamedTuple):
    n: int
    r0: float
    residual_mass: float


def _first_positive_root(n: int) -> float:
    coeffs = [(-1) ** i / math.factorial(i) for i in range(n, -1, -1)]
    roots = np.roots(coeffs)
    real = sorted(z.real for z in roots if abs(z.imag) < 1e-9 and z.real > 0)
    guess = real[0]
    lo, hi = 0.9 * guess, 1.1 * guess
    while f_poly(n, lo) <= 0:
        lo *= 0.9
    while f_poly(n, hi) >= 0:
        hi *= 1.1
    return optimize.brentq(lambda x: float(f_poly(n, x)), lo, hi, xtol=1e-15, rtol=1e-15)


def _scaled_remainder(n: int, x: float) -> float:
    """(exp(-x) - f_n(x)) / x**(n+1), free of cancellation for small x."""
    if x < 1.0:
        total, term = 0.0, (-1.0) ** (n + 1) / math.factorial(n + 1)
        i = n + 1
        while abs(term) > 1e-18 * max(abs(total), 1e-300):
            total += term
            i += 1
            term *= -x / i
        return total
    return (math.exp(-x) - float(f_poly(n, x))) / x ** (n + 1)


def tilted_decompose(a: float, b: float) -> TiltedDecomposition:
    """
    Split ``u**(-a-1) exp(-u**b) du`` into a polynomial-tilted part with
    infinite mass and a finite-mass remainder.

    ``n`` is the smallest odd integer greater than ``a/b - 1``; ``r0`` is the
    radius where ``f_n(u**b)`` first vanishes; ``residual_mass`` is the total
    mass of the remainder.
    """
    if not 0 < a < 2:
        raise DomainError("a must lie in (0, 2)")
    if not b > 0:
        raise DomainError("b must be > 0")
    n = max(1, math.floor(a / b - 1) + 1)
    if n % 2 == 0:
        n += 1
    r0 = _first_positive_root(n) ** (1.0 / b)

    def inner(v):
        return math.exp(((n + 1) * b - a) * v) * _scaled_remainder(n, math.exp(b * v))

    def outer(v):
        u = math.exp(v)
        return u ** (-a) * math.exp(-(u**b))

    lv = math.log(r0)
    # integrand in log u decays like u^((n+1)b - a) at 0
    lo = lv - 60.0 / max((n + 1) * b - a, 1e-3)
    m_in = integrate.quad(inner, lo, lv, epsabs=0, epsrel=1e-11, limit=QUAD_LIMIT)[0]
    hi = max(lv, math.log(50.0) / b) + 1.0
    m_out = integrate.quad(outer, lv, hi, epsabs=0, epsrel=1e-11, limit=QUAD_LIMIT)[0]
    m_out += integrate.quad(outer, hi, math.inf, limit=QUAD_LIMIT)[0]
    return TiltedDecomposition(n=n, r0=r0, residual_mass=m_in + m_out)


# --------------------------------------------------------------------------
# JSON

MEASURE_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "oneOf": [
        {"properties": {"family": {"const": "trunc_stable"}, "c": {"type": "number"},
                        "a": {"type": "number"}, "r0": {"type": "number"}},
         "required": ["c", "a", "r0"], "additionalProperties": False},
        {"properties": {"family": {"const": "log_singular"}, "c": {"type": "number"}},
         "required": ["c"], "additionalProperties": False},
        {"properties": {"family": {"const": "tilted_stable_poly"}, "a": {"type": "number"},
                        "b": {"type": "number"}, "n": {"type": "integer"},
                        "r0": {"type": "number"}, "c": {"type": "number"}},
         "required": ["a", "b", "n", "r0"], "additionalProperties": False},
        {"properties": {"family": {"const": "custom"}, "name": {"type": "string"},
                        "params": {"type": "object",
                                   "additionalProperties": {"type": "number"}},
                        "upper_support": {"type": "number"},
                        "singularity_exponent_hint": {"type": "number"}},
         "required": ["name", "params", "upper_support", "singularity_exponent_hint"],
         "additionalProperties": False},
    ],
}


def measure_from_dict(doc: dict) -> LevyMeasure1D:
    _json.validate(doc, MEASURE_SCHEMA, "Levy measure")
    kind = doc["family"]
    if kind == "trunc_stable":
        return TruncStable(c=doc["c"], a=doc["a"], r0=doc["r0"])
    if kind == "log_singular":
        return LogSingular(c=doc["c"])
    if kind == "tilted_stable_poly":
        return TiltedStablePoly(a=doc["a"], b=doc["b"], n=doc["n"], r0=doc["r0"],
                                c=doc.get("c", 1.0))
    return Custom(upper_support_=doc["upper_support"],
                  singularity_exponent_hint=doc["singularity_exponent_hint"],
                  name=doc["name"], params=dict(doc["params"]))
