"""
Cumulant matching of the small-jump part ``X_r`` by ``T_r = Y_r + sigma Z``.

``Y_r`` is the centred infinitely divisible law with Levy density
``m u**p exp(-u/s)`` on (0, inf).  For symmetric laws ``X = X1 - X2`` the
one-sided factor's measure is passed in, ``T_r = T1 - T2`` and all cumulants
refer to the symmetric law (even orders doubled, odd orders zero).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

from scipy import optimize, special

from . import levy
from .errors import DomainError, MatchInfeasible, RootBracketError

log = logging.getLogger(__name__)

RESIDUAL_GATE = 1e-9


@dataclass(frozen=True)
class MatchedParams:
    """
    Fitted PGN parameters at truncation radius ``r``.

    ``q`` is one more than the highest matched cumulant order.  The
    intensity is stored as ``log_m`` because ``m`` under- or overflows for
    large ``p``.  ``kappas`` holds the cumulants of ``X_r`` the fit used.
    """

    p: float
    s: float
    log_m: float
    sigma: float
    r: float
    q: int
    symmetric: bool = False
    order: int = 4
    kappas: dict = field(default_factory=dict)

    @property
    def m(self) -> float:
        return math.exp(self.log_m) if self.log_m < 709.0 else math.inf

    @property
    def sides(self) -> int:
        return 2 if self.symmetric else 1

    def kappa_Y(self, j: int) -> float:
        if self.symmetric and j % 2:
            return 0.0
        return self.sides * math.exp(levy.log_gamma_levy_cumulant(self.p, self.s, self.log_m, j))

    def kappa_T(self, j: int) -> float:
        return self.kappa_Y(j) + (self.sigma**2 if j == 2 else 0.0)

    @property
    def jump_rate(self) -> float:
        """Poisson rate of Gamma jumps in one side of ``Y_r`` (needs p > -1)."""
        return math.exp(special.gammaln(self.p + 1) + self.log_m + (self.p + 1) * math.log(self.s))

    @property
    def mean_U(self) -> float:
        """E U for one side, U the uncentred Gamma-Levy variable."""
        return math.exp(special.gammaln(self.p + 2) + self.log_m + (self.p + 2) * math.log(self.s))

    def matched_orders(self) -> list[int]:
        return [j for j in range(2, self.q) if not (self.symmetric and j % 2)]

    def residuals(self, kappas: dict | None = None) -> dict:
        """Relative residuals |k_X - k_T| / k_X over matched orders."""
        kappas = self.kappas if kappas is None else kappas
        out = {}
        for j in self.matched_orders():
            kx = kappas[j]
            out[j] = abs(kx - self.kappa_T(j)) / abs(kx)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["m"] = self.m if math.isfinite(self.m) else None  # log_m is authoritative
        d["kappas"] = {str(k): v for k, v in self.kappas.items()}
        d["residuals"] = {str(k): v for k, v in self.residuals().items()} if self.kappas else {}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MatchedParams":
        return cls(p=d["p"], s=d["s"], log_m=d["log_m"], sigma=d["sigma"], r=d["r"], q=d["q"],
                   symmetric=d.get("symmetric", False), order=d.get("order", d["q"] - 1),
                   kappas={int(k): v for k, v in d.get("kappas", {}).items()})


def x_kappas(measure: levy.LevyMeasure1D, r: float, orders, symmetric: bool = False) -> dict:
    """Cumulants of X_r (symmetrized when requested)."""
    out = {}
    for j in orders:
        if symmetric and j % 2:
            out[j] = 0.0
        else:
            out[j] = (2 if symmetric else 1) * levy.partial_cumulant(measure, j, r)
    return out


def _prepare(measure, r, orders, symmetric):
    if not r > 0:
        raise DomainError("radius must be > 0")
    if not levy.has_infinite_mass(measure):
        raise DomainError("PGN approximation needs a Levy measure of infinite mass")
    k = x_kappas(measure, r, orders, symmetric)
    for j, v in k.items():
        if not (symmetric and j % 2) and not v > 0:
            raise DomainError(f"kappa_{j} = {v} is not positive")
    return k


def _finish(k, p, s, log_m, r, q, symmetric, order):
    sides = 2 if symmetric else 1
    k2y = sides * math.exp(levy.log_gamma_levy_cumulant(p, s, log_m, 2))
    var = k[2] - k2y
    if not var > 0:
        raise MatchInfeasible(f"Gaussian variance {var:.3e} is not positive")
    return MatchedParams(p=p, s=s, log_m=log_m, sigma=math.sqrt(var), r=r, q=q,
                         symmetric=symmetric, order=order, kappas=k)


def _asym_params(k, p):
    s = k[4] / ((p + 4) * k[3])
    log_m = math.log(k[3]) - special.gammaln(p + 4) - (p + 4) * math.log(s)
    return float(s), float(log_m)


def _sym_params(k, p):
    s = math.sqrt(k[6] / ((p + 5) * (p + 6) * k[4]))
    log_m = math.log(k[4]) - math.log(2.0) - special.gammaln(p + 5) - (p + 5) * math.log(s)
    return float(s), float(log_m)


def asym_feasible(k, p) -> bool:
    return (p + 4) / (p + 3) < k[2] * k[4] / k[3] ** 2


def sym_feasible(k, p) -> bool:
    return (p + 5) * (p + 6) / ((p + 3) * (p + 4)) < k[2] * k[6] / k[4] ** 2


def match4(measure, r: float, p: float) -> MatchedParams:
    """Match cumulants 2..4 with a prescribed Gamma exponent ``p >= -1``."""
    if p < -1:
        raise DomainError("p must be >= -1")
    k = _prepare(measure, r, range(2, 7), False)
    if not asym_feasible(k, p):
        raise MatchInfeasible(f"(p+4)/(p+3) < k2 k4 / k3^2 fails at p={p}")
    s, log_m = _asym_params(k, p)
    return _finish(k, p, s, log_m, r, 5, False, 4)


def match5(measure, r: float) -> MatchedParams:
    """Match cumulants 2..5; ``p`` solves 1 + 1/(p+4) = k3 k5 / k4^2."""
    k = _prepare(measure, r, range(2, 7), False)
    rho = k[3] * k[5] / k[4] ** 2
    if not 1 < rho < 4 / 3:
        raise MatchInfeasible(f"k3 k5 / k4^2 = {rho} is outside (1, 4/3)")
    p = 1.0 / (rho - 1.0) - 4.0
    if not asym_feasible(k, p):
        raise MatchInfeasible(f"(p+4)/(p+3) < k2 k4 / k3^2 fails at solved p={p}")
    s, log_m = _asym_params(k, p)
    return _finish(k, p, s, log_m, r, 6, False, 5)


def match_sym7(measure, r: float, p: float) -> MatchedParams:
    """Symmetric law: match even cumulants 2..6 with prescribed ``p``."""
    if p < -1:
        raise DomainError("p must be >= -1")
    k = _prepare(measure, r, range(2, 11), True)
    if not sym_feasible(k, p):
        raise MatchInfeasible(f"(p+5)(p+6)/((p+3)(p+4)) < k2 k6 / k4^2 fails at p={p}")
    s, log_m = _sym_params(k, p)
    return _finish(k, p, s, log_m, r, 8, True, 7)


def g_sym(p: float) -> float:
    return (p + 7) * (p + 8) / ((p + 5) * (p + 6))


def solve_g_sym(ratio: float) -> float:
    """
    Unique ``p > 0`` with g_sym(p) = ratio.

    Cross-multiplying gives ``(1-R) p^2 + (15-11R) p + (56-30R) = 0``; the
    root is taken in cancellation-free form, then polished by one Newton step.
    """
    if not 1 < ratio < g_sym(0.0):
        raise MatchInfeasible(f"ratio {ratio} outside (1, 56/30)")
    A, B, C = 1.0 - ratio, 15.0 - 11.0 * ratio, 56.0 - 30.0 * ratio
    disc = B * B - 4 * A * C
    if disc < 0:
        raise RootBracketError("negative discriminant")
    # A < 0 < C, so the roots have opposite signs; the positive one is wanted
    sq = math.sqrt(disc)
    qq = -0.5 * (B + math.copysign(sq, B))
    cands = [x for x in (qq / A, C / qq if qq != 0 else math.nan) if x > 0]
    if len(cands) != 1:
        raise RootBracketError(f"no unique positive root (candidates {cands})")
    p = cands[0]
    dg = (g_sym(p * (1 + 1e-7) + 1e-9) - g_sym(p)) / (p * 1e-7 + 1e-9)
    if dg != 0:
        p -= (g_sym(p) - ratio) / dg
    if abs(g_sym(p) - ratio) > 1e-12:
        p = optimize.brentq(lambda x: g_sym(x) - ratio, 0.0, 2 * p + 10, xtol=1e-14)
    return p


def match_sym9(measure, r: float) -> MatchedParams:
    """Symmetric law: match even cumulants 2..8; ``p`` from k4 k8 / k6^2."""
    k = _prepare(measure, r, range(2, 11), True)
    ratio = k[4] * k[8] / k[6] ** 2
    p = solve_g_sym(ratio)
    if not sym_feasible(k, p):
        raise MatchInfeasible(f"(p+5)(p+6)/((p+3)(p+4)) < k2 k6 / k4^2 fails at solved p={p}")
    s, log_m = _sym_params(k, p)
    return _finish(k, p, s, log_m, r, 10, True, 9)


def stable_p_asym(a: float) -> float:
    """Gamma exponent matching five cumulants of a truncated stable law."""
    if not 0 < a < 2:
        raise DomainError("a must lie in (0, 2)")
    return a * a - 8 * a + 11


def stable_p_sym(a: float) -> float:
    """Gamma exponent matching nine cumulants of a symmetric truncated stable law."""
    if not 0 < a < 2:
        raise DomainError("a must lie in (0, 2)")
    return solve_g_sym((6 - a) ** 2 / ((4 - a) * (8 - a)))


def heuristic_p(measure, r: float, symmetric: bool) -> float:
    """
    Exponent for the lower-order fallbacks: fit the effective stability index
    from k2 k4/k3^2 (or k2 k6/k4^2) as if the measure were a pure power law,
    then use the truncated-stable prescription.  Falls back to the smallest
    feasible integer exponent plus one.
    """
    k = x_kappas(measure, r, range(2, 9), symmetric)
    if symmetric:
        target = k[2] * k[6] / k[4] ** 2
        h = lambda a: (4 - a) ** 2 / ((2 - a) * (6 - a)) - target  # noqa: E731
        feasible, pick = sym_feasible, stable_p_sym
    else:
        target = k[2] * k[4] / k[3] ** 2
        h = lambda a: (3 - a) ** 2 / ((2 - a) * (4 - a)) - target  # noqa: E731
        feasible, pick = asym_feasible, stable_p_asym
    try:
        a_eff = optimize.brentq(h, 1e-9, 2 - 1e-9)
        p = pick(a_eff)
        if feasible(k, p):
            return p
    except (ValueError, MatchInfeasible):
        pass
    p = -1.0
    while not feasible(k, p):
        p += 1.0
        if p > 1e4:
            raise MatchInfeasible("no feasible exponent found")
    return p + 1.0


def fit(measure, r: float, order="auto", symmetric: bool = False, p: float | None = None,
        fallback: bool = False) -> MatchedParams:
    """
    Default parameter selection.

    ``order="auto"`` uses the highest order available (5, or 9 when
    symmetric); for truncated stable measures the r-independent closed-form
    exponents are used.  On infeasibility ``auto`` and ``fallback=True``
    retry at order 4 (7) with :func:`heuristic_p` and log a warning.
    """
    if order == "auto":
        order, fallback = (9 if symmetric else 5), True
    order = int(order)
    if order in (4, 5) and symmetric or order in (7, 9) and not symmetric:
        raise DomainError(f"order {order} does not apply to a {'symmetric' if symmetric else 'one-sided'} law")
    ts = isinstance(measure, levy.TruncStable)
    try:
        if order == 5:
            if ts and p is None:
                res = match4(measure, r, stable_p_asym(measure.a))
                return MatchedParams(**{**asdict(res), "q": 6, "order": 5})
            return match5(measure, r)
        if order == 9:
            if ts and p is None:
                res = match_sym7(measure, r, stable_p_sym(measure.a))
                return MatchedParams(**{**asdict(res), "q": 10, "order": 9})
            return match_sym9(measure, r)
        if order == 4:
            return match4(measure, r, heuristic_p(measure, r, False) if p is None else p)
        if order == 7:
            return match_sym7(measure, r, heuristic_p(measure, r, True) if p is None else p)
    except MatchInfeasible as exc:
        if not fallback or order in (4, 7):
            raise
        lower = 7 if symmetric else 4
        log.warning("order %d infeasible (%s); falling back to order %d", order, exc, lower)
        return fit(measure, r, lower, symmetric, p)
    raise DomainError(f"unsupported matching order {order}")
