"""
Computable ingredients of the total-variation error bounds.

Univariate: ``d_TV(X, Delta_r + T_r) <= (|k|_{q,X_r} + |k|_{q,Y_r}) /
(q! k_2^{q/2}) (q Q_{q-1} + Q_q + Q_{q+1})``.  Multivariate: the moment
factor and the Fourier-tail integral whose finiteness the multivariate bound
requires; the multivariate constant ``c(d, q)`` is not known, so those
outputs are diagnostics only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, interpolate, special

from . import levy, radial
from .errors import HypothesisViolated
from .matching import MatchedParams

PANEL_WIDTH = 0.5
PANEL_STOP = 1e-16
PANEL_BUDGET = 10_000
REL_ERR_GATE = 1e-6
C2 = 0.5


def const_C1() -> float:
    return math.sin(1.0)


def const_C2() -> float:
    """
    ``inf_{p>0} P(Gamma(p,1) <= p)``.  The profile decreases to its central
    limit value 1/2 and never reaches it; 1/2 is the conservative choice.
    """
    return C2


def gamma_at_mean_profile(p) -> np.ndarray:
    """``P(p, p)``, the regularized lower incomplete gamma at the mean."""
    p = np.asarray(p, dtype=float)
    return special.gammainc(p, p)


def q_floor_sq(j: int) -> float:
    """Limit of ``Q_j(r)^2`` as r -> 0."""
    C12 = const_C1() ** 2 * const_C2()
    return math.exp(special.gammaln(j + 0.5) - math.log(2.0) - (j + 0.5) * math.log(C12))


def _kappa2_fn(measure, symmetric):
    sides = 2 if symmetric else 1
    upper = measure.upper_support
    full = sides * levy.partial_cumulant(measure, 2, upper) if math.isfinite(upper) else None

    def k2(x):
        if x >= upper:
            return full
        return sides * levy.partial_cumulant(measure, 2, x)
    return k2


def L_func(t: float, r: float, measure, sigma: float, symmetric: bool = False) -> float:
    """``(t^2/2) min(C1^2 k_2(X_{1/|t|}), sigma^2)``; ``r`` is accepted for signature parity."""
    if t == 0 or sigma == 0:
        return 0.0
    k2 = _kappa2_fn(measure, symmetric)(1.0 / abs(t))
    return 0.5 * t * t * min(const_C1() ** 2 * k2, sigma * sigma)


@dataclass
class QResult:
    j: int
    value: float
    floor_sq: float
    tail: float
    panels: int
    rel_err: float
    divergent: bool = False
    truncation_v: float = math.nan


def _log_panel_integral(log_f, v0: float, width=PANEL_WIDTH, budget=PANEL_BUDGET):
    """
    ``int_{v0}^inf exp(log_f(v)) dv`` on consecutive panels, each integrated
    by Gauss-Kronrod after factoring out its largest log value; stops once a
    panel adds less than 1e-16 of the running total twice in a row.
    Returns (log_total, rel_err, panels, converged, v_end).
    """
    log_total = -math.inf
    abs_err = 0.0
    small = 0
    v = v0
    for k in range(budget):
        lo, hi = v, v + width
        probe = np.linspace(lo, hi, 9)
        M = max(log_f(x) for x in probe)
        if not math.isfinite(M):
            return math.inf, math.inf, k, False, hi
        with warnings.catch_warnings():
            # steep panels trigger roundoff warnings; the error estimate is kept instead
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(lambda x: math.exp(log_f(x) - M), lo, hi,
                                      epsabs=0.0, epsrel=1e-10, limit=100)
        log_panel = M + math.log(val) if val > 0 else -math.inf
        if log_total == -math.inf:
            ratio = 1.0 if log_panel > -math.inf else 0.0
        else:
            ratio = math.exp(log_panel - log_total) if log_panel > -math.inf else 0.0
        if log_panel > -math.inf:
            log_total = np.logaddexp(log_total, log_panel)
            abs_err += err * math.exp(M - log_total) if log_total > -math.inf else 0.0
        small = small + 1 if ratio < PANEL_STOP else 0
        v = hi
        if small >= 2:
            return float(log_total), abs_err, k + 1, True, v
    return math.inf, math.inf, budget, False, v


def Qj(measure, params: MatchedParams, j: int) -> QResult:
    """``Q_j(r) = sqrt(floor_j + k_2^{j+1/2} int_{1/r}^inf t^{2j} e^{-2L(t,r)} dt)``."""
    if j < 1:
        raise ValueError("Q_j is defined for j >= 1")
    k2 = _kappa2_fn(measure, params.symmetric)
    kap2 = params.kappas.get(2) or k2(params.r)
    sig2 = params.sigma ** 2
    C12 = const_C1() ** 2
    floor = q_floor_sq(j)
    if sig2 <= 0:
        return QResult(j, math.inf, floor, math.inf, 0, math.inf, True)

    def log_f(v):
        t = math.exp(v)
        L = 0.5 * t * t * min(C12 * k2(1.0 / t), sig2)
        return (j + 0.5) * math.log(kap2) + (2 * j + 1) * v - 2.0 * L

    log_tail, rel, panels, ok, v_end = _log_panel_integral(log_f, math.log(1.0 / params.r))
    if not ok:
        return QResult(j, math.inf, floor, math.inf, panels, math.inf, True, v_end)
    tail = math.exp(log_tail)
    return QResult(j, math.sqrt(floor + tail), floor, tail, panels, rel, False, v_end)


@dataclass
class BoundReport:
    q: int
    r: float
    Qs: dict
    abs_cum_X: float
    abs_cum_Y: float
    kappa2: float
    dtv_bound: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["Qs"] = {str(k): v for k, v in self.Qs.items()}
        return d


def check_hypotheses(params: MatchedParams) -> list[str]:
    fails = []
    if params.q < 5:
        fails.append(f"q = {params.q} < 5")
    if not params.s < params.r / (params.p + 3):
        fails.append(f"s = {params.s:.6g} is not below r/(p+3) = {params.r / (params.p + 3):.6g}")
    if not params.sigma > 0:
        fails.append("sigma is not positive")
    return fails


def dtv_bound_1d(measure, params: MatchedParams, strict: bool = True) -> BoundReport:
    """Assemble the univariate total-variation bound at order ``params.q``."""
    fails = check_hypotheses(params)
    if fails and strict:
        raise HypothesisViolated(fails)
    q, r = params.q, params.r
    sides = 2 if params.symmetric else 1
    abs_X = sides * levy.partial_cumulant(measure, q, r)
    abs_Y = sides * math.exp(levy.log_gamma_levy_cumulant(params.p, params.s, params.log_m, q))
    k2 = params.kappas.get(2) or sides * levy.partial_cumulant(measure, 2, r)
    qres = {j: Qj(measure, params, j) for j in (q - 1, q, q + 1)}
    Q = {j: qr.value for j, qr in qres.items()}
    log_pref = math.log(abs_X + abs_Y) - special.gammaln(q + 1) - 0.5 * q * math.log(k2)
    bound = math.exp(log_pref) * (q * Q[q - 1] + Q[q] + Q[q + 1])
    diag = {"hypothesis_failures": fails,
            "Q_rel_err": {str(j): qr.rel_err for j, qr in qres.items()},
            "Q_panels": {str(j): qr.panels for j, qr in qres.items()},
            "Q_truncation_t": {str(j): math.exp(qr.truncation_v) for j, qr in qres.items()},
            "divergent": any(qr.divergent for qr in qres.values()),
            "certified": all(qr.rel_err < REL_ERR_GATE for qr in qres.values())}
    return BoundReport(q, r, Q, abs_X, abs_Y, k2, bound, diag)


def stable_closed_form(a: float, c: float, r: float, Q: dict) -> float:
    """Closed form of the order-6 bound for a truncated stable law, assembled independently."""
    A = (a * a - 8 * a + 17) / ((4 - a) * (5 - a) ** 2)
    return (2 - a) ** 3 / c ** 2 * (1 / (6 - a) + A) * (6 * Q[5] + Q[6] + Q[7]) / 720 * r ** (2 * a)


# --------------------------------------------------------------------------
# multivariate

def h_of_d(d: int) -> int:
    return d // 2 + 1


def _inv_norms(field: radial.RadialField, A: np.ndarray):
    g = field.grid_params()
    Ainv = np.linalg.inv(A)
    v = g.theta @ Ainv.T
    return g, v, np.linalg.norm(v, axis=1)


def M_tau(z: float, field: radial.RadialField, A: np.ndarray) -> np.ndarray:
    g, _, nrm = _inv_norms(field, A)
    cut = np.minimum(g.r, z / nrm)
    w = field.grid_weights * g.c * cut ** (2 - g.a) / (2 - g.a)
    return np.einsum("i,ij,ik->jk", w, g.theta, g.theta)


def rho_tau(z: float, field: radial.RadialField, A: np.ndarray) -> float:
    """Smallest eigenvalue of ``C1^2 A^-1 M(z) A^-1`` and ``tau^2 A^-1 K A^-1``."""
    Ainv = np.linalg.inv(A)
    first = np.linalg.eigvalsh(const_C1() ** 2 * Ainv @ M_tau(z, field, A) @ Ainv)[0]
    second = np.linalg.eigvalsh(field.tau ** 2 * Ainv @ field.K @ Ainv)[0]
    return float(min(first, second))


def mv_moment_factor(field: radial.RadialField, A: np.ndarray, q: int) -> float:
    """``int ||u A^-1 theta||_1^q (lambda_tau + gamma_tau)`` by direction quadrature."""
    g = field.grid_params()
    l1 = np.abs(g.theta @ np.linalg.inv(A).T).sum(axis=1)
    lam = g.c * g.r ** (q - g.a) / (q - g.a)
    gam = np.exp(special.gammaln(q + g.p + 1) + g.log_m + (q + g.p + 1) * np.log(g.s))
    return float(np.sum(field.grid_weights * l1 ** q * (lam + gam)))


@dataclass
class MvBoundReport:
    tau: float
    q: int
    d: int
    moment_factor: float
    rho_samples: list
    integral_diag: float
    tail_integral: float
    saturation_z: float
    bound_modulo_constant: float
    finite: bool
    label: str = "diagnostic (modulo c(d,q)); not a certified bound"

    def to_dict(self):
        return asdict(self)


def mv_integral_diag(field: radial.RadialField, A: np.ndarray, q: int, nodes: int = 128) -> MvBoundReport:
    """
    Evaluate ``int_0^inf s^(2q+2h(d)+d-1) exp(-rho(1/s) s^2) ds`` with rho
    interpolated monotonically in log z; report ``moment_factor/q!`` times
    the surrogate radical ``sqrt(1 + int_{1/zbar}^inf ...)`` where ``zbar``
    is where ``rho`` saturates.
    """
    d = field.spec.d
    g, _, nrm = _inv_norms(field, A)
    z_sat = float(np.max(g.r * nrm))
    zs = z_sat * np.logspace(-8, 0, nodes)
    rhos = np.array([rho_tau(z, field, A) for z in zs])
    rho_sat = rho_tau(2 * z_sat, field, A)
    logz, logr = np.log(zs), np.log(np.maximum(rhos, 1e-300))
    pchip = interpolate.PchipInterpolator(logz, logr)
    slope = (logr[1] - logr[0]) / (logz[1] - logz[0])

    def log_rho(z):
        lz = math.log(z)
        if lz >= logz[-1]:
            return math.log(rho_sat)
        if lz < logz[0]:
            return logr[0] + slope * (lz - logz[0])
        return float(pchip(lz))

    e = 2 * q + 2 * h_of_d(d) + d - 1

    def log_f(v):  # s = e^v, ds = s dv
        return (e + 1) * v - math.exp(log_rho(math.exp(-v)) + 2 * v)

    # integral over s in (0, 1/z_sat): rho saturated -> closed form incomplete gamma
    x_hi = rho_sat / z_sat ** 2
    head = 0.5 * rho_sat ** (-(e + 1) / 2) * math.exp(special.gammaln((e + 1) / 2)) \
        * special.gammainc((e + 1) / 2, x_hi)
    log_tail, rel, _, ok, _ = _log_panel_integral(log_f, math.log(1.0 / z_sat))
    tail = math.exp(log_tail) if ok else math.inf
    total = head + tail
    mf = mv_moment_factor(field, A, q)
    bmc = mf / math.factorial(q) * math.sqrt(1.0 + tail)
    samples = [[float(z), float(r)] for z, r in zip(zs[::16], rhos[::16])]
    return MvBoundReport(field.tau, q, d, mf, samples, total, tail, z_sat, bmc, bool(ok and math.isfinite(total)))
