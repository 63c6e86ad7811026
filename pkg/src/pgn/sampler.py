"""
Random variate generation for ``X ~ Delta_r + T_r``.

All vectorized kernels take a ``numpy.random.Generator`` and a draw count;
:func:`sample_pgn` and :func:`sample_normal_baseline` run them over
fixed-size chunks with per-chunk streams (see :mod:`pgn.rng`), so results
are a pure function of (spec, seed, n).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _json, levy, rng as rngmod
from .batch import SampleBatch
from .errors import DomainError
from .matching import MatchedParams

log = logging.getLogger(__name__)

MAX_JUMPS_PER_BLOCK = 1 << 22
ENVELOPE_SAFETY = 1.05
MIN_ACCEPTANCE = 0.1
FALLBACK_CELLS = 64


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, rngmod.RngStream):
        return rng.generator()
    raise TypeError("rng must be a numpy Generator or an RngStream")


# --------------------------------------------------------------------------
# primitives

def sample_gamma(shape, scale, rng, size=None):
    """
    Gamma(shape, scale) variates via numpy's Marsaglia-Tsang sampler (with
    the ``u**(1/shape)`` boost below shape 1): constant expected work in shape.
    """
    sh, sc = np.asarray(shape, dtype=float), np.asarray(scale, dtype=float)
    if not (np.all(sh > 0) and np.all(sc > 0) and np.all(np.isfinite(sh)) and np.all(np.isfinite(sc))):
        raise DomainError("gamma shape and scale must be finite and > 0")
    return _generator(rng).gamma(shape, scale, size)


def sample_poisson(rate, rng, size=None):
    """Poisson variates (inversion for small rates, PTRS rejection above 10)."""
    lam = np.asarray(rate, dtype=float)
    if not (np.all(lam >= 0) and np.all(np.isfinite(lam))):
        raise DomainError("Poisson rate must be finite and >= 0")
    return _generator(rng).poisson(rate, size)


# --------------------------------------------------------------------------
# Y_r and T_r

def _one_sided_gamma_levy(gen, params: MatchedParams, k: int) -> np.ndarray:
    if params.log_m == -math.inf:
        return np.zeros(k)
    if params.p == -1:
        return gen.gamma(params.m, params.s, k) - params.m * params.s
    counts = gen.poisson(params.jump_rate, k)
    u = np.zeros(k)
    hit = counts > 0
    u[hit] = gen.gamma(counts[hit] * (params.p + 1.0), params.s)
    return u - params.mean_U


def draw_Y(gen, params: MatchedParams, k: int) -> np.ndarray:
    y = _one_sided_gamma_levy(gen, params, k)
    if params.symmetric:
        y -= _one_sided_gamma_levy(gen, params, k)
    return y


def draw_T(gen, params: MatchedParams, k: int) -> np.ndarray:
    y = draw_Y(gen, params, k)
    return y + params.sigma * gen.standard_normal(k)


def sample_Yr(params: MatchedParams, rng, size=None):
    """Centred Gamma-Levy variate ``Y_r = U - E U`` (difference of two if symmetric)."""
    out = draw_Y(_generator(rng), params, 1 if size is None else size)
    return float(out[0]) if size is None else out


def sample_Tr(params: MatchedParams, rng, size=None):
    """``T_r = Y_r + sigma Z``."""
    out = draw_T(_generator(rng), params, 1 if size is None else size)
    return float(out[0]) if size is None else out


# --------------------------------------------------------------------------
# Delta_r

@dataclass(frozen=True)
class _Cells:
    edges: np.ndarray
    f0: np.ndarray
    beta: np.ndarray
    bound: np.ndarray
    cum: np.ndarray
    total: float


class TailSampler:
    """
    I.i.d. jumps from ``lambda`` restricted to ``[r, upper)``, normalized.

    Truncated stable tails use the closed-form inverse CDF.  Other families
    use rejection beneath a piecewise power-law envelope anchored at
    ``{r, midpoint, upper}``; if its acceptance rate is below 0.1 the
    envelope is refined to 64 geometric cells.
    """

    def __init__(self, measure: levy.LevyMeasure1D, r: float):
        if not r > 0:
            raise DomainError("radius must be > 0")
        self.measure, self.r = measure, r
        self.upper = measure.upper_support
        self.empty = r >= self.upper
        self.mass = 0.0 if self.empty else levy.tail_mass(measure, r)
        self.mean = 0.0 if self.empty else levy.tail_mean(measure, r)
        self.cells = None
        self.acceptance = 1.0
        self.violations = 0
        if self.empty or isinstance(measure, levy.TruncStable):
            return
        self.cells = self._envelope(np.array([r, 0.5 * (r + self.upper), self.upper]))
        self.acceptance = self.mass / self.cells.total
        if self.acceptance < MIN_ACCEPTANCE:
            log.info("tail envelope acceptance %.3f < %.1f; refining to %d cells",
                     self.acceptance, MIN_ACCEPTANCE, FALLBACK_CELLS)
            self.cells = self._envelope(np.geomspace(r, self.upper, FALLBACK_CELLS + 1))
            self.acceptance = self.mass / self.cells.total
        log.debug("tail envelope acceptance %.3f", self.acceptance)

    def _envelope(self, edges) -> _Cells:
        f = self.measure.density
        lo, hi = edges[:-1], edges[1:]
        grids = [np.geomspace(lo[i], hi[i] * (1 - 1e-12), 257) for i in range(len(lo))]
        f0 = np.empty(len(lo))
        beta = np.empty(len(lo))
        for i, grid in enumerate(grids):
            # least-squares power law through the positive part of log f
            fg = f(grid)
            pos = fg > 0
            if pos.sum() >= 2:
                slope, icpt = np.polyfit(np.log(grid[pos] / lo[i]), np.log(fg[pos]), 1)
            else:
                slope, icpt = 0.0, math.log(max(float(fg.max()), 1e-300))
            beta[i], f0[i] = -slope, math.exp(icpt)
        bound = np.empty(len(lo))
        mass = np.empty(len(lo))
        for i, grid in enumerate(grids):
            g = f0[i] * (grid / lo[i]) ** (-beta[i])
            bound[i] = ENVELOPE_SAFETY * max(1.0, float(np.max(f(grid) / g)))
            e = 1.0 - beta[i]
            ratio = hi[i] / lo[i]
            integral = math.log(ratio) if abs(e) < 1e-12 else math.expm1(e * math.log(ratio)) / e
            mass[i] = bound[i] * f0[i] * lo[i] * integral
        cum = np.cumsum(mass)
        return _Cells(edges, f0, beta, bound, cum / cum[-1], float(cum[-1]))

    def _propose(self, gen, k):
        c = self.cells
        i = np.searchsorted(c.cum, gen.random(k), side="right")
        i = np.minimum(i, len(c.cum) - 1)
        lo, hi, beta = c.edges[i], c.edges[i + 1], c.beta[i]
        e = 1.0 - beta
        v = gen.random(k)
        lr = np.log(hi / lo)
        small = np.abs(e) < 1e-12
        es = np.where(small, 1.0, e)
        u = np.where(small, lo * np.exp(v * lr),
                     lo * np.exp(np.log1p(v * np.expm1(es * lr)) / es))
        env = c.bound[i] * c.f0[i] * (u / lo) ** (-beta)
        return u, env

    def draw(self, gen, count: int) -> np.ndarray:
        if count == 0 or self.empty:
            return np.zeros(count)
        if isinstance(self.measure, levy.TruncStable):
            ra, r0a = self.r ** (-self.measure.a), self.measure.r0 ** (-self.measure.a)
            return (ra - gen.random(count) * (ra - r0a)) ** (-1.0 / self.measure.a)
        out = np.empty(count)
        filled = 0
        while filled < count:
            need = count - filled
            k = min(int(need / self.acceptance * 1.1) + 16, MAX_JUMPS_PER_BLOCK)
            u, env = self._propose(gen, k)
            fu = self.measure.density(u)
            self.violations += int(np.count_nonzero(fu > env))
            acc = u[gen.random(k) * env < fu][:need]
            out[filled:filled + len(acc)] = acc
            filled += len(acc)
        return out


def _one_sided_delta(gen, tail: TailSampler, k: int) -> np.ndarray:
    if tail.empty:
        return np.zeros(k)
    counts = gen.poisson(tail.mass, k)
    sums = np.zeros(k)
    csum = np.cumsum(counts)
    start = 0
    while start < k:
        base = csum[start - 1] if start else 0
        stop = int(np.searchsorted(csum, base + MAX_JUMPS_PER_BLOCK, side="right"))
        stop = max(stop, start + 1)
        c = counts[start:stop]
        jumps = tail.draw(gen, int(c.sum()))
        idx = np.repeat(np.arange(stop - start), c)
        sums[start:stop] = np.bincount(idx, weights=jumps, minlength=stop - start)
        start = stop
    return sums - tail.mean


def draw_delta(gen, tail: TailSampler, k: int, symmetric: bool = False) -> np.ndarray:
    d = _one_sided_delta(gen, tail, k)
    if symmetric:
        d -= _one_sided_delta(gen, tail, k)
    return d


def sample_delta_r(measure, r: float, rng, size=None, symmetric: bool = False):
    """Centred compound Poisson part ``Delta_r`` (jumps of size >= r)."""
    out = draw_delta(_generator(rng), TailSampler(measure, r), 1 if size is None else size, symmetric)
    return float(out[0]) if size is None else out


# --------------------------------------------------------------------------
# batches

def spec_document(measure, r: float, params: MatchedParams | None, kind: str, symmetric: bool) -> dict:
    try:
        mdoc = measure.to_dict()
    except DomainError:
        mdoc = {"family": "custom", "callable": repr(measure.density_fn)}
    doc = {"kind": kind, "measure": mdoc, "r": r, "symmetric": symmetric}
    if params is not None:
        doc["params"] = {k: params.to_dict()[k] for k in ("p", "s", "log_m", "sigma", "q", "order")}
    return doc


def sample_pgn(measure, r: float, params: MatchedParams, n: int, seed: int,
               threads: int | None = None, namespace: str = "pgn") -> SampleBatch:
    """``n`` i.i.d. draws of ``Delta_r + T_r`` (symmetrized if ``params.symmetric``)."""
    if abs(params.r - r) > 1e-12 * r:
        raise DomainError(f"params were fitted at r={params.r}, not r={r}")
    tail = TailSampler(measure, r)

    def chunk(gen, k):
        return draw_delta(gen, tail, k, params.symmetric) + draw_T(gen, params, k)

    vals = rngmod.run_chunked(chunk, n, seed, namespace, threads)
    doc = spec_document(measure, r, params, "pgn", params.symmetric)
    return SampleBatch(vals, _json.digest(doc), seed, namespace,
                       {"tail_acceptance": tail.acceptance, "envelope_violations": tail.violations})


def sample_normal_baseline(measure, r: float, n: int, seed: int, threads: int | None = None,
                           symmetric: bool = False, namespace: str = "normal") -> SampleBatch:
    """``n`` draws of ``Delta_r + sqrt(k2(X_r)) Z``: the second-order Gaussian baseline."""
    tail = TailSampler(measure, r)
    sd = math.sqrt((2 if symmetric else 1) * levy.partial_cumulant(measure, 2, min(r, measure.upper_support)))

    def chunk(gen, k):
        return draw_delta(gen, tail, k, symmetric) + sd * gen.standard_normal(k)

    vals = rngmod.run_chunked(chunk, n, seed, namespace, threads)
    return SampleBatch(vals, _json.digest(spec_document(measure, r, None, "normal", symmetric)),
                       seed, namespace)
