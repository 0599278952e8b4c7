"""Univariate Gaussian mixtures for connected time and charged energy.

EM is run for several initialisations at once (arrays of shape
``(restarts, k)``); each restart stops independently when its relative
log-likelihood improvement falls below the tolerance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import MixKey
from .errors import DegenerateModel, EmptyTraining, InsufficientData

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
MAX_REJECTIONS = 1000


class MixtureKind(str, enum.Enum):
    CONNECTED_TIME = "connected_time"
    ENERGY = "energy"


@dataclass(frozen=True)
class Gmm:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    stddevs: tuple[float, ...]

    def __post_init__(self):
        for name in ("weights", "means", "stddevs"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        k = len(self.weights)
        if k < 1 or len(self.means) != k or len(self.stddevs) != k:
            raise ValueError("weights, means and stddevs must be non-empty and of equal length")
        if not all(math.isfinite(v) for v in self.weights + self.means + self.stddevs):
            raise ValueError("non-finite mixture parameter")
        if any(not 0 < w <= 1 for w in self.weights):
            raise ValueError(f"weights must lie in (0, 1]: {self.weights}")
        if abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {math.fsum(self.weights)}, not 1")
        if any(s <= 0 for s in self.stddevs):
            raise ValueError(f"stddevs must be positive: {self.stddevs}")

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def mean(self) -> float:
        return math.fsum(w * m for w, m in zip(self.weights, self.means))

    @classmethod
    def from_arrays(cls, weights, means, stddevs) -> "Gmm":
        w = np.asarray(weights, dtype=float)
        return cls(tuple(w / w.sum()), tuple(means), tuple(stddevs))


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 500
    tol: float = 1e-8
    restarts: int = 5
    k_max: int = 8
    variance_floor_factor: float = 1e-6
    min_cell_n: int = 50

    def __post_init__(self):
        for name in ("max_iter", "restarts", "k_max", "min_cell_n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not (self.tol > 0 and self.variance_floor_factor > 0):
            raise ValueError("tol and variance_floor_factor must be positive")


@dataclass(frozen=True)
class MixtureBank:
    kind: MixtureKind
    models: dict[MixKey, Gmm]
    pooled_fallback: Gmm

    def __post_init__(self):
        object.__setattr__(self, "kind", MixtureKind(self.kind))

    def lookup(self, key: MixKey) -> Gmm:
        return self.models.get(key, self.pooled_fallback)


# ------------------------------------------------------------------ density


def _component_logpdf(x: np.ndarray, means: np.ndarray, sds: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``log w_j + log N(x_i; mu_j, sd_j)`` with shape ``(..., k, n)``."""
    z = (x - means[..., None]) / sds[..., None]
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    return (logw - np.log(sds) - LOG_SQRT_2PI)[..., None] - 0.5 * z * z


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def gmm_logpdf(g: Gmm, x):
    """Mixture log-density, stable far into the tails. Accepts scalars or arrays."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    lp = _component_logpdf(xa, np.asarray(g.means), np.asarray(g.stddevs), np.asarray(g.weights))
    out = _logsumexp(lp, axis=0)
    return float(out[0]) if np.ndim(x) == 0 else out


def gmm_loglik(g: Gmm, data) -> float:
    return float(np.sum(gmm_logpdf(g, np.asarray(data, dtype=float))))


def bic(loglik: float, k: int, n: int) -> float:
    return -2.0 * loglik + (3 * k - 1) * math.log(n)


# ---------------------------------------------------------------------- EM


@dataclass
class EmTrace:
    """Log-likelihood after initialisation and after every EM update, one list per restart."""

    loglik: list[list[float]] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)


_LOG2E = 1.4426950408889634
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_EXP_FLOOR = -708.0
# reassociation lets the per-point loops vectorise; results stay deterministic
_FAST = {"reassoc", "contract"}


@njit(cache=True, fastmath=_FAST)
def _em_pass(x, w, mu, sd, nk, sx, sxx, work, peak, total, bits):
    """One sweep: returns the log-likelihood of (w, mu, sd) and fills the
    responsibility-weighted sufficient statistics.

    ``work`` is a (k, n) scratch array; ``peak``, ``total`` and ``bits`` are
    length-n scratch. The exponential is computed inline (range reduction
    ``t = k ln2 + r``, degree-13 Taylor polynomial on ``|r| <= ln2/2``, 2^k
    from the exponent bits) so the loops vectorise; it is accurate to about
    one ulp on ``t <= 0`` and flushes ``t < -708`` to zero.
    """
    n = x.size
    k = w.size
    for i in range(n):
        peak[i] = -np.inf
        total[i] = 0.0
    for j in range(k):
        c = (np.log(w[j]) if w[j] > 0 else -np.inf) - np.log(sd[j]) - LOG_SQRT_2PI
        inv = 1.0 / sd[j]
        m = mu[j]
        for i in range(n):
            z = (x[i] - m) * inv
            v = c - 0.5 * z * z
            work[j, i] = v
            if v > peak[i]:
                peak[i] = v
    scale = bits.view(np.float64)
    for j in range(k):
        for i in range(n):
            t = work[j, i] - peak[i]
            y = max(t, _EXP_FLOOR)
            # y <= 0, so truncation toward zero rounds y log2(e) to nearest
            ki = np.int64(y * _LOG2E - 0.5)
            kf = np.float64(ki)
            r = (y - kf * _LN2_HI) - kf * _LN2_LO
            p = 1.0 / 6227020800.0
            p = p * r + 1.0 / 479001600.0
            p = p * r + 1.0 / 39916800.0
            p = p * r + 1.0 / 3628800.0
            p = p * r + 1.0 / 362880.0
            p = p * r + 1.0 / 40320.0
            p = p * r + 1.0 / 5040.0
            p = p * r + 1.0 / 720.0
            p = p * r + 1.0 / 120.0
            p = p * r + 1.0 / 24.0
            p = p * r + 1.0 / 6.0
            p = p * r + 0.5
            p = p * r + 1.0
            p = p * r + 1.0
            bits[i] = (ki + 1023) << 52
            work[j, i] = p if t >= _EXP_FLOOR else 0.0
        for i in range(n):
            e = work[j, i] * scale[i]
            work[j, i] = e
            total[i] += e
    ll = 0.0
    for i in range(n):
        ll += peak[i] + np.log(total[i])
        total[i] = 1.0 / total[i]
    for j in range(k):
        a = 0.0
        b = 0.0
        c2 = 0.0
        for i in range(n):
            r = work[j, i] * total[i]
            rx = r * x[i]
            a += r
            b += rx
            c2 += rx * x[i]
        nk[j] = a
        sx[j] = b
        sxx[j] = c2
    return ll


@njit(cache=True)
def _em_kernel(x, w, mu, sd, var_floor, max_iter, tol, history):
    """EM from (w, mu, sd), updated in place. Returns (loglik, iterations)."""
    n = x.size
    k = w.size
    nk = np.empty(k)
    sx = np.empty(k)
    sxx = np.empty(k)
    work = np.empty((k, n))
    peak = np.empty(n)
    denom = np.empty(n)
    bits = np.empty(n, dtype=np.int64)
    ll_prev = _em_pass(x, w, mu, sd, nk, sx, sxx, work, peak, denom, bits)
    history[0] = ll_prev
    it = 0
    while it < max_iter:
        total = 0.0
        for j in range(k):
            if nk[j] > 0:
                mu[j] = sx[j] / nk[j]
                var = sxx[j] / nk[j] - mu[j] * mu[j]
                sd[j] = np.sqrt(max(var, var_floor))
            # an empty component keeps its mean and spread and a vanishing weight
            w[j] = max(nk[j] / n, 1e-300)
            total += w[j]
        for j in range(k):
            w[j] /= total
        ll = _em_pass(x, w, mu, sd, nk, sx, sxx, work, peak, denom, bits)
        it += 1
        history[it] = ll
        if ll - ll_prev < tol * abs(ll_prev):
            return ll, it
        ll_prev = ll
    return ll_prev, it


def em_run(
    data,
    weights: np.ndarray,
    means: np.ndarray,
    stddevs: np.ndarray,
    cfg: EmConfig = EmConfig(),
    trace: EmTrace | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run EM from given starting points.

    Parameters have shape ``(restarts, k)`` (a 1-D ``(k,)`` start is treated
    as one restart). Returns final ``(weights, means, stddevs, loglik)``.
    Stddevs never drop below ``sqrt(variance_floor_factor * var(data))``.

    Data are centred before fitting (EM is shift-equivariant); this keeps
    the one-pass variance update accurate.
    """
    x = np.asarray(data, dtype=float)
    shift = float(np.mean(x))
    xc = np.ascontiguousarray(x - shift)
    w = np.atleast_2d(np.array(weights, dtype=float))
    mu = np.atleast_2d(np.array(means, dtype=float)) - shift
    sd = np.atleast_2d(np.array(stddevs, dtype=float))
    R = w.shape[0]
    var_floor = _variance_floor(x, cfg)
    sd = np.maximum(sd, math.sqrt(var_floor))
    ll = np.empty(R)
    history = np.empty(cfg.max_iter + 1)
    for r in range(R):
        wr, mr, sr = w[r].copy(), mu[r].copy(), sd[r].copy()
        ll[r], iters = _em_kernel(xc, wr, mr, sr, var_floor, cfg.max_iter, cfg.tol, history)
        w[r], mu[r], sd[r] = wr, mr, sr
        if trace is not None:
            trace.loglik.append(history[: iters + 1].tolist())
            trace.iterations.append(int(iters))
    return w, mu + shift, sd, ll


def _variance_floor(x: np.ndarray, cfg: EmConfig) -> float:
    v = float(np.var(x)) if x.size > 1 else 0.0
    if v <= 0:
        # constant data: scale the floor by the data's magnitude instead
        v = max(float(np.mean(x)) ** 2, 1.0) if x.size else 1.0
    return cfg.variance_floor_factor * v


def initial_params(data, k: int, restarts: int, rng: np.random.Generator):
    """Means at evenly spaced sample quantiles, jittered for every restart after the first."""
    x = np.asarray(data, dtype=float)
    qs = (np.arange(k) + 0.5) / k
    base = np.quantile(x, qs)
    sd = float(np.std(x))
    means = np.tile(base, (restarts, 1))
    if restarts > 1:
        spread = sd / k if sd > 0 else 1.0
        means[1:] += rng.normal(0.0, spread, size=(restarts - 1, k))
    weights = np.full((restarts, k), 1.0 / k)
    stddevs = np.full((restarts, k), sd if sd > 0 else 1.0)
    return weights, means, stddevs


def em_fit(
    data, k: int, cfg: EmConfig = EmConfig(), rng: np.random.Generator | None = None, trace: EmTrace | None = None
) -> tuple[Gmm, float]:
    """Best-of-restarts EM fit of a k-component mixture; returns ``(gmm, loglik)``."""
    x = np.asarray(data, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.size < k or x.size == 0:
        raise InsufficientData(f"{x.size} points cannot support {k} components")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contains non-finite values")
    rng = rng if rng is not None else np.random.default_rng(0)
    restarts = 1 if k == 1 else cfg.restarts
    w0, mu0, sd0 = initial_params(x, k, restarts, rng)
    w, mu, sd, ll = em_run(x, w0, mu0, sd0, cfg, trace)
    best = int(np.argmax(ll))
    order = np.argsort(mu[best], kind="stable")
    g = Gmm.from_arrays(w[best][order], mu[best][order], sd[best][order])
    return g, float(ll[best])


def select_k(data, cfg: EmConfig = EmConfig(), rng: np.random.Generator | None = None) -> Gmm:
    """Fit k = 1 .. min(k_max, n // 10) components and keep the lowest BIC."""
    g, _, _ = select_k_detail(data, cfg, rng)
    return g


def select_k_detail(data, cfg: EmConfig = EmConfig(), rng: np.random.Generator | None = None):
    """Like :func:`select_k` but also returns the BIC of every candidate order."""
    x = np.asarray(data, dtype=float)
    n = x.size
    if n < 2:
        raise InsufficientData(f"need at least 2 points, got {n}")
    rng = rng if rng is not None else np.random.default_rng(0)
    k_top = max(1, min(cfg.k_max, n // 10))
    best = None
    scores = {}
    for k in range(1, k_top + 1):
        g, ll = em_fit(x, k, cfg, rng)
        scores[k] = bic(ll, k, n)
        if best is None or scores[k] < scores[best[1]]:
            best = (g, k)
    return best[0], best[1], scores


# ---------------------------------------------------------------- sampling


def sample_gmm_positive_many(
    g: Gmm, size: int, rng: np.random.Generator, upper: float | None = None, max_upper_redraws: int = 100
) -> np.ndarray:
    """Draw ``size`` strictly positive variates from ``g`` by rejection.

    Non-positive draws are redrawn up to 1000 times; a value still
    unresolved after that becomes the smallest positive component mean, or
    :class:`DegenerateModel` is raised if there is none. With ``upper``,
    draws above it are redrawn up to ``max_upper_redraws`` times and then
    clamped to ``upper``.
    """
    w = np.asarray(g.weights)
    mu = np.asarray(g.means)
    sd = np.asarray(g.stddevs)
    positive_means = mu[mu > 0]
    out = np.empty(size)
    pending = np.arange(size)
    low_tries = np.zeros(size, dtype=int)
    high_tries = np.zeros(size, dtype=int)
    while pending.size:
        comp = rng.choice(g.k, size=pending.size, p=w) if g.k > 1 else np.zeros(pending.size, dtype=int)
        draw = rng.normal(mu[comp], sd[comp])
        low = draw <= 0
        high = ~low & (draw > upper) if upper is not None else np.zeros(pending.size, dtype=bool)
        accept = ~(low | high)
        out[pending[accept]] = draw[accept]
        low_tries[pending[low]] += 1
        high_tries[pending[high]] += 1

        exhausted = low & (low_tries[pending] >= MAX_REJECTIONS)
        if exhausted.any():
            if positive_means.size == 0:
                raise DegenerateModel(f"no positive draw after {MAX_REJECTIONS} attempts from {g}")
            out[pending[exhausted]] = positive_means.min()
        capped = high & (high_tries[pending] > max_upper_redraws)
        out[pending[capped]] = upper
        pending = pending[(low | high) & ~exhausted & ~capped]
    return out


def sample_gmm_positive(g: Gmm, rng: np.random.Generator) -> float:
    return float(sample_gmm_positive_many(g, 1, rng)[0])


# ------------------------------------------------------------- bank fitting

OWN = "own"
MONTH = "month"
GLOBAL = "global"


def fallback_plan(data: dict[MixKey, list[float]], cfg: EmConfig) -> dict[MixKey, str]:
    """Which fit each observed cell uses: its own, its month's pool, or the global pool."""
    month_n: dict[int, int] = {}
    for key, values in data.items():
        month_n[key.month] = month_n.get(key.month, 0) + len(values)
    plan = {}
    for key, values in data.items():
        if not values:
            continue
        if len(values) >= cfg.min_cell_n:
            plan[key] = OWN
        elif month_n[key.month] >= cfg.min_cell_n:
            plan[key] = MONTH
        else:
            plan[key] = GLOBAL
    return plan


def _cell_rng(base: int, *parts: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base, *parts]))


def fit_mixture_bank(
    data: dict[MixKey, list[float]],
    kind: MixtureKind | str,
    cfg: EmConfig = EmConfig(),
    rng: np.random.Generator | None = None,
    slots_per_day: int | None = None,
) -> MixtureBank:
    """Fit one mixture per (month, slot) cell with pooled fallbacks.

    Cells with at least ``min_cell_n`` values get their own BIC-selected
    fit. Other cells of a month whose pooled data reaches ``min_cell_n``
    (including unobserved slots when ``slots_per_day`` is given) use the
    month fit; everything else uses the global fit. Each fit draws from a
    generator seeded by its cell key, so the bank does not depend on the
    order in which cells are processed.
    """
    kind = MixtureKind(kind)
    cells = {k: v for k, v in data.items() if len(v)}
    if not cells:
        raise EmptyTraining(f"no {kind.value} data to fit")
    rng = rng if rng is not None else np.random.default_rng(0)
    base = int(rng.integers(0, 2**63 - 1))

    everything = np.concatenate([np.asarray(cells[k], dtype=float) for k in sorted(cells)])
    if everything.size < 2:
        raise InsufficientData("need at least 2 values in total")
    pooled = select_k(everything, cfg, _cell_rng(base, 0, 0))

    plan = fallback_plan(cells, cfg)
    # a month fit is needed for its small cells, or to fill slots never observed
    needed = {k.month for k, how in plan.items() if how == MONTH}
    if slots_per_day is not None:
        for month in {k.month for k, how in plan.items() if how == OWN}:
            if sum(1 for k in cells if k.month == month) < slots_per_day:
                needed.add(month)
    month_fits: dict[int, Gmm] = {}
    for month in sorted(needed):
        values = np.concatenate([np.asarray(cells[k], dtype=float) for k in sorted(cells) if k.month == month])
        month_fits[month] = select_k(values, cfg, _cell_rng(base, month, 0))

    models: dict[MixKey, Gmm] = {}
    for key in sorted(plan):
        how = plan[key]
        if how == OWN:
            models[key] = select_k(cells[key], cfg, _cell_rng(base, key.month, key.slot + 1))
        elif how == MONTH:
            models[key] = month_fits[key.month]
    if slots_per_day is not None:
        for month, g in month_fits.items():
            for slot in range(slots_per_day):
                models.setdefault(MixKey(month, slot), g)
    return MixtureBank(kind, models, pooled)
