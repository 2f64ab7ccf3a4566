r"""Two-parameter Mittag-Leffler function on the real axis.

.. math::

    E_{\rho,\mu}(z) = \sum_{k=0}^\infty \frac{z^k}{\Gamma(\rho k + \mu)}

Three evaluation regimes are used on the negative axis:

* ``series``: the defining power series, for :math:`|z| \le 1` (and for every
  :math:`z > 0`, where all terms are positive and nothing cancels);
* ``integral``: for :math:`0 < \rho < 1` the Bromwich inversion of
  :math:`s^{\rho-\mu}/(s^\rho + x)` collapses onto the branch cut, giving

  .. math::

      E_{\rho,\mu}(-x) = \frac{X^{1-\mu}}{\pi} \int_0^\infty e^{-X s}
          s^{\rho-\mu}\,
          \frac{s^\rho \sin\pi\mu - \sin\pi(\rho-\mu)}
               {s^{2\rho} + 2 s^\rho \cos\pi\rho + 1}\, ds,
      \qquad X = x^{1/\rho},

  valid for :math:`\mu < 1 + \rho` (used for :math:`\mu < 0.9 + \rho`). The kernel does not depend on ``x``, so a
  single composite Gauss-Legendre rule (in :math:`\log s`) per
  :math:`(\rho, \mu)` turns every evaluation into a dot product;
* ``asymptotic``: :math:`-\sum_{k\ge1} z^{-k}/\Gamma(\mu-\rho k)` truncated at
  its smallest term, once :math:`X \ge 40`.

Parameters with :math:`\mu \ge 0.9+\rho` are reduced with the recurrence
:math:`E_{\rho,\mu}(z) = (E_{\rho,\mu-\rho}(z) - 1/\Gamma(\mu-\rho))/z`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from mlfrac.errors import DomainError, QuadratureError

__all__ = [
    "MLParams",
    "MLEvalResult",
    "Regime",
    "ml_eval",
    "mittag_leffler",
    "ml_bound_check",
    "ml_laplace_pair_check",
]

# |z| below which the negative-axis series is used (rounding stays O(eps))
SERIES_RADIUS = 1.0
# X = |z|^(1/rho) above which the asymptotic expansion is used
ASYMPTOTIC_X = 40.0
ASYMPTOTIC_FALLBACK_TOL = 1e-10
_MAX_ASYMPTOTIC_TERMS = 120
_EPS = np.finfo(float).eps
_LOG_MAX = math.log(np.finfo(float).max)


class Regime(str, enum.Enum):
    SERIES = "series"
    ASYMPTOTIC = "asymptotic"
    INTEGRAL = "integral"


_REGIME_CODES = (Regime.SERIES, Regime.ASYMPTOTIC, Regime.INTEGRAL)


@dataclass(frozen=True)
class MLParams:
    rho: float
    mu: float

    def __post_init__(self) -> None:
        if not (0.0 < self.rho <= 1.0) or not math.isfinite(self.rho):
            raise DomainError(f"rho must lie in (0, 1]: got {self.rho}")
        if not (self.mu > 0.0) or not math.isfinite(self.mu):
            raise DomainError(f"mu must be positive: got {self.mu}")


@dataclass(frozen=True)
class MLEvalResult:
    value: float
    regime: Regime
    est_abs_error: float

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "regime": self.regime.value,
            "est_abs_error": self.est_abs_error,
        }


# {{{ series


def _series_terms_needed(rho: float, mu: float, radius: float) -> int:
    logr = math.log(radius) if radius > 0 else -np.inf
    k = 8
    while k * logr - math.lgamma(rho * k + mu) > -42.0:
        k += 8
    return k + 8


def _series_negative(rho: float, mu: float, z: np.ndarray):
    """Power series for |z| <= SERIES_RADIUS (any sign)."""
    radius = float(np.max(np.abs(z))) if z.size else 0.0
    kmax = _series_terms_needed(rho, mu, max(radius, 1e-300))
    k = np.arange(kmax + 2, dtype=float)
    coeff = special.rgamma(rho * k + mu)
    powers = z[:, None] ** k[None, :]
    terms = powers * coeff[None, :]
    value = terms[:, :kmax].sum(axis=1)
    tail = np.abs(terms[:, kmax:]).sum(axis=1)
    err = tail + 4.0 * _EPS * np.abs(terms[:, :kmax]).sum(axis=1)
    return value, err


def _series_positive(rho: float, mu: float, z: float) -> tuple[float, float]:
    if z == 0.0:
        return float(special.rgamma(mu)), 0.0
    logz = math.log(z)
    # dominant growth: log of the leading exponential term of E_{rho,mu}(z)
    big = z ** (1.0 / rho)
    log_est = big + (1.0 - mu) / rho * logz - math.log(rho)
    if big > 1.0 and log_est > _LOG_MAX:
        raise OverflowError(
            f"E_{{{rho},{mu}}}({z}) exceeds the floating point range"
        )
    kmax = int(2.0 * max(big, 1.0) / rho + 60)
    while True:
        k = np.arange(kmax, dtype=float)
        logterms = k * logz - special.gammaln(rho * k + mu)
        if logterms[-1] < logterms.max() - 60.0 and logterms[-1] < -40.0:
            break
        kmax *= 2
    peak = logterms.max()
    scaled = np.exp(logterms - peak)
    total = scaled.sum()
    if peak + math.log(total) > _LOG_MAX:
        raise OverflowError(f"E_{{{rho},{mu}}}({z}) exceeds the floating point range")
    value = math.exp(peak) * total
    return value, 4.0 * _EPS * value + math.exp(logterms[-1])


# }}}


# {{{ asymptotic


def _asymptotic(rho: float, mu: float, z: np.ndarray):
    k = np.arange(1, _MAX_ASYMPTOTIC_TERMS + 1, dtype=float)
    coeff = special.rgamma(mu - rho * k)
    # |Gamma| envelope so that exact zeros of 1/Gamma do not fake a small term
    env = np.exp(-special.gammaln(np.abs(mu - rho * k) + 1.0)) * (
        np.abs(mu - rho * k) + 1.0
    )
    x = -z
    logx = np.log(x)
    terms = -np.exp(-np.outer(logx, k)) * np.where(k % 2 == 1, -1.0, 1.0) * coeff
    # magnitude proxy using the envelope of 1/Gamma
    mags = np.exp(-np.outer(logx, k)) / np.maximum(env, 1e-300)
    kstar = np.argmin(mags, axis=1)
    idx = np.arange(_MAX_ASYMPTOTIC_TERMS)[None, :]
    mask = idx < kstar[:, None]
    value = np.where(mask, terms, 0.0).sum(axis=1)
    err = mags[np.arange(z.size), kstar]
    big = x ** (1.0 / rho)
    err = err + np.exp(-big) * np.maximum(1.0, big ** max(1.0 - mu, 0.0)) / (
        rho * max(math.sin(math.pi * rho), 1e-3)
    )
    err = err + 4.0 * _EPS * np.abs(np.where(mask, terms, 0.0)).sum(axis=1)
    return value, err


# }}}


# {{{ integral


@lru_cache(maxsize=64)
def _integral_rule(rho: float, mu: float, order: int):
    """Nodes ``s_k`` and weights ``W_k`` with
    ``E(-x) ~= X**(1-mu)/pi * sum_k W_k exp(-X s_k)``.

    Arrays are made read-only so the cached rule can be shared safely.
    """
    p = 1.0 + rho - mu
    sin_r = math.sin(math.pi * rho)
    width0 = min(0.25, 0.5 * sin_r / rho)

    w_hi = 5.0
    w_lo = -45.0 / p
    edges = set(np.round(np.arange(-8.0, w_hi + 1e-12, 0.25), 12).tolist())
    # refine around the kernel peak at s = 1
    if width0 < 0.25:
        span = 20.0 * width0
        edges.update(np.round(np.arange(-span, span + 1e-12, width0), 12).tolist())
    # geometric panels towards the lower cut-off
    w, step = -8.0, 0.25
    while w > w_lo:
        step = min(step * 1.5, 4.0)
        w -= step
        edges.add(max(w, w_lo))
    edges = np.array(sorted(e for e in edges if w_lo <= e <= w_hi))

    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    wn = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    ww = (half[:, None] * wg[None, :]).ravel()

    s = np.exp(wn)
    sr = s**rho
    num = sr * math.sin(math.pi * mu) - math.sin(math.pi * (rho - mu))
    den = sr * sr + 2.0 * sr * math.cos(math.pi * rho) + 1.0
    weights = ww * np.exp(p * wn) * num / den
    s.setflags(write=False)
    weights.setflags(write=False)
    return s, weights


def _integral(rho: float, mu: float, z: np.ndarray, with_error: bool):
    if z.size == 0:
        return np.zeros(0), np.zeros(0)
    big = (-z) ** (1.0 / rho)
    if np.any(big > 1.0e3):
        raise QuadratureError("integral representation outside its design range")
    s, w = _integral_rule(rho, mu, 24)
    value = np.empty(z.size)
    # chunk to bound the temporary (npts x nodes) matrix
    chunk = max(1, 2_000_000 // s.size)
    for i in range(0, z.size, chunk):
        sl = slice(i, i + chunk)
        value[sl] = np.exp(-np.outer(big[sl], s)) @ w
    prefactor = big ** (1.0 - mu) / math.pi
    value *= prefactor
    if not with_error:
        return value, np.zeros_like(value)
    s2, w2 = _integral_rule(rho, mu, 16)
    coarse = np.empty(z.size)
    chunk = max(1, 2_000_000 // s2.size)
    for i in range(0, z.size, chunk):
        sl = slice(i, i + chunk)
        coarse[sl] = np.exp(-np.outer(big[sl], s2)) @ w2
    coarse *= prefactor
    err = np.abs(value - coarse) + 16.0 * _EPS * np.abs(value)
    return value, err


def _rho_one_integral(mu: float, z: np.ndarray):
    """E_{1,mu}(z) = (1/Gamma(mu-1)) int_0^1 e^{zs} (1-s)^{mu-2} ds, 1 < mu < 2."""
    val = np.empty(z.size)
    err = np.empty(z.size)
    g = special.rgamma(mu - 1.0)
    for i, zi in enumerate(z):
        v, e = integrate.quad(
            lambda s, zi=zi: math.exp(zi * s),
            0.0,
            1.0,
            weight="alg",
            wvar=(0.0, mu - 2.0),
            epsabs=1e-15,
            epsrel=1e-13,
        )
        val[i], err[i] = g * v, g * e
    return val, err


# }}}


def _ml(rho: float, mu: float, z: np.ndarray, with_error: bool):
    """Core evaluator: returns ``(value, err, regime_code)`` arrays."""
    z = np.asarray(z, dtype=float)
    val = np.empty(z.shape)
    err = np.zeros(z.shape)
    reg = np.zeros(z.shape, dtype=np.int8)

    if rho == 1.0 and mu == 1.0:
        val[...] = np.exp(z)
        err[...] = _EPS * np.abs(val)
        return val, err, reg

    pos = z > 0
    small = (~pos) & (np.abs(z) <= SERIES_RADIUS)
    rest = ~(pos | small)

    for i in np.flatnonzero(pos):
        val[i], err[i] = _series_positive(rho, mu, float(z[i]))

    if np.any(small):
        v, e = _series_negative(rho, mu, z[small])
        val[small], err[small] = v, e

    if not np.any(rest):
        return val, err, reg

    zr = z[rest]
    # the branch-cut kernel needs 1 + rho - mu bounded away from zero
    if 1.0 + rho - mu < 0.1:
        v, e, r = _ml(rho, mu - rho, zr, with_error)
        val[rest] = (v - special.rgamma(mu - rho)) / zr
        err[rest] = e / np.abs(zr)
        reg[rest] = r
        return val, err, reg

    if rho == 1.0:
        if mu > 1.0:
            v, e = _rho_one_integral(mu, zr)
        else:
            up, e, _ = _ml(rho, mu + 1.0, zr, with_error)
            v = zr * up + special.rgamma(mu)
            e = e * np.abs(zr)
        val[rest], err[rest], reg[rest] = v, e, 2
        return val, err, reg

    big = (-zr) ** (1.0 / rho)
    v = np.empty(zr.size)
    e = np.empty(zr.size)
    r = np.empty(zr.size, dtype=np.int8)
    use_asym = big >= ASYMPTOTIC_X
    if np.any(use_asym):
        va, ea = _asymptotic(rho, mu, zr[use_asym])
        v[use_asym], e[use_asym], r[use_asym] = va, ea, 1
        bad = np.zeros_like(use_asym)
        bad[use_asym] = ea > ASYMPTOTIC_FALLBACK_TOL * np.maximum(np.abs(va), 1e-300)
        use_asym &= ~bad
    use_int = ~use_asym
    if np.any(use_int):
        vi, ei = _integral(rho, mu, zr[use_int], with_error)
        v[use_int], e[use_int], r[use_int] = vi, ei, 2
    val[rest], err[rest], reg[rest] = v, e, r
    return val, err, reg


def mittag_leffler(rho: float, mu: float, z) -> np.ndarray:
    """Vectorized :math:`E_{\\rho,\\mu}(z)` for real ``z`` (no error estimate)."""
    MLParams(rho, mu)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("z must be finite")
    flat = z.ravel()
    # evaluate each distinct argument once
    uniq, inverse = np.unique(flat, return_inverse=True)
    val, _, _ = _ml(float(rho), float(mu), uniq, with_error=False)
    return val[inverse].reshape(z.shape)


def ml_eval(params: MLParams, z: float) -> MLEvalResult:
    """Evaluate :math:`E_{\\rho,\\mu}(z)` with the regime used and an error estimate."""
    z = float(z)
    if not math.isfinite(z):
        raise DomainError("z must be finite")
    val, err, reg = _ml(params.rho, params.mu, np.array([z]), with_error=True)
    return MLEvalResult(float(val[0]), _REGIME_CODES[int(reg[0])], float(err[0]))


def ml_bound_check(params: MLParams, t: float, C: float) -> bool:
    """Return whether ``|E(-t)| <= C / (1 + t)``."""
    if t < 0:
        raise DomainError("t must be non-negative")
    if C <= 0:
        raise DomainError("C must be positive")
    return abs(ml_eval(params, -t).value) <= C / (1.0 + t)


def ml_laplace_pair_check(
    params: MLParams, lam: float, s: float, tol: float = 1e-12
) -> float:
    r"""Absolute discrepancy between the numerical Laplace transform of
    :math:`t^{\mu-1} E_{\rho,\mu}(-\lambda t^\rho)` and
    :math:`s^{\rho-\mu} / (s^\rho + \lambda)`.
    """
    rho, mu = params.rho, params.mu
    if lam <= 0 or s <= 0:
        raise DomainError("lambda and s must be positive")
    if abs(lam * s**-rho) >= 1.0:
        raise DomainError("requires |lambda s^-rho| < 1")

    # substitute u = s t so the quadrature panels do not depend on s
    def f(u: float) -> float:
        return math.exp(-u) * float(mittag_leffler(rho, mu, -lam * (u / s) ** rho))

    # u^(mu-1) is carried by the algebraic weight on the first panel
    head, e0 = integrate.quad(
        f, 0.0, 1.0, weight="alg", wvar=(mu - 1.0, 0.0), epsabs=tol, epsrel=tol,
        limit=200,
    )
    # tail: e^{-u} decay, truncated where it falls below tol
    u_max = 40.0 + abs(math.log(tol))
    tail, e1 = integrate.quad(
        lambda u: u ** (mu - 1.0) * f(u), 1.0, u_max, epsabs=tol, epsrel=tol,
        limit=400,
    )
    truncation = math.exp(-u_max) * u_max ** max(mu - 1.0, 0.0)
    scale = s ** (-mu)
    err = scale * (e0 + e1 + truncation)
    if err > 1e3 * tol * max(1.0, scale):
        raise QuadratureError(f"Laplace quadrature error {err:.2e} above tolerance")
    exact = s ** (rho - mu) / (s**rho + lam)
    return abs(scale * (head + tail) - exact)
