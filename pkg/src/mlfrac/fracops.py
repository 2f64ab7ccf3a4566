r"""Discrete fractional operators on uniform time grids.

These are deliberately independent of the Mittag-Leffler machinery: the L1
scheme for the Caputo derivative and piecewise-linear product integration for
the Riemann-Liouville integral. Samples are stored with time along axis 0 and
any number of trailing axes (components, lattice points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mlfrac.errors import DomainError

__all__ = [
    "TimeGrid",
    "SampledPath",
    "l1_weights",
    "caputo_l1",
    "rl_weights",
    "rl_integral",
    "inverse_identity_check",
]


@dataclass(frozen=True)
class TimeGrid:
    T: float
    steps: int
    t0: float = 0.0

    def __post_init__(self) -> None:
        if self.t0 != 0.0:
            raise DomainError("time grids start at t0 = 0")
        if not self.T > 0:
            raise DomainError(f"T must be positive: {self.T}")
        if self.steps < 2:
            raise DomainError(f"need at least 2 steps: {self.steps}")

    @property
    def h(self) -> float:
        return self.T / self.steps

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.h


@dataclass(frozen=True)
class SampledPath:
    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.samples.shape[0] != self.grid.steps + 1:
            raise DomainError(
                f"expected {self.grid.steps + 1} samples along axis 0, "
                f"got {self.samples.shape[0]}"
            )

    @classmethod
    def from_function(cls, grid: TimeGrid, f) -> "SampledPath":
        return cls(grid, np.asarray(f(grid.t)))


def l1_weights(beta: float, n: int) -> np.ndarray:
    r"""``b_j = (j+1)^{1-beta} - j^{1-beta}`` for ``j = 0..n-1``.

    For :math:`\beta = 1` this is ``[1, 0, 0, ...]`` (backward differences).
    """
    j = np.arange(n, dtype=float)
    if beta == 1.0:
        b = np.zeros(n)
        b[0] = 1.0
        return b
    return (j + 1.0) ** (1.0 - beta) - j ** (1.0 - beta)


def _check_beta(beta: float) -> None:
    if not (0.0 < beta <= 1.0):
        raise DomainError(f"beta must lie in (0, 1]: {beta}")


def caputo_l1(path: SampledPath, beta: float) -> SampledPath:
    r"""L1 approximation of the Caputo derivative :math:`D_t^\beta`.

    .. math::

        D^\beta f(t_n) \approx \frac{h^{-\beta}}{\Gamma(2-\beta)}
            \sum_{j=0}^{n-1} b_j (f_{n-j} - f_{n-j-1})

    The value at :math:`t_0` copies the one at :math:`t_1`.
    """
    _check_beta(beta)
    f = np.asarray(path.samples)
    N = path.grid.steps
    b = l1_weights(beta, N)
    df = np.diff(f, axis=0)  # df[i] = f_{i+1} - f_i
    # D[n] = sum_{i<n} b_{n-1-i} df[i]  (lower-triangular Toeplitz)
    idx = np.arange(N)
    lag = idx[:, None] - idx[None, :]
    W = np.where(lag >= 0, b[np.clip(lag, 0, N - 1)], 0.0)
    scale = path.grid.h ** (-beta) / math.gamma(2.0 - beta)
    flat = df.reshape(N, -1)
    D = scale * (W @ flat)
    out = np.empty((N + 1,) + flat.shape[1:], dtype=np.result_type(f, float))
    out[1:] = D
    out[0] = D[0]
    return SampledPath(path.grid, out.reshape(f.shape))


def rl_weights(beta: float, n: int) -> np.ndarray:
    r"""Product-integration weights for :math:`J^\beta f(t_n)` with
    piecewise-linear ``f``; row ``n`` holds the weights of ``f_0..f_n``
    (without the :math:`h^\beta/\Gamma(\beta+2)` factor).
    """
    a = np.zeros((n + 1, n + 1))
    p = beta + 1.0
    for k in range(1, n + 1):
        a[k, 0] = (k - 1.0) ** p - (k - 1.0 - beta) * k**beta
        j = np.arange(1, k)
        r = k - j
        a[k, 1:k] = (r + 1.0) ** p - 2.0 * r**p + (r - 1.0) ** p
        a[k, k] = 1.0
    return a


def rl_integral(path: SampledPath, beta: float) -> SampledPath:
    r""":math:`J^\beta f(t_n) = \frac{1}{\Gamma(\beta)}\int_0^{t_n}(t_n-\tau)^{\beta-1} f(\tau)\,d\tau`
    by product integration; exact for piecewise-linear ``f``.
    """
    if not beta > 0:
        raise DomainError(f"beta must be positive: {beta}")
    f = np.asarray(path.samples)
    N = path.grid.steps
    a = rl_weights(beta, N)
    scale = path.grid.h**beta / math.gamma(beta + 2.0)
    flat = f.reshape(N + 1, -1)
    out = scale * (a @ flat)
    return SampledPath(path.grid, out.reshape(f.shape))


def inverse_identity_check(path: SampledPath, beta: float) -> float:
    r"""``max |J^beta(D^beta f) - (f - f(0))|`` over the grid."""
    if not (0.0 < beta < 1.0):
        raise DomainError(f"beta must lie in (0, 1): {beta}")
    d = caputo_l1(path, beta)
    back = rl_integral(d, beta).samples
    f = np.asarray(path.samples)
    return float(np.max(np.abs(back - (f - f[0]))))
