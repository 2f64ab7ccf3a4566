"""Independent verification engines.

Nothing here touches the Mittag-Leffler propagator: the only shared pieces
are the lattice, the transforms and symbol evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from mlfrac.errors import DomainError, InsufficientSamples, SingularSystem
from mlfrac.fracops import SampledPath, TimeGrid, caputo_l1, l1_weights
from mlfrac.grid import Space, StateField, fft_inverse
from mlfrac.symbol import MatrixSymbol

__all__ = ["ResidualReport", "l1_ode_march", "residual_series", "residual_check", "fit_rate"]

MIN_SAMPLES = 8


@dataclass
class ResidualReport:
    times: np.ndarray
    residual_linf: np.ndarray
    refinement_rate: float = float("nan")
    final_residuals: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.residual_linf) < 0):
            raise ValueError("residuals are norms")

    def as_dict(self) -> dict:
        return {
            "times": np.asarray(self.times).tolist(),
            "residual_linf": np.asarray(self.residual_linf).tolist(),
            "refinement_rate": self.refinement_rate,
            "final_residuals": {str(k): v for k, v in self.final_residuals.items()},
        }


def fit_rate(steps: Sequence[int], errors: Sequence[float]) -> float:
    """Least-squares slope of ``-log(error)`` against ``log(steps)``."""
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(steps) < 2:
        return float("nan")
    slope = np.polyfit(np.log(steps), np.log(errors), 1)[0]
    return float(-slope)


def l1_ode_march(
    A: np.ndarray,
    beta: float,
    u0: np.ndarray,
    Hhat: np.ndarray | None,
    grid: TimeGrid,
) -> SampledPath:
    r"""Implicit L1 scheme for :math:`D^\beta u + A u = H`, :math:`u(0)=u_0`.

    ``A`` is ``(m, m)`` or a batch ``(P, m, m)``; ``u0`` is ``(m,)`` or
    ``(P, m)``; ``Hhat`` is sampled on the grid with a leading time axis or
    ``None``. Each step solves ``(w0 I + A) u^n = w0 (u^{n-1} - history) + H^n``
    with ``w0 = h^-beta / Gamma(2 - beta)``.
    """
    if not (0.0 < beta <= 1.0):
        raise DomainError(f"beta must lie in (0, 1]: {beta}")
    A = np.asarray(A, dtype=complex)
    u0 = np.asarray(u0, dtype=complex)
    batched = A.ndim == 3
    if not batched:
        A = A[None]
        u0 = u0[None]
    P, m, _ = A.shape
    N = grid.steps
    if Hhat is None:
        Hhat = np.zeros((N + 1, P, m), dtype=complex)
    else:
        Hhat = np.asarray(Hhat, dtype=complex).reshape(N + 1, P, m)

    w0 = grid.h ** (-beta) / math.gamma(2.0 - beta)
    system = w0 * np.eye(m)[None] + A
    cond = np.linalg.cond(system)
    if not np.all(np.isfinite(cond)) or np.any(cond > 1e14):
        raise SingularSystem("implicit L1 system is singular")
    inv = np.linalg.inv(system)

    b = l1_weights(beta, N)
    u = np.empty((N + 1, P, m), dtype=complex)
    du = np.zeros((N, P, m), dtype=complex)
    u[0] = u0
    for n in range(1, N + 1):
        rhs = u[n - 1].copy()
        if n > 1:
            # sum_{j=1}^{n-1} b_j (u^{n-j} - u^{n-j-1})
            rhs -= np.einsum("i,ipq->pq", b[n - 1 : 0 : -1], du[: n - 1])
        rhs = w0 * rhs + Hhat[n]
        u[n] = np.einsum("pjk,pk->pj", inv, rhs)
        du[n - 1] = u[n] - u[n - 1]
    return SampledPath(grid, u if batched else u[:, 0])


def residual_series(
    U: Sequence[StateField],
    sym: MatrixSymbol,
    beta: float,
    H,
    time_grid: TimeGrid,
) -> np.ndarray:
    r"""``max |D^beta U + A(D) U - H|`` at ``t_1 .. t_N`` (L1 in time, spectral
    in space).

    ``H`` is a source (anything with ``at(t, grid, m)``), ``None``, or a
    callable ``H(t, u)`` of the physical state for nonlinear problems.
    """
    if len(U) != time_grid.steps + 1:
        raise InsufficientSamples(
            f"expected {time_grid.steps + 1} snapshots, got {len(U)}"
        )
    if len(U) < MIN_SAMPLES:
        raise InsufficientSamples(f"need at least {MIN_SAMPLES} samples, got {len(U)}")
    g = U[0].grid
    phys = np.stack([u.to_physical().data for u in U])
    D = caputo_l1(SampledPath(time_grid, phys), beta).samples
    A = sym.entry_array(g.xi_points)
    m = phys.shape[1]
    res = np.empty(time_grid.steps)
    for n in range(1, time_grid.steps + 1):
        Uh = U[n].to_frequency().data.reshape(m, -1)
        AU = np.einsum("pjk,kp->jp", A, Uh).reshape((m,) + g.shape)
        AU = fft_inverse(StateField(g, AU, Space.FREQUENCY)).data
        r = D[n] + AU
        t = float(time_grid.t[n])
        if callable(H):
            r = r - H(t, phys[n])
        elif H is not None and not H.is_zero:
            r = r - H.at(t, g, m)
        res[n - 1] = float(np.max(np.abs(r)))
    return res


def residual_check(
    U: Sequence[StateField],
    sym: MatrixSymbol,
    beta: float,
    H,
    time_grid: TimeGrid,
    refinements: Sequence[tuple[TimeGrid, Sequence[StateField]]] = (),
) -> ResidualReport:
    """Residual of ``U`` on ``time_grid``; with ``refinements`` (other
    samplings of the same solution) also fits the decay rate of the
    final-time residual against the number of steps."""
    res = residual_series(U, sym, beta, H, time_grid)
    finals = {time_grid.steps: float(res[-1])}
    for grid, Ur in refinements:
        if not math.isclose(grid.T, time_grid.T):
            raise DomainError("refinements must share the horizon T")
        finals[grid.steps] = float(residual_series(Ur, sym, beta, H, grid)[-1])
    steps = sorted(finals)
    rate = fit_rate(steps, [finals[s] for s in steps])
    return ResidualReport(time_grid.t[1:], res, rate, finals)
