r"""Linear solver: Mittag-Leffler propagator plus the fractional Duhamel term.

Per lattice frequency the symbol is diagonalized once, :math:`\mathcal{A} =
M \Lambda M^H`, and

.. math::

    \hat U(t) = M E_\beta(-\Lambda t^\beta) M^H \hat\Phi
        + \int_0^t M \eta^{\beta-1} E_{\beta,\beta}(-\Lambda\eta^\beta) M^H
          \hat H(t-\eta)\, d\eta .

The Duhamel integral uses product integration: ``H`` is interpolated linearly
in time and the weakly singular kernel is integrated exactly through its
first two antiderivatives

.. math::

    G_1(s) = s^\beta E_{\beta,\beta+1}(-\lambda s^\beta), \qquad
    G_2(s) = s^{\beta+1} E_{\beta,\beta+2}(-\lambda s^\beta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from mlfrac.errors import DomainError, GridMismatch, ValidationFailure
from mlfrac.grid import Space, SpectralGrid, StateField, sobolev_norm
from mlfrac.mlf import mittag_leffler
from mlfrac.symbol import (
    MatrixSymbol,
    ValidationReport,
    eig_hermitian_batch,
    validate_conditions_A,
    with_validated_radius,
)

__all__ = [
    "Propagator",
    "SourceSpec",
    "DuhamelWeights",
    "apply_S",
    "apply_duhamel",
    "solve_linear",
    "coercive_diagnostic",
    "green_kernels",
]

NEGATIVE_EIG_TOL = 1e-12


class Propagator:
    """Eigen-decomposed symbol on every lattice point of ``grid``.

    The decomposition is computed once at construction and reused for every
    time and every Picard sweep; arrays are read-only afterwards.
    """

    def __init__(self, grid: SpectralGrid, sym: MatrixSymbol, beta: float) -> None:
        if not (0.0 < beta <= 1.0):
            raise DomainError(f"beta must lie in (0, 1]: {beta}")
        if grid.n != sym.n:
            raise GridMismatch(f"grid dimension {grid.n} != symbol dimension {sym.n}")
        report = validate_conditions_A(sym, grid)
        if not report.solver_admissible:
            raise ValidationFailure(
                f"symbol has negative eigenvalues at {len(report.negative_points)} "
                f"lattice points (min {report.min_eigenvalue:.3e}); shrink the "
                "domain so the smallest nonzero frequency lies beyond R0",
                report,
            )
        self.grid = grid
        self.sym = with_validated_radius(sym, report)
        self.beta = float(beta)
        self.report: ValidationReport = report

        A = sym.entry_array(grid.xi_points)
        lam, M = eig_hermitian_batch(A)
        lam = np.where(lam < 0.0, 0.0, lam)  # clamp roundoff-level negatives
        for arr in (A, lam, M):
            arr.setflags(write=False)
        self.A = A  # (P, m, m)
        self.lambdas = lam  # (P, m)
        self.M = M  # (P, m, m), columns are eigenvectors
        self.Mh = np.conj(np.swapaxes(M, -1, -2))

    @property
    def m(self) -> int:
        return self.sym.m

    @property
    def P(self) -> int:
        return self.grid.size

    # {{{ coordinate changes (flat frequency data (m, P) <-> modes (P, m))

    def to_modes(self, Fhat: np.ndarray) -> np.ndarray:
        """``(..., m, *shape)`` frequency data -> ``(..., P, m)`` mode amplitudes."""
        lead = Fhat.shape[: Fhat.ndim - 1 - self.grid.n]
        flat = Fhat.reshape(lead + (self.m, self.P))
        return np.einsum("pqk,...kp->...pq", self.Mh, flat)

    def from_modes(self, c: np.ndarray) -> np.ndarray:
        lead = c.shape[:-2]
        out = np.einsum("pjq,...pq->...jp", self.M, c)
        return out.reshape(lead + (self.m,) + self.grid.shape)

    def apply_symbol(self, Fhat: np.ndarray) -> np.ndarray:
        """Multiply frequency data ``(m, *shape)`` by the matrix symbol."""
        flat = Fhat.reshape(self.m, self.P)
        out = np.einsum("pjk,kp->jp", self.A, flat)
        return out.reshape(Fhat.shape)

    # }}}

    def ml_diag(self, mu: float, t: float) -> np.ndarray:
        """``E_{beta,mu}(-lambda t^beta)`` for every mode, shape ``(P, m)``."""
        return mittag_leffler(self.beta, mu, -self.lambdas * t**self.beta)

    def symbol_S(self, t: float) -> np.ndarray:
        """``M E_beta(-Lambda t^beta) M^H`` per lattice point, ``(P, m, m)``."""
        E = self.ml_diag(1.0, t)
        return np.einsum("pjq,pq,pqk->pjk", self.M, E, self.Mh)

    def symbol_Sprime(self, t: float) -> np.ndarray:
        if t <= 0:
            raise DomainError("S'(t) needs t > 0")
        E = t ** (self.beta - 1.0) * self.ml_diag(self.beta, t)
        return np.einsum("pjq,pq,pqk->pjk", self.M, E, self.Mh)


# {{{ sources


@dataclass(frozen=True)
class SourceSpec:
    """Right-hand side ``H(t, x)`` in physical space.

    ``kind`` is ``"zero"``, ``"sampled"`` (``samples[i]`` at ``times[i]``,
    linearly interpolated) or ``"callback"`` (``evaluator(t)`` returning an
    ``(m, *shape)`` array).
    """

    kind: str = "zero"
    times: np.ndarray | None = None
    samples: np.ndarray | None = None
    evaluator: Callable[[float], np.ndarray] | None = None
    time_independent: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "sampled", "callback"):
            raise DomainError(f"unknown source kind {self.kind!r}")
        if self.kind == "sampled":
            if self.times is None or self.samples is None:
                raise DomainError("sampled source needs times and samples")
            times = np.asarray(self.times, dtype=float)
            if times[0] > 0 or np.any(np.diff(times) <= 0):
                raise DomainError("sample times must increase from 0")
            object.__setattr__(self, "times", times)
            object.__setattr__(self, "samples", np.asarray(self.samples, dtype=complex))
        if self.kind == "callback" and self.evaluator is None:
            raise DomainError("callback source needs an evaluator")

    @classmethod
    def zero(cls) -> "SourceSpec":
        return cls("zero")

    @classmethod
    def constant(cls, values: np.ndarray) -> "SourceSpec":
        values = np.asarray(values, dtype=complex)
        return cls("callback", evaluator=lambda t: values, time_independent=True)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def at(self, t: float, grid: SpectralGrid, m: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros((m,) + grid.shape, dtype=complex)
        if self.kind == "callback":
            out = np.asarray(self.evaluator(t), dtype=complex)
        else:
            times = self.times
            if t > times[-1] * (1 + 1e-12):
                raise DomainError(f"source sampled only up to {times[-1]}, asked {t}")
            i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
            w = (t - times[i]) / (times[i + 1] - times[i])
            out = (1 - w) * self.samples[i] + w * self.samples[i + 1]
        out = out.reshape((m,) + grid.shape) if out.size == m * grid.size else out
        if out.shape != (m,) + grid.shape:
            raise GridMismatch(f"source returned shape {out.shape}")
        return out


def _source_modes(prop: Propagator, H: SourceSpec, times: np.ndarray) -> np.ndarray:
    """Mode amplitudes of ``H`` at ``times``: shape ``(len(times), P, m)``."""
    from mlfrac.grid import fft_forward

    out = np.empty((len(times), prop.P, prop.m), dtype=complex)
    for i, t in enumerate(times):
        Fh = fft_forward(StateField(prop.grid, H.at(float(t), prop.grid, prop.m))).data
        out[i] = prop.to_modes(Fh)
    return out


# }}}


# {{{ Duhamel weights


class DuhamelWeights:
    r"""Product-integration weights on the uniform grid ``sigma_i = i h``.

    For ``t_n = n h`` the Duhamel term in mode coordinates is

    ``W_n = c0 * h_n + sum_{i=1}^{n-1} interior[i] * h_{n-i} + end[n] * h_0``.
    """

    def __init__(self, prop: Propagator, h: float, N: int) -> None:
        beta = prop.beta
        s = h * np.arange(N + 1)
        lam = prop.lambdas
        z = -lam[None, :, :] * (s[:, None, None] ** beta)
        G1 = (s ** beta)[:, None, None] * mittag_leffler(beta, beta + 1.0, z)
        G2 = (s ** (beta + 1.0))[:, None, None] * mittag_leffler(beta, beta + 2.0, z)
        self.h = h
        self.N = N
        self.c0 = G2[1] / h
        interior = np.zeros_like(G2)
        interior[1:N] = (G2[2:] - 2.0 * G2[1:-1] + G2[:-2]) / h
        self.interior = interior
        end = np.zeros_like(G2)
        end[1:] = (h * G1[1:] - G2[1:] + G2[:-1]) / h
        self.end = end
        self.G1 = G1

    def weights_for(self, n: int) -> np.ndarray:
        """Weights multiplying ``h_0 .. h_n`` for output node ``n``."""
        w = np.zeros((n + 1,) + self.c0.shape)
        if n == 0:
            return w
        w[n] = self.c0
        if n > 1:
            w[1:n] = self.interior[n - 1 : 0 : -1]
        w[0] += self.end[n]
        return w

    def convolve(self, hm: np.ndarray, n: int) -> np.ndarray:
        """Duhamel term at node ``n`` from mode samples ``hm[0..n]``."""
        if n == 0:
            return np.zeros(hm.shape[1:], dtype=complex)
        out = self.c0 * hm[n] + self.end[n] * hm[0]
        if n > 1:
            out = out + np.einsum("ipq,ipq->pq", self.interior[n - 1 : 0 : -1], hm[1:n])
        return out


# }}}


def _check_field(prop: Propagator, F: StateField) -> None:
    prop.grid.check_compatible(F.grid)
    if F.m != prop.m:
        raise GridMismatch(f"field has {F.m} components, symbol has {prop.m}")


def apply_S(prop: Propagator, t: float, Phi: StateField) -> StateField:
    """``S(t, D) Phi``, returned in physical space."""
    _check_field(prop, Phi)
    if t < 0:
        raise DomainError("t must be non-negative")
    Fhat = Phi.to_frequency()
    if t == 0:
        return Fhat.to_physical()
    c = prop.to_modes(Fhat.data) * prop.ml_diag(1.0, t)
    return StateField(prop.grid, prop.from_modes(c), Space.FREQUENCY).to_physical()


def _duhamel_modes(prop: Propagator, t: float, H: SourceSpec, nodes: int) -> np.ndarray:
    if H.time_independent:
        hm = _source_modes(prop, H, np.array([0.0]))[0]
        G1 = t**prop.beta * prop.ml_diag(prop.beta + 1.0, t)
        return G1 * hm
    h = t / nodes
    taus = h * np.arange(nodes + 1)
    hm = _source_modes(prop, H, taus)
    return DuhamelWeights(prop, h, nodes).convolve(hm, nodes)


def apply_duhamel(
    prop: Propagator, t: float, H: SourceSpec, nodes: int = 128
) -> StateField:
    r"""``W(t) = int_0^t S'(eta, D) H(t - eta) d eta`` in physical space."""
    if t <= 0:
        raise DomainError("t must be positive")
    if nodes < 1:
        raise DomainError("need at least one quadrature interval")
    if H.is_zero:
        return StateField(prop.grid, np.zeros((prop.m,) + prop.grid.shape))
    c = _duhamel_modes(prop, t, H, nodes)
    return StateField(prop.grid, prop.from_modes(c), Space.FREQUENCY).to_physical()


def _uniform_steps(t_out: np.ndarray) -> int | None:
    """Number of steps if ``t_out`` is ``0, h, 2h, ..`` else ``None``."""
    if len(t_out) < 3 or t_out[0] != 0.0:
        return None
    n = len(t_out) - 1
    h = t_out[-1] / n
    if np.allclose(t_out, h * np.arange(n + 1), rtol=0, atol=1e-12 * t_out[-1]):
        return n
    return None


def solve_linear(
    prop: Propagator,
    Phi: StateField,
    H: SourceSpec | None,
    t_out: Sequence[float],
    quad_nodes: int = 128,
) -> list[StateField]:
    """Solution at each output time (physical space).

    When ``t_out`` is a uniform grid starting at zero the Duhamel term is
    accumulated on that grid (refined so it has at least ``quad_nodes``
    intervals); otherwise each output time gets its own node set.
    """
    _check_field(prop, Phi)
    H = H or SourceSpec.zero()
    t_out = np.asarray(t_out, dtype=float)
    if np.any(t_out < 0) or np.any(np.diff(t_out) < 0):
        raise DomainError("t_out must be sorted and non-negative")
    Fhat = Phi.to_frequency()
    c0 = prop.to_modes(Fhat.data)

    duhamel: list[np.ndarray | None] = [None] * len(t_out)
    steps = _uniform_steps(t_out)
    if not H.is_zero and steps is not None and not H.time_independent:
        r = max(1, math.ceil(quad_nodes / steps))
        N = steps * r
        h = t_out[-1] / N
        taus = h * np.arange(N + 1)
        hm = _source_modes(prop, H, taus)
        weights = DuhamelWeights(prop, h, N)
        for i in range(len(t_out)):
            duhamel[i] = weights.convolve(hm, i * r)
    elif not H.is_zero:
        for i, t in enumerate(t_out):
            if t > 0:
                duhamel[i] = _duhamel_modes(prop, float(t), H, quad_nodes)

    out = []
    for i, t in enumerate(t_out):
        c = c0 * prop.ml_diag(1.0, float(t)) if t > 0 else c0.copy()
        if duhamel[i] is not None:
            c = c + duhamel[i]
        out.append(StateField(prop.grid, prop.from_modes(c), Space.FREQUENCY).to_physical())
    return out


def coercive_diagnostic(
    prop: Propagator,
    Phi: StateField,
    H: SourceSpec | None,
    t: float,
    samples: int = 33,
) -> tuple[float, float]:
    r"""Left side and data scale of the coercive estimate at time ``t``.

    ``lhs = max_j (|D_t^beta u_j|_inf + sum_k |A_jk(D) u_k|_inf)`` with the
    Caputo derivative read off the equation, and
    ``rhs = sum_k (t^-beta |phi_k|_s + max_t |h_k|_s)``, ``s = n/2 + 1/2 + tau*``.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    from mlfrac.grid import fft_forward, fft_inverse

    H = H or SourceSpec.zero()
    g = prop.grid
    U = solve_linear(prop, Phi, H, [t])[0]
    Uhat = U.to_frequency().data
    Hhat = fft_forward(StateField(g, H.at(t, g, prop.m))).data
    AU = prop.apply_symbol(Uhat)
    DbU = fft_inverse(StateField(g, Hhat - AU, Space.FREQUENCY)).data
    flat = Uhat.reshape(prop.m, -1)
    lhs = 0.0
    for j in range(prop.m):
        val = np.max(np.abs(DbU[j]))
        for k in range(prop.m):
            Ajk = (prop.A[:, j, k] * flat[k]).reshape(g.shape)
            val += np.max(np.abs(fft_inverse(StateField(g, Ajk, Space.FREQUENCY)).data))
        lhs = max(lhs, float(val))

    s = g.n / 2.0 + 0.5 + prop.sym.tau_star
    Phi_f = Phi.to_frequency()
    rhs = 0.0
    for k in range(prop.m):
        rhs += t ** (-prop.beta) * sobolev_norm(
            StateField(g, Phi_f.data[k], Space.FREQUENCY), s
        )
        if not H.is_zero:
            hmax = 0.0
            for tau in np.linspace(0.0, t, samples):
                hk = H.at(float(tau), g, prop.m)[k]
                hmax = max(hmax, sobolev_norm(StateField(g, hk), s))
            rhs += hmax
    return lhs, rhs


def green_kernels(prop: Propagator, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Physical-space kernels ``Z`` (of ``S``) and ``Y`` (of ``S'``), each of
    shape ``(m, m, *shape)``."""
    from mlfrac.grid import fft_inverse

    if t <= 0:
        raise DomainError("t must be positive")
    g = prop.grid
    out = []
    for sym in (prop.symbol_S(t), prop.symbol_Sprime(t)):
        K = np.moveaxis(sym, 0, -1).reshape(prop.m, prop.m, *g.shape)
        phys = np.stack(
            [fft_inverse(StateField(g, K[j], Space.FREQUENCY)).data for j in range(prop.m)]
        )
        out.append(phys)
    return out[0], out[1]
