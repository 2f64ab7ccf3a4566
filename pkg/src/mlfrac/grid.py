r"""Truncated periodic lattice standing in for :math:`\mathbb{R}^n`.

Transforms follow the convention

.. math::

    F[f](\xi) = \int f(x) e^{i x \xi}\,dx, \qquad
    F^{-1}[g](x) = (2\pi)^{-n} \int g(\xi) e^{-i x \xi}\,d\xi,

discretized on ``x_j = -L/2 + j L/N`` and ``xi_k = 2 pi k / L`` with
``k = -N/2 .. N/2-1``. Frequency-space arrays are stored in FFT index order
(the order of ``numpy.fft.fftfreq``).
"""

from __future__ import annotations

import enum
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

from mlfrac.errors import DomainError, GridMismatch

__all__ = [
    "SpectralGrid",
    "Space",
    "StateField",
    "fft_forward",
    "fft_inverse",
    "sobolev_norm",
    "l2_norm",
    "dealias",
    "set_threads",
    "workers",
]

MAX_POINTS = 2**22

_workers = 1


def set_threads(n: int | None) -> int:
    """Set the FFT worker count; ``0``/``None`` means all cores."""
    global _workers
    if n is None or n == 0:
        n = os.cpu_count() or 1
    if n < 0:
        raise ValueError("thread count must be non-negative")
    _workers = int(n)
    return _workers


@contextmanager
def workers(n: int | None):
    global _workers
    old = _workers
    set_threads(n)
    try:
        yield
    finally:
        _workers = old


@dataclass(frozen=True)
class SpectralGrid:
    extent: tuple[float, ...]
    points: tuple[int, ...]
    max_points: int = field(default=MAX_POINTS, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "extent", tuple(float(L) for L in self.extent))
        object.__setattr__(self, "points", tuple(int(N) for N in self.points))
        if len(self.extent) != len(self.points):
            raise DomainError("extent and points must have the same length")
        if not 1 <= len(self.points) <= 3:
            raise DomainError(f"dimension must be 1..3, got {len(self.points)}")
        for L, N in zip(self.extent, self.points):
            if not L > 0:
                raise DomainError(f"extent must be positive: {L}")
            if N < 4 or N & (N - 1):
                raise DomainError(f"points per axis must be a power of two >= 4: {N}")
        if math.prod(self.points) > self.max_points:
            raise DomainError(
                f"{math.prod(self.points)} lattice points exceed the cap {self.max_points}"
            )

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return math.prod(self.points)

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.extent, self.points))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.dx)

    @property
    def dxi(self) -> tuple[float, ...]:
        return tuple(2.0 * math.pi / L for L in self.extent)

    @property
    def frequency_cell(self) -> float:
        return math.prod(self.dxi)

    def axes(self) -> list[np.ndarray]:
        return [
            -0.5 * L + np.arange(N) * (L / N) for L, N in zip(self.extent, self.points)
        ]

    def wavenumbers(self) -> list[np.ndarray]:
        """Integer mode numbers per axis, FFT order."""
        return [np.rint(np.fft.fftfreq(N, 1.0 / N)).astype(int) for N in self.points]

    @cached_property
    def x(self) -> np.ndarray:
        """Coordinates, shape ``(n, *points)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    @cached_property
    def xi(self) -> np.ndarray:
        """Frequencies, shape ``(n, *points)``, FFT order."""
        ks = [
            k * (2.0 * math.pi / L) for k, L in zip(self.wavenumbers(), self.extent)
        ]
        return np.stack(np.meshgrid(*ks, indexing="ij"))

    @cached_property
    def xi_points(self) -> np.ndarray:
        """Frequencies as a ``(size, n)`` list of lattice points."""
        return self.xi.reshape(self.n, -1).T.copy()

    @cached_property
    def xi_norm2(self) -> np.ndarray:
        return np.sum(self.xi**2, axis=0)

    @cached_property
    def _phase(self) -> np.ndarray:
        # e^{i x_0 xi_k} with x_0 = -L/2 gives (-1)^k per axis
        signs = [np.where(k % 2 == 0, 1.0, -1.0) for k in self.wavenumbers()]
        out = signs[0]
        for s in signs[1:]:
            out = np.multiply.outer(out, s)
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with ``|k_d| <= N_d / 3`` on every axis."""
        masks = [np.abs(k) <= N // 3 for k, N in zip(self.wavenumbers(), self.points)]
        out = masks[0]
        for m in masks[1:]:
            out = np.logical_and.outer(out, m)
        return out

    def check_compatible(self, other: "SpectralGrid") -> None:
        if self != other:
            raise GridMismatch(f"grid mismatch: {self} vs {other}")


class Space(str, enum.Enum):
    PHYSICAL = "physical"
    FREQUENCY = "frequency"


@dataclass(frozen=True)
class StateField:
    """An ``m``-component complex field; ``data`` has shape ``(m, *points)``."""

    grid: SpectralGrid
    data: np.ndarray
    space: Space = Space.PHYSICAL

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=complex)
        if data.ndim == self.grid.n:
            data = data[None]
        if data.shape[1:] != self.grid.shape:
            raise GridMismatch(
                f"field shape {data.shape[1:]} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "space", Space(self.space))

    @property
    def m(self) -> int:
        return self.data.shape[0]

    def to_physical(self) -> "StateField":
        return self if self.space is Space.PHYSICAL else fft_inverse(self)

    def to_frequency(self) -> "StateField":
        return self if self.space is Space.FREQUENCY else fft_forward(self)

    def with_data(self, data: np.ndarray) -> "StateField":
        return StateField(self.grid, data, self.space)

    def conjugate_symmetry_error(self) -> float:
        """Max deviation from ``F(-xi) = conj(F(xi))`` (real physical data)."""
        F = self.to_frequency().data
        axes = tuple(range(1, F.ndim))
        flipped = np.roll(np.flip(F, axis=axes), 1, axis=axes)
        return float(np.max(np.abs(F - np.conj(flipped)), initial=0.0))

    def __add__(self, other: "StateField") -> "StateField":
        self.grid.check_compatible(other.grid)
        if self.space is not other.space:
            other = other.to_frequency() if self.space is Space.FREQUENCY else other.to_physical()
        return self.with_data(self.data + other.data)

    def __sub__(self, other: "StateField") -> "StateField":
        return self + other.scale(-1.0)

    def scale(self, a: complex) -> "StateField":
        return self.with_data(a * self.data)


def _space_axes(grid: SpectralGrid) -> tuple[int, ...]:
    return tuple(range(1, grid.n + 1))


def fft_forward(f: StateField) -> StateField:
    if f.space is not Space.PHYSICAL:
        raise ValueError("fft_forward expects a physical-space field")
    g = f.grid
    axes = _space_axes(g)
    F = scipy.fft.ifftn(f.data, axes=axes, workers=_workers) * (g.size * g.cell_volume)
    return StateField(g, F * g._phase, Space.FREQUENCY)


def fft_inverse(F: StateField) -> StateField:
    if F.space is not Space.FREQUENCY:
        raise ValueError("fft_inverse expects a frequency-space field")
    g = F.grid
    axes = _space_axes(g)
    f = scipy.fft.fftn(F.data * g._phase, axes=axes, workers=_workers)
    return StateField(g, f / math.prod(g.extent), Space.PHYSICAL)


def sobolev_norm(f: StateField, a: float = 0.0) -> float:
    r"""Discrete :math:`\|f\|_{L_2^a}` with
    :math:`\|f\|^2 = (2\pi)^{-n}\int |F f|^2 (1+|\xi|^2)^a d\xi`, summed over
    components."""
    if a < 0:
        raise DomainError("Sobolev index must be non-negative")
    g = f.grid
    F = f.to_frequency().data
    weight = (1.0 + g.xi_norm2) ** a
    total = np.sum(np.abs(F) ** 2 * weight)
    return float(math.sqrt(total * g.frequency_cell / (2.0 * math.pi) ** g.n))


def l2_norm(f: StateField, componentwise: bool = False):
    """Physical-space quadrature of the L2 norm."""
    g = f.grid
    u = f.to_physical().data
    per = np.sqrt(np.sum(np.abs(u) ** 2, axis=_space_axes(g)) * g.cell_volume)
    return per if componentwise else float(math.sqrt(np.sum(per**2)))


def dealias(F: StateField) -> StateField:
    if F.space is not Space.FREQUENCY:
        F = F.to_frequency()
    return F.with_data(np.where(F.grid.dealias_mask, F.data, 0.0))
