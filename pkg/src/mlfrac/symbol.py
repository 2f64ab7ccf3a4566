r"""Polynomial matrix symbols :math:`\mathcal{A}(\xi)` and their spectra."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from mlfrac.errors import (
    ConvergenceFailure,
    DomainError,
    NotHermitian,
    ValidationFailure,
)
from mlfrac.grid import SpectralGrid

__all__ = [
    "PolySymbol",
    "MatrixSymbol",
    "EigenDecomp",
    "ValidationReport",
    "eval_symbol",
    "validate_conditions_A",
    "gershgorin_segments",
    "eig_hermitian",
    "eig_hermitian_batch",
    "characteristic_polynomial",
    "corollary_asymptotics_check",
    "sphere_directions",
    "example_symbol",
    "laplacian_symbol",
]

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class PolySymbol:
    """``sum_alpha a_alpha xi^alpha``; zero coefficients are dropped."""

    n: int
    terms: Mapping[tuple[int, ...], complex] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: dict[tuple[int, ...], complex] = {}
        for alpha, a in dict(self.terms).items():
            alpha = tuple(int(v) for v in alpha)
            if len(alpha) != self.n or any(v < 0 for v in alpha):
                raise DomainError(f"bad multi-index {alpha} for n={self.n}")
            a = complex(a)
            if a != 0:
                clean[alpha] = clean.get(alpha, 0) + a
        object.__setattr__(self, "terms", {k: v for k, v in clean.items() if v != 0})

    @classmethod
    def zero(cls, n: int) -> "PolySymbol":
        return cls(n, {})

    @property
    def order(self) -> int:
        """Largest ``|alpha|``; ``-1`` for the zero polynomial."""
        return max((sum(a) for a in self.terms), default=-1)

    @property
    def is_homogeneous(self) -> bool:
        return len({sum(a) for a in self.terms}) <= 1

    def conj(self) -> "PolySymbol":
        return PolySymbol(self.n, {a: np.conj(c) for a, c in self.terms.items()})

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.n:
            raise DomainError(f"expected xi with last axis {self.n}, got {xi.shape}")
        out = np.zeros(xi.shape[:-1], dtype=complex)
        for alpha, a in self.terms.items():
            term = np.full(xi.shape[:-1], a, dtype=complex)
            for d, p in enumerate(alpha):
                if p:
                    term = term * xi[..., d] ** p
            out = out + term
        return out

    def distance(self, other: "PolySymbol") -> float:
        keys = set(self.terms) | set(other.terms)
        return max(
            (abs(self.terms.get(k, 0) - other.terms.get(k, 0)) for k in keys),
            default=0.0,
        )


@dataclass(frozen=True)
class MatrixSymbol:
    entries: tuple[tuple[PolySymbol, ...], ...]
    R0: float | None = None

    def __post_init__(self) -> None:
        rows = tuple(tuple(r) for r in self.entries)
        object.__setattr__(self, "entries", rows)
        m = len(rows)
        if m < 1 or any(len(r) != m for r in rows):
            raise DomainError("matrix symbol must be square with m >= 1")
        ns = {e.n for r in rows for e in r}
        if len(ns) != 1:
            raise DomainError("all entries must share the spatial dimension")

    @classmethod
    def from_terms(
        cls, n: int, entries: Sequence[Sequence[Mapping[tuple[int, ...], complex]]]
    ) -> "MatrixSymbol":
        return cls(tuple(tuple(PolySymbol(n, t) for t in row) for row in entries))

    @property
    def m(self) -> int:
        return len(self.entries)

    @property
    def n(self) -> int:
        return self.entries[0][0].n

    @property
    def orders(self) -> np.ndarray:
        return np.array([[e.order for e in row] for row in self.entries])

    @property
    def ell_star_max(self) -> int:
        return int(max(self.orders.diagonal()))

    @property
    def ell_star_min(self) -> int:
        return int(min(self.orders.diagonal()))

    @property
    def tau_star(self) -> int:
        return self.ell_star_max - self.ell_star_min

    def __call__(self, xi) -> np.ndarray:
        return eval_symbol(self, xi)

    def entry_array(self, xi) -> np.ndarray:
        """Entries evaluated at ``xi`` of shape ``(..., n)`` -> ``(..., m, m)``."""
        xi = np.asarray(xi, dtype=float)
        out = np.empty(xi.shape[:-1] + (self.m, self.m), dtype=complex)
        for j, k in itertools.product(range(self.m), repeat=2):
            out[..., j, k] = self.entries[j][k](xi)
        return out


def eval_symbol(sym: MatrixSymbol, xi) -> np.ndarray:
    return sym.entry_array(xi)


# {{{ builders


def example_symbol(a: Sequence[float]) -> MatrixSymbol:
    r"""``[[|xi|^2, a.xi], [a.xi, |xi|^2]]`` (Laplacian pair coupled by first
    derivatives)."""
    n = len(a)
    unit = [tuple(int(i == d) for i in range(n)) for d in range(n)]
    lap = {tuple(2 * int(i == d) for i in range(n)): 1.0 for d in range(n)}
    coupling = {unit[d]: float(a[d]) for d in range(n)}
    return MatrixSymbol.from_terms(n, [[lap, coupling], [coupling, lap]])


def laplacian_symbol(n: int, m: int = 1, powers: Sequence[int] | None = None) -> MatrixSymbol:
    """Diagonal symbol ``diag(|xi|^(2 p_j))``."""
    powers = list(powers) if powers is not None else [1] * m
    rows = []
    for j in range(m):
        row = []
        for k in range(m):
            if j != k:
                row.append({})
                continue
            terms: dict[tuple[int, ...], float] = {}
            # multinomial expansion of (xi_1^2 + ... + xi_n^2)^p
            p = powers[j]
            for combo in itertools.product(range(p + 1), repeat=n):
                if sum(combo) != p:
                    continue
                coeff = math.factorial(p)
                for c in combo:
                    coeff //= math.factorial(c)
                terms[tuple(2 * c for c in combo)] = float(coeff)
            row.append(terms)
        rows.append(row)
    return MatrixSymbol.from_terms(n, rows)


# }}}


# {{{ spectra


@dataclass(frozen=True)
class EigenDecomp:
    lambdas: np.ndarray
    M: np.ndarray
    Minv: np.ndarray


def _hermitian_defect(H: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(H - np.conj(np.swapaxes(H, -1, -2)), axis=(-2, -1))
    return d / (1.0 + np.linalg.norm(H, axis=(-2, -1)))


def _require_hermitian(H: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    defect = _hermitian_defect(H)
    if np.any(defect > tol):
        raise NotHermitian(f"relative Hermitian defect {float(np.max(defect)):.2e}")
    return 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))


def gershgorin_segments(H) -> list[tuple[float, float]]:
    H = _require_hermitian(np.asarray(H, dtype=complex))
    absH = np.abs(H)
    radii = absH.sum(axis=1) - np.diag(absH)
    return [(float(c), float(r)) for c, r in zip(np.real(np.diag(H)), radii)]


def _fix_signs(M: np.ndarray) -> np.ndarray:
    """Make the first non-negligible component of each column real-positive."""
    mag = np.abs(M)
    scale = mag.max(axis=-2, keepdims=True)
    first = np.argmax(mag > 1e-12 * np.maximum(scale, 1e-300), axis=-2)
    lead = np.take_along_axis(M, first[..., None, :], axis=-2)
    phase = np.where(np.abs(lead) > 0, np.conj(lead) / np.abs(lead), 1.0)
    return M * phase


def eig_hermitian_batch(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched ``(..., m, m)`` decomposition: ascending eigenvalues and
    unitary eigenvector matrices (columns)."""
    H = _require_hermitian(np.asarray(H, dtype=complex))
    try:
        lam, M = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return lam, _fix_signs(M)


def eig_hermitian(H) -> EigenDecomp:
    lam, M = eig_hermitian_batch(np.asarray(H, dtype=complex))
    return EigenDecomp(lam, M, np.conj(M.T))


def characteristic_polynomial(H) -> np.ndarray:
    """Coefficients of ``det(lambda I - H)`` (highest power first) by the
    Faddeev-LeVerrier recursion; no eigen-solver involved."""
    H = np.asarray(H, dtype=complex)
    m = H.shape[0]
    coeffs = [1.0 + 0j]
    Mk = np.zeros_like(H)
    eye = np.eye(m)
    c = 1.0 + 0j
    for k in range(1, m + 1):
        Mk = H @ Mk + c * eye
        c = -np.trace(H @ Mk) / k
        coeffs.append(c)
    return np.array(coeffs)


# }}}


# {{{ Conditions (A)


@dataclass
class ValidationReport:
    hermitian_ok: bool
    order_dominance_ok: bool
    diagonal_homogeneous_ok: bool
    diagonal_elliptic_ok: bool
    R0: float | None
    min_eigenvalue: float
    nonpositive_points: list[list[float]]
    negative_points: list[list[float]]
    offending_pairs: list[tuple[int, int]]
    orders: list[list[int]]
    tau_star: int
    messages: list[str] = field(default_factory=list)
    R0_lower: float = 0.0  # largest lattice radius that is not positive definite

    @property
    def structural_ok(self) -> bool:
        return (
            self.hermitian_ok
            and self.order_dominance_ok
            and self.diagonal_homogeneous_ok
            and self.diagonal_elliptic_ok
        )

    @property
    def solver_admissible(self) -> bool:
        return self.structural_ok and not self.negative_points

    def as_dict(self) -> dict:
        return {
            "hermitian_ok": self.hermitian_ok,
            "order_dominance_ok": self.order_dominance_ok,
            "diagonal_homogeneous_ok": self.diagonal_homogeneous_ok,
            "diagonal_elliptic_ok": self.diagonal_elliptic_ok,
            "R0": self.R0,
            "R0_lower": self.R0_lower,
            "min_eigenvalue": self.min_eigenvalue,
            "nonpositive_points": self.nonpositive_points,
            "negative_points": self.negative_points,
            "offending_pairs": [list(p) for p in self.offending_pairs],
            "orders": self.orders,
            "tau_star": self.tau_star,
            "solver_admissible": self.solver_admissible,
            "messages": self.messages,
        }


def sphere_directions(n: int, count: int = 64) -> np.ndarray:
    """Deterministic unit vectors covering the sphere in ``R^n``."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # Fibonacci sphere
    i = np.arange(count) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / count)
    th = np.pi * (1.0 + 5.0**0.5) * i
    return np.stack(
        [np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1
    )


def _structural_checks(sym: MatrixSymbol):
    m = sym.m
    msgs: list[str] = []
    herm = True
    for j in range(m):
        for k in range(j, m):
            d = sym.entries[j][k].distance(sym.entries[k][j].conj())
            if d > HERMITIAN_TOL:
                herm = False
                msgs.append(f"A[{j},{k}] is not the conjugate of A[{k},{j}]")
    orders = sym.orders
    offending = []
    for j in range(m):
        for k in range(m):
            if k != j and not orders[j, j] > orders[k, j]:
                offending.append((k, j))
                msgs.append(
                    f"order of A[{k},{j}] ({orders[k, j]}) is not below "
                    f"order of A[{j},{j}] ({orders[j, j]})"
                )
    homog = True
    elliptic = True
    dirs = sphere_directions(sym.n)
    for j in range(m):
        e = sym.entries[j][j]
        if not e.is_homogeneous:
            homog = False
            msgs.append(f"A[{j},{j}] is not homogeneous")
        vals = e(dirs)
        if not (np.all(np.abs(vals.imag) <= 1e-12 * (1 + np.abs(vals))) and np.all(vals.real > 0)):
            elliptic = False
            msgs.append(f"A[{j},{j}] is not positive on the unit sphere")
    return herm, not offending, homog, elliptic, offending, msgs


def validate_conditions_A(
    sym: MatrixSymbol, grid: SpectralGrid, raise_on_failure: bool = True
) -> ValidationReport:
    """Check Hermitianity, order dominance and diagonal ellipticity, then sweep
    the lattice for the positivity radius ``R0``."""
    if grid.n != sym.n:
        raise DomainError(f"grid dimension {grid.n} != symbol dimension {sym.n}")
    herm, dom, homog, ell, offending, msgs = _structural_checks(sym)

    xi = grid.xi_points
    A = sym.entry_array(xi)
    if _hermitian_defect(A).max(initial=0.0) > HERMITIAN_TOL:
        herm = False
        msgs.append("symbol is not Hermitian on the lattice")
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    lam = np.linalg.eigvalsh(A)
    lam_min = lam[:, 0]
    radius = np.sqrt(np.sum(xi**2, axis=1))
    scale = 1.0 + np.linalg.norm(A, axis=(-2, -1))
    nonpos = lam_min <= 0.0
    negative = lam_min < -1e-12 * scale

    # smallest lattice radius beyond which every point is positive definite
    rbad = 0.0
    if np.any(nonpos):
        rbad = float(radius[nonpos].max())
        beyond = radius[radius > rbad]
        R0 = float(beyond.min()) if beyond.size else None
        if R0 is None:
            msgs.append("no lattice radius with positive definite symbol beyond it")
    else:
        R0 = float(radius[radius > 0].min())

    inside = nonpos if R0 is None else nonpos & (radius < R0)
    report = ValidationReport(
        hermitian_ok=herm,
        order_dominance_ok=dom,
        diagonal_homogeneous_ok=homog,
        diagonal_elliptic_ok=ell,
        R0=R0,
        min_eigenvalue=float(lam_min.min()),
        nonpositive_points=xi[inside].tolist(),
        negative_points=xi[negative].tolist(),
        offending_pairs=offending,
        orders=sym.orders.tolist(),
        tau_star=sym.tau_star if homog else -1,
        messages=msgs,
        R0_lower=rbad,
    )
    if raise_on_failure and not report.structural_ok:
        raise ValidationFailure("; ".join(msgs), report)
    return report


def with_validated_radius(sym: MatrixSymbol, report: ValidationReport) -> MatrixSymbol:
    return replace(sym, R0=report.R0)


def corollary_asymptotics_check(
    sym: MatrixSymbol, radii: Iterable[float], directions: int = 64
) -> list[tuple[float, float]]:
    """Max over sampled directions of ``|lambda_j / A_jj - 1|`` at each radius,
    pairing sorted eigenvalues with sorted diagonal entries."""
    herm, dom, homog, ell, _, msgs = _structural_checks(sym)
    if not (herm and dom and homog and ell):
        raise ValidationFailure("; ".join(msgs))
    radii = list(radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise DomainError("radii must be increasing")
    if sym.R0 is not None and radii and radii[0] < sym.R0:
        raise DomainError(f"radii must be >= R0 = {sym.R0}")
    dirs = sphere_directions(sym.n, directions)
    table = []
    for r in radii:
        A = sym.entry_array(r * dirs)
        lam, _ = eig_hermitian_batch(A)
        diag = np.sort(np.real(np.diagonal(A, axis1=-2, axis2=-1)), axis=-1)
        dev = np.abs(lam / diag - 1.0)
        table.append((float(r), float(dev.max())))
    return table


# }}}
