import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlfrac.errors import NotHermitian, ValidationFailure
from mlfrac.grid import SpectralGrid
from mlfrac.symbol import (
    MatrixSymbol,
    PolySymbol,
    characteristic_polynomial,
    corollary_asymptotics_check,
    eig_hermitian,
    eig_hermitian_batch,
    example_symbol,
    gershgorin_segments,
    laplacian_symbol,
    validate_conditions_A,
    with_validated_radius,
)


def random_hermitian(rng, m):
    X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    return X + X.conj().T


def test_poly_symbol():
    p = PolySymbol(2, {(2, 0): 1.0, (0, 2): 1.0, (1, 0): 1j})
    assert p.order == 2
    assert not p.is_homogeneous
    assert PolySymbol.zero(2).order == -1
    xi = np.array([[1.0, 2.0], [0.0, -1.0]])
    assert np.allclose(p(xi), [5 + 1j, 1.0])
    assert np.allclose(p.conj()(xi), np.conj(p(xi)))


@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 6))
def test_gershgorin_contains_eigenvalues(seed, m):
    H = random_hermitian(np.random.default_rng(seed), m)
    lam = np.linalg.eigvalsh(H)
    segs = gershgorin_segments(H)
    for v in lam:
        assert any(abs(v - c) <= r * (1 + 1e-12) + 1e-12 for c, r in segs)


@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 5))
def test_decomposition(seed, m):
    H = random_hermitian(np.random.default_rng(seed), m)
    d = eig_hermitian(H)
    assert np.allclose(d.M @ np.diag(d.lambdas) @ d.Minv, H, atol=1e-10)
    assert np.allclose(d.Minv @ d.M, np.eye(m), atol=1e-12)
    # first non-negligible component of each eigenvector is real-positive
    for col in d.M.T:
        lead = col[np.argmax(np.abs(col) > 1e-12 * np.abs(col).max())]
        assert abs(lead.imag) < 1e-14 and lead.real > 0
    # independent characteristic polynomial
    roots = np.sort(np.roots(characteristic_polynomial(H)).real)
    assert np.allclose(roots, d.lambdas, atol=1e-8 * (1 + np.abs(d.lambdas).max()))


def test_not_hermitian():
    with pytest.raises(NotHermitian):
        gershgorin_segments(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotHermitian):
        eig_hermitian_batch(np.array([[[1.0, 1j], [1j, 1.0]]]))


def test_example_on_integer_lattice(grid1d, coupled_symbol):
    rep = validate_conditions_A(coupled_symbol, grid1d)
    assert rep.structural_ok and rep.solver_admissible
    # eigenvalues xi^2 -+ xi vanish at xi in {0, +-1}: positivity radius bracketed by [1, 2]
    assert rep.R0_lower == 1.0 and rep.R0 == 2.0
    assert rep.orders == [[2, 1], [1, 2]]
    assert rep.tau_star == 0
    assert with_validated_radius(coupled_symbol, rep).R0 == 2.0


def test_negative_eigenvalues_are_reported():
    g = SpectralGrid((20.0,), (64,))
    rep = validate_conditions_A(example_symbol([1.0]), g)
    assert not rep.solver_admissible
    assert rep.min_eigenvalue < 0
    assert all(abs(p[0]) < 1 for p in rep.negative_points)


def test_order_dominance_violation():
    n = 1
    sym = MatrixSymbol.from_terms(n, [[{(2,): 1.0}, {(2,): 0.5}], [{(2,): 0.5}, {(2,): 1.0}]])
    rep = validate_conditions_A(sym, SpectralGrid((2 * math.pi,), (16,)), raise_on_failure=False)
    assert not rep.order_dominance_ok
    assert (1, 0) in rep.offending_pairs and (0, 1) in rep.offending_pairs
    with pytest.raises(ValidationFailure):
        validate_conditions_A(sym, SpectralGrid((2 * math.pi,), (16,)))


def test_diagonal_conditions():
    g = SpectralGrid((2 * math.pi,), (16,))
    inhom = MatrixSymbol.from_terms(1, [[{(2,): 1.0, (0,): 1.0}]])
    rep = validate_conditions_A(inhom, g, raise_on_failure=False)
    assert not rep.diagonal_homogeneous_ok
    neg = MatrixSymbol.from_terms(1, [[{(2,): -1.0}]])
    rep = validate_conditions_A(neg, g, raise_on_failure=False)
    assert not rep.diagonal_elliptic_ok
    skew = MatrixSymbol.from_terms(1, [[{(2,): 1.0}, {(1,): 1.0}], [{(1,): 2.0}, {(2,): 1.0}]])
    rep = validate_conditions_A(skew, g, raise_on_failure=False)
    assert not rep.hermitian_ok


def test_mixed_orders():
    sym = laplacian_symbol(2, 2, powers=[1, 2])
    assert sym.tau_star == 2
    assert sym.ell_star_max == 4 and sym.ell_star_min == 2


def test_asymptotic_table_matches_closed_form():
    # eigenvalues |xi|^2 +- |a.xi| pair with the diagonal |xi|^2: deviation |a.w| / r
    sym = with_validated_radius(example_symbol([1.0, 0.5]), validate_conditions_A(
        example_symbol([1.0, 0.5]), SpectralGrid((2 * math.pi,) * 2, (16, 16))))
    radii = [2.0, 4.0, 16.0, 128.0]
    table = corollary_asymptotics_check(sym, radii, directions=256)
    dirs = 2 * np.pi * np.arange(256) / 256
    amax = np.max(np.abs(np.cos(dirs) + 0.5 * np.sin(dirs)))
    for r, dev in table:
        assert dev == pytest.approx(amax / r, abs=1e-12)


def test_eval_symbol_examples():
    from mlfrac.symbol import eval_symbol

    assert np.array_equal(eval_symbol(example_symbol([1.0]), [2.0]), [[4, 2], [2, 4]])
    zero = MatrixSymbol.from_terms(1, [[{}, {}], [{}, {}]])
    assert not np.any(eval_symbol(zero, [3.0]))
    assert np.array_equal(eval_symbol(laplacian_symbol(2, 2, powers=[1, 2]), [1.0, 1.0]), np.diag([2.0, 4.0]))
