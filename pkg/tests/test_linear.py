import math

import numpy as np
import pytest
from scipy.special import erfcx, gamma

from mlfrac.errors import DomainError, GridMismatch, ValidationFailure
from mlfrac.grid import SpectralGrid, StateField
from mlfrac.linear import (
    Propagator,
    SourceSpec,
    apply_duhamel,
    apply_S,
    coercive_diagnostic,
    green_kernels,
    solve_linear,
)
from mlfrac.mlf import mittag_leffler
from mlfrac.symbol import MatrixSymbol, example_symbol

from conftest import gaussian_pair


def ml_closed(beta, x):
    """E_beta(-x) for x >= 0 via elementary identities only."""
    if beta == 1.0:
        return np.exp(-x)
    assert beta == 0.5
    return erfcx(x)


def closed_form_example(grid, phi, a, beta, t):
    # numpy-only evaluation of the explicit 2x2 solution operator:
    # forward transform e^{+ix xi} <-> numpy ifft, inverse <-> numpy fft
    xi = grid.xi[0]
    ad = a * xi
    l1 = xi**2 + ad
    l2 = xi**2 - ad
    e1 = ml_closed(beta, l1 * t**beta)
    e2 = ml_closed(beta, l2 * t**beta)
    s11 = 0.5 * (e1 + e2)
    s12 = 0.5 * (e1 - e2)
    f1, f2 = np.fft.ifft(phi[0]), np.fft.ifft(phi[1])
    return np.stack([np.fft.fft(s11 * f1 + s12 * f2), np.fft.fft(s12 * f1 + s11 * f2)])


@pytest.mark.parametrize("beta", [0.5, 1.0])
def test_golden_example(grid1d, beta):
    phi = gaussian_pair(grid1d)
    prop = Propagator(grid1d, example_symbol([1.0]), beta)
    ts = [0.1, 0.5, 1.0]
    out = solve_linear(prop, phi, None, ts)
    for t, U in zip(ts, out):
        ref = closed_form_example(grid1d, phi.data, 1.0, beta, t)
        assert np.max(np.abs(U.data - ref)) <= 1e-10


def test_eigenvectors_constant_for_example(grid1d):
    prop = Propagator(grid1d, example_symbol([1.0]), 0.5)
    r = math.sqrt(0.5)
    # columns are (1, -1)/sqrt2 and (1, 1)/sqrt2 up to ordering by eigenvalue
    for M in prop.M[1:]:
        cols = {tuple(np.round(M[:, q].real / r).astype(int)) for q in range(2)}
        assert cols == {(1, -1), (1, 1)}


def test_refuses_negative_eigenvalues():
    g = SpectralGrid((20.0,), (64,))
    with pytest.raises(ValidationFailure):
        Propagator(g, example_symbol([1.0]), 0.5)


def test_mismatch_and_domain(grid1d):
    with pytest.raises(DomainError):
        Propagator(grid1d, example_symbol([1.0]), 1.5)
    with pytest.raises(GridMismatch):
        Propagator(grid1d, example_symbol([1.0, 1.0]), 0.5)
    prop = Propagator(grid1d, example_symbol([1.0]), 0.5)
    other = StateField(SpectralGrid((2 * math.pi,), (64,)), np.zeros((2, 64)))
    with pytest.raises(GridMismatch):
        apply_S(prop, 0.1, other)
    with pytest.raises(DomainError):
        solve_linear(prop, gaussian_pair(grid1d), None, [0.5, 0.1])


def test_initial_time_is_identity(grid1d):
    prop = Propagator(grid1d, example_symbol([1.0]), 0.5)
    phi = gaussian_pair(grid1d)
    U0 = solve_linear(prop, phi, None, [0.0])[0]
    assert np.max(np.abs(U0.data - phi.data)) < 1e-14


def test_heat_limit_2d():
    g = SpectralGrid((4 * math.pi,) * 2, (128, 128))
    sym = MatrixSymbol.from_terms(2, [[{(2, 0): 1.0, (0, 2): 1.0}, {}], [{}, {(2, 0): 0.5, (0, 2): 0.5}]])
    x, y = g.x
    w2 = 0.5
    phi = StateField(g, np.stack([np.exp(-(x**2 + y**2) / w2), np.exp(-(x**2 + y**2) / w2)]))
    t = 0.1
    U = solve_linear(Propagator(g, sym, 1.0), phi, None, [t])[0]
    for j, kappa in enumerate([1.0, 0.5]):
        s = w2 + 4 * kappa * t
        exact = (w2 / s) * np.exp(-(x**2 + y**2) / s)
        assert np.max(np.abs(U.data[j] - exact)) <= 1e-8


def test_duhamel_constant_and_ramp(grid1d):
    # per mode: int_0^t eta^{b-1} E_{b,b}(-l eta^b) d eta = t^b E_{b,b+1}(-l t^b);
    # a linear ramp tau*g adds one more power: t^{b+1} E_{b,b+2}(-l t^b)
    beta = 0.5
    prop = Propagator(grid1d, example_symbol([1.0]), beta)
    g = gaussian_pair(grid1d).data
    t = 0.7
    const = SourceSpec.constant(g)
    const_sampled = SourceSpec("sampled", times=[0.0, 1.0], samples=[g, g])
    ramp = SourceSpec("sampled", times=[0.0, 1.0], samples=[0 * g, g])
    ghat = StateField(grid1d, g).to_frequency().data
    cm = prop.to_modes(ghat)
    lam = prop.lambdas
    for H, mu, p in [(const, beta + 1, beta), (const_sampled, beta + 1, beta), (ramp, beta + 2, beta + 1)]:
        W = apply_duhamel(prop, t, H, nodes=16)
        coeff = t**p * mittag_leffler(beta, mu, -lam * t**beta)
        ref = StateField(grid1d, prop.from_modes(coeff * cm), "frequency").to_physical()
        assert np.max(np.abs(W.data - ref.data)) < 1e-12


def test_steady_state(grid1d):
    # H = A(D) phi makes phi a stationary solution
    prop = Propagator(grid1d, example_symbol([1.0]), 0.5)
    phi = gaussian_pair(grid1d)
    Hp = StateField(grid1d, prop.apply_symbol(phi.to_frequency().data), "frequency").to_physical()
    H = SourceSpec.constant(Hp.data)
    ts = np.linspace(0, 1, 9)
    for U in solve_linear(prop, phi, H, ts):
        assert np.max(np.abs(U.data - phi.data)) < 1e-12


def test_uniform_grid_path_matches_pointwise(grid1d):
    prop = Propagator(grid1d, example_symbol([1.0]), 0.5)
    g = gaussian_pair(grid1d).data
    H = SourceSpec("callback", evaluator=lambda t: np.sin(3 * t) * g)
    ts = np.linspace(0, 1, 5)
    uni = solve_linear(prop, gaussian_pair(grid1d), H, ts, quad_nodes=256)
    single = solve_linear(prop, gaussian_pair(grid1d), H, [1.0], quad_nodes=256)
    assert np.max(np.abs(uni[-1].data - single[0].data)) < 1e-12


def test_decay_without_source(grid1d):
    prop = Propagator(grid1d, example_symbol([1.0]), 0.5)
    phi = gaussian_pair(grid1d)
    ts = [0.5, 1, 2, 4, 8]
    # eigenmode amplitudes, not components, are monotone
    hat = [np.abs(prop.to_modes(U.to_frequency().data)) for U in solve_linear(prop, phi, None, ts)]
    for a, b in zip(hat, hat[1:]):
        assert np.all(b <= a * (1 + 1e-12) + 1e-14)


def test_green_kernel_masses(grid1d):
    beta = 0.5
    prop = Propagator(grid1d, example_symbol([1.0]), beta)
    t = 0.3
    Z, Y = green_kernels(prop, t)
    dx = grid1d.dx[0]
    # A(0) = 0 so the zero-frequency symbols are I and t^{b-1}/Gamma(b) I
    assert np.allclose(Z.sum(axis=-1) * dx, np.eye(2), atol=1e-12)
    assert np.allclose(Y.sum(axis=-1) * dx, t ** (beta - 1) / gamma(beta) * np.eye(2), atol=1e-10)


def test_coercive_ratio_bounded(grid1d):
    prop = Propagator(grid1d, example_symbol([1.0]), 0.5)
    phi = gaussian_pair(grid1d)
    H = SourceSpec.constant(phi.data)
    ratios = []
    for t in [0.01, 0.1, 0.5, 1.0]:
        lhs, rhs = coercive_diagnostic(prop, phi, H, t)
        assert np.isfinite(lhs) and rhs > 0
        ratios.append(lhs / rhs)
    assert max(ratios) < 10.0
