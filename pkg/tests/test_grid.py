import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlfrac.errors import DomainError, GridMismatch
from mlfrac.grid import (
    Space,
    SpectralGrid,
    StateField,
    dealias,
    fft_forward,
    fft_inverse,
    l2_norm,
    sobolev_norm,
    workers,
)


def test_validation():
    with pytest.raises(DomainError):
        SpectralGrid((1.0,), (12,))
    with pytest.raises(DomainError):
        SpectralGrid((1.0, 1.0), (8,))
    with pytest.raises(DomainError):
        SpectralGrid((1.0,) * 4, (4,) * 4)
    with pytest.raises(DomainError):
        SpectralGrid((-1.0,), (8,))
    with pytest.raises(DomainError):
        SpectralGrid((1.0, 1.0), (4096, 4096))


def test_lattice():
    g = SpectralGrid((2 * math.pi,), (8,))
    assert g.axes()[0][0] == -math.pi
    assert np.allclose(g.xi[0], [0, 1, 2, 3, -4, -3, -2, -1])
    assert g.dealias_mask.tolist() == [True, True, True, False, False, False, True, True]


def test_gaussian_transform():
    # F[exp(-x^2)](xi) = sqrt(pi) exp(-xi^2 / 4), with e^{+i x xi}
    g = SpectralGrid((40.0,), (256,))
    x = g.x[0]
    F = fft_forward(StateField(g, np.exp(-((x - 1.0) ** 2)))).data[0]
    xi = g.xi[0]
    exact = math.sqrt(math.pi) * np.exp(-(xi**2) / 4) * np.exp(1j * xi)
    assert np.max(np.abs(F - exact)) < 1e-13


def test_sign_convention():
    # derivative symbol: F[f'] = -i xi F[f]
    g = SpectralGrid((30.0,), (256,))
    x = g.x[0]
    f = np.exp(-(x**2))
    F = fft_forward(StateField(g, f)).data[0]
    df = fft_inverse(StateField(g, -1j * g.xi[0] * F, Space.FREQUENCY)).data[0]
    assert np.max(np.abs(df - (-2 * x * f))) < 1e-12


@given(seed=st.integers(0, 2**32 - 1), n=st.sampled_from([1, 2, 3]))
def test_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    g = SpectralGrid(tuple(rng.uniform(1, 10, n)), (8,) * n)
    f = StateField(g, rng.normal(size=(2,) + g.shape) + 1j * rng.normal(size=(2,) + g.shape))
    back = fft_inverse(fft_forward(f))
    assert np.max(np.abs(back.data - f.data)) < 1e-12


@given(seed=st.integers(0, 2**32 - 1))
def test_parseval(seed):
    rng = np.random.default_rng(seed)
    g = SpectralGrid((3.0, 5.0), (16, 8))
    f = StateField(g, rng.normal(size=(2,) + g.shape))
    assert sobolev_norm(f, 0.0) == pytest.approx(l2_norm(f), rel=1e-12)
    assert sobolev_norm(f, 1.0) >= sobolev_norm(f, 0.0)
    assert f.conjugate_symmetry_error() < 1e-12


def test_sobolev_of_gaussian():
    # ||f||^2 + ||f'||^2 for f = exp(-x^2) is 2 sqrt(pi/2)
    g = SpectralGrid((40.0,), (512,))
    f = StateField(g, np.exp(-g.x[0] ** 2))
    assert sobolev_norm(f, 1.0) ** 2 == pytest.approx(2 * math.sqrt(math.pi / 2), rel=1e-12)


def test_dealias_removes_high_modes():
    g = SpectralGrid((2 * math.pi,), (32,))
    f = StateField(g, np.cos(3 * g.x[0]) + np.cos(14 * g.x[0]))
    out = dealias(f).to_physical().data[0]
    assert np.max(np.abs(out - np.cos(3 * g.x[0]))) < 1e-13


def test_mismatch():
    a = StateField(SpectralGrid((1.0,), (8,)), np.zeros(8))
    b = StateField(SpectralGrid((2.0,), (8,)), np.zeros(8))
    with pytest.raises(GridMismatch):
        a + b
    with pytest.raises(GridMismatch):
        StateField(SpectralGrid((1.0,), (8,)), np.zeros(16))


def test_threads_do_not_change_bits():
    rng = np.random.default_rng(1)
    g = SpectralGrid((1.0, 1.0), (64, 64))
    f = StateField(g, rng.normal(size=(3,) + g.shape))
    with workers(1):
        a = fft_forward(f).data
    with workers(4):
        b = fft_forward(f).data
    assert a.tobytes() == b.tobytes()
