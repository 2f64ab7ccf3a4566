import math
import warnings

import numpy as np
import pytest
from scipy.special import erfc

from mlfrac.errors import DomainError, LipschitzViolationWarning, NoConvergence
from mlfrac.grid import SpectralGrid, StateField, l2_norm
from mlfrac.linear import Propagator, solve_linear
from mlfrac.nonlinear import (
    NonlinearRHS,
    SolveConfig,
    builtin_rhs,
    estimate_c1,
    gronwall_bound,
    lipschitz_audit,
    manufactured_problem,
    solve_nonlinear,
    stability_probe,
)
from mlfrac.symbol import example_symbol, laplacian_symbol

from conftest import gaussian_pair


@pytest.fixture(scope="module")
def prop05(grid1d):
    return Propagator(grid1d, example_symbol([1.0]), 0.5)


def test_c1_examples(grid1d, prop05):
    heat = Propagator(grid1d, laplacian_symbol(1), 1.0)
    assert estimate_c1(heat, 1.0, 1.0) <= 1.0 + 1e-14
    assert estimate_c1(prop05, 0.0, 1.0) == 0.0
    # kernel bound attained at eta = 0: 4 * (1/Gamma(1/2)) * 2 / 0.5
    assert estimate_c1(prop05, 2.0, 1.0) == pytest.approx(16 / math.sqrt(math.pi), rel=1e-12)


def test_gronwall_examples():
    assert gronwall_bound(0.0, 3.0, 0.5, 7.0) == 0.0
    assert gronwall_bound(2.0, 1.5, 1.0, 0.7) == pytest.approx(2 * math.exp(1.05), rel=1e-12)
    assert gronwall_bound(1.0, 1.0, 0.5, 1.0) == pytest.approx(math.e * erfc(-1.0), rel=1e-12)
    assert gronwall_bound(1.0, 1.0, 0.5, 1.0) == pytest.approx(5.00898, abs=1e-5)
    with pytest.raises(OverflowError):
        gronwall_bound(1.0, 1e4, 0.5, 1e6)
    with pytest.raises(DomainError):
        gronwall_bound(1.0, 0.0, 0.5, 1.0)


def test_solve_config_validation():
    with pytest.raises(DomainError):
        SolveConfig(beta=0.5, T=1.0, t_out=(2.0,))
    with pytest.raises(DomainError):
        SolveConfig(beta=0.5, T=1.0, target_delta=1.0)
    with pytest.raises(DomainError):
        SolveConfig(beta=0.5, T=1.0, max_picard_iters=0)


@pytest.mark.parametrize("name", ["sine", "cubic", "logistic-coupling", "linear"])
def test_builtins_pass_audit(name):
    m = 3
    coeffs = np.arange(1, 10).reshape(3, 3) / 10 if name == "linear" else [0.3, -0.2, 0.5]
    rhs = builtin_rhs(name, coeffs, m)
    assert lipschitz_audit(rhs, n=2, m=m, samples=1000, radius=5.0) == 0


def test_cubic_constant_is_tight():
    rhs = builtin_rhs("cubic", 1.0, 1)
    r = np.linspace(-10, 10, 200001)
    slope = np.max(np.abs(np.gradient(r**3 / (1 + r**2), r)))
    assert slope == pytest.approx(rhs.lipschitz_L0, rel=1e-6)


def test_underdeclared_constant_is_flagged():
    rhs = builtin_rhs("sine", 1.0, 2, L0=0.1)
    assert lipschitz_audit(rhs, n=1, m=2, samples=1000) > 0


def test_unknown_builtin():
    with pytest.raises(DomainError):
        builtin_rhs("exp", 1.0, 1)


def test_zero_rhs_matches_linear(grid1d, prop05):
    phi = gaussian_pair(grid1d)
    ts = [0.25, 0.5, 1.0]
    cfg = SolveConfig(beta=0.5, T=1.0, time_steps=64)
    U, rep = solve_nonlinear(prop05, phi, NonlinearRHS.zero(), ts, cfg)
    V = solve_linear(prop05, phi, None, ts)
    for a, b in zip(U, V):
        assert np.array_equal(a.data, b.data)
    assert rep.converged and rep.subintervals == []


@pytest.fixture(scope="module")
def manufactured_run(grid1d, prop05):
    x = grid1d.x[0]
    G = np.stack([np.exp(-4 * x**2), 0.5 * np.exp(-4 * (x - 0.3) ** 2)])
    phi, rhs, exact = manufactured_problem(prop05, G)
    cfg = SolveConfig(beta=0.5, T=1.0, time_steps=256)
    ts = [0.25, 0.5, 1.0]
    U, rep = solve_nonlinear(prop05, phi, rhs, ts, cfg)
    return ts, U, rep, exact, cfg


def test_manufactured_recovery(manufactured_run):
    ts, U, rep, exact, cfg = manufactured_run
    err = max(np.max(np.abs(u.data - exact(t).data)) for t, u in zip(ts, U))
    assert err <= 1e-4
    assert rep.converged and rep.lipschitz_violations == 0


def test_contraction_and_residual(manufactured_run):
    ts, U, rep, exact, cfg = manufactured_run
    assert rep.delta <= cfg.target_delta
    assert rep.subintervals[0].t_start == 0.0 and rep.subintervals[-1].t_end == pytest.approx(1.0)
    for a, b in zip(rep.subintervals, rep.subintervals[1:]):
        assert a.t_end == b.t_start
    for s in rep.subintervals:
        assert s.contraction_factor <= rep.delta * 1.1
        assert s.fixed_point_residual <= 10 * cfg.picard_tol
        assert s.final_delta < cfg.picard_tol


def test_apriori_bound(manufactured_run):
    ts, U, rep, exact, cfg = manufactured_run
    assert all(v <= rep.gronwall_bound for v in rep.output_norms)
    assert rep.output_norms == pytest.approx([l2_norm(u) for u in U])


def test_no_convergence_carries_report(grid1d, prop05):
    phi = gaussian_pair(grid1d)
    rhs = builtin_rhs("sine", 0.5, 2)
    cfg = SolveConfig(beta=0.5, T=0.5, time_steps=32, max_picard_iters=1)
    with pytest.raises(NoConvergence) as info:
        solve_nonlinear(prop05, phi, rhs, [0.5], cfg)
    rep = info.value.report
    assert rep is not None and not rep.converged
    assert rep.subintervals[-1].iterations == 1


def test_runtime_lipschitz_warning(grid1d, prop05):
    phi = gaussian_pair(grid1d)
    rhs = builtin_rhs("sine", 0.5, 2, L0=0.01)
    cfg = SolveConfig(beta=0.5, T=0.25, time_steps=16, lipschitz_samples=200)
    with pytest.warns(LipschitzViolationWarning):
        _, rep = solve_nonlinear(prop05, phi, rhs, [0.25], cfg)
    assert rep.lipschitz_violations > 0


def test_output_times_on_grid(grid1d, prop05):
    cfg = SolveConfig(beta=0.5, T=1.0, time_steps=16)
    with pytest.raises(DomainError):
        solve_nonlinear(prop05, gaussian_pair(grid1d), builtin_rhs("sine", 0.1, 2), [0.3], cfg)


def test_logistic_coupling_couples_components(grid1d, prop05):
    # u_2 starts at zero but is driven through tanh(u_1)
    x = grid1d.x[0]
    phi = StateField(grid1d, np.stack([np.exp(-4 * x**2), 0 * x]))
    rhs = builtin_rhs("logistic-coupling", [0.0, 0.5], 2)
    cfg = SolveConfig(beta=0.5, T=0.5, time_steps=32)
    U, rep = solve_nonlinear(prop05, phi, rhs, [0.5], cfg)
    lin = solve_linear(prop05, phi, None, [0.5])[0]
    assert rep.converged
    assert np.max(np.abs(U[0].data - lin.data)) > 1e-3


def test_stability_identical_data_gives_zero(grid1d, prop05):
    phi = gaussian_pair(grid1d)
    rows = stability_probe(prop05, phi, phi, None, [0.5])
    assert rows[0][1] == 0.0


def _probe_ratios(prop, phi, rhs, cfg, ts):
    x = prop.grid.x[0]
    bump = np.stack([np.exp(-2 * x**2), np.exp(-2 * (x + 0.5) ** 2)])
    out = []
    for eps in (1e-2, 1e-4, 1e-6):
        rows = stability_probe(prop, phi, phi + StateField(prop.grid, eps * bump), rhs, ts, cfg)
        out.append(np.array([d / s for _, d, s in rows]))
    return out


def test_stability_linear_ratio_constant(grid1d, prop05):
    r = _probe_ratios(prop05, gaussian_pair(grid1d), None, None, [0.1, 0.5, 1.0])
    for other in r[1:]:
        assert np.allclose(other, r[0], rtol=1e-2)


def test_stability_nonlinear_ratio(grid1d, prop05):
    cfg = SolveConfig(beta=0.5, T=1.0, time_steps=64)
    rhs = builtin_rhs("sine", 0.3, 2)
    r = _probe_ratios(prop05, gaussian_pair(grid1d), rhs, cfg, [0.5, 1.0])
    for other in r[1:]:
        q = other / r[0]
        assert np.all((q >= 0.5) & (q <= 2.0))
