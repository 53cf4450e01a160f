import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from precess.checks import kov_c0_states, psi_identity_error
from precess.dynamics import GORYACHEV_CHAPLYGIN, KOVALEVSKAYA, SymmetryMap, symmetry_apply, vector_field
from precess.integrator import IntegratorConfig, integrate
from precess.levelset import TargetIntegrals, find_state
from precess.precession import (AliasingError, LambdaEstimate, SingularityError, accumulate_psi,
                                cumulative_simpson, estimate_lambda, gc_pole_limit,
                                integrate_with_psi, lambda_converged, psi_rate)


def test_rate_formula():
    s = [1.0, 2.0, 0.3, 0.6, 0.0, 0.8]
    assert psi_rate(KOVALEVSKAYA, s) == pytest.approx(1.0 * 0.6 / 0.36)


def test_rate_identity_on_zero_area():
    assert psi_identity_error(kov_c0_states(np.random.default_rng(0), 5000)) < 1e-12


def test_kovalevskaya_pole_is_singular():
    with pytest.raises(SingularityError):
        psi_rate(KOVALEVSKAYA, [0.3, 0.1, 0.0, 0.0, 0.0, 1.0])
    with pytest.raises(SingularityError):
        psi_rate(KOVALEVSKAYA, np.array([[0.3, 0.1, 0.0, 0.6, 0.0, 0.8],
                                         [0.3, 0.1, 0.0, 0.0, 0.0, 1.0]]))


def _one_sided_rates(p, q, targets):
    """Direct rate along a Goryachev-Chaplygin solution leaving the pole."""
    s0 = np.array([p, q, 0.0, 0.0, 0.0, 1.0])
    sol = solve_ivp(lambda t, y: vector_field(GORYACHEV_CHAPLYGIN, y), (0, 0.5), s0,
                    method="DOP853", rtol=1e-13, atol=1e-15, dense_output=True)
    rho2 = lambda t: sol.sol(t)[3] ** 2 + sol.sol(t)[4] ** 2
    out = []
    for target in targets:
        t = brentq(lambda t: rho2(t) - target, 1e-9, 0.4, xtol=1e-15)
        y = sol.sol(t)
        out.append((t, (y[0] * y[3] + y[1] * y[4]) / (y[3] ** 2 + y[4] ** 2)))
    return out


@pytest.mark.parametrize("p, q", [(0.7, 0.4), (-0.5, 1.1), (1.3, -0.2)])
def test_gc_pole_limit_matches_richardson(p, q):
    vals = _one_sided_rates(p, q, [1e-4, 1e-6, 1e-8])
    (t1, f1), (t2, f2), (t3, f3) = vals
    # the rate is smooth in t; eliminate the linear term
    rich = (t2 * f3 - t3 * f2) / (t2 - t3)
    lim = gc_pole_limit(p, q)
    assert abs(rich - lim) < 1e-4
    assert abs(f3 - lim) < abs(f1 - lim)
    assert psi_rate(GORYACHEV_CHAPLYGIN, [p, q, 0, 0, 0, 1.0]) == pytest.approx(lim)


def test_gc_limit_equals_integral_form():
    # at the pole h = 2(p^2 + q^2), k = -p g3
    p, q = 0.8, -0.3
    h = 2 * (p * p + q * q)
    k = -p
    assert gc_pole_limit(p, q) == pytest.approx(-k / (4 * h))


def test_cumulative_simpson_is_exact_for_cubics_on_pairs():
    t = np.linspace(0, 2, 21)
    f = 1 + t - 3 * t**2 + 0.5 * t**3
    F = cumulative_simpson(f, t[1] - t[0], 0.0)
    exact = t + t**2 / 2 - t**3 + t**4 / 8
    dt = t[1] - t[0]
    np.testing.assert_allclose(F[::2], exact[::2], atol=1e-13)
    # the partial rule misses the cubic term by f''' dt^4 / 24
    np.testing.assert_allclose(exact[1::2] - F[1::2], 3.0 * dt**4 / 24, atol=1e-13)


def test_cumulative_simpson_quadratics_and_short_input():
    t = np.linspace(0, 1, 8)
    F = cumulative_simpson(t**2, t[1], 2.0)
    np.testing.assert_allclose(F, 2 + t**3 / 3, atol=1e-14)
    assert cumulative_simpson([3.0], 0.1, 1.0)[0] == 1.0
    np.testing.assert_allclose(cumulative_simpson([1.0, 3.0], 0.5), [0.0, 1.0])


def test_accumulate_psi_and_aliasing_guard():
    s = find_state(TargetIntegrals(KOVALEVSKAYA, 1.0, 1.5), seed=1)
    tr = accumulate_psi(KOVALEVSKAYA, integrate(KOVALEVSKAYA, s, 50.0))
    ode = integrate_with_psi(KOVALEVSKAYA, s, 50.0)
    np.testing.assert_allclose(tr.psi, ode.psi, rtol=1e-5, atol=1e-5)
    coarse = integrate(KOVALEVSKAYA, s, 2000.0, IntegratorConfig(sample_dt=5.0))
    with pytest.raises(AliasingError):
        accumulate_psi(KOVALEVSKAYA, coarse)


def test_estimate_lambda_on_synthetic_series():
    t = np.arange(0, 500, 0.01)
    psi = 0.25 + 0.3 * t + 0.7 * np.sin(1.3 * t) + 0.2 * np.cos(0.37 * t)
    est = estimate_lambda(times=t, psi=psi)
    assert est.lam == pytest.approx(0.3, abs=1e-3)
    assert est.residual_sup < 1.0
    with pytest.raises(ValueError):
        estimate_lambda(times=t[:10], psi=psi[:10])


def test_lambda_o4_pair_and_methods():
    s = find_state(TargetIntegrals(KOVALEVSKAYA, 1.0, 1.5), seed=1)
    a = lambda_converged(KOVALEVSKAYA, s)
    b = lambda_converged(KOVALEVSKAYA, symmetry_apply(SymmetryMap.NEG_PQR, s))
    c = lambda_converged(KOVALEVSKAYA, s, method="simpson")
    assert a.converged and b.converged
    assert abs(a.lam) > 0.1
    assert abs(a.lam + b.lam) < 0.01 * abs(a.lam)
    assert c.lam == pytest.approx(a.lam, rel=1e-4)


def test_lambda_zero_uses_absolute_floor():
    s = find_state(TargetIntegrals(KOVALEVSKAYA, 1.5, 1.0), seed=0)
    e = lambda_converged(KOVALEVSKAYA, s, max_doublings=8)
    assert e.converged and abs(e.lam) < 1e-3


def test_lambda_cap_reports_unconverged():
    s = find_state(TargetIntegrals(KOVALEVSKAYA, 1.0, 1.5), seed=1)
    e = lambda_converged(KOVALEVSKAYA, s, T0=10.0, threshold=1e-12, max_doublings=2)
    assert not e.converged and e.horizon == pytest.approx(40.0)


def test_estimate_serialisation():
    d = LambdaEstimate(0.5, 0.1, 200.0, 0.3, 1e-5, True).to_dict()
    assert list(d) == ["lambda", "psi0", "horizon", "rel_change", "converged", "residual_sup"]
    assert math.isclose(d["lambda"], 0.5)
