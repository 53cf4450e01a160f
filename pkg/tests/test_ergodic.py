import math

import numpy as np
import pytest

from precess.dynamics import KOVALEVSKAYA, DomainError, general_top, integral_array
from precess.ergodic import (EmptyLevelError, MainMotionResult, check_samples, main_motion_average,
                             rate_field, sample_arrays, sample_levelset, time_average,
                             weighted_mean)
from precess.integrator import IntegratorConfig
from precess.precession import integrate_with_psi

TOP = general_top(1.0, 2.0, 2.5, (0.3, 0.2, 0.1), 1.0)


def test_samples_lie_on_the_level():
    states, w = sample_arrays(TOP, 2.0, 5000, seed=1)
    assert check_samples(TOP, states, 2.0) < 1e-12
    assert np.all(w > 0)
    # the reflection (-p, -q, -r, g) stays on the level
    refl = states * [-1, -1, -1, 1, 1, 1]
    assert check_samples(TOP, refl, 2.0) < 1e-12


def test_sampler_is_deterministic_and_typed():
    a = sample_levelset(TOP, 0.5, 10, seed=3)
    b = sample_levelset(TOP, 0.5, 10, seed=3)
    assert a == b and len(a) == 10
    assert a[0].weight > 0


def test_area_average_is_exactly_zero():
    states, w = sample_arrays(TOP, 2.0, 1000, seed=0)
    c = integral_array(TOP, states)[:, 1]
    assert abs(weighted_mean(c, w)[0]) < 1e-12


@pytest.mark.parametrize("f", [lambda s: s[:, 0], rate_field])
def test_odd_functions_average_to_zero(f):
    states, w = sample_arrays(TOP, 2.0, 10_000, seed=2)
    mean, err = weighted_mean(f(states), w)
    assert abs(mean) < 3 * err


def test_rate_magnitude_mean_stabilises():
    a = np.abs(rate_field(sample_arrays(TOP, 2.0, 1000, seed=4)[0]))
    b = np.abs(rate_field(sample_arrays(TOP, 2.0, 10_000, seed=5)[0]))
    assert abs(a.mean() - b.mean()) < 0.1 * b.mean()


def test_empty_level_and_model_checks():
    with pytest.raises(EmptyLevelError):
        sample_arrays(TOP, -1.0, 10)
    with pytest.raises(DomainError):
        sample_arrays(KOVALEVSKAYA, 1.0, 10)


def test_weighted_mean_oracle():
    f = np.array([1.0, 2.0, 4.0])
    w = np.array([1.0, 1.0, 2.0])
    mean, err = weighted_mean(f, w)
    assert mean == pytest.approx(11 / 4)
    wn = w / w.sum()
    assert err == pytest.approx(math.sqrt(np.sum(wn**2 * (f - mean) ** 2) * 3 / 2))
    assert weighted_mean([5.0], [2.0]) == (5.0, math.inf)
    with pytest.raises(ValueError):
        weighted_mean([], [])


def test_time_average_matches_psi_trajectory():
    s = sample_arrays(TOP, 2.0, 1, seed=7)[0][0]
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)
    tr = integrate_with_psi(TOP, s, 100.0, cfg)
    assert time_average(TOP, s, 100.0, cfg) == pytest.approx(tr.psi[-1] / 100.0, rel=1e-8)


def test_single_sample_average():
    r = main_motion_average(TOP, 2.0, 1, horizon=100.0, seed=1)
    s = sample_arrays(TOP, 2.0, 1, seed=1)[0][0]
    assert r.mean == pytest.approx(time_average(TOP, s, 100.0, IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)))
    assert math.isinf(r.stderr) and r.to_dict()["stderr"] is None
    assert isinstance(r, MainMotionResult)


def test_lagrange_control_averages_to_zero():
    lag = general_top(1.0, 1.0, 2.0, (0.0, 0.0, 1.0), 1.0)
    r = main_motion_average(lag, 1.5, 40, horizon=500.0, seed=2)
    assert r.failures == 0
    assert abs(r.mean) < 3 * r.stderr
    assert set(r.to_dict()) == {"h", "n", "horizon", "mean", "stderr", "failures"}


@pytest.mark.slow
def test_weights_against_thin_shell_rejection():
    """Total mass and moments against brute-force shell sampling.

    The shell |E - h| < d, |c| < d inside a box in w, normalised by (2d)^2,
    approximates the level-set measure; the box must contain the shell.
    """
    h, W, d = 0.5, 1.4, 0.05
    I = np.array(TOP.inertia)
    rng = np.random.default_rng(5)
    g = rng.normal(size=(10**6, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    ok = h - g @ np.array(TOP.lam) > 0
    mass = 4 * np.pi * np.mean(ok * 2 * np.pi / np.sqrt(np.prod(I) * np.einsum("ij,j,ij->i", g, I, g)))

    states, w = sample_arrays(TOP, h, 200_000, seed=1)
    ours = [weighted_mean(states[:, j] ** 2, w)[0] for j in (0, 2, 5)]

    hits, total = [], 0
    while total < 4 * 10**7:
        n = 2 * 10**6
        total += n
        gg = rng.normal(size=(n, 3))
        gg /= np.linalg.norm(gg, axis=1, keepdims=True)
        x = np.hstack([rng.uniform(-W, W, size=(n, 3)), gg])
        v = integral_array(TOP, x)
        hits.append(x[(np.abs(v[:, 0] - h) < d) & (np.abs(v[:, 1]) < d)])
    hits = np.concatenate(hits)
    assert np.all(np.abs(hits[:, :3]) < 0.999 * W)
    bf_mass = (2 * W) ** 3 * 4 * np.pi * len(hits) / total / (2 * d) ** 2
    assert mass == pytest.approx(bf_mass, rel=0.01)
    for ours_j, j in zip(ours, (0, 2, 5)):
        assert ours_j == pytest.approx(np.mean(hits[:, j] ** 2), rel=0.02)
