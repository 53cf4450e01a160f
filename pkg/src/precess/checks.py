"""Random state generators and the fast property checks behind ``selftest``."""
from __future__ import annotations

import math
import time
from typing import NamedTuple

import numpy as np

from .bifurcation import gc_branch, gc_classify, kov_critical_c
from .dynamics import GORYACHEV_CHAPLYGIN, KOVALEVSKAYA, Model, SymmetryMap, integral_array, symmetry_apply
from .integrator import IntegratorConfig, integrate
from .levelset import TargetIntegrals, count_tori, find_state, gram_volume
from .precession import lambda_converged, psi_rate


def random_states(rng, n, scale=1.0):
    """States with uniform g on the sphere and Gaussian angular velocity."""
    g = rng.normal(size=(n, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    w = rng.normal(scale=scale, size=(n, 3))
    return np.concatenate([w, g], axis=1)


def c0_states(model: Model, rng, n, min_g3=0.05, max_g3=0.99):
    """States on c = 0 with r solved from the area integral.

    ``|g3|`` is kept inside ``[min_g3, max_g3]``: small g3 makes r blow up
    and g3 close to 1 makes 1 - g3^2 lose digits.
    """
    a, _, cc = model.inertia
    out = []
    got = 0
    while got < n:
        s = random_states(rng, 2 * n)
        g3 = np.abs(s[:, 5])
        s = s[(g3 > min_g3) & (g3 < max_g3)]
        s[:, 2] = -a * (s[:, 0] * s[:, 3] + s[:, 1] * s[:, 4]) / (cc * s[:, 5])
        out.append(s)
        got += len(s)
    return np.concatenate(out)[:n]


def kov_c0_states(rng, n):
    """Kovalevskaya states on c = 0."""
    return c0_states(KOVALEVSKAYA, rng, n)


def kov_c0_r0_states(rng, n):
    """Kovalevskaya states with r = 0 and c = 0: (p, q) orthogonal to (g1, g2)."""
    s = random_states(rng, n)
    t = rng.normal(size=n)
    s[:, 0] = -t * s[:, 4]
    s[:, 1] = t * s[:, 3]
    s[:, 2] = 0.0
    return s


def psi_identity_error(states) -> float:
    """Largest relative gap between the rate and 1/2 r g3 / (g3^2 - 1) on c = 0."""
    direct = psi_rate(KOVALEVSKAYA, states)
    r, g3 = states[:, 2], states[:, 5]
    closed = 0.5 * r * g3 / (g3 * g3 - 1.0)
    return float(np.max(np.abs(direct - closed) / np.maximum(1.0, np.abs(closed))))


def r0_inequality_violation(states) -> float:
    """max(h^2 - k^2) over r = 0, c = 0 states, relative to max(1, k^2)."""
    v = integral_array(KOVALEVSKAYA, states)
    h, k = v[:, 0], v[:, 2]
    return float(np.max((h * h - k) / np.maximum(1.0, k)))


def gram_symmetry_error(model: Model, states) -> float:
    out = 0.0
    for s in states:
        a = gram_volume(model, s)
        b = gram_volume(model, symmetry_apply(SymmetryMap.ALPHA, s))
        out = max(out, abs(a - b) / max(1.0, abs(a)))
    return out


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str
    seconds: float


def _timed(name, fn):
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failing check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return Check(name, bool(ok), detail, time.perf_counter() - t0)


def fast_checks(cfg: IntegratorConfig | None = None, seed: int = 0) -> list:
    """The quick subset of the acceptance properties (well under a minute)."""
    cfg = cfg or IntegratorConfig()
    rng = np.random.default_rng(seed)

    def drift():
        worst = 0.0
        for model in (KOVALEVSKAYA, GORYACHEV_CHAPLYGIN):
            # the Goryachev-Chaplygin integral needs c = 0
            starts = random_states(rng, 3) if model is KOVALEVSKAYA else c0_states(model, rng, 3)
            for s in starts:
                tr = integrate(model, s, 1000.0, cfg)
                worst = max(worst, max(tr.integral_drift.values()))
        return worst < 1e-8, f"max drift {worst:.3g} over T=1000"

    def identity():
        err = psi_identity_error(kov_c0_states(rng, 10_000))
        return err < 1e-12, f"max relative gap {err:.3g}"

    def r0():
        v = r0_inequality_violation(kov_c0_r0_states(rng, 10_000))
        return v <= 1e-12, f"max (h^2 - k^2) {v:.3g}"

    def gram():
        err = max(gram_symmetry_error(m, random_states(rng, 500))
                  for m in (KOVALEVSKAYA, GORYACHEV_CHAPLYGIN))
        return err < 1e-10, f"max |V(alpha s) - V(s)| {err:.3g}"

    def formulas():
        ok = gc_branch(2.0, 1) == (4.0, 7.0) and gc_branch(1.0, -1) == (0.5, 0.5)
        cc = kov_critical_c()
        ok &= abs(cc[1] - math.sqrt(2)) < 1e-12 and abs(cc[2] - 4 * 3 ** -0.75) < 1e-12
        ok &= gc_classify(3.0, 0.5).torus_count == 2 and gc_classify(3.0, -0.5).torus_count == 2
        return ok, "branch and critical-value formulas"

    def tori():
        n = count_tori(TargetIntegrals(KOVALEVSKAYA, 0.5, 0.5), n_seeds=16, horizon=600.0)
        return n == 1, f"{n} torus at (h, k^2) = (1/2, 1/2)"

    def o4():
        target = TargetIntegrals(KOVALEVSKAYA, 1.0, 1.5)
        s = find_state(target, seed=1)
        a = lambda_converged(KOVALEVSKAYA, s, cfg=cfg)
        b = lambda_converged(KOVALEVSKAYA, symmetry_apply(SymmetryMap.NEG_PQR, s), cfg=cfg)
        ok = a.converged and abs(a.lam) > 0.01 and abs(a.lam + b.lam) < 0.01 * abs(a.lam)
        return ok, f"lambda {a.lam:.6f} and {b.lam:.6f}"

    def gc_zero():
        s = find_state(TargetIntegrals(GORYACHEV_CHAPLYGIN, 3.5, 2.0), seed=2)
        e = lambda_converged(GORYACHEV_CHAPLYGIN, s, cfg=cfg)
        return e.converged and abs(e.lam) < 1e-3, f"lambda {e.lam:.3g}"

    return [_timed(n, f) for n, f in (
        ("conservation", drift), ("rate-identity", identity), ("r0-inequality", r0),
        ("gram-symmetry", gram), ("bifurcation-formulas", formulas), ("torus-count", tori),
        ("o4-nonzero-pairing", o4), ("gc-zero", gc_zero))]
