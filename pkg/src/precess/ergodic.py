"""Monte-Carlo averages over the c = 0 energy level of a general heavy top.

The invariant measure on ``M_h = {E = h, c = 0, |g| = 1}`` is
``delta(E - h) delta(c) delta(|g|^2 - 1) dw dg``, i.e. surface measure
divided by the Gram volume of the three gradients. Integrating out the
angular velocity for fixed ``g`` (with ``n = I g`` the normal of the area
plane and ``M`` the inertia restricted to that plane)::

    int delta(E - h) delta(n . w) dw = (1/|n|) * 2 pi / sqrt(det M)
                                     = 2 pi / sqrt(det I * g^T I g),

using ``det M = det I * (n^T I^-1 n) / |n|^2``. The result does not
depend on ``h`` as long as the kinetic budget ``h - U(g)`` is positive,
and along the ellipse the measure is uniform in the affine angle. So
``g`` is drawn uniformly on the sphere, ``w`` at a uniform affine angle,
and each sample carries weight ``1 / sqrt(g^T I g)`` (constants dropped).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import DomainError, Model, ModelKind, State6, integral_array
from .integrator import IntegrationError, IntegratorConfig, raw_integrate
from .precession import SingularityError

MAX_FAILURE_RATE = 0.05


class EmptyLevelError(ValueError):
    """The energy lies below the minimum of the potential."""


class SamplingError(RuntimeError):
    """Too many sample trajectories failed to integrate."""


@dataclass(frozen=True)
class LevelSample:
    state: State6
    weight: float


def _check_general(model: Model):
    if model.kind is not ModelKind.GENERAL:
        raise DomainError("level sampling is implemented for the general top")


def potential(model: Model, g) -> np.ndarray:
    return model.mu * (np.asarray(g) @ np.asarray(model.lam))


def _plane_basis(n):
    """Orthonormal vectors spanning the plane orthogonal to each row of ``n``."""
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    helper = np.where(np.abs(n[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(n, e1)
    return e1, e2


def sample_arrays(model: Model, h: float, n: int, seed=0):
    """Vectorised sampler: ``(states (n, 6), weights (n,))``."""
    _check_general(model)
    I = model.inertia
    lam_norm = float(np.linalg.norm(model.lam))
    if h <= -model.mu * lam_norm:
        raise EmptyLevelError(f"h={h} is not above the potential minimum {-model.mu * lam_norm:.6g}")
    rng = np.random.default_rng(seed)
    gs = []
    got = 0
    while got < n:
        m = max(16, 2 * (n - got))
        g = rng.normal(size=(m, 3))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        g = g[h - potential(model, g) > 0]
        gs.append(g)
        got += len(g)
    g = np.concatenate(gs)[:n]
    budget = h - potential(model, g)
    e1, e2 = _plane_basis(g * I)
    # restricted inertia M = B^T I B in the (e1, e2) basis
    m11 = np.einsum("ij,j,ij->i", e1, I, e1)
    m12 = np.einsum("ij,j,ij->i", e1, I, e2)
    m22 = np.einsum("ij,j,ij->i", e2, I, e2)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    # solve 1/2 x^T M x = budget along direction (cos, sin): x = rho (cos, sin)
    c, s = np.cos(theta), np.sin(theta)
    # use M^{-1/2} mapping so the angle is affine-uniform
    tr = m11 + m22
    det = m11 * m22 - m12 * m12
    sq = np.sqrt(det)
    t = np.sqrt(tr + 2.0 * sq)
    # inverse square root of a symmetric 2x2 matrix
    a = (m22 + sq) / (sq * t)
    b = -m12 / (sq * t)
    d = (m11 + sq) / (sq * t)
    rad = np.sqrt(2.0 * budget)
    u = rad * (a * c + b * s)
    v = rad * (b * c + d * s)
    w = u[:, None] * e1 + v[:, None] * e2
    states = np.concatenate([w, g], axis=1)
    weights = 1.0 / np.sqrt(np.einsum("ij,j,ij->i", g, I, g))
    return states, weights


def sample_levelset(model: Model, h: float, n: int, seed=0) -> list:
    """``n`` weighted states on the c = 0 level ``E = h``."""
    states, weights = sample_arrays(model, h, n, seed)
    return [LevelSample(State6.from_array(s), float(w)) for s, w in zip(states, weights)]


def weighted_mean(values, weights):
    """Self-normalised mean and its delta-method standard error."""
    f = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = len(f)
    if n == 0:
        raise ValueError("no samples")
    mean = float(np.dot(w, f) / w.sum())
    if n == 1:
        return mean, math.inf
    wn = w / w.sum()
    var = float(np.sum(wn * wn * (f - mean) ** 2)) * n / (n - 1)
    return mean, math.sqrt(var)


def rate_field(states):
    """Pointwise precession rate (p g1 + q g2) / (g1^2 + g2^2) of sample states."""
    s = np.asarray(states)
    return (s[:, 0] * s[:, 3] + s[:, 1] * s[:, 4]) / (s[:, 3] ** 2 + s[:, 4] ** 2)


def time_average(model: Model, state, horizon: float, cfg: IntegratorConfig) -> float:
    """psi(T) / T, with psi integrated as a seventh ODE component."""
    y0 = np.append(np.asarray(state, dtype=float)[:6], 0.0)
    c = replace(cfg, sample_dt=horizon)
    samples, _ = raw_integrate(model, y0, horizon, c, 1, 1)
    return float(samples[0, 6]) / horizon


@dataclass
class MainMotionResult:
    h: float
    n: int
    horizon: float
    mean: float
    stderr: float
    failures: int
    values: np.ndarray | None = None
    weights: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"h": self.h, "n": self.n, "horizon": self.horizon, "mean": self.mean,
                "stderr": self.stderr if math.isfinite(self.stderr) else None,
                "failures": self.failures}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def main_motion_average(model: Model, h: float, n: int, horizon: float = 2000.0,
                        seed=0, cfg: IntegratorConfig | None = None) -> MainMotionResult:
    """Weighted mean of finite-horizon main motions over the level set."""
    cfg = cfg or IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)
    states, weights = sample_arrays(model, h, n, seed)
    vals, ws = [], []
    failures = 0
    for s, w in zip(states, weights):
        try:
            vals.append(time_average(model, s, horizon, cfg))
            ws.append(w)
        except (IntegrationError, SingularityError):
            failures += 1
    if failures > MAX_FAILURE_RATE * n:
        raise SamplingError(f"{failures} of {n} sample trajectories failed")
    mean, err = weighted_mean(vals, ws)
    return MainMotionResult(h, n, horizon, mean, err, failures, np.array(vals), np.array(ws))


def check_samples(model: Model, states, h: float) -> float:
    """Largest deviation of (E - h, c, |g|^2 - 1) over ``states``."""
    v = integral_array(model, states)
    return float(np.max(np.abs(np.column_stack([v[:, 0] - h, v[:, 1], v[:, 3] - 1.0]))))
