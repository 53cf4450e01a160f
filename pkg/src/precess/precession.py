"""Precession rate, the unwrapped precession angle and its mean motion."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .dynamics import Model, ModelKind, as_array
from .integrator import (IntegratorConfig, Trajectory, _check_state, invariant_drift,
                         raw_integrate)

ALIAS_LIMIT = math.pi / 2
DEFAULT_THRESHOLD = 0.0005
ABS_FLOOR = 1e-6


class SingularityError(ArithmeticError):
    """Precession rate requested on the vertical where no limit is defined."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = None if state is None else np.asarray(state, dtype=float)


class AliasingError(RuntimeError):
    """Precession angle moves too fast for the sampling grid."""


def gc_pole_limit(p, q):
    """Limit of the rate as a Goryachev-Chaplygin solution crosses the vertical.

    At the pole r = 0 and g1 = g2 = 0; expanding both forms of the rate to
    second order in time gives p / (8 (p^2 + q^2)).
    """
    return p / (8.0 * (p * p + q * q))


def psi_rate(model: Model, s, eps: float = 1e-9):
    """Rate of the precession angle, (p g1 + q g2) / (g1^2 + g2^2).

    Within ``eps`` of the vertical the Goryachev-Chaplygin limit is used;
    other models raise :class:`SingularityError`. Vectorised over leading axes.
    """
    y = as_array(s)
    p, q, g1, g2 = y[..., 0], y[..., 1], y[..., 3], y[..., 4]
    rho2 = g1 * g1 + g2 * g2
    near = rho2 <= eps
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = (p * g1 + q * g2) / rho2
    if np.any(near):
        if model.kind is not ModelKind.GORYACHEV_CHAPLYGIN:
            bad = y[near] if y.ndim > 1 else y
            raise SingularityError("precession rate undefined at g3 = +-1", np.atleast_2d(bad)[0])
        w2 = p * p + q * q
        if np.any(near & (w2 == 0)):
            raise SingularityError("degenerate pole crossing with p = q = 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            lim = gc_pole_limit(p, q)
        rate = np.where(near, lim, rate)
    return float(rate) if np.ndim(rate) == 0 else rate


def cumulative_simpson(f, dt, initial=0.0):
    """Cumulative integral on a uniform grid.

    Interval pairs are integrated with Simpson's rule, so even-indexed
    values equal composite Simpson; odd-indexed values use the matching
    three-point partial rule. A trailing unpaired interval uses the
    backward partial rule.
    """
    f = np.asarray(f, dtype=float)
    n = len(f)
    out = np.empty(n)
    out[0] = initial
    if n == 1:
        return out
    if n == 2:
        out[1] = initial + 0.5 * dt * (f[0] + f[1])
        return out
    inc = np.empty(n - 1)
    m = (n - 1) // 2
    f0, f1, f2 = f[0:2 * m:2], f[1:2 * m:2], f[2:2 * m + 1:2]
    inc[0:2 * m:2] = dt / 12.0 * (5 * f0 + 8 * f1 - f2)
    inc[1:2 * m:2] = dt / 12.0 * (-f0 + 8 * f1 + 5 * f2)
    if (n - 1) % 2:
        inc[-1] = dt / 12.0 * (-f[-3] + 8 * f[-2] + 5 * f[-1])
    out[1:] = initial + np.cumsum(inc)
    return out


def _psi_from_rates(rates, dt, initial):
    if len(rates) > 1:
        jump = np.max(np.abs(rates)) * dt
        if jump >= ALIAS_LIMIT:
            raise AliasingError(
                f"precession angle may move {jump:.3g} rad per sample; reduce sample_dt")
    return cumulative_simpson(rates, dt, initial)


def accumulate_psi(model: Model, traj: Trajectory, psi0: float = 0.0,
                   eps: float = 1e-9) -> Trajectory:
    """Fill ``traj.psi`` by quadrature of the rate along the samples."""
    if len(traj) == 0:
        traj.psi = np.empty(0)
        return traj
    dt = traj.times[1] - traj.times[0] if len(traj) > 1 else 1.0
    if len(traj) > 2 and not np.allclose(np.diff(traj.times), dt, rtol=1e-9, atol=1e-12):
        raise ValueError("accumulate_psi needs a uniform time grid")
    rates = psi_rate(model, traj.states, eps)
    traj.psi = _psi_from_rates(np.atleast_1d(rates), dt, psi0)
    return traj


def integrate_with_psi(model: Model, s0, t_end: float,
                       cfg: IntegratorConfig | None = None, psi0: float = 0.0) -> Trajectory:
    """Integrate with the precession angle as a seventh ODE component.

    Unlike :func:`accumulate_psi` this has no aliasing limit: fast passages
    near the vertical are resolved by the step controller.
    """
    cfg = cfg or IntegratorConfig()
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    y0 = np.append(_check_state(s0), psi0)
    n = int(math.floor(t_end / cfg.sample_dt + 1e-9)) + 1
    samples, carry = raw_integrate(model, y0, t_end, cfg, 0, n)
    times = np.arange(len(samples)) * cfg.sample_dt
    traj = Trajectory(model, times, samples[:, :6].copy(), psi=samples[:, 6].copy(),
                      end_time=carry.t, end_state=carry.y[:6], next_step=carry.h,
                      n_steps=carry.n_steps)
    traj.integral_drift = invariant_drift(model, traj)
    return traj


@dataclass
class LambdaEstimate:
    """Least-squares line through the precession angle."""

    lam: float
    psi0: float
    horizon: float
    residual_sup: float
    rel_change: float | None = None
    converged: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: d[k] for k in ("lambda", "psi0", "horizon", "rel_change",
                                  "converged", "residual_sup")}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _lstsq_line(t, psi):
    tm = t.mean()
    pm = psi.mean()
    dt = t - tm
    sxx = float(np.dot(dt, dt))
    if not sxx > 0:
        raise ValueError("degenerate time grid")
    slope = float(np.dot(dt, psi - pm)) / sxx
    return slope, pm - slope * tm


def estimate_lambda(traj: Trajectory | None = None, *, times=None, psi=None,
                    min_samples: int = 100) -> LambdaEstimate:
    """Fit psi(t) = psi0 + lam * t by ordinary least squares."""
    if traj is not None:
        times, psi = traj.times, traj.psi
    if psi is None:
        raise ValueError("trajectory has no precession angle; call accumulate_psi")
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if len(psi) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(psi)}")
    lam, psi_0 = _lstsq_line(times, psi)
    resid = float(np.max(np.abs(psi - (psi_0 + lam * times))))
    return LambdaEstimate(lam, psi_0, float(times[-1] - times[0]), resid)


class _PsiStream:
    """Integrates in chunks while keeping only the precession angle."""

    def __init__(self, model, s0, cfg, eps, method="ode"):
        if method not in ("ode", "simpson"):
            raise ValueError(f"unknown psi method {method!r}")
        self.model = model
        self.cfg = cfg
        self.eps = eps
        self.method = method
        self.y0 = _check_state(s0).copy()
        if method == "ode":
            self.y0 = np.append(self.y0, 0.0)
        self.carry = None
        self.n_done = 0          # samples produced so far
        self.chunks = []
        self.last_rate = None
        self.psi_last = 0.0
        self.min_rho2 = np.inf

    def advance_to(self, T):
        """Extend samples to cover [0, T] (T a multiple of sample_dt)."""
        dt = self.cfg.sample_dt
        n_target = int(round(T / dt)) + 1
        need = n_target - self.n_done
        if need <= 0:
            return
        samples, self.carry = raw_integrate(self.model, self.y0, T, self.cfg,
                                            self.n_done, need, carry=self.carry)
        rho2 = samples[:, 3] ** 2 + samples[:, 4] ** 2
        self.min_rho2 = min(self.min_rho2, float(rho2.min()))
        self.n_done = n_target
        if self.method == "ode":
            self.chunks.append(samples[:, 6].copy())
            return
        rates = np.atleast_1d(psi_rate(self.model, samples, self.eps))
        if self.last_rate is None:
            full = rates
        else:
            full = np.concatenate(([self.last_rate], rates))
        psi = _psi_from_rates(full, dt, self.psi_last)
        if self.last_rate is not None:
            psi = psi[1:]
        self.chunks.append(psi)
        self.psi_last = float(psi[-1])
        self.last_rate = float(rates[-1])

    def psi(self):
        return np.concatenate(self.chunks)


def lambda_converged(model: Model, s0, T0: float = 100.0,
                     threshold: float = DEFAULT_THRESHOLD,
                     cfg: IntegratorConfig | None = None, max_doublings: int = 10,
                     abs_floor: float = ABS_FLOOR, eps: float = 1e-9,
                     method: str = "ode") -> LambdaEstimate:
    """Double the horizon until |L(T) - L(2T)| / |L(T)| < threshold.

    When |L(T)| or |L(2T)| is below ``abs_floor`` the test switches to
    |L(T) - L(2T)| < abs_floor. Integration is incremental: each doubling
    only integrates the new half. If the cap ``2**max_doublings * T0`` is
    reached the last estimate is returned with ``converged=False``.

    ``method="ode"`` integrates psi as a seventh component under the step
    controller, which resolves fast passages near the vertical;
    ``"simpson"`` integrates the sampled rate and is subject to the
    aliasing guard.
    """
    cfg = cfg or IntegratorConfig()
    dt = cfg.sample_dt
    T0 = round(T0 / dt) * dt
    if not T0 > 0:
        raise ValueError("T0 must be positive")
    stream = _PsiStream(model, s0, cfg, eps, method)
    n0 = int(round(T0 / dt))
    # sample counts per horizon are even so Simpson pairs never straddle chunks
    if n0 % 2:
        n0 += 1
    T = n0 * dt
    stream.advance_to(T)
    prev = _fit_prefix(stream, n0, dt)
    est = prev
    for _ in range(max_doublings):
        n0 *= 2
        stream.advance_to(n0 * dt)
        est = _fit_prefix(stream, n0, dt)
        diff = abs(est.lam - prev.lam)
        if min(abs(prev.lam), abs(est.lam)) < abs_floor:
            est.rel_change = diff
            est.converged = diff < abs_floor
        else:
            est.rel_change = diff / abs(prev.lam)
            est.converged = est.rel_change < threshold
        if est.converged:
            return est
        prev = est
    return est


def _fit_prefix(stream, n_intervals, dt):
    psi = stream.psi()[: n_intervals + 1]
    t = np.arange(n_intervals + 1) * dt
    return estimate_lambda(times=t, psi=psi)
