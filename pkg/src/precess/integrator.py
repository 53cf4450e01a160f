"""Adaptive integration of the six-dimensional flow with dense sampling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import _kernels
from .dynamics import STATE_FIELDS, GEOM_TOL, DomainError, Model, as_array, integral_array


class IntegrationError(RuntimeError):
    """The step controller gave up; ``t_fail`` is where."""

    def __init__(self, message, t_fail, state=None):
        super().__init__(f"{message} at t={t_fail:.17g}")
        self.t_fail = t_fail
        self.state = state


class ManifoldError(ValueError):
    """Initial state not on the unit-sphere constraint."""


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    max_step: float = 1.0
    sample_dt: float = 0.01
    renormalize_gamma: bool = False
    max_steps: int = 50_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.sample_dt > 0 or not self.max_step > 0:
            raise ValueError("sample_dt and max_step must be positive")

    def with_tolerance(self, tol: float) -> "IntegratorConfig":
        return replace(self, rel_tol=tol, abs_tol=tol)


@dataclass
class Trajectory:
    """Uniformly sampled solution.

    ``psi`` stays ``None`` until :func:`precess.precession.accumulate_psi`
    fills it. ``end_state``/``end_time``/``next_step`` describe the last
    accepted integrator step, which may overshoot the last sample; they
    allow exact continuation.
    """

    model: Model
    times: np.ndarray
    states: np.ndarray
    psi: np.ndarray | None = None
    integral_drift: dict = field(default_factory=dict)
    end_time: float = 0.0
    end_state: np.ndarray | None = None
    next_step: float = 0.0
    n_steps: int = 0

    def __len__(self):
        return len(self.times)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)


def _check_state(s0) -> np.ndarray:
    y = as_array(s0)
    if y.ndim != 1:
        raise DomainError("integrate expects a single state")
    geom = float(y[3] ** 2 + y[4] ** 2 + y[5] ** 2)
    if abs(geom - 1.0) > GEOM_TOL:
        raise ManifoldError(f"|gamma|^2 - 1 = {geom - 1.0:.3e} exceeds {GEOM_TOL:g}")
    return y


def _raise_status(status, t, y):
    if status == _kernels.STEP_UNDERFLOW:
        raise IntegrationError("step size underflow", t, y)
    if status == _kernels.SINGULAR_PSI:
        from .precession import SingularityError
        raise SingularityError("precession rate undefined on the vertical", y)
    if status == _kernels.NON_FINITE:
        raise IntegrationError("non-finite state", t, y)
    if status == _kernels.MAX_STEPS:
        raise IntegrationError("step budget exhausted", t, y)


class Carry(NamedTuple):
    """Integrator state after a chunk: enough to continue bit-exactly."""

    t: float
    y: np.ndarray
    h: float
    F: np.ndarray
    t_old: float
    h_last: float
    y_old: np.ndarray
    n_steps: int


def raw_integrate(model: Model, y0, t_end: float, cfg: IntegratorConfig,
                  i_first: int, n_samples: int, carry: Carry | None = None,
                  reverse: bool = False):
    """Thin wrapper over the compiled loop; returns ``(samples, carry)``.

    Starts at t=0 from ``y0`` unless ``carry`` continues an earlier chunk.
    ``y0`` may carry a seventh component (the precession angle), which is
    then integrated alongside.
    """
    if carry is None:
        y = np.ascontiguousarray(y0, dtype=float)
        n = y.shape[0]
        carry = Carry(0.0, y, 0.0, np.zeros((7, n)), 0.0, 0.0, y.copy(), 0)
    n = carry.y.shape[0]
    out = np.empty((n_samples, n))
    status, t, y, h, n_written, n_steps, F, t_old, h_last, y_old = _kernels.integrate_kernel(
        model.code, model.params, carry.y, float(carry.t), float(t_end), float(carry.h),
        cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.sample_dt, int(i_first), out,
        cfg.renormalize_gamma, -1.0 if reverse else 1.0, cfg.max_steps - carry.n_steps,
        carry.F, float(carry.t_old), float(carry.h_last), carry.y_old)
    if status != _kernels.OK:
        _raise_status(status, t, y)
    return out[:n_written], Carry(t, y, h, F, t_old, h_last, y_old, carry.n_steps + n_steps)


def integrate(model: Model, s0, t_end: float, cfg: IntegratorConfig | None = None,
              reverse: bool = False) -> Trajectory:
    """Integrate from t=0 to at least ``t_end``; samples every ``cfg.sample_dt``.

    ``reverse=True`` integrates the time-reversed field (useful for
    round-trip checks); sample times still run forward from zero.
    """
    cfg = cfg or IntegratorConfig()
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    y0 = _check_state(s0)
    n = int(math.floor(t_end / cfg.sample_dt + 1e-9)) + 1
    samples, carry = raw_integrate(model, y0, t_end, cfg, 0, n, reverse=reverse)
    times = np.arange(len(samples)) * cfg.sample_dt
    traj = Trajectory(model, times, samples, end_time=carry.t, end_state=carry.y,
                      next_step=carry.h, n_steps=carry.n_steps)
    traj.integral_drift = invariant_drift(model, traj)
    return traj


DRIFT_KEYS = ("h", "c", "k", "geom")


def invariant_drift(model: Model, traj: Trajectory) -> dict:
    """Max of |I(t) - I(0)| / max(1, |I(0)|) per integral over the samples."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    vals = integral_array(model, traj.states)
    ref = vals[0]
    dev = np.abs(vals - ref) / np.maximum(1.0, np.abs(ref))
    out = {}
    for j, key in enumerate(DRIFT_KEYS):
        col = dev[:, j]
        if np.all(np.isnan(col)):
            continue
        out[key] = float(np.nanmax(col))
    return out


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV with header t,p,q,r,g1,g2,g3,psi and 17 significant digits."""
    psi = traj.psi if traj.psi is not None else np.full(len(traj), np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t",) + STATE_FIELDS + ("psi",))
        for t, s, ps in zip(traj.times, traj.states, psi):
            w.writerow([f"{v:.17g}" for v in (t, *s[:6], ps)])


def read_trajectory_csv(path, model: Model) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    traj = Trajectory(model, data[:, 0].copy(), data[:, 1:7].copy())
    if data.shape[0] and not np.all(np.isnan(data[:, 7])):
        traj.psi = data[:, 7].copy()
    return traj
