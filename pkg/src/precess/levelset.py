"""States on prescribed level sets, Chaplygin reconstruction, Gram volume
and numerical counting of invariant tori.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dynamics import (DomainError, Model, ModelKind, SymmetryMap, integral_array,
                       integral_gradients, symmetry_apply)
from .integrator import IntegratorConfig, integrate

RESIDUAL_TOL = 1e-12


class UnattainableTargets(ValueError):
    """No state realises the requested integral values."""


class IndeterminateClustering(RuntimeError):
    """Distinct torus clusters touch on the section grid; use more seeds."""


@dataclass(frozen=True)
class TargetIntegrals:
    """Integral values to realise.

    ``k`` is k^2 for Kovalevskaya and the signed k for Goryachev-Chaplygin;
    the area constant ``c`` is forced to zero for Goryachev-Chaplygin.
    """

    model: Model
    h: float
    k: float
    c: float = 0.0

    def __post_init__(self):
        if self.model.kind is ModelKind.GENERAL:
            raise DomainError("level-set targets are defined for the integrable tops")
        if self.model.kind is ModelKind.GORYACHEV_CHAPLYGIN and self.c != 0.0:
            raise DomainError("the Goryachev-Chaplygin case requires c = 0")
        if not np.all(np.isfinite([self.h, self.k, self.c])):
            raise DomainError("targets must be finite")
        if self.model.kind is ModelKind.KOVALEVSKAYA and self.k < 0:
            raise UnattainableTargets("k^2 must be non-negative")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.h, self.c, self.k, 1.0])


def _residual(model, x, target):
    return integral_array(model, x) - target


def _newton(model, x, target, fixed, max_iter=60):
    """Damped minimum-norm Newton on the four constraints.

    ``fixed`` lists coordinates that are held at their starting values.
    """
    free = [i for i in range(6) if i not in fixed]
    F = _residual(model, x, target)
    nrm = np.linalg.norm(F)
    for _ in range(max_iter):
        if nrm < 1e-15 * (1.0 + np.abs(target).max()):
            break
        J = integral_gradients(model, x)[[0, 1, 3, 2]][:, free]
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        lam = 1.0
        while lam > 1e-4:
            x_try = x.copy()
            x_try[free] += lam * step
            F_try = _residual(model, x_try, target)
            n_try = np.linalg.norm(F_try)
            if n_try < nrm or n_try < 1e-14:
                break
            lam *= 0.5
        else:
            return x, nrm
        x, F, nrm = x_try, F_try, n_try
    return x, nrm


def _random_start(rng, scale, gamma3=None):
    g = rng.normal(size=3)
    g /= np.linalg.norm(g)
    if gamma3 is not None:
        rho = np.sqrt(max(0.0, 1.0 - gamma3 * gamma3))
        ang = rng.uniform(0, 2 * np.pi)
        g = np.array([rho * np.cos(ang), rho * np.sin(ang), gamma3])
    w = rng.normal(scale=scale, size=3)
    return np.concatenate([w, g])


def find_state(target: TargetIntegrals, seed=0, n_starts: int = 200,
               gamma3: float | None = None, q_sign: int = 0) -> np.ndarray:
    """A state with all integrals within 1e-12 of ``target`` (|gamma| = 1 included).

    Randomised multi-start damped Newton from ``seed``. The solution set is
    two-dimensional; the random start selects a point on it, and
    ``gamma3`` optionally pins that coordinate. ``q_sign`` (+1/-1) rejects
    solutions with the wrong sign of q.
    """
    model = target.model
    tvec = target.vector
    rng = np.random.default_rng(seed)
    scale = np.sqrt(abs(target.h) + 1.0)
    fixed = (5,) if gamma3 is not None else ()
    for _ in range(n_starts):
        x0 = _random_start(rng, scale, gamma3)
        x, _ = _newton(model, x0, tvec, fixed)
        if not np.all(np.isfinite(x)):
            continue
        # polish gamma back to the sphere exactly, then one more Newton pass
        x[3:] /= np.linalg.norm(x[3:])
        x, _ = _newton(model, x, tvec, fixed, max_iter=5)
        if np.max(np.abs(_residual(model, x, tvec))) < RESIDUAL_TOL:
            if q_sign and np.sign(x[1]) != np.sign(q_sign):
                continue
            return x
    raise UnattainableTargets(
        f"no state with h={target.h}, c={target.c}, k={target.k} after {n_starts} starts")


def project_state(target: TargetIntegrals, x0) -> np.ndarray:
    """Newton projection of a nearby state onto the level set of ``target``.

    The minimum-norm steps keep the result close to ``x0``, which makes
    this suitable for following a torus family along a path of targets.
    """
    tvec = target.vector
    x = np.array(x0, dtype=float)[:6].copy()
    x, _ = _newton(target.model, x, tvec, ())
    if np.all(np.isfinite(x)):
        x[3:] /= np.linalg.norm(x[3:])
        x, _ = _newton(target.model, x, tvec, (), max_iter=5)
        if np.max(np.abs(_residual(target.model, x, tvec))) < RESIDUAL_TOL:
            return x
    raise UnattainableTargets(
        f"projection onto h={target.h}, c={target.c}, k={target.k} failed")


def gram_volume(model: Model, s) -> float:
    """sqrt(det G) for the Gram matrix of the integral gradients at ``s``.

    Four gradients for the integrable tops, three for the general top.
    """
    J = integral_gradients(model, s)
    G = J @ J.T
    return float(np.sqrt(max(np.linalg.det(G), 0.0)))


# --- Chaplygin variables for the Goryachev-Chaplygin top ----------------------

def gc_Z(z, h, k):
    return z**3 - 2.0 * (h + 1.0) * z - 4.0 * k


def gc_Zstar(z, h, k):
    return z**3 - 2.0 * (h - 1.0) * z - 4.0 * k


@dataclass(frozen=True)
class ChaplyginPoint:
    """Separating variables x, y with signs of the four square roots."""

    x: float
    y: float
    sx: int = 1
    sxstar: int = 1
    sy: int = 1
    systar: int = 1

    def flipped_x(self) -> "ChaplyginPoint":
        """The point reached by one loop of x across its interval."""
        return ChaplyginPoint(self.x, self.y, -self.sx, -self.sxstar, self.sy, self.systar)


def chaplygin_admissible(x, y, h, k, tol=1e-12) -> bool:
    return (gc_Z(x, h, k) <= tol and gc_Zstar(x, h, k) >= -tol
            and gc_Zstar(y, h, k) <= tol and gc_Z(y, h, k) >= -tol and x != y)


def chaplygin_to_state(cp: ChaplyginPoint, h: float, k: float) -> np.ndarray:
    """Reconstruct (p, q, r, g1, g2, g3) from Chaplygin variables."""
    x, y = cp.x, cp.y
    if not chaplygin_admissible(x, y, h, k):
        raise DomainError(f"(x, y) = ({x}, {y}) is not admissible for h={h}, k={k}")
    X = cp.sx * np.sqrt(max(-gc_Z(x, h, k), 0.0))
    Xs = cp.sxstar * np.sqrt(max(gc_Zstar(x, h, k), 0.0))
    Y = cp.sy * np.sqrt(max(gc_Z(y, h, k), 0.0))
    Ys = cp.systar * np.sqrt(max(-gc_Zstar(y, h, k), 0.0))
    d = 2.0 * (x - y)
    p = (X * Ys + Xs * Y) / 8.0
    q = (Xs * Ys - X * Y) / 8.0
    r = x + y
    g1 = 1.0 - (Xs**2 + Ys**2) / d
    g2 = (X * Xs + Y * Ys) / d
    g3 = (Xs * Y - X * Ys) / d
    return np.array([p, q, r, g1, g2, g3])


def chaplygin_intervals(h: float, k: float):
    """Admissible intervals for x and for y as lists of (lo, hi)."""
    roots = np.sort(np.concatenate([np.roots([1, 0, -2 * (h + 1), -4 * k]),
                                    np.roots([1, 0, -2 * (h - 1), -4 * k])]).real)
    pts = np.unique(roots)
    xs, ys = [], []
    for lo, hi in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (lo + hi)
        if gc_Z(mid, h, k) <= 0 <= gc_Zstar(mid, h, k):
            xs.append((lo, hi))
        if gc_Zstar(mid, h, k) <= 0 <= gc_Z(mid, h, k):
            ys.append((lo, hi))
    return xs, ys


# --- Poincare section and torus clustering -------------------------------------

SECTION_CELL = 0.05


def section_crossings(traj_states, times=None):
    """Crossings of g2 = 0 with g2 increasing, linearly interpolated.

    Returns an array of full states (n, 6) and, if ``times`` is given, the
    crossing times.
    """
    g2 = traj_states[:, 4]
    idx = np.nonzero((g2[:-1] < 0) & (g2[1:] >= 0))[0]
    w = -g2[idx] / (g2[idx + 1] - g2[idx])
    pts = traj_states[idx] + w[:, None] * (traj_states[idx + 1] - traj_states[idx])
    if times is None:
        return pts
    return pts, times[idx] + w * (times[idx + 1] - times[idx])


def _cells(points, cell, coords):
    return set(map(tuple, np.floor(points[:, coords] / cell).astype(np.int64)))


def _neighbours(c):
    i, j = c
    return {(i + a, j + b) for a in (-1, 0, 1) for b in (-1, 0, 1)}


@dataclass
class TorusClusters:
    """Section data grouped into tori."""

    states: np.ndarray           # seed states, one per trajectory
    labels: np.ndarray           # cluster id per seed
    crossings: list              # per seed: (times, points) on the section
    n_clusters: int

    def representatives(self) -> list:
        return [self.states[np.nonzero(self.labels == c)[0][0]] for c in range(self.n_clusters)]


def cluster_trajectories(crossing_sets, cell=SECTION_CELL, coords=(2, 5), strict=True):
    """Union trajectories whose section points share a grid cell.

    Labels are canonical: clusters are numbered by the lexicographic order
    of their smallest occupied cell. With ``strict`` an
    :class:`IndeterminateClustering` is raised when two clusters occupy
    neighbouring cells without sharing one.
    """
    n = len(crossing_sets)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    cells = [_cells(pts, cell, list(coords)) if len(pts) else set() for pts in crossing_sets]
    owner = {}
    for i, cs in enumerate(cells):
        for c in cs:
            if c in owner:
                ra, rb = find(i), find(owner[c])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            else:
                owner[c] = i
    roots = [find(i) for i in range(n)]
    groups = {}
    for i, r in enumerate(roots):
        groups.setdefault(r, set()).update(cells[i])
    if strict and len(groups) > 1:
        keys = list(groups)
        for a in range(len(keys)):
            halo = set().union(*(_neighbours(c) for c in groups[keys[a]]))
            for b in range(a + 1, len(keys)):
                if halo & groups[keys[b]]:
                    raise IndeterminateClustering(
                        "section sets of different clusters are adjacent; use more seeds "
                        "or a longer section horizon")
    order = sorted(groups, key=lambda r: min(groups[r]) if groups[r] else (np.inf, np.inf))
    relabel = {r: i for i, r in enumerate(order)}
    return np.array([relabel[r] for r in roots]), len(groups)


def torus_clusters(target: TargetIntegrals, n_seeds: int = 32, seed=0,
                   horizon: float = 1000.0, cfg: IntegratorConfig | None = None,
                   cell: float = SECTION_CELL, strict: bool = True,
                   with_mirrors: bool = True) -> TorusClusters:
    """Integrate seeds on one level set and group them into tori.

    With ``with_mirrors`` part of the seeds are images of random seeds
    under the sign-flip maps that keep the level set (all three maps when
    c = 0, only r, g3 -> -r, -g3 otherwise; only the alpha map for
    Goryachev-Chaplygin), so mirror tori are always probed.
    """
    cfg = cfg or IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10, sample_dt=0.02)
    maps = level_set_maps(target) if with_mirrors else []
    base = max(1, n_seeds // (len(maps) + 1))
    states = []
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for child in ss.spawn(base):
        states.append(find_state(target, seed=np.random.default_rng(child)))
    images = [symmetry_apply(m, s) for m in maps for s in states]
    states = (states + images)[:n_seeds]
    crossing = []
    for s in states:
        tr = integrate(target.model, s, horizon, cfg)
        pts, ts = section_crossings(tr.states, tr.times)
        crossing.append((ts, pts))
    labels, n = cluster_trajectories([c[1] for c in crossing], cell=cell, strict=strict)
    return TorusClusters(np.array(states), labels, crossing, n)


def level_set_maps(target: TargetIntegrals) -> list:
    """Sign-flip maps sending the level set of ``target`` to itself."""
    if target.model.kind is ModelKind.GORYACHEV_CHAPLYGIN:
        # the other two flip the sign of k
        return [SymmetryMap.ALPHA]
    if target.c == 0.0:
        return [SymmetryMap.NEG_R_NEG_G3, SymmetryMap.NEG_PQR, SymmetryMap.ALPHA]
    return [SymmetryMap.NEG_R_NEG_G3]


def count_tori(target: TargetIntegrals, n_seeds: int = 32, seed=0, **kw) -> int:
    """Number of invariant tori on the level set, from section-cell overlap."""
    return torus_clusters(target, n_seeds=n_seeds, seed=seed, **kw).n_clusters


def write_crossings_csv(clusters: TorusClusters, path) -> None:
    """Section dump with columns t, r, g3, cluster_id."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "r", "g3", "cluster_id"))
        for (ts, pts), lab in zip(clusters.crossings, clusters.labels):
            for t, pt in zip(ts, pts):
                w.writerow((f"{t:.17g}", f"{pt[2]:.17g}", f"{pt[5]:.17g}", int(lab)))
