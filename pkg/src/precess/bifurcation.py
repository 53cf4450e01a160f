"""Bifurcation data of the two integrable tops and region classification.

The Goryachev-Chaplygin diagram is known in closed form: two branches
``h = 3/2 t^2 +- 1, 2k = t^3`` and the half-line ``k = 0, h > -1``. For
the Kovalevskaya top only the critical values of the area constant and
the curve of possible passages through the vertical are encoded; regions
of the c = 0 diagram are identified numerically from torus counts.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import GORYACHEV_CHAPLYGIN, KOVALEVSKAYA, DomainError
from .integrator import IntegratorConfig, integrate
from .levelset import (IndeterminateClustering, TargetIntegrals, UnattainableTargets,
                       torus_clusters)

BRANCH_TOL = 1e-9
CURVE_TOL = 1e-6


class Region(enum.Enum):
    O1 = "O1"
    O2 = "O2"
    O3 = "O3"
    # two tori locked to opposite signs of r; the numerical probe does not
    # separate O2 from O3
    O2_O3 = "O2/O3"
    O4 = "O4"
    O5 = "O5"
    # regular Goryachev-Chaplygin point; the torus count says which side
    REGULAR = "Regular"
    ON_BIFURCATION = "OnBifurcation"
    INACCESSIBLE = "Inaccessible"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class RegionLabel:
    region: Region
    torus_count: int | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {"region": self.region.value, "torus_count": self.torus_count,
                "note": self.note}


# --- Goryachev-Chaplygin ---------------------------------------------------------

def gc_branch(t, sign: int = 1):
    """Point ``(k, h)`` on the branch ``2k = t^3, h = 3/2 t^2 + sign``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    t = np.asarray(t, dtype=float)
    k = 0.5 * t ** 3
    h = 1.5 * t ** 2 + sign
    if k.ndim == 0:
        return float(k), float(h)
    return k, h


def gc_axis_branch(h):
    """Point on the half-line branch ``k = 0``; needs ``h > -1``."""
    h = float(h)
    if not h > -1.0:
        raise DomainError("the k = 0 branch is the half-line h > -1")
    return 0.0, h


def gc_envelope(k, sign: int = 1):
    """Energy of the upper (``sign=+1``) or lower branch over ``k``."""
    return 1.5 * np.abs(2.0 * np.asarray(k, dtype=float)) ** (2.0 / 3.0) + sign


def gc_classify(h: float, k: float, tol: float = BRANCH_TOL) -> RegionLabel:
    """One torus below the upper branch, two above it."""
    if not (math.isfinite(h) and math.isfinite(k)):
        raise DomainError("h and k must be finite")
    upper = float(gc_envelope(k, 1))
    lower = upper - 2.0
    if abs(h - upper) < tol or abs(h - lower) < tol or (abs(k) < tol and h > -1.0 - tol):
        return RegionLabel(Region.ON_BIFURCATION, None)
    if h < lower:
        return RegionLabel(Region.INACCESSIBLE, 0)
    return RegionLabel(Region.REGULAR, 1 if h < upper else 2,
                       "below the upper branch" if h < upper else "above the upper branch")


def gc_diagram(t_max: float = 2.0, n: int = 201, h_max: float | None = None) -> dict:
    """Branch polylines as JSON-ready lists of ``[k, h]`` pairs."""
    t = np.linspace(-t_max, t_max, n)
    up = np.column_stack(gc_branch(t, 1))
    lo = np.column_stack(gc_branch(t, -1))
    top = h_max if h_max is not None else float(up[:, 1].max())
    axis = [[0.0, -1.0], [0.0, top]]
    return {"model": GORYACHEV_CHAPLYGIN.kind.value, "axes": ["k", "h"],
            "branches": [
                {"name": "upper", "points": up.tolist()},
                {"name": "lower", "points": lo.tolist()},
                {"name": "k=0", "points": axis},
            ]}


# --- Kovalevskaya -----------------------------------------------------------------

def kov_critical_c() -> list:
    """Critical values of the area constant, in increasing order."""
    return [0.0, math.sqrt(2.0), 4.0 * 3.0 ** -0.75, 2.0]


def kov_singular_curve(c: float, k: float) -> float:
    """Positive sheet of ``h^2 = c^2/2 + k``."""
    rad = 0.5 * c * c + k
    if rad < 0:
        raise DomainError(f"c^2/2 + k = {rad:.3g} is negative")
    return math.sqrt(rad)


def on_curve(h: float, k: float, c: float, tol: float = CURVE_TOL) -> bool:
    return abs(h * h - 0.5 * c * c - k) < tol


def kov_pole_locus(c: float, k_sq: float):
    """Energies ``c^2/2 -+ sqrt(k^2)`` of states with g3 = +-1.

    On the vertical g1 = g2 = 0, so c = r g3 = +-r and
    k^2 = (p^2 + q^2)^2 = (h - c^2/2)^2. Only levels on this locus can
    contain a passage through the vertical.
    """
    if k_sq < 0:
        raise DomainError("k^2 must be non-negative")
    s = math.sqrt(k_sq)
    return 0.5 * c * c - s, 0.5 * c * c + s


def on_pole_locus(h: float, k_sq: float, c: float, tol: float = CURVE_TOL) -> bool:
    return abs((h - 0.5 * c * c) ** 2 - k_sq) < tol


def kov_diagram(c: float = 0.0, k_max: float = 4.0, n: int = 201) -> dict:
    """Polylines ``[k^2, h]`` of the singular curve and the pole locus for fixed c."""
    k = np.linspace(0.0, k_max, n)
    curve = np.column_stack([k, np.sqrt(0.5 * c * c + k)])
    lo, hi = zip(*(kov_pole_locus(c, x) for x in k))
    return {"model": KOVALEVSKAYA.kind.value, "c": c, "axes": ["k_sq", "h"],
            "branches": [
                {"name": "singular-curve", "points": curve.tolist()},
                {"name": "pole-locus-upper", "points": np.column_stack([k, hi]).tolist()},
                {"name": "pole-locus-lower", "points": np.column_stack([k, lo]).tolist()},
            ]}


def kov_classify_c0(h: float, k_sq: float, probe_budget: int = 32, seed=0,
                    horizon: float = 1000.0) -> RegionLabel:
    """Classify a c = 0 point from the tori found on its level set.

    One torus is O1. Two tori whose trajectories each keep one sign of r
    (only possible where h^2 > k^2) are O2/O3; two tori crossing r = 0 are
    O4. Touching clusters are reported as a bifurcation point.
    """
    target = TargetIntegrals(KOVALEVSKAYA, h, k_sq, 0.0)
    try:
        cl = torus_clusters(target, n_seeds=probe_budget, seed=seed, horizon=horizon)
    except UnattainableTargets:
        return RegionLabel(Region.INACCESSIBLE, 0)
    except IndeterminateClustering as exc:
        return RegionLabel(Region.ON_BIFURCATION, None, str(exc))
    n = cl.n_clusters
    if n == 1:
        return RegionLabel(Region.O1, 1)
    if n != 2:
        return RegionLabel(Region.UNKNOWN, n, f"{n} clusters at c = 0")
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10, sample_dt=0.02)
    locked = []
    for s in cl.representatives():
        r = integrate(KOVALEVSKAYA, s, horizon, cfg).states[:, 2]
        locked.append(bool(np.all(r > 0) or np.all(r < 0)))
    below = h * h > k_sq
    if all(locked) and below:
        return RegionLabel(Region.O2_O3, 2, "r keeps its sign on each torus")
    if not any(locked) and not below:
        return RegionLabel(Region.O4, 2, "tori cross r = 0")
    return RegionLabel(Region.UNKNOWN, 2, "r-locking disagrees with the h^2 = k^2 test")


def diagram_json(diagram: dict) -> str:
    return json.dumps(diagram, indent=1)
