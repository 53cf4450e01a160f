"""Parallel, resumable mean-motion sweeps over (k^2, h) grids and sections.

A sweep visits every point of a grid (or of a sampled polyline), finds
the tori on its level set, estimates the mean motion on each and writes
one CSV row per torus. Each point is computed from its own seed stream,
so results do not depend on the number of workers or on the order in
which points finish. Rows are flushed as points complete and a JSON
manifest records finished points, which lets an interrupted sweep resume.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bifurcation import on_curve, on_pole_locus
from .dynamics import DomainError, ModelKind, model_from_name
from .integrator import IntegrationError, IntegratorConfig
from .levelset import TargetIntegrals, UnattainableTargets, project_state, torus_clusters
from .precession import AliasingError, SingularityError, lambda_converged

COLUMNS = ("k_sq", "h", "c", "torus_id", "lambda", "converged", "horizon",
           "residual_sup", "status")
STATUSES = ("ok", "inaccessible", "on-singular-curve", "unconverged", "integration-failed")

# area constants of the c != 0 diagrams
C_VALUES = {"c1": 1.03, "c2": 1.71, "c3": 1.88, "c4": 3.0}

# sections of the c != 0 diagrams: (c, start (k^2, h), end (k^2, h))
SECTIONS = {
    "I.a": (C_VALUES["c1"], (0.488, 1.18), (0.488, 1.27)),
    "I.b": (C_VALUES["c1"], (0.81, 1.39), (0.76, 1.46)),
    "II": (C_VALUES["c2"], (0.1, 1.73), (0.05, 1.76)),
    "III": (C_VALUES["c3"], (0.005, 1.77), (0.005, 2.0)),
}

JUMP_FACTOR = 10.0
CONTINUITY_FACTOR = 3.0


class ConfigError(ValueError):
    """Invalid sweep configuration."""


@dataclass(frozen=True)
class SweepConfig:
    model: str = "kovalevskaya"
    c: float = 0.0
    grid: dict | None = None
    polyline: list | None = None
    samples: int = 11
    T0: float = 100.0
    threshold: float = 0.0005
    max_doublings: int = 8
    seed: int = 0
    output: str | None = None
    n_seeds: int = 16
    probe_horizon: float = 600.0
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    workers: int | None = None
    curve_tol: float = 1e-6

    def __post_init__(self):
        if (self.grid is None) == (self.polyline is None):
            raise ConfigError("give exactly one of 'grid' or 'polyline'")
        if not self.threshold > 0:
            raise ConfigError("threshold must be positive")
        if self.polyline is not None:
            if len(self.polyline) == 0:
                raise ConfigError("polyline is empty")
            if self.samples < 1:
                raise ConfigError("samples must be positive")
            for pt in self.polyline:
                if len(pt) != 2:
                    raise ConfigError("polyline points are [k_sq, h] pairs")
        else:
            need = ("k_sq_min", "k_sq_max", "h_min", "h_max", "nx", "ny")
            missing = [k for k in need if k not in self.grid]
            if missing:
                raise ConfigError(f"grid lacks {missing}")
            if int(self.grid["nx"]) < 1 or int(self.grid["ny"]) < 1:
                raise ConfigError("grid is empty")
        try:
            kind = model_from_name(self.model).kind
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        if kind is ModelKind.GORYACHEV_CHAPLYGIN and self.c != 0:
            raise ConfigError("the Goryachev-Chaplygin sweep requires c = 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad JSON in {path}: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        d = self.to_dict()
        for k in ("output", "workers"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def points(self) -> np.ndarray:
        """Sample points ``(k_sq, h)`` in canonical order."""
        if self.grid is not None:
            g = self.grid
            ks = np.linspace(g["k_sq_min"], g["k_sq_max"], int(g["nx"]))
            hs = np.linspace(g["h_min"], g["h_max"], int(g["ny"]))
            return np.array([(k, h) for h in hs for k in ks])
        return polyline_samples(self.polyline, self.samples)[0]


def polyline_samples(waypoints, n):
    """``n`` points evenly spaced by arc length; returns ``(points, arc)``."""
    w = np.asarray(waypoints, dtype=float)
    if len(w) == 0:
        raise ConfigError("polyline is empty")
    if len(w) == 1 or n == 1:
        return w[:1].copy(), np.zeros(1)
    seg = np.linalg.norm(np.diff(w, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.linspace(0.0, cum[-1], n)
    pts = np.column_stack([np.interp(s, cum, w[:, 0]), np.interp(s, cum, w[:, 1])])
    return pts, s


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    arc: list | None = None

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def to_csv(self, path) -> None:
        write_rows(path, self.rows)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])


def _parse_row(rec) -> dict:
    return {"k_sq": float(rec["k_sq"]), "h": float(rec["h"]), "c": float(rec["c"]),
            "torus_id": int(rec["torus_id"]), "lambda": float(rec["lambda"]),
            "converged": rec["converged"] == "true", "horizon": float(rec["horizon"]),
            "residual_sup": float(rec["residual_sup"]), "status": rec["status"]}


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        return [_parse_row(rec) for rec in csv.DictReader(fh)]


def _row(k, h, c, tid, status, est=None):
    nan = math.nan
    return {"k_sq": float(k), "h": float(h), "c": float(c), "torus_id": int(tid),
            "lambda": est.lam if est else nan, "converged": bool(est.converged) if est else False,
            "horizon": float(est.horizon) if est else 0.0,
            "residual_sup": est.residual_sup if est else nan, "status": status}


def _point_seed(seed, index):
    return np.random.SeedSequence([int(seed), int(index)])


def _estimate(cfg: SweepConfig, model, state):
    icfg = IntegratorConfig(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
    try:
        est = lambda_converged(model, state, T0=cfg.T0, threshold=cfg.threshold,
                               cfg=icfg, max_doublings=cfg.max_doublings)
    except (IntegrationError, SingularityError, AliasingError):
        return None, "integration-failed"
    return est, "ok" if est.converged else "unconverged"


def _on_singular(cfg: SweepConfig, k, h):
    if model_from_name(cfg.model).kind is not ModelKind.KOVALEVSKAYA:
        return False
    return on_curve(h, k, cfg.c, cfg.curve_tol) or on_pole_locus(h, k, cfg.c, cfg.curve_tol)


def compute_point(cfg: SweepConfig, index: int, k: float, h: float) -> list:
    """All rows for one grid point; pure given ``cfg`` and ``index``."""
    model = model_from_name(cfg.model)
    if _on_singular(cfg, k, h):
        return [_row(k, h, cfg.c, 0, "on-singular-curve")]
    target = TargetIntegrals(model, h, k, cfg.c)
    try:
        cl = torus_clusters(target, n_seeds=cfg.n_seeds, seed=_point_seed(cfg.seed, index),
                            horizon=cfg.probe_horizon, strict=False)
    except UnattainableTargets:
        return [_row(k, h, cfg.c, 0, "inaccessible")]
    except (IntegrationError, SingularityError):
        return [_row(k, h, cfg.c, 0, "integration-failed")]
    rows = []
    for tid, s in enumerate(cl.representatives()):
        est, status = _estimate(cfg, model, s)
        rows.append(_row(k, h, cfg.c, tid, status, est))
    return rows


def _worker(args):
    cfg, index, k, h = args
    return index, compute_point(cfg, index, k, h)


def worker_count(cfg: SweepConfig) -> int:
    env = os.environ.get("PRECESS_THREADS")
    if env:
        return max(1, int(env))
    if cfg.workers:
        return max(1, int(cfg.workers))
    return os.cpu_count() or 1


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _load_progress(cfg: SweepConfig, out: Path, pts) -> dict:
    """Rows of points finished by an earlier run with the same config."""
    man = _manifest_path(out)
    if not (man.exists() and out.exists()):
        return {}
    with open(man) as fh:
        info = json.load(fh)
    if info.get("fingerprint") != cfg.fingerprint():
        raise ConfigError(f"{man} belongs to a different configuration")
    done = set(info.get("completed", []))
    index_of = {(_fmt(float(k)), _fmt(float(h))): i for i, (k, h) in enumerate(pts)}
    by_point = {}
    for r in read_rows(out):
        i = index_of.get((_fmt(r["k_sq"]), _fmt(r["h"])))
        if i is not None and i in done:
            by_point.setdefault(i, []).append(r)
    return {i: sorted(rs, key=lambda r: r["torus_id"]) for i, rs in by_point.items()}


def _write_manifest(cfg, out: Path, done, n_points, complete=False):
    man = _manifest_path(out)
    tmp = man.with_name(man.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump({"fingerprint": cfg.fingerprint(), "n_points": n_points,
                   "completed": sorted(done), "complete": complete}, fh)
    os.replace(tmp, man)


def run_sweep(cfg: SweepConfig, output=None, workers: int | None = None,
              stop_after: int | None = None) -> SweepResult:
    """Evaluate every point of ``cfg``; rows come back in canonical order.

    With an output path rows are appended as points finish and a manifest
    ``<output>.manifest.json`` lists finished points; a rerun resumes from
    it and the file is rewritten in canonical order once all points are
    done. ``stop_after`` ends the run early after that many new points
    (used to exercise resumption).
    """
    pts = cfg.points()
    out = output or cfg.output
    out = Path(out) if out else None
    results = _load_progress(cfg, out, pts) if out else {}
    todo = [(cfg, i, float(k), float(h)) for i, (k, h) in enumerate(pts) if i not in results]
    if stop_after is not None:
        todo = todo[:stop_after]
    n_workers = workers or worker_count(cfg)
    if out:
        if not results:
            write_rows(out, [])
        fh = open(out, "a", newline="")
        writer = csv.writer(fh, lineterminator="\n")
    try:
        def consume(index, rows):
            results[index] = rows
            if out:
                for r in rows:
                    writer.writerow([_fmt(r[c]) for c in COLUMNS])
                fh.flush()
                _write_manifest(cfg, out, results, len(pts))

        if n_workers <= 1 or len(todo) <= 1:
            for job in todo:
                consume(*_worker(job))
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as ex:
                for index, rows in ex.map(_worker, todo):
                    consume(index, rows)
    finally:
        if out:
            fh.close()
    rows = [r for i in sorted(results) for r in results[i]]
    if out and len(results) == len(pts):
        write_rows(out, rows)
        _write_manifest(cfg, out, results, len(pts), complete=True)
    return SweepResult(rows)


# --- sections -------------------------------------------------------------------

def section_config(name: str, samples: int = 21, **kw) -> SweepConfig:
    c, a, b = SECTIONS[name]
    return SweepConfig(model="kovalevskaya", c=c, polyline=[list(a), list(b)],
                       samples=samples, **kw)


def emit_section(cfg: SweepConfig, output=None) -> SweepResult:
    """Mean motions along a polyline, ordered by arc length.

    Torus families are followed by continuation: the first sample is
    probed for all its tori, and each later sample starts from the
    previous state of every family, projected onto the new level set.
    ``torus_id`` therefore names a family along the whole section. When a
    family ceases to exist its track moves to the nearest torus of the
    new level set, which shows up as a jump.
    """
    if cfg.polyline is None:
        raise ConfigError("emit_section needs a polyline config")
    model = model_from_name(cfg.model)
    pts, arc = polyline_samples(cfg.polyline, cfg.samples)
    rows, arcs = [], []
    tracks = None
    for i, (k, h) in enumerate(pts):
        if _on_singular(cfg, k, h):
            rows.append(_row(k, h, cfg.c, 0, "on-singular-curve"))
            arcs.append(arc[i])
            continue
        target = TargetIntegrals(model, h, k, cfg.c)
        if tracks is None:
            try:
                cl = torus_clusters(target, n_seeds=cfg.n_seeds, seed=_point_seed(cfg.seed, 0),
                                    horizon=cfg.probe_horizon, strict=False)
                tracks = [np.array(s) for s in cl.representatives()]
            except UnattainableTargets:
                rows.append(_row(k, h, cfg.c, 0, "inaccessible"))
                arcs.append(arc[i])
                continue
        for tid, prev in enumerate(tracks):
            if prev is None:
                rows.append(_row(k, h, cfg.c, tid, "inaccessible"))
                arcs.append(arc[i])
                continue
            try:
                s = project_state(target, prev)
            except UnattainableTargets:
                # the family ended; reattach to the nearest torus that exists here
                s = _nearest_torus(cfg, target, prev, i)
                if s is None:
                    tracks[tid] = None
                    rows.append(_row(k, h, cfg.c, tid, "inaccessible"))
                    arcs.append(arc[i])
                    continue
            tracks[tid] = s
            est, status = _estimate(cfg, model, s)
            rows.append(_row(k, h, cfg.c, tid, status, est))
            arcs.append(arc[i])
    res = SweepResult(rows, arcs)
    out = output or cfg.output
    if out:
        res.to_csv(out)
    return res


def _nearest_torus(cfg, target, prev, index):
    try:
        cl = torus_clusters(target, n_seeds=cfg.n_seeds, seed=_point_seed(cfg.seed, index),
                            horizon=cfg.probe_horizon, strict=False)
    except UnattainableTargets:
        return None
    reps = cl.representatives()
    return reps[int(np.argmin([np.linalg.norm(r - prev) for r in reps]))]


def family_series(result: SweepResult, torus_id: int):
    """Arc length and |lambda| of one family, skipping rows without a value."""
    s, lam = [], []
    for a, r in zip(result.arc, result.rows):
        if r["torus_id"] == torus_id and r["status"] in ("ok", "unconverged"):
            s.append(a)
            lam.append(abs(r["lambda"]))
    return np.array(s), np.array(lam)


def detect_jumps(values, factor: float = JUMP_FACTOR, floor: float = 1e-4) -> list:
    """Indices i where |v[i+1] - v[i]| exceeds ``factor`` times the median step.

    ``floor`` bounds the threshold from below so flat series of near-zero
    values do not report noise as jumps.
    """
    d = np.abs(np.diff(np.asarray(values, dtype=float)))
    if len(d) < 2:
        return []
    thr = max(factor * float(np.median(d)), floor)
    return [int(i) for i in np.nonzero(d > thr)[0]]


def is_continuous(values, factor: float = CONTINUITY_FACTOR, floor: float = 1e-4) -> bool:
    """No step larger than ``factor`` times the larger neighbouring step."""
    d = np.abs(np.diff(np.asarray(values, dtype=float)))
    for i in range(len(d)):
        nb = [d[j] for j in (i - 1, i + 1) if 0 <= j < len(d)]
        if not nb:
            continue
        if d[i] > max(factor * max(nb), floor):
            return False
    return True


def section_report(result: SweepResult) -> dict:
    """Jump indices and continuity verdict per torus family."""
    out = {}
    for tid in sorted({r["torus_id"] for r in result.rows}):
        s, lam = family_series(result, tid)
        jumps = detect_jumps(lam)
        out[tid] = {"n": len(lam), "jumps": [float(s[i]) for i in jumps],
                    "continuous": is_continuous(lam) and not jumps}
    return out
