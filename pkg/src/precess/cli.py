"""Command-line front end: ``python -m precess <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 computation error, 3 selftest failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import bifurcation, checks, ergodic, sweep
from .dynamics import STATE_FIELDS, Model, ModelKind, general_top, model_from_name
from .integrator import IntegratorConfig
from .levelset import TargetIntegrals, find_state, torus_clusters, write_crossings_csv
from .precession import integrate_with_psi, lambda_converged
from .svg import Canvas, limits

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_SELFTEST = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- input helpers ------------------------------------------------------------------

def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    with open(args.config) as fh:
        return json.load(fh)


def _model(args, conf) -> Model:
    spec = conf.get("model", args.model)
    if isinstance(spec, dict):
        return Model.from_dict(spec)
    if spec == "general":
        g = conf.get("general", {})
        return general_top(g.get("A", 1.0), g.get("B", 2.0), g.get("C", 2.5),
                           tuple(g.get("lambda", (0.3, 0.2, 0.1))), g.get("mu", 1.0))
    return model_from_name(spec)


def _integrator(args, conf) -> IntegratorConfig:
    d = dict(conf.get("integrator", {}))
    if getattr(args, "rel_tol", None) is not None:
        d["rel_tol"] = d["abs_tol"] = args.rel_tol
    if getattr(args, "dt", None) is not None:
        d["sample_dt"] = args.dt
    return IntegratorConfig(**d)


def _initial_state(args, conf, model) -> np.ndarray:
    if args.state:
        vals = [float(x) for x in args.state.split(",")]
        if len(vals) != 6:
            raise UsageError("--state needs six comma-separated values")
        return np.array(vals)
    if "state" in conf:
        st = conf["state"]
        return np.array([st[k] for k in STATE_FIELDS] if isinstance(st, dict) else st, float)
    h = args.h if args.h is not None else conf.get("h")
    k = args.k if args.k is not None else conf.get("k", conf.get("k_sq"))
    if h is None or k is None:
        raise UsageError("give --state or both --h and --k")
    c = args.c if args.c is not None else conf.get("c", 0.0)
    return find_state(TargetIntegrals(model, h, k, c), seed=args.seed)


def _target(args, conf, model) -> TargetIntegrals:
    h = args.h if args.h is not None else conf.get("h")
    k = args.k if args.k is not None else conf.get("k", conf.get("k_sq"))
    if h is None or k is None:
        raise UsageError("give --h and --k")
    c = args.c if args.c is not None else conf.get("c", 0.0)
    return TargetIntegrals(model, h, k, c)


def _out(args):
    return open(args.out, "w", newline="") if args.out else sys.stdout


def _emit_json(args, obj):
    fh = _out(args)
    fh.write(json.dumps(obj, indent=1, default=_json_default) + "\n")
    if fh is not sys.stdout:
        fh.close()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _emit_svg(args, canvas: Canvas):
    fh = _out(args)
    fh.write(canvas.render())
    if fh is not sys.stdout:
        fh.close()


def _emit_csv(args, header, rows):
    fh = _out(args)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])
    if fh is not sys.stdout:
        fh.close()


# --- subcommands -------------------------------------------------------------------

def cmd_simulate(args):
    conf = _load_config(args)
    model = _model(args, conf)
    s0 = _initial_state(args, conf, model)
    tr = integrate_with_psi(model, s0, args.t_end, _integrator(args, conf))
    if args.format == "json":
        _emit_json(args, {"model": model.to_dict(), "t_end": args.t_end,
                          "n_samples": len(tr), "integral_drift": tr.integral_drift,
                          "end_state": tr.states[-1], "psi_end": float(tr.psi[-1])})
    elif args.format == "svg":
        cv = Canvas(limits(tr.times), limits(tr.psi), "t", "psi", "precession angle")
        cv.polyline(tr.times, tr.psi)
        _emit_svg(args, cv)
    else:
        rows = [(float(t), *map(float, s), float(p)) for t, s, p in zip(tr.times, tr.states, tr.psi)]
        _emit_csv(args, ("t",) + STATE_FIELDS + ("psi",), rows)


def cmd_lambda(args):
    conf = _load_config(args)
    model = _model(args, conf)
    s0 = _initial_state(args, conf, model)
    est = lambda_converged(model, s0, T0=args.T0, threshold=args.threshold,
                           cfg=_integrator(args, conf), max_doublings=args.max_doublings)
    d = est.to_dict()
    if args.format == "csv":
        _emit_csv(args, tuple(d), [tuple(d.values())])
    else:
        _emit_json(args, d)


def _sweep_config(args) -> sweep.SweepConfig:
    if not args.config:
        raise UsageError("sweep needs --config")
    return sweep.SweepConfig.from_json(args.config)


def cmd_sweep(args):
    cfg = _sweep_config(args)
    if args.format == "svg":
        raise UsageError("sweep writes csv or json")
    if args.format == "json":
        res = sweep.run_sweep(cfg, workers=args.workers)
        _emit_json(args, {"config": cfg.to_dict(), "rows": res.rows})
        return
    out = args.out or cfg.output
    if not out:
        raise UsageError("sweep csv output needs --out or 'output' in the config")
    sweep.run_sweep(cfg, output=out, workers=args.workers)


def cmd_section(args):
    if args.name:
        if args.name not in sweep.SECTIONS:
            raise UsageError(f"unknown section {args.name!r}; choose from {sorted(sweep.SECTIONS)}")
        cfg = sweep.section_config(args.name, samples=args.samples, seed=args.seed)
    else:
        cfg = _sweep_config(args)
    res = sweep.emit_section(cfg)
    report = sweep.section_report(res)
    if args.format == "json":
        _emit_json(args, {"config": cfg.to_dict(), "report": report,
                          "rows": [dict(r, arc=a) for r, a in zip(res.rows, res.arc)]})
    elif args.format == "svg":
        cv = Canvas(limits(res.arc), limits([abs(r["lambda"]) for r in res.rows]),
                    "arc length", "|lambda|", "section")
        for tid in report:
            s, lam = sweep.family_series(res, tid)
            cv.polyline(s, lam, group=tid)
            cv.scatter(s, lam, group=tid, r=2.0)
        _emit_svg(args, cv)
    else:
        rows = [tuple(r[c] if not isinstance(r[c], bool) else str(r[c]).lower()
                      for c in sweep.COLUMNS) + (float(a),) for r, a in zip(res.rows, res.arc)]
        _emit_csv(args, sweep.COLUMNS + ("arc",), rows)


def cmd_diagram(args):
    conf = _load_config(args)
    model = _model(args, conf)
    if model.kind is ModelKind.GORYACHEV_CHAPLYGIN:
        d = bifurcation.gc_diagram(t_max=args.t_max)
    elif model.kind is ModelKind.KOVALEVSKAYA:
        d = bifurcation.kov_diagram(c=args.c or 0.0)
    else:
        raise UsageError("diagrams exist for the integrable tops only")
    if args.format == "svg":
        pts = np.concatenate([np.array(b["points"]) for b in d["branches"]])
        cv = Canvas(limits(pts[:, 0]), limits(pts[:, 1]), d["axes"][0], d["axes"][1],
                    "bifurcation diagram")
        for i, b in enumerate(d["branches"]):
            p = np.array(b["points"])
            cv.polyline(p[:, 0], p[:, 1], group=i)
        _emit_svg(args, cv)
    elif args.format == "csv":
        rows = [(b["name"], float(x), float(y)) for b in d["branches"] for x, y in b["points"]]
        _emit_csv(args, ("branch", d["axes"][0], d["axes"][1]), rows)
    else:
        _emit_json(args, d)


def axis_trace(states, psi):
    """Symmetry-axis direction in the fixed frame from cos(theta) = g3 and psi."""
    g3 = np.clip(states[:, 5], -1.0, 1.0)
    st = np.sqrt(1.0 - g3 * g3)
    return np.column_stack([st * np.sin(psi), -st * np.cos(psi), g3])


def winding_number(psi) -> float:
    """Net turns of the line of nodes."""
    return float((psi[-1] - psi[0]) / (2.0 * math.pi))


def cmd_trace_sphere(args):
    conf = _load_config(args)
    model = _model(args, conf)
    s0 = _initial_state(args, conf, model)
    tr = integrate_with_psi(model, s0, args.t_end, _integrator(args, conf))
    xyz = axis_trace(tr.states, tr.psi)
    if args.format == "svg":
        cv = Canvas((-1.05, 1.05), (-1.05, 1.05), "x", "y", "symmetry axis seen from above")
        th = np.linspace(0, 2 * np.pi, 181)
        cv.polyline(np.cos(th), np.sin(th), group=5, width=0.8)
        cv.scatter(xyz[:, 0], xyz[:, 1], group=0, r=0.8)
        _emit_svg(args, cv)
    elif args.format == "json":
        _emit_json(args, {"n": len(xyz), "winding": winding_number(tr.psi),
                          "min_z": float(xyz[:, 2].min()), "max_z": float(xyz[:, 2].max())})
    else:
        _emit_csv(args, ("t", "x", "y", "z"),
                  [(float(t), *map(float, p)) for t, p in zip(tr.times, xyz)])


def cmd_project_rg3(args):
    conf = _load_config(args)
    model = _model(args, conf)
    target = _target(args, conf, model)
    cl = torus_clusters(target, n_seeds=args.n_seeds, seed=args.seed, horizon=args.t_end,
                        strict=False)
    if args.format == "svg":
        cv = Canvas((-limits_r(cl), limits_r(cl)), (-1.05, 1.05), "r", "g3", "section points")
        for i, (_, pts) in enumerate(cl.crossings):
            if len(pts):
                cv.scatter(pts[:, 2], pts[:, 5], group=int(cl.labels[i]), r=1.0)
        _emit_svg(args, cv)
    elif args.format == "json":
        _emit_json(args, {"n_clusters": cl.n_clusters, "labels": cl.labels,
                          "n_points": [len(p) for _, p in cl.crossings]})
    else:
        if not args.out:
            raise UsageError("project-rg3 csv needs --out")
        write_crossings_csv(cl, args.out)


def limits_r(cl) -> float:
    r = [np.abs(p[:, 2]).max() for _, p in cl.crossings if len(p)]
    return 1.05 * max(r) if r else 1.0


def cmd_validate_ergodic(args):
    conf = _load_config(args)
    if not conf.get("model"):
        conf["model"] = "general"
    model = _model(args, conf)
    h = args.h if args.h is not None else conf.get("h", 2.0)
    n = args.n if args.n is not None else conf.get("n", 200)
    horizon = args.horizon if args.horizon is not None else conf.get("horizon", 2000.0)
    res = ergodic.main_motion_average(model, h, n, horizon, seed=args.seed)
    _emit_json(args, res.to_dict())


def cmd_selftest(args):
    conf = _load_config(args)
    cfg = _integrator(args, conf)
    results = checks.fast_checks(cfg, seed=args.seed)
    if args.format == "json":
        _emit_json(args, [r._asdict() for r in results])
    else:
        fh = _out(args)
        for r in results:
            fh.write(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail} ({r.seconds:.1f}s)\n")
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


# --- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="kovalevskaya",
                        help="kovalevskaya, goryachev-chaplygin or general")
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json", "svg"), default="csv")

    state = argparse.ArgumentParser(add_help=False)
    state.add_argument("--state", help="p,q,r,g1,g2,g3")
    state.add_argument("--h", type=float)
    state.add_argument("--k", type=float, help="k^2 (Kovalevskaya) or k (Goryachev-Chaplygin)")
    state.add_argument("--c", type=float)
    state.add_argument("--rel-tol", type=float)
    state.add_argument("--dt", type=float, help="sample spacing")

    p = _Parser(prog="precess", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common, state], help="integrate one solution")
    s.add_argument("--t-end", type=float, default=100.0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("lambda", parents=[common, state], help="converged mean motion")
    s.add_argument("--T0", type=float, default=100.0)
    s.add_argument("--threshold", type=float, default=0.0005)
    s.add_argument("--max-doublings", type=int, default=10)
    s.set_defaults(func=cmd_lambda)

    s = sub.add_parser("sweep", parents=[common], help="grid sweep from a JSON config")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("section", parents=[common], help="mean motion along a polyline")
    s.add_argument("--name", help="built-in section: I.a, I.b, II or III")
    s.add_argument("--samples", type=int, default=21)
    s.set_defaults(func=cmd_section)

    s = sub.add_parser("diagram", parents=[common], help="bifurcation curves")
    s.add_argument("--c", type=float)
    s.add_argument("--t-max", type=float, default=2.0)
    s.set_defaults(func=cmd_diagram)

    s = sub.add_parser("trace-sphere", parents=[common, state], help="symmetry-axis trace")
    s.add_argument("--t-end", type=float, default=200.0)
    s.set_defaults(func=cmd_trace_sphere)

    s = sub.add_parser("project-rg3", parents=[common, state], help="(r, g3) section points")
    s.add_argument("--t-end", type=float, default=1000.0)
    s.add_argument("--n-seeds", type=int, default=16)
    s.set_defaults(func=cmd_project_rg3)

    s = sub.add_parser("validate-ergodic", parents=[common], help="level-set average of main motions")
    s.add_argument("--h", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--horizon", type=float)
    s.set_defaults(func=cmd_validate_ergodic)

    s = sub.add_parser("selftest", parents=[common, state], help="fast property checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except (UsageError, sweep.ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"precess: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # computation errors map to one exit code
        print(f"precess: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
