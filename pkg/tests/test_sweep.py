import json

import numpy as np
import pytest

from precess.sweep import (COLUMNS, SECTIONS, ConfigError, SweepConfig, SweepResult,
                           compute_point, detect_jumps, emit_section, is_continuous,
                           polyline_samples, read_rows, run_sweep, section_config,
                           section_report, worker_count, write_rows)

O1_GRID = dict(k_sq_min=0.4, k_sq_max=0.6, h_min=0.45, h_max=0.55, nx=3, ny=3)


@pytest.fixture(scope="module")
def o1_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("o1") / "o1.csv"
    cfg = SweepConfig(grid=O1_GRID, seed=3)
    return cfg, run_sweep(cfg, output=out, workers=1), out


def test_o1_grid_has_zero_main_motion(o1_sweep):
    _, res, _ = o1_sweep
    assert len(res.rows) == 9
    for r in res.rows:
        assert r["status"] == "ok" and r["converged"]
        assert abs(r["lambda"]) < 1e-3


def test_output_file_and_manifest(o1_sweep):
    cfg, res, out = o1_sweep
    assert out.read_text().splitlines()[0] == ",".join(COLUMNS)
    assert read_rows(out) == res.rows
    man = json.loads(out.with_name(out.name + ".manifest.json").read_text())
    assert man["complete"] and man["completed"] == list(range(9))
    assert man["fingerprint"] == cfg.fingerprint()


def test_resume_matches_uninterrupted_run(o1_sweep, tmp_path):
    cfg, _, full = o1_sweep
    out = tmp_path / "part.csv"
    part = run_sweep(cfg, output=out, workers=1, stop_after=4)
    assert len({(r["k_sq"], r["h"]) for r in part.rows}) == 4
    run_sweep(cfg, output=out, workers=1)
    assert out.read_bytes() == full.read_bytes()


def test_rows_do_not_depend_on_worker_count(o1_sweep, tmp_path):
    cfg, _, full = o1_sweep
    out = tmp_path / "two.csv"
    run_sweep(cfg, output=out, workers=2)
    assert out.read_bytes() == full.read_bytes()


def test_resume_refuses_foreign_manifest(o1_sweep, tmp_path):
    cfg, _, full = o1_sweep
    out = tmp_path / "o1.csv"
    out.write_bytes(full.read_bytes())
    out.with_name(out.name + ".manifest.json").write_text(json.dumps({"fingerprint": "x"}))
    with pytest.raises(ConfigError):
        run_sweep(cfg, output=out, workers=1)


@pytest.fixture(scope="module")
def o4_line():
    cfg = SweepConfig(grid=dict(k_sq_min=1.1, k_sq_max=2.0, h_min=1.0, h_max=1.0, nx=10, ny=1))
    return run_sweep(cfg, workers=1)


def test_o4_pairs_have_opposite_main_motions(o4_line):
    by_point = {}
    for r in o4_line.rows:
        by_point.setdefault(r["k_sq"], []).append(r["lambda"])
    assert len(by_point) == 10
    for lams in by_point.values():
        assert len(lams) == 2
        a, b = lams
        assert abs(a + b) < 0.01 * max(abs(a), abs(b))


def test_o4_main_motion_grows_with_k(o4_line):
    mags = [max(abs(r["lambda"]) for r in o4_line.rows if r["k_sq"] == k)
            for k in sorted({r["k_sq"] for r in o4_line.rows})]
    for a, b in zip(mags, mags[1:]):
        assert b >= a * (1 - 0.02)
    assert mags[0] > 0.1


def test_mirror_tori_share_main_motion():
    # c != 0, two tori mapped onto each other by (r, g3) -> (-r, -g3)
    cfg = SweepConfig(c=1.03, polyline=[[0.76, 1.46]], samples=1)
    rows = compute_point(cfg, 0, 0.76, 1.46)
    assert len(rows) == 2 and all(r["status"] == "ok" for r in rows)
    a, b = (r["lambda"] for r in rows)
    assert abs(a - b) < 0.005 * abs(a)


def test_border_section_jumps_from_zero():
    cfg = SweepConfig(polyline=[[1.5, 1.5], [3.0, 1.5]], samples=12)
    res = emit_section(cfg)
    rep = section_report(res)
    assert set(rep) == {0, 1}
    for tid, info in rep.items():
        assert not info["continuous"] and info["jumps"]
        vals = [abs(r["lambda"]) for r in res.rows if r["torus_id"] == tid]
        assert vals[0] < 1e-3 and vals[-1] > 0.5


def test_singular_and_inaccessible_statuses():
    cfg = SweepConfig(polyline=[[1.0, 1.0]], samples=1)
    assert compute_point(cfg, 0, 1.0, 1.0)[0]["status"] == "on-singular-curve"
    cfg = SweepConfig(polyline=[[1.0, -5.0]], samples=1, n_seeds=2)
    row = compute_point(cfg, 0, 1.0, -5.0)[0]
    assert row["status"] == "inaccessible" and np.isnan(row["lambda"])


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        SweepConfig(polyline=[])
    with pytest.raises(ConfigError):
        SweepConfig()
    with pytest.raises(ConfigError):
        SweepConfig(grid=dict(O1_GRID, nx=0))
    with pytest.raises(ConfigError):
        SweepConfig(grid=O1_GRID, threshold=0)
    with pytest.raises(ConfigError):
        SweepConfig(model="gc", c=0.5, grid=O1_GRID)
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({"grid": O1_GRID, "colour": "red"})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"grid": O1_GRID, "seed": 4}))
    cfg = SweepConfig.from_json(path)
    assert cfg.seed == 4 and len(cfg.points()) == 9
    assert cfg.fingerprint() == SweepConfig(grid=O1_GRID, seed=4, output="x", workers=3).fingerprint()


def test_grid_order_and_polyline_sampling():
    pts = SweepConfig(grid=dict(k_sq_min=0, k_sq_max=1, h_min=2, h_max=3, nx=2, ny=2)).points()
    np.testing.assert_array_equal(pts, [[0, 2], [1, 2], [0, 3], [1, 3]])
    p, s = polyline_samples([[0, 0], [3, 0], [3, 4]], 8)
    np.testing.assert_allclose(s, np.linspace(0, 7, 8))
    np.testing.assert_allclose(p[3], [3, 0])
    np.testing.assert_allclose(p[-1], [3, 4])


def test_section_endpoints():
    assert SECTIONS["I.a"] == (1.03, (0.488, 1.18), (0.488, 1.27))
    assert SECTIONS["III"][1:] == ((0.005, 1.77), (0.005, 2.0))
    cfg = section_config("II", samples=5)
    assert cfg.c == 1.71 and cfg.polyline == [[0.1, 1.73], [0.05, 1.76]]


def test_jump_and_continuity_detectors():
    smooth = np.sin(np.linspace(0, 2, 21))
    assert detect_jumps(smooth) == [] and is_continuous(smooth)
    step = np.concatenate([np.linspace(0, 0.1, 10), np.linspace(1.0, 1.1, 10)])
    assert detect_jumps(step) == [9] and not is_continuous(step)
    flat = 1e-6 * np.random.default_rng(0).normal(size=20)
    assert detect_jumps(flat) == [] and is_continuous(flat)


def test_csv_round_trip_and_nan(tmp_path):
    rows = [{"k_sq": 0.1, "h": 0.2, "c": 0.0, "torus_id": 0, "lambda": float("nan"),
             "converged": False, "horizon": 0.0, "residual_sup": float("nan"),
             "status": "inaccessible"}]
    path = tmp_path / "r.csv"
    SweepResult(rows).to_csv(path)
    back = read_rows(path)
    assert back[0]["status"] == "inaccessible" and np.isnan(back[0]["lambda"])
    write_rows(path, [])
    assert read_rows(path) == []


def test_worker_count_env(monkeypatch):
    cfg = SweepConfig(grid=O1_GRID, workers=3)
    assert worker_count(cfg) == 3
    monkeypatch.setenv("PRECESS_THREADS", "2")
    assert worker_count(cfg) == 2
